use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::{occupation_patterns, BasisIndex};

/// How the waveguide photons of one sector are laid out in memory.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Layout {
    /// No waveguide photons.
    Empty,
    /// One photon in waveguide `w`, indexed by mode.
    Single(usize),
    /// Two photons in waveguide `w`, upper triangle `p <= q` row by row.
    Pair(usize),
    /// One photon in each of `w1 < w2`, indexed `p * M + q`.
    Cross(usize, usize),
}

/// Block of states sharing `(j, m)` and a waveguide occupation pattern.
#[derive(Clone, Debug, PartialEq)]
pub struct Sector {
    pub j: usize,
    pub m: usize,
    pub occupation: Vec<usize>,
    pub offset: usize,
    pub size: usize,
    pub(crate) layout: Layout,
}

/// Flat enumeration of every `|level, cavity, waveguide modes>` state with
/// at most two waveguide photons.
#[derive(Clone, Debug)]
pub struct FullBasis {
    n_levels: usize,
    n_waveguides: usize,
    n_modes: usize,
    sectors: Vec<Sector>,
    lookup: HashMap<(usize, usize, Vec<usize>), usize>,
    dim: usize,
}

pub(crate) fn pair_index(p: usize, q: usize, n_modes: usize) -> usize {
    debug_assert!(p <= q);
    p * n_modes - p * p.saturating_sub(1) / 2 + (q - p)
}

impl FullBasis {
    pub fn new(n_levels: usize, n_waveguides: usize, n_modes: usize) -> Result<Self> {
        if n_levels < 2 {
            return Err(Error::InvalidConfig("n_levels must be at least 2".into()));
        }
        if n_levels > 3 {
            return Err(Error::InvalidConfig(
                "mode-resolved simulation supports at most two waveguide photons (n_levels <= 3)".into(),
            ));
        }
        if n_waveguides == 0 {
            return Err(Error::InvalidConfig("at least one waveguide is required".into()));
        }
        let mut sectors = Vec::new();
        let mut lookup = HashMap::new();
        let mut offset = 0usize;
        for j in 0..n_levels {
            for m in (0..=j).rev() {
                for occupation in occupation_patterns(j, m, n_waveguides) {
                    let filled: Vec<usize> = (0..n_waveguides).filter(|&w| occupation[w] > 0).collect();
                    let (layout, size) = match (j - m, filled.as_slice()) {
                        (0, _) => (Layout::Empty, 1),
                        (1, &[w]) => (Layout::Single(w), n_modes),
                        (2, &[w]) => (Layout::Pair(w), n_modes * (n_modes + 1) / 2),
                        (2, &[a, b]) => (Layout::Cross(a, b), n_modes * n_modes),
                        _ => unreachable!("at most two waveguide photons"),
                    };
                    lookup.insert((j, m, occupation.clone()), sectors.len());
                    sectors.push(Sector {
                        j,
                        m,
                        occupation,
                        offset,
                        size,
                        layout,
                    });
                    offset = offset
                        .checked_add(size)
                        .ok_or_else(|| Error::InvalidConfig("state count overflows".into()))?;
                }
            }
        }
        Ok(FullBasis {
            n_levels,
            n_waveguides,
            n_modes,
            sectors,
            lookup,
            dim: offset,
        })
    }

    /// Number of amplitudes without building the basis.
    pub fn count(n_levels: usize, n_waveguides: usize, n_modes: usize) -> usize {
        let mut total = 0usize;
        for j in 0..n_levels {
            for m in 0..=j {
                for occ in occupation_patterns(j, m, n_waveguides) {
                    let size = occ.iter().fold(1usize, |acc, &n| {
                        let per = match n {
                            0 => 1,
                            1 => n_modes,
                            2 => n_modes * (n_modes + 1) / 2,
                            _ => usize::MAX,
                        };
                        acc.saturating_mul(per)
                    });
                    total = total.saturating_add(size);
                }
            }
        }
        total
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_levels(&self) -> usize {
        self.n_levels
    }

    pub fn n_waveguides(&self) -> usize {
        self.n_waveguides
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn sectors(&self) -> &[Sector] {
        &self.sectors
    }

    pub fn sector(&self, j: usize, m: usize, occupation: &[usize]) -> Option<&Sector> {
        self.lookup.get(&(j, m, occupation.to_vec())).map(|&s| &self.sectors[s])
    }

    /// Flat index of the cavity-only state with `j` excitations.
    pub fn cavity_index(&self, j: usize) -> usize {
        self.sector(j, j, &vec![0; self.n_waveguides])
            .expect("cavity sector")
            .offset
    }

    /// Position inside a sector of the given sorted mode lists.
    pub(crate) fn local_index(&self, sector: &Sector, modes: &[Vec<usize>]) -> usize {
        let m = self.n_modes;
        match sector.layout {
            Layout::Empty => 0,
            Layout::Single(w) => modes[w][0],
            Layout::Pair(w) => pair_index(modes[w][0], modes[w][1], m),
            Layout::Cross(a, b) => modes[a][0] * m + modes[b][0],
        }
    }

    pub fn index_of(&self, label: &BasisIndex) -> Option<usize> {
        let modes = if label.waveguide_modes.is_empty() {
            vec![Vec::new(); self.n_waveguides]
        } else {
            label.waveguide_modes.clone()
        };
        if modes.len() != self.n_waveguides || modes.iter().flatten().any(|&p| p >= self.n_modes) {
            return None;
        }
        let occupation: Vec<usize> = modes.iter().map(Vec::len).collect();
        let sector = self.sector(label.j, label.m, &occupation)?;
        let mut sorted = modes;
        for v in &mut sorted {
            v.sort_unstable();
        }
        Some(sector.offset + self.local_index(sector, &sorted))
    }

    /// Calls `f(local, modes)` for every state of the sector in storage order.
    pub(crate) fn for_each_state(&self, sector: &Sector, mut f: impl FnMut(usize, &[Vec<usize>])) {
        let w = self.n_waveguides;
        let m = self.n_modes;
        let mut modes = vec![Vec::new(); w];
        match sector.layout {
            Layout::Empty => f(0, &modes),
            Layout::Single(a) => {
                for p in 0..m {
                    modes[a] = vec![p];
                    f(p, &modes);
                }
            }
            Layout::Pair(a) => {
                let mut local = 0;
                for p in 0..m {
                    for q in p..m {
                        modes[a] = vec![p, q];
                        f(local, &modes);
                        local += 1;
                    }
                }
            }
            Layout::Cross(a, b) => {
                for p in 0..m {
                    for q in 0..m {
                        modes[a] = vec![p];
                        modes[b] = vec![q];
                        f(p * m + q, &modes);
                    }
                }
            }
        }
    }

    /// Label of a flat index.
    pub fn label(&self, flat: usize) -> Option<BasisIndex> {
        let s = self
            .sectors
            .iter()
            .find(|s| flat >= s.offset && flat < s.offset + s.size)?;
        let local = flat - s.offset;
        let mut found = None;
        self.for_each_state(s, |l, modes| {
            if l == local {
                found = Some(modes.to_vec());
            }
        });
        let modes = found?;
        BasisIndex::new(s.j, s.m, modes).ok()
    }
}
