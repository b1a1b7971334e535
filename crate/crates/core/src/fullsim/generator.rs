use rayon::prelude::*;

use super::basis::FullBasis;
use super::grid::ModeGrid;
use crate::dde::Generator;
use crate::model::{SystemConfig, WaveguideArrayConfig, C64};

/// Sparse `L(t)` with `(L x)_r = i (d_r x_r + sum_e c_e e^{i w_e t} x_{col_e})`.
///
/// Waveguide amplitudes are kept in the frame rotating with `omega_p - Delta0`,
/// so only the atom-cavity links carry explicit time dependence.
#[derive(Clone, Debug)]
pub struct SparseGenerator {
    diag: Vec<f64>,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    coefs: Vec<f64>,
    tags: Vec<u8>,
    /// Angular frequency of each tag; tag 0 is static.
    rates: Vec<f64>,
}

struct Triplets {
    rows: Vec<u32>,
    cols: Vec<u32>,
    coefs: Vec<f64>,
    tags: Vec<u8>,
}

impl Triplets {
    /// Adds a Hermitian pair: `r <- c` with tag `t`, `c <- r` with the conjugate tag.
    fn pair(&mut self, r: usize, c: usize, coef: f64, tag: u8, conj: u8) {
        self.push(r, c, coef, tag);
        self.push(c, r, coef, conj);
    }

    fn push(&mut self, r: usize, c: usize, coef: f64, tag: u8) {
        self.rows.push(r as u32);
        self.cols.push(c as u32);
        self.coefs.push(coef);
        self.tags.push(tag);
    }
}

fn multiplicity(modes: &[usize], p: usize) -> usize {
    modes.iter().filter(|&&q| q == p).count()
}

fn with_mode(modes: &[usize], p: usize) -> Vec<usize> {
    let mut v = modes.to_vec();
    let at = v.partition_point(|&q| q < p);
    v.insert(at, p);
    v
}

fn without_mode(modes: &[usize], p: usize) -> Vec<usize> {
    let mut v = modes.to_vec();
    let at = v.iter().position(|&q| q == p).expect("mode present");
    v.remove(at);
    v
}

impl SparseGenerator {
    pub fn build(cfg: &SystemConfig, wcfg: &WaveguideArrayConfig, grid: &ModeGrid, basis: &FullBasis) -> Self {
        let n_levels = cfg.n_levels();
        let w_count = wcfg.n_waveguides();
        let n_modes = grid.n_modes();
        let dim = basis.dim();
        assert!(dim <= u32::MAX as usize, "basis too large for 32-bit column indices");

        let sqrt_w = grid.weight(cfg.field_speed()).sqrt();
        let tau = cfg.tau();
        let g: Vec<f64> = (0..n_modes)
            .map(|p| cfg.g0() * (0.5 * grid.frequency(p) * tau).sin() * sqrt_w)
            .collect();
        let nu: Vec<f64> = (0..n_modes).map(|p| grid.detuning(p)).collect();

        // Tag 2k+1 carries e^{+i delta_k t}, tag 2k+2 its conjugate.
        let mut rates = vec![0.0];
        for &d in cfg.delta() {
            rates.push(d);
            rates.push(-d);
        }

        let mut diag = vec![0.0; dim];
        let mut trip = Triplets {
            rows: Vec::new(),
            cols: Vec::new(),
            coefs: Vec::new(),
            tags: Vec::new(),
        };

        for sector in basis.sectors() {
            let (j, m) = (sector.j, sector.m);
            let raised = if j + 1 < n_levels {
                basis.sector(j + 1, m + 1, &sector.occupation)
            } else {
                None
            };
            let mut emitted = sector.occupation.clone();
            emitted[0] += 1;
            let emit = if m >= 1 { basis.sector(j, m - 1, &emitted) } else { None };

            basis.for_each_state(sector, |local, modes| {
                let r = sector.offset + local;
                let mut d = 0.0;
                for (w, list) in modes.iter().enumerate() {
                    d += list.len() as f64 * wcfg.propagation()[w];
                    d -= list.iter().map(|&p| nu[p]).sum::<f64>();
                }
                diag[r] = d;

                if let Some(target) = raised {
                    let k = cfg.transition_for(j) as u8;
                    let c = target.offset + local;
                    trip.pair(r, c, cfg.ladder_coupling(j, m), 2 * k + 1, 2 * k + 2);
                }

                if let Some(target) = emit {
                    let n_after = modes[0].len() + 1;
                    let mut next = modes.to_vec();
                    for p in 0..n_modes {
                        next[0] = with_mode(&modes[0], p);
                        let mult = multiplicity(&next[0], p);
                        let coef = g[p] * ((n_after * mult) as f64).sqrt();
                        let c = target.offset + basis.local_index(target, &next);
                        trip.pair(r, c, coef, 0, 0);
                    }
                }

                for w in 0..w_count.saturating_sub(1) {
                    let k = wcfg.couplings()[w];
                    if k == 0.0 || modes[w].is_empty() {
                        continue;
                    }
                    let mut occ = sector.occupation.clone();
                    occ[w] -= 1;
                    occ[w + 1] += 1;
                    let target = basis.sector(j, m, &occ).expect("hopping target sector");
                    let mut last = usize::MAX;
                    for &p in &modes[w] {
                        if p == last {
                            continue;
                        }
                        last = p;
                        let mut next = modes.to_vec();
                        next[w] = without_mode(&modes[w], p);
                        next[w + 1] = with_mode(&modes[w + 1], p);
                        let amp = (multiplicity(&modes[w], p) * (multiplicity(&modes[w + 1], p) + 1)) as f64;
                        let c = target.offset + basis.local_index(target, &next);
                        trip.pair(r, c, k * amp.sqrt(), 0, 0);
                    }
                }
            });
        }

        // Counting sort into CSR.
        let mut row_ptr = vec![0usize; dim + 1];
        for &r in &trip.rows {
            row_ptr[r as usize + 1] += 1;
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        let nnz = trip.rows.len();
        let mut fill = row_ptr.clone();
        let mut cols = vec![0u32; nnz];
        let mut coefs = vec![0.0; nnz];
        let mut tags = vec![0u8; nnz];
        for e in 0..nnz {
            let r = trip.rows[e] as usize;
            let at = fill[r];
            fill[r] += 1;
            cols[at] = trip.cols[e];
            coefs[at] = trip.coefs[e];
            tags[at] = trip.tags[e];
        }
        SparseGenerator {
            diag,
            row_ptr,
            cols,
            coefs,
            tags,
            rates,
        }
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// Upper bound on the spectral radius, for step-size choices.
    pub fn spectral_bound(&self) -> f64 {
        (0..self.diag.len())
            .map(|r| {
                let off: f64 = self.coefs[self.row_ptr[r]..self.row_ptr[r + 1]]
                    .iter()
                    .map(|c| c.abs())
                    .sum();
                self.diag[r].abs() + off
            })
            .fold(0.0, f64::max)
    }

    /// Entry `(r, c)` of `L(t)`, for tests.
    pub fn entry(&self, r: usize, c: usize, t: f64) -> C64 {
        let mut v = if r == c {
            C64::new(0.0, self.diag[r])
        } else {
            C64::new(0.0, 0.0)
        };
        for e in self.row_ptr[r]..self.row_ptr[r + 1] {
            if self.cols[e] as usize == c {
                v += C64::new(0.0, self.coefs[e]) * C64::from_polar(1.0, self.rates[self.tags[e] as usize] * t);
            }
        }
        v
    }
}

const CHUNK: usize = 4096;

impl Generator<C64> for SparseGenerator {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn apply(&self, t: f64, x: &[C64], out: &mut [C64]) {
        let phases: Vec<C64> = self.rates.iter().map(|&w| C64::from_polar(1.0, w * t)).collect();
        out.par_chunks_mut(CHUNK).enumerate().for_each(|(chunk, block)| {
            let base = chunk * CHUNK;
            for (i, slot) in block.iter_mut().enumerate() {
                let r = base + i;
                let mut acc = x[r] * self.diag[r];
                for e in self.row_ptr[r]..self.row_ptr[r + 1] {
                    let v = x[self.cols[e] as usize] * self.coefs[e];
                    let tag = self.tags[e];
                    acc += if tag == 0 { v } else { v * phases[tag as usize] };
                }
                *slot = C64::new(-acc.im, acc.re);
            }
        });
    }
}
