//! Mode-resolved simulation of the full amplitude equations.
//!
//! The waveguide continuum is replaced by a uniform grid of `M` modes
//! around `Delta0`, each amplitude scaled by the square root of its
//! quadrature weight so that the state norm is the plain Euclidean norm.
//! Two photons in one waveguide are stored once per unordered mode pair
//! as normalized bosonic amplitudes.

mod basis;
mod generator;
mod grid;
mod kernel;

pub use basis::{FullBasis, Sector};
pub use generator::SparseGenerator;
pub use grid::ModeGrid;
pub use kernel::{delay_kernel_check, delay_kernel_check_with, KernelReport};

use nalgebra::DVector;

use crate::dde::{integrate_linear, step_count, Trajectory};
use crate::error::{Error, Result};
use crate::model::{SystemConfig, WaveguideArrayConfig, C64};

/// Default cap on the number of complex amplitudes.
pub const DEFAULT_BUDGET: usize = 20_000_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimOptions {
    /// RK4 step.
    pub h: f64,
    /// Record observables every this many steps.
    pub record_every: usize,
    /// Largest admissible state count.
    pub budget: usize,
}

impl SimOptions {
    pub fn new(h: f64) -> Self {
        SimOptions {
            h,
            record_every: 1,
            budget: DEFAULT_BUDGET,
        }
    }

    pub fn record_every(mut self, n: usize) -> Self {
        self.record_every = n.max(1);
        self
    }

    pub fn budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }
}

/// Observables sampled along a full simulation.
#[derive(Clone, Debug)]
pub struct FullTrajectory {
    /// Cavity-only amplitudes `c_j^j`.
    pub cavity: Trajectory<C64>,
    /// `photons[n][k]`: population with `n` photons in the waveguides.
    pub photons: Vec<Vec<f64>>,
    /// `per_waveguide[w][n][k]`: population with `n` photons in waveguide `w`.
    pub per_waveguide: Vec<Vec<Vec<f64>>>,
    /// Total norm per sample.
    pub norm: Vec<f64>,
    /// State at the last step.
    pub final_state: Vec<C64>,
    pub basis: FullBasis,
}

impl FullTrajectory {
    pub fn times(&self) -> &[f64] {
        &self.cavity.times
    }

    /// `|c_j^j|^2` series.
    pub fn cavity_population(&self, j: usize) -> Vec<f64> {
        self.cavity.states.iter().map(|x| x[j].norm_sqr()).collect()
    }

    /// Largest deviation of the norm from one.
    pub fn norm_drift(&self) -> f64 {
        self.norm.iter().map(|n| (n - 1.0).abs()).fold(0.0, f64::max)
    }
}

/// Single waveguide run; same as an array of one waveguide with `beta = 0`.
pub fn simulate_single_waveguide(cfg: &SystemConfig, grid: &ModeGrid, t_end: f64, h: f64) -> Result<FullTrajectory> {
    simulate(cfg, &WaveguideArrayConfig::single(), grid, t_end, &SimOptions::new(h))
}

pub fn simulate_waveguide_array(
    cfg: &SystemConfig,
    wcfg: &WaveguideArrayConfig,
    grid: &ModeGrid,
    t_end: f64,
    h: f64,
) -> Result<FullTrajectory> {
    simulate(cfg, wcfg, grid, t_end, &SimOptions::new(h))
}

/// Checks size limits and builds the basis and generator.
pub fn prepare(
    cfg: &SystemConfig,
    wcfg: &WaveguideArrayConfig,
    grid: &ModeGrid,
    budget: usize,
) -> Result<(FullBasis, SparseGenerator)> {
    let needed = FullBasis::count(cfg.n_levels(), wcfg.n_waveguides(), grid.n_modes());
    if needed > budget {
        return Err(Error::Budget { needed, budget });
    }
    let basis = FullBasis::new(cfg.n_levels(), wcfg.n_waveguides(), grid.n_modes())?;
    let gen = SparseGenerator::build(cfg, wcfg, grid, &basis);
    Ok((basis, gen))
}

/// Runs from `|N-1, 0, 0>` and records observables.
pub fn simulate(
    cfg: &SystemConfig,
    wcfg: &WaveguideArrayConfig,
    grid: &ModeGrid,
    t_end: f64,
    opts: &SimOptions,
) -> Result<FullTrajectory> {
    if !(t_end > 0.0) {
        return Err(Error::InvalidConfig("t_end must be positive".into()));
    }
    grid.check_recurrence(t_end)?;
    let (basis, gen) = prepare(cfg, wcfg, grid, opts.budget)?;
    let n_levels = cfg.n_levels();
    let n_w = wcfg.n_waveguides();
    let cavity_idx: Vec<usize> = (0..n_levels).map(|j| basis.cavity_index(j)).collect();

    let mut x0 = vec![C64::new(0.0, 0.0); basis.dim()];
    x0[cavity_idx[0]] = C64::new(1.0, 0.0);

    let mut times = Vec::new();
    let mut cav_states = Vec::new();
    let mut photons = vec![Vec::new(); n_levels];
    let mut per_waveguide = vec![vec![Vec::new(); n_levels]; n_w];
    let mut norm = Vec::new();
    let mut step = 0usize;
    let last = step_count(t_end, opts.h);
    let final_state = integrate_linear(&gen, x0, t_end, opts.h, |t, x| {
        if step.is_multiple_of(opts.record_every) || step == last {
            times.push(t);
            cav_states.push(DVector::from_iterator(n_levels, cavity_idx.iter().map(|&i| x[i])));
            let mut by_n = vec![0.0; n_levels];
            let mut by_w = vec![vec![0.0; n_levels]; n_w];
            for s in basis.sectors() {
                let pop: f64 = x[s.offset..s.offset + s.size].iter().map(|v| v.norm_sqr()).sum();
                by_n[s.j - s.m] += pop;
                for (w, &n) in s.occupation.iter().enumerate() {
                    by_w[w][n] += pop;
                }
            }
            norm.push(by_n.iter().sum::<f64>().sqrt());
            for (n, v) in by_n.into_iter().enumerate() {
                photons[n].push(v);
            }
            for (w, row) in by_w.into_iter().enumerate() {
                for (n, v) in row.into_iter().enumerate() {
                    per_waveguide[w][n].push(v);
                }
            }
        }
        step += 1;
    })?;

    Ok(FullTrajectory {
        cavity: Trajectory {
            times,
            states: cav_states,
        },
        photons,
        per_waveguide,
        norm,
        final_state,
        basis,
    })
}
