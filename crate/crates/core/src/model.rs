//! Physical configuration, basis enumeration and the matrices of the
//! reduced cavity system.
//!
//! The cavity subsystem state is `X = [c_0, c_1^1, ..., c_{N-1}^{N-1}]`
//! where `c_j^j` is the amplitude with `j` excitations all held in the
//! cavity. Its dynamics close into `x' = A(t) x + B x(t - tau)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

const I: C64 = C64::new(0.0, 1.0);

/// How the ladder coupling between `c_j^m` and `c_{j+1}^{m+1}` scales with
/// the cavity photon number.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CouplingConvention {
    /// Bosonic matrix elements: the link into `m + 1` cavity photons carries
    /// `sqrt(m + 1)`.
    #[default]
    Bosonic,
    /// Every link carries the bare `gamma_n`, as in the three-level
    /// amplitude equations written out component by component.
    Uniform,
}

impl CouplingConvention {
    /// Factor multiplying `gamma` on a link that ends with `m` cavity photons.
    pub fn factor(self, m: usize) -> f64 {
        match self {
            CouplingConvention::Bosonic => (m as f64).sqrt(),
            CouplingConvention::Uniform => 1.0,
        }
    }
}

/// Atom, cavity and waveguide parameters.
///
/// `gamma[n - 1]` and `delta[n - 1]` hold `gamma_n` and `delta_n`, the
/// coupling and detuning of the transition between levels `n - 1` and `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemConfig {
    gamma: Vec<f64>,
    delta: Vec<f64>,
    g0: f64,
    delta0: f64,
    tau: f64,
    field_speed: f64,
    convention: CouplingConvention,
}

impl SystemConfig {
    pub fn new(gamma: Vec<f64>, delta: Vec<f64>, g0: f64, delta0: f64, tau: f64) -> Result<Self> {
        let cfg = SystemConfig {
            gamma,
            delta,
            g0,
            delta0,
            tau,
            field_speed: 1.0,
            convention: CouplingConvention::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Zero-detuning configuration.
    pub fn resonant(gamma: Vec<f64>, g0: f64, delta0: f64, tau: f64) -> Result<Self> {
        let delta = vec![0.0; gamma.len()];
        Self::new(gamma, delta, g0, delta0, tau)
    }

    pub fn with_field_speed(mut self, c: f64) -> Result<Self> {
        self.field_speed = c;
        self.validate()?;
        Ok(self)
    }

    pub fn with_convention(mut self, convention: CouplingConvention) -> Self {
        self.convention = convention;
        self
    }

    pub fn with_g0(mut self, g0: f64) -> Result<Self> {
        self.g0 = g0;
        self.validate()?;
        Ok(self)
    }

    pub fn with_delta(mut self, delta: Vec<f64>) -> Result<Self> {
        self.delta = delta;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.gamma.is_empty() {
            return bad("n_levels must be at least 2".into());
        }
        if self.delta.len() != self.gamma.len() {
            return bad(format!(
                "delta has {} entries, expected {}",
                self.delta.len(),
                self.gamma.len()
            ));
        }
        let scalars = [self.g0, self.delta0, self.tau, self.field_speed];
        if self
            .gamma
            .iter()
            .chain(&self.delta)
            .chain(&scalars)
            .any(|x| !x.is_finite())
        {
            return bad("parameters must be finite".into());
        }
        if self.gamma.iter().any(|&g| g < 0.0) {
            return bad("gamma entries must be non-negative".into());
        }
        if self.tau <= 0.0 {
            return bad("tau must be positive".into());
        }
        if self.g0 < 0.0 {
            return bad("g0 must be non-negative".into());
        }
        if self.delta0 <= 0.0 {
            return bad("delta0 must be positive".into());
        }
        if self.field_speed <= 0.0 {
            return bad("field_speed must be positive".into());
        }
        Ok(())
    }

    pub fn n_levels(&self) -> usize {
        self.gamma.len() + 1
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn g0(&self) -> f64 {
        self.g0
    }

    pub fn delta0(&self) -> f64 {
        self.delta0
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn field_speed(&self) -> f64 {
        self.field_speed
    }

    pub fn convention(&self) -> CouplingConvention {
        self.convention
    }

    /// Cavity decay rate `G0^2 / 4c`.
    pub fn kappa(&self) -> f64 {
        self.g0 * self.g0 / (4.0 * self.field_speed)
    }

    /// Round-trip phase `Delta0 * tau`.
    pub fn delay_phase(&self) -> f64 {
        self.delta0 * self.tau
    }

    /// Index into `gamma`/`delta` of the transition driven when the
    /// excitation count goes from `j` to `j + 1`.
    pub fn transition_for(&self, j: usize) -> usize {
        self.n_levels() - j - 2
    }

    /// Bare coupling for the `j -> j + 1` step, without the photon factor.
    pub fn gamma_for(&self, j: usize) -> f64 {
        self.gamma[self.transition_for(j)]
    }

    pub fn delta_for(&self, j: usize) -> f64 {
        self.delta[self.transition_for(j)]
    }

    /// Coupling between `c_j^m` and `c_{j+1}^{m+1}`.
    pub fn ladder_coupling(&self, j: usize, m: usize) -> f64 {
        self.convention.factor(m + 1) * self.gamma_for(j)
    }
}

/// Whether a round-trip phase is a multiple of `2 pi`, to `1e-9`.
pub fn is_trapping_phase(phase: f64) -> bool {
    let r = phase.rem_euclid(2.0 * std::f64::consts::PI);
    r.min(2.0 * std::f64::consts::PI - r) < 1e-9
}

/// Nearest-neighbour coupled waveguide array.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveguideArrayConfig {
    couplings: Vec<f64>,
    propagation: Vec<f64>,
}

impl WaveguideArrayConfig {
    /// `couplings[w]` is `K_{w,w+1}` (stored once, symmetric);
    /// `propagation[w]` is `beta_w`.
    pub fn new(couplings: Vec<f64>, propagation: Vec<f64>) -> Result<Self> {
        if propagation.is_empty() {
            return Err(Error::InvalidConfig("array needs at least one waveguide".into()));
        }
        if couplings.len() + 1 != propagation.len() {
            return Err(Error::InvalidConfig(format!(
                "{} waveguides need {} couplings, got {}",
                propagation.len(),
                propagation.len() - 1,
                couplings.len()
            )));
        }
        if couplings.iter().chain(&propagation).any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig("array parameters must be finite".into()));
        }
        Ok(WaveguideArrayConfig { couplings, propagation })
    }

    /// A single waveguide with zero propagation constant.
    pub fn single() -> Self {
        WaveguideArrayConfig {
            couplings: vec![],
            propagation: vec![0.0],
        }
    }

    pub fn n_waveguides(&self) -> usize {
        self.propagation.len()
    }

    pub fn couplings(&self) -> &[f64] {
        &self.couplings
    }

    pub fn propagation(&self) -> &[f64] {
        &self.propagation
    }
}

/// Symmetric tridiagonal `G_W`: `beta_w` on the diagonal, `K_{w,w+1}` beside it.
pub fn build_gw_matrix(wcfg: &WaveguideArrayConfig) -> DMatrix<f64> {
    let w = wcfg.n_waveguides();
    let mut g = DMatrix::from_diagonal(&DVector::from_column_slice(wcfg.propagation()));
    for (i, &k) in wcfg.couplings().iter().enumerate() {
        g[(i, i + 1)] = k;
        g[(i + 1, i)] = k;
    }
    debug_assert_eq!(g.nrows(), w);
    g
}

/// Basis label `|level N-1-j, m cavity photons, waveguide photons>`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BasisIndex {
    pub j: usize,
    pub m: usize,
    /// Sorted mode indices per waveguide; empty for cavity-only states.
    pub waveguide_modes: Vec<Vec<usize>>,
}

impl BasisIndex {
    pub fn new(j: usize, m: usize, mut waveguide_modes: Vec<Vec<usize>>) -> Result<Self> {
        if m > j {
            return Err(Error::InvalidConfig(format!("m = {m} exceeds j = {j}")));
        }
        let photons: usize = waveguide_modes.iter().map(Vec::len).sum();
        if photons != j - m {
            return Err(Error::InvalidConfig(format!(
                "{photons} waveguide photons, expected j - m = {}",
                j - m
            )));
        }
        for modes in &mut waveguide_modes {
            modes.sort_unstable();
        }
        Ok(BasisIndex { j, m, waveguide_modes })
    }

    /// State with every emitted excitation still in the cavity.
    pub fn cavity(j: usize) -> Self {
        BasisIndex {
            j,
            m: j,
            waveguide_modes: Vec::new(),
        }
    }

    pub fn waveguide_photons(&self) -> usize {
        self.j - self.m
    }
}

/// All ways to write `n` as an ordered sum of `parts` non-negative integers.
pub fn weak_compositions(n: usize, parts: usize) -> Vec<Vec<usize>> {
    fn fill(rest: usize, slot: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if slot + 1 == cur.len() {
            cur[slot] = rest;
            out.push(cur.clone());
            return;
        }
        for k in (0..=rest).rev() {
            cur[slot] = k;
            fill(rest - k, slot + 1, cur, out);
        }
    }
    let mut out = Vec::new();
    if parts == 0 {
        if n == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    fill(n, 0, &mut vec![0; parts], &mut out);
    out
}

/// Waveguide occupation patterns of the states with `j` excitations and
/// `m` cavity photons spread over `w` waveguides.
pub fn occupation_patterns(j: usize, m: usize, w: usize) -> Vec<Vec<usize>> {
    assert!(m <= j, "m must not exceed j");
    weak_compositions(j - m, w)
}

/// The reduced cavity system `x' = A(t) x + B x(t - tau)` in complex form.
#[derive(Clone, Debug, PartialEq)]
pub struct DelaySystem {
    /// `(coupling, detuning)` of the link between `X_j` and `X_{j+1}`.
    links: Vec<(f64, f64)>,
    kappa: f64,
    delay_phase: f64,
    tau: f64,
    feedback: bool,
    history: DVector<C64>,
}

/// Builds the reduced cavity system of `cfg` with the history `e_0` on `[-tau, 0]`.
pub fn build_cavity_delay_system(cfg: &SystemConfig) -> DelaySystem {
    let n = cfg.n_levels();
    let links = (0..n - 1)
        .map(|j| (cfg.ladder_coupling(j, j), cfg.delta_for(j)))
        .collect();
    let mut history = DVector::zeros(n);
    history[0] = C64::new(1.0, 0.0);
    DelaySystem {
        links,
        kappa: cfg.kappa(),
        delay_phase: cfg.delay_phase(),
        tau: cfg.tau(),
        feedback: true,
        history,
    }
}

impl DelaySystem {
    pub fn dim(&self) -> usize {
        self.links.len() + 1
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn delay_phase(&self) -> f64 {
        self.delay_phase
    }

    pub fn links(&self) -> &[(f64, f64)] {
        &self.links
    }

    /// Constant initial history.
    pub fn history(&self) -> &DVector<C64> {
        &self.history
    }

    pub fn with_history(mut self, history: DVector<C64>) -> Result<Self> {
        if history.len() != self.dim() {
            return Err(Error::InvalidConfig(format!(
                "history has length {}, expected {}",
                history.len(),
                self.dim()
            )));
        }
        self.history = history;
        Ok(self)
    }

    /// Drops the delayed term, leaving only the local `-kappa` damping.
    /// This is the dynamics before the first round trip returns.
    pub fn without_feedback(mut self) -> Self {
        self.feedback = false;
        self
    }

    pub fn has_feedback(&self) -> bool {
        self.feedback
    }

    pub fn a_at(&self, t: f64) -> DMatrix<C64> {
        let n = self.dim();
        let mut a = DMatrix::zeros(n, n);
        for k in 1..n {
            a[(k, k)] = C64::new(-self.kappa, 0.0);
        }
        for (j, &(g, d)) in self.links.iter().enumerate() {
            a[(j, j + 1)] = I * g * C64::from_polar(1.0, d * t);
            a[(j + 1, j)] = I * g * C64::from_polar(1.0, -d * t);
        }
        a
    }

    /// `A` with every detuning set to zero.
    pub fn a_resonant(&self) -> DMatrix<C64> {
        let mut resonant = self.clone();
        for link in &mut resonant.links {
            link.1 = 0.0;
        }
        resonant.a_at(0.0)
    }

    pub fn b(&self) -> DMatrix<C64> {
        let n = self.dim();
        let mut b = DMatrix::zeros(n, n);
        if self.feedback {
            let entry = C64::from_polar(self.kappa, self.delay_phase);
            for k in 1..n {
                b[(k, k)] = entry;
            }
        }
        b
    }

    /// Time-uniform closed-form bound on `||Upsilon(t)||_2`.
    pub fn upsilon_norm_sup(&self) -> f64 {
        upsilon_norm_with(&self.links, |d| if d == 0.0 { 0.0 } else { 2.0 })
    }

    pub fn is_detuned(&self) -> bool {
        self.links.iter().any(|&(_, d)| d != 0.0)
    }

    pub fn real_embedding(&self) -> RealDelaySystem {
        build_real_embedding(self)
    }
}

/// The same system written over interleaved `(re, im)` pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct RealDelaySystem {
    complex: DelaySystem,
}

pub fn build_real_embedding(sys: &DelaySystem) -> RealDelaySystem {
    RealDelaySystem { complex: sys.clone() }
}

impl RealDelaySystem {
    pub fn dim(&self) -> usize {
        2 * self.complex.dim()
    }

    pub fn complex(&self) -> &DelaySystem {
        &self.complex
    }

    pub fn tau(&self) -> f64 {
        self.complex.tau
    }

    pub fn a_at(&self, t: f64) -> DMatrix<f64> {
        embed_matrix(&self.complex.a_at(t))
    }

    /// `A~_0`, the embedding of the resonant matrix.
    pub fn a_resonant(&self) -> DMatrix<f64> {
        embed_matrix(&self.complex.a_resonant())
    }

    pub fn b(&self) -> DMatrix<f64> {
        embed_matrix(&self.complex.b())
    }

    /// `Upsilon(t) = A~(t) - A~_0`.
    pub fn upsilon(&self, t: f64) -> DMatrix<f64> {
        self.a_at(t) - self.a_resonant()
    }

    pub fn history(&self) -> DVector<f64> {
        embed_vector(self.complex.history())
    }
}

/// Real 2x2 block form of a complex matrix: `z -> [[re, -im], [im, re]]`.
pub fn embed_matrix(z: &DMatrix<C64>) -> DMatrix<f64> {
    let (r, c) = z.shape();
    DMatrix::from_fn(2 * r, 2 * c, |i, k| {
        let v = z[(i / 2, k / 2)];
        match (i % 2, k % 2) {
            (0, 0) | (1, 1) => v.re,
            (0, 1) => -v.im,
            _ => v.im,
        }
    })
}

pub fn embed_vector(z: &DVector<C64>) -> DVector<f64> {
    DVector::from_fn(2 * z.len(), |i, _| if i % 2 == 0 { z[i / 2].re } else { z[i / 2].im })
}

pub fn unembed_vector(x: &DVector<f64>) -> DVector<C64> {
    DVector::from_fn(x.len() / 2, |i, _| C64::new(x[2 * i], x[2 * i + 1]))
}

/// `R_j(t)`, the embedding of `i e^{-i delta t}`.
pub fn rotation_block(delta: f64, t: f64) -> [[f64; 2]; 2] {
    let (s, c) = (delta * t).sin_cos();
    [[s, -c], [c, s]]
}

/// `P(tau)`, the embedding of `e^{i phase}`.
pub fn phase_block(phase: f64) -> [[f64; 2]; 2] {
    let (s, c) = phase.sin_cos();
    [[c, -s], [s, c]]
}

/// Closed form `max_j sqrt(sum 2 (N - jj) gamma_jj^2 (1 - cos delta_jj t))`
/// with the sum over the two transitions adjacent to state `j`.
///
/// It equals the largest column norm of `Upsilon(t)`; this is the spectral
/// norm for `N <= 3` but can fall short of it for longer ladders.
pub fn upsilon_norm(cfg: &SystemConfig, t: f64) -> f64 {
    upsilon_norm_with(build_cavity_delay_system(cfg).links(), |d| 1.0 - (d * t).cos())
}

/// Time-uniform bound: the closed form at `cos = -1` for every detuned link.
pub fn upsilon_norm_sup(cfg: &SystemConfig) -> f64 {
    build_cavity_delay_system(cfg).upsilon_norm_sup()
}

fn upsilon_norm_with(links: &[(f64, f64)], one_minus_cos: impl Fn(f64) -> f64) -> f64 {
    let n = links.len() + 1;
    let link_sq: Vec<f64> = links.iter().map(|&(g, d)| 2.0 * g * g * one_minus_cos(d)).collect();
    (0..n)
        .map(|k| {
            let left = if k > 0 { link_sq[k - 1] } else { 0.0 };
            let right = if k < n - 1 { link_sq[k] } else { 0.0 };
            (left + right).sqrt()
        })
        .fold(0.0, f64::max)
}

/// Largest singular value of the assembled `Upsilon(t)`.
pub fn upsilon_norm_brute(cfg: &SystemConfig, t: f64) -> f64 {
    let u = build_cavity_delay_system(cfg).real_embedding().upsilon(t);
    u.singular_values().max()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn two_level_matrices_match_template() {
        // kappa = 0.1 needs G0 = sqrt(0.4); Delta0 tau = 2 pi.
        let cfg = SystemConfig::resonant(vec![1.0], 0.4f64.sqrt(), 1.0, 2.0 * std::f64::consts::PI).unwrap();
        let sys = build_cavity_delay_system(&cfg);
        let a = sys.a_at(3.7);
        let b = sys.b();
        let expect_a = [[c(0.0, 0.0), c(0.0, 1.0)], [c(0.0, 1.0), c(-0.1, 0.0)]];
        let expect_b = [[c(0.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(0.1, 0.0)]];
        for r in 0..2 {
            for k in 0..2 {
                assert!((a[(r, k)] - expect_a[r][k]).norm() < 1e-15);
                assert!((b[(r, k)] - expect_b[r][k]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn three_level_bosonic_link_carries_sqrt_two() {
        let cfg = SystemConfig::resonant(vec![0.3, 0.5], 0.2, 50.0, 0.1).unwrap();
        let a = build_cavity_delay_system(&cfg).a_at(0.0);
        // Row 2 couples to row 1 through gamma_1 with the two-photon factor.
        assert!((a[(2, 1)] - c(0.0, 2f64.sqrt() * 0.3)).norm() < 1e-15);
        assert!((a[(1, 0)] - c(0.0, 0.5)).norm() < 1e-15);
        let uniform = cfg.with_convention(CouplingConvention::Uniform);
        let a = build_cavity_delay_system(&uniform).a_at(0.0);
        assert!((a[(2, 1)] - c(0.0, 0.3)).norm() < 1e-15);
    }

    #[test]
    fn two_level_det_of_a_plus_b_is_gamma_squared() {
        let cfg = SystemConfig::new(vec![0.7], vec![1.3], 0.5, 20.0, 0.37).unwrap();
        let sys = build_cavity_delay_system(&cfg);
        for i in 0..100 {
            let t = 0.173 * i as f64;
            let d = (sys.a_at(t) + sys.b()).determinant();
            assert!((d - C64::new(0.49, 0.0)).norm() < 1e-12, "t = {t}: {d}");
        }
    }

    #[test]
    fn odd_ladder_at_resonant_phase_has_singular_a_plus_b() {
        // det(A + B) = -a b kappa (e^{i phase} - 1) for three levels.
        let cfg = SystemConfig::resonant(vec![0.3, 0.3], 0.2, 50.0, 2.0 * std::f64::consts::PI / 50.0).unwrap();
        let sys = build_cavity_delay_system(&cfg);
        assert!((sys.a_at(1.0) + sys.b()).determinant().norm() < 1e-15);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(SystemConfig::resonant(vec![], 0.2, 50.0, 0.1).is_err());
        assert!(SystemConfig::resonant(vec![0.3], 0.2, 50.0, 0.0).is_err());
        assert!(SystemConfig::resonant(vec![0.3], -0.2, 50.0, 0.1).is_err());
        assert!(SystemConfig::resonant(vec![0.3], 0.2, 0.0, 0.1).is_err());
        assert!(SystemConfig::resonant(vec![f64::NAN], 0.2, 50.0, 0.1).is_err());
        assert!(SystemConfig::new(vec![0.3], vec![0.0, 0.1], 0.2, 50.0, 0.1).is_err());
    }

    #[test]
    fn kappa_is_derived() {
        let cfg = SystemConfig::resonant(vec![0.3], 0.2, 50.0, 0.1).unwrap();
        assert!((cfg.kappa() - 0.01).abs() < 1e-16);
        let cfg = cfg.with_field_speed(2.0).unwrap();
        assert!((cfg.kappa() - 0.005).abs() < 1e-16);
    }

    #[test]
    fn resonant_rotation_blocks() {
        assert_eq!(rotation_block(0.0, 12.3), [[0.0, -1.0], [1.0, 0.0]]);
        let p = phase_block(4.0 * std::f64::consts::PI);
        assert!((p[0][0] - 1.0).abs() < 1e-15 && p[1][0].abs() < 1e-15);
        assert!((p[1][1] - 1.0).abs() < 1e-15 && p[0][1].abs() < 1e-15);
    }

    #[test]
    fn lower_blocks_are_scaled_rotation_blocks() {
        let cfg = SystemConfig::new(vec![0.4, 0.9], vec![0.3, -0.8], 0.2, 50.0, 0.1).unwrap();
        let sys = build_cavity_delay_system(&cfg).real_embedding();
        let t = 2.3;
        let a = sys.a_at(t);
        for j in 0..2 {
            let g = cfg.ladder_coupling(j, j);
            let r = rotation_block(cfg.delta_for(j), t);
            for p in 0..2 {
                for q in 0..2 {
                    assert!((a[(2 * j + 2 + p, 2 * j + q)] - g * r[p][q]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn embedded_b_is_kappa_times_phase_blocks() {
        let cfg = SystemConfig::resonant(vec![0.4, 0.9, 0.2], 0.6, 50.0, 0.123).unwrap();
        let b = build_cavity_delay_system(&cfg).real_embedding().b();
        let p = phase_block(cfg.delay_phase());
        let btb = b.transpose() * &b;
        let k2 = cfg.kappa().powi(2);
        for i in 0..8 {
            for k in 0..8 {
                let expect = if i == k && i >= 2 { k2 } else { 0.0 };
                assert!((btb[(i, k)] - expect).abs() < 1e-15);
            }
        }
        for blk in 1..4 {
            for r in 0..2 {
                for q in 0..2 {
                    let v = b[(2 * blk + r, 2 * blk + q)];
                    assert!((v - cfg.kappa() * p[r][q]).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn embedding_round_trips_vectors() {
        let z = DVector::from_vec(vec![c(1.0, -2.0), c(0.5, 0.25)]);
        assert_eq!(unembed_vector(&embed_vector(&z)), z);
    }

    #[test]
    fn upsilon_vanishes_without_detuning() {
        let cfg = SystemConfig::resonant(vec![0.4, 0.9, 0.2], 0.6, 50.0, 0.123).unwrap();
        for t in [0.0, 1.0, 17.5] {
            assert_eq!(upsilon_norm(&cfg, t), 0.0);
            assert!(upsilon_norm_brute(&cfg, t) < 1e-15);
        }
    }

    #[test]
    fn upsilon_two_level_worst_case() {
        let cfg = SystemConfig::new(vec![1.0], vec![1.0], 0.2, 50.0, 0.1).unwrap();
        let t = std::f64::consts::PI;
        assert!((upsilon_norm(&cfg, t) - 2.0).abs() < 1e-15);
        assert!((upsilon_norm_brute(&cfg, t) - 2.0).abs() < 1e-12);
        assert!((upsilon_norm_sup(&cfg) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn upsilon_gram_diagonal_blocks_match_closed_form() {
        let cfg = SystemConfig::new(vec![0.4, 0.9, 0.2], vec![0.3, -0.8, 1.7], 0.6, 50.0, 0.1).unwrap();
        let t = 1.9;
        let u = build_cavity_delay_system(&cfg).real_embedding().upsilon(t);
        let gram = u.transpose() * &u;
        let n = cfg.n_levels();
        for k in 0..n {
            let mut expect = 0.0;
            for j in [k.wrapping_sub(1), k] {
                if j < n - 1 {
                    let g = cfg.ladder_coupling(j, j);
                    expect += 2.0 * g * g * (1.0 - (cfg.delta_for(j) * t).cos());
                }
            }
            assert!((gram[(2 * k, 2 * k)] - expect).abs() < 1e-12);
            assert!((gram[(2 * k + 1, 2 * k + 1)] - expect).abs() < 1e-12);
            assert!(gram[(2 * k, 2 * k + 1)].abs() < 1e-12);
        }
    }

    #[test]
    fn gw_matrix_examples() {
        let w = WaveguideArrayConfig::new(vec![0.5, 0.5], vec![0.0; 3]).unwrap();
        let g = build_gw_matrix(&w);
        let expect = DMatrix::from_row_slice(3, 3, &[0.0, 0.5, 0.0, 0.5, 0.0, 0.5, 0.0, 0.5, 0.0]);
        assert_eq!(g, expect);
        let mut eig: Vec<f64> = g.symmetric_eigenvalues().iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        let r = 0.5f64.sqrt();
        assert!((eig[0] + r).abs() < 1e-14 && eig[1].abs() < 1e-14 && (eig[2] - r).abs() < 1e-14);
        let one = WaveguideArrayConfig::new(vec![], vec![0.3]).unwrap();
        assert_eq!(build_gw_matrix(&one), DMatrix::from_element(1, 1, 0.3));
        assert!(WaveguideArrayConfig::new(vec![], vec![]).is_err());
        assert!(WaveguideArrayConfig::new(vec![0.1], vec![0.0]).is_err());
    }

    #[test]
    fn basis_index_sorts_and_checks_counts() {
        let b = BasisIndex::new(3, 1, vec![vec![7, 2], vec![]]).unwrap();
        assert_eq!(b.waveguide_modes, vec![vec![2, 7], vec![]]);
        assert!(BasisIndex::new(2, 3, vec![]).is_err());
        assert!(BasisIndex::new(2, 0, vec![vec![1]]).is_err());
        assert_eq!(BasisIndex::cavity(2).waveguide_photons(), 0);
    }

    fn binomial(n: usize, k: usize) -> usize {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    proptest! {
        #[test]
        fn occupation_count_is_weak_composition_count(j in 0usize..6, m_frac in 0.0f64..1.0, w in 1usize..5) {
            let m = ((j as f64) * m_frac).floor() as usize;
            let pats = occupation_patterns(j, m, w);
            prop_assert_eq!(pats.len(), binomial(j - m + w - 1, w - 1));
            for p in &pats {
                prop_assert_eq!(p.len(), w);
                prop_assert_eq!(p.iter().sum::<usize>(), j - m);
            }
            let mut sorted = pats.clone();
            sorted.sort();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), pats.len());
        }

        #[test]
        fn det_a_plus_b_nonzero(
            gamma in proptest::collection::vec(0.05f64..2.0, 1..5),
            seed in proptest::collection::vec(-2.0f64..2.0, 4),
            g0 in 0.1f64..1.0,
            phase in 0.5f64..5.5,
        ) {
            let n = gamma.len();
            let delta: Vec<f64> = (0..n).map(|i| seed[i % 4]).collect();
            let cfg = SystemConfig::new(gamma, delta, g0, 10.0, phase / 10.0 + 1e-3).unwrap();
            let sys = build_cavity_delay_system(&cfg);
            for i in 0..1000 {
                let t = 0.0731 * i as f64;
                prop_assert!((sys.a_at(t) + sys.b()).determinant().norm() > 1e-9);
            }
        }

        #[test]
        fn closed_form_upsilon_is_exact_up_to_three_levels(
            gamma in proptest::collection::vec(0.05f64..2.0, 1..3),
            delta in proptest::collection::vec(-2.0f64..2.0, 2),
            t in 0.0f64..30.0,
        ) {
            let n = gamma.len();
            let cfg = SystemConfig::new(gamma, delta[..n].to_vec(), 0.2, 10.0, 0.1).unwrap();
            let closed = upsilon_norm(&cfg, t);
            let brute = upsilon_norm_brute(&cfg, t);
            prop_assert!((closed - brute).abs() <= 1e-10 * brute.max(1e-300) + 1e-14);
        }
    }
}
