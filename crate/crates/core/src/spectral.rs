//! Laplace-domain analysis of the reduced cavity system: closed-form
//! three-level solutions, final values, characteristic roots and the
//! detuned dark-state condition.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{is_trapping_phase, RealDelaySystem, SystemConfig, C64};

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// Largest `kappa * tau` for which `e^{-s tau} ~ 1` is accepted.
pub const SHORT_DELAY_LIMIT: f64 = 0.05;

/// Parameter regime of a three-level closed form.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    /// `e^{-s tau} ~ 1` and `Delta0 tau = 2 n pi`: undamped oscillation.
    ShortDelayResonant,
    /// `e^{-s tau} ~ 1` with an arbitrary round-trip phase.
    ShortDelayGeneric,
    /// The delayed term has not returned yet: pure `-kappa` damping.
    LongDelay,
}

/// Amplitudes `(c_0, c_1^1, c_2^2)`.
pub type ThreeLevel = [C64; 3];

/// One residue term `poly(t) e^{root t}`, `poly` in ascending powers.
#[derive(Clone, Debug, PartialEq)]
struct Mode {
    root: C64,
    poly: Vec<C64>,
}

#[derive(Clone, Debug, PartialEq)]
enum Form {
    /// Closed form with link strengths `g1` (`c_1 <-> c_2`) and `g2` (`c_0 <-> c_1`).
    Resonant {
        g1: f64,
        g2: f64,
    },
    Residues([Vec<Mode>; 3]),
}

/// Time-domain three-level amplitudes in one regime.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalyticSolution {
    regime: Regime,
    form: Form,
}

impl AnalyticSolution {
    pub fn new(cfg: &SystemConfig, regime: Regime) -> Result<Self> {
        if cfg.n_levels() != 3 {
            return Err(Error::Regime(format!(
                "three-level forms need n_levels = 3, got {}",
                cfg.n_levels()
            )));
        }
        if cfg.delta().iter().any(|&d| d != 0.0) {
            return Err(Error::Regime("three-level forms assume zero detuning".into()));
        }
        let short = cfg.kappa() * cfg.tau();
        if regime != Regime::LongDelay && short >= SHORT_DELAY_LIMIT {
            return Err(Error::Regime(format!(
                "short-delay forms need kappa tau < {SHORT_DELAY_LIMIT}, got {short}"
            )));
        }
        let g2 = cfg.ladder_coupling(0, 0);
        let g1 = cfg.ladder_coupling(1, 1);
        let form = match regime {
            Regime::ShortDelayResonant => {
                if !is_trapping_phase(cfg.delay_phase()) {
                    return Err(Error::Regime(format!(
                        "resonant form needs Delta0 tau = 2 n pi, got {}",
                        cfg.delay_phase()
                    )));
                }
                Form::Resonant { g1, g2 }
            }
            Regime::ShortDelayGeneric => {
                let eps = (ONE - C64::from_polar(1.0, cfg.delay_phase())) * cfg.kappa();
                Form::Residues(cubic_modes(g1, g2, eps))
            }
            Regime::LongDelay => Form::Residues(cubic_modes(g1, g2, C64::new(cfg.kappa(), 0.0))),
        };
        Ok(AnalyticSolution { regime, form })
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn eval(&self, t: f64) -> ThreeLevel {
        match &self.form {
            Form::Resonant { g1, g2 } => {
                let w2 = g1 * g1 + g2 * g2;
                if w2 == 0.0 {
                    return [ONE, ZERO, ZERO];
                }
                let w = w2.sqrt();
                let (s, c) = (w * t).sin_cos();
                let step = if t >= 0.0 { 1.0 } else { 0.0 };
                [
                    C64::new((g1 * g1 * step + g2 * g2 * c) / w2, 0.0),
                    I * (g2 / w * s),
                    C64::new(g1 * g2 / w2 * (c - 1.0), 0.0),
                ]
            }
            Form::Residues(modes) => {
                let mut out = [ZERO; 3];
                for (slot, list) in out.iter_mut().zip(modes) {
                    for m in list {
                        let mut p = ZERO;
                        for &a in m.poly.iter().rev() {
                            p = p * t + a;
                        }
                        *slot += p * (m.root * t).exp();
                    }
                }
                out
            }
        }
    }
}

/// `(c_0, c_1^1, c_2^2)` at `t` for a three-level configuration.
pub fn analytic_three_level(cfg: &SystemConfig, regime: Regime, t: f64) -> Result<ThreeLevel> {
    Ok(AnalyticSolution::new(cfg, regime)?.eval(t))
}

/// Inverse Laplace transforms over `D(s) = s^3 + 2 e s^2 + (g1^2 + g2^2 + e^2) s + e g2^2`:
/// `C_0 = (s^2 + 2 e s + g1^2 + e^2) / D`, `C_1 = i g2 (s + e) / D`, `C_2 = -g1 g2 / D`.
fn cubic_modes(g1: f64, g2: f64, eps: C64) -> [Vec<Mode>; 3] {
    let (g1s, g2s) = (g1 * g1, g2 * g2);
    // Ascending coefficients.
    let den = [eps * g2s, eps * eps + g1s + g2s, eps * 2.0, ONE];
    let nums = [
        vec![eps * eps + g1s, eps * 2.0, ONE],
        vec![I * g2 * eps, I * g2],
        vec![C64::new(-g1 * g2, 0.0)],
    ];
    let clusters = cluster_roots(&den);
    let modes = |num: &Vec<C64>| -> Vec<Mode> {
        clusters
            .iter()
            .enumerate()
            .map(|(k, &(root, mult))| {
                let others: Vec<(C64, usize)> = clusters
                    .iter()
                    .enumerate()
                    .filter(|&(o, _)| o != k)
                    .map(|(_, &c)| c)
                    .collect();
                Mode {
                    root,
                    poly: confluent_residue(num, root, mult, &others),
                }
            })
            .collect()
    };
    [modes(&nums[0]), modes(&nums[1]), modes(&nums[2])]
}

/// Roots of a monic cubic (ascending coefficients) with multiplicities.
/// A discriminant below `1e-12` in modulus is treated as a repeated root.
fn cluster_roots(den: &[C64; 4]) -> Vec<(C64, usize)> {
    let (a, b, c) = (den[2], den[1], den[0]);
    let companion = DMatrix::from_row_slice(3, 3, &[-a, -b, -c, ONE, ZERO, ZERO, ZERO, ONE, ZERO]);
    let mut roots: Vec<C64> = companion
        .eigenvalues()
        .expect("complex Schur form is triangular")
        .iter()
        .copied()
        .collect();
    for r in &mut roots {
        polish(den, r);
    }
    let disc = a * a * b * b - 4.0 * b * b * b - 4.0 * a * a * a * c - 27.0 * c * c + 18.0 * a * b * c;
    if disc.norm() >= 1e-12 {
        return roots.into_iter().map(|r| (r, 1)).collect();
    }
    // With a vanishing discriminant the repeated root follows from D and D'.
    let shape = a * a - 3.0 * b;
    if shape.norm() < 1e-9 {
        return vec![(-a / 3.0, 3)];
    }
    let double = (9.0 * c - a * b) / (2.0 * shape);
    vec![(double, 2), (-a - 2.0 * double, 1)]
}

fn polish(coefs: &[C64], root: &mut C64) {
    for _ in 0..3 {
        let (mut p, mut dp) = (ZERO, ZERO);
        for &a in coefs.iter().rev() {
            dp = dp * *root + p;
            p = p * *root + a;
        }
        if dp.norm() == 0.0 {
            return;
        }
        let next = *root - p / dp;
        if next.is_finite() {
            *root = next;
        }
    }
}

/// Residue of `N(s) e^{st} / D(s)` at a root of multiplicity `mult`, as a
/// polynomial in `t`; `others` are the remaining roots of `D`.
fn confluent_residue(num: &[C64], root: C64, mult: usize, others: &[(C64, usize)]) -> Vec<C64> {
    // Taylor coefficients at `root` up to order mult - 1.
    let mut n_series = vec![ZERO; mult];
    for (i, slot) in n_series.iter_mut().enumerate() {
        // i-th Taylor coefficient: sum_k a_k C(k, i) root^{k-i}.
        for (k, &a) in num.iter().enumerate().skip(i) {
            *slot += a * binomial(k, i) * root.powu((k - i) as u32);
        }
    }
    let mut q_series = vec![ZERO; mult];
    q_series[0] = ONE;
    for &(r, m) in others {
        for _ in 0..m {
            // Multiply by (s - root) + (root - r).
            let shift = root - r;
            for i in (0..mult).rev() {
                let lower = if i > 0 { q_series[i - 1] } else { ZERO };
                q_series[i] = q_series[i] * shift + lower;
            }
        }
    }
    let mut g = vec![ZERO; mult];
    for i in 0..mult {
        let mut acc = n_series[i];
        for k in 0..i {
            acc -= g[k] * q_series[i - k];
        }
        g[i] = acc / q_series[0];
    }
    // Coefficient of t^p is g_{mult - 1 - p} / p!.
    (0..mult)
        .map(|p| g[mult - 1 - p] / (1..=p).product::<usize>() as f64)
        .collect()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Long-time behaviour predicted by the final value theorem.
#[derive(Clone, Debug, PartialEq)]
pub struct FinalValues {
    /// Cavity amplitudes keep oscillating; no limit exists.
    pub oscillatory: bool,
    /// Limits of `(c_0, c_1^1, c_2^2)` when they exist.
    pub limits: Option<ThreeLevel>,
    /// Photons eventually found in the waveguide.
    pub waveguide_photons: f64,
}

/// Short-delay prediction for a three-level atom.
pub fn final_values(cfg: &SystemConfig) -> FinalValues {
    if cfg.kappa() == 0.0 || is_trapping_phase(cfg.delay_phase()) {
        FinalValues {
            oscillatory: true,
            limits: None,
            waveguide_photons: 0.0,
        }
    } else {
        FinalValues {
            oscillatory: false,
            limits: Some([ZERO; 3]),
            waveguide_photons: (cfg.n_levels() - 1) as f64,
        }
    }
}

/// `s -> det(s I - A - B e^{-s tau})` for real `A`, `B`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuasiPolynomial {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    tau: f64,
}

impl QuasiPolynomial {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, tau: f64) -> Result<Self> {
        if !a.is_square() || a.shape() != b.shape() || a.nrows() == 0 {
            return Err(Error::InvalidConfig("A and B must be square and of equal size".into()));
        }
        if !(tau > 0.0) {
            return Err(Error::InvalidConfig("tau must be positive".into()));
        }
        Ok(QuasiPolynomial { a, b, tau })
    }

    /// The characteristic function of a resonant reduced system.
    pub fn from_system(sys: &RealDelaySystem) -> Result<Self> {
        if sys.complex().is_detuned() {
            return Err(Error::Regime("detuned systems have time-varying A(t)".into()));
        }
        Self::new(sys.a_resonant(), sys.b(), sys.tau())
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    /// `s I - A - B e^{-s tau}`.
    pub fn matrix(&self, s: C64) -> DMatrix<C64> {
        let e = (-s * self.tau).exp();
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, k| {
            let diag = if i == k { s } else { ZERO };
            diag - self.a[(i, k)] - e * self.b[(i, k)]
        })
    }

    pub fn eval(&self, s: C64) -> C64 {
        self.matrix(s).determinant()
    }

    /// `|det M(s)|` over the Hadamard bound `prod_i |row_i|`, in `[0, 1]`.
    pub fn relative_residual(&self, s: C64) -> f64 {
        let m = self.matrix(s);
        let bound: f64 = m.row_iter().map(|r| r.norm()).product();
        if bound == 0.0 {
            0.0
        } else {
            m.determinant().norm() / bound
        }
    }

    /// `f'(s) / f(s) = tr(M^{-1} M')`, `None` where `M` is singular.
    pub fn log_derivative(&self, s: C64) -> Option<C64> {
        let m = self.matrix(s);
        let e = (-s * self.tau).exp() * self.tau;
        let n = self.dim();
        let dm = DMatrix::from_fn(n, n, |i, k| {
            let diag = if i == k { ONE } else { ZERO };
            diag + e * self.b[(i, k)]
        });
        let x = m.lu().solve(&dm)?;
        let tr = x.trace();
        tr.is_finite().then_some(tr)
    }

    /// Pseudospectral discretization of the solution operator's generator on
    /// `[-tau, 0]` with `nodes + 1` Chebyshev points.
    pub fn collocation_matrix(&self, nodes: usize) -> DMatrix<f64> {
        let d = self.dim();
        let n = nodes;
        let diff = chebyshev_differentiation(n).map(|v| v * 2.0 / self.tau);
        let mut m = DMatrix::zeros(d * (n + 1), d * (n + 1));
        m.view_mut((0, 0), (d, d)).copy_from(&self.a);
        let mut last = m.view_mut((0, d * n), (d, d));
        last += &self.b;
        for k in 1..=n {
            for l in 0..=n {
                let v = diff[(k, l)];
                for i in 0..d {
                    m[(k * d + i, l * d + i)] = v;
                }
            }
        }
        m
    }
}

/// Differentiation matrix on `x_k = cos(k pi / n)`, `k = 0..=n`.
fn chebyshev_differentiation(n: usize) -> DMatrix<f64> {
    let x: Vec<f64> = (0..=n).map(|k| (k as f64 * PI / n as f64).cos()).collect();
    let c: Vec<f64> = (0..=n)
        .map(|k| {
            let edge = if k == 0 || k == n { 2.0 } else { 1.0 };
            edge * if k % 2 == 0 { 1.0 } else { -1.0 }
        })
        .collect();
    let mut d = DMatrix::zeros(n + 1, n + 1);
    for i in 0..=n {
        for j in 0..=n {
            if i != j {
                d[(i, j)] = c[i] / c[j] / (x[i] - x[j]);
            }
        }
    }
    for i in 0..=n {
        let row: f64 = (0..=n).filter(|&j| j != i).map(|j| d[(i, j)]).sum();
        d[(i, i)] = -row;
    }
    d
}

/// Default number of Chebyshev intervals.
pub const DEFAULT_NODES: usize = 40;
const MAX_NODES: usize = 160;
const CANDIDATE_RESIDUAL: f64 = 1e-2;
const ROOT_RESIDUAL: f64 = 1e-8;
const DEDUP: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CharacteristicRoot {
    pub value: C64,
    pub multiplicity: usize,
    /// `|det(s I - A - B e^{-s tau})|` at `value`.
    pub residual: f64,
}

/// A collocation eigenvalue that Newton did not turn into a root.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RootFailure {
    pub candidate: C64,
    pub last: C64,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RootReport {
    /// Distinct roots, rightmost first.
    pub roots: Vec<CharacteristicRoot>,
    pub failures: Vec<RootFailure>,
    /// Chebyshev intervals used after any automatic doubling.
    pub nodes: usize,
    /// Largest relative residual, before refinement, of the collocation
    /// eigenvalues behind the returned roots.
    pub candidate_residual: f64,
}

/// Approximates the `count` rightmost distinct roots of `qp`.
pub fn rightmost_roots(qp: &QuasiPolynomial, count: usize) -> Result<RootReport> {
    rightmost_roots_with(qp, count, DEFAULT_NODES)
}

pub fn rightmost_roots_with(qp: &QuasiPolynomial, count: usize, nodes: usize) -> Result<RootReport> {
    if count == 0 {
        return Err(Error::InvalidConfig("count must be at least 1".into()));
    }
    if nodes < 2 {
        return Err(Error::InvalidConfig(
            "at least two Chebyshev intervals are required".into(),
        ));
    }
    let mut nodes = nodes;
    loop {
        let mut roots: Vec<(CharacteristicRoot, f64)> = Vec::new();
        let mut failures = Vec::new();
        for (start, mult) in candidate_clusters(qp, nodes, count) {
            let s = newton(qp, start, mult);
            let residual = qp.eval(s).norm();
            if residual < ROOT_RESIDUAL && s.is_finite() {
                let before = qp.relative_residual(start);
                match roots
                    .iter_mut()
                    .find(|(r, _)| (r.value - s).norm() < DEDUP * (1.0 + s.norm()))
                {
                    Some((r, b)) => {
                        r.multiplicity = r.multiplicity.max(mult);
                        *b = b.min(before);
                    }
                    None => roots.push((
                        CharacteristicRoot {
                            value: s,
                            multiplicity: mult,
                            residual,
                        },
                        before,
                    )),
                }
            } else {
                failures.push(RootFailure {
                    candidate: start,
                    last: s,
                    residual,
                });
            }
        }
        roots.sort_by(|(x, _), (y, _)| {
            y.value
                .re
                .total_cmp(&x.value.re)
                .then(y.value.im.total_cmp(&x.value.im))
        });
        roots.truncate(count);
        let candidate_residual = roots.iter().map(|&(_, b)| b).fold(0.0, f64::max);
        if (candidate_residual >= CANDIDATE_RESIDUAL || roots.is_empty()) && 2 * nodes <= MAX_NODES {
            nodes *= 2;
            continue;
        }
        let roots = roots.into_iter().map(|(r, _)| r).collect();
        return Ok(RootReport {
            roots,
            failures,
            nodes,
            candidate_residual,
        });
    }
}

/// Rightmost collocation eigenvalues grouped into clusters of nearly
/// coincident values, each reported by its mean and size.
fn candidate_clusters(qp: &QuasiPolynomial, nodes: usize, count: usize) -> Vec<(C64, usize)> {
    let mut eig: Vec<C64> = qp
        .collocation_matrix(nodes)
        .complex_eigenvalues()
        .iter()
        .copied()
        .collect();
    eig.sort_by(|x, y| y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im)));
    let mut clusters: Vec<(C64, usize)> = Vec::new();
    let wanted = count + 2;
    for s in eig {
        let tol = 1e-6 * (1.0 + s.norm());
        match clusters.iter_mut().find(|(c, _)| (*c - s).norm() < tol) {
            Some((c, m)) => {
                *c = (*c * *m as f64 + s) / (*m + 1) as f64;
                *m += 1;
            }
            None => {
                if clusters.len() == wanted {
                    break;
                }
                clusters.push((s, 1));
            }
        }
    }
    clusters
}

/// Newton on `det`, with the step scaled by the multiplicity.
fn newton(qp: &QuasiPolynomial, start: C64, mult: usize) -> C64 {
    let mut s = start;
    for _ in 0..100 {
        let Some(ld) = qp.log_derivative(s) else { return s };
        let step = mult as f64 / ld;
        if !step.is_finite() {
            return s;
        }
        s -= step;
        if step.norm() < 1e-15 * (1.0 + s.norm()) {
            break;
        }
    }
    s
}

/// Persistent-oscillation condition of a detuned three-level atom.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DarkState {
    pub dark: bool,
    /// Oscillation centre `gamma_2 delta_1 / (gamma_1^2 + gamma_2^2 + delta_1 delta_2)` of `c_1^1`.
    pub mean: f64,
}

/// `Delta0 tau = 2 n pi` and `delta_2 / delta_1 = gamma_2^2 / gamma_1^2`, both to `1e-9`.
pub fn detuned_dark_state_check(cfg: &SystemConfig) -> Result<DarkState> {
    if cfg.n_levels() != 3 {
        return Err(Error::Regime(format!(
            "dark-state check needs n_levels = 3, got {}",
            cfg.n_levels()
        )));
    }
    let g2 = cfg.ladder_coupling(0, 0);
    let g1 = cfg.ladder_coupling(1, 1);
    let d2 = cfg.delta_for(0);
    let d1 = cfg.delta_for(1);
    // Cross-multiplied ratio condition, which also covers delta_1 = 0.
    let ratio_holds = (d2 * g1 * g1 - d1 * g2 * g2).abs() < 1e-9;
    let dark = is_trapping_phase(cfg.delay_phase()) && ratio_holds;
    let denom = g1 * g1 + g2 * g2 + d1 * d2;
    let mean = if dark && denom != 0.0 { g2 * d1 / denom } else { 0.0 };
    Ok(DarkState { dark, mean })
}

/// Root of the scalar `s + kappa (1 - e^{i phase} e^{-s tau})` near `guess`.
pub fn scalar_delay_root(kappa: f64, phase: f64, tau: f64, guess: C64) -> Option<C64> {
    let qp = QuasiPolynomial::new(
        DMatrix::from_element(1, 1, -kappa),
        DMatrix::from_element(1, 1, kappa * phase.cos()),
        tau,
    )
    .ok()?;
    let s = newton(&qp, guess, 1);
    (qp.eval(s).norm() < ROOT_RESIDUAL).then_some(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dde::integrate_cavity;
    use crate::model::{build_cavity_delay_system, CouplingConvention};
    use proptest::prelude::*;

    fn three(g1: f64, g2: f64, g0: f64, phase: f64) -> SystemConfig {
        let delta0 = 50.0;
        SystemConfig::resonant(vec![g1, g2], g0, delta0, phase / delta0)
            .unwrap()
            .with_convention(CouplingConvention::Uniform)
    }

    #[test]
    fn resonant_initial_value_and_half_period() {
        let cfg = three(0.3, 0.3, 0.2, 2.0 * PI);
        let sol = AnalyticSolution::new(&cfg, Regime::ShortDelayResonant).unwrap();
        assert_eq!(sol.eval(0.0), [ONE, ZERO, ZERO]);
        let t = PI / (2.0f64 * 0.09).sqrt();
        assert!(sol.eval(t)[0].norm() < 1e-12);
    }

    #[test]
    fn resonant_forms_are_normalized() {
        let cfg = three(0.2, 0.5, 0.2, 4.0 * PI);
        let sol = AnalyticSolution::new(&cfg, Regime::ShortDelayResonant).unwrap();
        for k in 0..200 {
            let c = sol.eval(0.37 * k as f64);
            let total: f64 = c.iter().map(|v| v.norm_sqr()).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn regime_mismatches_are_rejected() {
        let cfg = three(0.3, 0.3, 0.2, 3.0 * PI);
        assert!(AnalyticSolution::new(&cfg, Regime::ShortDelayResonant).is_err());
        let four = SystemConfig::resonant(vec![0.3, 0.3, 0.3], 0.2, 50.0, 0.1).unwrap();
        assert!(AnalyticSolution::new(&four, Regime::LongDelay).is_err());
        let detuned = three(0.3, 0.3, 0.2, 2.0 * PI).with_delta(vec![0.1, 0.0]).unwrap();
        assert!(AnalyticSolution::new(&detuned, Regime::LongDelay).is_err());
        // kappa tau = 0.25 * 2 is far from short.
        let slow = SystemConfig::resonant(vec![0.3, 0.3], 1.0, 1.0, 2.0 * PI).unwrap();
        assert!(AnalyticSolution::new(&slow, Regime::ShortDelayGeneric).is_err());
        assert!(AnalyticSolution::new(&slow, Regime::LongDelay).is_ok());
    }

    /// Oracle: the constant-coefficient ODE `x' = M x` solved by the matrix
    /// exponential, independent of the residue code.
    fn expm_reference(g1: f64, g2: f64, eps: C64, t: f64) -> [C64; 3] {
        let m = DMatrix::from_row_slice(3, 3, &[ZERO, I * g2, ZERO, I * g2, -eps, I * g1, ZERO, I * g1, -eps]);
        let x = (m * C64::new(t, 0.0)).exp().column(0).into_owned();
        [x[0], x[1], x[2]]
    }

    #[test]
    fn long_delay_matches_matrix_exponential() {
        let cfg = three(0.3, 0.3, 0.2, 3.0 * PI);
        let sol = AnalyticSolution::new(&cfg, Regime::LongDelay).unwrap();
        for &t in &[0.0, 1.0, 7.5, 40.0, 200.0] {
            let want = expm_reference(0.3, 0.3, C64::new(cfg.kappa(), 0.0), t);
            let got = sol.eval(t);
            for k in 0..3 {
                assert!(
                    (got[k] - want[k]).norm() < 1e-10,
                    "t = {t}, k = {k}: {} vs {}",
                    got[k],
                    want[k]
                );
            }
        }
    }

    #[test]
    fn generic_short_delay_matches_matrix_exponential() {
        let cfg = three(0.25, 0.4, 0.2, 3.0 * PI);
        let eps = (ONE - C64::from_polar(1.0, cfg.delay_phase())) * cfg.kappa();
        let sol = AnalyticSolution::new(&cfg, Regime::ShortDelayGeneric).unwrap();
        for &t in &[0.5, 5.0, 50.0] {
            let want = expm_reference(0.25, 0.4, eps, t);
            let got = sol.eval(t);
            for k in 0..3 {
                assert!((got[k] - want[k]).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn long_delay_limits_vanish() {
        let cfg = three(0.3, 0.3, 0.2, 3.0 * PI);
        let c = analytic_three_level(&cfg, Regime::LongDelay, 1e4).unwrap();
        assert!(c.iter().all(|v| v.norm() < 1e-6));
    }

    #[test]
    fn confluent_roots_are_handled() {
        // D(s) = (s + 1)^2 (s + 2) with N = 1: residues give
        // e^{-t} (t - 1) + e^{-2t}.
        let den = [C64::new(2.0, 0.0), C64::new(5.0, 0.0), C64::new(4.0, 0.0), ONE];
        let clusters = cluster_roots(&den);
        assert_eq!(clusters.len(), 2);
        let num = [ONE];
        let mut total = ZERO;
        let t: f64 = 1.3;
        for (k, &(root, mult)) in clusters.iter().enumerate() {
            let others: Vec<_> = clusters
                .iter()
                .enumerate()
                .filter(|&(o, _)| o != k)
                .map(|(_, &c)| c)
                .collect();
            let poly = confluent_residue(&num, root, mult, &others);
            let p: C64 = poly.iter().enumerate().map(|(i, a)| a * t.powi(i as i32)).sum();
            total += p * (root * t).exp();
        }
        let want = (-t).exp() * (t - 1.0) + (-2.0 * t).exp();
        assert!(
            (total.re - want).abs() < 1e-7 && total.im.abs() < 1e-7,
            "{total} vs {want}"
        );
    }

    #[test]
    fn triple_root_residue() {
        // 1 / (s + 1)^3 -> t^2 e^{-t} / 2.
        let den = [ONE, C64::new(3.0, 0.0), C64::new(3.0, 0.0), ONE];
        let clusters = cluster_roots(&den);
        assert_eq!(clusters.len(), 1);
        let poly = confluent_residue(&[ONE], clusters[0].0, clusters[0].1, &[]);
        assert!((poly[2] - 0.5).norm() < 1e-4);
        assert!(poly[0].norm() < 1e-4 && poly[1].norm() < 1e-4);
    }

    #[test]
    fn resonant_form_tracks_delay_integration() {
        let cfg = three(0.3, 0.3, 0.2, 2.0 * PI);
        let sol = AnalyticSolution::new(&cfg, Regime::ShortDelayResonant).unwrap();
        let sys = build_cavity_delay_system(&cfg);
        let traj = integrate_cavity(&sys, 100.0 * cfg.tau(), 64).unwrap();
        let mut worst: f64 = 0.0;
        for (t, x) in traj.times.iter().zip(&traj.states) {
            let c = sol.eval(*t);
            for k in 0..3 {
                worst = worst.max((x[k] - c[k]).norm());
            }
        }
        assert!(worst < 2e-2, "max deviation {worst}");
    }

    #[test]
    fn final_value_examples() {
        let emit = final_values(&three(0.3, 0.3, 0.2, 3.0 * PI));
        assert!(!emit.oscillatory);
        assert_eq!(emit.limits, Some([ZERO; 3]));
        assert_eq!(emit.waveguide_photons, 2.0);
        let trap = final_values(&three(0.3, 0.3, 0.2, 2.0 * PI));
        assert!(trap.oscillatory && trap.limits.is_none());
        assert_eq!(trap.waveguide_photons, 0.0);
        assert!(final_values(&three(0.3, 0.3, 0.0, 3.0 * PI)).oscillatory);
    }

    fn qp_for(cfg: &SystemConfig) -> QuasiPolynomial {
        QuasiPolynomial::from_system(&build_cavity_delay_system(cfg).real_embedding()).unwrap()
    }

    #[test]
    fn decoupled_roots_are_coupling_eigenvalues() {
        // kappa = 0: the roots are i times the eigenvalues of the
        // tridiagonal link matrix, each twice in the real embedding.
        for n in 2..=4 {
            let cfg =
                SystemConfig::resonant(vec![0.3, 0.25, 0.2][..n - 1].to_vec(), 0.0, 50.0, 2.0 * PI / 50.0).unwrap();
            let qp = qp_for(&cfg);
            let rep = rightmost_roots(&qp, 2 * n).unwrap();
            let mut t = DMatrix::<f64>::zeros(n, n);
            for j in 0..n - 1 {
                let g = cfg.ladder_coupling(j, j);
                t[(j, j + 1)] = g;
                t[(j + 1, j)] = g;
            }
            for lam in t.symmetric_eigenvalues().iter() {
                let found = rep.roots.iter().find(|r| (r.value - I * *lam).norm() < 1e-6);
                let r = found.unwrap_or_else(|| panic!("N = {n}: missing {lam}i in {:?}", rep.roots));
                assert_eq!(r.multiplicity, 2);
                assert!(r.residual < 1e-8);
            }
        }
    }

    #[test]
    fn scalar_delay_roots_match_one_dimensional_solve() {
        // N = 2, gamma = 0: the excited amplitude obeys s + kappa (1 + e^{-s tau}) = 0.
        let kappa = 0.25;
        let tau = PI / 50.0;
        let cfg = SystemConfig::resonant(vec![0.0], 1.0, 50.0, tau).unwrap();
        assert!((cfg.kappa() - kappa).abs() < 1e-15);
        let rep = rightmost_roots(&qp_for(&cfg), 4).unwrap();
        let nonzero: Vec<_> = rep.roots.iter().filter(|r| r.value.norm() > 1e-9).collect();
        assert!(!nonzero.is_empty());
        for r in nonzero {
            let s = r.value;
            let f = s + kappa * (ONE + (-s * tau).exp());
            assert!(f.norm() < 1e-8, "{s}: {f}");
            assert!(s.norm() > 1e-6);
        }
        let lead = scalar_delay_root(kappa, PI, tau, C64::new(-0.5, 0.0)).unwrap();
        assert!((lead + kappa * (ONE + (-lead * tau).exp())).norm() < 1e-12);
    }

    #[test]
    fn collocation_of_delay_free_system_is_exact() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, -2.0, -1.0]);
        let qp = QuasiPolynomial::new(a, DMatrix::zeros(2, 2), 0.5).unwrap();
        let rep = rightmost_roots(&qp, 2).unwrap();
        assert_eq!(rep.roots.len(), 2);
        for r in &rep.roots {
            assert!((r.value.re + 1.0).abs() < 1e-10 && (r.value.im.abs() - 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_zero_count_and_detuned_systems() {
        let cfg = three(0.3, 0.3, 0.2, 2.0 * PI);
        assert!(rightmost_roots(&qp_for(&cfg), 0).is_err());
        let detuned = cfg.with_delta(vec![0.1, 0.1]).unwrap();
        assert!(QuasiPolynomial::from_system(&build_cavity_delay_system(&detuned).real_embedding()).is_err());
    }

    #[test]
    fn dark_state_examples() {
        let cfg = three(0.3, 0.3, 0.2, 2.0 * PI).with_delta(vec![0.1, 0.1]).unwrap();
        let d = detuned_dark_state_check(&cfg).unwrap();
        assert!(d.dark);
        assert!((d.mean - 0.03 / 0.19).abs() < 1e-12);
        let off = cfg.clone().with_delta(vec![0.1, 0.2]).unwrap();
        assert!(!detuned_dark_state_check(&off).unwrap().dark);
        let plain = three(0.3, 0.3, 0.2, 2.0 * PI);
        assert_eq!(
            detuned_dark_state_check(&plain).unwrap(),
            DarkState { dark: true, mean: 0.0 }
        );
        let wrong_phase = three(0.3, 0.3, 0.2, 3.0 * PI).with_delta(vec![0.1, 0.1]).unwrap();
        assert!(!detuned_dark_state_check(&wrong_phase).unwrap().dark);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn refined_roots_have_small_residuals(
            g in 0.05f64..1.0,
            g0 in 0.0f64..1.0,
            phase in 0.0f64..std::f64::consts::TAU,
        ) {
            let cfg = SystemConfig::resonant(vec![g, 0.7 * g], g0, 50.0, phase / 50.0).unwrap();
            let rep = rightmost_roots(&qp_for(&cfg), 4).unwrap();
            prop_assert!(!rep.roots.is_empty());
            prop_assert!(rep.candidate_residual < 1e-2);
            for r in &rep.roots {
                prop_assert!(r.residual < 1e-8);
            }
        }
    }
}
