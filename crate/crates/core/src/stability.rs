//! Lyapunov-Krasovskii certificates of exponential stability for the real
//! reduced system `x' = A~ x + B~ x(t - tau)`.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::dde::Trajectory;
use crate::error::{Error, Result};
use crate::model::RealDelaySystem;

/// `lambda_max` must fall below this for a strict inequality.
pub const NEGATIVE_THRESHOLD: f64 = -1e-10;

/// `(P, Q, beta)` with the envelope constants they imply.
#[derive(Clone, Debug, PartialEq)]
pub struct StabilityCertificate {
    p: DMatrix<f64>,
    q: DMatrix<f64>,
    beta: f64,
    alpha1: f64,
    alpha2: f64,
}

impl StabilityCertificate {
    /// Checks that `P`, `Q` are symmetric positive definite and derives
    /// `alpha1 = lambda_min(P)`, `alpha2 = lambda_max(P) + tau lambda_max(Q)`.
    pub fn new(p: DMatrix<f64>, q: DMatrix<f64>, beta: f64, tau: f64) -> Result<Self> {
        let (p_min, p_max) = spd_bounds(&p).ok_or(Error::NotPositiveDefinite("P"))?;
        let (_, q_max) = spd_bounds(&q).ok_or(Error::NotPositiveDefinite("Q"))?;
        if p.shape() != q.shape() {
            return Err(Error::InvalidConfig("P and Q must have the same size".into()));
        }
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::InvalidConfig("beta must be finite and non-negative".into()));
        }
        Ok(StabilityCertificate {
            p,
            q,
            beta,
            alpha1: p_min,
            alpha2: p_max + tau * q_max,
        })
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn alpha1(&self) -> f64 {
        self.alpha1
    }

    pub fn alpha2(&self) -> f64 {
        self.alpha2
    }

    /// `sqrt(alpha2 / alpha1)`.
    pub fn chi(&self) -> f64 {
        (self.alpha2 / self.alpha1).sqrt()
    }

    fn with_beta(&self, beta: f64) -> Self {
        StabilityCertificate { beta, ..self.clone() }
    }
}

/// Smallest and largest eigenvalue of a symmetric positive definite matrix.
fn spd_bounds(m: &DMatrix<f64>) -> Option<(f64, f64)> {
    if !m.is_square() || m.nrows() == 0 {
        return None;
    }
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-12 * scale {
        return None;
    }
    let eig = m.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    (lo > 0.0).then_some((lo, hi))
}

/// `[[P A + A^T P + Q, P B], [B^T P, -e^{-2 beta tau} Q]]`.
pub fn lmi_m(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    p: &DMatrix<f64>,
    q: &DMatrix<f64>,
    beta: f64,
    tau: f64,
) -> DMatrix<f64> {
    let n = a.nrows();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    let pa = p * a;
    let pb = p * b;
    m.view_mut((0, 0), (n, n)).copy_from(&(&pa + pa.transpose() + q));
    m.view_mut((0, n), (n, n)).copy_from(&pb);
    m.view_mut((n, 0), (n, n)).copy_from(&pb.transpose());
    m.view_mut((n, n), (n, n)).copy_from(&(q * -(-2.0 * beta * tau).exp()));
    m
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CertificateCheck {
    pub certified: bool,
    /// `-lambda_max` of the assembled block matrix.
    pub margin: f64,
}

/// Evaluates `M(P, Q) + 2 beta N(P) [+ 2 lambda_max(P) ||Upsilon|| I] < 0`.
///
/// The detuned term uses the time-uniform bound on `||Upsilon||_2` and is
/// added on the whole block matrix.
pub fn check_certificate(
    sys: &RealDelaySystem,
    cert: &StabilityCertificate,
    detuned: bool,
) -> Result<CertificateCheck> {
    let n = sys.dim();
    if cert.p.nrows() != n {
        return Err(Error::InvalidConfig(format!(
            "certificate has size {}, system {}",
            cert.p.nrows(),
            n
        )));
    }
    let upsilon = if detuned { sys.complex().upsilon_norm_sup() } else { 0.0 };
    Ok(check_matrices(&sys.a_resonant(), &sys.b(), sys.tau(), upsilon, cert))
}

fn check_matrices(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    tau: f64,
    upsilon: f64,
    cert: &StabilityCertificate,
) -> CertificateCheck {
    let n = a.nrows();
    let mut m = lmi_m(a, b, &cert.p, &cert.q, cert.beta, tau);
    let mut top = m.view_mut((0, 0), (n, n));
    top += &cert.p * (2.0 * cert.beta);
    if upsilon > 0.0 {
        let shift = 2.0 * lambda_max(&cert.p) * upsilon;
        for i in 0..2 * n {
            m[(i, i)] += shift;
        }
    }
    let lmax = lambda_max(&m);
    CertificateCheck {
        certified: lmax < NEGATIVE_THRESHOLD,
        margin: -lmax,
    }
}

fn lambda_max(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().max()
}

/// Solves `M^T P + P M = -I` through the Kronecker form, or `None` if singular.
pub fn lyapunov(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = m.nrows();
    let mt = m.transpose();
    let eye = DMatrix::<f64>::identity(n, n);
    // vec(M^T P) = (I kron M^T) vec(P), vec(P M) = (M^T kron I) vec(P).
    let k = eye.kronecker(&mt) + mt.kronecker(&eye);
    let rhs = DMatrix::from_fn(n * n, 1, |i, _| if i % n == i / n { -1.0 } else { 0.0 });
    let x = k.lu().solve(&rhs)?;
    let p = DMatrix::from_column_slice(n, n, x.as_slice());
    Some((&p + p.transpose()) * 0.5)
}

fn is_hurwitz(m: &DMatrix<f64>) -> bool {
    m.complex_eigenvalues().iter().all(|s| s.re < 0.0)
}

/// Grid of `Q = q I` scales, four per decade over `[1e-4, 1e2]`.
pub fn q_grid() -> Vec<f64> {
    (0..=24).map(|k| 10f64.powf(-4.0 + k as f64 / 4.0)).collect()
}

const BISECTION_STEPS: usize = 40;

/// Heuristic search for the certificate with the largest `beta`.
///
/// `P` is the Lyapunov solution for `A~_0 + B~` when that matrix is
/// Hurwitz and the identity otherwise; `Q = q I` runs over [`q_grid`] and
/// `beta` is bisected at each `q`. Returns `None` if nothing certifies with
/// `beta > 0`.
pub fn search_certificate(sys: &RealDelaySystem, detuned: bool) -> Option<StabilityCertificate> {
    let a = sys.a_resonant();
    let b = sys.b();
    let tau = sys.tau();
    let n = sys.dim();
    let upsilon = if detuned { sys.complex().upsilon_norm_sup() } else { 0.0 };
    let sum = &a + &b;
    let p = if is_hurwitz(&sum) { lyapunov(&sum) } else { None };
    let p = p
        .filter(|p| spd_bounds(p).is_some())
        .unwrap_or_else(|| DMatrix::identity(n, n));
    let eye = DMatrix::<f64>::identity(n, n);

    let best = q_grid()
        .into_par_iter()
        .filter_map(|q| {
            let base = StabilityCertificate::new(p.clone(), &eye * q, 0.0, tau).ok()?;
            let holds = |beta: f64| check_matrices(&a, &b, tau, upsilon, &base.with_beta(beta)).certified;
            if !holds(0.0) {
                return None;
            }
            let mut hi = 1.0;
            while holds(hi) {
                hi *= 2.0;
                if hi > 1e6 {
                    return Some(base.with_beta(hi));
                }
            }
            let mut lo = 0.0;
            for _ in 0..BISECTION_STEPS {
                let mid = 0.5 * (lo + hi);
                if holds(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            (lo > 0.0).then(|| base.with_beta(lo))
        })
        .collect::<Vec<_>>();
    best.into_iter().max_by(|x, y| x.beta.total_cmp(&y.beta))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvelopeReport {
    /// Largest `||x(t)|| / (chi e^{-beta t} |phi|)` along the trajectory.
    pub max_ratio: f64,
    pub worst_time: f64,
    /// Samples whose ratio exceeds `1 + 1e-9`.
    pub violations: usize,
}

impl EnvelopeReport {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

/// Compares a trajectory from a constant history against the certified
/// envelope `sqrt(alpha2 / alpha1) e^{-beta t} |phi|`, with `|phi| = |x(0)|`.
pub fn verify_envelope(traj: &Trajectory<f64>, cert: &StabilityCertificate) -> EnvelopeReport {
    let phi = traj.states.first().map(|x| x.norm()).unwrap_or(0.0);
    let chi = cert.chi();
    let mut report = EnvelopeReport {
        max_ratio: 0.0,
        worst_time: 0.0,
        violations: 0,
    };
    for (t, x) in traj.times.iter().zip(&traj.states) {
        let bound = chi * (-cert.beta * t).exp() * phi;
        let ratio = if bound > 0.0 { x.norm() / bound } else { 0.0 };
        if ratio > report.max_ratio {
            report.max_ratio = ratio;
            report.worst_time = *t;
        }
        if ratio > 1.0 + 1e-9 {
            report.violations += 1;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dde::integrate_cavity_real;
    use crate::model::{build_cavity_delay_system, CouplingConvention, SystemConfig};
    use crate::spectral::{rightmost_roots, QuasiPolynomial};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn two_level(gamma: f64, g0: f64, phase: f64) -> RealDelaySystem {
        let cfg = SystemConfig::resonant(vec![gamma], g0, 50.0, phase / 50.0).unwrap();
        build_cavity_delay_system(&cfg).real_embedding()
    }

    fn spd(seed: &[f64], n: usize, shift: f64) -> DMatrix<f64> {
        let l = DMatrix::from_fn(n, n, |i, k| {
            seed[(i * n + k) % seed.len()] * (1.0 + (i + 2 * k) as f64).sin()
        });
        &l * l.transpose() + DMatrix::identity(n, n) * shift
    }

    #[test]
    fn assembled_matrix_is_symmetric() {
        let sys = two_level(0.3, 1.0, PI);
        let p = spd(&[0.3, -0.2, 0.7], 4, 0.5);
        let q = spd(&[0.1, 0.9], 4, 0.2);
        let m = lmi_m(&sys.a_resonant(), &sys.b(), &p, &q, 0.3, sys.tau());
        assert!((&m - m.transpose()).amax() < 1e-14);
    }

    #[test]
    fn rejects_indefinite_matrices() {
        let eye = DMatrix::<f64>::identity(4, 4);
        let mut bad = eye.clone();
        bad[(2, 2)] = -1.0;
        assert_eq!(
            StabilityCertificate::new(bad.clone(), eye.clone(), 0.1, 1.0),
            Err(Error::NotPositiveDefinite("P"))
        );
        assert_eq!(
            StabilityCertificate::new(eye.clone(), bad, 0.1, 1.0),
            Err(Error::NotPositiveDefinite("Q"))
        );
        let mut skew = eye.clone();
        skew[(0, 1)] = 0.5;
        assert!(StabilityCertificate::new(skew, eye, 0.1, 1.0).is_err());
    }

    #[test]
    fn alpha_constants() {
        let p = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]));
        let q = DMatrix::identity(4, 4) * 0.5;
        let cert = StabilityCertificate::new(p, q, 0.1, 2.0).unwrap();
        assert_eq!(cert.alpha1(), 1.0);
        assert!((cert.alpha2() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn uncoupled_cavity_is_never_certified() {
        let sys = two_level(0.3, 0.0, PI);
        let eye = DMatrix::identity(4, 4);
        let cert = StabilityCertificate::new(eye.clone(), eye, 0.01, sys.tau()).unwrap();
        let check = check_certificate(&sys, &cert, false).unwrap();
        assert!(!check.certified && check.margin <= 0.0);
    }

    #[test]
    fn delay_free_lyapunov_baseline_certifies() {
        let sys = two_level(0.3, 1.0, PI);
        let cfg = SystemConfig::resonant(vec![0.3], 1.0, 50.0, PI / 50.0).unwrap();
        let free = build_cavity_delay_system(&cfg).without_feedback().real_embedding();
        assert_eq!(free.b().amax(), 0.0);
        let p = lyapunov(&free.a_resonant()).unwrap();
        let cert = StabilityCertificate::new(p, DMatrix::identity(4, 4) * 1e-3, 0.0, sys.tau()).unwrap();
        assert!(check_certificate(&free, &cert, false).unwrap().certified);
    }

    #[test]
    fn lyapunov_solution_satisfies_equation() {
        let m = DMatrix::from_row_slice(3, 3, &[-1.0, 2.0, 0.0, -0.5, -0.3, 1.0, 0.0, -1.0, -0.2]);
        let p = lyapunov(&m).unwrap();
        let r = m.transpose() * &p + &p * &m + DMatrix::identity(3, 3);
        assert!(r.amax() < 1e-12);
    }

    #[test]
    fn feedback_blocks_every_certificate() {
        // With B = kappa e^{i phase} on the cavity states, the vector
        // [v; e^{-i phase} v] with v an eigenvector of the coupling matrix
        // makes the quadratic form of M(P, Q) vanish, so lambda_max >= 0.
        for &phase in &[PI, 2.0 * PI, 0.7] {
            let sys = two_level(0.3, 1.0, phase);
            assert!(search_certificate(&sys, false).is_none(), "phase {phase}");
        }
    }

    #[test]
    fn resonant_trapping_has_no_certificate() {
        let cfg = SystemConfig::resonant(vec![0.3, 0.3], 0.2, 50.0, 2.0 * PI / 50.0).unwrap();
        assert!(search_certificate(&build_cavity_delay_system(&cfg).real_embedding(), false).is_none());
    }

    fn free_system(gamma: Vec<f64>, g0: f64, delta: Option<Vec<f64>>) -> RealDelaySystem {
        let n = gamma.len();
        let cfg = SystemConfig::new(gamma, delta.unwrap_or(vec![0.0; n]), g0, 50.0, 0.5)
            .unwrap()
            .with_convention(CouplingConvention::Uniform);
        build_cavity_delay_system(&cfg).without_feedback().real_embedding()
    }

    #[test]
    fn delay_free_search_respects_the_spectrum() {
        let sys = free_system(vec![0.3], 1.0, None);
        let cert = search_certificate(&sys, false).expect("certificate");
        assert!(cert.beta() > 0.0);
        let qp = QuasiPolynomial::from_system(&sys).unwrap();
        let lead = rightmost_roots(&qp, 1).unwrap().roots[0].value.re;
        assert!(lead < -cert.beta(), "root {lead} vs beta {}", cert.beta());
        let traj = integrate_cavity_real(&sys, 40.0, 32).unwrap();
        let rep = verify_envelope(&traj, &cert);
        assert!(rep.holds(), "{rep:?}");
    }

    #[test]
    fn detuning_never_raises_the_rate() {
        let resonant = search_certificate(&free_system(vec![1.0], 2.0, None), false).expect("resonant");
        let sys = free_system(vec![1.0], 2.0, Some(vec![1.0]));
        if let Some(c) = search_certificate(&sys, true) {
            assert!(c.beta() <= resonant.beta());
        }
    }

    #[test]
    fn fabricated_certificate_is_flagged_on_oscillation() {
        let cfg = SystemConfig::resonant(vec![0.3], 0.2, 50.0, 2.0 * PI / 50.0).unwrap();
        let sys = build_cavity_delay_system(&cfg).real_embedding();
        let traj = integrate_cavity_real(&sys, 200.0 * sys.tau(), 32).unwrap();
        let eye = DMatrix::identity(4, 4);
        let cert = StabilityCertificate::new(eye.clone(), eye * 1e-3, 0.2, sys.tau()).unwrap();
        assert!(!verify_envelope(&traj, &cert).holds());
    }

    #[test]
    fn zero_rate_envelope_on_bounded_trajectory() {
        let cfg = SystemConfig::resonant(vec![0.3], 0.2, 50.0, 2.0 * PI / 50.0).unwrap();
        let sys = build_cavity_delay_system(&cfg).real_embedding();
        let traj = integrate_cavity_real(&sys, 100.0 * sys.tau(), 32).unwrap();
        let eye = DMatrix::identity(4, 4);
        let cert = StabilityCertificate::new(eye.clone(), eye, 0.0, sys.tau()).unwrap();
        let rep = verify_envelope(&traj, &cert);
        assert!(rep.max_ratio <= cert.chi());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn trapping_phase_rejects_random_certificates(
            seed_p in prop::collection::vec(-1.0f64..1.0, 4),
            seed_q in prop::collection::vec(-1.0f64..1.0, 4),
            shift_p in 1e-3f64..2.0,
            shift_q in 1e-3f64..2.0,
            beta in 0.0f64..2.0,
        ) {
            let sys = two_level(0.3, 0.2, 2.0 * PI);
            let cert = StabilityCertificate::new(spd(&seed_p, 4, shift_p), spd(&seed_q, 4, shift_q), beta, sys.tau()).unwrap();
            prop_assert!(!check_certificate(&sys, &cert, false).unwrap().certified);
        }

        #[test]
        fn certification_is_monotone_in_beta(
            gamma in 0.1f64..1.0,
            g0 in 0.5f64..2.0,
            q in 1e-4f64..1.0,
            frac in 0.0f64..1.0,
        ) {
            let sys = free_system(vec![gamma], g0, None);
            let p = lyapunov(&sys.a_resonant()).unwrap();
            let base = StabilityCertificate::new(p, DMatrix::identity(4, 4) * q, 0.0, sys.tau()).unwrap();
            let mut beta = 0.0;
            while check_certificate(&sys, &base.with_beta(beta + 0.01), false).unwrap().certified && beta < 10.0 {
                beta += 0.01;
            }
            let lower = base.with_beta(beta * frac);
            prop_assert!(check_certificate(&sys, &lower, false).unwrap().certified || beta == 0.0);
        }

        #[test]
        fn resonant_detuned_check_matches_plain(
            gamma in 0.1f64..1.0,
            g0 in 0.1f64..2.0,
            beta in 0.0f64..0.5,
        ) {
            let sys = free_system(vec![gamma, 0.5 * gamma], g0, None);
            let eye = DMatrix::identity(6, 6);
            let cert = StabilityCertificate::new(eye.clone(), eye * 0.01, beta, sys.tau()).unwrap();
            prop_assert_eq!(check_certificate(&sys, &cert, true).unwrap(), check_certificate(&sys, &cert, false).unwrap());
        }
    }
}
