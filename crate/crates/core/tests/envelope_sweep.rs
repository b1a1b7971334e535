//! Certificates found by the search bound simulated trajectories.

use proptest::prelude::*;

use qfs_core::dde::integrate_cavity_real;
use qfs_core::model::{build_cavity_delay_system, SystemConfig};
use qfs_core::spectral::{rightmost_roots, QuasiPolynomial};
use qfs_core::stability::{check_certificate, search_certificate, verify_envelope};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn certified_envelope_bounds_the_trajectory(
        gamma in prop::collection::vec(0.05f64..1.5, 1..4),
        g0 in 0.2f64..1.5,
        phase in 0.0f64..(4.0 * std::f64::consts::PI),
    ) {
        let cfg = SystemConfig::resonant(gamma, g0, 1.0, phase + 0.1).unwrap();
        let sys = build_cavity_delay_system(&cfg).without_feedback().real_embedding();
        let cert = search_certificate(&sys, false);
        prop_assert!(cert.is_some(), "damped delay-free ladder must certify");
        let cert = cert.unwrap();
        prop_assert!(check_certificate(&sys, &cert, false).unwrap().certified);

        let qp = QuasiPolynomial::from_system(&sys).unwrap();
        let abscissa = rightmost_roots(&qp, 1).unwrap().roots[0].value.re;
        prop_assert!(cert.beta() <= -abscissa + 1e-9, "beta {} abscissa {}", cert.beta(), abscissa);

        let t_end = 5.0 / cert.beta().max(0.05);
        let steps = (sys.tau() / 0.02).ceil().max(16.0) as usize;
        let traj = integrate_cavity_real(&sys, t_end.min(200.0), steps).unwrap();
        let env = verify_envelope(&traj, &cert);
        prop_assert!(env.holds(), "ratio {} at t = {}", env.max_ratio, env.worst_time);
    }
}
