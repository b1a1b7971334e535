//! Mode dispatch: turns a scenario into time series and report entries.

use std::f64::consts::PI;

use qfs_core::dde::{integrate_cavity, integrate_cavity_real};
use qfs_core::fullsim::{simulate, SimOptions};
use qfs_core::model::{build_cavity_delay_system, DelaySystem};
use qfs_core::parallel::{
    characteristic_poles, dominant_frequency, no_photon_criterion, propagate_single_excitation, ArrayAmplitudes,
};
use qfs_core::spectral::{final_values, rightmost_roots, AnalyticSolution, QuasiPolynomial, Regime};
use qfs_core::stability::{check_certificate, search_certificate, verify_envelope};
use qfs_core::{Error, Result};

use crate::scenario::{Mode, Observable, Scenario};

/// Sampled columns plus `key = value` report lines.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOutput {
    pub times: Vec<f64>,
    /// One column per requested observable, in request order.
    pub columns: Vec<Vec<f64>>,
    pub report: Vec<(String, String)>,
}

impl RunOutput {
    fn put(&mut self, key: impl Into<String>, value: impl ToString) {
        self.report.push((key.into(), value.to_string()));
    }
}

pub fn execute(sc: &Scenario, budget: usize) -> Result<RunOutput> {
    let mut out = RunOutput::default();
    out.put("kappa", sc.system.kappa());
    out.put("tau", sc.system.tau());
    out.put("delay_phase_pi", sc.system.delay_phase() / PI);
    match sc.mode {
        Mode::FullSim => full_sim(sc, budget, &mut out)?,
        Mode::ReducedDelay => reduced_delay(sc, &mut out)?,
        Mode::Analytic => analytic(sc, &mut out)?,
        Mode::Stability => stability(sc, &mut out)?,
        Mode::ParallelSingle => parallel_single(sc, &mut out)?,
    }
    for (obs, col) in sc.outputs.iter().zip(&out.columns) {
        if let Some(v) = col.last() {
            out.report
                .push((format!("final.{}", obs.column()), format!("{v:.15e}")));
        }
    }
    Ok(out)
}

fn full_sim(sc: &Scenario, budget: usize, out: &mut RunOutput) -> Result<()> {
    let grid = sc.mode_grid()?;
    let opts = SimOptions::new(sc.step).record_every(sc.record_every).budget(budget);
    let r = simulate(&sc.system, &sc.waveguides(), &grid, sc.t_end, &opts)?;
    out.times = r.times().to_vec();
    out.columns = sc
        .outputs
        .iter()
        .map(|o| match *o {
            Observable::Cavity(j) => r.cavity_population(j),
            Observable::Photons(n) => r.photons[n].clone(),
            Observable::GuidePhotons(w, n) => r.per_waveguide[w][n].clone(),
            Observable::Norm => r.norm.clone(),
            Observable::Guide(_) | Observable::Envelope => unreachable!("rejected by the schema"),
        })
        .collect();
    out.put("grid.modes", grid.n_modes());
    out.put("grid.half_width", grid.half_width());
    out.put("grid.spacing", grid.spacing());
    out.put("grid.recurrence_time", grid.recurrence_time());
    out.put("grid.resolves_delay", grid.resolves_delay(sc.system.tau()));
    out.put("basis_dim", r.basis.dim());
    out.put("norm_drift", format!("{:.3e}", r.norm_drift()));
    let fv = final_values(&sc.system);
    out.put("prediction.oscillatory", fv.oscillatory);
    out.put("prediction.waveguide_photons", fv.waveguide_photons);
    out.put("no_photon_criterion", no_photon_criterion(&sc.system));
    Ok(())
}

fn delay_system(sc: &Scenario) -> DelaySystem {
    let sys = build_cavity_delay_system(&sc.system);
    if sc.feedback {
        sys
    } else {
        sys.without_feedback()
    }
}

fn reduced_delay(sc: &Scenario, out: &mut RunOutput) -> Result<()> {
    let sys = delay_system(sc);
    let traj = integrate_cavity(&sys, sc.t_end, sc.steps_per_delay)?;
    let picks: Vec<usize> = (0..traj.len()).step_by(sc.record_every).collect();
    out.times = picks.iter().map(|&i| traj.times[i]).collect();
    out.columns = sc
        .outputs
        .iter()
        .map(|o| {
            picks
                .iter()
                .map(|&i| {
                    let x = &traj.states[i];
                    match *o {
                        Observable::Cavity(j) => x[j].norm_sqr(),
                        _ => x.norm_squared(),
                    }
                })
                .collect()
        })
        .collect();
    out.put("feedback", sc.feedback);
    out.put("step", traj.step());
    roots(sc, &sys, out)
}

fn roots(sc: &Scenario, sys: &DelaySystem, out: &mut RunOutput) -> Result<()> {
    if sc.roots == 0 {
        return Ok(());
    }
    if sys.is_detuned() {
        out.put("roots", "unavailable: detuned systems are time-varying");
        return Ok(());
    }
    let qp = QuasiPolynomial::from_system(&sys.real_embedding())?;
    let report = rightmost_roots(&qp, sc.roots)?;
    out.put("roots.nodes", report.nodes);
    out.put("roots.candidate_residual", format!("{:.3e}", report.candidate_residual));
    for (k, r) in report.roots.iter().enumerate() {
        out.put(
            format!("roots.{}", k + 1),
            format!(
                "{:.12e} {:+.12e}i multiplicity {} residual {:.3e}",
                r.value.re, r.value.im, r.multiplicity, r.residual
            ),
        );
    }
    out.put("roots.unconverged", report.failures.len());
    Ok(())
}

fn sample_times(sc: &Scenario) -> Vec<f64> {
    let n = (sc.t_end / sc.step).round() as usize;
    (0..=n).step_by(sc.record_every).map(|k| k as f64 * sc.step).collect()
}

fn analytic(sc: &Scenario, out: &mut RunOutput) -> Result<()> {
    let regime = sc.regime.expect("analytic scenarios carry a regime");
    let sol = AnalyticSolution::new(&sc.system, regime)?;
    out.times = sample_times(sc);
    let values: Vec<_> = out.times.iter().map(|&t| sol.eval(t)).collect();
    out.columns = sc
        .outputs
        .iter()
        .map(|o| {
            values
                .iter()
                .map(|c| match *o {
                    Observable::Cavity(j) => c[j].norm_sqr(),
                    _ => c.iter().map(|z| z.norm_sqr()).sum(),
                })
                .collect()
        })
        .collect();
    out.put(
        "regime",
        match regime {
            Regime::ShortDelayResonant => "short_delay_resonant",
            Regime::ShortDelayGeneric => "short_delay_generic",
            Regime::LongDelay => "long_delay",
        },
    );
    let fv = final_values(&sc.system);
    out.put("prediction.oscillatory", fv.oscillatory);
    out.put("prediction.waveguide_photons", fv.waveguide_photons);
    Ok(())
}

fn stability(sc: &Scenario, out: &mut RunOutput) -> Result<()> {
    let sys = delay_system(sc);
    let real = sys.real_embedding();
    let detuned = sys.is_detuned();
    let cert = search_certificate(&real, detuned);
    let traj = integrate_cavity_real(&real, sc.t_end, sc.steps_per_delay)?;
    let picks: Vec<usize> = (0..traj.len()).step_by(sc.record_every).collect();
    out.times = picks.iter().map(|&i| traj.times[i]).collect();
    let phi = traj.states.first().map_or(0.0, |x| x.norm());
    out.columns = sc
        .outputs
        .iter()
        .map(|o| {
            picks
                .iter()
                .map(|&i| match (o, &cert) {
                    (Observable::Envelope, Some(c)) => c.chi() * (-c.beta() * traj.times[i]).exp() * phi,
                    (Observable::Envelope, None) => f64::NAN,
                    _ => traj.states[i].norm(),
                })
                .collect()
        })
        .collect();
    out.put("feedback", sc.feedback);
    out.put("detuned", detuned);
    out.put("upsilon_sup", sys.upsilon_norm_sup());
    out.put("certified", cert.is_some());
    if let Some(c) = &cert {
        out.put("certificate.beta", format!("{:.12e}", c.beta()));
        out.put("certificate.q", format!("{:.6e}", c.q()[(0, 0)]));
        out.put("certificate.alpha1", format!("{:.12e}", c.alpha1()));
        out.put("certificate.alpha2", format!("{:.12e}", c.alpha2()));
        out.put("certificate.chi", format!("{:.12e}", c.chi()));
        let check = check_certificate(&real, c, detuned)?;
        out.put("certificate.margin", format!("{:.3e}", check.margin));
        let env = verify_envelope(&traj, c);
        out.put("envelope.max_ratio", format!("{:.12e}", env.max_ratio));
        out.put("envelope.worst_time", env.worst_time);
        out.put("envelope.holds", env.holds());
    }
    roots(sc, &sys, out)
}

fn parallel_single(sc: &Scenario, out: &mut RunOutput) -> Result<()> {
    let wcfg = sc
        .array
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("parallel_single needs an array".into()))?;
    let c0 = ArrayAmplitudes::localized(wcfg.n_waveguides(), sc.start_guide);
    // Unrecorded samples are still needed for the frequency estimate.
    let n = (sc.t_end / sc.step).round() as usize;
    let all: Vec<f64> = (0..=n).map(|k| k as f64 * sc.step).collect();
    let states = all
        .iter()
        .map(|&t| propagate_single_excitation(wcfg, &c0, t))
        .collect::<Result<Vec<_>>>()?;
    let picks: Vec<usize> = (0..all.len()).step_by(sc.record_every).collect();
    out.times = picks.iter().map(|&i| all[i]).collect();
    out.columns = sc
        .outputs
        .iter()
        .map(|o| {
            picks
                .iter()
                .map(|&i| match *o {
                    Observable::Guide(w) => states[i].0[w].norm_sqr(),
                    _ => states[i].norm().powi(2),
                })
                .collect()
        })
        .collect();
    out.put("start_guide", sc.start_guide + 1);
    let poles: Vec<String> = characteristic_poles(wcfg)
        .iter()
        .map(|p| format!("{:+.12e}i", p.im))
        .collect();
    out.put("poles", poles.join(" "));
    out.put("no_photon_criterion", no_photon_criterion(&sc.system));
    for w in 0..wcfg.n_waveguides() {
        let series: Vec<f64> = states.iter().map(|s| s.0[w].norm_sqr()).collect();
        if let Some(f) = dominant_frequency(&series, sc.step) {
            out.put(format!("dominant_frequency.guide_{}", w + 1), format!("{f:.9e}"));
        }
    }
    Ok(())
}
