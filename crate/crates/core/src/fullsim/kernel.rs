use super::grid::ModeGrid;
use super::{simulate, SimOptions, DEFAULT_BUDGET};
use crate::error::Result;
use crate::model::{SystemConfig, WaveguideArrayConfig, C64};

/// Memory term of the one-photon cavity amplitude against its
/// local-plus-delayed form `-kappa [c(t) - e^{i Delta0 tau} c(t - tau)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelReport {
    /// Largest `|memory - local_delayed|` over the window.
    pub max_deviation: f64,
    /// `kappa * max |c|` over the window; zero when decoupled.
    pub scale: f64,
    /// `max_deviation / scale`, or zero when `scale` is zero.
    pub relative_deviation: f64,
    pub window: (f64, f64),
    pub grid_resolves_delay: bool,
    pub times: Vec<f64>,
    pub memory: Vec<C64>,
    pub local_delayed: Vec<C64>,
}

/// Runs `cfg` on `grid` and compares the discretized memory integral with
/// the delay form over `[2 tau, t_end]`, using `tau / steps_per_delay` steps.
pub fn delay_kernel_check_with(
    cfg: &SystemConfig,
    grid: &ModeGrid,
    t_end: f64,
    steps_per_delay: usize,
) -> Result<KernelReport> {
    let tau = cfg.tau();
    let h = tau / steps_per_delay as f64;
    let run = simulate(
        cfg,
        &WaveguideArrayConfig::single(),
        grid,
        t_end,
        &SimOptions::new(h).budget(DEFAULT_BUDGET),
    )?;
    let c: Vec<C64> = run.cavity.states.iter().map(|x| x[1]).collect();
    let times = run.times().to_vec();

    // I_p(t) = int_0^t e^{-i nu_p (t - u)} c(u) du, with c linear between
    // samples and the exponential integrated exactly.
    let sw2 = grid.weight(cfg.field_speed());
    let weights: Vec<(f64, f64)> = (0..grid.n_modes())
        .map(|p| {
            let s = (0.5 * grid.frequency(p) * tau).sin();
            (cfg.g0() * cfg.g0() * s * s * sw2, grid.detuning(p))
        })
        .collect();
    let steps: Vec<(C64, C64, C64)> = weights.iter().map(|&(_, nu)| product_weights(nu, h)).collect();
    let mut integral = vec![C64::new(0.0, 0.0); grid.n_modes()];
    let mut memory = vec![C64::new(0.0, 0.0)];
    for n in 0..c.len() - 1 {
        let mut total = C64::new(0.0, 0.0);
        for (p, acc) in integral.iter_mut().enumerate() {
            let (decay, w_old, w_new) = steps[p];
            *acc = *acc * decay + w_old * c[n] + w_new * c[n + 1];
            total -= *acc * weights[p].0;
        }
        memory.push(total);
    }

    let kappa = cfg.kappa();
    let phase = C64::from_polar(1.0, cfg.delay_phase());
    let start = 2 * steps_per_delay;
    let mut local_delayed = vec![C64::new(0.0, 0.0); c.len()];
    let mut max_deviation: f64 = 0.0;
    let mut max_c: f64 = 0.0;
    for n in steps_per_delay..c.len() {
        local_delayed[n] = -(c[n] - phase * c[n - steps_per_delay]) * kappa;
        if n >= start {
            max_deviation = max_deviation.max((memory[n] - local_delayed[n]).norm());
            max_c = max_c.max(c[n].norm());
        }
    }
    let scale = kappa * max_c;
    Ok(KernelReport {
        max_deviation,
        scale,
        relative_deviation: if scale > 0.0 { max_deviation / scale } else { 0.0 },
        window: (start as f64 * h, *times.last().unwrap_or(&0.0)),
        grid_resolves_delay: grid.resolves_delay(tau),
        times,
        memory,
        local_delayed,
    })
}

/// As [`delay_kernel_check_with`] with a step resolving the grid's band edge.
pub fn delay_kernel_check(cfg: &SystemConfig, grid: &ModeGrid, t_end: f64) -> Result<KernelReport> {
    let steps = ((2.0 * grid.half_width() * cfg.tau()).ceil() as usize).max(16);
    delay_kernel_check_with(cfg, grid, t_end, steps)
}

/// Over one step of length `h`: `e^{-i nu h}` and the weights of the left
/// and right samples in `int_0^h e^{-i nu (h - s)} c(s) ds` for linear `c`.
fn product_weights(nu: f64, h: f64) -> (C64, C64, C64) {
    let x = nu * h;
    let decay = C64::from_polar(1.0, -x);
    // With u = h - s: int_0^h e^{-i nu u} (1 - u/h) du and int_0^h e^{-i nu u} u/h du.
    let (first, moment) = if x.abs() < 1e-3 {
        // Series in z = -i x.
        let z = C64::new(0.0, -x);
        let first = h * (1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0);
        let moment = h * (0.5 + z / 3.0 + z * z / 8.0 + z * z * z / 30.0);
        (first, moment)
    } else {
        let a = C64::new(0.0, -nu);
        let first = (decay - 1.0) / a;
        let moment = (decay * (h / a - 1.0 / (a * a)) + 1.0 / (a * a)) / h;
        (first, moment)
    };
    // The right sample sits at u = 0, the left at u = h.
    let w_new = first - moment;
    let w_old = moment;
    (decay, w_old, w_new)
}
