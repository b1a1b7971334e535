use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::SystemConfig;

/// Uniform frequency grid standing in for the waveguide continuum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeGrid {
    center: f64,
    half_width: f64,
    n_modes: usize,
}

impl ModeGrid {
    pub fn new(center: f64, half_width: f64, n_modes: usize) -> Result<Self> {
        if n_modes < 2 {
            return Err(Error::InvalidConfig("mode grid needs at least 2 modes".into()));
        }
        if !(half_width > 0.0) || !half_width.is_finite() || !center.is_finite() {
            return Err(Error::InvalidConfig("mode grid half-width must be positive".into()));
        }
        Ok(ModeGrid {
            center,
            half_width,
            n_modes,
        })
    }

    /// Default grid for `cfg` over `[0, t_end]`: half-width
    /// `max(40 kappa, 6 pi / tau)` and a spacing whose recurrence time is
    /// at least `2 t_end`.
    pub fn for_config(cfg: &SystemConfig, t_end: f64) -> Result<Self> {
        let half_width = (40.0 * cfg.kappa()).max(6.0 * PI / cfg.tau());
        Self::with_recurrence(cfg.delta0(), half_width, 2.0 * t_end)
    }

    /// Smallest grid of the given half-width whose recurrence time reaches
    /// `recurrence`.
    pub fn with_recurrence(center: f64, half_width: f64, recurrence: f64) -> Result<Self> {
        let spacing = 2.0 * PI / recurrence;
        let n_modes = (2.0 * half_width / spacing).ceil() as usize + 1;
        Self::new(center, half_width, n_modes.max(2))
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.n_modes - 1) as f64
    }

    pub fn frequency(&self, p: usize) -> f64 {
        self.center - self.half_width + p as f64 * self.spacing()
    }

    /// Offset `omega_p - Delta0`.
    pub fn detuning(&self, p: usize) -> f64 {
        self.frequency(p) - self.center
    }

    /// Riemann weight of one mode in the `d omega / (2 pi c)` measure.
    pub fn weight(&self, field_speed: f64) -> f64 {
        self.spacing() / (2.0 * PI * field_speed)
    }

    /// Time after which the discrete bath re-emits what it absorbed.
    pub fn recurrence_time(&self) -> f64 {
        2.0 * PI / self.spacing()
    }

    /// Whether the grid spans three periods of `sin(omega tau / 2)`.
    pub fn resolves_delay(&self, tau: f64) -> bool {
        self.half_width >= 6.0 * PI / tau * (1.0 - 1e-12)
    }

    pub fn check_recurrence(&self, t_end: f64) -> Result<()> {
        let recurrence = self.recurrence_time();
        if recurrence <= t_end {
            return Err(Error::Recurrence { recurrence, t_end });
        }
        Ok(())
    }
}
