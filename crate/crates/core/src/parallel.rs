//! Single-excitation dynamics of a coupled waveguide array and the
//! no-photon condition for the array.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::{build_gw_matrix, is_trapping_phase, SystemConfig, WaveguideArrayConfig, C64};

/// One-photon amplitudes `c_w` across the array for a fixed mode.
#[derive(Clone, Debug, PartialEq)]
pub struct ArrayAmplitudes(pub DVector<C64>);

impl ArrayAmplitudes {
    /// All amplitude in waveguide `w`.
    pub fn localized(n_waveguides: usize, w: usize) -> Self {
        let mut v = DVector::zeros(n_waveguides);
        v[w] = C64::new(1.0, 0.0);
        ArrayAmplitudes(v)
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn populations(&self) -> Vec<f64> {
        self.0.iter().map(|c| c.norm_sqr()).collect()
    }
}

/// `exp(i G_W t) c0` through the eigen-decomposition of `G_W`.
pub fn propagate_single_excitation(
    wcfg: &WaveguideArrayConfig,
    c0: &ArrayAmplitudes,
    t: f64,
) -> Result<ArrayAmplitudes> {
    if c0.0.len() != wcfg.n_waveguides() {
        return Err(Error::InvalidConfig(format!(
            "amplitudes have length {}, array has {} waveguides",
            c0.0.len(),
            wcfg.n_waveguides()
        )));
    }
    if c0.norm() == 0.0 {
        return Err(Error::InvalidConfig("initial amplitudes must be nonzero".into()));
    }
    let eig = build_gw_matrix(wcfg).symmetric_eigen();
    let v = eig.eigenvectors.map(|x| C64::new(x, 0.0));
    let phases = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| C64::from_polar(1.0, l * t)),
    );
    let coeffs = v.adjoint() * &c0.0;
    Ok(ArrayAmplitudes(v * coeffs.component_mul(&phases)))
}

/// Roots of `|s I - i G_W|`: `i` times the eigenvalues of `G_W`, ascending.
pub fn characteristic_poles(wcfg: &WaveguideArrayConfig) -> Vec<C64> {
    let mut eig: Vec<f64> = build_gw_matrix(wcfg).symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    eig.into_iter().map(|l| C64::new(0.0, l)).collect()
}

/// `Delta0 tau = 2 n pi` and every detuning zero: no photon leaves the cavity.
pub fn no_photon_criterion(cfg: &SystemConfig) -> bool {
    is_trapping_phase(cfg.delay_phase()) && cfg.delta().iter().all(|d| d.abs() < 1e-12)
}

/// Angular frequency of the largest discrete Fourier peak of a uniformly
/// sampled real signal, mean removed.
///
/// The peak is located on the DFT bin grid and then refined by golden
/// section search on the continuous transform between its neighbours.
pub fn dominant_frequency(samples: &[f64], dt: f64) -> Option<f64> {
    let n = samples.len();
    if n < 4 || !(dt > 0.0) {
        return None;
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = samples.iter().map(|x| x - mean).collect();
    let power = |w: f64| -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        for (k, x) in centred.iter().enumerate() {
            let (s, c) = (w * k as f64 * dt).sin_cos();
            re += x * c;
            im -= x * s;
        }
        re * re + im * im
    };
    let span = n as f64 * dt;
    let bin = 2.0 * std::f64::consts::PI / span;
    let best = (1..n / 2).max_by(|&a, &b| power(a as f64 * bin).total_cmp(&power(b as f64 * bin)))?;
    if power(best as f64 * bin) == 0.0 {
        return None;
    }
    let (mut lo, mut hi) = ((best as f64 - 1.0) * bin, (best as f64 + 1.0) * bin);
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let a = hi - ratio * (hi - lo);
        let b = lo + ratio * (hi - lo);
        if power(a) > power(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    Some(0.5 * (lo + hi))
}
