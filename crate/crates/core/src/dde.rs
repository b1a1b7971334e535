//! Fixed-step RK4 integrators.
//!
//! Delay systems are stepped with `h = tau / m` so the delayed argument of
//! every full stage lands on a stored sample. Half-step stages take the
//! cubic Hermite value between the two straddling samples.

use nalgebra::{ComplexField, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{DelaySystem, RealDelaySystem, C64};

/// Any amplitude above this is treated as a blow-up.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// Scalar types the integrators run over.
pub trait Amplitude: ComplexField<RealField = f64> + Copy {}

impl Amplitude for f64 {}
impl Amplitude for C64 {}

/// `x' = A(t) x + B x(t - tau)`.
pub trait LinearDelaySystem {
    type Scalar: Amplitude;
    fn dim(&self) -> usize;
    fn tau(&self) -> f64;
    fn a_at(&self, t: f64) -> DMatrix<Self::Scalar>;
    fn b(&self) -> DMatrix<Self::Scalar>;
}

impl LinearDelaySystem for DelaySystem {
    type Scalar = C64;
    fn dim(&self) -> usize {
        DelaySystem::dim(self)
    }
    fn tau(&self) -> f64 {
        DelaySystem::tau(self)
    }
    fn a_at(&self, t: f64) -> DMatrix<C64> {
        DelaySystem::a_at(self, t)
    }
    fn b(&self) -> DMatrix<C64> {
        DelaySystem::b(self)
    }
}

impl LinearDelaySystem for RealDelaySystem {
    type Scalar = f64;
    fn dim(&self) -> usize {
        RealDelaySystem::dim(self)
    }
    fn tau(&self) -> f64 {
        RealDelaySystem::tau(self)
    }
    fn a_at(&self, t: f64) -> DMatrix<f64> {
        RealDelaySystem::a_at(self, t)
    }
    fn b(&self) -> DMatrix<f64> {
        RealDelaySystem::b(self)
    }
}

/// Time-invariant delay system with explicit matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstantDelaySystem<S: Amplitude> {
    pub a: DMatrix<S>,
    pub b: DMatrix<S>,
    pub tau: f64,
}

impl<S: Amplitude> LinearDelaySystem for ConstantDelaySystem<S> {
    type Scalar = S;
    fn dim(&self) -> usize {
        self.a.nrows()
    }
    fn tau(&self) -> f64 {
        self.tau
    }
    fn a_at(&self, _t: f64) -> DMatrix<S> {
        self.a.clone()
    }
    fn b(&self) -> DMatrix<S> {
        self.b.clone()
    }
}

/// Uniformly sampled states.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<S: Amplitude> {
    pub times: Vec<f64>,
    pub states: Vec<DVector<S>>,
}

impl<S: Amplitude> Trajectory<S> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn step(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            self.times[1] - self.times[0]
        }
    }

    /// `|x_i(t)|^2` per sample.
    pub fn populations(&self) -> Vec<Vec<f64>> {
        self.states
            .iter()
            .map(|x| x.iter().map(|v| v.modulus_squared()).collect())
            .collect()
    }

    /// Time series of one component.
    pub fn component(&self, i: usize) -> Vec<S> {
        self.states.iter().map(|x| x[i]).collect()
    }

    /// Euclidean norm per sample.
    pub fn norms(&self) -> Vec<f64> {
        self.states.iter().map(|x| x.norm()).collect()
    }

    pub fn last(&self) -> Option<&DVector<S>> {
        self.states.last()
    }
}

impl Trajectory<f64> {
    /// Reads interleaved `(re, im)` pairs back as complex amplitudes.
    pub fn to_complex(&self) -> Trajectory<C64> {
        Trajectory {
            times: self.times.clone(),
            states: self.states.iter().map(crate::model::unembed_vector).collect(),
        }
    }
}

fn check_finite<S: Amplitude>(t: f64, x: &[S]) -> Result<()> {
    let worst = x.iter().map(|v| v.modulus()).fold(0.0, f64::max);
    if !(worst <= DIVERGENCE_LIMIT) {
        return Err(Error::Divergence { t, magnitude: worst });
    }
    Ok(())
}

pub(crate) fn step_count(t_end: f64, h: f64) -> usize {
    (t_end / h - 1e-9).ceil().max(0.0) as usize
}

/// Integrates `sys` from `history` on `[-tau, 0]` up to `t_end` with
/// `h = tau / steps_per_delay`.
pub fn integrate_delay<D, H>(sys: &D, history: H, t_end: f64, steps_per_delay: usize) -> Result<Trajectory<D::Scalar>>
where
    D: LinearDelaySystem,
    H: Fn(f64) -> DVector<D::Scalar>,
{
    if !(t_end > 0.0) {
        return Err(Error::InvalidConfig("t_end must be positive".into()));
    }
    if steps_per_delay < 16 {
        return Err(Error::InvalidConfig("steps_per_delay must be at least 16".into()));
    }
    let m = steps_per_delay;
    let tau = sys.tau();
    let h = tau / m as f64;
    let half = D::Scalar::from_real(0.5 * h);
    let full = D::Scalar::from_real(h);
    let sixth = D::Scalar::from_real(h / 6.0);
    let two = D::Scalar::from_real(2.0);
    let eighth = D::Scalar::from_real(h / 8.0);
    let b = sys.b();

    // History samples at -tau + k h for k = 0..=m, with derivatives by
    // central differences.
    let eps = 1e-4 * h;
    let hist_val: Vec<DVector<D::Scalar>> = (0..=m).map(|k| history(-tau + k as f64 * h)).collect();
    let hist_der: Vec<DVector<D::Scalar>> = (0..=m)
        .map(|k| {
            let t = -tau + k as f64 * h;
            (history(t + eps) - history(t - eps)) * D::Scalar::from_real(0.5 / eps)
        })
        .collect();

    let n_steps = step_count(t_end, h);
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states: Vec<DVector<D::Scalar>> = Vec::with_capacity(n_steps + 1);
    let mut derivs: Vec<DVector<D::Scalar>> = Vec::with_capacity(n_steps + 1);
    let x0 = hist_val[m].clone();
    check_finite(0.0, x0.as_slice())?;
    times.push(0.0);
    states.push(x0);

    // Delayed sample for grid index n (time n h - tau).
    let delayed = |n: usize, states: &[DVector<D::Scalar>]| -> DVector<D::Scalar> {
        if n <= m {
            hist_val[n].clone()
        } else {
            states[n - m].clone()
        }
    };

    for n in 0..n_steps {
        let t = n as f64 * h;
        let x = states[n].clone();
        let a0 = sys.a_at(t);
        let amid = sys.a_at(t + 0.5 * h);
        let a1 = sys.a_at(t + h);

        let d0 = delayed(n, &states);
        let d1 = delayed(n + 1, &states);
        let k1 = &a0 * &x + &b * &d0;
        derivs.push(k1.clone());
        // Derivatives at the ends of the delayed interval.
        let (g0, g1) = if n < m {
            (hist_der[n].clone(), hist_der[n + 1].clone())
        } else {
            (derivs[n - m].clone(), derivs[n - m + 1].clone())
        };
        let dmid = (&d0 + &d1) * D::Scalar::from_real(0.5) + (g0 - g1) * eighth;

        let bmid = &b * &dmid;
        let k2 = &amid * (&x + &k1 * half) + &bmid;
        let k3 = &amid * (&x + &k2 * half) + &bmid;
        let k4 = &a1 * (&x + &k3 * full) + &b * &d1;
        let next = x + (k1 + (k2 + k3) * two + k4) * sixth;
        let t_next = (n + 1) as f64 * h;
        check_finite(t_next, next.as_slice())?;
        times.push(t_next);
        states.push(next);
    }
    Ok(Trajectory { times, states })
}

/// Integrates a delay system from its own constant history.
pub fn integrate_cavity(sys: &DelaySystem, t_end: f64, steps_per_delay: usize) -> Result<Trajectory<C64>> {
    let hist = sys.history().clone();
    integrate_delay(sys, move |_| hist.clone(), t_end, steps_per_delay)
}

/// Real-embedded counterpart of [`integrate_cavity`].
pub fn integrate_cavity_real(sys: &RealDelaySystem, t_end: f64, steps_per_delay: usize) -> Result<Trajectory<f64>> {
    let hist = sys.history();
    integrate_delay(sys, move |_| hist.clone(), t_end, steps_per_delay)
}

/// Linear right-hand side `out = L(t) x`.
pub trait Generator<S> {
    fn dim(&self) -> usize;
    fn apply(&self, t: f64, x: &[S], out: &mut [S]);
}

/// Adapts a matrix-valued function of time to [`Generator`].
pub struct MatrixGenerator<F> {
    dim: usize,
    f: F,
}

impl<F> MatrixGenerator<F> {
    pub fn new(dim: usize, f: F) -> Self {
        MatrixGenerator { dim, f }
    }
}

impl<S: Amplitude, F: Fn(f64) -> DMatrix<S>> Generator<S> for MatrixGenerator<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, t: f64, x: &[S], out: &mut [S]) {
        let m = (self.f)(t);
        let x = DVector::from_column_slice(x);
        out.copy_from_slice((m * x).as_slice());
    }
}

/// RK4 over flat slices. `observe` sees every sample, including `t = 0`,
/// and the final state is returned.
pub fn integrate_linear<S, G, O>(gen: &G, x0: Vec<S>, t_end: f64, h: f64, mut observe: O) -> Result<Vec<S>>
where
    S: Amplitude,
    G: Generator<S>,
    O: FnMut(f64, &[S]),
{
    if !(h > 0.0) {
        return Err(Error::InvalidConfig("step must be positive".into()));
    }
    if x0.len() != gen.dim() {
        return Err(Error::InvalidConfig(format!(
            "state has length {}, generator expects {}",
            x0.len(),
            gen.dim()
        )));
    }
    let n = x0.len();
    let mut x = x0;
    let mut k = vec![S::zero(); n];
    let mut acc = vec![S::zero(); n];
    let mut stage = vec![S::zero(); n];
    let half = S::from_real(0.5 * h);
    let full = S::from_real(h);
    let sixth = S::from_real(h / 6.0);
    let third = S::from_real(h / 3.0);

    check_finite(0.0, &x)?;
    observe(0.0, &x);
    for step in 0..step_count(t_end, h) {
        let t = step as f64 * h;
        gen.apply(t, &x, &mut k);
        for i in 0..n {
            acc[i] = k[i] * sixth;
            stage[i] = x[i] + k[i] * half;
        }
        gen.apply(t + 0.5 * h, &stage, &mut k);
        for i in 0..n {
            acc[i] += k[i] * third;
            stage[i] = x[i] + k[i] * half;
        }
        gen.apply(t + 0.5 * h, &stage, &mut k);
        for i in 0..n {
            acc[i] += k[i] * third;
            stage[i] = x[i] + k[i] * full;
        }
        gen.apply(t + h, &stage, &mut k);
        for i in 0..n {
            x[i] += acc[i] + k[i] * sixth;
        }
        let t_next = (step + 1) as f64 * h;
        check_finite(t_next, &x)?;
        observe(t_next, &x);
    }
    Ok(x)
}

/// RK4 trajectory of `x' = L(t) x` for a dense generator.
pub fn integrate_ode<S, F>(generator: F, x0: DVector<S>, t_end: f64, h: f64) -> Result<Trajectory<S>>
where
    S: Amplitude,
    F: Fn(f64) -> DMatrix<S>,
{
    let gen = MatrixGenerator::new(x0.len(), generator);
    let mut times = Vec::new();
    let mut states = Vec::new();
    integrate_linear(&gen, x0.as_slice().to_vec(), t_end, h, |t, x| {
        times.push(t);
        states.push(DVector::from_column_slice(x));
    })?;
    Ok(Trajectory { times, states })
}
