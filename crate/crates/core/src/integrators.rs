//! Fixed-step integrators for the canonical mean-field flows.
//!
//! The canonical Hamiltonians are separable, so the workhorse is kick-drift-kick
//! leapfrog composed into a symmetric fourth-order scheme. Suzuki's five-stage
//! composition is the default; the three-stage triple jump is kept as well. Its
//! error constant is roughly ten times larger at the same step. A classical
//! RK4 is kept for flows that are not separable, such as those produced by the
//! generic variational engine.

use crate::error::{Error, Result};
use crate::model::{self, MeanFieldState, ModelParams, SeparableHamiltonian};

/// Triple-jump weight `w = 1/(2 − 2^{1/3})`; the middle substep is `1 − 2w`.
pub fn triple_jump_weights() -> (f64, f64) {
    let w = 1.0 / (2.0 - 2f64.cbrt());
    (w, 1.0 - 2.0 * w)
}

/// Suzuki's five-stage weights `(q, q, 1 − 4q, q, q)` with `q = 1/(4 − 4^{1/3})`.
pub fn suzuki_weights() -> [f64; 5] {
    let q = 1.0 / (4.0 - 4f64.cbrt());
    [q, q, 1.0 - 4.0 * q, q, q]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Leapfrog2,
    /// Five-stage Suzuki composition of leapfrog.
    Composition4,
    /// Three-stage triple-jump composition of leapfrog.
    TripleJump4,
    Rk4Generic,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Leapfrog2 => "leapfrog2",
            Scheme::Composition4 => "composition4",
            Scheme::TripleJump4 => "triple_jump4",
            Scheme::Rk4Generic => "rk4",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorSpec {
    pub scheme: Scheme,
    pub dt: f64,
    pub t_max: f64,
    pub sample_every: usize,
}

impl IntegratorSpec {
    pub fn new(scheme: Scheme, dt: f64, t_max: f64, sample_every: usize) -> Result<Self> {
        let s = Self {
            scheme,
            dt,
            t_max,
            sample_every,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn composition4(dt: f64, t_max: f64) -> Self {
        Self {
            scheme: Scheme::Composition4,
            dt,
            t_max,
            sample_every: 1,
        }
    }

    pub fn leapfrog(dt: f64, t_max: f64) -> Self {
        Self {
            scheme: Scheme::Leapfrog2,
            dt,
            t_max,
            sample_every: 1,
        }
    }

    pub fn sampled(self, sample_every: usize) -> Self {
        Self {
            sample_every,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Domain(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_max >= self.dt && self.t_max.is_finite()) {
            return Err(Error::Domain(format!(
                "t_max = {} must be at least dt = {}",
                self.t_max, self.dt
            )));
        }
        if self.sample_every == 0 {
            return Err(Error::Domain("sample_every must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of steps needed to reach `t_max`.
    pub fn n_steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }
}

pub(crate) fn leapfrog_in_place(
    ham: &SeparableHamiltonian,
    q: &mut [f64; 3],
    p: &mut [f64; 3],
    h: f64,
) -> Result<()> {
    let w = ham.inverse_mass();
    let f = ham.force(q);
    for i in 0..3 {
        p[i] += 0.5 * h * f[i];
    }
    for i in 0..3 {
        q[i] += h * w[i] * p[i];
    }
    ham.check_widths(q)?;
    let f = ham.force(q);
    for i in 0..3 {
        p[i] += 0.5 * h * f[i];
    }
    Ok(())
}

pub(crate) fn composition4_in_place(
    ham: &SeparableHamiltonian,
    q: &mut [f64; 3],
    p: &mut [f64; 3],
    h: f64,
) -> Result<()> {
    for w in suzuki_weights() {
        leapfrog_in_place(ham, q, p, w * h)?;
    }
    Ok(())
}

fn triple_jump_in_place(ham: &SeparableHamiltonian, q: &mut [f64; 3], p: &mut [f64; 3], h: f64) -> Result<()> {
    let (w, mid) = triple_jump_weights();
    leapfrog_in_place(ham, q, p, w * h)?;
    leapfrog_in_place(ham, q, p, mid * h)?;
    leapfrog_in_place(ham, q, p, w * h)
}

fn apply(
    s: &MeanFieldState,
    params: &ModelParams,
    dt: f64,
    stepper: fn(&SeparableHamiltonian, &mut [f64; 3], &mut [f64; 3], f64) -> Result<()>,
) -> Result<MeanFieldState> {
    let ham = SeparableHamiltonian::new(s.kind(), params);
    ham.check_widths(s.positions())?;
    let mut out = *s;
    let (mut q, mut p) = (*out.positions(), *out.momenta());
    stepper(&ham, &mut q, &mut p, dt)?;
    *out.positions_mut() = q;
    *out.momenta_mut() = p;
    Ok(out)
}

/// One kick-drift-kick step (potential half-kick first).
pub fn step_leapfrog(s: &MeanFieldState, params: &ModelParams, dt: f64) -> Result<MeanFieldState> {
    apply(s, params, dt, leapfrog_in_place)
}

/// One fourth-order step built from five leapfrog substeps, see [`suzuki_weights`].
pub fn step_composition4(s: &MeanFieldState, params: &ModelParams, dt: f64) -> Result<MeanFieldState> {
    apply(s, params, dt, composition4_in_place)
}

/// One fourth-order step: leapfrog substeps of `w·dt`, `(1 − 2w)·dt`, `w·dt`.
pub fn step_triple_jump(s: &MeanFieldState, params: &ModelParams, dt: f64) -> Result<MeanFieldState> {
    apply(s, params, dt, triple_jump_in_place)
}

/// Leapfrog substep advancing a tangent vector `(δq, δp)` with the linearised map.
fn leapfrog_tangent_in_place(
    ham: &SeparableHamiltonian,
    q: &mut [f64; 3],
    p: &mut [f64; 3],
    dq: &mut [f64; 3],
    dp: &mut [f64; 3],
    h: f64,
) -> Result<()> {
    let w = ham.inverse_mass();
    kick_tangent(ham, q, p, dq, dp, 0.5 * h);
    for i in 0..3 {
        q[i] += h * w[i] * p[i];
        dq[i] += h * w[i] * dp[i];
    }
    ham.check_widths(q)?;
    kick_tangent(ham, q, p, dq, dp, 0.5 * h);
    Ok(())
}

fn kick_tangent(
    ham: &SeparableHamiltonian,
    q: &[f64; 3],
    p: &mut [f64; 3],
    dq: &[f64; 3],
    dp: &mut [f64; 3],
    h: f64,
) {
    let f = ham.force(q);
    let hess = ham.potential_hessian(q);
    for i in 0..3 {
        p[i] += h * f[i];
        dp[i] -= h * (hess[i][0] * dq[0] + hess[i][1] * dq[1] + hess[i][2] * dq[2]);
    }
}

/// Fourth-order step of the state together with its exact discrete tangent map.
pub(crate) fn composition4_tangent_in_place(
    ham: &SeparableHamiltonian,
    q: &mut [f64; 3],
    p: &mut [f64; 3],
    dq: &mut [f64; 3],
    dp: &mut [f64; 3],
    h: f64,
) -> Result<()> {
    for w in suzuki_weights() {
        leapfrog_tangent_in_place(ham, q, p, dq, dp, w * h)?;
    }
    Ok(())
}

/// Classical fourth-order Runge–Kutta step for an arbitrary flow `ẏ = f(y)`.
/// Not symplectic; energy drift is whatever the scheme produces.
pub fn step_rk4_generic<F>(flow: F, y: &[f64], dt: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let n = y.len();
    let stage = |k: &[f64], c: f64| -> Vec<f64> { (0..n).map(|i| y[i] + c * k[i]).collect() };
    let k1 = flow(y)?;
    let k2 = flow(&stage(&k1, 0.5 * dt))?;
    let k3 = flow(&stage(&k2, 0.5 * dt))?;
    let k4 = flow(&stage(&k3, dt))?;
    for k in [&k1, &k2, &k3, &k4] {
        if k.len() != n {
            return Err(Error::Domain(format!(
                "flow returned {} components for a {n}-dimensional point",
                k.len()
            )));
        }
    }
    Ok((0..n)
        .map(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

fn step_rk4_state(s: &MeanFieldState, params: &ModelParams, dt: f64) -> Result<MeanFieldState> {
    let kind = s.kind();
    let next = step_rk4_generic(
        |y| {
            let st = MeanFieldState::from_coords(kind, y)?;
            model::eom(&st, params)
        },
        &s.coords(),
        dt,
    )?;
    let out = MeanFieldState::from_coords(kind, &next)?;
    SeparableHamiltonian::new(kind, params).check_widths(out.positions())?;
    Ok(out)
}

/// One step of the given scheme.
pub fn step(scheme: Scheme, s: &MeanFieldState, params: &ModelParams, dt: f64) -> Result<MeanFieldState> {
    match scheme {
        Scheme::Leapfrog2 => step_leapfrog(s, params, dt),
        Scheme::Composition4 => step_composition4(s, params, dt),
        Scheme::TripleJump4 => step_triple_jump(s, params, dt),
        Scheme::Rk4Generic => step_rk4_state(s, params, dt),
    }
}

/// Where and why an integration stopped early.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Abort {
    /// Time of the last successfully completed step.
    pub t: f64,
    pub coordinate: &'static str,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<MeanFieldState>,
    pub energies: Vec<f64>,
    pub aborted: Option<Abort>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&MeanFieldState> {
        self.states.last()
    }

    /// Largest `|E(t) − E(0)|` over the samples.
    pub fn max_energy_drift(&self) -> f64 {
        let e0 = self.energies.first().copied().unwrap_or(0.0);
        self.energies
            .iter()
            .map(|e| (e - e0).abs())
            .fold(0.0, f64::max)
    }

    /// Turns an aborted trajectory into its singularity error.
    pub fn into_result(self) -> Result<Self> {
        match self.aborted {
            Some(a) => Err(Error::Singularity {
                coordinate: a.coordinate,
                value: a.value,
                guard: model::RHO_MIN,
            }),
            None => Ok(self),
        }
    }
}

/// Fixed-step march from `s0`, sampling every `spec.sample_every` steps.
///
/// A width-guard violation ends the march and returns the samples collected so
/// far with [`Trajectory::aborted`] set.
pub fn integrate(s0: &MeanFieldState, params: &ModelParams, spec: &IntegratorSpec) -> Result<Trajectory> {
    spec.validate()?;
    params.validate()?;
    s0.validate()?;
    let n_steps = spec.n_steps();
    let capacity = n_steps / spec.sample_every + 1;
    let mut traj = Trajectory {
        times: Vec::with_capacity(capacity),
        states: Vec::with_capacity(capacity),
        energies: Vec::with_capacity(capacity),
        aborted: None,
    };
    let mut s = *s0;
    traj.times.push(0.0);
    traj.states.push(s);
    traj.energies.push(model::energy(&s, params)?);
    for k in 1..=n_steps {
        match step(spec.scheme, &s, params, spec.dt) {
            Ok(next) => s = next,
            Err(Error::Singularity {
                coordinate, value, ..
            }) => {
                traj.aborted = Some(Abort {
                    t: (k - 1) as f64 * spec.dt,
                    coordinate,
                    value,
                });
                break;
            }
            Err(e) => return Err(e),
        }
        if k % spec.sample_every == 0 {
            traj.times.push(k as f64 * spec.dt);
            traj.states.push(s);
            traj.energies.push(model::energy(&s, params)?);
        }
    }
    Ok(traj)
}
