//! Chaos diagnostics for the mean-field flows: the maximal Lyapunov exponent from
//! tangent-space evolution, a two-trajectory estimate of the same quantity,
//! finite-offset divergence series and Poincaré surfaces of section.

use crate::error::{Error, Result};
use crate::integrators::{self, Abort, IntegratorSpec, Scheme, Trajectory};
use crate::model::{
    self, energy_shell_state, InitialConditionConvention, MeanFieldState, ModelKind, ModelParams,
    SeparableHamiltonian,
};

pub const DEFAULT_RENORM_INTERVAL: f64 = 0.5;
pub const DEFAULT_LAMBDA_THRESHOLD: f64 = 0.05;
/// Initial separation for the renormalised two-trajectory estimator.
pub const TWIN_SEPARATION: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovEstimate {
    pub times: Vec<f64>,
    pub running_lambda: Vec<f64>,
    pub final_lambda: f64,
    pub renorm_interval: f64,
    pub dt: f64,
    /// Set when a width singularity cut the run short.
    pub truncated: Option<Abort>,
}

fn steps_per_renorm(spec: &IntegratorSpec, renorm_interval: f64) -> Result<usize> {
    spec.validate()?;
    let k = (renorm_interval / spec.dt).round();
    if k < 1.0 || (k * spec.dt - renorm_interval).abs() > 1e-9 * renorm_interval {
        return Err(Error::Domain(format!(
            "renorm interval {renorm_interval} is not a multiple of dt = {}",
            spec.dt
        )));
    }
    Ok(k as usize)
}

/// Unit vector with equal components in every canonical direction.
fn initial_direction(dof: usize) -> ([f64; 3], [f64; 3]) {
    let c = 1.0 / ((2 * dof) as f64).sqrt();
    let mut dq = [0.0; 3];
    let mut dp = [0.0; 3];
    dq[..dof].fill(c);
    dp[..dof].fill(c);
    (dq, dp)
}

fn norm(dq: &[f64; 3], dp: &[f64; 3]) -> f64 {
    dq.iter().chain(dp).map(|v| v * v).sum::<f64>().sqrt()
}

struct Accumulator {
    times: Vec<f64>,
    running: Vec<f64>,
    log_sum: f64,
}

impl Accumulator {
    fn new(capacity: usize) -> Self {
        Self {
            times: Vec::with_capacity(capacity),
            running: Vec::with_capacity(capacity),
            log_sum: 0.0,
        }
    }

    fn push(&mut self, t: f64, stretch: f64) {
        self.log_sum += stretch.ln();
        self.times.push(t);
        self.running.push(self.log_sum / t);
    }

    fn finish(self, renorm_interval: f64, dt: f64, truncated: Option<Abort>) -> LyapunovEstimate {
        LyapunovEstimate {
            final_lambda: self.running.last().copied().unwrap_or(0.0),
            times: self.times,
            running_lambda: self.running,
            renorm_interval,
            dt,
            truncated,
        }
    }
}

fn as_abort(err: Error, t: f64) -> Result<Abort> {
    match err {
        Error::Singularity {
            coordinate, value, ..
        } => Ok(Abort {
            t,
            coordinate,
            value,
        }),
        other => Err(other),
    }
}

/// Maximal Lyapunov exponent by Benettin's method: a tangent vector is carried
/// along by the linearised symplectic step and renormalised every
/// `renorm_interval`, accumulating the logarithmic stretch.
pub fn max_lyapunov(
    s0: &MeanFieldState,
    params: &ModelParams,
    spec: &IntegratorSpec,
    renorm_interval: f64,
) -> Result<LyapunovEstimate> {
    if spec.scheme != Scheme::Composition4 {
        return Err(Error::Domain(format!(
            "tangent evolution needs the composition4 scheme, got {}",
            spec.scheme.name()
        )));
    }
    let per_block = steps_per_renorm(spec, renorm_interval)?;
    params.validate()?;
    s0.validate()?;
    let ham = SeparableHamiltonian::new(s0.kind(), params);
    let (mut q, mut p) = (*s0.positions(), *s0.momenta());
    let (mut dq, mut dp) = initial_direction(s0.kind().dof());
    let n_blocks = spec.n_steps() / per_block;
    let mut acc = Accumulator::new(n_blocks);
    let mut truncated = None;
    'outer: for block in 1..=n_blocks {
        for _ in 0..per_block {
            if let Err(e) = integrators::composition4_tangent_in_place(&ham, &mut q, &mut p, &mut dq, &mut dp, spec.dt) {
                truncated = Some(as_abort(e, acc.times.last().copied().unwrap_or(0.0))?);
                break 'outer;
            }
        }
        let n = norm(&dq, &dp);
        dq.iter_mut().chain(dp.iter_mut()).for_each(|v| *v /= n);
        acc.push(block as f64 * renorm_interval, n);
    }
    Ok(acc.finish(renorm_interval, spec.dt, truncated))
}

/// Two-trajectory estimate of the maximal exponent: a companion orbit is kept
/// at distance `separation` by rescaling the difference vector every
/// `renorm_interval`. Independent of the tangent map.
pub fn two_trajectory_lyapunov(
    s0: &MeanFieldState,
    params: &ModelParams,
    spec: &IntegratorSpec,
    renorm_interval: f64,
    separation: f64,
) -> Result<LyapunovEstimate> {
    let per_block = steps_per_renorm(spec, renorm_interval)?;
    if !(separation > 0.0) {
        return Err(Error::Domain("separation must be positive".into()));
    }
    let dof = s0.kind().dof();
    let (dq, dp) = initial_direction(dof);
    let base = s0.coords();
    let shifted: Vec<f64> = base
        .iter()
        .enumerate()
        .map(|(i, v)| v + separation * if i < dof { dq[i] } else { dp[i - dof] })
        .collect();
    let mut a = *s0;
    let mut b = MeanFieldState::from_coords(s0.kind(), &shifted)?;
    let n_blocks = spec.n_steps() / per_block;
    let mut acc = Accumulator::new(n_blocks);
    let mut truncated = None;
    'outer: for block in 1..=n_blocks {
        for _ in 0..per_block {
            let next = integrators::step(spec.scheme, &a, params, spec.dt)
                .and_then(|na| Ok((na, integrators::step(spec.scheme, &b, params, spec.dt)?)));
            match next {
                Ok((na, nb)) => {
                    a = na;
                    b = nb;
                }
                Err(e) => {
                    truncated = Some(as_abort(e, acc.times.last().copied().unwrap_or(0.0))?);
                    break 'outer;
                }
            }
        }
        let ya = a.coords();
        let yb = b.coords();
        let d = a.distance(&b);
        let rescaled: Vec<f64> = ya
            .iter()
            .zip(&yb)
            .map(|(x, y)| x + (y - x) * separation / d)
            .collect();
        b = MeanFieldState::from_coords(s0.kind(), &rescaled)?;
        acc.push(block as f64 * renorm_interval, d / separation);
    }
    Ok(acc.finish(renorm_interval, spec.dt, truncated))
}

/// Canonical coordinate names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Coordinate {
    A,
    PA,
    RhoG,
    PG,
    RhoD,
    PD,
}

impl Coordinate {
    /// Index into [`MeanFieldState::coords`].
    pub fn index(self, kind: ModelKind) -> Result<usize> {
        let dof = kind.dof();
        let idx = match self {
            Coordinate::A => 0,
            Coordinate::RhoG => 1,
            Coordinate::RhoD if dof == 3 => 2,
            Coordinate::PA => dof,
            Coordinate::PG => dof + 1,
            Coordinate::PD if dof == 3 => dof + 2,
            _ => {
                return Err(Error::ModelMismatch {
                    expected: "a model with a D sector",
                    found: kind.name(),
                })
            }
        };
        Ok(idx)
    }

    pub fn name(self) -> &'static str {
        match self {
            Coordinate::A => "A",
            Coordinate::PA => "pA",
            Coordinate::RhoG => "rho_G",
            Coordinate::PG => "p_G",
            Coordinate::RhoD => "rho_D",
            Coordinate::PD => "p_D",
        }
    }
}

/// Which quantity receives the initial perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OffsetComponent {
    Canonical(Coordinate),
    /// The variance `G = ρ_G²`.
    G,
    /// The variance `D = ρ_D²`.
    D,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialOffset {
    pub component: OffsetComponent,
    pub size: f64,
    /// Canonical distance between the two initial states.
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceSeries {
    pub times: Vec<f64>,
    pub separations: Vec<f64>,
    pub initial_offset: InitialOffset,
    pub reference: Trajectory,
    pub perturbed: Trajectory,
}

impl DivergenceSeries {
    /// First sample time at which the separation reaches `level`.
    pub fn crossing_time(&self, level: f64) -> Option<f64> {
        self.times
            .iter()
            .zip(&self.separations)
            .find(|(_, s)| **s >= level)
            .map(|(t, _)| *t)
    }

    /// Least-squares slope of `ln separation` over the first stretch where the
    /// separation climbs from `lower` to `upper`.
    pub fn growth_rate(&self, lower: f64, upper: f64) -> Option<f64> {
        let start = self.separations.iter().position(|s| *s >= lower)?;
        let end = start + self.separations[start..].iter().position(|s| *s >= upper)?;
        if end < start + 2 {
            return None;
        }
        let xs = &self.times[start..=end];
        let ys: Vec<f64> = self.separations[start..=end].iter().map(|s| s.ln()).collect();
        Some(linear_slope(xs, &ys))
    }
}

pub(crate) fn linear_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Applies an offset of `size` to `component` of `s`.
pub fn perturb(
    s: &MeanFieldState,
    component: OffsetComponent,
    size: f64,
) -> Result<MeanFieldState> {
    let mut y = s.coords();
    match component {
        OffsetComponent::Canonical(c) => y[c.index(s.kind())?] += size,
        OffsetComponent::G => {
            let i = Coordinate::RhoG.index(s.kind())?;
            y[i] = (y[i] * y[i] + size).sqrt();
        }
        OffsetComponent::D => {
            let i = Coordinate::RhoD.index(s.kind())?;
            y[i] = (y[i] * y[i] + size).sqrt();
        }
    }
    MeanFieldState::from_coords(s.kind(), &y)
}

/// Integrates `s0` and a copy offset in one component with identical steppers
/// and records their canonical separation at each sample.
pub fn two_trajectory_divergence(
    s0: &MeanFieldState,
    params: &ModelParams,
    spec: &IntegratorSpec,
    component: OffsetComponent,
    size: f64,
) -> Result<DivergenceSeries> {
    let s1 = perturb(s0, component, size)?;
    let reference = integrators::integrate(s0, params, spec)?;
    let perturbed = integrators::integrate(&s1, params, spec)?;
    let n = reference.len().min(perturbed.len());
    let times = reference.times[..n].to_vec();
    let separations = (0..n)
        .map(|k| reference.states[k].distance(&perturbed.states[k]))
        .collect::<Vec<_>>();
    Ok(DivergenceSeries {
        initial_offset: InitialOffset {
            component,
            size,
            magnitude: s0.distance(&s1),
        },
        times,
        separations,
        reference,
        perturbed,
    })
}

/// Section planes in the width view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SectionPlane {
    /// `(A, Ȧ = p_A)`.
    APa,
    /// `(G, Π_G)`.
    GPiG,
    /// `(D, Π_D)`.
    DPiD,
}

impl SectionPlane {
    pub fn name(self) -> &'static str {
        match self {
            SectionPlane::APa => "A_pA",
            SectionPlane::GPiG => "G_PiG",
            SectionPlane::DPiD => "D_PiD",
        }
    }

    /// Default crossing surface: `p_G = 0` falling for the `A` plane, `A = 0`
    /// rising for the width planes.
    pub fn default_surface(self) -> Surface {
        match self {
            SectionPlane::APa => Surface {
                coordinate: Coordinate::PG,
                level: 0.0,
                direction: Direction::Falling,
            },
            SectionPlane::GPiG | SectionPlane::DPiD => Surface {
                coordinate: Coordinate::A,
                level: 0.0,
                direction: Direction::Rising,
            },
        }
    }

    fn coordinates(self) -> [Coordinate; 2] {
        match self {
            SectionPlane::APa => [Coordinate::A, Coordinate::PA],
            SectionPlane::GPiG => [Coordinate::RhoG, Coordinate::PG],
            SectionPlane::DPiD => [Coordinate::RhoD, Coordinate::PD],
        }
    }

    fn project(self, s: &MeanFieldState, params: &ModelParams) -> Result<(f64, f64)> {
        let w = model::to_width_view(s, params)?;
        Ok(match self {
            SectionPlane::APa => (w.a, w.p_a),
            SectionPlane::GPiG => (w.g, w.pi_g),
            SectionPlane::DPiD => w.d.ok_or(Error::ModelMismatch {
                expected: "a model with a D sector",
                found: s.kind().name(),
            })?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Rising,
    Falling,
    Both,
}

impl Direction {
    fn accepts(self, rate: f64) -> bool {
        match self {
            Direction::Rising => rate > 0.0,
            Direction::Falling => rate < 0.0,
            Direction::Both => rate != 0.0,
        }
    }
}

/// Crossing condition `coordinate = level` traversed in `direction`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Surface {
    pub coordinate: Coordinate,
    pub level: f64,
    pub direction: Direction,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectionPoint {
    pub traj_id: usize,
    pub t: f64,
    pub u: f64,
    pub v: f64,
    /// Surface function at the refined crossing.
    pub residual: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoincareSection {
    pub plane: SectionPlane,
    pub surface: Surface,
    pub points: Vec<SectionPoint>,
    pub n_trajectories: usize,
}

impl PoincareSection {
    pub fn points_of(&self, traj_id: usize) -> impl Iterator<Item = &SectionPoint> {
        self.points.iter().filter(move |p| p.traj_id == traj_id)
    }
}

/// Root of the cubic Hermite interpolant on `[0, h]` with end values `f0, f1`
/// and slopes `d0, d1`, assuming `f0` and `f1` bracket zero.
fn hermite_root(f0: f64, f1: f64, d0: f64, d1: f64, h: f64) -> f64 {
    let eval = |tau: f64| {
        let s = tau / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        h00 * f0 + h10 * h * d0 + h01 * f1 + h11 * h * d1
    };
    let (mut lo, mut hi) = (0.0, h);
    let mut flo = f0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let fm = eval(mid);
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Extracts surface-of-section points from sampled trajectories.
///
/// Each sign change of the surface function between samples is located on the
/// cubic Hermite interpolant built from the stored states and their
/// derivatives, then polished by Newton iteration on a single fourth-order
/// step from the preceding sample, so the emitted state lies on the flow and
/// on the surface.
pub fn poincare_section(
    trajectories: &[Trajectory],
    params: &ModelParams,
    plane: SectionPlane,
    surface: Surface,
) -> Result<PoincareSection> {
    let mut points = Vec::new();
    for (traj_id, traj) in trajectories.iter().enumerate() {
        let Some(first) = traj.states.first() else {
            continue;
        };
        let kind = first.kind();
        let idx = surface.coordinate.index(kind)?;
        for c in plane.coordinates() {
            if c == surface.coordinate {
                return Err(Error::Domain(format!(
                    "surface coordinate {} lies in the {} plane",
                    c.name(),
                    plane.name()
                )));
            }
            c.index(kind)?;
        }
        let f = |s: &MeanFieldState| s.coords()[idx] - surface.level;
        let rate = |s: &MeanFieldState| -> Result<f64> { Ok(model::eom(s, params)?[idx]) };
        for k in 0..traj.len().saturating_sub(1) {
            let (a, b) = (&traj.states[k], &traj.states[k + 1]);
            let (fa, fb) = (f(a), f(b));
            let crosses = (fa < 0.0 && fb >= 0.0) || (fa > 0.0 && fb <= 0.0);
            if !crosses {
                continue;
            }
            let h = traj.times[k + 1] - traj.times[k];
            let (ra, rb) = (rate(a)?, rate(b)?);
            let mut tau = hermite_root(fa, fb, ra, rb, h);
            let mut s = integrators::step_composition4(a, params, tau)?;
            for _ in 0..8 {
                let r = f(&s);
                if r.abs() < 1e-13 {
                    break;
                }
                tau -= r / rate(&s)?;
                s = integrators::step_composition4(a, params, tau)?;
            }
            if !surface.direction.accepts(rate(&s)?) {
                continue;
            }
            let (u, v) = plane.project(&s, params)?;
            points.push(SectionPoint {
                traj_id,
                t: traj.times[k] + tau,
                u,
                v,
                residual: f(&s),
                energy: model::energy(&s, params)?,
            });
        }
    }
    Ok(PoincareSection {
        plane,
        surface,
        points,
        n_trajectories: trajectories.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regularity {
    Regular,
    /// Some but not all sampled orbits exceed the threshold.
    Mixed,
    /// Every sampled orbit exceeds the threshold.
    Chaotic,
}

impl Regularity {
    /// At least one chaotic orbit, the rule used for integrability maps.
    pub fn is_chaotic(self) -> bool {
        !matches!(self, Regularity::Regular)
    }

    pub fn name(self) -> &'static str {
        match self {
            Regularity::Regular => "regular",
            Regularity::Mixed => "mixed",
            Regularity::Chaotic => "chaotic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub regularity: Regularity,
    pub lambdas: Vec<f64>,
    pub threshold: f64,
}

impl Classification {
    pub fn n_chaotic(&self) -> usize {
        self.lambdas.iter().filter(|l| **l > self.threshold).count()
    }

    pub fn max_lambda(&self) -> f64 {
        self.lambdas.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Angles of the fixed-energy initial-condition family: `θ_k = (π/2)·k/n`.
pub fn shell_angles(n_ic: usize) -> Vec<f64> {
    (0..n_ic)
        .map(|k| std::f64::consts::FRAC_PI_2 * k as f64 / n_ic as f64)
        .collect()
}

/// The fixed-energy initial-condition family used by [`classify_regularity`].
pub fn shell_family(
    kind: ModelKind,
    energy: f64,
    params: &ModelParams,
    conv: &InitialConditionConvention,
    n_ic: usize,
) -> Result<Vec<MeanFieldState>> {
    shell_angles(n_ic)
        .into_iter()
        .map(|theta| energy_shell_state(energy, theta, conv, params, kind))
        .collect()
}

/// Classifies `(e, E)` for one model from the final exponents of `n_ic` orbits
/// drawn from the fixed-energy family.
pub fn classify_regularity(
    kind: ModelKind,
    energy: f64,
    params: &ModelParams,
    conv: &InitialConditionConvention,
    n_ic: usize,
    spec: &IntegratorSpec,
    lambda_threshold: f64,
) -> Result<Classification> {
    if n_ic == 0 {
        return Err(Error::Domain("need at least one initial condition".into()));
    }
    let lambdas = shell_family(kind, energy, params, conv, n_ic)?
        .iter()
        .map(|s| max_lyapunov(s, params, spec, DEFAULT_RENORM_INTERVAL).map(|est| est.final_lambda))
        .collect::<Result<Vec<_>>>()?;
    Ok(classification_from(lambdas, lambda_threshold))
}

pub fn classification_from(lambdas: Vec<f64>, threshold: f64) -> Classification {
    let n = lambdas.iter().filter(|l| **l > threshold).count();
    let regularity = if n == 0 {
        Regularity::Regular
    } else if n == lambdas.len() {
        Regularity::Chaotic
    } else {
        Regularity::Mixed
    };
    Classification {
        regularity,
        lambdas,
        threshold,
    }
}
