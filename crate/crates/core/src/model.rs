//! Effective Hamiltonians of the Gaussian approximations to the biquadratically
//! coupled oscillator pair `H = ½p_A² + ½p_x² + ½(m² + e²A²)x²`.
//!
//! Three families share one separable canonical form in the width coordinates
//! `ρ_G = √G`, `ρ_D = √D`:
//!
//! ```text
//! H = ½p_A² + p_G²/(2ħN) + p_D²/(2ħ)
//!   + (ħ/8)(N/ρ_G² + 1/ρ_D²) + (ħN/2)[m² + e²(A² + ħρ_D²)]ρ_G²
//! ```
//!
//! with `N = 1` for Hartree, `N = n_replicas` for the replica family and the
//! whole `D` sector removed for the leading-order large-N model. The width view
//! `(G, Π_G, D, Π_D)` is related by `G = ρ_G²`, `p_G = 2ħNΠ_Gρ_G`,
//! `p_D = 2ħΠ_Dρ_D`. At `ħ = 1` the kinetic terms reduce to `½p²`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::integrators::{self, IntegratorSpec};

/// Trajectories whose widths drop below this value abort with a singularity.
pub const RHO_MIN: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub e: f64,
    pub m: f64,
    pub hbar: f64,
    /// Number of `x` replicas; only read by [`ModelKind::ReplicaFamily`].
    pub n_replicas: u32,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            e: 1.0,
            m: 1.0,
            hbar: 1.0,
            n_replicas: 1,
        }
    }
}

impl ModelParams {
    pub fn new(e: f64, m: f64, hbar: f64, n_replicas: u32) -> Result<Self> {
        let p = Self {
            e,
            m,
            hbar,
            n_replicas,
        };
        p.validate()?;
        Ok(p)
    }

    /// Unit mass and `ħ`, single replica.
    pub fn with_coupling(e: f64) -> Self {
        Self {
            e,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.e.is_finite() && self.m.is_finite() && self.hbar.is_finite()) {
            return Err(Error::Domain("model parameters must be finite".into()));
        }
        if self.m <= 0.0 {
            return Err(Error::Domain(format!("mass must be positive, got {}", self.m)));
        }
        if self.hbar <= 0.0 {
            return Err(Error::Domain(format!("hbar must be positive, got {}", self.hbar)));
        }
        if self.e < 0.0 {
            return Err(Error::Domain(format!("coupling must be non-negative, got {}", self.e)));
        }
        if self.n_replicas < 1 {
            return Err(Error::Domain("n_replicas must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    LargeN,
    Hartree,
    /// `N` copies of the `x` oscillator, `N` taken from [`ModelParams::n_replicas`].
    ReplicaFamily,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::LargeN => "large_n",
            ModelKind::Hartree => "hartree",
            ModelKind::ReplicaFamily => "replica",
        }
    }

    pub fn has_d_sector(self) -> bool {
        !matches!(self, ModelKind::LargeN)
    }

    /// Canonical degrees of freedom: 2 for large-N, 3 otherwise.
    pub fn dof(self) -> usize {
        if self.has_d_sector() {
            3
        } else {
            2
        }
    }

    pub fn dim(self) -> usize {
        2 * self.dof()
    }

    /// Replica weight of the `G` sector.
    pub fn replicas(self, params: &ModelParams) -> f64 {
        match self {
            ModelKind::ReplicaFamily => params.n_replicas as f64,
            _ => 1.0,
        }
    }
}

/// A canonical width pair `(ρ, p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WidthPair {
    pub rho: f64,
    pub p: f64,
}

/// Phase-space point of a mean-field flow in canonical coordinates.
///
/// Coordinates are ordered positions first, `[A, ρ_G, (ρ_D), p_A, p_G, (p_D)]`,
/// so the symplectic matrix is the standard `[[0, I], [-I, 0]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldState {
    kind: ModelKind,
    q: [f64; 3],
    p: [f64; 3],
}

impl MeanFieldState {
    pub fn large_n(a: f64, p_a: f64, rho_g: f64, p_g: f64) -> Result<Self> {
        Self::checked(ModelKind::LargeN, [a, rho_g, 0.0], [p_a, p_g, 0.0])
    }

    pub fn hartree(a: f64, p_a: f64, rho_g: f64, p_g: f64, rho_d: f64, p_d: f64) -> Result<Self> {
        Self::checked(ModelKind::Hartree, [a, rho_g, rho_d], [p_a, p_g, p_d])
    }

    pub fn replica_family(
        a: f64,
        p_a: f64,
        rho_g: f64,
        p_g: f64,
        rho_d: f64,
        p_d: f64,
    ) -> Result<Self> {
        Self::checked(ModelKind::ReplicaFamily, [a, rho_g, rho_d], [p_a, p_g, p_d])
    }

    fn checked(kind: ModelKind, q: [f64; 3], p: [f64; 3]) -> Result<Self> {
        let s = Self { kind, q, p };
        s.validate()?;
        Ok(s)
    }

    /// Builds a state from canonical coordinates in the order of [`Self::coords`].
    pub fn from_coords(kind: ModelKind, coords: &[f64]) -> Result<Self> {
        let dof = kind.dof();
        if coords.len() != 2 * dof {
            return Err(Error::Domain(format!(
                "{} state needs {} coordinates, got {}",
                kind.name(),
                2 * dof,
                coords.len()
            )));
        }
        let mut q = [0.0; 3];
        let mut p = [0.0; 3];
        q[..dof].copy_from_slice(&coords[..dof]);
        p[..dof].copy_from_slice(&coords[dof..]);
        Self::checked(kind, q, p)
    }

    pub(crate) fn from_raw(kind: ModelKind, q: [f64; 3], p: [f64; 3]) -> Self {
        Self { kind, q, p }
    }

    pub fn validate(&self) -> Result<()> {
        let dof = self.kind.dof();
        if self.q[..dof]
            .iter()
            .chain(&self.p[..dof])
            .any(|v| !v.is_finite())
        {
            return Err(Error::Domain(format!("non-finite state {:?}", self.coords())));
        }
        if self.q[1] <= 0.0 {
            return Err(Error::Domain(format!("rho_G must be positive, got {}", self.q[1])));
        }
        if self.kind.has_d_sector() && self.q[2] <= 0.0 {
            return Err(Error::Domain(format!("rho_D must be positive, got {}", self.q[2])));
        }
        Ok(())
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn a(&self) -> f64 {
        self.q[0]
    }

    pub fn p_a(&self) -> f64 {
        self.p[0]
    }

    pub fn rho_g(&self) -> f64 {
        self.q[1]
    }

    pub fn p_g(&self) -> f64 {
        self.p[1]
    }

    pub fn d(&self) -> Option<WidthPair> {
        self.kind.has_d_sector().then(|| WidthPair {
            rho: self.q[2],
            p: self.p[2],
        })
    }

    pub(crate) fn positions(&self) -> &[f64; 3] {
        &self.q
    }

    pub(crate) fn momenta(&self) -> &[f64; 3] {
        &self.p
    }

    pub(crate) fn positions_mut(&mut self) -> &mut [f64; 3] {
        &mut self.q
    }

    pub(crate) fn momenta_mut(&mut self) -> &mut [f64; 3] {
        &mut self.p
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    pub fn coords(&self) -> Vec<f64> {
        let dof = self.kind.dof();
        self.q[..dof].iter().chain(&self.p[..dof]).copied().collect()
    }

    /// Euclidean distance in canonical coordinates.
    pub fn distance(&self, other: &Self) -> f64 {
        self.coords()
            .iter()
            .zip(other.coords())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn g(&self) -> f64 {
        self.q[1] * self.q[1]
    }
}

/// The separable canonical Hamiltonian `T(p) + V(q)` of one model.
#[derive(Debug, Clone, Copy)]
pub struct SeparableHamiltonian {
    kind: ModelKind,
    hbar: f64,
    m2: f64,
    e2: f64,
    replicas: f64,
}

impl SeparableHamiltonian {
    pub fn new(kind: ModelKind, params: &ModelParams) -> Self {
        Self {
            kind,
            hbar: params.hbar,
            m2: params.m * params.m,
            e2: params.e * params.e,
            replicas: kind.replicas(params),
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    /// Diagonal of the inverse kinetic mass matrix.
    pub fn inverse_mass(&self) -> [f64; 3] {
        let d = if self.kind.has_d_sector() {
            1.0 / self.hbar
        } else {
            0.0
        };
        [1.0, 1.0 / (self.hbar * self.replicas), d]
    }

    pub fn kinetic(&self, p: &[f64; 3]) -> f64 {
        let w = self.inverse_mass();
        0.5 * (w[0] * p[0] * p[0] + w[1] * p[1] * p[1] + w[2] * p[2] * p[2])
    }

    /// `m² + e²(A² + ħρ_D²)`: squared frequency of the `x` modes.
    fn x_frequency2(&self, q: &[f64; 3]) -> f64 {
        let fluct = if self.kind.has_d_sector() {
            self.hbar * q[2] * q[2]
        } else {
            0.0
        };
        self.m2 + self.e2 * (q[0] * q[0] + fluct)
    }

    pub fn potential(&self, q: &[f64; 3]) -> f64 {
        let (h, n) = (self.hbar, self.replicas);
        let rg2 = q[1] * q[1];
        let mut barrier = n / rg2;
        if self.kind.has_d_sector() {
            barrier += 1.0 / (q[2] * q[2]);
        }
        0.125 * h * barrier + 0.5 * h * n * self.x_frequency2(q) * rg2
    }

    pub fn energy(&self, q: &[f64; 3], p: &[f64; 3]) -> f64 {
        self.kinetic(p) + self.potential(q)
    }

    /// `-∂V/∂q`.
    pub fn force(&self, q: &[f64; 3]) -> [f64; 3] {
        let (h, n, e2) = (self.hbar, self.replicas, self.e2);
        let (a, rg) = (q[0], q[1]);
        let rg2 = rg * rg;
        let fa = -h * n * e2 * a * rg2;
        let fg = h * n / (4.0 * rg2 * rg) - h * n * self.x_frequency2(q) * rg;
        let fd = if self.kind.has_d_sector() {
            let rd = q[2];
            h / (4.0 * rd * rd * rd) - h * h * n * e2 * rd * rg2
        } else {
            0.0
        };
        [fa, fg, fd]
    }

    /// Hessian `∂²V/∂q_i∂q_j` (zero rows/columns for absent sectors).
    pub fn potential_hessian(&self, q: &[f64; 3]) -> [[f64; 3]; 3] {
        let (h, n, e2) = (self.hbar, self.replicas, self.e2);
        let (a, rg) = (q[0], q[1]);
        let rg2 = rg * rg;
        let mut hess = [[0.0; 3]; 3];
        hess[0][0] = h * n * e2 * rg2;
        hess[0][1] = 2.0 * h * n * e2 * a * rg;
        hess[1][0] = hess[0][1];
        hess[1][1] = 0.75 * h * n / (rg2 * rg2) + h * n * self.x_frequency2(q);
        if self.kind.has_d_sector() {
            let rd = q[2];
            hess[1][2] = 2.0 * h * h * n * e2 * rd * rg;
            hess[2][1] = hess[1][2];
            hess[2][2] = 0.75 * h / (rd * rd * rd * rd) + h * h * n * e2 * rg2;
        }
        hess
    }

    /// Width guard shared by every stepper.
    pub fn check_widths(&self, q: &[f64; 3]) -> Result<()> {
        if !(q[1] > RHO_MIN) {
            return Err(Error::Singularity {
                coordinate: "rho_G",
                value: q[1],
                guard: RHO_MIN,
            });
        }
        if self.kind.has_d_sector() && !(q[2] > RHO_MIN) {
            return Err(Error::Singularity {
                coordinate: "rho_D",
                value: q[2],
                guard: RHO_MIN,
            });
        }
        Ok(())
    }
}

fn expect_kind(s: &MeanFieldState, kind: ModelKind) -> Result<()> {
    if s.kind != kind {
        return Err(Error::ModelMismatch {
            expected: kind.name(),
            found: s.kind.name(),
        });
    }
    Ok(())
}

fn finite_energy(s: &MeanFieldState, params: &ModelParams, kind: ModelKind) -> Result<f64> {
    params.validate()?;
    s.validate()?;
    let value = SeparableHamiltonian::new(kind, params).energy(&s.q, &s.p);
    if !value.is_finite() {
        return Err(Error::Domain(format!("energy is not finite at {:?}", s.coords())));
    }
    Ok(value)
}

/// Leading-order large-N effective energy.
pub fn energy_large_n(s: &MeanFieldState, params: &ModelParams) -> Result<f64> {
    expect_kind(s, ModelKind::LargeN)?;
    finite_energy(s, params, ModelKind::LargeN)
}

/// Hartree effective energy, the `N = 1` member of the replica family.
pub fn energy_hartree(s: &MeanFieldState, params: &ModelParams) -> Result<f64> {
    expect_kind(s, ModelKind::Hartree)?;
    finite_energy(s, params, ModelKind::Hartree)
}

/// Replica-family energy with `N = params.n_replicas`. Accepts Hartree states,
/// which are then read as members of the family.
pub fn energy_replica_family(s: &MeanFieldState, params: &ModelParams) -> Result<f64> {
    if !s.kind.has_d_sector() {
        return Err(Error::ModelMismatch {
            expected: "replica",
            found: s.kind.name(),
        });
    }
    finite_energy(s, params, ModelKind::ReplicaFamily)
}

/// Energy of a state under its own model.
pub fn energy(s: &MeanFieldState, params: &ModelParams) -> Result<f64> {
    match s.kind {
        ModelKind::LargeN => energy_large_n(s, params),
        ModelKind::Hartree => energy_hartree(s, params),
        ModelKind::ReplicaFamily => energy_replica_family(s, params),
    }
}

/// Time derivative of every canonical coordinate, ordered as [`MeanFieldState::coords`].
pub fn eom(s: &MeanFieldState, params: &ModelParams) -> Result<Vec<f64>> {
    let ham = SeparableHamiltonian::new(s.kind, params);
    ham.check_widths(&s.q)?;
    let dof = s.kind.dof();
    let w = ham.inverse_mass();
    let f = ham.force(&s.q);
    let mut out = Vec::with_capacity(2 * dof);
    out.extend((0..dof).map(|i| w[i] * s.p[i]));
    out.extend_from_slice(&f[..dof]);
    Ok(out)
}

/// Analytic Jacobian `∂ẏ_i/∂y_j` of [`eom`].
pub fn eom_jacobian(s: &MeanFieldState, params: &ModelParams) -> Result<DMatrix<f64>> {
    let ham = SeparableHamiltonian::new(s.kind, params);
    ham.check_widths(&s.q)?;
    let dof = s.kind.dof();
    let w = ham.inverse_mass();
    let hess = ham.potential_hessian(&s.q);
    let mut jac = DMatrix::zeros(2 * dof, 2 * dof);
    for i in 0..dof {
        jac[(i, dof + i)] = w[i];
        for j in 0..dof {
            jac[(dof + i, j)] = -hess[i][j];
        }
    }
    Ok(jac)
}

/// `(G, Π)` view of a mean-field state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WidthView {
    pub kind: ModelKind,
    pub a: f64,
    pub p_a: f64,
    pub g: f64,
    pub pi_g: f64,
    /// `(D, Π_D)`; absent for large-N.
    pub d: Option<(f64, f64)>,
}

impl WidthView {
    /// Effective energy written in the width variables.
    pub fn energy(&self, params: &ModelParams) -> f64 {
        let h = params.hbar;
        let n = self.kind.replicas(params);
        let (kin_d, bar_d, fl_d) = match self.d {
            Some((d, pi_d)) => (pi_d * pi_d * d, 1.0 / d, h * d),
            None => (0.0, 0.0, 0.0),
        };
        0.5 * self.p_a * self.p_a
            + 2.0 * h * (n * self.pi_g * self.pi_g * self.g + kin_d)
            + 0.125 * h * (n / self.g + bar_d)
            + 0.5 * h * n * (params.m * params.m + params.e * params.e * (self.a * self.a + fl_d)) * self.g
    }
}

pub fn to_width_view(s: &MeanFieldState, params: &ModelParams) -> Result<WidthView> {
    s.validate()?;
    let h = params.hbar;
    let n = s.kind.replicas(params);
    let rg = s.q[1];
    Ok(WidthView {
        kind: s.kind,
        a: s.q[0],
        p_a: s.p[0],
        g: rg * rg,
        pi_g: s.p[1] / (2.0 * h * n * rg),
        d: s.d().map(|w| (w.rho * w.rho, w.p / (2.0 * h * w.rho))),
    })
}

pub fn from_width_view(w: &WidthView, params: &ModelParams) -> Result<MeanFieldState> {
    if !(w.g > 0.0) {
        return Err(Error::Domain(format!("G must be positive, got {}", w.g)));
    }
    let h = params.hbar;
    let n = w.kind.replicas(params);
    let rg = w.g.sqrt();
    let mut q = [w.a, rg, 0.0];
    let mut p = [w.p_a, 2.0 * h * n * w.pi_g * rg, 0.0];
    match (w.kind.has_d_sector(), w.d) {
        (true, Some((d, pi_d))) => {
            if !(d > 0.0) {
                return Err(Error::Domain(format!("D must be positive, got {d}")));
            }
            let rd = d.sqrt();
            q[2] = rd;
            p[2] = 2.0 * h * pi_d * rd;
        }
        (false, None) => {}
        (true, None) => return Err(Error::Domain("width view lacks the D sector".into())),
        (false, Some(_)) => return Err(Error::Domain("large-N has no D sector".into())),
    }
    MeanFieldState::checked(w.kind, q, p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Positive,
    Negative,
}

impl Branch {
    fn sign(self) -> f64 {
        match self {
            Branch::Positive => 1.0,
            Branch::Negative => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IcScheme {
    /// Minimum-uncertainty widths, `Π = 0`, energy placed in `A(0)`.
    MinimumUncertainty,
    Explicit(MeanFieldState),
}

/// How an `(e, E)` pair is turned into a full initial state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialConditionConvention {
    pub scheme: IcScheme,
    pub g0: f64,
    pub d0: f64,
    pub pa0: f64,
    pub branch: Branch,
}

impl Default for InitialConditionConvention {
    fn default() -> Self {
        Self {
            scheme: IcScheme::MinimumUncertainty,
            g0: 0.5,
            d0: 0.5,
            pa0: 0.0,
            branch: Branch::Positive,
        }
    }
}

impl InitialConditionConvention {
    pub fn validate(&self) -> Result<()> {
        if !(self.g0 > 0.0 && self.g0.is_finite()) {
            return Err(Error::Domain(format!("G0 must be positive, got {}", self.g0)));
        }
        if !(self.d0 > 0.0 && self.d0.is_finite()) {
            return Err(Error::Domain(format!("D0 must be positive, got {}", self.d0)));
        }
        if !self.pa0.is_finite() {
            return Err(Error::Domain("pA0 must be finite".into()));
        }
        Ok(())
    }

    /// Replaces `D0` by the `A`-width that minimises the energy at `A = 0` for the
    /// configured `G0`, i.e. `D0 = 1/(2e√(ħG0))`. Unchanged when `e = 0`.
    pub fn with_relaxed_d0(mut self, params: &ModelParams) -> Self {
        if params.e > 0.0 {
            self.d0 = 1.0 / (2.0 * params.e * (params.hbar * self.g0).sqrt());
        }
        self
    }

    fn base_state(&self, kind: ModelKind, a: f64, p_a: f64) -> MeanFieldState {
        let q = [a, self.g0.sqrt(), if kind.has_d_sector() { self.d0.sqrt() } else { 0.0 }];
        MeanFieldState::from_raw(kind, q, [p_a, 0.0, 0.0])
    }

    /// Energy at `A = 0` with momentum `pA0` and zero width phases.
    pub fn minimum_energy(&self, kind: ModelKind, params: &ModelParams) -> Result<f64> {
        self.validate()?;
        energy(&self.base_state(kind, 0.0, self.pa0), params)
    }
}

/// Coefficient `c` in `E(A) = E(0) + c·A²` at fixed widths.
fn amplitude_stiffness(kind: ModelKind, conv: &InitialConditionConvention, params: &ModelParams) -> f64 {
    0.5 * params.hbar * kind.replicas(params) * params.e * params.e * conv.g0
}

/// Initial state with energy `energy` under the given convention.
pub fn initial_condition_from_energy(
    energy_target: f64,
    conv: &InitialConditionConvention,
    params: &ModelParams,
    kind: ModelKind,
) -> Result<MeanFieldState> {
    params.validate()?;
    if let IcScheme::Explicit(s) = conv.scheme {
        if s.kind != kind {
            return Err(Error::ModelMismatch {
                expected: kind.name(),
                found: s.kind.name(),
            });
        }
        s.validate()?;
        return Ok(s);
    }
    let minimum = conv.minimum_energy(kind, params)?;
    let budget = surplus(energy_target, minimum)?;
    let a = if budget == 0.0 {
        0.0
    } else {
        let c = amplitude_stiffness(kind, conv, params);
        if c == 0.0 {
            return Err(Error::NoFiniteAmplitude {
                energy: energy_target,
                minimum,
            });
        }
        conv.branch.sign() * (budget / c).sqrt()
    };
    let s = conv.base_state(kind, a, conv.pa0);
    s.validate()?;
    Ok(s)
}

fn surplus(energy_target: f64, minimum: f64) -> Result<f64> {
    if !energy_target.is_finite() {
        return Err(Error::Domain("energy must be finite".into()));
    }
    let budget = energy_target - minimum;
    // Tolerate round-off when E is the minimum itself.
    if budget < -1e-12 * minimum.abs().max(1.0) {
        return Err(Error::InfeasibleEnergy {
            energy: energy_target,
            minimum,
        });
    }
    Ok(budget.max(0.0))
}

/// Member of the fixed-energy family used for initial-condition sampling: the
/// energy above the `A = p_A = 0` minimum is split as `cos²θ` into `A` and
/// `sin²θ` into `p_A`. Widths follow the convention, `Π = 0`, `pA0` is ignored.
pub fn energy_shell_state(
    energy_target: f64,
    theta: f64,
    conv: &InitialConditionConvention,
    params: &ModelParams,
    kind: ModelKind,
) -> Result<MeanFieldState> {
    params.validate()?;
    let conv = InitialConditionConvention {
        pa0: 0.0,
        scheme: IcScheme::MinimumUncertainty,
        ..*conv
    };
    let minimum = conv.minimum_energy(kind, params)?;
    let budget = surplus(energy_target, minimum)?;
    let (sin, cos) = theta.sin_cos();
    let a_budget = budget * cos * cos;
    let a = if a_budget <= 0.0 {
        0.0
    } else {
        let c = amplitude_stiffness(kind, &conv, params);
        if c == 0.0 {
            return Err(Error::NoFiniteAmplitude {
                energy: energy_target,
                minimum,
            });
        }
        conv.branch.sign() * (a_budget / c).sqrt()
    };
    let p_a = (2.0 * budget).sqrt() * sin;
    let s = conv.base_state(kind, a, p_a);
    s.validate()?;
    Ok(s)
}

/// Deviation of one rescaled replica-family run from the large-N run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitDeviation {
    pub n: u32,
    /// `sup_t |Ã_N(t) − A_∞(t)|` with `Ã = A/√N`.
    pub a: f64,
    /// `sup_t |G_N(t) − G_∞(t)|`.
    pub g: f64,
}

impl LimitDeviation {
    pub fn combined(&self) -> f64 {
        self.a.max(self.g)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitReport {
    pub energy: f64,
    pub e: f64,
    pub horizon: f64,
    pub deviations: Vec<LimitDeviation>,
}

impl LimitReport {
    /// Deviations strictly decrease with `N`.
    pub fn is_monotone(&self) -> bool {
        self.deviations
            .windows(2)
            .all(|w| w[1].combined() < w[0].combined())
    }
}

/// Maps a large-N state with coupling `ẽ` into the replica family with `N`
/// replicas: `A = √N Ã`, `p_A = √N p̃_A`, `e = ẽ/√N`, `p_G → N p_G`, and the
/// `D` sector started at rest with width `d0`.
pub fn rescale_into_replicas(
    s: &MeanFieldState,
    params: &ModelParams,
    n: u32,
    d0: f64,
) -> Result<(MeanFieldState, ModelParams)> {
    expect_kind(s, ModelKind::LargeN)?;
    if n < 1 {
        return Err(Error::Domain("replica count must be at least 1".into()));
    }
    if !(d0 > 0.0) {
        return Err(Error::Domain(format!("D0 must be positive, got {d0}")));
    }
    let nf = n as f64;
    let root = nf.sqrt();
    let replica_params = ModelParams {
        e: params.e / root,
        n_replicas: n,
        ..*params
    };
    let q = [s.q[0] * root, s.q[1], d0.sqrt()];
    let p = [s.p[0] * root, s.p[1] * nf, 0.0];
    Ok((MeanFieldState::checked(ModelKind::ReplicaFamily, q, p)?, replica_params))
}

/// Integrates the rescaled replica family for each `N` next to the large-N model
/// started from the default convention at `(e, E)`, reporting sup-norm
/// deviations of `(Ã, G)`.
pub fn large_n_limit_check(
    n_list: &[u32],
    energy_target: f64,
    e: f64,
    horizon: f64,
    spec: &IntegratorSpec,
) -> Result<LimitReport> {
    if n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("replica counts must be strictly increasing".into()));
    }
    let params = ModelParams::with_coupling(e);
    let conv = InitialConditionConvention::default();
    let spec = IntegratorSpec {
        t_max: horizon,
        ..*spec
    };
    let s0 = initial_condition_from_energy(energy_target, &conv, &params, ModelKind::LargeN)?;
    let reference = integrators::integrate(&s0, &params, &spec)?.into_result()?;
    let mut deviations = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let (r0, rp) = rescale_into_replicas(&s0, &params, n, conv.d0)?;
        let run = integrators::integrate(&r0, &rp, &spec)?.into_result()?;
        let root = (n as f64).sqrt();
        let mut dev = LimitDeviation { n, a: 0.0, g: 0.0 };
        for (x, y) in run.states.iter().zip(&reference.states) {
            dev.a = dev.a.max((x.a() / root - y.a()).abs());
            dev.g = dev.g.max((x.g() - y.g()).abs());
        }
        deviations.push(dev);
    }
    Ok(LimitReport {
        energy: energy_target,
        e,
        horizon,
        deviations,
    })
}
