//! Run configuration: one JSON document, every field defaulted.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use semiquantum::chaos::{SectionPlane, DEFAULT_LAMBDA_THRESHOLD, DEFAULT_RENORM_INTERVAL};
use semiquantum::integrators::{IntegratorSpec, Scheme};
use semiquantum::model::{
    from_width_view, Branch, IcScheme, InitialConditionConvention, MeanFieldState, ModelKind, ModelParams,
    WidthView,
};
use semiquantum::schrodinger::{GaussianInitParams, Grid2D, EDGE_MASS_LIMIT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    LargeN,
    Hartree,
    Replica,
    Exact,
    All,
}

impl ModelChoice {
    /// Mean-field models this choice expands to.
    pub fn mean_field_kinds(self) -> Vec<ModelKind> {
        match self {
            ModelChoice::LargeN => vec![ModelKind::LargeN],
            ModelChoice::Hartree => vec![ModelKind::Hartree],
            ModelChoice::Replica => vec![ModelKind::ReplicaFamily],
            ModelChoice::Exact => vec![],
            ModelChoice::All => vec![ModelKind::LargeN, ModelKind::Hartree],
        }
    }

    pub fn includes_exact(self) -> bool {
        matches!(self, ModelChoice::Exact | ModelChoice::All)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsConfig {
    pub e: f64,
    pub m: f64,
    pub hbar: f64,
    pub n_replicas: u32,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        Self {
            e: 1.0,
            m: 1.0,
            hbar: 1.0,
            n_replicas: 1,
        }
    }
}

/// Initial data in the width view. `D` and `Pi_D` are ignored by large N.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct ExplicitState {
    pub A: f64,
    pub pA: f64,
    pub G: f64,
    pub Pi_G: f64,
    #[serde(default = "half")]
    pub D: f64,
    #[serde(default)]
    pub Pi_D: f64,
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchChoice {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConventionConfig {
    pub g0: f64,
    pub d0: f64,
    pub pa0: f64,
    pub branch: BranchChoice,
    /// For models with an `A` width: when `(g0, d0)` cannot reach the energy,
    /// retry with the `D0` that minimises the `A = 0` energy.
    pub relax_d0_if_infeasible: bool,
}

impl Default for ConventionConfig {
    fn default() -> Self {
        Self {
            g0: 0.5,
            d0: 0.5,
            pa0: 0.0,
            branch: BranchChoice::Positive,
            relax_d0_if_infeasible: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeChoice {
    Leapfrog2,
    Composition4,
    TripleJump4,
    Rk4,
}

impl From<SchemeChoice> for Scheme {
    fn from(s: SchemeChoice) -> Self {
        match s {
            SchemeChoice::Leapfrog2 => Scheme::Leapfrog2,
            SchemeChoice::Composition4 => Scheme::Composition4,
            SchemeChoice::TripleJump4 => Scheme::TripleJump4,
            SchemeChoice::Rk4 => Scheme::Rk4Generic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub scheme: SchemeChoice,
    pub dt: f64,
    /// Output every this many steps.
    pub sample_every: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            scheme: SchemeChoice::Composition4,
            dt: 1e-3,
            sample_every: 10,
        }
    }
}

/// Time horizons per command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HorizonConfig {
    pub simulate: f64,
    pub lyapunov: f64,
    pub poincare: f64,
    pub compare: f64,
    pub sensitivity: f64,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        Self {
            simulate: 100.0,
            lyapunov: 1e3,
            poincare: 500.0,
            compare: 40.0,
            sensitivity: 40.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LyapunovConfig {
    pub renorm_interval: f64,
    pub threshold: f64,
    /// Also run the two-trajectory estimate and report it in the sidecar.
    pub twin_check: bool,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        Self {
            renorm_interval: DEFAULT_RENORM_INTERVAL,
            threshold: DEFAULT_LAMBDA_THRESHOLD,
            twin_check: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlaneChoice {
    #[serde(rename = "A_pA")]
    APa,
    #[serde(rename = "G_PiG")]
    GPiG,
    #[serde(rename = "D_PiD")]
    DPiD,
}

impl From<PlaneChoice> for SectionPlane {
    fn from(p: PlaneChoice) -> Self {
        match p {
            PlaneChoice::APa => SectionPlane::APa,
            PlaneChoice::GPiG => SectionPlane::GPiG,
            PlaneChoice::DPiD => SectionPlane::DPiD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoincareConfig {
    pub plane: PlaneChoice,
    pub n_traj: usize,
    pub dt: f64,
}

impl Default for PoincareConfig {
    fn default() -> Self {
        Self {
            plane: PlaneChoice::APa,
            n_traj: 256,
            dt: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub e_values: Vec<f64>,
    pub energy_values: Vec<f64>,
    pub n_ic: usize,
    pub dt: f64,
    pub t_max: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            e_values: (3..=15).map(|k| k as f64 / 10.0).collect(),
            energy_values: (1..=16).map(|k| k as f64 / 2.0).collect(),
            n_ic: 10,
            dt: 1e-2,
            t_max: 1e3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_a: usize,
    pub n_x: usize,
    pub l_a: f64,
    pub l_x: f64,
}

impl GridConfig {
    pub fn grid(&self) -> Result<Grid2D> {
        Ok(Grid2D::new(self.n_a, self.n_x, self.l_a, self.l_x)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExactConfig {
    /// Explicit grid; when absent the box is sized from a Hartree run.
    pub grid: Option<GridConfig>,
    pub edge_mass_limit: f64,
}

impl Default for ExactConfig {
    fn default() -> Self {
        Self {
            grid: None,
            edge_mass_limit: EDGE_MASS_LIMIT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub threshold: f64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self { threshold: 0.10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivityConfig {
    /// Added to the initial `G`.
    pub offset: f64,
    pub include_exact: bool,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self {
            offset: 1e-4,
            include_exact: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityConfig {
    pub times: Vec<f64>,
    /// Also save the final wave function as a binary checkpoint.
    pub checkpoint: bool,
}

impl Default for DensityConfig {
    fn default() -> Self {
        Self {
            times: vec![0.0, 40.0],
            checkpoint: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelChoice,
    pub params: ParamsConfig,
    /// Total energy; exactly one of this and `initial_state` is set.
    pub energy: Option<f64>,
    pub initial_state: Option<ExplicitState>,
    pub convention: ConventionConfig,
    pub integrator: IntegratorConfig,
    pub horizons: HorizonConfig,
    pub lyapunov: LyapunovConfig,
    pub poincare: PoincareConfig,
    pub scan: ScanConfig,
    pub exact: ExactConfig,
    pub compare: CompareConfig,
    pub sensitivity: SensitivityConfig,
    pub density: DensityConfig,
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelChoice::Hartree,
            params: ParamsConfig::default(),
            energy: Some(5.0),
            initial_state: None,
            convention: ConventionConfig::default(),
            integrator: IntegratorConfig::default(),
            horizons: HorizonConfig::default(),
            lyapunov: LyapunovConfig::default(),
            poincare: PoincareConfig::default(),
            scan: ScanConfig::default(),
            exact: ExactConfig::default(),
            compare: CompareConfig::default(),
            sensitivity: SensitivityConfig::default(),
            density: DensityConfig::default(),
            seed: 0,
            workers: 1,
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        match (self.energy, self.initial_state) {
            (Some(_), Some(_)) => bail!("set either `energy` or `initial_state`, not both"),
            (None, None) => bail!("one of `energy` or `initial_state` is required"),
            _ => {}
        }
        ensure!(self.workers >= 1, "workers must be at least 1");
        ensure!(self.integrator.sample_every >= 1, "sample_every must be at least 1");
        self.model_params()?;
        Ok(())
    }

    pub fn model_params(&self) -> Result<ModelParams> {
        let p = &self.params;
        Ok(ModelParams::new(p.e, p.m, p.hbar, p.n_replicas)?)
    }

    pub fn params_for(&self, kind: ModelKind) -> Result<ModelParams> {
        let mut p = self.model_params()?;
        if kind != ModelKind::ReplicaFamily {
            p.n_replicas = 1;
        }
        Ok(p)
    }

    pub fn integrator_spec(&self, t_max: f64) -> Result<IntegratorSpec> {
        let i = &self.integrator;
        Ok(IntegratorSpec::new(i.scheme.into(), i.dt, t_max, i.sample_every)?)
    }

    pub fn ic_convention(&self) -> InitialConditionConvention {
        let c = &self.convention;
        InitialConditionConvention {
            scheme: IcScheme::MinimumUncertainty,
            g0: c.g0,
            d0: c.d0,
            pa0: c.pa0,
            branch: match c.branch {
                BranchChoice::Positive => Branch::Positive,
                BranchChoice::Negative => Branch::Negative,
            },
        }
    }

    /// Convention for `kind`, relaxed in `D0` when configured and needed.
    pub fn convention_for(&self, kind: ModelKind, params: &ModelParams, energy: f64) -> Result<InitialConditionConvention> {
        let conv = self.ic_convention();
        if self.convention.relax_d0_if_infeasible
            && kind.has_d_sector()
            && conv.minimum_energy(kind, params)? > energy
        {
            return Ok(conv.with_relaxed_d0(params));
        }
        Ok(conv)
    }

    /// Initial state of one mean-field model: the explicit state when given,
    /// otherwise solved from the energy under the convention.
    pub fn initial_state(&self, kind: ModelKind) -> Result<MeanFieldState> {
        let params = self.params_for(kind)?;
        if let Some(x) = self.initial_state {
            let w = WidthView {
                kind,
                a: x.A,
                p_a: x.pA,
                g: x.G,
                pi_g: x.Pi_G,
                d: kind.has_d_sector().then_some((x.D, x.Pi_D)),
            };
            return Ok(from_width_view(&w, &params)?);
        }
        let energy = self.energy.context("no energy configured")?;
        let conv = self.convention_for(kind, &params, energy)?;
        Ok(semiquantum::model::initial_condition_from_energy(energy, &conv, &params, kind)?)
    }

    /// Product Gaussian for the exact solver, shared with the Hartree state.
    pub fn exact_init(&self) -> Result<GaussianInitParams> {
        let params = self.params_for(ModelKind::Hartree)?;
        let s = self.initial_state(ModelKind::Hartree)?;
        Ok(GaussianInitParams::from_state(&s, &params, self.convention.d0)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_json() {
        let cfg = RunConfig::default();
        let back: RunConfig = serde_json::from_str(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        cfg.validate().unwrap();
    }

    #[test]
    fn partial_documents_fill_in_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"params": {"e": 0.3}, "energy": 1.0}"#).unwrap();
        assert_eq!(cfg.params.e, 0.3);
        assert_eq!(cfg.params.m, 1.0);
        assert_eq!(cfg.integrator.dt, 1e-3);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"energi": 1.0}"#).is_err());
    }

    #[test]
    fn energy_and_state_are_exclusive() {
        let mut cfg = RunConfig::default();
        cfg.initial_state = Some(ExplicitState {
            A: 1.0,
            pA: 0.0,
            G: 0.5,
            Pi_G: 0.0,
            D: 0.5,
            Pi_D: 0.0,
        });
        assert!(cfg.validate().is_err());
        cfg.energy = None;
        cfg.validate().unwrap();
        let s = cfg.initial_state(ModelKind::Hartree).unwrap();
        assert_eq!(s.a(), 1.0);
        assert!((s.g() - 0.5).abs() < 1e-15);
        cfg.initial_state = None;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn relaxed_width_only_when_needed() {
        let mut cfg = RunConfig::default();
        cfg.params.e = 0.7;
        cfg.energy = Some(0.8);
        assert!(cfg.initial_state(ModelKind::Hartree).is_err());
        cfg.convention.relax_d0_if_infeasible = true;
        let s = cfg.initial_state(ModelKind::Hartree).unwrap();
        assert!(s.d().unwrap().rho.powi(2) > 0.5);
        cfg.energy = Some(5.0);
        cfg.params.e = 1.0;
        let s = cfg.initial_state(ModelKind::Hartree).unwrap();
        assert!((s.d().unwrap().rho.powi(2) - 0.5).abs() < 1e-15);
    }
}
