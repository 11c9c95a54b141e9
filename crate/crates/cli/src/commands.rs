//! One function per subcommand. Each writes its files under `cfg.out` and
//! returns what it wrote; the `run_*` functions behind them return the data
//! in memory.

use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use semiquantum::chaos::{
    self, max_lyapunov, poincare_section, two_trajectory_divergence, two_trajectory_lyapunov, Classification,
    OffsetComponent, SectionPlane, SectionPoint, TWIN_SEPARATION,
};
use semiquantum::integrators::{integrate, IntegratorSpec, Scheme, Trajectory};
use semiquantum::model::{energy_shell_state, to_width_view, ModelKind, ModelParams};
use semiquantum::schrodinger::{
    checkpoint_save, default_grid, evolve_with, gaussian_init, EvolveOptions, GaussianInitParams, Grid2D,
    ObservableRecord, ObservableSeries, WaveFunction2D,
};

use crate::breaks::{break_time, rms, BreakReport, BreakTime};
use crate::config::RunConfig;
use crate::csvio::{fmt_f64, read_table, CsvOut};
use crate::parallel::block_map;

/// Files written by a command and whether any run stopped early.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub partial: bool,
}

fn prepare_out(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    Ok(cfg.out.clone())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// `run_<command>.json` next to the outputs: the effective config and file list.
fn finish(cfg: &RunConfig, command: &str, mut outcome: Outcome) -> Result<Outcome> {
    let names: Vec<String> = outcome
        .files
        .iter()
        .map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default())
        .collect();
    // Worker count and output location do not affect results, so they stay
    // out of the record and outputs compare byte for byte across them.
    let mut config = serde_json::to_value(cfg)?;
    if let Some(map) = config.as_object_mut() {
        map.remove("workers");
        map.remove("out");
    }
    let path = cfg.out.join(format!("run_{command}.json"));
    write_json(
        &path,
        &json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "partial": outcome.partial,
            "files": names,
            "config": config,
        }),
    )?;
    outcome.files.push(path);
    Ok(outcome)
}

fn mean_field_kinds(cfg: &RunConfig, command: &str) -> Result<Vec<ModelKind>> {
    let kinds = cfg.model.mean_field_kinds();
    if kinds.is_empty() {
        bail!("`{command}` needs a mean-field model (large_n, hartree, replica or all)");
    }
    Ok(kinds)
}

fn trajectory_header(kind: ModelKind) -> Vec<&'static str> {
    if kind.has_d_sector() {
        vec!["t", "A", "pA", "rho_G", "p_G", "rho_D", "p_D", "G", "Pi_G", "D", "Pi_D", "energy"]
    } else {
        vec!["t", "A", "pA", "rho_G", "p_G", "G", "Pi_G", "energy"]
    }
}

fn write_trajectory(path: &Path, traj: &Trajectory, params: &ModelParams) -> Result<()> {
    let kind = traj.states.first().map_or(ModelKind::Hartree, |s| s.kind());
    let mut out = CsvOut::create(path, &trajectory_header(kind))?;
    for ((t, s), e) in traj.times.iter().zip(&traj.states).zip(&traj.energies) {
        let w = to_width_view(s, params)?;
        let d = s.d();
        let mut row = vec![*t, s.a(), s.p_a(), s.rho_g(), s.p_g()];
        if let Some(d) = d {
            row.extend([d.rho, d.p]);
        }
        row.push(w.g);
        row.push(w.pi_g);
        if let Some((d, pi_d)) = w.d {
            row.push(d);
            row.push(pi_d);
        }
        row.push(*e);
        out.floats(&row)?;
    }
    out.finish()
}

fn write_observables(path: &Path, series: &ObservableSeries) -> Result<()> {
    let header: Vec<&str> = ObservableRecord::CSV_HEADER.split(',').collect();
    let mut out = CsvOut::create(path, &header)?;
    for r in &series.records {
        out.floats(&r.values())?;
    }
    out.finish()
}

/// Grid and initial wave function for an exact run over `horizon`.
pub fn exact_setup(cfg: &RunConfig, horizon: f64) -> Result<(WaveFunction2D, ModelParams)> {
    let params = cfg.params_for(ModelKind::Hartree)?;
    let ip = cfg.exact_init()?;
    let grid = exact_grid(cfg, horizon)?;
    Ok((gaussian_init(&grid, &ip, &params)?, params))
}

/// The configured grid, or one sized from the Hartree run over `horizon`.
pub fn exact_grid(cfg: &RunConfig, horizon: f64) -> Result<Grid2D> {
    if let Some(g) = cfg.exact.grid {
        return g.grid();
    }
    let params = cfg.params_for(ModelKind::Hartree)?;
    let s0 = cfg.initial_state(ModelKind::Hartree)?;
    let spec = IntegratorSpec::new(Scheme::Composition4, cfg.integrator.dt, horizon, cfg.integrator.sample_every)?;
    let traj = integrate(&s0, &params, &spec)?;
    Ok(default_grid(&traj, &params)?)
}

/// Evolves an exact state, handing each observed state to `hook`.
pub fn exact_run<F>(cfg: &RunConfig, wf: &mut WaveFunction2D, params: &ModelParams, horizon: f64, hook: F) -> Result<ObservableSeries>
where
    F: FnMut(usize, &WaveFunction2D) -> semiquantum::Result<()>,
{
    let spec = cfg.integrator_spec(horizon)?;
    let opts = EvolveOptions {
        observer_stride: cfg.integrator.sample_every,
        edge_mass_limit: cfg.exact.edge_mass_limit,
    };
    Ok(evolve_with(wf, params, &spec, &opts, hook)?)
}

// ---------------------------------------------------------------- simulate

pub fn cmd_simulate(cfg: &RunConfig) -> Result<Outcome> {
    let dir = prepare_out(cfg)?;
    let horizon = cfg.horizons.simulate;
    let mut outcome = Outcome::default();
    for kind in cfg.model.mean_field_kinds() {
        let params = cfg.params_for(kind)?;
        let s0 = cfg.initial_state(kind)?;
        let traj = integrate(&s0, &params, &cfg.integrator_spec(horizon)?)?;
        let path = dir.join(format!("trajectory_{}.csv", kind.name()));
        write_trajectory(&path, &traj, &params)?;
        outcome.partial |= traj.aborted.is_some();
        outcome.files.push(path);
    }
    if cfg.model.includes_exact() {
        let (mut wf, params) = exact_setup(cfg, horizon)?;
        let series = exact_run(cfg, &mut wf, &params, horizon, |_, _| Ok(()))?;
        let path = dir.join("observables_exact.csv");
        write_observables(&path, &series)?;
        outcome.partial |= series.aborted.is_some();
        outcome.files.push(path);
    }
    finish(cfg, "simulate", outcome)
}

// ---------------------------------------------------------------- lyapunov

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSummary {
    pub model: String,
    pub e: f64,
    pub energy: Option<f64>,
    pub t: f64,
    pub lambda_running: f64,
    pub renorm_interval: f64,
    pub dt: f64,
    pub truncated: bool,
    pub twin_lambda: Option<f64>,
}

pub fn cmd_lyapunov(cfg: &RunConfig) -> Result<Outcome> {
    let dir = prepare_out(cfg)?;
    let kinds = mean_field_kinds(cfg, "lyapunov")?;
    let spec = IntegratorSpec::new(Scheme::Composition4, cfg.integrator.dt, cfg.horizons.lyapunov, 1)?;
    let renorm = cfg.lyapunov.renorm_interval;
    let results = block_map(&kinds, cfg.workers, |_, &kind| -> Result<_> {
        let params = cfg.params_for(kind)?;
        let s0 = cfg.initial_state(kind)?;
        let est = max_lyapunov(&s0, &params, &spec, renorm)?;
        let twin = if cfg.lyapunov.twin_check {
            Some(two_trajectory_lyapunov(&s0, &params, &spec, renorm, TWIN_SEPARATION)?.final_lambda)
        } else {
            None
        };
        Ok((kind, est, twin))
    });
    let mut outcome = Outcome::default();
    for r in results {
        let (kind, est, twin) = r?;
        let path = dir.join(format!("lyapunov_{}.csv", kind.name()));
        let mut out = CsvOut::create(&path, &["t", "lambda_running"])?;
        for (t, l) in est.times.iter().zip(&est.running_lambda) {
            out.floats(&[*t, *l])?;
        }
        out.finish()?;
        let summary = LyapunovSummary {
            model: kind.name().to_owned(),
            e: cfg.params.e,
            energy: cfg.energy,
            t: est.times.last().copied().unwrap_or(0.0),
            lambda_running: est.final_lambda,
            renorm_interval: est.renorm_interval,
            dt: est.dt,
            truncated: est.truncated.is_some(),
            twin_lambda: twin,
        };
        let side = dir.join(format!("lyapunov_{}.json", kind.name()));
        write_json(&side, &summary)?;
        outcome.partial |= summary.truncated;
        outcome.files.extend([path, side]);
    }
    finish(cfg, "lyapunov", outcome)
}

// ---------------------------------------------------------------- poincare

/// Energy-shell angles for the section family, drawn from the seed.
pub fn section_angles(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(0.0..FRAC_PI_2)).collect()
}

pub fn run_poincare(cfg: &RunConfig, kind: ModelKind) -> Result<(Vec<SectionPoint>, bool)> {
    let params = cfg.params_for(kind)?;
    let plane: SectionPlane = cfg.poincare.plane.into();
    let spec = IntegratorSpec::new(Scheme::Composition4, cfg.poincare.dt, cfg.horizons.poincare, 1)?;
    let starts = match (cfg.initial_state, cfg.energy) {
        (Some(_), _) => vec![cfg.initial_state(kind)?],
        (None, Some(e)) => {
            let conv = cfg.convention_for(kind, &params, e)?;
            section_angles(cfg.seed, cfg.poincare.n_traj)
                .into_iter()
                .map(|theta| energy_shell_state(e, theta, &conv, &params, kind))
                .collect::<semiquantum::Result<Vec<_>>>()?
        }
        (None, None) => bail!("no initial data"),
    };
    // Sections are cut per orbit so whole trajectories never pile up in memory.
    let per_traj = block_map(&starts, cfg.workers, |id, s| -> Result<_> {
        let traj = integrate(s, &params, &spec)?;
        let aborted = traj.aborted.is_some();
        let section = poincare_section(&[traj], &params, plane, plane.default_surface())?;
        let points: Vec<SectionPoint> = section
            .points
            .into_iter()
            .map(|p| SectionPoint { traj_id: id, ..p })
            .collect();
        Ok((points, aborted))
    });
    let mut points = Vec::new();
    let mut partial = false;
    for r in per_traj {
        let (p, a) = r?;
        points.extend(p);
        partial |= a;
    }
    Ok((points, partial))
}

pub fn cmd_poincare(cfg: &RunConfig) -> Result<Outcome> {
    let dir = prepare_out(cfg)?;
    if cfg.poincare.n_traj == 0 {
        bail!("n_traj must be at least 1");
    }
    let mut outcome = Outcome::default();
    for kind in mean_field_kinds(cfg, "poincare")? {
        let (points, partial) = run_poincare(cfg, kind)?;
        if points.is_empty() {
            eprintln!("warning: no section crossings for {}; try a longer horizon", kind.name());
        }
        let plane: SectionPlane = cfg.poincare.plane.into();
        let path = dir.join(format!("poincare_{}_{}.csv", kind.name(), plane.name()));
        let mut out = CsvOut::create(&path, &["traj_id", "t", "u", "v"])?;
        for p in &points {
            out.fields([p.traj_id.to_string(), fmt_f64(p.t), fmt_f64(p.u), fmt_f64(p.v)])?;
        }
        out.finish()?;
        outcome.partial |= partial;
        outcome.files.push(path);
    }
    finish(cfg, "poincare", outcome)
}

// ---------------------------------------------------------------- scan

#[derive(Debug, Clone, PartialEq)]
pub enum CellOutcome {
    Infeasible,
    Classified(Classification),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanCell {
    pub e: f64,
    pub energy: f64,
    pub outcome: CellOutcome,
}

/// One row of the scan CSV as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub e: f64,
    pub energy: f64,
    pub classification: String,
    pub lambda_max: Option<f64>,
    pub n_chaotic_ic: Option<usize>,
}

impl ScanCell {
    pub fn row(&self) -> ScanRow {
        match &self.outcome {
            CellOutcome::Infeasible => ScanRow {
                e: self.e,
                energy: self.energy,
                classification: "infeasible".into(),
                lambda_max: None,
                n_chaotic_ic: None,
            },
            CellOutcome::Classified(c) => ScanRow {
                e: self.e,
                energy: self.energy,
                classification: if c.regularity.is_chaotic() { "chaotic" } else { "regular" }.into(),
                lambda_max: Some(c.max_lambda()),
                n_chaotic_ic: Some(c.n_chaotic()),
            },
        }
    }

    pub fn is_chaotic(&self) -> bool {
        matches!(&self.outcome, CellOutcome::Classified(c) if c.regularity.is_chaotic())
    }
}

/// Classifies every `(e, E)` cell, row-major in `e`.
pub fn run_scan(cfg: &RunConfig, kind: ModelKind) -> Result<Vec<ScanCell>> {
    let sc = &cfg.scan;
    if sc.e_values.is_empty() || sc.energy_values.is_empty() {
        bail!("scan ranges must be nonempty");
    }
    if sc.n_ic == 0 {
        bail!("n_ic must be at least 1");
    }
    let spec = IntegratorSpec::new(Scheme::Composition4, sc.dt, sc.t_max, 1)?;
    let cells: Vec<(f64, f64)> = sc
        .e_values
        .iter()
        .flat_map(|&e| sc.energy_values.iter().map(move |&en| (e, en)))
        .collect();
    block_map(&cells, cfg.workers, |_, &(e, energy)| -> Result<ScanCell> {
        let params = ModelParams {
            e,
            ..cfg.params_for(kind)?
        };
        let conv = cfg.convention_for(kind, &params, energy)?;
        let outcome = match chaos::classify_regularity(
            kind,
            energy,
            &params,
            &conv,
            sc.n_ic,
            &spec,
            cfg.lyapunov.threshold,
        ) {
            Ok(c) => CellOutcome::Classified(c),
            Err(semiquantum::Error::InfeasibleEnergy { .. } | semiquantum::Error::NoFiniteAmplitude { .. }) => {
                CellOutcome::Infeasible
            }
            Err(err) => return Err(err.into()),
        };
        Ok(ScanCell { e, energy, outcome })
    })
    .into_iter()
    .collect()
}

pub const SCAN_HEADER: [&str; 5] = ["e", "E", "classification", "lambda_max", "n_chaotic_ic"];

pub fn write_scan(path: &Path, cells: &[ScanCell]) -> Result<()> {
    let mut out = CsvOut::create(path, &SCAN_HEADER)?;
    for c in cells {
        let r = c.row();
        out.fields([
            fmt_f64(r.e),
            fmt_f64(r.energy),
            r.classification,
            r.lambda_max.map(fmt_f64).unwrap_or_default(),
            r.n_chaotic_ic.map(|n| n.to_string()).unwrap_or_default(),
        ])?;
    }
    out.finish()
}

pub fn read_scan(path: &Path) -> Result<Vec<ScanRow>> {
    let (header, rows) = read_table(path)?;
    if header != SCAN_HEADER {
        bail!("unexpected scan header {header:?}");
    }
    rows.into_iter()
        .map(|r| {
            let opt = |s: &str| -> Result<Option<f64>> { Ok(if s.is_empty() { None } else { Some(s.parse()?) }) };
            Ok(ScanRow {
                e: r[0].parse()?,
                energy: r[1].parse()?,
                classification: r[2].clone(),
                lambda_max: opt(&r[3])?,
                n_chaotic_ic: if r[4].is_empty() { None } else { Some(r[4].parse()?) },
            })
        })
        .collect()
}

pub fn cmd_scan(cfg: &RunConfig) -> Result<Outcome> {
    let dir = prepare_out(cfg)?;
    let mut outcome = Outcome::default();
    for kind in mean_field_kinds(cfg, "scan")? {
        let cells = run_scan(cfg, kind)?;
        let path = dir.join(format!("scan_{}.csv", kind.name()));
        write_scan(&path, &cells)?;
        let per_ic = dir.join(format!("scan_{}_lambdas.csv", kind.name()));
        let mut out = CsvOut::create(&per_ic, &["e", "E", "ic", "lambda"])?;
        for c in &cells {
            if let CellOutcome::Classified(cl) = &c.outcome {
                for (i, l) in cl.lambdas.iter().enumerate() {
                    out.fields([fmt_f64(c.e), fmt_f64(c.energy), i.to_string(), fmt_f64(*l)])?;
                }
            }
        }
        out.finish()?;
        outcome.files.extend([path, per_ic]);
    }
    finish(cfg, "scan", outcome)
}

// ---------------------------------------------------------------- compare

/// Aligned series of one model in a comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSeries {
    pub model: String,
    pub times: Vec<f64>,
    pub a: Vec<f64>,
    pub g: Vec<f64>,
}

impl ModelSeries {
    fn from_trajectory(kind: ModelKind, traj: &Trajectory) -> Self {
        Self {
            model: kind.name().to_owned(),
            times: traj.times.clone(),
            a: traj.states.iter().map(|s| s.a()).collect(),
            g: traj.states.iter().map(|s| s.g()).collect(),
        }
    }

    fn from_exact(series: &ObservableSeries, hbar: f64) -> Self {
        Self {
            model: "exact".into(),
            times: series.times(),
            a: series.column(|r| r.mean_a),
            g: series.column(|r| r.g(hbar)),
        }
    }

    fn truncated(&self, n: usize) -> Self {
        Self {
            model: self.model.clone(),
            times: self.times[..n].to_vec(),
            a: self.a[..n].to_vec(),
            g: self.g[..n].to_vec(),
        }
    }

    fn observable(&self, name: &str) -> &[f64] {
        match name {
            "A" => &self.a,
            _ => &self.g,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareResult {
    pub grid: Grid2D,
    pub large_n: Trajectory,
    pub hartree: Trajectory,
    pub exact: ObservableSeries,
    pub reports: Vec<BreakReport>,
    /// Final exact state (at the end of the compared window).
    pub final_state: WaveFunction2D,
}

pub const COMPARED_OBSERVABLES: [&str; 2] = ["A", "G"];

/// Break reports of large N and Hartree against exact and each other.
pub fn break_reports(
    large_n: &ModelSeries,
    hartree: &ModelSeries,
    exact: &ModelSeries,
    threshold: f64,
    partial: bool,
) -> Result<Vec<BreakReport>> {
    let n = large_n.times.len().min(hartree.times.len()).min(exact.times.len());
    let (ln, h, ex) = (large_n.truncated(n), hartree.truncated(n), exact.truncated(n));
    let mut reports = Vec::new();
    for obs in COMPARED_OBSERVABLES {
        let reference = ex.observable(obs);
        let mutual = break_time(&ln.times, ln.observable(obs), &h.times, h.observable(obs), threshold)?;
        for approx in [&ln, &h] {
            reports.push(BreakReport {
                observable: obs.to_owned(),
                model: approx.model.clone(),
                t_break_exact: break_time(&approx.times, approx.observable(obs), &ex.times, reference, threshold)?,
                t_break_mutual: mutual,
                threshold,
                rms_ref: rms(reference),
                window_end: ex.times.last().copied().unwrap_or(0.0),
                partial,
            });
        }
    }
    Ok(reports)
}

pub fn run_compare(cfg: &RunConfig) -> Result<CompareResult> {
    cfg.validate()?;
    let horizon = cfg.horizons.compare;
    let spec = cfg.integrator_spec(horizon)?;
    let mf = |kind: ModelKind| -> Result<Trajectory> {
        let params = cfg.params_for(kind)?;
        Ok(integrate(&cfg.initial_state(kind)?, &params, &spec)?)
    };
    let large_n = mf(ModelKind::LargeN)?;
    let hartree = mf(ModelKind::Hartree)?;
    let (mut wf, params) = exact_setup(cfg, horizon)?;
    let grid = wf.grid;
    let exact = exact_run(cfg, &mut wf, &params, horizon, |_, _| Ok(()))?;
    let reports = break_reports(
        &ModelSeries::from_trajectory(ModelKind::LargeN, &large_n),
        &ModelSeries::from_trajectory(ModelKind::Hartree, &hartree),
        &ModelSeries::from_exact(&exact, params.hbar),
        cfg.compare.threshold,
        exact.aborted.is_some(),
    )?;
    Ok(CompareResult {
        grid,
        large_n,
        hartree,
        exact,
        reports,
        final_state: wf,
    })
}

pub fn cmd_compare(cfg: &RunConfig) -> Result<Outcome> {
    let dir = prepare_out(cfg)?;
    let res = run_compare(cfg)?;
    let mut outcome = Outcome::default();
    for (kind, traj) in [(ModelKind::LargeN, &res.large_n), (ModelKind::Hartree, &res.hartree)] {
        let path = dir.join(format!("compare_{}.csv", kind.name()));
        write_trajectory(&path, traj, &cfg.params_for(kind)?)?;
        outcome.partial |= traj.aborted.is_some();
        outcome.files.push(path);
    }
    let path = dir.join("compare_exact.csv");
    write_observables(&path, &res.exact)?;
    outcome.files.push(path);
    let report = dir.join("break_report.json");
    write_json(
        &report,
        &json!({
            "grid": {"n_a": res.grid.n_a, "n_x": res.grid.n_x, "l_a": res.grid.l_a, "l_x": res.grid.l_x},
            "exact_aborted": res.exact.aborted.map(|b| json!({"t": b.t, "edge_mass": b.edge_mass})),
            "reports": res.reports,
        }),
    )?;
    outcome.files.push(report);
    outcome.partial |= res.exact.aborted.is_some();
    finish(cfg, "compare", outcome)
}

// ---------------------------------------------------------------- sensitivity

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivitySummary {
    pub model: String,
    pub offset: f64,
    /// Canonical (mean-field) or `|Δ⟨A⟩|` (exact) distance at the start.
    pub initial_separation: f64,
    /// First time the separation reaches 1.
    pub order_unity_time: BreakTime,
    pub growth_rate: Option<f64>,
    pub max_separation: f64,
    pub window_end: f64,
    pub partial: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactPair {
    pub times: Vec<f64>,
    pub mean_a: [Vec<f64>; 2],
    pub aborted: bool,
}

impl ExactPair {
    pub fn differences(&self) -> Vec<f64> {
        self.mean_a[0].iter().zip(&self.mean_a[1]).map(|(a, b)| (a - b).abs()).collect()
    }
}

/// Two exact runs on one grid, the second with `G0` raised by the offset.
pub fn run_exact_pair(cfg: &RunConfig) -> Result<ExactPair> {
    let horizon = cfg.horizons.sensitivity;
    let params = cfg.params_for(ModelKind::Hartree)?;
    let grid = exact_grid(cfg, horizon)?;
    let base = cfg.exact_init()?;
    let shifted = GaussianInitParams {
        g0: base.g0 + cfg.sensitivity.offset,
        ..base
    };
    let inits = [base, shifted];
    let runs = block_map(&inits, cfg.workers.min(2), |_, ip| -> Result<ObservableSeries> {
        let mut wf = gaussian_init(&grid, ip, &params)?;
        exact_run(cfg, &mut wf, &params, horizon, |_, _| Ok(()))
    });
    let mut series = Vec::new();
    for r in runs {
        series.push(r?);
    }
    let n = series[0].records.len().min(series[1].records.len());
    Ok(ExactPair {
        times: series[0].times()[..n].to_vec(),
        mean_a: [
            series[0].column(|r| r.mean_a)[..n].to_vec(),
            series[1].column(|r| r.mean_a)[..n].to_vec(),
        ],
        aborted: series.iter().any(|s| s.aborted.is_some()),
    })
}

pub fn cmd_sensitivity(cfg: &RunConfig) -> Result<Outcome> {
    let dir = prepare_out(cfg)?;
    let horizon = cfg.horizons.sensitivity;
    let spec = cfg.integrator_spec(horizon)?;
    let offset = cfg.sensitivity.offset;
    let mut outcome = Outcome::default();
    let mut summaries = Vec::new();
    for kind in cfg.model.mean_field_kinds() {
        let params = cfg.params_for(kind)?;
        let div = two_trajectory_divergence(&cfg.initial_state(kind)?, &params, &spec, OffsetComponent::G, offset)?;
        let path = dir.join(format!("sensitivity_{}.csv", kind.name()));
        let mut out = CsvOut::create(&path, &["t", "separation"])?;
        for (t, s) in div.times.iter().zip(&div.separations) {
            out.floats(&[*t, *s])?;
        }
        out.finish()?;
        let partial = div.reference.aborted.is_some() || div.perturbed.aborted.is_some();
        summaries.push(SensitivitySummary {
            model: kind.name().to_owned(),
            offset,
            initial_separation: div.initial_offset.magnitude,
            order_unity_time: div.crossing_time(1.0).map_or(BreakTime::NotReached, BreakTime::At),
            growth_rate: div.growth_rate(10.0 * div.initial_offset.magnitude, 0.1),
            max_separation: div.separations.iter().copied().fold(0.0, f64::max),
            window_end: div.times.last().copied().unwrap_or(0.0),
            partial,
        });
        outcome.partial |= partial;
        outcome.files.push(path);
    }
    if cfg.model.includes_exact() && cfg.sensitivity.include_exact {
        let pair = run_exact_pair(cfg)?;
        let path = dir.join("sensitivity_exact.csv");
        let mut out = CsvOut::create(&path, &["t", "mean_A_1", "mean_A_2", "abs_diff"])?;
        let diffs = pair.differences();
        for k in 0..pair.times.len() {
            out.floats(&[pair.times[k], pair.mean_a[0][k], pair.mean_a[1][k], diffs[k]])?;
        }
        out.finish()?;
        summaries.push(SensitivitySummary {
            model: "exact".into(),
            offset,
            initial_separation: diffs.first().copied().unwrap_or(0.0),
            order_unity_time: diffs
                .iter()
                .position(|d| *d >= 1.0)
                .map_or(BreakTime::NotReached, |k| BreakTime::At(pair.times[k])),
            growth_rate: None,
            max_separation: diffs.iter().copied().fold(0.0, f64::max),
            window_end: pair.times.last().copied().unwrap_or(0.0),
            partial: pair.aborted,
        });
        outcome.partial |= pair.aborted;
        outcome.files.push(path);
    }
    if summaries.is_empty() {
        bail!("nothing to run: choose a mean-field model or enable the exact pair");
    }
    let path = dir.join("sensitivity.json");
    write_json(&path, &summaries)?;
    outcome.files.push(path);
    finish(cfg, "sensitivity", outcome)
}

// ---------------------------------------------------------------- density

/// `A` marginals of one exact run.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityRun {
    pub grid: Grid2D,
    /// `(t, density)` for every requested time that was reached.
    pub dumps: Vec<(f64, Vec<f64>)>,
    /// Final state, absent when the run stopped early.
    pub last: Option<WaveFunction2D>,
    pub partial: bool,
}

pub fn run_density(cfg: &RunConfig) -> Result<DensityRun> {
    cfg.validate()?;
    let mut times = cfg.density.times.clone();
    if times.is_empty() {
        bail!("no density times requested");
    }
    times.sort_by(f64::total_cmp);
    times.dedup();
    let dt = cfg.integrator.dt;
    let stride = cfg.integrator.sample_every;
    let mut targets = Vec::new();
    for &t in &times {
        let k = (t / dt).round();
        if t < 0.0 || (k * dt - t).abs() > 1e-9 * t.max(1.0) || !(k as usize).is_multiple_of(stride) {
            bail!("density time {t} is not a multiple of dt·sample_every = {}", dt * stride as f64);
        }
        targets.push(k as usize);
    }
    let horizon = *times.last().expect("nonempty");
    let (mut wf, params) = exact_setup(cfg, horizon)?;
    let grid = wf.grid;
    let mut dumps = Vec::new();
    let series = exact_run(cfg, &mut wf, &params, horizon, |k, w| {
        if let Ok(i) = targets.binary_search(&k) {
            dumps.push((times[i], w.a_marginal()));
        }
        Ok(())
    })?;
    let partial = series.aborted.is_some();
    Ok(DensityRun {
        grid,
        dumps,
        last: (!partial).then_some(wf),
        partial,
    })
}

pub fn cmd_density(cfg: &RunConfig) -> Result<Outcome> {
    if !cfg.model.includes_exact() {
        bail!("`density` needs the exact model (use --model exact)");
    }
    let dir = prepare_out(cfg)?;
    let run = run_density(cfg)?;
    let mut outcome = Outcome {
        partial: run.partial,
        ..Outcome::default()
    };
    let a = run.grid.a_coords();
    for (t, density) in &run.dumps {
        let path = dir.join(format!("density_t{}.csv", fmt_f64(*t)));
        let mut out = CsvOut::create(&path, &["A", "prob_density"])?;
        for (x, p) in a.iter().zip(density) {
            out.floats(&[*x, *p])?;
        }
        out.finish()?;
        outcome.files.push(path);
    }
    if let (true, Some(wf)) = (cfg.density.checkpoint, run.last) {
        let path = dir.join(format!("wavefunction_t{}.sqc", fmt_f64(wf.t)));
        checkpoint_save(&wf, &cfg.params_for(ModelKind::Hartree)?, &path)?;
        outcome.files.push(path);
    }
    finish(cfg, "density", outcome)
}
