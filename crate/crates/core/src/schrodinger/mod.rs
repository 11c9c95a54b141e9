//! Split-operator spectral solver for the two-dimensional Schrödinger equation
//! `iħ∂_tΨ = [½p_A² + ½p_x² + ½(m² + e²A²)x²]Ψ` on a periodic box.
//!
//! Amplitudes are stored row-major with `A` as the slow axis. A step alternates
//! potential kicks `exp(−iVτ/ħ)` in position space with kinetic drifts
//! `exp(−iħk²τ/2)` applied between a forward and an inverse 2-D FFT.

mod checkpoint;

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::integrators::{triple_jump_weights, IntegratorSpec, Scheme, Trajectory};
use crate::model::{to_width_view, MeanFieldState, ModelKind, ModelParams};

pub use checkpoint::{checkpoint_load, checkpoint_save, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

/// Probability allowed within [`EDGE_CELLS`] cells of the box edge before a run aborts.
pub const EDGE_MASS_LIMIT: f64 = 1e-8;
pub const EDGE_CELLS: usize = 4;
/// Packets must sit this many standard deviations inside the box.
pub const INIT_MARGIN_SIGMAS: f64 = 8.0;
/// Tolerated norm deviation before observables are declared untrustworthy.
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    pub n_a: usize,
    pub n_x: usize,
    /// Half-widths; each axis covers `[−L, L)`.
    pub l_a: f64,
    pub l_x: f64,
}

impl Grid2D {
    pub fn new(n_a: usize, n_x: usize, l_a: f64, l_x: f64) -> Result<Self> {
        let g = Self { n_a, n_x, l_a, l_x };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, n) in [("n_A", self.n_a), ("n_x", self.n_x)] {
            if n < 16 || !n.is_power_of_two() {
                return Err(Error::Domain(format!("{name} must be a power of two >= 16, got {n}")));
            }
        }
        for (name, l) in [("L_A", self.l_a), ("L_x", self.l_x)] {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::Domain(format!("{name} must be positive, got {l}")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n_a * self.n_x
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn da(&self) -> f64 {
        2.0 * self.l_a / self.n_a as f64
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.l_x / self.n_x as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.da() * self.dx()
    }

    pub fn a_at(&self, i: usize) -> f64 {
        -self.l_a + self.da() * i as f64
    }

    pub fn x_at(&self, j: usize) -> f64 {
        -self.l_x + self.dx() * j as f64
    }

    pub fn a_coords(&self) -> Vec<f64> {
        (0..self.n_a).map(|i| self.a_at(i)).collect()
    }

    pub fn x_coords(&self) -> Vec<f64> {
        (0..self.n_x).map(|j| self.x_at(j)).collect()
    }

    pub fn k_a(&self) -> Vec<f64> {
        wavenumbers(self.n_a, self.l_a)
    }

    pub fn k_x(&self) -> Vec<f64> {
        wavenumbers(self.n_x, self.l_x)
    }

    /// Same box with both sizes doubled.
    pub fn refined(&self) -> Self {
        Self {
            n_a: 2 * self.n_a,
            n_x: 2 * self.n_x,
            ..*self
        }
    }
}

/// FFT ordering `{0, 1, …, n/2−1, −n/2, …, −1}·π/L`.
fn wavenumbers(n: usize, l: f64) -> Vec<f64> {
    let unit = std::f64::consts::PI / l;
    (0..n)
        .map(|i| {
            let s = if i < n / 2 { i as f64 } else { i as f64 - n as f64 };
            s * unit
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction2D {
    pub grid: Grid2D,
    pub amplitudes: Vec<Complex64>,
    pub t: f64,
}

impl WaveFunction2D {
    pub fn zeros(grid: Grid2D) -> Result<Self> {
        grid.validate()?;
        Ok(Self {
            grid,
            amplitudes: vec![Complex64::new(0.0, 0.0); grid.len()],
            t: 0.0,
        })
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.cell_area()
    }

    /// `P(A) = Σ_x |ψ|² dx` on the `A` grid.
    pub fn a_marginal(&self) -> Vec<f64> {
        let (nx, dx) = (self.grid.n_x, self.grid.dx());
        self.amplitudes
            .chunks_exact(nx)
            .map(|row| row.iter().map(|z| z.norm_sqr()).sum::<f64>() * dx)
            .collect()
    }

    /// Probability carried by the outer [`EDGE_CELLS`] cells on every side.
    pub fn edge_mass(&self) -> f64 {
        let (na, nx) = (self.grid.n_a, self.grid.n_x);
        let mut mass = 0.0;
        for i in 0..na {
            let row = &self.amplitudes[i * nx..(i + 1) * nx];
            if i < EDGE_CELLS || i >= na - EDGE_CELLS {
                mass += row.iter().map(|z| z.norm_sqr()).sum::<f64>();
            } else {
                mass += row[..EDGE_CELLS].iter().map(|z| z.norm_sqr()).sum::<f64>();
                mass += row[nx - EDGE_CELLS..].iter().map(|z| z.norm_sqr()).sum::<f64>();
            }
        }
        mass * self.grid.cell_area()
    }

    /// `|⟨self|other⟩|` on a shared grid.
    pub fn overlap(&self, other: &Self) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::Domain("overlap requires identical grids".into()));
        }
        let s: Complex64 = self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum();
        Ok(s.norm() * self.grid.cell_area())
    }
}

/// Product-Gaussian initial data. `d0` and `g0` are the width parameters of the
/// variational states: the position variances are `ħ·d0` and `ħ·g0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianInitParams {
    pub a0: f64,
    pub pa0: f64,
    pub x0: f64,
    pub p0: f64,
    pub d0: f64,
    pub g0: f64,
    pub pi_d0: f64,
    pub pi_g0: f64,
}

impl GaussianInitParams {
    /// Initial data matching a Hartree or large-N state. Large-N states carry
    /// no `A` width, so `d0` must be supplied for them.
    pub fn from_state(s: &MeanFieldState, params: &ModelParams, d0: f64) -> Result<Self> {
        let w = to_width_view(s, params)?;
        let (d, pi_d) = match (s.kind(), w.d) {
            (ModelKind::Hartree, Some(pair)) => pair,
            (ModelKind::LargeN, None) => (d0, 0.0),
            (kind, _) => {
                return Err(Error::ModelMismatch {
                    expected: "hartree or large_n",
                    found: kind.name(),
                })
            }
        };
        Ok(Self {
            a0: w.a,
            pa0: w.p_a,
            x0: 0.0,
            p0: 0.0,
            d0: d,
            g0: w.g,
            pi_d0: pi_d,
            pi_g0: w.pi_g,
        })
    }
}

/// `exp[−ξ²(1/(4w) − iΠ)/ħ + ipξ/ħ]` sampled on one axis, unnormalised.
fn gaussian_factor(coords: &[f64], q: f64, p: f64, w: f64, chirp: f64, hbar: f64) -> Vec<Complex64> {
    coords
        .iter()
        .map(|&z| {
            let xi = z - q;
            let re = -xi * xi / (4.0 * w * hbar);
            let im = (chirp * xi * xi + p * xi) / hbar;
            Complex64::from_polar(re.exp(), im)
        })
        .collect()
}

pub fn gaussian_init(grid: &Grid2D, ip: &GaussianInitParams, params: &ModelParams) -> Result<WaveFunction2D> {
    grid.validate()?;
    params.validate()?;
    if !(ip.d0 > 0.0 && ip.g0 > 0.0) {
        return Err(Error::Domain(format!(
            "Gaussian widths must be positive, got D0 = {}, G0 = {}",
            ip.d0, ip.g0
        )));
    }
    let hbar = params.hbar;
    let checks = [
        ("A", grid.l_a, ip.a0, ip.d0),
        ("x", grid.l_x, ip.x0, ip.g0),
    ];
    for (axis, l, mean, w) in checks {
        let need = mean.abs() + INIT_MARGIN_SIGMAS * (hbar * w).sqrt();
        if l < need {
            return Err(Error::PacketTooWide {
                axis,
                shortfall: need - l,
            });
        }
    }
    let fa = gaussian_factor(&grid.a_coords(), ip.a0, ip.pa0, ip.d0, ip.pi_d0, hbar);
    let fx = gaussian_factor(&grid.x_coords(), ip.x0, ip.p0, ip.g0, ip.pi_g0, hbar);
    let mut wf = WaveFunction2D::zeros(*grid)?;
    for (row, a) in wf.amplitudes.chunks_exact_mut(grid.n_x).zip(&fa) {
        for (z, x) in row.iter_mut().zip(&fx) {
            *z = a * x;
        }
    }
    let scale = 1.0 / wf.norm().sqrt();
    for z in &mut wf.amplitudes {
        *z *= scale;
    }
    Ok(wf)
}

/// Smallest grid size used by [`default_grid`].
pub const DEFAULT_POINTS: usize = 256;
/// Largest grid size [`default_grid`] will choose per axis.
pub const MAX_DEFAULT_POINTS: usize = 2048;
/// Half-width of the box along `A` is never below this.
pub const MIN_HALF_WIDTH_A: f64 = 16.0;

/// Box and resolution covering a Hartree run.
///
/// Along each axis the box holds the packet centre plus eight standard
/// deviations at every sample (and at least `4·max|A|`, `16` along `A`),
/// and the spacing resolves eight momentum standard deviations beyond the mean
/// momentum. Sizes start at [`DEFAULT_POINTS`] and double as needed up to
/// [`MAX_DEFAULT_POINTS`].
pub fn default_grid(hartree: &Trajectory, params: &ModelParams) -> Result<Grid2D> {
    let hbar = params.hbar;
    let (mut l_a, mut l_x) = (MIN_HALF_WIDTH_A, 0.0f64);
    let (mut k_a, mut k_x) = (0.0f64, 0.0f64);
    for s in &hartree.states {
        let w = to_width_view(s, params)?;
        let (d, pi_d) = w.d.ok_or(Error::ModelMismatch {
            expected: ModelKind::Hartree.name(),
            found: s.kind().name(),
        })?;
        let sig = |width: f64| (hbar * width).sqrt();
        let sig_p = |width: f64, chirp: f64| (hbar * (0.25 / width + 4.0 * chirp * chirp * width)).sqrt();
        l_a = l_a
            .max(4.0 * w.a.abs())
            .max(w.a.abs() + 1.5 * INIT_MARGIN_SIGMAS * sig(d));
        l_x = l_x.max(1.5 * INIT_MARGIN_SIGMAS * sig(w.g));
        k_a = k_a.max((w.p_a.abs() + INIT_MARGIN_SIGMAS * sig_p(d, pi_d)) / hbar);
        k_x = k_x.max(INIT_MARGIN_SIGMAS * sig_p(w.g, w.pi_g) / hbar);
    }
    let points = |l: f64, k: f64| {
        // k_max = π n / (2L)
        let need = (2.0 * l * k / std::f64::consts::PI).ceil() as usize;
        need.next_power_of_two().clamp(DEFAULT_POINTS, MAX_DEFAULT_POINTS)
    };
    Grid2D::new(points(l_a, k_a), points(l_x, k_x), l_a, l_x)
}

/// Exact initial state matched to a Hartree state, on the [`default_grid`] of
/// the Hartree run over `spec`.
pub fn matched_initial_state(
    hartree: &MeanFieldState,
    params: &ModelParams,
    spec: &IntegratorSpec,
) -> Result<WaveFunction2D> {
    if hartree.kind() != ModelKind::Hartree {
        return Err(Error::ModelMismatch {
            expected: ModelKind::Hartree.name(),
            found: hartree.kind().name(),
        });
    }
    let mf_spec = IntegratorSpec {
        scheme: Scheme::Composition4,
        ..*spec
    };
    let traj = crate::integrators::integrate(hartree, params, &mf_spec)?;
    let grid = default_grid(&traj, params)?;
    let ip = GaussianInitParams::from_state(hartree, params, 0.0)?;
    gaussian_init(&grid, &ip, params)
}

/// Forward and inverse 2-D transforms with the transposed spectral layout
/// (`k_x` slow, `k_A` fast) used between them.
struct Spectral {
    grid: Grid2D,
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_a: Arc<dyn Fft<f64>>,
    inv_a: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    work: Vec<Complex64>,
}

impl Spectral {
    fn new(grid: Grid2D) -> Self {
        let mut planner = FftPlanner::new();
        let fwd_x = planner.plan_fft_forward(grid.n_x);
        let inv_x = planner.plan_fft_inverse(grid.n_x);
        let fwd_a = planner.plan_fft_forward(grid.n_a);
        let inv_a = planner.plan_fft_inverse(grid.n_a);
        let scratch_len = [&fwd_x, &inv_x, &fwd_a, &inv_a]
            .iter()
            .map(|f| f.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        Self {
            grid,
            fwd_x,
            inv_x,
            fwd_a,
            inv_a,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            work: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    /// Unnormalised forward transform of `data` into `self.work` (transposed).
    fn forward(&mut self, data: &mut [Complex64]) {
        self.fwd_x.process_with_scratch(data, &mut self.scratch);
        transpose(data, &mut self.work, self.grid.n_a, self.grid.n_x);
        self.fwd_a.process_with_scratch(&mut self.work, &mut self.scratch);
    }

    /// Unnormalised inverse transform of `self.work` back into `data`.
    fn inverse(&mut self, data: &mut [Complex64]) {
        self.inv_a.process_with_scratch(&mut self.work, &mut self.scratch);
        transpose(&self.work, data, self.grid.n_x, self.grid.n_a);
        self.inv_x.process_with_scratch(data, &mut self.scratch);
    }
}

/// `dst[j·rows + i] = src[i·cols + j]` for a `rows × cols` source.
fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    const B: usize = 16;
    for i0 in (0..rows).step_by(B) {
        for j0 in (0..cols).step_by(B) {
            for i in i0..(i0 + B).min(rows) {
                for j in j0..(j0 + B).min(cols) {
                    dst[j * rows + i] = src[i * cols + j];
                }
            }
        }
    }
}

fn potential_values(grid: &Grid2D, params: &ModelParams) -> Vec<f64> {
    let xs = grid.x_coords();
    let mut v = Vec::with_capacity(grid.len());
    for a in grid.a_coords() {
        let w2 = params.m * params.m + params.e * params.e * a * a;
        v.extend(xs.iter().map(|x| 0.5 * w2 * x * x));
    }
    v
}

/// `k_A² + k_x²` in the transposed spectral layout.
fn k_squared_transposed(grid: &Grid2D) -> Vec<f64> {
    let ka = grid.k_a();
    let mut out = Vec::with_capacity(grid.len());
    for kx in grid.k_x() {
        out.extend(ka.iter().map(|k| k * k + kx * kx));
    }
    out
}

fn phases(values: &[f64], factor: f64, scale: f64) -> Vec<Complex64> {
    values.iter().map(|v| Complex64::from_polar(scale, -factor * v)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitOrder {
    Second,
    /// Triple-jump composition of Strang steps. Three kinetic substeps per step
    /// keep the FFT count down; both fourth-order mean-field schemes map here.
    Fourth,
}

impl SplitOrder {
    pub fn from_scheme(scheme: Scheme) -> Result<Self> {
        match scheme {
            Scheme::Leapfrog2 => Ok(SplitOrder::Second),
            Scheme::Composition4 | Scheme::TripleJump4 => Ok(SplitOrder::Fourth),
            Scheme::Rk4Generic => Err(Error::Domain(
                "the exact solver supports the second- and fourth-order split schemes only".into(),
            )),
        }
    }
}

/// Precomputed phase tables and FFT plans for repeated steps of one length.
pub struct Propagator {
    grid: Grid2D,
    dt: f64,
    order: SplitOrder,
    /// Alternating potential and kinetic stages: V₀ K₀ V₁ K₁ … V_n.
    kicks: Vec<Vec<Complex64>>,
    drifts: Vec<Vec<Complex64>>,
    spectral: Spectral,
}

impl Propagator {
    pub fn new(grid: Grid2D, params: &ModelParams, dt: f64, order: SplitOrder) -> Result<Self> {
        grid.validate()?;
        params.validate()?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Domain(format!("dt must be positive, got {dt}")));
        }
        let hbar = params.hbar;
        // Kick and drift fractions of dt.
        let (kick_frac, drift_frac): (Vec<f64>, Vec<f64>) = match order {
            SplitOrder::Second => (vec![0.5, 0.5], vec![1.0]),
            SplitOrder::Fourth => {
                let (w, mid) = triple_jump_weights();
                (
                    vec![0.5 * w, 0.5 * (w + mid), 0.5 * (w + mid), 0.5 * w],
                    vec![w, mid, w],
                )
            }
        };
        let v = potential_values(&grid, params);
        let k2 = k_squared_transposed(&grid);
        let norm = 1.0 / grid.len() as f64;
        let kicks = kick_frac.iter().map(|f| phases(&v, f * dt / hbar, 1.0)).collect();
        let drifts = drift_frac
            .iter()
            .map(|f| phases(&k2, 0.5 * hbar * f * dt, norm))
            .collect();
        Ok(Self {
            grid,
            dt,
            order,
            kicks,
            drifts,
            spectral: Spectral::new(grid),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn order(&self) -> SplitOrder {
        self.order
    }

    pub fn step(&mut self, wf: &mut WaveFunction2D) -> Result<()> {
        if wf.grid != self.grid {
            return Err(Error::Domain("wave function grid differs from the propagator grid".into()));
        }
        let amps = &mut wf.amplitudes;
        for (stage, drift) in self.drifts.iter().enumerate() {
            multiply(amps, &self.kicks[stage]);
            self.spectral.forward(amps);
            multiply(&mut self.spectral.work, drift);
            self.spectral.inverse(amps);
        }
        multiply(amps, self.kicks.last().expect("at least one kick"));
        wf.t += self.dt;
        Ok(())
    }
}

fn multiply(data: &mut [Complex64], factors: &[Complex64]) {
    for (z, f) in data.iter_mut().zip(factors) {
        *z *= f;
    }
}

/// One second-order step (potential half-kick, kinetic drift, half-kick).
pub fn step_strang(wf: &WaveFunction2D, params: &ModelParams, dt: f64) -> Result<WaveFunction2D> {
    let mut out = wf.clone();
    Propagator::new(wf.grid, params, dt, SplitOrder::Second)?.step(&mut out)?;
    Ok(out)
}

/// One fourth-order step: the triple composition of [`step_strang`].
pub fn step_order4(wf: &WaveFunction2D, params: &ModelParams, dt: f64) -> Result<WaveFunction2D> {
    let mut out = wf.clone();
    Propagator::new(wf.grid, params, dt, SplitOrder::Fourth)?.step(&mut out)?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservableRecord {
    pub t: f64,
    pub mean_a: f64,
    pub mean_pa: f64,
    pub var_a: f64,
    pub mean_x: f64,
    pub var_x: f64,
    pub norm: f64,
    pub energy: f64,
}

impl ObservableRecord {
    pub const CSV_HEADER: &'static str = "t,mean_A,mean_pA,var_A,mean_x,var_x,norm,energy";

    /// Width parameter `G = var_x/ħ` comparable with the mean-field `G`.
    pub fn g(&self, hbar: f64) -> f64 {
        self.var_x / hbar
    }

    pub fn d(&self, hbar: f64) -> f64 {
        self.var_a / hbar
    }

    pub fn values(&self) -> [f64; 8] {
        [
            self.t,
            self.mean_a,
            self.mean_pa,
            self.var_a,
            self.mean_x,
            self.var_x,
            self.norm,
            self.energy,
        ]
    }
}

/// Reusable workspace for [`observe`].
pub struct Observer {
    grid: Grid2D,
    potential: Vec<f64>,
    k_a: Vec<f64>,
    k_x: Vec<f64>,
    spectral: Spectral,
    buffer: Vec<Complex64>,
}

impl Observer {
    pub fn new(grid: Grid2D, params: &ModelParams) -> Result<Self> {
        grid.validate()?;
        params.validate()?;
        Ok(Self {
            grid,
            potential: potential_values(&grid, params),
            k_a: grid.k_a(),
            k_x: grid.k_x(),
            spectral: Spectral::new(grid),
            buffer: vec![Complex64::new(0.0, 0.0); grid.len()],
        })
    }

    /// Moments by grid quadrature, momenta and kinetic energy spectrally.
    pub fn observe(&mut self, wf: &WaveFunction2D, params: &ModelParams) -> Result<ObservableRecord> {
        if wf.grid != self.grid {
            return Err(Error::Domain("wave function grid differs from the observer grid".into()));
        }
        let g = self.grid;
        let area = g.cell_area();
        let (xs, as_) = (g.x_coords(), g.a_coords());
        let (mut n, mut sa, mut saa, mut sx, mut sxx, mut v) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for (i, row) in wf.amplitudes.chunks_exact(g.n_x).enumerate() {
            let a = as_[i];
            let pot = &self.potential[i * g.n_x..(i + 1) * g.n_x];
            let mut rn = 0.0;
            for (j, z) in row.iter().enumerate() {
                let p = z.norm_sqr();
                rn += p;
                sx += p * xs[j];
                sxx += p * xs[j] * xs[j];
                v += p * pot[j];
            }
            n += rn;
            sa += rn * a;
            saa += rn * a * a;
        }
        let norm = n * area;
        if !((norm - 1.0).abs() <= NORM_TOLERANCE) {
            return Err(Error::Integrity { t: wf.t, norm });
        }
        let mean_a = sa / n;
        let mean_x = sx / n;
        self.buffer.copy_from_slice(&wf.amplitudes);
        self.spectral.forward(&mut self.buffer);
        // Transposed layout: k_x slow, k_A fast.
        let (mut kn, mut kpa, mut kk) = (0.0, 0.0, 0.0);
        for (j, row) in self.spectral.work.chunks_exact(g.n_a).enumerate() {
            let kx = self.k_x[j];
            for (i, z) in row.iter().enumerate() {
                let p = z.norm_sqr();
                let ka = self.k_a[i];
                kn += p;
                kpa += p * ka;
                kk += p * (ka * ka + kx * kx);
            }
        }
        let hbar = params.hbar;
        Ok(ObservableRecord {
            t: wf.t,
            mean_a,
            mean_pa: hbar * kpa / kn,
            var_a: saa / n - mean_a * mean_a,
            mean_x,
            var_x: sxx / n - mean_x * mean_x,
            norm,
            energy: 0.5 * hbar * hbar * kk / kn * norm + v * area,
        })
    }
}

pub fn observe(wf: &WaveFunction2D, params: &ModelParams) -> Result<ObservableRecord> {
    Observer::new(wf.grid, params)?.observe(wf, params)
}

/// Symmetrised correlation `⟨(z−⟨z⟩)p + p(z−⟨z⟩)⟩` along the `x` axis, which
/// equals `4ħΠ_G·G` for the Gaussian trial state.
pub fn x_momentum_correlation(wf: &WaveFunction2D, params: &ModelParams) -> Result<f64> {
    axis_correlation(wf, params, false)
}

/// As [`x_momentum_correlation`] along `A`.
pub fn a_momentum_correlation(wf: &WaveFunction2D, params: &ModelParams) -> Result<f64> {
    axis_correlation(wf, params, true)
}

fn axis_correlation(wf: &WaveFunction2D, params: &ModelParams, along_a: bool) -> Result<f64> {
    // ⟨zp + pz⟩ = 2 Re⟨ψ| z p̂ |ψ⟩ with p̂ψ obtained spectrally.
    let g = wf.grid;
    let mut spectral = Spectral::new(g);
    let mut buf = wf.amplitudes.clone();
    spectral.forward(&mut buf);
    let (ka, kx) = (g.k_a(), g.k_x());
    let scale = 1.0 / g.len() as f64;
    for (j, row) in spectral.work.chunks_exact_mut(g.n_a).enumerate() {
        for (i, z) in row.iter_mut().enumerate() {
            let k = if along_a { ka[i] } else { kx[j] };
            // p̂ = −iħ∂ acts as ħk on each mode.
            *z *= params.hbar * k * scale;
        }
    }
    spectral.inverse(&mut buf);
    let rec = observe(wf, params)?;
    let centre = if along_a { rec.mean_a } else { rec.mean_x };
    let mut acc = 0.0;
    for (i, row) in wf.amplitudes.chunks_exact(g.n_x).enumerate() {
        for (j, z) in row.iter().enumerate() {
            let coord = if along_a { g.a_at(i) } else { g.x_at(j) } - centre;
            acc += (z.conj() * buf[i * g.n_x + j]).re * coord;
        }
    }
    Ok(2.0 * acc * g.cell_area())
}

/// Why an exact run stopped before `t_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxEscape {
    pub t: f64,
    pub edge_mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservableSeries {
    pub records: Vec<ObservableRecord>,
    pub dt: f64,
    pub observer_stride: usize,
    /// Set when the run stopped because probability reached the box edge; the
    /// records stop at the last sample that passed the check.
    pub aborted: Option<BoxEscape>,
}

impl ObservableSeries {
    pub fn into_result(self) -> Result<Self> {
        match self.aborted {
            Some(b) => Err(Error::BoxEscape {
                t: b.t,
                mass: b.edge_mass,
            }),
            None => Ok(self),
        }
    }

    pub fn last_time(&self) -> f64 {
        self.records.last().map(|r| r.t).unwrap_or(0.0)
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn column(&self, f: impl Fn(&ObservableRecord) -> f64) -> Vec<f64> {
        self.records.iter().map(f).collect()
    }

    pub fn max_energy_drift(&self) -> f64 {
        let e0 = self.records.first().map(|r| r.energy).unwrap_or(0.0);
        self.records.iter().map(|r| (r.energy - e0).abs()).fold(0.0, f64::max)
    }

    pub fn max_norm_drift(&self) -> f64 {
        self.records.iter().map(|r| (r.norm - 1.0).abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    /// Observe every this many steps (and at the start).
    pub observer_stride: usize,
    /// Abort when the boundary layer carries more probability than this.
    pub edge_mass_limit: f64,
}

impl EvolveOptions {
    pub fn every(observer_stride: usize) -> Self {
        Self {
            observer_stride,
            edge_mass_limit: EDGE_MASS_LIMIT,
        }
    }
}

/// Evolves `wf` in place for `spec.n_steps()` steps, observing per `opts`.
/// `on_sample` sees the state at each observation, which is where checkpoints
/// or density dumps hook in.
///
/// Probability reaching the outer [`EDGE_CELLS`] cells beyond
/// `opts.edge_mass_limit` stops the run; the series collected so far is
/// returned with [`ObservableSeries::aborted`] set.
///
/// Time stamps are `k·dt` rather than accumulated sums so that series from
/// different solvers line up exactly.
pub fn evolve_with<F>(
    wf: &mut WaveFunction2D,
    params: &ModelParams,
    spec: &IntegratorSpec,
    opts: &EvolveOptions,
    mut on_sample: F,
) -> Result<ObservableSeries>
where
    F: FnMut(usize, &WaveFunction2D) -> Result<()>,
{
    spec.validate()?;
    let stride = opts.observer_stride;
    if stride == 0 {
        return Err(Error::Domain("observer_stride must be at least 1".into()));
    }
    let order = SplitOrder::from_scheme(spec.scheme)?;
    let mut prop = Propagator::new(wf.grid, params, spec.dt, order)?;
    let mut obs = Observer::new(wf.grid, params)?;
    let t0 = wf.t;
    let n_steps = spec.n_steps();
    let mut records = Vec::with_capacity(n_steps / stride + 1);
    let mut aborted = None;
    for k in 0..=n_steps {
        if k > 0 {
            prop.step(wf)?;
            wf.t = t0 + k as f64 * spec.dt;
        }
        if k % stride != 0 {
            continue;
        }
        let edge = wf.edge_mass();
        if edge > opts.edge_mass_limit {
            aborted = Some(BoxEscape {
                t: wf.t,
                edge_mass: edge,
            });
            break;
        }
        records.push(obs.observe(wf, params)?);
        on_sample(k, wf)?;
    }
    Ok(ObservableSeries {
        records,
        dt: spec.dt,
        observer_stride: stride,
        aborted,
    })
}

pub fn evolve(
    wf: &mut WaveFunction2D,
    params: &ModelParams,
    spec: &IntegratorSpec,
    observer_stride: usize,
) -> Result<ObservableSeries> {
    evolve_with(wf, params, spec, &EvolveOptions::every(observer_stride), |_, _| Ok(()))
}

/// L1 distance `Σ|P(A) − N(A)|·dA` between an `A` marginal and the Gaussian
/// with the same mean and variance.
pub fn gaussian_l1_distance(grid: &Grid2D, marginal: &[f64]) -> Result<f64> {
    if marginal.len() != grid.n_a {
        return Err(Error::Domain(format!(
            "marginal has {} bins, grid has {}",
            marginal.len(),
            grid.n_a
        )));
    }
    let da = grid.da();
    let a = grid.a_coords();
    let total: f64 = marginal.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Domain("marginal carries no probability".into()));
    }
    let mean = marginal.iter().zip(&a).map(|(p, x)| p * x).sum::<f64>() / total;
    let var = marginal.iter().zip(&a).map(|(p, x)| p * (x - mean).powi(2)).sum::<f64>() / total;
    let amp = 1.0 / (2.0 * std::f64::consts::PI * var).sqrt();
    Ok(marginal
        .iter()
        .zip(&a)
        .map(|(p, x)| (p - amp * (-(x - mean).powi(2) / (2.0 * var)).exp()).abs())
        .sum::<f64>()
        * da)
}
