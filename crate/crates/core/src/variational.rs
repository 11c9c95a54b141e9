//! Time-dependent variational principle for parametrised wave functions.
//!
//! A trial state `Ψ(y)` with `n` real parameters has the first-order Lagrangian
//! `L = Σ π_i(y) ẏ_i − h(y)`, with `π_i = Re⟨Ψ|iħ∂_iΨ⟩` and `h = ⟨Ψ|H|Ψ⟩`.
//! Its Euler–Lagrange equations read `M ẏ = ∇h` with the antisymmetric
//! structure matrix `M_ij = ∂_iπ_j − ∂_jπ_i`, so whenever `M` is invertible the
//! parameters follow a classical Hamiltonian flow with brackets
//! `{y_i, y_j} = (M⁻¹)_ij`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{MeanFieldState, ModelKind, ModelParams};

/// Structure matrices whose condition number exceeds this are treated as singular.
pub const CONDITION_LIMIT: f64 = 1e12;

type VecOracle = Box<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync>;
type ScalarOracle = Box<dyn Fn(&[f64]) -> Result<f64> + Send + Sync>;
type MatOracle = Box<dyn Fn(&[f64]) -> Result<DMatrix<f64>> + Send + Sync>;

/// A variational family described by numeric oracles for `π(y)` and `h(y)`.
///
/// Derivatives not supplied are obtained by central differences with step
/// `1e-6·max(1, |y_i|)`.
pub struct VariationalSystem {
    dim: usize,
    pi: VecOracle,
    h: ScalarOracle,
    /// `J[(i, j)] = ∂π_i/∂y_j`.
    pi_jacobian: Option<MatOracle>,
    h_gradient: Option<VecOracle>,
}

impl std::fmt::Debug for VariationalSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VariationalSystem")
            .field("dim", &self.dim)
            .field("pi_jacobian", &self.pi_jacobian.is_some())
            .field("h_gradient", &self.h_gradient.is_some())
            .finish()
    }
}

impl VariationalSystem {
    pub fn new<P, H>(dim: usize, pi: P, h: H) -> Result<Self>
    where
        P: Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
        H: Fn(&[f64]) -> Result<f64> + Send + Sync + 'static,
    {
        if dim < 2 {
            return Err(Error::Domain(format!("variational dimension must be at least 2, got {dim}")));
        }
        Ok(Self {
            dim,
            pi: Box::new(pi),
            h: Box::new(h),
            pi_jacobian: None,
            h_gradient: None,
        })
    }

    pub fn with_pi_jacobian<J>(mut self, jac: J) -> Self
    where
        J: Fn(&[f64]) -> Result<DMatrix<f64>> + Send + Sync + 'static,
    {
        self.pi_jacobian = Some(Box::new(jac));
        self
    }

    pub fn with_h_gradient<G>(mut self, grad: G) -> Self
    where
        G: Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
    {
        self.h_gradient = Some(Box::new(grad));
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn check_point(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.dim {
            return Err(Error::Domain(format!(
                "point has {} components, system has {}",
                y.len(),
                self.dim
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite point {y:?}")));
        }
        Ok(())
    }

    pub fn pi(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_point(y)?;
        let out = (self.pi)(y)?;
        if out.len() != self.dim {
            return Err(Error::Domain(format!(
                "pi oracle returned {} components, expected {}",
                out.len(),
                self.dim
            )));
        }
        Ok(out)
    }

    pub fn h(&self, y: &[f64]) -> Result<f64> {
        self.check_point(y)?;
        (self.h)(y)
    }

    /// `∂π_i/∂y_j`, analytic when available.
    pub fn pi_jacobian(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        self.check_point(y)?;
        if let Some(jac) = &self.pi_jacobian {
            return jac(y);
        }
        let n = self.dim;
        let mut jac = DMatrix::zeros(n, n);
        let mut yp = y.to_vec();
        for j in 0..n {
            let step = fd_step(y[j]);
            yp[j] = y[j] + step;
            let plus = self.pi(&yp)?;
            yp[j] = y[j] - step;
            let minus = self.pi(&yp)?;
            yp[j] = y[j];
            for i in 0..n {
                jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * step);
            }
        }
        Ok(jac)
    }

    pub fn h_gradient(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_point(y)?;
        if let Some(grad) = &self.h_gradient {
            return grad(y);
        }
        let mut yp = y.to_vec();
        let mut grad = Vec::with_capacity(self.dim);
        for j in 0..self.dim {
            let step = fd_step(y[j]);
            yp[j] = y[j] + step;
            let plus = self.h(&yp)?;
            yp[j] = y[j] - step;
            let minus = self.h(&yp)?;
            yp[j] = y[j];
            grad.push((plus - minus) / (2.0 * step));
        }
        Ok(grad)
    }

    /// `M_ij = ∂_iπ_j − ∂_jπ_i` without the invertibility check.
    pub fn structure_matrix(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        let jac = self.pi_jacobian(y)?;
        Ok(jac.transpose() - jac)
    }
}

fn fd_step(x: f64) -> f64 {
    1e-6 * x.abs().max(1.0)
}

/// Structure matrix at a point together with its inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonStructure {
    pub point: Vec<f64>,
    pub m: DMatrix<f64>,
    /// `(M⁻¹)_ij = {y_i, y_j}`, antisymmetrised after inversion.
    pub m_inverse: DMatrix<f64>,
    pub condition: f64,
}

impl PoissonStructure {
    /// `{a, b} = Σ ∂_i a (M⁻¹)_ij ∂_j b`.
    pub fn bracket(&self, a_gradient: &[f64], b_gradient: &[f64]) -> Result<f64> {
        let n = self.m.nrows();
        if a_gradient.len() != n || b_gradient.len() != n {
            return Err(Error::Domain(format!(
                "gradients must have {n} components, got {} and {}",
                a_gradient.len(),
                b_gradient.len()
            )));
        }
        let b = DVector::from_column_slice(b_gradient);
        let mb = &self.m_inverse * b;
        Ok(a_gradient.iter().zip(mb.iter()).map(|(x, y)| x * y).sum())
    }
}

pub fn build_structure(sys: &VariationalSystem, y: &[f64]) -> Result<PoissonStructure> {
    let m = sys.structure_matrix(y)?;
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= CONDITION_LIMIT) {
        return Err(Error::DegenerateAnsatz {
            point: y.to_vec(),
            condition,
        });
    }
    let inv = m.clone().try_inverse().ok_or_else(|| Error::DegenerateAnsatz {
        point: y.to_vec(),
        condition,
    })?;
    let m_inverse = (&inv - inv.transpose()) * 0.5;
    Ok(PoissonStructure {
        point: y.to_vec(),
        m,
        m_inverse,
        condition,
    })
}

/// `ẏ = M⁻¹∇h`.
pub fn flow_rhs(sys: &VariationalSystem, y: &[f64]) -> Result<Vec<f64>> {
    let st = build_structure(sys, y)?;
    let grad = DVector::from_vec(sys.h_gradient(y)?);
    Ok((&st.m_inverse * grad).iter().copied().collect())
}

pub fn poisson_bracket(
    sys: &VariationalSystem,
    y: &[f64],
    a_gradient: &[f64],
    b_gradient: &[f64],
) -> Result<f64> {
    build_structure(sys, y)?.bracket(a_gradient, b_gradient)
}

/// Largest cyclic sum `|∂_kM_ij + ∂_iM_jk + ∂_jM_ki|` over all index triples.
///
/// With an analytic `π` Jacobian the derivatives of `M` are central differences
/// of that Jacobian. Otherwise the second derivatives of `π` come from the
/// four-point mixed stencil, both with spacing `step`.
pub fn check_bianchi(sys: &VariationalSystem, y: &[f64], step: f64) -> Result<f64> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Domain(format!("step must be positive, got {step}")));
    }
    sys.check_point(y)?;
    let n = sys.dim;
    // dm[k][(i, j)] = ∂_k M_ij
    let mut dm = Vec::with_capacity(n);
    let mut yp = y.to_vec();
    if sys.pi_jacobian.is_some() {
        for k in 0..n {
            yp[k] = y[k] + step;
            let plus = sys.structure_matrix(&yp)?;
            yp[k] = y[k] - step;
            let minus = sys.structure_matrix(&yp)?;
            yp[k] = y[k];
            dm.push((plus - minus) / (2.0 * step));
        }
    } else {
        let center = sys.pi(y)?;
        // d2[k][a][c] = ∂_k∂_a π_c
        let mut d2 = vec![vec![vec![0.0; n]; n]; n];
        for k in 0..n {
            for a in 0..n {
                let mut corner = |sk: f64, sa: f64| -> Result<Vec<f64>> {
                    yp.copy_from_slice(y);
                    yp[k] += sk * step;
                    yp[a] += sa * step;
                    sys.pi(&yp)
                };
                let pp = corner(1.0, 1.0)?;
                let pm = corner(1.0, -1.0)?;
                let mp = corner(-1.0, 1.0)?;
                let mm = corner(-1.0, -1.0)?;
                for c in 0..n {
                    d2[k][a][c] = if k == a {
                        // The stencil degenerates to a second difference along one axis.
                        (pp[c] - 2.0 * center[c] + mm[c]) / (4.0 * step * step)
                    } else {
                        (pp[c] - pm[c] - mp[c] + mm[c]) / (4.0 * step * step)
                    };
                }
            }
        }
        for k in 0..n {
            let mut m = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    m[(i, j)] = d2[k][i][j] - d2[k][j][i];
                }
            }
            dm.push(m);
        }
    }
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let r = dm[k][(i, j)] + dm[i][(j, k)] + dm[j][(k, i)];
                worst = worst.max(r.abs());
            }
        }
    }
    Ok(worst)
}

/// Coherent-state family `y = (q, p)` with `π = (p/2, −q/2)` and `h = ½p² + ½q²`.
pub fn coherent_state_system() -> VariationalSystem {
    VariationalSystem::new(
        2,
        |y| Ok(vec![0.5 * y[1], -0.5 * y[0]]),
        |y| Ok(0.5 * (y[0] * y[0] + y[1] * y[1])),
    )
    .expect("dimension 2 is valid")
}

/// One-dimensional Gaussian factor
/// `ψ(z) = (2πħw)^{-1/4} exp[−ξ²(1/(4w) − iΠ)/ħ + ipξ/ħ]`, `ξ = z − q`,
/// with position variance `ħw`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianFactor {
    pub q: f64,
    pub p: f64,
    pub w: f64,
    pub chirp: f64,
}

/// `π` for the parameters `(q, p, w, Π)` of one factor and its moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorIntegrals {
    pub pi: [f64; 4],
    pub norm: f64,
    pub mean_z2: f64,
    pub mean_p2: f64,
}

const QUAD_POINTS: usize = 241;
const QUAD_HALF_WIDTH: f64 = 12.0;

impl GaussianFactor {
    /// Evaluates every needed integral by trapezoidal quadrature over
    /// `q ± 12σ`, which is exact to round-off for Gaussian integrands.
    pub fn integrals(&self, hbar: f64) -> Result<FactorIntegrals> {
        if !(self.w > 0.0) {
            return Err(Error::Domain(format!("Gaussian width must be positive, got {}", self.w)));
        }
        let sigma = (hbar * self.w).sqrt();
        let half = QUAD_HALF_WIDTH * sigma;
        let dz = 2.0 * half / (QUAD_POINTS - 1) as f64;
        let amp2 = 1.0 / (2.0 * std::f64::consts::PI * hbar * self.w).sqrt();
        let re_a = 1.0 / (4.0 * self.w * hbar);
        let im_a = -self.chirp / hbar;
        let mut acc = FactorIntegrals {
            pi: [0.0; 4],
            norm: 0.0,
            mean_z2: 0.0,
            mean_p2: 0.0,
        };
        for k in 0..QUAD_POINTS {
            let xi = -half + dz * k as f64;
            let wt = if k == 0 || k == QUAD_POINTS - 1 { 0.5 } else { 1.0 };
            let dens = wt * dz * amp2 * (-2.0 * re_a * xi * xi).exp();
            // Imaginary parts of ∂ ln ψ with respect to q, p, w, Π.
            let im_dq = 2.0 * xi * im_a - self.p / hbar;
            let im_dp = xi / hbar;
            let im_dchirp = xi * xi / hbar;
            acc.pi[0] -= hbar * dens * im_dq;
            acc.pi[1] -= hbar * dens * im_dp;
            acc.pi[3] -= hbar * dens * im_dchirp;
            acc.norm += dens;
            let z = self.q + xi;
            acc.mean_z2 += dens * z * z;
            // ∂_z ln ψ = −2aξ + ip/ħ with a = re_a + i·im_a
            let dre = -2.0 * re_a * xi;
            let dim = -2.0 * im_a * xi + self.p / hbar;
            acc.mean_p2 += dens * hbar * hbar * (dre * dre + dim * dim);
        }
        Ok(acc)
    }
}

/// Product trial state of the Hartree approximation with parameters
/// `y = (A, p_A, G, Π_G, D, Π_D)`: a Gaussian in the `A` coordinate
/// (centre `A`, momentum `p_A`, width `D`, chirp `Π_D`) times a centred
/// Gaussian in `x` (width `G`, chirp `Π_G`). Both `π` and `h` are computed from
/// the wave function by quadrature.
pub fn gaussian_hartree_system(params: &ModelParams) -> Result<VariationalSystem> {
    params.validate()?;
    let hbar = params.hbar;
    let h_params = *params;
    let factors = move |y: &[f64]| {
        let fa = GaussianFactor {
            q: y[0],
            p: y[1],
            w: y[4],
            chirp: y[5],
        };
        let fx = GaussianFactor {
            q: 0.0,
            p: 0.0,
            w: y[2],
            chirp: y[3],
        };
        Ok::<_, Error>((fa.integrals(hbar)?, fx.integrals(hbar)?))
    };
    VariationalSystem::new(
        6,
        move |y| {
            let (ia, ix) = factors(y)?;
            // The A factor owns (A, p_A, D, Π_D); the x factor owns (G, Π_G).
            Ok(vec![ia.pi[0], ia.pi[1], ix.pi[2], ix.pi[3], ia.pi[2], ia.pi[3]])
        },
        move |y| {
            let (ia, ix) = factors(y)?;
            let p = &h_params;
            Ok(0.5 * ia.mean_p2
                + 0.5 * ix.mean_p2
                + 0.5 * (p.m * p.m + p.e * p.e * ia.mean_z2) * ix.mean_z2)
        },
    )
}

/// Hartree state expressed in the Gaussian parameters `(A, p_A, G, Π_G, D, Π_D)`.
pub fn hartree_parameters(s: &MeanFieldState, params: &ModelParams) -> Result<Vec<f64>> {
    if s.kind() != ModelKind::Hartree {
        return Err(Error::ModelMismatch {
            expected: ModelKind::Hartree.name(),
            found: s.kind().name(),
        });
    }
    let w = crate::model::to_width_view(s, params)?;
    let (d, pi_d) = w.d.expect("Hartree state has a D sector");
    Ok(vec![w.a, w.p_a, w.g, w.pi_g, d, pi_d])
}

/// Hand-coded Hartree equations of motion mapped into Gaussian-parameter rates.
///
/// The canonical rates `(ρ̇, ṗ)` convert through `Ġ = 2ρρ̇` and
/// `Π̇ = (ṗ/(2ħ) − Πρ̇)/ρ`.
pub fn hartree_parameter_rates(s: &MeanFieldState, params: &ModelParams) -> Result<Vec<f64>> {
    let y = hartree_parameters(s, params)?;
    let rates = crate::model::eom(s, params)?;
    let h = params.hbar;
    let (rg, rd) = (s.rho_g(), s.d().expect("Hartree").rho);
    // coords order: [A, ρ_G, ρ_D, p_A, p_G, p_D]
    let (da, drg, drd, dpa, dpg, dpd) = (rates[0], rates[1], rates[2], rates[3], rates[4], rates[5]);
    Ok(vec![
        da,
        dpa,
        2.0 * rg * drg,
        (dpg / (2.0 * h) - y[3] * drg) / rg,
        2.0 * rd * drd,
        (dpd / (2.0 * h) - y[5] * drd) / rd,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn coherent_state_structure_is_canonical() {
        let sys = coherent_state_system();
        let st = build_structure(&sys, &[0.3, -1.2]).unwrap();
        assert_abs_diff_eq!(st.m[(0, 1)], -1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(st.m[(1, 0)], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(st.m[(0, 0)], 0.0);
        let rhs = flow_rhs(&sys, &[0.3, -1.2]).unwrap();
        assert_abs_diff_eq!(rhs[0], -1.2, epsilon = 1e-8);
        assert_abs_diff_eq!(rhs[1], -0.3, epsilon = 1e-8);
        let qp = poisson_bracket(&sys, &[0.3, -1.2], &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(qp, 1.0, epsilon = 1e-8);
        assert!(check_bianchi(&sys, &[0.3, -1.2], 1e-3).unwrap() < 1e-8);
    }

    #[test]
    fn odd_dimension_is_degenerate() {
        let sys = VariationalSystem::new(
            3,
            |y| Ok(vec![y[1], y[2], y[0]]),
            |y| Ok(y.iter().map(|v| v * v).sum()),
        )
        .unwrap();
        match build_structure(&sys, &[0.1, 0.2, 0.3]) {
            Err(Error::DegenerateAnsatz { point, .. }) => assert_eq!(point, vec![0.1, 0.2, 0.3]),
            other => panic!("expected degenerate ansatz, got {other:?}"),
        }
        assert!(flow_rhs(&sys, &[0.1, 0.2, 0.3]).is_err());
    }

    #[test]
    fn dimension_below_two_rejected() {
        assert!(VariationalSystem::new(1, |y| Ok(y.to_vec()), |_| Ok(0.0)).is_err());
    }

    #[test]
    fn gaussian_factor_moments() {
        let f = GaussianFactor {
            q: 0.7,
            p: -0.4,
            w: 0.3,
            chirp: 0.9,
        };
        let hbar = 0.8;
        let it = f.integrals(hbar).unwrap();
        assert_abs_diff_eq!(it.norm, 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(it.mean_z2, 0.49 + hbar * 0.3, epsilon = 1e-13);
        // ⟨p²⟩ = p² + ħ/(4w) + 4ħΠ²w
        let expect = 0.16 + hbar / 1.2 + 4.0 * hbar * 0.81 * 0.3;
        assert_abs_diff_eq!(it.mean_p2, expect, epsilon = 1e-12);
        assert_abs_diff_eq!(it.pi[0], -0.4, epsilon = 1e-13);
        assert_abs_diff_eq!(it.pi[1], 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(it.pi[2], 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(it.pi[3], -hbar * 0.3, epsilon = 1e-13);
    }

    #[test]
    fn gaussian_structure_pairs_blocks() {
        let p = ModelParams::new(1.0, 1.0, 0.7, 1).unwrap();
        let sys = gaussian_hartree_system(&p).unwrap();
        let y = [0.4, -0.2, 0.6, 0.1, 0.8, -0.3];
        let st = build_structure(&sys, &y).unwrap();
        let mut expect = DMatrix::zeros(6, 6);
        expect[(0, 1)] = -1.0;
        expect[(1, 0)] = 1.0;
        expect[(2, 3)] = -p.hbar;
        expect[(3, 2)] = p.hbar;
        expect[(4, 5)] = -p.hbar;
        expect[(5, 4)] = p.hbar;
        assert!((&st.m - &expect).amax() < 1e-8);
        let apa = poisson_bracket(&sys, &y, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0])
            .unwrap();
        assert_abs_diff_eq!(apa, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn gaussian_energy_matches_width_view() {
        let p = ModelParams::new(0.9, 1.1, 1.0, 1).unwrap();
        let sys = gaussian_hartree_system(&p).unwrap();
        let y = [0.4, -0.2, 0.6, 0.1, 0.8, -0.3];
        let w = crate::model::WidthView {
            kind: ModelKind::Hartree,
            a: y[0],
            p_a: y[1],
            g: y[2],
            pi_g: y[3],
            d: Some((y[4], y[5])),
        };
        assert_abs_diff_eq!(sys.h(&y).unwrap(), w.energy(&p), epsilon = 1e-12);
    }
}
