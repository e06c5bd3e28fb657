//! Covariance matrices, PPT symplectic spectra and logarithmic negativity.
//!
//! Coordinates are ordered `R = (x, p_x, y, p_y)` with `[x, p_x] = i`, so the
//! vacuum has `Σ = I/2`. `Σ_ij = ⟨{ΔR_i, ΔR_j}⟩/2` and the block form is
//! `Σ = [[α, μ], [μᵀ, β]]`. For `m > 0` the states are non-Gaussian and the
//! negativity derived from `Σ` is the Gaussian-state formula applied to its
//! second moments only.

use nalgebra::{Matrix2, Matrix4};
use serde::Serialize;

use crate::error::{QevError, Result};
use crate::numerics::{cached_rule, pairwise};
use crate::oracle::OracleWigner;
use crate::state::{QevParams, QevState};
use crate::wigner::ClosedFormWigner;
use crate::Pipeline;

/// First moments must vanish to this absolute tolerance (in units of σ, 1/σ).
pub const FIRST_MOMENT_TOL: f64 = 1e-10;
/// Slack below `1/2` tolerated before a covariance matrix is called unphysical.
pub const PHYSICAL_TOL: f64 = 1e-6;
/// Negative discriminants above `-DISCRIMINANT_TOL · max(1, Δ²)` are clamped to 0.
pub const DISCRIMINANT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CovarianceMatrix {
    pub entries: [[f64; 4]; 4],
}

impl CovarianceMatrix {
    /// Symmetrize `raw` as `(raw + rawᵀ)/2`.
    pub fn new(raw: [[f64; 4]; 4]) -> Result<Self> {
        let mut entries = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                let v = 0.5 * (raw[i][j] + raw[j][i]);
                if !v.is_finite() {
                    return Err(QevError::Numeric(format!("covariance entry ({i},{j}) is {v}")));
                }
                entries[i][j] = v;
            }
        }
        Ok(CovarianceMatrix { entries })
    }

    /// `Σ = I/2`.
    pub fn vacuum() -> Self {
        let mut e = [[0.0; 4]; 4];
        for (i, row) in e.iter_mut().enumerate() {
            row[i] = 0.5;
        }
        CovarianceMatrix { entries: e }
    }

    /// Two-mode squeezed vacuum with squeezing `r`.
    pub fn two_mode_squeezed(r: f64) -> Self {
        let (c, s) = ((2.0 * r).cosh() / 2.0, (2.0 * r).sinh() / 2.0);
        CovarianceMatrix { entries: [[c, 0.0, s, 0.0], [0.0, c, 0.0, -s], [s, 0.0, c, 0.0], [0.0, -s, 0.0, c]] }
    }

    /// Product of single-mode squeezed vacua with widths `σ_x`, `σ_y`.
    pub fn squeezed_product(sigma_x: f64, sigma_y: f64) -> Self {
        let mut e = [[0.0; 4]; 4];
        e[0][0] = sigma_x * sigma_x / 2.0;
        e[1][1] = 1.0 / (2.0 * sigma_x * sigma_x);
        e[2][2] = sigma_y * sigma_y / 2.0;
        e[3][3] = 1.0 / (2.0 * sigma_y * sigma_y);
        CovarianceMatrix { entries: e }
    }

    fn block(&self, r: usize, c: usize) -> Matrix2<f64> {
        let e = &self.entries;
        Matrix2::new(e[r][c], e[r][c + 1], e[r + 1][c], e[r + 1][c + 1])
    }

    pub fn alpha(&self) -> [[f64; 2]; 2] {
        self.block(0, 0).into()
    }

    pub fn beta(&self) -> [[f64; 2]; 2] {
        self.block(2, 2).into()
    }

    pub fn mu(&self) -> [[f64; 2]; 2] {
        self.block(0, 2).into()
    }

    pub fn det(&self) -> f64 {
        Matrix4::from_fn(|i, j| self.entries[i][j]).determinant()
    }

    /// `(det α, det β, det μ)`.
    pub fn block_dets(&self) -> (f64, f64, f64) {
        (self.block(0, 0).determinant(), self.block(2, 2).determinant(), self.block(0, 2).determinant())
    }

    /// Partial transpose on mode y (`p_y → -p_y`).
    pub fn partial_transpose(&self) -> Self {
        let mut e = self.entries;
        for i in 0..4 {
            if i != 3 {
                e[i][3] = -e[i][3];
                e[3][i] = -e[3][i];
            }
        }
        CovarianceMatrix { entries: e }
    }

    /// Fails unless `Σ + iΩ/2 ≥ 0`, i.e. both physical symplectic
    /// eigenvalues are at least `1/2`.
    pub fn check_physical(&self) -> Result<()> {
        let (nu_plus, nu_minus) = symplectic_eigen_physical(self)?;
        for (name, nu) in [("nu_-", nu_minus), ("nu_+", nu_plus)] {
            if nu < 0.5 - PHYSICAL_TOL {
                return Err(QevError::Numeric(format!(
                    "covariance matrix violates the uncertainty principle: {name} = {nu:.12e} < 1/2"
                )));
            }
        }
        Ok(())
    }
}

/// `tr(α J μ J β J μᵀ J)` with `J = [[0, 1], [-1, 0]]`.
fn coupling_trace(sigma: &CovarianceMatrix) -> f64 {
    let j = Matrix2::new(0.0, 1.0, -1.0, 0.0);
    let (a, b, m) = (sigma.block(0, 0), sigma.block(2, 2), sigma.block(0, 2));
    (a * j * m * j * b * j * m.transpose() * j).trace()
}

fn symplectic_pair(sigma: &CovarianceMatrix, mu_sign: f64) -> Result<(f64, f64)> {
    let (da, db, dm) = sigma.block_dets();
    let c = mu_sign * dm;
    let delta = da + db + 2.0 * c;
    // det Σ = det α det β + (det μ)² - tr(αJμJβJμᵀJ); expanding Δ² - 4 det Σ
    // this way avoids the cancellation that costs √ε near degenerate spectra.
    // det Σ itself is taken from LU, which is more accurate for strong squeezing.
    let e = coupling_trace(sigma);
    let det = sigma.det();
    let mut disc = (da - db).powi(2) + 4.0 * c * (da + db) + 4.0 * e;
    if disc < 0.0 {
        if disc < -DISCRIMINANT_TOL * (delta * delta).max(1.0) {
            return Err(QevError::Numeric(format!("negative symplectic discriminant {disc:e}")));
        }
        disc = 0.0;
    }
    let plus2 = (delta + disc.sqrt()) / 2.0;
    if !(plus2 > 0.0) || det < 0.0 {
        return Err(QevError::Numeric(format!("covariance matrix not positive: Δ = {delta:e}, det Σ = {det:e}")));
    }
    // the product form avoids cancellation in (Δ - √disc)/2
    let minus2 = det / plus2;
    Ok((plus2.sqrt(), minus2.sqrt()))
}

/// `(ν̃₊, ν̃₋)` of the partially transposed matrix.
pub fn symplectic_eigen_pt(sigma: &CovarianceMatrix) -> Result<(f64, f64)> {
    symplectic_pair(sigma, -1.0)
}

/// `(ν₊, ν₋)` of `Σ` itself.
pub fn symplectic_eigen_physical(sigma: &CovarianceMatrix) -> Result<(f64, f64)> {
    symplectic_pair(sigma, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntanglementReport {
    pub delta_pt: f64,
    pub nu_plus: f64,
    pub nu_minus: f64,
    pub nu_min: f64,
    pub separable: bool,
    pub log_negativity: f64,
}

/// `E_N = max(0, -ln 2ν̃_min)` from the PPT spectrum.
pub fn log_negativity(sigma: &CovarianceMatrix) -> Result<EntanglementReport> {
    let (da, db, dm) = sigma.block_dets();
    let (nu_plus, nu_minus) = symplectic_eigen_pt(sigma)?;
    let nu_min = nu_plus.min(nu_minus);
    Ok(EntanglementReport {
        delta_pt: da + db - 2.0 * dm,
        nu_plus,
        nu_minus,
        nu_min,
        separable: nu_min >= 0.5,
        log_negativity: (-(2.0 * nu_min).ln()).max(0.0),
    })
}

/// How oracle second moments are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MomentMethod {
    /// Phase-space integrals of the oracle Wigner function.
    #[default]
    Wigner4d,
    /// Expectation values of the amplitude and its gradient.
    Wavefunction,
}

impl std::str::FromStr for MomentMethod {
    type Err = QevError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wigner4d" | "wigner-4d" => Ok(MomentMethod::Wigner4d),
            "wavefunction" => Ok(MomentMethod::Wavefunction),
            _ => Err(QevError::Config(format!("unknown moment method {s:?} (expected wigner4d or wavefunction)"))),
        }
    }
}

impl std::fmt::Display for MomentMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MomentMethod::Wigner4d => "wigner4d",
            MomentMethod::Wavefunction => "wavefunction",
        })
    }
}

/// Raw first and second moments; `second` is not yet centred.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Moments {
    norm: f64,
    first: [f64; 4],
    second: [[f64; 4]; 4],
}

impl Moments {
    fn centred(&self, params: &QevParams) -> Result<CovarianceMatrix> {
        let scale = [params.sigma_x(), 1.0 / params.sigma_x(), params.sigma_y(), 1.0 / params.sigma_y()];
        for (i, (f, s)) in self.first.iter().zip(scale).enumerate() {
            if f.abs() > FIRST_MOMENT_TOL * s.max(1.0) {
                return Err(QevError::Numeric(format!("first moment {i} = {f:e} does not vanish")));
            }
        }
        let mut raw = self.second;
        for (i, row) in raw.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = *v / self.norm - self.first[i] * self.first[j] / (self.norm * self.norm);
            }
        }
        CovarianceMatrix::new(raw)
    }
}

fn wavefunction_moments(state: &QevState, order: usize) -> Result<Moments> {
    let rule = cached_rule(order)?;
    let (sx, sy) = (state.sigma_x(), state.sigma_y());
    let n = rule.order;
    // 15 integrands: norm, 4 first moments, 10 upper-triangle second moments
    let rows = crate::par::map_range(n, |i| {
        let x = sx * rule.nodes[i];
        let mut acc = [0.0; 15];
        for j in 0..n {
            let y = sy * rule.nodes[j];
            let (g, gx, gy) = state.stripped(x, y);
            let w = rule.weights[i] * rule.weights[j];
            let dens = g.norm_sqr();
            let ax = g.conj() * gx;
            let ay = g.conj() * gy;
            let vals = [
                dens,
                dens * x,
                ax.im,
                dens * y,
                ay.im,
                dens * x * x,
                (ax * x).im,
                (ay * x).im,
                dens * x * y,
                gx.norm_sqr(),
                (ax * y).im,
                (gx.conj() * gy).re,
                dens * y * y,
                (ay * y).im,
                gy.norm_sqr(),
            ];
            for (a, v) in acc.iter_mut().zip(vals) {
                *a += w * v;
            }
        }
        acc
    });
    let jac = sx * sy;
    let col = |c: usize| jac * pairwise(&rows.iter().map(|r| r[c]).collect::<Vec<_>>());
    let s = |c: usize| col(c);
    // upper triangle in (x, p_x, y, p_y) order
    let (xx, xpx, xpy, xy, pxpx, ypx, pxpy, yy, ypy, pypy) =
        (s(5), s(6), s(7), s(8), s(9), s(10), s(11), s(12), s(13), s(14));
    Ok(Moments {
        norm: s(0),
        first: [s(1), s(2), s(3), s(4)],
        second: [[xx, xpx, xy, xpy], [xpx, pxpx, ypx, pxpy], [xy, ypx, yy, ypy], [xpy, pxpy, ypy, pypy]],
    })
}

fn oracle_wigner_moments(state: &QevState, order: usize) -> Result<Moments> {
    let m = OracleWigner::new(state.clone())?.moments(order)?;
    Ok(Moments { norm: m.norm, first: m.first, second: m.second })
}

fn closed_form_moments(params: &QevParams, order: usize) -> Result<Moments> {
    let w = ClosedFormWigner::new(*params)?;
    let v = w.integrate(order, |p, w| {
        let r = [p.x, p.px, p.y, p.py];
        let mut out = [0.0; 15];
        out[0] = w;
        for i in 0..4 {
            out[1 + i] = w * r[i];
        }
        let mut k = 5;
        for i in 0..4 {
            for j in i..4 {
                out[k] = w * r[i] * r[j];
                k += 1;
            }
        }
        Ok(out)
    })?;
    let mut second = [[0.0; 4]; 4];
    let mut k = 5;
    for i in 0..4 {
        for j in i..4 {
            second[i][j] = v[k];
            second[j][i] = v[k];
            k += 1;
        }
    }
    Ok(Moments { norm: v[0], first: [v[1], v[2], v[3], v[4]], second })
}

/// Covariance of the oracle state by `method` with `order` nodes per axis.
pub fn second_moments(params: &QevParams, order: usize, method: MomentMethod) -> Result<CovarianceMatrix> {
    let state = QevState::new(*params)?;
    let m = match method {
        MomentMethod::Wigner4d => oracle_wigner_moments(&state, order)?,
        MomentMethod::Wavefunction => wavefunction_moments(&state, order)?,
    };
    m.centred(params)
}

/// Covariance for a pipeline. The paper-literal pipeline integrates the
/// closed form directly and ignores `method`.
pub fn covariance(
    params: &QevParams,
    pipeline: Pipeline,
    method: MomentMethod,
    order: usize,
) -> Result<CovarianceMatrix> {
    match pipeline {
        Pipeline::Oracle => second_moments(params, order, method),
        Pipeline::PaperLiteral => closed_form_moments(params, order)?.centred(params),
    }
}

/// Everything `entangle` reports for one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StateEntanglement {
    pub params: QevParams,
    pub pipeline: Pipeline,
    pub method: Option<MomentMethod>,
    pub covariance: CovarianceMatrix,
    pub physical_nu_minus: f64,
    pub report: EntanglementReport,
    /// `true` for `m > 0`, where the state is not Gaussian.
    pub gaussian_approximation: bool,
}

pub fn entangle(
    params: &QevParams,
    pipeline: Pipeline,
    method: MomentMethod,
    order: usize,
) -> Result<StateEntanglement> {
    let cov = covariance(params, pipeline, method, order)?;
    cov.check_physical()?;
    let (_, physical_nu_minus) = symplectic_eigen_physical(&cov)?;
    Ok(StateEntanglement {
        params: *params,
        pipeline,
        method: (pipeline == Pipeline::Oracle).then_some(method),
        covariance: cov,
        physical_nu_minus,
        report: log_negativity(&cov)?,
        gaussian_approximation: params.m > 0,
    })
}
