//! Ground-truth Wigner function by numerical transform of the amplitude.
//!
//! ```text
//! W(x, y, p_x, p_y) = (1/π²) ∫∫ du dv Ψ*(x+u, y+v) Ψ(x-u, y-v) e^{2i(u p_x + v p_y)}
//! ```
//!
//! [`wigner_transform`] evaluates this literally with a tensor-product
//! Gauss–Hermite rule in `(u, v)`. [`OracleWigner`] evaluates the very same
//! quadrature sum after expanding the vortex factor binomially, so that the
//! 2D sum splits into products of 1D sums per mode,
//!
//! ```text
//! W = N² Σ_{k,l} c_{kl} · M^x_{k,l}(x, p_x) · M^y_{m-k,m-l}(y, p_y),
//! M_{j,l}(x, p) = (σ/π) e^{-x²/σ²} Σ_i w_i c(x+σt_i)^j c(x-σt_i)^l e^{2iσ t_i p},
//! ```
//!
//! with `c(x) = x/(√2σ)`. Phase-space integrals of `W` (norm, purity,
//! moments, marginals) then factor into per-mode 2D integrals.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{QevError, Result};
use crate::numerics::{
    binomial, cached_rule, pairwise, QuadratureRule, DEFAULT_ORDER_2D, DEFAULT_ORDER_4D, MAX_RULE_ORDER,
};
use crate::state::{QevParams, QevState};
use crate::wigner::{ClosedFormWigner, PhasePoint, WignerFunction};
use crate::Pipeline;

/// Largest tolerated `|Im W|`.
pub const REALITY_TOL: f64 = 1e-9;
/// Inner rule order used when `|2σp| > 8`.
pub const HIGH_ORDER: usize = 96;
/// `|2σp|` above which the inner rule is raised to [`HIGH_ORDER`].
pub const OSCILLATION_THRESHOLD: f64 = 8.0;
/// Further `(|2σp| bound, order)` bands. Each order resolves `e^{iωt}`
/// against `e^{-t²}·poly(t)` to roundoff for `|ω|` up to its bound.
pub const OSCILLATION_TIERS: [(f64, usize); 3] = [(12.0, HIGH_ORDER), (24.0, 192), (44.0, MAX_RULE_ORDER)];
/// Past this `|2σp|` every factor is below `e^{-ω²/4}·poly(ω) < 1e-190`
/// and is returned as exactly zero.
pub const OSCILLATION_CUTOFF: f64 = 44.0;
/// Absolute floor under which a closed-form/oracle difference always matches.
pub const DEFAULT_ABS_FLOOR: f64 = 1e-12;

/// Literal value of the transform integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformValue {
    pub re: f64,
    pub im: f64,
}

/// Direct 2D tensor-product quadrature of the Wigner transform.
///
/// `state` must be unit-normalized (it is by construction). Fails when the
/// imaginary residual exceeds [`REALITY_TOL`].
pub fn wigner_transform(state: &QevState, point: &PhasePoint, rule: &QuadratureRule) -> Result<TransformValue> {
    point.check()?;
    if rule.order < 32 {
        return Err(QevError::Config(format!("transform rule order must be >= 32, got {}", rule.order)));
    }
    let (sx, sy) = (state.sigma_x(), state.sigma_y());
    let PhasePoint { x, y, px, py } = *point;
    let rows: Vec<Complex64> = crate::par::map_range(rule.order, |i| {
        let u = sx * rule.nodes[i];
        let mut acc = Complex64::new(0.0, 0.0);
        for (t, w) in rule.nodes.iter().zip(&rule.weights) {
            let v = sy * t;
            let a = state.stripped(x + u, y + v).0.conj();
            let b = state.stripped(x - u, y - v).0;
            acc += a * b * Complex64::from_polar(*w, 2.0 * (u * px + v * py));
        }
        acc * rule.weights[i]
    });
    let re: Vec<f64> = rows.iter().map(|c| c.re).collect();
    let im: Vec<f64> = rows.iter().map(|c| c.im).collect();
    let pre = sx * sy * (-(x * x) / (sx * sx) - (y * y) / (sy * sy)).exp() / (PI * PI);
    let out = TransformValue { re: pre * pairwise(&re), im: pre * pairwise(&im) };
    check_reality(out.im, point)?;
    Ok(out)
}

fn check_reality(im: f64, point: &PhasePoint) -> Result<()> {
    if im.abs() < REALITY_TOL {
        Ok(())
    } else {
        Err(QevError::Numeric(format!(
            "Wigner transform imaginary residual {im:e} at {point:?} exceeds {REALITY_TOL:e}"
        )))
    }
}

/// Per-mode factor tables `M_{j,l}(x, p)` for `0 ≤ j, l ≤ m`.
#[derive(Debug, Clone)]
struct ModeFactor {
    sigma: f64,
    m: u32,
    /// `(|2σp| bound, rule)` with increasing bounds; the first is the base rule.
    tiers: Vec<(f64, Arc<QuadratureRule>)>,
}

impl ModeFactor {
    fn new(sigma: f64, m: u32, base_order: usize) -> Result<Self> {
        let mut tiers = vec![(OSCILLATION_THRESHOLD, cached_rule(base_order)?)];
        for (bound, order) in OSCILLATION_TIERS {
            tiers.push((bound, cached_rule(order.max(base_order))?));
        }
        Ok(ModeFactor { sigma, m, tiers })
    }

    fn doubled(&self) -> Result<Self> {
        let tiers = self
            .tiers
            .iter()
            .map(|(b, r)| Ok((*b, cached_rule((2 * r.order).min(MAX_RULE_ORDER))?)))
            .collect::<Result<_>>()?;
        Ok(ModeFactor { sigma: self.sigma, m: self.m, tiers })
    }

    fn base(&self) -> &QuadratureRule {
        &self.tiers[0].1
    }

    /// `None` past [`OSCILLATION_CUTOFF`].
    fn rule_for(&self, p: f64) -> Option<&QuadratureRule> {
        let w = (2.0 * self.sigma * p).abs();
        self.tiers.iter().find(|(b, _)| w <= *b).map(|(_, r)| &**r)
    }

    /// `(m+1)²` values, row-major in `(j, l)`.
    fn eval(&self, x: f64, p: f64) -> Vec<Complex64> {
        let mut acc = vec![Complex64::new(0.0, 0.0); (self.m as usize + 1).pow(2)];
        let Some(rule) = self.rule_for(p) else {
            return acc;
        };
        let phases: Vec<Complex64> = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(t, w)| Complex64::from_polar(*w, 2.0 * self.sigma * t * p))
            .collect();
        self.accumulate(x, rule, &phases, &mut acc);
        let pre = self.envelope(x);
        acc.iter_mut().for_each(|v| *v *= pre);
        acc
    }

    fn envelope(&self, x: f64) -> f64 {
        self.sigma / PI * (-(x * x) / (self.sigma * self.sigma)).exp()
    }

    /// `acc[j, l] += Σ_i phases_i c(x+σt_i)^j c(x-σt_i)^l`.
    fn accumulate(&self, x: f64, rule: &QuadratureRule, phases: &[Complex64], acc: &mut [Complex64]) {
        let d = self.m as usize + 1;
        let s = self.sigma;
        let c = 1.0 / (SQRT_2 * s);
        let mut p1 = vec![1.0; d];
        let mut p2 = vec![1.0; d];
        for (t, ph) in rule.nodes.iter().zip(phases) {
            let u = s * t;
            let (a, b) = (c * (x + u), c * (x - u));
            for k in 1..d {
                p1[k] = p1[k - 1] * a;
                p2[k] = p2[k - 1] * b;
            }
            for j in 0..d {
                let pj = ph * p1[j];
                for l in 0..d {
                    acc[j * d + l] += pj * p2[l];
                }
            }
        }
    }

    /// Inner-node kernels `w_i Σ_b (sw_b/σ) e^{2iσ t_i p_b}` for `∫ dp` with
    /// the reweighted `order` rule in `p = s/σ`.
    ///
    /// Each inner sum is a trig polynomial in `p` that only tracks the true
    /// Gaussian decay while `2σ|p|` stays below the inner rule's resolvable
    /// band `√(2n)`. The outer nodes reach `√(2·order)`, so the inner rule is
    /// taken `8×` the outer order (capped at the largest tabulated rule).
    fn momentum_kernels(&self, order: usize) -> Result<(Arc<QuadratureRule>, Vec<Complex64>)> {
        let outer = cached_rule(order)?;
        let inner = cached_rule((8 * order).clamp(HIGH_ORDER, MAX_RULE_ORDER))?;
        let mut k = vec![Complex64::new(0.0, 0.0); inner.order];
        for (sb, swb) in outer.nodes.iter().zip(&outer.scaled_weights) {
            let p = sb / self.sigma;
            for ((k, t), w) in k.iter_mut().zip(&inner.nodes).zip(&inner.weights) {
                *k += Complex64::from_polar(w * swb / self.sigma, 2.0 * self.sigma * t * p);
            }
        }
        Ok((inner, k))
    }

    /// `∫ M_{j,l}(x, p) dp` for every `(j, l)` given precomputed kernels.
    fn momentum_integral(&self, x: f64, kernels: &(Arc<QuadratureRule>, Vec<Complex64>)) -> Vec<Complex64> {
        let mut acc = vec![Complex64::new(0.0, 0.0); (self.m as usize + 1).pow(2)];
        self.accumulate(x, &kernels.0, &kernels.1, &mut acc);
        let pre = self.envelope(x);
        acc.iter_mut().for_each(|v| *v *= pre);
        acc
    }
}

/// One term of the binomial expansion: `coef · M^x_{kx,lx} · M^y_{ky,ly}`.
#[derive(Debug, Clone, Copy)]
struct Term {
    coef: Complex64,
    x_idx: usize,
    y_idx: usize,
}

/// Oracle Wigner function of a [`QevState`].
#[derive(Debug, Clone)]
pub struct OracleWigner {
    state: QevState,
    x_mode: ModeFactor,
    y_mode: ModeFactor,
    terms: Vec<Term>,
}

/// Symmetrized second moments in `(x, p_x, y, p_y)` order, plus first moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseSpaceMoments {
    pub norm: f64,
    pub first: [f64; 4],
    pub second: [[f64; 4]; 4],
}

/// Quadrature grid for the momentum-side of a phase-space integral.
#[derive(Debug, Clone, Copy)]
struct PlaneGrid {
    x_scale: f64,
    p_scale: f64,
}

impl OracleWigner {
    pub fn new(state: QevState) -> Result<Self> {
        Self::with_order(state, DEFAULT_ORDER_2D)
    }

    /// `order` is the inner transform order for `|2σp| ≤ 8`; more strongly
    /// oscillating points use [`OSCILLATION_TIERS`].
    pub fn with_order(state: QevState, order: usize) -> Result<Self> {
        if order < 32 {
            return Err(QevError::Config(format!("transform rule order must be >= 32, got {order}")));
        }
        let p = *state.params();
        let m = p.m;
        let s = p.sign.value();
        let d = m as usize + 1;
        let mut terms = Vec::with_capacity(d * d);
        let i_s = Complex64::new(0.0, s);
        for k in 0..=m {
            for l in 0..=m {
                let coef = (-i_s).powu(m - k) * i_s.powu(m - l) * (binomial(m, k) * binomial(m, l));
                terms.push(Term {
                    coef,
                    x_idx: k as usize * d + l as usize,
                    y_idx: (m - k) as usize * d + (m - l) as usize,
                });
            }
        }
        Ok(OracleWigner {
            x_mode: ModeFactor::new(state.sigma_x(), m, order)?,
            y_mode: ModeFactor::new(state.sigma_y(), m, order)?,
            state,
            terms,
        })
    }

    pub fn from_params(params: QevParams) -> Result<Self> {
        Self::new(QevState::new(params)?)
    }

    pub fn state(&self) -> &QevState {
        &self.state
    }

    pub fn inner_order(&self) -> usize {
        self.x_mode.base().order
    }

    fn combine(&self, mx: &[Complex64], my: &[Complex64]) -> Complex64 {
        let n2 = self.state.n_num().powi(2);
        self.terms.iter().fold(Complex64::new(0.0, 0.0), |acc, t| acc + t.coef * mx[t.x_idx] * my[t.y_idx]) * n2
    }

    /// Complex value of the transform; the imaginary part is the residual.
    pub fn transform(&self, point: &PhasePoint) -> Result<TransformValue> {
        let w = self.transform_unchecked(point)?;
        check_reality(w.im, point)?;
        Ok(w)
    }

    /// [`Self::transform`] without the reality gate, for diagnostics.
    pub fn transform_unchecked(&self, point: &PhasePoint) -> Result<TransformValue> {
        point.check()?;
        let mx = self.x_mode.eval(point.x, point.px);
        let my = self.y_mode.eval(point.y, point.py);
        let w = self.combine(&mx, &my);
        Ok(TransformValue { re: w.re, im: w.im })
    }

    /// Same point with every inner rule order doubled.
    pub fn transform_doubled(&self, point: &PhasePoint) -> Result<TransformValue> {
        let other = OracleWigner { x_mode: self.x_mode.doubled()?, y_mode: self.y_mode.doubled()?, ..self.clone() };
        other.transform(point)
    }

    /// Tabulate one mode's factors on an `order`² grid `(x, p) = (a·t, b·s)`,
    /// pre-multiplied by the reweighted quadrature weights.
    fn mode_table(&self, mode: &ModeFactor, grid: PlaneGrid, order: usize) -> Result<Vec<(f64, f64, Vec<Complex64>)>> {
        let rule = cached_rule(order)?;
        let n = rule.order;
        let cells = crate::par::map_range(n * n, |idx| {
            let (a, b) = (idx / n, idx % n);
            let x = grid.x_scale * rule.nodes[a];
            let p = grid.p_scale * rule.nodes[b];
            let w = grid.x_scale * grid.p_scale * rule.scaled_weights[a] * rule.scaled_weights[b];
            let mut vals = mode.eval(x, p);
            vals.iter_mut().for_each(|v| *v *= w);
            (x, p, vals)
        });
        Ok(cells)
    }

    /// `∫∫ O(x, p) M_{j,l}(x, p) dx dp` for each monomial `O` in `monomials`.
    fn mode_integrals(&self, mode: &ModeFactor, order: usize, monomials: &[(i32, i32)]) -> Result<Vec<Vec<Complex64>>> {
        let grid = PlaneGrid { x_scale: mode.sigma, p_scale: 1.0 / mode.sigma };
        let table = self.mode_table(mode, grid, order)?;
        let d2 = (mode.m as usize + 1).pow(2);
        Ok(monomials
            .iter()
            .map(|&(ex, ep)| {
                (0..d2)
                    .map(|idx| {
                        let re: Vec<f64> =
                            table.iter().map(|(x, p, v)| (v[idx] * (x.powi(ex) * p.powi(ep))).re).collect();
                        let im: Vec<f64> =
                            table.iter().map(|(x, p, v)| (v[idx] * (x.powi(ex) * p.powi(ep))).im).collect();
                        Complex64::new(pairwise(&re), pairwise(&im))
                    })
                    .collect()
            })
            .collect())
    }

    /// `∫ W d⁴Γ` with an `order`⁴ variance-matched grid.
    pub fn norm(&self, order: usize) -> Result<f64> {
        Ok(self.moments(order)?.norm)
    }

    /// All first and second moments of `W` in one pass.
    pub fn moments(&self, order: usize) -> Result<PhaseSpaceMoments> {
        const MONO: [(i32, i32); 6] = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)];
        let (ix, iy) = crate::par::join(
            || self.mode_integrals(&self.x_mode, order, &MONO),
            || self.mode_integrals(&self.y_mode, order, &MONO),
        );
        let (ix, iy) = (ix?, iy?);
        let total = |a: usize, b: usize| -> Result<f64> {
            let v = self.combine(&ix[a], &iy[b]);
            if v.im.abs() > REALITY_TOL {
                return Err(QevError::Numeric(format!("moment integral imaginary residual {:e}", v.im)));
            }
            Ok(v.re)
        };
        // indices into MONO
        let (one, x1, p1, x2, xp, p2) = (0, 1, 2, 3, 4, 5);
        let norm = total(one, one)?;
        let first = [total(x1, one)?, total(p1, one)?, total(one, x1)?, total(one, p1)?];
        let mut second = [[0.0; 4]; 4];
        second[0][0] = total(x2, one)?;
        second[0][1] = total(xp, one)?;
        second[1][1] = total(p2, one)?;
        second[2][2] = total(one, x2)?;
        second[2][3] = total(one, xp)?;
        second[3][3] = total(one, p2)?;
        second[0][2] = total(x1, x1)?;
        second[0][3] = total(x1, p1)?;
        second[1][2] = total(p1, x1)?;
        second[1][3] = total(p1, p1)?;
        for i in 0..4 {
            for j in 0..i {
                second[i][j] = second[j][i];
            }
        }
        Ok(PhaseSpaceMoments { norm, first, second })
    }

    /// `(2π)² ∫ W² d⁴Γ`, 1 for a pure state.
    pub fn purity(&self, order: usize) -> Result<f64> {
        Ok((2.0 * PI).powi(2) * self.overlap(self, order)?)
    }

    /// `∫ W_self · W_other d⁴Γ`; both must share `m` and widths.
    pub fn overlap(&self, other: &OracleWigner, order: usize) -> Result<f64> {
        if self.state.params().m != other.state.params().m
            || self.state.sigma_x() != other.state.sigma_x()
            || self.state.sigma_y() != other.state.sigma_y()
        {
            return Err(QevError::Config("overlap needs identical m and widths".into()));
        }
        // W² carries e^{-2x²/σ²}: shrink the grid by √2 so it is the weight
        let gx = PlaneGrid { x_scale: self.x_mode.sigma / SQRT_2, p_scale: 1.0 / (SQRT_2 * self.x_mode.sigma) };
        let gy = PlaneGrid { x_scale: self.y_mode.sigma / SQRT_2, p_scale: 1.0 / (SQRT_2 * self.y_mode.sigma) };
        let (tx, ty) =
            crate::par::join(|| self.mode_table(&self.x_mode, gx, order), || self.mode_table(&self.y_mode, gy, order));
        let (tx, ty) = (tx?, ty?);
        // other's factors on the same grid, unweighted
        let rule = cached_rule(order)?;
        let n = rule.order;
        let ox = crate::par::map_range(n * n, |idx| {
            let (a, b) = (idx / n, idx % n);
            other.x_mode.eval(gx.x_scale * rule.nodes[a], gx.p_scale * rule.nodes[b])
        });
        let oy = crate::par::map_range(n * n, |idx| {
            let (a, b) = (idx / n, idx % n);
            other.y_mode.eval(gy.x_scale * rule.nodes[a], gy.p_scale * rule.nodes[b])
        });
        let gram = |t: &[(f64, f64, Vec<Complex64>)], o: &[Vec<Complex64>], ia: usize, ib: usize| -> Complex64 {
            let re: Vec<f64> = t.iter().zip(o).map(|((_, _, v), w)| (v[ia] * w[ib]).re).collect();
            let im: Vec<f64> = t.iter().zip(o).map(|((_, _, v), w)| (v[ia] * w[ib]).im).collect();
            Complex64::new(pairwise(&re), pairwise(&im))
        };
        let n2 = self.state.n_num().powi(2) * other.state.n_num().powi(2);
        let pairs: Vec<(usize, usize)> =
            (0..self.terms.len()).flat_map(|a| (0..other.terms.len()).map(move |b| (a, b))).collect();
        let contrib = crate::par::map_range(pairs.len(), |i| {
            let (a, b) = pairs[i];
            let (ta, tb) = (self.terms[a], other.terms[b]);
            ta.coef * tb.coef * gram(&tx, &ox, ta.x_idx, tb.x_idx) * gram(&ty, &oy, ta.y_idx, tb.y_idx)
        });
        let re: Vec<f64> = contrib.iter().map(|c| c.re).collect();
        let im: Vec<f64> = contrib.iter().map(|c| c.im).collect();
        let (re, im) = (n2 * pairwise(&re), n2 * pairwise(&im));
        if im.abs() > REALITY_TOL {
            return Err(QevError::Numeric(format!("overlap imaginary residual {im:e}")));
        }
        Ok(re)
    }

    /// `∫∫ W dp_x dp_y` on the tensor grid `xs × ys`, row-major in `y`.
    pub fn position_marginal(&self, xs: &[f64], ys: &[f64], order: usize) -> Result<Vec<f64>> {
        let (kx, ky) = (self.x_mode.momentum_kernels(order)?, self.y_mode.momentum_kernels(order)?);
        let lx = crate::par::map_range(xs.len(), |i| self.x_mode.momentum_integral(xs[i], &kx));
        let ly = crate::par::map_range(ys.len(), |i| self.y_mode.momentum_integral(ys[i], &ky));
        let mut out = Vec::with_capacity(xs.len() * ys.len());
        for (iy, y) in ys.iter().enumerate() {
            for (ix, x) in xs.iter().enumerate() {
                let v = self.combine(&lx[ix], &ly[iy]);
                check_reality(v.im, &PhasePoint::new(*x, *y, 0.0, 0.0))?;
                out.push(v.re);
            }
        }
        Ok(out)
    }
}

impl WignerFunction for OracleWigner {
    fn value(&self, point: &PhasePoint) -> Result<f64> {
        Ok(self.transform(point)?.re)
    }

    fn params(&self) -> &QevParams {
        self.state.params()
    }

    fn pipeline(&self) -> Pipeline {
        Pipeline::Oracle
    }
}

/// Result of comparing the oracle's position marginal with `|Ψ|²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarginalReport {
    pub grid_points: usize,
    pub max_abs_deviation: f64,
    pub peak_intensity: f64,
}

/// Compare `∫∫ W dp_x dp_y` of the oracle with `|Ψ(x, y)|²` on an `n × n`
/// grid over `±3σ` in each position axis.
pub fn marginal_check(w: &OracleWigner, n: usize, order: usize) -> Result<MarginalReport> {
    let state = w.state();
    let (sx, sy) = (state.sigma_x(), state.sigma_y());
    let ax = crate::wigner::Axis::new(-3.0 * sx, 3.0 * sx, n)?;
    let ay = crate::wigner::Axis::new(-3.0 * sy, 3.0 * sy, n)?;
    let xs: Vec<f64> = (0..n).map(|i| ax.coord(i)).collect();
    let ys: Vec<f64> = (0..n).map(|i| ay.coord(i)).collect();
    let got = w.position_marginal(&xs, &ys, order)?;
    let mut max_dev: f64 = 0.0;
    let mut peak: f64 = 0.0;
    for (iy, y) in ys.iter().enumerate() {
        for (ix, x) in xs.iter().enumerate() {
            let want = state.intensity(*x, *y)?;
            max_dev = max_dev.max((got[iy * n + ix] - want).abs());
            peak = peak.max(want);
        }
    }
    Ok(MarginalReport { grid_points: n * n, max_abs_deviation: max_dev, peak_intensity: peak })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Match,
    Mismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValidationRecord {
    pub index: usize,
    pub point: PhasePoint,
    pub closed_value: f64,
    pub oracle_value: f64,
    pub abs_err: f64,
    pub rel_err: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValidationSummary {
    pub n_match: usize,
    pub n_mismatch: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureMeta {
    pub closed_form_order: usize,
    pub oracle_inner_order: usize,
    pub oracle_high_order: usize,
    /// Largest change of an oracle value when its inner orders are doubled.
    pub oracle_doubling_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub params: QevParams,
    pub seed: u64,
    pub tol: f64,
    pub abs_floor: f64,
    pub k_num: f64,
    pub k_ratio: f64,
    pub n_num_ratio: f64,
    pub records: Vec<ValidationRecord>,
    pub summary: ValidationSummary,
    pub quadrature: QuadratureMeta,
}

impl ValidationReport {
    pub fn all_match(&self) -> bool {
        self.summary.n_mismatch == 0
    }
}

/// Deterministic sample point `index` of stream `seed`.
///
/// Each point owns its own ChaCha stream, so points can be generated in any
/// order or in parallel.
pub fn sample_point(params: &QevParams, seed: u64, index: usize) -> PhasePoint {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let (sx, sy) = (params.sigma_x(), params.sigma_y());
    let cap = 4.0 / sx.min(sy);
    let mut z = [0.0; 4];
    for v in &mut z {
        *v = StandardNormal.sample(&mut rng);
    }
    PhasePoint::new(sx * z[0], sy * z[1], (z[2] / sx).clamp(-cap, cap), (z[3] / sy).clamp(-cap, cap))
}

/// Compare the normalized closed form with the oracle at seeded points.
pub fn validate_closed_form(params: &QevParams, n_points: usize, seed: u64, tol: f64) -> Result<ValidationReport> {
    validate_closed_form_with(params, n_points, seed, tol, DEFAULT_ABS_FLOOR, DEFAULT_ORDER_4D)
}

pub fn validate_closed_form_with(
    params: &QevParams,
    n_points: usize,
    seed: u64,
    tol: f64,
    abs_floor: f64,
    closed_order: usize,
) -> Result<ValidationReport> {
    if n_points == 0 {
        return Err(QevError::Config("validation needs at least one point".into()));
    }
    if !(tol > 0.0 && tol.is_finite()) || !(abs_floor >= 0.0) {
        return Err(QevError::Config(format!("tolerances must be positive, got tol={tol}, floor={abs_floor}")));
    }
    let closed = ClosedFormWigner::with_order(*params, closed_order)?;
    let oracle = OracleWigner::from_params(*params)?;
    let rows = crate::par::try_map_range(n_points, |i| -> Result<(ValidationRecord, f64)> {
        let point = sample_point(params, seed, i);
        let ctx = |e: QevError| e.context(format!("validation point {i} {point:?}"));
        let c = closed.value(&point).map_err(ctx)?;
        let o = oracle.transform(&point).map_err(ctx)?.re;
        let od = oracle.transform_doubled(&point).map_err(ctx)?.re;
        let abs_err = (c - o).abs();
        let rel_err = if o != 0.0 {
            abs_err / o.abs()
        } else if abs_err == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        let verdict = if rel_err <= tol || abs_err <= abs_floor { Verdict::Match } else { Verdict::Mismatch };
        Ok((
            ValidationRecord { index: i, point, closed_value: c, oracle_value: o, abs_err, rel_err, verdict },
            (o - od).abs(),
        ))
    })?;
    let records: Vec<ValidationRecord> = rows.iter().map(|r| r.0).collect();
    let n_match = records.iter().filter(|r| r.verdict == Verdict::Match).count();
    let summary = ValidationSummary {
        n_match,
        n_mismatch: records.len() - n_match,
        max_rel_err: records.iter().map(|r| r.rel_err).fold(0.0, f64::max),
        max_abs_err: records.iter().map(|r| r.abs_err).fold(0.0, f64::max),
    };
    Ok(ValidationReport {
        params: *params,
        seed,
        tol,
        abs_floor,
        k_num: closed.k_num(),
        k_ratio: closed.k_ratio(),
        n_num_ratio: oracle.state().normalization().printed_ratio,
        records,
        summary,
        quadrature: QuadratureMeta {
            closed_form_order: closed_order,
            oracle_inner_order: oracle.inner_order(),
            oracle_high_order: HIGH_ORDER,
            oracle_doubling_delta: rows.iter().map(|r| r.1).fold(0.0, f64::max),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wigner::squeezed_vacuum_wigner;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn oracle(m: u32, sx: f64, sy: f64) -> OracleWigner {
        OracleWigner::from_params(QevParams::from_sigmas(m, sx, sy).unwrap()).unwrap()
    }

    #[test]
    fn vacuum_peak() {
        let o = oracle(0, 1.0, 1.0);
        assert!((o.value(&PhasePoint::default()).unwrap() - 1.0 / (PI * PI)).abs() < 1e-9);
    }

    #[test]
    fn m0_matches_squeezed_vacuum_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for (sx, sy) in [(0.5, 2.0), (5.0, 3.0)] {
            let o = oracle(0, sx, sy);
            for _ in 0..50 {
                let p = PhasePoint::new(
                    rng.random_range(-2.0..2.0) * sx,
                    rng.random_range(-2.0..2.0) * sy,
                    rng.random_range(-2.0..2.0) / sx,
                    rng.random_range(-2.0..2.0) / sy,
                );
                let want = squeezed_vacuum_wigner(sx, p.x, p.px) * squeezed_vacuum_wigner(sy, p.y, p.py);
                assert!((o.value(&p).unwrap() - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn factorized_equals_direct_transform() {
        let rule = cached_rule(64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (m, sx, sy) in [(1, 1.0, 1.0), (3, 5.0, 3.0), (4, 0.5, 1.5)] {
            let o = oracle(m, sx, sy);
            for _ in 0..10 {
                let p = PhasePoint::new(
                    rng.random_range(-2.0..2.0) * sx,
                    rng.random_range(-2.0..2.0) * sy,
                    rng.random_range(-1.5..1.5) / sx,
                    rng.random_range(-1.5..1.5) / sy,
                );
                let a = o.transform(&p).unwrap();
                let b = wigner_transform(o.state(), &p, &rule).unwrap();
                assert!((a.re - b.re).abs() < 1e-13, "m={m}: {} vs {}", a.re, b.re);
            }
        }
    }

    #[test]
    fn transform_requires_order_32() {
        let o = oracle(1, 1.0, 1.0);
        let r = cached_rule(16).unwrap();
        assert!(matches!(wigner_transform(o.state(), &PhasePoint::default(), &r), Err(QevError::Config(_))));
    }

    #[test]
    fn norm_and_purity() {
        for (m, sx, sy) in [(0, 1.0, 1.0), (3, 5.0, 3.0), (5, 0.5, 1.0)] {
            let o = oracle(m, sx, sy);
            assert!((o.norm(32).unwrap() - 1.0).abs() < 1e-10, "m={m}");
            assert!((o.purity(32).unwrap() - 1.0).abs() < 1e-6, "m={m}");
        }
    }

    #[test]
    fn mixture_loses_purity() {
        let p = QevParams::from_sigmas(2, 1.0, 2.0).unwrap();
        let a = OracleWigner::from_params(p).unwrap();
        let b = OracleWigner::from_params(p.with_sign(crate::state::VortexSign::Minus)).unwrap();
        let aa = a.overlap(&a, 32).unwrap();
        let bb = b.overlap(&b, 32).unwrap();
        let ab = a.overlap(&b, 32).unwrap();
        let mixed = (2.0 * PI).powi(2) * 0.25 * (aa + bb + 2.0 * ab);
        assert!(mixed < 1.0 - 1e-3, "mixed purity {mixed}");
    }

    #[test]
    fn marginals_reproduce_intensity() {
        let r = marginal_check(&oracle(0, 2.0, 0.5), 17, 32).unwrap();
        assert!(r.max_abs_deviation < 1e-8);
        let r = marginal_check(&oracle(3, 5.0, 3.0), 17, 32).unwrap();
        assert!(r.max_abs_deviation < 1e-6);
    }

    #[test]
    fn sampler_is_deterministic_and_capped() {
        let p = QevParams::from_sigmas(1, 5.0, 3.0).unwrap();
        for i in 0..200 {
            let a = sample_point(&p, 7, i);
            assert_eq!(a, sample_point(&p, 7, i));
            assert!(a.px.abs() <= 4.0 / 3.0 && a.py.abs() <= 4.0 / 3.0);
        }
        assert_ne!(sample_point(&p, 7, 0), sample_point(&p, 8, 0));
    }

    #[test]
    fn validation_m0_all_match() {
        let p = QevParams::from_sigmas(0, 2.0, 0.7).unwrap();
        let r = validate_closed_form(&p, 100, 1, 1e-6).unwrap();
        assert_eq!(r.summary.n_match, 100, "{:?}", r.summary);
        let again = validate_closed_form(&p, 100, 1, 1e-6).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn validation_rejects_bad_config() {
        let p = QevParams::from_sigmas(0, 1.0, 1.0).unwrap();
        assert!(validate_closed_form(&p, 0, 1, 1e-6).is_err());
        assert!(validate_closed_form(&p, 5, 1, 0.0).is_err());
    }

    #[test]
    fn validation_summary_is_consistent() {
        let p = QevParams::from_sigmas(1, 1.0, 1.0).unwrap();
        let r = validate_closed_form(&p, 40, 3, 1e-6).unwrap();
        assert_eq!(r.summary.n_match + r.summary.n_mismatch, r.records.len());
        for rec in &r.records {
            let want = rec.rel_err <= r.tol || rec.abs_err <= r.abs_floor;
            assert_eq!(rec.verdict == Verdict::Match, want);
        }
        assert_relative_eq!(r.summary.max_rel_err, r.records.iter().map(|x| x.rel_err).fold(0.0, f64::max));
    }
}
