//! Closed-form four-dimensional Wigner function of the vortex state, its
//! two-dimensional slices and a local-extrema scan for slice structure.
//!
//! The closed form is a Gaussian in one set of scaled coordinates multiplied
//! by `L_m^{-1/2}` of a squared linear form in a second set:
//!
//! ```text
//! W = K · exp[-(X1² + Y1² + Px1² + Py1²)] · L_m^{-1/2}[(Px2 + Py2 - X2 - Y2)² / (σ_x² + σ_y²)]
//! ```
//!
//! The scaled coordinates are applied literally by [`scaled_vars`], which
//! takes momenta in the printed momentum unit. [`PhasePoint`] momenta are in
//! ħ = 1 units (vacuum variance ½) and are multiplied by
//! [`PRINTED_MOMENTUM_SCALE`] before the substitution; with that unit the
//! `m = 0` form is exactly the pure two-mode squeezed-vacuum Wigner function.
//! `K` is replaced by a numerically determined `K_num` that makes
//! `∫ W d⁴Γ = 1`; the printed `K` is kept as a reference via [`printed_k`].

use std::collections::{HashMap, VecDeque};
use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;
use std::sync::{OnceLock, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{QevError, Result};
use crate::numerics::{cached_rule, factorial, gamma_half_integer, laguerre_assoc_half, pairwise, DEFAULT_ORDER_4D};
use crate::state::QevParams;
use crate::Pipeline;

/// Printed momentum = `PRINTED_MOMENTUM_SCALE` × ħ=1 momentum.
pub const PRINTED_MOMENTUM_SCALE: f64 = SQRT_2;

/// A point `(x, y, p_x, p_y)` in phase space, ħ = 1.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: f64,
    pub y: f64,
    pub px: f64,
    pub py: f64,
}

impl PhasePoint {
    pub fn new(x: f64, y: f64, px: f64, py: f64) -> Self {
        PhasePoint { x, y, px, py }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.px.is_finite() && self.py.is_finite()
    }

    pub(crate) fn check(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(QevError::Domain(format!("phase-space point not finite: {self:?}")))
        }
    }

    /// Same point with momenta expressed in the printed momentum unit.
    pub fn to_printed_momentum(&self) -> Self {
        PhasePoint { px: self.px * PRINTED_MOMENTUM_SCALE, py: self.py * PRINTED_MOMENTUM_SCALE, ..*self }
    }
}

/// The two sets of scaled coordinates entering the closed form.
#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScaledVars {
    pub X1: f64,
    pub Y1: f64,
    pub Px1: f64,
    pub Py1: f64,
    pub X2: f64,
    pub Y2: f64,
    pub Px2: f64,
    pub Py2: f64,
}

/// Apply the eight scaled-variable maps exactly as printed.
///
/// `point` momenta are taken in the printed unit, see
/// [`PhasePoint::to_printed_momentum`].
pub fn scaled_vars(params: &QevParams, point: &PhasePoint) -> ScaledVars {
    let (sx, sy) = (params.sigma_x(), params.sigma_y());
    ScaledVars {
        X1: point.x / sx,
        Y1: point.y / sy,
        Px1: sx * point.px / SQRT_2,
        Py1: sy * point.py / SQRT_2,
        X2: sy * point.x / (2.0 * sx),
        Y2: sx * point.y / (2.0 * sy),
        Px2: sy.powi(3) * point.px / SQRT_2,
        Py2: sx.powi(3) * point.py / SQRT_2,
    }
}

/// The printed normalization `K`, sign factor `[-2(σ_x²+σ_y²)]^m` included.
pub fn printed_k(params: &QevParams) -> f64 {
    let m = params.m;
    let s2 = params.sigma_x().powi(2) + params.sigma_y().powi(2);
    2f64.powi(m as i32 - 4) * factorial(m) / (PI * PI.sqrt() * gamma_half_integer(m)) * (-2.0 * s2).powi(m as i32)
}

/// Anything that evaluates a two-mode Wigner function pointwise.
pub trait WignerFunction: Sync {
    fn value(&self, point: &PhasePoint) -> Result<f64>;
    fn params(&self) -> &QevParams;
    fn pipeline(&self) -> Pipeline;
}

/// The closed form with numerically fixed normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormWigner {
    params: QevParams,
    k_num: f64,
    order: usize,
}

type KCache = RwLock<HashMap<(u32, u64, u64, usize), f64>>;

impl ClosedFormWigner {
    pub fn new(params: QevParams) -> Result<Self> {
        Self::with_order(params, DEFAULT_ORDER_4D)
    }

    /// Normalize with an `order`-point rule per axis. `K_num` is cached per
    /// `(m, ζ_x, ζ_y, order)`.
    pub fn with_order(params: QevParams, order: usize) -> Result<Self> {
        params.validate()?;
        params.require_canonical()?;
        static CACHE: OnceLock<KCache> = OnceLock::new();
        let cache = CACHE.get_or_init(|| RwLock::new(HashMap::new()));
        let key = (params.m, params.zeta_x.to_bits(), params.zeta_y.to_bits(), order);
        let cached = cache.read().expect("K cache poisoned").get(&key).copied();
        let k_num = match cached {
            Some(k) => k,
            None => {
                let unit = ClosedFormWigner { params, k_num: 1.0, order };
                let [total] = unit.integrate(order, |_, w| Ok([w]))?;
                if !(total.is_finite() && total.abs() > 1e-300) {
                    return Err(QevError::Numeric(format!("closed-form normalization integral degenerate: {total:e}")));
                }
                let k = 1.0 / total;
                cache.write().expect("K cache poisoned").insert(key, k);
                k
            }
        };
        Ok(ClosedFormWigner { params, k_num, order })
    }

    pub fn k_num(&self) -> f64 {
        self.k_num
    }

    /// `K_num / K_printed`.
    pub fn k_ratio(&self) -> f64 {
        self.k_num / printed_k(&self.params)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Closed form split as `(gaussian exponent, laguerre factor)`, so that
    /// `value = K_num · exp(-exponent) · laguerre`.
    pub fn parts(&self, point: &PhasePoint) -> Result<(f64, f64)> {
        point.check()?;
        let sv = scaled_vars(&self.params, &point.to_printed_momentum());
        let s2 = self.params.sigma_x().powi(2) + self.params.sigma_y().powi(2);
        let lin = sv.Px2 + sv.Py2 - sv.X2 - sv.Y2;
        let arg = lin * lin / s2;
        if !(arg >= 0.0) {
            return Err(QevError::Numeric(format!("Laguerre argument negative or NaN: {arg}")));
        }
        let exponent = sv.X1 * sv.X1 + sv.Y1 * sv.Y1 + sv.Px1 * sv.Px1 + sv.Py1 * sv.Py1;
        Ok((exponent, laguerre_assoc_half(self.params.m, arg)?))
    }

    /// `∫ f(Γ, W(Γ)) d⁴Γ` on an `order`⁴ tensor grid.
    ///
    /// The grid is variance-matched to the Gaussian factor
    /// (`x = σ_x t`, `p_x = t/σ_x`, likewise for y), which turns that factor
    /// into the Hermite weight, so only the polynomial part is sampled.
    pub fn integrate<const N: usize, F>(&self, order: usize, f: F) -> Result<[f64; N]>
    where
        F: Fn(&PhasePoint, f64) -> Result<[f64; N]> + Sync,
    {
        let rule = cached_rule(order)?;
        let (sx, sy) = (self.params.sigma_x(), self.params.sigma_y());
        let scales = [sx, sy, 1.0 / sx, 1.0 / sy];
        let jac: f64 = scales.iter().product();
        let n = rule.order;
        let outer = crate::par::try_map_range(n, |i| -> Result<[f64; N]> {
            let mut acc = [0.0; N];
            let x = scales[0] * rule.nodes[i];
            for j in 0..n {
                let y = scales[1] * rule.nodes[j];
                let wij = rule.weights[i] * rule.weights[j];
                for k in 0..n {
                    let px = scales[2] * rule.nodes[k];
                    let wijk = wij * rule.weights[k];
                    for l in 0..n {
                        let p = PhasePoint::new(x, y, px, scales[3] * rule.nodes[l]);
                        let (_, lag) = self.parts(&p)?;
                        let vals = f(&p, self.k_num * lag)?;
                        let w = wijk * rule.weights[l];
                        for (a, v) in acc.iter_mut().zip(vals) {
                            *a += w * v;
                        }
                    }
                }
            }
            Ok(acc)
        })?;
        let mut out = [0.0; N];
        for (c, o) in out.iter_mut().enumerate() {
            let col: Vec<f64> = outer.iter().map(|a| a[c]).collect();
            *o = jac * pairwise(&col);
        }
        Ok(out)
    }

    /// `∫ W d⁴Γ` at `order`; 1 at the construction order by definition.
    pub fn norm(&self, order: usize) -> Result<f64> {
        Ok(self.integrate(order, |_, w| Ok([w]))?[0])
    }
}

impl WignerFunction for ClosedFormWigner {
    fn value(&self, point: &PhasePoint) -> Result<f64> {
        let (e, lag) = self.parts(point)?;
        Ok(self.k_num * (-e).exp() * lag)
    }

    fn params(&self) -> &QevParams {
        &self.params
    }

    fn pipeline(&self) -> Pipeline {
        Pipeline::PaperLiteral
    }
}

/// Single-mode squeezed-vacuum Wigner function `(1/π) e^{-x²/σ² - σ²p²}`.
pub fn squeezed_vacuum_wigner(sigma: f64, x: f64, p: f64) -> f64 {
    (-(x * x) / (sigma * sigma) - sigma * sigma * p * p).exp() / PI
}

/// Evaluate the paper-literal closed form at one point.
pub fn wigner_closed(params: &QevParams, point: &PhasePoint) -> Result<f64> {
    ClosedFormWigner::new(*params)?.value(point)
}

/// Phase-space coordinate carried by a slice axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Coord {
    X,
    Y,
    Px,
    Py,
}

impl Coord {
    pub fn is_momentum(self) -> bool {
        matches!(self, Coord::Px | Coord::Py)
    }

    pub fn name(self) -> &'static str {
        match self {
            Coord::X => "x",
            Coord::Y => "y",
            Coord::Px => "p_x",
            Coord::Py => "p_y",
        }
    }
}

/// The six coordinate planes through the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Plane {
    XY,
    PxPy,
    XPx,
    YPy,
    XPy,
    YPx,
}

impl Plane {
    pub const ALL: [Plane; 6] = [Plane::XY, Plane::PxPy, Plane::XPx, Plane::YPy, Plane::XPy, Plane::YPx];

    pub fn tag(self) -> &'static str {
        match self {
            Plane::XY => "xy",
            Plane::PxPy => "pxpy",
            Plane::XPx => "xpx",
            Plane::YPy => "ypy",
            Plane::XPy => "xpy",
            Plane::YPx => "ypx",
        }
    }

    /// `(u, v)` coordinates; `u` runs along rows, `v` selects the row.
    pub fn axes(self) -> (Coord, Coord) {
        match self {
            Plane::XY => (Coord::X, Coord::Y),
            Plane::PxPy => (Coord::Px, Coord::Py),
            Plane::XPx => (Coord::X, Coord::Px),
            Plane::YPy => (Coord::Y, Coord::Py),
            Plane::XPy => (Coord::X, Coord::Py),
            Plane::YPx => (Coord::Y, Coord::Px),
        }
    }

    pub fn point(self, u: f64, v: f64) -> PhasePoint {
        let (cu, cv) = self.axes();
        let mut p = PhasePoint::default();
        for (c, val) in [(cu, u), (cv, v)] {
            match c {
                Coord::X => p.x = val,
                Coord::Y => p.y = val,
                Coord::Px => p.px = val,
                Coord::Py => p.py = val,
            }
        }
        p
    }
}

impl fmt::Display for Plane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Plane {
    type Err = QevError;

    fn from_str(s: &str) -> Result<Self> {
        Plane::ALL
            .into_iter()
            .find(|p| p.tag() == s)
            .ok_or_else(|| QevError::Config(format!("unknown plane '{s}' (expected xy|pxpy|xpx|ypy|xpy|ypx)")))
    }
}

/// Uniform sampling `min..=max` with `count` points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, count: usize) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && min < max) || count < 2 {
            return Err(QevError::Config(format!(
                "axis needs finite min < max and count >= 2, got ({min}, {max}, {count})"
            )));
        }
        Ok(Axis { min, max, count })
    }

    pub fn coord(&self, i: usize) -> f64 {
        if i + 1 == self.count {
            self.max
        } else {
            self.min + (self.max - self.min) * i as f64 / (self.count - 1) as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub u: Axis,
    pub v: Axis,
}

/// Default points per axis for slices; odd so the origin is a sample.
pub const DEFAULT_SLICE_POINTS: usize = 257;

impl GridSpec {
    /// `±4σ_max` on position axes and `±4/σ_min` on momentum axes.
    pub fn default_window(params: &QevParams, plane: Plane, n: usize) -> Result<Self> {
        let (sx, sy) = (params.sigma_x(), params.sigma_y());
        let pos = 4.0 * sx.max(sy);
        let mom = 4.0 / sx.min(sy);
        let (cu, cv) = plane.axes();
        let half = |c: Coord| if c.is_momentum() { mom } else { pos };
        Ok(GridSpec { u: Axis::new(-half(cu), half(cu), n)?, v: Axis::new(-half(cv), half(cv), n)? })
    }
}

/// A sampled slice, row-major with `v` selecting the row.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D {
    pub plane: Plane,
    pub axis_u: Axis,
    pub axis_v: Axis,
    pub values: Vec<f64>,
}

impl Grid2D {
    pub fn get(&self, iu: usize, iv: usize) -> f64 {
        self.values[iv * self.axis_u.count + iu]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Evaluate `w` on a plane through the origin, the other two coordinates
/// pinned to zero. Rows are evaluated in parallel.
pub fn wigner_slice<W: WignerFunction + ?Sized>(w: &W, plane: Plane, spec: &GridSpec) -> Result<Grid2D> {
    let (nu, nv) = (spec.u.count, spec.v.count);
    if nu < 2 || nv < 2 {
        return Err(QevError::Config("grid needs at least 2 points per axis".into()));
    }
    let rows = crate::par::try_map_range(nv, |iv| -> Result<Vec<f64>> {
        let v = spec.v.coord(iv);
        (0..nu).map(|iu| w.value(&plane.point(spec.u.coord(iu), v))).collect()
    })?;
    let values: Vec<f64> = rows.into_iter().flatten().collect();
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(QevError::Numeric(format!("slice produced non-finite value {bad}")));
    }
    Ok(Grid2D { plane, axis_u: spec.u, axis_v: spec.v, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ExtremumKind {
    Max,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Extremum {
    pub kind: ExtremumKind,
    pub u: f64,
    pub v: f64,
    pub value: f64,
}

/// Plateau tolerance for [`slice_extrema`].
pub const PLATEAU_TOL: f64 = 1e-12;

/// Interior strict local extrema by 8-neighbour comparison.
///
/// Cells connected through neighbours within [`PLATEAU_TOL`] form a plateau
/// that is reported once at its centroid; plateaus touching the border are
/// not interior. Sorted by `|value|` descending.
pub fn slice_extrema(grid: &Grid2D) -> Result<Vec<Extremum>> {
    slice_extrema_with_tol(grid, PLATEAU_TOL)
}

pub fn slice_extrema_with_tol(grid: &Grid2D, tol: f64) -> Result<Vec<Extremum>> {
    let (nu, nv) = (grid.axis_u.count, grid.axis_v.count);
    if nu < 5 || nv < 5 || grid.values.len() != nu * nv {
        return Err(QevError::Config(format!("extrema scan needs at least a 5x5 grid, got {nu}x{nv}")));
    }
    let idx = |iu: usize, iv: usize| iv * nu + iu;
    let neighbours = |iu: usize, iv: usize| {
        let mut out = Vec::with_capacity(8);
        for dv in -1i64..=1 {
            for du in -1i64..=1 {
                if du == 0 && dv == 0 {
                    continue;
                }
                let (u, v) = (iu as i64 + du, iv as i64 + dv);
                if u >= 0 && v >= 0 && (u as usize) < nu && (v as usize) < nv {
                    out.push((u as usize, v as usize));
                }
            }
        }
        out
    };
    let mut seen = vec![false; nu * nv];
    let mut found = Vec::new();
    for iv in 0..nv {
        for iu in 0..nu {
            if seen[idx(iu, iv)] {
                continue;
            }
            // flood the plateau containing this cell
            let mut cells = vec![(iu, iv)];
            let mut queue = VecDeque::from([(iu, iv)]);
            seen[idx(iu, iv)] = true;
            let mut higher = false;
            let mut lower = false;
            let mut border = false;
            while let Some((cu, cv)) = queue.pop_front() {
                let c = grid.values[idx(cu, cv)];
                if cu == 0 || cv == 0 || cu + 1 == nu || cv + 1 == nv {
                    border = true;
                }
                for (au, av) in neighbours(cu, cv) {
                    let a = grid.values[idx(au, av)];
                    if (a - c).abs() <= tol {
                        if !seen[idx(au, av)] {
                            seen[idx(au, av)] = true;
                            cells.push((au, av));
                            queue.push_back((au, av));
                        }
                    } else if a > c {
                        higher = true;
                    } else {
                        lower = true;
                    }
                }
            }
            if border || (higher && lower) || (!higher && !lower) {
                continue;
            }
            let n = cells.len() as f64;
            let (su, sv, sval) = cells.iter().fold((0.0, 0.0, 0.0), |(a, b, c), &(cu, cv)| {
                (a + grid.axis_u.coord(cu), b + grid.axis_v.coord(cv), c + grid.values[idx(cu, cv)])
            });
            found.push(Extremum {
                kind: if lower { ExtremumKind::Max } else { ExtremumKind::Min },
                u: su / n,
                v: sv / n,
                value: sval / n,
            });
        }
    }
    found.sort_by(|a, b| b.value.abs().total_cmp(&a.value.abs()).then(a.v.total_cmp(&b.v)).then(a.u.total_cmp(&b.u)));
    Ok(found)
}

/// Maxima/minima counts of an extrema list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ExtremaCounts {
    pub maxima: usize,
    pub minima: usize,
}

pub fn count_extrema(ext: &[Extremum]) -> ExtremaCounts {
    ExtremaCounts {
        maxima: ext.iter().filter(|e| e.kind == ExtremumKind::Max).count(),
        minima: ext.iter().filter(|e| e.kind == ExtremumKind::Min).count(),
    }
}

/// Number of maxima strictly between the outermost minima when projected on
/// the direction `(du, dv)`.
pub fn maxima_between_minima(ext: &[Extremum], direction: (f64, f64)) -> usize {
    let proj = |e: &Extremum| e.u * direction.0 + e.v * direction.1;
    let mins: Vec<f64> = ext.iter().filter(|e| e.kind == ExtremumKind::Min).map(proj).collect();
    if mins.len() < 2 {
        return 0;
    }
    let lo = mins.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = mins.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    ext.iter().filter(|e| e.kind == ExtremumKind::Max).map(proj).filter(|&s| s > lo && s < hi).count()
}

/// Gradient of the Laguerre linear form `Px2 + Py2 - X2 - Y2` within a
/// plane, in ħ = 1 coordinates.
pub fn laguerre_direction(params: &QevParams, plane: Plane) -> (f64, f64) {
    let (sx, sy) = (params.sigma_x(), params.sigma_y());
    let coef = |c: Coord| match c {
        Coord::X => -sy / (2.0 * sx),
        Coord::Y => -sx / (2.0 * sy),
        Coord::Px => sy.powi(3) * PRINTED_MOMENTUM_SCALE / SQRT_2,
        Coord::Py => sx.powi(3) * PRINTED_MOMENTUM_SCALE / SQRT_2,
    };
    let (cu, cv) = plane.axes();
    (coef(cu), coef(cv))
}

/// Polish grid extrema on the continuous function and merge those that
/// converge to the same point.
///
/// Each extremum is moved by a compass search (initial step one cell,
/// shrinking to `1e-6` cells) that only accepts strict improvements. Points
/// of the same kind that end within half a cell of each other are one
/// extremum; points that reach the window edge are dropped as non-interior.
pub fn refine_extrema<W: WignerFunction + ?Sized>(w: &W, grid: &Grid2D, ext: &[Extremum]) -> Result<Vec<Extremum>> {
    let (au, av) = (grid.axis_u, grid.axis_v);
    let du = (au.max - au.min) / (au.count - 1) as f64;
    let dv = (av.max - av.min) / (av.count - 1) as f64;
    let polished = crate::par::try_map_range(ext.len(), |i| -> Result<Option<Extremum>> {
        let e = ext[i];
        let sgn = if e.kind == ExtremumKind::Max { 1.0 } else { -1.0 };
        let f = |u: f64, v: f64| -> Result<f64> { Ok(sgn * w.value(&grid.plane.point(u, v))?) };
        let (mut u, mut v) = (e.u, e.v);
        let mut best = f(u, v)?;
        let mut step = 1.0;
        let mut evals = 0;
        while step > 1e-6 && evals < 4000 {
            let mut moved = false;
            for (su, sv) in
                [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0), (1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)]
            {
                let (nu, nv) = (u + su * step * du, v + sv * step * dv);
                if nu <= au.min || nu >= au.max || nv <= av.min || nv >= av.max {
                    return Ok(None);
                }
                let val = f(nu, nv)?;
                evals += 1;
                if val > best {
                    (u, v, best) = (nu, nv, val);
                    moved = true;
                    break;
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        Ok(Some(Extremum { kind: e.kind, u, v, value: sgn * best }))
    })?;
    let mut out: Vec<Extremum> = Vec::new();
    for e in polished.into_iter().flatten() {
        let dup = out.iter_mut().find(|o| o.kind == e.kind && ((o.u - e.u) / du).hypot((o.v - e.v) / dv) < 0.5);
        match dup {
            Some(o) => {
                let better = match e.kind {
                    ExtremumKind::Max => e.value > o.value,
                    ExtremumKind::Min => e.value < o.value,
                };
                if better {
                    *o = e;
                }
            }
            None => out.push(e),
        }
    }
    out.sort_by(|a, b| b.value.abs().total_cmp(&a.value.abs()).then(a.v.total_cmp(&b.v)).then(a.u.total_cmp(&b.u)));
    Ok(out)
}
