//! Log-negativity sweeps along a line in `(ζ_x, ζ_y)` and crossing detection
//! between adjacent vortex orders.
//!
//! The grid is uniform in `ζ_x` with `ζ_y = c0 + c1·ζ_x`. For each adjacent
//! pair `(m_low, m_high)` of the requested orders the difference
//! `g(ζ) = E_N(m_high) - E_N(m_low)` is scanned for sign changes; a single
//! bracket is refined by bisection.

use std::fmt::Write as _;

use serde::Serialize;

use crate::entanglement::{entangle, MomentMethod};
use crate::error::{QevError, Result};
use crate::io::{fmt_e12, Metadata};
use crate::numerics::DEFAULT_ORDER_4D;
use crate::state::{QevParams, VortexSign};
use crate::Pipeline;

/// `|g| ≤ SIGN_TOL` counts as zero when looking for sign changes.
pub const SIGN_TOL: f64 = 1e-12;
/// Bisection stops once the bracket is narrower than this in `ζ_x`.
pub const BISECTION_TOL: f64 = 1e-4;
/// Reference critical width the crossing is compared against.
pub const REFERENCE_SIGMA_X: f64 = 0.002;
/// A found crossing is consistent with the reference within this factor.
pub const REFERENCE_FACTOR: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    /// `ζ_y = c0 + c1·ζ_x` with the default coefficients.
    Zeta,
    /// `σ_y = √5·σ_x`, i.e. `c1 = 1`.
    SigmaProportional,
}

impl std::str::FromStr for Relation {
    type Err = QevError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zeta" => Ok(Relation::Zeta),
            "sigma-proportional" => Ok(Relation::SigmaProportional),
            _ => Err(QevError::Config(format!("unknown relation {s:?} (expected zeta or sigma-proportional)"))),
        }
    }
}

impl Relation {
    pub fn coefficients(self) -> (f64, f64) {
        let c0 = 5f64.ln() / 4.0;
        match self {
            Relation::Zeta => (c0, 0.5),
            Relation::SigmaProportional => (c0, 1.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Relation::Zeta => "zeta",
            Relation::SigmaProportional => "sigma-proportional",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    pub zeta_x_min: f64,
    pub zeta_x_max: f64,
    /// Number of grid points, endpoints included.
    pub n_steps: usize,
    pub c0: f64,
    pub c1: f64,
    pub m_list: Vec<u32>,
    pub pipeline: Pipeline,
    pub method: MomentMethod,
    pub sign: VortexSign,
    pub order: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let (c0, c1) = Relation::Zeta.coefficients();
        SweepConfig {
            zeta_x_min: -4.0,
            zeta_x_max: 2.0,
            n_steps: 100,
            c0,
            c1,
            m_list: (0..=5).collect(),
            pipeline: Pipeline::PaperLiteral,
            method: MomentMethod::Wigner4d,
            sign: VortexSign::Plus,
            order: DEFAULT_ORDER_4D,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.zeta_x_min.is_finite() && self.zeta_x_max.is_finite() && self.zeta_x_min < self.zeta_x_max) {
            return Err(QevError::Config(format!(
                "need finite zeta_x_min < zeta_x_max, got {} and {}",
                self.zeta_x_min, self.zeta_x_max
            )));
        }
        if self.n_steps < 2 {
            return Err(QevError::Config(format!("n_steps must be >= 2, got {}", self.n_steps)));
        }
        if !(self.c0.is_finite() && self.c1.is_finite()) {
            return Err(QevError::Config("relation coefficients must be finite".into()));
        }
        if self.m_list.is_empty() {
            return Err(QevError::Config("m_list must not be empty".into()));
        }
        let mut sorted = self.m_list.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.m_list.len() {
            return Err(QevError::Config("m_list entries must be distinct".into()));
        }
        Ok(())
    }

    pub fn zeta_x(&self, i: usize) -> f64 {
        if i + 1 == self.n_steps {
            self.zeta_x_max
        } else {
            self.zeta_x_min + (self.zeta_x_max - self.zeta_x_min) * i as f64 / (self.n_steps - 1) as f64
        }
    }

    pub fn zeta_y(&self, zeta_x: f64) -> f64 {
        self.c0 + self.c1 * zeta_x
    }

    fn params(&self, m: u32, zeta_x: f64) -> Result<QevParams> {
        Ok(QevParams::new(m, zeta_x, self.zeta_y(zeta_x))?.with_sign(self.sign))
    }

    /// `E_N` for vortex order `m` at `ζ_x`.
    pub fn log_negativity(&self, m: u32, zeta_x: f64) -> Result<f64> {
        let p = self.params(m, zeta_x)?;
        Ok(entangle(&p, self.pipeline, self.method, self.order)
            .map_err(|e| e.context(format!("m={m}, zeta_x={zeta_x}")))?
            .report
            .log_negativity)
    }

    /// Sorted copy of `m_list`; adjacent pairs come from this order.
    pub fn sorted_m(&self) -> Vec<u32> {
        let mut v = self.m_list.clone();
        v.sort_unstable();
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub zeta_x: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    /// Aligned with `SweepConfig::m_list`.
    pub e_n: Vec<f64>,
}

/// How `E_N` varies with `m` along one row (or one side of a crossing).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Ordering {
    Increasing,
    Decreasing,
    Flat,
    Mixed,
}

impl Ordering {
    pub fn name(self) -> &'static str {
        match self {
            Ordering::Increasing => "increasing",
            Ordering::Decreasing => "decreasing",
            Ordering::Flat => "flat",
            Ordering::Mixed => "mixed",
        }
    }

    /// Ordering of `values`, taken in increasing-`m` order, with differences
    /// within [`SIGN_TOL`] treated as ties.
    pub fn of(values: &[f64]) -> Self {
        let signs: Vec<i8> = values.windows(2).map(|w| sign_of(w[1] - w[0])).collect();
        let up = signs.iter().all(|&s| s >= 0);
        let down = signs.iter().all(|&s| s <= 0);
        match (up, down) {
            (true, true) => Ordering::Flat,
            (true, false) if signs.iter().all(|&s| s > 0) => Ordering::Increasing,
            (false, true) if signs.iter().all(|&s| s < 0) => Ordering::Decreasing,
            _ => Ordering::Mixed,
        }
    }
}

fn sign_of(g: f64) -> i8 {
    if g > SIGN_TOL {
        1
    } else if g < -SIGN_TOL {
        -1
    } else {
        0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CrossingStatus {
    Found,
    NotFound,
    Multiple,
}

impl CrossingStatus {
    pub fn name(self) -> &'static str {
        match self {
            CrossingStatus::Found => "FOUND",
            CrossingStatus::NotFound => "NOT_FOUND",
            CrossingStatus::Multiple => "MULTIPLE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossingReport {
    pub m_low: u32,
    pub m_high: u32,
    pub status: CrossingStatus,
    /// Every grid bracket with a strict sign change of `E_N(m_high) - E_N(m_low)`.
    pub brackets: Vec<(f64, f64)>,
    pub zeta_star: Option<f64>,
    pub sigma_x_star: Option<f64>,
    /// `"m_high>m_low"`, `"m_high<m_low"` or `"equal"` on each side.
    pub ordering_below: String,
    pub ordering_above: String,
    /// Within [`REFERENCE_FACTOR`] of [`REFERENCE_SIGMA_X`]; `None` unless found.
    pub consistent_with_reference: Option<bool>,
}

fn pair_order(g: f64) -> &'static str {
    match sign_of(g) {
        1 => "m_high>m_low",
        -1 => "m_high<m_low",
        _ => "equal",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub config: SweepConfig,
    pub rows: Vec<SweepRow>,
    pub crossings: Vec<CrossingReport>,
    /// Index and message of the first failed grid point; rows stop before it.
    pub failure: Option<(usize, String)>,
}

impl SweepResult {
    /// Row-wise orderings of `E_N` in increasing `m`.
    pub fn orderings(&self) -> Vec<Ordering> {
        let order = self.m_permutation();
        self.rows.iter().map(|r| Ordering::of(&order.iter().map(|&k| r.e_n[k]).collect::<Vec<_>>())).collect()
    }

    fn m_permutation(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.config.m_list.len()).collect();
        idx.sort_by_key(|&k| self.config.m_list[k]);
        idx
    }

    /// Single ordering if every row agrees, otherwise [`Ordering::Mixed`].
    pub fn global_ordering(&self) -> Ordering {
        let all = self.orderings();
        match all.first() {
            Some(&first) if all.iter().all(|&o| o == first) => first,
            _ => Ordering::Mixed,
        }
    }
}

/// Evaluate the grid in parallel and analyse every adjacent pair.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepResult> {
    config.validate()?;
    let n_m = config.m_list.len();
    let cells = crate::par::map_range(config.n_steps * n_m, |k| {
        let (i, j) = (k / n_m, k % n_m);
        config.log_negativity(config.m_list[j], config.zeta_x(i))
    });
    let mut rows = Vec::with_capacity(config.n_steps);
    let mut failure = None;
    'grid: for i in 0..config.n_steps {
        let mut e_n = Vec::with_capacity(n_m);
        for j in 0..n_m {
            match &cells[i * n_m + j] {
                Ok(v) => e_n.push(*v),
                Err(e) => {
                    failure = Some((i, e.to_string()));
                    break 'grid;
                }
            }
        }
        let zx = config.zeta_x(i);
        rows.push(SweepRow { zeta_x: zx, sigma_x: (2.0 * zx).exp(), sigma_y: (2.0 * config.zeta_y(zx)).exp(), e_n });
    }
    let crossings = if failure.is_none() {
        let sorted = config.sorted_m();
        let col = |m: u32| config.m_list.iter().position(|&x| x == m).expect("m in list");
        sorted
            .windows(2)
            .map(|pair| detect_crossing(config, &rows, pair[0], pair[1], col(pair[0]), col(pair[1])))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    Ok(SweepResult { config: config.clone(), rows, crossings, failure })
}

fn detect_crossing(
    config: &SweepConfig,
    rows: &[SweepRow],
    m_low: u32,
    m_high: u32,
    j_low: usize,
    j_high: usize,
) -> Result<CrossingReport> {
    let zetas: Vec<f64> = rows.iter().map(|r| r.zeta_x).collect();
    let g: Vec<f64> = rows.iter().map(|r| r.e_n[j_high] - r.e_n[j_low]).collect();
    analyse_pair(
        &zetas,
        &g,
        m_low,
        m_high,
        |z| Ok(config.log_negativity(m_high, z)? - config.log_negativity(m_low, z)?),
    )
}

/// Bracket sign changes of `g` sampled at `zetas` and bisect `diff` inside a
/// unique bracket.
fn analyse_pair<F>(zetas: &[f64], g: &[f64], m_low: u32, m_high: u32, diff: F) -> Result<CrossingReport>
where
    F: Fn(f64) -> Result<f64>,
{
    // sign changes between consecutive non-zero signs
    let mut brackets = Vec::new();
    let mut last: Option<(usize, i8)> = None;
    for (i, &v) in g.iter().enumerate() {
        let s = sign_of(v);
        if s == 0 {
            continue;
        }
        if let Some((k, sk)) = last {
            if sk != s {
                brackets.push((k, i));
            }
        }
        last = Some((i, s));
    }
    let status = match brackets.len() {
        0 => CrossingStatus::NotFound,
        1 => CrossingStatus::Found,
        _ => CrossingStatus::Multiple,
    };
    let mut ordering_below = pair_order(g[0]);
    let mut ordering_above = pair_order(g[g.len() - 1]);
    let mut zeta_star = None;
    if let Some(&(lo, hi)) = brackets.first() {
        ordering_below = pair_order(g[lo]);
        ordering_above = pair_order(g[hi]);
        if status == CrossingStatus::Found {
            let (mut a, mut b) = (zetas[lo], zetas[hi]);
            let sa = sign_of(g[lo]);
            while b - a >= BISECTION_TOL {
                let mid = 0.5 * (a + b);
                if sign_of(diff(mid)?) == sa {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            zeta_star = Some(0.5 * (a + b));
        }
    }
    let sigma_x_star = zeta_star.map(|z| (2.0 * z).exp());
    Ok(CrossingReport {
        m_low,
        m_high,
        status,
        brackets: brackets.iter().map(|&(a, b)| (zetas[a], zetas[b])).collect(),
        zeta_star,
        sigma_x_star,
        ordering_below: ordering_below.into(),
        ordering_above: ordering_above.into(),
        consistent_with_reference: sigma_x_star.map(|s| {
            let r = s / REFERENCE_SIGMA_X;
            (1.0 / REFERENCE_FACTOR..=REFERENCE_FACTOR).contains(&r)
        }),
    })
}

/// Metadata describing a sweep, including the `m = 0` annotation.
pub fn sweep_metadata(result: &SweepResult) -> Metadata {
    let c = &result.config;
    let mut m = Metadata::new();
    m.push("command", "sweep")
        .push("pipeline", c.pipeline)
        .push("moment_method", if c.pipeline == Pipeline::Oracle { c.method.to_string() } else { "closed-form".into() })
        .push_f64("zeta_x_min", c.zeta_x_min)
        .push_f64("zeta_x_max", c.zeta_x_max)
        .push("n_steps", c.n_steps)
        .push("relation", "zeta_y = c0 + c1*zeta_x, sigma = exp(2*zeta)")
        .push_f64("c0", c.c0)
        .push_f64("c1", c.c1)
        .push("m_list", c.m_list.iter().map(u32::to_string).collect::<Vec<_>>().join(" "))
        .push("sign", if c.sign == VortexSign::Plus { "+1" } else { "-1" })
        .push("quad_order", c.order)
        .push("label", "Gaussian-approximation for m>0")
        .push("sign_tolerance", fmt_e12(SIGN_TOL))
        .push("ordering", result.global_ordering().name());
    if c.m_list.contains(&0) {
        m.push(
            "annotation_m0",
            "reference claims finite constant E_N for m=0; m=0 is a product of squeezed vacua so E_N=0 for every width relation (divergence, not reconciled)",
        );
    }
    m.push_f64("reference_sigma_x", REFERENCE_SIGMA_X);
    m
}

/// Full CSV text: metadata, grid rows, then crossing rows (or a `FAILED`
/// sentinel after the last good row).
pub fn sweep_csv(result: &SweepResult) -> String {
    let c = &result.config;
    let mut out = sweep_metadata(result).render();
    let orderings = result.orderings();
    let _ = write!(out, "zeta_x,sigma_x,sigma_y");
    for m in &c.m_list {
        let _ = write!(out, ",E_N_m{m}");
    }
    out.push_str(",ordering\n");
    for (row, ord) in result.rows.iter().zip(&orderings) {
        let _ = write!(out, "{},{},{}", fmt_e12(row.zeta_x), fmt_e12(row.sigma_x), fmt_e12(row.sigma_y));
        for v in &row.e_n {
            let _ = write!(out, ",{}", fmt_e12(*v));
        }
        let _ = writeln!(out, ",{}", ord.name());
    }
    if let Some((i, msg)) = &result.failure {
        let _ = writeln!(out, "FAILED,{i},\"{}\"", msg.replace('"', "'"));
        return out;
    }
    out.push_str("crossing,m_low,m_high,status,n_brackets,zeta_lo,zeta_hi,zeta_star,sigma_x_star,ordering_below,ordering_above,reference\n");
    for x in &result.crossings {
        let (lo, hi) = x.brackets.first().map_or(("".into(), "".into()), |b| (fmt_e12(b.0), fmt_e12(b.1)));
        let opt = |v: Option<f64>| v.map(fmt_e12).unwrap_or_default();
        let reference = match x.consistent_with_reference {
            Some(true) => "CONSISTENT",
            Some(false) => "INCONSISTENT",
            None => "n/a",
        };
        let _ = writeln!(
            out,
            "crossing,{},{},{},{},{lo},{hi},{},{},{},{},{reference}",
            x.m_low,
            x.m_high,
            x.status.name(),
            x.brackets.len(),
            opt(x.zeta_star),
            opt(x.sigma_x_star),
            x.ordering_below,
            x.ordering_above,
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(pipeline: Pipeline, m_list: Vec<u32>, n: usize) -> SweepConfig {
        SweepConfig { n_steps: n, m_list, pipeline, order: 16, ..SweepConfig::default() }
    }

    #[test]
    fn config_validation() {
        assert!(SweepConfig::default().validate().is_ok());
        let mut c = SweepConfig { n_steps: 1, ..SweepConfig::default() };
        assert!(c.validate().is_err());
        c = SweepConfig::default();
        c.m_list = vec![1, 1];
        assert!(c.validate().is_err());
        c = SweepConfig::default();
        c.zeta_x_max = c.zeta_x_min;
        assert!(c.validate().is_err());
    }

    #[test]
    fn grid_endpoints_and_relation() {
        let c = SweepConfig::default();
        assert_eq!(c.zeta_x(0), -4.0);
        assert_eq!(c.zeta_x(99), 2.0);
        let crit = (0.002f64).ln() / 2.0;
        assert!((crit + 3.1073).abs() < 1e-4);
        let (c0, c1) = Relation::SigmaProportional.coefficients();
        let zy = c0 + c1 * 0.3;
        assert!(((2.0 * zy).exp() / (0.6f64).exp() - 5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn orderings() {
        assert_eq!(Ordering::of(&[0.0, 0.0, 0.0]), Ordering::Flat);
        assert_eq!(Ordering::of(&[0.0, 1.0, 2.0]), Ordering::Increasing);
        assert_eq!(Ordering::of(&[2.0, 1.0]), Ordering::Decreasing);
        assert_eq!(Ordering::of(&[0.0, 1.0, 1.0]), Ordering::Mixed);
        assert_eq!(Ordering::of(&[0.0, 1e-14, 0.0]), Ordering::Flat);
    }

    #[test]
    fn m0_oracle_sweep_is_zero_and_annotated() {
        let r = run_sweep(&small(Pipeline::Oracle, vec![0], 5)).unwrap();
        assert!(r.rows.iter().all(|row| row.e_n[0].abs() < 1e-10));
        let csv = sweep_csv(&r);
        assert!(csv.starts_with("# qev v1\n"));
        assert!(csv.contains("# annotation_m0=reference claims finite constant E_N for m=0"));
        assert!(r.crossings.is_empty());
    }

    #[test]
    fn two_point_sweep_reports_not_found() {
        let r = run_sweep(&small(Pipeline::Oracle, vec![0, 1], 2)).unwrap();
        assert_eq!(r.rows.len(), 2);
        assert_eq!(r.crossings.len(), 1);
        assert_eq!(r.crossings[0].status, CrossingStatus::NotFound);
        let csv = sweep_csv(&r);
        assert_eq!(csv.lines().filter(|l| l.starts_with("crossing,0,1,NOT_FOUND")).count(), 1);
    }

    #[test]
    fn bisection_on_synthetic_difference() {
        let zetas: Vec<f64> = (0..7).map(|i| -4.0 + i as f64).collect();
        let crit = 0.002f64.ln() / 2.0;
        let f = |z: f64| -> Result<f64> { Ok(z - crit) };
        let g: Vec<f64> = zetas.iter().map(|&z| f(z).unwrap()).collect();
        let r = analyse_pair(&zetas, &g, 1, 2, f).unwrap();
        assert_eq!(r.status, CrossingStatus::Found);
        assert!((r.zeta_star.unwrap() - crit).abs() < BISECTION_TOL);
        assert_eq!(r.consistent_with_reference, Some(true));
        assert_eq!(r.ordering_below, "m_high<m_low");
        assert_eq!(r.ordering_above, "m_high>m_low");
    }

    #[test]
    fn multiple_and_roundoff_brackets() {
        let zetas = [0.0, 1.0, 2.0, 3.0, 4.0];
        let g = [1.0, -1.0, 1.0, -1.0, 1.0];
        let r = analyse_pair(&zetas, &g, 0, 1, |_| Ok(0.0)).unwrap();
        assert_eq!(r.status, CrossingStatus::Multiple);
        assert_eq!(r.brackets.len(), 4);
        assert_eq!(r.zeta_star, None);
        let noise = [1e-15, -2e-15, 3e-16, -1e-13, 0.0];
        let r = analyse_pair(&zetas, &noise, 0, 1, |_| Ok(0.0)).unwrap();
        assert_eq!(r.status, CrossingStatus::NotFound);
        assert_eq!(r.ordering_below, "equal");
    }
}
