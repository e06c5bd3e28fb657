//! Special functions and Gauss–Hermite quadrature.
//!
//! Every integral in the crate is an integral against a Gaussian, so the
//! workhorse here is the Gauss–Hermite rule for `∫ e^{-t²} f(t) dt`. Call
//! sites substitute `x = s·t` with `s` matched to the width of the state
//! (σ for positions, 1/σ for momenta) so that the remaining integrand is a
//! low-degree polynomial, or nearly so.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock, RwLock};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{ensure_finite, QevError, Result};

pub const SQRT_PI: f64 = 1.772_453_850_905_516;

/// Largest supported Gauss–Hermite order.
pub const MAX_RULE_ORDER: usize = 512;

/// Default order for 1D/2D integrals.
pub const DEFAULT_ORDER_2D: usize = 64;
/// Default order per axis for 4D tensor grids.
pub const DEFAULT_ORDER_4D: usize = 32;

/// Associated Laguerre polynomial `L_m^{-1/2}(x)`.
pub fn laguerre_assoc_half(m: u32, x: f64) -> Result<f64> {
    ensure_finite("laguerre argument", x)?;
    Ok(laguerre_assoc(m, -0.5, x))
}

/// Three-term recurrence for `L_n^α(x)`.
pub(crate) fn laguerre_assoc(n: u32, alpha: f64, x: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let mut prev = 1.0;
    let mut cur = 1.0 + alpha - x;
    for k in 1..n {
        let k = f64::from(k);
        let next = ((2.0 * k + 1.0 + alpha - x) * cur - (k + alpha) * prev) / (k + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// `Γ(m + 1/2) = (2m-1)!! / 2^m · √π`.
pub fn gamma_half_integer(m: u32) -> f64 {
    let mut ratio = 1.0;
    for k in 1..=m {
        ratio *= (2.0 * f64::from(k) - 1.0) / 2.0;
    }
    ratio * SQRT_PI
}

/// `m!` as a float.
pub fn factorial(m: u32) -> f64 {
    (1..=m).fold(1.0, |acc, k| acc * f64::from(k))
}

/// Binomial coefficient as a float; exact for the small arguments used here.
pub fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

/// Gauss–Hermite rule for `∫_{-∞}^{∞} e^{-t²} f(t) dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub order: usize,
    /// Strictly increasing, symmetric about zero.
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// `weights[i] · exp(nodes[i]²)`, computed in log space so that it stays
    /// finite even where `weights[i]` itself underflows.
    pub scaled_weights: Vec<f64>,
}

impl QuadratureRule {
    /// `∫ e^{-x²/s²} g(x) dx` with the Gaussian supplied by the rule.
    pub fn integrate_gaussian<F: FnMut(f64) -> f64>(&self, scale: f64, mut g: F) -> f64 {
        let terms: Vec<f64> = self.nodes.iter().zip(&self.weights).map(|(&t, &w)| w * g(scale * t)).collect();
        scale * pairwise(&terms)
    }

    /// `∫ f(x) dx` for an integrand decaying roughly like `e^{-x²/s²}`.
    pub fn integrate_reweighted<F: FnMut(f64) -> f64>(&self, scale: f64, mut f: F) -> f64 {
        let terms: Vec<f64> = self.nodes.iter().zip(&self.scaled_weights).map(|(&t, &w)| w * f(scale * t)).collect();
        scale * pairwise(&terms)
    }
}

/// Build the `order`-point Gauss–Hermite rule.
///
/// Roots are eigenvalues of the Jacobi matrix, polished by Newton iteration
/// on the orthonormal Hermite recurrence. The recurrence is rescaled on the fly so high
/// orders do not overflow; weights are assembled in log space.
pub fn gauss_hermite_rule(order: usize) -> Result<QuadratureRule> {
    if order == 0 || order > MAX_RULE_ORDER {
        return Err(QevError::Config(format!("Gauss-Hermite order must be in 1..={MAX_RULE_ORDER}, got {order}")));
    }
    let n = order;
    let nf = n as f64;
    let half = n.div_ceil(2);
    // Golub–Welsch eigenvalues seed Newton on the recurrence
    let jacobi = DMatrix::from_fn(n, n, |i, j| if i.abs_diff(j) == 1 { (i.max(j) as f64 / 2.0).sqrt() } else { 0.0 });
    let mut seeds: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
    seeds.sort_by(|a, b| b.total_cmp(a));
    // descending roots, largest first
    let mut roots: Vec<f64> = Vec::with_capacity(half);
    let mut ln_w: Vec<f64> = Vec::with_capacity(half);
    for (i, &seed) in seeds.iter().take(half).enumerate() {
        let z = if n % 2 == 1 && i == half - 1 {
            0.0
        } else {
            newton_root(n, seed).map_err(|e| e.context(format!("root {i} of order {n}")))?
        };
        let (_, pm1, ln_scale) = hermite_orthonormal(n, z);
        let ln_pp = 0.5 * (2.0 * nf).ln() + pm1.abs().ln() + ln_scale;
        roots.push(z);
        ln_w.push(std::f64::consts::LN_2 - 2.0 * ln_pp);
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let mut scaled = vec![0.0; n];
    for (i, (&r, &lw)) in roots.iter().zip(&ln_w).enumerate() {
        let hi = n - 1 - i;
        nodes[hi] = r;
        nodes[i] = -r;
        let w = lw.exp();
        let sw = (lw + r * r).exp();
        weights[hi] = w;
        weights[i] = w;
        scaled[hi] = sw;
        scaled[i] = sw;
    }
    if nodes.windows(2).any(|p| p[0] >= p[1]) {
        return Err(QevError::Numeric(format!("Gauss-Hermite order {n}: roots not strictly increasing")));
    }
    Ok(QuadratureRule { order: n, nodes, weights, scaled_weights: scaled })
}

fn newton_root(n: usize, mut z: f64) -> Result<f64> {
    let sqrt_2n = (2.0 * n as f64).sqrt();
    let mut last_step = f64::INFINITY;
    for _ in 0..200 {
        let (p, pm1, _) = hermite_orthonormal(n, z);
        let step = p / (sqrt_2n * pm1);
        z -= step;
        last_step = step.abs();
        if last_step <= 1e-15 * z.abs().max(1.0) {
            return Ok(z);
        }
    }
    if last_step <= 1e-12 * z.abs().max(1.0) {
        Ok(z)
    } else {
        Err(QevError::Numeric(format!("Newton iteration did not converge (last step {last_step:e})")))
    }
}

/// Returns `(p_n, p_{n-1}, ln_scale)` of the orthonormal Hermite polynomials
/// where the true values are `p · exp(ln_scale)`.
fn hermite_orthonormal(n: usize, z: f64) -> (f64, f64, f64) {
    const BIG: f64 = 1e150;
    let mut ln_scale = -0.25 * PI.ln();
    let mut p2;
    let mut p1 = 0.0;
    let mut p0 = 1.0;
    for j in 1..=n {
        p2 = p1;
        p1 = p0;
        let jf = j as f64;
        p0 = z * (2.0 / jf).sqrt() * p1 - ((jf - 1.0) / jf).sqrt() * p2;
        if p0.abs() > BIG {
            p0 /= BIG;
            p1 /= BIG;
            ln_scale += BIG.ln();
        }
    }
    (p0, p1, ln_scale)
}

type RuleCache = RwLock<HashMap<usize, Arc<QuadratureRule>>>;

/// Shared, lazily built rule for `order`.
pub fn cached_rule(order: usize) -> Result<Arc<QuadratureRule>> {
    static CACHE: OnceLock<RuleCache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| RwLock::new(HashMap::new()));
    if let Some(rule) = cache.read().expect("rule cache poisoned").get(&order) {
        return Ok(Arc::clone(rule));
    }
    let rule = Arc::new(gauss_hermite_rule(order)?);
    let mut guard = cache.write().expect("rule cache poisoned");
    Ok(Arc::clone(guard.entry(order).or_insert(rule)))
}

const PAIRWISE_LEAF: usize = 16;

/// Fixed-tree pairwise sum.
///
/// The tree shape depends only on `values.len()`, so any way of farming the
/// subtrees out to workers gives the same bits.
pub fn deterministic_sum(values: &[f64]) -> Result<f64> {
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(QevError::Numeric(format!("non-finite summand {bad}")));
    }
    Ok(pairwise(values))
}

/// [`deterministic_sum`] with the top of the tree split over `workers` jobs.
pub fn deterministic_sum_partitioned(values: &[f64], workers: usize) -> Result<f64> {
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(QevError::Numeric(format!("non-finite summand {bad}")));
    }
    let depth = workers.max(1).next_power_of_two().trailing_zeros();
    Ok(pairwise_split(values, depth))
}

pub(crate) fn pairwise(values: &[f64]) -> f64 {
    if values.len() <= PAIRWISE_LEAF {
        return values.iter().fold(0.0, |acc, v| acc + v);
    }
    let (lo, hi) = values.split_at(values.len() / 2);
    pairwise(lo) + pairwise(hi)
}

fn pairwise_split(values: &[f64], depth: u32) -> f64 {
    if depth == 0 || values.len() <= PAIRWISE_LEAF {
        return pairwise(values);
    }
    let (lo, hi) = values.split_at(values.len() / 2);
    let (a, b) = crate::par::join(|| pairwise_split(lo, depth - 1), || pairwise_split(hi, depth - 1));
    a + b
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Explicit series `Σ (-1)^i C(n+α, n-i) x^i / i!` for the oracle.
    fn laguerre_series(n: u32, alpha: f64, x: f64) -> f64 {
        let gen_binom =
            |top: f64, k: u32| -> f64 { (0..k).fold(1.0, |acc, j| acc * (top - f64::from(j)) / f64::from(j + 1)) };
        (0..=n)
            .map(|i| {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                sign * gen_binom(f64::from(n) + alpha, n - i) * x.powi(i as i32) / factorial(i)
            })
            .sum()
    }

    #[test]
    fn laguerre_examples() {
        assert_eq!(laguerre_assoc_half(0, 7.3).unwrap(), 1.0);
        assert_relative_eq!(laguerre_assoc_half(1, 2.0).unwrap(), -1.5, epsilon = 1e-15);
        assert_relative_eq!(laguerre_assoc_half(2, 1.0).unwrap(), -0.625, epsilon = 1e-15);
        assert!(matches!(laguerre_assoc_half(2, f64::NAN), Err(QevError::Domain(_))));
        assert!(laguerre_assoc_half(2, f64::INFINITY).is_err());
    }

    #[test]
    fn laguerre_recurrence_matches_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let x: f64 = rng.random_range(-50.0..50.0);
            for m in 0..=5 {
                let a = laguerre_assoc_half(m, x).unwrap();
                let b = laguerre_series(m, -0.5, x);
                assert_relative_eq!(a, b, max_relative = 1e-12, epsilon = 1e-300);
            }
        }
    }

    #[test]
    fn gamma_half_integer_values() {
        assert_relative_eq!(gamma_half_integer(0), SQRT_PI, max_relative = 1e-16);
        assert_relative_eq!(gamma_half_integer(1), SQRT_PI / 2.0, max_relative = 1e-16);
        assert_relative_eq!(gamma_half_integer(3), 15.0 / 8.0 * SQRT_PI, max_relative = 1e-16);
    }

    #[test]
    fn small_rules() {
        let r1 = gauss_hermite_rule(1).unwrap();
        assert_eq!(r1.nodes, vec![0.0]);
        assert_relative_eq!(r1.weights[0], SQRT_PI, max_relative = 1e-15);
        let r2 = gauss_hermite_rule(2).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_relative_eq!(r2.nodes[0], -h, max_relative = 1e-15);
        assert_relative_eq!(r2.nodes[1], h, max_relative = 1e-15);
        for w in &r2.weights {
            assert_relative_eq!(*w, SQRT_PI / 2.0, max_relative = 1e-15);
        }
    }

    #[test]
    fn rule_order_out_of_range() {
        assert!(matches!(gauss_hermite_rule(0), Err(QevError::Config(_))));
        assert!(matches!(gauss_hermite_rule(513), Err(QevError::Config(_))));
    }

    #[test]
    fn rule_invariants_across_orders() {
        for order in [1, 2, 3, 5, 8, 16, 31, 32, 64, 96, 128, 200] {
            let r = gauss_hermite_rule(order).unwrap();
            assert!(r.nodes.windows(2).all(|p| p[0] < p[1]));
            for i in 0..order {
                assert_eq!(r.nodes[i], -r.nodes[order - 1 - i]);
                assert!(r.weights[i] > 0.0);
            }
            let s = deterministic_sum(&r.weights).unwrap();
            assert!((s - SQRT_PI).abs() < 1e-12, "order {order}: weight sum {s}");
        }
    }

    #[test]
    fn rule_512_builds_and_sums() {
        let r = gauss_hermite_rule(512).unwrap();
        assert!(r.nodes.windows(2).all(|p| p[0] < p[1]));
        assert!(r.scaled_weights.iter().all(|w| w.is_finite() && *w > 0.0));
        let s = deterministic_sum(&r.weights).unwrap();
        assert!((s - SQRT_PI).abs() < 1e-12);
    }

    #[test]
    fn even_moments_exact() {
        for n in [5usize, 16, 64] {
            let r = gauss_hermite_rule(n).unwrap();
            let mut k = 0;
            while 2 * k < 2 * n {
                let exact = (1..=k).fold(SQRT_PI, |acc, j| acc * (2.0 * j as f64 - 1.0) / 2.0);
                let got = r.integrate_gaussian(1.0, |t| t.powi(2 * k as i32));
                assert_relative_eq!(got, exact, max_relative = 1e-12);
                k += 1;
            }
        }
    }

    #[test]
    fn reweighted_matches_gaussian_form() {
        let r = gauss_hermite_rule(64).unwrap();
        let a = r.integrate_gaussian(2.0, |x| 1.0 + x * x);
        let b = r.integrate_reweighted(2.0, |x| (1.0 + x * x) * (-(x * x) / 4.0).exp());
        assert_relative_eq!(a, b, max_relative = 1e-13);
    }

    #[test]
    fn deterministic_sum_examples() {
        assert_eq!(deterministic_sum(&[]).unwrap(), 0.0);
        assert_eq!(deterministic_sum(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 10.0);
        assert!(deterministic_sum(&[1.0, f64::NAN]).is_err());
        let v = vec![0.1; 1_000_000];
        let a = deterministic_sum_partitioned(&v, 1).unwrap();
        let b = deterministic_sum_partitioned(&v, 2).unwrap();
        let c = deterministic_sum_partitioned(&v, 8).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert_eq!(a.to_bits(), c.to_bits());
        assert_eq!(a.to_bits(), deterministic_sum(&v).unwrap().to_bits());
    }

    #[test]
    fn cached_rule_is_shared() {
        let a = cached_rule(32).unwrap();
        let b = cached_rule(32).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
    }
}
