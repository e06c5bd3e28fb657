//! The elliptical vortex state family and its position-space amplitude.
//!
//! The state is carried by its parameters only: vorticity `m`, the two real
//! squeezing parameters (widths `σ_i = e^{2ζ_i}`), the vortex handedness and
//! the coupling weights. The amplitude is
//!
//! ```text
//! Ψ(x, y) = N · [x/(√2σ_x) ± i·y/(√2σ_y)]^m · exp[-(x²/σ_x² + y²/σ_y²)/2]
//! ```
//!
//! with `N` fixed numerically so that `∫∫|Ψ|² = 1`. The closed-form
//! prefactor quoted alongside this amplitude in the literature is kept only as
//! a reference value (see [`printed_prefactor`]).

use std::f64::consts::{PI, SQRT_2, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, QevError, Result};
use crate::numerics::{cached_rule, gamma_half_integer, DEFAULT_ORDER_2D};

/// Handedness of the vortex factor (the `±` in front of `i·y`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum VortexSign {
    #[default]
    Plus,
    Minus,
}

impl VortexSign {
    pub fn value(self) -> f64 {
        match self {
            VortexSign::Plus => 1.0,
            VortexSign::Minus => -1.0,
        }
    }

    pub fn from_i32(s: i32) -> Result<Self> {
        match s {
            1 => Ok(VortexSign::Plus),
            -1 => Ok(VortexSign::Minus),
            other => Err(QevError::Config(format!("vortex sign must be +1 or -1, got {other}"))),
        }
    }
}

/// Coupling weights η of the vortex generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum Coupling {
    /// `η_i = 1/(√2 σ_i)`, the only choice with a known position-space form.
    #[default]
    Canonical,
    Custom {
        eta_x: f64,
        eta_y: f64,
    },
}

/// Parameters of one elliptical vortex state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QevParams {
    pub m: u32,
    pub zeta_x: f64,
    pub zeta_y: f64,
    pub sign: VortexSign,
    pub coupling: Coupling,
}

impl QevParams {
    pub fn new(m: u32, zeta_x: f64, zeta_y: f64) -> Result<Self> {
        let p = QevParams { m, zeta_x, zeta_y, sign: VortexSign::Plus, coupling: Coupling::Canonical };
        p.validate()?;
        Ok(p)
    }

    /// Build from widths instead of squeezing parameters.
    pub fn from_sigmas(m: u32, sigma_x: f64, sigma_y: f64) -> Result<Self> {
        for (name, s) in [("sigma_x", sigma_x), ("sigma_y", sigma_y)] {
            if !(s.is_finite() && s > 0.0) {
                return Err(QevError::Domain(format!("{name} must be finite and > 0, got {s}")));
            }
        }
        QevParams::new(m, 0.5 * sigma_x.ln(), 0.5 * sigma_y.ln())
    }

    pub fn with_sign(mut self, sign: VortexSign) -> Self {
        self.sign = sign;
        self
    }

    pub fn with_coupling(mut self, eta_x: f64, eta_y: f64) -> Result<Self> {
        if !(eta_x.is_finite() && eta_x > 0.0 && eta_y.is_finite() && eta_y > 0.0) {
            return Err(QevError::Domain(format!("coupling weights must be positive, got ({eta_x}, {eta_y})")));
        }
        self.coupling = Coupling::Custom { eta_x, eta_y };
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("zeta_x", self.zeta_x)?;
        ensure_finite("zeta_y", self.zeta_y)?;
        for (name, s) in [("sigma_x", self.sigma_x()), ("sigma_y", self.sigma_y())] {
            if !(s.is_finite() && s > 0.0 && s.recip().is_finite()) {
                return Err(QevError::Domain(format!("{name} = exp(2 zeta) out of range: {s}")));
            }
        }
        if let Coupling::Custom { eta_x, eta_y } = self.coupling {
            if !(eta_x > 0.0 && eta_y > 0.0) {
                return Err(QevError::Domain("coupling weights must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn sigma_x(&self) -> f64 {
        (2.0 * self.zeta_x).exp()
    }

    pub fn sigma_y(&self) -> f64 {
        (2.0 * self.zeta_y).exp()
    }

    pub fn eta_x(&self) -> f64 {
        match self.coupling {
            Coupling::Canonical => 1.0 / (SQRT_2 * self.sigma_x()),
            Coupling::Custom { eta_x, .. } => eta_x,
        }
    }

    pub fn eta_y(&self) -> f64 {
        match self.coupling {
            Coupling::Canonical => 1.0 / (SQRT_2 * self.sigma_y()),
            Coupling::Custom { eta_y, .. } => eta_y,
        }
    }

    pub fn require_canonical(&self) -> Result<()> {
        match self.coupling {
            Coupling::Canonical => Ok(()),
            Coupling::Custom { .. } => Err(QevError::Config(
                "position-space amplitude and Wigner function need canonical coupling weights".into(),
            )),
        }
    }

    /// Same state with `σ_x` and `σ_y` exchanged.
    pub fn swapped(&self) -> Self {
        QevParams { zeta_x: self.zeta_y, zeta_y: self.zeta_x, ..*self }
    }
}

/// Coupler amplitudes: transmittivity `a_x` and reflectivity `a_y`.
///
/// `coupling_phase` is the phase of the coupling Hamiltonian. It is carried
/// on the y-mode reference rather than on `a_y`, which keeps both
/// `|a_x|² + |a_y|² = 1` and `Re(a_x* a_y) = 0` exact for every phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsCoefficients {
    pub a_x: Complex64,
    pub a_y: Complex64,
    pub coupling_phase: f64,
}

impl BsCoefficients {
    /// `|a_x|² + |a_y|² - 1`.
    pub fn norm_residual(&self) -> f64 {
        self.a_x.norm_sqr() + self.a_y.norm_sqr() - 1.0
    }

    /// `a_x* a_y + a_y* a_x` (real by construction).
    pub fn cross_residual(&self) -> f64 {
        (self.a_x.conj() * self.a_y + self.a_y.conj() * self.a_x).re
    }

    /// Full two-mode mixing matrix including the coupling phase.
    pub fn mixing_matrix(&self) -> [[Complex64; 2]; 2] {
        let ph = Complex64::from_polar(1.0, self.coupling_phase);
        [[self.a_x, self.a_y * ph], [self.a_y * ph.conj(), self.a_x.conj()]]
    }
}

/// Coupler amplitudes after an accumulated coupling `θ = g·t` with phase `φ`.
pub fn bs_coefficients(theta: f64, phi: f64) -> BsCoefficients {
    BsCoefficients { a_x: Complex64::new(theta.cos(), 0.0), a_y: Complex64::new(0.0, theta.sin()), coupling_phase: phi }
}

/// The printed prefactor `2^{m-2} / (σ_x σ_y Γ(m+½) √π)`.
pub fn printed_prefactor(params: &QevParams) -> f64 {
    let m = params.m;
    2f64.powi(m as i32 - 2) / (params.sigma_x() * params.sigma_y() * gamma_half_integer(m) * PI.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Normalization {
    pub n_num: f64,
    /// `n_num` divided by [`printed_prefactor`].
    pub printed_ratio: f64,
    /// Relative change of `n_num` when the rule order is doubled.
    pub convergence_delta: f64,
    pub order: usize,
}

/// Numerically normalized amplitude of one state.
#[derive(Debug, Clone, PartialEq)]
pub struct QevState {
    params: QevParams,
    norm: Normalization,
    sigma_x: f64,
    sigma_y: f64,
    // coefficients of the vortex factor v = cx·x + i·s·cy·y
    cx: f64,
    cy: f64,
}

impl QevState {
    pub fn new(params: QevParams) -> Result<Self> {
        Self::with_order(params, DEFAULT_ORDER_2D)
    }

    pub fn with_order(params: QevParams, order: usize) -> Result<Self> {
        params.validate()?;
        params.require_canonical()?;
        let sigma_x = params.sigma_x();
        let sigma_y = params.sigma_y();
        let mut state = QevState {
            params,
            norm: Normalization { n_num: 1.0, printed_ratio: f64::NAN, convergence_delta: f64::NAN, order },
            sigma_x,
            sigma_y,
            cx: 1.0 / (SQRT_2 * sigma_x),
            cy: 1.0 / (SQRT_2 * sigma_y),
        };
        let base = state.raw_norm(order)?;
        let doubled = state.raw_norm((2 * order).min(crate::numerics::MAX_RULE_ORDER))?;
        let n_num = base.sqrt().recip();
        let n_dbl = doubled.sqrt().recip();
        let delta = ((n_num - n_dbl) / n_num).abs();
        if !(n_num.is_finite() && n_num > 0.0) {
            return Err(QevError::Numeric(format!("normalization integral degenerate: {base}")));
        }
        if delta > 1e-10 {
            return Err(QevError::Numeric(format!(
                "normalization not converged at order {order}: relative delta {delta:e}"
            )));
        }
        state.norm =
            Normalization { n_num, printed_ratio: n_num / printed_prefactor(&params), convergence_delta: delta, order };
        Ok(state)
    }

    /// `∫∫ |v|^{2m} e^{-(x²/σ_x² + y²/σ_y²)} dx dy` by variance-matched quadrature.
    fn raw_norm(&self, order: usize) -> Result<f64> {
        let rule = cached_rule(order)?;
        let rows: Vec<f64> = rule
            .nodes
            .iter()
            .map(|&t| {
                let x = self.sigma_x * t;
                rule.integrate_gaussian(self.sigma_y, |y| self.vortex(x, y).norm_sqr())
            })
            .collect();
        let terms: Vec<f64> = rows.iter().zip(&rule.weights).map(|(r, w)| r * w).collect();
        Ok(self.sigma_x * crate::numerics::pairwise(&terms))
    }

    pub fn params(&self) -> &QevParams {
        &self.params
    }

    pub fn normalization(&self) -> Normalization {
        self.norm
    }

    pub fn n_num(&self) -> f64 {
        self.norm.n_num
    }

    pub fn sigma_x(&self) -> f64 {
        self.sigma_x
    }

    pub fn sigma_y(&self) -> f64 {
        self.sigma_y
    }

    /// Vortex factor `[x/(√2σ_x) ± i y/(√2σ_y)]^m`.
    pub(crate) fn vortex(&self, x: f64, y: f64) -> Complex64 {
        self.vortex_base(x, y).powu(self.params.m)
    }

    fn vortex_base(&self, x: f64, y: f64) -> Complex64 {
        Complex64::new(self.cx * x, self.params.sign.value() * self.cy * y)
    }

    fn envelope(&self, x: f64, y: f64) -> f64 {
        let (u, v) = (x / self.sigma_x, y / self.sigma_y);
        (-0.5 * (u * u + v * v)).exp()
    }

    /// Amplitude and its gradient with the Gaussian envelope stripped off:
    /// `Ψ = g·E`, `∂Ψ = (∂g)·E` with `E = exp[-(x²/σ_x²+y²/σ_y²)/2]`.
    pub(crate) fn stripped(&self, x: f64, y: f64) -> (Complex64, Complex64, Complex64) {
        let m = self.params.m;
        let n = self.norm.n_num;
        let base = self.vortex_base(x, y);
        let (pm1, pm) = if m == 0 {
            (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0))
        } else {
            let pm1 = base.powu(m - 1);
            (pm1, pm1 * base)
        };
        let mf = f64::from(m);
        let s = self.params.sign.value();
        let dx = pm1 * (mf * self.cx) - pm * (x / (self.sigma_x * self.sigma_x));
        let dy = pm1 * Complex64::new(0.0, mf * s * self.cy) - pm * (y / (self.sigma_y * self.sigma_y));
        (pm * n, dx * n, dy * n)
    }

    pub fn psi(&self, x: f64, y: f64) -> Result<Complex64> {
        ensure_finite("x", x)?;
        ensure_finite("y", y)?;
        Ok(self.vortex(x, y) * (self.norm.n_num * self.envelope(x, y)))
    }

    /// `(∂Ψ/∂x, ∂Ψ/∂y)`.
    pub fn psi_gradient(&self, x: f64, y: f64) -> Result<(Complex64, Complex64)> {
        ensure_finite("x", x)?;
        ensure_finite("y", y)?;
        let (_, dx, dy) = self.stripped(x, y);
        let e = self.envelope(x, y);
        Ok((dx * e, dy * e))
    }

    pub fn intensity(&self, x: f64, y: f64) -> Result<f64> {
        Ok(self.psi(x, y)?.norm_sqr())
    }

    /// Phase winding of Ψ around an origin-centred circle, in units of 2π.
    ///
    /// Returns 0 without sampling when `m = 0`.
    pub fn winding_number(&self, radius: f64, samples: usize) -> Result<i64> {
        if self.params.m == 0 {
            return Ok(0);
        }
        if !(radius > 0.0 && radius.is_finite()) || samples < 8 {
            return Err(QevError::Config(format!(
                "winding contour needs radius > 0 and >= 8 samples, got ({radius}, {samples})"
            )));
        }
        let phase = |k: usize| -> Result<f64> {
            let th = TAU * k as f64 / samples as f64;
            Ok(self.psi(radius * th.cos(), radius * th.sin())?.arg())
        };
        let mut total = 0.0;
        let mut prev = phase(0)?;
        for k in 1..=samples {
            let cur = phase(k % samples)?;
            let mut d = cur - prev;
            d -= TAU * (d / TAU).round();
            total += d;
            prev = cur;
        }
        Ok((total / TAU).round() as i64)
    }
}

/// Unit-norm constant and its ratio to the printed prefactor.
pub fn normalization_constant(params: &QevParams) -> Result<Normalization> {
    Ok(QevState::new(*params)?.normalization())
}

pub fn psi(params: &QevParams, x: f64, y: f64) -> Result<Complex64> {
    QevState::new(*params)?.psi(x, y)
}

pub fn psi_gradient(params: &QevParams, x: f64, y: f64) -> Result<(Complex64, Complex64)> {
    QevState::new(*params)?.psi_gradient(x, y)
}

pub fn intensity(params: &QevParams, x: f64, y: f64) -> Result<f64> {
    QevState::new(*params)?.intensity(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::factorial;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn state(m: u32, sx: f64, sy: f64) -> QevState {
        QevState::new(QevParams::from_sigmas(m, sx, sy).unwrap()).unwrap()
    }

    /// `∫∫ r^{2m} e^{-r²} = π m!`, scaled by the widths and the 2^{-m} of the
    /// vortex factor.
    fn analytic_n(m: u32, sx: f64, sy: f64) -> f64 {
        (2f64.powi(m as i32) / (PI * factorial(m) * sx * sy)).sqrt()
    }

    #[test]
    fn bs_examples() {
        let c = bs_coefficients(0.0, 1.234);
        assert_eq!(c.a_x, Complex64::new(1.0, 0.0));
        assert_eq!(c.a_y.norm(), 0.0);
        let c = bs_coefficients(std::f64::consts::FRAC_PI_4, 0.0);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_relative_eq!(c.a_x.re, h, max_relative = 1e-15);
        assert_relative_eq!(c.a_y.im, h, max_relative = 1e-15);
        let c = bs_coefficients(PI / 3.0, PI / 2.0);
        assert!(c.norm_residual().abs() < 1e-14);
        assert!(c.cross_residual().abs() < 1e-14);
    }

    #[test]
    fn mixing_matrix_rows_have_unit_norm() {
        let m = bs_coefficients(0.3, 0.7).mixing_matrix();
        for row in m {
            assert!((row[0].norm_sqr() + row[1].norm_sqr() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn params_derived_values() {
        let p = QevParams::new(2, 0.25, -0.5).unwrap();
        assert_relative_eq!(p.sigma_x(), 0.5f64.exp(), max_relative = 1e-15);
        assert_relative_eq!(p.eta_y(), 1.0 / (SQRT_2 * (-1.0f64).exp()), max_relative = 1e-15);
        assert!(QevParams::new(1, f64::NAN, 0.0).is_err());
        assert!(QevParams::new(1, 400.0, 0.0).is_err());
        assert!(QevParams::from_sigmas(1, -1.0, 1.0).is_err());
        let custom = p.with_coupling(0.2, 0.3).unwrap();
        assert!(QevState::new(custom).is_err());
        assert!(p.with_coupling(-0.2, 0.3).is_err());
    }

    #[test]
    fn psi_examples() {
        let s = state(1, 2.0, 0.7);
        assert_eq!(s.psi(0.0, 0.0).unwrap().norm(), 0.0);
        let s0 = state(0, 1.0, 1.0);
        assert_relative_eq!(s0.psi(0.0, 0.0).unwrap().norm(), 1.0 / PI.sqrt(), max_relative = 1e-13);
        let s2 = state(2, 5.0, 3.0);
        assert_eq!(s2.winding_number(0.1, 256).unwrap(), 2);
        let neg = QevState::new(QevParams::from_sigmas(2, 5.0, 3.0).unwrap().with_sign(VortexSign::Minus)).unwrap();
        assert_eq!(neg.winding_number(0.1, 256).unwrap(), -2);
        assert_eq!(s0.winding_number(0.1, 256).unwrap(), 0);
        assert!(s.psi(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn normalization_examples() {
        let n = normalization_constant(&QevParams::from_sigmas(0, 1.0, 1.0).unwrap()).unwrap();
        assert_relative_eq!(n.n_num, 1.0 / PI.sqrt(), max_relative = 1e-13);
        let n = normalization_constant(&QevParams::from_sigmas(0, 5.0, 3.0).unwrap()).unwrap();
        assert_relative_eq!(n.n_num, 1.0 / (15.0 * PI).sqrt(), max_relative = 1e-13);
        assert!(n.convergence_delta < 1e-10);
        for m in 0..=8 {
            for (sx, sy) in [(0.3, 5.0), (1.0, 1.0), (5.0, 3.0)] {
                let s = state(m, sx, sy);
                assert_relative_eq!(s.n_num(), analytic_n(m, sx, sy), max_relative = 1e-12);
                assert!(s.normalization().printed_ratio.is_finite());
            }
        }
    }

    #[test]
    fn gradient_examples() {
        let s0 = state(0, 2.0, 3.0);
        let (gx, gy) = s0.psi_gradient(0.0, 0.0).unwrap();
        assert_eq!((gx.norm(), gy.norm()), (0.0, 0.0));
        let (sx, sy) = (2.0, 0.5);
        let s1 = state(1, sx, sy);
        let n = s1.n_num();
        let (gx, gy) = s1.psi_gradient(0.0, 0.0).unwrap();
        assert_relative_eq!(gx.re, n / (SQRT_2 * sx), max_relative = 1e-14);
        assert_eq!(gx.im, 0.0);
        assert_relative_eq!(gy.im, n / (SQRT_2 * sy), max_relative = 1e-14);
        assert_eq!(gy.re, 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (m, sx, sy) in [(1, 1.0, 1.0), (3, 5.0, 3.0), (5, 0.5, 2.0)] {
            let s = state(m, sx, sy);
            let mut checked = 0;
            while checked < 20 {
                let x = rng.random_range(-2.0..2.0) * sx;
                let y = rng.random_range(-2.0..2.0) * sy;
                let (gx, gy) = s.psi_gradient(x, y).unwrap();
                // stay away from nodal lines where relative error is meaningless
                if gx.norm() < 1e-3 * s.n_num() / sx || gy.norm() < 1e-3 * s.n_num() / sy {
                    continue;
                }
                let hx = 1e-5 * sx;
                let hy = 1e-5 * sy;
                let fx = (s.psi(x + hx, y).unwrap() - s.psi(x - hx, y).unwrap()) / (2.0 * hx);
                let fy = (s.psi(x, y + hy).unwrap() - s.psi(x, y - hy).unwrap()) / (2.0 * hy);
                assert!((fx - gx).norm() <= 1e-6 * gx.norm(), "m={m} at ({x},{y})");
                assert!((fy - gy).norm() <= 1e-6 * gy.norm(), "m={m} at ({x},{y})");
                checked += 1;
            }
        }
    }

    #[test]
    fn intensity_swap_and_parity() {
        let p = QevParams::from_sigmas(3, 5.0, 3.0).unwrap();
        let a = QevState::new(p).unwrap();
        let b = QevState::new(p.swapped()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let x = rng.random_range(-10.0..10.0);
            let y = rng.random_range(-10.0..10.0);
            let ia = a.intensity(x, y).unwrap();
            assert!(ia >= 0.0);
            assert!((ia - b.intensity(y, x).unwrap()).abs() <= 1e-14 * ia.max(1e-300));
            assert_eq!(ia, a.intensity(-x, -y).unwrap());
        }
    }

    #[test]
    fn printed_prefactor_reference() {
        // m=0, unit widths: 2^{-2}/(Γ(½)√π) = 1/(4π)
        let p = QevParams::from_sigmas(0, 1.0, 1.0).unwrap();
        assert_relative_eq!(printed_prefactor(&p), 1.0 / (4.0 * PI), max_relative = 1e-15);
        let n = normalization_constant(&p).unwrap();
        assert_relative_eq!(n.printed_ratio, 4.0 * PI.sqrt(), max_relative = 1e-12);
    }
}
