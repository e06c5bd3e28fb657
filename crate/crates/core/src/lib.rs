//! Phase-space analysis of two-mode quantum-elliptic-vortex (QEV) states.
//!
//! A QEV of order `m` is the two-mode amplitude
//!
//! ```text
//! Ψ(x, y) = N · (x/(√2σ_x) ± i·y/(√2σ_y))^m · exp(-(x²/σ_x² + y²/σ_y²)/2),   σ = e^{2ζ}
//! ```
//!
//! The crate offers two independent routes to its Wigner function:
//!
//! * [`Pipeline::PaperLiteral`]: a closed form with a Laguerre factor
//!   ([`ClosedFormWigner`]), normalized numerically;
//! * [`Pipeline::Oracle`]: a quadrature Wigner transform of `Ψ`
//!   ([`OracleWigner`]).
//!
//! On top of those sit covariance matrices, PPT symplectic eigenvalues and
//! logarithmic negativity ([`entanglement`]), width sweeps ([`sweep`]) and
//! file output ([`io`]).
//!
//! Heavy loops run on rayon when the `parallel` feature is on (default) and
//! sequentially otherwise. Reductions use a fixed pairwise tree, so results
//! are bit-identical for any thread count.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub mod entanglement;
pub mod error;
pub mod io;
pub mod numerics;
pub mod oracle;
pub mod par;
pub mod selftest;
pub mod state;
pub mod sweep;
pub mod wigner;

pub use entanglement::{
    covariance, log_negativity, second_moments, symplectic_eigen_physical, symplectic_eigen_pt, CovarianceMatrix,
    EntanglementReport, MomentMethod,
};
pub use error::{QevError, Result};
pub use numerics::{gamma_half_integer, gauss_hermite_rule, laguerre_assoc_half, QuadratureRule};
pub use oracle::{validate_closed_form, wigner_transform, OracleWigner, ValidationReport};
pub use state::{bs_coefficients, normalization_constant, psi, psi_gradient, QevParams, QevState, VortexSign};
pub use wigner::{
    scaled_vars, slice_extrema, wigner_closed, wigner_slice, ClosedFormWigner, Grid2D, GridSpec, PhasePoint, Plane,
    WignerFunction,
};

/// Which Wigner function a computation is based on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    /// Closed form with Laguerre factor.
    #[default]
    PaperLiteral,
    /// Numerical Wigner transform of the amplitude.
    Oracle,
}

impl Pipeline {
    pub fn as_str(self) -> &'static str {
        match self {
            Pipeline::PaperLiteral => "paper-literal",
            Pipeline::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pipeline {
    type Err = QevError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-literal" | "literal" => Ok(Pipeline::PaperLiteral),
            "oracle" => Ok(Pipeline::Oracle),
            _ => Err(QevError::Config(format!("unknown pipeline {s:?} (expected paper-literal or oracle)"))),
        }
    }
}

/// Select the Wigner function for `pipeline`.
pub fn wigner_function(params: QevParams, pipeline: Pipeline) -> Result<Box<dyn WignerFunction + Send>> {
    Ok(match pipeline {
        Pipeline::PaperLiteral => Box::new(ClosedFormWigner::new(params)?),
        Pipeline::Oracle => Box::new(OracleWigner::from_params(params)?),
    })
}
