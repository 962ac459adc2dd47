use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Largest inverse temperature for which the default quadrature is validated.
pub const MAX_BETA: f64 = 6.0;

/// A user-supplied single-site function evaluated against a standard Gaussian.
#[derive(Clone)]
pub struct CustomPhi {
    name: String,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl CustomPhi {
    pub fn new(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { name: name.into(), f: Arc::new(f) }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }
}

impl fmt::Debug for CustomPhi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("CustomPhi").field(&self.name).finish()
    }
}

/// Which REM-type model is under study: the single-site function together with
/// its base measure.
///
/// * `PureRem`: `phi(x) = beta x` under the standard Gaussian.
/// * `Cavity`: `phi(x1, x2) = beta x1 + log cosh(beta x2)` under the standard
///   bivariate Gaussian (the REM+Cavity model after tracing out the spins).
/// * `Custom`: arbitrary `phi` under the standard Gaussian.
#[derive(Debug, Clone)]
pub enum PhiModel {
    PureRem { beta: f64 },
    Cavity { beta: f64 },
    Custom(CustomPhi),
}

impl PhiModel {
    pub fn pure_rem(beta: f64) -> Self {
        PhiModel::PureRem { beta }
    }

    pub fn cavity(beta: f64) -> Self {
        PhiModel::Cavity { beta }
    }

    pub fn custom(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        PhiModel::Custom(CustomPhi::new(name, f))
    }

    pub fn beta(&self) -> Option<f64> {
        match self {
            PhiModel::PureRem { beta } | PhiModel::Cavity { beta } => Some(*beta),
            PhiModel::Custom(_) => None,
        }
    }

    /// Short tag used in output tables and dumps.
    pub fn tag(&self) -> &str {
        match self {
            PhiModel::PureRem { .. } => "pure-rem",
            PhiModel::Cavity { .. } => "cavity",
            PhiModel::Custom(c) => c.name(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(beta) = self.beta() {
            if !beta.is_finite() || beta < 0.0 {
                return Err(Error::Domain(format!("beta must be finite and >= 0, got {beta}")));
            }
            if beta > MAX_BETA {
                return Err(Error::Domain(format!("beta {beta} exceeds supported maximum {MAX_BETA}")));
            }
        }
        Ok(())
    }

    /// The independent one-dimensional factors of `phi`; the base measure is
    /// the product of standard Gaussians, one per factor.
    pub(crate) fn factors(&self) -> Vec<Factor<'_>> {
        match self {
            PhiModel::PureRem { beta } => vec![Factor::Linear(*beta)],
            PhiModel::Cavity { beta } => vec![Factor::Linear(*beta), Factor::LogCosh(*beta)],
            PhiModel::Custom(c) => vec![Factor::Custom(c)],
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Factor<'a> {
    Linear(f64),
    LogCosh(f64),
    Custom(&'a CustomPhi),
}

impl Factor<'_> {
    #[inline]
    pub(crate) fn eval(&self, x: f64) -> f64 {
        match *self {
            Factor::Linear(b) => b * x,
            Factor::LogCosh(b) => log_cosh(b * x),
            Factor::Custom(c) => c.eval(x),
        }
    }
}

/// `log cosh(x)` without overflow.
#[inline]
pub fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// `(log cosh(x), tanh(x))` sharing one exponential.
#[inline]
pub fn log_cosh_tanh(x: f64) -> (f64, f64) {
    let a = x.abs();
    let e = (-2.0 * a).exp();
    let lc = a + e.ln_1p() - std::f64::consts::LN_2;
    let t = (1.0 - e) / (1.0 + e);
    (lc, t.copysign(x))
}
