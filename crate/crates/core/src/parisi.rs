//! Solver for the Gibbs and Parisi variational principles of linear REM-type
//! models.
//!
//! The Gibbs principle is maximized by a tilted measure `G_m*`: `m* = 1` when
//! `gamma'(1) - gamma(1) <= log 2`, otherwise `m*` solves the entropy condition
//! `m gamma'(m) - gamma(m) = log 2`. The Parisi functional
//! `psi(m) = log 2 / m + gamma(m) / m - log 2` is minimized over `(0, 1]` by the
//! same `m*`; both routes are implemented independently so their free energies
//! can be compared.

use std::f64::consts::LN_2;
use std::sync::OnceLock;

use log::debug;

use crate::error::{Error, Result};
use crate::model::PhiModel;
use crate::quadrature::QuadratureRule;
use crate::tilt::{cavity_moments, gamma_profile, GammaProfile};

/// Default tolerance on root-finding residuals.
pub const DEFAULT_TOL: f64 = 1e-12;

/// Slack on the regime boundary `gamma'(1) - gamma(1) = log 2`, at the level of
/// quadrature rounding. Values within it are classified as high temperature.
pub const REGIME_TOL: f64 = 1e-12;

/// Points of the grid used to cross-check the Parisi infimum.
pub const DUALITY_GRID: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    HighTemp,
    LowTemp,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::HighTemp => "high",
            Regime::LowTemp => "low",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeSolution {
    pub regime: Regime,
    pub m_star: f64,
    pub free_energy: f64,
    pub entropy_at_opt: f64,
    pub q_star: Option<f64>,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualityReport {
    pub f_gibbs: f64,
    pub f_parisi: f64,
    pub gap: f64,
    /// Minimum of `psi` over the grid `k / 1000`, `k = 1..=1000`.
    pub grid_min: f64,
    /// `grid_min >= f_parisi - tol`.
    pub grid_consistent: bool,
}

#[derive(Debug)]
pub struct ParisiSolver {
    rule: QuadratureRule,
    beta_cr: OnceLock<Result<f64>>,
}

impl Default for ParisiSolver {
    fn default() -> Self {
        Self::new(QuadratureRule::default())
    }
}

static SHARED: OnceLock<ParisiSolver> = OnceLock::new();

impl ParisiSolver {
    pub fn new(rule: QuadratureRule) -> Self {
        Self { rule, beta_cr: OnceLock::new() }
    }

    /// Process-wide solver with the default quadrature; its critical
    /// temperature is computed once.
    pub fn shared() -> &'static ParisiSolver {
        SHARED.get_or_init(ParisiSolver::default)
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn profile(&self, model: &PhiModel, m: f64) -> Result<GammaProfile> {
        gamma_profile(model, m, &self.rule)
    }

    /// `m gamma'(m) - gamma(m)`, the relative entropy of `G_m`.
    pub fn entropy(&self, model: &PhiModel, m: f64) -> Result<f64> {
        let p = self.profile(model, m)?;
        Ok(m * p.gamma1 - p.gamma)
    }

    pub fn classify_regime(&self, model: &PhiModel) -> Result<Regime> {
        Ok(if self.entropy(model, 1.0)? <= LN_2 + REGIME_TOL {
            Regime::HighTemp
        } else {
            Regime::LowTemp
        })
    }

    /// Solves the Gibbs principle in either regime.
    pub fn solve(&self, model: &PhiModel, tol: f64) -> Result<RegimeSolution> {
        match self.classify_regime(model)? {
            Regime::LowTemp => self.solve_mstar(model, tol),
            Regime::HighTemp => {
                let p = self.profile(model, 1.0)?;
                Ok(RegimeSolution {
                    regime: Regime::HighTemp,
                    m_star: 1.0,
                    free_energy: gibbs_value(&p),
                    entropy_at_opt: p.gamma1 - p.gamma,
                    q_star: None,
                    residual: 0.0,
                })
            }
        }
    }

    /// Root of the entropy condition in the low-temperature regime: bisection
    /// down to a short bracket, then Newton steps with derivative
    /// `m gamma''(m)`, falling back to bisection whenever a step leaves the
    /// bracket.
    pub fn solve_mstar(&self, model: &PhiModel, tol: f64) -> Result<RegimeSolution> {
        if self.classify_regime(model)? != Regime::LowTemp {
            return Err(Error::NotLowTemp);
        }
        let at_one = self.entropy(model, 1.0)? - LN_2;
        if at_one <= 0.0 {
            return Err(Error::NoBracket { value: at_one + LN_2 });
        }
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        while hi - lo > 1e-3 {
            let mid = 0.5 * (lo + hi);
            if self.entropy(model, mid)? > LN_2 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let mut m = 0.5 * (lo + hi);
        let mut best = (f64::INFINITY, m);
        for _ in 0..200 {
            let p = self.profile(model, m)?;
            let f = m * p.gamma1 - p.gamma - LN_2;
            if f.abs() < best.0 {
                best = (f.abs(), m);
            }
            if f.abs() <= tol {
                break;
            }
            if f > 0.0 {
                hi = m;
            } else {
                lo = m;
            }
            let slope = m * p.gamma2;
            let newton = m - f / slope;
            let next = if slope > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if next == m {
                break;
            }
            m = next;
        }
        let (residual, m) = best;
        if residual > tol {
            return Err(Error::NoConvergence { residual });
        }
        let p = self.profile(model, m)?;
        let q_star = match model {
            PhiModel::Cavity { beta } => Some(cavity_moments(*beta, m, &self.rule)?.c_over_a()),
            _ => None,
        };
        Ok(RegimeSolution {
            regime: Regime::LowTemp,
            m_star: m,
            free_energy: gibbs_value(&p),
            entropy_at_opt: m * p.gamma1 - p.gamma,
            q_star,
            residual,
        })
    }

    /// `psi(m) = log 2 / m + gamma(m) / m - log 2`.
    pub fn parisi_functional(&self, model: &PhiModel, m: f64) -> Result<f64> {
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::Domain(format!("Parisi functional needs m > 0, got {m}")));
        }
        let p = self.profile(model, m)?;
        Ok(LN_2 / m + p.gamma / m - LN_2)
    }

    /// `psi'(m) = (H(G_m | mu) - log 2) / m^2`.
    pub fn parisi_derivative(&self, model: &PhiModel, m: f64) -> Result<f64> {
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::Domain(format!("Parisi functional needs m > 0, got {m}")));
        }
        Ok((self.entropy(model, m)? - LN_2) / (m * m))
    }

    /// Infimum of the Parisi functional over `(0, 1]`. The interior minimum is
    /// located with Illinois false position on the stationarity condition,
    /// independently of [`solve_mstar`](Self::solve_mstar).
    pub fn free_energy_parisi(&self, model: &PhiModel, tol: f64) -> Result<f64> {
        let g = |m: f64| -> Result<f64> { Ok(self.entropy(model, m)? - LN_2) };
        let g_hi = g(1.0)?;
        if g_hi <= REGIME_TOL {
            return Ok(self.profile(model, 1.0)?.gamma);
        }
        let (mut a, mut fa) = (0.0_f64, -LN_2);
        let (mut b, mut fb) = (1.0_f64, g_hi);
        let mut side = 0i8;
        let mut m = b;
        let mut fm = fb;
        for _ in 0..500 {
            m = (a * fb - b * fa) / (fb - fa);
            fm = g(m)?;
            if fm.abs() <= tol || (b - a) < 1e-15 {
                break;
            }
            if fm > 0.0 {
                b = m;
                fb = fm;
                if side == 1 {
                    fa *= 0.5;
                }
                side = 1;
            } else {
                a = m;
                fa = fm;
                if side == -1 {
                    fb *= 0.5;
                }
                side = -1;
            }
        }
        if fm.abs() > tol {
            return Err(Error::NoConvergence { residual: fm.abs() });
        }
        self.parisi_functional(model, m)
    }

    pub fn duality_report(&self, model: &PhiModel, tol: f64) -> Result<DualityReport> {
        let f_gibbs = self.solve(model, tol)?.free_energy;
        let f_parisi = self.free_energy_parisi(model, tol)?;
        let mut grid_min = f64::INFINITY;
        for k in 1..=DUALITY_GRID {
            let v = self.parisi_functional(model, k as f64 / DUALITY_GRID as f64)?;
            grid_min = grid_min.min(v);
        }
        Ok(DualityReport {
            f_gibbs,
            f_parisi,
            gap: (f_gibbs - f_parisi).abs(),
            grid_min,
            grid_consistent: grid_min >= f_parisi - tol,
        })
    }

    /// `e^{-beta^2/2} E[cosh(beta g) log cosh(beta g)]`, increasing in `beta`;
    /// it crosses `log 2` at the critical point of the cavity model.
    pub fn critical_entropy(&self, beta: f64) -> Result<f64> {
        let cm = cavity_moments(beta, 1.0, &self.rule)?;
        Ok((cm.log_a - 0.5 * beta * beta).exp() * cm.b_over_a())
    }

    /// Critical inverse temperature of the REM+Cavity model: bracket by
    /// doubling, then bisection.
    pub fn solve_beta_cr(&self, tol: f64) -> Result<f64> {
        let h = |b: f64| -> Result<f64> { Ok(self.critical_entropy(b)? - LN_2) };
        let (mut lo, mut hi) = (0.5_f64, 1.0_f64);
        while h(lo)? >= 0.0 {
            hi = lo;
            lo *= 0.5;
        }
        while h(hi)? <= 0.0 {
            lo = hi;
            hi *= 2.0;
            if hi > 64.0 {
                return Err(Error::NoBracket { value: h(hi)? + LN_2 });
            }
        }
        let mut best = (f64::INFINITY, lo);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let v = h(mid)?;
            if v.abs() < best.0 {
                best = (v.abs(), mid);
            }
            if v.abs() <= tol && hi - lo < 1e-12 {
                break;
            }
            if v > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
            if mid <= lo && mid >= hi {
                break;
            }
        }
        if best.0 > tol {
            return Err(Error::NoConvergence { residual: best.0 });
        }
        Ok(best.1)
    }

    /// Cached critical point at [`DEFAULT_TOL`].
    pub fn beta_cr(&self) -> Result<f64> {
        self.beta_cr.get_or_init(|| self.solve_beta_cr(DEFAULT_TOL)).clone()
    }

    /// Conditional overlap within a pure state,
    /// `E[tanh^2(beta g) cosh^m*] / E[cosh^m*]`.
    pub fn q_star(&self, beta: f64, tol: f64) -> Result<f64> {
        if beta <= self.beta_cr()? {
            return Err(Error::NotLowTemp);
        }
        let sol = self.solve_mstar(&PhiModel::cavity(beta), tol)?;
        Ok(cavity_moments(beta, sol.m_star, &self.rule)?.c_over_a())
    }

    /// Limiting free energy of the REM+Cavity model.
    pub fn cavity_free_energy(&self, beta: f64, tol: f64) -> Result<f64> {
        PhiModel::cavity(beta).validate()?;
        if beta <= self.beta_cr()? {
            return Ok(beta * beta);
        }
        let sol = self.solve_mstar(&PhiModel::cavity(beta), tol)?;
        let f = self.cavity_low_branch(beta, sol.m_star)?;
        debug!(
            "cavity free energy at beta={beta}: continuous form {f:.17e}, half-weight form {:.17e}",
            self.cavity_low_branch_half_weight(beta, sol.m_star)?
        );
        Ok(f)
    }

    /// `beta^2 m + B/A - log 2`, the low-temperature branch evaluated at an
    /// arbitrary `m`.
    pub fn cavity_low_branch(&self, beta: f64, m: f64) -> Result<f64> {
        let cm = cavity_moments(beta, m, &self.rule)?;
        Ok(beta * beta * m + cm.b_over_a() - LN_2)
    }

    /// `beta^2 m / 2 + B/A - log 2`. Not continuous at the critical point;
    /// kept only for diagnostics.
    pub fn cavity_low_branch_half_weight(&self, beta: f64, m: f64) -> Result<f64> {
        let cm = cavity_moments(beta, m, &self.rule)?;
        Ok(0.5 * beta * beta * m + cm.b_over_a() - LN_2)
    }
}

fn gibbs_value(p: &GammaProfile) -> f64 {
    (1.0 - p.m) * p.gamma1 + p.gamma
}
