//! Log-moment generating function of `phi`, its tilted measures, and samplers
//! for them.
//!
//! For a model with single-site function `phi` and base measure `mu`,
//! `gamma(m) = log E_mu[exp(m phi)]`; the tilted measure `G_m` has density
//! `exp(m phi - gamma(m))` with respect to `mu`. Its first two derivatives are
//! the mean and the variance of `phi` under `G_m`, which is how they are
//! computed here.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{log_cosh, PhiModel};
use crate::quadrature::QuadratureRule;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaProfile {
    pub m: f64,
    pub gamma: f64,
    pub gamma1: f64,
    pub gamma2: f64,
}

/// `A = E[cosh(beta g)^m]`, `B = E[cosh(beta g)^m log cosh(beta g)]`,
/// `C = E[tanh^2(beta g) cosh(beta g)^m]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityMoments {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub log_a: f64,
}

impl CavityMoments {
    /// Mean of `log cosh(beta g)` under the tilted law.
    pub fn b_over_a(&self) -> f64 {
        self.b / self.a
    }

    /// Mean of `tanh^2(beta g)` under the tilted law.
    pub fn c_over_a(&self) -> f64 {
        self.c / self.a
    }
}

pub fn gamma_profile(model: &PhiModel, m: f64, rule: &QuadratureRule) -> Result<GammaProfile> {
    if !m.is_finite() {
        return Err(Error::Domain(format!("tilt parameter must be finite, got {m}")));
    }
    model.validate()?;
    let mut out = GammaProfile { m, gamma: 0.0, gamma1: 0.0, gamma2: 0.0 };
    for factor in model.factors() {
        let t = rule.tilted(m, |x| factor.eval(x))?;
        out.gamma += t.log_z;
        out.gamma1 += t.mean;
        out.gamma2 += t.var;
    }
    if m == 0.0 {
        // log sum w_j = 0 up to rounding of the normalized weights
        out.gamma = 0.0;
    }
    Ok(out)
}

pub fn cavity_moments(beta: f64, m: f64, rule: &QuadratureRule) -> Result<CavityMoments> {
    if !beta.is_finite() || beta < 0.0 || !m.is_finite() {
        return Err(Error::Domain(format!("cavity moments need beta >= 0 and finite m, got ({beta}, {m})")));
    }
    let lc: Vec<f64> = rule.nodes().iter().map(|&x| log_cosh(beta * x)).collect();
    let t = rule.tilted_values(m, &lc)?;
    let log_a = if m == 0.0 { 0.0 } else { t.log_z };
    let a = log_a.exp();
    // tanh^2 weighted by the same tilted probabilities
    let mut tanh2 = 0.0;
    for ((&x, &lw), &l) in rule.nodes().iter().zip(rule.log_weights()).zip(&lc) {
        let th = (beta * x).tanh();
        tanh2 += (lw + m * l - t.log_z).exp() * th * th;
    }
    let (b, c) = (a * t.mean, a * tanh2);
    if !(a.is_finite() && b.is_finite() && c.is_finite()) {
        return Err(Error::NonFinite { context: "cavity moments" });
    }
    Ok(CavityMoments { a, b, c, log_a })
}

/// Relative entropy `H(G_m | mu) = m gamma'(m) - gamma(m)`.
pub fn entropy_of_tilt(model: &PhiModel, m: f64, rule: &QuadratureRule) -> Result<f64> {
    let p = gamma_profile(model, m, rule)?;
    Ok(m * p.gamma1 - p.gamma)
}

/// Default floor on the rejection sampler's acceptance rate.
pub const DEFAULT_ACCEPTANCE_FLOOR: f64 = 1e-3;
const STALL_CHECK_AFTER: u64 = 10_000;

/// Draws values of `phi(X)` with `X ~ G_m`.
///
/// The linear coordinate is tilted exactly (`x ~ N(m beta, 1)`). The
/// `log cosh` coordinate of the cavity model uses rejection from the envelope
/// `2 cosh(m beta x) * gauss(x)`, an equal mixture of `N(+-m beta, 1)`, accepting
/// with probability `cosh(beta x)^m / (2 cosh(m beta x))`.
#[derive(Debug, Clone)]
pub struct TiltedSampler {
    kind: SamplerKind,
    m: f64,
    floor: f64,
    attempts: u64,
    accepted: u64,
}

#[derive(Debug, Clone, Copy)]
enum SamplerKind {
    PureRem { beta: f64 },
    Cavity { beta: f64 },
}

impl TiltedSampler {
    pub fn new(model: &PhiModel, m: f64) -> Result<Self> {
        Self::with_floor(model, m, DEFAULT_ACCEPTANCE_FLOOR)
    }

    pub fn with_floor(model: &PhiModel, m: f64, floor: f64) -> Result<Self> {
        model.validate()?;
        if !(0.0..=1.0).contains(&m) {
            return Err(Error::Domain(format!("tilted sampling needs 0 <= m <= 1, got {m}")));
        }
        let kind = match model {
            PhiModel::PureRem { beta } => SamplerKind::PureRem { beta: *beta },
            PhiModel::Cavity { beta } => SamplerKind::Cavity { beta: *beta },
            PhiModel::Custom(_) => return Err(Error::Unsupported("tilted sampling of a custom phi")),
        };
        Ok(Self { kind, m, floor, attempts: 0, accepted: 0 })
    }

    /// Acceptance probability of the cavity envelope at `x`.
    pub fn acceptance_probability(beta: f64, m: f64, x: f64) -> f64 {
        let mb = m * beta * x;
        // log of cosh(beta x)^m / (2 cosh(m beta x))
        (m * log_cosh(beta * x) - log_cosh(mb) - std::f64::consts::LN_2).exp()
    }

    /// Observed acceptance rate of the rejection step (1 when none is used).
    pub fn acceptance_rate(&self) -> f64 {
        if self.attempts == 0 {
            1.0
        } else {
            self.accepted as f64 / self.attempts as f64
        }
    }

    pub fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<f64> {
        match self.kind {
            SamplerKind::PureRem { beta } => {
                let z: f64 = rng.sample(StandardNormal);
                Ok(beta * (z + self.m * beta))
            }
            SamplerKind::Cavity { beta } => {
                let z: f64 = rng.sample(StandardNormal);
                let x1 = z + self.m * beta;
                let x2 = self.draw_log_cosh_coordinate(beta, rng)?;
                Ok(beta * x1 + log_cosh(beta * x2))
            }
        }
    }

    fn draw_log_cosh_coordinate<R: Rng + ?Sized>(&mut self, beta: f64, rng: &mut R) -> Result<f64> {
        let shift = self.m * beta;
        loop {
            self.attempts += 1;
            let z: f64 = rng.sample(StandardNormal);
            let x = if rng.random::<bool>() { z + shift } else { z - shift };
            let u: f64 = rng.random();
            if u < Self::acceptance_probability(beta, self.m, x) {
                self.accepted += 1;
                return Ok(x);
            }
            if self.attempts >= STALL_CHECK_AFTER && self.acceptance_rate() < self.floor {
                return Err(Error::RejectionStall { rate: self.acceptance_rate(), floor: self.floor });
            }
        }
    }
}

/// `n` independent draws of `phi(X)`, `X ~ G_m`.
pub fn sample_tilted<R: Rng + ?Sized>(model: &PhiModel, m: f64, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    let mut sampler = TiltedSampler::new(model, m)?;
    (0..n).map(|_| sampler.draw(rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamRng;
    use crate::stats::MeanEstimate;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::LN_2;

    fn rule() -> QuadratureRule {
        QuadratureRule::default()
    }

    #[test]
    fn pure_rem_profile_closed_form() {
        // gamma(m) = m^2 beta^2 / 2
        let p = gamma_profile(&PhiModel::pure_rem(2.0), 0.5, &rule()).unwrap();
        assert_abs_diff_eq!(p.gamma, 0.5, epsilon = 1e-13);
        assert_abs_diff_eq!(p.gamma1, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.gamma2, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn gamma_vanishes_at_zero() {
        for model in [PhiModel::pure_rem(1.3), PhiModel::cavity(2.5), PhiModel::custom("tanh", f64::tanh)] {
            assert_eq!(gamma_profile(&model, 0.0, &rule()).unwrap().gamma, 0.0);
        }
    }

    #[test]
    fn cavity_gamma_at_one_is_beta_squared() {
        // E[e^{beta x}] E[cosh(beta x)] = e^{beta^2/2} e^{beta^2/2}
        for beta in [0.5, 1.0, 2.5, 4.0] {
            let p = gamma_profile(&PhiModel::cavity(beta), 1.0, &rule()).unwrap();
            assert_abs_diff_eq!(p.gamma, beta * beta, epsilon = 1e-12 * beta * beta);
        }
    }

    #[test]
    fn cavity_moment_edge_cases() {
        let m0 = cavity_moments(1.7, 0.0, &rule()).unwrap();
        assert_eq!(m0.a, 1.0);
        assert!(m0.c > 0.0 && m0.c < 1.0);
        let b0 = cavity_moments(0.0, 0.6, &rule()).unwrap();
        assert_eq!((b0.a, b0.b, b0.c), (1.0, 0.0, 0.0));
        for beta in [0.7, 2.0, 3.5] {
            let m1 = cavity_moments(beta, 1.0, &rule()).unwrap();
            assert_abs_diff_eq!(m1.a, (beta * beta / 2.0).exp(), epsilon = 1e-12 * m1.a);
        }
    }

    #[test]
    fn cavity_moment_invariants() {
        for beta in [0.3, 1.0, 2.5, 4.0, 6.0] {
            for m in [0.0, 0.25, 0.5, 1.0] {
                let cm = cavity_moments(beta, m, &rule()).unwrap();
                assert!(cm.a >= 1.0 - 1e-15 && cm.b >= 0.0 && cm.c >= 0.0 && cm.c < cm.a);
            }
        }
    }

    #[test]
    fn entropy_examples() {
        let r = rule();
        assert_eq!(entropy_of_tilt(&PhiModel::cavity(2.0), 0.0, &r).unwrap(), 0.0);
        let m = (2.0 * LN_2).sqrt() / 2.0;
        assert_abs_diff_eq!(entropy_of_tilt(&PhiModel::pure_rem(2.0), m, &r).unwrap(), LN_2, epsilon = 1e-12);
        assert_abs_diff_eq!(entropy_of_tilt(&PhiModel::pure_rem(2.0), 0.3, &r).unwrap(), 0.18, epsilon = 1e-12);
    }

    #[test]
    fn custom_phi_non_finite() {
        let model = PhiModel::custom("blowup", |x| if x > 3.0 { f64::INFINITY } else { x });
        assert!(matches!(gamma_profile(&model, 0.5, &rule()), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn tilted_pure_rem_mean() {
        let mut rng = StreamRng::new(11, 0);
        let xs = sample_tilted(&PhiModel::pure_rem(2.0), 0.5, 1_000_000, &mut rng).unwrap();
        let est = MeanEstimate::from_slice(&xs);
        assert!((est.mean - 2.0).abs() < 3.0 * est.std_err, "{est:?}");
    }

    #[test]
    fn untilted_sampling_matches_base_mean() {
        let mut rng = StreamRng::new(12, 0);
        let model = PhiModel::cavity(1.2);
        let xs = sample_tilted(&model, 0.0, 200_000, &mut rng).unwrap();
        let est = MeanEstimate::from_slice(&xs);
        let p = gamma_profile(&model, 0.0, &rule()).unwrap();
        assert!(est.z_score(p.gamma1) < 4.0, "{est:?} vs {}", p.gamma1);
    }

    #[test]
    fn envelope_bound_holds() {
        for &x in &[-8.0, -1.0, -0.1, 0.0, 0.2, 1.5, 9.0] {
            for &m in &[0.05, 0.5, 1.0] {
                let p = TiltedSampler::acceptance_probability(1.0, m, x);
                assert!(p > 0.0 && p <= 1.0, "x={x} m={m} p={p}");
            }
        }
    }

    #[test]
    fn custom_sampling_unsupported() {
        let mut rng = StreamRng::new(1, 1);
        assert!(sample_tilted(&PhiModel::custom("id", |x| x), 0.5, 1, &mut rng).is_err());
    }
}
