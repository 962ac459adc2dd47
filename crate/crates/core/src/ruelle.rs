//! Poisson point processes `PP(m)` with intensity `t^{-m-1} dt` on the positive
//! half-line, their Poisson-Dirichlet normalizations `PD(m)`, and Monte Carlo
//! checks of the expectation identities satisfied by `PP(m)`-weighted sums.
//!
//! Points are generated above a cutoff `eps`. Everything below the cutoff is
//! "dust": infinitely many tiny points whose total mass has mean
//! `eps^{1-m} / (1-m)` and a relative spread that vanishes with `eps`. The
//! compensated estimators add the dust means back into the sums; without them
//! the truncation bias is of order one when `m` is close to 1.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::log_cosh;
use crate::quadrature::QuadratureRule;
use crate::rng::StreamRng;
use crate::stats::{MeanEstimate, Welford};

/// Default bound on the expected number of points in one sample.
pub const DEFAULT_POINT_BUDGET: f64 = 5e7;

const STREAM_PD_SQUARES: u64 = 1;
const STREAM_TALA: u64 = 2;
const STREAM_PP_REFERENCE: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointKind {
    Pp,
    Pd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointSample {
    /// Non-increasing.
    pub points: Vec<f64>,
    pub kind: PointKind,
    pub cutoff: f64,
    pub m: f64,
    /// Mass attributed to the points below the cutoff. Zero for `PP` samples
    /// and for plain normalizations; for compensated `PD` samples
    /// `points.sum() + dust == 1`.
    pub dust: f64,
}

impl PointSample {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn sum_powers(&self, k: i32) -> f64 {
        self.points.iter().map(|p| p.powi(k)).sum()
    }
}

/// `eps^{-m} / m`, the mean number of points above `eps`.
pub fn expected_count(m: f64, cutoff: f64) -> f64 {
    cutoff.powf(-m) / m
}

/// `E[sum_{x < eps} x^k] = eps^{k-m} / (k-m)`.
pub fn dust_moment(m: f64, cutoff: f64, k: f64) -> f64 {
    cutoff.powf(k - m) / (k - m)
}

/// `1e-6` times the typical size `m^{-1/m}` of the largest point.
pub fn default_cutoff(m: f64) -> f64 {
    1e-6 * m.powf(-1.0 / m)
}

fn check_m(m: f64) -> Result<()> {
    if m > 0.0 && m < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("point-process parameter must lie in (0, 1), got {m}")))
    }
}

fn check_cutoff(m: f64, cutoff: f64, budget: f64) -> Result<()> {
    if !(cutoff > 0.0 && cutoff.is_finite()) {
        return Err(Error::Domain(format!("cutoff must be positive, got {cutoff}")));
    }
    let expected = expected_count(m, cutoff);
    if expected > budget {
        return Err(Error::CutoffTooSmall { expected, budget });
    }
    Ok(())
}

/// Visits the `PP(m)` points above `cutoff` in decreasing order.
///
/// The `k`-th largest point is `Lambda^{-1}(T_k)` where `T_k` are the arrival
/// times of a unit-rate Poisson process and `Lambda(x) = x^{-m} / m` is the
/// mean count above `x`. The count above the cutoff is therefore
/// `Poisson(cutoff^{-m} / m)` and, given the count, the points are i.i.d. with
/// tail `(x / cutoff)^{-m}`, i.e. `cutoff * U^{-1/m}` sorted.
fn for_each_point<R: Rng + ?Sized>(m: f64, cutoff: f64, rng: &mut R, mut visit: impl FnMut(&mut R, f64)) {
    let horizon = expected_count(m, cutoff);
    let inv_m = -1.0 / m;
    let mut t = 0.0;
    loop {
        let e: f64 = rng.sample(Exp1);
        t += e;
        if t > horizon {
            break;
        }
        let x = (m * t).powf(inv_m);
        visit(rng, x);
    }
}

pub fn sample_pp<R: Rng + ?Sized>(m: f64, cutoff: f64, rng: &mut R) -> Result<PointSample> {
    sample_pp_with_budget(m, cutoff, DEFAULT_POINT_BUDGET, rng)
}

pub fn sample_pp_with_budget<R: Rng + ?Sized>(m: f64, cutoff: f64, budget: f64, rng: &mut R) -> Result<PointSample> {
    check_m(m)?;
    check_cutoff(m, cutoff, budget)?;
    let mut points = Vec::with_capacity(expected_count(m, cutoff).ceil() as usize + 16);
    for_each_point(m, cutoff, rng, |_, x| points.push(x));
    Ok(PointSample { points, kind: PointKind::Pp, cutoff, m, dust: 0.0 })
}

/// Divides the points by their sum. The mass below the cutoff is ignored.
pub fn normalize_pd(pp: &PointSample) -> Result<PointSample> {
    if pp.kind != PointKind::Pp {
        return Err(Error::Domain("normalize_pd expects a PP sample".into()));
    }
    if pp.is_empty() {
        return Err(Error::Empty);
    }
    let total: f64 = pp.points.iter().sum();
    Ok(PointSample {
        points: pp.points.iter().map(|p| p / total).collect(),
        kind: PointKind::Pd,
        cutoff: pp.cutoff,
        m: pp.m,
        dust: 0.0,
    })
}

/// As [`normalize_pd`], but the normalizer includes the mean dust mass below
/// the cutoff, which is reported in `dust`.
pub fn normalize_pd_compensated(pp: &PointSample) -> Result<PointSample> {
    if pp.kind != PointKind::Pp {
        return Err(Error::Domain("normalize_pd expects a PP sample".into()));
    }
    if pp.is_empty() {
        return Err(Error::Empty);
    }
    let dust = dust_moment(pp.m, pp.cutoff, 1.0);
    let total = pp.points.iter().sum::<f64>() + dust;
    Ok(PointSample {
        points: pp.points.iter().map(|p| p / total).collect(),
        kind: PointKind::Pd,
        cutoff: pp.cutoff,
        m: pp.m,
        dust: dust / total,
    })
}

/// Dust-compensated `sum_i eta_i^k` of one `PP(m)` realization.
fn compensated_power_sums(m: f64, cutoff: f64, points: &[f64], powers: &[i32]) -> Vec<f64> {
    let total = points.iter().sum::<f64>() + dust_moment(m, cutoff, 1.0);
    powers
        .iter()
        .map(|&k| (points.iter().map(|p| p.powi(k)).sum::<f64>() + dust_moment(m, cutoff, k as f64)) / total.powi(k))
        .collect()
}

/// Monte Carlo estimate of `E[sum_i eta_i^2]` under `PD(m)`, which equals `1 - m`.
pub fn pd_sum_squares(m: f64, replicas: usize, cutoff: f64, seed: u64) -> Result<MeanEstimate> {
    check_m(m)?;
    check_cutoff(m, cutoff, DEFAULT_POINT_BUDGET)?;
    let values: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = StreamRng::nested(seed, STREAM_PD_SQUARES, r as u64);
            let pp = sample_pp(m, cutoff, &mut rng)?;
            Ok(compensated_power_sums(m, cutoff, &pp.points, &[2])[0])
        })
        .collect::<Result<_>>()?;
    Ok(MeanEstimate::from_slice(&values))
}

/// Law of the i.i.d. marks `(U, V)` attached to the points, with `V >= 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairLaw {
    /// `U = V = 1`.
    Unit,
    /// `U = sinh(beta g1) sinh(beta g2)`, `V = cosh(beta g1) cosh(beta g2)`
    /// with independent standard Gaussians `g1, g2`.
    SinhCosh { beta: f64 },
}

/// Moments of a [`PairLaw`] needed by the closed forms and the dust terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairMoments {
    /// `E[U V^{m-1}]`
    pub u_vm1: f64,
    /// `E[U^2 V^{m-2}]`
    pub u2_vm2: f64,
    /// `E[V^m]`
    pub vm: f64,
    pub mean_u: f64,
    pub mean_u2: f64,
    pub mean_v: f64,
}

impl PairLaw {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        match *self {
            PairLaw::Unit => (1.0, 1.0),
            PairLaw::SinhCosh { beta } => {
                let g1: f64 = rng.sample(StandardNormal);
                let g2: f64 = rng.sample(StandardNormal);
                let (s1, c1) = sinh_cosh(beta * g1);
                let (s2, c2) = sinh_cosh(beta * g2);
                (s1 * s2, c1 * c2)
            }
        }
    }

    /// `E[U^a V^s]`.
    pub fn joint_moment(&self, a: u32, s: f64, rule: &QuadratureRule) -> Result<f64> {
        match *self {
            PairLaw::Unit => Ok(1.0),
            // odd powers of sinh integrate to zero in each coordinate
            PairLaw::SinhCosh { .. } if a % 2 == 1 => Ok(0.0),
            PairLaw::SinhCosh { beta } => {
                // E[sinh^a cosh^s] = E[cosh^{s+a}] * (tilted mean of tanh^a)
                let e = s + a as f64;
                let t = rule.tilted(e, |x| log_cosh(beta * x))?;
                let mut tanh_a = 0.0;
                for (&x, &lw) in rule.nodes().iter().zip(rule.log_weights()) {
                    let th = (beta * x).tanh();
                    tanh_a += (lw + e * log_cosh(beta * x) - t.log_z).exp() * th.powi(a as i32);
                }
                let one = t.log_z.exp() * tanh_a;
                Ok(one * one)
            }
        }
    }

    /// `E[U V^s]`.
    pub fn mean_u_vpow(&self, s: f64, rule: &QuadratureRule) -> Result<f64> {
        self.joint_moment(1, s, rule)
    }

    /// `E[U^2 V^s]`.
    pub fn mean_u2_vpow(&self, s: f64, rule: &QuadratureRule) -> Result<f64> {
        self.joint_moment(2, s, rule)
    }

    /// `E[V^s]`.
    pub fn mean_vpow(&self, s: f64, rule: &QuadratureRule) -> Result<f64> {
        self.joint_moment(0, s, rule)
    }

    pub fn moments(&self, m: f64, rule: &QuadratureRule) -> Result<PairMoments> {
        Ok(PairMoments {
            u_vm1: self.mean_u_vpow(m - 1.0, rule)?,
            u2_vm2: self.mean_u2_vpow(m - 2.0, rule)?,
            vm: self.mean_vpow(m, rule)?,
            mean_u: self.mean_u_vpow(0.0, rule)?,
            mean_u2: self.mean_u2_vpow(0.0, rule)?,
            mean_v: self.mean_vpow(1.0, rule)?,
        })
    }
}

#[inline]
fn sinh_cosh(x: f64) -> (f64, f64) {
    let e = x.exp();
    let inv = 1.0 / e;
    (0.5 * (e - inv), 0.5 * (e + inv))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TalaCheck {
    pub mc_estimate: f64,
    pub closed_form: f64,
    pub std_err: f64,
}

impl TalaCheck {
    pub fn z_score(&self) -> f64 {
        (self.mc_estimate - self.closed_form).abs() / self.std_err
    }
}

/// The three `PP(m)` identities:
/// 1. `E[sum v U / sum v V] = E[U V^{m-1}] / E[V^m]`
/// 2. `E[sum_{a != b} v_a v_b U_a U_b / (sum v V)^2] = m (E[U V^{m-1}] / E[V^m])^2`
/// 3. `E[sum v^2 U^2 / (sum v V)^2] = (1 - m) E[U^2 V^{m-2}] / E[V^m]`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TalaReport {
    pub m: f64,
    pub replicas: usize,
    pub identities: [TalaCheck; 3],
}

/// Expected number of points simulated one by one in each replica of
/// [`tala_verify`]. Points between the cutoff and the level where this count is
/// reached are aggregated.
pub const TALA_EXPLICIT_POINTS: f64 = 4096.0;

/// `int_lo^hi x^p x^{-m-1} dx`.
fn band_integral(m: f64, lo: f64, hi: f64, p: f64) -> f64 {
    (hi.powf(p - m) - lo.powf(p - m)) / (p - m)
}

/// Gaussian stand-in for the band of small points in `[lo, hi)`: the vector
/// `sum (x U, x V, x^2 U^2)` over that band has the mean and covariance of the
/// exact compound Poisson sum. The band holds a very large number of points
/// when it is used at all, so higher cumulants are negligible.
#[derive(Debug, Clone, Copy)]
struct BandAggregate {
    mean: [f64; 3],
    chol: [[f64; 3]; 3],
}

impl BandAggregate {
    fn new(m: f64, lo: f64, hi: f64, law: &PairLaw, rule: &QuadratureRule) -> Result<Self> {
        // (power of x, power of U, power of V)
        const TERMS: [(f64, u32, u32); 3] = [(1.0, 1, 0), (1.0, 0, 1), (2.0, 2, 0)];
        let mut mean = [0.0; 3];
        let mut cov = [[0.0; 3]; 3];
        for (i, &(pi, ai, bi)) in TERMS.iter().enumerate() {
            mean[i] = law.joint_moment(ai, bi as f64, rule)? * band_integral(m, lo, hi, pi);
            for (j, &(pj, aj, bj)) in TERMS.iter().enumerate().take(i + 1) {
                let c = law.joint_moment(ai + aj, (bi + bj) as f64, rule)? * band_integral(m, lo, hi, pi + pj);
                cov[i][j] = c;
                cov[j][i] = c;
            }
        }
        Ok(Self { mean, chol: cholesky_psd(&cov) })
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 3] {
        let z: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
        let mut y = self.mean;
        for i in 0..3 {
            for j in 0..=i {
                y[i] += self.chol[i][j] * z[j];
            }
        }
        y
    }
}

/// Lower Cholesky factor of a positive semi-definite matrix. Directions with
/// (numerically) zero variance get a zero column.
fn cholesky_psd(a: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut l = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                l[i][i] = if d > 1e-12 * a[i][i].abs() { d.sqrt() } else { 0.0 };
            } else if l[j][j] > 0.0 {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    l
}

/// Monte Carlo check of the three identities. Each replica draws a fresh
/// `PP(m)` above `cutoff` and fresh marks. The largest
/// [`TALA_EXPLICIT_POINTS`] (in expectation) are simulated individually, the
/// rest of the points above the cutoff enter through [`BandAggregate`], and
/// the dust below the cutoff through its mean.
pub fn tala_verify(m: f64, law: &PairLaw, replicas: usize, cutoff: f64, seed: u64, rule: &QuadratureRule) -> Result<TalaReport> {
    check_m(m)?;
    check_cutoff(m, cutoff, DEFAULT_POINT_BUDGET)?;
    if replicas < 2 {
        return Err(Error::Domain("need at least two replicas".into()));
    }
    let mom = law.moments(m, rule)?;
    let explicit_cutoff = cutoff.max((m * TALA_EXPLICIT_POINTS).powf(-1.0 / m));
    let band = if explicit_cutoff > cutoff {
        Some(BandAggregate::new(m, cutoff, explicit_cutoff, law, rule)?)
    } else {
        None
    };
    let d1 = dust_moment(m, cutoff, 1.0);
    let d2 = dust_moment(m, cutoff, 2.0);
    let per_replica: Vec<[f64; 3]> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = StreamRng::nested(seed, STREAM_TALA, r as u64);
            let (mut su, mut sv, mut su2) = (d1 * mom.mean_u, d1 * mom.mean_v, d2 * mom.mean_u2);
            if let Some(band) = &band {
                let [bu, bv, bu2] = band.sample(&mut rng);
                su += bu;
                sv += bv;
                su2 += bu2;
            }
            for_each_point(m, explicit_cutoff, &mut rng, |rng, x| {
                let (u, v) = law.sample(rng);
                su += x * u;
                sv += x * v;
                su2 += x * x * u * u;
            });
            let sv2 = sv * sv;
            [su / sv, (su * su - su2) / sv2, su2 / sv2]
        })
        .collect();
    let mut acc = [Welford::default(); 3];
    for row in &per_replica {
        for (a, &v) in acc.iter_mut().zip(row) {
            a.push(v);
        }
    }
    let ratio = mom.u_vm1 / mom.vm;
    let closed = [ratio, m * ratio * ratio, (1.0 - m) * mom.u2_vm2 / mom.vm];
    let mut identities = [TalaCheck { mc_estimate: 0.0, closed_form: 0.0, std_err: 0.0 }; 3];
    for i in 0..3 {
        let e = acc[i].estimate();
        identities[i] = TalaCheck { mc_estimate: e.mean, closed_form: closed[i], std_err: e.std_err };
    }
    Ok(TalaReport { m, replicas, identities })
}

/// Empirical weights compared with `PD(m)` through their power sums and the
/// largest weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpComparison {
    pub stat_sum_sq: f64,
    pub stat_sum_cube: f64,
    pub ref_mean_sq: f64,
    pub ref_mean_cube: f64,
    pub ref_se_sq: f64,
    pub ref_se_cube: f64,
    /// Fraction of reference samples whose largest weight is at least the
    /// observed one (with the usual +1 correction).
    pub max_point_pvalue: f64,
}

/// Reference statistics of `PD(m)`: per replica `(sum eta^2, sum eta^3, max eta)`.
pub fn pd_reference(m: f64, replicas: usize, cutoff: f64, seed: u64) -> Result<Vec<[f64; 3]>> {
    check_m(m)?;
    check_cutoff(m, cutoff, DEFAULT_POINT_BUDGET)?;
    (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = StreamRng::nested(seed, STREAM_PP_REFERENCE, r as u64);
            let pp = sample_pp(m, cutoff, &mut rng)?;
            if pp.is_empty() {
                return Ok([1.0, 1.0, 1.0]);
            }
            let s = compensated_power_sums(m, cutoff, &pp.points, &[2, 3]);
            let largest = pp.points[0] / (pp.points.iter().sum::<f64>() + dust_moment(m, cutoff, 1.0));
            Ok([s[0], s[1], largest])
        })
        .collect()
}

pub fn pp_compare(weights: &[f64], m: f64, replicas: usize, seed: u64) -> Result<PpComparison> {
    check_m(m)?;
    if weights.iter().filter(|&&w| w > 0.0).count() < 2 {
        return Err(Error::DegenerateWeights);
    }
    let stat_sum_sq = weights.iter().map(|w| w * w).sum();
    let stat_sum_cube = weights.iter().map(|w| w * w * w).sum();
    let observed_max = weights.iter().copied().fold(0.0, f64::max);
    let reference = pd_reference(m, replicas, default_cutoff(m), seed)?;
    let col = |i: usize| MeanEstimate::from_slice(&reference.iter().map(|r| r[i]).collect::<Vec<_>>());
    let (sq, cube) = (col(0), col(1));
    let exceed = reference.iter().filter(|r| r[2] >= observed_max).count();
    Ok(PpComparison {
        stat_sum_sq,
        stat_sum_cube,
        ref_mean_sq: sq.mean,
        ref_mean_cube: cube.mean,
        ref_se_sq: sq.std_err,
        ref_se_cube: cube.std_err,
        max_point_pvalue: (exceed + 1) as f64 / (reference.len() + 1) as f64,
    })
}
