//! Experiments on the REM with a cavity field: the pure state `alpha` carries
//! `N` spins coupled to Gaussians `g_{alpha,i}`, and summing out the spins
//! leaves the marginal weights `exp(beta X_alpha + sum_i log cosh(beta g_{alpha,i}))`.
//!
//! Overlaps are evaluated from their exact conditional moments given the
//! disorder and the pair of pure states, so no spins are ever sampled. Given
//! the states `(alpha, alpha')`, the products `sigma_i sigma'_i` are
//! independent with means `c_i = tanh(beta g_{alpha,i}) tanh(beta' g_{alpha',i})`.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::PhiModel;
use crate::parisi::{ParisiSolver, DEFAULT_TOL};
use crate::rem::{cavity_energies, gibbs_weights, normalized_weights, sample_disorder, DisorderSample, WeightProcess};
use crate::rng::StreamRng;
use crate::stats::{paired_sum, weighted_line_fit, LineFit, MeanEstimate, Welford};
use crate::tilt::cavity_moments;

pub const DEFAULT_PAIRS: usize = 10_000;
/// Off-diagonal contributions are dropped when the two weight vectors put
/// less than this mass on distinct states.
const OFF_DIAGONAL_FLOOR: f64 = 1e-12;

const STREAM_PAIRS: u64 = 0x50;
const STREAM_CHAOS_PAIRS: u64 = 0x51;

/// `sum_alpha a[alpha] b[alpha]` in a fixed summation order.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    paired_sum(a, b, |x, y| x * y)
}

/// Gibbs weights of the pure states with the spins summed out.
pub fn marginal_gibbs(d: &DisorderSample, k: usize, solver: &ParisiSolver) -> Result<WeightProcess> {
    if d.cavity_beta().is_none() {
        return Err(Error::WrongModel);
    }
    gibbs_weights(d, k, solver)
}

/// `(E[q], E[q^2])` for two replicas whose spin products have means `c_i`:
/// `E[q] = (1/N) sum c_i`, `E[q^2] = ((sum c_i)^2 + sum (1 - c_i^2)) / N^2`.
pub fn overlap_moments_from_sums(sum_c: f64, sum_c2: f64, n: usize) -> (f64, f64) {
    let nf = n as f64;
    (sum_c / nf, (sum_c * sum_c + nf - sum_c2) / (nf * nf))
}

/// As [`overlap_moments_from_sums`] with `c_i = a_i b_i`.
pub fn conditional_overlap_moments(a: &[f64], b: &[f64]) -> (f64, f64) {
    let (mut s, mut s2) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let c = x * y;
        s += c;
        s2 += c * c;
    }
    overlap_moments_from_sums(s, s2, a.len())
}

/// Overlap statistics of one disorder sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapSample {
    /// `sum_alpha G(alpha)^2`
    pub coincidence: f64,
    /// `sum_alpha G(alpha)^2 E[(q - q*)^2 | alpha, alpha]`, exact.
    pub same_sector_msd: f64,
    /// `sum_{alpha != alpha'} G(alpha) G(alpha') E[q^2 | alpha, alpha']`, sampled.
    pub cross_sector_sq: f64,
    /// Sampling error of `cross_sector_sq`.
    pub cross_sector_se: f64,
}

/// Aggregate over disorder samples (seeds).
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapReport {
    pub n: usize,
    pub beta: f64,
    pub seeds: usize,
    pub q_star_used: f64,
    pub coincidence: MeanEstimate,
    pub same_sector_msd: MeanEstimate,
    pub cross_sector_sq: MeanEstimate,
}

/// Inverse-CDF sampler over a weight vector.
struct WeightSampler {
    cdf: Vec<f64>,
}

impl WeightSampler {
    fn new(w: impl Iterator<Item = f64>) -> Self {
        let mut acc = 0.0;
        let cdf = w
            .map(|x| {
                acc += x;
                acc
            })
            .collect();
        Self { cdf }
    }

    fn mass_before(&self, i: usize) -> f64 {
        if i == 0 {
            0.0
        } else {
            self.cdf[i - 1]
        }
    }

    fn locate(&self, u: f64) -> usize {
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1)
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.locate(rng.random::<f64>() * self.cdf.last().unwrap())
    }

    /// Draws from the weights with entry `skip` removed.
    fn draw_excluding<R: Rng + ?Sized>(&self, rng: &mut R, skip: usize) -> usize {
        let (lo, hi) = (self.mass_before(skip), self.cdf[skip]);
        let u = rng.random::<f64>() * (self.cdf.last().unwrap() - (hi - lo));
        let i = self.locate(if u < lo { u } else { u + (hi - lo) });
        if i != skip {
            return i;
        }
        // rounding put us on the excluded entry; step to a neighbour with mass
        (skip + 1..self.cdf.len())
            .chain((0..skip).rev())
            .find(|&j| self.cdf[j] > self.mass_before(j))
            .unwrap_or(skip)
    }
}

/// Mean of `E[q^2 | alpha, alpha']` over pairs drawn from `wa x wb`
/// conditioned on `alpha != alpha'`, with `c_i` built from the two tanh rows.
///
/// The first state is drawn from its conditional marginal
/// `wa(a) (1 - wb(a))`, the second from `wb` with `a` removed, so no draws
/// are rejected.
fn sample_cross_pairs(
    wa: &[f64],
    wb: &[f64],
    pairs: usize,
    rng: &mut StreamRng,
    mut row_a: impl FnMut(usize, &mut [f64]) -> Result<()>,
    mut row_b: impl FnMut(usize, &mut [f64]) -> Result<()>,
    n: usize,
) -> Result<MeanEstimate> {
    let first = WeightSampler::new(wa.iter().zip(wb).map(|(x, y)| x * (1.0 - y).max(0.0)));
    let second = WeightSampler::new(wb.iter().copied());
    let (mut ta, mut tb) = (vec![0.0; n], vec![0.0; n]);
    let mut acc = Welford::default();
    for _ in 0..pairs {
        let a = first.draw(rng);
        let b = second.draw_excluding(rng, a);
        if a == b {
            return Err(Error::DegenerateWeights);
        }
        row_a(a, &mut ta)?;
        row_b(b, &mut tb)?;
        acc.push(conditional_overlap_moments(&ta, &tb).1);
    }
    Ok(acc.estimate())
}

fn low_temp_q_star(beta: f64, solver: &ParisiSolver) -> Result<f64> {
    solver.q_star(beta, DEFAULT_TOL)
}

/// Overlap statistics of one cavity disorder sample; `pairs` off-diagonal
/// pairs are drawn from a stream keyed by the sample's seed.
pub fn overlap_stats(d: &DisorderSample, pairs: usize, solver: &ParisiSolver) -> Result<OverlapSample> {
    let beta = d.cavity_beta().ok_or(Error::WrongModel)?;
    let q_star = low_temp_q_star(beta, solver)?;
    overlap_stats_with(d, pairs, q_star)
}

fn overlap_stats_with(d: &DisorderSample, pairs: usize, q_star: f64) -> Result<OverlapSample> {
    let aux = d.cavity.as_ref().ok_or(Error::WrongModel)?;
    let n = d.n;
    let (w, _, _) = normalized_weights(&d.h);
    let coincidence = dot(&w, &w);
    let nf = n as f64;
    let same_sector_msd: f64 = w
        .iter()
        .zip(&aux.mean_tanh2)
        .zip(&aux.mean_tanh4)
        .map(|((wa, t2), t4)| {
            let (q1, q2) = overlap_moments_from_sums(t2 * nf, t4 * nf, n);
            wa * wa * (q2 - 2.0 * q_star * q1 + q_star * q_star)
        })
        .sum::<f64>()
        .max(0.0);
    let off = 1.0 - coincidence;
    let (cross_sector_sq, cross_sector_se) = if off < OFF_DIAGONAL_FLOOR || pairs == 0 {
        (0.0, 0.0)
    } else {
        let mut rng = StreamRng::nested(d.seed, STREAM_PAIRS, n as u64);
        let est = sample_cross_pairs(&w, &w, pairs, &mut rng, |a, o| d.cavity_tanh(a, o), |b, o| d.cavity_tanh(b, o), n)?;
        (off * est.mean, off * est.std_err)
    };
    Ok(OverlapSample { coincidence, same_sector_msd, cross_sector_sq, cross_sector_se })
}

/// Overlap statistics over the seeds, each seed a fresh disorder sample.
pub fn overlap_experiment(beta: f64, n: usize, seeds: &[u64], pairs: usize, solver: &ParisiSolver) -> Result<OverlapReport> {
    let q_star = low_temp_q_star(beta, solver)?;
    let model = PhiModel::cavity(beta);
    let samples: Vec<OverlapSample> = seeds
        .par_iter()
        .map(|&s| overlap_stats_with(&sample_disorder(&model, n, s)?, pairs, q_star))
        .collect::<Result<_>>()?;
    let col = |f: fn(&OverlapSample) -> f64| MeanEstimate::from_slice(&samples.iter().map(f).collect::<Vec<_>>());
    Ok(OverlapReport {
        n,
        beta,
        seeds: seeds.len(),
        q_star_used: q_star,
        coincidence: col(|s| s.coincidence),
        same_sector_msd: col(|s| s.same_sector_msd),
        cross_sector_sq: col(|s| s.cross_sector_sq),
    })
}

/// Two temperatures on one shared disorder sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChaosSample {
    /// `sum_alpha G_beta(alpha)^2`, the control at a single temperature.
    pub coincidence: f64,
    /// `sum_alpha G_beta(alpha) G_beta'(alpha)`
    pub cross_coincidence: f64,
    /// `sum_{alpha != alpha'} G_beta(alpha) G_beta'(alpha') E[q^2 | alpha, alpha']`, sampled.
    pub cross_overlap_sq: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChaosPoint {
    pub n: usize,
    pub coincidence: MeanEstimate,
    pub cross_coincidence: MeanEstimate,
    pub cross_overlap_sq: MeanEstimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChaosReport {
    pub beta: f64,
    pub beta_prime: f64,
    pub points: Vec<ChaosPoint>,
    /// Weighted fit of `log(mean cross_coincidence)` against `N`; absent with
    /// fewer than two sizes or a vanishing mean.
    pub decay_fit: Option<LineFit>,
}

impl ChaosReport {
    /// Slope below zero at the one-sided level given by `z`.
    pub fn decays(&self, z: f64) -> bool {
        self.decay_fit.is_some_and(|f| f.slope + z * f.slope_se < 0.0)
    }
}

fn check_low_temp(beta: f64, solver: &ParisiSolver) -> Result<()> {
    low_temp_q_star(beta, solver).map(|_| ())
}

/// One seed of the two-temperature experiment.
pub fn chaos_sample(n: usize, beta: f64, beta_prime: f64, seed: u64, pairs: usize) -> Result<ChaosSample> {
    let rows = cavity_energies(n, seed, &[beta, beta_prime])?;
    let (wa, _, _) = normalized_weights(&rows[0]);
    let (wb, _, _) = normalized_weights(&rows[1]);
    let cross_coincidence = dot(&wa, &wb);
    let off = 1.0 - cross_coincidence;
    let cross_overlap_sq = if off < OFF_DIAGONAL_FLOOR || pairs == 0 {
        0.0
    } else {
        let (da, db) = (shell(n, seed, beta), shell(n, seed, beta_prime));
        let mut rng = StreamRng::nested(seed, STREAM_CHAOS_PAIRS, n as u64);
        off * sample_cross_pairs(&wa, &wb, pairs, &mut rng, |a, o| da.cavity_tanh(a, o), |b, o| db.cavity_tanh(b, o), n)?.mean
    };
    Ok(ChaosSample { coincidence: dot(&wa, &wa), cross_coincidence, cross_overlap_sq })
}

/// Sample header without energies, enough to regenerate tanh rows.
fn shell(n: usize, seed: u64, beta: f64) -> DisorderSample {
    DisorderSample { model: PhiModel::cavity(beta), n, seed, h: Vec::new(), cavity: None }
}

/// Two-temperature experiment over a ladder of sizes. Each seed shares its
/// disorder across both temperatures and, through stream prefixes, across
/// sizes.
pub fn chaos_experiment(ns: &[usize], beta: f64, beta_prime: f64, seeds: &[u64], pairs: usize, solver: &ParisiSolver) -> Result<ChaosReport> {
    check_low_temp(beta, solver)?;
    check_low_temp(beta_prime, solver)?;
    let mut points = Vec::with_capacity(ns.len());
    for &n in ns {
        let samples: Vec<ChaosSample> = seeds.par_iter().map(|&s| chaos_sample(n, beta, beta_prime, s, pairs)).collect::<Result<_>>()?;
        points.push(ChaosPoint {
            n,
            coincidence: MeanEstimate::from_slice(&samples.iter().map(|s| s.coincidence).collect::<Vec<_>>()),
            cross_coincidence: MeanEstimate::from_slice(&samples.iter().map(|s| s.cross_coincidence).collect::<Vec<_>>()),
            cross_overlap_sq: MeanEstimate::from_slice(&samples.iter().map(|s| s.cross_overlap_sq).collect::<Vec<_>>()),
        });
    }
    let usable = points.iter().all(|p| p.cross_coincidence.mean > 0.0 && p.cross_coincidence.std_err > 0.0);
    let decay_fit = (points.len() >= 2 && usable).then(|| {
        let x: Vec<f64> = points.iter().map(|p| p.n as f64).collect();
        let y: Vec<f64> = points.iter().map(|p| p.cross_coincidence.mean.ln()).collect();
        let s: Vec<f64> = points.iter().map(|p| p.cross_coincidence.std_err / p.cross_coincidence.mean).collect();
        weighted_line_fit(&x, &y, &s)
    });
    Ok(ChaosReport { beta, beta_prime, points, decay_fit })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcentrationReport {
    pub gibbs_mass_outside: f64,
    pub epsilon: f64,
    /// `(m* beta, B/A)`: tilted means of the two per-state summaries.
    pub targets: (f64, f64),
}

pub fn concentration_targets(beta: f64, solver: &ParisiSolver) -> Result<(f64, f64)> {
    let sol = solver.solve_mstar(&PhiModel::cavity(beta), DEFAULT_TOL)?;
    let mom = cavity_moments(beta, sol.m_star, solver.rule())?;
    Ok((sol.m_star * beta, mom.b_over_a()))
}

/// Gibbs mass of the states whose summaries `(s1, s2)` miss the targets by
/// more than `epsilon` in either coordinate.
pub fn concentration(d: &DisorderSample, epsilon: f64, solver: &ParisiSolver) -> Result<ConcentrationReport> {
    let beta = d.cavity_beta().ok_or(Error::WrongModel)?;
    let targets = concentration_targets(beta, solver)?;
    concentration_with(d, epsilon, targets)
}

fn concentration_with(d: &DisorderSample, epsilon: f64, targets: (f64, f64)) -> Result<ConcentrationReport> {
    let aux = d.cavity.as_ref().ok_or(Error::WrongModel)?;
    let (w, _, _) = normalized_weights(&d.h);
    let outside: f64 = w
        .iter()
        .zip(aux.s1.iter().zip(&aux.s2))
        .filter(|(_, (s1, s2))| (*s1 - targets.0).abs() > epsilon || (*s2 - targets.1).abs() > epsilon)
        .map(|(w, _)| w)
        .sum();
    Ok(ConcentrationReport { gibbs_mass_outside: outside.clamp(0.0, 1.0), epsilon, targets })
}

/// Outside mass for every seed, in seed order.
pub fn concentration_experiment(beta: f64, n: usize, seeds: &[u64], epsilon: f64, solver: &ParisiSolver) -> Result<Vec<ConcentrationReport>> {
    let targets = concentration_targets(beta, solver)?;
    let model = PhiModel::cavity(beta);
    seeds.par_iter().map(|&s| concentration_with(&sample_disorder(&model, n, s)?, epsilon, targets)).collect()
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    match k {
        0 => f64::NAN,
        _ if k % 2 == 1 => v[k / 2],
        _ => 0.5 * (v[k / 2 - 1] + v[k / 2]),
    }
}
