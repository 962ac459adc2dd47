//! Finite-size simulation of REM-type models: `2^N` pure states `alpha`, each
//! carrying the energy `H[alpha] = sum_i phi(X_{alpha,i})`.
//!
//! Every pure state owns a counter-based random stream, so a sample is a pure
//! function of `(model, N, seed)`. The first Gaussian of a stream is the
//! aggregate field `z0`, the following `N` are the per-spin Gaussians. For the
//! models linear in the first coordinate the sum of `N` independent `beta X_i`
//! is drawn directly as `beta sqrt(N) z0`, which has the same law.

use std::io::{Read, Write};

use log::debug;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{log_cosh_tanh, CustomPhi, PhiModel};
use crate::parisi::{ParisiSolver, DEFAULT_TOL};
use crate::rng::StreamRng;
use crate::stats::{exp_sum_parts, log_mean_exp, MeanEstimate, Welford, REDUCTION_CHUNK};
use crate::tilt::TiltedSampler;

pub const MAX_N: usize = 26;
pub const DEFAULT_TOP_K: usize = 1024;
/// Smallest sample count accepted by the tail estimator.
pub const MIN_TAIL_SAMPLES: usize = 1000;

const STREAM_DISORDER: u64 = 0x44;
const STREAM_TAIL: u64 = 0x54;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DisorderOptions {
    /// Keep the full `N x 2^N` table of `tanh(beta g)` when `N` is at most
    /// this. The table is only a cache: [`DisorderSample::cavity_tanh`]
    /// regenerates rows from the streams when it is absent.
    pub tanh_table_max_n: usize,
}

/// Per-state summaries of the cavity model.
#[derive(Debug, Clone, PartialEq)]
pub struct CavityAux {
    /// `X_alpha / N`
    pub s1: Vec<f64>,
    /// `(1/N) sum_i log cosh(beta g_{alpha,i})`
    pub s2: Vec<f64>,
    /// `(1/N) sum_i tanh^2(beta g_{alpha,i})`
    pub mean_tanh2: Vec<f64>,
    /// `(1/N) sum_i tanh^4(beta g_{alpha,i})`
    pub mean_tanh4: Vec<f64>,
    /// Row `alpha` holds `tanh(beta g_{alpha,i})`, `i < N`.
    pub tanh_table: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct DisorderSample {
    pub model: PhiModel,
    pub n: usize,
    pub seed: u64,
    pub h: Vec<f64>,
    pub cavity: Option<CavityAux>,
}

/// Raw Gaussians of one pure state: `X_alpha = sqrt(N) z0` and `g_{alpha,1..N}`.
pub fn state_gaussians(seed: u64, n: usize, alpha: u64) -> (f64, Vec<f64>) {
    let mut rng = StreamRng::nested(seed, STREAM_DISORDER, alpha);
    let z0: f64 = rng.sample(StandardNormal);
    let g = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    ((n as f64).sqrt() * z0, g)
}

fn check_size(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Domain("system size must be at least 1".into()));
    }
    if n > MAX_N {
        return Err(Error::SizeTooLarge { n, max: MAX_N });
    }
    Ok(())
}

pub fn sample_disorder(model: &PhiModel, n: usize, seed: u64) -> Result<DisorderSample> {
    sample_disorder_with(model, n, seed, DisorderOptions::default())
}

#[derive(Default)]
struct Block {
    h: Vec<f64>,
    s1: Vec<f64>,
    s2: Vec<f64>,
    t2: Vec<f64>,
    t4: Vec<f64>,
    table: Vec<f64>,
}

pub fn sample_disorder_with(model: &PhiModel, n: usize, seed: u64, opts: DisorderOptions) -> Result<DisorderSample> {
    check_size(n)?;
    model.validate()?;
    let states = 1usize << n;
    let keep_table = matches!(model, PhiModel::Cavity { .. }) && n <= opts.tanh_table_max_n;
    let blocks: Vec<Block> = (0..states.div_ceil(REDUCTION_CHUNK))
        .into_par_iter()
        .map(|b| {
            let range = b * REDUCTION_CHUNK..((b + 1) * REDUCTION_CHUNK).min(states);
            let mut out = Block::default();
            let mut g = vec![0.0; n];
            for alpha in range {
                let mut rng = StreamRng::nested(seed, STREAM_DISORDER, alpha as u64);
                let z0: f64 = rng.sample(StandardNormal);
                let x = (n as f64).sqrt() * z0;
                match model {
                    PhiModel::PureRem { beta } => out.h.push(beta * x),
                    PhiModel::Cavity { beta } => {
                        let (mut lc_sum, mut t2, mut t4) = (0.0, 0.0, 0.0);
                        for gi in g.iter_mut() {
                            *gi = rng.sample(StandardNormal);
                            let (lc, th) = log_cosh_tanh(beta * *gi);
                            let th2 = th * th;
                            lc_sum += lc;
                            t2 += th2;
                            t4 += th2 * th2;
                            if keep_table {
                                out.table.push(th);
                            }
                        }
                        out.h.push(beta * x + lc_sum);
                        out.s1.push(x / n as f64);
                        out.s2.push(lc_sum / n as f64);
                        out.t2.push(t2 / n as f64);
                        out.t4.push(t4 / n as f64);
                    }
                    PhiModel::Custom(phi) => out.h.push(custom_energy(phi, n, &mut rng)),
                }
            }
            out
        })
        .collect();
    let mut h = Vec::with_capacity(states);
    let mut aux = CavityAux {
        s1: Vec::new(),
        s2: Vec::new(),
        mean_tanh2: Vec::new(),
        mean_tanh4: Vec::new(),
        tanh_table: keep_table.then(Vec::new),
    };
    for b in blocks {
        h.extend(b.h);
        aux.s1.extend(b.s1);
        aux.s2.extend(b.s2);
        aux.mean_tanh2.extend(b.t2);
        aux.mean_tanh4.extend(b.t4);
        if let Some(t) = aux.tanh_table.as_mut() {
            t.extend(b.table);
        }
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { context: "disorder energies" });
    }
    let cavity = matches!(model, PhiModel::Cavity { .. }).then_some(aux);
    debug!("sampled disorder {} N={n} seed={seed}", model.tag());
    Ok(DisorderSample { model: model.clone(), n, seed, h, cavity })
}

/// Cavity-model energies of every state at several inverse temperatures, from
/// one pass over the shared Gaussians. Row `j` equals the `h` of
/// `sample_disorder(cavity(betas[j]), n, seed)` bit for bit.
pub fn cavity_energies(n: usize, seed: u64, betas: &[f64]) -> Result<Vec<Vec<f64>>> {
    check_size(n)?;
    for &b in betas {
        PhiModel::cavity(b).validate()?;
    }
    let states = 1usize << n;
    let blocks: Vec<Vec<Vec<f64>>> = (0..states.div_ceil(REDUCTION_CHUNK))
        .into_par_iter()
        .map(|b| {
            let range = b * REDUCTION_CHUNK..((b + 1) * REDUCTION_CHUNK).min(states);
            let mut out = vec![Vec::with_capacity(range.len()); betas.len()];
            let mut g = vec![0.0; n];
            for alpha in range {
                let mut rng = StreamRng::nested(seed, STREAM_DISORDER, alpha as u64);
                let z0: f64 = rng.sample(StandardNormal);
                let x = (n as f64).sqrt() * z0;
                for gi in g.iter_mut() {
                    *gi = rng.sample(StandardNormal);
                }
                for (row, &beta) in out.iter_mut().zip(betas) {
                    let mut lc_sum = 0.0;
                    for gi in &g {
                        lc_sum += log_cosh_tanh(beta * gi).0;
                    }
                    row.push(beta * x + lc_sum);
                }
            }
            out
        })
        .collect();
    let mut rows = vec![Vec::with_capacity(states); betas.len()];
    for block in blocks {
        for (row, part) in rows.iter_mut().zip(block) {
            row.extend(part);
        }
    }
    Ok(rows)
}

fn custom_energy(phi: &CustomPhi, n: usize, rng: &mut StreamRng) -> f64 {
    (0..n).map(|_| phi.eval(rng.sample(StandardNormal))).sum()
}

impl DisorderSample {
    pub fn states(&self) -> usize {
        self.h.len()
    }

    pub fn cavity_beta(&self) -> Option<f64> {
        match self.model {
            PhiModel::Cavity { beta } => Some(beta),
            _ => None,
        }
    }

    /// Writes `tanh(beta g_{alpha,i})` into `out` (length `N`), from the table
    /// when present, otherwise by regenerating the stream of `alpha`.
    pub fn cavity_tanh(&self, alpha: usize, out: &mut [f64]) -> Result<()> {
        let beta = self.cavity_beta().ok_or(Error::WrongModel)?;
        if let Some(table) = self.cavity.as_ref().and_then(|c| c.tanh_table.as_ref()) {
            out.copy_from_slice(&table[alpha * self.n..(alpha + 1) * self.n]);
            return Ok(());
        }
        let (_, g) = state_gaussians(self.seed, self.n, alpha as u64);
        for (o, gi) in out.iter_mut().zip(g) {
            *o = log_cosh_tanh(beta * gi).1;
        }
        Ok(())
    }
}

/// `f_N = (1/N) log(2^{-N} sum_alpha exp(H[alpha]))`.
pub fn finite_free_energy(d: &DisorderSample) -> f64 {
    log_mean_exp(&d.h) / d.n as f64
}

/// `a_N = N gamma'(m*) - (1/m*) log sqrt(2 pi gamma''(m*) N)`.
pub fn centering(model: &PhiModel, n: usize, solver: &ParisiSolver) -> Result<f64> {
    let sol = solver.solve_mstar(model, DEFAULT_TOL)?;
    let p = solver.profile(model, sol.m_star)?;
    let nf = n as f64;
    Ok(nf * p.gamma1 + omega(sol.m_star, p.gamma2, nf))
}

/// The logarithmic correction `-(1/m) log sqrt(2 pi v2 N)`.
pub fn omega(m_star: f64, v2: f64, n: f64) -> f64 {
    -(2.0 * std::f64::consts::PI * v2 * n).sqrt().ln() / m_star
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightProcess {
    /// Gibbs weights of all `2^N` states.
    pub weights: Vec<f64>,
    /// States with the largest energies, decreasing.
    pub top_indices: Vec<usize>,
    /// `exp(H - a_N)` at `top_indices`; empty in the high-temperature regime.
    pub shifted_points: Vec<f64>,
    pub a_n: Option<f64>,
    /// `log sum_alpha exp(H[alpha] - a_N)`, when `a_N` is defined.
    pub log_shifted_total: Option<f64>,
    pub k: usize,
}

impl WeightProcess {
    pub fn sum_squares(&self) -> f64 {
        self.weights.par_chunks(REDUCTION_CHUNK).map(|c| c.iter().map(|w| w * w).sum::<f64>()).collect::<Vec<_>>().iter().sum()
    }

    /// Shifted points divided by their total over all states.
    pub fn normalized_points(&self) -> Vec<f64> {
        match self.log_shifted_total {
            Some(total) => self.shifted_points.iter().map(|p| (p.ln() - total).exp()).collect(),
            None => Vec::new(),
        }
    }

    pub fn top_weights(&self) -> Vec<f64> {
        self.top_indices.iter().map(|&i| self.weights[i]).collect()
    }
}

/// Normalized `exp(h)` together with `(max, sum exp(h - max))`.
pub(crate) fn normalized_weights(h: &[f64]) -> (Vec<f64>, f64, f64) {
    let (max, sum) = exp_sum_parts(h);
    let w = h.par_iter().map(|&x| (x - max).exp() / sum).collect();
    (w, max, sum)
}

/// Indices of the `k` largest entries of `h`, decreasing, ties by index.
pub fn top_k_indices(h: &[f64], k: usize) -> Vec<usize> {
    let k = k.min(h.len());
    if k == 0 {
        return Vec::new();
    }
    let cmp = |a: &usize, b: &usize| h[*b].total_cmp(&h[*a]).then(a.cmp(b));
    let mut idx: Vec<usize> = (0..h.len()).collect();
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, cmp);
        idx.truncate(k);
    }
    idx.sort_unstable_by(cmp);
    idx
}

/// Gibbs weights and the top-`k` points of the shifted process
/// `exp(H[alpha] - a_N)`. In the high-temperature regime only the weights are
/// produced.
pub fn gibbs_weights(d: &DisorderSample, k: usize, solver: &ParisiSolver) -> Result<WeightProcess> {
    let (weights, max, sum) = normalized_weights(&d.h);
    let top_indices = top_k_indices(&d.h, k);
    let a_n = match centering(&d.model, d.n, solver) {
        Ok(a) => Some(a),
        Err(Error::NotLowTemp) => None,
        Err(e) => return Err(e),
    };
    let (shifted_points, log_shifted_total) = match a_n {
        Some(a) => (top_indices.iter().map(|&i| (d.h[i] - a).exp()).collect(), Some(max + sum.ln() - a)),
        None => (Vec::new(), None),
    };
    Ok(WeightProcess { weights, top_indices, shifted_points, a_n, log_shifted_total, k })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailEstimate {
    pub t: f64,
    /// Estimate of `2^N P[H_N(1) - a_N >= t]`.
    pub estimate: f64,
    pub std_err: f64,
    /// `(1/m*) exp(-m* t)`
    pub theory: f64,
    pub n_samples: usize,
}

impl TailEstimate {
    pub fn relative_error(&self) -> f64 {
        (self.estimate / self.theory - 1.0).abs()
    }
}

/// Importance-sampled tail probabilities for several thresholds from one set
/// of draws. A single pure state is simulated under the tilted law `G_{m*}`;
/// the likelihood ratio times `2^N` is `exp(-m* (S - N gamma'(m*)))` by the
/// entropy condition.
pub fn tail_probabilities(model: &PhiModel, n: usize, ts: &[f64], n_samples: usize, seed: u64, solver: &ParisiSolver) -> Result<Vec<TailEstimate>> {
    if n == 0 {
        return Err(Error::Domain("system size must be at least 1".into()));
    }
    if n_samples < MIN_TAIL_SAMPLES {
        return Err(Error::Domain(format!("tail estimation needs at least {MIN_TAIL_SAMPLES} samples, got {n_samples}")));
    }
    let sol = solver.solve_mstar(model, DEFAULT_TOL)?;
    let m = sol.m_star;
    let p = solver.profile(model, m)?;
    let nf = n as f64;
    let mean_s = nf * p.gamma1;
    let a_n = mean_s + omega(m, p.gamma2, nf);
    // fail early on unsupported models
    TiltedSampler::new(model, m)?;
    let chunks = n_samples.div_ceil(REDUCTION_CHUNK);
    let partial: Vec<Vec<Welford>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = REDUCTION_CHUNK.min(n_samples - c * REDUCTION_CHUNK);
            let mut rng = StreamRng::nested(seed, STREAM_TAIL, c as u64);
            let mut sampler = TiltedSampler::new(model, m)?;
            let mut acc = vec![Welford::default(); ts.len()];
            for _ in 0..len {
                let s = tilted_sum(model, m, n, &mut sampler, &mut rng)?;
                let w = (-m * (s - mean_s)).exp();
                for (a, &t) in acc.iter_mut().zip(ts) {
                    a.push(if s >= a_n + t { w } else { 0.0 });
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total = vec![Welford::default(); ts.len()];
    for chunk in &partial {
        for (t, c) in total.iter_mut().zip(chunk) {
            t.merge(c);
        }
    }
    Ok(ts
        .iter()
        .zip(total)
        .map(|(&t, acc)| {
            let e: MeanEstimate = acc.estimate();
            TailEstimate { t, estimate: e.mean, std_err: e.std_err, theory: (-m * t).exp() / m, n_samples }
        })
        .collect())
}

pub fn tail_probability(model: &PhiModel, n: usize, t: f64, n_samples: usize, seed: u64, solver: &ParisiSolver) -> Result<TailEstimate> {
    Ok(tail_probabilities(model, n, &[t], n_samples, seed, solver)?[0])
}

/// `S = sum_{i<=N} phi(X_i)` with `X_i ~ G_m`. The linear coordinate is summed
/// in one Gaussian draw.
fn tilted_sum(model: &PhiModel, m: f64, n: usize, sampler: &mut TiltedSampler, rng: &mut StreamRng) -> Result<f64> {
    let nf = n as f64;
    match *model {
        PhiModel::PureRem { beta } => {
            let z: f64 = rng.sample(StandardNormal);
            Ok(beta * (nf * m * beta + nf.sqrt() * z))
        }
        _ => {
            let mut s = 0.0;
            for _ in 0..n {
                s += sampler.draw(rng)?;
            }
            Ok(s)
        }
    }
}

/// Scalar Legendre transform `I(y) = sup_m (m y - gamma(m))`, maximized over
/// `|m| <= 12 / beta` (12 for a custom phi), where the quadrature still
/// resolves the tilted law.
pub fn rate_function(model: &PhiModel, y: f64, solver: &ParisiSolver) -> Result<f64> {
    let bound = match model.beta() {
        Some(b) if b > 0.0 => 12.0 / b,
        Some(_) => return Ok(if y == 0.0 { 0.0 } else { f64::INFINITY }),
        None => 12.0,
    };
    let slope = |m: f64| -> Result<f64> { Ok(solver.profile(model, m)?.gamma1 - y) };
    let value = |m: f64| -> Result<f64> { Ok(m * y - solver.profile(model, m)?.gamma) };
    let (mut lo, mut hi) = (-bound, bound);
    if slope(lo)? >= 0.0 {
        return value(lo);
    }
    if slope(hi)? <= 0.0 {
        return value(hi);
    }
    // gamma' is increasing; bisect for gamma'(m) = y
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if slope(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    value(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelCount {
    pub count: u64,
    /// `(1/N) log count`, `-inf` when the window is empty.
    pub empirical_exponent: f64,
    /// `log 2 - I(y_mid)`.
    pub predicted_exponent: f64,
}

/// Number of states with `H[alpha]/N` in `[y_lo, y_hi)`, against the
/// large-deviation prediction at the window midpoint.
pub fn level_counting(d: &DisorderSample, y_lo: f64, y_hi: f64, solver: &ParisiSolver) -> Result<LevelCount> {
    if !(y_lo < y_hi) {
        return Err(Error::Domain(format!("empty window [{y_lo}, {y_hi})")));
    }
    let nf = d.n as f64;
    let count = d.h.iter().filter(|&&h| (y_lo..y_hi).contains(&(h / nf))).count() as u64;
    let empirical_exponent = if count == 0 { f64::NEG_INFINITY } else { (count as f64).ln() / nf };
    let predicted_exponent = std::f64::consts::LN_2 - rate_function(&d.model, 0.5 * (y_lo + y_hi), solver)?;
    Ok(LevelCount { count, empirical_exponent, predicted_exponent })
}

const DUMP_MAGIC: &[u8; 8] = b"REMGDUMP";
const DUMP_VERSION: u32 = 1;

/// Contents of a binary disorder dump.
#[derive(Debug, Clone, PartialEq)]
pub struct DisorderDump {
    /// 0 pure REM, 1 cavity, 2 custom.
    pub model_tag: u8,
    /// NaN for a custom phi.
    pub beta: f64,
    pub n: usize,
    pub seed: u64,
    pub h: Vec<f64>,
}

impl DisorderDump {
    /// The model named in the header; custom models cannot be rebuilt.
    pub fn model(&self) -> Result<PhiModel> {
        match self.model_tag {
            0 => Ok(PhiModel::pure_rem(self.beta)),
            1 => Ok(PhiModel::cavity(self.beta)),
            _ => Err(Error::Unsupported("rebuilding a custom phi from a dump")),
        }
    }

    /// Regenerates the sample from the header and compares energies bit for bit.
    pub fn reproduces(&self) -> Result<bool> {
        let d = sample_disorder(&self.model()?, self.n, self.seed)?;
        Ok(d.h.iter().map(|x| x.to_bits()).eq(self.h.iter().map(|x| x.to_bits())))
    }
}

/// Layout, little-endian: magic (8 bytes), version u32, model tag u8, beta f64,
/// N u32, seed u64, count u64, then `count` f64 energies.
pub fn write_dump<W: Write>(d: &DisorderSample, mut w: W) -> std::io::Result<()> {
    let (tag, beta) = match d.model {
        PhiModel::PureRem { beta } => (0u8, beta),
        PhiModel::Cavity { beta } => (1, beta),
        PhiModel::Custom(_) => (2, f64::NAN),
    };
    w.write_all(DUMP_MAGIC)?;
    w.write_all(&DUMP_VERSION.to_le_bytes())?;
    w.write_all(&[tag])?;
    w.write_all(&beta.to_le_bytes())?;
    w.write_all(&(d.n as u32).to_le_bytes())?;
    w.write_all(&d.seed.to_le_bytes())?;
    w.write_all(&(d.h.len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(d.h.len() * 8);
    for x in &d.h {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()
}

pub fn read_dump<R: Read>(mut r: R) -> Result<DisorderDump> {
    fn take<const K: usize, R: Read>(r: &mut R) -> Result<[u8; K]> {
        let mut b = [0u8; K];
        r.read_exact(&mut b).map_err(|e| Error::BadDump(e.to_string()))?;
        Ok(b)
    }
    if &take::<8, _>(&mut r)? != DUMP_MAGIC {
        return Err(Error::BadDump("bad magic".into()));
    }
    let version = u32::from_le_bytes(take(&mut r)?);
    if version != DUMP_VERSION {
        return Err(Error::BadDump(format!("unsupported version {version}")));
    }
    let [model_tag] = take::<1, _>(&mut r)?;
    if model_tag > 2 {
        return Err(Error::BadDump(format!("unknown model tag {model_tag}")));
    }
    let beta = f64::from_le_bytes(take(&mut r)?);
    let n = u32::from_le_bytes(take(&mut r)?) as usize;
    let seed = u64::from_le_bytes(take(&mut r)?);
    let count = u64::from_le_bytes(take(&mut r)?);
    if n == 0 || n > MAX_N || count != 1u64 << n {
        return Err(Error::BadDump(format!("inconsistent size N={n}, count={count}")));
    }
    let mut payload = vec![0u8; count as usize * 8];
    r.read_exact(&mut payload).map_err(|e| Error::BadDump(e.to_string()))?;
    let h = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(DisorderDump { model_tag, beta, n, seed, h })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    fn solver() -> &'static ParisiSolver {
        ParisiSolver::shared()
    }

    #[test]
    fn zero_temperature_field_is_flat() {
        for model in [PhiModel::pure_rem(0.0), PhiModel::cavity(0.0)] {
            let d = sample_disorder(&model, 10, 3).unwrap();
            assert_eq!(d.states(), 1024);
            assert!(d.h.iter().all(|&h| h == 0.0));
            assert_eq!(finite_free_energy(&d), 0.0);
            let w = gibbs_weights(&d, 8, solver()).unwrap();
            assert!(w.weights.iter().all(|&x| x == 2f64.powi(-10)));
            assert_eq!(w.a_n, None);
            assert!(w.shifted_points.is_empty());
        }
    }

    #[test]
    fn size_bounds() {
        let m = PhiModel::pure_rem(1.0);
        assert_eq!(sample_disorder(&m, 27, 0).unwrap_err(), Error::SizeTooLarge { n: 27, max: MAX_N });
        assert!(matches!(sample_disorder(&m, 0, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn sampling_is_independent_of_thread_count() {
        let model = PhiModel::cavity(1.5);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| sample_disorder(&model, 16, 42).unwrap())
        };
        let (a, b) = (run(1), run(3));
        assert!(a.h.iter().zip(&b.h).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(a.cavity, b.cavity);
        assert_eq!(finite_free_energy(&a).to_bits(), finite_free_energy(&b).to_bits());
    }

    #[test]
    fn energies_match_the_law_of_large_numbers() {
        let (beta, n) = (1.3, 14);
        let model = PhiModel::cavity(beta);
        let d = sample_disorder(&model, n, 8).unwrap();
        let p0 = solver().profile(&model, 0.0).unwrap();
        let mean = d.h.iter().sum::<f64>() / d.states() as f64 / n as f64;
        let tol = 4.0 * (p0.gamma2 / n as f64 / d.states() as f64).sqrt();
        assert!((mean - p0.gamma1).abs() < tol, "{mean} vs {}", p0.gamma1);
        // pure REM: H / (beta sqrt N) is standard normal
        let d = sample_disorder(&PhiModel::pure_rem(2.0), n, 8).unwrap();
        let z: Vec<f64> = d.h.iter().map(|h| h / (2.0 * (n as f64).sqrt())).collect();
        let e = MeanEstimate::from_slice(&z);
        assert!(e.z_score(0.0) < 4.0);
        assert!((e.std_dev() - 1.0).abs() < 0.02);
    }

    #[test]
    fn cavity_summaries_are_consistent() {
        let beta = 2.0;
        let d = sample_disorder_with(&PhiModel::cavity(beta), 6, 5, DisorderOptions { tanh_table_max_n: 6 }).unwrap();
        let aux = d.cavity.as_ref().unwrap();
        let mut regen = DisorderSample { cavity: None, ..d.clone() };
        regen.cavity = Some(CavityAux { tanh_table: None, ..aux.clone() });
        let (mut a, mut b) = (vec![0.0; 6], vec![0.0; 6]);
        for alpha in 0..d.states() {
            d.cavity_tanh(alpha, &mut a).unwrap();
            regen.cavity_tanh(alpha, &mut b).unwrap();
            assert_eq!(a, b);
            let (x, g) = state_gaussians(5, 6, alpha as u64);
            let lc: f64 = g.iter().map(|gi| crate::model::log_cosh(beta * gi)).sum();
            assert_relative_eq!(d.h[alpha], beta * x + lc, max_relative = 1e-14);
            assert_relative_eq!(aux.s1[alpha] * 6.0, x, max_relative = 1e-14);
            assert_relative_eq!(aux.mean_tanh2[alpha], a.iter().map(|t| t * t).sum::<f64>() / 6.0, max_relative = 1e-14);
        }
        assert_eq!(sample_disorder(&PhiModel::pure_rem(1.0), 4, 0).unwrap().cavity_tanh(0, &mut a), Err(Error::WrongModel));
    }

    #[test]
    fn multi_temperature_energies_match_single_runs() {
        let rows = cavity_energies(9, 12, &[2.0, 3.0]).unwrap();
        for (row, beta) in rows.iter().zip([2.0, 3.0]) {
            let d = sample_disorder(&PhiModel::cavity(beta), 9, 12).unwrap();
            assert!(row.iter().zip(&d.h).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn centering_closed_form() {
        let beta = 2.0;
        let m = (2.0 * LN_2).sqrt() / beta;
        let a = centering(&PhiModel::pure_rem(beta), 100, solver()).unwrap();
        let expected = beta * beta * m * 100.0 - (2.0 * std::f64::consts::PI * beta * beta * 100.0).sqrt().ln() / m;
        assert_relative_eq!(a, expected, max_relative = 1e-11);
        assert!((a - 228.8324).abs() < 1e-4);
        let om = omega(m, beta * beta, 100.0);
        assert!(om < 0.0);
        // doubling N
        let a2 = centering(&PhiModel::pure_rem(beta), 200, solver()).unwrap();
        assert_relative_eq!(a2 - a, beta * beta * m * 100.0 - LN_2 / (2.0 * m), max_relative = 1e-11);
        assert_eq!(centering(&PhiModel::pure_rem(1.0), 100, solver()), Err(Error::NotLowTemp));
    }

    #[test]
    fn shifted_points_normalize_to_top_weights() {
        let d = sample_disorder(&PhiModel::cavity(2.5), 12, 17).unwrap();
        let w = gibbs_weights(&d, 64, solver()).unwrap();
        assert_eq!(w.top_indices.len(), 64);
        assert!(w.shifted_points.windows(2).all(|p| p[0] >= p[1]));
        assert_relative_eq!(w.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-10);
        for (p, q) in w.normalized_points().iter().zip(w.top_weights()) {
            assert_relative_eq!(*p, q, max_relative = 1e-10);
        }
        let all = gibbs_weights(&d, usize::MAX, solver()).unwrap();
        assert_eq!(all.top_indices.len(), d.states());
    }

    #[test]
    fn top_k_orders_ties_by_index() {
        let h = [1.0, 3.0, 3.0, -1.0, 2.0];
        assert_eq!(top_k_indices(&h, 3), vec![1, 2, 4]);
        assert_eq!(top_k_indices(&h, 0), Vec::<usize>::new());
        assert_eq!(top_k_indices(&h, 10), vec![1, 2, 4, 0, 3]);
    }

    #[test]
    fn tail_estimate_matches_exponential_law() {
        let model = PhiModel::pure_rem(2.0);
        let est = tail_probabilities(&model, 400, &[0.0, 1.0, 2.0], 200_000, 1, solver()).unwrap();
        for e in &est {
            assert!(e.relative_error() < 0.1, "{e:?}");
            assert!(e.std_err > 0.0 && e.estimate >= 0.0);
        }
        assert_relative_eq!(est[0].theory, 1.0 / 0.588_705_011_257_737_3, max_relative = 1e-9);
        let small = tail_probability(&model, 400, 0.0, 50_000, 1, solver()).unwrap();
        let ratio = (small.std_err / small.estimate) / (est[0].std_err / est[0].estimate);
        assert!((ratio - 2.0).abs() < 0.4, "{ratio}");
        assert_eq!(tail_probability(&PhiModel::pure_rem(1.0), 50, 0.0, 1000, 0, solver()), Err(Error::NotLowTemp));
        assert!(matches!(tail_probability(&model, 50, 0.0, 10, 0, solver()), Err(Error::Domain(_))));
    }

    #[test]
    fn tail_estimate_cavity() {
        let est = tail_probability(&PhiModel::cavity(2.0), 200, 0.0, 20_000, 2, solver()).unwrap();
        assert!(est.relative_error() < 0.15, "{est:?}");
    }

    #[test]
    fn rate_function_closed_form() {
        let beta = 1.5;
        let model = PhiModel::pure_rem(beta);
        for y in [-2.0, 0.0, 0.7, 2.5] {
            assert_relative_eq!(rate_function(&model, y, solver()).unwrap(), y * y / (2.0 * beta * beta), epsilon = 1e-10);
        }
        // zero exponent at the working level of the cavity model
        let model = PhiModel::cavity(2.5);
        let sol = solver().solve_mstar(&model, DEFAULT_TOL).unwrap();
        let y = solver().profile(&model, sol.m_star).unwrap().gamma1;
        assert!((LN_2 - rate_function(&model, y, solver()).unwrap()).abs() < 1e-9);
        let y0 = solver().profile(&model, 0.0).unwrap().gamma1;
        assert!(rate_function(&model, y0, solver()).unwrap().abs() < 1e-12);
    }

    #[test]
    fn level_counting_near_the_mean() {
        let d = sample_disorder(&PhiModel::pure_rem(1.0), 16, 4).unwrap();
        let c = level_counting(&d, -0.05, 0.05, solver()).unwrap();
        assert!((c.predicted_exponent - LN_2).abs() < 1e-12);
        assert!(c.count > 0 && c.empirical_exponent < LN_2);
        let far = level_counting(&d, 3.0, 3.1, solver()).unwrap();
        assert_eq!(far.count, 0);
        assert_eq!(far.empirical_exponent, f64::NEG_INFINITY);
        assert!(far.predicted_exponent < 0.0);
        assert!(level_counting(&d, 1.0, 1.0, solver()).is_err());
    }

    #[test]
    fn dump_round_trip() {
        let d = sample_disorder(&PhiModel::cavity(1.7), 8, 99).unwrap();
        let mut buf = Vec::new();
        write_dump(&d, &mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 4 + 1 + 8 + 4 + 8 + 8 + 256 * 8);
        let back = read_dump(buf.as_slice()).unwrap();
        assert_eq!((back.model_tag, back.beta, back.n, back.seed), (1, 1.7, 8, 99));
        assert_eq!(back.h, d.h);
        assert!(back.reproduces().unwrap());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_dump(bad.as_slice()), Err(Error::BadDump(_))));
        assert!(matches!(read_dump(&buf[..buf.len() - 1]), Err(Error::BadDump(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn weights_form_a_distribution(beta in 0.0f64..4.0, n in 1usize..10, seed in any::<u64>(), cavity in any::<bool>()) {
            let model = if cavity { PhiModel::cavity(beta) } else { PhiModel::pure_rem(beta) };
            let d = sample_disorder(&model, n, seed).unwrap();
            prop_assert_eq!(d.states(), 1 << n);
            prop_assert!(d.h.iter().all(|h| h.is_finite()));
            let w = gibbs_weights(&d, 4, solver()).unwrap();
            prop_assert!((w.weights.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            prop_assert!(w.weights.iter().all(|&x| x >= 0.0));
            prop_assert_eq!(w.top_indices.len(), 4.min(1 << n));
            let f = finite_free_energy(&d);
            let max = d.h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(f <= max / n as f64 + 1e-12);
        }

        #[test]
        fn same_seed_same_energies(seed in any::<u64>(), n in 1usize..8) {
            let model = PhiModel::cavity(1.1);
            let a = sample_disorder(&model, n, seed).unwrap();
            let b = sample_disorder(&model, n, seed).unwrap();
            prop_assert_eq!(a.h, b.h);
        }
    }
}
