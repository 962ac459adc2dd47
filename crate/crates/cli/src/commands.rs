//! One function per subcommand: read parameters, run the experiment, emit tables.

use rayon::prelude::*;

use rem_glass::cavity::{chaos_experiment, concentration, median, overlap_stats, DEFAULT_PAIRS};
use rem_glass::model::MAX_BETA;
use rem_glass::parisi::{ParisiSolver, Regime};
use rem_glass::quadrature::{QuadratureRule, DEFAULT_HALF_WIDTH, DEFAULT_PANELS, DEFAULT_POINTS_PER_PANEL};
use rem_glass::rem::{centering, finite_free_energy, gibbs_weights, sample_disorder, tail_probabilities, MAX_N};
use rem_glass::rng::replica_seed;
use rem_glass::ruelle::{pd_sum_squares, tala_verify, PairLaw};
use rem_glass::stats::MeanEstimate;
use rem_glass::PhiModel;

use crate::config::Params;
use crate::error::CliError;
use crate::output::{Cell, Table};

pub struct Outcome {
    pub tables: Vec<Table>,
    pub records: Vec<(String, Cell)>,
}

/// Everything a command needs besides its own parameters.
pub struct Context {
    pub base_seed: u64,
}

pub fn run(command: &str, p: &mut Params, ctx: &Context) -> Result<Outcome, CliError> {
    match command {
        "solve" => solve(p),
        "phase-diagram" => phase_diagram(p),
        "simulate" => simulate(p, ctx),
        "overlap" => overlap(p, ctx),
        "chaos" => chaos(p, ctx),
        "tail" => tail(p, ctx),
        "ppverify" => ppverify(p, ctx),
        other => Err(CliError::config(None, "command", format!("unknown command `{other}`"))),
    }
}

fn solver(p: &mut Params) -> Result<ParisiSolver, CliError> {
    let kind = p.choice("quadrature", "composite", &["composite", "hermite"])?;
    let rule = if kind == "composite" {
        let panels = p.usize_in("quadrature_order", DEFAULT_PANELS, 2, 4096)?;
        if panels % 2 != 0 {
            return Err(CliError::config(None, "quadrature_order", "composite rule needs an even panel count"));
        }
        QuadratureRule::gaussian_composite(panels, DEFAULT_POINTS_PER_PANEL, DEFAULT_HALF_WIDTH)
    } else {
        QuadratureRule::gauss_hermite(p.usize_in("quadrature_order", 200, 2, 1000)?)
    };
    Ok(ParisiSolver::new(rule))
}

fn model(p: &mut Params, default: &str) -> Result<String, CliError> {
    p.choice("model", default, &["pure-rem", "cavity"])
}

fn build_model(kind: &str, beta: f64) -> PhiModel {
    match kind {
        "cavity" => PhiModel::cavity(beta),
        _ => PhiModel::pure_rem(beta),
    }
}

fn tol(p: &mut Params) -> Result<f64, CliError> {
    p.f64_in("tol", rem_glass::parisi::DEFAULT_TOL, 1e-15, 1e-3)
}

fn seed_list(ctx: &Context, count: usize) -> Vec<u64> {
    (0..count as u64).map(|i| replica_seed(ctx.base_seed, i)).collect()
}

fn regime_cell(r: Regime) -> Cell {
    r.as_str().into()
}

fn solve(p: &mut Params) -> Result<Outcome, CliError> {
    let kind = model(p, "cavity")?;
    let betas = p.f64_grid("beta", "0.5:3.0:0.25", 0.0, MAX_BETA)?;
    let tol = tol(p)?;
    let solver = solver(p)?;
    let mut records = Vec::new();
    if kind == "cavity" {
        let beta_cr = solver.solve_beta_cr(tol)?;
        records.push(("beta_cr".to_string(), Cell::F(beta_cr)));
        records.push(("beta_cr_residual".to_string(), Cell::F(solver.critical_entropy(beta_cr)? - std::f64::consts::LN_2)));
    }
    let mut t = Table::new("solutions", &["beta", "regime", "m_star", "f_gibbs", "f_parisi", "gap", "q_star", "entropy_at_opt", "grid_min"]);
    let rows: Vec<Vec<Cell>> = betas
        .par_iter()
        .map(|&beta| {
            let m = build_model(&kind, beta);
            let sol = solver.solve(&m, tol)?;
            let dual = solver.duality_report(&m, tol)?;
            Ok(vec![
                beta.into(),
                regime_cell(sol.regime),
                sol.m_star.into(),
                dual.f_gibbs.into(),
                dual.f_parisi.into(),
                dual.gap.into(),
                sol.q_star.into(),
                sol.entropy_at_opt.into(),
                dual.grid_min.into(),
            ])
        })
        .collect::<Result<_, CliError>>()?;
    rows.into_iter().for_each(|r| t.push(r));
    Ok(Outcome { tables: vec![t], records })
}

fn phase_diagram(p: &mut Params) -> Result<Outcome, CliError> {
    let betas = p.f64_grid("beta", "0.1:4.0:0.1", 0.0, MAX_BETA)?;
    let tol = tol(p)?;
    let solver = solver(p)?;
    let beta_cr = solver.solve_beta_cr(tol)?;
    let records = vec![("beta_cr".to_string(), Cell::F(beta_cr)), ("beta_c_pure_rem".to_string(), Cell::F((2.0 * std::f64::consts::LN_2).sqrt()))];
    let mut t = Table::new("phase_diagram", &["model", "beta", "regime", "m_star", "free_energy", "q_star"]);
    for kind in ["pure-rem", "cavity"] {
        let rows: Vec<Vec<Cell>> = betas
            .par_iter()
            .map(|&beta| {
                let sol = solver.solve(&build_model(kind, beta), tol)?;
                Ok(vec![kind.into(), beta.into(), regime_cell(sol.regime), sol.m_star.into(), sol.free_energy.into(), sol.q_star.into()])
            })
            .collect::<Result<_, CliError>>()?;
        rows.into_iter().for_each(|r| t.push(r));
    }
    Ok(Outcome { tables: vec![t], records })
}

fn simulate(p: &mut Params, ctx: &Context) -> Result<Outcome, CliError> {
    let kind = model(p, "cavity")?;
    let beta = p.f64_in("beta", 2.5, 0.0, MAX_BETA)?;
    let ns = p.usize_ladder("n", "12:18", 1, MAX_N)?;
    let seeds = p.usize_in("seeds", 64, 1, 1_000_000)?;
    let tol = tol(p)?;
    let solver = solver(p)?;
    let m = build_model(&kind, beta);
    let sol = solver.solve(&m, tol)?;
    let pd_target = (sol.regime == Regime::LowTemp).then_some(1.0 - sol.m_star);
    let records = vec![
        ("f_limit".to_string(), Cell::F(sol.free_energy)),
        ("regime".to_string(), regime_cell(sol.regime)),
        ("m_star".to_string(), Cell::F(sol.m_star)),
    ];
    let mut per_seed = Table::new("per_seed", &["n", "seed", "f_n", "sum_sq_weights", "top_weight"]);
    let mut agg = Table::new(
        "aggregate",
        &["n", "seeds", "f_mean", "f_se", "f_limit", "f_gap", "sum_sq_mean", "sum_sq_se", "pd_target"],
    );
    for &n in &ns {
        let rows: Vec<(u64, f64, f64, f64)> = seed_list(ctx, seeds)
            .par_iter()
            .map(|&s| {
                let d = sample_disorder(&m, n, s)?;
                let w = gibbs_weights(&d, 1, &solver)?;
                Ok((s, finite_free_energy(&d), w.sum_squares(), w.top_weights()[0]))
            })
            .collect::<Result<_, CliError>>()?;
        for &(s, f, sq, top) in &rows {
            per_seed.push(vec![n.into(), s.into(), f.into(), sq.into(), top.into()]);
        }
        let f = MeanEstimate::from_slice(&rows.iter().map(|r| r.1).collect::<Vec<_>>());
        let sq = MeanEstimate::from_slice(&rows.iter().map(|r| r.2).collect::<Vec<_>>());
        agg.push(vec![
            n.into(),
            seeds.into(),
            f.mean.into(),
            f.std_err.into(),
            sol.free_energy.into(),
            (sol.free_energy - f.mean).into(),
            sq.mean.into(),
            sq.std_err.into(),
            pd_target.into(),
        ]);
    }
    Ok(Outcome { tables: vec![per_seed, agg], records })
}

fn overlap(p: &mut Params, ctx: &Context) -> Result<Outcome, CliError> {
    let beta = p.f64_in("beta", 2.5, 0.0, MAX_BETA)?;
    let ns = p.usize_ladder("n", "12:18", 2, MAX_N)?;
    let seeds = p.usize_in("seeds", 64, 1, 1_000_000)?;
    let pairs = p.usize_in("pairs", DEFAULT_PAIRS, 0, 100_000_000)?;
    let eps = p.f64_in("epsilon", 0.5, 0.0, f64::MAX)?;
    let tol = tol(p)?;
    let solver = solver(p)?;
    let m = PhiModel::cavity(beta);
    let sol = solver.solve_mstar(&m, tol)?;
    let q_star = solver.q_star(beta, tol)?;
    let records = vec![("q_star".to_string(), Cell::F(q_star)), ("m_star".to_string(), Cell::F(sol.m_star))];
    let mut t = Table::new(
        "overlap",
        &[
            "n",
            "seeds",
            "coincidence",
            "coincidence_se",
            "pd_target",
            "same_sector_msd",
            "same_sector_msd_se",
            "cross_sector_sq",
            "cross_sector_sq_se",
            "cross_bound",
            "outside_mass_median",
            "outside_mass_mean",
        ],
    );
    for &n in &ns {
        let rows: Vec<(f64, f64, f64, f64)> = seed_list(ctx, seeds)
            .par_iter()
            .map(|&s| {
                let d = sample_disorder(&m, n, s)?;
                let o = overlap_stats(&d, pairs, &solver)?;
                let c = concentration(&d, eps, &solver)?;
                Ok((o.coincidence, o.same_sector_msd, o.cross_sector_sq, c.gibbs_mass_outside))
            })
            .collect::<Result<_, CliError>>()?;
        let col = |f: fn(&(f64, f64, f64, f64)) -> f64| rows.iter().map(f).collect::<Vec<_>>();
        let (co, msd, cross) = (MeanEstimate::from_slice(&col(|r| r.0)), MeanEstimate::from_slice(&col(|r| r.1)), MeanEstimate::from_slice(&col(|r| r.2)));
        let outside = col(|r| r.3);
        t.push(vec![
            n.into(),
            seeds.into(),
            co.mean.into(),
            co.std_err.into(),
            (1.0 - sol.m_star).into(),
            msd.mean.into(),
            msd.std_err.into(),
            cross.mean.into(),
            cross.std_err.into(),
            (2.0 / n as f64).into(),
            median(&outside).into(),
            MeanEstimate::from_slice(&outside).mean.into(),
        ]);
    }
    Ok(Outcome { tables: vec![t], records })
}

fn chaos(p: &mut Params, ctx: &Context) -> Result<Outcome, CliError> {
    let beta = p.f64_in("beta", 2.0, 0.0, MAX_BETA)?;
    let beta_prime = p.f64_in("beta_prime", 3.0, 0.0, MAX_BETA)?;
    let ns = p.usize_ladder("n", "12:20", 2, MAX_N)?;
    let seeds = p.usize_in("seeds", 32, 2, 1_000_000)?;
    let pairs = p.usize_in("pairs", DEFAULT_PAIRS, 0, 100_000_000)?;
    let solver = solver(p)?;
    let report = chaos_experiment(&ns, beta, beta_prime, &seed_list(ctx, seeds), pairs, &solver)?;
    let mut t = Table::new(
        "chaos",
        &["n", "seeds", "cross_coincidence", "cross_coincidence_se", "coincidence", "coincidence_se", "cross_overlap_sq", "cross_overlap_sq_se", "cross_bound"],
    );
    for pt in &report.points {
        t.push(vec![
            pt.n.into(),
            seeds.into(),
            pt.cross_coincidence.mean.into(),
            pt.cross_coincidence.std_err.into(),
            pt.coincidence.mean.into(),
            pt.coincidence.std_err.into(),
            pt.cross_overlap_sq.mean.into(),
            pt.cross_overlap_sq.std_err.into(),
            (2.0 / pt.n as f64).into(),
        ]);
    }
    let mut fit = Table::new("decay_fit", &["slope", "slope_se", "intercept", "decays_95"]);
    if let Some(f) = report.decay_fit {
        fit.push(vec![f.slope.into(), f.slope_se.into(), f.intercept.into(), report.decays(1.645).into()]);
    }
    Ok(Outcome { tables: vec![t, fit], records: Vec::new() })
}

fn tail(p: &mut Params, ctx: &Context) -> Result<Outcome, CliError> {
    let kind = model(p, "pure-rem")?;
    let beta = p.f64_in("beta", 2.0, 0.0, MAX_BETA)?;
    let n = p.usize_in("n", 400, 1, 1_000_000)?;
    let ts = p.f64_grid("t", "0,1,2", -1e6, 1e6)?;
    let samples = p.usize_in("samples", 1_000_000, rem_glass::rem::MIN_TAIL_SAMPLES, 1_000_000_000)?;
    let tol = tol(p)?;
    let solver = solver(p)?;
    let m = build_model(&kind, beta);
    let sol = solver.solve_mstar(&m, tol)?;
    let records = vec![("m_star".to_string(), Cell::F(sol.m_star)), ("a_n".to_string(), Cell::F(centering(&m, n, &solver)?))];
    let mut t = Table::new("tail", &["t", "estimate", "std_err", "theory", "relative_error", "samples"]);
    if !ts.is_empty() {
        for e in tail_probabilities(&m, n, &ts, samples, ctx.base_seed, &solver)? {
            t.push(vec![e.t.into(), e.estimate.into(), e.std_err.into(), e.theory.into(), e.relative_error().into(), e.n_samples.into()]);
        }
    }
    Ok(Outcome { tables: vec![t], records })
}

fn ppverify(p: &mut Params, ctx: &Context) -> Result<Outcome, CliError> {
    let ms = p.f64_grid("m", "0.3,0.6,0.9", 1e-3, 0.999)?;
    let replicas = p.usize_in("replicas", 10_000, 2, 100_000_000)?;
    let cutoff = p.f64_in("cutoff", 1e-6, 1e-300, 1.0)?;
    let law = p.choice("law", "sinh-cosh", &["sinh-cosh", "unit"])?;
    let beta = p.f64_in("beta", 1.0, 0.0, MAX_BETA)?;
    let solver = solver(p)?;
    let law = if law == "unit" { PairLaw::Unit } else { PairLaw::SinhCosh { beta } };
    let mut tala = Table::new("tala", &["m", "identity", "mc_estimate", "closed_form", "std_err", "z_score"]);
    let mut pd = Table::new("pd_sum_squares", &["m", "mean", "std_err", "theory", "z_score"]);
    for &m in &ms {
        let r = tala_verify(m, &law, replicas, cutoff, ctx.base_seed, solver.rule())?;
        for (i, c) in r.identities.iter().enumerate() {
            tala.push(vec![m.into(), (i + 1).into(), c.mc_estimate.into(), c.closed_form.into(), c.std_err.into(), c.z_score().into()]);
        }
        let s = pd_sum_squares(m, replicas, cutoff, ctx.base_seed)?;
        pd.push(vec![m.into(), s.mean.into(), s.std_err.into(), (1.0 - m).into(), s.z_score(1.0 - m).into()]);
    }
    Ok(Outcome { tables: vec![tala, pd], records: Vec::new() })
}
