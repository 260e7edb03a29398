//! Replication orchestration and the results CSV.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use super::config::{Algo, ExperimentConfig, GammaRule, GeneralKind, SweepAxis};
use crate::basis::Basis;
use crate::csvfmt::fmt_f64;
use crate::error::{Error, Result};
use crate::instance::{
    compute_bounds, derive_seed, gen_support, sample_rhs, stream_permutation, stream_stochastic, ArrivalSource,
    ArrivalStream, InputModel, Instance, SupportSize,
};
use crate::metrics::{fit_loglog_slope, run_metrics, summarize, LogLogFit, RunMetrics, Summary};
use crate::oracle::{general_dual_bound, solve_projected_lp};
use crate::policies::{
    run_alg1, run_alg2, run_general_md, run_general_two_stage, run_simple_gd_baseline, run_two_stage, GeneralModel,
    LinearModel, LogUtilityModel, ProjectedStream, StepSchedule, Trajectory, TwoStageConfig,
};

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "OSILP_THREADS";

/// Subgradient iterations of the general-model benchmark.
pub const GENERAL_BOUND_ITERS: usize = 1000;

pub const METRIC_COLUMNS: [&str; 6] = [
    "reward",
    "benchmark",
    "regret",
    "regret_ratio",
    "violation_projected",
    "violation_dual",
];

/// The results header.
pub fn csv_header() -> String {
    let mut cols: Vec<String> = ["kind", "run_id", "algo", "model", "dist", "T", "m", "q", "seed"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend(METRIC_COLUMNS.iter().map(|s| s.to_string()));
    cols.extend(["t_fast", "wall_ms", "n"].iter().map(|s| s.to_string()));
    for m in METRIC_COLUMNS {
        for suffix in ["sd", "ci_lo", "ci_hi"] {
            cols.push(format!("{m}_{suffix}"));
        }
    }
    cols.extend(["slope", "intercept", "r2"].iter().map(|s| s.to_string()));
    cols.join(",")
}

/// One replication of one algorithm at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub point: usize,
    pub rep: usize,
    pub algo: Algo,
    pub horizon: usize,
    pub m: usize,
    pub q: usize,
    pub seed: u64,
    pub metrics: RunMetrics,
    pub t_fast: Option<usize>,
    pub wall_ms: u128,
}

impl ResultRow {
    fn values(&self) -> [f64; 6] {
        let r = &self.metrics;
        [
            r.reward,
            r.benchmark,
            r.regret,
            r.regret_ratio,
            r.violation_projected,
            r.violation_dual_tested,
        ]
    }
}

/// Replication statistics of one algorithm at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub point: usize,
    pub algo: Algo,
    pub horizon: usize,
    pub m: usize,
    pub q: usize,
    pub n: usize,
    /// In [`METRIC_COLUMNS`] order.
    pub stats: [Summary; 6],
}

impl AggregateRow {
    pub fn stat(&self, metric: &str) -> Option<&Summary> {
        METRIC_COLUMNS.iter().position(|m| *m == metric).map(|i| &self.stats[i])
    }
}

/// Log-log fit of mean regret against `T` across a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SlopeRow {
    pub algo: Algo,
    pub m: usize,
    pub q: usize,
    pub fit: Option<LogLogFit>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub results: Vec<ResultRow>,
    pub aggregates: Vec<AggregateRow>,
    pub slopes: Vec<SlopeRow>,
}

impl ExperimentOutput {
    pub fn aggregate(&self, algo: Algo, point: usize) -> Option<&AggregateRow> {
        self.aggregates.iter().find(|a| a.algo == algo && a.point == point)
    }

    pub fn slope(&self, algo: Algo) -> Option<&SlopeRow> {
        self.slopes.iter().find(|s| s.algo == algo)
    }
}

/// Like [`summarize`], but a single value yields NaN spread.
fn summary_any(values: &[f64]) -> Summary {
    match summarize(values) {
        Ok(s) => s,
        Err(_) => Summary {
            n: values.len(),
            mean: values.first().copied().unwrap_or(f64::NAN),
            sd: f64::NAN,
            ci_lo: f64::NAN,
            ci_hi: f64::NAN,
        },
    }
}

fn thread_count() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(0),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Error::Config(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
        },
    }
}

/// Seeds of one replication. The replication seed depends only on the
/// master seed and the replication index, so every point of a `T`-sweep
/// sees the same support, budget and arrival prefix.
pub fn replication_seed(master: u64, rep: usize) -> u64 {
    derive_seed(master, rep as u64)
}

/// Draw the instance and stream of one replication.
pub fn draw_replication(cfg: &ExperimentConfig, horizon: usize, m: usize, seed: u64) -> Result<(Instance, ArrivalStream)> {
    let dist = cfg.dist.dist(cfg.support);
    let (lo, hi) = cfg.dist.rhs_range();
    let d = sample_rhs(m, lo, hi, derive_seed(seed, 1))?;
    let mut instance = Instance::new(horizon, d)?;
    let draws = match cfg.support {
        SupportSize::Finite(k) => {
            let support = gen_support(&dist, k, m, derive_seed(seed, 0))?;
            let s = stream_stochastic(&ArrivalSource::Support(&support), horizon, derive_seed(seed, 2))?;
            instance = instance.with_support(support);
            s
        }
        SupportSize::Continuous => stream_stochastic(&ArrivalSource::Dist { dist: &dist, m }, horizon, derive_seed(seed, 2))?,
    };
    let stream = match cfg.model {
        InputModel::StochasticIid => draws,
        InputModel::RandomPermutation => stream_permutation(draws.arrivals, derive_seed(seed, 3))?,
    };
    Ok((instance, stream))
}

fn general_model(kind: GeneralKind) -> &'static dyn GeneralModel {
    match kind {
        GeneralKind::Linear => &LinearModel,
        GeneralKind::Log => &LogUtilityModel,
    }
}

/// Run every configured algorithm on one replication.
pub fn run_replication(
    cfg: &ExperimentConfig,
    basis: &Basis,
    point: usize,
    horizon: usize,
    rep: usize,
    dump: Option<&Path>,
) -> Result<Vec<ResultRow>> {
    let m = basis.m();
    let seed = replication_seed(cfg.master_seed, rep);
    let (instance, stream) = draw_replication(cfg, horizon, m, seed)?;
    let ps = ProjectedStream::new(&stream, basis, &instance.d)?;
    let bounds = compute_bounds(&stream, &instance, basis)?;
    let gamma = match cfg.gamma {
        GammaRule::InvSqrt => StepSchedule::inv_sqrt(horizon),
        GammaRule::Constant(g) => StepSchedule::Constant(g),
    };
    let psi = cfg.potential.build();
    let model = general_model(cfg.general_model);
    let needs_linear = cfg
        .algos
        .iter()
        .any(|a| !matches!(a, Algo::Alg6 | Algo::Alg7) || cfg.general_model == GeneralKind::Linear);
    let linear_benchmark = if needs_linear { Some(solve_projected_lp(&ps)?.value) } else { None };
    let two_stage = || -> Result<TwoStageConfig> {
        let c = TwoStageConfig::derive(cfg.two_stage, &bounds, horizon)?;
        if c.theory_violating && rep == 0 {
            log::info!("T = {horizon}: J = {} is below its theoretical bound {:.3e}", c.j, c.j_theory);
        }
        Ok(c)
    };
    let general_two_stage = || -> Result<TwoStageConfig> {
        match cfg.general_model {
            GeneralKind::Linear => two_stage(),
            GeneralKind::Log => {
                let f_bar = ps.rewards.iter().map(|r| model.reward_bound(*r)).fold(0.0_f64, f64::max);
                let spread = bounds.c_bar * model.usage_max() + bounds.d_phi_hi;
                TwoStageConfig::derive_with(cfg.two_stage, f_bar, bounds.d_phi_lo, spread, horizon)
            }
        }
    };

    let mut rows = Vec::with_capacity(cfg.algos.len());
    for &algo in &cfg.algos {
        let start = Instant::now();
        let traj: Trajectory = match algo {
            Algo::Alg1 => run_alg1(&ps, &gamma)?,
            Algo::Alg2 => run_alg2(&ps, &gamma, psi.as_ref())?,
            Algo::Alg5 => run_two_stage(&ps, &two_stage()?)?,
            Algo::Alg6 => run_general_md(&ps, &gamma, psi.as_ref(), model)?,
            Algo::Alg7 => run_general_two_stage(&ps, &general_two_stage()?, model)?,
            Algo::SimpleGd => run_simple_gd_baseline(&stream, &instance.d, &gamma)?,
        };
        let benchmark = match (algo, linear_benchmark) {
            (Algo::Alg6 | Algo::Alg7, _) if cfg.general_model == GeneralKind::Log => {
                general_dual_bound(&ps, model, GENERAL_BOUND_ITERS)?
            }
            (_, Some(b)) => b,
            (_, None) => solve_projected_lp(&ps)?.value,
        };
        let metrics = run_metrics(&traj, &ps, basis, benchmark, cfg.u_bar)?;
        let wall_ms = start.elapsed().as_millis();
        if let Some(dir) = dump {
            let path = dir.join(format!("traj_p{point}_r{rep}_{}.csv", algo.name()));
            traj.write_csv(BufWriter::new(File::create(path)?))?;
        }
        rows.push(ResultRow {
            point,
            rep,
            algo,
            horizon,
            m,
            q: cfg.q,
            seed,
            metrics,
            t_fast: traj.t_fast,
            wall_ms,
        });
    }
    Ok(rows)
}

fn aggregate_rows(cfg: &ExperimentConfig, point: usize, rows: &[ResultRow]) -> Vec<AggregateRow> {
    cfg.algos
        .iter()
        .map(|&algo| {
            let mine: Vec<&ResultRow> = rows.iter().filter(|r| r.algo == algo).collect();
            let stats = std::array::from_fn(|i| summary_any(&mine.iter().map(|r| r.values()[i]).collect::<Vec<_>>()));
            let first = mine[0];
            AggregateRow {
                point,
                algo,
                horizon: first.horizon,
                m: first.m,
                q: first.q,
                n: mine.len(),
                stats,
            }
        })
        .collect()
}

/// Run every point of `cfg`, replications in parallel.
pub fn run_experiment(cfg: &ExperimentConfig, dump: Option<&Path>) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count()?)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    if let Some(dir) = dump {
        std::fs::create_dir_all(dir)?;
    }
    let mut results = Vec::new();
    let mut aggregates = Vec::new();
    for (point, (horizon, m)) in cfg.points().into_iter().enumerate() {
        let basis = Basis::rbf(&cfg.basis_spec(m))?;
        log::info!("point {point}: T = {horizon}, m = {m}, {} replications", cfg.reps);
        let per_rep: Vec<Vec<ResultRow>> = pool.install(|| {
            (0..cfg.reps)
                .into_par_iter()
                .map(|rep| run_replication(cfg, &basis, point, horizon, rep, dump))
                .collect::<Result<Vec<_>>>()
        })?;
        let mut rows: Vec<ResultRow> = Vec::with_capacity(cfg.reps * cfg.algos.len());
        for &algo in &cfg.algos {
            rows.extend(per_rep.iter().flatten().filter(|r| r.algo == algo).cloned());
        }
        aggregates.extend(aggregate_rows(cfg, point, &rows));
        results.extend(rows);
    }
    let mut slopes = Vec::new();
    if matches!(&cfg.sweep, Some(s) if s.axis == SweepAxis::T) {
        for &algo in &cfg.algos {
            let points: Vec<(f64, f64)> = aggregates
                .iter()
                .filter(|a| a.algo == algo)
                .map(|a| (a.horizon as f64, a.stats[2].mean))
                .collect();
            let fit = match fit_loglog_slope(&points) {
                Ok(f) => Some(f),
                Err(e) => {
                    log::warn!("{}: no regret slope ({e})", algo.name());
                    None
                }
            };
            slopes.push(SlopeRow {
                algo,
                m: cfg.m,
                q: cfg.q,
                fit,
            });
        }
    }
    Ok(ExperimentOutput {
        config: cfg.clone(),
        results,
        aggregates,
        slopes,
    })
}

fn opt_usize(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Write the results CSV: per point and algorithm, the replication rows
/// followed by their aggregate row; slope rows last.
pub fn write_csv<W: Write>(out: &ExperimentOutput, mut w: W) -> Result<()> {
    let cfg = &out.config;
    let model = cfg.model.name();
    let dist = cfg.dist.name();
    let empty_stats = vec![""; 18].join(",");
    writeln!(w, "{}", csv_header())?;
    for agg in &out.aggregates {
        for r in out.results.iter().filter(|r| r.point == agg.point && r.algo == agg.algo) {
            let vals: Vec<String> = r.values().iter().map(|v| fmt_f64(*v)).collect();
            writeln!(
                w,
                "result,{}:{},{},{model},{dist},{},{},{},{},{},{},{},,{},,,",
                r.point,
                r.rep,
                r.algo.name(),
                r.horizon,
                r.m,
                r.q,
                r.seed,
                vals.join(","),
                opt_usize(r.t_fast),
                r.wall_ms,
                empty_stats,
            )?;
        }
        let means: Vec<String> = agg.stats.iter().map(|s| fmt_f64(s.mean)).collect();
        let spread: Vec<String> = agg
            .stats
            .iter()
            .flat_map(|s| [fmt_f64(s.sd), fmt_f64(s.ci_lo), fmt_f64(s.ci_hi)])
            .collect();
        writeln!(
            w,
            "aggregate,{}:all,{},{model},{dist},{},{},{},{},{},,,{},{},,,",
            agg.point,
            agg.algo.name(),
            agg.horizon,
            agg.m,
            agg.q,
            cfg.master_seed,
            means.join(","),
            agg.n,
            spread.join(","),
        )?;
    }
    for s in &out.slopes {
        let (n, fit) = match &s.fit {
            Some(f) => (f.used.to_string(), format!("{},{},{}", fmt_f64(f.slope), fmt_f64(f.intercept), fmt_f64(f.r2))),
            None => ("0".to_string(), "NaN,NaN,NaN".to_string()),
        };
        writeln!(
            w,
            "slope,regret_vs_T,{},{model},{dist},,{},{},{},,,,,,,,,{n},{empty_stats},{fit}",
            s.algo.name(),
            s.m,
            s.q,
            cfg.master_seed,
        )?;
    }
    Ok(())
}
