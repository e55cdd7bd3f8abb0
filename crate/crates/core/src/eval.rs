//! Offline and online 1-step prediction over the six model x goal-mode
//! strategies, with geometric-mean summaries.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::goal::{compute_scores, infer_goal_trace_with, GoalMode, GoalTrace};
use crate::km;
use crate::mixture::{fit_params, map_predict, JumpDiffusionParams, NllOptions, StateGrid};
use crate::sindy::{fit_km_models, sindy_step, KmModels};
use crate::stats;
use crate::trajectory::{GoalSet, Trajectory};

/// Floor applied to zero values before taking logs.
pub const ZERO_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Nll,
    Sindy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StrategyId {
    pub model: ModelKind,
    pub mode: GoalMode,
}

impl StrategyId {
    pub const ALL: [StrategyId; 6] = [
        StrategyId { model: ModelKind::Nll, mode: GoalMode::Nn },
        StrategyId { model: ModelKind::Nll, mode: GoalMode::Det },
        StrategyId { model: ModelKind::Nll, mode: GoalMode::Disc },
        StrategyId { model: ModelKind::Sindy, mode: GoalMode::Nn },
        StrategyId { model: ModelKind::Sindy, mode: GoalMode::Det },
        StrategyId { model: ModelKind::Sindy, mode: GoalMode::Disc },
    ];

    pub fn new(model: ModelKind, mode: GoalMode) -> Self {
        Self { model, mode }
    }
}

impl fmt::Display for StrategyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = match self.model {
            ModelKind::Nll => "nll",
            ModelKind::Sindy => "sindy",
        };
        write!(f, "{m}-{}", self.mode)
    }
}

impl FromStr for StrategyId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        let (m, g) = lower
            .split_once('-')
            .ok_or_else(|| Error::invalid(format!("strategy {s:?} is not of the form model-mode")))?;
        let model = match m {
            "nll" => ModelKind::Nll,
            "sindy" => ModelKind::Sindy,
            other => return Err(Error::invalid(format!("unknown model {other:?}"))),
        };
        Ok(Self::new(model, g.parse()?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    Offline,
    Online,
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunMode::Offline => "offline",
            RunMode::Online => "online",
        })
    }
}

impl FromStr for RunMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "offline" => Ok(RunMode::Offline),
            "online" => Ok(RunMode::Online),
            other => Err(Error::invalid(format!("unknown run mode {other:?}"))),
        }
    }
}

/// Per-step diagnostics of an online run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepDiagnostics {
    /// Index of the last sample used for the refit.
    pub step: usize,
    /// Fraction of prefix increments flagged as jumps.
    pub jump_density: f64,
    /// Simplex iterations spent by NLL refits (0 for SINDy).
    pub optimizer_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub strategy: StrategyId,
    pub mode: RunMode,
    /// Index of the sample predicted by `predictions[0]`.
    pub first: usize,
    pub predictions: Vec<Vec<f64>>,
    pub rss: f64,
    pub switches: usize,
    pub jumps: usize,
    /// Steps where the SINDy diffusion variance hit its floor.
    pub variance_floored: usize,
    pub diagnostics: Vec<StepDiagnostics>,
}

/// Sum of squared prediction errors.
pub fn rss(pred: &[Vec<f64>], truth: &[Vec<f64>]) -> f64 {
    pred.iter()
        .zip(truth)
        .map(|(p, t)| p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum()
}

/// Model fitted for one strategy.
#[derive(Debug, Clone, PartialEq)]
pub enum Fitted {
    /// `params[goal][dim]`.
    Nll(Vec<Vec<JumpDiffusionParams>>),
    Sindy(Vec<KmModels>),
}

fn nll_labels(trace: &GoalTrace) -> Vec<usize> {
    trace.labels.iter().map(|l| l.unwrap_or(0)).collect()
}

/// Per-goal NLL fit; goals with too few transitions share the pooled fit.
pub fn fit_nll_labeled(
    traj: &Trajectory,
    labels: &[usize],
    groups: usize,
    opts: &NllOptions,
    warm: Option<&[Vec<JumpDiffusionParams>]>,
) -> Result<(Vec<Vec<JumpDiffusionParams>>, usize)> {
    let n_trans = traj.len() - 1;
    let dims = traj.dims();
    let dt = traj.dt();
    let mut iterations = 0;
    let mut pooled: Option<Vec<JumpDiffusionParams>> = None;
    let mut out = Vec::with_capacity(groups);
    for g in 0..groups {
        let idx: Vec<usize> = (0..n_trans).filter(|&i| labels[i] == g).collect();
        let mut gp = Vec::with_capacity(dims);
        if idx.len() >= opts.min_transitions {
            for d in 0..dims {
                let x = traj.coord(d);
                let disp: Vec<f64> = idx.iter().map(|&i| x[i + 1] - x[i]).collect();
                let w = warm.and_then(|m| m.get(g)).and_then(|v| v.get(d));
                let (p, info) = fit_params(&disp, dt, opts, w)?;
                iterations += info.iterations;
                gp.push(p);
            }
        } else {
            if pooled.is_none() {
                let mut pp = Vec::with_capacity(dims);
                for d in 0..dims {
                    let x = traj.coord(d);
                    let disp: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
                    let (p, info) = fit_params(&disp, dt, opts, None)?;
                    iterations += info.iterations;
                    pp.push(p);
                }
                pooled = Some(pp);
            }
            gp = pooled.clone().expect("set above");
        }
        out.push(gp);
    }
    Ok((out, iterations))
}

/// Mean residual increment at flagged jump steps, per dimension. Residuals
/// are taken against a centered median of width `window`.
pub fn jump_means(traj: &Trajectory, flags: &[bool], window: usize) -> Vec<f64> {
    (0..traj.dims())
        .map(|d| {
            let inc: Vec<f64> = traj.coord(d).windows(2).map(|w| w[1] - w[0]).collect();
            let center = stats::centered(&inc, window, stats::median);
            let r: Vec<f64> = (0..inc.len())
                .filter(|&i| flags.get(i).copied().unwrap_or(false))
                .map(|i| inc[i] - center[i])
                .collect();
            if r.is_empty() {
                0.0
            } else {
                stats::mean(&r)
            }
        })
        .collect()
}

/// Fits the strategy's model on a full trajectory and its goal trace.
pub fn fit_strategy(
    traj: &Trajectory,
    trace: &GoalTrace,
    goals: &GoalSet,
    model: ModelKind,
    cfg: &PipelineConfig,
    warm: Option<&Fitted>,
) -> Result<(Fitted, usize)> {
    match model {
        ModelKind::Nll => {
            let warm = match warm {
                Some(Fitted::Nll(p)) => Some(p.as_slice()),
                _ => None,
            };
            let (p, it) = fit_nll_labeled(traj, &nll_labels(trace), goals.len().max(1), &cfg.nll_options(), warm)?;
            Ok((Fitted::Nll(p), it))
        }
        ModelKind::Sindy => {
            let lib = cfg.library()?;
            let n = traj.len() - 1;
            let mu_beta = if cfg.relax_mu_beta {
                jump_means(traj, &trace.scores.jump, cfg.goal.window)
            } else {
                vec![0.0; traj.dims()]
            };
            let models = (0..traj.dims())
                .map(|d| {
                    let kms = km::trajectory_moments(traj, d)?;
                    let g: Vec<f64> = trace.g[..n].iter().map(|g| g[d]).collect();
                    let mut m = fit_km_models(&kms, &traj.coord(d)[..n], &g, &lib, cfg.eps_ssr)?;
                    m.mu_beta = mu_beta[d];
                    Ok(m)
                })
                .collect::<Result<_>>()?;
            Ok((Fitted::Sindy(models), 0))
        }
    }
}

/// MAP prediction of sample `i + 1` from sample `i`. The flag reports a
/// floored SINDy variance.
pub fn predict_next(
    fitted: &Fitted,
    traj: &Trajectory,
    trace: &GoalTrace,
    i: usize,
    cells: usize,
) -> Result<(Vec<f64>, bool)> {
    let dt = traj.dt();
    let x = traj.point(i);
    match fitted {
        Fitted::Nll(params) => {
            let label = trace.labels[i].unwrap_or(0);
            let p = &params[label];
            let pred = (0..x.len())
                .map(|d| {
                    let grid = StateGrid::around(&p[d], x[d], dt, cells);
                    map_predict(&p[d], x[d], dt, &grid)
                })
                .collect::<Result<_>>()?;
            Ok((pred, false))
        }
        Fitted::Sindy(models) => {
            let mut floored = false;
            let mut pred = Vec::with_capacity(x.len());
            for (d, m) in models.iter().enumerate() {
                let s = sindy_step(m, x[d], trace.g[i][d], dt, cells)?;
                floored |= s.variance_floored;
                pred.push(s.x_t);
            }
            Ok((pred, floored))
        }
    }
}

/// Goal traces for every mode from one shared set of scores.
fn traces_for(traj: &Trajectory, goals: &GoalSet, modes: &[GoalMode], cfg: &PipelineConfig) -> Result<Vec<GoalTrace>> {
    let scores = compute_scores(traj, &cfg.goal)?;
    modes
        .iter()
        .map(|&m| infer_goal_trace_with(traj, goals, m, &cfg.goal, scores.clone()))
        .collect()
}

fn truth_from(traj: &Trajectory, first: usize, count: usize) -> Vec<Vec<f64>> {
    (first..first + count).map(|i| traj.point(i)).collect()
}

/// Fits once on the full trajectory and predicts every step.
pub fn run_offline(traj: &Trajectory, goals: &GoalSet, strategy: StrategyId, cfg: &PipelineConfig) -> Result<RunResult> {
    cfg.validate()?;
    let trace = traces_for(traj, goals, &[strategy.mode], cfg)?.remove(0);
    offline_with_trace(traj, goals, strategy, cfg, &trace)
}

fn offline_with_trace(
    traj: &Trajectory,
    goals: &GoalSet,
    strategy: StrategyId,
    cfg: &PipelineConfig,
    trace: &GoalTrace,
) -> Result<RunResult> {
    let (fitted, _) = fit_strategy(traj, trace, goals, strategy.model, cfg, None)?;
    let mut predictions = Vec::with_capacity(traj.len() - 1);
    let mut floored = 0;
    for i in 0..traj.len() - 1 {
        let (p, f) = predict_next(&fitted, traj, trace, i, cfg.cells)?;
        floored += usize::from(f);
        predictions.push(p);
    }
    let truth = truth_from(traj, 1, predictions.len());
    Ok(RunResult {
        strategy,
        mode: RunMode::Offline,
        first: 1,
        rss: rss(&predictions, &truth),
        predictions,
        switches: trace.switch_count(),
        jumps: trace.jumps_detected(),
        variance_floored: floored,
        diagnostics: vec![],
    })
}

/// Refits on samples `[0, i]` at every step `i >= warmup` and predicts `i + 1`.
/// NLL refits start from the previous step's solution.
pub fn run_online(traj: &Trajectory, goals: &GoalSet, strategy: StrategyId, cfg: &PipelineConfig) -> Result<RunResult> {
    cfg.validate()?;
    let n = traj.len();
    if n < cfg.warmup + 2 {
        return Err(Error::TooFewSamples {
            need: cfg.warmup + 2,
            got: n,
        });
    }
    let mut warm: Option<Fitted> = None;
    let mut predictions = Vec::with_capacity(n - cfg.warmup - 1);
    let mut diagnostics = Vec::with_capacity(n - cfg.warmup - 1);
    let mut floored = 0;
    for i in cfg.warmup..n - 1 {
        let prefix = traj.prefix(i)?;
        let trace = traces_for(&prefix, goals, &[strategy.mode], cfg)?.remove(0);
        let (fitted, iterations) = fit_strategy(&prefix, &trace, goals, strategy.model, cfg, warm.as_ref())?;
        let (p, f) = predict_next(&fitted, &prefix, &trace, i, cfg.cells)?;
        floored += usize::from(f);
        predictions.push(p);
        diagnostics.push(StepDiagnostics {
            step: i,
            jump_density: trace.jumps_detected() as f64 / trace.scores.len() as f64,
            optimizer_iterations: iterations,
        });
        warm = Some(fitted);
    }
    let full = traces_for(traj, goals, &[strategy.mode], cfg)?.remove(0);
    let truth = truth_from(traj, cfg.warmup + 1, predictions.len());
    Ok(RunResult {
        strategy,
        mode: RunMode::Online,
        first: cfg.warmup + 1,
        rss: rss(&predictions, &truth),
        predictions,
        switches: full.switch_count(),
        jumps: full.jumps_detected(),
        variance_floored: floored,
        diagnostics,
    })
}

/// Geometric mean with a 95% t-interval on the log scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aggregate {
    pub n: usize,
    pub geo_mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Values floored from zero before taking logs.
    pub zeros_floored: usize,
}

pub fn aggregate(values: &[f64]) -> Result<Aggregate> {
    if values.is_empty() {
        return Err(Error::invalid("cannot aggregate an empty set"));
    }
    if values.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::invalid("aggregate needs non-negative values"));
    }
    let zeros = values.iter().filter(|v| **v < ZERO_FLOOR).count();
    let logs: Vec<f64> = values.iter().map(|v| v.max(ZERO_FLOOR).ln()).collect();
    let m = stats::mean(&logs);
    let n = logs.len();
    let half = if n < 2 {
        0.0
    } else {
        let se = (stats::sample_variance(&logs) / n as f64).sqrt();
        stats::t_critical(0.95, (n - 1) as f64) * se
    };
    Ok(Aggregate {
        n,
        geo_mean: m.exp(),
        ci_low: (m - half).exp(),
        ci_high: (m + half).exp(),
        zeros_floored: zeros,
    })
}

/// One labeled input trajectory.
#[derive(Debug, Clone)]
pub struct EvalInput {
    pub id: String,
    pub scenario: String,
    pub trajectory: Trajectory,
    pub goals: GoalSet,
}

/// One (trajectory, strategy) outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub trajectory: String,
    pub scenario: String,
    pub strategy: String,
    pub mode: RunMode,
    pub rss: f64,
    pub steps: usize,
    pub switches: usize,
    pub jumps: usize,
    pub variance_floored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RssRow {
    pub scenario: String,
    pub strategy: String,
    pub rss: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GoalRow {
    pub scenario: String,
    pub goal_mode: String,
    pub jumps: Aggregate,
    pub switches: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub mode: RunMode,
    pub warmup: Option<usize>,
    pub cells: Vec<CellResult>,
    pub rss: Vec<RssRow>,
    pub goals: Vec<GoalRow>,
}

/// Runs every strategy on every input. Cells run in parallel; the report
/// keeps input order, then strategy order.
pub fn run_matrix(
    inputs: &[EvalInput],
    strategies: &[StrategyId],
    mode: RunMode,
    cfg: &PipelineConfig,
) -> Result<EvalReport> {
    cfg.validate()?;
    let jobs: Vec<(usize, StrategyId)> = (0..inputs.len())
        .flat_map(|t| strategies.iter().map(move |&s| (t, s)))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(t, s)| {
            let inp = &inputs[t];
            let r = match mode {
                RunMode::Offline => run_offline(&inp.trajectory, &inp.goals, s, cfg),
                RunMode::Online => run_online(&inp.trajectory, &inp.goals, s, cfg),
            }
            .map_err(|e| e.in_trajectory(format!("{} ({s})", inp.id)))?;
            Ok(CellResult {
                trajectory: inp.id.clone(),
                scenario: inp.scenario.clone(),
                strategy: s.to_string(),
                mode,
                rss: r.rss,
                steps: r.predictions.len(),
                switches: r.switches,
                jumps: r.jumps,
                variance_floored: r.variance_floored,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (rss_rows, goal_rows) = summarize(&cells, strategies)?;
    Ok(EvalReport {
        mode,
        warmup: (mode == RunMode::Online).then_some(cfg.warmup),
        cells,
        rss: rss_rows,
        goals: goal_rows,
    })
}

fn scenarios(cells: &[CellResult]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for c in cells {
        if !out.contains(&c.scenario) {
            out.push(c.scenario.clone());
        }
    }
    out
}

fn summarize(cells: &[CellResult], strategies: &[StrategyId]) -> Result<(Vec<RssRow>, Vec<GoalRow>)> {
    let mut rss_rows = Vec::new();
    let mut goal_rows = Vec::new();
    for sc in scenarios(cells) {
        for s in strategies {
            let name = s.to_string();
            let v: Vec<f64> = cells
                .iter()
                .filter(|c| c.scenario == sc && c.strategy == name)
                .map(|c| c.rss)
                .collect();
            if !v.is_empty() {
                rss_rows.push(RssRow {
                    scenario: sc.clone(),
                    strategy: name,
                    rss: aggregate(&v)?,
                });
            }
        }
        for mode in GoalMode::ALL {
            // one value per trajectory: the first strategy using this goal mode
            let Some(s) = strategies.iter().find(|s| s.mode == mode) else {
                continue;
            };
            let name = s.to_string();
            let sel: Vec<&CellResult> = cells
                .iter()
                .filter(|c| c.scenario == sc && c.strategy == name)
                .collect();
            if sel.is_empty() {
                continue;
            }
            let jumps: Vec<f64> = sel.iter().map(|c| c.jumps as f64).collect();
            let switches: Vec<f64> = sel.iter().map(|c| c.switches as f64).collect();
            goal_rows.push(GoalRow {
                scenario: sc.clone(),
                goal_mode: mode.to_string(),
                jumps: aggregate(&jumps)?,
                switches: aggregate(&switches)?,
            });
        }
    }
    Ok((rss_rows, goal_rows))
}

impl EvalReport {
    /// Per-cell CSV.
    pub fn cells_csv(&self) -> String {
        let mut s = String::from("trajectory,scenario,strategy,mode,rss,steps,switches,jumps,variance_floored\n");
        for c in &self.cells {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                c.trajectory, c.scenario, c.strategy, c.mode, c.rss, c.steps, c.switches, c.jumps, c.variance_floored
            );
        }
        s
    }

    /// Aggregate CSV with one row per scenario and strategy.
    pub fn summary_csv(&self) -> String {
        let mut s = String::from("scenario,strategy,mode,n,rss_geo_mean,rss_ci_low,rss_ci_high,zeros_floored\n");
        for r in &self.rss {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.scenario, r.strategy, self.mode, r.rss.n, r.rss.geo_mean, r.rss.ci_low, r.rss.ci_high, r.rss.zeros_floored
            );
        }
        s
    }

    /// Human-readable tables: goal strategy counts, then RSS by strategy.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mode: {}", self.mode);
        if let Some(w) = self.warmup {
            let _ = writeln!(s, "warmup: {w} samples before the first prediction");
        }
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:<14} {:<6} {:>26} {:>26}",
            "scenario", "goals", "jumps detected", "goal switches"
        );
        for r in &self.goals {
            let _ = writeln!(
                s,
                "{:<14} {:<6} {:>26} {:>26}",
                r.scenario,
                r.goal_mode,
                fmt_agg(&r.jumps),
                fmt_agg(&r.switches)
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<14} {:<12} {:>4} {:>36}", "scenario", "strategy", "n", "1-step RSS (m^2)");
        for r in &self.rss {
            let _ = writeln!(
                s,
                "{:<14} {:<12} {:>4} {:>36}",
                r.scenario,
                r.strategy,
                r.rss.n,
                fmt_agg(&r.rss)
            );
        }
        s
    }
}

fn fmt_agg(a: &Aggregate) -> String {
    format!("{:.4e} [{:.4e}, {:.4e}]", a.geo_mean, a.ci_low, a.ci_high)
}
