mod files;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use jdd_core::config::PipelineConfig;
use jdd_core::eval::{self, EvalInput, RunMode, StrategyId};
use jdd_core::goal::{infer_goal_trace, GoalMode};
use jdd_core::km;
use jdd_core::mixture::{map_predict, nll_fit, predictive_interval_width, StateGrid};
use jdd_core::plotdata::{self, read_goal_trace, Provenance};
use jdd_core::reach::{reach_grid, GridSpec, ReachOptions};
use jdd_core::sim::{simulate, SimConfig};
use jdd_core::sindy::{fit_km_models, sindy_step};
use serde::Serialize;

use files::ModelFile;

#[derive(Parser, Debug)]
#[command(name = "jdd", version, about = "Jump-drift-diffusion intent inference toolkit")]
#[command(arg_required_else_help = true)]
struct Cli {
    /// Seed for every stochastic choice.
    #[arg(long, global = true, env = "JDD_SEED")]
    seed: Option<u64>,
    /// Suppress progress messages.
    #[arg(long, global = true)]
    quiet: bool,
    /// Output file (stdout when omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Pipeline settings JSON; flags given on the command line take precedence.
    #[arg(long, global = true)]
    settings: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
enum Command {
    /// Simulate a trajectory from a simulator config.
    Simulate(SimulateArgs),
    /// Kramers-Moyal moment tracks and derived parameters for one dimension.
    Km(KmArgs),
    /// Fit the per-goal NLL baseline.
    FitNll(FitNllArgs),
    /// Fit sparse moment models against a goal trace.
    FitSindy(FitSindyArgs),
    /// Infer the goal trace.
    InferGoals(InferGoalsArgs),
    /// One-step MAP prediction and predictive interval.
    Predict(PredictArgs),
    /// Probabilistic reachability grid.
    Reach(ReachArgs),
    /// Replay one trajectory with one strategy.
    Playback(PlaybackArgs),
    /// Run the strategy matrix over a directory of trajectories.
    Eval(EvalArgs),
    /// Plot-ready CSV data.
    #[command(subcommand)]
    Plotdata(PlotKind),
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    /// Simulator config JSON.
    #[arg(long)]
    config: PathBuf,
    /// Goal set JSON (needed for mean-reversion drift).
    #[arg(long)]
    goals: Option<PathBuf>,
    /// Ground-truth output (jump events and active goal per sample).
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct KmArgs {
    #[arg(long)]
    traj: PathBuf,
    #[arg(long, default_value_t = 0)]
    dim: usize,
    /// Odd smoothing window in samples (1 = raw moments).
    #[arg(long)]
    window: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
struct FitNllArgs {
    #[arg(long)]
    traj: PathBuf,
    #[arg(long)]
    goals: PathBuf,
    /// CSV with a `label` column, one row per transition. Nearest-goal labels when omitted.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Multi-start count.
    #[arg(long)]
    starts: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
struct FitSindyArgs {
    #[arg(long)]
    traj: PathBuf,
    /// Goal trace CSV as written by `infer-goals`.
    #[arg(long)]
    goal_trace: PathBuf,
    /// Goal set stored with the model for later prediction; the final traced goal otherwise.
    #[arg(long)]
    goals: Option<PathBuf>,
    /// Library name (default2, default1, linear) or comma-separated term list.
    #[arg(long)]
    library: Option<String>,
    /// Sparsity tolerance.
    #[arg(long)]
    eps: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
struct InferGoalsArgs {
    #[arg(long)]
    traj: PathBuf,
    #[arg(long)]
    goals: PathBuf,
    /// nn, det or disc.
    #[arg(long, default_value = "det")]
    mode: String,
}

#[derive(Args, Debug, Serialize)]
struct PredictArgs {
    /// model.json from fit-nll or sindy.json from fit-sindy.
    #[arg(long)]
    model: PathBuf,
    /// Start state, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    x0: String,
    /// Horizon in seconds (the model's sample step when omitted).
    #[arg(long)]
    tau: Option<f64>,
    /// Goal index.
    #[arg(long, default_value_t = 0)]
    goal: usize,
    /// Grid cells per dimension.
    #[arg(long)]
    cells: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
struct ReachArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    x0: String,
    /// Slice times in seconds.
    #[arg(long, default_value = "0.5,1,2,4,8")]
    slices: String,
    /// Grid cells per dimension.
    #[arg(long, default_value_t = 61)]
    cells: usize,
    /// Divide the goal sum by the number of goals.
    #[arg(long)]
    normalize: bool,
}

#[derive(Args, Debug, Serialize)]
struct PlaybackArgs {
    #[arg(long)]
    traj: PathBuf,
    #[arg(long)]
    goals: PathBuf,
    /// One of nll-nn, nll-det, nll-disc, sindy-nn, sindy-det, sindy-disc.
    #[arg(long, default_value = "sindy-det")]
    strategy: String,
    /// online or offline.
    #[arg(long, default_value = "online")]
    mode: String,
    /// Samples before the first online prediction.
    #[arg(long)]
    warmup: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
struct EvalArgs {
    /// Directory of `t,x[,y,z]` CSV files; each subdirectory is one scenario.
    #[arg(long)]
    dir: PathBuf,
    /// Goal set for every trajectory without its own `<name>.goals.json`.
    #[arg(long)]
    goals: Option<PathBuf>,
    /// online or offline.
    #[arg(long, default_value = "offline")]
    mode: String,
    /// Comma-separated strategies, or `all`.
    #[arg(long, default_value = "all")]
    strategies: String,
    #[arg(long)]
    warmup: Option<usize>,
}

#[derive(Subcommand, Debug, Serialize)]
enum PlotKind {
    /// Transition density curves of one dimension for each goal of each model.
    PdfCurve {
        #[arg(long, required = true)]
        model: Vec<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        x0: String,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long, default_value_t = 0)]
        dim: usize,
        #[arg(long, default_value_t = 401)]
        cells: usize,
    },
    /// Detected jumps of one dimension.
    JumpMarkers {
        #[arg(long)]
        traj: PathBuf,
        #[arg(long, default_value_t = 0)]
        dim: usize,
    },
    /// Goal trace with scores and switch flags.
    GoalTrace {
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        goals: PathBuf,
        #[arg(long, default_value = "det")]
        mode: String,
    },
    /// Reachability planes at every slice time.
    ReachSlice {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        x0: String,
        #[arg(long, default_value = "0.5,1,2,4,8")]
        slices: String,
        #[arg(long, default_value_t = 61)]
        cells: usize,
        /// Plane axes, e.g. `0,1`.
        #[arg(long, default_value = "0,1")]
        plane: String,
    },
}

struct Ctx {
    seed: u64,
    seed_given: bool,
    quiet: bool,
    out: Option<PathBuf>,
    cfg: PipelineConfig,
}

impl Ctx {
    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn out(&self) -> Option<&Path> {
        self.out.as_deref()
    }

    /// Provenance of an output: hash over the command, its flags and the settings.
    fn provenance(&self, cmd: &Command) -> Provenance {
        files::provenance(&(cmd, &self.cfg), self.seed)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.settings {
        Some(p) => PipelineConfig::from_json(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    match &cli.command {
        Command::Km(a) => cfg.km_window = a.window.unwrap_or(cfg.km_window),
        Command::FitNll(a) => cfg.nll_starts = a.starts.unwrap_or(cfg.nll_starts),
        Command::FitSindy(a) => {
            if let Some(l) = &a.library {
                cfg.library = l.clone();
            }
            cfg.eps_ssr = a.eps.unwrap_or(cfg.eps_ssr);
        }
        Command::Playback(PlaybackArgs { warmup, .. }) | Command::Eval(EvalArgs { warmup, .. }) => {
            cfg.warmup = warmup.unwrap_or(cfg.warmup)
        }
        _ => {}
    }
    cfg.validate()?;
    let ctx = Ctx {
        seed: cli.seed.unwrap_or(0),
        seed_given: cli.seed.is_some(),
        quiet: cli.quiet,
        out: cli.out,
        cfg,
    };
    let meta = ctx.provenance(&cli.command);
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(&ctx, a),
        Command::Km(a) => cmd_km(&ctx, &meta, a),
        Command::FitNll(a) => cmd_fit_nll(&ctx, &meta, a),
        Command::FitSindy(a) => cmd_fit_sindy(&ctx, &meta, a),
        Command::InferGoals(a) => {
            let trace = trace_for(&ctx, &a.traj, &a.goals, &a.mode)?;
            let mut w = files::sink(ctx.out())?;
            plotdata::write_goal_trace(&mut w, &meta, &trace)?;
            w.flush()?;
            ctx.note(format!("{} switches, {} jumps", trace.switch_count(), trace.jumps_detected()));
            Ok(())
        }
        Command::Predict(a) => cmd_predict(&ctx, &meta, a),
        Command::Reach(a) => {
            let g = reach_for(&ctx, &a.model, &a.x0, &a.slices, a.cells, a.normalize)?;
            let mut w = files::sink(ctx.out())?;
            meta.write_line(&mut w)?;
            g.write_csv(&mut w)?;
            w.flush()?;
            Ok(())
        }
        Command::Playback(a) => cmd_playback(&ctx, &meta, a),
        Command::Eval(a) => cmd_eval(&ctx, &meta, a),
        Command::Plotdata(k) => cmd_plotdata(&ctx, &meta, k),
    }
}

fn cmd_simulate(ctx: &Ctx, a: &SimulateArgs) -> Result<()> {
    let mut sim: SimConfig = files::read_json(&a.config)?;
    if ctx.seed_given {
        sim.seed = ctx.seed;
    }
    let goals = match &a.goals {
        Some(p) => files::goals(p)?,
        None => Default::default(),
    };
    let r = simulate(&sim, &goals)?;
    let meta = files::provenance(&(&sim, &goals), sim.seed);
    let mut w = files::sink(ctx.out())?;
    meta.write_line(&mut w)?;
    r.trajectory.write_csv(&mut w)?;
    w.flush()?;
    if let Some(t) = &a.truth {
        files::write_json(Some(t), &r.truth)?;
    }
    ctx.note(format!("{} samples, {} jumps", r.trajectory.len(), r.truth.jumps.len()));
    Ok(())
}

fn cmd_km(ctx: &Ctx, meta: &Provenance, a: &KmArgs) -> Result<()> {
    let traj = files::trajectory(&a.traj)?;
    let kms = km::estimate(&traj, a.dim, ctx.cfg.km_window)?;
    let mut w = files::sink(ctx.out())?;
    meta.write_line(&mut w)?;
    kms.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn cmd_fit_nll(ctx: &Ctx, meta: &Provenance, a: &FitNllArgs) -> Result<()> {
    let traj = files::trajectory(&a.traj)?;
    let goals = files::goals(&a.goals)?;
    if goals.is_empty() {
        bail!("fit-nll needs at least one goal");
    }
    let labels = match &a.labels {
        Some(p) => files::labels(p, &goals)?,
        None => (0..traj.len() - 1)
            .map(|i| goals.nearest(&traj.point(i)).expect("non-empty goal set"))
            .collect(),
    };
    let mut model = nll_fit(&traj, &labels, goals.len(), &ctx.cfg.nll_options(), None)?;
    model.goal_labels = goals.goals.iter().map(|g| g.label.clone()).collect();
    files::write_json(
        ctx.out(),
        &ModelFile::Nll {
            config_hash: meta.config_hash.clone(),
            seed: meta.seed,
            model,
        },
    )
}

fn cmd_fit_sindy(ctx: &Ctx, meta: &Provenance, a: &FitSindyArgs) -> Result<()> {
    let traj = files::trajectory(&a.traj)?;
    let f = fs::File::open(&a.goal_trace).with_context(|| format!("opening {}", a.goal_trace.display()))?;
    let table = read_goal_trace(std::io::BufReader::new(f))?;
    if table.times.len() != traj.len() || table.dims() != traj.dims() {
        bail!(
            "goal trace has {} samples in {} dimensions, trajectory has {} in {}",
            table.times.len(),
            table.dims(),
            traj.len(),
            traj.dims()
        );
    }
    let lib = ctx.cfg.library()?;
    let mu_beta = if ctx.cfg.relax_mu_beta {
        eval::jump_means(&traj, &table.jump, ctx.cfg.goal.window)
    } else {
        vec![0.0; traj.dims()]
    };
    let mut models = Vec::with_capacity(traj.dims());
    for d in 0..traj.dims() {
        let kms = km::trajectory_moments(&traj, d)?;
        let n = kms.len();
        let g = table.coord(d);
        let mut m = fit_km_models(&kms, &traj.coord(d)[..n], &g[..n], &lib, ctx.cfg.eps_ssr)?;
        m.mu_beta = mu_beta[d];
        models.push(m);
    }
    let goals = match &a.goals {
        Some(p) => files::goals(p)?.goals.into_iter().map(|g| g.pos).collect(),
        None => vec![table.g.last().cloned().unwrap_or_default()],
    };
    files::write_json(
        ctx.out(),
        &ModelFile::Sindy {
            config_hash: meta.config_hash.clone(),
            seed: meta.seed,
            goals,
            models,
        },
    )
}

fn trace_for(ctx: &Ctx, traj: &Path, goals: &Path, mode: &str) -> Result<jdd_core::goal::GoalTrace> {
    let traj = files::trajectory(traj)?;
    let goals = files::goals(goals)?;
    let mode: GoalMode = mode.parse()?;
    Ok(infer_goal_trace(&traj, &goals, mode, &ctx.cfg.goal)?)
}

#[derive(Serialize)]
struct Prediction {
    config_hash: String,
    seed: u64,
    x0: Vec<f64>,
    tau: f64,
    goal: usize,
    map: Vec<f64>,
    /// Width of the central 95% interval per dimension.
    interval95: Vec<f64>,
    variance_floored: bool,
}

fn cmd_predict(ctx: &Ctx, meta: &Provenance, a: &PredictArgs) -> Result<()> {
    let m = files::model(&a.model)?;
    let x0 = files::parse_list(&a.x0)?;
    let tau = a.tau.unwrap_or(m.dt());
    if !(tau > 0.0) {
        bail!("--tau must be positive");
    }
    let cells = a.cells.unwrap_or(ctx.cfg.cells);
    let params = m.params_at(&x0)?;
    let p = params
        .get(a.goal)
        .with_context(|| format!("--goal {} out of range (model has {} goals)", a.goal, params.len()))?;
    let mut map = Vec::with_capacity(x0.len());
    let mut width = Vec::with_capacity(x0.len());
    let mut floored = false;
    for d in 0..x0.len() {
        let grid = StateGrid::around(&p[d], x0[d], tau, cells);
        match &m {
            ModelFile::Nll { .. } => map.push(map_predict(&p[d], x0[d], tau, &grid)?),
            ModelFile::Sindy { goals, models, .. } => {
                let s = sindy_step(&models[d], x0[d], goals[a.goal][d], tau, cells)?;
                floored |= s.variance_floored;
                map.push(s.x_t);
            }
        }
        width.push(predictive_interval_width(&p[d], x0[d], tau, &grid, 0.95)?);
    }
    files::write_json(
        ctx.out(),
        &Prediction {
            config_hash: meta.config_hash.clone(),
            seed: meta.seed,
            x0,
            tau,
            goal: a.goal,
            map,
            interval95: width,
            variance_floored: floored,
        },
    )
}

fn reach_for(
    ctx: &Ctx,
    model: &Path,
    x0: &str,
    slices: &str,
    cells: usize,
    normalize: bool,
) -> Result<jdd_core::reach::ReachabilityGrid> {
    let m = files::model(model)?;
    let x0 = files::parse_list(x0)?;
    let slices = files::parse_list(slices)?;
    let params = m.params_at(&x0)?;
    let spec = GridSpec::around(&params, &x0, &slices, cells)?;
    ctx.note(format!("{} voxels x {} slices", spec.voxels(), slices.len()));
    let opts = ReachOptions {
        normalize: normalize || ctx.cfg.normalize_goal_mixture,
        ..Default::default()
    };
    Ok(reach_grid(&params, &x0, &spec, &opts)?)
}

#[derive(Serialize)]
struct Playback<'a> {
    config_hash: &'a str,
    seed: u64,
    trajectory: String,
    warmup: Option<usize>,
    #[serde(flatten)]
    result: eval::RunResult,
}

fn cmd_playback(ctx: &Ctx, meta: &Provenance, a: &PlaybackArgs) -> Result<()> {
    let traj = files::trajectory(&a.traj)?;
    let goals = files::goals(&a.goals)?;
    let strategy: StrategyId = a.strategy.parse()?;
    let mode: RunMode = a.mode.parse()?;
    let result = match mode {
        RunMode::Offline => eval::run_offline(&traj, &goals, strategy, &ctx.cfg)?,
        RunMode::Online => eval::run_online(&traj, &goals, strategy, &ctx.cfg)?,
    };
    ctx.note(format!("{strategy} {mode}: RSS {:.6e} over {} steps", result.rss, result.predictions.len()));
    files::write_json(
        ctx.out(),
        &Playback {
            config_hash: &meta.config_hash,
            seed: meta.seed,
            trajectory: a.traj.display().to_string(),
            warmup: (mode == RunMode::Online).then_some(ctx.cfg.warmup),
            result,
        },
    )
}

fn csv_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    v.retain(|p| p.is_file() && p.extension().is_some_and(|e| e == "csv"));
    v.sort();
    Ok(v)
}

fn eval_inputs(a: &EvalArgs) -> Result<Vec<EvalInput>> {
    let shared = a.goals.as_deref().map(files::goals).transpose()?;
    let stem = |p: &Path| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut groups = vec![(stem(&a.dir), csv_files(&a.dir)?)];
    let mut subdirs: Vec<PathBuf> = fs::read_dir(&a.dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    for d in subdirs {
        groups.push((stem(&d), csv_files(&d)?));
    }
    let mut inputs = Vec::new();
    for (scenario, paths) in groups {
        for p in paths {
            let own = p.with_extension("goals.json");
            let goals = if own.is_file() {
                files::goals(&own)?
            } else {
                shared
                    .clone()
                    .with_context(|| format!("no goals for {} (pass --goals or add {})", p.display(), own.display()))?
            };
            inputs.push(EvalInput {
                id: p.display().to_string(),
                scenario: scenario.clone(),
                trajectory: files::trajectory(&p)?,
                goals,
            });
        }
    }
    if inputs.is_empty() {
        bail!("no trajectories found in {}", a.dir.display());
    }
    Ok(inputs)
}

#[derive(Serialize)]
struct EvalOutput<'a> {
    config_hash: &'a str,
    seed: u64,
    #[serde(flatten)]
    report: &'a eval::EvalReport,
}

fn cmd_eval(ctx: &Ctx, meta: &Provenance, a: &EvalArgs) -> Result<()> {
    let inputs = eval_inputs(a)?;
    let mode: RunMode = a.mode.parse()?;
    let strategies: Vec<StrategyId> = if a.strategies.trim() == "all" {
        StrategyId::ALL.to_vec()
    } else {
        a.strategies
            .split(',')
            .map(|s| s.trim().parse())
            .collect::<jdd_core::Result<_>>()?
    };
    ctx.note(format!("{} trajectories x {} strategies ({mode})", inputs.len(), strategies.len()));
    let report = eval::run_matrix(&inputs, &strategies, mode, &ctx.cfg)?;
    files::write_json(
        ctx.out(),
        &EvalOutput {
            config_hash: &meta.config_hash,
            seed: meta.seed,
            report: &report,
        },
    )?;
    let table = report.table();
    if let Some(out) = ctx.out() {
        let with_meta = |body: String| {
            let mut s = Vec::new();
            meta.write_line(&mut s).expect("in-memory write");
            s.extend_from_slice(body.as_bytes());
            s
        };
        fs::write(files::sibling(out, "cells.csv"), with_meta(report.cells_csv()))?;
        fs::write(files::sibling(out, "summary.csv"), with_meta(report.summary_csv()))?;
        fs::write(files::sibling(out, "txt"), &table)?;
        if !ctx.quiet {
            print!("{table}");
        }
    }
    Ok(())
}

fn cmd_plotdata(ctx: &Ctx, meta: &Provenance, kind: &PlotKind) -> Result<()> {
    let mut w = files::sink(ctx.out())?;
    match kind {
        PlotKind::PdfCurve {
            model,
            x0,
            tau,
            dim,
            cells,
        } => {
            let x0 = files::parse_list(x0)?;
            let mut curves = Vec::new();
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            let mut step = None;
            for path in model {
                let m = files::model(path)?;
                let t = tau.unwrap_or(m.dt());
                if step.is_some_and(|s| s != t) {
                    bail!("models have different sample steps; pass --tau");
                }
                step = Some(t);
                let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                for (k, p) in m.params_at(&x0)?.into_iter().enumerate() {
                    let p = *p.get(*dim).with_context(|| format!("--dim {dim} out of range"))?;
                    let g = StateGrid::around(&p, x0[*dim], t, 3);
                    lo = lo.min(g.min);
                    hi = hi.max(g.max);
                    curves.push((format!("{name}:goal{k}"), p));
                }
            }
            let grid = StateGrid::new(lo, hi, *cells)?;
            plotdata::write_pdf_curves(&mut w, meta, &curves, x0[*dim], step.expect("one model"), &grid)?;
        }
        PlotKind::JumpMarkers { traj, dim } => {
            let traj = files::trajectory(traj)?;
            let kms = km::trajectory_moments(&traj, *dim)?;
            let markers = plotdata::jump_markers(&kms, &ctx.cfg.goal)?;
            ctx.note(format!("{} jumps", markers.len()));
            plotdata::write_jump_markers(&mut w, meta, *dim, &markers)?;
        }
        PlotKind::GoalTrace { traj, goals, mode } => {
            let trace = trace_for(ctx, traj, goals, mode)?;
            plotdata::write_goal_trace(&mut w, meta, &trace)?;
        }
        PlotKind::ReachSlice {
            model,
            x0,
            slices,
            cells,
            plane,
        } => {
            let g = reach_for(ctx, model, x0, slices, *cells, false)?;
            let p = files::parse_list(plane)?;
            if p.len() != 2 || p.iter().any(|v| *v < 0.0 || v.fract() != 0.0) {
                bail!("--plane takes two axis indices, e.g. 0,1");
            }
            plotdata::write_reach_slices(&mut w, meta, &g, (p[0] as usize, p[1] as usize))?;
        }
    }
    w.flush()?;
    Ok(())
}
