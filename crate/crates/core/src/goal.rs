//! Settled/move/jump scoring, goal dynamics and the three goal strategies.
//!
//! Scores are indexed by increment: entry `i` describes the move from sample
//! `i` to `i + 1` and drives the goal update `g[i] -> g[i + 1]`, so the goal at
//! sample `i` only depends on samples up to `i` (apart from the centered jump
//! feature windows).

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ecod;
use crate::error::{Error, Result};
use crate::km::{self, EPS_M4};
use crate::sindy::{ssr_fit_pruned, Design, SindyModel};
use crate::stats;
use crate::trajectory::{dist, increments, GoalSet, Trajectory};

/// Variance floor in the dispersion coefficient, (m/s)^2.
pub const EPS_VAR: f64 = 1e-12;
/// MAD floor in the settled score.
pub const EPS_MAD: f64 = 1e-12;
/// Median of a chi-square variable with one degree of freedom.
const CHI2_1_MEDIAN: f64 = 0.454_936_423_119_572_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GoalMode {
    /// Nearest known goal to the operator position.
    Nn,
    /// Goal dynamics snapped to the nearest known goal.
    Det,
    /// Free goal dynamics.
    Disc,
}

impl GoalMode {
    pub const ALL: [GoalMode; 3] = [GoalMode::Nn, GoalMode::Det, GoalMode::Disc];

    pub fn as_str(&self) -> &'static str {
        match self {
            GoalMode::Nn => "nn",
            GoalMode::Det => "det",
            GoalMode::Disc => "disc",
        }
    }
}

impl fmt::Display for GoalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GoalMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nn" => Ok(GoalMode::Nn),
            "det" => Ok(GoalMode::Det),
            "disc" => Ok(GoalMode::Disc),
            other => Err(Error::invalid(format!("unknown goal mode {other:?}"))),
        }
    }
}

/// Score and goal-dynamics settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GoalConfig {
    /// Window for the dispersion coefficient, motion direction and jump features (odd).
    pub window: usize,
    /// Trailing window for the median and MAD of the dispersion coefficient.
    pub settle_window: usize,
    /// ECOD contamination.
    pub contamination: f64,
    /// Motion-direction deadband on the windowed mean velocity, m/s.
    pub eps_v: f64,
    /// Eq. weights; `None` means all ones.
    pub xi: Option<Vec<f64>>,
    /// Softmax temperature, m; `None` means mean pairwise goal distance (1 m for one goal).
    pub temperature: Option<f64>,
    /// Minimum goal displacement counted as a switch in discovery mode, m.
    pub delta_switch: f64,
}

impl Default for GoalConfig {
    fn default() -> Self {
        Self {
            window: km::DEFAULT_WINDOW,
            settle_window: 101,
            contamination: 0.05,
            eps_v: 0.05,
            xi: None,
            temperature: None,
            delta_switch: 0.01,
        }
    }
}

impl GoalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window % 2 == 0 {
            return Err(Error::invalid(format!(
                "window must be odd and at least 3, got {}",
                self.window
            )));
        }
        if self.settle_window < 3 {
            return Err(Error::invalid("settle window must be at least 3"));
        }
        if !(0.0..1.0).contains(&self.contamination) {
            return Err(Error::invalid("contamination must lie in [0, 1)"));
        }
        if !(self.eps_v >= 0.0) || !(self.delta_switch >= 0.0) {
            return Err(Error::invalid("deadband and switch threshold must be non-negative"));
        }
        if let Some(t) = self.temperature {
            if !(t > 0.0) {
                return Err(Error::invalid("temperature must be positive"));
            }
        }
        Ok(())
    }

    /// Weight vector of length `3 + k`.
    pub fn xi_for(&self, k: usize) -> Result<Vec<f64>> {
        match &self.xi {
            None => Ok(vec![1.0; 3 + k]),
            Some(v) if v.len() == 3 + k => Ok(v.clone()),
            Some(v) => Err(Error::invalid(format!(
                "xi has {} entries, expected {}",
                v.len(),
                3 + k
            ))),
        }
    }

    pub fn temperature_for(&self, goals: &GoalSet) -> f64 {
        self.temperature.unwrap_or_else(|| mean_pairwise_distance(goals))
    }
}

fn mean_pairwise_distance(goals: &GoalSet) -> f64 {
    let k = goals.len();
    if k < 2 {
        return 1.0;
    }
    let mut s = 0.0;
    let mut c = 0;
    for a in 0..k {
        for b in a + 1..k {
            s += dist(goals.pos(a), goals.pos(b));
            c += 1;
        }
    }
    let m = s / c as f64;
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

/// Dispersion coefficient `mean / max(var, EPS_VAR)` over a trailing window of M1.
pub fn dispersion(m1: &[f64], window: usize) -> Result<Vec<f64>> {
    if window < 3 || window % 2 == 0 {
        return Err(Error::invalid(format!("window must be odd and at least 3, got {window}")));
    }
    Ok(stats::trailing(m1, window, |w| {
        stats::mean(w) / stats::variance(w).max(EPS_VAR)
    }))
}

/// Settled score from a trailing median and MAD of `r`; the move score is its complement.
pub fn settled_score(r: &[f64], window: usize) -> (Vec<f64>, Vec<f64>) {
    let mut settled = Vec::with_capacity(r.len());
    for i in 0..r.len() {
        let w = &r[(i + 1).saturating_sub(window)..=i];
        let med = stats::median(w);
        let mad = stats::mad(w).max(EPS_MAD);
        let z = (med - r[i]) / (std::f64::consts::SQRT_2 * mad);
        let s = 0.5 * (1.0 + stats::erf(z));
        settled.push(if s.is_nan() { 0.5 } else { s.clamp(0.0, 1.0) });
    }
    let moving = settled.iter().map(|s| 1.0 - s).collect();
    (settled, moving)
}

/// Per-step motion direction: sign of the trailing mean of M1 with a deadband.
pub fn motion_direction(m1: &[f64], window: usize, eps_v: f64) -> Vec<f64> {
    stats::trailing(m1, window, stats::mean)
        .into_iter()
        .map(|m| if m.abs() < eps_v { 0.0 } else { m.signum() })
        .collect()
}

/// Per-step jump statistics `(lambda, sigma_beta^2)` for one dimension.
///
/// Each increment is compared to the local median increment, and the
/// Gaussian share of its fourth and sixth powers (from a robust local scale)
/// is removed before inverting the jump moments. Steps without excess
/// kurtosis get zero for both statistics.
pub fn jump_features(inc: &[f64], dt: f64, window: usize) -> (Vec<f64>, Vec<f64>) {
    let center = stats::centered(inc, window, stats::median);
    let resid: Vec<f64> = inc.iter().zip(&center).map(|(d, c)| d - c).collect();
    let sq: Vec<f64> = resid.iter().map(|r| r * r).collect();
    let scale2 = stats::centered(&sq, window, |w| stats::median(w) / CHI2_1_MEDIAN);
    let mut lambda = Vec::with_capacity(inc.len());
    let mut sb2 = Vec::with_capacity(inc.len());
    for (r, s2) in resid.iter().zip(&scale2) {
        let m4 = (r.powi(4) - 3.0 * s2 * s2).max(0.0) / dt;
        let m6 = (r.powi(6) - 15.0 * s2 * s2 * s2).max(0.0) / dt;
        if m4 <= EPS_M4 || m6 <= 0.0 {
            lambda.push(0.0);
            sb2.push(0.0);
            continue;
        }
        let b = m6 / (5.0 * m4);
        lambda.push(m4 / (3.0 * b * b));
        sb2.push(b);
    }
    (lambda, sb2)
}

/// ECOD over the per-dimension jump features; `true` marks a jump step.
pub fn ecod_jump_outliers(features: &[(Vec<f64>, Vec<f64>)], contamination: f64) -> Result<Vec<bool>> {
    let cols: Vec<Vec<f64>> = features
        .iter()
        .flat_map(|(l, s)| [l.clone(), s.clone()])
        .collect();
    Ok(ecod::ecod(&cols, contamination)?.flags)
}

/// Per-increment scores for a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GoalScores {
    /// Dispersion coefficient per dimension, `r[d][i]`.
    pub r: Vec<Vec<f64>>,
    pub settled: Vec<f64>,
    pub moving: Vec<f64>,
    pub jump: Vec<bool>,
    /// Motion direction per dimension, `v_dir[d][i]`.
    pub v_dir: Vec<Vec<f64>>,
    /// Jump size scale per dimension from the jump features, m.
    pub sigma_beta: Vec<Vec<f64>>,
}

impl GoalScores {
    pub fn len(&self) -> usize {
        self.settled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.settled.is_empty()
    }

    pub fn jumps_detected(&self) -> usize {
        self.jump.iter().filter(|j| **j).count()
    }

    /// Scores of one increment.
    pub fn at(&self, i: usize) -> StepScores {
        StepScores {
            settled: self.settled[i],
            moving: self.moving[i],
            jump: if self.jump[i] { 1.0 } else { 0.0 },
            v_dir: self.v_dir.iter().map(|v| v[i]).collect(),
            sigma_beta: self.sigma_beta.iter().map(|v| v[i]).collect(),
        }
    }
}

/// Scores for a single step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepScores {
    pub settled: f64,
    pub moving: f64,
    pub jump: f64,
    pub v_dir: Vec<f64>,
    pub sigma_beta: Vec<f64>,
}

/// Computes all scores. The settled score is averaged over dimensions and a
/// step counts as a jump when ECOD flags the joint feature vector.
pub fn compute_scores(traj: &Trajectory, cfg: &GoalConfig) -> Result<GoalScores> {
    cfg.validate()?;
    let n_inc = traj.len().saturating_sub(1);
    if n_inc < ecod::MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            need: ecod::MIN_SAMPLES + 1,
            got: traj.len(),
        });
    }
    let dims = traj.dims();
    let mut r = Vec::with_capacity(dims);
    let mut v_dir = Vec::with_capacity(dims);
    let mut settled = vec![0.0; n_inc];
    let mut feats = Vec::with_capacity(dims);
    let mut sigma_beta = Vec::with_capacity(dims);
    for d in 0..dims {
        let inc = increments(traj, d)?;
        let m1: Vec<f64> = inc.values.iter().map(|v| v / inc.dt).collect();
        let rd = dispersion(&m1, cfg.window)?;
        let (sd, _) = settled_score(&rd, cfg.settle_window);
        for (acc, s) in settled.iter_mut().zip(&sd) {
            *acc += s / dims as f64;
        }
        v_dir.push(motion_direction(&m1, cfg.window, cfg.eps_v));
        let (lam, sb2) = jump_features(&inc.values, inc.dt, cfg.window);
        sigma_beta.push(sb2.iter().map(|v| v.sqrt()).collect());
        feats.push((lam, sb2));
        r.push(rd);
    }
    let jump = ecod_jump_outliers(&feats, cfg.contamination)?;
    let moving = settled.iter().map(|s| 1.0 - s).collect();
    Ok(GoalScores {
        r,
        settled,
        moving,
        jump,
        v_dir,
        sigma_beta,
    })
}

/// Softmax proximity weights `softmax(-|g - g_k| / T)`.
pub fn proximity_weights(g: &[f64], goals: &GoalSet, temperature: f64) -> Vec<f64> {
    let logits: Vec<f64> = (0..goals.len())
        .map(|k| -dist(g, goals.pos(k)) / temperature)
        .collect();
    let z = stats::log_sum_exp(&logits);
    logits.iter().map(|l| (l - z).exp()).collect()
}

/// Goal velocity terms for one step: `[settled, move, jump, goal_0, ...]`, each
/// a vector over dimensions, so that `g_dot = sum_j xi_j * terms[j]`.
pub fn goal_terms(g: &[f64], x: &[f64], s: &StepScores, goals: &GoalSet, temperature: f64) -> Vec<Vec<f64>> {
    let dims = g.len();
    let mut terms = Vec::with_capacity(3 + goals.len());
    terms.push((0..dims).map(|d| s.settled * (x[d] - g[d])).collect());
    terms.push((0..dims).map(|d| s.moving * s.v_dir[d]).collect());
    terms.push((0..dims).map(|d| s.jump * s.sigma_beta[d] * s.v_dir[d]).collect());
    if !goals.is_empty() {
        let w = proximity_weights(g, goals, temperature);
        for (k, wk) in w.iter().enumerate() {
            let gk = goals.pos(k);
            terms.push((0..dims).map(|d| s.moving * wk * (gk[d] - g[d])).collect());
        }
    }
    terms
}

/// One Euler step of the goal dynamics. Returns `(g_dot, g_next)`.
pub fn goal_dynamics_step(
    g: &[f64],
    x: &[f64],
    s: &StepScores,
    goals: &GoalSet,
    xi: &[f64],
    temperature: f64,
    dt: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if xi.len() != 3 + goals.len() {
        return Err(Error::invalid(format!(
            "xi has {} entries, expected {}",
            xi.len(),
            3 + goals.len()
        )));
    }
    let terms = goal_terms(g, x, s, goals, temperature);
    let gdot: Vec<f64> = (0..g.len())
        .map(|d| terms.iter().zip(xi).map(|(t, w)| w * t[d]).sum())
        .collect();
    let next = g.iter().zip(&gdot).map(|(gi, v)| gi + v * dt).collect();
    Ok((gdot, next))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwitchEvent {
    /// Sample index at which the new goal takes effect.
    pub step: usize,
    pub from: Vec<f64>,
    pub to: Vec<f64>,
}

/// Inferred goal at every sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GoalTrace {
    pub mode: GoalMode,
    pub dt: f64,
    pub times: Vec<f64>,
    /// `g[i]` is the goal in effect at sample `i`.
    pub g: Vec<Vec<f64>>,
    /// Index of the goal (NN and det) or of the nearest known goal (disc).
    pub labels: Vec<Option<usize>>,
    pub switches: Vec<SwitchEvent>,
    pub scores: GoalScores,
}

impl GoalTrace {
    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    pub fn switch_count(&self) -> usize {
        self.switches.len()
    }

    pub fn jumps_detected(&self) -> usize {
        self.scores.jumps_detected()
    }

    /// Goal coordinate `d` at every sample.
    pub fn coord(&self, d: usize) -> Vec<f64> {
        self.g.iter().map(|g| g[d]).collect()
    }

    /// Writes `t,g_x[,g_y,g_z],S_settled,S_move,S_jump,switch`. Row `i` holds the
    /// scores of increment `i` (the last row repeats the final increment).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let dims = self.g.first().map_or(0, Vec::len);
        let names = crate::trajectory::axis_names(dims);
        let gcols: Vec<String> = names.iter().map(|a| format!("g_{a}")).collect();
        writeln!(w, "t,{},S_settled,S_move,S_jump,switch", gcols.join(","))?;
        let mut switch_at = vec![false; self.len()];
        for e in &self.switches {
            switch_at[e.step] = true;
        }
        for i in 0..self.len() {
            let j = i.min(self.scores.len() - 1);
            let g: Vec<String> = self.g[i].iter().map(|v| v.to_string()).collect();
            writeln!(
                w,
                "{},{},{},{},{},{}",
                self.times[i],
                g.join(","),
                self.scores.settled[j],
                self.scores.moving[j],
                u8::from(self.scores.jump[j]),
                u8::from(switch_at[i])
            )?;
        }
        Ok(())
    }
}

/// Integrates the goal dynamics from `g[0] = x[0]`.
pub fn integrate_goal(
    traj: &Trajectory,
    scores: &GoalScores,
    goals: &GoalSet,
    cfg: &GoalConfig,
) -> Result<Vec<Vec<f64>>> {
    let xi = cfg.xi_for(goals.len())?;
    let temp = cfg.temperature_for(goals);
    let mut g = vec![traj.point(0)];
    for i in 0..scores.len() {
        let (_, next) = goal_dynamics_step(
            &g[i],
            &traj.point(i + 1),
            &scores.at(i),
            goals,
            &xi,
            temp,
            traj.dt(),
        )?;
        g.push(next);
    }
    Ok(g)
}

fn label_switches(labels: &[Option<usize>], g: &[Vec<f64>]) -> Vec<SwitchEvent> {
    (1..labels.len())
        .filter(|&i| labels[i] != labels[i - 1])
        .map(|i| SwitchEvent {
            step: i,
            from: g[i - 1].clone(),
            to: g[i].clone(),
        })
        .collect()
}

/// Goal trace under the given strategy.
pub fn infer_goal_trace(traj: &Trajectory, goals: &GoalSet, mode: GoalMode, cfg: &GoalConfig) -> Result<GoalTrace> {
    let scores = compute_scores(traj, cfg)?;
    infer_goal_trace_with(traj, goals, mode, cfg, scores)
}

/// As [`infer_goal_trace`] with precomputed scores.
pub fn infer_goal_trace_with(
    traj: &Trajectory,
    goals: &GoalSet,
    mode: GoalMode,
    cfg: &GoalConfig,
    scores: GoalScores,
) -> Result<GoalTrace> {
    if mode != GoalMode::Disc && goals.is_empty() {
        return Err(Error::invalid(format!("{mode} mode needs at least one known goal")));
    }
    if let Some(d) = goals.dims() {
        if d != traj.dims() {
            return Err(Error::invalid(format!(
                "goals have {d} dimensions, trajectory has {}",
                traj.dims()
            )));
        }
    }
    let n = traj.len();
    let (g, labels, switches) = match mode {
        GoalMode::Nn => {
            let labels: Vec<Option<usize>> = (0..n).map(|i| goals.nearest(&traj.point(i))).collect();
            let g: Vec<Vec<f64>> = labels.iter().map(|l| goals.pos(l.unwrap()).to_vec()).collect();
            let sw = label_switches(&labels, &g);
            (g, labels, sw)
        }
        GoalMode::Det => {
            let free = integrate_goal(traj, &scores, goals, cfg)?;
            let labels: Vec<Option<usize>> = free.iter().map(|g| goals.nearest(g)).collect();
            let g: Vec<Vec<f64>> = labels.iter().map(|l| goals.pos(l.unwrap()).to_vec()).collect();
            let sw = label_switches(&labels, &g);
            (g, labels, sw)
        }
        GoalMode::Disc => {
            let g = integrate_goal(traj, &scores, goals, cfg)?;
            let labels = g.iter().map(|p| goals.nearest(p)).collect();
            let sw = (1..n)
                .filter(|&i| dist(&g[i], &g[i - 1]) > cfg.delta_switch)
                .map(|i| SwitchEvent {
                    step: i,
                    from: g[i - 1].clone(),
                    to: g[i].clone(),
                })
                .collect();
            (g, labels, sw)
        }
    };
    Ok(GoalTrace {
        mode,
        dt: traj.dt(),
        times: traj.times().to_vec(),
        g,
        labels,
        switches,
        scores,
    })
}

/// Column names of the goal-dynamics library.
pub fn goal_term_names(k: usize) -> Vec<String> {
    let mut v = vec!["settled".to_string(), "move".into(), "jump".into()];
    v.extend((0..k).map(|j| format!("goal{j}")));
    v
}

/// Goal-dynamics design and finite-difference target, one row per
/// (increment, dimension).
pub fn goal_design(
    traj: &Trajectory,
    trace: &GoalTrace,
    goals: &GoalSet,
    cfg: &GoalConfig,
) -> Result<(Design, Vec<f64>)> {
    let n = trace.len();
    let dims = traj.dims();
    let temp = cfg.temperature_for(goals);
    let p = 3 + goals.len();
    let rows = (n - 1) * dims;
    let mut m = nalgebra::DMatrix::zeros(rows, p);
    let mut y = Vec::with_capacity(rows);
    for i in 0..n - 1 {
        let terms = goal_terms(&trace.g[i], &traj.point(i + 1), &trace.scores.at(i), goals, temp);
        for d in 0..dims {
            let row = i * dims + d;
            for (j, t) in terms.iter().enumerate() {
                m[(row, j)] = t[d];
            }
            y.push((trace.g[i + 1][d] - trace.g[i][d]) / trace.dt);
        }
    }
    Ok((
        Design {
            names: goal_term_names(goals.len()),
            matrix: m,
        },
        y,
    ))
}

/// Fits the goal-dynamics weights to a goal trace.
pub fn sindy_goal_fit(
    traj: &Trajectory,
    trace: &GoalTrace,
    goals: &GoalSet,
    cfg: &GoalConfig,
    eps: f64,
) -> Result<SindyModel> {
    let need = 2 * (3 + goals.len());
    if trace.len() < need {
        return Err(Error::TooFewSamples {
            need,
            got: trace.len(),
        });
    }
    let (design, y) = goal_design(traj, trace, goals, cfg)?;
    ssr_fit_pruned(&design, &y, "goal", eps)
}

/// One-step goal predictions `g[i] + dt * Theta_i xi` for every increment.
pub fn goal_one_step(
    model: &SindyModel,
    traj: &Trajectory,
    trace: &GoalTrace,
    goals: &GoalSet,
    cfg: &GoalConfig,
) -> Result<Vec<Vec<f64>>> {
    let (design, _) = goal_design(traj, trace, goals, cfg)?;
    let dims = traj.dims();
    Ok((0..trace.len() - 1)
        .map(|i| {
            (0..dims)
                .map(|d| {
                    let row: Vec<f64> = design.matrix.row(i * dims + d).iter().copied().collect();
                    trace.g[i][d] + trace.dt * model.predict_row(&row)
                })
                .collect()
        })
        .collect())
}
