//! Poisson-normal transition density, the NLL baseline fit, EM goal posteriors
//! and MAP next-state prediction.
//!
//! The transition density from `x_s` to `x_t` over a horizon `tau` is
//!
//! ```text
//! P(x_t | x_s) = sum_k Pois(k; lambda tau) N(x_t; x_s + mu_g tau + k mu_beta, sigma_g^2 tau + k sigma_beta^2)
//! ```
//!
//! evaluated in log space with log-sum-exp so large `k` never overflows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::stats;
use crate::trajectory::Trajectory;

/// Upper bound on `lambda * tau` when fitting; jumps are rare events, and above this
/// a comb of tiny jumps becomes indistinguishable from diffusion.
pub const MAX_JUMPS_PER_STEP: f64 = 1.0;
/// Lower bound on the scale parameters when fitting.
pub const SCALE_FLOOR: f64 = 1e-6;
const LN_2PI: f64 = 1.837_877_066_409_345_3;
// Poisson terms this far (in log weight) below the modal term are dropped.
const PRUNE_LOG_WEIGHT: f64 = 60.0;

/// Jump-diffusion parameters for one goal along one dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpDiffusionParams {
    /// Drift, m/s.
    pub mu_g: f64,
    /// Diffusion, m/sqrt(s).
    pub sigma_g: f64,
    /// Jump rate, 1/s.
    pub lambda: f64,
    /// Mean jump size, m.
    pub mu_beta: f64,
    /// Jump size standard deviation, m.
    pub sigma_beta: f64,
}

impl JumpDiffusionParams {
    pub fn gaussian(mu_g: f64, sigma_g: f64) -> Self {
        Self {
            mu_g,
            sigma_g,
            lambda: 0.0,
            mu_beta: 0.0,
            sigma_beta: 0.0,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.sigma_g <= 0.0 && (self.lambda * self.sigma_beta <= 0.0)
    }

    /// Mean displacement over `tau`.
    pub fn mean_shift(&self, tau: f64) -> f64 {
        self.mu_g * tau + self.lambda * tau * self.mu_beta
    }

    /// Variance of the displacement over `tau`.
    pub fn variance(&self, tau: f64) -> f64 {
        self.sigma_g * self.sigma_g * tau
            + self.lambda * tau * (self.mu_beta * self.mu_beta + self.sigma_beta * self.sigma_beta)
    }

    /// Half-width that the state grid must cover around `x_s` (six-sigma envelope).
    pub fn envelope(&self, tau: f64) -> f64 {
        let lt = self.lambda * tau;
        let jump = if lt > 0.0 { 6.0 * self.sigma_beta * lt.max(1.0) } else { 0.0 };
        (6.0 * self.sigma_g * tau.sqrt()).max(jump)
            + self.mu_g.abs() * tau
            + lt * self.mu_beta.abs()
    }
}

/// Number of Poisson terms kept so the neglected tail mass is below 1e-12.
pub fn series_terms(lambda_tau: f64) -> usize {
    (lambda_tau + 10.0 * (lambda_tau + 1.0).sqrt() + 10.0).ceil() as usize
}

/// Precomputed Poisson-normal mixture components for fixed parameters and horizon.
#[derive(Debug, Clone)]
pub struct TransitionDensity {
    // (log weight - 0.5 log(2 pi var), mean shift, 1 / (2 var))
    terms: Vec<(f64, f64, f64)>,
}

impl TransitionDensity {
    pub fn new(p: &JumpDiffusionParams, tau: f64) -> Result<Self> {
        Self::with_terms(p, tau, None)
    }

    /// Same as [`TransitionDensity::new`] with an explicit truncation point.
    pub fn with_terms(p: &JumpDiffusionParams, tau: f64, kmax: Option<usize>) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::invalid("tau must be positive"));
        }
        if p.is_degenerate() {
            return Err(Error::DegenerateParams(
                "diffusion and jump variances are all zero".into(),
            ));
        }
        let lt = p.lambda * tau;
        let kmax = if lt > 0.0 {
            kmax.unwrap_or_else(|| series_terms(lt))
        } else {
            0
        };
        let sg2 = p.sigma_g * p.sigma_g * tau;
        let sb2 = p.sigma_beta * p.sigma_beta;
        let log_lt = lt.ln();
        let mode = lt.floor();
        let log_mode = if lt > 0.0 {
            mode * log_lt - lt - stats::ln_gamma(mode + 1.0)
        } else {
            0.0
        };
        let mut terms = Vec::with_capacity(kmax + 1);
        for k in 0..=kmax {
            let kf = k as f64;
            let var = sg2 + kf * sb2;
            if !(var > 0.0) {
                // a zero-variance component is an atom, not part of the density
                continue;
            }
            let log_pois = if k == 0 {
                -lt
            } else {
                kf * log_lt - lt - stats::ln_gamma(kf + 1.0)
            };
            if log_pois < log_mode - PRUNE_LOG_WEIGHT {
                continue;
            }
            terms.push((
                log_pois - 0.5 * (LN_2PI + var.ln()),
                p.mu_g * tau + kf * p.mu_beta,
                0.5 / var,
            ));
        }
        Ok(Self { terms })
    }

    /// Log density of a displacement `x_t - x_s`.
    pub fn log_density(&self, dx: f64) -> f64 {
        let term = |&(c, m, h): &(f64, f64, f64)| {
            let d = dx - m;
            c - d * d * h
        };
        match self.terms.len() {
            0 => f64::NEG_INFINITY,
            1 => term(&self.terms[0]),
            n if n <= 64 => {
                let mut buf = [0.0; 64];
                let mut max = f64::NEG_INFINITY;
                for (b, t) in buf.iter_mut().zip(&self.terms) {
                    *b = term(t);
                    max = max.max(*b);
                }
                max + buf[..n].iter().map(|v| (v - max).exp()).sum::<f64>().ln()
            }
            _ => {
                let v: Vec<f64> = self.terms.iter().map(term).collect();
                stats::log_sum_exp(&v)
            }
        }
    }
}

/// Log transition density of moving from `x_s` to `x_t` in time `tau`.
pub fn transition_logpdf(p: &JumpDiffusionParams, x_s: f64, x_t: f64, tau: f64) -> Result<f64> {
    Ok(TransitionDensity::new(p, tau)?.log_density(x_t - x_s))
}

/// Fitted per-goal, per-dimension NLL baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NllModel {
    pub dt: f64,
    /// `params[goal][dim]`.
    pub params: Vec<Vec<JumpDiffusionParams>>,
    /// `fits[goal][dim]`.
    pub fits: Vec<Vec<FitInfo>>,
    pub goal_labels: Vec<String>,
}

/// Optimizer metadata for one (goal, dimension) fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitInfo {
    /// Final negative log-likelihood.
    pub objective: f64,
    pub transitions: usize,
    pub starts: usize,
    pub iterations: usize,
    /// A scale parameter ended at its floor.
    pub floor_hit: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct NllOptions {
    pub starts: usize,
    pub min_transitions: usize,
    pub nm: NelderMeadOptions,
}

impl Default for NllOptions {
    fn default() -> Self {
        Self {
            starts: 8,
            min_transitions: 10,
            nm: NelderMeadOptions {
                max_iter: 1500,
                f_tol: 1e-8,
                x_tol: 1e-6,
            },
        }
    }
}

// Optimizer coordinates: (mu_g, ln sigma_g, ln lambda, mu_beta, ln sigma_beta).
fn unpack(theta: &[f64], tau: f64) -> JumpDiffusionParams {
    JumpDiffusionParams {
        mu_g: theta[0],
        sigma_g: theta[1].exp().max(SCALE_FLOOR),
        lambda: theta[2].exp().min(MAX_JUMPS_PER_STEP / tau),
        mu_beta: theta[3],
        sigma_beta: theta[4].exp().max(SCALE_FLOOR),
    }
}

fn pack(p: &JumpDiffusionParams) -> [f64; 5] {
    [
        p.mu_g,
        p.sigma_g.max(SCALE_FLOOR).ln(),
        p.lambda.max(1e-12).ln(),
        p.mu_beta,
        p.sigma_beta.max(SCALE_FLOOR).ln(),
    ]
}

/// Negative log-likelihood of a set of displacements under `p`.
pub fn nll_objective(p: &JumpDiffusionParams, displacements: &[f64], tau: f64) -> f64 {
    match TransitionDensity::new(p, tau) {
        Ok(d) => -displacements.iter().map(|&dx| d.log_density(dx)).sum::<f64>(),
        Err(_) => f64::INFINITY,
    }
}

/// Deterministic, scattered starting points around the Gaussian MLE.
fn start_points(displacements: &[f64], tau: f64, count: usize) -> Vec<JumpDiffusionParams> {
    let mu = stats::mean(displacements) / tau;
    let sd_step = stats::variance(displacements).sqrt().max(SCALE_FLOOR);
    let sigma = (sd_step / tau.sqrt()).max(SCALE_FLOOR);
    let lambdas = [0.5, 0.05, 2.0, 5.0, 0.2, 1.0, 0.01, 10.0];
    let sg_mult = [0.9, 1.0, 0.7, 0.5, 0.8, 0.6, 1.0, 0.4];
    let sb_mult = [2.0, 1.0, 3.0, 1.5, 4.0, 2.5, 6.0, 1.2];
    let mb_mult = [0.0, 0.0, 0.5, -0.5, 0.0, 1.0, 0.0, -1.0];
    (0..count)
        .map(|j| {
            let i = j % lambdas.len();
            let scale = 1.0 + (j / lambdas.len()) as f64;
            JumpDiffusionParams {
                mu_g: mu,
                sigma_g: sigma * sg_mult[i],
                lambda: lambdas[i] * scale,
                mu_beta: mb_mult[i] * sd_step,
                sigma_beta: sb_mult[i] * sd_step,
            }
        })
        .collect()
}

/// Closed-form Gaussian MLE of the displacements (no jumps).
pub fn gaussian_mle(displacements: &[f64], tau: f64) -> JumpDiffusionParams {
    let mu = stats::mean(displacements) / tau;
    let sigma = (stats::variance(displacements) / tau).sqrt().max(SCALE_FLOOR);
    JumpDiffusionParams::gaussian(mu, sigma)
}

const SCREEN_SAMPLES: usize = 2000;

fn sample_len(n: usize) -> usize {
    n.div_ceil(n.div_ceil(SCREEN_SAMPLES).max(1)).max(1)
}

fn simplex_step(p: &JumpDiffusionParams) -> [f64; 5] {
    [
        0.5 * p.sigma_g.max(1e-3),
        0.3,
        0.7,
        0.5 * p.sigma_beta.max(1e-3),
        0.3,
    ]
}

/// Fits one parameter set by minimizing the NLL over `displacements` (each over `tau`).
///
/// Every start is screened with a short simplex run and the best is polished to
/// convergence. With `warm` set, the previous solution is the only start. The jump
/// component is kept only when it improves the NLL over the Gaussian MLE by more
/// than `1.5 ln n` (the BIC price of its three extra parameters).
pub fn fit_params(
    displacements: &[f64],
    tau: f64,
    opts: &NllOptions,
    warm: Option<&JumpDiffusionParams>,
) -> Result<(JumpDiffusionParams, FitInfo)> {
    let n = displacements.len();
    let starts = match warm {
        Some(w) => vec![*w],
        None => start_points(displacements, tau, opts.starts.max(1)),
    };
    let objective = |th: &[f64]| nll_objective(&unpack(th, tau), displacements, tau);
    // flat directions (ln lambda -> -inf under pure diffusion) never meet an x
    // tolerance, so the polish stops on objective spread and restarts instead
    let polish = NelderMeadOptions {
        f_tol: opts.nm.f_tol * n.max(1) as f64,
        x_tol: f64::INFINITY,
        ..opts.nm
    };
    let screen = NelderMeadOptions {
        max_iter: polish.max_iter.min(150),
        f_tol: opts.nm.f_tol * sample_len(n) as f64 * 100.0,
        x_tol: opts.nm.x_tol * 100.0,
    };
    // screening runs on an evenly strided subsample
    let stride = n.div_ceil(SCREEN_SAMPLES).max(1);
    let sample: Vec<f64> = displacements.iter().step_by(stride).copied().collect();
    let screen_obj = |th: &[f64]| nll_objective(&unpack(th, tau), &sample, tau);
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut iterations = 0;
    for s in &starts {
        let x0 = pack(s);
        let m = nelder_mead(screen_obj, &x0, &simplex_step(s), screen);
        iterations += m.iterations;
        if m.f.is_finite() && best.as_ref().is_none_or(|(_, bf)| m.f < *bf) {
            best = Some((m.x, m.f));
        }
    }
    let (mut x, _) =
        best.ok_or_else(|| Error::Optimizer("objective non-finite at every start".into()))?;
    let mut f = objective(&x);
    if !f.is_finite() {
        return Err(Error::Optimizer("objective non-finite at the screened optimum".into()));
    }
    // polish, restarting the simplex until it stops improving
    for _ in 0..4 {
        let step = simplex_step(&unpack(&x, tau)).map(|v| 0.2 * v);
        let m = nelder_mead(objective, &x, &step, polish);
        iterations += m.iterations;
        let gain = f - m.f;
        if m.f < f {
            x = m.x;
            f = m.f;
        }
        if gain <= polish.f_tol {
            break;
        }
    }
    let mut p = unpack(&x, tau);

    let gauss = gaussian_mle(displacements, tau);
    let f_gauss = nll_objective(&gauss, displacements, tau);
    if f_gauss.is_finite() && f_gauss <= f + 1.5 * (n.max(2) as f64).ln() {
        p = gauss;
        f = f_gauss;
    }
    let at_floor = |v: f64| v <= SCALE_FLOOR * (1.0 + 1e-9);
    let floor_hit = at_floor(p.sigma_g) || (p.lambda > 0.0 && at_floor(p.sigma_beta));
    Ok((
        p,
        FitInfo {
            objective: f,
            transitions: n,
            starts: starts.len(),
            iterations,
            floor_hit,
        },
    ))
}

/// Fits per-goal parameters for every dimension.
///
/// `labels[i]` is the goal index in effect for the transition from sample `i` to
/// `i + 1` (so it needs at least `len - 1` entries).
pub fn nll_fit(
    traj: &Trajectory,
    labels: &[usize],
    n_goals: usize,
    opts: &NllOptions,
    warm: Option<&NllModel>,
) -> Result<NllModel> {
    let n_trans = traj.len() - 1;
    if labels.len() < n_trans {
        return Err(Error::invalid(format!(
            "{} labels for {} transitions",
            labels.len(),
            n_trans
        )));
    }
    let dt = traj.dt();
    let mut params = Vec::with_capacity(n_goals);
    let mut fits = Vec::with_capacity(n_goals);
    for g in 0..n_goals {
        let idx: Vec<usize> = (0..n_trans).filter(|&i| labels[i] == g).collect();
        if idx.len() < opts.min_transitions {
            return Err(Error::InsufficientData {
                goal: g,
                transitions: idx.len(),
                need: opts.min_transitions,
            });
        }
        let mut gp = Vec::with_capacity(traj.dims());
        let mut gf = Vec::with_capacity(traj.dims());
        for d in 0..traj.dims() {
            let x = traj.coord(d);
            let disp: Vec<f64> = idx.iter().map(|&i| x[i + 1] - x[i]).collect();
            let w = warm.and_then(|m| m.params.get(g)).and_then(|v| v.get(d));
            let (p, info) = fit_params(&disp, dt, opts, w)?;
            gp.push(p);
            gf.push(info);
        }
        params.push(gp);
        fits.push(gf);
    }
    Ok(NllModel {
        dt,
        params,
        fits,
        goal_labels: (0..n_goals).map(|g| format!("g{g}")).collect(),
    })
}

/// Per-trajectory and per-transition goal probabilities from EM over the priors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GoalPosterior {
    /// Posterior over goals for the whole trajectory.
    pub probabilities: Vec<f64>,
    /// `responsibilities[i][g]` for each transition.
    pub responsibilities: Vec<Vec<f64>>,
    /// Converged mixing weights.
    pub prior: Vec<f64>,
    /// Data log-likelihood after each EM iteration.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub classification: usize,
}

/// EM over goal mixing weights for fixed per-goal parameters.
///
/// `log_lik[i][g]` is the log-likelihood of transition `i` under goal `g`.
pub fn goal_posterior_from_loglik(log_lik: &[Vec<f64>], prior: &[f64]) -> Result<GoalPosterior> {
    let k = prior.len();
    if k == 0 {
        return Err(Error::invalid("need at least one goal"));
    }
    if (prior.iter().sum::<f64>() - 1.0).abs() > 1e-9 || prior.iter().any(|&p| p < 0.0) {
        return Err(Error::invalid("prior must be a probability vector"));
    }
    for (i, row) in log_lik.iter().enumerate() {
        if row.len() != k {
            return Err(Error::invalid("log-likelihood row length differs from prior"));
        }
        if row.iter().all(|&v| v == f64::NEG_INFINITY) {
            return Err(Error::ZeroLikelihood { index: i });
        }
    }
    let mut pi = prior.to_vec();
    let mut resp = vec![vec![0.0; k]; log_lik.len()];
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut buf = vec![0.0; k];
    for _ in 0..100 {
        iterations += 1;
        let mut total = 0.0;
        for (i, row) in log_lik.iter().enumerate() {
            for g in 0..k {
                buf[g] = pi[g].ln() + row[g];
            }
            let z = stats::log_sum_exp(&buf);
            total += z;
            for g in 0..k {
                resp[i][g] = (buf[g] - z).exp();
            }
        }
        trace.push(total);
        let next: Vec<f64> = if log_lik.is_empty() {
            pi.clone()
        } else {
            (0..k)
                .map(|g| resp.iter().map(|r| r[g]).sum::<f64>() / log_lik.len() as f64)
                .collect()
        };
        let delta = next
            .iter()
            .zip(&pi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        pi = next;
        if delta < 1e-8 {
            break;
        }
    }
    let log_post: Vec<f64> = (0..k)
        .map(|g| pi[g].ln() + log_lik.iter().map(|r| r[g]).sum::<f64>())
        .collect();
    let z = stats::log_sum_exp(&log_post);
    let probabilities: Vec<f64> = log_post.iter().map(|v| (v - z).exp()).collect();
    let classification = probabilities
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(g, _)| g)
        .unwrap_or(0);
    Ok(GoalPosterior {
        probabilities,
        responsibilities: resp,
        prior: pi,
        log_likelihood: trace,
        iterations,
        classification,
    })
}

/// EM goal posterior for a trajectory under a fitted NLL model (dimensions multiply).
pub fn goal_posterior(model: &NllModel, traj: &Trajectory, prior: &[f64]) -> Result<GoalPosterior> {
    let dens: Vec<Vec<TransitionDensity>> = model
        .params
        .iter()
        .map(|gp| gp.iter().map(|p| TransitionDensity::new(p, traj.dt())).collect())
        .collect::<Result<_>>()?;
    let n = traj.len() - 1;
    let log_lik: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            dens.iter()
                .map(|gd| {
                    gd.iter()
                        .enumerate()
                        .map(|(d, den)| {
                            let x = traj.coord(d);
                            den.log_density(x[i + 1] - x[i])
                        })
                        .sum()
                })
                .collect()
        })
        .collect();
    goal_posterior_from_loglik(&log_lik, prior)
}

/// Uniform discretization of one state axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateGrid {
    pub min: f64,
    pub max: f64,
    pub cells: usize,
}

impl StateGrid {
    pub fn new(min: f64, max: f64, cells: usize) -> Result<Self> {
        if !(min < max) || cells < 2 {
            return Err(Error::invalid("grid needs min < max and at least 2 cells"));
        }
        Ok(Self { min, max, cells })
    }

    /// Grid spanning `x_s` plus or minus the parameter envelope.
    pub fn around(p: &JumpDiffusionParams, x_s: f64, tau: f64, cells: usize) -> Self {
        let half = p.envelope(tau).max(1e-9);
        Self {
            min: x_s - half,
            max: x_s + half,
            cells,
        }
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.cells - 1) as f64
    }

    pub fn value(&self, i: usize) -> f64 {
        self.min + i as f64 * self.step()
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.cells).map(|i| self.value(i)).collect()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.min && x <= self.max
    }

    /// Index of the cell nearest to `x` (clamped to the grid).
    pub fn nearest(&self, x: f64) -> usize {
        let i = ((x - self.min) / self.step()).round();
        i.clamp(0.0, (self.cells - 1) as f64) as usize
    }
}

/// Grid argmax of the transition density, ties broken toward the smallest move.
pub fn map_predict(p: &JumpDiffusionParams, x_s: f64, tau: f64, grid: &StateGrid) -> Result<f64> {
    let dens = TransitionDensity::new(p, tau)?;
    let mean = x_s + p.mean_shift(tau);
    let grid = if grid.contains(mean) {
        *grid
    } else {
        let auto = StateGrid::around(p, x_s, tau, grid.cells);
        let expanded = StateGrid {
            min: grid.min.min(auto.min),
            max: grid.max.max(auto.max),
            cells: grid.cells,
        };
        if !expanded.contains(mean) {
            return Err(Error::GridCoverage {
                what: format!("analytic mean {mean}"),
            });
        }
        expanded
    };
    Ok(grid_argmax(&grid, x_s, |x| dens.log_density(x - x_s)))
}

pub(crate) fn grid_argmax<F: Fn(f64) -> f64>(grid: &StateGrid, x_s: f64, f: F) -> f64 {
    let mut best = (f64::NEG_INFINITY, f64::INFINITY, grid.value(0));
    for i in 0..grid.cells {
        let x = grid.value(i);
        let v = f(x);
        let dist = (x - x_s).abs();
        if v > best.0 || (v == best.0 && dist < best.1) {
            best = (v, dist, x);
        }
    }
    best.2
}

/// Width of the central interval holding `mass` of the density's grid mass.
pub fn predictive_interval_width(
    p: &JumpDiffusionParams,
    x_s: f64,
    tau: f64,
    grid: &StateGrid,
    mass: f64,
) -> Result<f64> {
    let dens = TransitionDensity::new(p, tau)?;
    let xs = grid.values();
    let w: Vec<f64> = xs.iter().map(|&x| dens.log_density(x - x_s).exp()).collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::GridCoverage {
            what: "any density mass".into(),
        });
    }
    let lo_target = (1.0 - mass) / 2.0 * total;
    let hi_target = (1.0 + mass) / 2.0 * total;
    let mut acc = 0.0;
    let (mut lo, mut hi) = (xs[0], xs[xs.len() - 1]);
    let mut lo_set = false;
    for (x, wi) in xs.iter().zip(&w) {
        acc += wi;
        if !lo_set && acc >= lo_target {
            lo = *x;
            lo_set = true;
        }
        if acc >= hi_target {
            hi = *x;
            break;
        }
    }
    Ok(hi - lo + grid.step())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate, SimConfig};
    use crate::trajectory::GoalSet;
    use std::f64::consts::PI;

    fn gauss_logpdf(x: f64, m: f64, v: f64) -> f64 {
        -0.5 * (2.0 * PI * v).ln() - (x - m) * (x - m) / (2.0 * v)
    }

    #[test]
    fn gaussian_limit() {
        let p = JumpDiffusionParams::gaussian(0.3, 0.2);
        let tau = 0.5;
        let v = 0.04 * tau;
        let at_mean = transition_logpdf(&p, 1.0, 1.0 + 0.15, tau).unwrap();
        assert!((at_mean.exp() - 1.0 / (2.0 * PI * v).sqrt()).abs() < 1e-12);
        for x in [-1.0, 0.3, 1.7] {
            let a = transition_logpdf(&p, 1.0, x, tau).unwrap();
            assert!((a - gauss_logpdf(x, 1.15, v)).abs() < 1e-12);
        }
    }

    #[test]
    fn standard_normal_at_zero() {
        let p = JumpDiffusionParams::gaussian(0.0, 1.0);
        let v = transition_logpdf(&p, 0.0, 0.0, 1.0).unwrap();
        assert!((v + 0.5 * (2.0 * PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn degenerate_rejected() {
        let p = JumpDiffusionParams::gaussian(0.0, 0.0);
        assert!(matches!(transition_logpdf(&p, 0.0, 0.0, 1.0), Err(Error::DegenerateParams(_))));
        assert!(transition_logpdf(&JumpDiffusionParams::gaussian(0.0, 1.0), 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn jump_density_integrates_to_one() {
        let p = JumpDiffusionParams {
            mu_g: 0.0,
            sigma_g: 0.1,
            lambda: 2.0,
            mu_beta: 0.02,
            sigma_beta: 0.05,
        };
        let d = TransitionDensity::new(&p, 1.0).unwrap();
        let h = 1e-4;
        let n = (4.0 / h) as usize;
        let mut s = 0.0;
        for i in 0..=n {
            let x = -2.0 + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            s += w * d.log_density(x).exp();
        }
        assert!((s * h - 1.0).abs() < 1e-6, "{}", s * h);
    }

    #[test]
    fn truncation_is_stable() {
        for &lt in &[0.5, 2.0, 10.0] {
            let p = JumpDiffusionParams {
                mu_g: 0.1,
                sigma_g: 0.1,
                lambda: lt,
                mu_beta: 0.05,
                sigma_beta: 0.3,
            };
            let base = TransitionDensity::new(&p, 1.0).unwrap();
            let more = TransitionDensity::with_terms(&p, 1.0, Some(series_terms(lt) + 10)).unwrap();
            for x in [-1.0, 0.0, 0.4, 2.0] {
                assert!((base.log_density(x) - more.log_density(x)).abs() < 1e-9);
            }
        }
    }

    fn diffusion_run(seed: u64) -> Trajectory {
        let cfg = SimConfig::constant_1d(0.4, 0.1, 0.05, 20_000, seed);
        simulate(&cfg, &GoalSet::default()).unwrap().trajectory
    }

    #[test]
    fn pure_diffusion_fit_matches_gaussian_mle() {
        let traj = diffusion_run(12);
        let labels = vec![0; traj.len()];
        let m = nll_fit(&traj, &labels, 1, &NllOptions::default(), None).unwrap();
        let p = m.params[0][0];
        let inc: Vec<f64> = traj.coord(0).windows(2).map(|w| w[1] - w[0]).collect();
        let mu_hat = stats::mean(&inc) / 0.05;
        let sg_hat = (stats::variance(&inc) / 0.05).sqrt();
        assert!((p.mu_g / mu_hat - 1.0).abs() < 0.05, "{p:?} vs {mu_hat}");
        assert!((p.sigma_g / sg_hat - 1.0).abs() < 0.05, "{p:?} vs {sg_hat}");
        assert!(p.lambda * p.sigma_beta.powi(2) < 0.05 * p.sigma_g.powi(2));
    }

    #[test]
    fn jump_fit_beats_oracle_params() {
        let cfg = SimConfig::constant_1d(0.2, 0.1, 0.05, 5000, 21).with_jumps(1.0, 0.05, 0.02);
        let traj = simulate(&cfg, &GoalSet::default()).unwrap().trajectory;
        let labels = vec![0; traj.len()];
        let m = nll_fit(&traj, &labels, 1, &NllOptions::default(), None).unwrap();
        let inc: Vec<f64> = traj.coord(0).windows(2).map(|w| w[1] - w[0]).collect();
        let oracle = JumpDiffusionParams {
            mu_g: 0.2,
            sigma_g: 0.1,
            lambda: 1.0,
            mu_beta: 0.05,
            sigma_beta: 0.02,
        };
        let at_oracle = nll_objective(&oracle, &inc, 0.05);
        assert!(m.fits[0][0].objective <= at_oracle + 1e-6 * inc.len() as f64);
    }

    #[test]
    fn fit_never_worse_than_its_starts() {
        let traj = diffusion_run(3).prefix(500).unwrap();
        let inc: Vec<f64> = traj.coord(0).windows(2).map(|w| w[1] - w[0]).collect();
        let opts = NllOptions::default();
        let (_, info) = fit_params(&inc, 0.05, &opts, None).unwrap();
        for s in start_points(&inc, 0.05, opts.starts) {
            assert!(info.objective <= nll_objective(&unpack(&pack(&s), 0.05), &inc, 0.05));
        }
    }

    #[test]
    fn zero_increments_hit_floor() {
        let traj = Trajectory::from_uniform(0.0, 0.05, vec![vec![1.0; 40]]).unwrap();
        let labels = vec![0; 40];
        if let Ok(m) = nll_fit(&traj, &labels, 1, &NllOptions::default(), None) { assert!(m.fits[0][0].floor_hit) }
    }

    #[test]
    fn insufficient_transitions() {
        let traj = diffusion_run(1).prefix(30).unwrap();
        let mut labels = vec![0; 31];
        labels[3] = 1;
        assert!(matches!(
            nll_fit(&traj, &labels, 2, &NllOptions::default(), None),
            Err(Error::InsufficientData { goal: 1, .. })
        ));
    }

    #[test]
    fn posterior_single_goal_and_symmetry() {
        let ll = vec![vec![-1.0], vec![-3.0]];
        let p = goal_posterior_from_loglik(&ll, &[1.0]).unwrap();
        assert_eq!(p.probabilities, vec![1.0]);
        let ll2 = vec![vec![-1.0, -1.0], vec![-2.0, -2.0], vec![-0.5, -0.5]];
        let p2 = goal_posterior_from_loglik(&ll2, &[0.3, 0.7]).unwrap();
        assert!((p2.probabilities[0] - 0.3).abs() < 1e-12);
        assert!((p2.prior[1] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn posterior_reports_impossible_transition() {
        let ll = vec![vec![-1.0, -1.0], vec![f64::NEG_INFINITY, f64::NEG_INFINITY]];
        assert!(matches!(
            goal_posterior_from_loglik(&ll, &[0.5, 0.5]),
            Err(Error::ZeroLikelihood { index: 1 })
        ));
    }

    #[test]
    fn em_log_likelihood_is_monotone() {
        let ll: Vec<Vec<f64>> = (0..200)
            .map(|i| {
                let a = ((i * 7919) % 113) as f64 / 50.0;
                vec![-a, -(2.3 - a).abs(), -1.1]
            })
            .collect();
        let p = goal_posterior_from_loglik(&ll, &[0.2, 0.3, 0.5]).unwrap();
        for w in p.log_likelihood.windows(2) {
            assert!(w[1] >= w[0] - 1e-10);
        }
        assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn map_gaussian_mode_and_tie_break() {
        let p = JumpDiffusionParams::gaussian(0.5, 0.2);
        let grid = StateGrid::around(&p, 1.0, 1.0, 201);
        let x = map_predict(&p, 1.0, 1.0, &grid).unwrap();
        assert!((x - 1.5).abs() <= grid.step());
        let z = JumpDiffusionParams::gaussian(0.0, 0.2);
        let g2 = StateGrid::around(&z, 1.0, 1.0, 201);
        assert_eq!(map_predict(&z, 1.0, 1.0, &g2).unwrap(), 1.0);
    }

    #[test]
    fn map_expands_grid_once() {
        let p = JumpDiffusionParams::gaussian(5.0, 0.2);
        let narrow = StateGrid::new(-1.0, 1.0, 101).unwrap();
        let x = map_predict(&p, 0.0, 1.0, &narrow).unwrap();
        assert!((x - 5.0).abs() < 0.2);
    }

    #[test]
    fn map_bimodal_matches_fine_grid() {
        let p = JumpDiffusionParams {
            mu_g: 0.0,
            sigma_g: 0.05,
            lambda: 1.2,
            mu_beta: 0.6,
            sigma_beta: 0.05,
        };
        let coarse = StateGrid::around(&p, 0.0, 1.0, 401);
        let fine = StateGrid { cells: 4001, ..coarse };
        let d = TransitionDensity::new(&p, 1.0).unwrap();
        let brute = grid_argmax(&fine, 0.0, |x| d.log_density(x));
        let m = map_predict(&p, 0.0, 1.0, &coarse).unwrap();
        assert!((m - brute).abs() <= coarse.step());
    }

    #[test]
    fn map_refinement_moves_at_most_one_cell() {
        let p = JumpDiffusionParams {
            mu_g: 0.3,
            sigma_g: 0.1,
            lambda: 0.7,
            mu_beta: -0.2,
            sigma_beta: 0.1,
        };
        let g = StateGrid::around(&p, 0.2, 1.0, 101);
        let g2 = StateGrid { cells: 201, ..g };
        let a = map_predict(&p, 0.2, 1.0, &g).unwrap();
        let b = map_predict(&p, 0.2, 1.0, &g2).unwrap();
        assert!((a - b).abs() <= g.step() + 1e-12);
    }

    #[test]
    fn posterior_classifies_opposite_drifts() {
        let goals = GoalSet::default();
        let mut correct = 0;
        for seed in 0..20u64 {
            let up = simulate(&SimConfig::constant_1d(0.5, 0.2, 0.05, 400, seed), &goals).unwrap();
            let down = simulate(&SimConfig::constant_1d(-0.5, 0.2, 0.05, 400, seed + 1000), &goals).unwrap();
            let model = NllModel {
                dt: 0.05,
                params: vec![
                    vec![JumpDiffusionParams::gaussian(0.5, 0.2)],
                    vec![JumpDiffusionParams::gaussian(-0.5, 0.2)],
                ],
                fits: vec![],
                goal_labels: vec!["up".into(), "down".into()],
            };
            let a = goal_posterior(&model, &up.trajectory, &[0.5, 0.5]).unwrap();
            let b = goal_posterior(&model, &down.trajectory, &[0.5, 0.5]).unwrap();
            if a.classification == 0 && b.classification == 1 {
                correct += 1;
            }
        }
        assert!(correct >= 19);
    }
}
