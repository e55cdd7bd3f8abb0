//! Seedable jump-drift-diffusion simulator used as the ground-truth oracle.
//!
//! Each dimension evolves independently with an Euler-Maruyama step
//!
//! ```text
//! dX = mu dt + sigma_g sqrt(dt) Z + sum_{j=1..k} (mu_beta + sigma_beta Z_j),   k ~ Poisson(lambda dt)
//! ```
//!
//! where `mu` is either a constant velocity or a mean-reversion pull
//! `theta (g_active - X)` toward the currently scheduled goal.
//!
//! Random streams come from ChaCha8 (a counter-based generator) seeded with the
//! 64-bit config seed, so a given `(config, seed)` always yields the same bytes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{GoalSet, Trajectory};

/// Drift model for one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftSpec {
    /// Constant velocity in m/s.
    Constant { mu: f64 },
    /// Pull toward the active goal at rate `theta` (1/s).
    MeanReversion { theta: f64 },
}

/// Goal schedule entry: from `time` onward the active goal is `goal`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalSwitch {
    pub time: f64,
    pub goal: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Per-dimension drift; its length fixes the dimension count.
    pub drift: Vec<DriftSpec>,
    /// Diffusion magnitude, m/sqrt(s).
    pub sigma_g: f64,
    /// Jump rate, 1/s.
    pub lambda: f64,
    /// Mean jump size, m.
    pub mu_beta: f64,
    /// Jump size standard deviation, m.
    pub sigma_beta: f64,
    pub dt: f64,
    pub steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub schedule: Vec<GoalSwitch>,
    pub x0: Vec<f64>,
}

impl SimConfig {
    /// One-dimensional config with constant drift and no goals.
    pub fn constant_1d(mu: f64, sigma_g: f64, dt: f64, steps: usize, seed: u64) -> Self {
        Self {
            drift: vec![DriftSpec::Constant { mu }],
            sigma_g,
            lambda: 0.0,
            mu_beta: 0.0,
            sigma_beta: 0.0,
            dt,
            steps,
            seed,
            schedule: Vec::new(),
            x0: vec![0.0],
        }
    }

    pub fn with_jumps(mut self, lambda: f64, mu_beta: f64, sigma_beta: f64) -> Self {
        self.lambda = lambda;
        self.mu_beta = mu_beta;
        self.sigma_beta = sigma_beta;
        self
    }

    pub fn dims(&self) -> usize {
        self.drift.len()
    }

    pub fn validate(&self, goals: &GoalSet) -> Result<()> {
        if self.drift.is_empty() {
            return Err(Error::invalid("simulation needs at least one dimension"));
        }
        if self.x0.len() != self.drift.len() {
            return Err(Error::invalid("x0 length must match drift spec length"));
        }
        if !(self.sigma_g >= 0.0) || !(self.lambda >= 0.0) || !(self.sigma_beta >= 0.0) {
            return Err(Error::invalid("sigma_g, lambda and sigma_beta must be >= 0"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::invalid("dt must be positive"));
        }
        if self.steps < 1 {
            return Err(Error::invalid("steps must be >= 1"));
        }
        for w in self.schedule.windows(2) {
            if !(w[1].time > w[0].time) {
                return Err(Error::invalid("schedule times must be increasing"));
            }
        }
        for s in &self.schedule {
            if s.goal >= goals.len() {
                return Err(Error::invalid(format!(
                    "schedule references goal {} but only {} exist",
                    s.goal,
                    goals.len()
                )));
            }
        }
        let reverting = self
            .drift
            .iter()
            .any(|d| matches!(d, DriftSpec::MeanReversion { .. }));
        if reverting {
            if goals.is_empty() {
                return Err(Error::invalid("mean-reversion drift needs at least one goal"));
            }
            if goals.dims() != Some(self.dims()) {
                return Err(Error::invalid("goal dimension differs from simulation"));
            }
        }
        Ok(())
    }

    /// Active goal at time `t` (goal 0 before the first scheduled switch).
    pub fn active_goal(&self, t: f64) -> usize {
        self.schedule
            .iter()
            .take_while(|s| s.time <= t)
            .last()
            .map_or(0, |s| s.goal)
    }
}

/// One injected jump: it lands in the increment from sample `step` to `step + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub step: usize,
    pub dim: usize,
    pub size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub jumps: Vec<JumpEvent>,
    /// Active goal per sample.
    pub active_goal: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub trajectory: Trajectory,
    pub truth: Truth,
}

impl SimResult {
    /// Sorted, de-duplicated increment indices that received at least one jump.
    pub fn jump_steps(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.truth.jumps.iter().map(|j| j.step).collect();
        s.sort_unstable();
        s.dedup();
        s
    }
}

pub fn simulate(config: &SimConfig, goals: &GoalSet) -> Result<SimResult> {
    config.validate(goals)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dims = config.dims();
    let n = config.steps + 1;
    let dt = config.dt;
    let sqrt_dt = dt.sqrt();
    let poisson = if config.lambda > 0.0 {
        Some(Poisson::new(config.lambda * dt).map_err(|e| Error::invalid(e.to_string()))?)
    } else {
        None
    };

    let mut coords: Vec<Vec<f64>> = config.x0.iter().map(|&x| {
        let mut v = Vec::with_capacity(n);
        v.push(x);
        v
    }).collect();
    let mut active = Vec::with_capacity(n);
    let mut jumps = Vec::new();
    let mut x = config.x0.clone();

    for i in 0..config.steps {
        let t = i as f64 * dt;
        let g_idx = config.active_goal(t);
        active.push(g_idx);
        for d in 0..dims {
            let mu = match config.drift[d] {
                DriftSpec::Constant { mu } => mu,
                DriftSpec::MeanReversion { theta } => theta * (goals.pos(g_idx)[d] - x[d]),
            };
            let z: f64 = rng.sample(StandardNormal);
            let mut dx = mu * dt + config.sigma_g * sqrt_dt * z;
            if let Some(p) = &poisson {
                let kappa = p.sample(&mut rng) as u64;
                if kappa > 0 {
                    let mut size = 0.0;
                    for _ in 0..kappa {
                        let zj: f64 = rng.sample(StandardNormal);
                        size += config.mu_beta + config.sigma_beta * zj;
                    }
                    if size != 0.0 {
                        jumps.push(JumpEvent { step: i, dim: d, size });
                    }
                    dx += size;
                }
            }
            x[d] += dx;
            coords[d].push(x[d]);
        }
    }
    active.push(config.active_goal(config.steps as f64 * dt));

    let trajectory = Trajectory::from_uniform(0.0, dt, coords)?;
    Ok(SimResult {
        trajectory,
        truth: Truth {
            jumps,
            active_goal: active,
        },
    })
}

/// Results of a seeded batch, in seed order.
#[derive(Debug, Clone)]
pub struct Batch {
    pub results: Vec<SimResult>,
    /// Seeds that appeared more than once (their results are identical).
    pub duplicate_seeds: Vec<u64>,
}

pub fn simulate_batch(base: &SimConfig, goals: &GoalSet, seeds: &[u64]) -> Result<Batch> {
    if seeds.is_empty() {
        return Err(Error::invalid("batch needs at least one seed"));
    }
    let mut seen = std::collections::BTreeSet::new();
    let mut duplicate_seeds = Vec::new();
    for &s in seeds {
        if !seen.insert(s) && !duplicate_seeds.contains(&s) {
            duplicate_seeds.push(s);
        }
    }
    let results = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = SimConfig {
                seed,
                ..base.clone()
            };
            simulate(&cfg, goals)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Batch {
        results,
        duplicate_seeds,
    })
}
