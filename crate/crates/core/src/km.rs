//! Kramers-Moyal moment tracks and jump/diffusion parameter recovery.
//!
//! Raw per-step moments are `M1 = dx/dt` (signed) and `Mn = |dx|^n / dt` for
//! n in {2, 4, 6}. Jump parameters follow from the fourth and sixth moments via
//! `sigma_beta^2 = M6 / (5 M4)` and `lambda = M4 / (3 sigma_beta^4)`, and the
//! diffusion from `sigma_g^2 = M2 - lambda sigma_beta^2`.
//!
//! At finite `dt` the diffusion leaks into the even moments (`3 sigma_g^4 dt` in
//! M4 and so on). [`jump_params`] removes that leak by inverting the moment-rate
//! cumulants, which converge to the same coefficients as `dt -> 0`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::stats;
use crate::trajectory::{increments, IncrementSeries, Trajectory};

/// No-jump floor for the fourth moment, m^4/s.
pub const EPS_M4: f64 = 1e-12;
/// Default smoothing window in samples (about one second at 20 Hz).
pub const DEFAULT_WINDOW: usize = 21;

/// Per-timestep moment estimates for one dimension.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KMSeries {
    pub dim: usize,
    pub dt: f64,
    /// Window used to smooth the moment tracks (1 = raw).
    pub window: usize,
    /// Start time of each increment.
    pub times: Vec<f64>,
    pub m1: Vec<f64>,
    pub m2: Vec<f64>,
    pub m4: Vec<f64>,
    pub m6: Vec<f64>,
    pub sigma_beta_sq: Vec<f64>,
    pub lambda: Vec<f64>,
    pub sigma_g_sq: Vec<f64>,
}

impl KMSeries {
    pub fn len(&self) -> usize {
        self.m1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m1.is_empty()
    }

    /// Increment values recovered from the signed first moment.
    pub fn increments(&self) -> Vec<f64> {
        self.m1.iter().map(|v| v * self.dt).collect()
    }

    /// Medians of the derived (sigma_g^2, lambda, sigma_beta^2) tracks.
    pub fn median_params(&self) -> (f64, f64, f64) {
        (
            stats::median(&self.sigma_g_sq),
            stats::median(&self.lambda),
            stats::median(&self.sigma_beta_sq),
        )
    }

    /// Writes `t,M1,M2,M4,M6,sigma_beta_sq,lambda,sigma_g_sq`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,M1,M2,M4,M6,sigma_beta_sq,lambda,sigma_g_sq")?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                self.times[i],
                self.m1[i],
                self.m2[i],
                self.m4[i],
                self.m6[i],
                self.sigma_beta_sq[i],
                self.lambda[i],
                self.sigma_g_sq[i]
            )?;
        }
        Ok(())
    }
}

pub fn raw_moments(inc: &IncrementSeries, t0: f64) -> Result<KMSeries> {
    if !(inc.dt > 0.0) {
        return Err(Error::invalid("dt must be positive"));
    }
    if inc.is_empty() {
        return Err(Error::invalid("increment series is empty"));
    }
    let dt = inc.dt;
    let n = inc.len();
    let m1 = inc.values.iter().map(|d| d / dt).collect();
    let pow = |p: i32| inc.values.iter().map(|d| d.abs().powi(p) / dt).collect::<Vec<_>>();
    Ok(KMSeries {
        dim: inc.dim,
        dt,
        window: 1,
        times: (0..n).map(|i| t0 + i as f64 * dt).collect(),
        m1,
        m2: pow(2),
        m4: pow(4),
        m6: pow(6),
        sigma_beta_sq: vec![0.0; n],
        lambda: vec![0.0; n],
        sigma_g_sq: vec![0.0; n],
    })
}

/// Raw moments for one dimension of a trajectory.
pub fn trajectory_moments(traj: &Trajectory, dim: usize) -> Result<KMSeries> {
    let inc = increments(traj, dim)?;
    raw_moments(&inc, traj.times()[0])
}

/// Centered moving average over an odd window; edges use the truncated window.
pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    stats::centered(xs, window, stats::mean)
}

/// Smooths the raw moment tracks. Derived tracks are reset to zero and must be
/// recomputed with [`jump_params`] and [`diffusion_param`].
pub fn smooth(kms: &KMSeries, window: usize) -> Result<KMSeries> {
    if window % 2 == 0 {
        return Err(Error::invalid(format!("window must be odd, got {window}")));
    }
    if window < 1 || window > kms.len() {
        return Err(Error::invalid(format!(
            "window {window} out of range 1..={}",
            kms.len()
        )));
    }
    let n = kms.len();
    Ok(KMSeries {
        dim: kms.dim,
        dt: kms.dt,
        window,
        times: kms.times.clone(),
        m1: moving_average(&kms.m1, window),
        m2: moving_average(&kms.m2, window),
        m4: moving_average(&kms.m4, window),
        m6: moving_average(&kms.m6, window),
        sigma_beta_sq: vec![0.0; n],
        lambda: vec![0.0; n],
        sigma_g_sq: vec![0.0; n],
    })
}

/// Jump size variance and rate from one set of moment rates.
///
/// Returns `(sigma_beta_sq, lambda)`, both zero in the no-jump regime.
pub fn invert_jump_moments(m2: f64, m4: f64, m6: f64, dt: f64) -> (f64, f64) {
    // Moment-rate cumulants: the Gaussian part of the increment contributes
    // nothing to the fourth and sixth cumulants.
    let c4 = m4 - 3.0 * m2 * m2 * dt;
    let c6 = m6 - 15.0 * m4 * m2 * dt + 30.0 * m2 * m2 * m2 * dt * dt;
    if !(c4 > EPS_M4) || !(c6 > 0.0) {
        return (0.0, 0.0);
    }
    let sb2 = c6 / (5.0 * c4);
    let lambda = c4 / (3.0 * sb2 * sb2);
    if !sb2.is_finite() || !lambda.is_finite() {
        return (0.0, 0.0);
    }
    (sb2, lambda)
}

/// Fills `sigma_beta_sq` and `lambda` from the M2/M4/M6 tracks.
pub fn jump_params(kms: &KMSeries) -> KMSeries {
    let mut out = kms.clone();
    for i in 0..kms.len() {
        let (sb2, lam) = invert_jump_moments(kms.m2[i], kms.m4[i], kms.m6[i], kms.dt);
        out.sigma_beta_sq[i] = sb2;
        out.lambda[i] = lam;
    }
    out
}

/// Fills `sigma_g_sq = max(0, M2 - lambda sigma_beta^2)`.
///
/// In jump-heavy windows where `lambda sigma_beta^2 > M2` the diffusion is
/// clamped to zero and `lambda` is capped so the jump variance equals M2.
pub fn diffusion_param(kms: &KMSeries) -> KMSeries {
    let mut out = kms.clone();
    for i in 0..kms.len() {
        let jump_var = kms.lambda[i] * kms.sigma_beta_sq[i];
        if jump_var > kms.m2[i] {
            out.sigma_g_sq[i] = 0.0;
            out.lambda[i] = kms.m2[i] / kms.sigma_beta_sq[i];
        } else {
            out.sigma_g_sq[i] = kms.m2[i] - jump_var;
        }
    }
    out
}

/// Raw moments, smoothing and parameter recovery in one call.
pub fn estimate(traj: &Trajectory, dim: usize, window: usize) -> Result<KMSeries> {
    let raw = trajectory_moments(traj, dim)?;
    let w = window.min(if raw.len() % 2 == 1 { raw.len() } else { raw.len() - 1 });
    let smoothed = smooth(&raw, w.max(1))?;
    Ok(diffusion_param(&jump_params(&smoothed)))
}

/// Series-level jump-diffusion parameters, in the KM units of the tracks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecoveredParams {
    /// Mean velocity, m/s.
    pub mu: f64,
    /// Diffusion variance rate, m^2/s.
    pub sigma_g_sq: f64,
    /// Jump rate, 1/s.
    pub lambda: f64,
    /// Jump size variance, m^2.
    pub sigma_beta_sq: f64,
}

/// `E|Z|^r` scale for a standard normal.
fn abs_normal_moment(r: f64) -> f64 {
    (2f64.powf(r / 2.0) * stats::ln_gamma((r + 1.0) / 2.0).exp()) / std::f64::consts::PI.sqrt()
}

/// Absolute moment `E|D|^r` of a zero-mean Poisson-normal mixture with per-step
/// diffusion variance `s2`, jump probability mass `p` and jump variance `b2`.
fn mixture_abs_moment(r: f64, s2: f64, p: f64, b2: f64) -> f64 {
    let kmax = (p + 10.0 * (p + 1.0).sqrt() + 10.0).ceil() as usize;
    let mut log_w = -p;
    let mut acc = 0.0;
    for k in 0..=kmax {
        if k > 0 {
            log_w += p.ln() - (k as f64).ln();
        }
        acc += log_w.exp() * (s2 + k as f64 * b2).powf(r / 2.0);
    }
    abs_normal_moment(r) * acc
}

/// Recovers stationary jump-diffusion parameters from a whole increment series.
///
/// The raw KM moments are biased at finite `dt`, so this matches the empirical
/// absolute moments of orders 1..=4 of the centered increments against the exact
/// Poisson-normal mixture (zero-mean jumps) instead of using the asymptotic
/// ratios. Assumes constant drift over the series.
pub fn recover_params(inc: &IncrementSeries) -> Result<RecoveredParams> {
    if inc.len() < 20 {
        return Err(Error::TooFewSamples {
            need: 20,
            got: inc.len(),
        });
    }
    let dt = inc.dt;
    let mean = stats::mean(&inc.values);
    let centered: Vec<f64> = inc.values.iter().map(|v| v - mean).collect();
    let orders = [1.0, 2.0, 3.0, 4.0];
    let emp: Vec<f64> = orders
        .iter()
        .map(|&r| centered.iter().map(|d| d.abs().powf(r)).sum::<f64>() / centered.len() as f64)
        .collect();
    if emp[1] <= 0.0 {
        return Err(Error::DegenerateParams("all increments identical".into()));
    }
    let m2 = emp[1];
    let n = centered.len() as f64;
    // Without significant excess kurtosis the jump terms are not identifiable;
    // under a Gaussian the excess has standard error sqrt(24/n) m2^2.
    let excess = emp[3] - 3.0 * m2 * m2;
    if excess <= 2.0 * (24.0 / n).sqrt() * m2 * m2 {
        return Ok(RecoveredParams {
            mu: mean / dt,
            sigma_g_sq: m2 / dt,
            lambda: 0.0,
            sigma_beta_sq: 0.0,
        });
    }
    let objective = |th: &[f64]| {
        // at most one jump per step on average keeps jumps distinct from diffusion
        if th[1] > 0.0 {
            return f64::INFINITY;
        }
        let (s2, p, b2) = (th[0].exp(), th[1].exp(), th[2].exp());
        orders
            .iter()
            .zip(&emp)
            .map(|(&r, &e)| {
                let rel = mixture_abs_moment(r, s2, p, b2) / e - 1.0;
                rel * rel
            })
            .sum::<f64>()
    };
    let opts = NelderMeadOptions {
        max_iter: 4000,
        f_tol: 1e-16,
        x_tol: 1e-9,
    };
    let mut best: Option<crate::optim::Minimum> = None;
    for &(s_frac, p0, b_mult) in &[(0.8, 0.05, 4.0), (0.5, 0.1, 2.0), (0.95, 0.01, 10.0), (0.3, 0.3, 1.0)] {
        let x0 = [(s_frac * m2).ln(), f64::ln(p0), (b_mult * m2).ln()];
        let m = nelder_mead(objective, &x0, &[0.5, 0.5, 0.5], opts);
        if best.as_ref().is_none_or(|b| m.f < b.f) {
            best = Some(m);
        }
    }
    let best = best.expect("at least one start");
    let (s2, p, b2) = (best.x[0].exp(), best.x[1].exp(), best.x[2].exp());
    let (lambda, sigma_beta_sq, s2) = if p < 1e-9 {
        (0.0, 0.0, m2)
    } else {
        (p / dt, b2, s2)
    };
    Ok(RecoveredParams {
        mu: mean / dt,
        sigma_g_sq: s2 / dt,
        lambda,
        sigma_beta_sq,
    })
}
