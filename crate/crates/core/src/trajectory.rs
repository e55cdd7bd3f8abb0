//! Observable types: sampled trajectories, known goal sets and per-dimension increments.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

const AXIS_NAMES: [&str; 3] = ["x", "y", "z"];

/// Uniformly sampled position time series, stored column-wise (one vector per dimension).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    coords: Vec<Vec<f64>>,
    dt: f64,
}

impl Trajectory {
    /// Builds a trajectory from sample times and per-dimension coordinate columns.
    ///
    /// `dt` is taken as the median time step.
    pub fn new(times: Vec<f64>, coords: Vec<Vec<f64>>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::invalid("trajectory needs at least one dimension"));
        }
        if times.len() < 2 {
            return Err(Error::TooFewSamples {
                need: 2,
                got: times.len(),
            });
        }
        for c in &coords {
            if c.len() != times.len() {
                return Err(Error::invalid("coordinate column length differs from times"));
            }
            if let Some(i) = c.iter().position(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("non-finite coordinate at sample {i}")));
            }
        }
        for i in 1..times.len() {
            if !(times[i] > times[i - 1]) {
                return Err(Error::NonMonotonicTime { index: i });
            }
        }
        let deltas: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
        let dt = stats::median(&deltas);
        Ok(Self { times, coords, dt })
    }

    /// Uniform trajectory starting at `t0` with step `dt`.
    pub fn from_uniform(t0: f64, dt: f64, coords: Vec<Vec<f64>>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::invalid("dt must be positive"));
        }
        let n = coords.first().map_or(0, Vec::len);
        let times = (0..n).map(|i| t0 + i as f64 * dt).collect();
        let mut traj = Self::new(times, coords)?;
        traj.dt = dt;
        Ok(traj)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dims(&self) -> usize {
        self.coords.len()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Coordinate column for one dimension.
    pub fn coord(&self, dim: usize) -> &[f64] {
        &self.coords[dim]
    }

    pub fn coords(&self) -> &[Vec<f64>] {
        &self.coords
    }

    /// Position vector at sample `i`.
    pub fn point(&self, i: usize) -> Vec<f64> {
        self.coords.iter().map(|c| c[i]).collect()
    }

    /// Prefix containing samples `0..=last`.
    pub fn prefix(&self, last: usize) -> Result<Self> {
        let end = last + 1;
        if end < 2 || end > self.len() {
            return Err(Error::invalid(format!("prefix end {last} out of range")));
        }
        Ok(Self {
            times: self.times[..end].to_vec(),
            coords: self.coords.iter().map(|c| c[..end].to_vec()).collect(),
            dt: self.dt,
        })
    }

    /// True when every step is within `1e-6 * dt` of the nominal step.
    pub fn is_uniform(&self) -> bool {
        self.times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - self.dt).abs() <= 1e-6 * self.dt)
    }

    /// Writes `t,x[,y,z]` CSV using shortest round-trip float formatting.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = String::from("t");
        for name in self.axis_names() {
            header.push(',');
            header.push_str(name);
        }
        writeln!(w, "{header}")?;
        for i in 0..self.len() {
            write!(w, "{}", self.times[i])?;
            for c in &self.coords {
                write!(w, ",{}", c[i])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn axis_names(&self) -> Vec<&'static str> {
        axis_names(self.dims())
    }
}

pub(crate) fn axis_names(dims: usize) -> Vec<&'static str> {
    (0..dims)
        .map(|d| AXIS_NAMES.get(d).copied().unwrap_or("w"))
        .collect()
}

/// Parses a `t,x[,y[,z]]` CSV trajectory.
///
/// Files with gaps larger than 1.5 steps or jittered timing are resampled onto the
/// median step so downstream code always sees uniform samples.
pub fn load_trajectory<R: BufRead>(reader: R) -> Result<Trajectory> {
    let mut lines = reader.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, line)) => {
                let line = line?;
                let trimmed = line.trim();
                if trimmed.is_empty() || trimmed.starts_with('#') {
                    continue;
                }
                break trimmed.to_string();
            }
            None => return Err(Error::TooFewSamples { need: 2, got: 0 }),
        }
    };
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 2 || cols.len() > 4 || cols[0] != "t" {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header t,x[,y[,z]], got {header:?}"),
        });
    }
    let dims = cols.len() - 1;
    let mut times = Vec::new();
    let mut coords = vec![Vec::new(); dims];
    for (idx, line) in lines {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != dims + 1 {
            return Err(Error::Parse {
                line: idx + 1,
                msg: format!("expected {} fields, got {}", dims + 1, fields.len()),
            });
        }
        let mut vals = Vec::with_capacity(fields.len());
        for f in fields {
            let v: f64 = f.trim().parse().map_err(|_| Error::Parse {
                line: idx + 1,
                msg: format!("not a number: {f:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!("non-finite value: {f:?}"),
                });
            }
            vals.push(v);
        }
        times.push(vals[0]);
        for d in 0..dims {
            coords[d].push(vals[d + 1]);
        }
    }
    for i in 1..times.len() {
        if !(times[i] > times[i - 1]) {
            return Err(Error::NonMonotonicTime { index: i });
        }
    }
    let traj = Trajectory::new(times, coords)?;
    if traj.is_uniform() {
        Ok(traj)
    } else {
        let dt = traj.dt();
        resample_uniform(&traj, dt)
    }
}

pub fn load_trajectory_file(path: &Path) -> Result<Trajectory> {
    let f = std::fs::File::open(path)?;
    load_trajectory(std::io::BufReader::new(f))
}

/// Linear interpolation onto a uniform grid spanning the trajectory's time range.
pub fn resample_uniform(traj: &Trajectory, dt: f64) -> Result<Trajectory> {
    if !(dt > 0.0) {
        return Err(Error::invalid("dt must be positive"));
    }
    let t0 = traj.times[0];
    let duration = traj.times[traj.len() - 1] - t0;
    if dt > duration * (1.0 + 1e-12) {
        return Err(Error::invalid(format!(
            "dt {dt} exceeds trajectory duration {duration}"
        )));
    }
    if traj.is_uniform() && (traj.dt - dt).abs() <= 1e-12 * dt {
        return Ok(traj.clone());
    }
    let n = (duration / dt + 1e-9).floor() as usize + 1;
    let mut coords = vec![Vec::with_capacity(n); traj.dims()];
    let mut seg = 0;
    for k in 0..n {
        let t = t0 + k as f64 * dt;
        while seg + 2 < traj.len() && traj.times[seg + 1] < t {
            seg += 1;
        }
        let (ta, tb) = (traj.times[seg], traj.times[seg + 1]);
        let frac = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
        for (d, col) in traj.coords.iter().enumerate() {
            coords[d].push(col[seg] + frac * (col[seg + 1] - col[seg]));
        }
    }
    Trajectory::from_uniform(t0, dt, coords)
}

/// Consecutive differences of one coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementSeries {
    pub dim: usize,
    pub values: Vec<f64>,
    pub dt: f64,
}

impl IncrementSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn increments(traj: &Trajectory, dim: usize) -> Result<IncrementSeries> {
    if dim >= traj.dims() {
        return Err(Error::DimOutOfRange {
            dim,
            dims: traj.dims(),
        });
    }
    let values = traj.coords[dim].windows(2).map(|w| w[1] - w[0]).collect();
    Ok(IncrementSeries {
        dim,
        values,
        dt: traj.dt,
    })
}

/// A known goal location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub label: String,
    pub pos: Vec<f64>,
}

/// Known goal locations (possibly empty, for pure discovery).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GoalSet {
    pub goals: Vec<Goal>,
}

impl GoalSet {
    pub fn new(goals: Vec<Goal>) -> Result<Self> {
        let set = Self { goals };
        set.validate()?;
        Ok(set)
    }

    /// Goals labelled `g0`, `g1`, ... from raw positions.
    pub fn from_points(points: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(
            points
                .into_iter()
                .enumerate()
                .map(|(i, pos)| Goal {
                    label: format!("g{i}"),
                    pos,
                })
                .collect(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(first) = self.goals.first() {
            let n = first.pos.len();
            if n == 0 {
                return Err(Error::invalid("goal with zero dimensions"));
            }
            for g in &self.goals {
                if g.pos.len() != n {
                    return Err(Error::invalid(format!(
                        "goal {} has {} dims, expected {n}",
                        g.label,
                        g.pos.len()
                    )));
                }
                if g.pos.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid(format!("goal {} is not finite", g.label)));
                }
            }
            for i in 0..self.goals.len() {
                for j in i + 1..self.goals.len() {
                    if self.goals[i].pos == self.goals[j].pos {
                        return Err(Error::invalid(format!(
                            "goals {} and {} coincide",
                            self.goals[i].label, self.goals[j].label
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.goals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.goals.is_empty()
    }

    pub fn dims(&self) -> Option<usize> {
        self.goals.first().map(|g| g.pos.len())
    }

    pub fn pos(&self, k: usize) -> &[f64] {
        &self.goals[k].pos
    }

    /// Index of the goal closest (Euclidean) to `x`; lowest index wins ties.
    pub fn nearest(&self, x: &[f64]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (k, g) in self.goals.iter().enumerate() {
            let d = dist2(&g.pos, x);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((k, d));
            }
        }
        best.map(|(k, _)| k)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let set: GoalSet = serde_json::from_str(text)?;
        set.validate()?;
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("goal set serializes")
    }
}

pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist2(a, b).sqrt()
}
