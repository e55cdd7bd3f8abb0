//! Probabilistic reachability grids over state and prediction time.
//!
//! For slice time `t` a voxel `X` gets `log prod_n sum_k w_k P_n(X_n | x_s, g_k, t)`,
//! with the per-dimension transition densities of each goal. The time-collapsed
//! grid keeps the voxelwise maximum over slices.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::{JumpDiffusionParams, StateGrid, TransitionDensity};
use crate::sindy::KmModels;
use crate::stats;

/// Longest supported prediction horizon, s.
pub const MAX_HORIZON: f64 = 60.0;
/// Default slice times, s.
pub const DEFAULT_SLICES: [f64; 5] = [0.5, 1.0, 2.0, 4.0, 8.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub axes: Vec<StateGrid>,
    pub horizon: f64,
    pub slices: Vec<f64>,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() {
            return Err(Error::invalid("grid needs at least one axis"));
        }
        for a in &self.axes {
            StateGrid::new(a.min, a.max, a.cells)?;
        }
        if !(self.horizon > 0.0 && self.horizon <= MAX_HORIZON) {
            return Err(Error::invalid(format!("horizon must lie in (0, {MAX_HORIZON}] s")));
        }
        if self.slices.is_empty() {
            return Err(Error::invalid("need at least one slice time"));
        }
        for &t in &self.slices {
            if !(t > 0.0 && t <= self.horizon) {
                return Err(Error::invalid(format!("slice time {t} outside (0, {}]", self.horizon)));
            }
        }
        Ok(())
    }

    /// Axes spanning `x_s` plus the widest envelope over goals at the last slice.
    pub fn around(params: &[Vec<JumpDiffusionParams>], x_s: &[f64], slices: &[f64], cells: usize) -> Result<Self> {
        let t_max = slices.iter().copied().fold(0.0, f64::max);
        let axes = (0..x_s.len())
            .map(|d| {
                let (mut lo, mut hi) = (x_s[d], x_s[d]);
                for gp in params {
                    let a = StateGrid::around(&gp[d], x_s[d], t_max, cells);
                    lo = lo.min(a.min);
                    hi = hi.max(a.max);
                }
                StateGrid::new(lo, hi, cells)
            })
            .collect::<Result<_>>()?;
        let spec = GridSpec {
            axes,
            horizon: t_max.min(MAX_HORIZON),
            slices: slices.to_vec(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn voxels(&self) -> usize {
        self.axes.iter().map(|a| a.cells).product()
    }

    /// Row-major voxel index (last dimension fastest).
    pub fn index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.axes).fold(0, |acc, (i, a)| acc * a.cells + i)
    }

    pub fn unravel(&self, mut v: usize) -> Vec<usize> {
        let mut idx = vec![0; self.axes.len()];
        for d in (0..self.axes.len()).rev() {
            idx[d] = v % self.axes[d].cells;
            v /= self.axes[d].cells;
        }
        idx
    }

    pub fn coords(&self, v: usize) -> Vec<f64> {
        self.unravel(v)
            .iter()
            .zip(&self.axes)
            .map(|(&i, a)| a.value(i))
            .collect()
    }
}

/// Per-goal parameters predicted by SINDy moment models at `(x_s, g_k)`.
pub fn sindy_params(models: &[KmModels], x_s: &[f64], goals: &[Vec<f64>]) -> Vec<Vec<JumpDiffusionParams>> {
    goals
        .iter()
        .map(|g| {
            models
                .iter()
                .enumerate()
                .map(|(d, m)| m.params_at(x_s[d], g[d]).params)
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct ReachOptions {
    /// Goal weights inside the sum; `None` means weight one per goal.
    pub weights: Option<Vec<f64>>,
    /// Divide the goal sum by the number of goals.
    pub normalize: bool,
    /// Keep one grid per goal.
    pub per_goal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReachabilityGrid {
    pub spec: GridSpec,
    pub x_s: Vec<f64>,
    /// `slices[s][voxel]` log-likelihoods.
    pub slices: Vec<Vec<f64>>,
    /// `per_goal[s][k][voxel]` when requested.
    pub per_goal: Option<Vec<Vec<Vec<f64>>>>,
    pub collapsed: Vec<f64>,
}

/// Voxelwise maximum over slices.
pub fn collapse_time(slices: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = slices.first().ok_or_else(|| Error::invalid("need at least one slice"))?;
    let mut out = first.clone();
    for s in &slices[1..] {
        for (o, v) in out.iter_mut().zip(s) {
            if *v > *o {
                *o = *v;
            }
        }
    }
    Ok(out)
}

/// Sums per-dimension 1-D log arrays over the full voxel grid.
fn outer_sum(spec: &GridSpec, per_dim: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; spec.voxels()];
    let mut idx = vec![0usize; spec.axes.len()];
    for o in out.iter_mut() {
        *o = idx.iter().enumerate().map(|(d, &i)| per_dim[d][i]).sum();
        for d in (0..idx.len()).rev() {
            idx[d] += 1;
            if idx[d] < spec.axes[d].cells {
                break;
            }
            idx[d] = 0;
        }
    }
    out
}

/// Builds the grid for `params[goal][dim]` from start state `x_s`.
pub fn reach_grid(
    params: &[Vec<JumpDiffusionParams>],
    x_s: &[f64],
    spec: &GridSpec,
    opts: &ReachOptions,
) -> Result<ReachabilityGrid> {
    spec.validate()?;
    let dims = spec.axes.len();
    let k = params.len();
    if k == 0 {
        return Err(Error::invalid("need parameters for at least one goal"));
    }
    if x_s.len() != dims || params.iter().any(|p| p.len() != dims) {
        return Err(Error::invalid("dimension mismatch between grid, start state and parameters"));
    }
    for (d, a) in spec.axes.iter().enumerate() {
        if !a.contains(x_s[d]) {
            return Err(Error::GridCoverage {
                what: format!("start state {} on axis {d}", x_s[d]),
            });
        }
    }
    let log_w: Vec<f64> = match &opts.weights {
        Some(w) if w.len() != k => return Err(Error::invalid("one weight per goal required")),
        Some(w) => w.iter().map(|v| v.ln()).collect(),
        None => vec![0.0; k],
    };
    let norm = if opts.normalize { (k as f64).ln() } else { 0.0 };

    let mut slices = Vec::with_capacity(spec.slices.len());
    let mut per_goal = opts.per_goal.then(Vec::new);
    for &t in &spec.slices {
        // comp[k][d][cell]
        let comp: Vec<Vec<Vec<f64>>> = params
            .iter()
            .map(|gp| {
                gp.iter()
                    .enumerate()
                    .map(|(d, p)| {
                        let den = TransitionDensity::new(p, t)?;
                        Ok(spec.axes[d]
                            .values()
                            .iter()
                            .map(|&x| den.log_density(x - x_s[d]))
                            .collect())
                    })
                    .collect::<Result<_>>()
            })
            .collect::<Result<_>>()?;
        let mixed: Vec<Vec<f64>> = (0..dims)
            .map(|d| {
                (0..spec.axes[d].cells)
                    .map(|i| {
                        let terms: Vec<f64> = (0..k).map(|g| log_w[g] + comp[g][d][i]).collect();
                        stats::log_sum_exp(&terms) - norm
                    })
                    .collect()
            })
            .collect();
        slices.push(outer_sum(spec, &mixed));
        if let Some(pg) = per_goal.as_mut() {
            pg.push(comp.iter().map(|c| outer_sum(spec, c)).collect());
        }
    }
    let collapsed = collapse_time(&slices)?;
    Ok(ReachabilityGrid {
        spec: spec.clone(),
        x_s: x_s.to_vec(),
        slices,
        per_goal,
        collapsed,
    })
}

/// A 2-D plane through the grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlaneSlice {
    pub t: f64,
    pub dims: (usize, usize),
    pub axes: (StateGrid, StateGrid),
    /// `values[i][j]` at cell `i` of the first and `j` of the second axis.
    pub values: Vec<Vec<f64>>,
}

impl ReachabilityGrid {
    fn slice_index(&self, t: f64) -> Result<usize> {
        self.spec
            .slices
            .iter()
            .position(|&s| (s - t).abs() <= 1e-9 * s.max(1.0))
            .ok_or_else(|| Error::invalid(format!("slice time {t} was not computed")))
    }

    pub fn slice(&self, t: f64) -> Result<&[f64]> {
        Ok(&self.slices[self.slice_index(t)?])
    }

    /// Plane `(a, b)` at slice `t`; other dimensions are held at the start voxel.
    pub fn slice_export(&self, t: f64, a: usize, b: usize) -> Result<PlaneSlice> {
        let dims = self.spec.axes.len();
        if dims < 2 {
            return Err(Error::invalid("need at least 2 dimensions for a plane"));
        }
        if a >= dims || b >= dims || a == b {
            return Err(Error::invalid(format!("invalid plane ({a}, {b}) for {dims} dimensions")));
        }
        let s = &self.slices[self.slice_index(t)?];
        let mut idx: Vec<usize> = (0..dims).map(|d| self.spec.axes[d].nearest(self.x_s[d])).collect();
        let (ax, bx) = (self.spec.axes[a], self.spec.axes[b]);
        let values = (0..ax.cells)
            .map(|i| {
                (0..bx.cells)
                    .map(|j| {
                        idx[a] = i;
                        idx[b] = j;
                        s[self.spec.index(&idx)]
                    })
                    .collect()
            })
            .collect();
        Ok(PlaneSlice {
            t,
            dims: (a, b),
            axes: (ax, bx),
            values,
        })
    }

    /// Long format `t,x[,y,z],logp`; the collapsed grid uses `t = collapsed`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let names = crate::trajectory::axis_names(self.spec.axes.len());
        writeln!(w, "t,{},logp", names.join(","))?;
        let groups = self
            .spec
            .slices
            .iter()
            .map(|t| t.to_string())
            .zip(self.slices.iter())
            .chain(std::iter::once(("collapsed".to_string(), &self.collapsed)));
        for (label, values) in groups {
            for (v, lp) in values.iter().enumerate() {
                let c: Vec<String> = self.spec.coords(v).iter().map(|x| x.to_string()).collect();
                writeln!(w, "{label},{},{lp}", c.join(","))?;
            }
        }
        Ok(())
    }
}
