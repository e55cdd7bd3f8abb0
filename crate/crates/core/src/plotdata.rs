//! Plot-ready CSV emitters. Every file starts with a `# config_hash=... seed=...`
//! comment line followed by a header naming every column.

use std::io::{BufRead, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::goal::{self, GoalConfig, GoalTrace};
use crate::km::KMSeries;
use crate::mixture::{JumpDiffusionParams, StateGrid, TransitionDensity};
use crate::reach::ReachabilityGrid;
use crate::trajectory::{axis_names, Trajectory};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn write_line<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# config_hash={} seed={}", self.config_hash, self.seed)?;
        Ok(())
    }
}

/// Long-format density curves `curve,x,pdf,logpdf` for each labeled parameter
/// set, over the displacement from `x_s` after `tau`.
pub fn write_pdf_curves<W: Write>(
    mut w: W,
    meta: &Provenance,
    curves: &[(String, JumpDiffusionParams)],
    x_s: f64,
    tau: f64,
    grid: &StateGrid,
) -> Result<()> {
    if curves.is_empty() {
        return Err(Error::invalid("pdf-curve needs at least one parameter set"));
    }
    meta.write_line(&mut w)?;
    writeln!(w, "curve,x,pdf,logpdf")?;
    for (label, p) in curves {
        if label.contains(',') {
            return Err(Error::invalid(format!("curve label {label:?} contains a comma")));
        }
        let d = TransitionDensity::new(p, tau)?;
        for x in grid.values() {
            let lp = d.log_density(x - x_s);
            writeln!(w, "{label},{x},{},{lp}", lp.exp())?;
        }
    }
    Ok(())
}

/// One detected jump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JumpMarker {
    pub step: usize,
    pub t: f64,
    pub increment: f64,
}

/// ECOD-flagged increments of a raw (window 1) moment series.
pub fn jump_markers(kms: &KMSeries, cfg: &GoalConfig) -> Result<Vec<JumpMarker>> {
    if kms.window != 1 {
        return Err(Error::invalid(format!(
            "jump markers need a raw moment series, got window {}",
            kms.window
        )));
    }
    cfg.validate()?;
    let inc = kms.increments();
    let feats = goal::jump_features(&inc, kms.dt, cfg.window);
    let flags = goal::ecod_jump_outliers(&[feats], cfg.contamination)?;
    Ok(flags
        .iter()
        .enumerate()
        .filter(|(_, f)| **f)
        .map(|(i, _)| JumpMarker {
            step: i,
            t: kms.times[i],
            increment: inc[i],
        })
        .collect())
}

pub fn write_jump_markers<W: Write>(mut w: W, meta: &Provenance, dim: usize, markers: &[JumpMarker]) -> Result<()> {
    meta.write_line(&mut w)?;
    writeln!(w, "dim,step,t,increment")?;
    for m in markers {
        writeln!(w, "{dim},{},{},{}", m.step, m.t, m.increment)?;
    }
    Ok(())
}

pub fn write_goal_trace<W: Write>(mut w: W, meta: &Provenance, trace: &GoalTrace) -> Result<()> {
    meta.write_line(&mut w)?;
    trace.write_csv(w)
}

/// Plane `(a, b)` of every slice as `t,<a>,<b>,logp`; one-dimensional grids
/// emit `t,x,logp`.
pub fn write_reach_slices<W: Write>(
    mut w: W,
    meta: &Provenance,
    grid: &ReachabilityGrid,
    plane: (usize, usize),
) -> Result<()> {
    let dims = grid.spec.axes.len();
    let names = axis_names(dims);
    meta.write_line(&mut w)?;
    if dims == 1 {
        writeln!(w, "t,x,logp")?;
        let axis = grid.spec.axes[0];
        for (t, s) in grid.spec.slices.iter().zip(&grid.slices) {
            for (i, lp) in s.iter().enumerate() {
                writeln!(w, "{t},{},{lp}", axis.value(i))?;
            }
        }
        return Ok(());
    }
    let (a, b) = plane;
    if a >= dims || b >= dims || a == b {
        return Err(Error::invalid(format!("invalid plane ({a}, {b}) for {dims} dimensions")));
    }
    writeln!(w, "t,{},{},logp", names[a], names[b])?;
    for &t in &grid.spec.slices {
        let p = grid.slice_export(t, a, b)?;
        for (i, row) in p.values.iter().enumerate() {
            for (j, lp) in row.iter().enumerate() {
                writeln!(w, "{t},{},{},{lp}", p.axes.0.value(i), p.axes.1.value(j))?;
            }
        }
    }
    Ok(())
}

/// A goal trace read back from its CSV form.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalTraceTable {
    pub times: Vec<f64>,
    /// `g[i]` per sample.
    pub g: Vec<Vec<f64>>,
    pub settled: Vec<f64>,
    pub moving: Vec<f64>,
    pub jump: Vec<bool>,
    pub switch: Vec<bool>,
}

impl GoalTraceTable {
    pub fn dims(&self) -> usize {
        self.g.first().map_or(0, Vec::len)
    }

    /// Goal track `g_d` as its own series.
    pub fn coord(&self, d: usize) -> Vec<f64> {
        self.g.iter().map(|g| g[d]).collect()
    }

    /// The goal track as a `t,x[,y,z]` trajectory.
    pub fn to_trajectory(&self) -> Result<Trajectory> {
        let coords = (0..self.dims()).map(|d| self.coord(d)).collect();
        Trajectory::new(self.times.clone(), coords)
    }
}

fn parse_field(f: &str, line: usize) -> Result<f64> {
    f.trim().parse().map_err(|_| Error::Parse {
        line,
        msg: format!("not a number: {f:?}"),
    })
}

/// Reads `t,g_x[,g_y,g_z],S_settled,S_move,S_jump,switch`, skipping `#` lines.
pub fn read_goal_trace<R: BufRead>(reader: R) -> Result<GoalTraceTable> {
    let mut header: Option<Vec<String>> = None;
    let mut out = GoalTraceTable {
        times: vec![],
        g: vec![],
        settled: vec![],
        moving: vec![],
        jump: vec![],
        switch: vec![],
    };
    let mut dims = 0;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        let lineno = idx + 1;
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        let Some(h) = &header else {
            let h: Vec<String> = fields.iter().map(|s| s.to_string()).collect();
            dims = h.len().saturating_sub(5);
            let want: Vec<String> = std::iter::once("t".to_string())
                .chain(axis_names(dims.clamp(1, 3)).iter().map(|a| format!("g_{a}")))
                .chain(["S_settled", "S_move", "S_jump", "switch"].map(String::from))
                .collect();
            if !(1..=3).contains(&dims) || h != want {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected goal-trace header, got {trimmed:?}"),
                });
            }
            header = Some(h);
            continue;
        };
        if fields.len() != h.len() {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected {} fields, got {}", h.len(), fields.len()),
            });
        }
        let v: Vec<f64> = fields.iter().map(|f| parse_field(f, lineno)).collect::<Result<_>>()?;
        out.times.push(v[0]);
        out.g.push(v[1..=dims].to_vec());
        out.settled.push(v[dims + 1]);
        out.moving.push(v[dims + 2]);
        out.jump.push(v[dims + 3] != 0.0);
        out.switch.push(v[dims + 4] != 0.0);
    }
    if header.is_none() {
        return Err(Error::Parse {
            line: 1,
            msg: "empty goal-trace file".into(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::goal::{infer_goal_trace, GoalMode};
    use crate::km;
    use crate::reach::{reach_grid, GridSpec, ReachOptions};
    use crate::sim::{simulate, SimConfig};
    use crate::trajectory::{load_trajectory, GoalSet};

    fn meta() -> Provenance {
        Provenance {
            config_hash: "abc".into(),
            seed: 7,
        }
    }

    fn body(s: &str) -> Vec<&str> {
        s.lines().skip(2).collect()
    }

    #[test]
    fn gaussian_pdf_curve_integrates_to_one() {
        let p = JumpDiffusionParams::gaussian(0.2, 0.3);
        let grid = StateGrid::around(&p, 0.0, 0.5, 4001);
        let mut buf = Vec::new();
        write_pdf_curves(&mut buf, &meta(), &[("nll".into(), p)], 0.0, 0.5, &grid).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("# config_hash=abc seed=7\ncurve,x,pdf,logpdf\n"));
        let pdf: Vec<f64> = body(&s).iter().map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
        let h = grid.step();
        let trap = h * (pdf.iter().sum::<f64>() - 0.5 * (pdf[0] + pdf[pdf.len() - 1]));
        assert!((trap - 1.0).abs() < 1e-6, "{trap}");
    }

    #[test]
    fn no_jump_series_has_no_markers() {
        let traj = Trajectory::from_uniform(0.0, 0.05, vec![(0..100).map(|i| 0.01 * i as f64).collect()]).unwrap();
        let kms = km::trajectory_moments(&traj, 0).unwrap();
        let m = jump_markers(&kms, &GoalConfig::default()).unwrap();
        assert!(m.is_empty());
        let mut buf = Vec::new();
        write_jump_markers(&mut buf, &meta(), 0, &m).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 2);
        let smooth = km::smooth(&kms, 5).unwrap();
        assert!(jump_markers(&smooth, &GoalConfig::default()).is_err());
    }

    #[test]
    fn goal_trace_round_trips() {
        let goals = GoalSet::from_points(vec![vec![0.0, 0.0], vec![1.0, 0.5]]).unwrap();
        let mut cfg = SimConfig::constant_1d(0.2, 0.05, 0.05, 120, 3);
        cfg.drift.push(crate::sim::DriftSpec::Constant { mu: 0.1 });
        cfg.x0 = vec![0.0, 0.0];
        let traj = simulate(&cfg, &goals).unwrap().trajectory;
        let trace = infer_goal_trace(&traj, &goals, GoalMode::Det, &GoalConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_goal_trace(&mut buf, &meta(), &trace).unwrap();
        let table = read_goal_trace(buf.as_slice()).unwrap();
        assert_eq!(table.g, trace.g);
        assert_eq!(table.times, trace.times);
        assert_eq!(table.switch.iter().filter(|s| **s).count(), trace.switch_count());
        let mut csv = Vec::new();
        table.to_trajectory().unwrap().write_csv(&mut csv).unwrap();
        let back = load_trajectory(csv.as_slice()).unwrap();
        assert_eq!(back.coord(1), table.coord(1).as_slice());
        assert!(read_goal_trace("t,x\n0,1\n".as_bytes()).is_err());
    }

    #[test]
    fn reach_slice_rows() {
        let p = JumpDiffusionParams::gaussian(0.0, 0.3);
        let spec = GridSpec {
            axes: vec![StateGrid::new(-1.0, 1.0, 5).unwrap(), StateGrid::new(-1.0, 1.0, 3).unwrap()],
            horizon: 2.0,
            slices: vec![1.0, 2.0],
        };
        let g = reach_grid(&[vec![p, p]], &[0.0, 0.0], &spec, &ReachOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_reach_slices(&mut buf, &meta(), &g, (0, 1)).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().nth(1), Some("t,x,y,logp"));
        assert_eq!(body(&s).len(), 2 * 5 * 3);
        assert!(write_reach_slices(Vec::new(), &meta(), &g, (1, 1)).is_err());
    }
}
