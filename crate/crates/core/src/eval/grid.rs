//! Tracking performance over a two-parameter slice of the task space.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use super::{eval_mse, Controller, EvalProtocol, MseOutcome};
use crate::env::EpisodeConfig;
use crate::error::{Error, Result};
use crate::sim::{TaskParams, GAIN_RANGE, TAU1_RANGE};

pub const GRID_HEADER: [&str; 4] = ["p1", "p2", "mse", "flag"];

/// One coordinate of the task space as parameterised by the training
/// distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    K,
    Tau1,
    Tau2Ratio,
    ThetaRatio,
}

impl Axis {
    pub const ALL: [Axis; 4] = [Axis::K, Axis::Tau1, Axis::Tau2Ratio, Axis::ThetaRatio];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn range(self) -> (f64, f64) {
        match self {
            Axis::K => GAIN_RANGE,
            Axis::Tau1 => TAU1_RANGE,
            Axis::Tau2Ratio | Axis::ThetaRatio => (0.0, 1.0),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::K => "K",
            Axis::Tau1 => "tau1",
            Axis::Tau2Ratio => "tau2_ratio",
            Axis::ThetaRatio => "theta_ratio",
        })
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "K" | "k" => Ok(Axis::K),
            "tau1" => Ok(Axis::Tau1),
            "tau2_ratio" | "tau2/tau1" => Ok(Axis::Tau2Ratio),
            "theta_ratio" | "theta/tau1" => Ok(Axis::ThetaRatio),
            other => Err(Error::InvalidArgument(format!(
                "unknown grid axis '{other}' (expected K, tau1, tau2_ratio or theta_ratio)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub vary: (Axis, Axis),
    pub points: usize,
    /// Values of `(K, τ₁, τ₂/τ₁, θ/τ₁)`; the varied entries are ignored
    /// unless the grid has a single point per axis.
    pub fixed: [f64; 4],
    pub protocol: EvalProtocol,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            vary: (Axis::K, Axis::Tau1),
            points: 9,
            fixed: [0.5; 4],
            protocol: EvalProtocol::default(),
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.vary.0 == self.vary.1 {
            return Err(Error::InvalidArgument(format!("grid axes must differ, got {} twice", self.vary.0)));
        }
        if self.points == 0 {
            return Err(Error::InvalidArgument("grid needs at least one point per axis".into()));
        }
        Ok(())
    }

    /// Grid coordinates along one axis, endpoints included.
    pub fn axis_values(&self, axis: Axis) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.fixed[axis.index()]];
        }
        let (lo, hi) = axis.range();
        let n = (self.points - 1) as f64;
        (0..self.points).map(|i| lo + (hi - lo) * i as f64 / n).collect()
    }

    pub fn task(&self, p1: f64, p2: f64) -> Result<TaskParams> {
        let mut v = self.fixed;
        v[self.vary.0.index()] = p1;
        v[self.vary.1.index()] = p2;
        TaskParams::from_ratios(v[0], v[1], v[2], v[3])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridCell {
    pub p1: f64,
    pub p2: f64,
    /// NaN when flagged.
    pub mse: f64,
    /// 1 when the closed loop went unstable.
    pub flag: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub spec: GridSpec,
    /// Row-major: `p1` outer, `p2` inner.
    pub cells: Vec<GridCell>,
}

impl GridResult {
    /// Index of the lowest-MSE stable cell.
    pub fn best(&self) -> Option<usize> {
        self.stable()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }

    /// Index of the worst cell; unstable cells rank worst of all.
    pub fn worst(&self) -> Option<usize> {
        if let Some(i) = self.cells.iter().position(|c| c.flag != 0) {
            return Some(i);
        }
        self.stable()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }

    pub fn unstable_count(&self) -> usize {
        self.cells.iter().filter(|c| c.flag != 0).count()
    }

    /// `(i, j)` grid position of a cell index.
    pub fn position(&self, index: usize) -> (usize, usize) {
        (index / self.spec.points, index % self.spec.points)
    }

    fn stable(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.flag == 0)
            .map(|(i, c)| (i, c.mse))
    }
}

/// Scores a controller on every cell of the grid, in parallel. The gains
/// `per_task` maps each task to a controller, so baselines that depend on
/// the task (SIMC) share the procedure.
pub fn grid<'a, F>(spec: &GridSpec, cfg: &EpisodeConfig, per_task: F) -> Result<GridResult>
where
    F: Fn(&TaskParams) -> Result<Controller<'a>> + Sync,
{
    spec.validate()?;
    let a = spec.axis_values(spec.vary.0);
    let b = spec.axis_values(spec.vary.1);
    let coords: Vec<(f64, f64)> = a.iter().flat_map(|&p1| b.iter().map(move |&p2| (p1, p2))).collect();
    let cells = coords
        .par_iter()
        .map(|&(p1, p2)| {
            let task = spec.task(p1, p2)?;
            let out = eval_mse(per_task(&task)?, task, cfg, &spec.protocol)?;
            Ok(match out {
                MseOutcome::Stable(mse) => GridCell { p1, p2, mse, flag: 0 },
                MseOutcome::Unstable { .. } => GridCell {
                    p1,
                    p2,
                    mse: f64::NAN,
                    flag: 1,
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GridResult { spec: spec.clone(), cells })
}
