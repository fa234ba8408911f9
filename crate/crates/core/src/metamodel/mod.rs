//! Gaussian-process metamodels of `d*_min` trained on Sobol designs.

mod gp;
mod sobol;

pub use gp::{event_probability, fit_gp, GpConfig, GpFit, GpModel, GpSnapshot, Hyperparameters, JITTER_LADDER};
pub use sobol::{sobol_unit, MAX_DIM as SOBOL_MAX_DIM};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::EventModel;
use crate::scenario::ScenarioParams;
use crate::sim::LoFiParams;

impl EventModel<ScenarioParams> for GpModel {
    fn event_prob(&self, x: &ScenarioParams) -> f64 {
        GpModel::event_prob(self, &x.to_array())
    }
}

impl EventModel<LoFiParams> for GpModel {
    fn event_prob(&self, x: &LoFiParams) -> f64 {
        GpModel::event_prob(self, &x.to_array())
    }
}

/// Axis-aligned training region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Linearly interpolated quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

impl DesignBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::Domain("design box bounds must be non-empty and of equal length".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l.is_finite() && u.is_finite() && l < u)) {
            return Err(Error::Domain(format!("design box needs lower < upper: {lower:?} / {upper:?}")));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Per-dimension `[q_lo, q_hi]` quantiles of `samples`.
    pub fn from_quantiles(samples: &[Vec<f64>], q_lo: f64, q_hi: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Domain("no samples for the design box".into()));
        }
        let d = samples[0].len();
        let (mut lower, mut upper) = (Vec::with_capacity(d), Vec::with_capacity(d));
        for k in 0..d {
            let mut col: Vec<f64> = samples.iter().map(|s| s[k]).collect();
            col.sort_by(f64::total_cmp);
            lower.push(quantile_sorted(&col, q_lo));
            upper.push(quantile_sorted(&col, q_hi));
        }
        Self::new(lower, upper)
    }

    /// `[1st, 99th]` percentile box.
    pub fn from_samples(samples: &[Vec<f64>]) -> Result<Self> {
        Self::from_quantiles(samples, 0.01, 0.99)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    fn scale(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(self.lower.iter().zip(&self.upper)).map(|(u, (l, h))| l + u * (h - l)).collect()
    }
}

/// First `n` Sobol points (initial zero point skipped) scaled into `bx`.
pub fn sobol_points(n: usize, bx: &DesignBox) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::Domain("need at least one design point".into()));
    }
    Ok(sobol_unit(n, bx.dim())?.iter().map(|u| bx.scale(u)).collect())
}
