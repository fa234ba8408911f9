//! Jaywalking scenario: parameter space, physical constants and the
//! extended minimum distance used as criticality measure.
//!
//! Geometry: the AV drives along `+x` centered on `y = 0`; its body is a
//! rectangle `av_length x av_width` whose front bumper is the reference point.
//! The pedestrian is a circle that starts `lateral_start_offset` meters to the
//! side of the lane center, `d0` meters ahead of the front bumper, and walks
//! towards (and across) the lane.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Earth's gravity in m/s^2.
pub const GRAVITY: f64 = 9.81;

/// Largest longitudinal start distance kept by the sampler.
pub const MAX_D0: f64 = 50.0;

/// Column names of [`ScenarioParams`] in CSV and JSON output.
pub const PARAM_NAMES: [&str; 7] = ["t_day", "w_fog", "w_wind", "w_rain", "d0", "v_av", "v_ped"];

/// Test parameterization of the high-fidelity setup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioParams {
    /// Time of day in hours, `[0, 24)`.
    pub t_day: f64,
    pub w_fog: f64,
    pub w_wind: f64,
    pub w_rain: f64,
    /// Longitudinal distance between AV front and pedestrian at the trigger, m.
    pub d0: f64,
    /// AV target speed, m/s.
    pub v_av: f64,
    /// Pedestrian walking speed, m/s.
    pub v_ped: f64,
}

impl ScenarioParams {
    pub const DIM: usize = 7;

    pub fn validate(&self) -> Result<()> {
        let v = self.to_array();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain(format!("non-finite scenario parameter in {self:?}")));
        }
        if !(0.0..24.0).contains(&self.t_day) {
            return Err(Error::Domain(format!("t_day {} outside [0, 24)", self.t_day)));
        }
        for (name, w) in [("w_fog", self.w_fog), ("w_wind", self.w_wind), ("w_rain", self.w_rain)] {
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::Domain(format!("{name} {w} outside [0, 1]")));
            }
        }
        if !(self.d0 > 0.0 && self.d0 <= MAX_D0) {
            return Err(Error::Domain(format!("d0 {} outside (0, {MAX_D0}]", self.d0)));
        }
        if self.v_av <= 0.0 || self.v_ped <= 0.0 {
            return Err(Error::Domain("speeds must be positive".into()));
        }
        Ok(())
    }

    pub fn to_array(&self) -> [f64; 7] {
        [self.t_day, self.w_fog, self.w_wind, self.w_rain, self.d0, self.v_av, self.v_ped]
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != Self::DIM {
            return Err(Error::Domain(format!("expected {} values, got {}", Self::DIM, v.len())));
        }
        Ok(Self {
            t_day: v[0],
            w_fog: v[1],
            w_wind: v[2],
            w_rain: v[3],
            d0: v[4],
            v_av: v[5],
            v_ped: v[6],
        })
    }
}

/// Physical constants shared by all simulators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalConstants {
    pub g: f64,
    pub av_length: f64,
    pub av_width: f64,
    pub ped_radius: f64,
    /// Pedestrian's initial lateral distance from the lane center.
    pub lateral_start_offset: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            g: GRAVITY,
            av_length: 4.5,
            av_width: 2.0,
            ped_radius: 0.3,
            lateral_start_offset: 4.0,
        }
    }
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<()> {
        let all = [self.g, self.av_length, self.av_width, self.ped_radius, self.lateral_start_offset];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config(format!("physical constants must be positive: {self:?}")));
        }
        if self.lateral_start_offset <= self.av_width / 2.0 + self.ped_radius {
            return Err(Error::Config("pedestrian must start outside the AV's swept band".into()));
        }
        Ok(())
    }
}

/// Result of a single test run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    /// Extended minimum distance, negative for collisions.
    pub d_min_star: f64,
    pub collided: bool,
    /// AV speed at first contact; 0 when there was no collision.
    pub v_av_col: f64,
    pub n_frames: usize,
}

/// Tire-road friction coefficient as a function of rain intensity.
pub fn friction(w_rain: f64) -> f64 {
    0.5 + 0.4 * (-20.0 * w_rain).exp()
}

/// Extended minimum distance with standard gravity.
///
/// Non-collisions keep the observed minimum distance; collisions report the
/// negated braking distance still left at the moment of contact.
pub fn extended_min_distance(d_min: f64, collided: bool, v_av_col: f64, mu_fric: f64) -> Result<f64> {
    extended_min_distance_with_gravity(d_min, collided, v_av_col, mu_fric, GRAVITY)
}

pub fn extended_min_distance_with_gravity(
    d_min: f64,
    collided: bool,
    v_av_col: f64,
    mu_fric: f64,
    g: f64,
) -> Result<f64> {
    if !(mu_fric > 0.0) {
        return Err(Error::Domain(format!("friction coefficient must be positive, got {mu_fric}")));
    }
    if collided {
        Ok(-(v_av_col * v_av_col) / (2.0 * g * mu_fric))
    } else {
        Ok(d_min)
    }
}

/// Collision indicator J: 1 iff the run ended in a collision with a moving AV.
pub fn indicator_collision(outcome: &Outcome) -> u8 {
    u8::from(outcome.collided)
}
