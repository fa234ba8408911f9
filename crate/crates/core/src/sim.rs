//! Seeded closed-loop jaywalking simulators.
//!
//! Three fidelity tiers share one frame loop and differ only in perception,
//! reaction time and longitudinal control:
//!
//! | tier        | inputs           | detection curve                | reaction | control              |
//! |-------------|------------------|--------------------------------|----------|----------------------|
//! | `Hifi`      | `ScenarioParams` | range x weather x glare window | hifi     | ramped full braking  |
//! | `LofiPre`   | `ScenarioParams` | range x weather (no glare)     | lofi     | ramped full braking  |
//! | `LofiPost`  | `LoFiParams`     | `P_detect * f(range)`          | lofi     | P controller + ramp  |
//!
//! Randomness comes from a [`CounterStream`] keyed by `(seed, frame, channel)`,
//! so a run is a pure function of `(params, seed)`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::CounterStream;
use crate::scenario::{
    extended_min_distance_with_gravity, friction, Outcome, PhysicalConstants, ScenarioParams,
};

const CH_DETECT: u64 = 1;
const CH_NOISE: u64 = 2;

/// Detection-probability model constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerceptionConfig {
    /// Range up to which the base detection curve is 1.
    pub full_range: f64,
    /// Range at which the base curve reaches `far_factor`.
    pub far_range: f64,
    pub far_factor: f64,
    pub fog_coeff: f64,
    pub rain_coeff: f64,
    pub glare_start: f64,
    pub glare_end: f64,
    /// Multiplier on the hi-fi detection probability inside the glare window.
    pub glare_factor: f64,
    /// Hours over which the glare effect fades out on each side of the window.
    pub glare_taper: f64,
    /// Range within which glare does not impair detection.
    pub glare_range: f64,
    /// Multiplicative range noise of the hi-fi perception.
    pub hifi_noise: f64,
    /// Multiplicative range noise of the lo-fi (pre) perception.
    pub lofi_pre_noise: f64,
    /// Multiplier on the lo-fi (pre) detection probability beyond `lofi_pre_range`.
    pub lofi_pre_scale: f64,
    /// Range within which the lo-fi (pre) detection probability is not scaled.
    pub lofi_pre_range: f64,
    /// Glare multiplier of the lo-fi (pre) perception inside the window; 1 disables it.
    pub lofi_pre_glare_factor: f64,
    /// Decay length of the concept-level range factor `f(r) = exp(-r / L)`.
    pub concept_range_scale: f64,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        Self {
            full_range: 10.0,
            far_range: 50.0,
            far_factor: 0.5,
            fog_coeff: 0.4,
            rain_coeff: 0.3,
            glare_start: 19.0,
            glare_end: 21.0,
            glare_factor: 0.03,
            glare_taper: 4.0,
            glare_range: 5.0,
            hifi_noise: 0.03,
            lofi_pre_noise: 0.02,
            lofi_pre_scale: 0.1,
            lofi_pre_range: 0.0,
            lofi_pre_glare_factor: 1.0,
            concept_range_scale: 4.0,
        }
    }
}

impl PerceptionConfig {
    /// Range-dependent factor: 1 up to `full_range`, then linear to `far_factor`.
    pub fn base(&self, range: f64) -> f64 {
        if range <= self.full_range {
            1.0
        } else {
            let s = ((range - self.full_range) / (self.far_range - self.full_range)).min(1.0);
            1.0 - (1.0 - self.far_factor) * s
        }
    }

    /// Range factor `f` of the concept-level model: `f(0) = 1`, decaying
    /// exponentially with range.
    pub fn concept_range_factor(&self, range: f64) -> f64 {
        (-range.max(0.0) / self.concept_range_scale).exp()
    }

    /// Glare multiplier: `glare_factor` inside the window, fading to 1 over
    /// `glare_taper` hours outside it with a squared-cosine profile.
    pub fn glare(&self, t_day: f64) -> f64 {
        self.glare_with(self.glare_factor, t_day)
    }

    fn glare_with(&self, factor: f64, t_day: f64) -> f64 {
        let outside = (self.glare_start - t_day).max(t_day - self.glare_end).max(0.0);
        let strength = if outside == 0.0 {
            1.0
        } else if outside < self.glare_taper {
            (0.5 * std::f64::consts::PI * outside / self.glare_taper).cos().powi(2)
        } else {
            0.0
        };
        1.0 - (1.0 - factor) * strength
    }

    fn weather(&self, w_fog: f64, w_rain: f64) -> f64 {
        (1.0 - self.fog_coeff * w_fog) * (1.0 - self.rain_coeff * w_rain)
    }

    pub fn hifi_detect_prob(&self, range: f64, x: &ScenarioParams) -> f64 {
        let glare = if range <= self.glare_range { 1.0 } else { self.glare(x.t_day) };
        (self.base(range) * self.weather(x.w_fog, x.w_rain) * glare).clamp(0.0, 1.0)
    }

    pub fn lofi_pre_detect_prob(&self, range: f64, x: &ScenarioParams) -> f64 {
        let scale = if range <= self.lofi_pre_range { 1.0 } else { self.lofi_pre_scale };
        let glare = if range <= self.glare_range { 1.0 } else { self.glare_with(self.lofi_pre_glare_factor, x.t_day) };
        (scale * glare * self.base(range) * self.weather(x.w_fog, x.w_rain)).clamp(0.0, 1.0)
    }

    pub fn lofi_post_detect_prob(&self, range: f64, p_detect: f64) -> f64 {
        (p_detect.clamp(0.0, 1.0) * self.concept_range_factor(range)).clamp(0.0, 1.0)
    }
}

/// Simulator configuration. `horizon / dt` must be a whole number of frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub dt: f64,
    /// AV launch acceleration, m/s^2.
    pub a_accel: f64,
    /// Time over which the deceleration limit ramps up to `g * mu`.
    pub decel_ramp_time: f64,
    pub reaction_time_lofi: f64,
    pub reaction_time_hifi: f64,
    pub horizon: f64,
    pub lane_width: f64,
    /// A pedestrian moving towards the lane is relevant within this many lane
    /// widths of the lane center.
    pub relevance_lane_widths: f64,
    /// Proportional speed-controller gain of the concept-level tier, 1/s.
    pub controller_gain: f64,
    /// Below this speed a stopping AV is held at standstill.
    pub standstill_speed: f64,
    pub perception: PerceptionConfig,
    pub physical: PhysicalConstants,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            a_accel: 2.0,
            decel_ramp_time: 0.2,
            reaction_time_lofi: 0.4,
            reaction_time_hifi: 0.2,
            horizon: 30.0,
            lane_width: 3.0,
            relevance_lane_widths: 1.5,
            controller_gain: 1.0,
            standstill_speed: 0.05,
            perception: PerceptionConfig::default(),
            physical: PhysicalConstants::default(),
        }
    }
}

fn whole_frames(duration: f64, dt: f64) -> Option<usize> {
    let n = (duration / dt).round();
    ((n * dt - duration).abs() <= 1e-9 * duration.max(1.0) && n >= 0.0).then_some(n as usize)
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.physical.validate()?;
        let positive = [
            ("dt", self.dt),
            ("a_accel", self.a_accel),
            ("decel_ramp_time", self.decel_ramp_time),
            ("horizon", self.horizon),
            ("lane_width", self.lane_width),
            ("relevance_lane_widths", self.relevance_lane_widths),
            ("controller_gain", self.controller_gain),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("sim.{name} must be positive, got {v}")));
            }
        }
        if self.reaction_time_hifi < 0.0 || self.reaction_time_lofi < 0.0 || self.standstill_speed < 0.0 {
            return Err(Error::Config("reaction times and standstill speed must be non-negative".into()));
        }
        if whole_frames(self.horizon, self.dt).is_none() {
            return Err(Error::Config(format!(
                "horizon {} is not a whole number of {} s frames",
                self.horizon, self.dt
            )));
        }
        let p = &self.perception;
        if !(p.full_range >= 0.0 && p.far_range > p.full_range) {
            return Err(Error::Config("perception ranges must satisfy 0 <= full_range < far_range".into()));
        }
        if !(0.0..=1.0).contains(&p.far_factor) || !(0.0..=1.0).contains(&p.glare_factor)
            || !(0.0..=1.0).contains(&p.lofi_pre_glare_factor)
        {
            return Err(Error::Config("perception factors must lie in [0, 1]".into()));
        }
        if !(p.glare_taper.is_finite() && p.glare_taper >= 0.0 && p.glare_range.is_finite() && p.glare_range >= 0.0 && p.lofi_pre_range.is_finite() && p.lofi_pre_range >= 0.0) {
            return Err(Error::Config("glare_taper, glare_range and lofi_pre_range must be finite and non-negative".into()));
        }
        if p.fog_coeff < 0.0 || p.rain_coeff < 0.0 || p.hifi_noise < 0.0 || p.lofi_pre_noise < 0.0 {
            return Err(Error::Config("perception coefficients must be non-negative".into()));
        }
        if !(p.lofi_pre_scale >= 0.0 && p.concept_range_scale > 0.0) {
            return Err(Error::Config("lofi_pre_scale must be >= 0 and concept_range_scale > 0".into()));
        }
        Ok(())
    }

    pub fn horizon_frames(&self) -> usize {
        whole_frames(self.horizon, self.dt).unwrap_or((self.horizon / self.dt).floor() as usize)
    }
}

/// Concept-level parameterization consumed by the post-transfer simulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoFiParams {
    pub d0: f64,
    pub v_av: f64,
    pub v_ped: f64,
    pub p_detect: f64,
    pub sigma_noise: f64,
    pub mu_fric: f64,
}

impl LoFiParams {
    pub const DIM: usize = 6;
    pub const NAMES: [&'static str; 6] = ["d0", "v_av", "v_ped", "p_detect", "sigma_noise", "mu_fric"];

    pub fn to_array(&self) -> [f64; 6] {
        [self.d0, self.v_av, self.v_ped, self.p_detect, self.sigma_noise, self.mu_fric]
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != Self::DIM {
            return Err(Error::Domain(format!("expected {} values, got {}", Self::DIM, v.len())));
        }
        Ok(Self { d0: v[0], v_av: v[1], v_ped: v[2], p_detect: v[3], sigma_noise: v[4], mu_fric: v[5] })
    }
}

/// Simulator tier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fidelity {
    Hifi,
    LofiPre,
    LofiPost,
}

/// One simulated frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Frame {
    pub time: f64,
    pub av_x: f64,
    pub av_v: f64,
    /// Pedestrian position; `None` before the trigger.
    pub ped_x: Option<f64>,
    pub ped_y: Option<f64>,
    pub detected: bool,
    pub perceived_x: Option<f64>,
    pub perceived_y: Option<f64>,
    /// Separation between AV body and pedestrian (clamped at 0).
    pub d: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub frames: Vec<Frame>,
}

impl Trace {
    /// Writes the frame table: `time,av_x,av_v,ped_x,ped_y,detected,d`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        writeln!(w, "time,av_x,av_v,ped_x,ped_y,detected,d")?;
        for f in &self.frames {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                f.time,
                f.av_x,
                f.av_v,
                opt(f.ped_x),
                opt(f.ped_y),
                u8::from(f.detected),
                opt(f.d)
            )?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum Control {
    /// Full braking with a ramped deceleration limit.
    RampedBrake,
    /// Proportional speed controller saturated by the ramped limit.
    Proportional,
}

#[derive(Clone, Copy)]
enum DetectionModel<'a> {
    Hifi(&'a ScenarioParams),
    LofiPre(&'a ScenarioParams),
    LofiPost(f64),
}

struct Episode<'a> {
    cfg: &'a SimConfig,
    d0: f64,
    v_av: f64,
    v_ped: f64,
    mu: f64,
    reaction_time: f64,
    noise_sigma: f64,
    control: Control,
    detection: DetectionModel<'a>,
}

impl Episode<'_> {
    fn detect_prob(&self, range: f64) -> f64 {
        let p = &self.cfg.perception;
        match self.detection {
            DetectionModel::Hifi(x) => p.hifi_detect_prob(range, x),
            DetectionModel::LofiPre(x) => p.lofi_pre_detect_prob(range, x),
            DetectionModel::LofiPost(p_detect) => p.lofi_post_detect_prob(range, p_detect),
        }
    }

    fn run(&self, seed: u64, mut trace: Option<&mut Trace>) -> Result<Outcome> {
        let cfg = self.cfg;
        let phys = &cfg.physical;
        let dt = cfg.dt;
        let n_max = cfg.horizon_frames();
        let stream = CounterStream::new(seed);
        let reaction_frames = (self.reaction_time / dt).round() as usize;
        let decel_max = phys.g * self.mu;
        let ramp_rate = decel_max / cfg.decel_ramp_time;
        let half_w = phys.av_width / 2.0;
        let r = phys.ped_radius;
        let lane_half = cfg.lane_width / 2.0;
        let relevance = cfg.relevance_lane_widths * cfg.lane_width;

        let mut x = 0.0_f64;
        let mut v = 0.0_f64;
        let mut decel_limit = 0.0_f64;
        let mut ped: Option<(f64, f64)> = None;
        // Last perceived pedestrian position and the frame it was observed.
        let mut track: Option<(f64, f64, usize)> = None;
        let mut qualifying_frame: Option<usize> = None;
        let mut d_min = f64::INFINITY;
        let mut contact: Option<f64> = None;
        let mut frames = 0usize;

        for k in 0..n_max {
            frames = k + 1;
            let t = (k + 1) as f64 * dt;
            let Some((px, py)) = ped else {
                let v_new = (v + cfg.a_accel * dt).min(self.v_av);
                x += 0.5 * (v + v_new) * dt;
                v = v_new;
                if v >= self.v_av {
                    ped = Some((x + self.d0, phys.lateral_start_offset));
                }
                if let Some(tr) = trace.as_deref_mut() {
                    let (ped_x, ped_y, d) = match ped {
                        Some((px, py)) => (Some(px), Some(py), Some(separation(x, px, py, phys).max(0.0))),
                        None => (None, None, None),
                    };
                    tr.frames.push(Frame {
                        time: t,
                        av_x: x,
                        av_v: v,
                        ped_x,
                        ped_y,
                        detected: false,
                        perceived_x: None,
                        perceived_y: None,
                        d,
                    });
                }
                continue;
            };

            // Perception.
            let range = (px - x).hypot(py);
            let detected = stream.uniform(k as u64, CH_DETECT) < self.detect_prob(range);
            let mut perceived = None;
            if detected {
                let eps = if self.noise_sigma > 0.0 {
                    self.noise_sigma * stream.normal(k as u64, CH_NOISE)
                } else {
                    0.0
                };
                let obs = (x + (px - x) * (1.0 + eps), py * (1.0 + eps));
                perceived = Some(obs);
                track = Some((obs.0, obs.1, k));
            }

            // Planning on the tracked pedestrian, propagated with its heading.
            let hazard = track.is_some_and(|(tx, ty, k_obs)| {
                let y_now = ty - self.v_ped * (k - k_obs) as f64 * dt;
                let ahead = tx + r > x - phys.av_length;
                let inside = y_now.abs() <= lane_half;
                let approaching = y_now > 0.0 && y_now <= relevance;
                ahead && (inside || approaching)
            });
            if hazard && qualifying_frame.is_none() {
                qualifying_frame = Some(k);
            }
            let reacting = qualifying_frame.is_some_and(|kq| k >= kq + reaction_frames);
            let v_target = if hazard && reacting { 0.0 } else { self.v_av };

            // Longitudinal dynamics.
            let accel = match self.control {
                Control::RampedBrake => {
                    if v_target < v {
                        decel_limit = (decel_limit + ramp_rate * dt).min(decel_max);
                        -decel_limit
                    } else {
                        decel_limit = 0.0;
                        cfg.a_accel.min((v_target - v) / dt)
                    }
                }
                Control::Proportional => {
                    let cmd = cfg.controller_gain * (v_target - v);
                    if cmd < 0.0 {
                        decel_limit = (decel_limit + ramp_rate * dt).min(decel_max);
                        cmd.max(-decel_limit)
                    } else {
                        decel_limit = 0.0;
                        cmd.min(cfg.a_accel)
                    }
                }
            };
            let mut v_new = (v + accel * dt).max(0.0);
            if v_target == 0.0 && v_new < cfg.standstill_speed {
                v_new = 0.0;
            }
            x += 0.5 * (v + v_new) * dt;
            v = v_new;

            let py = py - self.v_ped * dt;
            ped = Some((px, py));

            if !(x.is_finite() && v.is_finite() && py.is_finite()) {
                return Err(Error::SimulationFault { frame: k, reason: format!("x={x} v={v} ped_y={py}") });
            }

            let sep = separation(x, px, py, phys);
            if let Some(tr) = trace.as_deref_mut() {
                tr.frames.push(Frame {
                    time: t,
                    av_x: x,
                    av_v: v,
                    ped_x: Some(px),
                    ped_y: Some(py),
                    detected,
                    perceived_x: perceived.map(|p| p.0),
                    perceived_y: perceived.map(|p| p.1),
                    d: Some(sep.max(0.0)),
                });
            }
            if sep <= 0.0 {
                d_min = 0.0;
                contact = Some(v);
                break;
            }
            d_min = d_min.min(sep);

            let crossed = py <= -phys.lateral_start_offset;
            let exited = py < -(half_w + r);
            if crossed || (v == 0.0 && exited) {
                break;
            }
        }

        if !d_min.is_finite() {
            // Horizon ended before the trigger; report the clearance at the
            // largest separation the scenario can have.
            d_min = self.d0;
        }
        let (collided, v_av_col) = match contact {
            Some(vc) if vc > 0.0 => (true, vc),
            _ => (false, 0.0),
        };
        let d_min_star = extended_min_distance_with_gravity(d_min, collided, v_av_col, self.mu, phys.g)?;
        Ok(Outcome { d_min_star, collided, v_av_col, n_frames: frames })
    }
}

/// Distance between the AV body (front bumper at `x`) and the pedestrian
/// circle; non-positive on overlap.
fn separation(x: f64, px: f64, py: f64, phys: &PhysicalConstants) -> f64 {
    let dx = (x - phys.av_length - px).max(px - x).max(0.0);
    let dy = (py.abs() - phys.av_width / 2.0).max(0.0);
    dx.hypot(dy) - phys.ped_radius
}

fn hifi_episode<'a>(cfg: &'a SimConfig, params: &'a ScenarioParams) -> Episode<'a> {
    Episode {
        cfg,
        d0: params.d0,
        v_av: params.v_av,
        v_ped: params.v_ped,
        mu: friction(params.w_rain),
        reaction_time: cfg.reaction_time_hifi,
        noise_sigma: cfg.perception.hifi_noise,
        control: Control::RampedBrake,
        detection: DetectionModel::Hifi(params),
    }
}

fn lofi_pre_episode<'a>(cfg: &'a SimConfig, params: &'a ScenarioParams) -> Episode<'a> {
    Episode {
        cfg,
        d0: params.d0,
        v_av: params.v_av,
        v_ped: params.v_ped,
        mu: friction(params.w_rain),
        reaction_time: cfg.reaction_time_lofi,
        noise_sigma: cfg.perception.lofi_pre_noise,
        control: Control::RampedBrake,
        detection: DetectionModel::LofiPre(params),
    }
}

fn lofi_post_episode<'a>(cfg: &'a SimConfig, params: &'a LoFiParams) -> Episode<'a> {
    Episode {
        cfg,
        d0: params.d0,
        v_av: params.v_av,
        v_ped: params.v_ped,
        mu: params.mu_fric,
        reaction_time: cfg.reaction_time_lofi,
        noise_sigma: params.sigma_noise.max(0.0),
        control: Control::Proportional,
        detection: DetectionModel::LofiPost(params.p_detect),
    }
}

fn check_scenario(params: &ScenarioParams) -> Result<()> {
    params.validate()
}

fn check_lofi(params: &LoFiParams) -> Result<()> {
    let a = params.to_array();
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("non-finite concept parameter in {params:?}")));
    }
    if params.d0 <= 0.0 || params.v_av <= 0.0 || params.v_ped <= 0.0 || params.mu_fric <= 0.0 {
        return Err(Error::Domain(format!("d0, speeds and friction must be positive: {params:?}")));
    }
    Ok(())
}

/// High-fidelity run (stand-in for the trustworthy 3D setup).
pub fn run_hifi(cfg: &SimConfig, params: &ScenarioParams, seed: u64) -> Result<Outcome> {
    check_scenario(params)?;
    hifi_episode(cfg, params).run(seed, None)
}

pub fn run_hifi_traced(cfg: &SimConfig, params: &ScenarioParams, seed: u64) -> Result<(Outcome, Trace)> {
    check_scenario(params)?;
    let mut trace = Trace::default();
    let out = hifi_episode(cfg, params).run(seed, Some(&mut trace))?;
    Ok((out, trace))
}

/// Low-fidelity run on the same parameterization (pre-metamodel transfer).
pub fn run_lofi_pre(cfg: &SimConfig, params: &ScenarioParams, seed: u64) -> Result<Outcome> {
    check_scenario(params)?;
    lofi_pre_episode(cfg, params).run(seed, None)
}

pub fn run_lofi_pre_traced(cfg: &SimConfig, params: &ScenarioParams, seed: u64) -> Result<(Outcome, Trace)> {
    check_scenario(params)?;
    let mut trace = Trace::default();
    let out = lofi_pre_episode(cfg, params).run(seed, Some(&mut trace))?;
    Ok((out, trace))
}

/// Concept-level run on abstract parameters (post-metamodel transfer).
pub fn run_lofi_post(cfg: &SimConfig, params: &LoFiParams, seed: u64) -> Result<Outcome> {
    check_lofi(params)?;
    lofi_post_episode(cfg, params).run(seed, None)
}

pub fn run_lofi_post_traced(cfg: &SimConfig, params: &LoFiParams, seed: u64) -> Result<(Outcome, Trace)> {
    check_lofi(params)?;
    let mut trace = Trace::default();
    let out = lofi_post_episode(cfg, params).run(seed, Some(&mut trace))?;
    Ok((out, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(d0: f64, v_av: f64, v_ped: f64) -> ScenarioParams {
        ScenarioParams { t_day: 12.0, w_fog: 0.0, w_wind: 0.2, w_rain: 0.0, d0, v_av, v_ped }
    }

    #[test]
    fn default_config_is_valid() {
        let cfg = SimConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.horizon_frames(), 600);
        assert!(SimConfig { horizon: 30.02, ..cfg }.validate().is_err());
        assert!(SimConfig { dt: 0.0, ..cfg }.validate().is_err());
    }

    #[test]
    fn detection_curves() {
        let p = PerceptionConfig::default();
        assert_eq!(p.base(5.0), 1.0);
        assert!((p.base(30.0) - 0.75).abs() < 1e-12);
        assert!((p.base(50.0) - 0.5).abs() < 1e-12);
        assert_eq!(p.concept_range_factor(0.0), 1.0);
        let x = params(20.0, 6.0, 1.4);
        let dusk = ScenarioParams { t_day: 20.0, ..x };
        assert!((p.hifi_detect_prob(8.0, &dusk) - 0.03).abs() < 1e-12);
        assert_eq!(p.hifi_detect_prob(5.0, &dusk), 1.0);
        assert!((p.lofi_pre_detect_prob(8.0, &dusk) - 0.1).abs() < 1e-12);
        assert_eq!(p.hifi_detect_prob(8.0, &ScenarioParams { t_day: 12.0, ..x }), 1.0);
        assert!((p.glare(23.0) - 0.515).abs() < 1e-12);
        assert!((p.glare(17.0) - 0.515).abs() < 1e-12);
        assert_eq!(p.glare(25.0), 1.0);
        let lofi_glare = PerceptionConfig { lofi_pre_glare_factor: 0.5, lofi_pre_scale: 1.0, ..p };
        assert!((lofi_glare.lofi_pre_detect_prob(8.0, &dusk) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn runs_are_deterministic() {
        let cfg = SimConfig::default();
        let x = ScenarioParams { t_day: 20.0, w_fog: 0.3, ..params(12.0, 6.0, 1.6) };
        for seed in [0, 1, 99, u64::MAX] {
            assert_eq!(run_hifi(&cfg, &x, seed).unwrap(), run_hifi(&cfg, &x, seed).unwrap());
            assert_eq!(run_lofi_pre(&cfg, &x, seed).unwrap(), run_lofi_pre(&cfg, &x, seed).unwrap());
        }
        let lo = LoFiParams { d0: 12.0, v_av: 6.0, v_ped: 1.6, p_detect: 0.6, sigma_noise: 0.03, mu_fric: 0.7 };
        assert_eq!(run_lofi_post(&cfg, &lo, 5).unwrap(), run_lofi_post(&cfg, &lo, 5).unwrap());
    }

    #[test]
    fn trigger_places_pedestrian_at_d0() {
        let cfg = SimConfig::default();
        let x = params(17.5, 6.1, 1.4);
        let (_, trace) = run_hifi_traced(&cfg, &x, 3).unwrap();
        let first = trace.frames.iter().position(|f| f.ped_x.is_some()).unwrap();
        let f = trace.frames[first];
        assert_eq!(f.av_v, 6.1);
        assert!(trace.frames[..first].iter().all(|f| f.av_v < 6.1));
        assert!((f.ped_x.unwrap() - f.av_x - 17.5).abs() < 1e-12);
    }

    #[test]
    fn trace_invariants() {
        let cfg = SimConfig::default();
        let x = ScenarioParams { t_day: 20.0, ..params(11.0, 6.0, 1.7) };
        for seed in 0..50 {
            let (out, trace) = run_hifi_traced(&cfg, &x, seed).unwrap();
            assert_eq!(trace.frames.len(), out.n_frames);
            assert!(trace.frames.len() <= cfg.horizon_frames());
            assert!(trace.frames.iter().filter_map(|f| f.d).all(|d| d >= 0.0));
            assert_eq!(out.collided, out.d_min_star < 0.0);
            assert!(out.v_av_col <= x.v_av + cfg.a_accel * cfg.dt);
        }
    }

    #[test]
    fn trace_csv_layout() {
        let cfg = SimConfig::default();
        let (_, trace) = run_hifi_traced(&cfg, &params(30.0, 6.0, 1.4), 1).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "time,av_x,av_v,ped_x,ped_y,detected,d");
        assert_eq!(lines.count(), trace.frames.len());
        assert!(!text.contains('\r'));
    }

    #[test]
    fn far_pedestrian_is_safe() {
        let cfg = SimConfig::default();
        let x = ScenarioParams { w_wind: 0.0, ..params(50.0, 6.0, 0.8) };
        for seed in 0..200 {
            assert!(!run_hifi(&cfg, &x, seed).unwrap().collided);
        }
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let cfg = SimConfig::default();
        assert!(run_hifi(&cfg, &params(60.0, 6.0, 1.4), 0).is_err());
        assert!(run_hifi(&cfg, &params(f64::NAN, 6.0, 1.4), 0).is_err());
        let lo = LoFiParams { d0: 10.0, v_av: 6.0, v_ped: 1.4, p_detect: 0.5, sigma_noise: 0.0, mu_fric: f64::NAN };
        assert!(run_lofi_post(&cfg, &lo, 0).is_err());
    }
}
