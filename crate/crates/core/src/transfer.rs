//! Heterogeneous transfer from scenario parameters to concept parameters.
//!
//! The concept-level simulator knows nothing about weather or time of day;
//! their effect on perception and braking is folded into `p_detect` and
//! `mu_fric`. `w_wind` has no image under the transfer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::EventModel;
use crate::scenario::{friction, ScenarioParams};
use crate::sim::LoFiParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransferConfig {
    pub sigma_noise_fixed: f64,
    pub fog_coeff: f64,
    pub rain_coeff: f64,
    pub diurnal_coeff: f64,
    /// Clamp `p_detect` into `[0, 1]` instead of letting the metamodel extrapolate.
    pub clamp_p_detect: bool,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self { sigma_noise_fixed: 0.03, fog_coeff: 0.4, rain_coeff: 0.4, diurnal_coeff: 0.2, clamp_p_detect: false }
    }
}

impl TransferConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [self.sigma_noise_fixed, self.fog_coeff, self.rain_coeff, self.diurnal_coeff];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config(format!("transfer coefficients must be non-negative: {self:?}")));
        }
        Ok(())
    }
}

/// `P_detect = 1 - c_fog w_fog - c_rain w_rain - c_day |t_day - 12| / 12`.
pub fn p_detect(x: &ScenarioParams, cfg: &TransferConfig) -> f64 {
    let p = 1.0 - cfg.fog_coeff * x.w_fog - cfg.rain_coeff * x.w_rain - cfg.diurnal_coeff * (x.t_day - 12.0).abs() / 12.0;
    if cfg.clamp_p_detect {
        p.clamp(0.0, 1.0)
    } else {
        p
    }
}

/// Maps `x_l` to `x_q`; `(d0, v_av, v_ped)` are copied unchanged.
pub fn transfer_post(x: &ScenarioParams, cfg: &TransferConfig) -> LoFiParams {
    LoFiParams {
        d0: x.d0,
        v_av: x.v_av,
        v_ped: x.v_ped,
        p_detect: p_detect(x, cfg),
        sigma_noise: cfg.sigma_noise_fixed,
        mu_fric: friction(x.w_rain),
    }
}

/// Scores scenario parameters with a concept-level model: `P(E | M̂_q, T(x))`.
#[derive(Debug, Clone)]
pub struct PostTransfer<M> {
    pub inner: M,
    pub cfg: TransferConfig,
}

impl<M: EventModel<LoFiParams>> EventModel<ScenarioParams> for PostTransfer<M> {
    fn event_prob(&self, x: &ScenarioParams) -> f64 {
        self.inner.event_prob(&transfer_post(x, &self.cfg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn x(t_day: f64, w_fog: f64, w_rain: f64) -> ScenarioParams {
        ScenarioParams { t_day, w_fog, w_wind: 0.7, w_rain, d0: 21.0, v_av: 6.1, v_ped: 1.3 }
    }

    #[test]
    fn examples() {
        let cfg = TransferConfig::default();
        let q = transfer_post(&x(12.0, 0.0, 0.0), &cfg);
        assert_eq!((q.p_detect, q.sigma_noise, q.mu_fric), (1.0, 0.03, 0.9));
        assert_eq!((q.d0, q.v_av, q.v_ped), (21.0, 6.1, 1.3));
        assert!((transfer_post(&x(12.0, 0.5, 0.0), &cfg).p_detect - 0.8).abs() < 1e-15);
        assert!(transfer_post(&x(0.0, 1.0, 1.0), &cfg).p_detect.abs() < 1e-15);
        let clamped = TransferConfig { clamp_p_detect: true, ..cfg };
        assert_eq!(transfer_post(&x(0.0, 1.0, 1.0), &clamped).p_detect, 0.0);
        let steep = TransferConfig { diurnal_coeff: 0.3, ..cfg };
        assert!(transfer_post(&x(0.0, 1.0, 1.0), &steep).p_detect < 0.0);
    }

    proptest! {
        #[test]
        fn p_detect_monotone(t in 0.0f64..24.0, f in 0.0f64..1.0, r in 0.0f64..1.0, df in 0.0f64..0.5, dr in 0.0f64..0.5) {
            let cfg = TransferConfig::default();
            let base = p_detect(&x(t, f, r), &cfg);
            prop_assert!(p_detect(&x(t, (f + df).min(1.0), r), &cfg) <= base);
            prop_assert!(p_detect(&x(t, f, (r + dr).min(1.0)), &cfg) <= base);
            let further = if t >= 12.0 { (t + df).min(23.99) } else { (t - df).max(0.0) };
            prop_assert!(p_detect(&x(further, f, r), &cfg) <= base);
        }
    }
}
