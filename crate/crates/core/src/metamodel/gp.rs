//! Gaussian-process regression with a squared-exponential ARD kernel.
//!
//! Inputs and targets are standardized per dimension; all hyperparameters
//! live in standardized units. Hyperparameters maximize the log marginal
//! likelihood by derivative-free coordinate search from seeded random starts
//! in log space.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::rng::sample_rng;

/// Diagonal jitter values tried in turn when a factorization fails.
pub const JITTER_LADDER: [f64; 5] = [0.0, 1e-10, 1e-8, 1e-6, 1e-4];

/// Largest probability below 1 returned by [`event_probability`].
const P_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GpConfig {
    pub n_starts: usize,
    /// Seed of the random multi-start points.
    pub seed: u64,
    pub length_scale_bounds: [f64; 2],
    pub signal_var_bounds: [f64; 2],
    pub noise_var_bounds: [f64; 2],
    pub max_evals_per_start: usize,
    /// Coordinate search stops once every log-space step is below this.
    pub min_step: f64,
    /// Use the observation predictive (latent + noise variance) for the event
    /// probability instead of the latent predictive alone.
    pub event_includes_noise: bool,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            n_starts: 16,
            seed: 0,
            length_scale_bounds: [0.05, 10.0],
            signal_var_bounds: [1e-2, 1e2],
            noise_var_bounds: [1e-6, 1.0],
            max_evals_per_start: 300,
            min_step: 1e-2,
            event_includes_noise: true,
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_starts == 0 || self.max_evals_per_start == 0 {
            return Err(Error::Config("gp.n_starts and gp.max_evals_per_start must be positive".into()));
        }
        for (name, [lo, hi]) in [
            ("length_scale_bounds", self.length_scale_bounds),
            ("signal_var_bounds", self.signal_var_bounds),
            ("noise_var_bounds", self.noise_var_bounds),
        ] {
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return Err(Error::Config(format!("gp.{name} must satisfy 0 < lower <= upper, got [{lo}, {hi}]")));
            }
        }
        if !(self.min_step > 0.0) {
            return Err(Error::Config("gp.min_step must be positive".into()));
        }
        Ok(())
    }
}

/// Kernel hyperparameters in standardized units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparameters {
    pub length_scales: Vec<f64>,
    pub signal_var: f64,
    pub noise_var: f64,
}

impl Hyperparameters {
    fn from_log(t: &[f64]) -> Self {
        let d = t.len() - 2;
        Self {
            length_scales: t[..d].iter().map(|v| v.exp()).collect(),
            signal_var: t[d].exp(),
            noise_var: t[d + 1].exp(),
        }
    }
}

/// Serialized form of a fitted model (the factorization is recomputed on load).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpSnapshot {
    pub x_mean: Vec<f64>,
    pub x_scale: Vec<f64>,
    pub y_mean: f64,
    pub y_scale: f64,
    pub hyper: Hyperparameters,
    /// Diagonal jitter that made the kernel matrix factorizable.
    pub jitter: f64,
    pub event_includes_noise: bool,
    pub x_train: Vec<Vec<f64>>,
    pub y_train: Vec<f64>,
}

/// Fitted GP with cached Cholesky factor of `K + (noise + jitter) I`.
#[derive(Debug, Clone)]
pub struct GpModel {
    snapshot: GpSnapshot,
    z_train: Vec<Vec<f64>>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    log_marginal_likelihood: f64,
}

/// Result of [`fit_gp`].
#[derive(Debug, Clone)]
pub struct GpFit {
    pub model: GpModel,
    /// Log marginal likelihood at each multi-start initial point.
    pub start_lml: Vec<f64>,
}

/// `Phi(-mean / std)`, kept strictly inside `(0, 1)`.
pub fn event_probability(mean: f64, std: f64) -> f64 {
    let z = mean / std;
    let p = if z.is_nan() { 0.5 } else { 0.5 * erfc(z / std::f64::consts::SQRT_2) };
    p.clamp(f64::MIN_POSITIVE, P_MAX)
}

fn standardize_columns(x: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len() as f64;
    let d = x[0].len();
    let mean: Vec<f64> = (0..d).map(|k| x.iter().map(|r| r[k]).sum::<f64>() / n).collect();
    let scale = (0..d)
        .map(|k| {
            let var = x.iter().map(|r| (r[k] - mean[k]).powi(2)).sum::<f64>() / n;
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}

#[inline]
fn se_kernel(a: &[f64], b: &[f64], h: &Hyperparameters) -> f64 {
    let q: f64 = a
        .iter()
        .zip(b)
        .zip(&h.length_scales)
        .map(|((ai, bi), l)| {
            let u = (ai - bi) / l;
            u * u
        })
        .sum();
    h.signal_var * (-0.5 * q).exp()
}

fn gram(z: &[Vec<f64>], h: &Hyperparameters, diag: f64) -> DMatrix<f64> {
    let n = z.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = h.signal_var + diag;
        for j in 0..i {
            let v = se_kernel(&z[i], &z[j], h);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Factorizes with the smallest jitter from [`JITTER_LADDER`] that works.
fn factorize(z: &[Vec<f64>], h: &Hyperparameters) -> Option<(Cholesky<f64, Dyn>, f64)> {
    JITTER_LADDER.iter().find_map(|&jitter| {
        let k = gram(z, h, h.noise_var + jitter);
        Cholesky::new(k).map(|c| (c, jitter))
    })
}

fn lml_from(chol: &Cholesky<f64, Dyn>, y: &DVector<f64>) -> (f64, DVector<f64>) {
    let alpha = chol.solve(y);
    let n = y.len() as f64;
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
    let lml = -0.5 * y.dot(&alpha) - log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln();
    (lml, alpha)
}

/// Log marginal likelihood of standardized data; `-inf` if not factorizable.
fn lml(z: &[Vec<f64>], y: &DVector<f64>, h: &Hyperparameters) -> f64 {
    match factorize(z, h) {
        Some((chol, _)) => {
            let v = lml_from(&chol, y).0;
            if v.is_finite() {
                v
            } else {
                f64::NEG_INFINITY
            }
        }
        None => f64::NEG_INFINITY,
    }
}

fn coordinate_search<F: FnMut(&[f64]) -> f64>(
    start: Vec<f64>,
    bounds: &[(f64, f64)],
    cfg: &GpConfig,
    mut f: F,
) -> (Vec<f64>, f64) {
    let mut theta = start;
    let mut best = f(&theta);
    let mut evals = 1;
    let mut step = vec![1.0_f64; theta.len()];
    while evals < cfg.max_evals_per_start && step.iter().any(|s| *s >= cfg.min_step) {
        for c in 0..theta.len() {
            if step[c] < cfg.min_step {
                continue;
            }
            let mut moved = false;
            for dir in [1.0, -1.0] {
                let mut cand = theta.clone();
                cand[c] = (theta[c] + dir * step[c]).clamp(bounds[c].0, bounds[c].1);
                if cand[c] == theta[c] {
                    continue;
                }
                let v = f(&cand);
                evals += 1;
                if v > best {
                    theta = cand;
                    best = v;
                    moved = true;
                    break;
                }
            }
            step[c] = if moved { (step[c] * 2.0).min(2.0) } else { step[c] * 0.5 };
            if evals >= cfg.max_evals_per_start {
                break;
            }
        }
    }
    (theta, best)
}

/// Fits a GP to `(x, y)` by multi-start maximization of the marginal likelihood.
pub fn fit_gp(x: &[Vec<f64>], y: &[f64], cfg: &GpConfig) -> Result<GpFit> {
    cfg.validate()?;
    if x.len() != y.len() || x.len() < 10 {
        return Err(Error::Domain(format!("need >= 10 paired samples, got {} inputs and {} targets", x.len(), y.len())));
    }
    let d = x[0].len();
    if d == 0 || x.iter().any(|r| r.len() != d || r.iter().any(|v| !v.is_finite())) || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("GP training data must be finite with consistent dimension".into()));
    }
    let (x_mean, x_scale) = standardize_columns(x);
    let (y_mean, y_scale) = {
        let (m, s) = standardize_columns(&y.iter().map(|v| vec![*v]).collect::<Vec<_>>());
        (m[0], s[0])
    };
    let z: Vec<Vec<f64>> = x.iter().map(|r| standardize(r, &x_mean, &x_scale)).collect();
    let yz = DVector::from_iterator(y.len(), y.iter().map(|v| (v - y_mean) / y_scale));

    let mut bounds: Vec<(f64, f64)> = vec![(cfg.length_scale_bounds[0].ln(), cfg.length_scale_bounds[1].ln()); d];
    bounds.push((cfg.signal_var_bounds[0].ln(), cfg.signal_var_bounds[1].ln()));
    bounds.push((cfg.noise_var_bounds[0].ln(), cfg.noise_var_bounds[1].ln()));

    let mut rng = sample_rng(cfg.seed);
    let starts: Vec<Vec<f64>> = (0..cfg.n_starts)
        .map(|_| bounds.iter().map(|&(lo, hi)| if hi > lo { rng.random_range(lo..=hi) } else { lo }).collect())
        .collect();

    let objective = |t: &[f64]| lml(&z, &yz, &Hyperparameters::from_log(t));
    let mut start_lml = Vec::with_capacity(starts.len());
    let mut best: Option<(Vec<f64>, f64)> = None;
    for s in starts {
        start_lml.push(objective(&s));
        let (t, v) = coordinate_search(s, &bounds, cfg, objective);
        if best.as_ref().is_none_or(|(_, bv)| v > *bv) {
            best = Some((t, v));
        }
    }
    let (theta, _) = best.expect("at least one start");
    if !objective(&theta).is_finite() {
        return Err(Error::Fit("kernel matrix not positive definite for any start, even with jitter 1e-4".into()));
    }
    let snapshot = GpSnapshot {
        x_mean,
        x_scale,
        y_mean,
        y_scale,
        hyper: Hyperparameters::from_log(&theta),
        jitter: 0.0,
        event_includes_noise: cfg.event_includes_noise,
        x_train: x.to_vec(),
        y_train: y.to_vec(),
    };
    let model = GpModel::from_snapshot(snapshot)?;
    Ok(GpFit { model, start_lml })
}

fn standardize(x: &[f64], mean: &[f64], scale: &[f64]) -> Vec<f64> {
    x.iter().zip(mean).zip(scale).map(|((v, m), s)| (v - m) / s).collect()
}

impl GpModel {
    /// Rebuilds the cached factorization from serialized state.
    ///
    /// The stored jitter is a lower bound; the smallest working value at or
    /// above it is used.
    pub fn from_snapshot(mut snapshot: GpSnapshot) -> Result<Self> {
        let d = snapshot.x_mean.len();
        let s = &snapshot;
        if s.x_scale.len() != d
            || s.hyper.length_scales.len() != d
            || s.x_train.len() != s.y_train.len()
            || s.x_train.is_empty()
            || s.x_train.iter().any(|r| r.len() != d)
        {
            return Err(Error::Fit("inconsistent GP snapshot shapes".into()));
        }
        let all_positive = s.x_scale.iter().chain(&s.hyper.length_scales).chain([&s.y_scale, &s.hyper.signal_var, &s.hyper.noise_var]);
        if all_positive.into_iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Fit("GP scales and hyperparameters must be positive".into()));
        }
        let z: Vec<Vec<f64>> = s.x_train.iter().map(|r| standardize(r, &s.x_mean, &s.x_scale)).collect();
        let yz = DVector::from_iterator(s.y_train.len(), s.y_train.iter().map(|v| (v - s.y_mean) / s.y_scale));
        let start = s.jitter;
        let (chol, jitter) = std::iter::once(start)
            .chain(JITTER_LADDER.iter().copied().filter(|j| *j > start))
            .find_map(|jitter| Cholesky::new(gram(&z, &s.hyper, s.hyper.noise_var + jitter)).map(|c| (c, jitter)))
            .ok_or_else(|| Error::Fit("kernel matrix not positive definite after jitter escalation up to 1e-4".into()))?;
        let (lml, alpha) = lml_from(&chol, &yz);
        snapshot.jitter = jitter;
        Ok(Self { snapshot, z_train: z, chol, alpha, log_marginal_likelihood: lml })
    }

    pub fn snapshot(&self) -> &GpSnapshot {
        &self.snapshot
    }

    pub fn hyperparameters(&self) -> &Hyperparameters {
        &self.snapshot.hyper
    }

    pub fn dim(&self) -> usize {
        self.snapshot.x_mean.len()
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal_likelihood
    }

    /// Log marginal likelihood of this model's training data under `hyper`.
    pub fn log_marginal_likelihood_at(&self, hyper: &Hyperparameters) -> f64 {
        let s = &self.snapshot;
        let yz = DVector::from_iterator(s.y_train.len(), s.y_train.iter().map(|v| (v - s.y_mean) / s.y_scale));
        lml(&self.z_train, &yz, hyper)
    }

    /// Latent mean and variance in standardized units.
    fn latent(&self, x: &[f64]) -> (f64, f64) {
        let s = &self.snapshot;
        let h = &s.hyper;
        let z = standardize(x, &s.x_mean, &s.x_scale);
        let k = DVector::from_iterator(self.z_train.len(), self.z_train.iter().map(|t| se_kernel(&z, t, h)));
        let mean = k.dot(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&k)
            .expect("Cholesky factor has a positive diagonal");
        let var = (h.signal_var - v.norm_squared()).max(1e-12 * h.signal_var);
        (mean, var)
    }

    /// Posterior predictive mean and latent (noise-free) standard deviation.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let s = &self.snapshot;
        let (m, var) = self.latent(x);
        (s.y_mean + s.y_scale * m, s.y_scale * var.sqrt())
    }

    /// Predictive mean and standard deviation of a new observation.
    pub fn predict_observation(&self, x: &[f64]) -> (f64, f64) {
        let s = &self.snapshot;
        let (m, var) = self.latent(x);
        (s.y_mean + s.y_scale * m, s.y_scale * (var + s.hyper.noise_var).sqrt())
    }

    /// `P(d*_min < 0 | model, x)`, strictly inside `(0, 1)`.
    pub fn event_prob(&self, x: &[f64]) -> f64 {
        let (mean, std) = if self.snapshot.event_includes_noise { self.predict_observation(x) } else { self.predict(x) };
        event_probability(mean, std)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.snapshot)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Self::from_snapshot(serde_json::from_str(json)?)
    }
}
