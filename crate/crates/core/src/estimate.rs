//! Risk estimators: Monte Carlo, importance sampling and metamodel-based
//! importance sampling (AIS when the metamodel describes the estimation setup
//! itself, TIS when it describes a cheaper setup).
//!
//! Every estimator reduces to the running mean of per-run contributions `y_i`:
//!
//! | estimator | `x_i` drawn from     | `y_i`                      |
//! |-----------|----------------------|----------------------------|
//! | MC        | `p`                  | `J_i`                      |
//! | IS        | `q`                  | `J_i p(x_i) / q(x_i)`      |
//! | AIS / TIS | `q ∝ P(E|M̂,x) p(x)`  | `ℓ_M̂ J_i / P(E|M̂,x_i)`     |
//!
//! The variance of the mean uses the `1/N` (population) variance of the
//! contributions, so for MC the reported relative standard deviation is exactly
//! `sqrt((1 - ℓ̂) / (ℓ̂ N))`.
//!
//! Run `i` draws its parameters from `sample_rng(split(seed_i, 0))` and runs the
//! simulator with seed `split(seed_i, 1)`, where `seed_i = split(base_seed, i)`.
//! Runs may execute on several workers; contributions are accumulated in run
//! order, so results never depend on the worker count.

use std::io::Write;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{sample_rng, split, SampleRng};
use crate::scenario::{ScenarioParams, PARAM_NAMES};

/// One-sided 99 % standard normal quantile.
pub const Z_99: f64 = 2.3263;
/// Two-sided 95 % standard normal quantile.
pub const Z_95: f64 = 1.959964;
/// Consecutive rejections after which proposal sampling gives up.
pub const MAX_PROPOSAL_REJECTIONS: usize = 1_000_000;
/// Smallest normalization sample size.
pub const MIN_N_MC: usize = 10_000;
/// A contribution this many times the previous running mean is a surprise.
pub const SURPRISE_FACTOR: f64 = 10.0;

/// Binary outcome of one run in the estimation setup.
pub trait Runner<X>: Sync {
    fn indicator(&self, x: &X, seed: u64) -> Result<u8>;
}

/// Source of parameterizations.
pub trait ParamSource<X>: Sync {
    fn draw(&self, rng: &mut SampleRng) -> Result<X>;
}

/// Metamodel event probability `P(E | M̂, x)`.
pub trait EventModel<X>: Sync {
    fn event_prob(&self, x: &X) -> f64;
}

/// Flat numeric representation of a parameterization for CSV output.
pub trait Record {
    fn field_names() -> Vec<String>;
    fn field_values(&self) -> Vec<f64>;
}

impl Record for ScenarioParams {
    fn field_names() -> Vec<String> {
        PARAM_NAMES.iter().map(|s| s.to_string()).collect()
    }

    fn field_values(&self) -> Vec<f64> {
        self.to_array().to_vec()
    }
}

impl Record for usize {
    fn field_names() -> Vec<String> {
        vec!["x".into()]
    }

    fn field_values(&self) -> Vec<f64> {
        vec![*self as f64]
    }
}

impl<X, F: Fn(&X, u64) -> Result<u8> + Sync> Runner<X> for F {
    fn indicator(&self, x: &X, seed: u64) -> Result<u8> {
        self(x, seed)
    }
}

impl<X, M: EventModel<X> + ?Sized> EventModel<X> for &M {
    fn event_prob(&self, x: &X) -> f64 {
        (**self).event_prob(x)
    }
}

/// `max(P, floor)`: hedges against a metamodel that underestimates `P`.
#[derive(Debug, Clone, Copy)]
pub struct SkewFloor<'a, M: ?Sized> {
    pub inner: &'a M,
    pub floor: f64,
}

impl<X, M: EventModel<X> + ?Sized> EventModel<X> for SkewFloor<'_, M> {
    fn event_prob(&self, x: &X) -> f64 {
        self.inner.event_prob(x).max(self.floor)
    }
}

/// Draws from `q ∝ P(E|M̂,x) p(x)` by accepting `x ~ p` with probability `P`.
pub struct RejectionSampler<'a, X> {
    pub model: &'a dyn EventModel<X>,
    pub p: &'a dyn ParamSource<X>,
}

impl<X> ParamSource<X> for RejectionSampler<'_, X> {
    fn draw(&self, rng: &mut SampleRng) -> Result<X> {
        rejection_sample_q(self.model, self.p, rng)
    }
}

/// One accepted draw from the metamodel proposal.
pub fn rejection_sample_q<X>(model: &dyn EventModel<X>, p: &dyn ParamSource<X>, rng: &mut SampleRng) -> Result<X> {
    use rand::Rng;
    for _ in 0..MAX_PROPOSAL_REJECTIONS {
        let x = p.draw(rng)?;
        if rng.random::<f64>() < model.event_prob(&x) {
            return Ok(x);
        }
    }
    Err(Error::ProposalStarvation { attempts: MAX_PROPOSAL_REJECTIONS })
}

mod inf_as_string {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) if s == "inf" => Ok(f64::INFINITY),
            Repr::Str(s) => Err(serde::de::Error::custom(format!("expected number or \"inf\", got {s:?}"))),
        }
    }
}

/// Weighted estimate of `ℓ` after `n_runs` runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub mean: f64,
    /// Population variance of the per-run contributions.
    pub sample_variance_of_weights: f64,
    pub std_of_mean: f64,
    /// `std_of_mean / mean`; `"inf"` in JSON when the mean is 0.
    #[serde(with = "inf_as_string")]
    pub rel_std: f64,
    /// One-sided 99 % upper bound (rule of three when no event was observed).
    pub upper_99: f64,
    pub n_runs: usize,
    /// Metamodel training runs behind the proposal (0 for MC).
    pub n_q: usize,
}

impl RiskEstimate {
    fn from_moments(mean: f64, var: f64, n: usize, n_q: usize) -> Self {
        let std_of_mean = (var / n as f64).sqrt();
        let (rel_std, upper_99) = if mean > 0.0 {
            (std_of_mean / mean, mean + Z_99 * std_of_mean)
        } else {
            (f64::INFINITY, 3.0 / n as f64)
        };
        Self { mean, sample_variance_of_weights: var, std_of_mean, rel_std, upper_99, n_runs: n, n_q }
    }

    /// Recomputes the estimate from a history by a two-pass formula.
    pub fn from_history<X>(history: &ConvergenceHistory<X>, n_q: usize) -> Option<Self> {
        let n = history.records.len();
        if n == 0 {
            return None;
        }
        let mean = history.records.iter().map(|r| r.weight).sum::<f64>() / n as f64;
        let var = history.records.iter().map(|r| (r.weight - mean).powi(2)).sum::<f64>() / n as f64;
        Some(Self::from_moments(mean, var, n, n_q))
    }
}

/// Stopping rule: `z * std_of_mean <= rel_halfwidth * mean` after `min_runs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StoppingRule {
    pub min_runs: usize,
    pub z: f64,
    pub rel_halfwidth: f64,
}

impl Default for StoppingRule {
    fn default() -> Self {
        Self { min_runs: 30, z: Z_99, rel_halfwidth: 0.5 }
    }
}

impl StoppingRule {
    pub fn reached(&self, e: &RiskEstimate) -> bool {
        e.n_runs >= self.min_runs && e.mean > 0.0 && self.z * e.std_of_mean <= self.rel_halfwidth * e.mean
    }
}

/// Default stopping criterion: 1 % chance that the true risk exceeds the
/// estimate by more than 50 %, with a 30-run minimum.
pub fn stopping_reached(e: &RiskEstimate) -> bool {
    StoppingRule::default().reached(e)
}

/// Relative standard deviation of the MC estimator.
pub fn mc_rel_std(ell: f64, n: usize) -> Result<f64> {
    if !(ell > 0.0 && ell <= 1.0) || n == 0 {
        return Err(Error::Domain(format!("mc_rel_std needs ell in (0, 1] and N >= 1, got ({ell}, {n})")));
    }
    Ok(((1.0 - ell) / (ell * n as f64)).sqrt())
}

/// Zero-variance proposal `q*(x) = P(E|x) p(x) / ℓ` on a discrete space.
pub fn optimal_proposal_toy(p: &[f64], events: &[bool]) -> Result<Vec<f64>> {
    if p.len() != events.len() {
        return Err(Error::Domain("outcome probabilities and event flags differ in length".into()));
    }
    let ell: f64 = p.iter().zip(events).filter(|(_, e)| **e).map(|(p, _)| p).sum();
    if !events.iter().any(|e| *e) || ell <= 0.0 {
        return Err(Error::Domain("no event outcome with positive probability".into()));
    }
    Ok(p.iter().zip(events).map(|(p, e)| if *e { p / ell } else { 0.0 }).collect())
}

/// One row of a convergence history.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistoryRecord<X> {
    pub i: usize,
    pub x: X,
    pub seed: u64,
    pub j: u8,
    /// Weighted contribution `y_i`; the running mean is the mean of these.
    pub weight: f64,
    pub running_mean: f64,
    pub running_std: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub surprise: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceHistory<X> {
    pub records: Vec<HistoryRecord<X>>,
}

impl<X> Default for ConvergenceHistory<X> {
    fn default() -> Self {
        Self { records: Vec::new() }
    }
}

impl<X> ConvergenceHistory<X> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn surprise_count(&self) -> usize {
        self.records.iter().filter(|r| r.surprise).count()
    }
}

impl<X: Record> ConvergenceHistory<X> {
    /// CSV with columns `i, <params>, seed, J, weight, running_mean,
    /// running_std, surprise_flag, ci95_lower, ci95_upper`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = vec!["i".to_string()];
        header.extend(X::field_names());
        header.extend(
            ["seed", "J", "weight", "running_mean", "running_std", "surprise_flag", "ci95_lower", "ci95_upper"]
                .map(String::from),
        );
        writeln!(w, "{}", header.join(","))?;
        for r in &self.records {
            let params: Vec<String> = r.x.field_values().iter().map(|v| v.to_string()).collect();
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                r.i,
                params.join(","),
                r.seed,
                r.j,
                r.weight,
                r.running_mean,
                r.running_std,
                u8::from(r.surprise),
                r.ci_lower,
                r.ci_upper
            )?;
        }
        Ok(())
    }
}

/// How many runs to execute and on how many workers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunPlan {
    pub max_runs: usize,
    /// `None` runs exactly `max_runs`.
    pub stopping: Option<StoppingRule>,
    pub workers: usize,
}

impl RunPlan {
    pub fn fixed(n: usize) -> Self {
        Self { max_runs: n, stopping: None, workers: 1 }
    }

    pub fn until_stop(max_runs: usize) -> Self {
        Self { max_runs, stopping: Some(StoppingRule::default()), workers: 1 }
    }

    pub fn with_workers(self, workers: usize) -> Self {
        Self { workers, ..self }
    }
}

/// Executes index-keyed work on a fixed number of workers, preserving order.
struct Executor {
    pool: Option<rayon::ThreadPool>,
}

impl Executor {
    fn new(workers: usize) -> Result<Self> {
        if workers <= 1 {
            return Ok(Self { pool: None });
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
        Ok(Self { pool: Some(pool) })
    }

    fn batch_size(&self) -> usize {
        self.pool.as_ref().map_or(1, |p| 4 * p.current_num_threads())
    }

    fn map<T: Send, F: Fn(usize) -> T + Sync>(&self, range: std::ops::Range<usize>, f: F) -> Vec<T> {
        match &self.pool {
            None => range.map(f).collect(),
            Some(pool) => pool.install(|| range.into_par_iter().map(&f).collect()),
        }
    }
}

/// Running moments (Welford).
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, y: f64) {
        self.n += 1;
        let delta = y - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (y - self.mean);
    }

    fn variance(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.m2 / self.n as f64).max(0.0)
        }
    }
}

struct RunResult<X> {
    x: X,
    j: u8,
    y: f64,
}

/// Shared driver: evaluates runs in batches, accumulates in index order, and
/// stops at the first index where the stopping rule holds.
fn drive<X, F>(
    plan: &RunPlan,
    base_seed: u64,
    n_q: usize,
    flag_surprises: bool,
    history: &mut ConvergenceHistory<X>,
    eval: F,
) -> Result<RiskEstimate>
where
    X: Send,
    F: Fn(u64) -> Result<RunResult<X>> + Sync,
{
    if plan.max_runs == 0 {
        return Err(Error::Config("max_runs must be >= 1".into()));
    }
    let exec = Executor::new(plan.workers)?;
    let mut moments = Moments::default();
    let mut next = 0usize;
    while next < plan.max_runs {
        let end = (next + exec.batch_size()).min(plan.max_runs);
        let results = exec.map(next..end, |i| {
            let seed = split(base_seed, i as u64);
            (seed, eval(seed))
        });
        for (offset, (seed, result)) in results.into_iter().enumerate() {
            let i = next + offset;
            let RunResult { x, j, y } = result?;
            if !y.is_finite() {
                return Err(Error::NonFiniteWeight { run: i, detail: format!("contribution {y} with J = {j}") });
            }
            let surprise = flag_surprises && moments.n > 0 && moments.mean > 0.0 && y > SURPRISE_FACTOR * moments.mean;
            moments.push(y);
            let est = RiskEstimate::from_moments(moments.mean, moments.variance(), moments.n, n_q);
            history.records.push(HistoryRecord {
                i,
                x,
                seed,
                j,
                weight: y,
                running_mean: est.mean,
                running_std: est.std_of_mean,
                ci_lower: est.mean - Z_95 * est.std_of_mean,
                ci_upper: est.mean + Z_95 * est.std_of_mean,
                surprise,
            });
            if plan.stopping.is_some_and(|rule| rule.reached(&est)) {
                return Ok(est);
            }
        }
        next = end;
    }
    Ok(RiskEstimate::from_moments(moments.mean, moments.variance(), moments.n, n_q))
}

/// Order-preserving map over `0..n` on `workers` threads.
pub(crate) fn par_map<T: Send, F: Fn(usize) -> T + Sync>(workers: usize, n: usize, f: F) -> Result<Vec<T>> {
    Ok(Executor::new(workers)?.map(0..n, f))
}

/// Simulator seed of the run whose history seed is `seed`.
pub fn run_sim_seed(seed: u64) -> u64 {
    split(seed, 1)
}

fn run_rngs(seed: u64) -> (SampleRng, u64) {
    (sample_rng(split(seed, 0)), run_sim_seed(seed))
}

/// Crude Monte Carlo: `ℓ̂ = mean(J(x_i))`, `x_i ~ p`.
pub fn mc_estimate<X: Send>(
    runner: &dyn Runner<X>,
    p: &dyn ParamSource<X>,
    plan: &RunPlan,
    base_seed: u64,
    history: &mut ConvergenceHistory<X>,
) -> Result<RiskEstimate> {
    drive(plan, base_seed, 0, false, history, |seed| {
        let (mut rng, sim_seed) = run_rngs(seed);
        let x = p.draw(&mut rng)?;
        let j = runner.indicator(&x, sim_seed)?;
        Ok(RunResult { x, j, y: f64::from(j) })
    })
}

/// Importance sampling: `ℓ̂ = mean(J(x_i) w(x_i))`, `x_i ~ q`, `w = p / q`.
pub fn is_estimate<X: Send>(
    runner: &dyn Runner<X>,
    q: &dyn ParamSource<X>,
    weight: &(dyn Fn(&X) -> f64 + Sync),
    plan: &RunPlan,
    base_seed: u64,
    history: &mut ConvergenceHistory<X>,
) -> Result<RiskEstimate> {
    drive(plan, base_seed, 0, false, history, |seed| {
        let (mut rng, sim_seed) = run_rngs(seed);
        let x = q.draw(&mut rng)?;
        let w = weight(&x);
        if !(w.is_finite() && w > 0.0) {
            return Ok(RunResult { x, j: 0, y: f64::NAN });
        }
        let j = runner.indicator(&x, sim_seed)?;
        Ok(RunResult { x, j, y: f64::from(j) * w })
    })
}

/// MC estimate of `ℓ_M̂ = ∫ P(E|M̂,x) p(x) dx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationEstimate {
    pub mean: f64,
    pub n_mc: usize,
    /// Standard error of `mean`.
    pub std: f64,
}

impl NormalizationEstimate {
    /// An exactly known normalization (e.g. from enumeration).
    pub fn exact(mean: f64) -> Result<Self> {
        if !(mean > 0.0 && mean <= 1.0) {
            return Err(Error::Domain(format!("normalization must lie in (0, 1], got {mean}")));
        }
        Ok(Self { mean, n_mc: 0, std: 0.0 })
    }
}

const NORMALIZATION_CHUNK: usize = 4096;

/// Seed of the normalization estimate belonging to a campaign seed.
pub fn normalization_seed(base_seed: u64) -> u64 {
    split(base_seed, u64::MAX)
}

/// `(1/n_mc) Σ P(E|M̂,x_j)` with `x_j ~ p`, drawn in fixed chunks so the
/// result is independent of `workers`.
pub fn estimate_normalization<X>(
    model: &dyn EventModel<X>,
    p: &dyn ParamSource<X>,
    n_mc: usize,
    seed: u64,
    workers: usize,
) -> Result<NormalizationEstimate> {
    if n_mc < MIN_N_MC {
        return Err(Error::Config(format!("n_mc must be >= {MIN_N_MC}, got {n_mc}")));
    }
    let exec = Executor::new(workers)?;
    let n_chunks = n_mc.div_ceil(NORMALIZATION_CHUNK);
    let partial = exec.map(0..n_chunks, |c| -> Result<(f64, f64)> {
        let mut rng = sample_rng(split(seed, c as u64));
        let len = NORMALIZATION_CHUNK.min(n_mc - c * NORMALIZATION_CHUNK);
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..len {
            let v = model.event_prob(&p.draw(&mut rng)?);
            s += v;
            s2 += v * v;
        }
        Ok((s, s2))
    });
    let (mut s, mut s2) = (0.0, 0.0);
    for r in partial {
        let (a, b) = r?;
        s += a;
        s2 += b;
    }
    let n = n_mc as f64;
    let mean = s / n;
    let var = (s2 / n - mean * mean).max(0.0);
    Ok(NormalizationEstimate { mean, n_mc, std: (var / n).sqrt() })
}

/// Metamodel-based IS with a given normalization and proposal source:
/// `ℓ̂ = ℓ_M̂ mean(J(x_i) / P(E|M̂,x_i))`, `x_i ~ q`.
///
/// `q` must sample `P(E|M̂,x) p(x) / ℓ_M̂`; [`RejectionSampler`] does.
pub fn metamodel_is_estimate<X: Send>(
    runner: &dyn Runner<X>,
    model: &dyn EventModel<X>,
    normalization: &NormalizationEstimate,
    q: &dyn ParamSource<X>,
    plan: &RunPlan,
    base_seed: u64,
    n_q: usize,
    history: &mut ConvergenceHistory<X>,
) -> Result<RiskEstimate> {
    let ell_m = normalization.mean;
    drive(plan, base_seed, n_q, true, history, |seed| {
        let (mut rng, sim_seed) = run_rngs(seed);
        let x = q.draw(&mut rng)?;
        let prob = model.event_prob(&x);
        if !(prob > 0.0) {
            return Ok(RunResult { x, j: 0, y: f64::NAN });
        }
        let j = runner.indicator(&x, sim_seed)?;
        Ok(RunResult { x, j, y: ell_m * f64::from(j) / prob })
    })
}

/// Settings shared by the AIS and TIS estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetamodelIsSettings {
    pub n_mc: usize,
    pub n_q: usize,
    /// `P` is replaced by `max(P, floor)` in proposal, weights and normalization.
    pub skew_floor: Option<f64>,
}

/// Output of [`ais_estimate`] / [`tis_estimate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetamodelIsOutcome {
    pub estimate: RiskEstimate,
    pub normalization: NormalizationEstimate,
}

fn metamodel_estimate<X: Send>(
    runner: &dyn Runner<X>,
    model: &dyn EventModel<X>,
    p: &dyn ParamSource<X>,
    settings: &MetamodelIsSettings,
    plan: &RunPlan,
    base_seed: u64,
    history: &mut ConvergenceHistory<X>,
) -> Result<MetamodelIsOutcome> {
    let floored;
    let model: &dyn EventModel<X> = match settings.skew_floor {
        Some(floor) => {
            if !(floor > 0.0 && floor <= 1.0) {
                return Err(Error::Config(format!("skew floor must lie in (0, 1], got {floor}")));
            }
            floored = SkewFloor { inner: model, floor };
            &floored
        }
        None => model,
    };
    let normalization = estimate_normalization(model, p, settings.n_mc, normalization_seed(base_seed), plan.workers)?;
    let q = RejectionSampler { model, p };
    let estimate = metamodel_is_estimate(runner, model, &normalization, &q, plan, base_seed, settings.n_q, history)?;
    Ok(MetamodelIsOutcome { estimate, normalization })
}

/// Adaptive IS with a metamodel trained on the estimation setup itself.
pub fn ais_estimate<X: Send>(
    runner: &dyn Runner<X>,
    model: &dyn EventModel<X>,
    p: &dyn ParamSource<X>,
    settings: &MetamodelIsSettings,
    plan: &RunPlan,
    base_seed: u64,
    history: &mut ConvergenceHistory<X>,
) -> Result<MetamodelIsOutcome> {
    metamodel_estimate(runner, model, p, settings, plan, base_seed, history)
}

/// Transfer IS: the proposal comes from a metamodel of a cheaper setup
/// (possibly composed with a transfer function), while `runner` is the
/// trustworthy setup and always receives the original `x`.
pub fn tis_estimate<X: Send>(
    runner: &dyn Runner<X>,
    model_q: &dyn EventModel<X>,
    p: &dyn ParamSource<X>,
    settings: &MetamodelIsSettings,
    plan: &RunPlan,
    base_seed: u64,
    history: &mut ConvergenceHistory<X>,
) -> Result<MetamodelIsOutcome> {
    metamodel_estimate(runner, model_q, p, settings, plan, base_seed, history)
}

/// Discrete distribution over `0..probs.len()`, drawn by inversion.
#[derive(Debug, Clone)]
pub struct DiscreteSource {
    cdf: Vec<f64>,
}

impl DiscreteSource {
    pub fn new(probs: &[f64]) -> Result<Self> {
        let total: f64 = probs.iter().sum();
        if probs.is_empty() || probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || !(total > 0.0) {
            return Err(Error::Domain("discrete probabilities must be non-negative with positive sum".into()));
        }
        let mut acc = 0.0;
        let cdf = probs
            .iter()
            .map(|p| {
                acc += p / total;
                acc
            })
            .collect();
        Ok(Self { cdf })
    }
}

impl ParamSource<usize> for DiscreteSource {
    fn draw(&self, rng: &mut SampleRng) -> Result<usize> {
        use rand::Rng;
        let u: f64 = rng.random();
        Ok(self.cdf.iter().position(|c| u < *c).unwrap_or(self.cdf.len() - 1))
    }
}

/// Replays a fixed sequence of parameterizations in call order (single worker).
#[derive(Debug)]
pub struct ScriptedSource<X> {
    items: Vec<X>,
    next: Mutex<usize>,
}

impl<X: Clone> ScriptedSource<X> {
    pub fn new(items: Vec<X>) -> Self {
        Self { items, next: Mutex::new(0) }
    }
}

impl<X: Clone + Send + Sync> ParamSource<X> for ScriptedSource<X> {
    fn draw(&self, _rng: &mut SampleRng) -> Result<X> {
        let mut k = self.next.lock().expect("scripted source lock");
        let item = self
            .items
            .get(*k)
            .cloned()
            .ok_or_else(|| Error::Domain("scripted source exhausted".into()))?;
        *k += 1;
        Ok(item)
    }
}

/// Tabulated event probability over a discrete space.
#[derive(Debug, Clone)]
pub struct TableModel(pub Vec<f64>);

impl EventModel<usize> for TableModel {
    fn event_prob(&self, x: &usize) -> f64 {
        self.0[*x]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags_runner(flags: Vec<u8>) -> impl Fn(&usize, u64) -> Result<u8> + Sync {
        move |x: &usize, _| Ok(flags[*x])
    }

    #[test]
    fn rel_std_table() {
        assert_eq!(mc_rel_std(0.5, 1).unwrap(), 1.0);
        assert!((mc_rel_std(0.01, 9900).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(mc_rel_std(1.0, 7).unwrap(), 0.0);
        assert!(mc_rel_std(0.0, 10).is_err());
    }

    #[test]
    fn stopping_examples() {
        let e = |mean, std, n| RiskEstimate {
            mean,
            sample_variance_of_weights: 0.0,
            std_of_mean: std,
            rel_std: std / mean,
            upper_99: mean,
            n_runs: n,
            n_q: 0,
        };
        assert!(stopping_reached(&e(0.01, 0.001, 100)));
        assert!(!stopping_reached(&e(0.01, 0.003, 100)));
        assert!(!stopping_reached(&e(0.01, 0.0, 10)));
    }

    #[test]
    fn optimal_proposal_examples() {
        assert_eq!(optimal_proposal_toy(&[0.9, 0.1], &[false, true]).unwrap(), vec![0.0, 1.0]);
        assert_eq!(optimal_proposal_toy(&[0.5, 0.25, 0.25], &[false, true, true]).unwrap(), vec![0.0, 0.5, 0.5]);
        assert_eq!(optimal_proposal_toy(&[0.25; 4], &[true; 4]).unwrap(), vec![0.25; 4]);
        assert!(optimal_proposal_toy(&[0.5, 0.5], &[false, false]).is_err());
    }

    #[test]
    fn mc_all_events() {
        let p = DiscreteSource::new(&[1.0]).unwrap();
        let mut h = ConvergenceHistory::new();
        let e = mc_estimate(&flags_runner(vec![1]), &p, &RunPlan::fixed(50), 3, &mut h).unwrap();
        assert_eq!((e.mean, e.rel_std, e.std_of_mean), (1.0, 0.0, 0.0));
        assert_eq!(h.len(), 50);
    }

    #[test]
    fn zero_events_use_rule_of_three() {
        let p = DiscreteSource::new(&[1.0]).unwrap();
        let mut h = ConvergenceHistory::new();
        let e = mc_estimate(&flags_runner(vec![0]), &p, &RunPlan::fixed(300), 3, &mut h).unwrap();
        assert_eq!(e.mean, 0.0);
        assert!(e.rel_std.is_infinite());
        assert!((e.upper_99 - 0.01).abs() < 1e-15);
        let json = serde_json::to_string(&e).unwrap();
        assert!(json.contains("\"rel_std\":\"inf\""));
        assert_eq!(serde_json::from_str::<RiskEstimate>(&json).unwrap(), e);
    }

    #[test]
    fn unit_weights_reproduce_mc() {
        let p = DiscreteSource::new(&[0.7, 0.3]).unwrap();
        let runner = flags_runner(vec![0, 1]);
        let (mut a, mut b) = (ConvergenceHistory::new(), ConvergenceHistory::new());
        let mc = mc_estimate(&runner, &p, &RunPlan::fixed(500), 11, &mut a).unwrap();
        let is = is_estimate(&runner, &p, &|_: &usize| 1.0, &RunPlan::fixed(500), 11, &mut b).unwrap();
        assert_eq!(mc, is);
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_weight_aborts_with_partial_history() {
        let p = ScriptedSource::new(vec![0usize, 0, 1, 0]);
        let mut h = ConvergenceHistory::new();
        let w = |x: &usize| if *x == 1 { f64::INFINITY } else { 1.0 };
        let err = is_estimate(&flags_runner(vec![1, 1]), &p, &w, &RunPlan::fixed(4), 0, &mut h).unwrap_err();
        assert!(matches!(err, Error::NonFiniteWeight { run: 2, .. }));
        assert_eq!(h.len(), 2);
    }

    #[test]
    fn normalization_of_constant_model() {
        let p = DiscreteSource::new(&[0.2, 0.8]).unwrap();
        let n = estimate_normalization(&TableModel(vec![0.3, 0.3]), &p, 10_000, 5, 1).unwrap();
        assert!((n.mean - 0.3).abs() < 1e-12);
        assert!(estimate_normalization(&TableModel(vec![0.3, 0.3]), &p, 9_999, 5, 1).is_err());
    }

    #[test]
    fn history_recomputation_matches_stream() {
        let p = DiscreteSource::new(&[0.5, 0.3, 0.2]).unwrap();
        let model = TableModel(vec![0.05, 0.6, 0.9]);
        let norm = NormalizationEstimate::exact(0.5 * 0.05 + 0.3 * 0.6 + 0.2 * 0.9).unwrap();
        let q = RejectionSampler { model: &model, p: &p };
        let mut h = ConvergenceHistory::new();
        let e = metamodel_is_estimate(&flags_runner(vec![1, 0, 1]), &model, &norm, &q, &RunPlan::fixed(2000), 9, 0, &mut h)
            .unwrap();
        let r = RiskEstimate::from_history(&h, 0).unwrap();
        assert!((r.mean - e.mean).abs() < 1e-12);
        assert!((r.std_of_mean - e.std_of_mean).abs() < 1e-12);
    }

    #[test]
    fn workers_do_not_change_results() {
        let p = DiscreteSource::new(&[0.9, 0.1]).unwrap();
        let runner = |x: &usize, seed: u64| Ok(u8::from(*x == 1 && seed % 3 != 0));
        let (mut a, mut b) = (ConvergenceHistory::new(), ConvergenceHistory::new());
        let plan = RunPlan::until_stop(5000);
        let e1 = mc_estimate(&runner, &p, &plan, 2, &mut a).unwrap();
        let e8 = mc_estimate(&runner, &p, &plan.with_workers(8), 2, &mut b).unwrap();
        assert_eq!(e1, e8);
        assert_eq!(a, b);
    }

    #[test]
    fn surprise_flags_large_contribution() {
        let model = TableModel(vec![0.9, 1e-3]);
        let norm = NormalizationEstimate::exact(0.5 * 0.9 + 0.5 * 1e-3).unwrap();
        let q = ScriptedSource::new(vec![0usize, 0, 1, 0]);
        let mut h = ConvergenceHistory::new();
        metamodel_is_estimate(&flags_runner(vec![1, 1]), &model, &norm, &q, &RunPlan::fixed(4), 0, 0, &mut h).unwrap();
        let flags: Vec<bool> = h.records.iter().map(|r| r.surprise).collect();
        assert_eq!(flags, vec![false, false, true, false]);
    }

    #[test]
    fn history_csv_header() {
        let p = DiscreteSource::new(&[1.0]).unwrap();
        let mut h = ConvergenceHistory::new();
        mc_estimate(&flags_runner(vec![1]), &p, &RunPlan::fixed(2), 0, &mut h).unwrap();
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "i,x,seed,J,weight,running_mean,running_std,surprise_flag,ci95_lower,ci95_upper"
        );
        assert_eq!(text.lines().count(), 3);
    }
}
