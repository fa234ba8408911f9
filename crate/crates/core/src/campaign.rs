//! Campaign configuration, metamodel derivation, estimation campaigns and the
//! cost comparison used by the command-line front-end.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::density::{Density, DensityConfig};
use crate::error::{Error, Result};
use crate::estimate::{
    ais_estimate, estimate_normalization, mc_estimate, normalization_seed, par_map, tis_estimate, ConvergenceHistory,
    EventModel, MetamodelIsSettings, NormalizationEstimate, RiskEstimate, RunPlan, Runner, SkewFloor, StoppingRule,
    MIN_N_MC,
};
use crate::metamodel::{fit_gp, sobol_points, DesignBox, GpConfig, GpModel, GpSnapshot};
use crate::rng::{sample_rng, split};
use crate::scenario::{indicator_collision, ScenarioParams};
use crate::sim::{run_hifi, run_lofi_post, run_lofi_pre, Fidelity, LoFiParams, SimConfig};
use crate::transfer::{PostTransfer, TransferConfig};

/// Draws from `p(x)` behind the design box percentiles.
pub const DESIGN_BOX_SAMPLES: usize = 100_000;
/// Concept-parameter ranges covered by the post-transfer design.
pub const LOFI_P_DETECT_RANGE: (f64, f64) = (0.4, 1.0);
pub const LOFI_SIGMA_NOISE_RANGE: (f64, f64) = (0.0, 0.05);
pub const LOFI_MU_FRIC_RANGE: (f64, f64) = (0.5, 1.0);

const DESIGN_BOX_TAG: u64 = 0x626f78;
const TRAINING_TAG: u64 = 0x747261696e;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Approach {
    Mc,
    Ais,
    TisPre,
    TisPost,
}

impl Approach {
    pub const ALL: [Approach; 4] = [Approach::Mc, Approach::Ais, Approach::TisPre, Approach::TisPost];

    pub fn name(self) -> &'static str {
        match self {
            Approach::Mc => "mc",
            Approach::Ais => "ais",
            Approach::TisPre => "tis-pre",
            Approach::TisPost => "tis-post",
        }
    }

    /// Setup whose runs train the proposal metamodel.
    pub fn derivation_tier(self) -> Option<Fidelity> {
        match self {
            Approach::Mc => None,
            Approach::Ais => Some(Fidelity::Hifi),
            Approach::TisPre => Some(Fidelity::LofiPre),
            Approach::TisPost => Some(Fidelity::LofiPost),
        }
    }
}

/// Duration and price of one run in a setup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TierCost {
    pub seconds_per_run: f64,
    pub price_per_hour: f64,
}

impl TierCost {
    pub fn cost_per_run(&self) -> f64 {
        self.seconds_per_run / 3600.0 * self.price_per_hour
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostModel {
    pub hifi: TierCost,
    pub lofi_pre: TierCost,
    pub lofi_post: TierCost,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            hifi: TierCost { seconds_per_run: 90.0, price_per_hour: 0.752 },
            lofi_pre: TierCost { seconds_per_run: 75.0, price_per_hour: 0.2688 },
            lofi_post: TierCost { seconds_per_run: 27.0, price_per_hour: 0.2688 },
        }
    }
}

impl CostModel {
    pub fn tier(&self, tier: Fidelity) -> TierCost {
        match tier {
            Fidelity::Hifi => self.hifi,
            Fidelity::LofiPre => self.lofi_pre,
            Fidelity::LofiPost => self.lofi_post,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, t) in [("hifi", self.hifi), ("lofi_pre", self.lofi_pre), ("lofi_post", self.lofi_post)] {
            if !(t.seconds_per_run.is_finite() && t.seconds_per_run >= 0.0)
                || !(t.price_per_hour.is_finite() && t.price_per_hour >= 0.0)
            {
                return Err(Error::Config(format!("cost.{name} must be finite and non-negative")));
            }
        }
        Ok(())
    }
}

/// Complete description of one estimation campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignConfig {
    pub approach: Approach,
    /// Seeds estimation runs and the normalization estimate.
    pub base_seed: u64,
    /// Seeds the metamodel training runs.
    pub metamodel_seed: u64,
    pub n_q: usize,
    pub n_mc: usize,
    pub max_runs: usize,
    pub stopping: bool,
    pub stopping_rule: StoppingRule,
    pub skew_floor: Option<f64>,
    pub workers: usize,
    pub density: DensityConfig,
    pub sim: SimConfig,
    pub transfer: TransferConfig,
    pub gp: GpConfig,
    pub cost: CostModel,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            approach: Approach::TisPre,
            base_seed: 0,
            metamodel_seed: 0,
            n_q: 200,
            n_mc: 100_000,
            max_runs: 100_000,
            stopping: true,
            stopping_rule: StoppingRule::default(),
            skew_floor: None,
            workers: 1,
            density: DensityConfig::default(),
            sim: SimConfig::default(),
            transfer: TransferConfig::default(),
            gp: GpConfig::default(),
            cost: CostModel::default(),
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_runs == 0 {
            return Err(Error::Config("max_runs must be >= 1".into()));
        }
        if self.approach != Approach::Mc && self.n_q < 10 {
            return Err(Error::Config(format!("n_q must be >= 10 for {}, got {}", self.approach.name(), self.n_q)));
        }
        if self.n_mc < MIN_N_MC {
            return Err(Error::Config(format!("n_mc must be >= {MIN_N_MC}, got {}", self.n_mc)));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        if let Some(f) = self.skew_floor {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!("skew_floor must lie in (0, 1], got {f}")));
            }
        }
        let r = &self.stopping_rule;
        if !(r.z.is_finite() && r.z > 0.0 && r.rel_halfwidth.is_finite() && r.rel_halfwidth > 0.0) {
            return Err(Error::Config(format!("stopping_rule must have positive z and rel_halfwidth: {r:?}")));
        }
        self.density.validate()?;
        self.sim.validate()?;
        self.transfer.validate()?;
        self.gp.validate()?;
        self.cost.validate()
    }

    /// Parses and validates a JSON config; every failure is a [`Error::Config`].
    pub fn from_json(json: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(json).map_err(|e| Error::Config(format!("config JSON: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn run_plan(&self) -> RunPlan {
        RunPlan {
            max_runs: self.max_runs,
            stopping: self.stopping.then_some(self.stopping_rule),
            workers: self.workers,
        }
    }
}

/// SHA-256 of the settings that determine `ℓ`: the density and the simulators.
pub fn scenario_fingerprint(cfg: &CampaignConfig) -> Result<String> {
    let bytes = serde_json::to_vec(&(&cfg.density, &cfg.sim))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    }))
}

/// `J(E | M_hifi, x)`.
#[derive(Debug, Clone, Copy)]
pub struct HifiRunner<'a> {
    pub sim: &'a SimConfig,
}

impl Runner<ScenarioParams> for HifiRunner<'_> {
    fn indicator(&self, x: &ScenarioParams, seed: u64) -> Result<u8> {
        Ok(indicator_collision(&run_hifi(self.sim, x, seed)?))
    }
}

/// Training region of the metamodel for `tier`.
///
/// Scenario-space boxes span the 1st to 99th percentiles of `p(x)`; the
/// concept-space box keeps those percentiles for `(d0, v_av, v_ped)` and fixed
/// ranges for the remaining concept parameters.
pub fn design_box(tier: Fidelity, density: &Density, density_cfg: &DensityConfig) -> Result<DesignBox> {
    let mut rng = sample_rng(split(density_cfg.data_seed, DESIGN_BOX_TAG));
    let samples = (0..DESIGN_BOX_SAMPLES)
        .map(|_| density.sampler.sample(&mut rng).map(|x| x.to_array().to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let full = DesignBox::from_samples(&samples)?;
    match tier {
        Fidelity::Hifi | Fidelity::LofiPre => Ok(full),
        Fidelity::LofiPost => {
            // d0, v_av, v_ped occupy positions 4..7 of the scenario vector.
            let mut lower = full.lower[4..7].to_vec();
            let mut upper = full.upper[4..7].to_vec();
            for (lo, hi) in [LOFI_P_DETECT_RANGE, LOFI_SIGMA_NOISE_RANGE, LOFI_MU_FRIC_RANGE] {
                lower.push(lo);
                upper.push(hi);
            }
            DesignBox::new(lower, upper)
        }
    }
}

/// `d*_min` of one run of `tier` at a design point.
pub fn derivation_run(tier: Fidelity, sim: &SimConfig, point: &[f64], seed: u64) -> Result<f64> {
    let outcome = match tier {
        Fidelity::Hifi => run_hifi(sim, &ScenarioParams::from_slice(point)?, seed)?,
        Fidelity::LofiPre => run_lofi_pre(sim, &ScenarioParams::from_slice(point)?, seed)?,
        Fidelity::LofiPost => run_lofi_post(sim, &LoFiParams::from_slice(point)?, seed)?,
    };
    Ok(outcome.d_min_star)
}

/// A proposal metamodel together with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainedMetamodel {
    pub tier: Fidelity,
    pub n_q: usize,
    pub metamodel_seed: u64,
    pub scenario_fingerprint: String,
    pub design_box: DesignBox,
    pub design_collisions: usize,
    pub log_marginal_likelihood: f64,
    pub gp: GpSnapshot,
}

impl TrainedMetamodel {
    pub fn model(&self) -> Result<GpModel> {
        GpModel::from_snapshot(self.gp.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        Ok(std::fs::write(path, text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Runs the `N_q` Sobol design in the approach's derivation setup and fits the GP.
pub fn train_metamodel(cfg: &CampaignConfig, density: &Density) -> Result<TrainedMetamodel> {
    let tier = cfg
        .approach
        .derivation_tier()
        .ok_or_else(|| Error::Config("approach mc uses no metamodel".into()))?;
    let bx = design_box(tier, density, &cfg.density)?;
    let points = sobol_points(cfg.n_q, &bx)?;
    let train_seed = split(cfg.metamodel_seed, TRAINING_TAG);
    let y = par_map(cfg.workers, points.len(), |k| derivation_run(tier, &cfg.sim, &points[k], split(train_seed, k as u64)))?
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    let design_collisions = y.iter().filter(|v| **v < 0.0).count();
    let fit = fit_gp(&points, &y, &cfg.gp)?;
    Ok(TrainedMetamodel {
        tier,
        n_q: cfg.n_q,
        metamodel_seed: cfg.metamodel_seed,
        scenario_fingerprint: scenario_fingerprint(cfg)?,
        design_box: bx,
        design_collisions,
        log_marginal_likelihood: fit.model.log_marginal_likelihood(),
        gp: fit.model.snapshot().clone(),
    })
}

/// `P(E | M̂, x)` on scenario parameters, through the transfer for concept models.
pub fn proposal_model<'a>(
    tier: Fidelity,
    gp: &'a GpModel,
    transfer: &TransferConfig,
) -> Box<dyn EventModel<ScenarioParams> + 'a> {
    match tier {
        Fidelity::Hifi | Fidelity::LofiPre => Box::new(gp),
        Fidelity::LofiPost => Box::new(PostTransfer { inner: gp, cfg: *transfer }),
    }
}

fn check_metamodel(cfg: &CampaignConfig, trained: &TrainedMetamodel) -> Result<()> {
    let tier = cfg.approach.derivation_tier();
    if tier != Some(trained.tier) {
        return Err(Error::Config(format!(
            "metamodel was trained on {:?} but approach {} needs {:?}",
            trained.tier,
            cfg.approach.name(),
            tier
        )));
    }
    if trained.scenario_fingerprint != scenario_fingerprint(cfg)? {
        return Err(Error::Config("metamodel was trained for a different scenario configuration".into()));
    }
    Ok(())
}

/// `ℓ̂_M̂` as a campaign with this config would compute it.
pub fn metamodel_normalization(
    cfg: &CampaignConfig,
    density: &Density,
    trained: &TrainedMetamodel,
) -> Result<NormalizationEstimate> {
    check_metamodel(cfg, trained)?;
    let gp = trained.model()?;
    let model = proposal_model(trained.tier, &gp, &cfg.transfer);
    let seed = normalization_seed(cfg.base_seed);
    match cfg.skew_floor {
        Some(floor) => {
            let floored = SkewFloor { inner: model.as_ref(), floor };
            estimate_normalization(&floored, &density.sampler, cfg.n_mc, seed, cfg.workers)
        }
        None => estimate_normalization(model.as_ref(), &density.sampler, cfg.n_mc, seed, cfg.workers),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub derivation: f64,
    pub estimation: f64,
    pub total: f64,
}

/// Outcome of one campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignReport {
    pub approach: Approach,
    pub scenario_fingerprint: String,
    pub base_seed: u64,
    pub estimate: RiskEstimate,
    pub n_q: usize,
    pub n_l: usize,
    pub normalization: Option<NormalizationEstimate>,
    pub cost: CostBreakdown,
    pub stopping_reached: bool,
    pub surprise_events: usize,
}

impl CampaignReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }
}

/// Runs the configured estimator, training the metamodel inline when none is given.
///
/// Records are appended to `history` as runs complete, so it holds the
/// completed prefix when an error is returned.
pub fn run_campaign(
    cfg: &CampaignConfig,
    density: &Density,
    metamodel: Option<&TrainedMetamodel>,
    history: &mut ConvergenceHistory<ScenarioParams>,
) -> Result<CampaignReport> {
    cfg.validate()?;
    let runner = HifiRunner { sim: &cfg.sim };
    let plan = cfg.run_plan();
    let (estimate, normalization, n_q) = match cfg.approach.derivation_tier() {
        None => (mc_estimate(&runner, &density.sampler, &plan, cfg.base_seed, history)?, None, 0),
        Some(_) => {
            let inline;
            let trained = match metamodel {
                Some(t) => t,
                None => {
                    inline = train_metamodel(cfg, density)?;
                    &inline
                }
            };
            check_metamodel(cfg, trained)?;
            let gp = trained.model()?;
            let model = proposal_model(trained.tier, &gp, &cfg.transfer);
            let settings = MetamodelIsSettings { n_mc: cfg.n_mc, n_q: trained.n_q, skew_floor: cfg.skew_floor };
            let out = if cfg.approach == Approach::Ais {
                ais_estimate(&runner, model.as_ref(), &density.sampler, &settings, &plan, cfg.base_seed, history)?
            } else {
                tis_estimate(&runner, model.as_ref(), &density.sampler, &settings, &plan, cfg.base_seed, history)?
            };
            (out.estimate, Some(out.normalization), trained.n_q)
        }
    };
    let derivation = cfg
        .approach
        .derivation_tier()
        .map_or(0.0, |t| n_q as f64 * cfg.cost.tier(t).cost_per_run());
    let estimation = estimate.n_runs as f64 * cfg.cost.hifi.cost_per_run();
    Ok(CampaignReport {
        approach: cfg.approach,
        scenario_fingerprint: scenario_fingerprint(cfg)?,
        base_seed: cfg.base_seed,
        estimate,
        n_q,
        n_l: estimate.n_runs,
        normalization,
        cost: CostBreakdown { derivation, estimation, total: derivation + estimation },
        stopping_reached: cfg.stopping && cfg.stopping_rule.reached(&estimate),
        surprise_events: history.surprise_count(),
    })
}

/// One line of the efficiency comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub approach: String,
    pub cost_n_q: f64,
    pub n_l: usize,
    pub cost_n_l: f64,
    pub total_cost: f64,
    pub factor: f64,
}

/// Normalizes total costs to the cheapest report.
pub fn compare(reports: &[CampaignReport]) -> Result<Vec<ComparisonRow>> {
    if reports.len() < 2 {
        return Err(Error::Config(format!("compare needs at least 2 reports, got {}", reports.len())));
    }
    if reports.iter().any(|r| r.scenario_fingerprint != reports[0].scenario_fingerprint) {
        return Err(Error::Config("reports come from different scenario configurations".into()));
    }
    let min_total = reports.iter().map(|r| r.cost.total).fold(f64::INFINITY, f64::min);
    if !(min_total > 0.0) {
        return Err(Error::Config("cheapest report has zero total cost; factors are undefined".into()));
    }
    Ok(reports
        .iter()
        .map(|r| ComparisonRow {
            approach: r.approach.name().to_string(),
            cost_n_q: r.cost.derivation,
            n_l: r.n_l,
            cost_n_l: r.cost.estimation,
            total_cost: r.cost.total,
            factor: r.cost.total / min_total,
        })
        .collect())
}

pub fn write_comparison_csv<W: Write>(rows: &[ComparisonRow], mut w: W) -> Result<()> {
    writeln!(w, "approach,cost_n_q,n_l,cost_n_l,total_cost,factor")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{},{}", r.approach, r.cost_n_q, r.n_l, r.cost_n_l, r.total_cost, r.factor)?;
    }
    Ok(())
}

/// Fixed-width table for terminals.
pub fn format_comparison_table(rows: &[ComparisonRow]) -> String {
    let mut out = format!(
        "{:<10} {:>10} {:>8} {:>10} {:>11} {:>7}\n",
        "Approach", "Cost N_q", "N_l", "Cost N_l", "Total Cost", "Factor"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<10} {:>10.2} {:>8} {:>10.2} {:>11.2} {:>7.1}",
            r.approach, r.cost_n_q, r.n_l, r.cost_n_l, r.total_cost, r.factor
        );
    }
    out
}
