//! Predicts the runs-to-stop of each metamodel proposal from a brute-force
//! sample of hi-fi collisions.
//!
//! Usage: `cargo run --release --example diagnose -- [n_samples]` with optional
//! `CAMPAIGN` holding a JSON campaign config.

use tis_core::campaign::{proposal_model, train_metamodel, Approach, CampaignConfig};
use tis_core::density::build_density;
use tis_core::rng::{sample_rng, split};
use tis_core::sim::run_hifi;
use tis_core::transfer::transfer_post;

fn main() -> tis_core::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100_000);
    let base = match std::env::var("CAMPAIGN") {
        Ok(json) => CampaignConfig::from_json(&json)?,
        Err(_) => CampaignConfig::default(),
    };
    let density = build_density(&base.density)?;
    let mut xs = Vec::with_capacity(n);
    let mut hits = Vec::with_capacity(n);
    for i in 0..n as u64 {
        let seed = split(0xbeef, i);
        let x = density.sampler.sample(&mut sample_rng(split(seed, 0)))?;
        hits.push(run_hifi(&base.sim, &x, split(seed, 1))?.collided);
        xs.push(x);
    }
    let ell = hits.iter().filter(|h| **h).count() as f64 / n as f64;
    let z2 = (base.stopping_rule.z / base.stopping_rule.rel_halfwidth).powi(2);
    let in_window = xs.iter().zip(&hits).filter(|(x, h)| **h && (19.0..=21.0).contains(&x.t_day)).count();
    let n_hits = hits.iter().filter(|h| **h).count().max(1);
    println!(
        "ell {ell:.5}; glare share {:.3}; predicted MC N {:.0}",
        in_window as f64 / n_hits as f64,
        z2 * (1.0 - ell) / ell
    );
    let approaches: Vec<Approach> = match std::env::var("ONLY") {
        Ok(name) => Approach::ALL.into_iter().filter(|a| a.name() == name).collect(),
        Err(_) => vec![Approach::Ais, Approach::TisPre, Approach::TisPost],
    };
    for approach in approaches {
        let cfg = CampaignConfig { approach, ..base.clone() };
        let trained = train_metamodel(&cfg, &density)?;
        let gp = trained.model()?;
        let model = proposal_model(trained.tier, &gp, &cfg.transfer);
        let probs: Vec<f64> = xs.iter().map(|x| model.event_prob(x)).collect();
        let ell_m = probs.iter().sum::<f64>() / n as f64;
        let inv: f64 = probs.iter().zip(&hits).filter(|(_, h)| **h).map(|(p, _)| 1.0 / p).sum::<f64>() / n as f64;
        let var = ell_m * inv - ell * ell;
        let mut worst: Vec<(f64, usize)> =
            probs.iter().enumerate().filter(|(i, _)| hits[*i]).map(|(i, p)| (*p, i)).collect();
        worst.sort_by(|a, b| a.0.total_cmp(&b.0));
        let show = if std::env::var("WORST").is_ok() { 6 } else { 0 };
        for (p, i) in worst.iter().take(show) {
            let x = &xs[*i];
            let reps = 400;
            let rate = (0..reps).filter(|k| run_hifi(&base.sim, x, split(77, *k)).unwrap().collided).count() as f64 / reps as f64;
            let (m, s) = match approach {
                Approach::TisPost => gp.predict_observation(&transfer_post(x, &cfg.transfer).to_array()),
                _ => gp.predict_observation(&x.to_array()),
            };
            println!(
                "  P {p:.2e} mu {m:.2} sd {s:.2} true {rate:.3}: t {:.2} fog {:.2} wind {:.2} rain {:.2} d0 {:.1} v {:.2} vp {:.2}",
                x.t_day, x.w_fog, x.w_wind, x.w_rain, x.d0, x.v_av, x.v_ped
            );
        }
        let mut at_hits: Vec<f64> = probs.iter().zip(&hits).filter(|(_, h)| **h).map(|(p, _)| *p).collect();
        at_hits.sort_by(f64::total_cmp);
        let q = |f: f64| at_hits[((at_hits.len() - 1) as f64 * f) as usize];
        println!(
            "{}: design collisions {}, ell_M {ell_m:.5}, predicted N {:.0}, P at hits min {:.2e} q10 {:.2e} med {:.2e} q90 {:.2e}, ls {:?}",
            approach.name(),
            trained.design_collisions,
            z2 * var / (ell * ell),
            q(0.0),
            q(0.1),
            q(0.5),
            q(0.9),
            gp.hyperparameters().length_scales.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>()
        );
    }
    Ok(())
}
