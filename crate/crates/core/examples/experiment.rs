//! Runs every approach to its stopping criterion over several seeds and
//! compares against a brute-force hi-fi MC reference.
//!
//! Usage: `cargo run --release --example experiment -- [seeds] [oracle_runs]`
//! with optional `CAMPAIGN` holding a JSON campaign config.

use std::time::Instant;

use tis_core::campaign::{metamodel_normalization, run_campaign, train_metamodel, Approach, CampaignConfig};
use tis_core::density::build_density;
use tis_core::estimate::{mc_estimate, ConvergenceHistory, RunPlan};

fn main() -> tis_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);
    let oracle_runs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(100_000);
    let base = match std::env::var("CAMPAIGN") {
        Ok(json) => CampaignConfig::from_json(&json)?,
        Err(_) => CampaignConfig::default(),
    };
    let density = build_density(&base.density)?;
    let t = Instant::now();
    let runner = tis_core::campaign::HifiRunner { sim: &base.sim };
    let oracle = mc_estimate(&runner, &density.sampler, &RunPlan::fixed(oracle_runs), 0xdead, &mut ConvergenceHistory::new())?;
    println!("oracle {:.5} ± {:.5} ({:.1?})", oracle.mean, oracle.std_of_mean, t.elapsed());
    for approach in Approach::ALL {
        let cfg = CampaignConfig { approach, ..base.clone() };
        let trained = match approach {
            Approach::Mc => None,
            _ => {
                let t = Instant::now();
                let m = train_metamodel(&cfg, &density)?;
                let norm = metamodel_normalization(&cfg, &density, &m)?;
                println!(
                    "{}: trained in {:.1?}, design collisions {}, ell_M {:.5}",
                    approach.name(),
                    t.elapsed(),
                    m.design_collisions,
                    norm.mean
                );
                Some(m)
            }
        };
        let mut n_runs = Vec::new();
        let mut within = 0;
        for s in 0..seeds {
            let cfg = CampaignConfig { base_seed: s, ..cfg.clone() };
            let t = Instant::now();
            let mut h = ConvergenceHistory::new();
            let r = run_campaign(&cfg, &density, trained.as_ref(), &mut h)?;
            let ok = (r.estimate.mean - oracle.mean).abs() <= 3.0 * r.estimate.std_of_mean;
            within += usize::from(ok);
            n_runs.push(r.n_l);
            println!(
                "  seed {s}: ell {:.5} std {:.5} N {} surprises {} cost {:.3} ok {ok} ({:.1?})",
                r.estimate.mean,
                r.estimate.std_of_mean,
                r.n_l,
                r.surprise_events,
                r.cost.total,
                t.elapsed()
            );
        }
        n_runs.sort_unstable();
        println!("{}: median N {} within {within}/{seeds}", approach.name(), n_runs[n_runs.len() / 2]);
    }
    Ok(())
}
