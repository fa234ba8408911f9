//! Prints collision statistics of the three simulators under `p(x)`.
//!
//! Usage: `cargo run --release --example calibrate -- [n_samples]`

use rayon::prelude::*;
use tis_core::density::{build_density, DensityConfig};
use tis_core::rng::{sample_rng, split};
use tis_core::sim::{run_hifi, run_lofi_post, run_lofi_pre, SimConfig};
use tis_core::transfer::{transfer_post, TransferConfig};

fn main() -> tis_core::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100_000);
    let density = build_density(&DensityConfig::default())?;
    println!("kde scale {} bandwidths {:?}", density.fit.scale, density.fit.model.bandwidths);
    let cfg: SimConfig = match std::env::var("SIM") {
        Ok(json) => serde_json::from_str(&json)?,
        Err(_) => SimConfig::default(),
    };
    let tcfg = TransferConfig::default();
    let rows: Vec<_> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let seed = split(7, i);
            let x = density.sampler.sample(&mut sample_rng(split(seed, 0))).unwrap();
            let hi = run_hifi(&cfg, &x, split(seed, 1)).unwrap();
            let pre = run_lofi_pre(&cfg, &x, split(seed, 1)).unwrap();
            let post = run_lofi_post(&cfg, &transfer_post(&x, &tcfg), split(seed, 1)).unwrap();
            (x, hi.collided, pre.collided, post.collided)
        })
        .collect();
    let glare = |t: f64| (19.0..=21.0).contains(&t);
    let count = |f: &dyn Fn(&(tis_core::scenario::ScenarioParams, bool, bool, bool)) -> bool| rows.iter().filter(|r| f(r)).count();
    let hi = count(&|r| r.1);
    let hi_glare = count(&|r| r.1 && glare(r.0.t_day));
    let in_glare = count(&|r| glare(r.0.t_day));
    let off = n - in_glare;
    let agree = count(&|r| !glare(r.0.t_day) && r.1 == r.2);
    println!("hifi ell {:.5} ({hi}), glare share {:.3}, glare mass {:.4}", hi as f64 / n as f64, hi_glare as f64 / hi.max(1) as f64, in_glare as f64 / n as f64);
    println!("lofi-pre ell {:.5}, lofi-post ell {:.5}", count(&|r| r.2) as f64 / n as f64, count(&|r| r.3) as f64 / n as f64);
    println!("off-glare agreement {:.4}", agree as f64 / off as f64);
    println!("hifi collisions not covered: pre {} post {}", count(&|r| r.1 && !r.2), count(&|r| r.1 && !r.3));
    let mut d0s: Vec<f64> = rows.iter().filter(|r| r.1).map(|r| r.0.d0).collect();
    d0s.sort_by(f64::total_cmp);
    if !d0s.is_empty() {
        println!("hifi collision d0 quantiles: {:.1} {:.1} {:.1} {:.1} {:.1}", d0s[0], d0s[d0s.len() / 4], d0s[d0s.len() / 2], d0s[3 * d0s.len() / 4], d0s[d0s.len() - 1]);
    }
    Ok(())
}
