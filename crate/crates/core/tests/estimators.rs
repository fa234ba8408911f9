use proptest::prelude::*;
use tis_core::estimate::{
    estimate_normalization, is_estimate, mc_estimate, mc_rel_std, metamodel_is_estimate, optimal_proposal_toy,
    rejection_sample_q, ConvergenceHistory, DiscreteSource, EventModel, NormalizationEstimate, RunPlan, ScriptedSource,
    SkewFloor, TableModel,
};
use tis_core::rng::sample_rng;
use tis_core::scenario::ScenarioParams;
use tis_core::sim::LoFiParams;
use tis_core::transfer::{transfer_post, PostTransfer, TransferConfig};
use tis_core::Result;

fn table_runner(events: Vec<bool>) -> impl Fn(&usize, u64) -> Result<u8> + Sync {
    move |x: &usize, _| Ok(u8::from(events[*x]))
}

#[test]
fn rejection_sampling_targets_p_times_model() {
    let p = [0.4, 0.3, 0.2, 0.1];
    let model = TableModel(vec![0.05, 0.5, 0.9, 0.2]);
    let z: f64 = p.iter().zip(&model.0).map(|(a, b)| a * b).sum();
    let source = DiscreteSource::new(&p).unwrap();
    let mut rng = sample_rng(3);
    let n = 200_000;
    let mut counts = [0usize; 4];
    for _ in 0..n {
        counts[rejection_sample_q(&model, &source, &mut rng).unwrap()] += 1;
    }
    for k in 0..4 {
        let q = p[k] * model.0[k] / z;
        let sd = (q * (1.0 - q) / n as f64).sqrt();
        assert!((counts[k] as f64 / n as f64 - q).abs() < 4.0 * sd, "{k}: {counts:?}");
    }
}

#[test]
fn rejection_sampling_starves_on_a_null_model() {
    let source = DiscreteSource::new(&[0.5, 0.5]).unwrap();
    let err = rejection_sample_q(&TableModel(vec![0.0, 0.0]), &source, &mut sample_rng(1)).unwrap_err();
    assert!(matches!(err, tis_core::Error::ProposalStarvation { .. }));
}

#[test]
fn skew_floor_bounds_the_weights() {
    let p = [0.5, 0.5];
    let model = TableModel(vec![1e-9, 0.8]);
    let floored = SkewFloor { inner: &model, floor: 0.01 };
    assert_eq!(floored.event_prob(&0), 0.01);
    assert_eq!(floored.event_prob(&1), 0.8);
    let norm = estimate_normalization(&floored, &DiscreteSource::new(&p).unwrap(), 10_000, 5, 1).unwrap();
    assert!((norm.mean - 0.405).abs() < 0.01);
}

#[test]
fn optimal_proposal_is_zero_variance() {
    let p = [0.5, 0.3, 0.15, 0.05];
    let events = vec![false, true, false, true];
    let ell = 0.35;
    let q = optimal_proposal_toy(&p, &events).unwrap();
    let mut history = ConvergenceHistory::new();
    let weight = |x: &usize| p[*x] / q[*x];
    let est = is_estimate(
        &table_runner(events),
        &DiscreteSource::new(&q).unwrap(),
        &weight,
        &RunPlan::fixed(500),
        9,
        &mut history,
    )
    .unwrap();
    assert!(history.records.iter().all(|r| (r.weight - ell).abs() < 1e-12));
    assert!((est.mean - ell).abs() < 1e-12);
    assert!(est.std_of_mean < 1e-12);
}

#[test]
fn metamodel_equal_to_indicator_is_zero_variance() {
    let p = [0.6, 0.25, 0.1, 0.05];
    let events = vec![false, true, false, true];
    let ell = 0.3;
    let model = TableModel(vec![0.0, 1.0, 0.0, 1.0]);
    let q: Vec<f64> = p.iter().zip(&model.0).map(|(a, b)| a * b).collect();
    let q = DiscreteSource::new(&q).unwrap();
    let norm = NormalizationEstimate::exact(ell).unwrap();
    let mut history = ConvergenceHistory::new();
    let est =
        metamodel_is_estimate(&table_runner(events), &model, &norm, &q, &RunPlan::fixed(300), 2, 0, &mut history)
            .unwrap();
    assert!(history.records.iter().all(|r| (r.weight - ell).abs() < 1e-15));
    assert!(est.std_of_mean < 1e-15);
}

#[test]
fn mc_variance_matches_the_binomial_law() {
    let (ell, n, reps) = (0.05, 1000, 300);
    let runner = |x: &usize, _| Ok(u8::from(*x == 0));
    let source = DiscreteSource::new(&[ell, 1.0 - ell]).unwrap();
    let means: Vec<f64> = (0..reps)
        .map(|r| mc_estimate(&runner, &source, &RunPlan::fixed(n), r, &mut ConvergenceHistory::new()).unwrap().mean)
        .collect();
    let avg = means.iter().sum::<f64>() / reps as f64;
    let sd = (means.iter().map(|m| (m - avg).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
    let predicted = mc_rel_std(ell, n as usize).unwrap() * ell;
    assert!((sd / predicted - 1.0).abs() < 0.25, "{sd} vs {predicted}");
}

#[test]
fn post_transfer_feeds_the_concept_model() {
    struct Probe;
    impl EventModel<LoFiParams> for Probe {
        fn event_prob(&self, x: &LoFiParams) -> f64 {
            0.1 * x.p_detect + 0.01 * x.d0 + 0.001 * x.mu_fric
        }
    }
    let cfg = TransferConfig::default();
    let model = PostTransfer { inner: Probe, cfg };
    let x = ScenarioParams { t_day: 18.0, w_fog: 0.25, w_wind: 0.9, w_rain: 0.1, d0: 14.0, v_av: 6.0, v_ped: 1.2 };
    let lo = transfer_post(&x, &cfg);
    assert_eq!(model.event_prob(&x), Probe.event_prob(&lo));
    let windy = ScenarioParams { w_wind: 0.0, ..x };
    assert_eq!(model.event_prob(&windy), model.event_prob(&x));
}

/// Exact expectation of a single-run estimator by enumerating its draws.
fn enumerate(draw_probs: &[f64], value: impl Fn(usize) -> f64) -> f64 {
    draw_probs.iter().enumerate().filter(|(_, q)| **q > 0.0).map(|(x, q)| q * value(x)).sum()
}

fn single_run<E>(f: E) -> f64
where
    E: FnOnce(&mut ConvergenceHistory<usize>) -> Result<tis_core::estimate::RiskEstimate>,
{
    f(&mut ConvergenceHistory::new()).unwrap().mean
}

prop_compose! {
    fn toy()(n in 2usize..=5)
        (raw in prop::collection::vec(0.05f64..1.0, n),
         events in prop::collection::vec(any::<bool>(), n),
         model in prop::collection::vec(0.01f64..1.0, n),
         other in prop::collection::vec(0.01f64..1.0, n))
        -> (Vec<f64>, Vec<bool>, Vec<f64>, Vec<f64>)
    {
        let total: f64 = raw.iter().sum();
        (raw.iter().map(|r| r / total).collect(), events, model, other)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn all_estimators_are_unbiased_by_enumeration((p, events, model, other) in toy()) {
        let ell: f64 = p.iter().zip(&events).filter(|(_, e)| **e).map(|(p, _)| p).sum();
        let runner = table_runner(events.clone());

        let mc = enumerate(&p, |x| single_run(|h| {
            mc_estimate(&runner, &ScriptedSource::new(vec![x]), &RunPlan::fixed(1), 0, h)
        }));
        prop_assert!((mc - ell).abs() < 1e-12);

        let q_is: Vec<f64> = {
            let t: f64 = other.iter().sum();
            other.iter().map(|o| o / t).collect()
        };
        let weight = |x: &usize| p[*x] / q_is[*x];
        let is = enumerate(&q_is, |x| single_run(|h| {
            is_estimate(&runner, &ScriptedSource::new(vec![x]), &weight, &RunPlan::fixed(1), 0, h)
        }));
        prop_assert!((is - ell).abs() < 1e-12);

        for table in [model.clone(), other.clone()] {
            let z: f64 = p.iter().zip(&table).map(|(a, b)| a * b).sum();
            let q: Vec<f64> = p.iter().zip(&table).map(|(a, b)| a * b / z).collect();
            let m = TableModel(table);
            let norm = NormalizationEstimate::exact(z).unwrap();
            let est = enumerate(&q, |x| single_run(|h| {
                metamodel_is_estimate(&runner, &m, &norm, &ScriptedSource::new(vec![x]), &RunPlan::fixed(1), 0, 10, h)
            }));
            prop_assert!((est - ell).abs() < 1e-12, "{est} vs {ell}");
        }
    }

    #[test]
    fn history_running_mean_is_the_prefix_mean(seed in any::<u64>(), n in 1usize..200) {
        let runner = |x: &usize, s: u64| Ok(u8::from(*x == 0 && s % 2 == 0));
        let source = DiscreteSource::new(&[0.3, 0.7]).unwrap();
        let mut history = ConvergenceHistory::new();
        let est = mc_estimate(&runner, &source, &RunPlan::fixed(n), seed, &mut history).unwrap();
        prop_assert_eq!(history.len(), n);
        let mut sum = 0.0;
        for (k, r) in history.records.iter().enumerate() {
            prop_assert_eq!(r.i, k);
            sum += r.weight;
            prop_assert!((r.running_mean - sum / (k + 1) as f64).abs() < 1e-12);
            prop_assert!(r.ci_lower <= r.running_mean && r.running_mean <= r.ci_upper);
        }
        prop_assert!((est.mean - sum / n as f64).abs() < 1e-12);
    }

    #[test]
    fn stopping_never_overshoots_the_cap(seed in any::<u64>(), cap in 30usize..400) {
        let runner = |x: &usize, _| Ok(u8::from(*x == 0));
        let source = DiscreteSource::new(&[0.2, 0.8]).unwrap();
        let mut history = ConvergenceHistory::new();
        let est = mc_estimate(&runner, &source, &RunPlan::until_stop(cap), seed, &mut history).unwrap();
        prop_assert!(est.n_runs <= cap);
        prop_assert_eq!(history.len(), est.n_runs);
    }
}
