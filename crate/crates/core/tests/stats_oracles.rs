//! Batch statistics against direct recomputation.

use proptest::prelude::*;
use simhra::report::{Csr, Ddt, ExtractionOutcome, Extractor, Fli, MetricSet};
use simhra::scenario::load_scenario;
use simhra::stats::{
    alignment_error, coefficient_of_variation, failure_attribution, gate_run, summarize_batch,
    MetricName, RunOutcome, VerdictStatus,
};

fn arb_metrics() -> impl Strategy<Value = MetricSet> {
    (
        prop_oneof![3 => (80.0f64..180.0).prop_map(Ddt::Minutes), 1 => Just(Ddt::NoRecovery)],
        0.0f64..=100.0,
        prop_oneof![4 => (70.0f64..=100.0).prop_map(Csr::Percent), 1 => Just(Csr::NotApplicable)],
        0u8..=2,
        0u8..=10,
    )
        .prop_map(|(ddt, ipr, csr, depth, fli)| MetricSet {
            run_id: String::new(),
            ddt,
            ipr,
            no_procedure_decisions: false,
            csr,
            apc_presence: depth >= 1,
            apc_depth: depth,
            fli: Fli::Score(fli),
            extractor: Extractor::Llm,
        })
}

fn arb_outcome() -> impl Strategy<Value = ExtractionOutcome> {
    prop_oneof![
        5 => arb_metrics().prop_map(ExtractionOutcome::Valid),
        1 => Just(ExtractionOutcome::JsonFail { reason: "missing field fli".into() }),
    ]
}

fn brute_std(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let mut acc = 0.0;
    for x in v {
        acc += (x - m).powi(2);
    }
    (acc / (n - 1.0)).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn summary_matches_brute_force(
        outcomes in prop::collection::vec(arb_outcome(), 1..=20),
        tmi in any::<bool>(),
    ) {
        let s = load_scenario(if tmi { "tmi1979" } else { "chernobyl1986" }).unwrap();
        let runs: Vec<RunOutcome> = outcomes
            .iter()
            .enumerate()
            .map(|(i, o)| RunOutcome::new(format!("r{i}"), o.clone()))
            .collect();
        let sum = summarize_batch(&s, &runs).unwrap();

        let valid: Vec<&MetricSet> = outcomes.iter().filter_map(|o| o.metrics()).collect();
        prop_assert_eq!(sum.n_total, outcomes.len());
        prop_assert_eq!(sum.n_valid, valid.len());
        prop_assert_eq!(sum.n_total, sum.n_valid + sum.n_json_fail);
        prop_assert_eq!(sum.n_valid, sum.n_pass + sum.n_fail);

        // Brute-force gate.
        let c = &s.criteria;
        let mut pass = Vec::new();
        let mut fails: Vec<Vec<MetricName>> = Vec::new();
        for m in &valid {
            let mut bad = Vec::new();
            let ddt_ok = if tmi {
                matches!(m.ddt, Ddt::Minutes(x) if (100.0..=170.0).contains(&x))
            } else {
                m.ddt == Ddt::NoRecovery
            };
            if !ddt_ok { bad.push(MetricName::Ddt); }
            let (lo, hi) = if tmi { (25.0, 50.0) } else { (0.0, 20.0) };
            if !(lo..=hi).contains(&m.ipr) { bad.push(MetricName::Ipr); }
            if !matches!(m.csr, Csr::Percent(p) if p >= 90.0) { bad.push(MetricName::Csr); }
            if tmi && !matches!(m.fli, Fli::Score(f) if f >= 3) { bad.push(MetricName::Fli); }
            if !tmi && !m.apc_presence { bad.push(MetricName::Apc); }
            let v = gate_run("x", &ExtractionOutcome::Valid((*m).clone()), c);
            prop_assert_eq!(&v.violated_criteria, &bad);
            if bad.is_empty() { pass.push(*m) } else { fails.push(bad) }
        }
        prop_assert_eq!(sum.n_pass, pass.len());
        prop_assert!((sum.json_fail_rate - (outcomes.len() - valid.len()) as f64 / outcomes.len() as f64).abs() < 1e-12);
        if !valid.is_empty() {
            prop_assert!((sum.pass_rate.unwrap() - pass.len() as f64 / valid.len() as f64).abs() < 1e-12);
        }

        // Eq. 4 style attribution.
        match &sum.failure_attribution {
            None => prop_assert!(fails.is_empty()),
            Some(rho) => {
                for m in MetricName::ALL {
                    let k = fails.iter().filter(|f| f.contains(&m)).count();
                    prop_assert!((rho[&m] - k as f64 / fails.len() as f64).abs() < 1e-12);
                }
            }
        }

        // Alignment error and CV for DDT over PASS runs.
        let ddts: Vec<f64> = pass.iter().filter_map(|m| m.ddt.minutes()).collect();
        let ddt = sum.metric(MetricName::Ddt);
        if ddts.is_empty() {
            prop_assert!(ddt.pass.is_none());
        } else {
            let mean = ddts.iter().sum::<f64>() / ddts.len() as f64;
            let p = ddt.pass.as_ref().unwrap();
            prop_assert!((p.mean - mean).abs() < 1e-9);
            if tmi {
                let delta = (mean - 138.0).abs() / 138.0 * 100.0;
                prop_assert!((ddt.alignment_error.unwrap() - delta).abs() < 1e-9);
            }
            if ddts.len() >= 2 {
                prop_assert!((p.cv.unwrap() - brute_std(&ddts) / mean).abs() < 1e-9);
            }
        }
        let nr = valid.iter().filter(|m| m.ddt == Ddt::NoRecovery).count();
        prop_assert_eq!(sum.no_recovery_valid.count, nr);
    }

    #[test]
    fn equations_match_direct_evaluation(
        values in prop::collection::vec(1.0f64..500.0, 2..=20),
        h in 1.0f64..500.0,
    ) {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        prop_assert!((alignment_error(mean, h).unwrap() - (mean - h).abs() / h * 100.0).abs() < 1e-9);
        prop_assert!((coefficient_of_variation(&values).unwrap() - brute_std(&values) / mean).abs() < 1e-9);
    }

    #[test]
    fn tmi_gate_is_exactly_the_ddt_interval(ddt in 0.0f64..=150.0) {
        let s = load_scenario("tmi1979").unwrap();
        let m = MetricSet {
            run_id: String::new(),
            ddt: Ddt::Minutes(ddt),
            ipr: 30.0,
            no_procedure_decisions: false,
            csr: Csr::Percent(100.0),
            apc_presence: false,
            apc_depth: 0,
            fli: Fli::Score(4),
            extractor: Extractor::Rules,
        };
        let pass = gate_run("x", &ExtractionOutcome::Valid(m), &s.criteria).status == VerdictStatus::Pass;
        prop_assert_eq!(pass, (100.0..=170.0).contains(&ddt));
    }
}

#[test]
fn attribution_needs_a_failure() {
    assert!(failure_attribution(&[]).is_err());
}
