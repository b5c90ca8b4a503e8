//! Conjunctive face-validity gate and batch statistics.
//!
//! Rates in the data types are fractions in [0,1]; percentages appear only in
//! rendered tables, where they are rounded to one decimal place.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::report::{Csr, Ddt, ExtractionOutcome, Fli, MetricSet, APC_MAX_DEPTH, FLI_MAX};
use crate::scenario::{AcceptanceCriteria, DdtBaseline, DdtRule, HistoricalBaseline, Scenario};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("alignment error is undefined for a zero historical value")]
    ZeroBaseline,
    #[error("coefficient of variation needs at least 2 values, got {0}")]
    TooFewValues(usize),
    #[error("coefficient of variation is undefined for a zero mean")]
    ZeroMean,
    #[error("failure attribution needs at least one FAIL run")]
    NoFailures,
    #[error("batch is empty")]
    EmptyBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MetricName {
    Ddt,
    Ipr,
    Csr,
    Fli,
    Apc,
}

impl MetricName {
    pub const ALL: [MetricName; 5] = [
        MetricName::Ddt,
        MetricName::Ipr,
        MetricName::Csr,
        MetricName::Fli,
        MetricName::Apc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricName::Ddt => "DDT",
            MetricName::Ipr => "IPR",
            MetricName::Csr => "CSR",
            MetricName::Fli => "FLI",
            MetricName::Apc => "APC",
        }
    }
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VerdictStatus {
    Pass,
    Fail,
    JsonFail,
}

impl VerdictStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            VerdictStatus::Pass => "PASS",
            VerdictStatus::Fail => "FAIL",
            VerdictStatus::JsonFail => "JSON_FAIL",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityVerdict {
    pub run_id: String,
    pub status: VerdictStatus,
    pub violated_criteria: Vec<MetricName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub json_fail_reason: Option<String>,
}

/// Criteria a metric set violates, in fixed metric order.
pub fn violations(m: &MetricSet, c: &AcceptanceCriteria) -> Vec<MetricName> {
    let mut v = Vec::new();
    let ddt_ok = match (c.ddt_rule, m.ddt) {
        (DdtRule::Interval { lo, hi }, Ddt::Minutes(x)) => lo <= x && x <= hi,
        (DdtRule::RequireNoRecovery, Ddt::NoRecovery) => true,
        _ => false,
    };
    if !ddt_ok {
        v.push(MetricName::Ddt);
    }
    // A flagged run carries ipr = 0, which is what the interval sees.
    if !c.ipr_rule.contains(m.ipr) {
        v.push(MetricName::Ipr);
    }
    match m.csr {
        Csr::Percent(p) if p >= c.csr_min => {}
        _ => v.push(MetricName::Csr),
    }
    if let Some(min) = c.fli_min {
        match m.fli {
            Fli::Score(s) if s >= min => {}
            _ => v.push(MetricName::Fli),
        }
    }
    if let Some(required) = c.apc_cascade_required {
        if m.apc_presence != required {
            v.push(MetricName::Apc);
        }
    }
    v
}

pub fn gate_run(
    run_id: &str,
    outcome: &ExtractionOutcome,
    c: &AcceptanceCriteria,
) -> ValidityVerdict {
    match outcome {
        ExtractionOutcome::JsonFail { reason } => ValidityVerdict {
            run_id: run_id.to_owned(),
            status: VerdictStatus::JsonFail,
            violated_criteria: Vec::new(),
            json_fail_reason: Some(reason.clone()),
        },
        ExtractionOutcome::Valid(m) => {
            let violated = violations(m, c);
            ValidityVerdict {
                run_id: run_id.to_owned(),
                status: if violated.is_empty() {
                    VerdictStatus::Pass
                } else {
                    VerdictStatus::Fail
                },
                violated_criteria: violated,
                json_fail_reason: None,
            }
        }
    }
}

/// |x̄ − h| / h, as a percentage.
pub fn alignment_error(mean: f64, historical: f64) -> Result<f64, StatsError> {
    if historical == 0.0 {
        return Err(StatsError::ZeroBaseline);
    }
    Ok((mean - historical).abs() / historical.abs() * 100.0)
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Sample standard deviation (n − 1 denominator).
pub fn sample_std(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values)?;
    let ss: f64 = values.iter().map(|x| (x - m) * (x - m)).sum();
    Some((ss / (values.len() - 1) as f64).sqrt())
}

/// Sample standard deviation over mean, as a ratio.
pub fn coefficient_of_variation(values: &[f64]) -> Result<f64, StatsError> {
    let std = sample_std(values).ok_or(StatsError::TooFewValues(values.len()))?;
    cv_from_moments(std, mean(values).expect("non-empty"))
}

/// CV from an already reported standard deviation and mean.
pub fn cv_from_moments(std: f64, mean: f64) -> Result<f64, StatsError> {
    if mean == 0.0 {
        return Err(StatsError::ZeroMean);
    }
    Ok(std / mean.abs())
}

/// Per-metric share of FAIL runs that violate it. Jointly violated criteria
/// count toward each metric, so the shares can sum past 1.
pub fn failure_attribution(
    verdicts: &[ValidityVerdict],
) -> Result<BTreeMap<MetricName, f64>, StatsError> {
    let fails: Vec<_> = verdicts
        .iter()
        .filter(|v| v.status == VerdictStatus::Fail)
        .collect();
    if fails.is_empty() {
        return Err(StatsError::NoFailures);
    }
    Ok(MetricName::ALL
        .into_iter()
        .map(|m| {
            let k = fails
                .iter()
                .filter(|v| v.violated_criteria.contains(&m))
                .count();
            (m, k as f64 / fails.len() as f64)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptive {
    pub n: usize,
    pub mean: f64,
    /// Absent for a single value.
    pub std: Option<f64>,
    pub min: f64,
    pub max: f64,
    pub cv: Option<f64>,
}

impl Descriptive {
    pub fn of(values: &[f64]) -> Option<Self> {
        let mean = mean(values)?;
        Some(Self {
            n: values.len(),
            mean,
            std: sample_std(values),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            cv: coefficient_of_variation(values).ok(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: MetricName,
    pub valid: Option<Descriptive>,
    pub pass: Option<Descriptive>,
    /// Historical point value, when the record gives one.
    pub historical: Option<f64>,
    /// Alignment error of the PASS-run mean, in percent.
    pub alignment_error: Option<f64>,
}

/// Count of runs showing a categorical outcome, over a population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proportion {
    pub count: usize,
    pub of: usize,
}

impl Proportion {
    pub fn rate(self) -> Option<f64> {
        (self.of > 0).then(|| self.count as f64 / self.of as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub scenario_id: String,
    pub n_total: usize,
    pub n_valid: usize,
    pub n_json_fail: usize,
    pub n_pass: usize,
    pub n_fail: usize,
    pub json_fail_rate: f64,
    /// Absent when no run produced valid metrics.
    pub pass_rate: Option<f64>,
    pub metrics: Vec<MetricSummary>,
    pub no_recovery_valid: Proportion,
    pub no_recovery_pass: Proportion,
    pub apc_presence_valid: Proportion,
    pub apc_presence_pass: Proportion,
    /// Absent when the batch has no FAIL runs.
    pub failure_attribution: Option<BTreeMap<MetricName, f64>>,
    pub verdicts: Vec<ValidityVerdict>,
}

impl BatchSummary {
    pub fn metric(&self, m: MetricName) -> &MetricSummary {
        self.metrics
            .iter()
            .find(|s| s.metric == m)
            .expect("every metric is summarized")
    }
}

/// One extraction outcome awaiting the gate.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub run_id: String,
    pub outcome: ExtractionOutcome,
}

impl RunOutcome {
    pub fn new(run_id: impl Into<String>, outcome: ExtractionOutcome) -> Self {
        Self {
            run_id: run_id.into(),
            outcome,
        }
    }
}

fn numeric(m: &MetricSet, metric: MetricName) -> Option<f64> {
    match metric {
        MetricName::Ddt => m.ddt.minutes(),
        MetricName::Ipr => Some(m.ipr),
        MetricName::Csr => m.csr.percent(),
        MetricName::Fli => m.fli.score().map(f64::from),
        MetricName::Apc => Some(f64::from(m.apc_depth)),
    }
}

fn historical_point(b: &HistoricalBaseline, metric: MetricName) -> Option<f64> {
    match metric {
        MetricName::Ddt => match b.ddt {
            DdtBaseline::Minutes(h) => Some(h),
            DdtBaseline::NoRecovery => None,
        },
        MetricName::Ipr => b.ipr.point(),
        MetricName::Csr => Some(b.csr),
        MetricName::Fli => None,
        MetricName::Apc => b.apc_depth.map(f64::from),
    }
}

/// Gates every outcome against the scenario's criteria and summarizes the batch.
pub fn summarize_batch(
    scenario: &Scenario,
    runs: &[RunOutcome],
) -> Result<BatchSummary, StatsError> {
    if runs.is_empty() {
        return Err(StatsError::EmptyBatch);
    }
    let verdicts: Vec<ValidityVerdict> = runs
        .iter()
        .map(|r| gate_run(&r.run_id, &r.outcome, &scenario.criteria))
        .collect();
    let valid: Vec<&MetricSet> = runs.iter().filter_map(|r| r.outcome.metrics()).collect();
    let pass: Vec<&MetricSet> = runs
        .iter()
        .zip(&verdicts)
        .filter(|(_, v)| v.status == VerdictStatus::Pass)
        .filter_map(|(r, _)| r.outcome.metrics())
        .collect();

    let n_total = runs.len();
    let n_valid = valid.len();
    let n_pass = pass.len();
    let metrics = MetricName::ALL
        .into_iter()
        .map(|metric| {
            let values = |set: &[&MetricSet]| -> Vec<f64> {
                set.iter().filter_map(|m| numeric(m, metric)).collect()
            };
            let pass_stats = Descriptive::of(&values(&pass));
            let historical = historical_point(&scenario.baseline, metric);
            let alignment = match (&pass_stats, historical) {
                (Some(p), Some(h)) => alignment_error(p.mean, h).ok(),
                _ => None,
            };
            MetricSummary {
                metric,
                valid: Descriptive::of(&values(&valid)),
                pass: pass_stats,
                historical,
                alignment_error: alignment,
            }
        })
        .collect();

    let proportion = |set: &[&MetricSet], pred: fn(&MetricSet) -> bool| Proportion {
        count: set.iter().filter(|m| pred(m)).count(),
        of: set.len(),
    };
    let no_recovery = |m: &MetricSet| m.ddt == Ddt::NoRecovery;
    let apc = |m: &MetricSet| m.apc_presence;

    Ok(BatchSummary {
        scenario_id: scenario.scenario_id.clone(),
        n_total,
        n_valid,
        n_json_fail: n_total - n_valid,
        n_pass,
        n_fail: n_valid - n_pass,
        json_fail_rate: (n_total - n_valid) as f64 / n_total as f64,
        pass_rate: (n_valid > 0).then(|| n_pass as f64 / n_valid as f64),
        metrics,
        no_recovery_valid: proportion(&valid, no_recovery),
        no_recovery_pass: proportion(&pass, no_recovery),
        apc_presence_valid: proportion(&valid, apc),
        apc_presence_pass: proportion(&pass, apc),
        failure_attribution: failure_attribution(&verdicts).ok(),
        verdicts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarRow {
    pub metric: MetricName,
    pub sim_norm: f64,
    pub hist_norm: f64,
}

/// Normalized simulated and historical values per metric.
///
/// Axis maxima: the scenario's total duration for DDT (NO_RECOVERY sits at
/// 1.0), 100 for percentages, 10 for FLI and 2 for cascade depth. Simulated
/// values average PASS runs, or all valid runs when none passed. A metric
/// with no simulated or historical value is plotted at 0.
pub fn emit_radar_data(summary: &BatchSummary, scenario: &Scenario) -> Vec<RadarRow> {
    let use_pass = summary.n_pass > 0;
    let stats = |m: MetricName| {
        let s = summary.metric(m);
        if use_pass {
            s.pass.as_ref()
        } else {
            s.valid.as_ref()
        }
    };
    let axis = scenario.temporal.total_duration_minutes;
    let b = &scenario.baseline;

    let ddt_sim = {
        let nr = if use_pass {
            summary.no_recovery_pass
        } else {
            summary.no_recovery_valid
        };
        let (n_num, sum) = stats(MetricName::Ddt)
            .map(|d| (d.n, d.mean * d.n as f64 / axis))
            .unwrap_or((0, 0.0));
        let n = n_num + nr.count;
        if n == 0 {
            0.0
        } else {
            (sum + nr.count as f64) / n as f64
        }
    };
    let ddt_hist = match b.ddt {
        DdtBaseline::Minutes(h) => h / axis,
        DdtBaseline::NoRecovery => 1.0,
    };
    let mean_of = |m: MetricName| stats(m).map(|d| d.mean).unwrap_or(0.0);

    vec![
        RadarRow {
            metric: MetricName::Ddt,
            sim_norm: ddt_sim,
            hist_norm: ddt_hist,
        },
        RadarRow {
            metric: MetricName::Ipr,
            sim_norm: mean_of(MetricName::Ipr) / 100.0,
            hist_norm: b.ipr.representative() / 100.0,
        },
        RadarRow {
            metric: MetricName::Csr,
            sim_norm: mean_of(MetricName::Csr) / 100.0,
            hist_norm: b.csr / 100.0,
        },
        RadarRow {
            metric: MetricName::Fli,
            sim_norm: mean_of(MetricName::Fli) / f64::from(FLI_MAX),
            hist_norm: f64::from(b.fli_min.unwrap_or(0)) / f64::from(FLI_MAX),
        },
        RadarRow {
            metric: MetricName::Apc,
            sim_norm: mean_of(MetricName::Apc) / f64::from(APC_MAX_DEPTH),
            hist_norm: f64::from(b.apc_depth.unwrap_or(0)) / f64::from(APC_MAX_DEPTH),
        },
    ]
}

pub fn radar_csv(rows: &[RadarRow]) -> String {
    let mut out = String::from("metric,sim_norm,hist_norm\n");
    for r in rows {
        let _ = writeln!(out, "{},{:.3},{:.3}", r.metric, r.sim_norm, r.hist_norm);
    }
    out
}

/// Percentage with one decimal, from a fraction.
pub fn pct(rate: f64) -> String {
    format!("{:.1}%", rate * 100.0)
}

fn opt_pct(rate: Option<f64>) -> String {
    rate.map(pct).unwrap_or_else(|| "n/a".into())
}

fn mean_std(d: Option<&Descriptive>) -> String {
    match d {
        None => "n/a".into(),
        Some(d) => match d.std {
            Some(s) => format!("{:.1} ± {:.1}", d.mean, s),
            None => format!("{:.1}", d.mean),
        },
    }
}

/// Validity summary: one row per scenario.
pub fn format_validity_table(summaries: &[BatchSummary]) -> String {
    let mut out = format!(
        "{:<16}{:>8}{:>8}{:>11}{:>11}{:>7}{:>11}\n",
        "scenario", "total", "valid", "json_fail", "json_rate", "pass", "pass_rate"
    );
    for s in summaries {
        let _ = writeln!(
            out,
            "{:<16}{:>8}{:>8}{:>11}{:>11}{:>7}{:>11}",
            s.scenario_id,
            s.n_total,
            s.n_valid,
            s.n_json_fail,
            pct(s.json_fail_rate),
            s.n_pass,
            opt_pct(s.pass_rate)
        );
    }
    out
}

/// PASS-run means against the historical record.
pub fn format_comparison_table(s: &BatchSummary) -> String {
    let mut out = format!(
        "{}: PASS runs (n={})\n{:<8}{:>18}{:>12}{:>10}{:>8}\n",
        s.scenario_id, s.n_pass, "metric", "simulated", "historical", "delta", "cv"
    );
    for m in &s.metrics {
        let sim = match m.metric {
            MetricName::Ddt if s.no_recovery_pass.count > 0 && m.pass.is_none() => format!(
                "NO_RECOVERY ({}/{})",
                s.no_recovery_pass.count, s.no_recovery_pass.of
            ),
            _ => mean_std(m.pass.as_ref()),
        };
        let hist = m
            .historical
            .map(|h| format!("{h:.1}"))
            .unwrap_or_else(|| "-".into());
        let delta = m
            .alignment_error
            .map(|d| format!("{d:.1}%"))
            .unwrap_or_else(|| "-".into());
        let cv = opt_pct(m.pass.as_ref().and_then(|d| d.cv));
        let _ = writeln!(
            out,
            "{:<8}{:>18}{:>12}{:>10}{:>8}",
            m.metric, sim, hist, delta, cv
        );
    }
    let _ = writeln!(
        out,
        "NO_RECOVERY rate {}  APC presence rate {}",
        opt_pct(s.no_recovery_pass.rate()),
        opt_pct(s.apc_presence_pass.rate())
    );
    out
}

/// Descriptive statistics over all valid runs.
pub fn format_descriptive_table(s: &BatchSummary) -> String {
    let mut out = format!(
        "{}: valid runs (n={})\n{:<8}{:>18}{:>18}{:>8}\n",
        s.scenario_id, s.n_valid, "metric", "mean ± sd", "range", "cv"
    );
    for m in &s.metrics {
        let range = m
            .valid
            .as_ref()
            .map(|d| format!("[{:.1}, {:.1}]", d.min, d.max))
            .unwrap_or_else(|| "n/a".into());
        let cv = opt_pct(m.valid.as_ref().and_then(|d| d.cv));
        let _ = writeln!(
            out,
            "{:<8}{:>18}{:>18}{:>8}",
            m.metric,
            mean_std(m.valid.as_ref()),
            range,
            cv
        );
    }
    let _ = writeln!(
        out,
        "NO_RECOVERY rate {}  APC presence rate {}",
        opt_pct(s.no_recovery_valid.rate()),
        opt_pct(s.apc_presence_valid.rate())
    );
    out
}

/// Failure attribution per metric.
pub fn format_attribution_table(s: &BatchSummary) -> String {
    let mut out = format!("{}: FAIL runs (n={})\n", s.scenario_id, s.n_fail);
    match &s.failure_attribution {
        None => out.push_str("no FAIL runs, attribution undefined\n"),
        Some(rho) => {
            for (m, r) in rho {
                let _ = writeln!(out, "{:<8}{:>8}", m, pct(*r));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::Extractor;
    use crate::scenario::load_scenario;

    fn tmi_metrics(ddt: f64, ipr: f64, fli: u8) -> MetricSet {
        MetricSet {
            run_id: "r".into(),
            ddt: Ddt::Minutes(ddt),
            ipr,
            no_procedure_decisions: false,
            csr: Csr::Percent(100.0),
            apc_presence: true,
            apc_depth: 1,
            fli: Fli::Score(fli),
            extractor: Extractor::Rules,
        }
    }

    fn chern_metrics(ipr: f64) -> MetricSet {
        MetricSet {
            ddt: Ddt::NoRecovery,
            apc_depth: 2,
            fli: Fli::Score(0),
            ..tmi_metrics(0.0, ipr, 0)
        }
    }

    fn gate(m: MetricSet, scenario: &str) -> ValidityVerdict {
        let s = load_scenario(scenario).unwrap();
        gate_run("r", &ExtractionOutcome::Valid(m), &s.criteria)
    }

    #[test]
    fn gate_examples() {
        assert_eq!(
            gate(tmi_metrics(135.0, 30.0, 4), "tmi1979").status,
            VerdictStatus::Pass
        );
        assert_eq!(
            gate(chern_metrics(8.0), "chernobyl1986").status,
            VerdictStatus::Pass
        );
        let v = gate(tmi_metrics(135.0, 55.0, 4), "tmi1979");
        assert_eq!(v.status, VerdictStatus::Fail);
        assert_eq!(v.violated_criteria, vec![MetricName::Ipr]);
    }

    #[test]
    fn gate_edges() {
        let na = MetricSet {
            csr: Csr::NotApplicable,
            ..tmi_metrics(135.0, 30.0, 4)
        };
        assert_eq!(gate(na, "tmi1979").violated_criteria, vec![MetricName::Csr]);
        let numeric = MetricSet {
            ddt: Ddt::Minutes(20.0),
            ..chern_metrics(8.0)
        };
        assert_eq!(
            gate(numeric, "chernobyl1986").violated_criteria,
            vec![MetricName::Ddt]
        );
        let nr = MetricSet {
            ddt: Ddt::NoRecovery,
            ..tmi_metrics(0.0, 30.0, 4)
        };
        assert_eq!(gate(nr, "tmi1979").violated_criteria, vec![MetricName::Ddt]);
        let flagged = MetricSet {
            ipr: 0.0,
            no_procedure_decisions: true,
            ..chern_metrics(0.0)
        };
        assert_eq!(gate(flagged, "chernobyl1986").status, VerdictStatus::Pass);
        let j = gate_run(
            "x",
            &ExtractionOutcome::JsonFail {
                reason: "empty response".into(),
            },
            &load_scenario("tmi1979").unwrap().criteria,
        );
        assert_eq!(j.status, VerdictStatus::JsonFail);
        assert!(j.violated_criteria.is_empty());
    }

    #[test]
    fn ddt_interval_is_inclusive() {
        for (x, ok) in [(99.9, false), (100.0, true), (170.0, true), (170.1, false)] {
            let pass = gate(tmi_metrics(x, 30.0, 4), "tmi1979").status == VerdictStatus::Pass;
            assert_eq!(pass, ok, "ddt {x}");
        }
    }

    #[test]
    fn alignment_examples() {
        assert_eq!(
            format!("{:.1}", alignment_error(134.8, 138.0).unwrap()),
            "2.3"
        );
        assert_eq!(alignment_error(36.0, 36.0).unwrap(), 0.0);
        assert_eq!(
            format!("{:.1}", alignment_error(28.9, 36.0).unwrap()),
            "19.7"
        );
        assert_eq!(alignment_error(1.0, 0.0), Err(StatsError::ZeroBaseline));
    }

    #[test]
    fn cv_examples() {
        assert_eq!(coefficient_of_variation(&[7.0, 7.0, 7.0]).unwrap(), 0.0);
        let cv = coefficient_of_variation(&[130.0, 135.0, 140.0]).unwrap();
        assert!((cv - 5.0 / 135.0).abs() < 1e-12);
        assert_eq!(pct(cv_from_moments(5.1, 134.8).unwrap()), "3.8%");
        assert_eq!(
            coefficient_of_variation(&[1.0]),
            Err(StatsError::TooFewValues(1))
        );
        assert_eq!(
            coefficient_of_variation(&[-1.0, 1.0]),
            Err(StatsError::ZeroMean)
        );
    }

    fn fail(violated: &[MetricName]) -> ValidityVerdict {
        ValidityVerdict {
            run_id: "f".into(),
            status: VerdictStatus::Fail,
            violated_criteria: violated.to_vec(),
            json_fail_reason: None,
        }
    }

    #[test]
    fn attribution_examples() {
        let rho = failure_attribution(&[fail(&[MetricName::Ipr, MetricName::Fli])]).unwrap();
        assert_eq!(rho[&MetricName::Ipr], 1.0);
        assert_eq!(rho[&MetricName::Fli], 1.0);
        assert_eq!(rho[&MetricName::Ddt], 0.0);

        let mut v = vec![fail(&[MetricName::Ipr]); 3];
        v.push(fail(&[MetricName::Fli]));
        let rho = failure_attribution(&v).unwrap();
        assert_eq!(rho[&MetricName::Ipr], 0.75);
        assert_eq!(rho[&MetricName::Fli], 0.25);

        assert_eq!(failure_attribution(&[]), Err(StatsError::NoFailures));
    }

    #[test]
    fn summary_accounting_and_radar() {
        let s = load_scenario("tmi1979").unwrap();
        let mut runs = vec![RunOutcome::new(
            "j",
            ExtractionOutcome::JsonFail { reason: "x".into() },
        )];
        runs.push(RunOutcome::new(
            "p",
            ExtractionOutcome::Valid(tmi_metrics(134.8, 30.0, 4)),
        ));
        runs.push(RunOutcome::new(
            "f",
            ExtractionOutcome::Valid(tmi_metrics(134.8, 60.0, 4)),
        ));
        let sum = summarize_batch(&s, &runs).unwrap();
        assert_eq!(
            (
                sum.n_total,
                sum.n_valid,
                sum.n_json_fail,
                sum.n_pass,
                sum.n_fail
            ),
            (3, 2, 1, 1, 1)
        );
        assert_eq!(sum.pass_rate, Some(0.5));
        let radar = emit_radar_data(&sum, &s);
        assert_eq!(radar.len(), 5);
        assert!((radar[0].sim_norm - 0.8987).abs() < 1e-3);
        assert_eq!(radar[2].sim_norm, 1.0);
        assert_eq!(radar[2].hist_norm, 1.0);
        let csv = radar_csv(&radar);
        assert!(csv.starts_with("metric,sim_norm,hist_norm\nDDT,0.899,"));
        assert_eq!(summarize_batch(&s, &[]), Err(StatsError::EmptyBatch));
    }

    #[test]
    fn singleton_all_pass() {
        let s = load_scenario("chernobyl1986").unwrap();
        let sum = summarize_batch(
            &s,
            &[RunOutcome::new(
                "p",
                ExtractionOutcome::Valid(chern_metrics(12.5)),
            )],
        )
        .unwrap();
        assert_eq!(sum.pass_rate, Some(1.0));
        assert!(sum.failure_attribution.is_none());
        let radar = emit_radar_data(&sum, &s);
        assert_eq!(radar[0].sim_norm, 1.0);
        assert_eq!(radar[4].sim_norm, 1.0);
    }
}
