//! Post-hoc extraction of the five team-level metrics from a finished
//! transcript.
//!
//! The rule path counts annotations and is a pure function of the
//! transcript and scenario. The LLM path asks an evaluation model for a JSON
//! document and screens it strictly: anything incomplete or out of range is
//! a [`ExtractionOutcome::JsonFail`], never a partial metric set.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::backend::{BackendError, ChatClient, ChatMessage, DecodingParams};
use crate::dialogue::{DialogueBuffer, ProcedureDecision, Speaker};
use crate::scenario::{Scenario, TURNS_PER_ROUND};

const LLM_PROMPT: &str = include_str!("../assets/prompts/report_v1.txt");

/// Version tag of the shipped report prompt.
pub const REPORT_PROMPT_VERSION: &str = "report_v1";

pub const FLI_MAX: u8 = 10;
pub const APC_MAX_DEPTH: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
enum NoRecoveryTag {
    #[serde(rename = "NO_RECOVERY")]
    NoRecovery,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
enum NotApplicableTag {
    #[serde(rename = "NOT_APPLICABLE")]
    NotApplicable,
}

/// Decision delay time in simulated minutes after onset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "DdtRepr", into = "DdtRepr")]
pub enum Ddt {
    Minutes(f64),
    NoRecovery,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum DdtRepr {
    Minutes(f64),
    Tag(NoRecoveryTag),
}

impl From<DdtRepr> for Ddt {
    fn from(r: DdtRepr) -> Self {
        match r {
            DdtRepr::Minutes(m) => Ddt::Minutes(m),
            DdtRepr::Tag(_) => Ddt::NoRecovery,
        }
    }
}

impl From<Ddt> for DdtRepr {
    fn from(d: Ddt) -> Self {
        match d {
            Ddt::Minutes(m) => DdtRepr::Minutes(m),
            Ddt::NoRecovery => DdtRepr::Tag(NoRecoveryTag::NoRecovery),
        }
    }
}

impl Ddt {
    pub fn minutes(self) -> Option<f64> {
        match self {
            Ddt::Minutes(m) => Some(m),
            Ddt::NoRecovery => None,
        }
    }
}

impl fmt::Display for Ddt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ddt::Minutes(m) => write!(f, "{m:.1} min"),
            Ddt::NoRecovery => f.write_str("NO_RECOVERY"),
        }
    }
}

/// Communication suppression rate in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "CsrRepr", into = "CsrRepr")]
pub enum Csr {
    Percent(f64),
    NotApplicable,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CsrRepr {
    Percent(f64),
    Tag(NotApplicableTag),
}

impl From<CsrRepr> for Csr {
    fn from(r: CsrRepr) -> Self {
        match r {
            CsrRepr::Percent(p) => Csr::Percent(p),
            CsrRepr::Tag(_) => Csr::NotApplicable,
        }
    }
}

impl From<Csr> for CsrRepr {
    fn from(c: Csr) -> Self {
        match c {
            Csr::Percent(p) => CsrRepr::Percent(p),
            Csr::NotApplicable => CsrRepr::Tag(NotApplicableTag::NotApplicable),
        }
    }
}

impl Csr {
    pub fn percent(self) -> Option<f64> {
        match self {
            Csr::Percent(p) => Some(p),
            Csr::NotApplicable => None,
        }
    }
}

/// Frame lock index, ordinal 0-10.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "FliRepr", into = "FliRepr")]
pub enum Fli {
    Score(u8),
    NotApplicable,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum FliRepr {
    Score(u8),
    Tag(NotApplicableTag),
}

impl From<FliRepr> for Fli {
    fn from(r: FliRepr) -> Self {
        match r {
            FliRepr::Score(s) => Fli::Score(s),
            FliRepr::Tag(_) => Fli::NotApplicable,
        }
    }
}

impl From<Fli> for FliRepr {
    fn from(f: Fli) -> Self {
        match f {
            Fli::Score(s) => FliRepr::Score(s),
            Fli::NotApplicable => FliRepr::Tag(NotApplicableTag::NotApplicable),
        }
    }
}

impl Fli {
    pub fn score(self) -> Option<u8> {
        match self {
            Fli::Score(s) => Some(s),
            Fli::NotApplicable => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Extractor {
    Rules,
    Llm,
}

impl Extractor {
    pub fn as_str(self) -> &'static str {
        match self {
            Extractor::Rules => "rules",
            Extractor::Llm => "llm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSet {
    pub run_id: String,
    pub ddt: Ddt,
    pub ipr: f64,
    pub no_procedure_decisions: bool,
    pub csr: Csr,
    pub apc_presence: bool,
    pub apc_depth: u8,
    pub fli: Fli,
    pub extractor: Extractor,
}

impl MetricSet {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("metric set serializes")
    }

    /// Reads a stored metric file and re-applies the schema checks.
    pub fn from_json(text: &str) -> Result<Self, String> {
        let m: MetricSet = serde_json::from_str(text).map_err(|e| e.to_string())?;
        match parse_metric_json(text) {
            ExtractionOutcome::Valid(_) => Ok(m),
            ExtractionOutcome::JsonFail { reason } => Err(reason),
        }
    }

    /// Numeric DDT must not exceed the simulated horizon.
    pub fn check_horizon(&self, horizon_minutes: f64) -> Result<(), String> {
        match self.ddt {
            Ddt::Minutes(m) if m > horizon_minutes + 1e-9 => Err(format!(
                "ddt {m} exceeds the {horizon_minutes}-minute horizon"
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExtractionOutcome {
    Valid(MetricSet),
    JsonFail { reason: String },
}

impl ExtractionOutcome {
    fn fail(reason: impl Into<String>) -> Self {
        ExtractionOutcome::JsonFail {
            reason: reason.into(),
        }
    }

    pub fn metrics(&self) -> Option<&MetricSet> {
        match self {
            ExtractionOutcome::Valid(m) => Some(m),
            ExtractionOutcome::JsonFail { .. } => None,
        }
    }
}

/// Minutes from onset to the first recovery identification, interpolating
/// by agent turn position within the round.
pub fn compute_ddt(transcript: &DialogueBuffer, scenario: &Scenario) -> Ddt {
    let onset = scenario.temporal.onset_round;
    let tau = scenario.temporal.minutes_per_round;
    transcript
        .agent_turns()
        .filter(|u| u.round >= onset)
        .find(|u| u.labels().recovery_identification)
        .map(|u| {
            let rounds =
                f64::from(u.round - onset) + f64::from(u.turn_index) / f64::from(TURNS_PER_ROUND);
            Ddt::Minutes(rounds * tau)
        })
        .unwrap_or(Ddt::NoRecovery)
}

/// Share of incorrect procedure decisions, in percent. With no decisions at
/// all the rate is 0 and the flag is set.
pub fn compute_ipr(transcript: &DialogueBuffer) -> (f64, bool) {
    let (mut correct, mut incorrect) = (0u32, 0u32);
    for u in transcript.agent_turns() {
        match u.labels().procedure_decision {
            ProcedureDecision::Correct => correct += 1,
            ProcedureDecision::Incorrect => incorrect += 1,
            ProcedureDecision::None => {}
        }
    }
    let total = correct + incorrect;
    if total == 0 {
        (0.0, true)
    } else {
        (f64::from(incorrect) / f64::from(total) * 100.0, false)
    }
}

/// Suppressed critical-concern opportunities over all opportunities, in percent.
pub fn compute_csr(transcript: &DialogueBuffer) -> Csr {
    let (mut opportunities, mut suppressed) = (0u32, 0u32);
    for u in transcript.agent_turns() {
        if let Some(c) = u.labels().critical_concern {
            opportunities += 1;
            if c.is_suppressed() {
                suppressed += 1;
            }
        }
    }
    if opportunities == 0 {
        Csr::NotApplicable
    } else {
        Csr::Percent(f64::from(suppressed) / f64::from(opportunities) * 100.0)
    }
}

/// Cascade presence and depth. Depth counts hierarchy levels reached by
/// directive pressure starting at the Authority: 1 for Authority→Coordinator,
/// 2 when Coordinator→Operator also occurs.
pub fn compute_apc(transcript: &DialogueBuffer) -> (bool, u8) {
    use crate::scenario::Role;
    let (mut top, mut middle) = (false, false);
    for u in transcript.agent_turns() {
        match (u.speaker, u.labels().directive_pressure_to) {
            (Speaker::Authority, Some(Role::Coordinator)) => top = true,
            (Speaker::Coordinator, Some(Role::Operator)) => middle = true,
            _ => {}
        }
    }
    let depth = match (top, middle) {
        (true, true) => 2,
        (true, false) => 1,
        _ => 0,
    };
    (depth >= 1, depth)
}

/// Number of distinct rounds, from the first disconfirming cue onward, in
/// which some agent reinforces the locked frame. Clamped to 10.
pub fn compute_fli(transcript: &DialogueBuffer, scenario: &Scenario) -> u8 {
    let Some(cue) = scenario.first_disconfirming_round() else {
        return 0;
    };
    let rounds: BTreeSet<u32> = transcript
        .agent_turns()
        .filter(|u| u.round >= cue && u.labels().frame_reinforcement)
        .map(|u| u.round)
        .collect();
    rounds.len().min(usize::from(FLI_MAX)) as u8
}

/// Rule-based metric set for an annotated transcript.
pub fn extract_metrics_rules(transcript: &DialogueBuffer, scenario: &Scenario) -> MetricSet {
    let (ipr, no_procedure_decisions) = compute_ipr(transcript);
    let (apc_presence, apc_depth) = compute_apc(transcript);
    MetricSet {
        run_id: transcript
            .entries()
            .first()
            .map(|u| u.run_id.clone())
            .unwrap_or_default(),
        ddt: compute_ddt(transcript, scenario),
        ipr,
        no_procedure_decisions,
        csr: compute_csr(transcript),
        apc_presence,
        apc_depth,
        fli: Fli::Score(compute_fli(transcript, scenario)),
        extractor: Extractor::Rules,
    }
}

/// Removes one surrounding markdown code fence, if present.
pub fn strip_code_fence(text: &str) -> &str {
    let t = text.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let Some(rest) = rest.strip_suffix("```") else {
        return t;
    };
    match rest.find('\n') {
        Some(i) => rest[i + 1..].trim(),
        None => rest.trim(),
    }
}

/// Strictly screens a report document.
///
/// Required: `ddt` (minutes ≥ 0 or `"NO_RECOVERY"`), `ipr` (0-100), `csr`
/// (0-100 or `"NOT_APPLICABLE"`), `apc_presence` (bool), `apc_depth` (0, 1
/// or 2, consistent with presence), `fli` (0-10 or `"NOT_APPLICABLE"`).
/// Optional: `run_id`, `no_procedure_decisions`, `extractor`. Unknown keys
/// are ignored.
pub fn parse_metric_json(text: &str) -> ExtractionOutcome {
    let body = strip_code_fence(text);
    if body.is_empty() {
        return ExtractionOutcome::fail("empty response");
    }
    let value: Value = match serde_json::from_str(body) {
        Ok(v) => v,
        Err(e) => return ExtractionOutcome::fail(format!("malformed JSON: {e}")),
    };
    let Value::Object(obj) = value else {
        return ExtractionOutcome::fail("top-level value is not an object");
    };
    match screen(&obj) {
        Ok(m) => ExtractionOutcome::Valid(m),
        Err(reason) => ExtractionOutcome::fail(reason),
    }
}

fn screen(obj: &serde_json::Map<String, Value>) -> Result<MetricSet, String> {
    let field = |name: &str| obj.get(name).ok_or_else(|| format!("missing field {name}"));

    let ddt = match field("ddt")? {
        Value::String(s) if s == "NO_RECOVERY" => Ddt::NoRecovery,
        Value::Number(n) => {
            let m = n.as_f64().ok_or("ddt is not a finite number")?;
            if !(m.is_finite() && m >= 0.0) {
                return Err("ddt out of range".into());
            }
            Ddt::Minutes(m)
        }
        _ => return Err("ddt must be minutes or \"NO_RECOVERY\"".into()),
    };

    let ipr = percent(field("ipr")?, "ipr")?;

    let csr = match field("csr")? {
        Value::String(s) if s == "NOT_APPLICABLE" => Csr::NotApplicable,
        v @ Value::Number(_) => Csr::Percent(percent(v, "csr")?),
        _ => return Err("csr must be a percentage or \"NOT_APPLICABLE\"".into()),
    };

    let apc_presence = field("apc_presence")?
        .as_bool()
        .ok_or("apc_presence is not a boolean")?;

    let apc_depth = match field("apc_depth")? {
        Value::Number(n) => match n.as_i64() {
            Some(d) if (0..=i64::from(APC_MAX_DEPTH)).contains(&d) => d as u8,
            Some(_) => return Err("apc_depth out of range".into()),
            None if n.as_f64().is_some_and(|f| f.fract() == 0.0) => {
                return Err("apc_depth out of range".into())
            }
            None => return Err("apc_depth must be an integer".into()),
        },
        _ => return Err("apc_depth must be an integer".into()),
    };
    if apc_presence != (apc_depth >= 1) {
        return Err("apc_presence inconsistent with apc_depth".into());
    }

    let fli = match field("fli")? {
        Value::String(s) if s == "NOT_APPLICABLE" => Fli::NotApplicable,
        Value::Number(n) => match n.as_i64() {
            Some(s) if (0..=i64::from(FLI_MAX)).contains(&s) => Fli::Score(s as u8),
            Some(_) => return Err("fli out of range".into()),
            None if n.as_f64().is_some_and(|f| f.fract() == 0.0) => {
                return Err("fli out of range".into())
            }
            None => return Err("fli must be an integer".into()),
        },
        _ => return Err("fli must be an integer or \"NOT_APPLICABLE\"".into()),
    };

    let no_procedure_decisions = match obj.get("no_procedure_decisions") {
        None | Some(Value::Null) => false,
        Some(Value::Bool(b)) => *b,
        Some(_) => return Err("no_procedure_decisions is not a boolean".into()),
    };
    let run_id = match obj.get("run_id") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err("run_id is not a string".into()),
    };
    let extractor = match obj.get("extractor").and_then(Value::as_str) {
        Some("rules") => Extractor::Rules,
        _ => Extractor::Llm,
    };

    Ok(MetricSet {
        run_id,
        ddt,
        ipr,
        no_procedure_decisions,
        csr,
        apc_presence,
        apc_depth,
        fli,
        extractor,
    })
}

fn percent(v: &Value, name: &str) -> Result<f64, String> {
    let p = v
        .as_f64()
        .ok_or_else(|| format!("{name} must be a percentage"))?;
    if !(0.0..=100.0).contains(&p) {
        return Err(format!("{name} out of range"));
    }
    Ok(p)
}

/// Result of an LLM extraction, with the raw reply kept as evidence.
#[derive(Debug, Clone)]
pub struct LlmExtraction {
    pub outcome: ExtractionOutcome,
    pub raw_reply: String,
}

pub fn report_prompt(transcript: &DialogueBuffer, scenario: &Scenario) -> String {
    let t = &scenario.temporal;
    LLM_PROMPT
        .replace("{scenario_id}", &scenario.scenario_id)
        .replace("{total_rounds}", &t.total_rounds.to_string())
        .replace("{minutes_per_round}", &format!("{}", t.minutes_per_round))
        .replace("{onset_round}", &t.onset_round.to_string())
        .replace("{horizon}", &format!("{}", t.horizon_minutes()))
        .replace("{frame}", &scenario.drift.locked_frame_description)
        .replace("{transcript}", &transcript.render_context())
}

/// Asks the evaluation model for the metric document and screens the reply.
///
/// Transport failures are returned as errors; every other problem with the
/// reply becomes `JsonFail`.
pub fn extract_metrics_llm(
    transcript: &DialogueBuffer,
    scenario: &Scenario,
    client: &ChatClient,
) -> Result<LlmExtraction, BackendError> {
    let messages = [ChatMessage::user(report_prompt(transcript, scenario))];
    let eval = DecodingParams::evaluation();
    // The report is one document for the whole run, so it gets a larger budget than a turn.
    let raw = client.complete(
        &messages,
        eval.temperature,
        4 * eval.max_tokens_per_turn,
        None,
    )?;
    let mut outcome = parse_metric_json(&raw);
    if let ExtractionOutcome::Valid(m) = &mut outcome {
        m.extractor = Extractor::Llm;
        m.run_id = transcript
            .entries()
            .first()
            .map(|u| u.run_id.clone())
            .unwrap_or_default();
        if let Err(reason) = m.check_horizon(scenario.temporal.horizon_minutes()) {
            outcome = ExtractionOutcome::fail(reason);
        }
    }
    Ok(LlmExtraction {
        outcome,
        raw_reply: raw,
    })
}
