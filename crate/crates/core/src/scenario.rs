//! Declarative accident scenarios.
//!
//! A scenario is a single TOML document describing the crew roster, the
//! plant event timeline, round timing, the face-validity acceptance
//! criteria, the historical baseline, and the moderator's drift
//! parameters. The two builtin scenarios are embedded copies of the same
//! format and go through the same loader.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const TMI_1979: &str = include_str!("../assets/scenarios/tmi1979.toml");
const CHERNOBYL_1986: &str = include_str!("../assets/scenarios/chernobyl1986.toml");

/// Identifiers of the scenarios shipped with the crate.
pub const BUILTIN_SCENARIOS: &[&str] = &["tmi1979", "chernobyl1986"];

/// Agents acting in a round, in speaking order.
pub const TURN_ORDER: [Role; 3] = [Role::Authority, Role::Coordinator, Role::Operator];

/// Agent turns per round.
pub const TURNS_PER_ROUND: u32 = 3;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown builtin scenario `{0}`")]
    NotFound(String),
    #[error("invalid scenario: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("failed to read scenario file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// A single broken invariant reported by [`validate_scenario`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    Authority,
    Coordinator,
    Operator,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Authority => "Authority",
            Role::Coordinator => "Coordinator",
            Role::Operator => "Operator",
        }
    }

    /// Position in the crew hierarchy; higher outranks lower.
    pub fn rank(self) -> AuthorityLevel {
        match self {
            Role::Authority => AuthorityLevel::High,
            Role::Coordinator => AuthorityLevel::Medium,
            Role::Operator => AuthorityLevel::Low,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AuthorityLevel {
    Low = 0,
    Medium = 1,
    High = 2,
}

impl AuthorityLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            AuthorityLevel::High => "High",
            AuthorityLevel::Medium => "Medium",
            AuthorityLevel::Low => "Low",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleSpec {
    pub role_name: Role,
    pub historical_person: String,
    pub authority_level: AuthorityLevel,
    pub knowledge_boundary: String,
    pub operational_responsibility: String,
    pub behavioral_tendencies: String,
    /// Assembled from the other fields on load when the file leaves it out.
    #[serde(default)]
    pub role_prompt: String,
}

impl RoleSpec {
    /// Builds the system prompt that conditions this agent's behaviour.
    pub fn assemble_prompt(&self) -> String {
        format!(
            "You are {person}, the {role} Agent in a nuclear plant control-room crew. \
             Stay in character for the whole exercise and speak only as {person}.\n\
             Authority position: {level}. {authority_note}\n\
             Knowledge boundary: {knowledge}\n\
             Operational responsibility: {responsibility}\n\
             Behavioral tendencies under stress: {tendencies}",
            person = self.historical_person,
            role = self.role_name,
            level = self.authority_level.as_str(),
            authority_note = match self.authority_level {
                AuthorityLevel::High => "You hold directive primacy over the crew.",
                AuthorityLevel::Medium => {
                    "You relay instructions from above and filter information from below."
                }
                AuthorityLevel::Low => "You report to and take direction from those above you.",
            },
            knowledge = self.knowledge_boundary,
            responsibility = self.operational_responsibility,
            tendencies = self.behavioral_tendencies,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalConfig {
    pub total_rounds: u32,
    pub minutes_per_round: f64,
    #[serde(default = "default_onset")]
    pub onset_round: u32,
    /// Declared length of the simulated window, in minutes.
    pub total_duration_minutes: f64,
}

fn default_onset() -> u32 {
    1
}

impl TemporalConfig {
    /// Simulated minutes covered by all rounds.
    pub fn horizon_minutes(&self) -> f64 {
        f64::from(self.total_rounds) * self.minutes_per_round
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CueClass {
    Neutral,
    Disconfirming,
    Escalating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineEvent {
    pub round: u32,
    pub description: String,
    pub cue_class: CueClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
enum NoRecoveryTag {
    #[serde(rename = "REQUIRE_NO_RECOVERY")]
    RequireNoRecovery,
}

/// Acceptance rule for decision delay time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "DdtRuleRepr", into = "DdtRuleRepr")]
pub enum DdtRule {
    /// Numeric DDT must fall in `[lo, hi]` minutes.
    Interval { lo: f64, hi: f64 },
    /// The run must never reach a recovery.
    RequireNoRecovery,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum DdtRuleRepr {
    Interval([f64; 2]),
    Sentinel(NoRecoveryTag),
}

impl From<DdtRuleRepr> for DdtRule {
    fn from(r: DdtRuleRepr) -> Self {
        match r {
            DdtRuleRepr::Interval([lo, hi]) => DdtRule::Interval { lo, hi },
            DdtRuleRepr::Sentinel(_) => DdtRule::RequireNoRecovery,
        }
    }
}

impl From<DdtRule> for DdtRuleRepr {
    fn from(r: DdtRule) -> Self {
        match r {
            DdtRule::Interval { lo, hi } => DdtRuleRepr::Interval([lo, hi]),
            DdtRule::RequireNoRecovery => DdtRuleRepr::Sentinel(NoRecoveryTag::RequireNoRecovery),
        }
    }
}

/// Closed percentage interval. One-sided bounds use 0 or 100.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct PercentInterval {
    pub lo: f64,
    pub hi: f64,
}

impl PercentInterval {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

impl From<[f64; 2]> for PercentInterval {
    fn from([lo, hi]: [f64; 2]) -> Self {
        Self { lo, hi }
    }
}

impl From<PercentInterval> for [f64; 2] {
    fn from(p: PercentInterval) -> Self {
        [p.lo, p.hi]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceCriteria {
    pub csr_min: f64,
    pub ddt_rule: DdtRule,
    pub ipr_rule: PercentInterval,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fli_min: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub apc_cascade_required: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
enum NoRecoveryValue {
    #[serde(rename = "NO_RECOVERY")]
    NoRecovery,
}

/// Historical decision delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "DdtBaselineRepr", into = "DdtBaselineRepr")]
pub enum DdtBaseline {
    Minutes(f64),
    NoRecovery,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum DdtBaselineRepr {
    Minutes(f64),
    Sentinel(NoRecoveryValue),
}

impl From<DdtBaselineRepr> for DdtBaseline {
    fn from(r: DdtBaselineRepr) -> Self {
        match r {
            DdtBaselineRepr::Minutes(m) => DdtBaseline::Minutes(m),
            DdtBaselineRepr::Sentinel(_) => DdtBaseline::NoRecovery,
        }
    }
}

impl From<DdtBaseline> for DdtBaselineRepr {
    fn from(b: DdtBaseline) -> Self {
        match b {
            DdtBaseline::Minutes(m) => DdtBaselineRepr::Minutes(m),
            DdtBaseline::NoRecovery => DdtBaselineRepr::Sentinel(NoRecoveryValue::NoRecovery),
        }
    }
}

/// A historical reference that is either a point estimate or a documented range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReferenceValue {
    Point(f64),
    Range([f64; 2]),
}

impl ReferenceValue {
    /// Point estimate, or the midpoint of a range.
    pub fn representative(&self) -> f64 {
        match *self {
            ReferenceValue::Point(v) => v,
            ReferenceValue::Range([lo, hi]) => (lo + hi) / 2.0,
        }
    }

    pub fn point(&self) -> Option<f64> {
        match *self {
            ReferenceValue::Point(v) => Some(v),
            ReferenceValue::Range(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoricalBaseline {
    pub ddt: DdtBaseline,
    pub ipr: ReferenceValue,
    pub csr: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fli_min: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub apc_presence: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub apc_depth: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftParams {
    pub earliest_plausible_recovery_round: u32,
    pub locked_frame_description: String,
    pub frame_release_round: u32,
    pub strict_hierarchy: bool,
    /// Lower-case phrases whose appearance marks an utterance as abandoning
    /// the locked diagnostic frame.
    #[serde(default)]
    pub frame_abandon_keywords: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub scenario_id: String,
    pub roster: Vec<RoleSpec>,
    pub temporal: TemporalConfig,
    pub timeline: Vec<TimelineEvent>,
    pub criteria: AcceptanceCriteria,
    pub baseline: HistoricalBaseline,
    pub drift: DriftParams,
}

impl Scenario {
    /// Parses and validates a scenario document.
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let mut scenario: Scenario = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map(|s| line_col(text, s.start)).unwrap_or((0, 0));
            ScenarioError::Parse {
                line,
                column,
                message: e.message().to_owned(),
            }
        })?;
        for spec in &mut scenario.roster {
            if spec.role_prompt.trim().is_empty() {
                spec.role_prompt = spec.assemble_prompt();
            }
        }
        let violations = validate_scenario(&scenario);
        if violations.is_empty() {
            Ok(scenario)
        } else {
            Err(ScenarioError::Invalid(violations))
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes to TOML")
    }

    pub fn role(&self, role: Role) -> Option<&RoleSpec> {
        self.roster.iter().find(|r| r.role_name == role)
    }

    /// Events injected at the start of `round`.
    pub fn events_at(&self, round: u32) -> impl Iterator<Item = &TimelineEvent> {
        self.timeline.iter().filter(move |e| e.round == round)
    }

    /// Round of the first disconfirming cue, if the timeline has one.
    pub fn first_disconfirming_round(&self) -> Option<u32> {
        self.timeline
            .iter()
            .filter(|e| e.cue_class == CueClass::Disconfirming)
            .map(|e| e.round)
            .min()
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let column = offset - before.rfind('\n').map(|i| i + 1).unwrap_or(0) + 1;
    (line, column)
}

/// Loads a builtin scenario by id, or a scenario file by path.
pub fn load_scenario(source: &str) -> Result<Scenario, ScenarioError> {
    if let Some(text) = builtin_source(source) {
        return Scenario::from_toml_str(text);
    }
    let path = Path::new(source);
    if path.exists() {
        return load_scenario_file(path);
    }
    Err(ScenarioError::NotFound(source.to_owned()))
}

pub fn load_scenario_file(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Scenario::from_toml_str(&text)
}

/// Embedded TOML for a builtin scenario id.
pub fn builtin_source(id: &str) -> Option<&'static str> {
    match id {
        "tmi1979" => Some(TMI_1979),
        "chernobyl1986" => Some(CHERNOBYL_1986),
        _ => None,
    }
}

/// Checks every scenario invariant. An empty report means the scenario is valid.
pub fn validate_scenario(s: &Scenario) -> Vec<Violation> {
    let mut out = Vec::new();

    if s.scenario_id.trim().is_empty() {
        out.push(Violation::new("scenario_id", "must be non-empty"));
    }

    // roster
    if s.roster.len() != 3 {
        out.push(Violation::new(
            "roster",
            format!("expected exactly 3 roles, found {}", s.roster.len()),
        ));
    }
    for role in TURN_ORDER {
        let n = s.roster.iter().filter(|r| r.role_name == role).count();
        if n != 1 {
            out.push(Violation::new(
                "roster",
                format!("role {role} appears {n} times, expected exactly once"),
            ));
        }
    }
    let level_of = |role: Role| s.role(role).map(|r| r.authority_level);
    if let (Some(a), Some(c), Some(o)) = (
        level_of(Role::Authority),
        level_of(Role::Coordinator),
        level_of(Role::Operator),
    ) {
        if !(a > c && c > o) {
            out.push(Violation::new(
                "roster.authority_level",
                "authority levels must strictly decrease Authority > Coordinator > Operator",
            ));
        }
    }
    for (i, r) in s.roster.iter().enumerate() {
        let field = format!("roster[{i}].role_prompt");
        if r.role_prompt.trim().is_empty() {
            out.push(Violation::new(field, "must be non-empty"));
            continue;
        }
        for (name, dim) in [
            ("knowledge_boundary", &r.knowledge_boundary),
            ("operational_responsibility", &r.operational_responsibility),
            ("behavioral_tendencies", &r.behavioral_tendencies),
        ] {
            if !r.role_prompt.contains(dim.as_str()) {
                out.push(Violation::new(&field, format!("does not contain {name}")));
            }
        }
        if !r.role_prompt.contains(r.authority_level.as_str()) {
            out.push(Violation::new(
                &field,
                "does not state the authority position",
            ));
        }
    }

    // temporal
    let t = &s.temporal;
    if t.total_rounds == 0 {
        out.push(Violation::new("temporal.total_rounds", "must be positive"));
    }
    if !(t.minutes_per_round.is_finite() && t.minutes_per_round > 0.0) {
        out.push(Violation::new(
            "temporal.minutes_per_round",
            "must be positive",
        ));
    }
    if t.onset_round == 0 || t.onset_round > t.total_rounds {
        out.push(Violation::new(
            "temporal.onset_round",
            "must lie in [1, total_rounds]",
        ));
    }
    if (t.horizon_minutes() - t.total_duration_minutes).abs() > t.minutes_per_round {
        out.push(Violation::new(
            "temporal.total_duration_minutes",
            format!(
                "total_rounds x minutes_per_round = {} differs from declared {} by more than one round",
                t.horizon_minutes(),
                t.total_duration_minutes
            ),
        ));
    }

    // timeline
    for (i, e) in s.timeline.iter().enumerate() {
        if e.round == 0 || e.round > t.total_rounds {
            out.push(Violation::new(
                format!("timeline[{i}].round"),
                format!("round {} outside [1, {}]", e.round, t.total_rounds),
            ));
        }
    }
    if !s.timeline.iter().any(|e| e.round == 1) {
        out.push(Violation::new("timeline", "no event at round 1"));
    }

    // criteria
    let c = &s.criteria;
    if !(0.0..=100.0).contains(&c.csr_min) {
        out.push(Violation::new("criteria.csr_min", "must be a percentage"));
    }
    if let DdtRule::Interval { lo, hi } = c.ddt_rule {
        if lo > hi {
            out.push(Violation::new(
                "criteria.ddt_rule",
                "interval requires lo ≤ hi",
            ));
        }
    }
    if c.ipr_rule.lo > c.ipr_rule.hi {
        out.push(Violation::new(
            "criteria.ipr_rule",
            "interval requires lo ≤ hi",
        ));
    }
    if c.ipr_rule.lo < 0.0 || c.ipr_rule.hi > 100.0 {
        out.push(Violation::new(
            "criteria.ipr_rule",
            "bounds must lie in [0, 100]",
        ));
    }
    if let Some(f) = c.fli_min {
        if f > 10 {
            out.push(Violation::new("criteria.fli_min", "must lie in [0, 10]"));
        }
    }

    // baseline coverage
    let b = &s.baseline;
    match (c.ddt_rule, b.ddt) {
        (DdtRule::RequireNoRecovery, DdtBaseline::Minutes(_)) => out.push(Violation::new(
            "baseline.ddt",
            "criteria require NO_RECOVERY but the baseline is numeric",
        )),
        (DdtRule::Interval { .. }, DdtBaseline::NoRecovery) => out.push(Violation::new(
            "baseline.ddt",
            "criteria give a DDT interval but the baseline is NO_RECOVERY",
        )),
        _ => {}
    }
    if c.fli_min.is_some() && b.fli_min.is_none() {
        out.push(Violation::new(
            "baseline.fli_min",
            "required by criteria.fli_min",
        ));
    }
    if c.apc_cascade_required.is_some() && b.apc_presence.is_none() {
        out.push(Violation::new(
            "baseline.apc_presence",
            "required by criteria.apc_cascade_required",
        ));
    }
    if let Some(d) = b.apc_depth {
        if d > 2 {
            out.push(Violation::new("baseline.apc_depth", "must lie in [0, 2]"));
        }
    }

    // drift
    let d = &s.drift;
    if d.earliest_plausible_recovery_round == 0 {
        out.push(Violation::new(
            "drift.earliest_plausible_recovery_round",
            "must be positive",
        ));
    }
    if d.earliest_plausible_recovery_round > d.frame_release_round {
        out.push(Violation::new(
            "drift.frame_release_round",
            "must not precede earliest_plausible_recovery_round",
        ));
    }
    if d.frame_release_round > t.total_rounds {
        out.push(Violation::new(
            "drift.frame_release_round",
            "must not exceed total_rounds",
        ));
    }

    out
}
