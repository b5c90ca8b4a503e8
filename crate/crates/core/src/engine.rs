//! Round loop for single runs and seeded batches with on-disk artifacts.
//!
//! A run writes its transcript and note log line by line to `.partial`
//! files and renames them into place only once every round has finished.
//! An interrupted or failed run therefore leaves nothing under the final
//! names.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{
    AgentBackend, BackendConfig, BackendError, BackendKind, DecodingParams, LlmBackend, TurnRequest,
};
use crate::dialogue::{DialogueBuffer, DialogueError, Utterance};
use crate::fsutil::{self, PartialFile};
use crate::moderator::{DriftFinding, Moderator, ModeratorMode, ModeratorNote};
use crate::scenario::{load_scenario, Scenario, ScenarioError, TURN_ORDER};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SCENARIO_COPY_FILE: &str = "scenario.toml";
pub const TRANSCRIPT_SUFFIX: &str = ".jsonl";
pub const NOTE_LOG_SUFFIX: &str = ".moderator";

/// Upper bound on concurrently executing runs in a batch.
pub const MAX_CONCURRENT_RUNS: usize = 4;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Backend(BackendError),
    #[error("invalid agent output: {0}")]
    Dialogue(#[from] DialogueError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0} already holds a batch; pass --force to overwrite")]
    AlreadyExists(PathBuf),
    #[error("{0}")]
    Config(String),
    #[error("manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
}

impl EngineError {
    fn io(path: &Path, source: io::Error) -> Self {
        EngineError::Io {
            path: path.to_owned(),
            source,
        }
    }

    /// Failures of the environment rather than of the user's configuration.
    pub fn is_infrastructure(&self) -> bool {
        match self {
            EngineError::Io { .. } => true,
            EngineError::Backend(e) => e.is_transport(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeratorKind {
    #[default]
    Rules,
    /// Shares the llm backend's client; requires an llm backend.
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Builtin scenario id or path to a scenario file.
    pub scenario_id: String,
    pub backend: BackendConfig,
    pub seed: u64,
    pub run_id: String,
    pub output_dir: PathBuf,
    #[serde(default = "yes")]
    pub moderator_enabled: bool,
    #[serde(default)]
    pub moderator: ModeratorKind,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RunStatus {
    Completed,
    InfraFail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ExtractionStatus {
    Valid,
    JsonFail,
    /// The extraction endpoint could not be reached.
    InfraFail,
}

/// Report-stage result attached to a run by the report command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionRecord {
    pub extractor: crate::report::Extractor,
    pub status: ExtractionStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// One run's entry in a manifest. Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub scenario_id: String,
    pub transcript_path: PathBuf,
    pub note_log_path: PathBuf,
    pub status: RunStatus,
    pub wall_time_secs: f64,
    pub backend: BackendKind,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extraction: Option<ExtractionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario_id: String,
    pub backend: BackendKind,
    pub base_seed: u64,
    pub runs: Vec<RunRecord>,
}

impl Manifest {
    pub fn path_in(dir: &Path) -> PathBuf {
        dir.join(MANIFEST_FILE)
    }

    pub fn load(dir: &Path) -> Result<Self, EngineError> {
        let path = Self::path_in(dir);
        let text = fs::read_to_string(&path).map_err(|e| EngineError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| EngineError::Manifest {
            path,
            message: e.to_string(),
        })
    }

    pub fn save(&self, dir: &Path) -> Result<(), EngineError> {
        let path = Self::path_in(dir);
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        fsutil::write_atomic(&path, format!("{json}\n").as_bytes())
            .map_err(|e| EngineError::io(&path, e))
    }
}

pub fn transcript_file_name(run_id: &str) -> PathBuf {
    PathBuf::from(format!("{run_id}{TRANSCRIPT_SUFFIX}"))
}

pub fn note_log_file_name(run_id: &str) -> PathBuf {
    PathBuf::from(format!("{run_id}{TRANSCRIPT_SUFFIX}{NOTE_LOG_SUFFIX}"))
}

/// Receives every public utterance and every issued note as soon as it exists.
pub trait RunObserver {
    fn utterance(&mut self, _u: &Utterance) -> io::Result<()> {
        Ok(())
    }

    fn note(&mut self, _n: &ModeratorNote) -> io::Result<()> {
        Ok(())
    }
}

impl RunObserver for () {}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimulationOutput {
    pub transcript: DialogueBuffer,
    pub notes: Vec<ModeratorNote>,
    pub findings: Vec<DriftFinding>,
}

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Dialogue(#[from] DialogueError),
    #[error("writing run artifacts: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug)]
pub struct SimulationFailure {
    pub error: SimulationError,
    pub partial: SimulationOutput,
}

/// Per-turn seed derived from the run seed and the turn's position.
pub fn turn_seed(run_seed: u64, round: u32, turn_index: u32) -> u64 {
    run_seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(u64::from(round) << 8 | u64::from(turn_index))
}

/// The round loop over an already loaded scenario and constructed backend.
pub struct Simulation<'a> {
    pub scenario: &'a Scenario,
    pub backend: &'a dyn AgentBackend,
    pub moderator: Option<&'a Moderator>,
    pub decoding: DecodingParams,
    pub seed: Option<u64>,
}

impl<'a> Simulation<'a> {
    pub fn new(scenario: &'a Scenario, backend: &'a dyn AgentBackend) -> Self {
        Self {
            scenario,
            backend,
            moderator: None,
            decoding: DecodingParams::role_play(),
            seed: None,
        }
    }

    pub fn with_moderator(mut self, moderator: &'a Moderator) -> Self {
        self.moderator = Some(moderator);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn execute(
        &self,
        run_id: &str,
        observer: &mut dyn RunObserver,
    ) -> Result<SimulationOutput, SimulationFailure> {
        let mut out = SimulationOutput::default();
        match self.rounds(run_id, observer, &mut out) {
            Ok(()) => Ok(out),
            Err(error) => Err(SimulationFailure {
                error,
                partial: out,
            }),
        }
    }

    fn rounds(
        &self,
        run_id: &str,
        observer: &mut dyn RunObserver,
        out: &mut SimulationOutput,
    ) -> Result<(), SimulationError> {
        let s = self.scenario;
        let mut pending: Vec<ModeratorNote> = Vec::new();
        for round in 1..=s.temporal.total_rounds {
            for event in s.events_at(round) {
                let u = Utterance::world(run_id, round, event.description.clone());
                out.transcript.append(u.clone())?;
                observer.utterance(&u)?;
            }
            for (i, role) in TURN_ORDER.into_iter().enumerate() {
                let turn_index = i as u32 + 1;
                let spec = s.role(role).expect("validated roster has every role");
                let req = TurnRequest {
                    scenario_id: &s.scenario_id,
                    role: spec,
                    history_rendering: out.transcript.render_context(),
                    hidden_guidance: pending
                        .iter()
                        .filter(|n| n.target_agent == role && n.round_applies == round)
                        .map(|n| n.text.clone())
                        .collect(),
                    round,
                    total_rounds: s.temporal.total_rounds,
                    minutes_per_round: s.temporal.minutes_per_round,
                    decoding: self.decoding,
                    seed: self.seed.map(|seed| turn_seed(seed, round, turn_index)),
                };
                let turn = self.backend.generate_turn(&req)?;
                let u =
                    Utterance::agent(run_id, round, turn_index, role, turn.text, turn.annotations);
                out.transcript.append(u.clone())?;
                observer.utterance(&u)?;
            }
            // Notes last exactly one round; new ones replace the old.
            pending.clear();
            if let Some(m) = self.moderator {
                let (findings, notes) = m.moderate(s, &out.transcript, round)?;
                for n in &notes {
                    observer.note(n)?;
                }
                out.findings.extend(findings);
                out.notes.extend(notes.iter().cloned());
                pending = notes;
            }
        }
        Ok(())
    }
}

struct FileSink {
    transcript: PartialFile,
    notes: PartialFile,
}

impl RunObserver for FileSink {
    fn utterance(&mut self, u: &Utterance) -> io::Result<()> {
        self.transcript
            .append_line(&serde_json::to_string(u).expect("utterance serializes"))
    }

    fn note(&mut self, n: &ModeratorNote) -> io::Result<()> {
        self.notes
            .append_line(&serde_json::to_string(n).expect("note serializes"))
    }
}

/// Loaded, validated inputs shared by all runs of a batch.
struct Prepared {
    scenario: Scenario,
    backend: Arc<dyn AgentBackend>,
    kind: BackendKind,
    moderator: Option<Moderator>,
}

fn prepare(
    scenario_source: &str,
    backend: &BackendConfig,
    moderator_enabled: bool,
    moderator: ModeratorKind,
) -> Result<Prepared, EngineError> {
    let scenario = load_scenario(scenario_source)?;
    let (agent_backend, moderator) = match (backend.kind, moderator) {
        (BackendKind::Llm, ModeratorKind::Llm) => {
            let client = Arc::new(backend.chat_client().map_err(EngineError::Backend)?);
            let agents: Arc<dyn AgentBackend> = Arc::new(LlmBackend::new(client.clone()));
            let m = Moderator {
                mode: ModeratorMode::Llm(client),
                ..Moderator::default()
            };
            (agents, m)
        }
        (_, ModeratorKind::Llm) if moderator_enabled => {
            return Err(EngineError::Config(
                "the llm moderator needs the llm backend".into(),
            ))
        }
        _ => (
            backend.build().map_err(EngineError::Backend)?,
            Moderator::default(),
        ),
    };
    Ok(Prepared {
        scenario,
        backend: agent_backend,
        kind: backend.kind,
        moderator: moderator_enabled.then_some(moderator),
    })
}

fn execute_run(
    p: &Prepared,
    run_id: &str,
    seed: u64,
    output_dir: &Path,
) -> Result<RunRecord, EngineError> {
    let started = Instant::now();
    let transcript_name = transcript_file_name(run_id);
    let notes_name = note_log_file_name(run_id);
    let transcript_target = output_dir.join(&transcript_name);
    let notes_target = output_dir.join(&notes_name);
    let mut sink = FileSink {
        transcript: PartialFile::create(&transcript_target)
            .map_err(|e| EngineError::io(&transcript_target, e))?,
        notes: PartialFile::create(&notes_target).map_err(|e| EngineError::io(&notes_target, e))?,
    };

    let mut sim = Simulation::new(&p.scenario, p.backend.as_ref()).with_seed(seed);
    if let Some(m) = &p.moderator {
        sim = sim.with_moderator(m);
    }
    let record = |status, transcript: PathBuf, notes: PathBuf, error| RunRecord {
        run_id: run_id.to_owned(),
        scenario_id: p.scenario.scenario_id.clone(),
        transcript_path: transcript,
        note_log_path: notes,
        status,
        wall_time_secs: started.elapsed().as_secs_f64(),
        backend: p.kind,
        seed,
        error,
        extraction: None,
    };

    match sim.execute(run_id, &mut sink) {
        Ok(_) => {
            sink.transcript
                .commit()
                .map_err(|e| EngineError::io(&transcript_target, e))?;
            sink.notes
                .commit()
                .map_err(|e| EngineError::io(&notes_target, e))?;
            Ok(record(
                RunStatus::Completed,
                transcript_name,
                notes_name,
                None,
            ))
        }
        Err(SimulationFailure {
            error: SimulationError::Backend(e @ BackendError::Transport { .. }),
            ..
        }) => {
            log::warn!("run {run_id}: {e}");
            Ok(record(
                RunStatus::InfraFail,
                fsutil::partial_path(&transcript_name),
                fsutil::partial_path(&notes_name),
                Some(e.to_string()),
            ))
        }
        Err(SimulationFailure { error, .. }) => Err(match error {
            SimulationError::Backend(e) => EngineError::Backend(e),
            SimulationError::Dialogue(e) => EngineError::Dialogue(e),
            SimulationError::Io(e) => EngineError::io(&transcript_target, e),
        }),
    }
}

fn ensure_writable(dir: &Path) -> Result<(), EngineError> {
    fs::create_dir_all(dir).map_err(|e| EngineError::io(dir, e))?;
    tempfile::NamedTempFile::new_in(dir)
        .map(drop)
        .map_err(|e| EngineError::io(dir, e))
}

/// Executes one run and writes its transcript and note log into
/// `cfg.output_dir`. Transport failures yield an `INFRA_FAIL` record;
/// configuration problems are errors.
pub fn run_simulation(cfg: &RunConfig) -> Result<RunRecord, EngineError> {
    let p = prepare(
        &cfg.scenario_id,
        &cfg.backend,
        cfg.moderator_enabled,
        cfg.moderator,
    )?;
    ensure_writable(&cfg.output_dir)?;
    execute_run(&p, &cfg.run_id, cfg.seed, &cfg.output_dir)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchConfig {
    pub scenario_id: String,
    pub n_runs: usize,
    pub backend: BackendConfig,
    pub base_seed: u64,
    pub output_dir: PathBuf,
    #[serde(default = "yes")]
    pub moderator_enabled: bool,
    #[serde(default)]
    pub moderator: ModeratorKind,
    /// Overwrite an existing batch in `output_dir`.
    #[serde(default)]
    pub force: bool,
}

pub fn batch_run_id(scenario_id: &str, i: usize) -> String {
    format!("{scenario_id}-{i:03}")
}

/// Executes `n_runs` independent runs with seeds `base_seed + i`, at most
/// four at a time, then writes the manifest and a copy of the scenario.
pub fn run_batch(cfg: &BatchConfig) -> Result<Manifest, EngineError> {
    if cfg.n_runs == 0 {
        return Err(EngineError::Config("a batch needs at least one run".into()));
    }
    let p = prepare(
        &cfg.scenario_id,
        &cfg.backend,
        cfg.moderator_enabled,
        cfg.moderator,
    )?;
    ensure_writable(&cfg.output_dir)?;
    let manifest_path = Manifest::path_in(&cfg.output_dir);
    if manifest_path.exists() && !cfg.force {
        return Err(EngineError::AlreadyExists(cfg.output_dir.clone()));
    }
    let copy = cfg.output_dir.join(SCENARIO_COPY_FILE);
    fsutil::write_atomic(&copy, p.scenario.to_toml_string().as_bytes())
        .map_err(|e| EngineError::io(&copy, e))?;

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RunRecord, EngineError>>>> =
        Mutex::new((0..cfg.n_runs).map(|_| None).collect());
    let workers = cfg.n_runs.min(MAX_CONCURRENT_RUNS);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= cfg.n_runs {
                    break;
                }
                let run_id = batch_run_id(&p.scenario.scenario_id, i);
                let seed = cfg.base_seed.wrapping_add(i as u64);
                let r = execute_run(&p, &run_id, seed, &cfg.output_dir);
                results.lock().expect("result slots")[i] = Some(r);
            });
        }
    });

    let mut runs = Vec::with_capacity(cfg.n_runs);
    for r in results.into_inner().expect("result slots") {
        runs.push(r.expect("every index was claimed")?);
    }
    let manifest = Manifest {
        scenario_id: p.scenario.scenario_id.clone(),
        backend: p.kind,
        base_seed: cfg.base_seed,
        runs,
    };
    manifest.save(&cfg.output_dir)?;
    Ok(manifest)
}
