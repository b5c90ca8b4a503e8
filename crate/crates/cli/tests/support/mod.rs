#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use simhra::backend::BackendConfig;
use simhra::engine::{
    run_batch, BatchConfig, ExtractionRecord, ExtractionStatus, Manifest, ModeratorKind,
};
use simhra::report::{Csr, Ddt, ExtractionOutcome, Extractor, Fli, MetricSet};

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_simhra"));
    c.env_remove("SIMHRA_API_KEY")
        .env_remove("SIMHRA_API_BASE")
        .env("RUST_LOG", "error");
    c
}

pub fn simhra(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

pub fn tmi(ddt: f64, ipr: f64, fli: u8) -> MetricSet {
    MetricSet {
        run_id: String::new(),
        ddt: Ddt::Minutes(ddt),
        ipr,
        no_procedure_decisions: false,
        csr: Csr::Percent(100.0),
        apc_presence: true,
        apc_depth: 1,
        fli: Fli::Score(fli),
        extractor: Extractor::Llm,
    }
}

pub fn chernobyl(ipr: f64) -> MetricSet {
    MetricSet {
        ddt: Ddt::NoRecovery,
        apc_depth: 2,
        fli: Fli::Score(0),
        ..tmi(0.0, ipr, 0)
    }
}

pub fn json_fail() -> ExtractionOutcome {
    ExtractionOutcome::JsonFail {
        reason: "missing field fli".into(),
    }
}

/// A scripted batch whose report stage is replaced by the given outcomes,
/// as if an llm extractor had produced them.
pub fn constructed_dir(root: &Path, scenario: &str, outcomes: &[ExtractionOutcome]) -> PathBuf {
    let dir = root.join(scenario);
    run_batch(&BatchConfig {
        scenario_id: scenario.into(),
        n_runs: outcomes.len(),
        backend: BackendConfig::scripted_builtin(scenario),
        base_seed: 0,
        output_dir: dir.clone(),
        moderator_enabled: true,
        moderator: ModeratorKind::Rules,
        force: true,
    })
    .unwrap();
    let mut manifest = Manifest::load(&dir).unwrap();
    for (r, o) in manifest.runs.iter_mut().zip(outcomes) {
        r.extraction = Some(match o {
            ExtractionOutcome::Valid(m) => {
                let name = PathBuf::from(format!("{}.metrics.json", r.run_id));
                let m = MetricSet {
                    run_id: r.run_id.clone(),
                    ..m.clone()
                };
                fs::write(dir.join(&name), m.to_json_pretty()).unwrap();
                ExtractionRecord {
                    extractor: Extractor::Llm,
                    status: ExtractionStatus::Valid,
                    metrics_path: Some(name),
                    reason: None,
                }
            }
            ExtractionOutcome::JsonFail { reason } => ExtractionRecord {
                extractor: Extractor::Llm,
                status: ExtractionStatus::JsonFail,
                metrics_path: None,
                reason: Some(reason.clone()),
            },
        });
    }
    manifest.save(&dir).unwrap();
    dir
}

/// 30 TMI outcomes: 7 unparseable, 10 passing, 13 failing on IPR alone
/// (6 above the band, 7 below).
pub fn tmi_outcome_set() -> Vec<ExtractionOutcome> {
    let mut v: Vec<ExtractionOutcome> = (0..7).map(|_| json_fail()).collect();
    let pass_ddt = [
        130.0, 131.0, 132.0, 133.0, 134.0, 135.0, 136.0, 137.0, 138.0, 142.0,
    ];
    v.extend(
        pass_ddt
            .iter()
            .map(|d| ExtractionOutcome::Valid(tmi(*d, 30.0, 4))),
    );
    v.extend((0..6).map(|_| ExtractionOutcome::Valid(tmi(135.0, 55.0, 4))));
    v.extend((0..7).map(|_| ExtractionOutcome::Valid(tmi(135.0, 20.0, 4))));
    v
}

/// 20 Chernobyl outcomes: 1 unparseable, 10 passing, 9 failing on IPR above 20.
pub fn chernobyl_outcome_set() -> Vec<ExtractionOutcome> {
    let mut v = vec![json_fail()];
    v.extend((0..10).map(|_| ExtractionOutcome::Valid(chernobyl(10.0))));
    v.extend((0..9).map(|_| ExtractionOutcome::Valid(chernobyl(30.0))));
    v
}
