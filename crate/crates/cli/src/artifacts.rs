use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use simhra::engine::{ExtractionStatus, Manifest, RunStatus, SCENARIO_COPY_FILE};
use simhra::report::{ExtractionOutcome, MetricSet};
use simhra::scenario::{load_scenario, load_scenario_file, Scenario};
use simhra::stats::RunOutcome;

use crate::Failure;

pub fn metrics_file_name(run_id: &str) -> PathBuf {
    PathBuf::from(format!("{run_id}.metrics.json"))
}

pub fn raw_report_file_name(run_id: &str) -> PathBuf {
    PathBuf::from(format!("{run_id}.report.txt"))
}

/// A run directory: its manifest and the scenario the runs used.
pub struct RunDir {
    pub path: PathBuf,
    pub manifest: Manifest,
    pub scenario: Scenario,
}

impl RunDir {
    pub fn open(path: &Path) -> Result<Self, Failure> {
        if !path.is_dir() {
            return Err(Failure::usage(anyhow!(
                "{} is not a directory",
                path.display()
            )));
        }
        if !Manifest::path_in(path).exists() {
            return Err(Failure::usage(anyhow!(
                "{} holds no manifest; run `simhra run` or `simhra batch` first",
                path.display()
            )));
        }
        let manifest = Manifest::load(path).map_err(Failure::usage)?;
        let copy = path.join(SCENARIO_COPY_FILE);
        let scenario = if copy.exists() {
            load_scenario_file(&copy)
        } else {
            load_scenario(&manifest.scenario_id)
        }
        .map_err(Failure::usage)?;
        Ok(Self {
            path: path.to_owned(),
            manifest,
            scenario,
        })
    }

    pub fn save(&self) -> Result<(), Failure> {
        self.manifest.save(&self.path).map_err(Failure::from)
    }
}

/// Outcomes ready for gating, plus the number of runs excluded because
/// they never produced a report (infrastructure failures).
pub struct Outcomes {
    pub runs: Vec<RunOutcome>,
    pub excluded_infra: usize,
}

pub fn load_outcomes(dir: &RunDir) -> Result<Outcomes, Failure> {
    let mut runs = Vec::new();
    let mut excluded_infra = 0;
    for r in &dir.manifest.runs {
        if r.status == RunStatus::InfraFail {
            excluded_infra += 1;
            continue;
        }
        let Some(ex) = &r.extraction else {
            return Err(Failure::usage(anyhow!(
                "run {} has no report; run `simhra report --runs {}` first",
                r.run_id,
                dir.path.display()
            )));
        };
        let outcome = match ex.status {
            ExtractionStatus::InfraFail => {
                excluded_infra += 1;
                continue;
            }
            ExtractionStatus::JsonFail => ExtractionOutcome::JsonFail {
                reason: ex.reason.clone().unwrap_or_default(),
            },
            ExtractionStatus::Valid => {
                let rel = ex.metrics_path.as_ref().ok_or_else(|| {
                    Failure::usage(anyhow!("run {} lacks a metrics path", r.run_id))
                })?;
                let path = dir.path.join(rel);
                let text = fs::read_to_string(&path)
                    .with_context(|| format!("reading {}", path.display()))
                    .map_err(Failure::usage)?;
                let m = MetricSet::from_json(&text)
                    .map_err(|e| Failure::usage(anyhow!("{}: {e}", path.display())))?;
                ExtractionOutcome::Valid(m)
            }
        };
        runs.push(RunOutcome::new(r.run_id.clone(), outcome));
    }
    Ok(Outcomes {
        runs,
        excluded_infra,
    })
}
