use std::path::Path;

use anyhow::{anyhow, Context};
use serde_json::json;
use simhra::backend::BackendConfig;
use simhra::dialogue::load_transcript;
use simhra::engine::{
    run_batch, run_simulation, BatchConfig, ExtractionRecord, ExtractionStatus, Manifest,
    ModeratorKind, RunConfig, RunStatus, SCENARIO_COPY_FILE,
};
use simhra::fsutil::write_atomic;
use simhra::moderator::{intervention_stats, load_note_log, InterventionStats};
use simhra::report::{extract_metrics_llm, extract_metrics_rules, ExtractionOutcome, Extractor};
use simhra::scenario::{load_scenario, Scenario};
use simhra::stats::{
    emit_radar_data, format_attribution_table, format_comparison_table, format_descriptive_table,
    format_validity_table, pct, radar_csv, summarize_batch, BatchSummary, VerdictStatus,
};

use crate::artifacts::{load_outcomes, metrics_file_name, raw_report_file_name, RunDir};
use crate::{
    BackendChoice, BatchArgs, ExtractorChoice, Failure, Format, LlmArgs, ModeratorChoice,
    ReportArgs, RunArgs, SimArgs, StatsArgs, ValidateArgs,
};

type CmdResult = Result<u8, Failure>;

fn llm_config(llm: &LlmArgs) -> BackendConfig {
    let mut cfg = BackendConfig::llm(llm.endpoint.clone(), llm.model.clone());
    cfg.api_key_source = llm.api_key_env.clone();
    cfg.send_seed = llm.send_seed;
    cfg.max_in_flight = llm.max_in_flight.max(1);
    cfg
}

fn backend_config(sim: &SimArgs, scenario: &Scenario) -> BackendConfig {
    match sim.backend {
        BackendChoice::Scripted => match &sim.script {
            Some(path) => BackendConfig::scripted_file(path),
            None => BackendConfig::scripted_builtin(&scenario.scenario_id),
        },
        BackendChoice::Llm => llm_config(&sim.llm),
    }
}

fn moderator(sim: &SimArgs) -> (bool, ModeratorKind) {
    match sim.moderator {
        ModeratorChoice::Rules => (true, ModeratorKind::Rules),
        ModeratorChoice::Llm => (true, ModeratorKind::Llm),
        ModeratorChoice::Off => (false, ModeratorKind::Rules),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    write_atomic(path, contents.as_bytes())
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::infra)
}

pub fn run(a: RunArgs) -> CmdResult {
    let scenario = load_scenario(&a.sim.scenario).map_err(Failure::usage)?;
    let run_id = a
        .run_id
        .clone()
        .unwrap_or_else(|| format!("{}-s{}", scenario.scenario_id, a.seed));
    let existing = if Manifest::path_in(&a.sim.out).exists() {
        let m = Manifest::load(&a.sim.out).map_err(Failure::usage)?;
        if m.scenario_id != scenario.scenario_id {
            return Err(Failure::usage(anyhow!(
                "{} holds runs of scenario {}",
                a.sim.out.display(),
                m.scenario_id
            )));
        }
        if !a.force && m.runs.iter().any(|r| r.run_id == run_id) {
            return Err(Failure::usage(anyhow!(
                "run {run_id} already exists in {}; pass --force to replace it",
                a.sim.out.display()
            )));
        }
        Some(m)
    } else {
        None
    };

    let (moderator_enabled, moderator) = moderator(&a.sim);
    let cfg = RunConfig {
        scenario_id: a.sim.scenario.clone(),
        backend: backend_config(&a.sim, &scenario),
        seed: a.seed,
        run_id: run_id.clone(),
        output_dir: a.sim.out.clone(),
        moderator_enabled,
        moderator,
    };
    let record = run_simulation(&cfg)?;

    let mut manifest = existing.unwrap_or(Manifest {
        scenario_id: scenario.scenario_id.clone(),
        backend: record.backend,
        base_seed: a.seed,
        runs: Vec::new(),
    });
    manifest.runs.retain(|r| r.run_id != run_id);
    manifest.runs.push(record.clone());
    write_file(
        &a.sim.out.join(SCENARIO_COPY_FILE),
        &scenario.to_toml_string(),
    )?;
    manifest.save(&a.sim.out)?;

    match record.status {
        RunStatus::Completed => {
            println!(
                "{run_id}: COMPLETED in {:.2}s -> {}",
                record.wall_time_secs,
                a.sim.out.join(&record.transcript_path).display()
            );
            Ok(0)
        }
        RunStatus::InfraFail => {
            eprintln!(
                "{run_id}: INFRA_FAIL ({}); partial transcript kept at {}",
                record.error.as_deref().unwrap_or("unknown"),
                a.sim.out.join(&record.transcript_path).display()
            );
            Ok(2)
        }
    }
}

pub fn batch(a: BatchArgs) -> CmdResult {
    let scenario = load_scenario(&a.sim.scenario).map_err(Failure::usage)?;
    let (moderator_enabled, moderator) = moderator(&a.sim);
    let cfg = BatchConfig {
        scenario_id: a.sim.scenario.clone(),
        n_runs: a.runs,
        backend: backend_config(&a.sim, &scenario),
        base_seed: a.base_seed,
        output_dir: a.sim.out.clone(),
        moderator_enabled,
        moderator,
        force: a.force,
    };
    let manifest = run_batch(&cfg)?;
    let failed = manifest
        .runs
        .iter()
        .filter(|r| r.status == RunStatus::InfraFail)
        .count();
    println!(
        "{}: {} runs, {} completed, {} INFRA_FAIL -> {}",
        manifest.scenario_id,
        manifest.runs.len(),
        manifest.runs.len() - failed,
        failed,
        Manifest::path_in(&a.sim.out).display()
    );
    Ok(if failed > 0 { 2 } else { 0 })
}

pub fn report(a: ReportArgs) -> CmdResult {
    let mut dir = RunDir::open(&a.runs)?;
    let client = match a.extractor {
        ExtractorChoice::Rules => None,
        ExtractorChoice::Llm => Some(llm_config(&a.llm).chat_client().map_err(Failure::usage)?),
    };
    let (mut valid, mut json_fail, mut infra) = (0usize, 0usize, 0usize);
    for i in 0..dir.manifest.runs.len() {
        let r = &dir.manifest.runs[i];
        if r.status != RunStatus::Completed {
            continue;
        }
        let run_id = r.run_id.clone();
        let transcript = load_transcript(&dir.path.join(&r.transcript_path))
            .with_context(|| format!("run {run_id}"))
            .map_err(Failure::usage)?;
        let (extractor, outcome) = match &client {
            None => {
                let mut m = extract_metrics_rules(&transcript, &dir.scenario);
                m.run_id = run_id.clone();
                (Extractor::Rules, Ok(ExtractionOutcome::Valid(m)))
            }
            Some(c) => match extract_metrics_llm(&transcript, &dir.scenario, c) {
                Ok(ex) => {
                    write_file(&dir.path.join(raw_report_file_name(&run_id)), &ex.raw_reply)?;
                    (Extractor::Llm, Ok(ex.outcome))
                }
                Err(e) => (Extractor::Llm, Err(e)),
            },
        };
        let record = match outcome {
            Ok(ExtractionOutcome::Valid(mut m)) => {
                m.run_id = run_id.clone();
                let name = metrics_file_name(&run_id);
                write_file(&dir.path.join(&name), &format!("{}\n", m.to_json_pretty()))?;
                valid += 1;
                ExtractionRecord {
                    extractor,
                    status: ExtractionStatus::Valid,
                    metrics_path: Some(name),
                    reason: None,
                }
            }
            Ok(ExtractionOutcome::JsonFail { reason }) => {
                json_fail += 1;
                log::warn!("{run_id}: JSON_FAIL: {reason}");
                ExtractionRecord {
                    extractor,
                    status: ExtractionStatus::JsonFail,
                    metrics_path: None,
                    reason: Some(reason),
                }
            }
            Err(e) => {
                infra += 1;
                log::warn!("{run_id}: report stage failed: {e}");
                ExtractionRecord {
                    extractor,
                    status: ExtractionStatus::InfraFail,
                    metrics_path: None,
                    reason: Some(e.to_string()),
                }
            }
        };
        dir.manifest.runs[i].extraction = Some(record);
    }
    dir.save()?;
    println!(
        "{}: {valid} valid, {json_fail} JSON_FAIL, {infra} INFRA_FAIL",
        dir.manifest.scenario_id
    );
    Ok(if infra > 0 { 2 } else { 0 })
}

fn summarize(path: &Path) -> Result<(RunDir, BatchSummary, usize), Failure> {
    let dir = RunDir::open(path)?;
    let outcomes = load_outcomes(&dir)?;
    if outcomes.runs.is_empty() {
        return Err(Failure::usage(anyhow!(
            "{} has no runs that reached the report stage",
            path.display()
        )));
    }
    let summary = summarize_batch(&dir.scenario, &outcomes.runs).map_err(Failure::usage)?;
    Ok((dir, summary, outcomes.excluded_infra))
}

pub fn validate(a: ValidateArgs) -> CmdResult {
    let mut summaries = Vec::new();
    let mut rows = Vec::new();
    for path in &a.runs {
        let (dir, s, excluded) = summarize(path)?;
        let verdicts = serde_json::to_string_pretty(&s.verdicts).expect("verdicts serialize");
        write_file(&dir.path.join("verdicts.json"), &format!("{verdicts}\n"))?;
        rows.push(json!({
            "scenario_id": s.scenario_id,
            "n_total": s.n_total,
            "n_valid": s.n_valid,
            "n_json_fail": s.n_json_fail,
            "json_fail_rate": s.json_fail_rate,
            "n_pass": s.n_pass,
            "n_fail": s.n_fail,
            "pass_rate": s.pass_rate,
            "excluded_infra_fail": excluded,
            "verdicts": s.verdicts,
        }));
        summaries.push((s, excluded));
    }
    match a.format {
        Format::Machine => println!(
            "{}",
            serde_json::to_string_pretty(&json!({ "summaries": rows })).unwrap()
        ),
        Format::Table => {
            for (s, excluded) in &summaries {
                for v in &s.verdicts {
                    let detail = match v.status {
                        VerdictStatus::Fail => format!(
                            " violated: {}",
                            v.violated_criteria
                                .iter()
                                .map(|m| m.as_str())
                                .collect::<Vec<_>>()
                                .join(", ")
                        ),
                        VerdictStatus::JsonFail => {
                            format!(" ({})", v.json_fail_reason.as_deref().unwrap_or(""))
                        }
                        VerdictStatus::Pass => String::new(),
                    };
                    println!("{:<24}{}{detail}", v.run_id, v.status.as_str());
                }
                if *excluded > 0 {
                    println!("{}: {excluded} INFRA_FAIL run(s) excluded", s.scenario_id);
                }
                println!();
            }
            let only: Vec<BatchSummary> = summaries.into_iter().map(|(s, _)| s).collect();
            print!("{}", format_validity_table(&only));
        }
    }
    Ok(0)
}

fn interventions(dir: &RunDir) -> Result<Option<InterventionStats>, Failure> {
    let mut notes = Vec::new();
    let mut turns = 0u64;
    for r in dir
        .manifest
        .runs
        .iter()
        .filter(|r| r.status == RunStatus::Completed)
    {
        let t = load_transcript(&dir.path.join(&r.transcript_path))
            .with_context(|| format!("run {}", r.run_id))
            .map_err(Failure::usage)?;
        turns += t.agent_turns().count() as u64;
        let path = dir.path.join(&r.note_log_path);
        if path.exists() {
            notes.extend(
                load_note_log(&path)
                    .with_context(|| format!("run {}", r.run_id))
                    .map_err(Failure::usage)?,
            );
        }
    }
    if turns == 0 {
        return Ok(None);
    }
    intervention_stats(&dir.manifest.scenario_id, &notes, turns)
        .map(Some)
        .map_err(Failure::usage)
}

fn format_interventions(s: &InterventionStats) -> String {
    let mut out = format!(
        "{}: moderator interventions over {} agent turns\n",
        s.scenario_id, s.total_agent_turns
    );
    for d in &s.per_type {
        let range = d
            .primary_round_range
            .map(|[lo, hi]| format!("rounds {lo}-{hi}"))
            .unwrap_or_else(|| "-".into());
        out.push_str(&format!(
            "{:<22}{:>6}{:>8}  {range}\n",
            d.drift_type.label(),
            d.intervention_count,
            pct(d.rate)
        ));
    }
    out
}

pub fn stats(a: StatsArgs) -> CmdResult {
    let mut machine = Vec::new();
    for path in &a.runs {
        let (dir, s, _) = summarize(path)?;
        let radar = emit_radar_data(&s, &dir.scenario);
        let radar_path = dir.path.join("radar.csv");
        write_file(&radar_path, &radar_csv(&radar))?;
        let notes = interventions(&dir)?;
        let doc = json!({ "summary": s, "radar": radar, "interventions": notes });
        write_file(
            &dir.path.join("summary.json"),
            &format!(
                "{}\n",
                serde_json::to_string_pretty(&doc).expect("summary serializes")
            ),
        )?;
        match a.format {
            Format::Machine => machine.push(doc),
            Format::Table => {
                print!("{}", format_comparison_table(&s));
                println!();
                print!("{}", format_descriptive_table(&s));
                println!();
                print!("{}", format_attribution_table(&s));
                if let Some(n) = &notes {
                    println!();
                    print!("{}", format_interventions(n));
                }
                println!("radar data: {}\n", radar_path.display());
            }
        }
    }
    if a.format == Format::Machine {
        println!(
            "{}",
            serde_json::to_string_pretty(&json!({ "scenarios": machine })).unwrap()
        );
    }
    Ok(0)
}
