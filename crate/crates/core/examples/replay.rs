use simhra::backend::BackendConfig;
use simhra::engine::Simulation;
use simhra::moderator::Moderator;
use simhra::report::extract_metrics_rules;
use simhra::scenario::load_scenario;
use simhra::stats::gate_run;
use simhra::ExtractionOutcome;

fn main() {
    let id = std::env::args().nth(1).unwrap_or_else(|| "tmi1979".into());
    let s = load_scenario(&id).unwrap();
    let backend = BackendConfig::scripted_builtin(&id).build().unwrap();
    let m = Moderator::default();
    let out = Simulation::new(&s, backend.as_ref())
        .with_moderator(&m)
        .execute("demo", &mut ())
        .unwrap();
    let metrics = extract_metrics_rules(&out.transcript, &s);
    println!("{}", metrics.to_json_pretty());
    println!(
        "{:?}",
        gate_run("demo", &ExtractionOutcome::Valid(metrics), &s.criteria)
    );
    for n in &out.notes {
        println!("{n:?}");
    }
}
