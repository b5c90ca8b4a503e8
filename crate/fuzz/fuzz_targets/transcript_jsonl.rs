#![no_main]

use libfuzzer_sys::fuzz_target;
use simhra::report::extract_metrics_rules;
use simhra::{load_scenario, DialogueBuffer};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(buf) = DialogueBuffer::from_jsonl(text) else {
        return;
    };
    let _ = buf.render_context();
    let again = DialogueBuffer::from_jsonl(&buf.to_jsonl()).expect("re-parse");
    assert_eq!(again.to_jsonl(), buf.to_jsonl());
    let s = load_scenario("tmi1979").unwrap();
    let m = extract_metrics_rules(&buf, &s);
    assert_eq!(m.apc_presence, m.apc_depth >= 1);
});
