#![no_main]

use std::sync::OnceLock;

use libfuzzer_sys::fuzz_target;
use simhra::backend::ScriptedBackend;
use simhra::moderator::parse_llm_findings;
use simhra::{load_scenario, DialogueBuffer, Simulation};

fn buffer() -> &'static DialogueBuffer {
    static BUF: OnceLock<DialogueBuffer> = OnceLock::new();
    BUF.get_or_init(|| {
        let s = load_scenario("chernobyl1986").unwrap();
        let backend =
            ScriptedBackend::new(simhra::backend::ScriptBook::builtin("chernobyl1986").unwrap());
        Simulation::new(&s, &backend)
            .execute("fuzz", &mut ())
            .unwrap()
            .transcript
    })
}

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let buf = buffer();
    for round in [1, 7] {
        if let Ok(found) = parse_llm_findings(text, buf, round) {
            assert!(found.iter().all(|f| f.round == round));
        }
    }
});
