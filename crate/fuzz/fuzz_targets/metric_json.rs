#![no_main]

use libfuzzer_sys::fuzz_target;
use simhra::report::parse_metric_json;
use simhra::ExtractionOutcome;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    match parse_metric_json(text) {
        ExtractionOutcome::Valid(m) => {
            assert_eq!(m.apc_presence, m.apc_depth >= 1);
            assert!((0.0..=100.0).contains(&m.ipr));
        }
        ExtractionOutcome::JsonFail { reason } => assert!(!reason.is_empty()),
    }
});
