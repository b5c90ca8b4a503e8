#![no_main]

use libfuzzer_sys::fuzz_target;
use simhra::moderator::{note_log_to_jsonl, parse_note_log};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(notes) = parse_note_log(text) {
        assert_eq!(
            parse_note_log(&note_log_to_jsonl(&notes)).expect("re-parse"),
            notes
        );
    }
});
