#![no_main]

use libfuzzer_sys::fuzz_target;
use simhra::backend::ScriptBook;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(book) = ScriptBook::from_toml_str(text) {
        let _ = book.last_round();
    }
});
