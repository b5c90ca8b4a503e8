#![no_main]

use libfuzzer_sys::fuzz_target;
use simhra::backend::chat::parse_chat_response;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let _ = parse_chat_response(text);
});
