#![no_main]

use libfuzzer_sys::fuzz_target;
use simhra::scenario::{validate_scenario, Scenario};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(s) = Scenario::from_toml_str(text) {
        // Anything that parses must survive a round trip.
        let again = Scenario::from_toml_str(&s.to_toml_string()).expect("re-parse");
        assert_eq!(again, s);
        let _ = validate_scenario(&s);
    }
});
