//! Run-configuration parsing and validation must never panic.

#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = densedet::config::parse_run_config(text, None, None);
        let _ = densedet::config::parse_run_config(text, Some("paper"), Some(7));
    }
});
