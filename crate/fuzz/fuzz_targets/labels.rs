//! Label-file (DADL) parser must never panic on arbitrary bytes.

#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = densedet::data::format::parse_labels(data);
});
