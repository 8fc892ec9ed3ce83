//! Feature-file (DADF) parser must never panic or over-allocate on
//! arbitrary bytes.

#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = densedet::data::format::parse_features(data, "fuzz");
});
