//! Checkpoint container parsing must never panic; allocations are bounded
//! by the input length.

#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = densedet::checkpoint::parse_checkpoint(data);
});
