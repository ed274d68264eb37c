#![no_main]

use libfuzzer_sys::fuzz_target;

use std::collections::HashMap;

use shotmem::backend::wire::{BackendResponse, MAX_FRAMES};

fuzz_target!(|data: &[u8]| {
    if let Ok(resp) = BackendResponse::decode(data) {
        assert!(!resp.frames.is_empty() && resp.frames.len() <= MAX_FRAMES);
        if let Ok(frames) = resp.resolve_frames(&HashMap::new()) {
            for (f, p) in frames.iter().zip(&resp.frames) {
                assert_eq!(f.digest(), p.digest);
            }
        }
    }
});
