#![no_main]

use libfuzzer_sys::fuzz_target;

use shotmem::manifest::ShotRecord;

fuzz_target!(|data: &[u8]| {
    if let Ok(r) = ShotRecord::decode(data) {
        assert!(r.keyframes_selected.iter().all(|&i| i < r.frames.len()));
    }
});
