#![no_main]

use libfuzzer_sys::fuzz_target;

use shotmem::backend::wire::BackendRequest;

fuzz_target!(|data: &[u8]| {
    if let Ok(req) = BackendRequest::decode(data) {
        let _ = req.known_frames();
    }
});
