#![no_main]

use libfuzzer_sys::fuzz_target;

use shotmem::provider::wire::ProviderRequest;

fuzz_target!(|data: &[u8]| {
    if let Ok(req) = ProviderRequest::decode(data) {
        let _ = req.image();
    }
});
