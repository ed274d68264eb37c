#![no_main]

use libfuzzer_sys::fuzz_target;

use shotmem::provider::wire::{HealthResponse, ProviderResponse};

fuzz_target!(|data: &[u8]| {
    if let Ok(resp) = ProviderResponse::decode(data) {
        if let Ok(e) = resp.clone().into_embedding() {
            let n: f64 = e.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-3);
        }
        if let Ok(s) = resp.into_score() {
            assert!(s.is_finite());
        }
    }
    let _ = HealthResponse::decode(data);
});
