#![no_main]

use libfuzzer_sys::fuzz_target;

use shotmem::manifest::{BankManifest, ManifestError};
use shotmem::Frame;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = BankManifest::decode(data) {
        let n = m.frames.len();
        let blank = Frame::solid(1, 1, [0, 0, 0]).expect("frame");
        let result = m.into_bank(|_, _| Ok::<_, ManifestError>(blank.clone()));
        if let Ok(bank) = result {
            assert_eq!(bank.len(), n);
            bank.check_invariants().expect("rebuilt bank is valid");
        }
    }
});
