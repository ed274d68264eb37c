#![no_main]

use libfuzzer_sys::fuzz_target;

use shotmem::manifest::StoryIndex;

fuzz_target!(|data: &[u8]| {
    if let Ok(index) = StoryIndex::decode(data) {
        assert_eq!(index.completed_shots, index.shots.len());
        assert!(index.completed_shots <= index.total_shots);
    }
});
