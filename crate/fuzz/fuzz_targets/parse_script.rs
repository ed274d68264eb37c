#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(script) = shotmem::script::parse_script_bytes(data) {
        let shots = script.flatten_shots();
        assert_eq!(shots.len(), script.shot_count());
        assert!(shots[0].is_cut);
        let again = shotmem::script::parse_script(&script.to_json_string()).expect("round trip");
        assert_eq!(again, script);
    }
});
