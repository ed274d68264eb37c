#![no_main]

use libfuzzer_sys::fuzz_target;

use shotmem::provider::multipart;

// First line is the content type, the rest is the body.
fuzz_target!(|data: &[u8]| {
    let split = data.iter().position(|&b| b == b'\n').unwrap_or(data.len());
    let Ok(content_type) = std::str::from_utf8(&data[..split]) else {
        return;
    };
    let body = data.get(split + 1..).unwrap_or_default();
    if let Ok(parts) = multipart::decode(content_type, body) {
        assert!(parts.len() <= multipart::MAX_PARTS);
        let (ct, encoded) = multipart::encode(&parts);
        assert_eq!(
            multipart::decode(&ct, &encoded).expect("re-encoded body decodes"),
            parts
        );
    }
});
