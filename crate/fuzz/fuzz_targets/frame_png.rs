#![no_main]

use libfuzzer_sys::fuzz_target;

use shotmem::Frame;

fuzz_target!(|data: &[u8]| {
    if let Ok(frame) = Frame::decode_png(data) {
        let png = frame.encode_png().expect("encode");
        assert_eq!(
            Frame::decode_png(&png).expect("decode").digest(),
            frame.digest()
        );
    }
});
