#![no_main]

use libfuzzer_sys::fuzz_target;
use sounder_core::capture::{decode_capture, encode_capture};

fuzz_target!(|data: &[u8]| {
    if let Ok(rec) = decode_capture(data) {
        // anything that decodes must survive a re-encode
        let bytes = encode_capture(&rec).expect("decoded record re-encodes");
        let again = decode_capture(&bytes).expect("re-encoded record decodes");
        assert_eq!(again.len(), rec.len());
    }
});
