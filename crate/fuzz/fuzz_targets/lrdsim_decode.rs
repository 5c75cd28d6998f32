#![no_main]

use libfuzzer_sys::fuzz_target;
use lrdboot::simulate::{decode_batch, encode_batch};

// Accepted input is canonical, so decoding then encoding is the identity.
fuzz_target!(|data: &[u8]| {
    if let Ok(batch) = decode_batch(data) {
        assert_eq!(encode_batch(&batch), data);
    }
});
