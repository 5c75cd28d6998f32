#![no_main]

use libfuzzer_sys::fuzz_target;
use lrdboot::pipeline::parse_subject;

fuzz_target!(|data: &[u8]| {
    if let Ok(subject) = parse_subject("fuzz", data) {
        assert_eq!(subject.data.ncols(), subject.labels.len());
        assert!(subject.data.nrows() > 0);
    }
});
