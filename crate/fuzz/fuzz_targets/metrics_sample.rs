#![no_main]

use libfuzzer_sys::fuzz_target;
use lrdboot::metrics;

fuzz_target!(|data: &[u8]| {
    if let Ok(sample) = metrics::read_sample(data) {
        assert!(sample.iter().all(|v| v.is_finite()));
        let report = metrics::compare(&sample, &sample).unwrap();
        assert_eq!(report.kolmogorov, 0.0);
        assert_eq!(report.wasserstein1, 0.0);
    }
});
