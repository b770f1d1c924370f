#![no_main]

use libfuzzer_sys::fuzz_target;
use quenched::SpectralField;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(field) = SpectralField::from_csv(text, None) {
            let again = SpectralField::from_csv(&field.to_csv(0.0), Some(field.bandwidth()));
            assert!(again.is_ok());
        }
    }
});
