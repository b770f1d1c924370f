#![no_main]

use libfuzzer_sys::fuzz_target;
use quenched::TransferMatrix;

// Input layout: CSV dump, a NUL byte, then the JSON sidecar.
fuzz_target!(|data: &[u8]| {
    let Some(split) = data.iter().position(|&b| b == 0) else {
        return;
    };
    let (Ok(csv), Ok(sidecar)) = (
        std::str::from_utf8(&data[..split]),
        std::str::from_utf8(&data[split + 1..]),
    ) else {
        return;
    };
    let _ = TransferMatrix::from_dump(csv, sidecar);
});
