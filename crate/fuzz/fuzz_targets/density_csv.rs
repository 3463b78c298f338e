#![no_main]

use jkoflow_core::grid1d::GridDensity1D;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rho) = GridDensity1D::from_csv(text) {
        let back = GridDensity1D::from_csv(&rho.to_csv()).expect("own output must parse");
        assert_eq!(back.values(), rho.values());
    }
});
