#![no_main]

use discrete_riemann::theta::{theta_constants, ThetaOptions};
use discrete_riemann::RiemannMatrix;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(m) = RiemannMatrix::from_json(s) else {
        return;
    };
    let back = RiemannMatrix::from_json(&m.to_json().expect("serializes")).expect("round trip");
    assert_eq!(back.tau, m.tau);
    if m.genus <= 2 {
        // small radius cap keeps each input cheap; errors are fine, panics are not
        let opts = ThetaOptions {
            max_radius: 8,
            ..ThetaOptions::default()
        };
        let _ = theta_constants(&m, &opts);
    }
});
