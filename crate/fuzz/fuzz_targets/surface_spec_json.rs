#![no_main]

use discrete_riemann::surface::validate_spec;
use discrete_riemann::SurfaceSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(spec) = SurfaceSpec::from_json(s) else {
        return;
    };
    // diagnostics never fail, whatever the gluing
    let report = validate_spec(&spec);
    let _ = report.is_valid();
    let json = spec.to_json().expect("accepted spec serializes");
    assert_eq!(SurfaceSpec::from_json(&json).expect("round trip"), spec);
});
