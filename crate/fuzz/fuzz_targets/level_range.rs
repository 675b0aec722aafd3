#![no_main]

use discrete_riemann_cli::levels::parse_levels;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(levels) = parse_levels(s) {
        assert!(!levels.is_empty());
        assert!(levels.windows(2).all(|w| w[0] < w[1]));
    }
});
