#![no_main]

use discrete_riemann::fixtures::{parse_entry, parse_matrix, Fixture};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    for line in s.lines().take(8) {
        let _ = parse_entry(line);
    }
    let Ok(f) = Fixture::from_json(s) else { return };
    for row in &f.rows {
        let _ = parse_matrix(&row.tau);
        let _ = f.spec_for(row);
    }
});
