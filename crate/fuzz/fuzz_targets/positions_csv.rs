#![no_main]

use libfuzzer_sys::fuzz_target;
use sounder_core::pipeline::{fit_csv, parse_positions_csv, parse_profile_csv, positions_to_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(rows) = parse_positions_csv(text) {
        let csv = positions_to_csv(&rows).expect("parsed rows serialize");
        parse_positions_csv(&csv).expect("serialized rows parse");
    }
    let _ = parse_profile_csv(text);
    let _ = fit_csv(text);
});
