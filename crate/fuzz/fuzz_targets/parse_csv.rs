#![no_main]

use libfuzzer_sys::fuzz_target;
use scalesim_core::harness::{parse_csv, write_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(rows) = parse_csv(text) {
        let rendered = write_csv(&rows);
        let again = parse_csv(&rendered).expect("rendered csv parses");
        assert_eq!(again.len(), rows.len());
        assert_eq!(write_csv(&again), rendered);
    }
});
