#![no_main]

use doctra::io::{format_ground_truth, parse_ground_truth};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(gt) = parse_ground_truth(s) {
            assert_eq!(parse_ground_truth(&format_ground_truth(&gt)).unwrap(), gt);
        }
    }
});
