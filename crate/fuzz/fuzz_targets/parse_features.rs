#![no_main]

use doctra::io::{format_features, parse_features};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(x) = parse_features(s) {
            assert_eq!(parse_features(&format_features(&x)).unwrap(), x);
        }
    }
});
