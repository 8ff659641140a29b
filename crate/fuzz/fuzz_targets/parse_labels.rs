#![no_main]

use doctra::io::{format_labels, parse_labels};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(l) = parse_labels(s) {
            assert_eq!(parse_labels(&format_labels(&l)).unwrap(), l);
        }
    }
});
