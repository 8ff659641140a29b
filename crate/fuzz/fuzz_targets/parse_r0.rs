#![no_main]

use doctra::io::parse_r0;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&n, rest)) = data.split_first() else { return };
    if let Ok(s) = std::str::from_utf8(rest) {
        if let Ok(r) = parse_r0(s, usize::from(n)) {
            assert_eq!(r.nrows(), usize::from(n));
        }
    }
});
