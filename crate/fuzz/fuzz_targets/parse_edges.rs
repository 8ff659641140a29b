#![no_main]

use doctra::io::parse_edges;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(edges) = parse_edges(s) {
            let text: String = edges.iter().map(|e| format!("{e}\n")).collect();
            assert_eq!(parse_edges(&text).unwrap(), edges);
        }
    }
});
