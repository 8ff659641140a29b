#![no_main]

use doctra::supervision::PromptSet;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(p) = PromptSet::from_checkpoint(s) {
            assert_eq!(PromptSet::from_checkpoint(&p.to_checkpoint()).unwrap(), p);
        }
    }
});
