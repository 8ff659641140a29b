#![no_main]

use doctra::sampler::ConnectModel;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(m) = ConnectModel::from_checkpoint(s) {
            assert_eq!(ConnectModel::from_checkpoint(&m.to_checkpoint()).unwrap(), m);
        }
    }
});
