#![no_main]

use balancing_flow::bergman::HermitianInner;
use balancing_flow::io;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = io::decode_matrix(data) {
        assert_eq!(io::encode_matrix(&m), data);
        let _ = HermitianInner::new(m);
    }
});
