#![no_main]

use balancing_flow::io;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(f) = io::decode_field_binary(data) {
        let again = io::decode_field_binary(&io::encode_field_binary(&f.values)).unwrap();
        assert_eq!(again, f);
    }
});
