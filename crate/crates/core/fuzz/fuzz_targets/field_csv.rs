#![no_main]

use balancing_flow::io;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(f) = io::decode_field_csv(text) {
            let again = io::decode_field_csv(&io::encode_field_csv(&f.values)).unwrap();
            assert_eq!(again, f);
        }
    }
});
