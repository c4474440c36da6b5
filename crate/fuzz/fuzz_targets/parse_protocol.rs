#![no_main]

use ensurelab::format::{is_writable, parse_protocol, write_protocol};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(p) = parse_protocol(data) {
        if !is_writable(&p) {
            return;
        }
        // anything we accept must survive a round trip
        let again = parse_protocol(&write_protocol(&p, &[])).expect("written protocol parses");
        assert_eq!(again, p);
    }
});
