#![no_main]

use ensurelab::format::{parse_set, write_counting_set, write_semilinear_set, SetFile};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    match parse_set(data) {
        Ok(SetFile::Counting(s)) => {
            let Ok(SetFile::Counting(again)) = parse_set(&write_counting_set(&s)) else {
                panic!("written set does not parse back as cubes");
            };
            assert!(again.same_denotation(&s).unwrap_or(false));
        }
        Ok(SetFile::Semilinear(s)) => {
            _ = parse_set(&write_semilinear_set(&s)).expect("written set parses");
        }
        Err(_) => {}
    }
});
