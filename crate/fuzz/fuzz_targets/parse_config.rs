#![no_main]

use ensurelab::fixtures;
use ensurelab::format::parse_config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let p = fixtures::p2();
    _ = parse_config(&p, data);
});
