#![no_main]

use densify_core::io::obj::parse_mtl;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = parse_mtl(data);
});
