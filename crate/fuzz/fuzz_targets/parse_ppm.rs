#![no_main]

use densify_core::io::ppm::parse_ppm;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(texture) = parse_ppm(data) {
        let _ = texture.sample_nearest([0.5, 0.5]);
    }
});
