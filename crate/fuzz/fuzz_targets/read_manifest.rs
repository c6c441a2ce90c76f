#![no_main]

use densify_core::io::manifest::{read_manifest, write_manifest};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(manifest) = read_manifest(data) {
        let again = read_manifest(&write_manifest(&manifest)).expect("own output parses");
        assert_eq!(again.len(), manifest.len());
    }
});
