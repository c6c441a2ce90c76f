#![no_main]

use densify_core::io::ply::{parse_ply, write_ply, Encoding};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(cloud) = parse_ply(data) else { return };
    // Positions stored as float32 survive a binary rewrite bit for bit.
    let rewritten =
        parse_ply(&write_ply(&cloud, Encoding::BinaryLittleEndian)).expect("own output parses");
    assert_eq!(rewritten.colors, cloud.colors);
    assert_eq!(rewritten.labels, cloud.labels);
    assert_eq!(rewritten.positions.len(), cloud.positions.len());
});
