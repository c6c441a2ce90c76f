#![no_main]

use densify_core::io::obj::parse_obj;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(parsed) = parse_obj(data) {
        let n = parsed.mesh.vertices.len() as u32;
        assert!(parsed.mesh.triangles.iter().flatten().all(|&i| i < n));
        assert_eq!(parsed.mesh.triangles.len(), parsed.mesh.face_colors.len());
    }
});
