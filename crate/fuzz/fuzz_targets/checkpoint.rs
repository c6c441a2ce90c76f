#![no_main]

use densify_gan::{Checkpoint, Real};
use libfuzzer_sys::fuzz_target;

fn stable<T: Real>(data: &[u8]) {
    if let Ok(c) = Checkpoint::<T>::from_bytes(data) {
        let bytes = c.to_bytes();
        let again = Checkpoint::<T>::from_bytes(&bytes).expect("own output parses");
        assert_eq!(again.to_bytes(), bytes);
    }
}

fuzz_target!(|data: &[u8]| {
    stable::<f32>(data);
    stable::<f64>(data);
});
