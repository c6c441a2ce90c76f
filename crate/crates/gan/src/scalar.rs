use ndarray::NdFloat;

/// Floating point element type of the networks. `f32` trains, `f64` checks
/// gradients.
pub trait Real: NdFloat + Default {
    /// Checkpoint dtype tag.
    const TAG: u8;
    const BYTES: usize;

    fn of(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Real for f32 {
    const TAG: u8 = 4;
    const BYTES: usize = 4;

    fn of(x: f64) -> Self {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_bits().to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_bits(u32::from_le_bytes(bytes[..4].try_into().unwrap()))
    }
}

impl Real for f64 {
    const TAG: u8 = 8;
    const BYTES: usize = 8;

    fn of(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_bits().to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_bits(u64::from_le_bytes(bytes[..8].try_into().unwrap()))
    }
}
