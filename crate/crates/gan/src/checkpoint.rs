//! Versioned little-endian checkpoint of parameters, optimizer state and
//! configuration.
//!
//! Layout: magic, version (u32), dtype tag (u8), config, train state
//! counters and RNG position, then every tensor of the generator and
//! discriminator, then the Adam moments in the same order. Tensor shapes are
//! implied by the stored architecture.

use densify_core::seed::ChaCha8Rng;
use rand::SeedableRng;
use thiserror::Error;

use crate::adam::AdamState;
use crate::net::{zero_layers, Architecture, Dense, GanParams};
use crate::scalar::Real;
use crate::train::{GanConfig, TrainState};

pub const MAGIC: &[u8; 8] = b"DPGANCKP";
pub const VERSION: u32 = 1;
/// Largest accepted layer width.
pub const MAX_WIDTH: usize = 1 << 16;

#[derive(Debug, Error, PartialEq)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint holds {found}-byte floats, expected {expected}")]
    Dtype { expected: u8, found: u8 },
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("{0} trailing bytes after checkpoint")]
    TrailingData(usize),
    #[error("invalid stored configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub config: GanConfig,
    pub params: GanParams<T>,
    pub state: TrainState<T>,
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    put_u64(out, v.to_bits());
}

fn put_layers<T: Real>(out: &mut Vec<u8>, layers: &[Dense<T>]) {
    for l in layers {
        for &v in l.weight.iter().chain(l.bias.iter()) {
            v.write_le(out);
        }
    }
}

impl<T: Real> Checkpoint<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(T::TAG);
        for v in [c.lambda_l1, c.lr_g, c.lr_d] {
            put_f64(&mut out, v);
        }
        put_u64(&mut out, c.batch_size as u64);
        put_u64(&mut out, c.epochs as u64);
        for v in [
            c.skip_threshold,
            c.dropout_p,
            c.adam_beta1,
            c.adam_beta2,
            c.adam_eps,
        ] {
            put_f64(&mut out, v);
        }
        put_u64(&mut out, c.seed);
        put_u64(&mut out, c.points as u64);
        let a = &self.params.arch;
        for w in a.encoder.iter().chain(&a.decoder).chain(&a.head) {
            out.extend_from_slice(&(*w as u32).to_le_bytes());
        }
        let s = &self.state;
        put_u64(&mut out, s.epoch as u64);
        put_u64(&mut out, s.adam_g.step);
        put_u64(&mut out, s.adam_d.step);
        put_f64(&mut out, s.d_real);
        out.extend_from_slice(&s.rng.get_seed());
        put_u64(&mut out, s.rng.get_stream());
        out.extend_from_slice(&s.rng.get_word_pos().to_le_bytes());
        put_layers(&mut out, &self.params.generator);
        put_layers(&mut out, &self.params.discriminator);
        for layers in [&s.adam_g.m, &s.adam_g.v, &s.adam_d.m, &s.adam_d.v] {
            put_layers(&mut out, layers);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = u32::from_le_bytes(r.array()?);
        if version != VERSION {
            return Err(CheckpointError::Version(version));
        }
        let tag = r.take(1)?[0];
        if tag != T::TAG {
            return Err(CheckpointError::Dtype {
                expected: T::TAG,
                found: tag,
            });
        }
        let (lambda_l1, lr_g, lr_d) = (r.f64()?, r.f64()?, r.f64()?);
        let (batch_size, epochs) = (r.usize()?, r.usize()?);
        let skip_threshold = r.f64()?;
        let dropout_p = r.f64()?;
        let (adam_beta1, adam_beta2, adam_eps) = (r.f64()?, r.f64()?, r.f64()?);
        let seed = r.u64()?;
        let points = r.usize()?;
        let mut widths = [0usize; 8];
        for w in &mut widths {
            *w = u32::from_le_bytes(r.array()?) as usize;
        }
        let arch = Architecture {
            encoder: [widths[0], widths[1], widths[2]],
            decoder: [widths[3], widths[4], widths[5]],
            head: [widths[6], widths[7]],
        };
        let config = GanConfig {
            lambda_l1,
            lr_g,
            lr_d,
            batch_size,
            epochs,
            skip_threshold,
            dropout_p,
            adam_beta1,
            adam_beta2,
            adam_eps,
            seed,
            points,
            arch,
        };
        config
            .validate()
            .map_err(|e| CheckpointError::Config(e.to_string()))?;

        let epoch = r.usize()?;
        let (step_g, step_d) = (r.u64()?, r.u64()?);
        let d_real = r.f64()?;
        let rng_seed: [u8; 32] = r.array()?;
        let stream = r.u64()?;
        let word_pos = u128::from_le_bytes(r.array()?);

        // Check the total size before allocating any tensor.
        let g_shapes = arch.generator_shapes();
        let d_shapes = arch.discriminator_shapes();
        let count =
            |shapes: &[(usize, usize)]| shapes.iter().map(|&(i, o)| i * o + o).sum::<usize>();
        let floats = 3 * (count(&g_shapes) + count(&d_shapes));
        let needed = floats * T::BYTES;
        let remaining = bytes.len() - r.pos;
        if remaining < needed {
            return Err(CheckpointError::Truncated);
        }
        if remaining > needed {
            return Err(CheckpointError::TrailingData(remaining - needed));
        }
        let generator = r.layers(&g_shapes);
        let discriminator = r.layers(&d_shapes);
        let adam_g = AdamState {
            m: r.layers(&g_shapes),
            v: r.layers(&g_shapes),
            step: step_g,
        };
        let adam_d = AdamState {
            m: r.layers(&d_shapes),
            v: r.layers(&d_shapes),
            step: step_d,
        };
        let mut rng = ChaCha8Rng::from_seed(rng_seed);
        rng.set_stream(stream);
        rng.set_word_pos(word_pos);
        Ok(Checkpoint {
            config,
            params: GanParams {
                arch,
                generator,
                discriminator,
            },
            state: TrainState {
                adam_g,
                adam_d,
                epoch,
                d_real,
                rng,
            },
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or(CheckpointError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], CheckpointError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn usize(&mut self) -> Result<usize, CheckpointError> {
        usize::try_from(self.u64()?)
            .map_err(|_| CheckpointError::Config("count overflows usize".into()))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_bits(self.u64()?))
    }

    /// Caller has verified that enough bytes remain.
    fn layers<T: Real>(&mut self, shapes: &[(usize, usize)]) -> Vec<Dense<T>> {
        let mut layers = zero_layers::<T>(shapes);
        for l in &mut layers {
            for v in l.weight.iter_mut().chain(l.bias.iter_mut()) {
                *v = T::read_le(&self.bytes[self.pos..]);
                self.pos += T::BYTES;
            }
        }
        layers
    }
}
