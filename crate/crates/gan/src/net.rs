//! Per-point shared MLPs with a symmetric max-pool, forward and reverse mode.
//!
//! Points are rows: a layer maps an `N × in` activation to `N × out` through
//! `X·W + b`. Every cloud is processed on its own; a batch is a list of
//! clouds.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;
use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use crate::scalar::Real;
use crate::GanError;

/// One affine layer; `weight` is `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Real> Dense<T> {
    pub fn zeros(input: usize, output: usize) -> Self {
        Dense {
            weight: Array2::zeros((input, output)),
            bias: Array1::zeros(output),
        }
    }

    /// Weights and bias uniform in `±1/√in`.
    pub fn init(rng: &mut impl Rng, input: usize, output: usize) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        let mut draw = || T::of(rng.random_range(-bound..bound));
        let weight = Array2::from_shape_simple_fn((input, output), &mut draw);
        let bias = Array1::from_shape_simple_fn(output, draw);
        Dense { weight, bias }
    }

    pub fn input(&self) -> usize {
        self.weight.nrows()
    }

    pub fn output(&self) -> usize {
        self.weight.ncols()
    }

    pub fn parameter_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// `x·W` without the bias; see [`epilogue`].
    fn linear(&self, x: ArrayView2<T>) -> Array2<T> {
        x.dot(&self.weight)
    }

    /// Flat view: weights row-major, then bias.
    pub fn get(&self, i: usize) -> T {
        let w = self.weight.len();
        if i < w {
            self.weight.as_slice().unwrap()[i]
        } else {
            self.bias[i - w]
        }
    }

    pub fn set(&mut self, i: usize, value: T) {
        let w = self.weight.len();
        if i < w {
            self.weight.as_slice_mut().unwrap()[i] = value;
        } else {
            self.bias[i - w] = value;
        }
    }
}

/// Hidden widths of both networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Architecture {
    /// Shared encoder widths; the first is the per-point feature fed to the
    /// decoder, the last is the global feature width.
    pub encoder: [usize; 3],
    pub decoder: [usize; 3],
    /// Discriminator head hidden widths.
    pub head: [usize; 2],
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            encoder: [64, 128, 1024],
            decoder: [512, 256, 128],
            head: [512, 256],
        }
    }
}

impl Architecture {
    /// `(in, out)` of every generator layer: three encoder layers, then the
    /// decoder whose first input is the per-point and global features.
    pub fn generator_shapes(&self) -> [(usize, usize); 7] {
        let [e0, e1, e2] = self.encoder;
        let [d0, d1, d2] = self.decoder;
        [
            (3, e0),
            (e0, e1),
            (e1, e2),
            (e0 + e2, d0),
            (d0, d1),
            (d1, d2),
            (d2, 3),
        ]
    }

    pub fn discriminator_shapes(&self) -> [(usize, usize); 6] {
        let [e0, e1, e2] = self.encoder;
        let [h0, h1] = self.head;
        [(6, e0), (e0, e1), (e1, e2), (e2, h0), (h0, h1), (h1, 1)]
    }
}

/// Generator and discriminator parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GanParams<T> {
    pub arch: Architecture,
    pub generator: Vec<Dense<T>>,
    pub discriminator: Vec<Dense<T>>,
}

impl<T: Real> GanParams<T> {
    pub fn init(arch: Architecture, rng: &mut impl Rng) -> Self {
        let generator = arch
            .generator_shapes()
            .iter()
            .map(|&(i, o)| Dense::init(rng, i, o))
            .collect();
        let discriminator = arch
            .discriminator_shapes()
            .iter()
            .map(|&(i, o)| Dense::init(rng, i, o))
            .collect();
        GanParams {
            arch,
            generator,
            discriminator,
        }
    }

    pub fn zeros(arch: Architecture) -> Self {
        GanParams {
            arch,
            generator: zero_layers(&arch.generator_shapes()),
            discriminator: zero_layers(&arch.discriminator_shapes()),
        }
    }
}

pub fn zero_layers<T: Real>(shapes: &[(usize, usize)]) -> Vec<Dense<T>> {
    shapes.iter().map(|&(i, o)| Dense::zeros(i, o)).collect()
}

/// Inverted-dropout multipliers (0 or `1/(1-p)`) for the first two decoder
/// layers.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks<T> {
    pub first: Array2<T>,
    pub second: Array2<T>,
}

impl<T: Real> DropoutMasks<T> {
    pub fn draw(rng: &mut impl Rng, points: usize, arch: &Architecture, p: f64) -> Option<Self> {
        if p <= 0.0 {
            return None;
        }
        let keep = T::of(1.0 / (1.0 - p));
        // Dropped when a uniform 32-bit draw falls below p·2³².
        let threshold = (p * 4_294_967_296.0).min(u32::MAX as f64) as u32;
        let mut draw = |width| {
            let mut bits = vec![0u32; points * width];
            rng.fill(&mut bits[..]);
            let values = bits
                .into_iter()
                .map(|b| if b < threshold { T::zero() } else { keep })
                .collect();
            Array2::from_shape_vec((points, width), values).expect("sized above")
        };
        let first = draw(arch.decoder[0]);
        let second = draw(arch.decoder[1]);
        Some(DropoutMasks { first, second })
    }
}

/// One pass over `out` adding `bias`, then optionally ReLU and a dropout
/// multiplier. NaN passes through so later finiteness checks see it.
fn epilogue<T: Real>(
    out: &mut Array2<T>,
    bias: ArrayView1<T>,
    relu: bool,
    mask: Option<&Array2<T>>,
) {
    let bias = bias.to_vec();
    let activate = |x: T| if relu && x < T::zero() { T::zero() } else { x };
    match mask {
        None => {
            for mut row in out.rows_mut() {
                for (v, &b) in row.iter_mut().zip(&bias) {
                    *v = activate(*v + b);
                }
            }
        }
        Some(mask) => {
            for (mut row, m) in out.rows_mut().into_iter().zip(mask.rows()) {
                for ((v, &b), &m) in row.iter_mut().zip(&bias).zip(m) {
                    *v = activate(*v + b) * m;
                }
            }
        }
    }
}

/// Zeroes `grad` where the ReLU output was not positive.
fn relu_back<T: Real>(grad: &mut Array2<T>, output: &Array2<T>) {
    Zip::from(grad).and(output).for_each(|g, &o| {
        if o <= T::zero() {
            *g = T::zero();
        }
    });
}

fn check<T: Real>(x: &Array2<T>, stage: &'static str) -> Result<(), GanError> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(GanError::NonFinite(stage))
    }
}

/// Column-wise maximum with the first row attaining it; `None` if any entry
/// is not finite.
fn max_pool<T: Real>(x: &Array2<T>) -> Option<(Array1<T>, Vec<usize>)> {
    let cols = x.ncols();
    let mut best = x.row(0).to_vec();
    let mut arg = vec![0usize; cols];
    let mut finite = best.iter().all(|v| v.is_finite());
    for (r, row) in x.outer_iter().enumerate().skip(1) {
        let row = row.to_slice().expect("activations are standard layout");
        for ((b, a), &v) in best.iter_mut().zip(&mut arg).zip(row) {
            finite &= v.is_finite();
            if v > *b {
                *b = v;
                *a = r;
            }
        }
    }
    finite.then(|| (Array1::from(best), arg))
}

/// `acc += aᵀ·b`
fn add_at_b<T: Real>(acc: &mut Array2<T>, a: ArrayView2<T>, b: ArrayView2<T>) {
    general_mat_mul(T::one(), &a.t(), &b, T::one(), acc);
}

/// Activations of the shared three-layer encoder. The widest layer is pooled
/// before its ReLU (they commute), so only the pooled vector is kept.
#[derive(Debug, Clone)]
struct EncoderCache<T> {
    input: Array2<T>,
    hidden: [Array2<T>; 2],
    /// ReLU of the pooled pre-activations.
    global: Array1<T>,
    argmax: Vec<usize>,
}

fn encode<T: Real>(layers: &[Dense<T>], input: Array2<T>) -> Result<EncoderCache<T>, GanError> {
    if input.nrows() == 0 {
        return Err(GanError::EmptyCloud);
    }
    check(&input, "input")?;
    let mut h0 = layers[0].linear(input.view());
    epilogue(&mut h0, layers[0].bias.view(), true, None);
    let mut h1 = layers[1].linear(h0.view());
    epilogue(&mut h1, layers[1].bias.view(), true, None);
    let mut a2 = layers[2].linear(h1.view());
    epilogue(&mut a2, layers[2].bias.view(), false, None);
    let (pooled, argmax) = max_pool(&a2).ok_or(GanError::NonFinite("encoder"))?;
    Ok(EncoderCache {
        input,
        hidden: [h0, h1],
        global: pooled.mapv(|v| if v < T::zero() { T::zero() } else { v }),
        argmax,
    })
}

/// Reverse pass through pool and encoder. `d_global` is the gradient at the
/// pooled feature, `d_first` an extra gradient at the first hidden layer.
/// Accumulates parameter gradients when `grads` is given and returns the
/// input gradient when `want_input`.
fn encode_back<T: Real>(
    layers: &[Dense<T>],
    cache: &EncoderCache<T>,
    d_global: ArrayView1<T>,
    d_first: Option<Array2<T>>,
    mut grads: Option<&mut [Dense<T>]>,
    want_input: bool,
) -> Option<Array2<T>> {
    let [h0, h1] = &cache.hidden;
    // Only the argmax row of each pooled feature receives gradient.
    let mut d_h1 = Array2::<T>::zeros(h1.raw_dim());
    let w2 = &layers[2].weight;
    for (j, &row) in cache.argmax.iter().enumerate() {
        let g = d_global[j];
        if g == T::zero() || cache.global[j] <= T::zero() {
            continue;
        }
        if let Some(grads) = grads.as_deref_mut() {
            let mut col = grads[2].weight.column_mut(j);
            col.scaled_add(g, &h1.row(row));
            grads[2].bias[j] += g;
        }
        d_h1.row_mut(row).scaled_add(g, &w2.column(j));
    }
    relu_back(&mut d_h1, h1);
    let mut d_h0 = d_h1.dot(&layers[1].weight.t());
    if let Some(grads) = grads.as_deref_mut() {
        add_at_b(&mut grads[1].weight, h0.view(), d_h1.view());
        grads[1].bias += &d_h1.sum_axis(Axis(0));
    }
    if let Some(extra) = d_first {
        d_h0 += &extra;
    }
    relu_back(&mut d_h0, h0);
    if let Some(grads) = grads {
        add_at_b(&mut grads[0].weight, cache.input.view(), d_h0.view());
        grads[0].bias += &d_h0.sum_axis(Axis(0));
    }
    want_input.then(|| d_h0.dot(&layers[0].weight.t()))
}

fn hash_pattern<T: Real>(state: &mut DefaultHasher, x: &Array2<T>) {
    for v in x.iter() {
        state.write_u8(u8::from(*v > T::zero()));
    }
}

impl<T: Real> EncoderCache<T> {
    fn pattern(&self, state: &mut DefaultHasher) {
        for h in &self.hidden {
            hash_pattern(state, h);
        }
        self.argmax.hash(state);
        for v in &self.global {
            state.write_u8(u8::from(*v > T::zero()));
        }
    }
}

/// Everything the generator's reverse pass needs.
#[derive(Debug, Clone)]
pub struct GeneratorCache<T> {
    encoder: EncoderCache<T>,
    /// Decoder activations after ReLU and dropout. Where a dropout mask is
    /// nonzero the sign matches the bare ReLU output, which is all the
    /// reverse pass needs.
    hidden: [Array2<T>; 3],
    masks: Option<DropoutMasks<T>>,
    pub output: Array2<T>,
}

impl<T: Real> GeneratorCache<T> {
    /// Hash of every ReLU sign and pooling argmax; equal keys mean the
    /// forward pass took the same linear piece.
    pub fn pattern_key(&self) -> u64 {
        let mut state = DefaultHasher::new();
        self.encoder.pattern(&mut state);
        for h in &self.hidden {
            hash_pattern(&mut state, h);
        }
        state.finish()
    }
}

pub fn generator_forward<T: Real>(
    params: &GanParams<T>,
    positions: ArrayView2<T>,
    masks: Option<DropoutMasks<T>>,
) -> Result<GeneratorCache<T>, GanError> {
    let g = &params.generator;
    let encoder = encode(g, positions.to_owned())?;
    let local = params.arch.encoder[0];
    let w = &g[3].weight;
    // The global half of the first decoder layer is shared by every point.
    let mut shared = encoder.global.dot(&w.slice(s![local.., ..]));
    shared += &g[3].bias;
    let mut u0 = encoder.hidden[0].dot(&w.slice(s![..local, ..]));
    epilogue(
        &mut u0,
        shared.view(),
        true,
        masks.as_ref().map(|m| &m.first),
    );
    let mut u1 = g[4].linear(u0.view());
    epilogue(
        &mut u1,
        g[4].bias.view(),
        true,
        masks.as_ref().map(|m| &m.second),
    );
    let mut u2 = g[5].linear(u1.view());
    epilogue(&mut u2, g[5].bias.view(), true, None);
    let mut output = g[6].linear(u2.view());
    epilogue(&mut output, g[6].bias.view(), false, None);
    output.mapv_inplace(|v| v.tanh());
    check(&output, "generator")?;
    Ok(GeneratorCache {
        encoder,
        hidden: [u0, u1, u2],
        masks,
        output,
    })
}

/// Accumulates generator parameter gradients for the output gradient
/// `d_output`.
pub fn generator_backward<T: Real>(
    params: &GanParams<T>,
    cache: &GeneratorCache<T>,
    d_output: ArrayView2<T>,
    grads: &mut [Dense<T>],
) {
    let g = &params.generator;
    let [u0, u1, u2] = &cache.hidden;
    let local = params.arch.encoder[0];

    let mut dz = d_output.to_owned();
    Zip::from(&mut dz)
        .and(&cache.output)
        .for_each(|d, &o| *d = *d * (T::one() - o * o));
    add_at_b(&mut grads[6].weight, u2.view(), dz.view());
    grads[6].bias += &dz.sum_axis(Axis(0));

    let mut d2 = dz.dot(&g[6].weight.t());
    relu_back(&mut d2, u2);
    add_at_b(&mut grads[5].weight, u1.view(), d2.view());
    grads[5].bias += &d2.sum_axis(Axis(0));

    let mut d1 = d2.dot(&g[5].weight.t());
    if let Some(m) = &cache.masks {
        d1 *= &m.second;
    }
    relu_back(&mut d1, u1);
    add_at_b(&mut grads[4].weight, u0.view(), d1.view());
    grads[4].bias += &d1.sum_axis(Axis(0));

    let mut d0 = d1.dot(&g[4].weight.t());
    if let Some(m) = &cache.masks {
        d0 *= &m.first;
    }
    relu_back(&mut d0, u0);
    let column_sum = d0.sum_axis(Axis(0));
    let h0 = &cache.encoder.hidden[0];
    {
        let mut w_local = grads[3].weight.slice_mut(s![..local, ..]);
        general_mat_mul(T::one(), &h0.t(), &d0, T::one(), &mut w_local);
    }
    {
        let global = cache.encoder.global.view().insert_axis(Axis(1));
        let sums = column_sum.view().insert_axis(Axis(0));
        let mut w_global = grads[3].weight.slice_mut(s![local.., ..]);
        general_mat_mul(T::one(), &global, &sums, T::one(), &mut w_global);
    }
    grads[3].bias += &column_sum;

    let w = &g[3].weight;
    let d_local = d0.dot(&w.slice(s![..local, ..]).t());
    let d_global = w.slice(s![local.., ..]).dot(&column_sum);
    encode_back(
        &g[..3],
        &cache.encoder,
        d_global.view(),
        Some(d_local),
        Some(&mut grads[..3]),
        false,
    );
}

#[derive(Debug, Clone)]
pub struct DiscriminatorCache<T> {
    encoder: EncoderCache<T>,
    head: [Array1<T>; 2],
    pub logit: T,
}

impl<T: Real> DiscriminatorCache<T> {
    pub fn pattern_key(&self) -> u64 {
        let mut state = DefaultHasher::new();
        self.encoder.pattern(&mut state);
        for q in &self.head {
            for v in q.iter() {
                state.write_u8(u8::from(*v > T::zero()));
            }
        }
        state.finish()
    }
}

/// Scores positions concatenated with colors (both `N × 3`).
pub fn discriminator_forward<T: Real>(
    params: &GanParams<T>,
    positions: ArrayView2<T>,
    colors: ArrayView2<T>,
) -> Result<DiscriminatorCache<T>, GanError> {
    if positions.dim() != colors.dim() {
        return Err(GanError::Shape {
            positions: positions.nrows(),
            colors: colors.nrows(),
        });
    }
    let d = &params.discriminator;
    let input = ndarray::concatenate(Axis(1), &[positions, colors]).expect("matching rows");
    let encoder = encode(d, input)?;
    let mut q0 = encoder.global.dot(&d[3].weight) + &d[3].bias;
    q0.mapv_inplace(|v| if v < T::zero() { T::zero() } else { v });
    let mut q1 = q0.dot(&d[4].weight) + &d[4].bias;
    q1.mapv_inplace(|v| if v < T::zero() { T::zero() } else { v });
    let logit = q1.dot(&d[5].weight.column(0)) + d[5].bias[0];
    if !logit.is_finite() {
        return Err(GanError::NonFinite("discriminator"));
    }
    Ok(DiscriminatorCache {
        encoder,
        head: [q0, q1],
        logit,
    })
}

/// Reverse pass for the logit gradient `d_logit`. Accumulates parameter
/// gradients into `grads` if given; returns the color-input gradient when
/// `want_colors`.
pub fn discriminator_backward<T: Real>(
    params: &GanParams<T>,
    cache: &DiscriminatorCache<T>,
    d_logit: T,
    mut grads: Option<&mut [Dense<T>]>,
    want_colors: bool,
) -> Option<Array2<T>> {
    let d = &params.discriminator;
    let [q0, q1] = &cache.head;
    let mut d_q1 = d[5].weight.column(0).mapv(|w| w * d_logit);
    if let Some(grads) = grads.as_deref_mut() {
        grads[5].weight.column_mut(0).scaled_add(d_logit, q1);
        grads[5].bias[0] += d_logit;
    }
    Zip::from(&mut d_q1).and(q1).for_each(|g, &q| {
        if q <= T::zero() {
            *g = T::zero();
        }
    });
    let mut d_q0 = d[4].weight.dot(&d_q1);
    if let Some(grads) = grads.as_deref_mut() {
        outer_add(&mut grads[4].weight, q0.view(), d_q1.view());
        grads[4].bias += &d_q1;
    }
    Zip::from(&mut d_q0).and(q0).for_each(|g, &q| {
        if q <= T::zero() {
            *g = T::zero();
        }
    });
    let d_global = d[3].weight.dot(&d_q0);
    if let Some(grads) = grads.as_deref_mut() {
        outer_add(
            &mut grads[3].weight,
            cache.encoder.global.view(),
            d_q0.view(),
        );
        grads[3].bias += &d_q0;
    }
    let d_input = encode_back(
        &d[..3],
        &cache.encoder,
        d_global.view(),
        None,
        grads.map(|g| &mut g[..3]),
        want_colors,
    );
    d_input.map(|d| d.slice(s![.., 3..]).to_owned())
}

fn outer_add<T: Real>(acc: &mut Array2<T>, a: ArrayView1<T>, b: ArrayView1<T>) {
    for (i, &x) in a.iter().enumerate() {
        if x != T::zero() {
            acc.row_mut(i).scaled_add(x, &b);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use densify_core::seed;

    fn small() -> Architecture {
        Architecture {
            encoder: [4, 5, 6],
            decoder: [7, 5, 4],
            head: [5, 3],
        }
    }

    #[test]
    fn shapes_chain() {
        let arch = Architecture::default();
        let g = arch.generator_shapes();
        assert_eq!(g[3].0, 1088);
        for w in g.windows(2).skip(3) {
            assert_eq!(w[0].1, w[1].0);
        }
        assert_eq!(arch.discriminator_shapes()[5], (256, 1));
    }

    #[test]
    fn zero_discriminator_scores_half() {
        let params = GanParams::<f64>::zeros(small());
        let x = Array2::from_elem((5, 3), 0.3);
        let cache = discriminator_forward(&params, x.view(), x.view()).unwrap();
        assert_eq!(cache.logit, 0.0);
    }

    #[test]
    fn single_point_global_equals_its_feature() {
        let params = GanParams::<f64>::init(small(), &mut seed::rng(1));
        let x = Array2::from_shape_vec((1, 3), vec![0.1, -0.4, 0.7]).unwrap();
        let cache = generator_forward(&params, x.view(), None).unwrap();
        let mut only = params.generator[2].linear(cache.encoder.hidden[1].view());
        epilogue(&mut only, params.generator[2].bias.view(), true, None);
        assert_eq!(cache.encoder.global, only.row(0));
        assert!(cache.output.iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn empty_cloud_is_an_error() {
        let params = GanParams::<f64>::init(small(), &mut seed::rng(1));
        let x = Array2::<f64>::zeros((0, 3));
        assert!(matches!(
            generator_forward(&params, x.view(), None),
            Err(GanError::EmptyCloud)
        ));
    }

    #[test]
    fn nan_weight_is_detected() {
        let mut params = GanParams::<f64>::init(small(), &mut seed::rng(1));
        params.generator[1].weight[[0, 0]] = f64::NAN;
        let x = Array2::from_elem((3, 3), 0.5);
        assert!(matches!(
            generator_forward(&params, x.view(), None),
            Err(GanError::NonFinite(_))
        ));
    }

    #[test]
    fn nan_input_is_detected() {
        let params = GanParams::<f64>::init(small(), &mut seed::rng(1));
        let x = Array2::from_elem((3, 3), f64::NAN);
        assert!(matches!(
            generator_forward(&params, x.view(), None),
            Err(GanError::NonFinite(_))
        ));
    }

    #[test]
    fn flat_parameter_view_round_trips() {
        let mut layer = Dense::<f64>::zeros(2, 3);
        for i in 0..layer.parameter_count() {
            layer.set(i, i as f64);
        }
        assert_eq!(layer.weight[[1, 2]], 5.0);
        assert_eq!(layer.bias[2], 8.0);
        assert_eq!(layer.get(7), 7.0);
    }
}
