//! Central finite-difference verification of the analytic gradients.

use densify_core::seed;
use ndarray::Array2;
use rand::Rng;
use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;

use crate::data::ColorCloud;
use crate::loss::softplus;
use crate::net::{
    discriminator_forward, generator_forward, Architecture, Dense, DropoutMasks, GanParams,
};
use crate::train::{discriminator_gradients, generator_gradients};
use crate::GanError;

/// A fixed batch with fixed dropout masks, so both losses are deterministic
/// functions of the parameters.
#[derive(Debug, Clone)]
pub struct Case {
    pub params: GanParams<f64>,
    pub clouds: Vec<ColorCloud<f64>>,
    pub masks: Vec<Option<DropoutMasks<f64>>>,
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Network {
    Generator,
    Discriminator,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub layer: usize,
    /// Flat index: weights row-major, then bias.
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    /// Step the numeric estimate used.
    pub step: f64,
    /// The requested step straddled a non-differentiable point.
    pub kinked: bool,
}

impl Comparison {
    /// `|a − n| / max(|a|, |n|, floor)`.
    pub fn relative_error(&self, floor: f64) -> f64 {
        let scale = self.analytic.abs().max(self.numeric.abs()).max(floor);
        (self.analytic - self.numeric).abs() / scale
    }
}

fn layer_mut(params: &mut GanParams<f64>, network: Network, layer: usize) -> &mut Dense<f64> {
    match network {
        Network::Generator => &mut params.generator[layer],
        Network::Discriminator => &mut params.discriminator[layer],
    }
}

impl Case {
    /// Random positions, colors and masks (dropout 0.5) for `batch` clouds of
    /// `points` points. Biases are drawn from `±0.1`: zero biases put some
    /// pre-activations exactly on a ReLU kink, where there is no derivative
    /// to compare against.
    pub fn random(arch: Architecture, points: usize, batch: usize, seed: u64, lambda: f64) -> Self {
        let mut rng = seed::rng(seed);
        let mut params = GanParams::<f64>::init(arch, &mut rng);
        for layer in params.generator.iter_mut().chain(&mut params.discriminator) {
            layer.bias.mapv_inplace(|_| rng.random_range(-0.1..0.1));
        }
        let clouds = (0..batch)
            .map(|_| ColorCloud {
                positions: Array2::from_shape_simple_fn((points, 3), || {
                    rng.random_range(-1.0..1.0)
                }),
                colors: Array2::from_shape_simple_fn((points, 3), || rng.random_range(-1.0..1.0)),
            })
            .collect();
        let masks = (0..batch)
            .map(|_| DropoutMasks::draw(&mut rng, points, &arch, 0.5))
            .collect();
        Case {
            params,
            clouds,
            masks,
            lambda,
        }
    }

    fn generated(
        &self,
        params: &GanParams<f64>,
    ) -> Result<Vec<crate::net::GeneratorCache<f64>>, GanError> {
        self.clouds
            .iter()
            .zip(&self.masks)
            .map(|(c, m)| generator_forward(params, c.positions.view(), m.clone()))
            .collect()
    }

    /// Generator outputs at the case's own parameters.
    fn fixed_fakes(&self) -> Result<Vec<Array2<f64>>, GanError> {
        Ok(self
            .generated(&self.params)?
            .into_iter()
            .map(|g| g.output)
            .collect())
    }

    /// Batch-mean discriminator loss against the generator output at the
    /// case's own parameters.
    pub fn d_loss(&self, params: &GanParams<f64>) -> Result<f64, GanError> {
        Ok(self.d_loss_against(params, &self.fixed_fakes()?)?.0)
    }

    /// Loss and the key of the linear piece it was evaluated on.
    fn d_loss_against(
        &self,
        params: &GanParams<f64>,
        fakes: &[Array2<f64>],
    ) -> Result<(f64, u64), GanError> {
        let mut total = 0.0;
        let mut key = DefaultHasher::new();
        for (c, g) in self.clouds.iter().zip(fakes) {
            let real = discriminator_forward(params, c.positions.view(), c.colors.view())?;
            let fake = discriminator_forward(params, c.positions.view(), g.view())?;
            key.write_u64(real.pattern_key());
            key.write_u64(fake.pattern_key());
            total += softplus(-real.logit) + softplus(fake.logit);
        }
        Ok((total / self.clouds.len() as f64, key.finish()))
    }

    /// Batch-mean generator loss.
    pub fn g_loss(&self, params: &GanParams<f64>) -> Result<f64, GanError> {
        Ok(self.g_loss_keyed(params)?.0)
    }

    fn g_loss_keyed(&self, params: &GanParams<f64>) -> Result<(f64, u64), GanError> {
        let generated = self.generated(params)?;
        let mut total = 0.0;
        let mut key = DefaultHasher::new();
        for (c, g) in self.clouds.iter().zip(&generated) {
            let fake = discriminator_forward(params, c.positions.view(), g.output.view())?;
            key.write_u64(g.pattern_key());
            key.write_u64(fake.pattern_key());
            for (&y, &o) in c.colors.iter().zip(g.output.iter()) {
                key.write_u8(u8::from(o > y));
            }
            let l1 = crate::loss::l1(c.colors.view(), g.output.view());
            total += softplus(-fake.logit) + self.lambda * l1;
        }
        Ok((total / self.clouds.len() as f64, key.finish()))
    }

    pub fn analytic(&self, network: Network) -> Result<Vec<Dense<f64>>, GanError> {
        let p = &self.params;
        let generated = self.generated(p)?;
        let fake = self
            .clouds
            .iter()
            .zip(&generated)
            .map(|(c, g)| discriminator_forward(p, c.positions.view(), g.output.view()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(match network {
            Network::Discriminator => {
                let real = self
                    .clouds
                    .iter()
                    .map(|c| discriminator_forward(p, c.positions.view(), c.colors.view()))
                    .collect::<Result<Vec<_>, _>>()?;
                discriminator_gradients(p, &real, &fake)
            }
            Network::Generator => {
                let refs: Vec<&ColorCloud<f64>> = self.clouds.iter().collect();
                generator_gradients(p, &refs, &generated, &fake, self.lambda).2
            }
        })
    }

    /// Compares analytic and central-difference gradients of the network's
    /// own loss at the parameters chosen by `select(layer, count)`.
    ///
    /// When a step of `h` changes the ReLU/argmax/sign pattern the loss is
    /// not differentiable across the interval; the step is then divided by
    /// ten until the pattern holds (down to `1e-9`) and the comparison is
    /// flagged as `kinked`.
    pub fn compare(
        &self,
        network: Network,
        h: f64,
        mut select: impl FnMut(usize, usize) -> Vec<usize>,
    ) -> Result<Vec<Comparison>, GanError> {
        let analytic = self.analytic(network)?;
        let fixed = self.fixed_fakes()?;
        let loss = |probe: &GanParams<f64>| match network {
            Network::Generator => self.g_loss_keyed(probe),
            Network::Discriminator => self.d_loss_against(probe, &fixed),
        };
        let base_key = loss(&self.params)?.1;
        let mut probe = self.params.clone();
        let mut out = Vec::new();
        for (layer, grad) in analytic.iter().enumerate() {
            for index in select(layer, grad.parameter_count()) {
                let original = layer_mut(&mut probe, network, layer).get(index);
                let mut step = h;
                let (numeric, kinked) = loop {
                    layer_mut(&mut probe, network, layer).set(index, original + step);
                    let (plus, kp) = loss(&probe)?;
                    layer_mut(&mut probe, network, layer).set(index, original - step);
                    let (minus, km) = loss(&probe)?;
                    let numeric = (plus - minus) / (2.0 * step);
                    if (kp == base_key && km == base_key) || step / 10.0 < 1e-9 {
                        break (numeric, step != h || kp != base_key || km != base_key);
                    }
                    step /= 10.0;
                };
                layer_mut(&mut probe, network, layer).set(index, original);
                out.push(Comparison {
                    layer,
                    index,
                    analytic: grad.get(index),
                    numeric,
                    step,
                    kinked,
                });
            }
        }
        Ok(out)
    }
}
