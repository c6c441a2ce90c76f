//! Alternating discriminator/generator optimization with the
//! discriminator-skip schedule.

use densify_core::seed::{self, derive_seed, ChaCha8Rng};
use ndarray::Array2;
use rand::seq::SliceRandom;

use crate::adam::{AdamConfig, AdamState};
use crate::data::ColorCloud;
use crate::loss::{gan_losses, l1, l1_gradient, sigmoid};
use crate::net::{
    discriminator_backward, discriminator_forward, generator_backward, generator_forward,
    zero_layers, Architecture, Dense, DiscriminatorCache, DropoutMasks, GanParams, GeneratorCache,
};
use crate::scalar::Real;
use crate::GanError;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GanConfig {
    pub lambda_l1: f64,
    pub lr_g: f64,
    pub lr_d: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub skip_threshold: f64,
    pub dropout_p: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    /// Points kept per training cloud.
    pub points: usize,
    pub arch: Architecture,
}

impl Default for GanConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        GanConfig {
            lambda_l1: 10.0,
            lr_g: 1e-3,
            lr_d: 1e-4,
            batch_size: 8,
            epochs: 200,
            skip_threshold: 0.7,
            dropout_p: 0.5,
            adam_beta1: adam.beta1,
            adam_beta2: adam.beta2,
            adam_eps: adam.eps,
            seed: 0,
            points: 1024,
            arch: Architecture::default(),
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<(), GanError> {
        let bad = |what: &str| Err(GanError::Config(what.to_owned()));
        if !(self.lr_g > 0.0 && self.lr_d > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(self.skip_threshold > 0.0 && self.skip_threshold < 1.0) {
            return bad("skip threshold must lie in (0, 1)");
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad("dropout probability must lie in [0, 1)");
        }
        if !(self.lambda_l1 >= 0.0 && self.lambda_l1.is_finite()) {
            return bad("lambda must be finite and non-negative");
        }
        if self.batch_size == 0 || self.points == 0 {
            return bad("batch size and point count must be positive");
        }
        if !(0.0..1.0).contains(&self.adam_beta1)
            || !(0.0..1.0).contains(&self.adam_beta2)
            || self.adam_eps <= 0.0
        {
            return bad("Adam betas must lie in [0, 1) and epsilon be positive");
        }
        let widths = self
            .arch
            .encoder
            .iter()
            .chain(&self.arch.decoder)
            .chain(&self.arch.head);
        if widths
            .clone()
            .any(|&w| w == 0 || w > crate::checkpoint::MAX_WIDTH)
        {
            return bad("layer widths must lie in 1..=65536");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}

/// Optimizer moments, counters and the noise source.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState<T> {
    pub adam_g: AdamState<T>,
    pub adam_d: AdamState<T>,
    /// Completed epochs.
    pub epoch: usize,
    /// Mean D(real) probability of the latest batch.
    pub d_real: f64,
    pub rng: ChaCha8Rng,
}

impl<T: Real> TrainState<T> {
    pub fn new(config: &GanConfig) -> Self {
        TrainState {
            adam_g: AdamState::new(&config.arch.generator_shapes()),
            adam_d: AdamState::new(&config.arch.discriminator_shapes()),
            epoch: 0,
            d_real: 0.5,
            rng: seed::rng(derive_seed(config.seed, "train")),
        }
    }
}

/// Gradient of the batch-mean discriminator loss.
pub fn discriminator_gradients<T: Real>(
    params: &GanParams<T>,
    real: &[DiscriminatorCache<T>],
    fake: &[DiscriminatorCache<T>],
) -> Vec<Dense<T>> {
    let batch = real.len() as f64;
    let mut grads = zero_layers(&params.arch.discriminator_shapes());
    for (r, f) in real.iter().zip(fake) {
        let dr = T::of(-sigmoid(-r.logit.to_f64()) / batch);
        let df = T::of(sigmoid(f.logit.to_f64()) / batch);
        discriminator_backward(params, r, dr, Some(&mut grads), false);
        discriminator_backward(params, f, df, Some(&mut grads), false);
    }
    grads
}

/// Batch-mean generator loss, batch-mean L1 and the generator gradient;
/// `fake` scores the generated colors with the current discriminator.
pub fn generator_gradients<T: Real>(
    params: &GanParams<T>,
    clouds: &[&ColorCloud<T>],
    generated: &[GeneratorCache<T>],
    fake: &[DiscriminatorCache<T>],
    lambda: f64,
) -> (f64, f64, Vec<Dense<T>>) {
    let batch = clouds.len() as f64;
    let mut grads = zero_layers(&params.arch.generator_shapes());
    let (mut g_loss, mut l1_sum) = (0.0, 0.0);
    for ((c, g), f) in clouds.iter().zip(generated).zip(fake) {
        let lf = f.logit.to_f64();
        let losses = gan_losses(0.0, lf, c.colors.view(), g.output.view(), lambda);
        g_loss += losses.g_loss;
        l1_sum += losses.l1;
        let d_color = discriminator_backward(params, f, T::of(-sigmoid(-lf) / batch), None, true)
            .expect("color gradient requested");
        let d_output: Array2<T> =
            d_color + l1_gradient(c.colors.view(), g.output.view(), lambda / batch);
        generator_backward(params, g, d_output.view(), &mut grads);
    }
    (g_loss / batch, l1_sum / batch, grads)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchReport {
    pub p_real: f64,
    pub skipped: bool,
    pub d_loss: f64,
    pub g_loss: f64,
    pub l1: f64,
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    pub l1: f64,
    pub skip_count: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub test_l1: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Trainer<T> {
    pub params: GanParams<T>,
    pub state: TrainState<T>,
    pub config: GanConfig,
}

impl<T: Real> Trainer<T> {
    pub fn new(config: GanConfig) -> Result<Self, GanError> {
        config.validate()?;
        let params = GanParams::init(
            config.arch,
            &mut seed::rng(derive_seed(config.seed, "init")),
        );
        Ok(Trainer {
            params,
            state: TrainState::new(&config),
            config,
        })
    }

    fn fake_scores(
        &self,
        clouds: &[&ColorCloud<T>],
        generated: &[GeneratorCache<T>],
    ) -> Result<Vec<DiscriminatorCache<T>>, GanError> {
        clouds
            .iter()
            .zip(generated)
            .map(|(c, g)| discriminator_forward(&self.params, c.positions.view(), g.output.view()))
            .collect()
    }

    /// One alternating round: a discriminator step unless the mean D(real)
    /// probability exceeds the skip threshold, then a generator step.
    pub fn train_batch(&mut self, clouds: &[&ColorCloud<T>]) -> Result<BatchReport, GanError> {
        if clouds.is_empty() {
            return Err(GanError::EmptyDataset);
        }
        let config = self.config;
        let batch = clouds.len() as f64;
        let mut generated = Vec::with_capacity(clouds.len());
        for c in clouds {
            let masks =
                DropoutMasks::draw(&mut self.state.rng, c.len(), &config.arch, config.dropout_p);
            generated.push(generator_forward(&self.params, c.positions.view(), masks)?);
        }
        let real: Vec<DiscriminatorCache<T>> = clouds
            .iter()
            .map(|c| discriminator_forward(&self.params, c.positions.view(), c.colors.view()))
            .collect::<Result<_, _>>()?;
        let mut fake = self.fake_scores(clouds, &generated)?;

        let p_real = real.iter().map(|r| sigmoid(r.logit.to_f64())).sum::<f64>() / batch;
        let d_loss = clouds
            .iter()
            .zip(&real)
            .zip(&fake)
            .zip(&generated)
            .map(|(((c, r), f), g)| {
                gan_losses(
                    r.logit.to_f64(),
                    f.logit.to_f64(),
                    c.colors.view(),
                    g.output.view(),
                    0.0,
                )
                .d_loss
            })
            .sum::<f64>()
            / batch;
        self.state.d_real = p_real;
        let skipped = p_real > config.skip_threshold;
        if !skipped {
            let grads = discriminator_gradients(&self.params, &real, &fake);
            self.state.adam_d.step(
                &mut self.params.discriminator,
                &grads,
                config.lr_d,
                &config.adam(),
            );
            fake = self.fake_scores(clouds, &generated)?;
        }

        let (g_loss, l1, grads) =
            generator_gradients(&self.params, clouds, &generated, &fake, config.lambda_l1);
        self.state.adam_g.step(
            &mut self.params.generator,
            &grads,
            config.lr_g,
            &config.adam(),
        );
        Ok(BatchReport {
            p_real,
            skipped,
            d_loss,
            g_loss,
            l1,
        })
    }

    /// Mean L1 over `clouds` with dropout active; masks come from a stream
    /// separate from the training noise.
    pub fn evaluate(&self, clouds: &[ColorCloud<T>], stream: &str) -> Result<f64, GanError> {
        if clouds.is_empty() {
            return Err(GanError::EmptyDataset);
        }
        let mut rng = seed::rng(derive_seed(self.config.seed, stream));
        let mut total = 0.0;
        for c in clouds {
            let masks =
                DropoutMasks::draw(&mut rng, c.len(), &self.config.arch, self.config.dropout_p);
            let out = generator_forward(&self.params, c.positions.view(), masks)?;
            total += l1(c.colors.view(), out.output.view());
        }
        Ok(total / clouds.len() as f64)
    }

    /// Runs one epoch over a seeded shuffle of `train`; reports the held-out
    /// L1 when `test` is non-empty.
    pub fn run_epoch(
        &mut self,
        train: &[ColorCloud<T>],
        test: &[ColorCloud<T>],
    ) -> Result<EpochLog, GanError> {
        if train.is_empty() {
            return Err(GanError::EmptyDataset);
        }
        let epoch = self.state.epoch;
        let diverged = |e: GanError| match e {
            GanError::NonFinite(stage) => GanError::Diverged { epoch, stage },
            other => other,
        };
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut self.state.rng);
        let mut log = EpochLog {
            epoch,
            d_loss: 0.0,
            g_loss: 0.0,
            l1: 0.0,
            skip_count: 0,
            test_l1: None,
        };
        let mut batches = 0;
        for chunk in order.chunks(self.config.batch_size) {
            let clouds: Vec<&ColorCloud<T>> = chunk.iter().map(|&i| &train[i]).collect();
            let report = self.train_batch(&clouds).map_err(diverged)?;
            log.d_loss += report.d_loss;
            log.g_loss += report.g_loss;
            log.l1 += report.l1;
            log.skip_count += usize::from(report.skipped);
            batches += 1;
        }
        let n = batches as f64;
        log.d_loss /= n;
        log.g_loss /= n;
        log.l1 /= n;
        if !test.is_empty() {
            log.test_l1 = Some(
                self.evaluate(test, &format!("eval/{epoch}"))
                    .map_err(diverged)?,
            );
        }
        self.state.epoch += 1;
        Ok(log)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub trainer: Trainer<T>,
    /// Held-out L1 before any update.
    pub initial_test_l1: Option<f64>,
    pub log: Vec<EpochLog>,
}

/// Trains a fresh pair for `config.epochs` epochs, calling `on_epoch` after
/// each one.
pub fn train<T: Real>(
    train: &[ColorCloud<T>],
    test: &[ColorCloud<T>],
    config: GanConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome<T>, GanError> {
    if train.is_empty() {
        return Err(GanError::EmptyDataset);
    }
    let mut trainer = Trainer::new(config)?;
    let initial_test_l1 = if test.is_empty() {
        None
    } else {
        Some(trainer.evaluate(test, "eval/initial")?)
    };
    let mut log = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let entry = trainer.run_epoch(train, test)?;
        on_epoch(&entry);
        log.push(entry);
    }
    Ok(TrainOutcome {
        trainer,
        initial_test_l1,
        log,
    })
}
