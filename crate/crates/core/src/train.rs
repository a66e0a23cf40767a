//! Mini-batch β-ELBO optimization with Adam.

use std::time::Instant;

use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{batch_iter, DatasetIndex, Split};
use crate::error::{Error, Result};
use crate::latent::LossBreakdown;
use crate::nn::loss::scalar_value;
use crate::nn::Vae;
use crate::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 8,
            learning_rate: 1e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Parameter(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    /// Sample-weighted mean loss of every completed epoch.
    pub epochs: Vec<LossBreakdown>,
    pub wall_clock_seconds: f64,
    pub seed: u64,
    pub epochs_completed: usize,
}

pub const LOSS_CSV_HEADER: &str = "epoch,reconstruction,kl,beta,total";

/// Per-epoch losses as CSV, one row per completed epoch.
pub fn losses_csv(stats: &TrainStats) -> String {
    let mut out = String::from(LOSS_CSV_HEADER);
    out.push('\n');
    for (i, l) in stats.epochs.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            i + 1,
            l.reconstruction,
            l.kl,
            l.beta,
            l.total
        ));
    }
    out
}

/// Shuffling seed of one epoch.
fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    rng.next_u64()
}

/// Trains `model` on the train split of `index` (resized to the model's
/// input size). `on_epoch` sees the 1-based epoch number and its mean loss.
pub fn train<T: Scalar>(
    model: &Vae<T>,
    index: &DatasetIndex,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(usize, &LossBreakdown),
) -> Result<TrainStats> {
    config.validate()?;
    if index.is_empty(Split::Train) {
        return Err(Error::EmptySplit("train"));
    }
    let index = index.clone().with_image_size(model.image_size());
    let start = Instant::now();
    let mut stats = TrainStats {
        epochs: Vec::with_capacity(config.epochs),
        wall_clock_seconds: 0.0,
        seed: config.seed,
        epochs_completed: 0,
    };
    if config.epochs == 0 {
        return Ok(stats);
    }
    let params = ParamsAdamW {
        lr: config.learning_rate,
        weight_decay: 0.0,
        ..Default::default()
    };
    let mut optimizer = AdamW::new(model.vars(), params)?;
    let mut noise_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (c, h, w) = model.latent_shape();
    let beta = model.config().beta;

    for epoch in 1..=config.epochs {
        let batches = batch_iter::<T>(
            &index,
            Split::Train,
            config.batch_size,
            true,
            epoch_seed(config.seed, epoch),
        )?;
        let (mut recon_sum, mut kl_sum, mut seen) = (0.0, 0.0, 0usize);
        for (batch_no, batch) in batches.enumerate() {
            let batch = batch?;
            let b = batch.len();
            let x = model.to_tensor(&batch.pixels.view())?;
            let noise: Vec<T> = (0..b * c * h * w)
                .map(|_| T::of(StandardNormal.sample(&mut noise_rng)))
                .collect();
            let noise = T::tensor(noise, (b, c, h, w), model.device())?;
            let terms = model.elbo(&x, &noise)?;
            let total = scalar_value(&terms.total)?;
            if !total.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: batch_no + 1,
                    loss: total,
                });
            }
            optimizer.backward_step(&terms.total)?;
            recon_sum += scalar_value(&terms.reconstruction)? * b as f64;
            kl_sum += scalar_value(&terms.kl)? * b as f64;
            seen += b;
        }
        let mean = LossBreakdown::new(recon_sum / seen as f64, kl_sum / seen as f64, beta);
        on_epoch(epoch, &mean);
        stats.epochs.push(mean);
        stats.epochs_completed = epoch;
    }
    stats.wall_clock_seconds = start.elapsed().as_secs_f64();
    Ok(stats)
}
