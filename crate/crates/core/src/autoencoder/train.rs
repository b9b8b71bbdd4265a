//! Mini-batch Adam training with a deterministic shuffle schedule.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::AutoencoderModel;
use crate::error::{Error, Result};
use crate::ingest::Window;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Optional global L2 clip on each batch gradient.
    pub clip_norm: Option<f64>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 100,
            learning_rate: 1e-3,
            batch_size: 32,
            seed: 0,
            clip_norm: None,
        }
    }
}

/// Mean training loss per epoch, in epoch order.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainingHistory {
    pub epoch_loss: Vec<f64>,
}

impl TrainingHistory {
    pub fn epochs_run(&self) -> usize {
        self.epoch_loss.len()
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.epoch_loss.last().copied()
    }
}

/// Train a copy of `model` on the given windows. Deterministic: the same
/// model, windows, and options produce bit-identical parameters.
pub fn train(
    model: &AutoencoderModel,
    windows: &[Window],
    opts: &TrainOptions,
) -> Result<(AutoencoderModel, TrainingHistory)> {
    if windows.is_empty() {
        return Err(Error::EmptyInput("no training windows".into()));
    }
    if opts.batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
    }
    for w in windows {
        model.check_window(&w.view())?;
    }

    let mut trained = model.clone();
    let mut history = TrainingHistory {
        epoch_loss: Vec::with_capacity(opts.epochs),
    };
    if opts.epochs == 0 {
        return Ok((trained, history));
    }

    let n_params = trained.flat_len();
    let mut adam_m = vec![0.0; n_params];
    let mut adam_v = vec![0.0; n_params];
    let mut step_count = 0u64;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..windows.len()).collect();

    for _ in 0..opts.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(opts.batch_size) {
            let views: Vec<_> = batch.iter().map(|&idx| windows[idx].view()).collect();
            let (batch_loss, grads) = super::batch::loss_and_gradients(&trained, &views)?;
            loss_sum += batch_loss * batch.len() as f64;
            let mut grad_sum = grads.to_flat();
            if let Some(max_norm) = opts.clip_norm {
                clip_by_norm(&mut grad_sum, max_norm);
            }

            step_count += 1;
            let mut flat = trained.to_flat();
            adam_step(
                &mut flat,
                &grad_sum,
                &mut adam_m,
                &mut adam_v,
                opts.learning_rate,
                step_count,
            );
            trained.set_flat(&flat);
        }
        let epoch_loss = loss_sum / windows.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "training loss diverged at epoch {}",
                history.epochs_run() + 1
            )));
        }
        history.epoch_loss.push(epoch_loss);
    }
    Ok((trained, history))
}

fn adam_step(
    params: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    learning_rate: f64,
    t: u64,
) {
    let bias1 = 1.0 - ADAM_BETA1.powi(t as i32);
    let bias2 = 1.0 - ADAM_BETA2.powi(t as i32);
    for k in 0..params.len() {
        m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * grad[k];
        v[k] = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * grad[k] * grad[k];
        let m_hat = m[k] / bias1;
        let v_hat = v[k] / bias2;
        params[k] -= learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
    }
}

fn clip_by_norm(grad: &mut [f64], max_norm: f64) {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grad.iter_mut() {
            *g *= scale;
        }
    }
}

/// Mean loss over a window set without updating anything.
pub fn mean_loss(model: &AutoencoderModel, windows: &[Window]) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::EmptyInput("no windows".into()));
    }
    let mut sum = 0.0;
    for w in windows {
        let recon = model.reconstruct(&w.view())?;
        sum += super::mse_loss(&w.view(), &recon.view())?;
    }
    Ok(sum / windows.len() as f64)
}
