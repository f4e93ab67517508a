//! Mini-batch training of [`EvictionNet`] on masked MSE with AdamW and
//! early stopping on a held-out tail of the samples.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::TrainingSample;
use super::net::{EvictionNet, DEFAULT_HIDDEN};
use super::MlError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Decoupled (AdamW) weight decay coefficient.
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    /// Fraction of samples, taken from the end in step order, used for validation.
    pub val_fraction: f64,
    pub hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            weight_decay: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_epochs: 200,
            patience: 10,
            batch_size: 256,
            val_fraction: 0.1,
            hidden: DEFAULT_HIDDEN,
        }
    }
}

/// Adam moments for a flat parameter vector, applied with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    lr: f64,
    weight_decay: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(net: &EvictionNet, cfg: &TrainConfig) -> Self {
        let shapes: Vec<usize> = net.param_slices().iter().map(|s| s.len()).collect();
        Self {
            lr: cfg.learning_rate,
            weight_decay: cfg.weight_decay,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        let decay = 1.0 - self.lr * self.weight_decay;
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] = p[i] * decay - self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// `0` is the untrained network.
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: EvictionNet,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

struct Batch {
    x: Array2<f64>,
    t: Array2<f64>,
    m: Array2<f64>,
}

impl Batch {
    fn gather(samples: &[TrainingSample], idx: &[usize], e: usize) -> Self {
        let mut x = Array2::zeros((idx.len(), 2 * e));
        let mut t = Array2::zeros((idx.len(), e));
        let mut m = Array2::zeros((idx.len(), e));
        for (row, &i) in idx.iter().enumerate() {
            let s = &samples[i];
            x.row_mut(row).iter_mut().zip(&s.features).for_each(|(d, &v)| *d = v);
            t.row_mut(row).iter_mut().zip(&s.targets).for_each(|(d, &v)| *d = v);
            m.row_mut(row).iter_mut().zip(&s.mask).for_each(|(d, &v)| *d = if v { 1.0 } else { 0.0 });
        }
        Self { x, t, m }
    }
}

/// Masked MSE over all of `idx`, weighting every masked position equally.
fn evaluate(net: &EvictionNet, samples: &[TrainingSample], idx: &[usize], batch: usize) -> Result<f64, MlError> {
    let e = net.num_experts();
    let mut sum = 0.0;
    let mut count = 0.0;
    for chunk in idx.chunks(batch.max(1)) {
        let b = Batch::gather(samples, chunk, e);
        let c = b.m.sum();
        if c > 0.0 {
            sum += net.masked_mse(&b.x.view(), &b.t.view(), &b.m.view())? * c;
            count += c;
        }
    }
    Ok(if count > 0.0 { sum / count } else { 0.0 })
}

fn check_sample(s: &TrainingSample, e: usize) -> Result<(), MlError> {
    if s.features.len() != 2 * e {
        return Err(MlError::DimensionMismatch { expected: 2 * e, found: s.features.len() });
    }
    if s.targets.len() != e || s.mask.len() != e {
        return Err(MlError::DimensionMismatch { expected: e, found: s.targets.len().min(s.mask.len()) });
    }
    Ok(())
}

/// Trains a fresh network on `samples` (in step order). The validation set
/// is the last `val_fraction` of the samples; with too few samples for a
/// split the training set doubles as validation. Returns the network from
/// the epoch with the lowest validation loss.
pub fn train(
    samples: &[TrainingSample],
    num_experts: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome, MlError> {
    if samples.is_empty() {
        return Err(MlError::EmptyDataset);
    }
    for s in samples {
        check_sample(s, num_experts)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = EvictionNet::init(num_experts, cfg.hidden, &mut rng);
    let mut opt = AdamW::new(&net, cfg);

    let n_val = ((samples.len() as f64) * cfg.val_fraction).floor() as usize;
    let n_train = samples.len() - n_val;
    let mut train_idx: Vec<usize> = (0..n_train).collect();
    let val_idx: Vec<usize> = if n_val > 0 { (n_train..samples.len()).collect() } else { train_idx.clone() };

    let eval_batch = cfg.batch_size.max(256);
    let mut log = vec![EpochLog {
        epoch: 0,
        train_mse: evaluate(&net, samples, &train_idx, eval_batch)?,
        val_mse: evaluate(&net, samples, &val_idx, eval_batch)?,
    }];
    let mut best = (log[0].val_mse, 0usize, net.clone());
    let mut stale = 0;
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        train_idx.shuffle(&mut rng);
        for (bi, chunk) in train_idx.chunks(cfg.batch_size.max(1)).enumerate() {
            let b = Batch::gather(samples, chunk, num_experts);
            let (loss, grads) = net.loss_and_gradients(&b.x.view(), &b.t.view(), &b.m.view())?;
            if !loss.is_finite() {
                return Err(MlError::NonFiniteLoss { epoch, detail: format!("batch {bi}: loss = {loss}") });
            }
            opt.step(net.param_slices_mut(), grads.slices());
        }
        let train_mse = evaluate(&net, samples, &train_idx, eval_batch)?;
        let val_mse = evaluate(&net, samples, &val_idx, eval_batch)?;
        if !(train_mse.is_finite() && val_mse.is_finite()) {
            return Err(MlError::NonFiniteLoss { epoch, detail: format!("train = {train_mse}, val = {val_mse}") });
        }
        log.push(EpochLog { epoch, train_mse, val_mse });
        if val_mse < best.0 {
            best = (val_mse, epoch, net.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }
    let (_, best_epoch, net) = best;
    Ok(TrainOutcome { net, log, best_epoch, stopped_early })
}
