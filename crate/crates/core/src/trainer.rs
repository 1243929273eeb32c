//! Minibatch SGD with momentum, per-layer weight decay, a step learning-rate
//! schedule and a geometric ramp of the contrastive weight.
//!
//! Every random choice (batch composition, pair sampling, dropout masks) is
//! seeded from `(seed, epoch, step, sample)`, so an epoch's outcome depends
//! only on the state at its start. That is what makes resuming from a
//! checkpoint reproduce an uninterrupted run bit for bit.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;

use crate::exec::BatchExecutor;
use crate::layers::{LayerKind, Mode};
use crate::network::{Network, NetworkError, NetworkSpec};
use crate::objective::{combined_loss, sample_pairs, ObjectiveConfig, ObjectiveError, PairBatch};
use crate::rng::{derive_seed, rng_from};
use crate::tensor::{ShapeError, Tensor};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("non-finite value at epoch {epoch} step {step}, first produced by {layer}")]
    NonFinite {
        layer: String,
        epoch: usize,
        step: usize,
    },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(&'static str),
    #[error("training set is empty")]
    EmptyDataset,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSchedule {
    pub lr_initial: f64,
    pub lr_final: f64,
    pub alpha_initial: f64,
    pub alpha_final: f64,
    /// Epochs at which the learning rate drops tenfold and alpha moves one
    /// geometric step. Empty means three milestones at quarters of `epochs`.
    pub milestones: Vec<usize>,
    pub decay_conv: f64,
    pub decay_fc: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub margin: f64,
    pub positives_per_batch: usize,
    pub negatives_per_batch: usize,
    pub subjects_per_batch: usize,
}

impl Default for TrainingSchedule {
    fn default() -> Self {
        Self::with_batch_size(128)
    }
}

impl TrainingSchedule {
    /// Defaults with pair and subject counts derived from the batch size.
    pub fn with_batch_size(batch_size: usize) -> Self {
        Self {
            lr_initial: 1e-2,
            lr_final: 1e-5,
            alpha_initial: 3.2e-4,
            alpha_final: 6.4e-3,
            milestones: Vec::new(),
            decay_conv: 0.0,
            decay_fc: 5e-4,
            momentum: 0.9,
            batch_size,
            epochs: 40,
            seed: 0,
            margin: 1.0,
            positives_per_batch: batch_size / 4,
            negatives_per_batch: batch_size / 4,
            subjects_per_batch: (batch_size / 2).max(1),
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        use TrainError::InvalidSchedule as Bad;
        if !(self.lr_final > 0.0 && self.lr_final <= self.lr_initial) {
            return Err(Bad("need 0 < lr_final <= lr_initial"));
        }
        if !(self.alpha_initial >= 0.0 && self.alpha_initial <= self.alpha_final) {
            return Err(Bad("need 0 <= alpha_initial <= alpha_final"));
        }
        if self.alpha_initial == 0.0 && self.alpha_final > 0.0 {
            return Err(Bad("a geometric alpha ramp cannot start at zero"));
        }
        if !(self.decay_conv >= 0.0 && self.decay_fc >= 0.0) {
            return Err(Bad("weight decays must be nonnegative"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Bad("momentum must lie in [0, 1)"));
        }
        if self.batch_size == 0 || self.subjects_per_batch == 0 {
            return Err(Bad("batch size and subjects per batch must be positive"));
        }
        if !(self.margin > 0.0) {
            return Err(Bad("contrastive margin must be positive"));
        }
        if self.milestones.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Bad("milestones must be strictly increasing"));
        }
        Ok(())
    }

    pub fn effective_milestones(&self) -> Vec<usize> {
        if !self.milestones.is_empty() {
            return self.milestones.clone();
        }
        let mut m: Vec<usize> = (1..=3)
            .map(|k| libm::round((k * self.epochs) as f64 / 4.0) as usize)
            .filter(|&e| e >= 1)
            .collect();
        m.dedup();
        m
    }

    fn stage(&self, epoch: usize) -> (usize, usize) {
        let m = self.effective_milestones();
        (m.iter().filter(|&&e| e <= epoch).count(), m.len())
    }

    /// Learning rate for `epoch`: tenfold drop at each milestone, clamped at
    /// `lr_final`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let (stage, _) = self.stage(epoch);
        let mut lr = self.lr_initial;
        for _ in 0..stage {
            lr *= 0.1;
        }
        if lr <= self.lr_final * (1.0 + 1e-9) {
            self.lr_final
        } else {
            lr
        }
    }

    /// Contrastive weight for `epoch`, geometric between the endpoints with
    /// one step per milestone.
    pub fn alpha_at(&self, epoch: usize) -> f64 {
        let (stage, total) = self.stage(epoch);
        if stage == 0 || total == 0 {
            self.alpha_initial
        } else if stage >= total {
            self.alpha_final
        } else {
            let ratio = self.alpha_final / self.alpha_initial;
            self.alpha_initial * libm::pow(ratio, stage as f64 / total as f64)
        }
    }

    /// Weight decay applied to a layer: `decay_conv` for convolutions,
    /// `decay_fc` for fully connected layers.
    pub fn decay_for(&self, kind: &LayerKind) -> Option<f64> {
        match kind {
            LayerKind::Convolution { .. } => Some(self.decay_conv),
            LayerKind::FullyConnected { .. } => Some(self.decay_fc),
            _ => None,
        }
    }

    pub fn effective_decays(&self, spec: &NetworkSpec) -> Vec<(String, f64)> {
        spec.layers
            .iter()
            .filter_map(|l| self.decay_for(&l.kind).map(|d| (l.name.clone(), d)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    pub epoch: usize,
    pub step: usize,
    pub softmax: f64,
    pub contrastive: f64,
    pub combined: f64,
    pub lr: f64,
    pub alpha: f64,
}

/// Splits one epoch into batches. Each batch takes `subjects_per_batch`
/// identities from a shuffled cycle over subjects and fills its slots evenly
/// from their (shuffled, cycled) images, so any subject contributing two slots
/// contributes two different images whenever it has them. No image repeats
/// within a batch, so batches fall short of `batch_size` when the chosen
/// subjects hold too few images.
pub fn make_batches(
    labels: &[usize],
    batch_size: usize,
    subjects_per_batch: usize,
    seed: u64,
) -> Vec<Vec<usize>> {
    if labels.is_empty() || batch_size == 0 {
        return Vec::new();
    }
    let mut rng = rng_from(seed);
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    let mut members: Vec<Vec<usize>> = groups.into_values().collect();
    for m in &mut members {
        m.shuffle(&mut rng);
    }
    let mut order: Vec<usize> = (0..members.len()).collect();
    order.shuffle(&mut rng);
    let mut cursors = vec![0usize; members.len()];
    let mut subject_cursor = 0usize;

    let per_batch = subjects_per_batch.clamp(1, members.len()).min(batch_size);
    let n_batches = labels.len().div_ceil(batch_size);
    let mut batches = Vec::with_capacity(n_batches);
    for _ in 0..n_batches {
        let mut chosen = Vec::with_capacity(per_batch);
        while chosen.len() < per_batch {
            if subject_cursor == order.len() {
                order.shuffle(&mut rng);
                subject_cursor = 0;
            }
            let s = order[subject_cursor];
            subject_cursor += 1;
            if !chosen.contains(&s) {
                chosen.push(s);
            }
        }
        let base = batch_size / per_batch;
        let extra = batch_size % per_batch;
        let mut batch = Vec::with_capacity(batch_size);
        for (k, &s) in chosen.iter().enumerate() {
            // Never repeat an image inside one batch.
            let count = (base + usize::from(k < extra)).min(members[s].len());
            for _ in 0..count {
                batch.push(members[s][cursors[s] % members[s].len()]);
                cursors[s] += 1;
            }
        }
        batches.push(batch);
    }
    batches
}

/// Network plus optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub net: Network,
    /// Momentum buffers, one per layer (`None` for parameterless layers).
    pub velocity: Vec<Option<Tensor>>,
    pub epochs_done: usize,
}

impl TrainState {
    pub fn new(spec: &NetworkSpec, schedule: &TrainingSchedule) -> Result<Self, TrainError> {
        schedule.validate()?;
        let mut net = Network::init_weights(spec, schedule.seed)?;
        net.set_mode(Mode::Train);
        Ok(Self::from_network(net))
    }

    pub fn from_network(net: Network) -> Self {
        let velocity = net
            .states
            .iter()
            .map(|s| s.weights.as_ref().map(|w| Tensor::zeros(w.shape()).expect("valid shape")))
            .collect();
        Self {
            net,
            velocity,
            epochs_done: 0,
        }
    }
}

/// One SGD step: forward every sample, combined loss, backward, then per layer
/// `v <- momentum * v + lr * (grad + decay * w)` and `w <- w - v`.
pub fn sgd_step<E: BatchExecutor>(
    state: &mut TrainState,
    batch: &PairBatch<'_>,
    schedule: &TrainingSchedule,
    epoch: usize,
    step: usize,
    exec: &E,
) -> Result<LogRecord, TrainError> {
    batch.validate()?;
    let classes = state.net.spec.class_count;
    if let Some(&label) = batch.labels.iter().find(|&&l| l >= classes) {
        return Err(TrainError::LabelOutOfRange { label, classes });
    }
    let lr = schedule.lr_at(epoch);
    let alpha = schedule.alpha_at(epoch);
    let net = &state.net;
    let base = derive_seed(schedule.seed, &[epoch as u64, step as u64]);
    let traces = exec.map(batch.images.len(), |k| {
        net.trace(batch.images[k], Mode::Train, derive_seed(base, &[k as u64]))
    });
    let traces = traces.into_iter().collect::<Result<Vec<_>, _>>()?;
    if let Some(layer) = traces.iter().filter_map(|t| t.first_non_finite()).min() {
        return Err(TrainError::NonFinite {
            layer: net.layer_name(layer),
            epoch,
            step,
        });
    }

    let embeddings: Vec<&[f64]> = traces.iter().map(|t| t.embedding()).collect();
    let logits: Vec<&Tensor> = traces.iter().map(|t| t.logits()).collect();
    let config = ObjectiveConfig {
        alpha,
        margin: schedule.margin,
    };
    let loss = combined_loss(&embeddings, &logits, &batch.labels, &batch.pairs, &config)?;
    for (value, name) in [(loss.softmax, "softmax cost"), (loss.contrastive, "contrastive cost")] {
        if !value.is_finite() {
            return Err(TrainError::NonFinite {
                layer: name.into(),
                epoch,
                step,
            });
        }
    }

    let grads = exec.map(traces.len(), |k| {
        net.backward(&traces[k], Some(&loss.d_embeddings[k]), &loss.d_logits[k])
    });
    let mut total: Vec<Option<Tensor>> = vec![None; net.spec.layers.len()];
    for g in grads {
        for (acc, g) in total.iter_mut().zip(g?) {
            match (acc.as_mut(), g) {
                (Some(a), Some(g)) => a.add_assign(&g)?,
                (None, Some(g)) => *acc = Some(g),
                _ => {}
            }
        }
    }

    for (i, grad) in total.into_iter().enumerate() {
        let Some(grad) = grad else { continue };
        let decay = schedule
            .decay_for(&state.net.spec.layers[i].kind)
            .unwrap_or(0.0);
        let layer = &mut state.net.states[i];
        let w = layer.weights.as_mut().ok_or(ShapeError::MissingWeights)?;
        let v = state.velocity[i].as_mut().ok_or(ShapeError::MissingWeights)?;
        for ((wk, vk), gk) in w.data_mut().iter_mut().zip(v.data_mut()).zip(grad.data()) {
            *vk = schedule.momentum * *vk + lr * (gk + decay * *wk);
            *wk -= *vk;
        }
        if !w.all_finite() {
            return Err(TrainError::NonFinite {
                layer: state.net.layer_name(i),
                epoch,
                step,
            });
        }
        layer.grad = Some(grad);
    }
    Ok(LogRecord {
        epoch,
        step,
        softmax: loss.softmax,
        contrastive: loss.contrastive,
        combined: loss.total,
        lr,
        alpha,
    })
}

/// In-memory training set: images plus dense class indices.
#[derive(Debug, Clone, Copy)]
pub struct Dataset<'a> {
    pub images: &'a [Tensor],
    pub labels: &'a [usize],
}

/// Runs the next epoch (`state.epochs_done`) and advances the counter.
pub fn train_epoch<E: BatchExecutor>(
    state: &mut TrainState,
    data: Dataset<'_>,
    schedule: &TrainingSchedule,
    exec: &E,
) -> Result<Vec<LogRecord>, TrainError> {
    schedule.validate()?;
    if data.images.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if data.images.len() != data.labels.len() {
        return Err(ObjectiveError::LengthMismatch(data.images.len(), data.labels.len()).into());
    }
    let epoch = state.epochs_done;
    let batches = make_batches(
        data.labels,
        schedule.batch_size,
        schedule.subjects_per_batch,
        derive_seed(schedule.seed, &[epoch as u64, u64::MAX]),
    );
    let mut log = Vec::with_capacity(batches.len());
    for (step, idx) in batches.iter().enumerate() {
        let labels: Vec<usize> = idx.iter().map(|&i| data.labels[i]).collect();
        let pairs = sample_pairs(
            &labels,
            derive_seed(schedule.seed, &[epoch as u64, step as u64, u64::MAX - 1]),
            schedule.positives_per_batch,
            schedule.negatives_per_batch,
        );
        let batch = PairBatch {
            images: idx.iter().map(|&i| &data.images[i]).collect(),
            labels,
            pairs,
        };
        log.push(sgd_step(state, &batch, schedule, epoch, step, exec)?);
    }
    state.epochs_done += 1;
    Ok(log)
}
