//! Global feature alignment (adversarial training into an intermediate
//! space), local class alignment (center loss over a shared per-class
//! center bank), and the shared classifier trained on the aligned
//! embeddings of both domains.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{batch_iter, labeled_batches, shuffled_chunks, TimeSeriesDataset};
use crate::error::CoreError;
use crate::metrics::embed;
use crate::nets::{
    classifier_backward, classifier_forward, discriminator_backward, discriminator_forward,
    discriminator_forward_cached, encoder_backward, encoder_forward_train, NetParams, Role,
    FEATURE_DIM,
};
use crate::optim::{adam_step, OptimState};
use crate::pretrain::{cross_entropy, TrainHyperparams};
use crate::derive_seed;

/// Weight of the center-loss term in the encoder objective.
pub const LAMBDA_CENTER: f64 = 1.0;

/// Clamp applied to the log arguments of the literal objective, whose
/// `log(0.5 - d)` / `log(d - 0.5)` terms are otherwise undefined for half
/// of the discriminator's range.
const LITERAL_CLAMP: f64 = 1e-6;

const TAG_SRC_BATCH: u64 = 0x6164_7030;
const TAG_TGT_BATCH: u64 = 0x6164_7031;
const TAG_DROP_SRC: u64 = 0x6164_7032;
const TAG_DROP_TGT: u64 = 0x6164_7033;
const TAG_DISC_INIT: u64 = 0x6164_7034;
const TAG_SHARED_INIT: u64 = 0x7368_6331;
const TAG_SHARED_SRC: u64 = 0x7368_6332;
const TAG_SHARED_TGT: u64 = 0x7368_6333;
const TAG_PROBE_SRC: u64 = 0x7072_6230;
const TAG_PROBE_TGT: u64 = 0x7072_6231;

/// Which adversarial objective to optimize.
///
/// `SharedHalf` trains the discriminator with 0/1 domain targets and pulls
/// both encoders toward output 0.5, the stated intermediate-space intent.
/// `Literal` optimizes the printed equations directly, with the log
/// arguments clamped away from zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdvMode {
    SharedHalf,
    Literal,
}

impl AdvMode {
    pub fn name(self) -> &'static str {
        match self {
            AdvMode::SharedHalf => "shared-half",
            AdvMode::Literal => "literal",
        }
    }
}

fn check_probs(d: &[f64]) -> Result<(), CoreError> {
    if d.is_empty() {
        return Err(CoreError::EmptyInput("discriminator outputs"));
    }
    for &v in d {
        if !(v > 0.0 && v < 1.0) {
            return Err(CoreError::ProbabilityOutOfRange(v));
        }
    }
    Ok(())
}

/// Discriminator objective value for one source batch and one target batch
/// of outputs. See [`discriminator_loss_grad`] for the gradient.
pub fn discriminator_loss(d_src: &[f64], d_tgt: &[f64], mode: AdvMode) -> Result<f64, CoreError> {
    discriminator_loss_grad(d_src, d_tgt, mode).map(|(loss, _, _)| loss)
}

/// Returns `(loss, dL/dd_src, dL/dd_tgt)`.
///
/// Shared-half: per-domain mean binary cross-entropy with source target 0
/// and domain-target 1, `mean[-log(1-d_src)] + mean[-log d_tgt]`. Literal:
/// `-(mean[log(0.5-d_src)] + mean[log(d_tgt-0.5)])` with arguments clamped
/// to at least 1e-6; minimizing it maximizes the printed objective.
pub fn discriminator_loss_grad(
    d_src: &[f64],
    d_tgt: &[f64],
    mode: AdvMode,
) -> Result<(f64, Vec<f64>, Vec<f64>), CoreError> {
    check_probs(d_src)?;
    check_probs(d_tgt)?;
    let (bs, bt) = (d_src.len() as f64, d_tgt.len() as f64);
    let mut g_src = vec![0.0; d_src.len()];
    let mut g_tgt = vec![0.0; d_tgt.len()];
    let mut loss = 0.0;
    match mode {
        AdvMode::SharedHalf => {
            for (i, &d) in d_src.iter().enumerate() {
                loss += -libm::log(1.0 - d) / bs;
                g_src[i] = 1.0 / ((1.0 - d) * bs);
            }
            for (i, &d) in d_tgt.iter().enumerate() {
                loss += -libm::log(d) / bt;
                g_tgt[i] = -1.0 / (d * bt);
            }
        }
        AdvMode::Literal => {
            for (i, &d) in d_src.iter().enumerate() {
                let arg = 0.5 - d;
                if arg > LITERAL_CLAMP {
                    loss += -libm::log(arg) / bs;
                    g_src[i] = 1.0 / (arg * bs);
                } else {
                    loss += -libm::log(LITERAL_CLAMP) / bs;
                }
            }
            for (i, &d) in d_tgt.iter().enumerate() {
                let arg = d - 0.5;
                if arg > LITERAL_CLAMP {
                    loss += -libm::log(arg) / bt;
                    g_tgt[i] = -1.0 / (arg * bt);
                } else {
                    loss += -libm::log(LITERAL_CLAMP) / bt;
                }
            }
        }
    }
    Ok((loss, g_src, g_tgt))
}

/// Encoder-side adversarial objective for one domain's outputs.
pub fn encoder_adv_loss(d: &[f64], mode: AdvMode) -> Result<f64, CoreError> {
    encoder_adv_loss_grad(d, mode).map(|(loss, _)| loss)
}

/// Returns `(loss, dL/dd)`.
///
/// Shared-half: `mean[-(0.5 log d + 0.5 log(1-d))]`, minimized exactly at
/// d = 0.5. Literal: `mean[-log d]`, the printed encoder objective for both
/// domains.
pub fn encoder_adv_loss_grad(d: &[f64], mode: AdvMode) -> Result<(f64, Vec<f64>), CoreError> {
    check_probs(d)?;
    let b = d.len() as f64;
    let mut grad = vec![0.0; d.len()];
    let mut loss = 0.0;
    match mode {
        AdvMode::SharedHalf => {
            for (i, &v) in d.iter().enumerate() {
                loss += -(0.5 * libm::log(v) + 0.5 * libm::log(1.0 - v)) / b;
                grad[i] = (-0.5 / v + 0.5 / (1.0 - v)) / b;
            }
        }
        AdvMode::Literal => {
            for (i, &v) in d.iter().enumerate() {
                loss += -libm::log(v) / b;
                grad[i] = -1.0 / (v * b);
            }
        }
    }
    Ok((loss, grad))
}

// ---------------------------------------------------------------------------
// Center loss
// ---------------------------------------------------------------------------

/// Per-class feature centers shared by both domains.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterBank {
    centers: Vec<f64>,
    num_classes: usize,
    dim: usize,
}

impl CenterBank {
    pub fn zeros(num_classes: usize, dim: usize) -> Self {
        Self { centers: vec![0.0; num_classes * dim], num_classes, dim }
    }

    /// Builds the bank from per-class means of the given features; classes
    /// absent from `labels` keep a zero center.
    pub fn from_class_means(features: &[f64], labels: &[i32], num_classes: usize, dim: usize) -> Self {
        let mut bank = Self::zeros(num_classes, dim);
        let mut counts = vec![0usize; num_classes];
        for (i, &y) in labels.iter().enumerate() {
            let c = y as usize;
            counts[c] += 1;
            for t in 0..dim {
                bank.centers[c * dim + t] += features[i * dim + t];
            }
        }
        for c in 0..num_classes {
            if counts[c] > 0 {
                for t in 0..dim {
                    bank.centers[c * dim + t] /= counts[c] as f64;
                }
            }
        }
        bank
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn center(&self, class: usize) -> &[f64] {
        &self.centers[class * self.dim..(class + 1) * self.dim]
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    fn check_batch(&self, features: &[f64], labels: &[i32]) -> Result<(), CoreError> {
        if labels.is_empty() {
            return Err(CoreError::EmptyInput("center loss batch"));
        }
        if features.len() != labels.len() * self.dim {
            return Err(CoreError::ShapeMismatch {
                context: "center loss features",
                expected: labels.len() * self.dim,
                got: features.len(),
            });
        }
        for &y in labels {
            if y < 0 || y as usize >= self.num_classes {
                return Err(CoreError::InvalidDataset(format!(
                    "label {y} outside [0, {})",
                    self.num_classes
                )));
            }
        }
        Ok(())
    }
}

/// Batch-sum center loss: `0.5 * sum_i ||f_i - c_{y_i}||^2`.
pub fn center_loss(features: &[f64], labels: &[i32], bank: &CenterBank) -> Result<f64, CoreError> {
    bank.check_batch(features, labels)?;
    let dim = bank.dim;
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let c = bank.center(y as usize);
        for t in 0..dim {
            let diff = features[i * dim + t] - c[t];
            loss += 0.5 * diff * diff;
        }
    }
    Ok(loss)
}

/// Gradient of [`center_loss`] on the features: `f_i - c_{y_i}` per row.
pub fn center_grad(features: &[f64], labels: &[i32], bank: &CenterBank) -> Result<Vec<f64>, CoreError> {
    bank.check_batch(features, labels)?;
    let dim = bank.dim;
    let mut grad = vec![0.0; features.len()];
    for (i, &y) in labels.iter().enumerate() {
        let c = bank.center(y as usize);
        for t in 0..dim {
            grad[i * dim + t] = features[i * dim + t] - c[t];
        }
    }
    Ok(grad)
}

/// Damped center update: for each class `j` in the batch,
/// `delta_j = sum_{y_i=j} (c_j - f_i) / (1 + n_j)` and
/// `c_j <- c_j - lr * delta_j`. Classes absent from the batch are untouched.
pub fn center_update(
    features: &[f64],
    labels: &[i32],
    bank: &mut CenterBank,
    lr: f64,
) -> Result<(), CoreError> {
    bank.check_batch(features, labels)?;
    let dim = bank.dim;
    let mut delta = vec![0.0; bank.centers.len()];
    let mut counts = vec![0usize; bank.num_classes];
    for (i, &y) in labels.iter().enumerate() {
        let c = y as usize;
        counts[c] += 1;
        for t in 0..dim {
            delta[c * dim + t] += bank.centers[c * dim + t] - features[i * dim + t];
        }
    }
    for c in 0..bank.num_classes {
        if counts[c] == 0 {
            continue;
        }
        let damp = 1.0 / (1.0 + counts[c] as f64);
        for t in 0..dim {
            bank.centers[c * dim + t] -= lr * delta[c * dim + t] * damp;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Adaptation loop
// ---------------------------------------------------------------------------

/// Loss and discriminator-output summary of one adaptation epoch (means
/// over the epoch's batch pairs).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdvBatchLosses {
    pub loss_disc: f64,
    pub loss_enc_src: f64,
    pub loss_enc_tgt: f64,
    pub loss_center: f64,
    pub mean_d_src: f64,
    pub mean_d_tgt: f64,
}

/// Result of [`adapt`]: the shared center bank and the per-epoch metric
/// stream.
#[derive(Debug, Clone)]
pub struct AdaptOutcome {
    pub center_bank: CenterBank,
    pub epochs: Vec<AdvBatchLosses>,
}

/// Initializes the center bank from per-class means of the source encoder's
/// eval-mode features over the source training set.
pub fn init_center_bank(
    source_encoder: &NetParams,
    src_train: &TimeSeriesDataset,
) -> Result<CenterBank, CoreError> {
    let features = embed(source_encoder, src_train, None)?;
    let labels = src_train.full_labels()?;
    Ok(CenterBank::from_class_means(&features, labels, src_train.num_classes(), FEATURE_DIM))
}

/// Adversarial adaptation of both encoders against a fresh discriminator,
/// with center-loss class alignment when `hp.lca_enabled`.
///
/// Per batch pair: (1) a discriminator step on detached features with the
/// encoders frozen; (2) an encoder step against the frozen discriminator,
/// adding the center-loss gradient to the feature gradient; (3) a damped
/// center update from the same features. Target batches carry pseudo
/// labels; abandoned samples must already be excluded from `tgt_indices`.
#[allow(clippy::too_many_arguments)]
pub fn adapt(
    source_encoder: &mut NetParams,
    target_encoder: &mut NetParams,
    discriminator: &mut NetParams,
    src_train: &TimeSeriesDataset,
    tgt_train: &TimeSeriesDataset,
    tgt_indices: &[usize],
    tgt_labels: &[i32],
    hp: &TrainHyperparams,
    seed: u64,
) -> Result<AdaptOutcome, CoreError> {
    if tgt_indices.is_empty() {
        return Err(CoreError::EmptyLabeledSet);
    }
    if discriminator.role() != Role::Discriminator {
        return Err(CoreError::RoleMismatch {
            expected: "discriminator",
            got: discriminator.role().name(),
        });
    }
    let mode = hp.adv_mode;
    let mut bank = init_center_bank(source_encoder, src_train)?;
    let initial_bank = bank.clone();

    let mut opt_src = OptimState::new(source_encoder, hp.lr_src_enc, hp.betas);
    let mut opt_tgt = OptimState::new(target_encoder, hp.lr_tgt_enc, hp.betas);
    let mut opt_disc = OptimState::new(discriminator, hp.lr_disc, hp.betas);
    let mut rng_src = ChaCha8Rng::seed_from_u64(derive_seed(seed, TAG_DROP_SRC));
    let mut rng_tgt = ChaCha8Rng::seed_from_u64(derive_seed(seed, TAG_DROP_TGT));

    let (m_src, n_src) = (src_train.channels(), src_train.seq_len());
    let (m_tgt, n_tgt) = (tgt_train.channels(), tgt_train.seq_len());

    let mut epochs = Vec::with_capacity(hp.epochs_adapt);
    for epoch in 0..hp.epochs_adapt {
        let src_batches =
            batch_iter(src_train, None, hp.batch_size, derive_seed(seed, TAG_SRC_BATCH), epoch as u64)?;
        let tgt_batches = labeled_batches(
            tgt_train,
            tgt_indices,
            tgt_labels,
            hp.batch_size,
            derive_seed(seed, TAG_TGT_BATCH),
            epoch as u64,
        )?;
        let pairs = src_batches.len().min(tgt_batches.len());
        let mut sums = AdvBatchLosses {
            loss_disc: 0.0,
            loss_enc_src: 0.0,
            loss_enc_tgt: 0.0,
            loss_center: 0.0,
            mean_d_src: 0.0,
            mean_d_tgt: 0.0,
        };
        for (sb, tb) in src_batches.iter().zip(tgt_batches.iter()).take(pairs) {
            let (bs, bt) = (sb.len(), tb.len());

            // Discriminator step; encoder outputs are detached.
            let (fs, _) =
                encoder_forward_train(source_encoder, &sb.samples, bs, m_src, n_src, &mut rng_src)?;
            let (ft, _) =
                encoder_forward_train(target_encoder, &tb.samples, bt, m_tgt, n_tgt, &mut rng_tgt)?;
            let (d_src, cache_ds) = discriminator_forward_cached(discriminator, &fs, bs)?;
            let (d_tgt, cache_dt) = discriminator_forward_cached(discriminator, &ft, bt)?;
            let (loss_disc, g_ds, g_dt) = discriminator_loss_grad(&d_src, &d_tgt, mode)?;
            if !loss_disc.is_finite() {
                return Err(CoreError::NonFiniteLoss {
                    context: format!("discriminator step, epoch {epoch}, mode {}", mode.name()),
                });
            }
            let (grads_s, _) = discriminator_backward(discriminator, &cache_ds, &g_ds);
            let (grads_t, _) = discriminator_backward(discriminator, &cache_dt, &g_dt);
            let mut disc_grads = grads_s;
            for (a, b) in disc_grads.arrays.iter_mut().zip(&grads_t.arrays) {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
            }
            adam_step(discriminator, &disc_grads, &mut opt_disc)?;
            sums.mean_d_src += d_src.iter().sum::<f64>() / bs as f64;
            sums.mean_d_tgt += d_tgt.iter().sum::<f64>() / bt as f64;
            sums.loss_disc += loss_disc;

            // Encoder step against the frozen, just-updated discriminator.
            let (fs, cache_es) =
                encoder_forward_train(source_encoder, &sb.samples, bs, m_src, n_src, &mut rng_src)?;
            let (ft, cache_et) =
                encoder_forward_train(target_encoder, &tb.samples, bt, m_tgt, n_tgt, &mut rng_tgt)?;
            let (d_src, cache_ds) = discriminator_forward_cached(discriminator, &fs, bs)?;
            let (d_tgt, cache_dt) = discriminator_forward_cached(discriminator, &ft, bt)?;
            let (loss_es, g_s) = encoder_adv_loss_grad(&d_src, mode)?;
            let (loss_et, g_t) = encoder_adv_loss_grad(&d_tgt, mode)?;
            let (_, mut dfeat_s) = discriminator_backward(discriminator, &cache_ds, &g_s);
            let (_, mut dfeat_t) = discriminator_backward(discriminator, &cache_dt, &g_t);

            let mut loss_center = 0.0;
            if hp.lca_enabled {
                loss_center += center_loss(&fs, &sb.labels, &bank)?;
                loss_center += center_loss(&ft, &tb.labels, &bank)?;
                let cg_s = center_grad(&fs, &sb.labels, &bank)?;
                let cg_t = center_grad(&ft, &tb.labels, &bank)?;
                for (d, g) in dfeat_s.iter_mut().zip(&cg_s) {
                    *d += LAMBDA_CENTER * g;
                }
                for (d, g) in dfeat_t.iter_mut().zip(&cg_t) {
                    *d += LAMBDA_CENTER * g;
                }
            }
            if !(loss_es + loss_et + loss_center).is_finite() {
                return Err(CoreError::NonFiniteLoss {
                    context: format!("encoder step, epoch {epoch}, mode {}", mode.name()),
                });
            }
            let enc_grads_s = encoder_backward(source_encoder, &cache_es, &dfeat_s);
            let enc_grads_t = encoder_backward(target_encoder, &cache_et, &dfeat_t);
            adam_step(source_encoder, &enc_grads_s, &mut opt_src)?;
            adam_step(target_encoder, &enc_grads_t, &mut opt_tgt)?;

            if hp.lca_enabled {
                center_update(&fs, &sb.labels, &mut bank, hp.lr_center)?;
                center_update(&ft, &tb.labels, &mut bank, hp.lr_center)?;
            }
            sums.loss_enc_src += loss_es;
            sums.loss_enc_tgt += loss_et;
            sums.loss_center += loss_center;
        }
        let inv = 1.0 / pairs as f64;
        epochs.push(AdvBatchLosses {
            loss_disc: sums.loss_disc * inv,
            loss_enc_src: sums.loss_enc_src * inv,
            loss_enc_tgt: sums.loss_enc_tgt * inv,
            loss_center: sums.loss_center * inv,
            mean_d_src: sums.mean_d_src * inv,
            mean_d_tgt: sums.mean_d_tgt * inv,
        });
    }

    if !hp.lca_enabled {
        debug_assert_eq!(bank, initial_bank);
    }
    Ok(AdaptOutcome { center_bank: bank, epochs })
}

/// Creates the fresh discriminator used by [`adapt`]; exposed so callers can
/// keep its initial state for before/after comparisons.
pub fn fresh_discriminator(seed: u64) -> NetParams {
    NetParams::discriminator(derive_seed(seed, TAG_DISC_INIT))
}

/// Trains a shared classifier on frozen eval-mode embeddings of both
/// domains (source with true labels, target with pseudo labels) by the
/// summed two-domain cross-entropy.
pub fn train_shared_classifier(
    source_encoder: &NetParams,
    target_encoder: &NetParams,
    src_train: &TimeSeriesDataset,
    tgt_train: &TimeSeriesDataset,
    tgt_indices: &[usize],
    tgt_labels: &[i32],
    hp: &TrainHyperparams,
    seed: u64,
) -> Result<NetParams, CoreError> {
    if tgt_indices.is_empty() {
        return Err(CoreError::EmptyLabeledSet);
    }
    let k = src_train.num_classes();
    let src_labels = src_train.full_labels()?;

    // Encoders are frozen, so embeddings are computed once.
    let f_src = embed(source_encoder, src_train, None)?;
    let f_tgt = embed(target_encoder, tgt_train, Some(tgt_indices))?;

    let mut classifier = NetParams::classifier(k, derive_seed(seed, TAG_SHARED_INIT))?;
    let mut opt = OptimState::new(&classifier, hp.lr_clf, hp.betas);

    let gather_rows = |all: &[f64], rows: &[usize]| -> Vec<f64> {
        let mut out = Vec::with_capacity(rows.len() * FEATURE_DIM);
        for &r in rows {
            out.extend_from_slice(&all[r * FEATURE_DIM..(r + 1) * FEATURE_DIM]);
        }
        out
    };

    for epoch in 0..hp.epochs_pretrain {
        let src_chunks = shuffled_chunks(
            src_train.len(),
            hp.batch_size,
            derive_seed(seed, TAG_SHARED_SRC),
            epoch as u64,
        )?;
        let tgt_chunks = shuffled_chunks(
            tgt_indices.len(),
            hp.batch_size,
            derive_seed(seed, TAG_SHARED_TGT),
            epoch as u64,
        )?;
        let pairs = src_chunks.len().min(tgt_chunks.len());
        for (sc, tc) in src_chunks.iter().zip(tgt_chunks.iter()).take(pairs) {
            let fs = gather_rows(&f_src, sc);
            let ft = gather_rows(&f_tgt, tc);
            let ys: Vec<i32> = sc.iter().map(|&r| src_labels[r]).collect();
            let yt: Vec<i32> = tc.iter().map(|&r| tgt_labels[r]).collect();

            let (_, probs_s) = classifier_forward(&classifier, &fs, sc.len())?;
            let (_, probs_t) = classifier_forward(&classifier, &ft, tc.len())?;
            let (loss_s, dlogits_s) = cross_entropy(&probs_s, &ys, k)?;
            let (loss_t, dlogits_t) = cross_entropy(&probs_t, &yt, k)?;
            if !(loss_s + loss_t).is_finite() {
                return Err(CoreError::NonFiniteLoss {
                    context: format!("shared classifier, epoch {epoch}"),
                });
            }
            let (grads_s, _) = classifier_backward(&classifier, &fs, &dlogits_s, sc.len());
            let (grads_t, _) = classifier_backward(&classifier, &ft, &dlogits_t, tc.len());
            let mut grads = grads_s;
            for (a, b) in grads.arrays.iter_mut().zip(&grads_t.arrays) {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
            }
            adam_step(&mut classifier, &grads, &mut opt)?;
        }
    }
    Ok(classifier)
}

/// Trains a fresh discriminator (0/1 targets) on frozen feature sets; used
/// to measure how separable the two domains are at a given point. Returns
/// the trained probe.
pub fn discriminator_probe(
    features_src: &[f64],
    features_tgt: &[f64],
    epochs: usize,
    batch_size: usize,
    lr: f64,
    betas: (f64, f64),
    seed: u64,
) -> Result<NetParams, CoreError> {
    let p_src = features_src.len() / FEATURE_DIM;
    let p_tgt = features_tgt.len() / FEATURE_DIM;
    if p_src == 0 || p_tgt == 0 {
        return Err(CoreError::EmptyInput("discriminator probe features"));
    }
    let mut disc = NetParams::discriminator(derive_seed(seed, TAG_DISC_INIT));
    let mut opt = OptimState::new(&disc, lr, betas);
    let gather = |all: &[f64], rows: &[usize]| -> Vec<f64> {
        let mut out = Vec::with_capacity(rows.len() * FEATURE_DIM);
        for &r in rows {
            out.extend_from_slice(&all[r * FEATURE_DIM..(r + 1) * FEATURE_DIM]);
        }
        out
    };
    for epoch in 0..epochs {
        let src_chunks =
            shuffled_chunks(p_src, batch_size, derive_seed(seed, TAG_PROBE_SRC), epoch as u64)?;
        let tgt_chunks =
            shuffled_chunks(p_tgt, batch_size, derive_seed(seed, TAG_PROBE_TGT), epoch as u64)?;
        let pairs = src_chunks.len().min(tgt_chunks.len());
        for (sc, tc) in src_chunks.iter().zip(tgt_chunks.iter()).take(pairs) {
            let fs = gather(features_src, sc);
            let ft = gather(features_tgt, tc);
            let (d_src, cache_s) = discriminator_forward_cached(&disc, &fs, sc.len())?;
            let (d_tgt, cache_t) = discriminator_forward_cached(&disc, &ft, tc.len())?;
            let (_, g_s, g_t) = discriminator_loss_grad(&d_src, &d_tgt, AdvMode::SharedHalf)?;
            let (grads_s, _) = discriminator_backward(&disc, &cache_s, &g_s);
            let (grads_t, _) = discriminator_backward(&disc, &cache_t, &g_t);
            let mut grads = grads_s;
            for (a, b) in grads.arrays.iter_mut().zip(&grads_t.arrays) {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
            }
            adam_step(&mut disc, &grads, &mut opt)?;
        }
    }
    Ok(disc)
}

/// Mean discriminator output over a feature set.
pub fn mean_discriminator_output(
    discriminator: &NetParams,
    features: &[f64],
) -> Result<f64, CoreError> {
    let p = features.len() / FEATURE_DIM;
    if p == 0 {
        return Err(CoreError::EmptyInput("mean discriminator output"));
    }
    let d = discriminator_forward(discriminator, features, p)?;
    Ok(d.iter().sum::<f64>() / p as f64)
}
