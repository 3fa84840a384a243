//! Supervised source pre-training and labeled-target fine-tuning, plus the
//! hyperparameter block shared by every training stage.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::align::AdvMode;
use crate::dataset::{batch_iter, labeled_batches, TimeSeriesDataset};
use crate::error::CoreError;
use crate::nets::{
    classifier_backward, classifier_forward, encoder_backward, encoder_forward_train,
    EncoderConfig, NetParams,
};
use crate::optim::{adam_step, OptimState};
use crate::derive_seed;

const TAG_INIT_ENC: u64 = 0x7072_6531;
const TAG_INIT_CLF: u64 = 0x7072_6532;
const TAG_BATCH: u64 = 0x7072_6533;
const TAG_DROPOUT: u64 = 0x7072_6534;

/// Training-stage hyperparameters. The defaults are the reference protocol:
/// 40 pre-training epochs, 3 pseudo-labeling iterations, 50 adaptation
/// epochs, confidence threshold 0.7, Adam betas (0.5, 0.9), and learning
/// rates 1e-4 / 5e-5 / 1e-3 / 1e-3 / 1e-3 for the source encoder, target
/// encoder, discriminator, classifiers, and center optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainHyperparams {
    pub epochs_pretrain: usize,
    pub epochs_am: usize,
    pub epochs_adapt: usize,
    pub threshold: f64,
    pub lr_src_enc: f64,
    pub lr_tgt_enc: f64,
    pub lr_disc: f64,
    pub lr_clf: f64,
    pub lr_center: f64,
    pub betas: (f64, f64),
    pub batch_size: usize,
    pub adv_mode: AdvMode,
    pub lca_enabled: bool,
}

impl Default for TrainHyperparams {
    fn default() -> Self {
        Self {
            epochs_pretrain: 40,
            epochs_am: 3,
            epochs_adapt: 50,
            threshold: 0.7,
            lr_src_enc: 1e-4,
            lr_tgt_enc: 5e-5,
            lr_disc: 1e-3,
            lr_clf: 1e-3,
            lr_center: 1e-3,
            betas: (0.5, 0.9),
            batch_size: 32,
            adv_mode: AdvMode::SharedHalf,
            lca_enabled: true,
        }
    }
}

impl TrainHyperparams {
    pub fn validate(&self, num_classes: usize) -> Result<(), CoreError> {
        let lrs =
            [self.lr_src_enc, self.lr_tgt_enc, self.lr_disc, self.lr_clf, self.lr_center];
        if lrs.iter().any(|&lr| !(lr > 0.0)) {
            return Err(CoreError::InvalidDataset(format!("learning rates must be > 0")));
        }
        let floor = 1.0 / num_classes as f64;
        if !(self.threshold > floor && self.threshold < 1.0) {
            return Err(CoreError::InvalidDataset(format!(
                "threshold {} outside (1/K, 1) = ({floor}, 1)",
                self.threshold
            )));
        }
        if self.epochs_pretrain == 0 || self.epochs_am == 0 || self.epochs_adapt == 0 {
            return Err(CoreError::InvalidDataset(format!("epoch counts must be >= 1")));
        }
        if self.batch_size == 0 {
            return Err(CoreError::InvalidDataset(format!("batch size must be >= 1")));
        }
        Ok(())
    }
}

/// Mean loss of one training epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub loss: f64,
}

/// Mean cross-entropy of softmax `probs` against integer labels, and the
/// gradient on the logits, `(p - onehot) / batch`.
pub fn cross_entropy(
    probs: &[f64],
    labels: &[i32],
    k: usize,
) -> Result<(f64, Vec<f64>), CoreError> {
    let b = labels.len();
    if b == 0 {
        return Err(CoreError::EmptyInput("cross entropy over empty batch"));
    }
    if probs.len() != b * k {
        return Err(CoreError::ShapeMismatch {
            context: "cross entropy probabilities",
            expected: b * k,
            got: probs.len(),
        });
    }
    let mut loss = 0.0;
    let mut dlogits = vec![0.0; probs.len()];
    let inv_b = 1.0 / b as f64;
    for (bi, &y) in labels.iter().enumerate() {
        if y < 0 || y as usize >= k {
            return Err(CoreError::InvalidDataset(format!("label {y} outside [0, {k})")));
        }
        let row = &probs[bi * k..][..k];
        loss -= libm::log(row[y as usize].max(1e-300)) * inv_b;
        for c in 0..k {
            let target = if c == y as usize { 1.0 } else { 0.0 };
            dlogits[bi * k + c] = (row[c] - target) * inv_b;
        }
    }
    Ok((loss, dlogits))
}

/// Trains a fresh source encoder and classifier by cross-entropy for
/// `epochs_pretrain` epochs. Returns the models and the per-epoch loss
/// history. Deterministic in `seed`.
pub fn pretrain_source(
    src_train: &TimeSeriesDataset,
    hp: &TrainHyperparams,
    seed: u64,
) -> Result<(NetParams, NetParams, Vec<EpochLoss>), CoreError> {
    let k = src_train.num_classes();
    hp.validate(k)?;
    src_train.full_labels()?;

    let cfg = EncoderConfig::for_channels(src_train.channels());
    let mut encoder = NetParams::encoder(cfg, derive_seed(seed, TAG_INIT_ENC))?;
    let mut classifier = NetParams::classifier(k, derive_seed(seed, TAG_INIT_CLF))?;
    let mut opt_enc = OptimState::new(&encoder, hp.lr_src_enc, hp.betas);
    let mut opt_clf = OptimState::new(&classifier, hp.lr_clf, hp.betas);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, TAG_DROPOUT));

    let mut history = Vec::with_capacity(hp.epochs_pretrain);
    for epoch in 0..hp.epochs_pretrain {
        let batches =
            batch_iter(src_train, None, hp.batch_size, derive_seed(seed, TAG_BATCH), epoch as u64)?;
        let mut loss_sum = 0.0;
        let mut count = 0usize;
        for batch in &batches {
            let b = batch.len();
            let (features, cache) = encoder_forward_train(
                &mut encoder,
                &batch.samples,
                b,
                src_train.channels(),
                src_train.seq_len(),
                &mut dropout_rng,
            )?;
            let (_, probs) = classifier_forward(&classifier, &features, b)?;
            let (loss, dlogits) = cross_entropy(&probs, &batch.labels, k)?;
            if !loss.is_finite() {
                return Err(CoreError::NonFiniteLoss { context: format!("pretrain epoch {epoch}") });
            }
            let (clf_grads, dfeat) = classifier_backward(&classifier, &features, &dlogits, b);
            let enc_grads = encoder_backward(&encoder, &cache, &dfeat);
            adam_step(&mut encoder, &enc_grads, &mut opt_enc)?;
            adam_step(&mut classifier, &clf_grads, &mut opt_clf)?;
            loss_sum += loss * b as f64;
            count += b;
        }
        history.push(EpochLoss { epoch, loss: loss_sum / count as f64 });
    }
    Ok((encoder, classifier, history))
}

/// Fine-tunes the target encoder and the classifier on the labeled target
/// subset for `steps` full passes (Adam state fresh per call). `labels`
/// override whatever the dataset stores, which is how pseudo-labels enter.
/// Never touches samples outside `indices`.
pub fn finetune_target(
    encoder: &mut NetParams,
    classifier: &mut NetParams,
    target: &TimeSeriesDataset,
    indices: &[usize],
    labels: &[i32],
    hp: &TrainHyperparams,
    steps: usize,
    seed: u64,
) -> Result<Vec<EpochLoss>, CoreError> {
    if indices.is_empty() {
        return Err(CoreError::EmptyLabeledSet);
    }
    let k = classifier
        .num_classes()
        .ok_or(CoreError::RoleMismatch { expected: "classifier", got: classifier.role().name() })?;
    let mut opt_enc = OptimState::new(encoder, hp.lr_tgt_enc, hp.betas);
    let mut opt_clf = OptimState::new(classifier, hp.lr_clf, hp.betas);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, TAG_DROPOUT));

    let mut history = Vec::with_capacity(steps);
    for step in 0..steps {
        let batches = labeled_batches(
            target,
            indices,
            labels,
            hp.batch_size,
            derive_seed(seed, TAG_BATCH),
            step as u64,
        )?;
        let mut loss_sum = 0.0;
        let mut count = 0usize;
        for batch in &batches {
            let b = batch.len();
            let (features, cache) = encoder_forward_train(
                encoder,
                &batch.samples,
                b,
                target.channels(),
                target.seq_len(),
                &mut dropout_rng,
            )?;
            let (_, probs) = classifier_forward(classifier, &features, b)?;
            let (loss, dlogits) = cross_entropy(&probs, &batch.labels, k)?;
            if !loss.is_finite() {
                return Err(CoreError::NonFiniteLoss { context: format!("fine-tune step {step}") });
            }
            let (clf_grads, dfeat) = classifier_backward(classifier, &features, &dlogits, b);
            let enc_grads = encoder_backward(encoder, &cache, &dfeat);
            adam_step(encoder, &enc_grads, &mut opt_enc)?;
            adam_step(classifier, &clf_grads, &mut opt_clf)?;
            loss_sum += loss * b as f64;
            count += b;
        }
        history.push(EpochLoss { epoch: step, loss: loss_sum / count as f64 });
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{make_synthetic_pair, SynthSpec};
    use crate::metrics::predict;

    fn quick_hp() -> TrainHyperparams {
        TrainHyperparams { epochs_pretrain: 15, ..TrainHyperparams::default() }
    }

    fn small_pair() -> (TimeSeriesDataset, TimeSeriesDataset) {
        make_synthetic_pair(&SynthSpec {
            num_classes: 3,
            samples_per_class: 20,
            channels: 2,
            seq_len: 16,
            target_amp_scale: 1.0,
            target_phase_offset: 0.0,
            noise_std: 0.0,
            seed: 5,
        })
        .unwrap()
    }

    #[test]
    fn cross_entropy_matches_log_lookup() {
        // Independent oracle: direct -log p[y] averaging on random rows.
        let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(3);
        for _ in 0..50 {
            let (b, k) = (4, 5);
            let logits: Vec<f64> =
                (0..b * k).map(|_| rand::Rng::gen::<f64>(&mut rng) * 6.0 - 3.0).collect();
            let probs = crate::layers::softmax_rows(&logits, b, k);
            let labels: Vec<i32> =
                (0..b).map(|_| rand::Rng::gen_range(&mut rng, 0..k as i32)).collect();
            let (loss, _) = cross_entropy(&probs, &labels, k).unwrap();
            let oracle: f64 = labels
                .iter()
                .enumerate()
                .map(|(i, &y)| -libm::log(probs[i * k + y as usize]))
                .sum::<f64>()
                / b as f64;
            assert!((loss - oracle).abs() < 1e-6);
        }
    }

    #[test]
    fn pretrain_learns_separable_source() {
        let (src, _) = small_pair();
        let hp = quick_hp();
        let (enc, clf, history) = pretrain_source(&src, &hp, 11).unwrap();
        assert_eq!(history.len(), hp.epochs_pretrain);
        assert!(history.last().unwrap().loss < history[0].loss);

        let preds = predict(&enc, &clf, &src, None).unwrap();
        let y = src.labels().unwrap();
        let correct = preds.iter().zip(y).filter(|(a, b)| a == b).count();
        assert!(correct as f64 / y.len() as f64 >= 0.99, "accuracy {correct}/{}", y.len());
    }

    #[test]
    fn pretrain_is_deterministic() {
        let (src, _) = small_pair();
        let hp = TrainHyperparams { epochs_pretrain: 3, ..TrainHyperparams::default() };
        let (enc_a, clf_a, hist_a) = pretrain_source(&src, &hp, 42).unwrap();
        let (enc_b, clf_b, hist_b) = pretrain_source(&src, &hp, 42).unwrap();
        assert_eq!(enc_a, enc_b);
        assert_eq!(clf_a, clf_b);
        assert_eq!(hist_a, hist_b);
    }

    #[test]
    fn finetune_zero_steps_is_identity() {
        let (src, tgt) = small_pair();
        let hp = TrainHyperparams { epochs_pretrain: 2, ..TrainHyperparams::default() };
        let (enc, clf, _) = pretrain_source(&src, &hp, 1).unwrap();
        let mut enc_t = enc.clone();
        let mut clf_t = clf.clone();
        let indices: Vec<usize> = (0..tgt.len()).collect();
        let labels = tgt.labels().unwrap().to_vec();
        finetune_target(&mut enc_t, &mut clf_t, &tgt, &indices, &labels, &hp, 0, 9).unwrap();
        assert_eq!(enc_t, enc);
        assert_eq!(clf_t, clf);
    }

    #[test]
    fn finetune_reduces_loss_on_full_target() {
        let (src, tgt) = small_pair();
        let hp = TrainHyperparams { epochs_pretrain: 4, ..TrainHyperparams::default() };
        let (enc, clf, _) = pretrain_source(&src, &hp, 1).unwrap();
        let mut enc_t = enc.clone();
        let mut clf_t = clf.clone();
        let indices: Vec<usize> = (0..tgt.len()).collect();
        let labels = tgt.labels().unwrap().to_vec();
        let hist =
            finetune_target(&mut enc_t, &mut clf_t, &tgt, &indices, &labels, &hp, 5, 9).unwrap();
        assert!(hist.last().unwrap().loss <= hist[0].loss);
    }

    #[test]
    fn finetune_rejects_empty_labeled_set() {
        let (src, tgt) = small_pair();
        let hp = TrainHyperparams { epochs_pretrain: 2, ..TrainHyperparams::default() };
        let (mut enc, mut clf, _) = pretrain_source(&src, &hp, 1).unwrap();
        let err = finetune_target(&mut enc, &mut clf, &tgt, &[], &[], &hp, 1, 0).unwrap_err();
        assert_eq!(err, CoreError::EmptyLabeledSet);
    }
}
