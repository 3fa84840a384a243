//! Pseudo-label bookkeeping and the Agree Mechanism: confidence-threshold
//! initialization (UDA), deep-classifier prediction, and injection of
//! samples where the similarity-based and deep classifiers agree.

use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::TimeSeriesDataset;
use crate::error::CoreError;
use crate::metrics::predict;
use crate::nets::{classifier_forward, encoder_forward, NetParams, FEATURE_DIM};
use crate::pretrain::{finetune_target, TrainHyperparams};
use crate::sbc::{sbc_fit_predict, SbcConfig};
use crate::derive_seed;

/// Batch size for pure inference passes.
pub(crate) const EVAL_CHUNK: usize = 256;

const TAG_FINETUNE: u64 = 0x616d_6674;

/// How a target sample obtained (or lost) its label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Ground-truth label kept by the SSDA mask; immutable.
    Given,
    /// Confident source-model prediction at initialization (UDA).
    InitThreshold,
    /// Injected by the Agree Mechanism.
    Agreed,
    /// Still unlabeled when the mechanism finished; excluded from training.
    Abandoned,
    Unlabeled,
}

impl Provenance {
    pub fn name(self) -> &'static str {
        match self {
            Provenance::Given => "given",
            Provenance::InitThreshold => "init-threshold",
            Provenance::Agreed => "agreed",
            Provenance::Abandoned => "abandoned",
            Provenance::Unlabeled => "unlabeled",
        }
    }

    pub fn is_labeled(self) -> bool {
        matches!(self, Provenance::Given | Provenance::InitThreshold | Provenance::Agreed)
    }
}

/// Per-sample labeling record, including the audit trail of an injection.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelEntry {
    /// Class index, or -1 while unlabeled/abandoned.
    pub label: i32,
    pub provenance: Provenance,
    /// Agree Mechanism iteration (1-based) that injected this sample.
    pub injected_iteration: Option<u32>,
    /// Similarity-based prediction at injection time.
    pub sbc_at_injection: Option<i32>,
    /// Deep-classifier prediction at injection time.
    pub dnn_at_injection: Option<i32>,
}

impl LabelEntry {
    pub fn unlabeled() -> Self {
        Self {
            label: -1,
            provenance: Provenance::Unlabeled,
            injected_iteration: None,
            sbc_at_injection: None,
            dnn_at_injection: None,
        }
    }

    pub fn given(label: i32) -> Self {
        Self { label, provenance: Provenance::Given, ..Self::unlabeled() }
    }

    pub fn is_labeled(&self) -> bool {
        self.provenance.is_labeled()
    }
}

/// Counts by provenance; they always sum to the target sample count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ProvenanceCounts {
    pub given: usize,
    pub init_threshold: usize,
    pub agreed: usize,
    pub abandoned: usize,
    pub unlabeled: usize,
}

impl ProvenanceCounts {
    pub fn labeled(&self) -> usize {
        self.given + self.init_threshold + self.agreed
    }
}

/// Partition of the target training samples into labeled and unlabeled,
/// with per-sample provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelState {
    entries: Vec<LabelEntry>,
    num_classes: usize,
}

impl PseudoLabelState {
    pub fn new(entries: Vec<LabelEntry>, num_classes: usize) -> Result<Self, CoreError> {
        for e in &entries {
            let labeled = e.provenance.is_labeled();
            if labeled != (e.label >= 0) {
                return Err(CoreError::InvalidDataset(alloc::format!(
                    "label {} inconsistent with provenance {}",
                    e.label,
                    e.provenance.name()
                )));
            }
            if e.label >= num_classes as i32 {
                return Err(CoreError::InvalidDataset(alloc::format!(
                    "label {} outside [0, {num_classes})",
                    e.label
                )));
            }
        }
        Ok(Self { entries, num_classes })
    }

    pub fn entries(&self) -> &[LabelEntry] {
        &self.entries
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn labeled_indices(&self) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter_map(|(i, e)| e.is_labeled().then_some(i))
            .collect()
    }

    /// Labels parallel to [`Self::labeled_indices`].
    pub fn labeled_labels(&self) -> Vec<i32> {
        self.entries.iter().filter(|e| e.is_labeled()).map(|e| e.label).collect()
    }

    pub fn unlabeled_indices(&self) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter_map(|(i, e)| (e.provenance == Provenance::Unlabeled).then_some(i))
            .collect()
    }

    pub fn counts(&self) -> ProvenanceCounts {
        let mut c = ProvenanceCounts::default();
        for e in &self.entries {
            match e.provenance {
                Provenance::Given => c.given += 1,
                Provenance::InitThreshold => c.init_threshold += 1,
                Provenance::Agreed => c.agreed += 1,
                Provenance::Abandoned => c.abandoned += 1,
                Provenance::Unlabeled => c.unlabeled += 1,
            }
        }
        c
    }

    /// Marks every still-unlabeled sample as abandoned.
    pub fn abandon_remaining(&mut self) {
        for e in &mut self.entries {
            if e.provenance == Provenance::Unlabeled {
                e.provenance = Provenance::Abandoned;
            }
        }
    }
}

fn argmax_row(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Labels every target sample whose top source-model probability strictly
/// exceeds `tau`; everything else stays unlabeled. UDA initialization.
pub fn initial_threshold_labels(
    source_encoder: &NetParams,
    source_classifier: &NetParams,
    target_train: &TimeSeriesDataset,
    tau: f64,
) -> Result<PseudoLabelState, CoreError> {
    let k = source_classifier
        .num_classes()
        .ok_or(CoreError::RoleMismatch { expected: "classifier", got: source_classifier.role().name() })?;
    if k != target_train.num_classes() {
        return Err(CoreError::ClassCountMismatch { classifier: k, data: target_train.num_classes() });
    }
    let p = target_train.len();
    let mut entries = vec![LabelEntry::unlabeled(); p];
    let all: Vec<usize> = (0..p).collect();
    for chunk in all.chunks(EVAL_CHUNK) {
        let x = target_train.gather(chunk);
        let features = encoder_forward(
            source_encoder,
            &x,
            chunk.len(),
            target_train.channels(),
            target_train.seq_len(),
        )?;
        let (_, probs) = classifier_forward(source_classifier, &features, chunk.len())?;
        for (bi, &i) in chunk.iter().enumerate() {
            let row = &probs[bi * k..][..k];
            let best = argmax_row(row);
            if row[best] > tau {
                entries[i] = LabelEntry {
                    label: best as i32,
                    provenance: Provenance::InitThreshold,
                    ..LabelEntry::unlabeled()
                };
            }
        }
    }
    PseudoLabelState::new(entries, k)
}

/// Threshold initialization with the documented retry rule: if no sample
/// clears `tau`, retry with `tau - 0.1` down to a floor of `1/K + 0.05`,
/// then give up. Returns the state and the threshold that produced it.
pub fn threshold_labels_with_retry(
    source_encoder: &NetParams,
    source_classifier: &NetParams,
    target_train: &TimeSeriesDataset,
    tau: f64,
) -> Result<(PseudoLabelState, f64), CoreError> {
    let k = target_train.num_classes();
    let floor = 1.0 / k as f64 + 0.05;
    let mut current = tau;
    loop {
        let state =
            initial_threshold_labels(source_encoder, source_classifier, target_train, current)?;
        if state.counts().labeled() > 0 {
            return Ok((state, current));
        }
        if current <= floor {
            return Err(CoreError::ThresholdExhausted { floor });
        }
        current = (current - 0.1).max(floor);
    }
}

/// Deep-classifier predictions (argmax, eval mode) for the given samples.
pub fn dnn_predict(
    target_encoder: &NetParams,
    classifier: &NetParams,
    ds: &TimeSeriesDataset,
    indices: &[usize],
) -> Result<Vec<i32>, CoreError> {
    predict(target_encoder, classifier, ds, Some(indices))
}

/// Injects every currently unlabeled sample whose two predictions agree.
/// `y_sbc` and `y_dnn` must cover exactly the unlabeled set, in index
/// order. Returns how many samples were injected.
pub fn agree_inject(
    state: &mut PseudoLabelState,
    y_sbc: &[i32],
    y_dnn: &[i32],
    iteration: u32,
) -> Result<usize, CoreError> {
    let unlabeled = state.unlabeled_indices();
    if y_sbc.len() != unlabeled.len() || y_dnn.len() != unlabeled.len() {
        return Err(CoreError::CoverageMismatch {
            expected: unlabeled.len(),
            got: y_sbc.len().min(y_dnn.len()),
        });
    }
    let k = state.num_classes as i32;
    let mut injected = 0;
    for (pos, &i) in unlabeled.iter().enumerate() {
        if y_sbc[pos] == y_dnn[pos] && y_sbc[pos] >= 0 && y_sbc[pos] < k {
            state.entries[i] = LabelEntry {
                label: y_sbc[pos],
                provenance: Provenance::Agreed,
                injected_iteration: Some(iteration),
                sbc_at_injection: Some(y_sbc[pos]),
                dnn_at_injection: Some(y_dnn[pos]),
            };
            injected += 1;
        }
    }
    Ok(injected)
}

/// One Agree Mechanism iteration's bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AmIteration {
    pub iteration: u32,
    pub injected: usize,
    pub labeled_after: usize,
}

/// Runs the Agree Mechanism for `hp.epochs_am` iterations: fine-tune on the
/// current labeled set, spread labels over current target features, predict
/// with the fine-tuned deep model, inject agreements. Whatever is still
/// unlabeled afterwards is abandoned. The encoder and classifier are
/// updated in place.
pub fn run_agree_mechanism(
    target_encoder: &mut NetParams,
    classifier: &mut NetParams,
    target_train: &TimeSeriesDataset,
    state: &mut PseudoLabelState,
    hp: &TrainHyperparams,
    cfg: &SbcConfig,
    seed: u64,
) -> Result<Vec<AmIteration>, CoreError> {
    if state.counts().labeled() == 0 {
        return Err(CoreError::EmptyLabeledSet);
    }
    if state.len() != target_train.len() {
        return Err(CoreError::ShapeMismatch {
            context: "pseudo-label state",
            expected: target_train.len(),
            got: state.len(),
        });
    }
    let p = target_train.len();
    let mut iterations = Vec::with_capacity(hp.epochs_am);
    for iter in 1..=hp.epochs_am as u32 {
        let labeled = state.labeled_indices();
        let labels = state.labeled_labels();
        finetune_target(
            target_encoder,
            classifier,
            target_train,
            &labeled,
            &labels,
            hp,
            1,
            derive_seed(seed, TAG_FINETUNE + iter as u64),
        )?;

        let mut features = Vec::with_capacity(p * FEATURE_DIM);
        let all: Vec<usize> = (0..p).collect();
        for chunk in all.chunks(EVAL_CHUNK) {
            let x = target_train.gather(chunk);
            features.extend(encoder_forward(
                target_encoder,
                &x,
                chunk.len(),
                target_train.channels(),
                target_train.seq_len(),
            )?);
        }
        let y_sbc_all = sbc_fit_predict(&features, p, state, cfg)?;

        let unlabeled = state.unlabeled_indices();
        let injected = if unlabeled.is_empty() {
            0
        } else {
            let y_dnn = dnn_predict(target_encoder, classifier, target_train, &unlabeled)?;
            let y_sbc: Vec<i32> = unlabeled.iter().map(|&i| y_sbc_all[i]).collect();
            agree_inject(state, &y_sbc, &y_dnn, iter)?
        };
        iterations.push(AmIteration { iteration: iter, injected, labeled_after: state.counts().labeled() });
    }
    state.abandon_remaining();
    Ok(iterations)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probs_state(rows: &[&[f64]], tau: f64) -> Vec<Option<usize>> {
        // Mirror of the thresholding rule for table-driven checks.
        rows.iter()
            .map(|row| {
                let best = argmax_row(row);
                (row[best] > tau).then_some(best)
            })
            .collect()
    }

    #[test]
    fn threshold_rule_on_worked_example() {
        let got = probs_state(&[&[0.9, 0.1], &[0.55, 0.45]], 0.7);
        assert_eq!(got, vec![Some(0), None]);
    }

    #[test]
    fn state_rejects_inconsistent_entries() {
        let bad = LabelEntry { label: -1, provenance: Provenance::Given, ..LabelEntry::unlabeled() };
        assert!(PseudoLabelState::new(vec![bad], 2).is_err());
        let bad2 = LabelEntry { label: 5, provenance: Provenance::Given, ..LabelEntry::unlabeled() };
        assert!(PseudoLabelState::new(vec![bad2], 2).is_err());
    }

    #[test]
    fn inject_on_worked_example() {
        let entries = vec![LabelEntry::unlabeled(); 3];
        let mut state = PseudoLabelState::new(entries, 3).unwrap();
        let injected = agree_inject(&mut state, &[1, 2, 0], &[1, 0, 0], 1).unwrap();
        assert_eq!(injected, 2);
        assert_eq!(state.entries()[0].label, 1);
        assert_eq!(state.entries()[0].provenance, Provenance::Agreed);
        assert_eq!(state.entries()[1].label, -1);
        assert_eq!(state.entries()[2].label, 0);
        assert_eq!(state.counts().agreed, 2);
    }

    #[test]
    fn inject_full_agreement_empties_unlabeled() {
        let mut state = PseudoLabelState::new(vec![LabelEntry::unlabeled(); 4], 2).unwrap();
        agree_inject(&mut state, &[0, 1, 1, 0], &[0, 1, 1, 0], 2).unwrap();
        assert_eq!(state.counts().agreed, 4);
        assert!(state.unlabeled_indices().is_empty());
    }

    #[test]
    fn inject_zero_agreement_changes_nothing() {
        let mut state = PseudoLabelState::new(vec![LabelEntry::unlabeled(); 3], 2).unwrap();
        let before = state.clone();
        let injected = agree_inject(&mut state, &[0, 0, 0], &[1, 1, 1], 1).unwrap();
        assert_eq!(injected, 0);
        assert_eq!(state, before);
    }

    #[test]
    fn inject_rejects_coverage_mismatch() {
        let mut state = PseudoLabelState::new(vec![LabelEntry::unlabeled(); 3], 2).unwrap();
        let err = agree_inject(&mut state, &[0, 1], &[0, 1], 1).unwrap_err();
        assert!(matches!(err, CoreError::CoverageMismatch { expected: 3, got: 2 }));
    }

    #[test]
    fn inject_leaves_labeled_entries_untouched() {
        let mut entries = vec![LabelEntry::unlabeled(); 3];
        entries[1] = LabelEntry::given(1);
        let mut state = PseudoLabelState::new(entries, 2).unwrap();
        agree_inject(&mut state, &[0, 0], &[0, 0], 1).unwrap();
        assert_eq!(state.entries()[1].provenance, Provenance::Given);
        assert_eq!(state.entries()[1].label, 1);
        assert_eq!(state.counts().agreed, 2);
    }

    #[test]
    fn abandon_marks_only_unlabeled() {
        let mut entries = vec![LabelEntry::unlabeled(); 3];
        entries[0] = LabelEntry::given(0);
        let mut state = PseudoLabelState::new(entries, 2).unwrap();
        state.abandon_remaining();
        let c = state.counts();
        assert_eq!((c.given, c.abandoned, c.unlabeled), (1, 2, 0));
    }
}
