//! Windowed time-series datasets: validation, splitting, SSDA label
//! masking, deterministic batching, and a synthetic domain-shift pair
//! generator for desk-scale experiments.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::CoreError;
use crate::pseudolabel::{LabelEntry, PseudoLabelState};
use crate::derive_seed;

/// Shortest time axis that survives three stride-2 poolings.
pub const MIN_SEQ_LEN: usize = 8;

/// Label value marking an unlabeled sample.
pub const UNLABELED: i32 = -1;

const TAG_STRUCTURE: u64 = 0x5359_4e54_4831;
const TAG_NOISE_SRC: u64 = 0x4e4f_4953_4530;
const TAG_NOISE_TGT: u64 = 0x4e4f_4953_4531;

/// A set of windowed multivariate time-series samples with optional labels.
///
/// Samples are stored flat in C order `[sample][channel][time]`. Labels are
/// integers in `[0, num_classes)` with [`UNLABELED`] marking missing ones.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    samples: Vec<f32>,
    labels: Option<Vec<i32>>,
    num_samples: usize,
    channels: usize,
    seq_len: usize,
    num_classes: usize,
}

impl TimeSeriesDataset {
    /// Builds a dataset, validating every invariant: finite samples, label
    /// range, `p >= 1`, `m >= 1`, `n >= 8`, `K >= 2`.
    pub fn new(
        samples: Vec<f32>,
        labels: Option<Vec<i32>>,
        channels: usize,
        seq_len: usize,
        num_classes: usize,
    ) -> Result<Self, CoreError> {
        use alloc::format;
        if channels == 0 {
            return Err(CoreError::InvalidDataset(format!("channel count must be >= 1")));
        }
        if seq_len < MIN_SEQ_LEN {
            return Err(CoreError::SequenceTooShort { len: seq_len, min: MIN_SEQ_LEN });
        }
        if num_classes < 2 {
            return Err(CoreError::InvalidDataset(format!(
                "num_classes must be >= 2, got {num_classes}"
            )));
        }
        let stride = channels * seq_len;
        if samples.is_empty() || samples.len() % stride != 0 {
            return Err(CoreError::ShapeMismatch {
                context: "dataset samples",
                expected: stride,
                got: samples.len(),
            });
        }
        let num_samples = samples.len() / stride;
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidDataset(format!("samples contain NaN or Inf")));
        }
        if let Some(ref y) = labels {
            if y.len() != num_samples {
                return Err(CoreError::ShapeMismatch {
                    context: "dataset labels",
                    expected: num_samples,
                    got: y.len(),
                });
            }
            for &v in y {
                if v != UNLABELED && (v < 0 || v as usize >= num_classes) {
                    return Err(CoreError::InvalidDataset(format!(
                        "label {v} outside [0, {num_classes})"
                    )));
                }
            }
        }
        Ok(Self { samples, labels, num_samples, channels, seq_len, num_classes })
    }

    pub fn len(&self) -> usize {
        self.num_samples
    }

    pub fn is_empty(&self) -> bool {
        self.num_samples == 0
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn samples_raw(&self) -> &[f32] {
        &self.samples
    }

    pub fn labels(&self) -> Option<&[i32]> {
        self.labels.as_deref()
    }

    /// Flat `[channel][time]` slice of one sample.
    pub fn sample(&self, idx: usize) -> &[f32] {
        let stride = self.channels * self.seq_len;
        &self.samples[idx * stride..(idx + 1) * stride]
    }

    /// Labels if present and fully assigned (no [`UNLABELED`] entries).
    pub fn full_labels(&self) -> Result<&[i32], CoreError> {
        let y = self.labels.as_deref().ok_or(CoreError::EmptyInput("labels"))?;
        if y.iter().any(|&v| v == UNLABELED) {
            return Err(CoreError::InvalidDataset(alloc::string::String::from(
                "dataset has unlabeled samples where full labels are required",
            )));
        }
        Ok(y)
    }

    /// Copies the given samples into a dense f64 batch `[b][channel][time]`.
    pub fn gather(&self, indices: &[usize]) -> Vec<f64> {
        let stride = self.channels * self.seq_len;
        let mut out = Vec::with_capacity(indices.len() * stride);
        for &i in indices {
            out.extend(self.sample(i).iter().map(|&v| v as f64));
        }
        out
    }

    /// Labels for the given samples, [`UNLABELED`] where missing.
    pub fn gather_labels(&self, indices: &[usize]) -> Vec<i32> {
        match self.labels.as_deref() {
            Some(y) => indices.iter().map(|&i| y[i]).collect(),
            None => vec![UNLABELED; indices.len()],
        }
    }

    fn take(&self, indices: &[usize]) -> Self {
        let stride = self.channels * self.seq_len;
        let mut samples = Vec::with_capacity(indices.len() * stride);
        for &i in indices {
            samples.extend_from_slice(self.sample(i));
        }
        let labels = self
            .labels
            .as_deref()
            .map(|y| indices.iter().map(|&i| y[i]).collect());
        Self {
            samples,
            labels,
            num_samples: indices.len(),
            channels: self.channels,
            seq_len: self.seq_len,
            num_classes: self.num_classes,
        }
    }
}

/// Disjoint train/test partition of one dataset.
#[derive(Debug, Clone)]
pub struct SplitPair {
    pub train: TimeSeriesDataset,
    pub test: TimeSeriesDataset,
}

/// Splits into `round(ratio * p)` training samples and the remainder,
/// shuffled deterministically by `seed`. Both sides are kept nonempty,
/// so the train count is clamped to `[1, p - 1]`.
pub fn split_train_test(
    ds: &TimeSeriesDataset,
    ratio: f64,
    seed: u64,
) -> Result<SplitPair, CoreError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(CoreError::RatioOutOfRange(ratio));
    }
    let p = ds.len();
    if p < 2 {
        return Err(CoreError::EmptyInput("split needs at least 2 samples"));
    }
    let mut order: Vec<usize> = (0..p).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_train = (libm::round(ratio * p as f64) as usize).clamp(1, p - 1);
    Ok(SplitPair {
        train: ds.take(&order[..n_train]),
        test: ds.take(&order[n_train..]),
    })
}

/// Keeps `max(1, round(fraction * n_c))` labels per class `c` and marks the
/// rest unlabeled, recording kept labels with provenance `Given`. The
/// dataset must be fully labeled; the choice is deterministic in `seed`.
pub fn stratified_label_mask(
    ds: &TimeSeriesDataset,
    fraction: f64,
    seed: u64,
) -> Result<PseudoLabelState, CoreError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(CoreError::RatioOutOfRange(fraction));
    }
    let y = ds.full_labels()?;
    let k = ds.num_classes();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &label) in y.iter().enumerate() {
        by_class[label as usize].push(i);
    }
    let mut entries = vec![LabelEntry::unlabeled(); ds.len()];
    for (class, idxs) in by_class.iter().enumerate() {
        if idxs.is_empty() {
            return Err(CoreError::EmptyClass { class });
        }
        let keep = (libm::round(fraction * idxs.len() as f64) as usize).max(1).min(idxs.len());
        let mut shuffled = idxs.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, class as u64));
        shuffled.shuffle(&mut rng);
        for &i in shuffled.iter().take(keep) {
            entries[i] = LabelEntry::given(y[i]);
        }
    }
    PseudoLabelState::new(entries, k)
}

/// Parameters of the synthetic source/target pair.
///
/// Class `c` is a sinusoid of class-dependent frequency on every channel,
/// with a per-sample phase jitter drawn once and shared by both domains so
/// that the target is an exact covariate transform of the source: amplitude
/// scaled by `target_amp_scale`, phase shifted by `target_phase_offset`,
/// plus independent Gaussian noise of `noise_std` in each domain.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub samples_per_class: usize,
    pub channels: usize,
    pub seq_len: usize,
    pub target_amp_scale: f64,
    pub target_phase_offset: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl SynthSpec {
    fn validate(&self) -> Result<(), CoreError> {
        use alloc::format;
        if self.num_classes < 2 || self.samples_per_class == 0 || self.channels == 0 {
            return Err(CoreError::InvalidDataset(format!("synth counts must be positive")));
        }
        if self.seq_len < MIN_SEQ_LEN {
            return Err(CoreError::SequenceTooShort { len: self.seq_len, min: MIN_SEQ_LEN });
        }
        if !(self.noise_std >= 0.0) {
            return Err(CoreError::InvalidDataset(format!(
                "noise_std must be >= 0, got {}",
                self.noise_std
            )));
        }
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; u1 in (0, 1].
    let u1 = 1.0 - rng.gen::<f64>();
    let u2 = rng.gen::<f64>();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
}

/// Generates the fully labeled (source, target) pair described by `spec`.
///
/// Per-sample phase jitter is drawn from `U(0, pi)`; the target's extra
/// phase offset therefore shifts a *restricted* phase distribution instead
/// of rotating a uniform one, which would be invisible.
pub fn make_synthetic_pair(
    spec: &SynthSpec,
) -> Result<(TimeSeriesDataset, TimeSeriesDataset), CoreError> {
    spec.validate()?;
    let k = spec.num_classes;
    let p = k * spec.samples_per_class;
    let (m, n) = (spec.channels, spec.seq_len);

    let mut structure = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, TAG_STRUCTURE));
    let mut phases = Vec::with_capacity(p);
    let mut labels = Vec::with_capacity(p);
    for c in 0..k {
        for _ in 0..spec.samples_per_class {
            phases.push(structure.gen::<f64>() * core::f64::consts::PI);
            labels.push(c as i32);
        }
    }

    let wave = |class: usize, phase: f64, amp: f64, offset: f64, out: &mut Vec<f32>| {
        for ch in 0..m {
            let freq = (class + 1) as f64 * (1.0 + 0.5 * ch as f64);
            for t in 0..n {
                let arg = 2.0 * core::f64::consts::PI * freq * t as f64 / n as f64 + phase + offset;
                out.push((amp * libm::sin(arg)) as f32);
            }
        }
    };

    let mut src = Vec::with_capacity(p * m * n);
    let mut tgt = Vec::with_capacity(p * m * n);
    for (i, &phase) in phases.iter().enumerate() {
        let class = labels[i] as usize;
        wave(class, phase, 1.0, 0.0, &mut src);
        wave(class, phase, spec.target_amp_scale, spec.target_phase_offset, &mut tgt);
    }
    if spec.noise_std > 0.0 {
        let mut rng_s = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, TAG_NOISE_SRC));
        let mut rng_t = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, TAG_NOISE_TGT));
        for v in src.iter_mut() {
            *v += (spec.noise_std * gaussian(&mut rng_s)) as f32;
        }
        for v in tgt.iter_mut() {
            *v += (spec.noise_std * gaussian(&mut rng_t)) as f32;
        }
    }

    let source = TimeSeriesDataset::new(src, Some(labels.clone()), m, n, k)?;
    let target = TimeSeriesDataset::new(tgt, Some(labels), m, n, k)?;
    Ok((source, target))
}

/// One minibatch gathered from a dataset.
#[derive(Debug, Clone)]
pub struct Batch {
    /// Dataset indices in batch order.
    pub indices: Vec<usize>,
    /// Dense `[b][channel][time]` f64 samples.
    pub samples: Vec<f64>,
    /// Per-sample labels, [`UNLABELED`] where missing.
    pub labels: Vec<i32>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Positions `0..count` shuffled by `(seed, epoch)` and cut into chunks of
/// at most `batch_size`, the final short chunk included.
pub fn shuffled_chunks(
    count: usize,
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> Result<Vec<Vec<usize>>, CoreError> {
    if batch_size == 0 {
        return Err(CoreError::EmptyInput("batch_size must be >= 1"));
    }
    if count == 0 {
        return Err(CoreError::EmptyInput("batching over an empty set"));
    }
    let mut order: Vec<usize> = (0..count).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, epoch));
    order.shuffle(&mut rng);
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Splits `subset` (or the whole dataset) into shuffled minibatches.
///
/// The shuffle is a pure function of `(seed, epoch)`; every index appears
/// exactly once per epoch and the final short batch is emitted.
pub fn batch_iter(
    ds: &TimeSeriesDataset,
    subset: Option<&[usize]>,
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> Result<Vec<Batch>, CoreError> {
    let count = subset.map_or(ds.len(), <[usize]>::len);
    let chunks = shuffled_chunks(count, batch_size, seed, epoch)?;
    Ok(chunks
        .into_iter()
        .map(|positions| {
            let indices: Vec<usize> = match subset {
                Some(idxs) => positions.iter().map(|&p| idxs[p]).collect(),
                None => positions,
            };
            Batch {
                samples: ds.gather(&indices),
                labels: ds.gather_labels(&indices),
                indices,
            }
        })
        .collect())
}

/// Minibatches over an explicitly labeled subset: `labels[i]` rides along
/// with `ds` sample `indices[i]`, overriding whatever the dataset stores.
/// This is how pseudo-labeled target batches are built.
pub fn labeled_batches(
    ds: &TimeSeriesDataset,
    indices: &[usize],
    labels: &[i32],
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> Result<Vec<Batch>, CoreError> {
    if indices.len() != labels.len() {
        return Err(CoreError::ShapeMismatch {
            context: "labeled subset",
            expected: indices.len(),
            got: labels.len(),
        });
    }
    let chunks = shuffled_chunks(indices.len(), batch_size, seed, epoch)?;
    Ok(chunks
        .into_iter()
        .map(|positions| {
            let idx: Vec<usize> = positions.iter().map(|&p| indices[p]).collect();
            Batch {
                samples: ds.gather(&idx),
                labels: positions.iter().map(|&p| labels[p]).collect(),
                indices: idx,
            }
        })
        .collect())
}
