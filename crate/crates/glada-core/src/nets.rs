//! The three parameterized function families: a 1D-CNN encoder (three
//! conv/batch-norm/ReLU/max-pool blocks, dropout after the first, global
//! average pooling into a 128-wide feature vector), a single-layer softmax
//! classifier, and a three-layer logistic discriminator.
//!
//! Parameters live in [`NetParams`], an ordered bank of named arrays, so
//! optimizers and checkpoints never need to know the architecture. All
//! backward passes are hand-written and verified against finite differences.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::CoreError;
use crate::layers::{
    bn_backward, bn_forward_eval, bn_forward_train, conv1d_backward, conv1d_forward, dropout_backward,
    dropout_forward_train, gap_backward, gap_forward, linear_backward, linear_forward,
    maxpool_backward, maxpool_forward, relu_backward, relu_forward, sigmoid, softmax_rows, BnCache,
    Conv1dCfg, PoolCfg,
};

/// Width of the embedding space shared by every network.
pub const FEATURE_DIM: usize = 128;

/// Hidden width of the discriminator.
pub const DISC_HIDDEN: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Encoder,
    Classifier,
    Discriminator,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Encoder => "encoder",
            Role::Classifier => "classifier",
            Role::Discriminator => "discriminator",
        }
    }
}

/// Encoder hyperparameters. The second and third convolutions and the pool
/// stage are fixed at `(8,1,4)` and `(2,2,1)`; block channels progress
/// `mid -> min(2*mid, 128) -> 128` so the flattened feature is always 128.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub in_channels: usize,
    pub mid_channels: usize,
    /// `(kernel, stride, padding)` of the first convolution.
    pub conv1: (usize, usize, usize),
    pub dropout_rate: f64,
}

impl EncoderConfig {
    /// Multivariate configuration: mid 64, conv1 (5,1,2), dropout 0.5.
    pub fn multivariate(in_channels: usize) -> Self {
        Self { in_channels, mid_channels: 64, conv1: (5, 1, 2), dropout_rate: 0.5 }
    }

    /// Univariate EEG-like configuration: mid 32, conv1 (26,5,13), dropout 0.2.
    pub fn univariate_eeg() -> Self {
        Self { in_channels: 1, mid_channels: 32, conv1: (26, 5, 13), dropout_rate: 0.2 }
    }

    /// Picks the EEG configuration for single-channel data, multivariate
    /// otherwise.
    pub fn for_channels(channels: usize) -> Self {
        if channels == 1 {
            Self::univariate_eeg()
        } else {
            Self::multivariate(channels)
        }
    }

    pub fn block_channels(&self) -> [usize; 3] {
        [self.mid_channels, (2 * self.mid_channels).min(FEATURE_DIM), FEATURE_DIM]
    }

    fn conv_cfg(&self, block: usize) -> Conv1dCfg {
        let ch = self.block_channels();
        let ins = [self.in_channels, ch[0], ch[1]];
        let (kernel, stride, padding) =
            if block == 0 { self.conv1 } else { (8, 1, 4) };
        Conv1dCfg { in_ch: ins[block], out_ch: ch[block], kernel, stride, padding }
    }

    fn pool_cfg(&self) -> PoolCfg {
        PoolCfg { kernel: 2, stride: 2, padding: 1 }
    }

    fn validate(&self) -> Result<(), CoreError> {
        if self.in_channels == 0 || self.mid_channels == 0 {
            return Err(CoreError::InvalidDataset(String::from("encoder channels must be >= 1")));
        }
        let (k, s, _) = self.conv1;
        if k == 0 || s == 0 {
            return Err(CoreError::InvalidDataset(String::from("conv kernel/stride must be >= 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NetConfig {
    Encoder(EncoderConfig),
    Classifier { num_classes: usize },
    Discriminator,
}

/// One named parameter array inside a bank.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    /// Running batch-norm statistics are stored but never optimized.
    pub trainable: bool,
}

impl ParamArray {
    fn new(name: &str, shape: &[usize], data: Vec<f64>, trainable: bool) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { name: String::from(name), shape: shape.to_vec(), data, trainable }
    }
}

/// An ordered, named parameter bank for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    config: NetConfig,
    arrays: Vec<ParamArray>,
}

fn uniform_init(rng: &mut ChaCha8Rng, len: usize, fan_in: usize) -> Vec<f64> {
    let bound = 1.0 / libm::sqrt(fan_in as f64);
    (0..len).map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * bound).collect()
}

impl NetParams {
    pub fn encoder(config: EncoderConfig, seed: u64) -> Result<Self, CoreError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut arrays = Vec::new();
        for block in 0..3 {
            let conv = config.conv_cfg(block);
            let fan_in = conv.in_ch * conv.kernel;
            let prefix = block + 1;
            arrays.push(ParamArray::new(
                &alloc::format!("conv{prefix}.weight"),
                &[conv.out_ch, conv.in_ch, conv.kernel],
                uniform_init(&mut rng, conv.weight_len(), fan_in),
                true,
            ));
            arrays.push(ParamArray::new(
                &alloc::format!("bn{prefix}.gamma"),
                &[conv.out_ch],
                vec![1.0; conv.out_ch],
                true,
            ));
            arrays.push(ParamArray::new(
                &alloc::format!("bn{prefix}.beta"),
                &[conv.out_ch],
                vec![0.0; conv.out_ch],
                true,
            ));
            arrays.push(ParamArray::new(
                &alloc::format!("bn{prefix}.running_mean"),
                &[conv.out_ch],
                vec![0.0; conv.out_ch],
                false,
            ));
            arrays.push(ParamArray::new(
                &alloc::format!("bn{prefix}.running_var"),
                &[conv.out_ch],
                vec![1.0; conv.out_ch],
                false,
            ));
        }
        Ok(Self { config: NetConfig::Encoder(config), arrays })
    }

    pub fn classifier(num_classes: usize, seed: u64) -> Result<Self, CoreError> {
        if num_classes < 2 {
            return Err(CoreError::InvalidDataset(String::from("classifier needs K >= 2")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let arrays = vec![
            ParamArray::new(
                "linear.weight",
                &[num_classes, FEATURE_DIM],
                uniform_init(&mut rng, num_classes * FEATURE_DIM, FEATURE_DIM),
                true,
            ),
            ParamArray::new(
                "linear.bias",
                &[num_classes],
                uniform_init(&mut rng, num_classes, FEATURE_DIM),
                true,
            ),
        ];
        Ok(Self { config: NetConfig::Classifier { num_classes }, arrays })
    }

    pub fn discriminator(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = [(DISC_HIDDEN, FEATURE_DIM), (DISC_HIDDEN, DISC_HIDDEN), (1, DISC_HIDDEN)];
        let mut arrays = Vec::new();
        for (i, &(out, inp)) in dims.iter().enumerate() {
            arrays.push(ParamArray::new(
                &alloc::format!("fc{}.weight", i + 1),
                &[out, inp],
                uniform_init(&mut rng, out * inp, inp),
                true,
            ));
            arrays.push(ParamArray::new(
                &alloc::format!("fc{}.bias", i + 1),
                &[out],
                uniform_init(&mut rng, out, inp),
                true,
            ));
        }
        Self { config: NetConfig::Discriminator, arrays }
    }

    /// Rebuilds a bank from externally stored arrays, validating the layout.
    pub fn from_arrays(config: NetConfig, arrays: Vec<ParamArray>) -> Result<Self, CoreError> {
        let reference = match &config {
            NetConfig::Encoder(cfg) => Self::encoder(cfg.clone(), 0)?,
            NetConfig::Classifier { num_classes } => Self::classifier(*num_classes, 0)?,
            NetConfig::Discriminator => Self::discriminator(0),
        };
        if arrays.len() != reference.arrays.len() {
            return Err(CoreError::ShapeMismatch {
                context: "parameter bank arrays",
                expected: reference.arrays.len(),
                got: arrays.len(),
            });
        }
        for (got, want) in arrays.iter().zip(&reference.arrays) {
            if got.name != want.name || got.shape != want.shape || got.trainable != want.trainable
            {
                return Err(CoreError::InvalidDataset(alloc::format!(
                    "parameter array {} does not match the {} layout",
                    got.name,
                    reference.role().name(),
                )));
            }
            if got.data.len() != want.data.len() {
                return Err(CoreError::ShapeMismatch {
                    context: "parameter array length",
                    expected: want.data.len(),
                    got: got.data.len(),
                });
            }
        }
        Ok(Self { config, arrays })
    }

    pub fn role(&self) -> Role {
        match self.config {
            NetConfig::Encoder(_) => Role::Encoder,
            NetConfig::Classifier { .. } => Role::Classifier,
            NetConfig::Discriminator => Role::Discriminator,
        }
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn encoder_config(&self) -> Option<&EncoderConfig> {
        match &self.config {
            NetConfig::Encoder(cfg) => Some(cfg),
            _ => None,
        }
    }

    pub fn num_classes(&self) -> Option<usize> {
        match self.config {
            NetConfig::Classifier { num_classes } => Some(num_classes),
            _ => None,
        }
    }

    pub fn arrays(&self) -> &[ParamArray] {
        &self.arrays
    }

    /// Indices of the trainable arrays, in bank order.
    pub fn trainable_indices(&self) -> Vec<usize> {
        self.arrays
            .iter()
            .enumerate()
            .filter_map(|(i, a)| a.trainable.then_some(i))
            .collect()
    }

    pub fn array(&self, idx: usize) -> &[f64] {
        &self.arrays[idx].data
    }

    pub fn array_mut(&mut self, idx: usize) -> &mut Vec<f64> {
        &mut self.arrays[idx].data
    }
}

/// Deep copy of a source encoder used to seed the target encoder. Updates
/// to the copy never touch the original.
pub fn init_target_from_source(src: &NetParams) -> Result<NetParams, CoreError> {
    if src.role() != Role::Encoder {
        return Err(CoreError::RoleMismatch { expected: "encoder", got: src.role().name() });
    }
    Ok(src.clone())
}

/// Per-trainable-array gradients, aligned with [`NetParams::trainable_indices`].
#[derive(Debug, Clone)]
pub struct Grads {
    pub arrays: Vec<Vec<f64>>,
}

impl Grads {
    pub fn zeros_like(params: &NetParams) -> Self {
        Self {
            arrays: params
                .trainable_indices()
                .iter()
                .map(|&i| vec![0.0; params.array(i).len()])
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.arrays.iter().all(|a| a.iter().all(|v| v.is_finite()))
    }
}

// ---------------------------------------------------------------------------
// Encoder forward / backward
// ---------------------------------------------------------------------------

// Bank layout per block: [conv.weight, bn.gamma, bn.beta, bn.running_mean,
// bn.running_var], so block `i` starts at array index `5*i`.
const ENC_BLOCK_STRIDE: usize = 5;

struct BlockCache {
    conv_input: Vec<f64>,
    len_in: usize,
    bn: BnCache,
    relu_out: Vec<f64>,
    pool_argmax: Vec<u32>,
    len_conv: usize,
    len_pool: usize,
}

/// Everything the encoder backward pass needs.
pub struct EncoderCache {
    batch: usize,
    blocks: Vec<BlockCache>,
    dropout_mask: Option<Vec<f64>>,
}

fn encoder_check_input(
    cfg: &EncoderConfig,
    x: &[f64],
    batch: usize,
    channels: usize,
    seq_len: usize,
) -> Result<(), CoreError> {
    if channels != cfg.in_channels {
        return Err(CoreError::ChannelMismatch { expected: cfg.in_channels, got: channels });
    }
    if x.len() != batch * channels * seq_len {
        return Err(CoreError::ShapeMismatch {
            context: "encoder input",
            expected: batch * channels * seq_len,
            got: x.len(),
        });
    }
    // Every convolution must keep at least one output position.
    let mut len = seq_len;
    for block in 0..3 {
        let conv = cfg.conv_cfg(block);
        len = conv
            .out_len(len)
            .ok_or(CoreError::SequenceTooShort { len: seq_len, min: crate::dataset::MIN_SEQ_LEN })?;
        len = cfg.pool_cfg().out_len(len);
    }
    Ok(())
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum BnMode {
    Train,
    Eval,
}

fn encoder_run(
    params: &mut NetParams,
    x: &[f64],
    batch: usize,
    seq_len: usize,
    bn_mode: BnMode,
    mut dropout_rng: Option<&mut ChaCha8Rng>,
) -> (Vec<f64>, EncoderCache) {
    let cfg = params.encoder_config().expect("encoder role checked by caller").clone();
    let pool = cfg.pool_cfg();
    let mut cur = x.to_vec();
    let mut len = seq_len;
    let mut blocks = Vec::with_capacity(3);
    let mut dropout_mask = None;
    for block in 0..3 {
        let conv = cfg.conv_cfg(block);
        let base = block * ENC_BLOCK_STRIDE;
        let len_conv = conv.out_len(len).expect("validated");
        let z = conv1d_forward(&conv, params.array(base), &cur, batch, len);
        let (mut h, bn) = match bn_mode {
            BnMode::Train => {
                let mut rm = core::mem::take(params.array_mut(base + 3));
                let mut rv = core::mem::take(params.array_mut(base + 4));
                let out = bn_forward_train(
                    params.array(base + 1),
                    params.array(base + 2),
                    &mut rm,
                    &mut rv,
                    &z,
                    batch,
                    conv.out_ch,
                    len_conv,
                );
                *params.array_mut(base + 3) = rm;
                *params.array_mut(base + 4) = rv;
                out
            }
            BnMode::Eval => bn_forward_eval(
                params.array(base + 1),
                params.array(base + 2),
                params.array(base + 3),
                params.array(base + 4),
                &z,
                batch,
                conv.out_ch,
                len_conv,
            ),
        };
        relu_forward(&mut h);
        let relu_out = h;
        let (mut p, argmax) = maxpool_forward(&pool, &relu_out, batch, conv.out_ch, len_conv);
        let len_pool = pool.out_len(len_conv);
        if block == 0 {
            if let Some(rng) = dropout_rng.as_deref_mut() {
                dropout_mask = Some(dropout_forward_train(&mut p, cfg.dropout_rate, rng));
            }
        }
        blocks.push(BlockCache {
            conv_input: cur,
            len_in: len,
            bn,
            relu_out,
            pool_argmax: argmax,
            len_conv,
            len_pool,
        });
        cur = p;
        len = len_pool;
    }
    let features = gap_forward(&cur, batch, FEATURE_DIM, len);
    (features, EncoderCache { batch, blocks, dropout_mask })
}

/// Deterministic eval-mode forward: running statistics, no dropout.
/// Returns `[batch][128]` features.
pub fn encoder_forward(
    params: &NetParams,
    x: &[f64],
    batch: usize,
    channels: usize,
    seq_len: usize,
) -> Result<Vec<f64>, CoreError> {
    let cfg = params
        .encoder_config()
        .ok_or(CoreError::RoleMismatch { expected: "encoder", got: params.role().name() })?;
    encoder_check_input(cfg, x, batch, channels, seq_len)?;
    // Eval mode never mutates; clone-free would need interior splits, and the
    // bank is small next to the activations.
    let mut scratch = params.clone();
    Ok(encoder_run(&mut scratch, x, batch, seq_len, BnMode::Eval, None).0)
}

/// Eval-mode forward that also returns the cache, for gradient evaluation
/// with frozen statistics.
pub fn encoder_forward_eval_cached(
    params: &NetParams,
    x: &[f64],
    batch: usize,
    channels: usize,
    seq_len: usize,
) -> Result<(Vec<f64>, EncoderCache), CoreError> {
    let cfg = params
        .encoder_config()
        .ok_or(CoreError::RoleMismatch { expected: "encoder", got: params.role().name() })?;
    encoder_check_input(cfg, x, batch, channels, seq_len)?;
    let mut scratch = params.clone();
    Ok(encoder_run(&mut scratch, x, batch, seq_len, BnMode::Eval, None))
}

/// Training-mode forward: batch statistics (running stats updated in place)
/// and dropout sampled from `rng`.
pub fn encoder_forward_train(
    params: &mut NetParams,
    x: &[f64],
    batch: usize,
    channels: usize,
    seq_len: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, EncoderCache), CoreError> {
    let cfg = params
        .encoder_config()
        .ok_or(CoreError::RoleMismatch { expected: "encoder", got: params.role().name() })?
        .clone();
    encoder_check_input(&cfg, x, batch, channels, seq_len)?;
    Ok(encoder_run(params, x, batch, seq_len, BnMode::Train, Some(rng)))
}

/// Backpropagates `dfeat` (`[batch][128]`) through the encoder.
pub fn encoder_backward(params: &NetParams, cache: &EncoderCache, dfeat: &[f64]) -> Grads {
    let cfg = params.encoder_config().expect("encoder role");
    let batch = cache.batch;
    let last = &cache.blocks[2];
    let mut dcur = gap_backward(dfeat, last.len_pool);
    let mut grads = Grads::zeros_like(params);
    for block in (0..3).rev() {
        let bc = &cache.blocks[block];
        let conv = cfg.conv_cfg(block);
        let base = block * ENC_BLOCK_STRIDE;
        if block == 0 {
            if let Some(mask) = &cache.dropout_mask {
                dcur = dropout_backward(mask, &dcur);
            }
        }
        let drelu = maxpool_backward(&bc.pool_argmax, &dcur, batch * conv.out_ch * bc.len_conv);
        let dbn_out = relu_backward(&bc.relu_out, &drelu);
        let (dz, dgamma, dbeta) =
            bn_backward(params.array(base + 1), &bc.bn, &dbn_out, batch, conv.out_ch, bc.len_conv);
        let (dw, dx) =
            conv1d_backward(&conv, params.array(base), &bc.conv_input, batch, bc.len_in, &dz);
        // Trainable order per block: conv.weight, bn.gamma, bn.beta.
        grads.arrays[block * 3] = dw;
        grads.arrays[block * 3 + 1] = dgamma;
        grads.arrays[block * 3 + 2] = dbeta;
        dcur = dx;
    }
    grads
}

// ---------------------------------------------------------------------------
// Classifier forward / backward
// ---------------------------------------------------------------------------

/// Returns `(logits, probabilities)`, both `[batch][K]`.
pub fn classifier_forward(
    params: &NetParams,
    features: &[f64],
    batch: usize,
) -> Result<(Vec<f64>, Vec<f64>), CoreError> {
    let k = params
        .num_classes()
        .ok_or(CoreError::RoleMismatch { expected: "classifier", got: params.role().name() })?;
    if features.len() != batch * FEATURE_DIM {
        return Err(CoreError::ShapeMismatch {
            context: "classifier input",
            expected: batch * FEATURE_DIM,
            got: features.len(),
        });
    }
    let logits = linear_forward(params.array(0), params.array(1), features, batch, FEATURE_DIM, k);
    let probs = softmax_rows(&logits, batch, k);
    Ok((logits, probs))
}

/// Backpropagates a gradient on the logits; returns the parameter gradients
/// and the gradient on the input features.
pub fn classifier_backward(
    params: &NetParams,
    features: &[f64],
    dlogits: &[f64],
    batch: usize,
) -> (Grads, Vec<f64>) {
    let k = params.num_classes().expect("classifier role");
    let (dw, db, dx) =
        linear_backward(params.array(0), features, dlogits, batch, FEATURE_DIM, k);
    (Grads { arrays: vec![dw, db] }, dx)
}

// ---------------------------------------------------------------------------
// Discriminator forward / backward
// ---------------------------------------------------------------------------

pub struct DiscCache {
    batch: usize,
    input: Vec<f64>,
    relu1: Vec<f64>,
    relu2: Vec<f64>,
    d: Vec<f64>,
}

/// Domain probabilities in (0, 1), one per row of `features`.
pub fn discriminator_forward(
    params: &NetParams,
    features: &[f64],
    batch: usize,
) -> Result<Vec<f64>, CoreError> {
    discriminator_forward_cached(params, features, batch).map(|(d, _)| d)
}

pub fn discriminator_forward_cached(
    params: &NetParams,
    features: &[f64],
    batch: usize,
) -> Result<(Vec<f64>, DiscCache), CoreError> {
    if params.role() != Role::Discriminator {
        return Err(CoreError::RoleMismatch {
            expected: "discriminator",
            got: params.role().name(),
        });
    }
    if features.len() != batch * FEATURE_DIM {
        return Err(CoreError::ShapeMismatch {
            context: "discriminator input",
            expected: batch * FEATURE_DIM,
            got: features.len(),
        });
    }
    let mut a1 =
        linear_forward(params.array(0), params.array(1), features, batch, FEATURE_DIM, DISC_HIDDEN);
    relu_forward(&mut a1);
    let mut a2 =
        linear_forward(params.array(2), params.array(3), &a1, batch, DISC_HIDDEN, DISC_HIDDEN);
    relu_forward(&mut a2);
    let z3 = linear_forward(params.array(4), params.array(5), &a2, batch, DISC_HIDDEN, 1);
    let d: Vec<f64> = z3.iter().map(|&z| sigmoid(z)).collect();
    Ok((d.clone(), DiscCache { batch, input: features.to_vec(), relu1: a1, relu2: a2, d }))
}

/// Backpropagates `dd = dL/dd` through the logistic output and the MLP;
/// returns parameter gradients and the gradient on the input features.
pub fn discriminator_backward(
    params: &NetParams,
    cache: &DiscCache,
    dd: &[f64],
) -> (Grads, Vec<f64>) {
    let b = cache.batch;
    // d = sigmoid(z): dz = dd * d * (1 - d).
    let dz3: Vec<f64> = dd.iter().zip(&cache.d).map(|(&g, &d)| g * d * (1.0 - d)).collect();
    let (dw3, db3, da2) =
        linear_backward(params.array(4), &cache.relu2, &dz3, b, DISC_HIDDEN, 1);
    let dz2 = relu_backward(&cache.relu2, &da2);
    let (dw2, db2, da1) =
        linear_backward(params.array(2), &cache.relu1, &dz2, b, DISC_HIDDEN, DISC_HIDDEN);
    let dz1 = relu_backward(&cache.relu1, &da1);
    let (dw1, db1, dx) =
        linear_backward(params.array(0), &cache.input, &dz1, b, FEATURE_DIM, DISC_HIDDEN);
    (Grads { arrays: vec![dw1, db1, dw2, db2, dw3, db3] }, dx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_input(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
        (0..len).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect()
    }

    #[test]
    fn encoder_output_is_128_wide() {
        let cfg = EncoderConfig::multivariate(3);
        let enc = NetParams::encoder(cfg, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = rand_input(&mut rng, 4 * 3 * 100);
        let f = encoder_forward(&enc, &x, 4, 3, 100).unwrap();
        assert_eq!(f.len(), 4 * FEATURE_DIM);
    }

    #[test]
    fn eeg_encoder_handles_long_univariate_input() {
        let enc = NetParams::encoder(EncoderConfig::univariate_eeg(), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = rand_input(&mut rng, 2 * 200);
        let f = encoder_forward(&enc, &x, 2, 1, 200).unwrap();
        assert_eq!(f.len(), 2 * FEATURE_DIM);
    }

    #[test]
    fn eval_forward_is_deterministic() {
        let enc = NetParams::encoder(EncoderConfig::multivariate(2), 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = rand_input(&mut rng, 3 * 2 * 40);
        let a = encoder_forward(&enc, &x, 3, 2, 40).unwrap();
        let b = encoder_forward(&enc, &x, 3, 2, 40).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn encoder_rejects_channel_mismatch() {
        let enc = NetParams::encoder(EncoderConfig::multivariate(3), 1).unwrap();
        let x = vec![0.0; 2 * 2 * 40];
        let err = encoder_forward(&enc, &x, 2, 2, 40).unwrap_err();
        assert!(matches!(err, CoreError::ChannelMismatch { expected: 3, got: 2 }));
    }

    #[test]
    fn zero_classifier_is_uniform() {
        let mut clf = NetParams::classifier(4, 0).unwrap();
        for idx in clf.trainable_indices() {
            clf.array_mut(idx).iter_mut().for_each(|v| *v = 0.0);
        }
        let f = vec![0.3; 2 * FEATURE_DIM];
        let (_, p) = classifier_forward(&clf, &f, 2).unwrap();
        for &v in &p {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn classifier_argmax_consistent() {
        let clf = NetParams::classifier(5, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = rand_input(&mut rng, 3 * FEATURE_DIM);
        let (logits, probs) = classifier_forward(&clf, &f, 3).unwrap();
        for bi in 0..3 {
            let argmax = |row: &[f64]| {
                row.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(i, _)| i)
                    .unwrap()
            };
            assert_eq!(argmax(&logits[bi * 5..][..5]), argmax(&probs[bi * 5..][..5]));
        }
    }

    #[test]
    fn zero_discriminator_outputs_half() {
        let mut disc = NetParams::discriminator(0);
        for idx in disc.trainable_indices() {
            disc.array_mut(idx).iter_mut().for_each(|v| *v = 0.0);
        }
        let f = vec![1.0; 3 * FEATURE_DIM];
        let d = discriminator_forward(&disc, &f, 3).unwrap();
        assert_eq!(d.len(), 3);
        for &v in &d {
            assert_eq!(v, 0.5);
        }
    }

    #[test]
    fn discriminator_outputs_in_open_interval() {
        let disc = NetParams::discriminator(11);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let f = rand_input(&mut rng, 8 * FEATURE_DIM);
        for &v in &discriminator_forward(&disc, &f, 8).unwrap() {
            assert!(v > 0.0 && v < 1.0);
        }
    }

    #[test]
    fn target_copy_is_isolated() {
        let src = NetParams::encoder(EncoderConfig::multivariate(2), 13).unwrap();
        let mut tgt = init_target_from_source(&src).unwrap();
        assert_eq!(src, tgt);

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = rand_input(&mut rng, 2 * 2 * 32);
        let fs = encoder_forward(&src, &x, 2, 2, 32).unwrap();
        let ft = encoder_forward(&tgt, &x, 2, 2, 32).unwrap();
        assert_eq!(fs, ft);

        tgt.array_mut(0)[0] += 1.0;
        assert_ne!(src, tgt);
        assert_eq!(encoder_forward(&src, &x, 2, 2, 32).unwrap(), fs);
    }

    #[test]
    fn copy_rejects_non_encoder() {
        let clf = NetParams::classifier(3, 0).unwrap();
        assert!(matches!(
            init_target_from_source(&clf),
            Err(CoreError::RoleMismatch { expected: "encoder", .. })
        ));
    }
}
