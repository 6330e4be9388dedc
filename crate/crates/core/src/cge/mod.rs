//! Conditional-GAN channel estimation.
//!
//! The generator maps a 4-plane condition image (received pilots, pilot
//! symbols) to a 2-plane gain image (real, imaginary). The discriminator
//! scores `condition ⊕ gains` stacks. Training alternates a discriminator
//! step on real/fake pairs with a generator step on the adversarial loss
//! plus a weighted L1 reconstruction term.

mod format;

pub use format::{load_model, model_from_bytes, model_to_bytes, save_model, MODEL_MAGIC, MODEL_VERSION};

use num_complex::Complex32;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{
    apply_channel, gen_channel, insert_pilots, ls_estimate, nmse, ChannelError, ComplexGrid, PilotPattern,
};
use crate::nn::{
    adam_step, bce_loss, l1_grad, l1_loss, sigmoid, Activation, AdamConfig, AdamState, Gradients, LayerParams,
    Network, NnError, Tensor,
};

/// Planes of a condition tensor.
pub const CONDITION_CHANNELS: usize = 4;
/// Planes of a gain tensor.
pub const GAIN_CHANNELS: usize = 2;

#[derive(Debug, thiserror::Error)]
pub enum CgeError {
    #[error("grid {rows}x{cols} must be divisible by {divisor}")]
    IndivisibleExtents { rows: usize, cols: usize, divisor: usize },
    #[error("extent mismatch: model expects {expected}, got {found}")]
    ExtentMismatch { expected: String, found: String },
    #[error("dataset has {0} pairs; at least 64 are required")]
    DatasetTooSmall(usize),
    #[error("non-finite {what} at epoch {epoch}, step {step}")]
    NonFiniteLoss { what: String, epoch: usize, step: usize },
    #[error("model format: {0}")]
    Format(String),
    #[error("incompatible model version {found} (this build reads {expected})")]
    Version { found: u8, expected: u8 },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// `[Re(y_masked), Im(y_masked), Re(p_mask), Im(p_mask)]` over the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionTensor(pub Tensor);

impl ConditionTensor {
    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn extents(&self) -> (usize, usize) {
        let s = self.0.shape();
        (s[1], s[2])
    }
}

/// Builds the condition image: received values and pilot symbols at pilot
/// cells, zero elsewhere.
pub fn make_condition(y: &ComplexGrid, pattern: &PilotPattern) -> Result<ConditionTensor, CgeError> {
    if (y.rows(), y.cols()) != (pattern.rows(), pattern.cols()) {
        return Err(CgeError::ExtentMismatch {
            expected: format!("{}x{}", pattern.rows(), pattern.cols()),
            found: format!("{}x{}", y.rows(), y.cols()),
        });
    }
    let plane = y.rows() * y.cols();
    let mut data = vec![0.0f32; CONDITION_CHANNELS * plane];
    for (&(r, c), &p) in pattern.positions().iter().zip(pattern.symbols()) {
        let i = r * y.cols() + c;
        let v = y.get(r, c);
        data[i] = v.re;
        data[plane + i] = v.im;
        data[2 * plane + i] = p.re;
        data[3 * plane + i] = p.im;
    }
    Ok(ConditionTensor(Tensor::new(vec![CONDITION_CHANNELS, y.rows(), y.cols()], data)?))
}

/// Real and imaginary planes of a gain grid as a `2 × rows × cols` tensor.
pub fn gains_to_tensor(h: &ComplexGrid) -> Tensor {
    let plane = h.len();
    let mut data = vec![0.0f32; GAIN_CHANNELS * plane];
    for (i, v) in h.values().iter().enumerate() {
        data[i] = v.re;
        data[plane + i] = v.im;
    }
    Tensor::new(vec![GAIN_CHANNELS, h.rows(), h.cols()], data).expect("consistent extents")
}

pub fn tensor_to_gains(t: &Tensor) -> Result<ComplexGrid, CgeError> {
    let (c, rows, cols) = t.dims3()?;
    if c != GAIN_CHANNELS {
        return Err(CgeError::ExtentMismatch {
            expected: format!("{GAIN_CHANNELS} planes"),
            found: format!("{c} planes"),
        });
    }
    let plane = rows * cols;
    let d = t.data();
    let values = (0..plane).map(|i| Complex32::new(d[i], d[plane + i])).collect();
    Ok(ComplexGrid::from_values(rows, cols, values)?)
}

fn check_divisible(rows: usize, cols: usize, divisor: usize) -> Result<(), CgeError> {
    if rows == 0 || cols == 0 || rows % divisor != 0 || cols % divisor != 0 {
        return Err(CgeError::IndivisibleExtents { rows, cols, divisor });
    }
    Ok(())
}

/// Default negative slope of the generator's hidden activations.
pub const LEAKY_SLOPE: f32 = 0.2;

/// Three stride-2 conv blocks, two stride-2 deconv blocks and a stride-2
/// deconv output layer (linear), so the output is `2 × rows × cols`.
pub fn build_generator(rows: usize, cols: usize, seed: u64) -> Result<Network, CgeError> {
    check_divisible(rows, cols, 8)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let act = Activation::leaky_relu(LEAKY_SLOPE);
    Ok(Network::new(vec![
        LayerParams::conv(CONDITION_CHANNELS, 32, 4, 2, 1, act, &mut rng),
        LayerParams::conv(32, 64, 4, 2, 1, act, &mut rng),
        LayerParams::conv(64, 128, 4, 2, 1, act, &mut rng),
        LayerParams::deconv(128, 64, 4, 2, 1, act, &mut rng),
        LayerParams::deconv(64, 32, 4, 2, 1, act, &mut rng),
        LayerParams::deconv(32, GAIN_CHANNELS, 4, 2, 1, Activation::Linear, &mut rng),
    ]))
}

/// Four stride-2 conv layers over `condition ⊕ gains`; the last is linear
/// and its map is averaged and squashed by [`discriminator_head`].
pub fn build_discriminator(rows: usize, cols: usize, seed: u64) -> Result<Network, CgeError> {
    check_divisible(rows, cols, 16)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = CONDITION_CHANNELS + GAIN_CHANNELS;
    Ok(Network::new(vec![
        LayerParams::conv(inputs, 32, 4, 2, 1, Activation::Relu, &mut rng),
        LayerParams::conv(32, 64, 4, 2, 1, Activation::Relu, &mut rng),
        LayerParams::conv(64, 128, 4, 2, 1, Activation::Relu, &mut rng),
        LayerParams::conv(128, 1, 4, 2, 1, Activation::Linear, &mut rng),
    ]))
}

/// Mean of the discriminator map followed by a sigmoid: `(logit, probability)`.
pub fn discriminator_head(map: &Tensor) -> (f32, f32) {
    let logit = map.data().iter().map(|&v| v as f64).sum::<f64>() / map.len().max(1) as f64;
    let logit = logit as f32;
    (logit, sigmoid(logit))
}

/// Gradient of `bce(sigmoid(mean(map)), target)` with respect to `map`.
fn head_grad(map: &Tensor, prob: f32, target: f32) -> Tensor {
    Tensor::full(map.shape(), (prob - target) / map.len() as f32)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CganHyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub lambda_l1: f32,
    pub adam: AdamConfig,
    pub validation_fraction: f64,
}

impl Default for CganHyper {
    fn default() -> Self {
        CganHyper {
            epochs: 50,
            batch_size: 16,
            lambda_l1: 100.0,
            adam: AdamConfig::default(),
            validation_fraction: 0.1,
        }
    }
}

/// Pilot lattice the model was trained against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PilotLayout {
    pub d_f: usize,
    pub d_t: usize,
    pub seed: u64,
}

impl PilotLayout {
    pub fn pattern(&self, rows: usize, cols: usize) -> Result<PilotPattern, ChannelError> {
        PilotPattern::lattice(rows, cols, self.d_f, self.d_t, self.seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub d_loss: f64,
    pub g_adv_loss: f64,
    pub g_l1_loss: f64,
    pub val_nmse: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingHistory {
    /// Validation NMSE of the freshly initialised generator.
    pub initial_val_nmse: f64,
    pub epochs: Vec<EpochStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CganModel {
    pub rows: usize,
    pub cols: usize,
    pub pilots: PilotLayout,
    pub hyper: CganHyper,
    pub generator: Network,
    pub discriminator: Network,
    pub history: TrainingHistory,
}

impl CganModel {
    /// Untrained model with seeded initial weights.
    pub fn init(rows: usize, cols: usize, pilots: PilotLayout, hyper: CganHyper, seed: u64) -> Result<Self, CgeError> {
        Ok(CganModel {
            rows,
            cols,
            pilots,
            hyper,
            generator: build_generator(rows, cols, seed)?,
            discriminator: build_discriminator(rows, cols, seed ^ 0x9E37_79B9_7F4A_7C15)?,
            history: TrainingHistory::default(),
        })
    }

    pub fn pilot_pattern(&self) -> Result<PilotPattern, ChannelError> {
        self.pilots.pattern(self.rows, self.cols)
    }

    /// Probability the discriminator assigns to `gains` being real for `c`.
    pub fn discriminate(&self, c: &ConditionTensor, gains: &Tensor) -> Result<f32, CgeError> {
        let map = self.discriminator.forward(&c.0.concat_channels(gains)?)?;
        Ok(discriminator_head(&map).1)
    }
}

/// Generator forward pass, reassembled into a gain grid.
pub fn estimate(model: &CganModel, c: &ConditionTensor) -> Result<ComplexGrid, CgeError> {
    if c.0.shape() != [CONDITION_CHANNELS, model.rows, model.cols] {
        return Err(CgeError::ExtentMismatch {
            expected: format!("{CONDITION_CHANNELS}x{}x{}", model.rows, model.cols),
            found: format!("{:?}", c.0.shape()),
        });
    }
    tensor_to_gains(&model.generator.forward(&c.0)?)
}

/// Received grid and true gains for one channel draw.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSample {
    pub received: ComplexGrid,
    pub gains: ComplexGrid,
}

/// Parameters of the synthetic estimation task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub rows: usize,
    pub cols: usize,
    pub sigma_f: f64,
    pub sigma_t: f64,
    pub snr_db: f64,
    pub pilots: PilotLayout,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            rows: 32,
            cols: 32,
            sigma_f: 4.0,
            sigma_t: 4.0,
            snr_db: 10.0,
            pilots: PilotLayout { d_f: 4, d_t: 4, seed: 7 },
        }
    }
}

impl TaskConfig {
    /// `count` independent draws; draw `i` uses channel seed `base_seed + 2i`
    /// and noise seed `base_seed + 2i + 1`. Data cells carry random QPSK.
    pub fn samples(&self, count: usize, base_seed: u64) -> Result<Vec<ChannelSample>, CgeError> {
        let pattern = self.pilots.pattern(self.rows, self.cols)?;
        (0..count as u64)
            .map(|i| {
                let channel_seed = base_seed.wrapping_add(2 * i);
                let h = gen_channel(channel_seed, self.rows, self.cols, self.sigma_f, self.sigma_t)?;
                let mut rng = ChaCha8Rng::seed_from_u64(channel_seed ^ 0xD1B5_4A32_D192_ED03);
                let a = std::f32::consts::FRAC_1_SQRT_2;
                let data = ComplexGrid::from_fn(self.rows, self.cols, |_, _| {
                    use rand::Rng;
                    Complex32::new(
                        if rng.random_bool(0.5) { a } else { -a },
                        if rng.random_bool(0.5) { a } else { -a },
                    )
                });
                let x = insert_pilots(&data, &pattern)?;
                let y = apply_channel(&x, &h, self.snr_db, channel_seed.wrapping_add(1))?;
                Ok(ChannelSample {
                    received: y,
                    gains: h.gains,
                })
            })
            .collect()
    }
}

/// Condition/target pairs plus the geometry they were produced with.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub rows: usize,
    pub cols: usize,
    pub pilots: PilotLayout,
    pub pairs: Vec<(ConditionTensor, Tensor)>,
}

impl TrainingSet {
    pub fn from_samples(
        samples: &[ChannelSample],
        rows: usize,
        cols: usize,
        pilots: PilotLayout,
    ) -> Result<Self, CgeError> {
        let pattern = pilots.pattern(rows, cols)?;
        let pairs = samples
            .iter()
            .map(|s| Ok((make_condition(&s.received, &pattern)?, gains_to_tensor(&s.gains))))
            .collect::<Result<Vec<_>, CgeError>>()?;
        Ok(TrainingSet {
            rows,
            cols,
            pilots,
            pairs,
        })
    }
}

/// Mean generator NMSE over `pairs`.
pub fn mean_nmse(generator: &Network, pairs: &[&(ConditionTensor, Tensor)]) -> Result<f64, CgeError> {
    if pairs.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (c, h) in pairs {
        let est = tensor_to_gains(&generator.forward(&c.0)?)?;
        total += nmse(&est, &tensor_to_gains(h)?)?;
    }
    Ok(total / pairs.len() as f64)
}

/// Deterministic train/validation split of `n` indices.
pub fn split_indices(n: usize, validation_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_5EED));
    let n_val = ((n as f64 * validation_fraction).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    let val = idx[..n_val].to_vec();
    let train = idx[n_val..].to_vec();
    (train, val)
}

/// Adversarial training with default progress handling.
pub fn train_cgan(set: &TrainingSet, hyper: &CganHyper, seed: u64) -> Result<CganModel, CgeError> {
    train_cgan_with(set, hyper, seed, |_| {})
}

/// Adversarial training; `on_epoch` observes each finished epoch.
pub fn train_cgan_with(
    set: &TrainingSet,
    hyper: &CganHyper,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<CganModel, CgeError> {
    if set.pairs.len() < 64 {
        return Err(CgeError::DatasetTooSmall(set.pairs.len()));
    }
    let mut model = CganModel::init(set.rows, set.cols, set.pilots, *hyper, seed)?;
    for (c, h) in &set.pairs {
        let expected = [set.rows, set.cols];
        if c.extents() != (set.rows, set.cols) || h.shape()[1..] != expected {
            return Err(CgeError::ExtentMismatch {
                expected: format!("{}x{}", set.rows, set.cols),
                found: format!("{:?} / {:?}", c.0.shape(), h.shape()),
            });
        }
    }
    let (mut train_idx, val_idx) = split_indices(set.pairs.len(), hyper.validation_fraction, seed);
    let val: Vec<_> = val_idx.iter().map(|&i| &set.pairs[i]).collect();
    model.history.initial_val_nmse = mean_nmse(&model.generator, &val)?;

    let mut g_state = AdamState::new(&model.generator, hyper.adam);
    let mut d_state = AdamState::new(&model.discriminator, hyper.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let batch_size = hyper.batch_size.max(1);
    let mut step = 0usize;

    for epoch in 0..hyper.epochs {
        train_idx.shuffle(&mut rng);
        let (mut d_sum, mut adv_sum, mut l1_sum, mut count) = (0.0f64, 0.0f64, 0.0f64, 0usize);
        for batch in train_idx.chunks(batch_size) {
            step += 1;
            let check = |v: f64, what: &str| {
                if v.is_finite() {
                    Ok(())
                } else {
                    Err(CgeError::NonFiniteLoss {
                        what: what.to_string(),
                        epoch,
                        step,
                    })
                }
            };

            // discriminator step
            let mut d_grads = Gradients::zeros_like(&model.discriminator);
            let mut fakes = Vec::with_capacity(batch.len());
            for &i in batch {
                let (cond, real) = &set.pairs[i];
                let (fake, g_trace) = model.generator.forward_traced(&cond.0)?;
                for (gains, target) in [(real, 1.0f32), (&fake, 0.0f32)] {
                    let input = cond.0.concat_channels(gains)?;
                    let (map, trace) = model.discriminator.forward_traced(&input)?;
                    let (_, prob) = discriminator_head(&map);
                    let loss = bce_loss(&Tensor::full(&[1], prob), &Tensor::full(&[1], target))?;
                    check(loss, "discriminator loss")?;
                    d_sum += loss / 2.0;
                    let (g, _) = model.discriminator.backward(&trace, &head_grad(&map, prob, target))?;
                    d_grads.add_assign(&g)?;
                }
                fakes.push((fake, g_trace));
            }
            d_grads.scale(1.0 / (2 * batch.len()) as f32);
            adam_step(&mut model.discriminator, &d_grads, &mut d_state).map_err(|e| non_finite(e, epoch, step))?;

            // generator step
            let mut g_grads = Gradients::zeros_like(&model.generator);
            for (&i, (fake, g_trace)) in batch.iter().zip(&fakes) {
                let (cond, real) = &set.pairs[i];
                let input = cond.0.concat_channels(fake)?;
                let (map, trace) = model.discriminator.forward_traced(&input)?;
                let (_, prob) = discriminator_head(&map);
                let adv = bce_loss(&Tensor::full(&[1], prob), &Tensor::full(&[1], 1.0))?;
                let l1 = l1_loss(fake, real)?;
                check(adv, "generator adversarial loss")?;
                check(l1, "generator l1 loss")?;
                adv_sum += adv;
                l1_sum += l1;
                let (_, d_input) = model.discriminator.backward(&trace, &head_grad(&map, prob, 1.0))?;
                let mut grad_fake = d_input.channel_range(CONDITION_CHANNELS, CONDITION_CHANNELS + GAIN_CHANNELS)?;
                grad_fake.add_assign(&l1_grad(fake, real, hyper.lambda_l1)?)?;
                let (g, _) = model.generator.backward(g_trace, &grad_fake)?;
                g_grads.add_assign(&g)?;
            }
            g_grads.scale(1.0 / batch.len() as f32);
            adam_step(&mut model.generator, &g_grads, &mut g_state).map_err(|e| non_finite(e, epoch, step))?;
            count += batch.len();
        }
        let n = count.max(1) as f64;
        let stats = EpochStats {
            epoch: epoch + 1,
            d_loss: d_sum / n,
            g_adv_loss: adv_sum / n,
            g_l1_loss: l1_sum / n,
            val_nmse: mean_nmse(&model.generator, &val)?,
        };
        if !stats.val_nmse.is_finite() {
            return Err(CgeError::NonFiniteLoss {
                what: "validation nmse".into(),
                epoch,
                step,
            });
        }
        on_epoch(&stats);
        model.history.epochs.push(stats);
    }
    Ok(model)
}

fn non_finite(e: NnError, epoch: usize, step: usize) -> CgeError {
    match e {
        NnError::NonFinite { what } => CgeError::NonFiniteLoss { what, epoch, step },
        other => CgeError::Nn(other),
    }
}

/// Paired held-out comparison of the generator against the LS baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmseComparison {
    pub cge: f64,
    pub ls: f64,
    pub samples: usize,
}

pub fn compare_with_ls(model: &CganModel, samples: &[ChannelSample]) -> Result<NmseComparison, CgeError> {
    let pattern = model.pilot_pattern()?;
    let (mut cge, mut ls) = (0.0, 0.0);
    for s in samples {
        let est = estimate(model, &make_condition(&s.received, &pattern)?)?;
        cge += nmse(&est, &s.gains)?;
        ls += nmse(&ls_estimate(&s.received, &pattern)?, &s.gains)?;
    }
    let n = samples.len().max(1) as f64;
    Ok(NmseComparison {
        cge: cge / n,
        ls: ls / n,
        samples: samples.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerKind;

    fn small_task() -> TaskConfig {
        TaskConfig {
            rows: 16,
            cols: 16,
            ..TaskConfig::default()
        }
    }

    fn small_set(count: usize) -> TrainingSet {
        let task = small_task();
        TrainingSet::from_samples(&task.samples(count, 5).unwrap(), task.rows, task.cols, task.pilots).unwrap()
    }

    #[test]
    fn generator_architecture() {
        let g = build_generator(32, 32, 1).unwrap();
        let kinds: Vec<LayerKind> = g.layers.iter().map(|l| l.kind).collect();
        use LayerKind::{Conv, Deconv};
        assert_eq!(kinds, [Conv, Conv, Conv, Deconv, Deconv, Deconv]);
        assert!(g.layers[..5].iter().all(|l| l.activation == Activation::LeakyRelu { slope: 0.2 }));
        assert_eq!(g.layers[5].activation, Activation::Linear);
        let spatial: Vec<usize> = g.shape_chain(&[4, 32, 32]).unwrap().iter().map(|s| s[1]).collect();
        assert_eq!(spatial, [16, 8, 4, 8, 16, 32]);
        assert_eq!(g.shape_chain(&[4, 32, 32]).unwrap().last().unwrap(), &vec![2, 32, 32]);
        assert!(matches!(build_generator(20, 32, 1), Err(CgeError::IndivisibleExtents { .. })));
    }

    #[test]
    fn discriminator_architecture_and_range() {
        let d = build_discriminator(32, 32, 1).unwrap();
        assert_eq!(d.layers.len(), 4);
        assert!(d.layers.iter().all(|l| l.kind == LayerKind::Conv));
        assert!(d.layers[..3].iter().all(|l| l.activation == Activation::Relu));
        let chain = d.shape_chain(&[6, 32, 32]).unwrap();
        let spatial: Vec<usize> = chain.iter().map(|s| s[1]).collect();
        assert_eq!(spatial, [16, 8, 4, 2]);
        assert!(build_discriminator(24, 24, 1).is_err());

        let model = CganModel::init(32, 32, TaskConfig::default().pilots, CganHyper::default(), 3).unwrap();
        let sample = &TaskConfig::default().samples(1, 9).unwrap()[0];
        let c = make_condition(&sample.received, &model.pilot_pattern().unwrap()).unwrap();
        let p = model.discriminate(&c, &gains_to_tensor(&sample.gains)).unwrap();
        assert!(p > 0.0 && p < 1.0);
        let (_, saturated) = discriminator_head(&Tensor::full(&[1, 2, 2], 1e4));
        assert!(saturated <= 1.0);
    }

    #[test]
    fn condition_layout() {
        let task = TaskConfig::default();
        let pattern = task.pilots.pattern(32, 32).unwrap();
        let y = &task.samples(1, 2).unwrap()[0].received;
        let c = make_condition(y, &pattern).unwrap();
        assert_eq!(c.tensor().shape(), [4, 32, 32]);
        let d = c.tensor().data();
        let plane = 32 * 32;
        for r in 0..32 {
            for col in 0..32 {
                let i = r * 32 + col;
                match pattern.symbol_at(r, col) {
                    Some(p) => {
                        assert_eq!((d[i], d[plane + i]), (y.get(r, col).re, y.get(r, col).im));
                        assert_eq!((d[2 * plane + i], d[3 * plane + i]), (p.re, p.im));
                    }
                    None => assert!((0..4).all(|k| d[k * plane + i] == 0.0)),
                }
            }
        }
        let wrong = ComplexGrid::filled(16, 16, Complex32::new(0.0, 0.0));
        assert!(make_condition(&wrong, &pattern).is_err());
    }

    #[test]
    fn gains_tensor_round_trip() {
        let h = gen_channel(4, 16, 8, 2.0, 2.0).unwrap().gains;
        assert_eq!(tensor_to_gains(&gains_to_tensor(&h)).unwrap(), h);
    }

    #[test]
    fn estimate_checks_extents_and_is_pure() {
        let set = small_set(2);
        let model = CganModel::init(16, 16, set.pilots, CganHyper::default(), 1).unwrap();
        let a = estimate(&model, &set.pairs[0].0).unwrap();
        assert_eq!((a.rows(), a.cols()), (16, 16));
        assert_eq!(a, estimate(&model, &set.pairs[0].0).unwrap());
        let big = TrainingSet::from_samples(&TaskConfig::default().samples(1, 1).unwrap(), 32, 32, set.pilots).unwrap();
        assert!(matches!(estimate(&model, &big.pairs[0].0), Err(CgeError::ExtentMismatch { .. })));
    }

    #[test]
    fn training_is_deterministic_and_finite() {
        let set = small_set(64);
        let hyper = CganHyper {
            epochs: 2,
            ..CganHyper::default()
        };
        let a = train_cgan(&set, &hyper, 11).unwrap();
        let b = train_cgan(&set, &hyper, 11).unwrap();
        assert_eq!(a.generator, b.generator);
        assert_eq!(a.discriminator, b.discriminator);
        assert_eq!(a.history, b.history);
        assert_eq!(a.history.epochs.len(), 2);
        for e in &a.history.epochs {
            assert!([e.d_loss, e.g_adv_loss, e.g_l1_loss, e.val_nmse].iter().all(|v| v.is_finite()));
        }
        assert!(matches!(train_cgan(&small_set(63), &hyper, 1), Err(CgeError::DatasetTooSmall(63))));
    }

    #[test]
    fn split_is_seeded_and_disjoint() {
        let (train, val) = split_indices(100, 0.1, 4);
        assert_eq!((train.len(), val.len()), (90, 10));
        let mut all: Vec<usize> = train.iter().chain(&val).copied().collect();
        all.sort();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(split_indices(100, 0.1, 4), (train, val));
    }

    #[test]
    fn model_file_round_trip_and_rejections() {
        let set = small_set(64);
        let model = train_cgan(&set, &CganHyper { epochs: 1, ..CganHyper::default() }, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.cge");
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(loaded, model);
        assert_eq!(estimate(&loaded, &set.pairs[0].0).unwrap(), estimate(&model, &set.pairs[0].0).unwrap());

        let bytes = model_to_bytes(&model).unwrap();
        assert!(matches!(model_from_bytes(&bytes[..bytes.len() - 3]), Err(CgeError::Format(_))));
        let mut versioned = bytes.clone();
        versioned[4] = MODEL_VERSION + 1;
        assert!(matches!(
            model_from_bytes(&versioned),
            Err(CgeError::Version { found, .. }) if found == MODEL_VERSION + 1
        ));
        let mut magic = bytes;
        magic[0] = b'X';
        assert!(matches!(model_from_bytes(&magic), Err(CgeError::Format(_))));
    }

    /// 256 pairs at 10 dB: fifty epochs must beat the untrained generator.
    #[test]
    fn learns_on_small_dataset() {
        let task = TaskConfig::default();
        let set = TrainingSet::from_samples(&task.samples(256, 77).unwrap(), 32, 32, task.pilots).unwrap();
        let model = train_cgan(&set, &CganHyper::default(), 5).unwrap();
        let last = model.history.epochs.last().unwrap().val_nmse;
        assert!(last < model.history.initial_val_nmse, "{last} vs {}", model.history.initial_val_nmse);
    }
}
