//! Model hyperparameters and the full set of trainable tensors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::decoder::DecoderParams;
use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::memory::MemoryBank;
use crate::tensor::Matrix;

/// How loss terms are aggregated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossNormalization {
    /// Each term divided by the number of contributing (timestamp, node) rows.
    Mean,
    /// Plain sums.
    Sum,
}

/// Components that can be switched off for ablation runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    /// Drop the spatial memory bank: zero spatial readout, no compactness or
    /// separateness terms for spatial features.
    pub no_spatial_memory: bool,
    /// Same for the temporal bank.
    pub no_temporal_memory: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Node attribute dimension D.
    pub input_dim: usize,
    /// Hidden dimension D'.
    pub hidden_dim: usize,
    /// Window size τ.
    pub window: usize,
    /// Temporal kernel width K_t.
    pub kernel_width: usize,
    pub spatial_layers: usize,
    /// Gated convolution depth; 0 disables temporal convolution.
    pub temporal_layers: usize,
    /// Items per spatial sub-bank (P_s).
    pub spatial_items: usize,
    /// Temporal bank items (P_t).
    pub temporal_items: usize,
    /// Features kept per item in the write step, clamped to the query count.
    pub top_k: usize,
    pub use_bias: bool,
    /// Attribute vs. structure weight α.
    pub alpha: f64,
    /// Separateness margin γ.
    pub margin: f64,
    /// Rescale memory items to unit norm after every write.
    pub mem_renorm: bool,
    /// Let the optimizer move memory items in addition to the write rule.
    pub item_gradients: bool,
    /// Reconstruct (and score) only the last snapshot of each window.
    pub last_only: bool,
    pub loss_normalization: LossNormalization,
    /// Largest node count decoded as a dense N×N structure matrix; above it
    /// edges plus an equal number of sampled non-edges are decoded.
    pub dense_cap: usize,
    pub ablation: Ablation,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_dim: 1,
            hidden_dim: 128,
            window: 3,
            kernel_width: 2,
            spatial_layers: 2,
            temporal_layers: 2,
            spatial_items: 6,
            temporal_items: 6,
            top_k: 32,
            use_bias: false,
            alpha: 0.3,
            margin: 1.0,
            mem_renorm: true,
            item_gradients: true,
            last_only: false,
            loss_normalization: LossNormalization::Mean,
            dense_cap: 20_000,
            ablation: Ablation::default(),
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// τ' = τ − L·(K_t − 1), or `None` when the window is too short.
    pub fn reduced_len(&self) -> Option<usize> {
        let shrink = self.temporal_layers * self.kernel_width.saturating_sub(1);
        self.window.checked_sub(shrink).filter(|&l| l >= 1)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.input_dim == 0 || self.hidden_dim == 0 {
            return fail("input and hidden dimensions must be positive".into());
        }
        if self.window == 0 {
            return fail("window size must be at least 1".into());
        }
        if self.kernel_width == 0 {
            return fail("kernel width must be at least 1".into());
        }
        if self.spatial_layers == 0 {
            return fail("at least one GCN layer is required".into());
        }
        if self.reduced_len().is_none() {
            return fail(format!(
                "temporal stack too deep: τ − L·(K_t−1) = {} − {}·{} < 1",
                self.window,
                self.temporal_layers,
                self.kernel_width - 1
            ));
        }
        if self.spatial_items < 2 || self.temporal_items < 2 {
            return fail("memory banks need at least 2 items each".into());
        }
        if self.top_k == 0 {
            return fail("top_k must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return fail(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return fail(format!("margin must be finite and non-negative, got {}", self.margin));
        }
        Ok(())
    }
}

/// Name and logical shape of one trainable tensor.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorInfo {
    pub(crate) fn new(name: impl Into<String>, shape: &[usize]) -> Self {
        Self {
            name: name.into(),
            shape: shape.to_vec(),
        }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Every trainable tensor of the model. `T` is `Matrix` for stored values
/// and `Var` while bound to an autograd graph.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParameters<T = Matrix> {
    pub config: ModelConfig,
    pub encoder: EncoderParams<T>,
    pub spatial_bank: MemoryBank<T>,
    pub temporal_bank: MemoryBank<T>,
    pub decoder: DecoderParams<T>,
}

impl<T> ModelParameters<T> {
    /// All tensors in flat order.
    pub fn tensors(&self) -> Vec<&T> {
        let mut out = self.encoder.tensors();
        out.extend(self.spatial_bank.tensors());
        out.extend(self.temporal_bank.tensors());
        out.extend(self.decoder.tensors());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut T> {
        let mut out = self.encoder.tensors_mut();
        out.extend(self.spatial_bank.tensors_mut());
        out.extend(self.temporal_bank.tensors_mut());
        out.extend(self.decoder.tensors_mut());
        out
    }

    /// Rebuilds from tensors given in flat order.
    pub fn from_tensors(config: ModelConfig, tensors: impl IntoIterator<Item = T>) -> Self {
        let mut it = tensors.into_iter();
        let encoder = EncoderParams::from_iter(&config, &mut it);
        let spatial_bank =
            MemoryBank::from_iter(config.window, config.top_k, config.mem_renorm, &mut it);
        let temporal_bank = MemoryBank::from_iter(1, config.top_k, config.mem_renorm, &mut it);
        let decoder = DecoderParams::from_iter(&config, &mut it);
        assert!(it.next().is_none(), "surplus tensors for model layout");
        Self {
            config,
            encoder,
            spatial_bank,
            temporal_bank,
            decoder,
        }
    }

    /// Applies `f` to every tensor, keeping the layout.
    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> ModelParameters<U> {
        let mapped: Vec<U> = self.tensors().into_iter().map(&mut f).collect();
        ModelParameters::from_tensors(self.config.clone(), mapped)
    }

    /// Flat-order indices of the memory-item tensors, spatial then temporal.
    pub(crate) fn item_ranges(&self) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let enc = self.encoder.tensors().len();
        let sp = self.spatial_bank.items.len();
        let sp_total = self.spatial_bank.tensors().len();
        let tp = self.temporal_bank.items.len();
        (enc..enc + sp, enc + sp_total..enc + sp_total + tp)
    }
}

/// Flat-order names and shapes for a configuration.
pub fn layout(config: &ModelConfig) -> Vec<TensorInfo> {
    let mut out = EncoderParams::<Matrix>::layout(config);
    out.extend(MemoryBank::<Matrix>::layout("spatial_memory", config.window, config.spatial_items, config.hidden_dim));
    out.extend(MemoryBank::<Matrix>::layout("temporal_memory", 1, config.temporal_items, config.hidden_dim));
    out.extend(DecoderParams::<Matrix>::layout(config));
    out
}

impl ModelParameters<Matrix> {
    /// Random initialization: weights uniform in ±1/√fan_in, biases zero,
    /// memory items uniform on the unit sphere.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let infos = layout(config);
        let tensors: Vec<Matrix> = infos
            .iter()
            .map(|info| init_tensor(info, &mut rng))
            .collect();
        Ok(Self::from_tensors(config.clone(), tensors))
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|m| m.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_parameters());
        for m in self.tensors() {
            out.extend_from_slice(m.data());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for m in self.tensors_mut() {
            let n = m.len();
            m.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        assert_eq!(offset, flat.len(), "flat vector length mismatch");
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|m| m.is_finite())
    }
}

/// `(rows, cols)` storage for a logical shape: leading axes are folded into
/// rows, so a `K × C_in × C_out` kernel is stored as `(K·C_in) × C_out`.
pub(crate) fn storage_shape(shape: &[usize]) -> (usize, usize) {
    match shape {
        [] => (1, 1),
        [c] => (1, *c),
        [lead @ .., c] => (lead.iter().product(), *c),
    }
}

fn init_tensor(info: &TensorInfo, rng: &mut ChaCha8Rng) -> Matrix {
    let (rows, cols) = storage_shape(&info.shape);
    let leaf = info.name.rsplit('.').next().unwrap_or("");
    if info.name.contains(".items") {
        let mut m = Matrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
        for (i, n) in m.row_norms().into_iter().enumerate() {
            m.row_mut(i).iter_mut().for_each(|v| *v /= n);
        }
        m
    } else if info.name.contains("bias") || leaf == "bias" {
        Matrix::zeros(rows, cols)
    } else {
        let bound = 1.0 / (rows as f64).sqrt();
        Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-bound..=bound))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            input_dim: 3,
            hidden_dim: 4,
            spatial_items: 2,
            temporal_items: 2,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn layout_matches_tensors() {
        for use_bias in [false, true] {
            let cfg = ModelConfig { use_bias, ..tiny() };
            let p = ModelParameters::init(&cfg).unwrap();
            let infos = layout(&cfg);
            let tensors = p.tensors();
            assert_eq!(infos.len(), tensors.len());
            for (info, m) in infos.iter().zip(tensors) {
                assert_eq!(storage_shape(&info.shape), m.shape(), "{}", info.name);
            }
            let mut names: Vec<&str> = infos.iter().map(|i| i.name.as_str()).collect();
            names.sort_unstable();
            names.dedup();
            assert_eq!(names.len(), infos.len(), "tensor names must be unique");
        }
    }

    #[test]
    fn init_is_seeded_and_items_are_unit() {
        let a = ModelParameters::init(&tiny()).unwrap();
        let b = ModelParameters::init(&tiny()).unwrap();
        assert_eq!(a, b);
        for item in a.spatial_bank.items.iter().chain(&a.temporal_bank.items) {
            for n in item.row_norms() {
                assert!((n - 1.0).abs() < 1e-12);
            }
        }
        let c = ModelParameters::init(&ModelConfig { seed: 1, ..tiny() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn flat_roundtrip() {
        let mut p = ModelParameters::init(&tiny()).unwrap();
        let flat = p.to_flat();
        assert_eq!(flat.len(), p.num_parameters());
        let doubled: Vec<f64> = flat.iter().map(|v| v * 2.0).collect();
        p.set_flat(&doubled);
        assert_eq!(p.to_flat(), doubled);
    }

    #[test]
    fn config_validation() {
        assert!(tiny().validate().is_ok());
        let deep = ModelConfig { window: 3, temporal_layers: 2, kernel_width: 3, ..tiny() };
        assert!(deep.validate().is_err());
        assert_eq!(ModelConfig { window: 3, ..tiny() }.reduced_len(), Some(1));
        assert_eq!(ModelConfig { window: 5, ..tiny() }.reduced_len(), Some(3));
        assert!(ModelConfig { spatial_items: 1, ..tiny() }.validate().is_err());
        assert!(ModelConfig { alpha: 1.5, ..tiny() }.validate().is_err());
    }
}
