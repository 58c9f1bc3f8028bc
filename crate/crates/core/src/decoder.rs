//! Decoder: transposed gated convolutions back to window length, fusion
//! with the spatial memory readout, a GCN attribute decoder and a bilinear
//! structure decoder.

use std::sync::Arc;

use crate::autograd::{Graph, Var};
use crate::encoder::{gcn_stack_g, glu_g};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, TensorInfo};
use crate::sparse::CsrMatrix;
use crate::tensor::Matrix;

/// Decoder weights.
///
/// `temporal[l]` is a `K_t × 2D' × 4D'` kernel stored as `(K_t·2D') × 4D'`;
/// the GLU halves its output back to `2D'`. Row block `k` multiplies the
/// input `k` steps behind the output position.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderParams<T = Matrix> {
    pub temporal: Vec<T>,
    pub temporal_bias: Vec<T>,
    /// `2D' × D'`
    pub projection: T,
    pub projection_bias: T,
    /// `2D' × D'` over `[M̂_sp | Ẑ]`.
    pub fusion: T,
    pub fusion_bias: T,
    /// `D' × D'` layers, the last one `D' × D`.
    pub gcn: Vec<T>,
    pub gcn_bias: Vec<T>,
    /// `D' × D'`, symmetrized before use.
    pub structure: T,
}

impl<T> DecoderParams<T> {
    pub fn tensors(&self) -> Vec<&T> {
        let mut out: Vec<&T> = self.temporal.iter().chain(&self.temporal_bias).collect();
        out.extend([&self.projection, &self.projection_bias, &self.fusion, &self.fusion_bias]);
        out.extend(self.gcn.iter().chain(&self.gcn_bias));
        out.push(&self.structure);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut T> {
        let mut out: Vec<&mut T> = self.temporal.iter_mut().chain(&mut self.temporal_bias).collect();
        out.extend([
            &mut self.projection,
            &mut self.projection_bias,
            &mut self.fusion,
            &mut self.fusion_bias,
        ]);
        out.extend(self.gcn.iter_mut().chain(&mut self.gcn_bias));
        out.push(&mut self.structure);
        out
    }

    pub(crate) fn from_iter(cfg: &ModelConfig, it: &mut impl Iterator<Item = T>) -> Self {
        let mut take = |n: usize| -> Vec<T> {
            (0..n).map(|_| it.next().expect("decoder tensor")).collect()
        };
        let nb = |n: usize| if cfg.use_bias { n } else { 0 };
        let temporal = take(cfg.temporal_layers);
        let temporal_bias = take(nb(cfg.temporal_layers));
        let [projection, projection_bias, fusion, fusion_bias]: [T; 4] =
            take(4).try_into().ok().expect("four decoder tensors");
        let gcn = take(cfg.spatial_layers);
        let gcn_bias = take(nb(cfg.spatial_layers));
        let structure = take(1).pop().expect("structure tensor");
        Self {
            temporal,
            temporal_bias,
            projection,
            projection_bias,
            fusion,
            fusion_bias,
            gcn,
            gcn_bias,
            structure,
        }
    }

    pub(crate) fn layout(cfg: &ModelConfig) -> Vec<TensorInfo> {
        let (d, h, k) = (cfg.input_dim, cfg.hidden_dim, cfg.kernel_width);
        let mut out = Vec::new();
        for l in 0..cfg.temporal_layers {
            out.push(TensorInfo::new(format!("decoder.temporal.{l}"), &[k, 2 * h, 4 * h]));
        }
        if cfg.use_bias {
            for l in 0..cfg.temporal_layers {
                out.push(TensorInfo::new(format!("decoder.temporal_bias.{l}"), &[4 * h]));
            }
        }
        out.push(TensorInfo::new("decoder.projection", &[2 * h, h]));
        out.push(TensorInfo::new("decoder.projection_bias", &[h]));
        out.push(TensorInfo::new("decoder.fusion", &[2 * h, h]));
        out.push(TensorInfo::new("decoder.fusion_bias", &[h]));
        let width = |l: usize| if l + 1 == cfg.spatial_layers { d } else { h };
        for l in 0..cfg.spatial_layers {
            out.push(TensorInfo::new(format!("decoder.gcn.{l}"), &[h, width(l)]));
        }
        if cfg.use_bias {
            for l in 0..cfg.spatial_layers {
                out.push(TensorInfo::new(format!("decoder.gcn_bias.{l}"), &[width(l)]));
            }
        }
        out.push(TensorInfo::new("decoder.structure", &[h, h]));
        out
    }
}

/// Which structure entries to decode.
#[derive(Clone, Debug, PartialEq)]
pub enum StructureMode {
    /// The full `N × N` matrix.
    Dense,
    /// Only the listed `(i, j)` pairs.
    Sampled(Arc<Vec<(usize, usize)>>),
}

/// Decoded structure for one snapshot.
#[derive(Clone, Debug, PartialEq)]
pub enum StructureOutput {
    Dense(Matrix),
    Sampled {
        pairs: Arc<Vec<(usize, usize)>>,
        values: Vec<f64>,
    },
}

impl StructureOutput {
    /// Entry `(i, j)` if it was decoded.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        match self {
            Self::Dense(m) => (i < m.rows() && j < m.cols()).then(|| m.get(i, j)),
            Self::Sampled { pairs, values } => {
                pairs.iter().position(|&p| p == (i, j)).map(|k| values[k])
            }
        }
    }
}

/// Reconstructed attributes and structure for the decoded window offsets.
#[derive(Clone, Debug, PartialEq)]
pub struct Reconstruction {
    /// Window offsets covered, in order.
    pub offsets: Vec<usize>,
    pub attributes: Vec<Matrix>,
    pub structure: Vec<StructureOutput>,
}

/// Transposed valid convolution: output `j` is
/// `[Y_j | Y_{j−1} | … | Y_{j−K+1}] · kernel`, with out-of-range inputs
/// read as zero, so the sequence grows by `K − 1`.
pub(crate) fn transposed_conv_g(g: &mut Graph, seq: &[Var], kernel: Var, bias: Option<Var>) -> Result<Vec<Var>> {
    let Some(&first) = seq.first() else {
        return Err(Error::Shape("transposed convolution of an empty sequence".into()));
    };
    let (n, c_in) = g.value(first).shape();
    let rows = g.value(kernel).rows();
    if c_in == 0 || !rows.is_multiple_of(c_in) {
        return Err(Error::Shape(format!(
            "kernel with {rows} rows does not fit {c_in} input channels"
        )));
    }
    let k = rows / c_in;
    let zero = (k > 1).then(|| g.constant(Matrix::zeros(n, c_in)));
    let len = seq.len() + k - 1;
    let mut out = Vec::with_capacity(len);
    for j in 0..len {
        let parts: Vec<Var> = (0..k)
            .map(|b| {
                j.checked_sub(b)
                    .and_then(|i| seq.get(i).copied())
                    .unwrap_or_else(|| zero.expect("zero pad"))
            })
            .collect();
        let stacked = if k == 1 { parts[0] } else { g.concat_cols(&parts) };
        let mut e = g.matmul(stacked, kernel);
        if let Some(b) = bias {
            e = g.add_row(e, b);
        }
        out.push(e);
    }
    Ok(out)
}

pub(crate) fn temporal_decode_g(g: &mut Graph, z: &[Var], m_tp: &[Var], params: &DecoderParams<Var>) -> Result<Vec<Var>> {
    if z.len() != m_tp.len() {
        return Err(Error::Shape(format!(
            "temporal decode: {} embeddings but {} memory readouts",
            z.len(),
            m_tp.len()
        )));
    }
    let mut seq: Vec<Var> = z
        .iter()
        .zip(m_tp)
        .map(|(&a, &b)| g.concat_cols(&[a, b]))
        .collect();
    for (l, &kernel) in params.temporal.iter().enumerate() {
        let e = transposed_conv_g(g, &seq, kernel, params.temporal_bias.get(l).copied())?;
        seq = e.into_iter().map(|e| glu_g(g, e)).collect();
    }
    Ok(seq
        .into_iter()
        .map(|s| {
            let p = g.matmul(s, params.projection);
            g.add_row(p, params.projection_bias)
        })
        .collect())
}

pub(crate) fn fuse_g(g: &mut Graph, m_sp: Var, z_hat: Var, params: &DecoderParams<Var>) -> Var {
    let cat = g.concat_cols(&[m_sp, z_hat]);
    let lin = g.matmul(cat, params.fusion);
    let lin = g.add_row(lin, params.fusion_bias);
    g.relu(lin)
}

pub(crate) fn decode_attributes_g(g: &mut Graph, adj: &Arc<CsrMatrix>, h_hat: Var, params: &DecoderParams<Var>) -> Var {
    gcn_stack_g(g, adj, h_hat, &params.gcn, &params.gcn_bias, false)
}

/// Decoded structure on the tape: an `N × N` matrix or a column of sampled
/// entries.
pub(crate) fn decode_structure_g(g: &mut Graph, h_hat: Var, w: Var, mode: &StructureMode) -> Var {
    let wt = g.transpose(w);
    let sum = g.add(w, wt);
    let s = g.scale(sum, 0.5);
    let hs = g.matmul(h_hat, s);
    let logits = match mode {
        StructureMode::Dense => g.matmul_nt(hs, h_hat),
        StructureMode::Sampled(pairs) => g.pair_dot(hs, h_hat, Arc::clone(pairs)),
    };
    g.sigmoid(logits)
}

fn check_seq(seq: &[Matrix], width: usize, what: &str) -> Result<()> {
    let Some(first) = seq.first() else {
        return Err(Error::Shape(format!("{what}: empty sequence")));
    };
    let n = first.rows();
    if seq.iter().any(|m| m.shape() != (n, width)) {
        return Err(Error::Shape(format!("{what}: every step must be {n}×{width}")));
    }
    Ok(())
}

fn bind(g: &mut Graph, params: &DecoderParams) -> DecoderParams<Var> {
    let mut vars = params.tensors().into_iter().map(|m| g.constant(m.clone()));
    let mut next = || vars.next().expect("decoder tensor");
    DecoderParams {
        temporal: params.temporal.iter().map(|_| next()).collect(),
        temporal_bias: params.temporal_bias.iter().map(|_| next()).collect(),
        projection: next(),
        projection_bias: next(),
        fusion: next(),
        fusion_bias: next(),
        gcn: params.gcn.iter().map(|_| next()).collect(),
        gcn_bias: params.gcn_bias.iter().map(|_| next()).collect(),
        structure: next(),
    }
}

/// Linear transposed convolution (no gate), the adjoint of
/// [`crate::encoder::temporal_conv`] when each kernel block is transposed.
pub fn transposed_conv(y: &[Matrix], kernel: &Matrix) -> Result<Vec<Matrix>> {
    let mut g = Graph::new();
    let seq: Vec<Var> = y.iter().map(|m| g.constant(m.clone())).collect();
    let k = g.constant(kernel.clone());
    let out = transposed_conv_g(&mut g, &seq, k, None)?;
    Ok(out.into_iter().map(|v| g.value(v).clone()).collect())
}

/// Restores `Z` (length τ') with its temporal readout to `τ` steps of width D'.
pub fn temporal_decode(z: &[Matrix], m_tp: &[Matrix], params: &DecoderParams) -> Result<Vec<Matrix>> {
    let h = params.projection.cols();
    check_seq(z, h, "temporal decode embeddings")?;
    check_seq(m_tp, h, "temporal decode readouts")?;
    if z[0].rows() != m_tp[0].rows() {
        return Err(Error::Shape("temporal decode: node counts differ".into()));
    }
    if params.projection.rows() != 2 * h {
        return Err(Error::Shape("projection must map 2D' to D'".into()));
    }
    for k in &params.temporal {
        if k.cols() != 4 * h || k.rows() % (2 * h) != 0 {
            return Err(Error::Shape(format!("decoder kernel {:?} does not fit width {h}", k.shape())));
        }
    }
    let mut g = Graph::new();
    let p = bind(&mut g, params);
    let zs: Vec<Var> = z.iter().map(|m| g.constant(m.clone())).collect();
    let ms: Vec<Var> = m_tp.iter().map(|m| g.constant(m.clone())).collect();
    let out = temporal_decode_g(&mut g, &zs, &ms, &p)?;
    Ok(out.into_iter().map(|v| g.value(v).clone()).collect())
}

/// `ReLU([M̂_sp | Ẑ] · W + b)`
pub fn fuse(m_sp: &Matrix, z_hat: &Matrix, params: &DecoderParams) -> Result<Matrix> {
    if m_sp.shape() != z_hat.shape() || params.fusion.rows() != 2 * m_sp.cols() {
        return Err(Error::Shape(format!(
            "fuse: readout {:?}, embedding {:?}, weight {:?}",
            m_sp.shape(),
            z_hat.shape(),
            params.fusion.shape()
        )));
    }
    let mut g = Graph::new();
    let p = bind(&mut g, params);
    let a = g.constant(m_sp.clone());
    let b = g.constant(z_hat.clone());
    let out = fuse_g(&mut g, a, b, &p);
    Ok(g.value(out).clone())
}

/// GCN attribute decoder; the last layer is linear.
pub fn decode_attributes(adj: &CsrMatrix, h_hat: &Matrix, params: &DecoderParams) -> Result<Matrix> {
    let mut width = h_hat.cols();
    for w in &params.gcn {
        if w.rows() != width {
            return Err(Error::Shape(format!("decoder GCN weight {:?} after width {width}", w.shape())));
        }
        width = w.cols();
    }
    if adj.n_cols() != h_hat.rows() {
        return Err(Error::Shape("decoder adjacency does not match node count".into()));
    }
    let mut g = Graph::new();
    let p = bind(&mut g, params);
    let adj = Arc::new(adj.clone());
    let h = g.constant(h_hat.clone());
    let out = decode_attributes_g(&mut g, &adj, h, &p);
    Ok(g.value(out).clone())
}

/// `σ(Ĥ S Ĥᵀ)` with `S = (W + Wᵀ)/2`. Dense decoding is refused above
/// `dense_cap` nodes.
pub fn decode_structure(h_hat: &Matrix, w_de: &Matrix, mode: &StructureMode, dense_cap: usize) -> Result<StructureOutput> {
    let (n, d) = h_hat.shape();
    if w_de.shape() != (d, d) {
        return Err(Error::Shape(format!("structure weight {:?} for width {d}", w_de.shape())));
    }
    match mode {
        StructureMode::Dense if n > dense_cap => {
            return Err(Error::Config(format!(
                "dense structure decoding refused: {n} nodes exceeds cap {dense_cap}"
            )))
        }
        StructureMode::Sampled(pairs) if pairs.iter().any(|&(i, j)| i >= n || j >= n) => {
            return Err(Error::Shape("sampled pair out of range".into()))
        }
        _ => {}
    }
    let mut g = Graph::new();
    let h = g.constant(h_hat.clone());
    let w = g.constant(w_de.clone());
    let out = decode_structure_g(&mut g, h, w, mode);
    let value = g.value(out).clone();
    Ok(match mode {
        StructureMode::Dense => StructureOutput::Dense(value),
        StructureMode::Sampled(pairs) => StructureOutput::Sampled {
            pairs: Arc::clone(pairs),
            values: value.into_vec(),
        },
    })
}
