//! Spatial-temporal encoder: a per-snapshot GCN stack followed by gated
//! temporal convolutions along the window axis.

use std::sync::Arc;

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::graph_store::GraphWindow;
use crate::model::{ModelConfig, TensorInfo};
use crate::sparse::CsrMatrix;
use crate::tensor::Matrix;

/// Encoder weights.
///
/// `temporal[l]` is a `K_t × D' × 2D'` kernel stored as `(K_t·D') × 2D'`;
/// row block `k` multiplies the input at relative position `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams<T = Matrix> {
    pub gcn: Vec<T>,
    pub gcn_bias: Vec<T>,
    pub temporal: Vec<T>,
    pub temporal_bias: Vec<T>,
}

impl<T> EncoderParams<T> {
    pub fn tensors(&self) -> Vec<&T> {
        self.gcn
            .iter()
            .chain(&self.gcn_bias)
            .chain(&self.temporal)
            .chain(&self.temporal_bias)
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut T> {
        self.gcn
            .iter_mut()
            .chain(&mut self.gcn_bias)
            .chain(&mut self.temporal)
            .chain(&mut self.temporal_bias)
            .collect()
    }

    pub(crate) fn from_iter(cfg: &ModelConfig, it: &mut impl Iterator<Item = T>) -> Self {
        let mut take = |n: usize| -> Vec<T> {
            (0..n).map(|_| it.next().expect("encoder tensor")).collect()
        };
        let nb = |n: usize| if cfg.use_bias { n } else { 0 };
        let gcn = take(cfg.spatial_layers);
        let gcn_bias = take(nb(cfg.spatial_layers));
        let temporal = take(cfg.temporal_layers);
        let temporal_bias = take(nb(cfg.temporal_layers));
        Self {
            gcn,
            gcn_bias,
            temporal,
            temporal_bias,
        }
    }

    pub(crate) fn layout(cfg: &ModelConfig) -> Vec<TensorInfo> {
        let (d, h, k) = (cfg.input_dim, cfg.hidden_dim, cfg.kernel_width);
        let mut out = Vec::new();
        for l in 0..cfg.spatial_layers {
            let fan_in = if l == 0 { d } else { h };
            out.push(TensorInfo::new(format!("encoder.gcn.{l}"), &[fan_in, h]));
        }
        if cfg.use_bias {
            for l in 0..cfg.spatial_layers {
                out.push(TensorInfo::new(format!("encoder.gcn_bias.{l}"), &[h]));
            }
        }
        for l in 0..cfg.temporal_layers {
            out.push(TensorInfo::new(format!("encoder.temporal.{l}"), &[k, h, 2 * h]));
        }
        if cfg.use_bias {
            for l in 0..cfg.temporal_layers {
                out.push(TensorInfo::new(format!("encoder.temporal_bias.{l}"), &[2 * h]));
            }
        }
        out
    }
}

/// Per-snapshot node embeddings H, one `N × D'` matrix per window offset.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialEmbeddings(pub Vec<Matrix>);

/// Temporal node embeddings Z, one `N × D'` matrix per reduced position.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalEmbeddings(pub Vec<Matrix>);

impl SpatialEmbeddings {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TemporalEmbeddings {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `act(adj · H · Θ + b)` on the tape.
pub(crate) fn gcn_layer_g(
    g: &mut Graph,
    adj: &Arc<CsrMatrix>,
    h: Var,
    theta: Var,
    bias: Option<Var>,
    relu: bool,
) -> Var {
    // Multiply by Θ first when it shrinks the width; the product is the same.
    let (hin, tout) = (g.value(h).cols(), g.value(theta).cols());
    let mut out = if tout < hin {
        let p = g.matmul(h, theta);
        g.spmm(adj, p)
    } else {
        let p = g.spmm(adj, h);
        g.matmul(p, theta)
    };
    if let Some(b) = bias {
        out = g.add_row(out, b);
    }
    if relu {
        g.relu(out)
    } else {
        out
    }
}

/// Stack of GCN layers; ReLU after every layer unless `final_relu` is false,
/// in which case the last layer stays linear.
pub(crate) fn gcn_stack_g(
    g: &mut Graph,
    adj: &Arc<CsrMatrix>,
    x: Var,
    weights: &[Var],
    biases: &[Var],
    final_relu: bool,
) -> Var {
    let mut h = x;
    for (l, &w) in weights.iter().enumerate() {
        let last = l + 1 == weights.len();
        h = gcn_layer_g(g, adj, h, w, biases.get(l).copied(), !last || final_relu);
    }
    h
}

/// Valid 1-D convolution along the sequence: output `s` is
/// `[Z_s | … | Z_{s+K−1}] · kernel (+ bias)`.
pub(crate) fn temporal_conv_g(g: &mut Graph, seq: &[Var], kernel: Var, bias: Option<Var>) -> Result<Vec<Var>> {
    let c_in = seq.first().map_or(0, |&v| g.value(v).cols());
    let rows = g.value(kernel).rows();
    if c_in == 0 || !rows.is_multiple_of(c_in) {
        return Err(Error::Shape(format!(
            "kernel with {rows} rows does not fit {c_in} input channels"
        )));
    }
    let k = rows / c_in;
    if seq.len() < k {
        return Err(Error::Shape(format!(
            "sequence shorter than kernel: length {} < K_t {k}",
            seq.len()
        )));
    }
    let mut out = Vec::with_capacity(seq.len() + 1 - k);
    for s in 0..=seq.len() - k {
        let stacked = if k == 1 { seq[s] } else { g.concat_cols(&seq[s..s + k]) };
        let mut e = g.matmul(stacked, kernel);
        if let Some(b) = bias {
            e = g.add_row(e, b);
        }
        out.push(e);
    }
    Ok(out)
}

/// `tanh(E[:, :d]) ⊙ σ(E[:, d:2d])`
pub(crate) fn glu_g(g: &mut Graph, e: Var) -> Var {
    let w = g.value(e).cols();
    let d = w / 2;
    let a = g.slice_cols(e, 0, d);
    let b = g.slice_cols(e, d, w);
    let ta = g.tanh(a);
    let sb = g.sigmoid(b);
    g.mul(ta, sb)
}

pub(crate) fn glu_layer_g(g: &mut Graph, seq: &[Var], kernel: Var, bias: Option<Var>) -> Result<Vec<Var>> {
    let e = temporal_conv_g(g, seq, kernel, bias)?;
    Ok(e.into_iter().map(|e| glu_g(g, e)).collect())
}

pub(crate) fn spatial_encode_g(
    g: &mut Graph,
    window: &GraphWindow,
    params: &EncoderParams<Var>,
) -> Vec<Var> {
    (0..window.tau())
        .map(|r| {
            let x = g.constant(window.snapshot(r).features().clone());
            gcn_stack_g(g, window.norm_adj(r), x, &params.gcn, &params.gcn_bias, true)
        })
        .collect()
}

pub(crate) fn temporal_encode_g(g: &mut Graph, h: &[Var], params: &EncoderParams<Var>) -> Result<Vec<Var>> {
    let mut z = h.to_vec();
    for (l, &kernel) in params.temporal.iter().enumerate() {
        z = glu_layer_g(g, &z, kernel, params.temporal_bias.get(l).copied())?;
    }
    Ok(z)
}

fn bind(g: &mut Graph, params: &EncoderParams) -> EncoderParams<Var> {
    let mut vars = params.tensors().into_iter().map(|m| g.constant(m.clone()));
    EncoderParams {
        gcn: params.gcn.iter().map(|_| vars.next().unwrap()).collect(),
        gcn_bias: params.gcn_bias.iter().map(|_| vars.next().unwrap()).collect(),
        temporal: params.temporal.iter().map(|_| vars.next().unwrap()).collect(),
        temporal_bias: params.temporal_bias.iter().map(|_| vars.next().unwrap()).collect(),
    }
}

/// `ReLU(adj · H_in · Θ)`
pub fn gcn_layer(adj: &CsrMatrix, h_in: &Matrix, theta: &Matrix) -> Result<Matrix> {
    if adj.n_cols() != h_in.rows() || h_in.cols() != theta.rows() {
        return Err(Error::Shape(format!(
            "gcn_layer: adjacency {}x{}, input {:?}, weight {:?}",
            adj.n_rows(),
            adj.n_cols(),
            h_in.shape(),
            theta.shape()
        )));
    }
    let mut g = Graph::new();
    let adj = Arc::new(adj.clone());
    let h = g.constant(h_in.clone());
    let w = g.constant(theta.clone());
    let out = gcn_layer_g(&mut g, &adj, h, w, None, true);
    Ok(g.value(out).clone())
}

/// Applies the GCN stack to every snapshot of the window.
pub fn spatial_encode(window: &GraphWindow, params: &EncoderParams) -> Result<SpatialEmbeddings> {
    let Some(first) = params.gcn.first() else {
        return Err(Error::Config("encoder has no GCN layers".into()));
    };
    let d = window.snapshot(0).feature_dim();
    if first.rows() != d {
        return Err(Error::Shape(format!(
            "first GCN weight expects {} input features, window has {d}",
            first.rows()
        )));
    }
    let mut g = Graph::new();
    let p = bind(&mut g, params);
    let h = spatial_encode_g(&mut g, window, &p);
    Ok(SpatialEmbeddings(h.into_iter().map(|v| g.value(v).clone()).collect()))
}

/// One gated temporal layer: valid convolution to `2d` channels, then GLU.
pub fn glu_temporal_layer(z_in: &[Matrix], kernel: &Matrix) -> Result<Vec<Matrix>> {
    let mut g = Graph::new();
    let seq: Vec<Var> = z_in.iter().map(|m| g.constant(m.clone())).collect();
    let k = g.constant(kernel.clone());
    let out = glu_layer_g(&mut g, &seq, k, None)?;
    Ok(out.into_iter().map(|v| g.value(v).clone()).collect())
}

/// The linear part of a temporal layer (no gate), exposed for adjoint checks.
pub fn temporal_conv(x: &[Matrix], kernel: &Matrix) -> Result<Vec<Matrix>> {
    let mut g = Graph::new();
    let seq: Vec<Var> = x.iter().map(|m| g.constant(m.clone())).collect();
    let k = g.constant(kernel.clone());
    let out = temporal_conv_g(&mut g, &seq, k, None)?;
    Ok(out.into_iter().map(|v| g.value(v).clone()).collect())
}

/// Stacks the gated layers; output length is `τ − L·(K_t − 1)`.
pub fn temporal_encode(h: &SpatialEmbeddings, params: &EncoderParams) -> Result<TemporalEmbeddings> {
    let mut g = Graph::new();
    let p = bind(&mut g, params);
    let seq: Vec<Var> = h.0.iter().map(|m| g.constant(m.clone())).collect();
    let z = temporal_encode_g(&mut g, &seq, &p)?;
    Ok(TemporalEmbeddings(z.into_iter().map(|v| g.value(v).clone()).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph_store::Snapshot;

    #[test]
    fn gcn_identity_and_zero_cases() {
        let h = Matrix::from_rows(&[[1.0, 2.0], [0.5, 0.0], [3.0, 1.0]]);
        let out = gcn_layer(&CsrMatrix::identity(3), &h, &Matrix::identity(2)).unwrap();
        assert_eq!(out, h);
        let zero = gcn_layer(&CsrMatrix::identity(3), &Matrix::zeros(3, 2), &Matrix::identity(2)).unwrap();
        assert_eq!(zero, Matrix::zeros(3, 2));
    }

    #[test]
    fn gcn_two_node_hand_case() {
        let adj = CsrMatrix::from_dense(&Matrix::filled(2, 2, 0.5));
        let out = gcn_layer(&adj, &Matrix::from_rows(&[[1.0], [3.0]]), &Matrix::from_rows(&[[1.0]])).unwrap();
        assert_eq!(out, Matrix::from_rows(&[[2.0], [2.0]]));
    }

    #[test]
    fn gcn_shape_mismatch() {
        assert!(gcn_layer(&CsrMatrix::identity(2), &Matrix::zeros(3, 2), &Matrix::zeros(2, 2)).is_err());
        assert!(gcn_layer(&CsrMatrix::identity(3), &Matrix::zeros(3, 2), &Matrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn glu_zero_kernel_gives_zero() {
        let z = vec![Matrix::filled(2, 1, 1.0); 3];
        let out = glu_temporal_layer(&z, &Matrix::zeros(2, 2)).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|m| m.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn glu_scalar_case() {
        // K_t = 1, d = 1: E = z · [1, 0] → tanh(1)·σ(0)
        let out = glu_temporal_layer(&[Matrix::from_rows(&[[1.0]])], &Matrix::from_rows(&[[1.0, 0.0]])).unwrap();
        let v = out[0].get(0, 0);
        assert!((v - 1f64.tanh() * 0.5).abs() < 1e-15);
        assert!((v - 0.380_797).abs() < 1e-6);
    }

    #[test]
    fn glu_length_rules() {
        let z = vec![Matrix::filled(2, 1, 1.0); 2];
        assert_eq!(glu_temporal_layer(&z, &Matrix::zeros(2, 2)).unwrap().len(), 1);
        let err = glu_temporal_layer(&z, &Matrix::zeros(3, 2)).unwrap_err();
        assert!(err.to_string().contains("sequence shorter than kernel"));
    }

    #[test]
    fn spatial_encode_shapes_and_zero_features() {
        let s = Snapshot::new(0, 4, [(0, 1), (2, 3)], Matrix::zeros(4, 3)).unwrap();
        let w = GraphWindow::from_snapshots(vec![s]).unwrap();
        let params = EncoderParams {
            gcn: vec![Matrix::filled(3, 5, 0.3), Matrix::filled(5, 5, -0.2)],
            gcn_bias: vec![],
            temporal: vec![],
            temporal_bias: vec![],
        };
        let h = spatial_encode(&w, &params).unwrap();
        assert_eq!(h.len(), 1);
        assert_eq!(h.0[0].shape(), (4, 5));
        assert!(h.0[0].data().iter().all(|&v| v == 0.0));
    }
}
