//! Depth-order token encoder: Fourier features of projected box corners,
//! a two-layer MLP to the model width, and cross-attention fusion of box
//! tokens with the per-frame depth token set.
//!
//! Corner rows are [u, v, z_c] normalized by image width, image height,
//! and a depth ceiling before embedding so the trig arguments stay
//! bounded. Behind-camera corners are replaced by the (0,0,0) sentinel
//! row.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Graph, NodeId, ParamId, ParamSet, Tensor};
use crate::projection::ProjectedBox;
use crate::scene::{CameraIntrinsics, BOX_CORNERS};

/// Fourier feature layout: per scalar, the optional raw value followed by
/// (sin, cos) pairs per band with frequencies base^k * pi.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourierSpec {
    pub num_bands: usize,
    pub base: f64,
    pub include_input: bool,
}

impl Default for FourierSpec {
    fn default() -> Self {
        FourierSpec { num_bands: 4, base: 2.0, include_input: true }
    }
}

impl FourierSpec {
    pub fn dim_per_scalar(&self) -> usize {
        2 * self.num_bands + usize::from(self.include_input)
    }

    /// Embedding width of one box (8 corners x 3 components).
    pub fn box_dim(&self) -> usize {
        BOX_CORNERS * 3 * self.dim_per_scalar()
    }
}

/// Embeds one scalar: [raw?, sin(b^0 pi s), cos(b^0 pi s), sin(b^1 pi s), ...].
pub fn fourier_embed_scalar(s: f64, spec: &FourierSpec) -> Vec<f64> {
    let mut out = Vec::with_capacity(spec.dim_per_scalar());
    if spec.include_input {
        out.push(s);
    }
    let mut freq = std::f64::consts::PI;
    for _ in 0..spec.num_bands {
        out.push((freq * s).sin());
        out.push((freq * s).cos());
        freq *= spec.base;
    }
    out
}

/// Embeds corner rows in corner-major, component-major, band-major order.
pub fn fourier_embed_rows(rows: &[[f64; 3]], spec: &FourierSpec) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows.len() * 3 * spec.dim_per_scalar());
    for row in rows {
        for &component in row {
            out.extend(fourier_embed_scalar(component, spec));
        }
    }
    out
}

/// Normalized [u, v, z_c] rows for the eight corners of a projected box;
/// behind-camera corners become the (0,0,0) sentinel.
pub fn normalized_corner_rows(
    pbox: &ProjectedBox,
    k: &CameraIntrinsics,
    z_max: f64,
) -> [[f64; 3]; BOX_CORNERS] {
    let mut rows = [[0.0; 3]; BOX_CORNERS];
    for (i, row) in rows.iter_mut().enumerate() {
        if let Some([u, v]) = pbox.uv[i] {
            *row = [u / k.width as f64, v / k.height as f64, pbox.depth[i] / z_max];
        }
    }
    rows
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthEncoderConfig {
    pub d_model: usize,
    pub fourier: FourierSpec,
    /// Depth normalization ceiling in meters.
    pub z_max: f64,
    /// Adds the query tokens back onto the fused output.
    pub residual: bool,
}

impl Default for DepthEncoderConfig {
    fn default() -> Self {
        DepthEncoderConfig {
            d_model: 64,
            fourier: FourierSpec::default(),
            z_max: 80.0,
            residual: true,
        }
    }
}

/// Parameter handles for the encoder; the tensors live in a caller-owned
/// [`ParamSet`] so the toy model can train them alongside its own.
#[derive(Debug, Clone, Copy)]
pub struct DepthEncoderParams {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
}

impl DepthEncoderParams {
    /// Registers freshly initialized tensors under `prefix.` names. The MLP
    /// hidden width is 4x the model width.
    pub fn init(
        params: &mut ParamSet,
        prefix: &str,
        cfg: &DepthEncoderConfig,
        rng: &mut impl Rng,
    ) -> Self {
        let d = cfg.d_model;
        let f = cfg.fourier.box_dim();
        let hidden = 4 * d;
        let std_f = 1.0 / (f as f64).sqrt();
        let std_h = 1.0 / (hidden as f64).sqrt();
        let std_d = 1.0 / (d as f64).sqrt();
        DepthEncoderParams {
            w1: params.add(format!("{prefix}.mlp.w1"), Tensor::randn(&[f, hidden], std_f, rng)),
            b1: params.add(format!("{prefix}.mlp.b1"), Tensor::zeros(&[hidden])),
            w2: params.add(format!("{prefix}.mlp.w2"), Tensor::randn(&[hidden, d], std_h, rng)),
            b2: params.add(format!("{prefix}.mlp.b2"), Tensor::zeros(&[d])),
            wq: params.add(format!("{prefix}.fuse.wq"), Tensor::randn(&[d, d], std_d, rng)),
            wk: params.add(format!("{prefix}.fuse.wk"), Tensor::randn(&[d, d], std_d, rng)),
            wv: params.add(format!("{prefix}.fuse.wv"), Tensor::randn(&[d, d], std_d, rng)),
            wo: params.add(format!("{prefix}.fuse.wo"), Tensor::randn(&[d, d], std_d, rng)),
        }
    }

    /// Encodes N boxes into an (N, d_model) token tensor inside `graph`.
    /// `leaves` maps ParamIds to graph leaves (from `ParamSet::leaves`).
    pub fn encode_boxes_node(
        &self,
        graph: &mut Graph,
        leaves: &[NodeId],
        cfg: &DepthEncoderConfig,
        boxes: &[[[f64; 3]; BOX_CORNERS]],
    ) -> NodeId {
        let f = cfg.fourier.box_dim();
        let n = boxes.len();
        let mut embedded = Vec::with_capacity(n * f);
        for rows in boxes {
            embedded.extend(fourier_embed_rows(rows, &cfg.fourier));
        }
        let x = graph.leaf(Tensor::from_vec(&[n, f], embedded));
        let h = graph.matmul(x, leaves[self.w1.0]);
        let h = graph.add_bias(h, leaves[self.b1.0]);
        let h = graph.gelu(h);
        let h = graph.matmul(h, leaves[self.w2.0]);
        graph.add_bias(h, leaves[self.b2.0])
    }

    /// Cross-attention fusion: queries from `h_box` (m, d), keys and values
    /// from `h_depth` (n, d). With no depth tokens the box tokens pass
    /// through unchanged.
    pub fn fuse_node(
        &self,
        graph: &mut Graph,
        leaves: &[NodeId],
        cfg: &DepthEncoderConfig,
        h_box: NodeId,
        h_depth: Option<NodeId>,
    ) -> NodeId {
        let Some(h_depth) = h_depth else {
            return h_box;
        };
        let d = cfg.d_model;
        let m = graph.value(h_box).shape[0];
        let n = graph.value(h_depth).shape[0];
        if n == 0 {
            return h_box;
        }
        let q = graph.matmul(h_box, leaves[self.wq.0]);
        let k = graph.matmul(h_depth, leaves[self.wk.0]);
        let v = graph.matmul(h_depth, leaves[self.wv.0]);
        let q3 = graph.reshape(q, &[1, m, d]);
        let k3 = graph.reshape(k, &[1, n, d]);
        let v3 = graph.reshape(v, &[1, n, d]);
        let attn = graph.attention(q3, k3, v3, None);
        let attn2 = graph.reshape(attn, &[m, d]);
        let projected = graph.matmul(attn2, leaves[self.wo.0]);
        if cfg.residual {
            graph.add(h_box, projected)
        } else {
            projected
        }
    }
}

/// Standalone encoder owning its parameters; the module-level API the CLI
/// and tests use directly.
#[derive(Debug, Clone)]
pub struct DepthEncoder {
    pub config: DepthEncoderConfig,
    pub params: ParamSet,
    pub ids: DepthEncoderParams,
}

impl DepthEncoder {
    pub fn new(config: DepthEncoderConfig, rng: &mut impl Rng) -> Self {
        let mut params = ParamSet::new();
        let ids = DepthEncoderParams::init(&mut params, "depth", &config, rng);
        DepthEncoder { config, params, ids }
    }

    /// Hidden vector for one box given its normalized corner rows.
    pub fn encode_box(&self, rows: &[[f64; 3]; BOX_CORNERS]) -> Vec<f64> {
        let mut graph = Graph::new();
        let leaves = self.params.leaves(&mut graph);
        let node = self
            .ids
            .encode_boxes_node(&mut graph, &leaves, &self.config, &[*rows]);
        graph.value(node).data.clone()
    }

    /// Fuses box tokens (m, d) with depth tokens (n, d).
    pub fn fuse(&self, h_box: &Tensor, h_depth: &Tensor) -> Result<Tensor> {
        let d = self.config.d_model;
        if h_box.rank() != 2 || h_box.shape[1] != d {
            return Err(Error::shape("cross_attn_fuse h_box", format!("(m, {d})"), format!("{:?}", h_box.shape)));
        }
        if h_depth.rank() != 2 || (h_depth.shape[0] > 0 && h_depth.shape[1] != d) {
            return Err(Error::shape("cross_attn_fuse h_depth", format!("(n, {d})"), format!("{:?}", h_depth.shape)));
        }
        let mut graph = Graph::new();
        let leaves = self.params.leaves(&mut graph);
        let hb = graph.leaf(h_box.clone());
        let hd = if h_depth.shape[0] == 0 {
            None
        } else {
            Some(graph.leaf(h_depth.clone()))
        };
        let out = self.ids.fuse_node(&mut graph, &leaves, &self.config, hb, hd);
        Ok(graph.value(out).clone())
    }
}
