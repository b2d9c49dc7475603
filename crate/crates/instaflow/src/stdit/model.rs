//! The toy spatial-temporal diffusion transformer.
//!
//! Base stack: alternating spatial / temporal blocks, each pre-norm
//! residual with self-attention, text cross-attention, and a pointwise
//! feed-forward. A control branch duplicates the first K base blocks;
//! control block k receives its running state plus the summed condition
//! tokens and feeds a zero-initialized projection of its output back into
//! base block k's output, so at initialization conditioning is an exact
//! no-op.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::depth::DepthEncoderParams;
use crate::error::Result;
use crate::latent::LatentTensor;
use crate::nn::{Graph, NodeId, ParamId, ParamSet, Tensor};
use crate::scene::BOX_CORNERS;

use super::config::{BlockKind, ToyStDiTConfig};
use super::patch::{patch_rearrange, tokens_per_frame};

/// Condition inputs for one clip: latents share the target's (t,h,w,c)
/// geometry; `boxes[t]` holds normalized corner rows per instance.
#[derive(Debug, Clone)]
pub struct CondInputs {
    pub motion: LatentTensor,
    pub layout: LatentTensor,
    pub lane: LatentTensor,
    pub boxes: Vec<Vec<[[f64; 3]; BOX_CORNERS]>>,
}

#[derive(Debug, Clone, Copy)]
struct BlockParams {
    ln1_g: ParamId,
    ln1_b: ParamId,
    attn_wq: ParamId,
    attn_bq: ParamId,
    attn_wk: ParamId,
    attn_bk: ParamId,
    attn_wv: ParamId,
    attn_bv: ParamId,
    attn_wo: ParamId,
    attn_bo: ParamId,
    ln2_g: ParamId,
    ln2_b: ParamId,
    cross_wq: ParamId,
    cross_bq: ParamId,
    cross_wk: ParamId,
    cross_bk: ParamId,
    cross_wv: ParamId,
    cross_bv: ParamId,
    cross_wo: ParamId,
    cross_bo: ParamId,
    ln3_g: ParamId,
    ln3_b: ParamId,
    ffn_w1: ParamId,
    ffn_b1: ParamId,
    ffn_w2: ParamId,
    ffn_b2: ParamId,
}

impl BlockParams {
    fn init(params: &mut ParamSet, prefix: &str, d: usize, rng: &mut ChaCha8Rng) -> Self {
        let hidden = 4 * d;
        let std_d = 1.0 / (d as f64).sqrt();
        let std_h = 1.0 / (hidden as f64).sqrt();
        let mat = |p: &mut ParamSet, name: String, rows: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng| {
            p.add(name, Tensor::randn(&[rows, cols], std, rng))
        };
        BlockParams {
            ln1_g: params.add(format!("{prefix}.ln1.g"), ones(d)),
            ln1_b: params.add(format!("{prefix}.ln1.b"), Tensor::zeros(&[d])),
            attn_wq: mat(params, format!("{prefix}.attn.wq"), d, d, std_d, rng),
            attn_bq: params.add(format!("{prefix}.attn.bq"), Tensor::zeros(&[d])),
            attn_wk: mat(params, format!("{prefix}.attn.wk"), d, d, std_d, rng),
            attn_bk: params.add(format!("{prefix}.attn.bk"), Tensor::zeros(&[d])),
            attn_wv: mat(params, format!("{prefix}.attn.wv"), d, d, std_d, rng),
            attn_bv: params.add(format!("{prefix}.attn.bv"), Tensor::zeros(&[d])),
            attn_wo: mat(params, format!("{prefix}.attn.wo"), d, d, std_d, rng),
            attn_bo: params.add(format!("{prefix}.attn.bo"), Tensor::zeros(&[d])),
            ln2_g: params.add(format!("{prefix}.ln2.g"), ones(d)),
            ln2_b: params.add(format!("{prefix}.ln2.b"), Tensor::zeros(&[d])),
            cross_wq: mat(params, format!("{prefix}.cross.wq"), d, d, std_d, rng),
            cross_bq: params.add(format!("{prefix}.cross.bq"), Tensor::zeros(&[d])),
            cross_wk: mat(params, format!("{prefix}.cross.wk"), d, d, std_d, rng),
            cross_bk: params.add(format!("{prefix}.cross.bk"), Tensor::zeros(&[d])),
            cross_wv: mat(params, format!("{prefix}.cross.wv"), d, d, std_d, rng),
            cross_bv: params.add(format!("{prefix}.cross.bv"), Tensor::zeros(&[d])),
            cross_wo: mat(params, format!("{prefix}.cross.wo"), d, d, std_d, rng),
            cross_bo: params.add(format!("{prefix}.cross.bo"), Tensor::zeros(&[d])),
            ln3_g: params.add(format!("{prefix}.ln3.g"), ones(d)),
            ln3_b: params.add(format!("{prefix}.ln3.b"), Tensor::zeros(&[d])),
            ffn_w1: mat(params, format!("{prefix}.ffn.w1"), d, hidden, std_d, rng),
            ffn_b1: params.add(format!("{prefix}.ffn.b1"), Tensor::zeros(&[hidden])),
            ffn_w2: mat(params, format!("{prefix}.ffn.w2"), hidden, d, std_h, rng),
            ffn_b2: params.add(format!("{prefix}.ffn.b2"), Tensor::zeros(&[d])),
        }
    }

    fn param_ids(&self) -> [ParamId; 26] {
        [
            self.ln1_g, self.ln1_b, self.attn_wq, self.attn_bq, self.attn_wk, self.attn_bk,
            self.attn_wv, self.attn_bv, self.attn_wo, self.attn_bo, self.ln2_g, self.ln2_b,
            self.cross_wq, self.cross_bq, self.cross_wk, self.cross_bk, self.cross_wv,
            self.cross_bv, self.cross_wo, self.cross_bo, self.ln3_g, self.ln3_b, self.ffn_w1,
            self.ffn_b1, self.ffn_w2, self.ffn_b2,
        ]
    }
}

fn ones(d: usize) -> Tensor {
    Tensor::from_vec(&[d], vec![1.0; d])
}

pub struct ToyStDiT {
    pub config: ToyStDiTConfig,
    pub params: ParamSet,
    base_blocks: Vec<BlockParams>,
    control_blocks: Vec<BlockParams>,
    /// Zero-initialized output projections of the control branch.
    control_proj: Vec<(ParamId, ParamId)>,
    token_w: ParamId,
    token_b: ParamId,
    cond_motion_w: ParamId,
    cond_motion_b: ParamId,
    cond_layout_w: ParamId,
    cond_layout_b: ParamId,
    cond_lane_w: ParamId,
    cond_lane_b: ParamId,
    time_w1: ParamId,
    time_b1: ParamId,
    time_w2: ParamId,
    time_b2: ParamId,
    head_ln_g: ParamId,
    head_ln_b: ParamId,
    head_w: ParamId,
    head_b: ParamId,
    pub depth_encoder: DepthEncoderParams,
}

impl ToyStDiT {
    /// Builds and initializes a model from the config seed. The control
    /// blocks start as exact copies of the first K base blocks; their
    /// output projections start at zero.
    pub fn new(config: ToyStDiTConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.d_model;
        let pd = config.patch_dim();
        let mut params = ParamSet::new();

        let std_pd = 1.0 / (pd as f64).sqrt();
        let token_w = params.add("embed.token.w", Tensor::randn(&[pd, d], std_pd, &mut rng));
        let token_b = params.add("embed.token.b", Tensor::zeros(&[d]));
        let cond_motion_w = params.add("cond.motion.w", Tensor::randn(&[pd, d], std_pd, &mut rng));
        let cond_motion_b = params.add("cond.motion.b", Tensor::zeros(&[d]));
        let cond_layout_w = params.add("cond.layout.w", Tensor::randn(&[pd, d], std_pd, &mut rng));
        let cond_layout_b = params.add("cond.layout.b", Tensor::zeros(&[d]));
        let cond_lane_w = params.add("cond.lane.w", Tensor::randn(&[pd, d], std_pd, &mut rng));
        let cond_lane_b = params.add("cond.lane.b", Tensor::zeros(&[d]));

        let std_d = 1.0 / (d as f64).sqrt();
        let time_w1 = params.add("time.w1", Tensor::randn(&[d, d], std_d, &mut rng));
        let time_b1 = params.add("time.b1", Tensor::zeros(&[d]));
        let time_w2 = params.add("time.w2", Tensor::randn(&[d, d], std_d, &mut rng));
        let time_b2 = params.add("time.b2", Tensor::zeros(&[d]));

        let base_blocks: Vec<BlockParams> = (0..config.num_base_blocks)
            .map(|i| BlockParams::init(&mut params, &format!("base.{i}"), d, &mut rng))
            .collect();

        let k_blocks = config.effective_control_blocks();
        let control_blocks: Vec<BlockParams> = (0..k_blocks)
            .map(|i| BlockParams::init(&mut params, &format!("control.{i}"), d, &mut rng))
            .collect();
        // ControlNet-style start: copy the duplicated blocks' weights.
        for (cb, bb) in control_blocks.iter().zip(base_blocks.iter()) {
            for (cid, bid) in cb.param_ids().into_iter().zip(bb.param_ids()) {
                let src = params.get(bid).clone();
                *params.get_mut(cid) = src;
            }
        }
        let control_proj: Vec<(ParamId, ParamId)> = (0..k_blocks)
            .map(|i| {
                (
                    params.add(format!("control.{i}.proj.w"), Tensor::zeros(&[d, d])),
                    params.add(format!("control.{i}.proj.b"), Tensor::zeros(&[d])),
                )
            })
            .collect();

        let depth_encoder = DepthEncoderParams::init(&mut params, "depth", &config.depth_encoder, &mut rng);

        let head_ln_g = params.add("head.ln.g", ones(d));
        let head_ln_b = params.add("head.ln.b", Tensor::zeros(&[d]));
        // Zero head: the raw model predicts zero noise at init.
        let head_w = params.add("head.w", Tensor::zeros(&[d, pd]));
        let head_b = params.add("head.b", Tensor::zeros(&[pd]));

        Ok(ToyStDiT {
            config,
            params,
            base_blocks,
            control_blocks,
            control_proj,
            token_w,
            token_b,
            cond_motion_w,
            cond_motion_b,
            cond_layout_w,
            cond_layout_b,
            cond_lane_w,
            cond_lane_b,
            time_w1,
            time_b1,
            time_w2,
            time_b2,
            head_ln_g,
            head_ln_b,
            head_w,
            head_b,
            depth_encoder,
        })
    }

    /// One pre-norm transformer block; `x` is (t, s, d) and `text` is a
    /// (1, d) token.
    fn block_forward(
        &self,
        g: &mut Graph,
        leaves: &[NodeId],
        bp: &BlockParams,
        kind: BlockKind,
        x: NodeId,
        text: NodeId,
    ) -> NodeId {
        let l = |id: ParamId| leaves[id.0];
        let shape = g.value(x).shape.clone();
        let (t, s, d) = (shape[0], shape[1], shape[2]);

        // Self-attention over space (per frame) or time (per spatial site).
        let n1 = g.layernorm(x, l(bp.ln1_g), l(bp.ln1_b));
        let q = g.linear(n1, l(bp.attn_wq), Some(l(bp.attn_bq)));
        let k = g.linear(n1, l(bp.attn_wk), Some(l(bp.attn_bk)));
        let v = g.linear(n1, l(bp.attn_wv), Some(l(bp.attn_bv)));
        let attn = axis_attention(g, q, k, v, kind);
        let attn = g.linear(attn, l(bp.attn_wo), Some(l(bp.attn_bo)));
        let x = g.add(x, attn);

        // Text cross-attention: every token attends over the text tokens.
        let n2 = g.layernorm(x, l(bp.ln2_g), l(bp.ln2_b));
        let q = g.linear(n2, l(bp.cross_wq), Some(l(bp.cross_bq)));
        let tk = g.linear(text, l(bp.cross_wk), Some(l(bp.cross_bk)));
        let tv = g.linear(text, l(bp.cross_wv), Some(l(bp.cross_bv)));
        let n_text = g.value(text).shape[0];
        let q_flat = g.reshape(q, &[1, t * s, d]);
        let tk3 = g.reshape(tk, &[1, n_text, d]);
        let tv3 = g.reshape(tv, &[1, n_text, d]);
        let cross = g.attention(q_flat, tk3, tv3, None);
        let cross = g.reshape(cross, &[t, s, d]);
        let cross = g.linear(cross, l(bp.cross_wo), Some(l(bp.cross_bo)));
        let x = g.add(x, cross);

        // Pointwise feed-forward.
        let n3 = g.layernorm(x, l(bp.ln3_g), l(bp.ln3_b));
        let h = g.linear(n3, l(bp.ffn_w1), Some(l(bp.ffn_b1)));
        let h = g.gelu(h);
        let h = g.linear(h, l(bp.ffn_w2), Some(l(bp.ffn_b2)));
        g.add(x, h)
    }

    /// Summed condition tokens (t, s, d): embedded motion latent, the
    /// depth-fused layout tokens, and the lane latent.
    fn condition_tokens(
        &self,
        g: &mut Graph,
        leaves: &[NodeId],
        cond: &CondInputs,
        t: usize,
        s: usize,
    ) -> Result<NodeId> {
        let l = |id: ParamId| leaves[id.0];
        let p = self.config.patch;

        let motion_raw = g.leaf(patch_rearrange(&cond.motion, p)?);
        let motion = g.linear(motion_raw, l(self.cond_motion_w), Some(l(self.cond_motion_b)));

        let layout_raw = g.leaf(patch_rearrange(&cond.layout, p)?);
        let layout = g.linear(layout_raw, l(self.cond_layout_w), Some(l(self.cond_layout_b)));

        // Fuse layout tokens with the per-frame depth token set.
        let fused = self.fuse_layout_frames(g, leaves, cond, layout, t, s)?;

        let lane_raw = g.leaf(patch_rearrange(&cond.lane, p)?);
        let lane = g.linear(lane_raw, l(self.cond_lane_w), Some(l(self.cond_lane_b)));

        let sum = g.add(motion, fused);
        Ok(g.add(sum, lane))
    }

    fn fuse_layout_frames(
        &self,
        g: &mut Graph,
        leaves: &[NodeId],
        cond: &CondInputs,
        layout: NodeId,
        t: usize,
        s: usize,
    ) -> Result<NodeId> {
        let d = self.config.d_model;
        let mut frames = Vec::with_capacity(t);
        for ti in 0..t {
            let h_box = g.slice0(layout, ti);
            let h_box = g.reshape(h_box, &[s, d]);
            let boxes = cond.boxes.get(ti).map(|b| b.as_slice()).unwrap_or(&[]);
            let fused = if boxes.is_empty() {
                h_box
            } else {
                let tokens = self.depth_encoder.encode_boxes_node(
                    g,
                    leaves,
                    &self.config.depth_encoder,
                    boxes,
                );
                self.depth_encoder
                    .fuse_node(g, leaves, &self.config.depth_encoder, h_box, Some(tokens))
            };
            frames.push(fused);
        }
        let stacked = g.stack0(&frames);
        Ok(g.reshape(stacked, &[t, s, d]))
    }

    /// Full forward pass. `z` is the (noised) latent, `timesteps` holds one
    /// diffusion timestep per frame, `text` is the prompt embedding. The
    /// returned node has token shape (t, s, p*p*c) — the predicted noise in
    /// patch layout. Also returns the leaf ids of the parameters.
    pub fn forward(
        &self,
        g: &mut Graph,
        z: &LatentTensor,
        timesteps: &[usize],
        text: &Tensor,
        conditions: Option<&CondInputs>,
    ) -> Result<(Vec<NodeId>, NodeId)> {
        let cfg = &self.config;
        let d = cfg.d_model;
        let p = cfg.patch;
        let s = tokens_per_frame(z.h, z.w, p)?;
        let t = z.t;
        if timesteps.len() != t {
            return Err(crate::Error::shape(
                "forward timesteps",
                format!("{t} frames"),
                format!("{}", timesteps.len()),
            ));
        }
        if text.rank() != 2 || text.shape[1] != d {
            return Err(crate::Error::shape(
                "forward text embedding",
                format!("(n, {d})"),
                format!("{:?}", text.shape),
            ));
        }

        let leaves = self.params.leaves(g);
        let l = |id: ParamId| leaves[id.0];

        let raw = g.leaf(patch_rearrange(z, p)?);
        let mut x = g.linear(raw, l(self.token_w), Some(l(self.token_b)));

        if cfg.use_pos_embed {
            let pe = g.leaf(position_embedding(t, s, d));
            x = g.add(x, pe);
        }

        // Per-frame timestep conditioning through a small MLP.
        let sin = g.leaf(timestep_sinusoid(timesteps, d));
        let te = g.linear(sin, l(self.time_w1), Some(l(self.time_b1)));
        let te = g.gelu(te);
        let te = g.linear(te, l(self.time_w2), Some(l(self.time_b2)));
        x = g.add_frame_bias(x, te);

        let text_node = g.leaf(text.clone());

        let cond_sum = match conditions {
            Some(c) => Some(self.condition_tokens(g, &leaves, c, t, s)?),
            None => None,
        };

        let kinds = cfg.block_kinds();
        let k_blocks = self.control_blocks.len();
        let mut control_state = x;
        for (i, (bp, kind)) in self.base_blocks.iter().zip(kinds.iter()).enumerate() {
            x = self.block_forward(g, &leaves, bp, *kind, x, text_node);
            if let Some(cond) = cond_sum {
                if i < k_blocks {
                    let c_in = g.add(control_state, cond);
                    control_state =
                        self.block_forward(g, &leaves, &self.control_blocks[i], *kind, c_in, text_node);
                    let (pw, pb) = self.control_proj[i];
                    let residual = g.linear(control_state, l(pw), Some(l(pb)));
                    x = g.add(x, residual);
                }
            }
        }

        let n = g.layernorm(x, l(self.head_ln_g), l(self.head_ln_b));
        let out = g.linear(n, l(self.head_w), Some(l(self.head_b)));
        Ok((leaves, out))
    }

    /// Runs one base block on plain (t, s, d) tokens with a (n, d) text
    /// embedding; the op-level surface of the block stack.
    pub fn base_block_tokens(&self, index: usize, tokens: &Tensor, text: &Tensor) -> Result<Tensor> {
        if index >= self.base_blocks.len() {
            return Err(crate::Error::InvalidConfig(format!(
                "block index {index} out of {}",
                self.base_blocks.len()
            )));
        }
        let mut g = Graph::new();
        let leaves = self.params.leaves(&mut g);
        let x = g.leaf(tokens.clone());
        let tn = g.leaf(text.clone());
        let kind = self.config.block_kinds()[index];
        let out = self.block_forward(&mut g, &leaves, &self.base_blocks[index], kind, x, tn);
        Ok(g.value(out).clone())
    }

    /// Zeroes the output projections (self-attention, cross-attention,
    /// feed-forward) of every base block; with those at zero each block is
    /// an exact identity. Test and experiment hook.
    pub fn zero_block_output_projections(&mut self) {
        let ids: Vec<ParamId> = self
            .base_blocks
            .iter()
            .flat_map(|b| [b.attn_wo, b.attn_bo, b.cross_wo, b.cross_bo, b.ffn_w2, b.ffn_b2])
            .collect();
        for id in ids {
            let shape = self.params.get(id).shape.clone();
            *self.params.get_mut(id) = Tensor::zeros(&shape);
        }
    }

    /// Convenience: predicted noise as a latent, no gradients kept.
    pub fn predict_noise(
        &self,
        z: &LatentTensor,
        timesteps: &[usize],
        text: &Tensor,
        conditions: Option<&CondInputs>,
    ) -> Result<LatentTensor> {
        let mut g = Graph::new();
        let (_, out) = self.forward(&mut g, z, timesteps, text, conditions)?;
        super::patch::patch_restore(g.value(out), self.config.patch, z.h, z.w, z.c)
    }
}

/// Attention restricted to one axis of a (t, s, d) token tensor: spatial
/// runs within each frame, temporal across frames at a fixed spatial site.
pub(crate) fn axis_attention(
    g: &mut Graph,
    q: NodeId,
    k: NodeId,
    v: NodeId,
    kind: BlockKind,
) -> NodeId {
    match kind {
        BlockKind::Spatial => g.attention(q, k, v, None),
        BlockKind::Temporal => {
            let qt = g.transpose_102(q);
            let kt = g.transpose_102(k);
            let vt = g.transpose_102(v);
            let at = g.attention(qt, kt, vt, None);
            g.transpose_102(at)
        }
    }
}

fn axis_attention_tokens(
    tokens: &Tensor,
    wq: &Tensor,
    wk: &Tensor,
    wv: &Tensor,
    kind: BlockKind,
) -> Tensor {
    let mut g = Graph::new();
    let x = g.leaf(tokens.clone());
    let wq = g.leaf(wq.clone());
    let wk = g.leaf(wk.clone());
    let wv = g.leaf(wv.clone());
    let q = g.linear(x, wq, None);
    let k = g.linear(x, wk, None);
    let v = g.linear(x, wv, None);
    let out = axis_attention(&mut g, q, k, v, kind);
    g.value(out).clone()
}

/// Self-attention within each frame: tokens (t, s, d) attend over s
/// independently per frame.
pub fn spatial_self_attention(tokens: &Tensor, wq: &Tensor, wk: &Tensor, wv: &Tensor) -> Tensor {
    axis_attention_tokens(tokens, wq, wk, wv, BlockKind::Spatial)
}

/// Self-attention across time at fixed spatial index: tokens (t, s, d)
/// attend over t independently per site.
pub fn temporal_self_attention(tokens: &Tensor, wq: &Tensor, wk: &Tensor, wv: &Tensor) -> Tensor {
    axis_attention_tokens(tokens, wq, wk, wv, BlockKind::Temporal)
}

/// Fixed sinusoidal embeddings over space and time, materialized (t, s, d).
fn position_embedding(t: usize, s: usize, d: usize) -> Tensor {
    let mut out = Tensor::zeros(&[t, s, d]);
    for ti in 0..t {
        let temporal = sinusoid_row(ti as f64, d);
        for si in 0..s {
            let spatial = sinusoid_row(si as f64, d);
            let base = (ti * s + si) * d;
            for i in 0..d {
                // Spatial in the first half phase, temporal shifted into
                // the second; summing keeps both visible at small d.
                out.data[base + i] = spatial[i] + temporal[(i + d / 2) % d];
            }
        }
    }
    out
}

/// One (t, d) sinusoid table for the per-frame diffusion timesteps.
fn timestep_sinusoid(timesteps: &[usize], d: usize) -> Tensor {
    let mut out = Tensor::zeros(&[timesteps.len(), d]);
    for (ti, &step) in timesteps.iter().enumerate() {
        let row = sinusoid_row(step as f64, d);
        out.data[ti * d..(ti + 1) * d].copy_from_slice(&row);
    }
    out
}

fn sinusoid_row(pos: f64, d: usize) -> Vec<f64> {
    let mut row = vec![0.0; d];
    let half = d / 2;
    for i in 0..half {
        let freq = 1.0 / 10000f64.powf(2.0 * i as f64 / d as f64);
        row[2 * i] = (pos * freq).sin();
        row[2 * i + 1] = (pos * freq).cos();
    }
    if d % 2 == 1 {
        let freq = 1.0 / 10000f64.powf((d - 1) as f64 / d as f64);
        row[d - 1] = (pos * freq).sin();
    }
    row
}
