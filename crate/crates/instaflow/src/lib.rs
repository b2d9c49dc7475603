//! Conditioning-signal pipeline for multi-view driving-scene video latents
//! plus a desk-scale spatial-temporal diffusion transformer trained from
//! scratch in f64.
//!
//! The library covers five layers:
//!
//! * [`scene`] — canonical scene sequences (ego poses, camera rigs, tracked
//!   3D boxes) with validation and a JSON wire format.
//! * [`projection`] — the world -> ego -> camera -> image chain, depth
//!   ordering, and occlusion-aware layout rasterization.
//! * [`flow`] — instance flow offsets across visibility gaps, motion-map
//!   rasterization, and the RGB flow codec.
//! * [`depth`] — Fourier corner embeddings, the depth-token MLP, and
//!   cross-attention fusion with layout tokens.
//! * [`stdit`] — the toy spatial-temporal diffusion transformer with a
//!   zero-initialized control branch, DDPM training and sampling.
//!
//! [`scenario`] generates deterministic synthetic driving scenes (cut-in,
//! sudden-brake events) that exercise the whole pipeline end to end, and
//! [`pipeline`] turns scenes into rendered conditions and training samples.

pub mod depth;
pub mod error;
pub mod flow;
pub mod img;
pub mod latent;
pub mod math;
pub mod nn;
pub mod pipeline;
pub mod projection;
pub mod scenario;
pub mod scene;
pub mod stdit;

pub use error::{Error, Result};
