//! Patchify / unpatchify between latents (t,h,w,c) and token tensors
//! (t, s, d) with s = (h/p)(w/p).
//!
//! The spatial rearrangement is a pure permutation; the optional linear
//! projection maps the flattened p*p*c patch onto the model width. With no
//! projection (or an identity-sized one) unpatchify inverts patchify
//! bit-exactly.

use crate::error::{Error, Result};
use crate::latent::LatentTensor;
use crate::nn::tensor::matmul_into;
use crate::nn::Tensor;

/// Tokens-per-frame count for a latent of the given patch size.
pub fn tokens_per_frame(h: usize, w: usize, p: usize) -> Result<usize> {
    if p == 0 || !h.is_multiple_of(p) || !w.is_multiple_of(p) {
        return Err(Error::shape(
            "patchify",
            format!("h, w divisible by patch {p}"),
            format!("{h}x{w}"),
        ));
    }
    Ok((h / p) * (w / p))
}

/// Rearranges a latent into patch-major rows: shape (t, s, p*p*c). Patch
/// s-index is row-major over the patch grid; within a patch the layout is
/// (dy, dx, channel).
pub fn patch_rearrange(z: &LatentTensor, p: usize) -> Result<Tensor> {
    let s = tokens_per_frame(z.h, z.w, p)?;
    let (hp, wp) = (z.h / p, z.w / p);
    let dim = p * p * z.c;
    let mut data = vec![0.0; z.t * s * dim];
    for t in 0..z.t {
        for py in 0..hp {
            for px in 0..wp {
                let s_i = py * wp + px;
                let base = (t * s + s_i) * dim;
                for dy in 0..p {
                    for dx in 0..p {
                        for ch in 0..z.c {
                            data[base + (dy * p + dx) * z.c + ch] =
                                z.get(t, py * p + dy, px * p + dx, ch);
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::from_vec(&[z.t, s, dim], data))
}

/// Inverse spatial rearrangement of [`patch_rearrange`].
pub fn patch_restore(tokens: &Tensor, p: usize, h: usize, w: usize, c: usize) -> Result<LatentTensor> {
    let (t, s, dim) = (tokens.shape[0], tokens.shape[1], tokens.shape[2]);
    let expect_s = tokens_per_frame(h, w, p)?;
    if s != expect_s || dim != p * p * c {
        return Err(Error::shape(
            "unpatchify",
            format!("({t}, {expect_s}, {})", p * p * c),
            format!("({t}, {s}, {dim})"),
        ));
    }
    let (hp, wp) = (h / p, w / p);
    let mut z = LatentTensor::zeros(t, h, w, c);
    for ti in 0..t {
        for py in 0..hp {
            for px in 0..wp {
                let base = (ti * s + py * wp + px) * dim;
                for dy in 0..p {
                    for dx in 0..p {
                        for ch in 0..c {
                            z.set(
                                ti,
                                py * p + dy,
                                px * p + dx,
                                ch,
                                tokens.data[base + (dy * p + dx) * c + ch],
                            );
                        }
                    }
                }
            }
        }
    }
    Ok(z)
}

/// Patchify with an optional learned projection (p*p*c, d). Without a
/// projection the token dimension stays p*p*c.
pub fn patchify(z: &LatentTensor, p: usize, proj: Option<&Tensor>) -> Result<Tensor> {
    let raw = patch_rearrange(z, p)?;
    let Some(w) = proj else { return Ok(raw) };
    let (t, s, dim) = (raw.shape[0], raw.shape[1], raw.shape[2]);
    if w.rank() != 2 || w.shape[0] != dim {
        return Err(Error::shape(
            "patchify projection",
            format!("({dim}, d)"),
            format!("{:?}", w.shape),
        ));
    }
    let d = w.shape[1];
    let mut out = vec![0.0; t * s * d];
    matmul_into(&raw.data, &w.data, t * s, dim, d, &mut out);
    Ok(Tensor::from_vec(&[t, s, d], out))
}

/// Unpatchify with an optional projection (d, p*p*c) applied first.
pub fn unpatchify(
    tokens: &Tensor,
    p: usize,
    h: usize,
    w: usize,
    c: usize,
    proj: Option<&Tensor>,
) -> Result<LatentTensor> {
    match proj {
        None => patch_restore(tokens, p, h, w, c),
        Some(m) => {
            let (t, s, d) = (tokens.shape[0], tokens.shape[1], tokens.shape[2]);
            if m.rank() != 2 || m.shape[0] != d || m.shape[1] != p * p * c {
                return Err(Error::shape(
                    "unpatchify projection",
                    format!("({d}, {})", p * p * c),
                    format!("{:?}", m.shape),
                ));
            }
            let mut out = vec![0.0; t * s * m.shape[1]];
            matmul_into(&tokens.data, &m.data, t * s, d, m.shape[1], &mut out);
            patch_restore(&Tensor::from_vec(&[t, s, m.shape[1]], out), p, h, w, c)
        }
    }
}
