//! Dense latent tensors plus the deterministic mock video-autoencoder.
//!
//! The real pipeline would compress video frames with a pretrained
//! autoencoder; here the encoder is an 8x8 average pool over channels
//! scaled to [0, 1] followed by a fixed 3 -> 4 channel linear lift, which
//! preserves the shape contract (8x spatial downsampling, 4 channels)
//! without any learned weights. The decoder inverts the lift by dropping
//! the derived channel and upsamples with nearest-neighbor.

use crate::error::{Error, Result};
use crate::img::Image8;

/// Spatial downsampling factor of the mock encoder.
pub const VAE_FACTOR: usize = 8;

/// Latent channel count.
pub const VAE_CHANNELS: usize = 4;

/// Fixed 3 -> 4 channel lift: identity on RGB plus their mean.
pub const VAE_LIFT: [[f64; 3]; 4] = [
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
    [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
];

/// Rank-4 latent with axes (time, height, width, channel), row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTensor {
    pub t: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<f64>,
}

impl LatentTensor {
    pub fn zeros(t: usize, h: usize, w: usize, c: usize) -> Self {
        LatentTensor {
            t,
            h,
            w,
            c,
            data: vec![0.0; t * h * w * c],
        }
    }

    #[inline]
    pub fn idx(&self, t: usize, y: usize, x: usize, ch: usize) -> usize {
        ((t * self.h + y) * self.w + x) * self.c + ch
    }

    #[inline]
    pub fn get(&self, t: usize, y: usize, x: usize, ch: usize) -> f64 {
        self.data[self.idx(t, y, x, ch)]
    }

    #[inline]
    pub fn set(&mut self, t: usize, y: usize, x: usize, ch: usize, v: f64) {
        let i = self.idx(t, y, x, ch);
        self.data[i] = v;
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Concatenates single-frame latents along the time axis.
    pub fn stack_frames(frames: &[LatentTensor]) -> Result<LatentTensor> {
        let first = frames.first().ok_or_else(|| {
            Error::shape("stack_frames", ">= 1 frame", "0 frames")
        })?;
        let (h, w, c) = (first.h, first.w, first.c);
        let mut data = Vec::with_capacity(frames.iter().map(|f| f.data.len()).sum());
        let mut t_total = 0;
        for f in frames {
            if (f.h, f.w, f.c) != (h, w, c) {
                return Err(Error::shape(
                    "stack_frames",
                    format!("{h}x{w}x{c}"),
                    format!("{}x{}x{}", f.h, f.w, f.c),
                ));
            }
            t_total += f.t;
            data.extend_from_slice(&f.data);
        }
        Ok(LatentTensor { t: t_total, h, w, c, data })
    }

    /// Copies frame `t` out as a single-frame latent.
    pub fn frame(&self, t: usize) -> LatentTensor {
        let stride = self.h * self.w * self.c;
        LatentTensor {
            t: 1,
            h: self.h,
            w: self.w,
            c: self.c,
            data: self.data[t * stride..(t + 1) * stride].to_vec(),
        }
    }

    /// Overwrites frame `t` with the single-frame latent `src`.
    pub fn set_frame(&mut self, t: usize, src: &LatentTensor) {
        let stride = self.h * self.w * self.c;
        self.data[t * stride..(t + 1) * stride].copy_from_slice(&src.data);
    }

    /// Binary dump: magic "TLAT1\0\0\0", u32 t/h/w/c, then row-major
    /// little-endian f64 values.
    pub fn write_binary(&self, path: &std::path::Path) -> Result<()> {
        let mut buf = Vec::with_capacity(24 + self.data.len() * 8);
        buf.extend_from_slice(b"TLAT1\0\0\0");
        for dim in [self.t, self.h, self.w, self.c] {
            buf.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        crate::img::atomic_write(path, &buf)
    }

    pub fn read_binary(path: &std::path::Path) -> Result<LatentTensor> {
        let bytes = std::fs::read(path)?;
        if bytes.len() < 24 || &bytes[0..8] != b"TLAT1\0\0\0" {
            return Err(Error::Format("bad latent magic".into()));
        }
        let dim = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize;
        let (t, h, w, c) = (dim(0), dim(1), dim(2), dim(3));
        let need = t * h * w * c;
        if bytes.len() != 24 + need * 8 {
            return Err(Error::Format("latent payload size mismatch".into()));
        }
        let data = bytes[24..]
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Ok(LatentTensor { t, h, w, c, data })
    }
}

/// Rank-5 latent with a leading view axis (view, time, height, width,
/// channel).
#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewLatent {
    pub v: usize,
    pub t: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<f64>,
}

impl MultiViewLatent {
    pub fn zeros(v: usize, t: usize, h: usize, w: usize, c: usize) -> Self {
        MultiViewLatent {
            v,
            t,
            h,
            w,
            c,
            data: vec![0.0; v * t * h * w * c],
        }
    }

    #[inline]
    pub fn idx(&self, v: usize, t: usize, y: usize, x: usize, ch: usize) -> usize {
        (((v * self.t + t) * self.h + y) * self.w + x) * self.c + ch
    }
}

/// Concatenates the views of `x` along the width axis (view-index order),
/// treating `w * v` as the frame width.
pub fn view_inflate(x: &MultiViewLatent) -> LatentTensor {
    let mut out = LatentTensor::zeros(x.t, x.h, x.w * x.v, x.c);
    for v in 0..x.v {
        for t in 0..x.t {
            for y in 0..x.h {
                for px in 0..x.w {
                    for ch in 0..x.c {
                        let val = x.data[x.idx(v, t, y, px, ch)];
                        out.set(t, y, v * x.w + px, ch, val);
                    }
                }
            }
        }
    }
    out
}

/// Inverse of [`view_inflate`]; `views` must divide the inflated width.
pub fn view_deflate(x: &LatentTensor, views: usize) -> Result<MultiViewLatent> {
    if views == 0 || !x.w.is_multiple_of(views) {
        return Err(Error::shape(
            "view_deflate",
            format!("width divisible by {views}"),
            format!("width {}", x.w),
        ));
    }
    let w = x.w / views;
    let mut out = MultiViewLatent::zeros(views, x.t, x.h, w, x.c);
    for v in 0..views {
        for t in 0..x.t {
            for y in 0..x.h {
                for px in 0..w {
                    for ch in 0..x.c {
                        let i = out.idx(v, t, y, px, ch);
                        out.data[i] = x.get(t, y, v * w + px, ch);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Mock video-autoencoder encode of one RGB image: 8x8 average pool of the
/// channels scaled to [0, 1], then the fixed channel lift. Returns a
/// single-frame latent of shape (H/8) x (W/8) x 4.
pub fn encode_image_latent(img: &Image8) -> Result<LatentTensor> {
    let (w, h) = (img.width as usize, img.height as usize);
    if !h.is_multiple_of(VAE_FACTOR) || !w.is_multiple_of(VAE_FACTOR) {
        return Err(Error::shape(
            "encode_image_latent",
            format!("dimensions divisible by {VAE_FACTOR}"),
            format!("{w}x{h}"),
        ));
    }
    let (lh, lw) = (h / VAE_FACTOR, w / VAE_FACTOR);
    let mut out = LatentTensor::zeros(1, lh, lw, VAE_CHANNELS);
    let norm = 1.0 / (VAE_FACTOR * VAE_FACTOR) as f64;
    for ly in 0..lh {
        for lx in 0..lw {
            let mut pooled = [0.0f64; 3];
            for dy in 0..VAE_FACTOR {
                for dx in 0..VAE_FACTOR {
                    let px = img.get((lx * VAE_FACTOR + dx) as u32, (ly * VAE_FACTOR + dy) as u32);
                    for (p, &byte) in pooled.iter_mut().zip(px.iter()) {
                        *p += byte as f64 / 255.0;
                    }
                }
            }
            for p in pooled.iter_mut() {
                *p *= norm;
            }
            for (ch, row) in VAE_LIFT.iter().enumerate() {
                let v = row[0] * pooled[0] + row[1] * pooled[1] + row[2] * pooled[2];
                out.set(0, ly, lx, ch, v);
            }
        }
    }
    Ok(out)
}

/// Mock decode for previews: drops the derived fourth channel, maps back
/// to bytes, and upsamples nearest-neighbor by the encoder factor.
pub fn decode_latent_preview(latent: &LatentTensor, t: usize) -> Image8 {
    let mut img = Image8::new(
        (latent.w * VAE_FACTOR) as u32,
        (latent.h * VAE_FACTOR) as u32,
    );
    for y in 0..img.height as usize {
        for x in 0..img.width as usize {
            let (ly, lx) = (y / VAE_FACTOR, x / VAE_FACTOR);
            let mut rgb = [0u8; 3];
            for (ch, byte) in rgb.iter_mut().enumerate() {
                let v = latent.get(t, ly, lx, ch).clamp(0.0, 1.0);
                *byte = (v * 255.0).round() as u8;
            }
            img.put(x as u32, y as u32, rgb);
        }
    }
    img
}
