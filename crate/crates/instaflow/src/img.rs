//! 8-bit RGB image buffer plus the binary file formats the CLI emits.
//!
//! Images are written as binary PPM (P6) by default and optionally as PNG.
//! All file writes go through a temp-file-plus-rename so partially written
//! outputs never appear under the final name.

use std::io::Write;
use std::path::Path;

use crate::error::Result;

/// Row-major H x W x 3 byte image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image8 {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl Image8 {
    pub fn new(width: u32, height: u32) -> Self {
        Image8 {
            width,
            height,
            data: vec![0; (width as usize) * (height as usize) * 3],
        }
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let mut img = Image8::new(width, height);
        for px in img.data.chunks_exact_mut(3) {
            px.copy_from_slice(&rgb);
        }
        img
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = ((y as usize) * (self.width as usize) + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn put(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = ((y as usize) * (self.width as usize) + x as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(self.data.len() + 32);
        write!(buf, "P6\n{} {}\n255\n", self.width, self.height)?;
        buf.extend_from_slice(&self.data);
        atomic_write(path, &buf)
    }

    pub fn read_ppm(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        parse_ppm(&bytes)
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let mut buf = std::io::Cursor::new(Vec::new());
        image::write_buffer_with_format(
            &mut buf,
            &self.data,
            self.width,
            self.height,
            image::ExtendedColorType::Rgb8,
            image::ImageFormat::Png,
        )
        .map_err(|e| crate::Error::Format(format!("png encode: {e}")))?;
        atomic_write(path, buf.get_ref())
    }
}

fn parse_ppm(bytes: &[u8]) -> Result<Image8> {
    let mut pos = 0usize;
    let mut fields = Vec::new();
    // Header: magic, width, height, maxval, separated by whitespace.
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(crate::Error::Format("truncated ppm header".into()));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| {
            crate::Error::Format("non-utf8 ppm header".into())
        })?);
    }
    if fields[0] != "P6" || fields[3] != "255" {
        return Err(crate::Error::Format("expected binary P6 ppm with maxval 255".into()));
    }
    let width: u32 = fields[1].parse().map_err(|_| crate::Error::Format("bad ppm width".into()))?;
    let height: u32 = fields[2].parse().map_err(|_| crate::Error::Format("bad ppm height".into()))?;
    pos += 1; // single whitespace after maxval
    let need = (width as usize) * (height as usize) * 3;
    if bytes.len() < pos + need {
        return Err(crate::Error::Format("ppm pixel data truncated".into()));
    }
    Ok(Image8 {
        width,
        height,
        data: bytes[pos..pos + need].to_vec(),
    })
}

/// Writes `bytes` to `path` atomically (temp file in the same directory,
/// then rename).
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = dir.join(format!(".{name}.tmp.{}", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
