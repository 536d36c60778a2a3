//! RGB images: PPM/PNG decoding, bilinear resampling, resolution-tier
//! degradation and conversion to network input tensors.

use std::fmt;
use std::io::Cursor;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("unknown image format (magic bytes {0:02x?})")]
    UnknownFormat(Vec<u8>),
    #[error("corrupt image stream: {0}")]
    Corrupt(String),
    #[error("unsupported bit depth: {0}")]
    UnsupportedDepth(String),
    #[error("image dimensions must be positive, got {width}x{height}")]
    ZeroDimensions { width: u32, height: u32 },
    #[error("PNG encoding failed: {0}")]
    Encode(String),
}

pub type Result<T> = std::result::Result<T, ImageError>;

/// Row-major 8-bit RGB raster.
#[derive(Clone, PartialEq, Eq)]
pub struct Image {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl fmt::Debug for Image {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Image({}x{})", self.width, self.height)
    }
}

impl Image {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(ImageError::ZeroDimensions { width, height });
        }
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(ImageError::Corrupt(format!(
                "{width}x{height} RGB needs {expected} bytes, got {}",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self> {
        let n = width as usize * height as usize;
        Self::new(width, height, rgb.iter().copied().cycle().take(n * 3).collect())
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixel_count(&self) -> u64 {
        self.width as u64 * self.height as u64
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }
}

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];

/// Decodes binary PPM (P6, maxval 255) or PNG (8-bit; alpha dropped).
pub fn decode(bytes: &[u8]) -> Result<Image> {
    if bytes.starts_with(b"P6") {
        decode_ppm(bytes)
    } else if bytes.starts_with(&PNG_SIGNATURE) {
        decode_png(bytes)
    } else {
        Err(ImageError::UnknownFormat(bytes.iter().take(4).copied().collect()))
    }
}

fn decode_ppm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for (i, field) in fields.iter_mut().enumerate() {
        // whitespace and `#` comments may separate header tokens
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(ImageError::Corrupt("truncated PPM header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(ImageError::Corrupt(format!("PPM header field {i} is not a number")));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = text
            .parse()
            .map_err(|_| ImageError::Corrupt(format!("PPM header value {text} out of range")))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(ImageError::UnsupportedDepth(format!(
            "PPM maxval {maxval} (only 255 is supported)"
        )));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(ImageError::Corrupt("missing separator after PPM header".into())),
    }
    if width == 0 || height == 0 {
        return Err(ImageError::ZeroDimensions { width, height });
    }
    let need = width as usize * height as usize * 3;
    let payload = &bytes[pos..];
    if payload.len() < need {
        return Err(ImageError::Corrupt(format!(
            "PPM payload truncated: need {need} bytes, have {}",
            payload.len()
        )));
    }
    Image::new(width, height, payload[..need].to_vec())
}

fn decode_png(bytes: &[u8]) -> Result<Image> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| ImageError::Corrupt(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| ImageError::Corrupt("PNG too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| ImageError::Corrupt(e.to_string()))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(ImageError::UnsupportedDepth(format!(
            "PNG bit depth {:?}",
            info.bit_depth
        )));
    }
    let buf = &buf[..info.buffer_size()];
    let n = info.width as usize * info.height as usize;
    let rgb: Vec<u8> = match info.color_type {
        png::ColorType::Rgb => buf.to_vec(),
        png::ColorType::Rgba => buf.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        png::ColorType::Grayscale => buf.iter().flat_map(|&g| [g, g, g]).collect(),
        png::ColorType::GrayscaleAlpha => buf.chunks_exact(2).flat_map(|p| [p[0], p[0], p[0]]).collect(),
        png::ColorType::Indexed => {
            return Err(ImageError::Corrupt("indexed PNG was not expanded".into()));
        }
    };
    debug_assert_eq!(rgb.len(), n * 3);
    Image::new(info.width, info.height, rgb)
}

pub fn encode_ppm(img: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

/// 8-bit RGB PNG.
pub fn encode_png(img: &Image) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut encoder = png::Encoder::new(&mut out, img.width, img.height);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header().map_err(|e| ImageError::Encode(e.to_string()))?;
    writer
        .write_image_data(&img.pixels)
        .map_err(|e| ImageError::Encode(e.to_string()))?;
    writer.finish().map_err(|e| ImageError::Encode(e.to_string()))?;
    Ok(out)
}

/// Source taps and weight for each destination coordinate along one axis.
fn axis_taps(src: u32, dst: u32) -> Vec<(usize, usize, f32)> {
    let scale = src as f64 / dst as f64;
    let last = src as usize - 1;
    (0..dst)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, last as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(last);
            (i0, i1, (s - i0 as f64) as f32)
        })
        .collect()
}

/// Bilinear resampling with half-pixel centre alignment; channels are rounded
/// to the nearest integer.
pub fn resample_bilinear(img: &Image, width: u32, height: u32) -> Result<Image> {
    if width == 0 || height == 0 {
        return Err(ImageError::ZeroDimensions { width, height });
    }
    if width == img.width && height == img.height {
        return Ok(img.clone());
    }
    let xs = axis_taps(img.width, width);
    let ys = axis_taps(img.height, height);
    let stride = img.width as usize * 3;
    let src = &img.pixels;
    let mut out = Vec::with_capacity(width as usize * height as usize * 3);
    for &(y0, y1, fy) in &ys {
        let r0 = &src[y0 * stride..(y0 + 1) * stride];
        let r1 = &src[y1 * stride..(y1 + 1) * stride];
        for &(x0, x1, fx) in &xs {
            for c in 0..3 {
                let top = r0[x0 * 3 + c] as f32 * (1.0 - fx) + r0[x1 * 3 + c] as f32 * fx;
                let bottom = r1[x0 * 3 + c] as f32 * (1.0 - fx) + r1[x1 * 3 + c] as f32 * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                out.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Image::new(width, height, out)
}

/// The five evaluation resolutions, named by output height.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ResolutionTier {
    R144,
    R360,
    R720,
    R1080,
    R1440,
}

impl ResolutionTier {
    pub const ALL: [ResolutionTier; 5] = [
        ResolutionTier::R144,
        ResolutionTier::R360,
        ResolutionTier::R720,
        ResolutionTier::R1080,
        ResolutionTier::R1440,
    ];

    pub fn height(self) -> u32 {
        match self {
            ResolutionTier::R144 => 144,
            ResolutionTier::R360 => 360,
            ResolutionTier::R720 => 720,
            ResolutionTier::R1080 => 1080,
            ResolutionTier::R1440 => 1440,
        }
    }

    /// Canonical 16:9 frame size.
    pub fn dimensions(self) -> (u32, u32) {
        let h = self.height();
        (h * 16 / 9, h)
    }

    pub fn pixel_count(self) -> u64 {
        let (w, h) = self.dimensions();
        w as u64 * h as u64
    }

    pub fn from_height(height: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.height() == height)
    }
}

impl fmt::Display for ResolutionTier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}p", self.height())
    }
}

impl FromStr for ResolutionTier {
    type Err = String;

    /// Accepts `144`, `144p` or `R144`.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let t = s.trim();
        let digits = t
            .strip_prefix(['R', 'r'])
            .or_else(|| t.strip_suffix(['p', 'P']))
            .unwrap_or(t);
        digits
            .parse::<u32>()
            .ok()
            .and_then(Self::from_height)
            .ok_or_else(|| format!("unknown resolution tier {s:?} (expected one of 144, 360, 720, 1080, 1440)"))
    }
}

/// Target size for `tier`, or `None` when the source is already at or below
/// the tier height (degradation never upsamples).
pub fn tier_geometry(width: u32, height: u32, tier: ResolutionTier) -> Option<(u32, u32)> {
    let th = tier.height();
    if height <= th {
        return None;
    }
    let w = (width as f64 / height as f64 * th as f64).round().max(1.0) as u32;
    Some((w, th))
}

/// Downscale by repeated bilinear halving until within 2× of the target, then
/// one final bilinear step. A single 2-tap pass at large ratios point-samples
/// the source, so fine texture would survive or vanish depending on tap
/// alignment rather than on the target resolution.
pub fn downscale_progressive(img: &Image, width: u32, height: u32) -> Result<Image> {
    if width == 0 || height == 0 {
        return Err(ImageError::ZeroDimensions { width, height });
    }
    let mut cur = img.clone();
    loop {
        let nw = if cur.width > 2 * width {
            cur.width.div_ceil(2)
        } else {
            cur.width
        };
        let nh = if cur.height > 2 * height {
            cur.height.div_ceil(2)
        } else {
            cur.height
        };
        if (nw, nh) == (cur.width, cur.height) {
            break;
        }
        cur = resample_bilinear(&cur, nw, nh)?;
    }
    resample_bilinear(&cur, width, height)
}

pub fn degrade_to_tier(img: &Image, tier: ResolutionTier) -> Image {
    match tier_geometry(img.width, img.height, tier) {
        Some((w, h)) => downscale_progressive(img, w, h).expect("tier geometry is non-zero"),
        None => img.clone(),
    }
}

/// Bilinear resize to `side × side` (may upsample), scaled to `[0, 1]`,
/// laid out `[3, side, side]`.
pub fn to_input_tensor(img: &Image, side: u32) -> Tensor {
    let resized = resample_bilinear(img, side, side).expect("side must be positive");
    let plane = side as usize * side as usize;
    let mut data = vec![0f32; 3 * plane];
    for (i, px) in resized.pixels.chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * plane + i] = px[c] as f32 / 255.0;
        }
    }
    Tensor::from_vec(&[3, side as usize, side as usize], data).expect("finite pixel data")
}
