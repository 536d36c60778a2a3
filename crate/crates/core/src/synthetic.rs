//! Procedural stand-in corpus for desk-scale experiments.
//!
//! * cancerous: fine two-colour checkerboard, period 2–4 px
//! * non-cancerous: coarse diagonal two-colour stripes, period 64–128 px
//! * negative: blocky uniform noise, block size 1–16 px (log-uniform)
//!
//! Telling the first two classes apart depends on high-frequency detail, so
//! downscaling to lower resolution tiers erodes separability.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dataset::{DatasetError, DatasetManifest, ManifestEntry};
use crate::imaging::{encode_ppm, Image};
use crate::network::ClassLabel;

pub const SYNTHETIC_WIDTH: u32 = 1920;
pub const SYNTHETIC_HEIGHT: u32 = 1080;
pub const MANIFEST_NAME: &str = "manifest.jsonl";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("images per class must be positive")]
    ZeroCount,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Manifest(#[from] DatasetError),
}

fn random_color(rng: &mut ChaCha8Rng, lo: u8, hi: u8) -> [u8; 3] {
    [
        rng.random_range(lo..=hi),
        rng.random_range(lo..=hi),
        rng.random_range(lo..=hi),
    ]
}

/// Light/dark colour pair shared by the two patterned classes so that colour
/// alone does not identify the class.
fn color_pair(rng: &mut ChaCha8Rng) -> ([u8; 3], [u8; 3]) {
    (random_color(rng, 150, 255), random_color(rng, 0, 105))
}

fn paint(width: u32, height: u32, mut pick: impl FnMut(u32, u32) -> [u8; 3]) -> Image {
    let mut px = Vec::with_capacity(width as usize * height as usize * 3);
    for y in 0..height {
        for x in 0..width {
            px.extend(pick(x, y));
        }
    }
    Image::new(width, height, px).expect("non-zero synthetic dimensions")
}

/// Renders one image of `label` at `width × height` from `rng`.
pub fn render(label: ClassLabel, rng: &mut ChaCha8Rng, width: u32, height: u32) -> Image {
    match label {
        ClassLabel::Cancerous => {
            let period: f64 = rng.random_range(2.0..=4.0);
            let cell = period / 2.0;
            let (px, py): (f64, f64) = (rng.random_range(0.0..period), rng.random_range(0.0..period));
            let (a, b) = color_pair(rng);
            paint(width, height, |x, y| {
                let cx = ((x as f64 + px) / cell).floor() as i64;
                let cy = ((y as f64 + py) / cell).floor() as i64;
                if (cx + cy) & 1 == 0 {
                    a
                } else {
                    b
                }
            })
        }
        ClassLabel::NonCancerous => {
            let period: f64 = rng.random_range(64.0..=128.0);
            let half = period / 2.0;
            let phase: f64 = rng.random_range(0.0..period);
            let rising = rng.random_bool(0.5);
            let (a, b) = color_pair(rng);
            paint(width, height, |x, y| {
                let along = if rising {
                    x as f64 + y as f64
                } else {
                    x as f64 - y as f64
                };
                let t = along / std::f64::consts::SQRT_2 + phase;
                if (t / half).floor() as i64 & 1 == 0 {
                    a
                } else {
                    b
                }
            })
        }
        ClassLabel::Negative => {
            // uniform values on a grid whose cell size is log-uniform in 1..16 px
            let grain = 2f64.powf(rng.random_range(0.0..4.0));
            let (ox, oy): (f64, f64) = (rng.random_range(0.0..grain), rng.random_range(0.0..grain));
            let cols = ((width as f64 + ox) / grain).ceil() as usize + 1;
            let rows = ((height as f64 + oy) / grain).ceil() as usize + 1;
            let mut cells = vec![0u8; cols * rows * 3];
            rng.fill_bytes(&mut cells);
            paint(width, height, |x, y| {
                let cx = ((x as f64 + ox) / grain) as usize;
                let cy = ((y as f64 + oy) / grain) as usize;
                let i = (cy * cols + cx) * 3;
                [cells[i], cells[i + 1], cells[i + 2]]
            })
        }
    }
}

/// File name used for the `index`-th image of `label`.
pub fn file_name(label: ClassLabel, index: usize) -> String {
    format!("{}_{index:04}.ppm", label.name())
}

/// Writes `3 × n_per_class` 1920×1080 PPM images plus `manifest.jsonl` into
/// `out_dir`. Entries are interleaved by class, so any prefix of the manifest
/// is close to balanced. Same `seed` ⇒ byte-identical files.
pub fn gen_synthetic(n_per_class: usize, seed: u64, out_dir: &Path) -> Result<DatasetManifest, SynthError> {
    if n_per_class == 0 {
        return Err(SynthError::ZeroCount);
    }
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| SynthError::Io { path, source }
    };
    fs::create_dir_all(out_dir).map_err(io(out_dir))?;

    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(3 * n_per_class);
    for i in 0..n_per_class {
        for label in ClassLabel::ALL {
            let mut rng = ChaCha8Rng::seed_from_u64(master.next_u64());
            let img = render(label, &mut rng, SYNTHETIC_WIDTH, SYNTHETIC_HEIGHT);
            let name = file_name(label, i);
            let path = out_dir.join(&name);
            fs::write(&path, encode_ppm(&img)).map_err(io(&path))?;
            entries.push(ManifestEntry {
                path: name,
                label,
                hardware: None,
            });
        }
    }
    let manifest = DatasetManifest::new(out_dir, entries)?;
    manifest.write(&out_dir.join(MANIFEST_NAME))?;
    Ok(manifest)
}
