//! Unpaired image datasets: PNG folders, synthetic tasks, and per-epoch
//! sampling order.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{rng_for, Stream};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

/// Two image sets of one shape, `[1, C, H, W]` each, values in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct UnpairedDataset {
    pub name: String,
    side_a: Vec<Tensor>,
    side_b: Vec<Tensor>,
}

impl UnpairedDataset {
    pub fn new(name: impl Into<String>, side_a: Vec<Tensor>, side_b: Vec<Tensor>) -> Result<Self> {
        if side_a.is_empty() || side_b.is_empty() {
            return Err(Error::Dataset(format!(
                "both sides need images, got {} and {}",
                side_a.len(),
                side_b.len()
            )));
        }
        let shape = side_a[0].shape().to_vec();
        if shape.len() != 4 || shape[0] != 1 {
            return Err(Error::Dataset(format!("images must be [1, C, H, W], got {shape:?}")));
        }
        for (side, images) in [("A", &side_a), ("B", &side_b)] {
            if let Some(i) = images.iter().position(|t| t.shape() != shape.as_slice()) {
                return Err(Error::Dataset(format!(
                    "side {side} image {i} has shape {:?}, expected {shape:?}",
                    images[i].shape()
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            side_a,
            side_b,
        })
    }

    pub fn side(&self, side: Side) -> &[Tensor] {
        match side {
            Side::A => &self.side_a,
            Side::B => &self.side_b,
        }
    }

    pub fn len(&self, side: Side) -> usize {
        self.side(side).len()
    }

    /// `[C, H, W]` of every image.
    pub fn image_shape(&self) -> [usize; 3] {
        let s = self.side_a[0].shape();
        [s[1], s[2], s[3]]
    }
}

pub fn normalize_pixel(p: u8) -> f64 {
    p as f64 / 255.0 * 2.0 - 1.0
}

pub fn denormalize_pixel(v: f64) -> u8 {
    ((v.clamp(-1.0, 1.0) + 1.0) / 2.0 * 255.0).round() as u8
}

/// Converts interleaved RGB bytes to a `[1, 3, H, W]` tensor.
pub fn rgb_to_tensor(rgb: &[u8], height: usize, width: usize) -> Result<Tensor> {
    if rgb.len() != height * width * 3 {
        return Err(invalid!("{} bytes for a {height}x{width} RGB image", rgb.len()));
    }
    let plane = height * width;
    Tensor::new(
        vec![1, 3, height, width],
        (0..3 * plane)
            .map(|i| normalize_pixel(rgb[(i % plane) * 3 + i / plane]))
            .collect(),
    )
}

/// Converts the first image of a `[B, 3, H, W]` tensor to interleaved RGB bytes.
pub fn tensor_to_rgb(t: &Tensor) -> Result<(Vec<u8>, usize, usize)> {
    let (_, c, h, w) = t.dims4()?;
    if c != 3 {
        return Err(invalid!("expected 3 channels, got {c}"));
    }
    let plane = h * w;
    let mut out = vec![0u8; plane * 3];
    for ch in 0..3 {
        for (i, v) in t.plane(0, ch).iter().enumerate() {
            out[i * 3 + ch] = denormalize_pixel(*v);
        }
    }
    Ok((out, h, w))
}

pub fn read_png(path: &Path) -> Result<Tensor> {
    let image_err = |message: String| Error::Image {
        path: path.to_path_buf(),
        message,
    };
    let img = image::ImageReader::open(path)?
        .with_guessed_format()?
        .decode()
        .map_err(|e| image_err(e.to_string()))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    rgb_to_tensor(img.as_raw(), h as usize, w as usize)
}

pub fn write_png(t: &Tensor, path: &Path) -> Result<()> {
    let (rgb, h, w) = tensor_to_rgb(t)?;
    let img = image::RgbImage::from_raw(w as u32, h as u32, rgb).expect("buffer sized for the image");
    img.save_with_format(path, image::ImageFormat::Png).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::Dataset(format!("{} is not a directory", dir.display())));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| e.eq_ignore_ascii_case("png"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Dataset(format!("no PNG images in {}", dir.display())));
    }
    Ok(files)
}

fn load_side(dir: &Path) -> Result<Vec<Tensor>> {
    let files = png_files(dir)?;
    let mut images = Vec::with_capacity(files.len());
    for f in &files {
        let t = read_png(f)?;
        if let Some(first) = images.first() {
            let first: &Tensor = first;
            if first.shape() != t.shape() {
                return Err(Error::Image {
                    path: f.clone(),
                    message: format!(
                        "size {}x{} differs from {}x{}",
                        t.shape()[2],
                        t.shape()[3],
                        first.shape()[2],
                        first.shape()[3]
                    ),
                });
            }
        }
        images.push(t);
    }
    Ok(images)
}

/// Loads every PNG of two folders in lexicographic order.
pub fn load_unpaired(dir_a: &Path, dir_b: &Path) -> Result<UnpairedDataset> {
    let a = load_side(dir_a)?;
    let b = load_side(dir_b)?;
    if a[0].shape() != b[0].shape() {
        return Err(Error::Dataset(format!(
            "sides differ in image size: {:?} vs {:?}",
            a[0].shape(),
            b[0].shape()
        )));
    }
    let name = dir_a
        .parent()
        .and_then(|p| p.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    UnpairedDataset::new(name, a, b)
}

/// Loads `<root>/trainA` and `<root>/trainB`.
pub fn load_root(root: &Path) -> Result<UnpairedDataset> {
    let mut ds = load_unpaired(&root.join("trainA"), &root.join("trainB"))?;
    ds.name = root
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(ds)
}

/// Writes `<root>/trainA/NNNN.png` and `<root>/trainB/NNNN.png`.
pub fn write_dataset(ds: &UnpairedDataset, root: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (side, dir) in [(Side::A, "trainA"), (Side::B, "trainB")] {
        let d = root.join(dir);
        fs::create_dir_all(&d)?;
        for (i, img) in ds.side(side).iter().enumerate() {
            let p = d.join(format!("{i:04}.png"));
            write_png(img, &p)?;
            written.push(p);
        }
    }
    Ok(written)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    /// Red-dominant scenes on side A, the same scenes with red and blue
    /// exchanged on side B.
    ColorSwap,
    /// Like `ColorSwap`, plus high-frequency stripes on side B only.
    TextureAsym,
}

impl std::str::FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "color_swap" => Ok(Self::ColorSwap),
            "texture_asym" => Ok(Self::TextureAsym),
            _ => Err(invalid!("unknown synthetic task {s:?} (expected color_swap or texture_asym)")),
        }
    }
}

impl std::fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::ColorSwap => "color_swap",
            Self::TextureAsym => "texture_asym",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub kind: SyntheticKind,
    pub image_size: usize,
    pub n_a: usize,
    pub n_b: usize,
    pub seed: u64,
}

const STRIPE_AMPLITUDE: i32 = 45;

/// One scene as interleaved RGB: a dim reddish background with two or three
/// bright red rectangles or discs.
fn red_scene(size: usize, rng: &mut impl Rng) -> Vec<u8> {
    let bg = [rng.random_range(70..110u8), rng.random_range(10..40u8), rng.random_range(10..40u8)];
    let mut px: Vec<u8> = (0..size * size).flat_map(|_| bg).collect();
    for _ in 0..rng.random_range(2..=3) {
        let color = [rng.random_range(190..=255u8), rng.random_range(0..90u8), rng.random_range(0..60u8)];
        let extent = rng.random_range(size / 4..=size / 2).max(2);
        let x0 = rng.random_range(0..=size - extent);
        let y0 = rng.random_range(0..=size - extent);
        let disc = rng.random_bool(0.5);
        let r = extent as f64 / 2.0;
        for y in y0..y0 + extent {
            for x in x0..x0 + extent {
                let dx = x as f64 + 0.5 - (x0 as f64 + r);
                let dy = y as f64 + 0.5 - (y0 as f64 + r);
                if !disc || dx * dx + dy * dy <= r * r {
                    px[(y * size + x) * 3..][..3].copy_from_slice(&color);
                }
            }
        }
    }
    px
}

fn swap_red_blue(px: &mut [u8]) {
    px.chunks_exact_mut(3).for_each(|p| p.swap(0, 2));
}

fn add_stripes(px: &mut [u8], size: usize, rng: &mut impl Rng) {
    let orientation = rng.random_range(0..3);
    for y in 0..size {
        for x in 0..size {
            let phase = match orientation {
                0 => y,
                1 => x,
                _ => x + y,
            };
            let delta = if phase % 2 == 0 { STRIPE_AMPLITUDE } else { -STRIPE_AMPLITUDE };
            for c in &mut px[(y * size + x) * 3..][..3] {
                *c = (*c as i32 + delta).clamp(0, 255) as u8;
            }
        }
    }
}

pub fn generate_synthetic(task: &SyntheticTask) -> Result<UnpairedDataset> {
    if task.image_size < 8 {
        return Err(invalid!("synthetic images need size >= 8, got {}", task.image_size));
    }
    if task.n_a < 2 || task.n_b < 2 {
        return Err(invalid!("synthetic tasks need at least 2 images per side"));
    }
    let s = task.image_size;
    let mut rng_a = rng_for(task.seed, Stream::Synthetic, 0);
    let mut rng_b = rng_for(task.seed, Stream::Synthetic, 1);
    let side_a = (0..task.n_a)
        .map(|_| rgb_to_tensor(&red_scene(s, &mut rng_a), s, s))
        .collect::<Result<Vec<_>>>()?;
    let side_b = (0..task.n_b)
        .map(|_| {
            let mut px = red_scene(s, &mut rng_b);
            swap_red_blue(&mut px);
            if task.kind == SyntheticKind::TextureAsym {
                add_stripes(&mut px, s, &mut rng_b);
            }
            rgb_to_tensor(&px, s, s)
        })
        .collect::<Result<Vec<_>>>()?;
    UnpairedDataset::new(task.kind.to_string(), side_a, side_b)
}

/// Seeded random order of `0..n`.
pub fn permutation(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// Splits `0..n` into two disjoint seeded halves of sizes `n/2` and `n - n/2`.
pub fn split_halves(n: usize, seed: u64, side: Side) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(invalid!("cannot halve a subdataset of {n} image(s)"));
    }
    let mut rng = rng_for(seed, Stream::Split, side as u64);
    let mut p = permutation(n, &mut rng);
    let second = p.split_off(n / 2);
    Ok((p, second))
}

/// Sampling order of one epoch over two index pools: each pool is visited in
/// its own seeded shuffle and the smaller one is cycled.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairSchedule {
    order_a: Vec<usize>,
    order_b: Vec<usize>,
}

impl PairSchedule {
    /// `stream` separates independent schedules within one epoch.
    pub fn new(pool_a: &[usize], pool_b: &[usize], seed: u64, epoch: usize, stream: u64) -> Result<Self> {
        if pool_a.is_empty() || pool_b.is_empty() {
            return Err(invalid!("cannot sample from an empty subdataset"));
        }
        let index = ((epoch as u64) << 8) | (stream << 1);
        let mut ra = rng_for(seed, Stream::Shuffle, index);
        let mut rb = rng_for(seed, Stream::Shuffle, index | 1);
        let order_a = permutation(pool_a.len(), &mut ra).into_iter().map(|i| pool_a[i]).collect();
        let order_b = permutation(pool_b.len(), &mut rb).into_iter().map(|i| pool_b[i]).collect();
        Ok(Self { order_a, order_b })
    }

    pub fn iterations(&self) -> usize {
        self.order_a.len().max(self.order_b.len())
    }

    /// Indices into sides A and B for iteration `iter` (wrapping).
    pub fn pair(&self, iter: usize) -> (usize, usize) {
        (self.order_a[iter % self.order_a.len()], self.order_b[iter % self.order_b.len()])
    }
}

/// Mean absolute response of the 4-neighbour Laplacian over one plane,
/// with borders replicated.
pub fn mean_abs_laplacian(plane: &[f64], height: usize, width: usize) -> f64 {
    let at = |y: isize, x: isize| {
        let y = y.clamp(0, height as isize - 1) as usize;
        let x = x.clamp(0, width as isize - 1) as usize;
        plane[y * width + x]
    };
    let mut sum = 0.0;
    for y in 0..height as isize {
        for x in 0..width as isize {
            let l = at(y - 1, x) + at(y + 1, x) + at(y, x - 1) + at(y, x + 1) - 4.0 * at(y, x);
            sum += l.abs();
        }
    }
    sum / (height * width) as f64
}
