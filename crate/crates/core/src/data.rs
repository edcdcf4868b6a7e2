//! Datasets: MNIST IDX ingestion, dynamic binarisation, seeded splits, and
//! synthetic Gaussian clusters for desk-scale runs.

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::rng::{self, GaussianStream};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const MNIST_SIDE: usize = 28;
pub const MNIST_PIXELS: usize = MNIST_SIDE * MNIST_SIDE;

/// Standard MNIST file names, in the order they are concatenated into the
/// 70000-image corpus.
pub const MNIST_FILES: [(&str, &str); 2] = [
    ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
];

/// Feature rows in `[0, 1]` with one integer label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageDataset {
    pub pixels: Array2<f64>,
    pub labels: Vec<usize>,
}

impl ImageDataset {
    pub fn new(pixels: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        if pixels.nrows() != labels.len() {
            return Err(Error::Dimension(format!(
                "{} rows but {} labels",
                pixels.nrows(),
                labels.len()
            )));
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Domain("pixel values must lie in [0, 1]".into()));
        }
        Ok(ImageDataset { pixels, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.pixels.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn select(&self, idx: &[usize]) -> ImageDataset {
        ImageDataset {
            pixels: self.pixels.select(Axis(0), idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Comma-separated export with header `label,x_0,...`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label");
        for j in 0..self.dim() {
            out.push_str(&format!(",x_{j}"));
        }
        out.push('\n');
        for (row, label) in self.pixels.rows().into_iter().zip(&self.labels) {
            out.push_str(&label.to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

fn read_u32(bytes: &[u8], offset: usize, field: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(field, "header truncated"))
}

/// Decodes an IDX image file (magic `0x00000803`, `n × 28 × 28` bytes).
pub fn parse_idx_images(bytes: &[u8]) -> Result<Array2<f64>> {
    let magic = read_u32(bytes, 0, "images.magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format(
            "images.magic",
            format!("expected {IDX_IMAGES_MAGIC:#010x}, found {magic:#010x}"),
        ));
    }
    let n = read_u32(bytes, 4, "images.count")? as usize;
    let rows = read_u32(bytes, 8, "images.rows")? as usize;
    let cols = read_u32(bytes, 12, "images.cols")? as usize;
    if rows != MNIST_SIDE || cols != MNIST_SIDE {
        return Err(Error::format(
            "images.dims",
            format!("expected 28x28, found {rows}x{cols}"),
        ));
    }
    let payload = &bytes[16..];
    let expected = n * rows * cols;
    if payload.len() != expected {
        return Err(Error::format(
            "images.payload",
            format!("expected {expected} bytes, found {}", payload.len()),
        ));
    }
    Ok(Array2::from_shape_fn((n, rows * cols), |(i, j)| {
        payload[i * rows * cols + j] as f64 / 255.0
    }))
}

/// Decodes an IDX label file (magic `0x00000801`, `n` bytes in `0..=9`).
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let magic = read_u32(bytes, 0, "labels.magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::format(
            "labels.magic",
            format!("expected {IDX_LABELS_MAGIC:#010x}, found {magic:#010x}"),
        ));
    }
    let n = read_u32(bytes, 4, "labels.count")? as usize;
    let payload = &bytes[8..];
    if payload.len() != n {
        return Err(Error::format(
            "labels.payload",
            format!("expected {n} bytes, found {}", payload.len()),
        ));
    }
    if let Some(i) = payload.iter().position(|&b| b > 9) {
        return Err(Error::format(
            "labels.payload",
            format!("label {} at index {i} is not a digit", payload[i]),
        ));
    }
    Ok(payload.iter().map(|&b| b as usize).collect())
}

/// Inverse of [`parse_idx_images`] for byte-valued images.
pub fn encode_idx_images(images: &[[u8; MNIST_PIXELS]]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * MNIST_PIXELS);
    out.extend(IDX_IMAGES_MAGIC.to_be_bytes());
    out.extend((images.len() as u32).to_be_bytes());
    out.extend((MNIST_SIDE as u32).to_be_bytes());
    out.extend((MNIST_SIDE as u32).to_be_bytes());
    for img in images {
        out.extend_from_slice(img);
    }
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend(IDX_LABELS_MAGIC.to_be_bytes());
    out.extend((labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<ImageDataset> {
    let img_bytes = fs::read(&images_path).map_err(|e| Error::io(&images_path, e))?;
    let lab_bytes = fs::read(&labels_path).map_err(|e| Error::io(&labels_path, e))?;
    let pixels = parse_idx_images(&img_bytes)?;
    let labels = parse_idx_labels(&lab_bytes)?;
    if pixels.nrows() != labels.len() {
        return Err(Error::format(
            "labels.count",
            format!("{} images but {} labels", pixels.nrows(), labels.len()),
        ));
    }
    Ok(ImageDataset { pixels, labels })
}

/// Loads and concatenates the MNIST training and test files found in `dir`.
pub fn load_mnist_corpus(dir: impl AsRef<Path>) -> Result<ImageDataset> {
    let dir = dir.as_ref();
    let mut parts = Vec::new();
    for (img, lab) in MNIST_FILES {
        parts.push(load_idx(dir.join(img), dir.join(lab))?);
    }
    let views: Vec<_> = parts.iter().map(|p| p.pixels.view()).collect();
    let pixels =
        ndarray::concatenate(Axis(0), &views).map_err(|e| Error::Dimension(e.to_string()))?;
    let labels = parts.into_iter().flat_map(|p| p.labels).collect();
    Ok(ImageDataset { pixels, labels })
}

/// Bernoulli resampling of intensities: each entry becomes 1 with probability
/// equal to its value. `(seed, epoch)` selects an independent stream, so each
/// epoch gets a fresh draw.
pub fn dynamic_binarise(batch: ArrayView2<'_, f64>, seed: u64, epoch: u64) -> Result<Array2<f64>> {
    if let Some(v) = batch.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Domain(format!("intensity {v} outside [0, 1]")));
    }
    let mut r = rng::seeded(seed, epoch);
    Ok(batch.mapv(|p| if rng::uniform(&mut r) < p { 1.0 } else { 0.0 }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub train: usize,
    pub test: usize,
    pub validation: usize,
    pub seed: u64,
}

impl SplitSpec {
    /// 55000 / 10000 / 5000 over the 70000-image corpus.
    pub fn mnist(seed: u64) -> Self {
        SplitSpec {
            train: 55_000,
            test: 10_000,
            validation: 5_000,
            seed,
        }
    }

    /// The MNIST 55:10:5 proportions applied to `n` items; rounding goes to
    /// the training split.
    pub fn proportional(n: usize, seed: u64) -> Self {
        let test = n * 10 / 70;
        let validation = n * 5 / 70;
        SplitSpec {
            train: n - test - validation,
            test,
            validation,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: ImageDataset,
    pub test: ImageDataset,
    pub validation: ImageDataset,
    /// Corpus indices of each split, in split order.
    pub indices: [Vec<usize>; 3],
}

/// Seeded shuffle followed by a contiguous train / test / validation cut.
pub fn split(dataset: &ImageDataset, spec: SplitSpec) -> Result<Splits> {
    let total = spec.train + spec.test + spec.validation;
    if total != dataset.len() {
        return Err(Error::Config(format!(
            "split sizes {}+{}+{} = {total} do not match corpus size {}",
            spec.train,
            spec.test,
            spec.validation,
            dataset.len()
        )));
    }
    if spec.train == 0 || spec.test == 0 || spec.validation == 0 {
        return Err(Error::Config("every split must be non-empty".into()));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    rng::shuffle(&mut rng::seeded(spec.seed, 0), &mut order);
    let train_idx = order[..spec.train].to_vec();
    let test_idx = order[spec.train..spec.train + spec.test].to_vec();
    let val_idx = order[spec.train + spec.test..].to_vec();
    Ok(Splits {
        train: dataset.select(&train_idx),
        test: dataset.select(&test_idx),
        validation: dataset.select(&val_idx),
        indices: [train_idx, test_idx, val_idx],
    })
}

/// Logistic squashing of Gaussian blobs.
///
/// Each class has a mean in logit space whose coordinates are `±(2.5 + 2u)`
/// with random sign and `u ~ U[0,1)`; samples are `sigmoid(mean + spread·ε)`,
/// `ε ~ N(0, I)`. Labels cycle through the classes, so classes are balanced.
pub fn synthetic_clusters(
    n: usize,
    input_dim: usize,
    n_classes: usize,
    spread: f64,
    seed: u64,
) -> Result<ImageDataset> {
    if n_classes < 2 {
        return Err(Error::Config(
            "synthetic clusters need at least 2 classes".into(),
        ));
    }
    if input_dim == 0 || !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::Config(
            "input_dim must be positive and spread non-negative".into(),
        ));
    }
    let mut r = rng::seeded(seed, 0);
    let means: Vec<Vec<f64>> = (0..n_classes)
        .map(|_| {
            (0..input_dim)
                .map(|_| {
                    let sign = if rng::uniform(&mut r) < 0.5 {
                        -1.0
                    } else {
                        1.0
                    };
                    sign * (2.5 + 2.0 * rng::uniform(&mut r))
                })
                .collect()
        })
        .collect();
    let mut g = GaussianStream::new(rng::seeded(seed, 1));
    let labels: Vec<usize> = (0..n).map(|i| i % n_classes).collect();
    let mut pixels = Array2::zeros((n, input_dim));
    for (mut row, &c) in pixels.rows_mut().into_iter().zip(&labels) {
        for (v, m) in row.iter_mut().zip(&means[c]) {
            *v = crate::nn::sigmoid(m + spread * g.next());
        }
    }
    ImageDataset::new(pixels, labels)
}
