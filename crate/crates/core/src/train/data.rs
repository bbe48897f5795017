//! Supervised datasets: IDX ingestion and small synthetic sets.

use std::io::{self, Cursor, Read};
use std::path::{Path, PathBuf};

use byteorder::{BigEndian, ReadBytesExt};
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::rng::{normal, SeedSpec};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const N_CLASSES: usize = 10;

/// Environment variable naming the directory that holds the IDX files.
pub const DATA_ENV: &str = "DEPTHFLOW_DATA";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `n x Z`.
    pub inputs: DMatrix<f64>,
    /// `n x Y`, one-hot for classification.
    pub targets: DMatrix<f64>,
    pub name: String,
}

impl Dataset {
    pub fn new(inputs: DMatrix<f64>, targets: DMatrix<f64>, name: impl Into<String>) -> Result<Self> {
        if inputs.nrows() == 0 {
            return Err(Error::InsufficientData { need: 1, got: 0 });
        }
        if targets.nrows() != inputs.nrows() {
            return Err(Error::Consistency(format!(
                "{} inputs but {} targets",
                inputs.nrows(),
                targets.nrows()
            )));
        }
        for (i, row) in targets.row_iter().enumerate() {
            if (row.sum() - 1.0).abs() > 1e-9 {
                return Err(Error::Consistency(format!("target row {i} does not sum to 1")));
            }
        }
        Ok(Dataset { inputs, targets, name: name.into() })
    }

    /// One-hot dataset from integer labels.
    pub fn from_labels(inputs: DMatrix<f64>, labels: &[usize], n_classes: usize, name: impl Into<String>) -> Result<Self> {
        if let Some(&l) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::Config(format!("label {l} out of range for {n_classes} classes")));
        }
        let targets = DMatrix::from_fn(labels.len(), n_classes, |r, c| if labels[r] == c { 1.0 } else { 0.0 });
        Dataset::new(inputs, targets, name)
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.targets.ncols()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.targets.row_iter().map(|r| r.transpose().argmax().0).collect()
    }

    /// Rows `range`, renamed.
    pub fn slice(&self, start: usize, len: usize) -> Result<Dataset> {
        if start + len > self.len() || len == 0 {
            return Err(Error::InsufficientData { need: start + len.max(1), got: self.len() });
        }
        Ok(Dataset {
            inputs: self.inputs.rows(start, len).into_owned(),
            targets: self.targets.rows(start, len).into_owned(),
            name: format!("{}[{start}..{}]", self.name, start + len),
        })
    }

    pub fn select(&self, idx: &[usize]) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.inputs.select_rows(idx), self.targets.select_rows(idx))
    }
}

fn truncated(path: &Path, what: &str) -> Error {
    Error::io(path, io::Error::new(io::ErrorKind::UnexpectedEof, format!("truncated {what}")))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Parses an IDX image file into `n x (rows * cols)` pixels scaled to `[0, 1]`.
pub fn parse_idx_images(path: &Path, bytes: &[u8]) -> Result<DMatrix<f64>> {
    let mut cur = Cursor::new(bytes);
    let magic = cur.read_u32::<BigEndian>().map_err(|_| truncated(path, "image header"))?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format {
            path: path.into(),
            msg: format!("expected image magic {IDX_IMAGES_MAGIC:#010x}, found {magic:#010x}"),
        });
    }
    let mut header = [0u32; 4];
    for h in header.iter_mut().skip(1) {
        *h = cur.read_u32::<BigEndian>().map_err(|_| truncated(path, "image header"))?;
    }
    let (n, pix) = (header[1] as usize, header[2] as usize * header[3] as usize);
    let mut raw = vec![0u8; n * pix];
    cur.read_exact(&mut raw).map_err(|_| truncated(path, "image data"))?;
    Ok(DMatrix::from_row_iterator(n, pix, raw.iter().map(|&b| b as f64 / 255.0)))
}

pub fn parse_idx_labels(path: &Path, bytes: &[u8]) -> Result<Vec<usize>> {
    let mut cur = Cursor::new(bytes);
    let magic = cur.read_u32::<BigEndian>().map_err(|_| truncated(path, "label header"))?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format {
            path: path.into(),
            msg: format!("expected label magic {IDX_LABELS_MAGIC:#010x}, found {magic:#010x}"),
        });
    }
    let n = cur.read_u32::<BigEndian>().map_err(|_| truncated(path, "label header"))? as usize;
    let mut raw = vec![0u8; n];
    cur.read_exact(&mut raw).map_err(|_| truncated(path, "label data"))?;
    if let Some(b) = raw.iter().find(|&&b| b as usize >= N_CLASSES) {
        return Err(Error::Format { path: path.into(), msg: format!("label {b} out of range") });
    }
    Ok(raw.into_iter().map(usize::from).collect())
}

/// Reads an IDX image/label file pair as a 10-class one-hot dataset.
pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dataset> {
    let (images, labels) = (images.as_ref(), labels.as_ref());
    let x = parse_idx_images(images, &read_file(images)?)?;
    let y = parse_idx_labels(labels, &read_file(labels)?)?;
    if x.nrows() != y.len() {
        return Err(Error::Consistency(format!(
            "{} holds {} images but {} holds {} labels",
            images.display(),
            x.nrows(),
            labels.display(),
            y.len()
        )));
    }
    let name = images.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Dataset::from_labels(x, &y, N_CLASSES, name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Standard MNIST file names under `root`.
pub fn mnist_paths(root: &Path, split: Split) -> (PathBuf, PathBuf) {
    let prefix = match split {
        Split::Train => "train",
        Split::Test => "t10k",
    };
    (
        root.join(format!("{prefix}-images-idx3-ubyte")),
        root.join(format!("{prefix}-labels-idx1-ubyte")),
    )
}

pub fn load_mnist(root: &Path, split: Split) -> Result<Dataset> {
    let (images, labels) = mnist_paths(root, split);
    load_idx(images, labels)
}

/// Dataset root from [`DATA_ENV`], if set.
pub fn data_root() -> Option<PathBuf> {
    std::env::var_os(DATA_ENV).map(PathBuf::from)
}

/// Two Gaussian blobs in the plane separated by a margin; labels are
/// balanced and linearly separable.
pub fn separable_toy(n: usize, seed: SeedSpec) -> Dataset {
    let mut rng = seed.rng();
    let mut x = DMatrix::zeros(n, 2);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % 2;
        let sign = if c == 0 { -1.0 } else { 1.0 };
        // offset along (1, 1) by at least 1.5 from the separating line
        let along = 1.5 + 0.5 * normal(&mut rng).abs();
        let across = normal(&mut rng);
        x[(i, 0)] = sign * along / 2f64.sqrt() + across / 2f64.sqrt();
        x[(i, 1)] = sign * along / 2f64.sqrt() - across / 2f64.sqrt();
        labels.push(c);
    }
    Dataset::from_labels(x, &labels, 2, "separable").expect("labels in range")
}

/// Synthetic 28x28 ten-class images: per-class stroke prototypes plus pixel
/// noise, clipped to `[0, 1]`.
pub fn synthetic_digits(n: usize, seed: SeedSpec) -> Dataset {
    let side = 28;
    let mut proto_rng = seed.with_layer(0).rng();
    let protos: Vec<Vec<f64>> = (0..N_CLASSES)
        .map(|_| {
            let mut img = vec![0.0; side * side];
            for _ in 0..4 {
                let (r0, c0) = (6.0 + 16.0 * unit(&mut proto_rng), 6.0 + 16.0 * unit(&mut proto_rng));
                let (r1, c1) = (6.0 + 16.0 * unit(&mut proto_rng), 6.0 + 16.0 * unit(&mut proto_rng));
                for s in 0..=40 {
                    let f = s as f64 / 40.0;
                    let (r, c) = (r0 + f * (r1 - r0), c0 + f * (c1 - c0));
                    for dr in -1..=1i64 {
                        for dc in -1..=1i64 {
                            let rr = (r.round() as i64 + dr).clamp(0, side as i64 - 1) as usize;
                            let cc = (c.round() as i64 + dc).clamp(0, side as i64 - 1) as usize;
                            img[rr * side + cc] = 1.0;
                        }
                    }
                }
            }
            img
        })
        .collect();
    let mut rng = seed.with_layer(1).rng();
    let mut x = DMatrix::zeros(n, side * side);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = (unit(&mut rng) * N_CLASSES as f64) as usize % N_CLASSES;
        for p in 0..side * side {
            x[(i, p)] = (protos[c][p] * (0.7 + 0.3 * unit(&mut rng)) + 0.15 * normal(&mut rng)).clamp(0.0, 1.0);
        }
        labels.push(c);
    }
    Dataset::from_labels(x, &labels, N_CLASSES, "synthetic-digits").expect("labels in range")
}

fn unit(rng: &mut crate::rng::StreamRng) -> f64 {
    use rand::Rng;
    rng.random::<f64>()
}
