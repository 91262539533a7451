//! Seeded synthetic datasets and IDX image ingestion.
//!
//! Every generator is a pure function of `(seed, parameters)` on top of
//! the pinned [`crate::rng::Stream`], so equal inputs produce
//! bit-identical datasets. Golden CSV fixtures for the canonical seeds
//! live under `tests/fixtures/` and are asserted byte-for-byte.

use ndarray::{Array1, Array2};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

use crate::rng::Stream;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("sample count must be even, got {0}")]
    OddCount(usize),
    #[error("sample count must be at least {min}, got {got}")]
    TooFew { min: usize, got: usize },
    #[error("dataset contains a non-finite value at row {0}")]
    NonFinite(usize),
    #[error("targets ({targets}) and inputs ({inputs}) disagree in length")]
    LengthMismatch { inputs: usize, targets: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad IDX magic in {path}: expected {expected:#010x}, got {got:#010x}")]
    BadMagic {
        path: String,
        expected: u32,
        got: u32,
    },
    #[error("truncated IDX payload in {path}: header declares {declared} bytes, found {found}")]
    Truncated {
        path: String,
        declared: usize,
        found: usize,
    },
    #[error("image/label count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("label {label} out of range 0..=9 at index {index}")]
    LabelRange { label: u8, index: usize },
    #[error("task index must be in 0..=4, got {0}")]
    BadTask(usize),
    #[error("requested {requested} training samples but only {available} available")]
    InsufficientSamples { requested: usize, available: usize },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed csv field {field:?}: {reason}")]
    BadCsvField { field: String, reason: String },
}

/// Record of how a dataset was generated.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub seed: u64,
    /// Generative parameters as name/value pairs, in a fixed order.
    pub params: Vec<(String, f64)>,
}

impl DatasetMeta {
    fn new(name: &str, seed: u64, params: &[(&str, f64)]) -> Self {
        DatasetMeta {
            name: name.to_owned(),
            seed,
            params: params.iter().map(|(k, v)| ((*k).to_owned(), *v)).collect(),
        }
    }
}

/// A regression dataset: `n x d` inputs with one real target per row.
#[derive(Clone, Debug)]
pub struct RegressionDataset {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    pub meta: DatasetMeta,
}

impl RegressionDataset {
    pub fn new(x: Array2<f64>, y: Array1<f64>, meta: DatasetMeta) -> Result<Self, DataError> {
        if y.len() != x.nrows() {
            return Err(DataError::LengthMismatch {
                inputs: x.nrows(),
                targets: y.len(),
            });
        }
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(DataError::TooFew {
                min: 1,
                got: x.nrows().min(x.ncols()),
            });
        }
        for (i, row) in x.rows().into_iter().enumerate() {
            if row.iter().any(|v| !v.is_finite()) || !y[i].is_finite() {
                return Err(DataError::NonFinite(i));
            }
        }
        Ok(RegressionDataset { x, y, meta })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Serialize as `x_0,...,x_{d-1},y` with a one-line header.
    pub fn to_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..self.dim()).map(|j| format!("x_{j}")).collect();
        header.push("y".to_owned());
        w.write_record(&header)?;
        for (row, &y) in self.x.rows().into_iter().zip(self.y.iter()) {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(y.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| DataError::Io {
            path: "<writer>".into(),
            source: e,
        })?;
        Ok(())
    }

    pub fn from_csv<R: Read>(reader: R, meta: DatasetMeta) -> Result<Self, DataError> {
        let mut r = csv::Reader::from_reader(reader);
        let width = r.headers()?.len();
        let d = width - 1;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let parse = |f: &str| -> Result<f64, DataError> {
                f.parse().map_err(|_| DataError::BadCsvField {
                    field: f.to_owned(),
                    reason: "not a float".into(),
                })
            };
            for j in 0..d {
                xs.push(parse(&rec[j])?);
            }
            ys.push(parse(&rec[d])?);
        }
        let n = ys.len();
        let x = Array2::from_shape_vec((n, d), xs).expect("shape consistent by construction");
        RegressionDataset::new(x, Array1::from_vec(ys), meta)
    }
}

/// The ground-truth function of the three-interval 1D regression task.
pub fn regression_1d_target(x: f64) -> f64 {
    2.0 * x.sin() + (2.0f64.sqrt() * x).sin() + (3.0f64.sqrt() * x).sin()
}

/// Two-component Gaussian mixture in 2D with regression targets -1 / +1.
///
/// `n/2` points per component; means `(-2,-2)` and `(2,2)`, covariance
/// `0.5 I`.
pub fn gen_gmm(seed: u64, n: usize) -> Result<RegressionDataset, DataError> {
    if n < 2 {
        return Err(DataError::TooFew { min: 2, got: n });
    }
    if n % 2 != 0 {
        return Err(DataError::OddCount(n));
    }
    let mut stream = Stream::new(seed);
    let sd = 0.5f64.sqrt();
    let mut x = Array2::<f64>::zeros((n, 2));
    let mut y = Array1::<f64>::zeros(n);
    for (c, (mean, target)) in [([-2.0, -2.0], -1.0), ([2.0, 2.0], 1.0)].iter().enumerate() {
        for i in 0..n / 2 {
            let row = c * (n / 2) + i;
            x[[row, 0]] = mean[0] + sd * stream.normal();
            x[[row, 1]] = mean[1] + sd * stream.normal();
            y[row] = *target;
        }
    }
    RegressionDataset::new(
        x,
        y,
        DatasetMeta::new("gmm", seed, &[("n", n as f64), ("component_var", 0.5)]),
    )
}

/// Two concentric annuli, radii `[3,4]` (target -1) and `[8,9]` (target +1),
/// sampled uniformly in area.
pub fn gen_two_rings(seed: u64, n: usize) -> Result<RegressionDataset, DataError> {
    if n < 2 {
        return Err(DataError::TooFew { min: 2, got: n });
    }
    if n % 2 != 0 {
        return Err(DataError::OddCount(n));
    }
    let mut stream = Stream::new(seed);
    let mut x = Array2::<f64>::zeros((n, 2));
    let mut y = Array1::<f64>::zeros(n);
    for (c, ((r_in, r_out), target)) in [((3.0f64, 4.0f64), -1.0), ((8.0, 9.0), 1.0)]
        .iter()
        .enumerate()
    {
        for i in 0..n / 2 {
            let row = c * (n / 2) + i;
            // area-uniform radius via the square-root transform
            let r = (r_in * r_in + stream.uniform01() * (r_out * r_out - r_in * r_in)).sqrt();
            let theta = stream.uniform(0.0, std::f64::consts::TAU);
            x[[row, 0]] = r * theta.cos();
            x[[row, 1]] = r * theta.sin();
            y[row] = *target;
        }
    }
    RegressionDataset::new(
        x,
        y,
        DatasetMeta::new("two-rings", seed, &[("n", n as f64)]),
    )
}

pub const REGRESSION_1D_INTERVALS: [(f64, f64); 3] = [(1.0, 1.3), (3.5, 3.8), (5.2, 5.5)];
pub const REGRESSION_1D_NOISE_SD: f64 = 0.2;

/// 1D regression on three disjoint intervals with Gaussian noise.
pub fn gen_1d_regression(seed: u64, n: usize) -> Result<RegressionDataset, DataError> {
    gen_1d_regression_with_noise(seed, n, REGRESSION_1D_NOISE_SD)
}

/// As [`gen_1d_regression`] with an explicit noise level (0 = noiseless).
pub fn gen_1d_regression_with_noise(
    seed: u64,
    n: usize,
    noise_sd: f64,
) -> Result<RegressionDataset, DataError> {
    if n < 3 {
        return Err(DataError::TooFew { min: 3, got: n });
    }
    let mut stream = Stream::new(seed);
    let mut x = Array2::<f64>::zeros((n, 1));
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        // equal probability per interval (intervals have equal length, so
        // this matches uniform sampling over the union)
        let which = ((stream.uniform01() * 3.0) as usize).min(2);
        let (lo, hi) = REGRESSION_1D_INTERVALS[which];
        let xi = stream.uniform(lo, hi);
        x[[i, 0]] = xi;
        y[i] = regression_1d_target(xi) + noise_sd * stream.normal();
    }
    RegressionDataset::new(
        x,
        y,
        DatasetMeta::new(
            "regression-1d",
            seed,
            &[("n", n as f64), ("noise_sd", noise_sd)],
        ),
    )
}

pub const PERIODIC_1D_RANGE: (f64, f64) = (0.0, 12.5);
pub const PERIODIC_1D_NOISE_SD: f64 = 3.0;

/// Periodic 1D regression: `y = sin(x) + eps`, `x` uniform on `[0, 12.5]`.
pub fn gen_periodic_1d(seed: u64, n: usize) -> Result<RegressionDataset, DataError> {
    gen_periodic_1d_with_noise(seed, n, PERIODIC_1D_NOISE_SD)
}

/// As [`gen_periodic_1d`] with an explicit noise level.
pub fn gen_periodic_1d_with_noise(
    seed: u64,
    n: usize,
    noise_sd: f64,
) -> Result<RegressionDataset, DataError> {
    if n < 3 {
        return Err(DataError::TooFew { min: 3, got: n });
    }
    let mut stream = Stream::new(seed);
    let mut x = Array2::<f64>::zeros((n, 1));
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        let xi = stream.uniform(PERIODIC_1D_RANGE.0, PERIODIC_1D_RANGE.1);
        x[[i, 0]] = xi;
        y[i] = xi.sin() + noise_sd * stream.normal();
    }
    RegressionDataset::new(
        x,
        y,
        DatasetMeta::new(
            "periodic-1d",
            seed,
            &[("n", n as f64), ("noise_sd", noise_sd)],
        ),
    )
}

pub const CL_DOMAIN: (f64, f64) = (0.0, 6.0);
pub const CL_SPLIT: f64 = 3.0;
pub const CL_POINTS: usize = 40;

/// Continual-learning pair: the three-sine target sampled on `[0, 6]`,
/// split at `x = 3` into task 1 (left) and task 2 (right).
pub fn gen_cl_tasks(seed: u64) -> (RegressionDataset, RegressionDataset) {
    let mut stream = Stream::new(seed);
    let mut xs = Vec::with_capacity(CL_POINTS);
    let mut ys = Vec::with_capacity(CL_POINTS);
    for _ in 0..CL_POINTS {
        let xi = stream.uniform(CL_DOMAIN.0, CL_DOMAIN.1);
        xs.push(xi);
        ys.push(regression_1d_target(xi) + REGRESSION_1D_NOISE_SD * stream.normal());
    }
    let build = |name: &str, keep: &dyn Fn(f64) -> bool| {
        let idx: Vec<usize> = (0..CL_POINTS).filter(|&i| keep(xs[i])).collect();
        let x = Array2::from_shape_vec((idx.len(), 1), idx.iter().map(|&i| xs[i]).collect())
            .expect("consistent shape");
        let y = Array1::from_iter(idx.iter().map(|&i| ys[i]));
        RegressionDataset::new(
            x,
            y,
            DatasetMeta::new(name, seed, &[("split", CL_SPLIT), ("n", CL_POINTS as f64)]),
        )
        .expect("generated task is non-degenerate")
    };
    (
        build("cl-task1", &|x| x < CL_SPLIT),
        build("cl-task2", &|x| x >= CL_SPLIT),
    )
}

const IDX3_MAGIC: u32 = 0x0000_0803;
const IDX1_MAGIC: u32 = 0x0000_0801;

/// A labelled image set with pixels scaled to `[0, 1]`.
#[derive(Clone, Debug)]
pub struct ImageSet {
    /// `n x (rows*cols)` pixel intensities in `[0, 1]`.
    pub images: Array2<f64>,
    pub labels: Vec<u8>,
    pub rows: usize,
    pub cols: usize,
}

fn read_file(path: &Path) -> Result<Vec<u8>, DataError> {
    std::fs::read(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

/// Parse a big-endian IDX3 image file into `(pixels/255, rows, cols)`.
pub fn load_idx_images(path: &Path) -> Result<(Array2<f64>, usize, usize), DataError> {
    let bytes = read_file(path)?;
    let p = path.display().to_string();
    if bytes.len() < 16 {
        return Err(DataError::Truncated {
            path: p,
            declared: 16,
            found: bytes.len(),
        });
    }
    let magic = be_u32(&bytes, 0);
    if magic != IDX3_MAGIC {
        return Err(DataError::BadMagic {
            path: p,
            expected: IDX3_MAGIC,
            got: magic,
        });
    }
    let n = be_u32(&bytes, 4) as usize;
    let rows = be_u32(&bytes, 8) as usize;
    let cols = be_u32(&bytes, 12) as usize;
    let declared = 16 + n * rows * cols;
    if bytes.len() < declared {
        return Err(DataError::Truncated {
            path: p,
            declared,
            found: bytes.len(),
        });
    }
    let data: Vec<f64> = bytes[16..declared].iter().map(|&b| b as f64 / 255.0).collect();
    let images =
        Array2::from_shape_vec((n, rows * cols), data).expect("consistent shape by construction");
    Ok((images, rows, cols))
}

/// Parse a big-endian IDX1 label file.
pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>, DataError> {
    let bytes = read_file(path)?;
    let p = path.display().to_string();
    if bytes.len() < 8 {
        return Err(DataError::Truncated {
            path: p,
            declared: 8,
            found: bytes.len(),
        });
    }
    let magic = be_u32(&bytes, 0);
    if magic != IDX1_MAGIC {
        return Err(DataError::BadMagic {
            path: p,
            expected: IDX1_MAGIC,
            got: magic,
        });
    }
    let n = be_u32(&bytes, 4) as usize;
    let declared = 8 + n;
    if bytes.len() < declared {
        return Err(DataError::Truncated {
            path: p,
            declared,
            found: bytes.len(),
        });
    }
    Ok(bytes[8..declared].to_vec())
}

/// Load an image/label IDX pair into an [`ImageSet`].
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<ImageSet, DataError> {
    let (images, rows, cols) = load_idx_images(images_path)?;
    let labels = load_idx_labels(labels_path)?;
    if labels.len() != images.nrows() {
        return Err(DataError::CountMismatch {
            images: images.nrows(),
            labels: labels.len(),
        });
    }
    for (index, &label) in labels.iter().enumerate() {
        if label > 9 {
            return Err(DataError::LabelRange { label, index });
        }
    }
    Ok(ImageSet {
        images,
        labels,
        rows,
        cols,
    })
}

/// Write images back to IDX3 (pixels are rounded to the nearest u8).
pub fn write_idx_images(set: &ImageSet, path: &Path) -> Result<(), DataError> {
    let mut out = Vec::with_capacity(16 + set.images.len());
    out.extend_from_slice(&IDX3_MAGIC.to_be_bytes());
    out.extend_from_slice(&(set.images.nrows() as u32).to_be_bytes());
    out.extend_from_slice(&(set.rows as u32).to_be_bytes());
    out.extend_from_slice(&(set.cols as u32).to_be_bytes());
    out.extend(set.images.iter().map(|&v| (v * 255.0).round() as u8));
    std::fs::write(path, out).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Write labels back to IDX1.
pub fn write_idx_labels(set: &ImageSet, path: &Path) -> Result<(), DataError> {
    let mut out = Vec::with_capacity(8 + set.labels.len());
    out.extend_from_slice(&IDX1_MAGIC.to_be_bytes());
    out.extend_from_slice(&(set.labels.len() as u32).to_be_bytes());
    out.extend_from_slice(&set.labels);
    std::fs::write(path, out).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Build one binary digit-pair task: digits `(2t, 2t+1)` mapped to
/// targets -1 / +1, keeping the first `n_train` matches in file order
/// (`None` keeps all matches, as used for test splits).
pub fn make_splitmnist_task(
    set: &ImageSet,
    task: usize,
    n_train: Option<usize>,
) -> Result<RegressionDataset, DataError> {
    if task > 4 {
        return Err(DataError::BadTask(task));
    }
    let (neg, pos) = (2 * task as u8, 2 * task as u8 + 1);
    let matching: Vec<usize> = set
        .labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == neg || l == pos)
        .map(|(i, _)| i)
        .collect();
    let keep = match n_train {
        Some(k) if k > matching.len() => {
            return Err(DataError::InsufficientSamples {
                requested: k,
                available: matching.len(),
            })
        }
        Some(k) => k,
        None => matching.len(),
    };
    let d = set.images.ncols();
    let mut x = Array2::<f64>::zeros((keep, d));
    let mut y = Array1::<f64>::zeros(keep);
    for (row, &i) in matching[..keep].iter().enumerate() {
        x.row_mut(row).assign(&set.images.row(i));
        y[row] = if set.labels[i] == neg { -1.0 } else { 1.0 };
    }
    RegressionDataset::new(
        x,
        y,
        DatasetMeta::new(
            &format!("splitmnist-task{task}"),
            0,
            &[("task", task as f64), ("n", keep as f64)],
        ),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use tempfile::tempdir;

    #[test]
    fn gmm_counts_and_cluster_means() {
        let ds = gen_gmm(0, 20).unwrap();
        assert_eq!(ds.len(), 20);
        assert_eq!(ds.y.iter().filter(|&&y| y == -1.0).count(), 10);
        // cluster sample means within 3 sd of the mean of 10 draws
        let tol = 3.0 * (0.5f64 / 10.0).sqrt();
        for (range, mu) in [(0..10, -2.0), (10..20, 2.0)] {
            for j in 0..2 {
                let m: f64 = range.clone().map(|i| ds.x[[i, j]]).sum::<f64>() / 10.0;
                assert!((m - mu).abs() < tol, "cluster mean {m} vs {mu}");
            }
        }
    }

    #[test]
    fn gmm_minimal_even_case() {
        let ds = gen_gmm(3, 2).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.y[0], -1.0);
        assert_eq!(ds.y[1], 1.0);
    }

    #[test]
    fn gmm_rejects_odd() {
        assert!(matches!(gen_gmm(0, 21), Err(DataError::OddCount(21))));
    }

    #[test]
    fn gmm_deterministic() {
        let a = gen_gmm(5, 20).unwrap();
        let b = gen_gmm(5, 20).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.y, b.y);
    }

    #[test]
    fn rings_radii_in_annuli() {
        let ds = gen_two_rings(1, 50).unwrap();
        for (i, row) in ds.x.rows().into_iter().enumerate() {
            let r = (row[0] * row[0] + row[1] * row[1]).sqrt();
            let inner = (3.0..=4.0).contains(&r);
            let outer = (8.0..=9.0).contains(&r);
            assert!(inner || outer, "radius {r} outside both annuli");
            assert!(!(4.0 < r && r < 8.0));
            assert_eq!(ds.y[i], if inner { -1.0 } else { 1.0 });
        }
    }

    #[test]
    fn regression_1d_support() {
        let ds = gen_1d_regression(2, 20).unwrap();
        for &x in ds.x.column(0) {
            assert!(
                REGRESSION_1D_INTERVALS
                    .iter()
                    .any(|&(lo, hi)| (lo..=hi).contains(&x)),
                "x={x} outside the three intervals"
            );
        }
    }

    #[test]
    fn regression_1d_noiseless_override() {
        let ds = gen_1d_regression_with_noise(2, 10, 0.0).unwrap();
        for (row, &y) in ds.x.rows().into_iter().zip(ds.y.iter()) {
            assert_abs_diff_eq!(y, regression_1d_target(row[0]), epsilon = 1e-12);
        }
    }

    #[test]
    fn regression_1d_residual_sd() {
        // Monte-Carlo moment check over 1e5 draws.
        let ds = gen_1d_regression(9, 100_000).unwrap();
        let var = ds
            .x
            .column(0)
            .iter()
            .zip(ds.y.iter())
            .map(|(&x, &y)| (y - regression_1d_target(x)).powi(2))
            .sum::<f64>()
            / 100_000.0;
        assert!(
            (var.sqrt() - 0.2).abs() < 0.01,
            "residual sd {}",
            var.sqrt()
        );
    }

    #[test]
    fn periodic_support_and_noiseless() {
        let ds = gen_periodic_1d(4, 35).unwrap();
        assert_eq!(ds.len(), 35);
        for &x in ds.x.column(0) {
            assert!((0.0..12.5).contains(&x));
        }
        let clean = gen_periodic_1d_with_noise(4, 35, 0.0).unwrap();
        for (row, &y) in clean.x.rows().into_iter().zip(clean.y.iter()) {
            assert_abs_diff_eq!(y, row[0].sin(), epsilon = 1e-12);
        }
    }

    #[test]
    fn periodic_residual_sd() {
        let ds = gen_periodic_1d(9, 100_000).unwrap();
        let var = ds
            .x
            .column(0)
            .iter()
            .zip(ds.y.iter())
            .map(|(&x, &y)| (y - x.sin()).powi(2))
            .sum::<f64>()
            / 100_000.0;
        assert!((var.sqrt() - 3.0).abs() < 0.1, "residual sd {}", var.sqrt());
    }

    #[test]
    fn cl_tasks_split_and_union() {
        let (t1, t2) = gen_cl_tasks(6);
        let max1 = t1.x.column(0).iter().cloned().fold(f64::MIN, f64::max);
        let min2 = t2.x.column(0).iter().cloned().fold(f64::MAX, f64::min);
        assert!(max1 < CL_SPLIT && CL_SPLIT <= min2);
        assert_eq!(t1.len() + t2.len(), CL_POINTS);
        // seeded determinism
        let (u1, _) = gen_cl_tasks(6);
        assert_eq!(t1.x, u1.x);
    }

    #[test]
    fn idx_round_trip() {
        let dir = tempdir().unwrap();
        let images = Array2::from_shape_fn((7, 4), |(i, j)| ((i * 31 + j * 7) % 256) as f64 / 255.0);
        let set = ImageSet {
            images,
            labels: vec![0, 1, 2, 3, 4, 5, 9],
            rows: 2,
            cols: 2,
        };
        let ip = dir.path().join("img.idx3");
        let lp = dir.path().join("lbl.idx1");
        write_idx_images(&set, &ip).unwrap();
        write_idx_labels(&set, &lp).unwrap();
        let back = load_idx(&ip, &lp).unwrap();
        assert_eq!(back.images, set.images);
        assert_eq!(back.labels, set.labels);
        assert_eq!((back.rows, back.cols), (2, 2));
    }

    #[test]
    fn idx_single_saturated_image() {
        let dir = tempdir().unwrap();
        let set = ImageSet {
            images: Array2::from_elem((1, 4), 1.0),
            labels: vec![7],
            rows: 2,
            cols: 2,
        };
        let ip = dir.path().join("one.idx3");
        let lp = dir.path().join("one.idx1");
        write_idx_images(&set, &ip).unwrap();
        write_idx_labels(&set, &lp).unwrap();
        let back = load_idx(&ip, &lp).unwrap();
        assert!(back.images.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn idx_error_paths() {
        let dir = tempdir().unwrap();
        // bad magic
        let bad = dir.path().join("bad");
        std::fs::write(&bad, [0u8, 0, 8, 2, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0]).unwrap();
        assert!(matches!(
            load_idx_images(&bad),
            Err(DataError::BadMagic { .. })
        ));
        // header declares 10 images but fewer bytes present
        let trunc = dir.path().join("trunc");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&IDX3_MAGIC.to_be_bytes());
        bytes.extend_from_slice(&10u32.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&[0u8; 5 * 4]);
        std::fs::write(&trunc, bytes).unwrap();
        assert!(matches!(
            load_idx_images(&trunc),
            Err(DataError::Truncated { .. })
        ));
        // count mismatch
        let set = ImageSet {
            images: Array2::zeros((3, 4)),
            labels: vec![1, 2],
            rows: 2,
            cols: 2,
        };
        let ip = dir.path().join("i");
        let lp = dir.path().join("l");
        write_idx_images(&set, &ip).unwrap();
        write_idx_labels(&set, &lp).unwrap();
        assert!(matches!(
            load_idx(&ip, &lp),
            Err(DataError::CountMismatch { .. })
        ));
    }

    fn toy_imageset() -> ImageSet {
        // labels 0..9 twice over, constant-intensity images encoding the index
        let images = Array2::from_shape_fn((20, 4), |(i, _)| i as f64 / 20.0);
        ImageSet {
            images,
            labels: (0..20).map(|i| (i % 10) as u8).collect(),
            rows: 2,
            cols: 2,
        }
    }

    #[test]
    fn splitmnist_selection_and_labels() {
        let set = toy_imageset();
        let t0 = make_splitmnist_task(&set, 0, None).unwrap();
        assert_eq!(t0.len(), 4); // digits 0 and 1 appear twice each
        assert_eq!(t0.y.iter().filter(|&&y| y == -1.0).count(), 2);
        // digit 3 maps to +1 in task 1
        let t1 = make_splitmnist_task(&set, 1, None).unwrap();
        for (row, &y) in t1.x.rows().into_iter().zip(t1.y.iter()) {
            let idx = (row[0] * 20.0).round() as usize;
            assert_eq!(y, if set.labels[idx] == 2 { -1.0 } else { 1.0 });
        }
    }

    #[test]
    fn splitmnist_truncation_and_errors() {
        let set = toy_imageset();
        let t = make_splitmnist_task(&set, 0, Some(3)).unwrap();
        assert_eq!(t.len(), 3);
        assert!(matches!(
            make_splitmnist_task(&set, 0, Some(5)),
            Err(DataError::InsufficientSamples { .. })
        ));
        assert!(matches!(
            make_splitmnist_task(&set, 5, None),
            Err(DataError::BadTask(5))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let ds = gen_gmm(8, 6).unwrap();
        let mut buf = Vec::new();
        ds.to_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x_0,x_1,y"));
        let back = RegressionDataset::from_csv(&buf[..], ds.meta.clone()).unwrap();
        assert_eq!(back.x, ds.x);
        assert_eq!(back.y, ds.y);
    }
}
