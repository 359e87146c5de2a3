//! Dataset construction: a synthetic Gaussian-mixture generator, IDX-format
//! image loading, feature standardization, and the noisy train/validation
//! split used for model selection.

use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::net::Matrix;
use crate::noise::{inject, LabeledDataset, NoiseSpec};
use crate::rng::{stream_rng, STREAM_DATASET, STREAM_SPLIT};

/// Train/validation/test triple. Train and validation are disjoint draws
/// from the noise-injected pool (validation labels are noisy); the test set
/// is never noise-injected.
#[derive(Debug, Clone)]
pub struct SplitDataset {
    pub train: LabeledDataset,
    pub val: LabeledDataset,
    pub test: LabeledDataset,
}

impl SplitDataset {
    /// Full pipeline: standardize on the training pool, inject noise into the
    /// pool, then carve out the validation fraction.
    pub fn build(
        mut pool: LabeledDataset,
        mut test: LabeledDataset,
        noise: &NoiseSpec,
        val_fraction: f64,
        split_seed: u64,
    ) -> Result<SplitDataset> {
        if pool.k != test.k {
            return Err(Error::config("train and test class counts differ"));
        }
        let standardizer = Standardizer::fit(&pool);
        standardizer.apply(&mut pool);
        standardizer.apply(&mut test);
        let noisy_pool = inject(&pool, noise)?;
        let (train, val) = split_train_val(&noisy_pool, val_fraction, split_seed)?;
        Ok(SplitDataset { train, val, test })
    }
}

/// `k` isotropic Gaussian clusters with means equally spaced on a circle in
/// the first two feature dimensions, scaled so the closest pair of means is
/// `separation` apart. Class counts are balanced to within one.
pub fn make_gaussian_mixture(
    k: usize,
    n: usize,
    dim: usize,
    separation: f64,
    cluster_std: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if k < 2 {
        return Err(Error::config("mixture needs k >= 2"));
    }
    if n < k {
        return Err(Error::config("mixture needs n >= k"));
    }
    if dim < 2 && k > 2 {
        return Err(Error::config("mixture with k > 2 needs dim >= 2"));
    }
    if !(separation > 0.0) || !(cluster_std > 0.0) {
        return Err(Error::config("separation and cluster_std must be positive"));
    }

    let radius = separation / (2.0 * (std::f64::consts::PI / k as f64).sin());
    let means: Vec<Vec<f64>> = (0..k)
        .map(|c| {
            let angle = 2.0 * std::f64::consts::PI * c as f64 / k as f64;
            let mut m = vec![0.0; dim];
            m[0] = radius * angle.cos();
            if dim > 1 {
                m[1] = radius * angle.sin();
            }
            m
        })
        .collect();

    let mut rng = stream_rng(seed, STREAM_DATASET);
    let mut features = Matrix::zeros(n, dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % k;
        labels.push(class);
        for (d, &mean) in means[class].iter().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            features.set(i, d, mean + cluster_std * z);
        }
    }
    LabeledDataset::from_clean(features, labels, k)
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Parses a big-endian IDX image/label file pair into a clean dataset with
/// pixel values scaled to `[0, 1]`.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let images = read_all(images_path)?;
    let labels = read_all(labels_path)?;

    let magic = read_be_u32(&images, 0, images_path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format {
            path: images_path.display().to_string(),
            offset: 0,
            detail: format!("expected image magic {IDX_IMAGES_MAGIC:#010x}, found {magic:#010x}"),
        });
    }
    let n = read_be_u32(&images, 4, images_path)? as usize;
    let rows = read_be_u32(&images, 8, images_path)? as usize;
    let cols = read_be_u32(&images, 12, images_path)? as usize;
    let pixels = n * rows * cols;
    if images.len() < 16 + pixels {
        return Err(Error::Format {
            path: images_path.display().to_string(),
            offset: images.len(),
            detail: format!("truncated image data: need {} bytes", 16 + pixels),
        });
    }

    let magic = read_be_u32(&labels, 0, labels_path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format {
            path: labels_path.display().to_string(),
            offset: 0,
            detail: format!("expected label magic {IDX_LABELS_MAGIC:#010x}, found {magic:#010x}"),
        });
    }
    let n_labels = read_be_u32(&labels, 4, labels_path)? as usize;
    if n_labels != n {
        return Err(Error::Format {
            path: labels_path.display().to_string(),
            offset: 4,
            detail: format!("{n_labels} labels for {n} images"),
        });
    }
    if labels.len() < 8 + n {
        return Err(Error::Format {
            path: labels_path.display().to_string(),
            offset: labels.len(),
            detail: format!("truncated label data: need {} bytes", 8 + n),
        });
    }

    let dim = rows * cols;
    let data: Vec<f64> = images[16..16 + pixels]
        .iter()
        .map(|&b| b as f64 / 255.0)
        .collect();
    let features = Matrix::from_vec(n, dim, data)?;
    let label_vec: Vec<usize> = labels[8..8 + n].iter().map(|&b| b as usize).collect();
    let k = label_vec.iter().copied().max().unwrap_or(0) + 1;
    LabeledDataset::from_clean(features, label_vec, k.max(2))
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
    Ok(buf)
}

fn read_be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::Format {
            path: path.display().to_string(),
            offset,
            detail: "file too short for header field".into(),
        });
    }
    Ok(u32::from_be_bytes(bytes[offset..end].try_into().expect("length checked")))
}

/// Per-feature affine transform fitted on training data; constant features
/// map to zero.
#[derive(Debug, Clone)]
pub struct Standardizer {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(dataset: &LabeledDataset) -> Self {
        let n = dataset.len().max(1) as f64;
        let dim = dataset.dim();
        let mut mean = vec![0.0; dim];
        for i in 0..dataset.len() {
            for (m, &v) in mean.iter_mut().zip(dataset.features.row(i)) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; dim];
        for i in 0..dataset.len() {
            for (d, (&v, &m)) in dataset.features.row(i).iter().zip(&mean).enumerate() {
                var[d] += (v - m) * (v - m);
            }
        }
        let std = var
            .iter()
            .map(|&v| {
                let s = (v / n).sqrt();
                if s > 0.0 {
                    s
                } else {
                    0.0
                }
            })
            .collect();
        Standardizer { mean, std }
    }

    pub fn apply(&self, dataset: &mut LabeledDataset) {
        let dim = dataset.dim();
        assert_eq!(dim, self.mean.len(), "standardizer dimension mismatch");
        for i in 0..dataset.len() {
            for d in 0..dim {
                let v = dataset.features.get(i, d);
                let out = if self.std[d] > 0.0 {
                    (v - self.mean[d]) / self.std[d]
                } else {
                    0.0
                };
                dataset.features.set(i, d, out);
            }
        }
    }
}

/// Random disjoint split of an (already noise-injected) pool. Both halves
/// keep the pool's example order.
pub fn split_train_val(
    pool: &LabeledDataset,
    val_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::config(format!(
            "val_fraction must be in (0, 1), got {val_fraction}"
        )));
    }
    let n = pool.len();
    let n_val = ((n as f64) * val_fraction).floor() as usize;
    if n_val == 0 || n_val == n {
        return Err(Error::config("split leaves an empty train or val set"));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = stream_rng(seed, STREAM_SPLIT);
    indices.shuffle(&mut rng);
    let mut val_idx: Vec<usize> = indices[..n_val].to_vec();
    let mut train_idx: Vec<usize> = indices[n_val..].to_vec();
    val_idx.sort_unstable();
    train_idx.sort_unstable();
    Ok((pool.subset(&train_idx), pool.subset(&val_idx)))
}

/// Writes the dataset as CSV for inspection: feature columns, then
/// `clean_label,noisy_label`.
pub fn export_csv(dataset: &LabeledDataset, writer: &mut impl std::io::Write) -> std::io::Result<()> {
    let dim = dataset.dim();
    let header: Vec<String> = (0..dim)
        .map(|d| format!("x{d}"))
        .chain(["clean_label".into(), "noisy_label".into()])
        .collect();
    writeln!(writer, "{}", header.join(","))?;
    for i in 0..dataset.len() {
        let mut fields: Vec<String> = dataset.features.row(i).iter().map(|v| v.to_string()).collect();
        fields.push(dataset.clean_labels[i].to_string());
        fields.push(dataset.noisy_labels[i].to_string());
        writeln!(writer, "{}", fields.join(","))?;
    }
    Ok(())
}
