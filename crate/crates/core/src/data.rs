//! Deterministic synthetic datasets and seeded splits.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Regression,
    Classification,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    /// `[rows × outputs]` real targets.
    Values(Tensor),
    Classes { labels: Vec<usize>, classes: usize },
}

/// Where a dataset came from. `indices` maps each row back to the parent
/// dataset when the dataset is a split; it is empty for generated data.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetMeta {
    pub generator: String,
    pub params: Vec<(String, f64)>,
    pub seed: u64,
    pub parent: Option<String>,
    pub indices: Vec<usize>,
}

impl DatasetMeta {
    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Tensor,
    targets: Targets,
    clean_targets: Option<Vec<f64>>,
    meta: DatasetMeta,
}

impl Dataset {
    pub fn new(
        inputs: Tensor,
        targets: Targets,
        clean_targets: Option<Vec<f64>>,
        meta: DatasetMeta,
    ) -> Result<Self> {
        if inputs.shape().len() != 2 {
            return Err(Error::invalid("inputs", "must be a 2-D matrix"));
        }
        if !inputs.is_finite() {
            return Err(Error::invalid("inputs", "must be finite"));
        }
        let rows = inputs.rows();
        match &targets {
            Targets::Values(t) => {
                if t.rows() != rows || t.shape().len() != 2 {
                    return Err(Error::ShapeMismatch {
                        op: "dataset",
                        left: inputs.shape().to_vec(),
                        right: t.shape().to_vec(),
                    });
                }
            }
            Targets::Classes { labels, classes } => {
                if labels.len() != rows {
                    return Err(Error::ShapeMismatch {
                        op: "dataset",
                        left: inputs.shape().to_vec(),
                        right: vec![labels.len()],
                    });
                }
                if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= *classes)
                {
                    return Err(Error::LabelOutOfRange {
                        row,
                        label,
                        classes: *classes,
                    });
                }
            }
        }
        if let Some(c) = &clean_targets {
            if c.len() != rows {
                return Err(Error::invalid("clean_targets", "length must equal row count"));
            }
        }
        Ok(Self {
            inputs,
            targets,
            clean_targets,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn task(&self) -> TaskKind {
        match self.targets {
            Targets::Values(_) => TaskKind::Regression,
            Targets::Classes { .. } => TaskKind::Classification,
        }
    }

    /// Output width a model needs: class count or regression width.
    pub fn output_dim(&self) -> usize {
        match &self.targets {
            Targets::Values(t) => t.cols(),
            Targets::Classes { classes, .. } => *classes,
        }
    }

    pub fn inputs(&self) -> &Tensor {
        &self.inputs
    }

    pub fn targets(&self) -> &Targets {
        &self.targets
    }

    pub fn clean_targets(&self) -> Option<&[f64]> {
        self.clean_targets.as_deref()
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    /// Rows `indices` in the given order. The subset's metadata points back at
    /// this dataset through `indices`.
    pub fn subset(&self, indices: &[usize], role: &str) -> Result<Self> {
        let inputs = self.inputs.select_rows(indices)?;
        let targets = match &self.targets {
            Targets::Values(t) => Targets::Values(t.select_rows(indices)?),
            Targets::Classes { labels, classes } => Targets::Classes {
                labels: indices.iter().map(|&i| labels[i]).collect(),
                classes: *classes,
            },
        };
        let clean = self
            .clean_targets
            .as_ref()
            .map(|c| indices.iter().map(|&i| c[i]).collect());
        let mut meta = self.meta.clone();
        meta.parent = Some(alloc::format!("{}:{}", self.meta.generator, role));
        meta.indices = if self.meta.indices.is_empty() {
            indices.to_vec()
        } else {
            indices.iter().map(|&i| self.meta.indices[i]).collect()
        };
        Ok(Self {
            inputs,
            targets,
            clean_targets: clean,
            meta,
        })
    }
}

/// Low-frequency sine plus a high-frequency sine "noise".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisySineParams {
    pub n_samples: usize,
    pub lo: f64,
    pub hi: f64,
    pub base_freq: f64,
    pub noise_freq: f64,
    pub noise_amp: f64,
    pub seed: u64,
}

impl Default for NoisySineParams {
    fn default() -> Self {
        Self {
            n_samples: 3000,
            lo: -core::f64::consts::PI,
            hi: core::f64::consts::PI,
            base_freq: 1.0,
            noise_freq: 20.0,
            noise_amp: 0.3,
            seed: 0,
        }
    }
}

impl NoisySineParams {
    pub fn clean(&self, x: f64) -> f64 {
        libm::sin(self.base_freq * x)
    }

    pub fn noisy(&self, x: f64) -> f64 {
        self.clean(x) + self.noise_amp * libm::sin(self.noise_freq * x)
    }

    /// Recovers the generator parameters from dataset metadata.
    pub fn from_meta(meta: &DatasetMeta) -> Option<Self> {
        if meta.generator != "noisy_sine" {
            return None;
        }
        Some(Self {
            n_samples: meta.param("n_samples")? as usize,
            lo: meta.param("lo")?,
            hi: meta.param("hi")?,
            base_freq: meta.param("base_freq")?,
            noise_freq: meta.param("noise_freq")?,
            noise_amp: meta.param("noise_amp")?,
            seed: meta.seed,
        })
    }
}

/// `n_samples` points with `x ~ U[lo, hi]`, clean target `sin(base_freq·x)` and
/// noisy target `clean + noise_amp·sin(noise_freq·x)`.
pub fn gen_noisy_sine(p: &NoisySineParams) -> Result<Dataset> {
    if p.n_samples == 0 {
        return Err(Error::invalid("n_samples", "must be at least 1"));
    }
    if !(p.hi > p.lo) || !p.lo.is_finite() || !p.hi.is_finite() {
        return Err(Error::invalid("x_range", "needs finite lo < hi"));
    }
    if !(p.noise_freq > p.base_freq) {
        return Err(Error::invalid("noise_freq", "must exceed base_freq"));
    }
    if !(p.noise_amp >= 0.0 && p.noise_amp.is_finite()) {
        return Err(Error::invalid("noise_amp", "must be finite and non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let xs: Vec<f64> = (0..p.n_samples).map(|_| rng.random_range(p.lo..=p.hi)).collect();
    let clean: Vec<f64> = xs.iter().map(|&x| p.clean(x)).collect();
    let noisy: Vec<f64> = xs.iter().map(|&x| p.noisy(x)).collect();
    let meta = DatasetMeta {
        generator: "noisy_sine".to_string(),
        params: vec![
            ("n_samples".to_string(), p.n_samples as f64),
            ("lo".to_string(), p.lo),
            ("hi".to_string(), p.hi),
            ("base_freq".to_string(), p.base_freq),
            ("noise_freq".to_string(), p.noise_freq),
            ("noise_amp".to_string(), p.noise_amp),
        ],
        seed: p.seed,
        parent: None,
        indices: Vec::new(),
    };
    Dataset::new(
        Tensor::matrix(p.n_samples, 1, xs)?,
        Targets::Values(Tensor::matrix(p.n_samples, 1, noisy)?),
        Some(clean),
        meta,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianMixtureParams {
    pub n_classes: usize,
    pub dim: usize,
    pub n_per_class: usize,
    pub spread: f64,
    pub separation: f64,
    pub seed: u64,
}

/// Balanced isotropic Gaussian blobs whose means lie on a random sphere of
/// radius `separation`.
pub fn gen_gaussian_mixture(p: &GaussianMixtureParams) -> Result<Dataset> {
    if p.n_classes < 2 {
        return Err(Error::invalid("n_classes", "must be at least 2"));
    }
    if p.dim == 0 || p.n_per_class == 0 {
        return Err(Error::invalid("dim", "dim and n_per_class must be positive"));
    }
    if !(p.spread > 0.0 && p.spread.is_finite()) {
        return Err(Error::invalid("spread", "must be positive"));
    }
    if !(p.separation > 0.0 && p.separation.is_finite()) {
        return Err(Error::invalid("separation", "must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let means: Vec<Vec<f64>> = (0..p.n_classes)
        .map(|_| loop {
            let v: Vec<f64> = (0..p.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = libm::sqrt(v.iter().map(|x| x * x).sum());
            if norm > 1e-12 {
                break v.into_iter().map(|x| x / norm * p.separation).collect();
            }
        })
        .collect();
    let rows = p.n_classes * p.n_per_class;
    let mut inputs = Vec::with_capacity(rows * p.dim);
    let mut labels = Vec::with_capacity(rows);
    for (class, mean) in means.iter().enumerate() {
        for _ in 0..p.n_per_class {
            for &m in mean {
                let z: f64 = StandardNormal.sample(&mut rng);
                inputs.push(m + p.spread * z);
            }
            labels.push(class);
        }
    }
    let meta = DatasetMeta {
        generator: "gaussian_mixture".to_string(),
        params: vec![
            ("n_classes".to_string(), p.n_classes as f64),
            ("dim".to_string(), p.dim as f64),
            ("n_per_class".to_string(), p.n_per_class as f64),
            ("spread".to_string(), p.spread),
            ("separation".to_string(), p.separation),
        ],
        seed: p.seed,
        parent: None,
        indices: Vec::new(),
    };
    Dataset::new(
        Tensor::matrix(rows, p.dim, inputs)?,
        Targets::Classes {
            labels,
            classes: p.n_classes,
        },
        None,
        meta,
    )
}

/// Seeded permutation followed by a contiguous train/val/test partition.
pub fn split(dataset: &Dataset, fractions: [f64; 3], seed: u64) -> Result<[Dataset; 3]> {
    if fractions.iter().any(|f| !(*f > 0.0)) {
        return Err(Error::invalid("fractions", "must all be positive"));
    }
    let total: f64 = fractions.iter().sum();
    if libm::fabs(total - 1.0) > 1e-9 {
        return Err(Error::invalid("fractions", alloc::format!("sum to {total}, not 1")));
    }
    let n = dataset.len();
    let n_train = libm::round(fractions[0] * n as f64) as usize;
    let n_val = libm::round(fractions[1] * n as f64) as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(Error::EmptySplit);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train, rest) = order.split_at(n_train);
    let (val, test) = rest.split_at(n_val);
    Ok([
        dataset.subset(train, "train")?,
        dataset.subset(val, "val")?,
        dataset.subset(test, "test")?,
    ])
}

/// Holds out `fraction` of the rows as a validation set.
pub fn holdout(dataset: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid("fraction", "must lie in (0, 1)"));
    }
    let n = dataset.len();
    let n_val = libm::round(fraction * n as f64) as usize;
    if n_val == 0 || n_val >= n {
        return Err(Error::EmptySplit);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (val, train) = order.split_at(n_val);
    Ok((dataset.subset(train, "train")?, dataset.subset(val, "val")?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn noisy_sine_row_count_and_bounds() {
        let d = gen_noisy_sine(&NoisySineParams::default()).unwrap();
        assert_eq!(d.len(), 3000);
        let Targets::Values(t) = d.targets() else { panic!() };
        // |sin| ≤ 1 and |0.3·sin| ≤ 0.3
        assert!(t.data().iter().all(|v| v.abs() <= 1.3));
        assert!(d.inputs().data().iter().all(|x| x.abs() <= core::f64::consts::PI));
        assert_eq!(d.clean_targets().unwrap().len(), 3000);
    }

    #[test]
    fn noise_free_targets_equal_clean() {
        let p = NoisySineParams {
            noise_amp: 0.0,
            n_samples: 50,
            ..Default::default()
        };
        let d = gen_noisy_sine(&p).unwrap();
        let Targets::Values(t) = d.targets() else { panic!() };
        assert_eq!(t.data(), d.clean_targets().unwrap());
    }

    #[test]
    fn noisy_sine_rejects_bad_params() {
        let bad_range = NoisySineParams {
            lo: 1.0,
            hi: 1.0,
            ..Default::default()
        };
        assert!(gen_noisy_sine(&bad_range).is_err());
        let bad_freq = NoisySineParams {
            noise_freq: 0.5,
            ..Default::default()
        };
        assert!(gen_noisy_sine(&bad_freq).is_err());
    }

    #[test]
    fn noise_sign_changes_track_noise_frequency() {
        let p = NoisySineParams {
            n_samples: 2000,
            ..Default::default()
        };
        let d = gen_noisy_sine(&p).unwrap();
        let Targets::Values(t) = d.targets() else { panic!() };
        let mut pts: Vec<(f64, f64)> = d
            .inputs()
            .data()
            .iter()
            .zip(t.data().iter().zip(d.clean_targets().unwrap()))
            .map(|(&x, (&y, &c))| (x, y - c))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let changes = pts
            .windows(2)
            .filter(|w| (w[0].1 > 0.0) != (w[1].1 > 0.0))
            .count() as f64;
        let expected = 2.0 * p.noise_freq * (p.hi - p.lo) / (2.0 * core::f64::consts::PI);
        assert!((changes - expected).abs() <= 0.05 * expected, "{changes} vs {expected}");
    }

    #[test]
    fn mixture_shape_balance_and_determinism() {
        let p = GaussianMixtureParams {
            n_classes: 3,
            dim: 4,
            n_per_class: 20,
            spread: 0.5,
            separation: 3.0,
            seed: 11,
        };
        let a = gen_gaussian_mixture(&p).unwrap();
        let b = gen_gaussian_mixture(&p).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 60);
        let Targets::Classes { labels, .. } = a.targets() else { panic!() };
        for c in 0..3 {
            assert_eq!(labels.iter().filter(|&&l| l == c).count(), 20);
        }
        assert!(gen_gaussian_mixture(&GaussianMixtureParams { n_classes: 1, ..p }).is_err());
        assert!(gen_gaussian_mixture(&GaussianMixtureParams { spread: 0.0, ..p }).is_err());
    }

    #[test]
    fn split_sizes_disjoint_and_complete() {
        let d = gen_noisy_sine(&NoisySineParams::default()).unwrap();
        let [tr, va, te] = split(&d, [0.8, 0.1, 0.1], 5).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (2400, 300, 300));
        let all: Vec<usize> = [&tr, &va, &te]
            .iter()
            .flat_map(|s| s.meta().indices.iter().copied())
            .collect();
        let set: BTreeSet<usize> = all.iter().copied().collect();
        assert_eq!(set.len(), 3000);
        assert_eq!(set, (0..3000).collect());
        // rows really come from the parent
        for (k, &i) in tr.meta().indices.iter().enumerate().take(20) {
            assert_eq!(tr.inputs().row(k), d.inputs().row(i));
        }
    }

    #[test]
    fn split_rejects_bad_fractions() {
        let d = gen_noisy_sine(&NoisySineParams::default()).unwrap();
        assert!(split(&d, [0.8, 0.1, 0.2], 0).is_err());
        assert!(split(&d, [0.9, 0.1, 0.0], 0).is_err());
    }
}
