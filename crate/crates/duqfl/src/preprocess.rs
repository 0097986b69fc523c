//! Feature pipeline: per-feature standardization, PCA projection onto the
//! qubit count, and min-max rescaling of each component into [0, π].
//!
//! All statistics (means, scales, principal axes, component ranges) are
//! fitted on the training split only; the same fitted transform is then
//! applied to any other split, clamping values that fall outside the
//! training range.

use nalgebra::{DMatrix, SymmetricEigen};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::vqc::Sample;

/// Fitted preprocessing pipeline.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    means: Vec<f64>,
    /// Per-feature inverse scale; `None` where the training variance was
    /// (numerically) zero and standardization is skipped.
    scales: Vec<Option<f64>>,
    /// Principal axes, one row per output component.
    components: Vec<Vec<f64>>,
    explained_variance: Vec<f64>,
    mins: Vec<f64>,
    maxs: Vec<f64>,
}

impl Preprocessor {
    /// Fit on the training split: standardize, eigendecompose the covariance
    /// of the standardized features, keep the top `n_components` axes, and
    /// record the projected min/max per component.
    pub fn fit(train: &[Sample], n_components: usize) -> Result<Self> {
        if train.len() < 2 {
            return Err(Error::InvalidConfig(
                "preprocessing needs at least 2 training samples".into(),
            ));
        }
        let dim = train[0].features.len();
        if n_components == 0 || n_components > dim {
            return Err(Error::InvalidConfig(format!(
                "cannot project {dim} features onto {n_components} components"
            )));
        }
        if train.iter().any(|s| s.features.len() != dim) {
            return Err(Error::FeatureDimension {
                expected: dim,
                got: train.iter().map(|s| s.features.len()).find(|&l| l != dim).unwrap_or(dim),
            });
        }
        let n = train.len() as f64;

        let mut means = vec![0.0; dim];
        for s in train {
            for (m, v) in means.iter_mut().zip(&s.features) {
                *m += v;
            }
        }
        for m in &mut means {
            *m /= n;
        }
        let mut variances = vec![0.0; dim];
        for s in train {
            for ((var, v), m) in variances.iter_mut().zip(&s.features).zip(&means) {
                *var += (v - m) * (v - m);
            }
        }
        let scales: Vec<Option<f64>> = variances
            .iter()
            .map(|&var| {
                let std = (var / n).sqrt();
                if std > 1e-12 {
                    Some(1.0 / std)
                } else {
                    None
                }
            })
            .collect();

        let standardized = DMatrix::from_fn(train.len(), dim, |r, c| {
            let centered = train[r].features[c] - means[c];
            scales[c].map_or(centered, |s| centered * s)
        });
        let covariance = standardized.transpose() * &standardized / n;
        let eigen = SymmetricEigen::new(covariance);

        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| {
            eigen.eigenvalues[b]
                .partial_cmp(&eigen.eigenvalues[a])
                .expect("finite eigenvalues")
        });

        let mut components = Vec::with_capacity(n_components);
        let mut explained_variance = Vec::with_capacity(n_components);
        for &idx in order.iter().take(n_components) {
            let col = eigen.eigenvectors.column(idx);
            let mut axis: Vec<f64> = col.iter().copied().collect();
            // fix the sign so fits are reproducible across eigensolvers
            let lead = axis
                .iter()
                .cloned()
                .max_by(|a, b| a.abs().partial_cmp(&b.abs()).expect("finite"))
                .unwrap_or(1.0);
            if lead < 0.0 {
                for v in &mut axis {
                    *v = -*v;
                }
            }
            components.push(axis);
            explained_variance.push(eigen.eigenvalues[idx].max(0.0));
        }

        let mut pre = Preprocessor {
            means,
            scales,
            components,
            explained_variance,
            mins: vec![0.0; n_components],
            maxs: vec![0.0; n_components],
        };
        let projected: Vec<Vec<f64>> = train.iter().map(|s| pre.project(&s.features)).collect();
        for c in 0..n_components {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for row in &projected {
                lo = lo.min(row[c]);
                hi = hi.max(row[c]);
            }
            pre.mins[c] = lo;
            pre.maxs[c] = hi;
        }
        Ok(pre)
    }

    fn project(&self, features: &[f64]) -> Vec<f64> {
        let standardized: Vec<f64> = features
            .iter()
            .zip(&self.means)
            .zip(&self.scales)
            .map(|((v, m), s)| s.map_or(v - m, |s| (v - m) * s))
            .collect();
        self.components
            .iter()
            .map(|axis| axis.iter().zip(&standardized).map(|(a, x)| a * x).sum())
            .collect()
    }

    /// Apply the fitted transform; outputs lie in [0, π] componentwise.
    pub fn transform(&self, samples: &[Sample]) -> Result<Vec<Sample>> {
        let dim = self.means.len();
        samples
            .iter()
            .map(|s| {
                if s.features.len() != dim {
                    return Err(Error::FeatureDimension {
                        expected: dim,
                        got: s.features.len(),
                    });
                }
                let projected = self.project(&s.features);
                let rescaled = projected
                    .iter()
                    .enumerate()
                    .map(|(c, &v)| {
                        let range = self.maxs[c] - self.mins[c];
                        if range > 1e-12 {
                            (PI * (v - self.mins[c]) / range).clamp(0.0, PI)
                        } else {
                            PI / 2.0
                        }
                    })
                    .collect();
                Ok(Sample::new(rescaled, s.label))
            })
            .collect()
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    /// Covariance eigenvalues of the kept axes, largest first.
    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }
}

/// Fit on `train` and transform both splits.
pub fn fit_transform(
    train: &[Sample],
    test: &[Sample],
    n_components: usize,
) -> Result<(Preprocessor, Vec<Sample>, Vec<Sample>)> {
    let pre = Preprocessor::fit(train, n_components)?;
    let train_t = pre.transform(train)?;
    let test_t = pre.transform(test)?;
    Ok((pre, train_t, test_t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_samples(n: usize, dim: usize, seed: u64) -> Vec<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                Sample::new(
                    (0..dim).map(|d| rng.gen_range(-2.0..2.0) * (d + 1) as f64).collect(),
                    (i % 2) as u8,
                )
            })
            .collect()
    }

    #[test]
    fn outputs_stay_in_zero_pi() {
        let train = random_samples(60, 8, 1);
        let test = random_samples(40, 8, 2);
        let (_, train_t, test_t) = fit_transform(&train, &test, 4).unwrap();
        for s in train_t.iter().chain(&test_t) {
            assert_eq!(s.features.len(), 4);
            for &f in &s.features {
                assert!((0.0..=PI).contains(&f), "feature {f} out of range");
            }
        }
    }

    #[test]
    fn components_are_orthonormal() {
        let train = random_samples(80, 10, 3);
        let pre = Preprocessor::fit(&train, 5).unwrap();
        let comps = pre.components();
        for i in 0..comps.len() {
            for j in 0..comps.len() {
                let dot: f64 = comps[i].iter().zip(&comps[j]).map(|(a, b)| a * b).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expected).abs() < 1e-8, "({i},{j}) dot = {dot}");
            }
        }
    }

    #[test]
    fn explained_variance_is_nonincreasing() {
        let train = random_samples(80, 10, 4);
        let pre = Preprocessor::fit(&train, 6).unwrap();
        let ev = pre.explained_variance();
        for pair in ev.windows(2) {
            assert!(pair[0] >= pair[1] - 1e-12);
        }
    }

    #[test]
    fn zero_variance_feature_is_tolerated() {
        let mut train = random_samples(40, 5, 5);
        for s in &mut train {
            s.features[2] = 7.5; // constant column
        }
        let pre = Preprocessor::fit(&train, 3).unwrap();
        let out = pre.transform(&train).unwrap();
        assert!(out
            .iter()
            .all(|s| s.features.iter().all(|f| f.is_finite())));
    }

    #[test]
    fn train_statistics_ignore_test_rows() {
        let train = random_samples(50, 6, 6);
        let mut test = random_samples(30, 6, 7);
        let pre = Preprocessor::fit(&train, 3).unwrap();
        let train_before = pre.transform(&train).unwrap();

        // perturbing the test rows must leave the fitted transform unchanged
        for s in &mut test {
            for f in &mut s.features {
                *f *= 10.0;
            }
        }
        let pre_again = Preprocessor::fit(&train, 3).unwrap();
        let train_after = pre_again.transform(&train).unwrap();
        for (a, b) in train_before.iter().zip(&train_after) {
            for (x, y) in a.features.iter().zip(&b.features) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn rejects_more_components_than_features() {
        let train = random_samples(20, 3, 8);
        assert!(Preprocessor::fit(&train, 4).is_err());
        assert!(Preprocessor::fit(&train, 0).is_err());
    }
}
