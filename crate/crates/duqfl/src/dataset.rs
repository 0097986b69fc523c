//! Dataset ingestion: the WDBC breast-cancer file, a synthetic genomic
//! generator, and the stratified train/test split.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::path::Path;

use crate::error::{Error, Result};
use crate::vqc::Sample;

/// Feature count of the WDBC file format.
pub const WDBC_FEATURES: usize = 30;

/// Load the Wisconsin Diagnostic Breast Cancer CSV: one row per sample,
/// `id,diagnosis,f1..f30` with diagnosis `M` (label 1) or `B` (label 0).
/// Malformed rows are rejected with their line number.
pub fn load_wdbc<P: AsRef<Path>>(path: P) -> Result<Vec<Sample>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::DataRead {
        path: path.display().to_string(),
        source,
    })?;
    let path_str = path.display().to_string();
    let mut samples = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != WDBC_FEATURES + 2 {
            return Err(Error::DataFormat {
                path: path_str,
                line: line_no,
                reason: format!("expected {} fields, found {}", WDBC_FEATURES + 2, fields.len()),
            });
        }
        let label = match fields[1].trim() {
            "M" => 1u8,
            "B" => 0u8,
            other => {
                return Err(Error::DataFormat {
                    path: path_str,
                    line: line_no,
                    reason: format!("unknown diagnosis label {other:?} (expected M or B)"),
                })
            }
        };
        let mut features = Vec::with_capacity(WDBC_FEATURES);
        for (col, field) in fields[2..].iter().enumerate() {
            let value: f64 = field.trim().parse().map_err(|_| Error::DataFormat {
                path: path_str.clone(),
                line: line_no,
                reason: format!("feature column {} is not a number: {field:?}", col + 1),
            })?;
            if !value.is_finite() {
                return Err(Error::DataFormat {
                    path: path_str,
                    line: line_no,
                    reason: format!("feature column {} is not finite", col + 1),
                });
            }
            features.push(value);
        }
        samples.push(Sample::new(features, label));
    }
    if samples.is_empty() {
        return Err(Error::DataFormat {
            path: path_str,
            line: 0,
            reason: "file contains no samples".into(),
        });
    }
    Ok(samples)
}

/// Number of informative genes planted by [`generate_synthetic_genomic`]:
/// the first `max(1, n_genes / 5)` gene indices.
pub fn informative_gene_count(n_genes: usize) -> usize {
    (n_genes / 5).max(1)
}

/// Two-class Gaussian-mixture gene-expression matrix with a planted
/// informative gene subset (the leading [`informative_gene_count`] genes get
/// a class-dependent mean shift of ±1.0; the rest are pure noise). Labels
/// alternate, so the class balance is exact up to one sample. Deterministic
/// per seed.
pub fn generate_synthetic_genomic(n_samples: usize, n_genes: usize, seed: u64) -> Result<Vec<Sample>> {
    if n_samples == 0 || n_genes == 0 {
        return Err(Error::InvalidConfig(
            "synthetic genomic sizes must be positive".into(),
        ));
    }
    let informative = informative_gene_count(n_genes);
    let noise = Normal::new(0.0, 1.0).expect("valid normal");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let label = (i % 2) as u8;
        let shift = if label == 1 { 1.0 } else { -1.0 };
        let features = (0..n_genes)
            .map(|g| {
                let mean = if g < informative { shift } else { 0.0 };
                mean + noise.sample(&mut rng)
            })
            .collect();
        samples.push(Sample::new(features, label));
    }
    Ok(samples)
}

/// Stratified split: within each class, a seeded shuffle sends
/// `round(n_class * test_fraction)` samples to the test set. Keeps at least
/// one training sample per class.
pub fn stratified_split(
    data: &[Sample],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<Sample>, Vec<Sample>)> {
    if data.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::InvalidConfig(format!(
            "test fraction must lie in [0, 1), got {test_fraction}"
        )));
    }
    let mut labels: Vec<u8> = data.iter().map(|s| s.label).collect();
    labels.sort_unstable();
    labels.dedup();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for label in labels {
        let mut indices: Vec<usize> = data
            .iter()
            .enumerate()
            .filter(|(_, s)| s.label == label)
            .map(|(i, _)| i)
            .collect();
        for i in (1..indices.len()).rev() {
            let j = rng.gen_range(0..=i);
            indices.swap(i, j);
        }
        let n_test = ((indices.len() as f64 * test_fraction).round() as usize)
            .min(indices.len().saturating_sub(1));
        for (pos, &idx) in indices.iter().enumerate() {
            if pos < n_test {
                test.push(data[idx].clone());
            } else {
                train.push(data[idx].clone());
            }
        }
    }
    Ok((train, test))
}
