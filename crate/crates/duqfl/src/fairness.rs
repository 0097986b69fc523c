//! Fairness suite over the best-client selection history.
//!
//! - FFM: `1 − (max f_c − min f_c) / max f_c` over raw selection counts;
//!   1 means every client was selected equally often.
//! - EFS: entropy of the normalized selection frequencies, base C, with the
//!   `0·log 0 = 0` convention; 1 is maximal diversity.
//! - ΔAccuracy: relative accuracy drop `(A_max − A_setting) / A_max`.
//! - FETI: `λ·EFS + (1−λ)·(1−ΔAccuracy)`, the fairness-efficiency trade-off.
//!
//! Plus per-round accuracy variance across clients and the binary
//! client-by-round selection heatmap.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::federation::RoundRecord;

/// How often each client was selected best, over a total of `rounds` rounds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionHistory {
    pub counts: Vec<u64>,
    pub rounds: u64,
}

impl SelectionHistory {
    pub fn new(counts: Vec<u64>) -> Self {
        let rounds = counts.iter().sum();
        SelectionHistory { counts, rounds }
    }

    /// Tally the winners of a round-record sequence; the client count is
    /// taken from the per-client vectors of the first record.
    pub fn from_records(records: &[RoundRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyHistory);
        }
        let n_clients = records[0].per_client_loss.len();
        let mut counts = vec![0u64; n_clients];
        for rec in records {
            if rec.best_client >= n_clients {
                return Err(Error::ClientSelection {
                    reason: format!(
                        "round {} names client {} but only {} clients exist",
                        rec.round, rec.best_client, n_clients
                    ),
                });
            }
            counts[rec.best_client] += 1;
        }
        Ok(SelectionHistory::new(counts))
    }

    pub fn n_clients(&self) -> usize {
        self.counts.len()
    }
}

/// Fairness frequency metric: 1 at perfectly even selection, 0 when some
/// client is never selected while another dominates.
pub fn ffm(history: &SelectionHistory) -> Result<f64> {
    if history.rounds == 0 || history.counts.is_empty() {
        return Err(Error::EmptyHistory);
    }
    let max = *history.counts.iter().max().expect("nonempty") as f64;
    let min = *history.counts.iter().min().expect("nonempty") as f64;
    Ok(1.0 - (max - min) / max)
}

/// Entropy-based fairness score: base-C entropy of normalized selection
/// frequencies, in [0, 1].
pub fn efs(history: &SelectionHistory) -> Result<f64> {
    if history.rounds == 0 {
        return Err(Error::EmptyHistory);
    }
    let c = history.n_clients();
    if c < 2 {
        return Err(Error::TooFewClients(c));
    }
    let total = history.rounds as f64;
    let log_c = (c as f64).ln();
    let entropy: f64 = history
        .counts
        .iter()
        .filter(|&&n| n > 0)
        .map(|&n| {
            let f = n as f64 / total;
            -f * f.ln() / log_c
        })
        .sum();
    Ok(entropy)
}

/// Relative accuracy drop against the best observed setting, in [0, 1].
/// Both accuracies must use the same unit (fractions or percent).
pub fn delta_accuracy(a_setting: f64, a_max: f64) -> Result<f64> {
    if !(a_max > 0.0) {
        return Err(Error::NonPositiveReference(a_max));
    }
    if a_setting > a_max {
        return Err(Error::AccuracyAboveReference {
            setting: a_setting,
            max: a_max,
        });
    }
    if a_setting < 0.0 {
        return Err(Error::OutOfUnitInterval {
            name: "a_setting",
            value: a_setting,
        });
    }
    Ok((a_max - a_setting) / a_max)
}

/// Fairness-efficiency trade-off index `λ·EFS + (1−λ)·(1−ΔAccuracy)`.
pub fn feti(efs_score: f64, delta_acc: f64, lambda: f64) -> Result<f64> {
    for (name, value) in [
        ("efs", efs_score),
        ("delta_accuracy", delta_acc),
        ("lambda", lambda),
    ] {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::OutOfUnitInterval { name, value });
        }
    }
    Ok(lambda * efs_score + (1.0 - lambda) * (1.0 - delta_acc))
}

/// Population variance of the per-client test accuracies within each round.
pub fn accuracy_variance(records: &[RoundRecord]) -> Result<Vec<f64>> {
    if records.is_empty() {
        return Err(Error::EmptyHistory);
    }
    Ok(records
        .iter()
        .map(|rec| {
            let accs = &rec.per_client_test_acc;
            let n = accs.len() as f64;
            let mean = accs.iter().sum::<f64>() / n;
            accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n
        })
        .collect())
}

/// Binary client-by-round selection matrix: entry [c][r] is 1 iff client c
/// won round r. Every column sums to 1; row sums equal the selection counts.
pub fn best_client_heatmap(records: &[RoundRecord]) -> Result<Vec<Vec<u8>>> {
    if records.is_empty() {
        return Err(Error::EmptyHistory);
    }
    let n_clients = records[0].per_client_loss.len();
    let mut matrix = vec![vec![0u8; records.len()]; n_clients];
    for (r, rec) in records.iter().enumerate() {
        if rec.best_client >= n_clients {
            return Err(Error::ClientSelection {
                reason: format!("round {} winner {} out of range", rec.round, rec.best_client),
            });
        }
        matrix[rec.best_client][r] = 1;
    }
    Ok(matrix)
}

/// Write the heatmap as CSV: one row per client, one column per round,
/// with a `client` label column and `r1..rR` header.
pub fn write_heatmap_csv<W: std::io::Write>(matrix: &[Vec<u8>], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let rounds = matrix.first().map_or(0, Vec::len);
    let mut header = vec!["client".to_string()];
    header.extend((1..=rounds).map(|r| format!("r{r}")));
    w.write_record(&header)?;
    for (c, row) in matrix.iter().enumerate() {
        let mut record = vec![c.to_string()];
        record.extend(row.iter().map(u8::to_string));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// The complete fairness report for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub ffm: f64,
    pub efs: f64,
    pub delta_accuracy: f64,
    pub feti: f64,
    pub lambda: f64,
    pub accuracy_variance_per_round: Vec<f64>,
}

impl FairnessReport {
    /// Build from a run's round records. `a_max` is the best accuracy
    /// observed across the settings being compared; when absent the run's
    /// own final accuracy is used and ΔAccuracy is 0.
    pub fn from_records(records: &[RoundRecord], lambda: f64, a_max: Option<f64>) -> Result<Self> {
        let history = SelectionHistory::from_records(records)?;
        let ffm_score = ffm(&history)?;
        let efs_score = efs(&history)?;
        let final_acc = records.last().expect("nonempty").global_test_acc;
        let reference = a_max.unwrap_or(final_acc);
        let delta = delta_accuracy(final_acc, reference)?;
        let feti_score = feti(efs_score, delta, lambda)?;
        Ok(FairnessReport {
            ffm: ffm_score,
            efs: efs_score,
            delta_accuracy: delta,
            feti: feti_score,
            lambda,
            accuracy_variance_per_round: accuracy_variance(records)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() < tol, "{a} vs {b} (tol {tol})");
    }

    fn record(round: usize, losses: Vec<f64>, test_accs: Vec<f64>, best: usize) -> RoundRecord {
        RoundRecord {
            round,
            per_client_loss: losses,
            per_client_train_acc: test_accs.clone(),
            per_client_test_acc: test_accs,
            best_client: best,
            global_test_acc: 0.9,
            strategy: crate::federation::AggregationStrategy::Best,
        }
    }

    #[test]
    fn ffm_known_values() {
        assert_close(ffm(&SelectionHistory::new(vec![4, 4, 4])).unwrap(), 1.0, 1e-15);
        assert_close(ffm(&SelectionHistory::new(vec![5, 3, 2])).unwrap(), 0.4, 1e-15);
        assert_close(ffm(&SelectionHistory::new(vec![3, 0, 0])).unwrap(), 0.0, 1e-15);
    }

    #[test]
    fn ffm_rejects_empty_history() {
        assert!(matches!(
            ffm(&SelectionHistory::new(vec![0, 0])),
            Err(Error::EmptyHistory)
        ));
    }

    #[test]
    fn efs_known_values() {
        assert_close(efs(&SelectionHistory::new(vec![4, 4, 4])).unwrap(), 1.0, 1e-12);
        assert_close(efs(&SelectionHistory::new(vec![7, 0, 0])).unwrap(), 0.0, 1e-12);
        // counts (5,3,2) over 3 clients: the published 0.9372
        assert_close(efs(&SelectionHistory::new(vec![5, 3, 2])).unwrap(), 0.9372, 5e-4);
    }

    #[test]
    fn efs_needs_at_least_two_clients() {
        assert!(matches!(
            efs(&SelectionHistory::new(vec![5])),
            Err(Error::TooFewClients(1))
        ));
    }

    #[test]
    fn delta_accuracy_known_values() {
        assert_close(delta_accuracy(91.0, 91.0).unwrap(), 0.0, 1e-15);
        assert_close(delta_accuracy(88.0, 91.0).unwrap(), 0.0330, 5e-4);
        assert_close(delta_accuracy(0.0, 91.0).unwrap(), 1.0, 1e-15);
        assert!(delta_accuracy(1.0, 0.0).is_err());
        assert!(delta_accuracy(92.0, 91.0).is_err());
    }

    #[test]
    fn feti_reproduces_published_rows() {
        // (EFS, ΔAccuracy, printed FETI) at λ = 0.5
        let rows = [
            (0.9912, 0.0239, 0.9837),
            (0.9372, 0.0000, 0.9686),
            (0.9232, 0.0330, 0.9451),
            (0.9372, 0.0220, 0.9576),
        ];
        for (efs_v, dacc, expected) in rows {
            assert_close(feti(efs_v, dacc, 0.5).unwrap(), expected, 1e-3);
        }
    }

    #[test]
    fn feti_weighting_limits() {
        assert_close(feti(0.7, 0.2, 1.0).unwrap(), 0.7, 1e-15);
        assert_close(feti(0.7, 0.2, 0.0).unwrap(), 0.8, 1e-15);
        assert!(feti(0.7, 0.2, 1.5).is_err());
        assert!(feti(1.2, 0.2, 0.5).is_err());
    }

    #[test]
    fn feti_is_monotone_in_both_arguments() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let lambda: f64 = rng.gen();
            let e: f64 = rng.gen();
            let d: f64 = rng.gen();
            let bump_e = (e + rng.gen::<f64>() * (1.0 - e)).min(1.0);
            let bump_d = (d + rng.gen::<f64>() * (1.0 - d)).min(1.0);
            let base = feti(e, d, lambda).unwrap();
            assert!(feti(bump_e, d, lambda).unwrap() >= base - 1e-12);
            assert!(feti(e, bump_d, lambda).unwrap() <= base + 1e-12);
        }
    }

    #[test]
    fn fairness_scores_are_label_permutation_invariant() {
        let a = SelectionHistory::new(vec![5, 3, 2]);
        let b = SelectionHistory::new(vec![2, 5, 3]);
        assert_close(ffm(&a).unwrap(), ffm(&b).unwrap(), 1e-15);
        assert_close(efs(&a).unwrap(), efs(&b).unwrap(), 1e-15);
    }

    #[test]
    fn uniform_counts_maximize_both_scores() {
        for c in 2..6usize {
            let uniform = SelectionHistory::new(vec![4; c]);
            assert_close(ffm(&uniform).unwrap(), 1.0, 1e-12);
            assert_close(efs(&uniform).unwrap(), 1.0, 1e-12);
        }
        // non-uniform counts score strictly below 1 on both
        let skewed = SelectionHistory::new(vec![6, 3, 3]);
        assert!(ffm(&skewed).unwrap() < 1.0);
        assert!(efs(&skewed).unwrap() < 1.0);
    }

    #[test]
    fn accuracy_variance_hand_value() {
        let records = vec![
            record(1, vec![0.2, 0.3, 0.1], vec![0.8, 0.8, 0.9], 2),
            record(2, vec![0.2, 0.3, 0.1], vec![0.7, 0.7, 0.7], 2),
        ];
        let var = accuracy_variance(&records).unwrap();
        assert_close(var[0], 0.0022222222222222, 1e-12);
        assert_close(var[1], 0.0, 1e-15);
    }

    #[test]
    fn accuracy_variance_single_client_is_zero() {
        let records = vec![record(1, vec![0.2], vec![0.85], 0)];
        assert_close(accuracy_variance(&records).unwrap()[0], 0.0, 1e-15);
    }

    #[test]
    fn heatmap_columns_sum_to_one_and_rows_match_counts() {
        let records = vec![
            record(1, vec![0.5, 0.2, 0.9], vec![0.8; 3], 1),
            record(2, vec![0.1, 0.2, 0.9], vec![0.8; 3], 0),
            record(3, vec![0.5, 0.2, 0.1], vec![0.8; 3], 2),
            record(4, vec![0.5, 0.2, 0.9], vec![0.8; 3], 1),
        ];
        let m = best_client_heatmap(&records).unwrap();
        for r in 0..4 {
            let col_sum: u8 = (0..3).map(|c| m[c][r]).sum();
            assert_eq!(col_sum, 1);
        }
        let history = SelectionHistory::from_records(&records).unwrap();
        for c in 0..3 {
            let row_sum: u64 = m[c].iter().map(|&v| u64::from(v)).sum();
            assert_eq!(row_sum, history.counts[c]);
        }
        assert_eq!(history.counts, vec![1, 2, 1]);
    }

    #[test]
    fn report_serializes_to_json() {
        let records = vec![
            record(1, vec![0.5, 0.2, 0.9], vec![0.8, 0.8, 0.9], 1),
            record(2, vec![0.1, 0.2, 0.9], vec![0.9, 0.8, 0.9], 0),
        ];
        let report = FairnessReport::from_records(&records, 0.5, None).unwrap();
        assert_close(
            report.feti,
            0.5 * report.efs + 0.5 * (1.0 - report.delta_accuracy),
            1e-15,
        );
        let json = serde_json::to_string(&report).unwrap();
        let parsed: FairnessReport = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed, report);
    }
}
