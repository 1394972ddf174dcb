//! Distribution summaries of search results: cumulative distribution
//! points, peak, median and the peak-minus-median delta per family.

use serde::{Deserialize, Serialize};

use crate::error::{HarError, Result};
use crate::hypersearch::record::ExperimentRecord;
use crate::models::ModelFamily;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilySummary {
    pub family: ModelFamily,
    pub experiments: usize,
    pub peak: f64,
    pub median: f64,
    /// Absolute difference between peak and median performance.
    pub delta: f64,
    /// Cumulative distribution: (score, fraction of experiments <= score).
    pub cdf: Vec<(f64, f64)>,
    pub peak_weighted_f1: f64,
}

/// Summarise records per family (families with no records are absent).
pub fn summarize(records: &[ExperimentRecord]) -> Result<Vec<FamilySummary>> {
    if records.is_empty() {
        return Err(HarError::RejectedInput("no records to summarise".into()));
    }
    let mut out = Vec::new();
    for family in ModelFamily::ALL {
        let mut scores: Vec<(f64, f64)> = records
            .iter()
            .filter(|r| r.family == family)
            .map(|r| (r.score(), r.test_weighted_f1))
            .collect();
        if scores.is_empty() {
            continue;
        }
        scores.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let n = scores.len();
        let peak = scores[n - 1].0;
        let peak_weighted_f1 = scores
            .iter()
            .max_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
            .unwrap()
            .1;
        let median = if n % 2 == 1 {
            scores[n / 2].0
        } else {
            (scores[n / 2 - 1].0 + scores[n / 2].0) / 2.0
        };
        let cdf = scores
            .iter()
            .enumerate()
            .map(|(i, &(s, _))| (s, (i + 1) as f64 / n as f64))
            .collect();
        out.push(FamilySummary {
            family,
            experiments: n,
            peak,
            median,
            delta: peak - median,
            cdf,
            peak_weighted_f1,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypersearch::record::{config_hash, RecordStatus};
    use crate::hypersearch::Hyperparameters;

    fn rec(family: ModelFamily, seed: u64, score: f64) -> ExperimentRecord {
        let config = Hyperparameters::default_for(family);
        ExperimentRecord {
            family,
            config_hash: config_hash(&config),
            config,
            seed,
            status: RecordStatus::Ok,
            val_history: vec![score],
            best_epoch: 1,
            test_mean_f1: score,
            test_weighted_f1: score + 0.01,
            frame_mean_f1: None,
            frame_weighted_f1: None,
            wall_secs: 0.1,
        }
    }

    #[test]
    fn single_record_degenerates() {
        let records = vec![rec(ModelFamily::Dnn, 1, 0.6)];
        let s = summarize(&records).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].peak, 0.6);
        assert_eq!(s[0].median, 0.6);
        assert_eq!(s[0].delta, 0.0);
    }

    #[test]
    fn median_and_delta_hand_example() {
        let records = vec![
            rec(ModelFamily::Cnn, 1, 0.2),
            rec(ModelFamily::Cnn, 2, 0.4),
            rec(ModelFamily::Cnn, 3, 0.6),
        ];
        let s = summarize(&records).unwrap();
        assert_eq!(s[0].median, 0.4);
        assert!((s[0].delta - 0.2).abs() < 1e-12);
    }

    #[test]
    fn agrees_with_sort_based_oracle_on_random_data() {
        // independent oracle: recompute peak/median from a fresh sort
        let mut state = 123456789u64;
        let mut records = Vec::new();
        for i in 0..101 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let score = (state >> 11) as f64 / (1u64 << 53) as f64;
            records.push(rec(ModelFamily::LstmS, i, score));
        }
        let s = summarize(&records).unwrap();
        let mut scores: Vec<f64> = records.iter().map(|r| r.test_mean_f1).collect();
        scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(s[0].peak, *scores.last().unwrap());
        assert_eq!(s[0].median, scores[50]);
        // CDF is a step function ending at 1
        assert!((s[0].cdf.last().unwrap().1 - 1.0).abs() < 1e-12);
        assert!(s[0].cdf.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 < w[1].1));
    }

    #[test]
    fn empty_rejected() {
        assert!(summarize(&[]).is_err());
    }
}
