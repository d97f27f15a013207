//! Anonymity metrics and summary statistics.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::attacks::{Decision, GuessOutcome, PosteriorBelief};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("cannot summarize an empty list")]
    Empty,
    #[error("rejection rate must lie in [0, 1), got {0}")]
    InvalidRejectionRate(f64),
}

/// Shannon entropy in bits, with `0 log 0 = 0`.
pub fn entropy_bits(belief: &PosteriorBelief) -> f64 {
    let h: f64 = belief.iter().filter(|(_, p)| *p > 0.0).map(|(_, p)| -p * p.log2()).sum();
    h.max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyReport {
    /// `None` when no guess was made.
    pub accuracy: Option<f64>,
    pub rejection_rate: f64,
    pub n_guesses: usize,
    pub n_correct: usize,
    pub n_total: usize,
}

pub fn accuracy_rejection<T: PartialEq>(outcomes: &[(GuessOutcome<T>, T)]) -> Result<AccuracyReport, MetricsError> {
    if outcomes.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut n_guesses = 0;
    let mut n_correct = 0;
    for (o, truth) in outcomes {
        if let Decision::Guess(g) = &o.decision {
            n_guesses += 1;
            if g == truth {
                n_correct += 1;
            }
        }
    }
    let n_total = outcomes.len();
    Ok(AccuracyReport {
        accuracy: (n_guesses > 0).then(|| n_correct as f64 / n_guesses as f64),
        rejection_rate: (n_total - n_guesses) as f64 / n_total as f64,
        n_guesses,
        n_correct,
        n_total,
    })
}

/// Accuracy when the `rejection_rate` fraction of lowest-scoring cases is
/// rejected. Each case is `(score, top_candidate_correct)`. Ties at the cut
/// are resolved by input order after a stable sort on score.
pub fn accuracy_at_rejection_rate(cases: &[(f64, bool)], rejection_rate: f64) -> Result<Option<f64>, MetricsError> {
    if cases.is_empty() {
        return Err(MetricsError::Empty);
    }
    if !(0.0..1.0).contains(&rejection_rate) {
        return Err(MetricsError::InvalidRejectionRate(rejection_rate));
    }
    let mut sorted: Vec<&(f64, bool)> = cases.iter().collect();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let keep = ((1.0 - rejection_rate) * cases.len() as f64).round() as usize;
    if keep == 0 {
        return Ok(None);
    }
    let correct = sorted[..keep].iter().filter(|c| c.1).count();
    Ok(Some(correct as f64 / keep as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuartileSummary {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub iqr: f64,
    pub band_lo: f64,
    pub band_hi: f64,
    pub n: usize,
}

/// Linear interpolation between order statistics at zero-based rank
/// `(n - 1) * q`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let rank = (sorted.len() - 1) as f64 * q;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn quartile_summary(values: &[f64]) -> Result<QuartileSummary, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let median = quantile_sorted(&sorted, 0.5);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    Ok(QuartileSummary { q1, median, q3, iqr, band_lo: q1 - 1.5 * iqr, band_hi: q3 + 1.5 * iqr, n: values.len() })
}

/// Percentiles (in percent) of `values` using the same interpolation.
pub fn percentiles(values: &[f64], pcts: &[f64]) -> Result<BTreeMap<String, f64>, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(pcts.iter().map(|&p| (format!("p{p:02}"), quantile_sorted(&sorted, p / 100.0))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::asn;
    use proptest::prelude::*;

    fn belief(ps: &[f64]) -> PosteriorBelief {
        PosteriorBelief::from_weights(ps.iter().enumerate().map(|(i, &p)| (asn(i as u32 + 1), p))).unwrap()
    }

    #[test]
    fn entropy_examples() {
        assert!((entropy_bits(&belief(&[0.25; 4])) - 2.0).abs() < 1e-12);
        assert_eq!(entropy_bits(&belief(&[1.0])), 0.0);
        assert!((entropy_bits(&belief(&[0.5, 0.25, 0.25])) - 1.5).abs() < 1e-12);
        assert_eq!(entropy_bits(&belief(&[1.0, 0.0])), 0.0);
    }

    fn guess(g: Option<u32>) -> GuessOutcome<u32> {
        GuessOutcome { decision: g.map_or(Decision::Reject, Decision::Guess), score: 0.0 }
    }

    #[test]
    fn accuracy_examples() {
        let mut v: Vec<(GuessOutcome<u32>, u32)> = (0..8).map(|_| (guess(None), 1)).collect();
        v.push((guess(Some(1)), 1));
        v.push((guess(Some(2)), 1));
        let r = accuracy_rejection(&v).unwrap();
        assert_eq!((r.accuracy, r.rejection_rate), (Some(0.5), 0.8));
        let all_reject: Vec<_> = (0..3).map(|_| (guess(None), 1)).collect();
        let r = accuracy_rejection(&all_reject).unwrap();
        assert_eq!((r.accuracy, r.rejection_rate), (None, 1.0));
        let all_right: Vec<_> = (0..3).map(|i| (guess(Some(i)), i)).collect();
        let r = accuracy_rejection(&all_right).unwrap();
        assert_eq!((r.accuracy, r.rejection_rate), (Some(1.0), 0.0));
        assert_eq!(accuracy_rejection::<u32>(&[]), Err(MetricsError::Empty));
    }

    #[test]
    fn accuracy_at_fixed_rejection() {
        let cases = [(0.9, true), (0.8, false), (0.3, true), (0.1, false)];
        assert_eq!(accuracy_at_rejection_rate(&cases, 0.5).unwrap(), Some(0.5));
        assert_eq!(accuracy_at_rejection_rate(&cases, 0.75).unwrap(), Some(1.0));
        assert_eq!(accuracy_at_rejection_rate(&cases, 0.0).unwrap(), Some(0.5));
        assert!(accuracy_at_rejection_rate(&cases, 1.0).is_err());
    }

    #[test]
    fn quartile_examples() {
        let s = quartile_summary(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert_eq!((s.q1, s.median, s.q3, s.band_lo, s.band_hi), (2.0, 3.0, 4.0, -1.0, 7.0));
        let s = quartile_summary(&[5.0]).unwrap();
        assert_eq!((s.q1, s.median, s.q3, s.band_lo, s.band_hi, s.n), (5.0, 5.0, 5.0, 5.0, 5.0, 1));
        let s = quartile_summary(&[1.0; 4]).unwrap();
        assert_eq!((s.iqr, s.band_lo, s.band_hi), (0.0, 1.0, 1.0));
        assert_eq!(quartile_summary(&[]), Err(MetricsError::Empty));
        // interpolated: ranks 0.75, 1.5, 2.25
        let s = quartile_summary(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((s.q1, s.median, s.q3), (1.75, 2.5, 3.25));
    }

    proptest! {
        #[test]
        fn entropy_bounded_by_support(ws in prop::collection::vec(0.0f64..10.0, 1..20)) {
            prop_assume!(ws.iter().any(|&w| w > 0.0));
            let b = PosteriorBelief::from_weights(ws.iter().enumerate().map(|(i, &w)| (asn(i as u32 + 1), w))).unwrap();
            let support = b.iter().filter(|(_, p)| *p > 0.0).count() as f64;
            prop_assert!(entropy_bits(&b) <= support.log2() + 1e-9);
        }

        #[test]
        fn uniform_reaches_bound(n in 1usize..40) {
            let b = PosteriorBelief::uniform((1..=n as u32).map(asn)).unwrap();
            prop_assert!((entropy_bits(&b) - (n as f64).log2()).abs() < 1e-9);
        }

        #[test]
        fn quartiles_permutation_invariant(mut v in prop::collection::vec(-1e6f64..1e6, 1..50), seed in any::<u64>()) {
            let a = quartile_summary(&v).unwrap();
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            v.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let b = quartile_summary(&v).unwrap();
            prop_assert_eq!(a, b);
            prop_assert!(a.q1 <= a.median && a.median <= a.q3);
        }

        #[test]
        fn guesses_and_rejects_reconcile(gs in prop::collection::vec(prop::option::of(0u32..3), 1..30)) {
            let v: Vec<(GuessOutcome<u32>, u32)> = gs.iter().map(|g| (guess(*g), 1)).collect();
            let r = accuracy_rejection(&v).unwrap();
            let rejects = (r.rejection_rate * r.n_total as f64).round() as usize;
            prop_assert_eq!(r.n_guesses + rejects, r.n_total);
        }
    }
}
