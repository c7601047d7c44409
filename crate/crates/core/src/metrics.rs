//! Agreement statistics and corpus descriptive statistics.
//!
//! The kappa-family statistics here are computed in integer arithmetic with
//! a single float division at the end, so algebraic identities hold exactly:
//! `qwk(a, a) == 1.0` bit-for-bit, `qwk(a, b) == qwk(b, a)`, and jointly
//! permuting both vectors never changes the value.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// Inclusive score scale shared by humans and agents.
pub const SCORE_RANGE: std::ops::RangeInclusive<i64> = 0..=6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("rater vectors differ in length ({a} vs {b})")]
    LengthMismatch { a: usize, b: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("score {value} at index {index} outside 0-6")]
    OutOfRange { index: usize, value: i64 },
    #[error("statistic undefined: {detail}")]
    Degenerate { detail: String },
    #[error("agreement value {value} outside [-1, 1]")]
    BandOutOfRange { value: f64 },
    #[error("percent difference against a zero baseline is undefined")]
    ZeroBaseline,
}

fn check_paired(a_len: usize, b_len: usize) -> Result<(), MetricsError> {
    if a_len != b_len {
        return Err(MetricsError::LengthMismatch { a: a_len, b: b_len });
    }
    if a_len == 0 {
        return Err(MetricsError::EmptyInput);
    }
    Ok(())
}

/// Quadratic weighted kappa over the fixed 0-6 scale.
///
/// The full seven-category weight matrix is always used, whether or not a
/// particular run produced every score, so values are comparable across
/// corpora. With counts `O[i][j]`, marginals `row`/`col`, and weights
/// `(i-j)^2`:
///
/// ```text
/// qwk = 1 - n * sum((i-j)^2 * O[i][j]) / sum((i-j)^2 * row[i] * col[j])
/// ```
///
/// Undefined (error) only when both raters give one identical constant
/// score, which zeroes the expected-disagreement denominator.
pub fn qwk(a: &[i64], b: &[i64]) -> Result<f64, MetricsError> {
    check_paired(a.len(), b.len())?;
    const K: usize = 7;
    let mut observed = [[0u64; K]; K];
    for (index, (&x, &y)) in a.iter().zip(b).enumerate() {
        if !SCORE_RANGE.contains(&x) {
            return Err(MetricsError::OutOfRange { index, value: x });
        }
        if !SCORE_RANGE.contains(&y) {
            return Err(MetricsError::OutOfRange { index, value: y });
        }
        observed[x as usize][y as usize] += 1;
    }
    let mut row = [0u64; K];
    let mut col = [0u64; K];
    for i in 0..K {
        for j in 0..K {
            row[i] += observed[i][j];
            col[j] += observed[i][j];
        }
    }
    let mut weighted_observed = 0u128;
    let mut weighted_expected = 0u128;
    for i in 0..K {
        for j in 0..K {
            let weight = (i as i64 - j as i64).pow(2) as u128;
            weighted_observed += weight * observed[i][j] as u128;
            weighted_expected += weight * row[i] as u128 * col[j] as u128;
        }
    }
    if weighted_expected == 0 {
        return Err(MetricsError::Degenerate {
            detail: "both raters gave a single identical score".to_owned(),
        });
    }
    let n = a.len() as u128;
    // One division; numerator and denominator stay exact in u128.
    Ok(1.0 - (n * weighted_observed) as f64 / weighted_expected as f64)
}

/// Unweighted Cohen's kappa with its degeneracy made explicit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaValue {
    pub value: f64,
    pub n: usize,
    /// True when chance agreement is already 1 (both raters constant and
    /// identical); `value` is then reported as 1.0 by convention.
    pub degenerate: bool,
}

/// Unweighted Cohen's kappa over any label type.
///
/// Exact form: with `n` items, diagonal count `d`, and marginal products
/// `s = sum(row_l * col_l)`, kappa is `(n*d - s) / (n^2 - s)` — again a
/// single float division.
pub fn cohen_kappa<L: Ord>(a: &[L], b: &[L]) -> Result<KappaValue, MetricsError> {
    check_paired(a.len(), b.len())?;
    let mut diagonal = 0u64;
    let mut row: BTreeMap<&L, u64> = BTreeMap::new();
    let mut col: BTreeMap<&L, u64> = BTreeMap::new();
    for (x, y) in a.iter().zip(b) {
        if x == y {
            diagonal += 1;
        }
        *row.entry(x).or_default() += 1;
        *col.entry(y).or_default() += 1;
    }
    let n = a.len() as i128;
    let marginal_product: i128 = row
        .iter()
        .map(|(label, &r)| r as i128 * col.get(label).copied().unwrap_or(0) as i128)
        .sum();
    let denominator = n * n - marginal_product;
    if denominator == 0 {
        return Ok(KappaValue { value: 1.0, n: a.len(), degenerate: true });
    }
    let numerator = n * diagonal as i128 - marginal_product;
    Ok(KappaValue {
        value: numerator as f64 / denominator as f64,
        n: a.len(),
        degenerate: false,
    })
}

/// Qualitative label for an agreement value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgreementBand {
    None,
    Slight,
    Fair,
    Moderate,
    Substantial,
    NearPerfect,
    Perfect,
}

impl fmt::Display for AgreementBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgreementBand::None => "none",
            AgreementBand::Slight => "slight",
            AgreementBand::Fair => "fair",
            AgreementBand::Moderate => "moderate",
            AgreementBand::Substantial => "substantial",
            AgreementBand::NearPerfect => "near-perfect",
            AgreementBand::Perfect => "perfect",
        })
    }
}

/// Maps an agreement value in [-1, 1] to its band. Intervals are half-open
/// on the left: 0.20 is still slight, 0.205 is fair, and so on; anything at
/// or below zero is no agreement. Values a hair outside [-1, 1] from float
/// round-off are clamped; anything further out is an error.
pub fn band(value: f64) -> Result<AgreementBand, MetricsError> {
    const EPSILON: f64 = 1e-9;
    if !value.is_finite() || value.abs() > 1.0 + EPSILON {
        return Err(MetricsError::BandOutOfRange { value });
    }
    let v = value.clamp(-1.0, 1.0);
    Ok(if v <= 0.0 {
        AgreementBand::None
    } else if v <= 0.20 {
        AgreementBand::Slight
    } else if v <= 0.40 {
        AgreementBand::Fair
    } else if v <= 0.60 {
        AgreementBand::Moderate
    } else if v <= 0.80 {
        AgreementBand::Substantial
    } else if v <= 0.99 {
        AgreementBand::NearPerfect
    } else {
        AgreementBand::Perfect
    })
}

/// A named agreement statistic ready for a report table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementSummary {
    pub statistic: String,
    pub value: f64,
    pub band: AgreementBand,
    pub n: usize,
    pub degenerate: bool,
}

impl AgreementSummary {
    pub fn from_qwk(a: &[i64], b: &[i64]) -> Result<Self, MetricsError> {
        let value = qwk(a, b)?;
        Ok(Self {
            statistic: "qwk".to_owned(),
            value,
            band: band(value)?,
            n: a.len(),
            degenerate: false,
        })
    }

    pub fn from_kappa(kappa: KappaValue) -> Result<Self, MetricsError> {
        Ok(Self {
            statistic: "cohen_kappa".to_owned(),
            value: kappa.value,
            band: band(kappa.value)?,
            n: kappa.n,
            degenerate: kappa.degenerate,
        })
    }
}

/// Whitespace-delimited token count; the length measure for feedback text.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// JSON object keys are strings, so the count map goes over the wire
/// string-keyed; keeping the conversion explicit lets the summary survive
/// embedding in internally tagged enums, whose buffering would otherwise
/// reject integer keys on the way back in.
mod counts_serde {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};
    use std::collections::BTreeMap;

    pub fn serialize<S: Serializer>(
        counts: &BTreeMap<i64, u64>,
        ser: S,
    ) -> Result<S::Ok, S::Error> {
        ser.collect_map(counts.iter().map(|(k, v)| (k.to_string(), *v)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        de: D,
    ) -> Result<BTreeMap<i64, u64>, D::Error> {
        let raw = BTreeMap::<String, u64>::deserialize(de)?;
        raw.into_iter()
            .map(|(k, v)| {
                k.parse::<i64>()
                    .map(|k| (k, v))
                    .map_err(|_| D::Error::custom(format!("non-integer count key {k:?}")))
            })
            .collect()
    }
}

/// Counts plus moments for a set of integer observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    #[serde(with = "counts_serde")]
    pub counts: BTreeMap<i64, u64>,
    pub n: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub stddev: f64,
    pub min: i64,
    pub max: i64,
}

impl DistributionSummary {
    /// `fill_range` forces every category in the range to appear in
    /// `counts`, zeros included — score tables always show all seven rows.
    pub fn from_values(
        values: impl IntoIterator<Item = i64>,
        fill_range: Option<std::ops::RangeInclusive<i64>>,
    ) -> Result<Self, MetricsError> {
        let mut counts: BTreeMap<i64, u64> = BTreeMap::new();
        if let Some(range) = fill_range {
            for category in range {
                counts.insert(category, 0);
            }
        }
        let mut n = 0usize;
        let mut sum = 0i128;
        let mut min = i64::MAX;
        let mut max = i64::MIN;
        let mut collected = Vec::new();
        for value in values {
            *counts.entry(value).or_default() += 1;
            n += 1;
            sum += value as i128;
            min = min.min(value);
            max = max.max(value);
            collected.push(value);
        }
        if n == 0 {
            return Err(MetricsError::EmptyInput);
        }
        let mean = sum as f64 / n as f64;
        let variance = collected
            .iter()
            .map(|&v| {
                let d = v as f64 - mean;
                d * d
            })
            .sum::<f64>()
            / n as f64;
        Ok(Self {
            counts,
            n,
            mean,
            stddev: variance.sqrt(),
            min,
            max,
        })
    }
}

/// Distribution of holistic scores with all seven categories present.
pub fn score_distribution(scores: &[i64]) -> Result<DistributionSummary, MetricsError> {
    for (index, &value) in scores.iter().enumerate() {
        if !SCORE_RANGE.contains(&value) {
            return Err(MetricsError::OutOfRange { index, value });
        }
    }
    DistributionSummary::from_values(scores.iter().copied(), Some(SCORE_RANGE))
}

/// Word-count distribution over a set of texts (sparse counts).
pub fn length_summary<'a>(
    texts: impl IntoIterator<Item = &'a str>,
) -> Result<DistributionSummary, MetricsError> {
    DistributionSummary::from_values(texts.into_iter().map(|t| word_count(t) as i64), None)
}

/// Relative change from `baseline` to `new`, in percent.
pub fn percent_difference(new: f64, baseline: f64) -> Result<f64, MetricsError> {
    if baseline == 0.0 {
        return Err(MetricsError::ZeroBaseline);
    }
    Ok((new - baseline) / baseline * 100.0)
}

/// Rounds `sum / count` half-up to the nearest integer without touching
/// floats: `(2*sum + count) / (2*count)`. Exact for the score sums this
/// crate produces, where a .5 tie must round toward the higher score.
pub fn round_half_up_mean(sum: u64, count: u64) -> Result<u64, MetricsError> {
    if count == 0 {
        return Err(MetricsError::EmptyInput);
    }
    Ok((2 * sum + count) / (2 * count))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qwk_perfect_agreement_is_exactly_one() {
        let scores = vec![0, 1, 2, 3, 4, 5, 6, 3, 3, 2];
        assert_eq!(qwk(&scores, &scores).unwrap(), 1.0);
    }

    #[test]
    fn qwk_is_exactly_symmetric() {
        let a = vec![1, 3, 4, 6, 2, 0, 5, 5];
        let b = vec![2, 3, 3, 5, 2, 1, 6, 4];
        assert_eq!(qwk(&a, &b).unwrap(), qwk(&b, &a).unwrap());
    }

    #[test]
    fn qwk_two_constant_raters_disagreeing_is_zero() {
        let a = vec![2; 10];
        let b = vec![5; 10];
        assert_eq!(qwk(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn qwk_identical_constant_raters_is_undefined() {
        let a = vec![4; 10];
        assert!(matches!(qwk(&a, &a), Err(MetricsError::Degenerate { .. })));
    }

    #[test]
    fn qwk_rejects_out_of_scale_scores() {
        assert!(matches!(
            qwk(&[1, 7], &[1, 2]),
            Err(MetricsError::OutOfRange { index: 1, value: 7 })
        ));
        assert!(matches!(
            qwk(&[1, 2], &[-1, 2]),
            Err(MetricsError::OutOfRange { index: 0, value: -1 })
        ));
    }

    #[test]
    fn qwk_checks_lengths() {
        assert!(matches!(
            qwk(&[1, 2], &[1]),
            Err(MetricsError::LengthMismatch { a: 2, b: 1 })
        ));
        assert!(matches!(qwk(&[], &[]), Err(MetricsError::EmptyInput)));
    }

    #[test]
    fn kappa_matches_hand_worked_two_by_two() {
        // Contingency [[9, 1], [0, 2]]: kappa = (12*11 - 96) / (144 - 96).
        let mut a = Vec::new();
        let mut b = Vec::new();
        let cells = [(("L", "L"), 9), (("L", "H"), 1), (("H", "L"), 0), (("H", "H"), 2)];
        for ((x, y), count) in cells {
            for _ in 0..count {
                a.push(x);
                b.push(y);
            }
        }
        let kappa = cohen_kappa(&a, &b).unwrap();
        assert!((kappa.value - 0.75).abs() < 1e-15);
        assert!(!kappa.degenerate);
        assert_eq!(kappa.n, 12);
    }

    #[test]
    fn kappa_constant_identical_raters_flagged_degenerate() {
        let a = vec!["L"; 8];
        let kappa = cohen_kappa(&a, &a).unwrap();
        assert_eq!(kappa.value, 1.0);
        assert!(kappa.degenerate);
    }

    #[test]
    fn kappa_can_go_negative() {
        let a = vec!["L", "L", "H", "H"];
        let b = vec!["H", "H", "L", "L"];
        let kappa = cohen_kappa(&a, &b).unwrap();
        assert_eq!(kappa.value, -1.0);
    }

    #[test]
    fn band_boundaries_are_half_open() {
        use AgreementBand::*;
        let expectations = [
            (-0.3, None),
            (0.0, None),
            (0.20, Slight),
            (0.205, Fair),
            (0.40, Fair),
            (0.60, Moderate),
            (0.61, Substantial),
            (0.680, Substantial),
            (0.80, Substantial),
            (0.81, NearPerfect),
            (0.813, NearPerfect),
            (0.99, NearPerfect),
            (1.0, Perfect),
        ];
        for (value, expected) in expectations {
            assert_eq!(band(value).unwrap(), expected, "band({value})");
        }
    }

    #[test]
    fn band_clamps_float_fuzz_but_rejects_real_outliers() {
        assert_eq!(band(1.0 + 1e-12).unwrap(), AgreementBand::Perfect);
        assert_eq!(band(-1.0 - 1e-12).unwrap(), AgreementBand::None);
        assert!(band(1.01).is_err());
        assert!(band(f64::NAN).is_err());
    }

    #[test]
    fn band_serializes_kebab_case() {
        assert_eq!(AgreementBand::NearPerfect.to_string(), "near-perfect");
        assert_eq!(
            serde_json::to_string(&AgreementBand::Substantial).unwrap(),
            "\"substantial\""
        );
    }

    #[test]
    fn word_count_splits_on_any_whitespace() {
        assert_eq!(word_count(""), 0);
        assert_eq!(word_count("   "), 0);
        assert_eq!(word_count("one"), 1);
        assert_eq!(word_count("one  two\tthree\nfour"), 4);
        assert_eq!(word_count("  padded words  "), 2);
    }

    #[test]
    fn score_distribution_shows_all_seven_categories() {
        let summary = score_distribution(&[3, 3, 4, 6]).unwrap();
        assert_eq!(summary.counts.len(), 7);
        assert_eq!(summary.counts[&0], 0);
        assert_eq!(summary.counts[&3], 2);
        assert_eq!(summary.n, 4);
        assert_eq!(summary.mean, 4.0);
        assert_eq!(summary.min, 3);
        assert_eq!(summary.max, 6);
    }

    #[test]
    fn length_summary_is_sparse() {
        let summary = length_summary(["a b c", "a b", "a b c"]).unwrap();
        assert_eq!(summary.counts.len(), 2);
        assert_eq!(summary.counts[&3], 2);
        assert_eq!(summary.mean, (3.0 + 2.0 + 3.0) / 3.0);
    }

    #[test]
    fn stddev_is_population_form() {
        let summary = DistributionSummary::from_values([2, 4], None).unwrap();
        assert_eq!(summary.stddev, 1.0);
    }

    #[test]
    fn percent_difference_signs_and_zero_baseline() {
        assert_eq!(percent_difference(150.0, 100.0).unwrap(), 50.0);
        assert_eq!(percent_difference(75.0, 100.0).unwrap(), -25.0);
        assert!(matches!(
            percent_difference(5.0, 0.0),
            Err(MetricsError::ZeroBaseline)
        ));
    }

    #[test]
    fn round_half_up_mean_rounds_ties_toward_higher() {
        assert_eq!(round_half_up_mean(21, 5).unwrap(), 4); // 4.2
        assert_eq!(round_half_up_mean(9, 2).unwrap(), 5); // 4.5 -> 5
        assert_eq!(round_half_up_mean(7, 2).unwrap(), 4); // 3.5 -> 4
        assert_eq!(round_half_up_mean(0, 3).unwrap(), 0);
        assert_eq!(round_half_up_mean(30, 5).unwrap(), 6);
        assert!(round_half_up_mean(1, 0).is_err());
    }
}
