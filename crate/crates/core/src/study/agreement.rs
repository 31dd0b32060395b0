use serde::{Deserialize, Serialize};

use super::MAX_LABEL;
use crate::error::{Error, Result};

pub const ORDINAL_CATEGORIES: usize = MAX_LABEL as usize + 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub alpha: f64,
    /// Units with at least two responses.
    pub n_items: usize,
    /// Pairable responses.
    pub n_responses: usize,
    pub scale: String,
}

/// Krippendorff's alpha for ordinal labels 0..=6, one slice of labels per
/// item. Items with fewer than two labels carry no pairable values and are
/// skipped. When every pairable value falls in one category the expected
/// disagreement is zero and alpha is reported as 1.0.
pub fn krippendorff_alpha_ordinal(units: &[Vec<u8>]) -> Result<AgreementReport> {
    const C: usize = ORDINAL_CATEGORIES;
    let mut o = [[0.0f64; C]; C];
    let mut n_items = 0;
    let mut n_responses = 0;
    for unit in units.iter().filter(|u| u.len() >= 2) {
        let mut counts = [0usize; C];
        for &v in unit {
            if v > MAX_LABEL {
                return Err(Error::OutOfRange {
                    what: "label",
                    value: v.to_string(),
                    range: "0..=6",
                });
            }
            counts[v as usize] += 1;
        }
        let w = 1.0 / (unit.len() - 1) as f64;
        for c in 0..C {
            for k in 0..C {
                let pairs = if c == k {
                    counts[c] * counts[c].saturating_sub(1)
                } else {
                    counts[c] * counts[k]
                };
                o[c][k] += pairs as f64 * w;
            }
        }
        n_items += 1;
        n_responses += unit.len();
    }
    if n_items == 0 {
        return Err(Error::Undefined("no item has two or more responses".into()));
    }
    let marg: Vec<f64> = o.iter().map(|row| row.iter().sum()).collect();
    let n: f64 = marg.iter().sum();
    let delta2 = |c: usize, k: usize| {
        let (lo, hi) = (c.min(k), c.max(k));
        let s: f64 = marg[lo..=hi].iter().sum::<f64>() - (marg[c] + marg[k]) / 2.0;
        s * s
    };
    let (mut d_o, mut d_e) = (0.0, 0.0);
    for c in 0..C {
        for k in 0..C {
            let d = delta2(c, k);
            d_o += o[c][k] * d;
            d_e += marg[c] * marg[k] * d;
        }
    }
    let alpha = if d_e == 0.0 {
        1.0
    } else {
        1.0 - (n - 1.0) * d_o / d_e
    };
    Ok(AgreementReport {
        alpha,
        n_items,
        n_responses,
        scale: "ordinal".into(),
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Textbook pairwise form: average squared ordinal distance over ordered
    /// within-unit pairs versus over all ordered pairs of pairable values.
    pub(crate) fn brute_force_alpha(units: &[Vec<u8>]) -> Option<f64> {
        let units: Vec<&Vec<u8>> = units.iter().filter(|u| u.len() >= 2).collect();
        let values: Vec<u8> = units.iter().flat_map(|u| u.iter().copied()).collect();
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let count = |g: u8| values.iter().filter(|&&v| v == g).count() as f64;
        let dist = |a: u8, b: u8| {
            let (lo, hi) = (a.min(b), a.max(b));
            let s: f64 = (lo..=hi).map(count).sum::<f64>() - (count(a) + count(b)) / 2.0;
            s * s
        };
        let mut d_o = 0.0;
        for u in &units {
            let mut s = 0.0;
            for i in 0..u.len() {
                for j in 0..u.len() {
                    if i != j {
                        s += dist(u[i], u[j]);
                    }
                }
            }
            d_o += s / (u.len() - 1) as f64;
        }
        d_o /= n;
        let mut d_e = 0.0;
        for i in 0..values.len() {
            for j in 0..values.len() {
                if i != j {
                    d_e += dist(values[i], values[j]);
                }
            }
        }
        d_e /= n * (n - 1.0);
        Some(if d_e == 0.0 { 1.0 } else { 1.0 - d_o / d_e })
    }

    #[test]
    fn perfect_agreement() {
        let units = vec![vec![0, 0], vec![6, 6]];
        assert_eq!(krippendorff_alpha_ordinal(&units).unwrap().alpha, 1.0);
        let units = vec![vec![2, 2, 2], vec![5, 5, 5], vec![1, 1]];
        assert_eq!(krippendorff_alpha_ordinal(&units).unwrap().alpha, 1.0);
    }

    #[test]
    fn small_fixture_matches_oracle() {
        let units = vec![vec![0, 1, 1], vec![3, 4, 6], vec![5, 5, 2], vec![4]];
        let got = krippendorff_alpha_ordinal(&units).unwrap();
        assert_eq!(got.n_items, 3);
        assert_eq!(got.n_responses, 9);
        assert!((got.alpha - brute_force_alpha(&units).unwrap()).abs() < 1e-12);
        assert!(got.alpha < 1.0);
    }

    #[test]
    fn no_pairable_units() {
        assert!(krippendorff_alpha_ordinal(&[vec![1], vec![]]).is_err());
    }

    fn units_strategy() -> impl Strategy<Value = Vec<Vec<u8>>> {
        prop::collection::vec(prop::collection::vec(0u8..=6, 0..5), 1..12)
            .prop_filter("needs a pairable unit", |u| u.iter().any(|x| x.len() >= 2))
    }

    proptest! {
        #[test]
        fn equals_oracle(units in units_strategy()) {
            let got = krippendorff_alpha_ordinal(&units).unwrap().alpha;
            let want = brute_force_alpha(&units).unwrap();
            prop_assert!((got - want).abs() < 1e-12, "{got} vs {want}");
            prop_assert!(got <= 1.0 + 1e-12);
        }

        #[test]
        fn invariant_under_item_and_annotator_order(units in units_strategy(), rot in 0usize..12) {
            let base = krippendorff_alpha_ordinal(&units).unwrap().alpha;
            let mut shuffled: Vec<Vec<u8>> = units.iter().map(|u| u.iter().rev().copied().collect()).collect();
            let r = rot % shuffled.len();
            shuffled.rotate_left(r);
            let other = krippendorff_alpha_ordinal(&shuffled).unwrap().alpha;
            prop_assert!((base - other).abs() < 1e-12);
        }
    }
}
