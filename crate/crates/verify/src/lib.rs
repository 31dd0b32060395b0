//! Straightforward reference implementations used as oracles by the
//! acceptance suite. Written for clarity, not speed.

use std::collections::BTreeMap;

use noncomp_core::ratings::{CandidateItems, PhraseSentiment};

/// Ordinal alpha by enumerating every ordered pair of values, within units
/// and across all pairable values. `None` when no unit has two values.
pub fn alpha_pairwise(units: &[Vec<u8>]) -> Option<f64> {
    let pairable: Vec<&Vec<u8>> = units.iter().filter(|u| u.len() >= 2).collect();
    let values: Vec<u8> = pairable.iter().flat_map(|u| u.iter().copied()).collect();
    let n = values.len() as f64;
    if values.is_empty() {
        return None;
    }
    let mut freq = [0f64; 7];
    for &v in &values {
        freq[v as usize] += 1.0;
    }
    let delta2 = |a: u8, b: u8| {
        let (lo, hi) = (a.min(b) as usize, a.max(b) as usize);
        let d: f64 = freq[lo..=hi].iter().sum::<f64>() - (freq[lo] + freq[hi]) / 2.0;
        d * d
    };
    let mut within = 0.0;
    for u in &pairable {
        let m = u.len() as f64;
        let mut s = 0.0;
        for i in 0..u.len() {
            for j in 0..u.len() {
                if i != j {
                    s += delta2(u[i], u[j]);
                }
            }
        }
        within += s / (m - 1.0);
    }
    let mut between = 0.0;
    for i in 0..values.len() {
        for j in 0..values.len() {
            if i != j {
                between += delta2(values[i], values[j]);
            }
        }
    }
    let d_o = within / n;
    let d_e = between / (n * (n - 1.0));
    Some(if d_e == 0.0 { 1.0 } else { 1.0 - d_o / d_e })
}

pub struct Direct {
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub clean_a: bool,
    pub clean_b: bool,
}

/// Per-side ratings recomputed from the rules: flagged or missing controls
/// are dropped, fewer than two usable controls excludes the side, and a side
/// is clean only if neither "A B" nor any of its controls carries a flag.
pub fn direct_rating(c: &CandidateItems, s: &BTreeMap<String, PhraseSentiment>) -> Direct {
    let Some(nat) = s.get(&c.natural) else {
        return Direct {
            a: None,
            b: None,
            clean_a: false,
            clean_b: false,
        };
    };
    let side = |controls: &[String]| {
        let present: Vec<&PhraseSentiment> = controls.iter().filter_map(|i| s.get(i)).collect();
        let usable: Vec<f64> = present.iter().filter(|p| !p.flagged_ungrammatical).map(|p| p.mean_label).collect();
        let rating = (usable.len() >= 2).then(|| nat.mean_label - usable.iter().sum::<f64>() / usable.len() as f64);
        let clean = rating.is_some() && !nat.flagged_ungrammatical && present.iter().all(|p| !p.flagged_ungrammatical);
        (rating, clean)
    };
    let (a, clean_a) = side(&c.controls_a);
    let (b, clean_b) = side(&c.controls_b);
    Direct { a, b, clean_a, clean_b }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_alpha() {
        // Two units that each split 0/1: delta^2(0,1) = 4, D_o = 4, D_e = 8/3.
        let a = alpha_pairwise(&[vec![0, 1], vec![0, 1]]).unwrap();
        assert!((a + 0.5).abs() < 1e-15);
        assert_eq!(alpha_pairwise(&[vec![0, 0], vec![5, 5]]), Some(1.0));
        assert_eq!(alpha_pairwise(&[vec![3]]), None);
    }
}
