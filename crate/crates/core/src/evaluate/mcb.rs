use serde::Serialize;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Ranks of one case's errors, 1 = smallest, ties get the average rank.
pub fn average_ranks(errors: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..errors.len()).collect();
    idx.sort_by(|&a, &b| errors[a].total_cmp(&errors[b]));
    let mut ranks = vec![0.0; errors.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && errors[idx[j + 1]] == errors[idx[i]] {
            j += 1;
        }
        // positions i..=j share ranks i+1..=j+1
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Upper `alpha` quantile of the studentized range of `k` independent
/// standard normals (infinite degrees of freedom).
pub fn studentized_range_quantile(alpha: f64, k: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if k < 2 {
        return Err(Error::Invalid("the studentized range needs at least 2 groups".into()));
    }
    let target = 1.0 - alpha;
    let (mut lo, mut hi) = (0.0, 1.0);
    while studentized_range_cdf(hi, k) < target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if studentized_range_cdf(mid, k) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `P(R ≤ q) = k ∫ φ(z) [Φ(z + q) − Φ(z)]^{k−1} dz`.
pub fn studentized_range_cdf(q: f64, k: usize) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    let nd = Normal::standard();
    let f = |z: f64| nd.pdf(z) * (nd.cdf(z + q) - nd.cdf(z)).powi(k as i32 - 1);
    // composite Simpson on [-9, 9]; the integrand is negligible outside
    let (a, b, steps) = (-9.0, 9.0, 4000);
    let h = (b - a) / steps as f64;
    let mut s = f(a) + f(b);
    for i in 1..steps {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    (k as f64 * s * h / 3.0).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct McbResult {
    pub candidates: Vec<String>,
    pub mean_ranks: Vec<f64>,
    /// Nemenyi critical distance; intervals are `mean rank ± cd / 2`.
    pub cd: f64,
    pub alpha: f64,
    pub cases: usize,
    pub best: usize,
    /// Interval of candidate `j` does not overlap the best one's.
    pub differs_from_best: Vec<bool>,
}

impl McbResult {
    pub fn interval(&self, j: usize) -> (f64, f64) {
        (self.mean_ranks[j] - self.cd / 2.0, self.mean_ranks[j] + self.cd / 2.0)
    }

    /// Non-overlapping intervals.
    pub fn significant(&self, a: usize, b: usize) -> bool {
        (self.mean_ranks[a] - self.mean_ranks[b]).abs() > self.cd
    }
}

/// MCB-Nemenyi from a `cases × candidates` error table. Cases with a
/// non-finite error are skipped.
pub fn mcb_from_errors(candidates: &[String], errors: &[Vec<f64>], alpha: f64) -> Result<McbResult> {
    let j = candidates.len();
    if j < 2 {
        return Err(Error::Invalid("MCB needs at least 2 candidates".into()));
    }
    let mut sums = vec![0.0; j];
    let mut cases = 0usize;
    for (c, row) in errors.iter().enumerate() {
        if row.len() != j {
            return Err(Error::dim(format!("errors of case {c}"), j, row.len()));
        }
        if row.iter().any(|e| !e.is_finite()) {
            continue;
        }
        for (s, r) in sums.iter_mut().zip(average_ranks(row)) {
            *s += r;
        }
        cases += 1;
    }
    if cases < 2 {
        return Err(Error::Invalid(format!("MCB needs at least 2 complete cases, found {cases}")));
    }
    let mean_ranks: Vec<f64> = sums.iter().map(|s| s / cases as f64).collect();
    let q = studentized_range_quantile(alpha, j)?;
    let cd = q * ((j * (j + 1)) as f64 / (12.0 * cases as f64)).sqrt();
    let best = (0..j)
        .min_by(|&a, &b| mean_ranks[a].total_cmp(&mean_ranks[b]))
        .expect("at least two candidates");
    let differs_from_best = (0..j).map(|c| (mean_ranks[c] - mean_ranks[best]).abs() > cd).collect();
    Ok(McbResult {
        candidates: candidates.to_vec(),
        mean_ranks,
        cd,
        alpha,
        cases,
        best,
        differs_from_best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_share_the_average_rank() {
        assert_eq!(average_ranks(&[3.0, 1.0, 2.0]), vec![3.0, 1.0, 2.0]);
        assert_eq!(average_ranks(&[1.0, 1.0, 2.0]), vec![1.5, 1.5, 3.0]);
        assert_eq!(average_ranks(&[5.0; 4]), vec![2.5; 4]);
    }

    #[test]
    fn quantiles_match_tables() {
        for (k, q) in [(2, 2.772), (3, 3.314), (4, 3.633), (10, 4.474)] {
            let got = studentized_range_quantile(0.05, k).unwrap();
            assert!((got - q).abs() < 1e-3, "k={k}: {got}");
        }
        // k = 2: the range of two normals is √2 |Z|
        let two = studentized_range_quantile(0.05, 2).unwrap();
        assert!((two - 1.959963984540054 * 2f64.sqrt()).abs() < 1e-7);
    }

    #[test]
    fn strict_dominance() {
        let names = vec!["a".to_string(), "b".to_string()];
        let errors: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, i as f64 + 1.0]).collect();
        let r = mcb_from_errors(&names, &errors, 0.05).unwrap();
        assert_eq!(r.mean_ranks, vec![1.0, 2.0]);
        assert_eq!(r.best, 0);
        let same: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, i as f64]).collect();
        let s = mcb_from_errors(&names, &same, 0.05).unwrap();
        assert_eq!(s.mean_ranks, vec![1.5, 1.5]);
        assert!(!s.significant(0, 1));
    }
}
