use crate::error::{Error, Result};

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.max(0.0)).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Population standard deviation.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Softmax restricted to `mask`; masked entries are exactly zero.
pub fn masked_softmax(scores: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    if scores.len() != mask.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} scores with {} mask bits",
            scores.len(),
            mask.len()
        )));
    }
    let shift = scores
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(s, _)| *s)
        .fold(f64::NEG_INFINITY, f64::max);
    if shift == f64::NEG_INFINITY {
        return Err(Error::EmptyFeasibleSet);
    }
    if !shift.is_finite() {
        return Err(Error::NonFinite("softmax scores"));
    }
    let mut out: Vec<f64> = scores
        .iter()
        .zip(mask)
        .map(|(s, m)| if *m { (s - shift).exp() } else { 0.0 })
        .collect();
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p /= total;
    }
    Ok(out)
}

/// Index of the largest feasible score; ties go to the lowest index.
pub fn argmax_masked(scores: &[f64], mask: &[bool]) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (i, (s, m)) in scores.iter().zip(mask).enumerate() {
        if *m && best.is_none_or(|b| *s > scores[b]) {
            best = Some(i);
        }
    }
    best.ok_or(Error::EmptyFeasibleSet)
}

/// Cosine of the angle between `a` and `b`; 0 when either norm is below 1e-12.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!(
            "cosine of lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (l2_norm(a), l2_norm(b));
    if na < 1e-12 || nb < 1e-12 {
        return Ok(0.0);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn median_of_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub fn median(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::EmptyInput("median"));
    }
    Ok(median_of_sorted(&sorted(xs)))
}

/// `(median, median absolute deviation)`; even lengths average the two
/// central order statistics.
pub fn median_mad(xs: &[f64]) -> Result<(f64, f64)> {
    let med = median(xs)?;
    let dev: Vec<f64> = xs.iter().map(|x| (x - med).abs()).collect();
    Ok((med, median(&dev)?))
}

/// Empirical value-at-risk and conditional value-at-risk. The quantile is the
/// nearest-rank order statistic `x_(ceil(alpha * n))`.
pub fn empirical_cvar(xs: &[f64], alpha: f64) -> Result<(f64, f64)> {
    if xs.is_empty() {
        return Err(Error::EmptyInput("cvar sample"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "cvar level {alpha} outside (0, 1)"
        )));
    }
    let v = sorted(xs);
    let n = v.len();
    // Guard against 0.9 * 10 landing a hair above 9.
    let rank = ((alpha * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    let eta = v[rank - 1];
    let tail: f64 = v.iter().map(|x| (x - eta).max(0.0)).sum();
    Ok((eta, eta + tail / ((1.0 - alpha) * n as f64)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_examples() {
        assert_eq!(relu(&[-1.0, 0.0, 2.0]), vec![0.0, 0.0, 2.0]);
        assert_eq!(relu(&[0.0, 0.0]), vec![0.0, 0.0]);
        assert_eq!(relu(&[3.5]), vec![3.5]);
    }

    #[test]
    fn softmax_examples() {
        let p = masked_softmax(&[1.0, 1.0, 1.0], &[true; 3]).unwrap();
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(masked_softmax(&[5.0, 5.0], &[true, false]).unwrap(), vec![1.0, 0.0]);
        let p = masked_softmax(&[0.0, 3f64.ln()], &[true, true]).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-12 && (p[1] - 0.75).abs() < 1e-12);
        assert!(matches!(
            masked_softmax(&[1.0, 2.0], &[false, false]),
            Err(Error::EmptyFeasibleSet)
        ));
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine_similarity(&[1., 2., 3.], &[1., 2., 3.]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1., 0.], &[-1., 0.]).unwrap(), -1.0);
        assert_eq!(cosine_similarity(&[1., 0.], &[0., 1.]).unwrap(), 0.0);
        assert_eq!(cosine_similarity(&[0., 0.], &[0., 1.]).unwrap(), 0.0);
        assert!(cosine_similarity(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn median_mad_examples() {
        let (m, d) = median_mad(&[0.9, 0.8, 0.85, -0.7, 0.88]).unwrap();
        assert_eq!(m, 0.85);
        assert!((d - 0.05).abs() < 1e-12);
        assert_eq!(median_mad(&[2.5, 2.5, 2.5]).unwrap(), (2.5, 0.0));
        assert_eq!(median_mad(&[1.0, 3.0]).unwrap(), (2.0, 1.0));
        assert!(median_mad(&[]).is_err());
    }

    #[test]
    fn cvar_examples() {
        let xs: Vec<f64> = (1..=10).map(f64::from).collect();
        let (eta, cvar) = empirical_cvar(&xs, 0.9).unwrap();
        assert_eq!(eta, 9.0);
        assert!((cvar - 10.0).abs() < 1e-12);
        assert_eq!(empirical_cvar(&[4.25; 7], 0.95).unwrap(), (4.25, 4.25));
        assert!(empirical_cvar(&xs, 1.0).is_err());
        assert!(empirical_cvar(&xs, 0.0).is_err());
        assert!(empirical_cvar(&[], 0.5).is_err());
    }

    #[test]
    fn argmax_prefers_first_tie_and_respects_mask() {
        assert_eq!(argmax_masked(&[1.0, 3.0, 3.0], &[true; 3]).unwrap(), 1);
        assert_eq!(argmax_masked(&[1.0, 3.0, 2.0], &[true, false, true]).unwrap(), 2);
    }
}
