//! Small statistics helpers: moments, Pearson correlation and a paired
//! sign-flip permutation test.

use crate::rng::PlanRng;

use super::SimError;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than 2 values.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Pearson correlation via a single-pass co-moment update.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, SimError> {
    assert_eq!(xs.len(), ys.len(), "paired vectors");
    if xs.len() < 2 {
        return Err(SimError::TooFewPoints(xs.len()));
    }
    let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, (&x, &y)) in xs.iter().zip(ys).enumerate() {
        let n = (i + 1) as f64;
        let dx = x - mx;
        let dy = y - my;
        mx += dx / n;
        my += dy / n;
        sxx += dx * (x - mx);
        syy += dy * (y - my);
        sxy += dx * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(SimError::ConstantVector);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// One-sided p-value that the mean of `diffs` is greater than zero, from
/// random sign flips. Counts the observed assignment, so p >= 1/(n+1).
pub fn paired_permutation_p(diffs: &[f64], permutations: usize, seed: u64) -> f64 {
    if diffs.is_empty() {
        return 1.0;
    }
    let observed: f64 = diffs.iter().sum();
    let mut rng = PlanRng::new(seed, 0);
    let mut at_least = 0usize;
    for _ in 0..permutations {
        let mut total = 0.0;
        let mut bits = 0u64;
        for (i, d) in diffs.iter().enumerate() {
            if i % 64 == 0 {
                bits = rng.next_u64();
            }
            total += if bits & 1 == 1 { *d } else { -*d };
            bits >>= 1;
        }
        // tolerance absorbs reassociation noise when a flip reproduces the data
        if total >= observed - 1e-12 {
            at_least += 1;
        }
    }
    (1 + at_least) as f64 / (1 + permutations) as f64
}
