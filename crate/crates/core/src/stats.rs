//! Small estimators shared by the ensemble experiments.

use serde::Serialize;
use statrs::distribution::{Beta, ContinuousCDF};

use crate::error::{invalid, Error, Result};

/// Sample mean, unbiased variance and standard error of the mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
}

pub fn summarize(xs: &[f64]) -> Summary {
    let n = xs.len();
    if n == 0 {
        return Summary {
            n,
            mean: f64::NAN,
            variance: f64::NAN,
            std_error: f64::NAN,
        };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let variance = if n > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    Summary {
        n,
        mean,
        variance,
        std_error: (variance / n as f64).sqrt(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BatchMeans {
    pub mean: f64,
    pub std_error: f64,
    pub n_batches: usize,
    pub batch_size: usize,
    /// `n σ̂² / (b σ̂_B²)`, the sample count adjusted for autocorrelation.
    pub effective_samples: f64,
}

/// Batch-means estimate of the mean of a stationary series. A trailing
/// remainder shorter than one batch is dropped.
pub fn batch_means(xs: &[f64], n_batches: usize) -> Result<BatchMeans> {
    if n_batches < 2 {
        return Err(invalid("n_batches", "need at least two batches"));
    }
    let batch_size = xs.len() / n_batches;
    if batch_size == 0 {
        return Err(Error::Insufficient {
            what: "samples for batch means",
            got: xs.len(),
            need: n_batches,
        });
    }
    let used = &xs[..batch_size * n_batches];
    let means: Vec<f64> = used
        .chunks(batch_size)
        .map(|c| c.iter().sum::<f64>() / batch_size as f64)
        .collect();
    let s = summarize(&means);
    let raw = summarize(used);
    let asym = batch_size as f64 * s.variance;
    let effective_samples = if asym > 0.0 {
        used.len() as f64 * raw.variance / asym
    } else {
        used.len() as f64
    };
    Ok(BatchMeans {
        mean: s.mean,
        std_error: s.std_error,
        n_batches,
        batch_size,
        effective_samples,
    })
}

/// One-sided Clopper–Pearson lower bound for a binomial proportion.
pub fn clopper_pearson_lower(successes: usize, trials: usize, confidence: f64) -> Result<f64> {
    if trials == 0 || successes > trials {
        return Err(invalid("trials", "need 0 ≤ successes ≤ trials, trials > 0"));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(invalid("confidence", "must lie in (0, 1)"));
    }
    if successes == 0 {
        return Ok(0.0);
    }
    let beta =
        Beta::new(successes as f64, (trials - successes + 1) as f64).map_err(|e| invalid("trials", e.to_string()))?;
    Ok(beta.inverse_cdf(1.0 - confidence))
}

/// Least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len()) as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let num: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn summary_of_constant() {
        let s = summarize(&[2.0; 5]);
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.std_error, 0.0);
    }

    #[test]
    fn batch_means_se_shrinks_like_root_batches() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..400_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let small = batch_means(&xs[..100_000], 20).unwrap();
        let big = batch_means(&xs, 20).unwrap();
        // i.i.d. input: SE ≈ 1/√n regardless of batching
        assert!((small.std_error * (100_000f64).sqrt() - 1.0).abs() < 0.5);
        let ratio = small.std_error / big.std_error;
        assert!((ratio - 2.0).abs() < 1.0, "{ratio}");
        assert!(big.effective_samples > 0.3 * xs.len() as f64);
    }

    #[test]
    fn clopper_pearson_known_values() {
        assert_eq!(clopper_pearson_lower(0, 10, 0.95).unwrap(), 0.0);
        // k = n: lower bound is (1 - conf)^{1/n}
        let lb = clopper_pearson_lower(10, 10, 0.95).unwrap();
        assert!((lb - 0.05f64.powf(0.1)).abs() < 1e-9);
        let lb = clopper_pearson_lower(1, 100, 0.95).unwrap();
        assert!(lb > 0.0 && lb < 0.01);
    }

    #[test]
    fn slope_of_line() {
        assert!((ols_slope(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]) - 2.0).abs() < 1e-12);
    }
}
