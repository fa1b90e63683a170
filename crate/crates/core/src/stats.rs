//! Normal distribution helpers and kernel density estimation.

use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Two-sided p-value of a z statistic.
pub fn two_sided_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2)
}

/// Standard normal quantile: Acklam's rational approximation followed by one Halley
/// step against [`normal_cdf`].
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!("quantile level {p} outside (0, 1)")));
    }
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    let plow = 0.02425;
    let x = if p < plow {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - plow {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let e = normal_cdf(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
    Ok(x - u / (1.0 + 0.5 * x * u))
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation with the `n - 1` divisor; `0` for fewer than two values.
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Median of the finite values, `NaN` if there are none.
pub fn median(xs: &[f64]) -> f64 {
    let mut v: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Gaussian kernel density on `grid` evenly spaced points spanning `mean ± 4 sd`, with
/// Silverman's bandwidth `1.06 sd n^{-1/5}`. Returns `(x, density)` pairs.
pub fn kernel_density(draws: &[f64], grid: usize) -> Result<Vec<(f64, f64)>> {
    if draws.len() < 10 {
        return Err(Error::InvalidArgument(format!("kernel density needs at least 10 draws, got {}", draws.len())));
    }
    if grid < 2 {
        return Err(Error::InvalidArgument("kernel density grid needs at least 2 points".into()));
    }
    if draws.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("density draws"));
    }
    let m = mean(draws);
    let sd = sample_sd(draws);
    if sd <= f64::EPSILON * m.abs().max(1.0) {
        return Err(Error::DegenerateDensity { value: m });
    }
    let n = draws.len() as f64;
    let h = 1.06 * sd * n.powf(-0.2);
    let (lo, hi) = (m - 4.0 * sd, m + 4.0 * sd);
    let step = (hi - lo) / (grid - 1) as f64;
    Ok((0..grid)
        .map(|k| {
            let x = lo + step * k as f64;
            let d = draws.iter().map(|&v| normal_pdf((x - v) / h)).sum::<f64>() / (n * h);
            (x, d)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn quantile_known_values() {
        assert!((normal_quantile(0.975).unwrap() - 1.959963984540054).abs() < 1e-9);
        assert!(normal_quantile(0.5).unwrap().abs() < 1e-15);
        assert!((normal_quantile(0.01).unwrap() + 2.326347874040841).abs() < 1e-9);
        assert!(normal_quantile(1.0).is_err());
        for p in [1e-10, 1e-4, 0.02, 0.3, 0.7, 0.99, 1.0 - 1e-9] {
            assert!((normal_cdf(normal_quantile(p).unwrap()) - p).abs() < 1.2e-8 * p.max(1e-3));
        }
    }

    #[test]
    fn p_values() {
        assert!((two_sided_p(1.959963984540054) - 0.05).abs() < 1e-10);
        assert_eq!(two_sided_p(0.0), 1.0);
    }

    #[test]
    fn kde_standard_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(70);
        let draws: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
        let dens = kernel_density(&draws, 401).unwrap();
        let max_err = dens.iter().map(|&(x, d)| (d - normal_pdf(x)).abs()).fold(0.0, f64::max);
        assert!(max_err < 0.02, "{max_err}");
        let integral: f64 = dens.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0)).sum();
        assert!((integral - 1.0).abs() < 1e-3, "{integral}");
    }

    #[test]
    fn kde_degenerate() {
        let draws = vec![2.5; 50];
        assert!(matches!(kernel_density(&draws, 10), Err(Error::DegenerateDensity { .. })));
        assert!(kernel_density(&[1.0; 5], 10).is_err());
    }

    #[test]
    fn sample_moments() {
        assert_eq!(sample_sd(&[1.0, 1.0, 1.0]), 0.0);
        assert!((sample_sd(&[1.0, 2.0, 3.0, 4.0]) - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
