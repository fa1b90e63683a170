//! Data-generating processes: random pseudo-structural parameters at a target
//! signal-to-noise ratio, and simulation with burn-in.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, mat_from_rows, sample_matrix_normal_factored, sym_norm2, Mat};
use crate::model::{Dims, MatrixSeries, PseudoStructParams};

/// Row and column error covariances of a simulated process.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovarianceSpec {
    #[default]
    Identity,
    /// Row-major nested arrays.
    Explicit { sigma1: Vec<Vec<f64>>, sigma2: Vec<Vec<f64>> },
}

impl CovarianceSpec {
    pub fn matrices(&self, n1: usize, n2: usize) -> Result<(Mat, Mat)> {
        match self {
            CovarianceSpec::Identity => Ok((Mat::identity(n1, n1), Mat::identity(n2, n2))),
            CovarianceSpec::Explicit { sigma1, sigma2 } => {
                let parse = |rows: &Vec<Vec<f64>>, n: usize, what: &str| -> Result<Mat> {
                    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                        return Err(Error::Config(format!("{what} must be {n}x{n}")));
                    }
                    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                    mat_from_rows(n, n, &flat)
                };
                let s1 = parse(sigma1, n1, "sigma1")?;
                let s2 = parse(sigma2, n2, "sigma2")?;
                cholesky_lower(&s1, "sigma1")?;
                cholesky_lower(&s2, "sigma2")?;
                Ok((s1, s2))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSpec {
    pub dims: Dims,
    /// Number of retained observations.
    pub t: usize,
    #[serde(default = "default_snr")]
    pub snr: f64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sigma: CovarianceSpec,
}

fn default_snr() -> f64 {
    0.7
}

fn default_burn_in() -> usize {
    50
}

impl DgpSpec {
    pub fn new(dims: Dims, t: usize) -> Self {
        Self { dims, t, snr: default_snr(), burn_in: default_burn_in(), seed: 0, sigma: CovarianceSpec::Identity }
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        if self.t == 0 {
            return Err(Error::InvalidArgument("series length must be at least 1".into()));
        }
        if !(self.snr > 0.0 && self.snr.is_finite()) {
            return Err(Error::InvalidArgument(format!("snr must be positive and finite, got {}", self.snr)));
        }
        Ok(())
    }
}

/// Redraws allowed before giving up on a stationary parameter draw.
pub const MAX_DRAWS: usize = 100;

fn randn<R: Rng + ?Sized>(rng: &mut R, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Draws `δ*`, `γ*` and the lag factors with independent standard normal entries, then
/// rescales to the target signal-to-noise ratio. Redraws up to [`MAX_DRAWS`] times if the
/// result is not stationary.
pub fn draw_dgp<R: Rng + ?Sized>(spec: &DgpSpec, rng: &mut R) -> Result<PseudoStructParams> {
    spec.validate()?;
    let Dims { n1, n2, r1, r2, p } = spec.dims;
    let (sigma1, sigma2) = spec.sigma.matrices(n1, n2)?;
    for _ in 0..MAX_DRAWS {
        let raw = PseudoStructParams {
            delta_star: randn(rng, r1, n1 - r1),
            gamma_star: randn(rng, r2, n2 - r2),
            u3: (0..p).map(|_| randn(rng, n1, r1)).collect(),
            u4: (0..p).map(|_| randn(rng, n2, r2)).collect(),
            sigma1: sigma1.clone(),
            sigma2: sigma2.clone(),
        };
        match rescale_to_snr(&raw, spec.snr) {
            Ok(params) if params.spectral_radius()? < 1.0 => return Ok(params),
            Ok(_) | Err(Error::ZeroCoefficient) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::RejectedDraw { attempts: MAX_DRAWS })
}

/// Signal-to-noise ratio: companion spectral radius over the largest eigenvalue of
/// `Σ2 ⊗ Σ1`.
pub fn snr(params: &PseudoStructParams) -> Result<f64> {
    Ok(params.spectral_radius()? / (sym_norm2(&params.sigma1) * sym_norm2(&params.sigma2)))
}

fn scaled(params: &PseudoStructParams, c: f64) -> PseudoStructParams {
    let mut out = params.clone();
    for u in out.u3.iter_mut() {
        *u *= c;
    }
    out
}

/// Scales every `U3_j` by a common factor so that [`snr`] equals `target`.
pub fn rescale_to_snr(params: &PseudoStructParams, target: f64) -> Result<PseudoStructParams> {
    if !(target > 0.0 && target.is_finite()) {
        return Err(Error::InvalidArgument(format!("snr must be positive and finite, got {target}")));
    }
    params.validate()?;
    let want = target * sym_norm2(&params.sigma1) * sym_norm2(&params.sigma2);
    let rho0 = params.spectral_radius()?;
    if !(rho0 > 0.0) {
        return Err(Error::ZeroCoefficient);
    }
    let c = if params.u3.len() == 1 {
        want / rho0
    } else {
        // Companion radius grows continuously from 0 with the scale; bracket and bisect.
        let rho = |c: f64| scaled(params, c).spectral_radius();
        let (mut lo, mut hi) = (0.0, 1.0);
        while rho(hi)? < want {
            lo = hi;
            hi *= 2.0;
            if hi > 1e12 {
                return Err(Error::ZeroCoefficient);
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if rho(mid)? < want {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        0.5 * (lo + hi)
    };
    Ok(scaled(params, c))
}

/// Simulates `burn_in + t` steps from zero initial values and keeps the last `t`.
pub fn simulate_series<R: Rng + ?Sized>(
    params: &PseudoStructParams,
    t: usize,
    burn_in: usize,
    rng: &mut R,
) -> Result<MatrixSeries> {
    params.validate()?;
    if t == 0 {
        return Err(Error::InvalidArgument("series length must be at least 1".into()));
    }
    let radius = params.spectral_radius()?;
    if radius >= 1.0 {
        return Err(Error::NonStationary { radius });
    }
    let d = params.dims();
    let (u1, u2) = (params.u1(), params.u2());
    // A_j vec(Y) = vec(C_j Y B_jᵀ).
    let cs: Vec<Mat> = params.u3.iter().map(|u3| &u1 * u3.transpose()).collect();
    let bs: Vec<Mat> = params.u4.iter().map(|u4| &u2 * u4.transpose()).collect();
    let l1 = cholesky_lower(&params.sigma1, "sigma1")?;
    let l2 = cholesky_lower(&params.sigma2, "sigma2")?;
    let zero = Mat::zeros(d.n1, d.n2);
    let total = t + burn_in;
    let mut ys: Vec<Mat> = Vec::with_capacity(total);
    for s in 0..total {
        let mut y = sample_matrix_normal_factored(rng, &zero, &l1, &l2);
        for j in 0..d.p.min(s) {
            y += &cs[j] * &ys[s - 1 - j] * bs[j].transpose();
        }
        ys.push(y);
    }
    MatrixSeries::new(ys.split_off(burn_in))
}

/// Draws parameters and a series from one RNG.
pub fn simulate_dgp<R: Rng + ?Sized>(spec: &DgpSpec, rng: &mut R) -> Result<(PseudoStructParams, MatrixSeries)> {
    let params = draw_dgp(spec, rng)?;
    let series = simulate_series(&params, spec.t, spec.burn_in, rng)?;
    Ok((params, series))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{kron, vec, Vector};
    use crate::model::structural_residuals;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dims(n1: usize, n2: usize, r1: usize, r2: usize, p: usize) -> Dims {
        Dims::new(n1, n2, r1, r2, p).unwrap()
    }

    #[test]
    fn fixed_seed_repeats() {
        let spec = DgpSpec::new(dims(3, 4, 2, 2, 1), 50);
        let a = draw_dgp(&spec, &mut ChaCha8Rng::seed_from_u64(90)).unwrap();
        let b = draw_dgp(&spec, &mut ChaCha8Rng::seed_from_u64(90)).unwrap();
        assert_eq!(a, b);
        let s1 = simulate_series(&a, 30, 50, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let s2 = simulate_series(&a, 30, 50, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(s1.len(), 30);
    }

    #[test]
    fn full_rank_spec_is_a_full_mar() {
        let p = draw_dgp(&DgpSpec::new(dims(3, 4, 3, 4, 1), 10), &mut ChaCha8Rng::seed_from_u64(91)).unwrap();
        assert_eq!(p.delta_star.len(), 0);
        assert_eq!(p.gamma_star.len(), 0);
        assert!((snr(&p).unwrap() - 0.7).abs() < 1e-8);
    }

    #[test]
    fn delta_draws_are_centered() {
        let spec = DgpSpec::new(dims(3, 4, 2, 2, 1), 10);
        let mut rng = ChaCha8Rng::seed_from_u64(92);
        let mut sum = Mat::zeros(2, 1);
        for _ in 0..1000 {
            sum += draw_dgp(&spec, &mut rng).unwrap().delta_star;
        }
        assert!((sum / 1000.0).amax() < 0.1);
    }

    #[test]
    fn snr_is_hit_and_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(93);
        for p in 1..=3 {
            let mut spec = DgpSpec::new(dims(3, 4, 2, 1, p), 10);
            spec.sigma = CovarianceSpec::Explicit {
                sigma1: vec![vec![2.0, 0.3, 0.0], vec![0.3, 1.0, 0.0], vec![0.0, 0.0, 0.5]],
                sigma2: vec![vec![0.5, 0.0, 0.0, 0.0], vec![0.0, 0.4, 0.0, 0.0], vec![0.0, 0.0, 0.3, 0.0], vec![0.0, 0.0, 0.0, 0.2]],
            };
            let params = draw_dgp(&spec, &mut rng).unwrap();
            assert!((snr(&params).unwrap() - 0.7).abs() < 1e-8, "p = {p}");
            let again = rescale_to_snr(&params, 0.7).unwrap();
            for (a, b) in again.coefficients().iter().zip(params.coefficients()) {
                assert!((a - b).amax() < 1e-8);
            }
        }
        let spec = DgpSpec::new(dims(3, 4, 2, 2, 1), 10);
        let p = draw_dgp(&spec, &mut rng).unwrap();
        assert!((p.spectral_radius().unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn rescale_errors() {
        let spec = DgpSpec::new(dims(3, 4, 2, 2, 1), 10);
        let mut p = draw_dgp(&spec, &mut ChaCha8Rng::seed_from_u64(94)).unwrap();
        assert!(rescale_to_snr(&p, 0.0).is_err());
        assert!(rescale_to_snr(&p, -1.0).is_err());
        p.u3[0].fill(0.0);
        assert!(matches!(rescale_to_snr(&p, 0.7), Err(Error::ZeroCoefficient)));
    }

    #[test]
    fn unreachable_snr_is_rejected() {
        let mut spec = DgpSpec::new(dims(2, 2, 1, 1, 1), 10);
        spec.snr = 1.5;
        assert!(matches!(draw_dgp(&spec, &mut ChaCha8Rng::seed_from_u64(95)), Err(Error::RejectedDraw { attempts: 100 })));
    }

    #[test]
    fn refuses_nonstationary() {
        let spec = DgpSpec::new(dims(3, 4, 2, 2, 1), 10);
        let p = draw_dgp(&spec, &mut ChaCha8Rng::seed_from_u64(96)).unwrap();
        let big = rescale_to_snr(&p, 1.2).unwrap();
        assert!(matches!(simulate_series(&big, 10, 0, &mut ChaCha8Rng::seed_from_u64(0)), Err(Error::NonStationary { .. })));
    }

    #[test]
    fn zero_coefficient_is_white_noise() {
        let mut p = draw_dgp(&DgpSpec::new(dims(2, 3, 1, 1, 1), 10), &mut ChaCha8Rng::seed_from_u64(97)).unwrap();
        p.u3[0].fill(0.0);
        let s = simulate_series(&p, 40_000, 0, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let mean = s.observations().iter().fold(Mat::zeros(2, 3), |a, y| a + y) / 40_000.0;
        // 4 standard errors of a mean of unit-variance draws.
        assert!(mean.amax() < 4.0 / 200.0);
    }

    #[test]
    fn scalar_ar1_variance() {
        let a = 0.6;
        let p = PseudoStructParams {
            delta_star: Mat::zeros(1, 0),
            gamma_star: Mat::zeros(1, 0),
            u3: vec![Mat::from_element(1, 1, a)],
            u4: vec![Mat::from_element(1, 1, 1.0)],
            sigma1: Mat::from_element(1, 1, 1.0),
            sigma2: Mat::from_element(1, 1, 2.0),
        };
        let s = simulate_series(&p, 100_000, 50, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let v = s.observations().iter().map(|y| y[(0, 0)].powi(2)).sum::<f64>() / 100_000.0;
        let want = 2.0 / (1.0 - a * a);
        assert!((v / want - 1.0).abs() < 0.05, "{v} vs {want}");
    }

    #[test]
    fn stationary_covariance_matches_lyapunov() {
        let spec = DgpSpec::new(dims(2, 2, 1, 1, 1), 10);
        let mut rng = ChaCha8Rng::seed_from_u64(98);
        let p = draw_dgp(&spec, &mut rng).unwrap();
        let a = &p.coefficients()[0];
        let q = kron(&p.sigma2, &p.sigma1);
        // Γ = A Γ Aᵀ + Q by fixed-point iteration (radius 0.7).
        let mut gamma = q.clone();
        for _ in 0..200 {
            gamma = a * &gamma * a.transpose() + &q;
        }
        let t = 200_000;
        let s = simulate_series(&p, t, 100, &mut rng).unwrap();
        let mut emp = Mat::zeros(4, 4);
        for y in s.observations() {
            let v: Vector = vec(y);
            emp += &v * v.transpose();
        }
        emp /= t as f64;
        assert!((&emp - &gamma).norm() / gamma.norm() < 0.03);
    }

    #[test]
    fn burn_in_is_sufficient() {
        let spec = DgpSpec::new(dims(3, 4, 2, 2, 1), 10);
        let p = draw_dgp(&spec, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        let cov = |burn: usize| {
            let s = simulate_series(&p, 10_000, burn, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
            let mut c = Mat::zeros(12, 12);
            for y in s.observations() {
                let v = vec(y);
                c += &v * v.transpose();
            }
            c / 10_000.0
        };
        let (a, b) = (cov(50), cov(100));
        assert!((&a - &b).norm() / a.norm() < 0.02);
    }

    #[test]
    fn annihilated_combination_is_serially_uncorrelated() {
        let spec = DgpSpec::new(dims(3, 4, 2, 2, 1), 10);
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        let p = draw_dgp(&spec, &mut rng).unwrap();
        let t = 400;
        let reps = 200;
        let mut inside = 0;
        for _ in 0..reps {
            let s = simulate_series(&p, t, 50, &mut rng).unwrap();
            let res = structural_residuals(&s, &p).unwrap();
            // First row-specific combination in the first column.
            let z: Vec<f64> = res.row.iter().map(|m| m[(0, 0)]).collect();
            let mean = z.iter().sum::<f64>() / t as f64;
            let c0: f64 = z.iter().map(|x| (x - mean).powi(2)).sum();
            let c1: f64 = z.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
            if (c1 / c0).abs() <= 2.0 / (t as f64).sqrt() {
                inside += 1;
            }
        }
        assert!(inside as f64 / reps as f64 >= 0.9, "{inside}/{reps}");
    }

    #[test]
    fn annihilated_combination_is_orthogonal_to_the_past() {
        let spec = DgpSpec::new(dims(3, 4, 2, 2, 1), 10);
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let p = draw_dgp(&spec, &mut rng).unwrap();
        let t = 20_000;
        let s = simulate_series(&p, t, 50, &mut rng).unwrap();
        let res = structural_residuals(&s, &p).unwrap();
        // Products z_t · vec(Y_{t-1}): mean within 3 standard errors of zero.
        for k in 0..12 {
            let prods: Vec<f64> = (1..t).map(|u| res.row[u][(0, 1)] * vec(s.get(u - 1))[k]).collect();
            let n = prods.len() as f64;
            let m = prods.iter().sum::<f64>() / n;
            let sd = (prods.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            assert!(m.abs() <= 3.0 * sd / n.sqrt(), "entry {k}: {m} vs {}", sd / n.sqrt());
        }
    }
}
