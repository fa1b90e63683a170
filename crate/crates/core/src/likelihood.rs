//! Gaussian conditional log-likelihood of the pseudo-structural model.
//!
//! The objective is
//! `-(n N2 / 2) log|Σ1| - (n N1 / 2) log|Σ2| - ½ Σ_t e_tᵀ (Σ2 ⊗ Σ1)⁻¹ e_t`
//! with `n = T - p` and no `2π` constant. Since `Ω P` has unit determinant, the
//! structural residual `Ω y*_t - Σ_j Π_j y_{t-j}` with covariance
//! `Ω P (Σ2 ⊗ Σ1) Pᵀ Ωᵀ` produces the same quadratic form as the reduced-form residual
//! `e_t = y_t - Σ_j A_j y_{t-j}`, so the fast path works on sample moments and costs
//! the same for any `T`.

use std::ops::Range;

use nalgebra::Cholesky;

use crate::error::{shape_err, Error, Result};
use crate::linalg::{
    cholesky_lower, kron, min_eigenvalue, nearest_psd, null_space_basis, sym_norm2, symmetrize,
    vec, vecb, vecb_permutation, Mat, Vector,
};
use crate::model::{coefficient_matrices, Dims, MatrixSeries, PseudoStructParams};
use nalgebra::SymmetricEigen;

/// Offsets of each parameter block inside θ.
///
/// Order: `δ*` (row-major), `γ*` (row-major), then for each lag `U3_j` and `U4_j`
/// (row-major), then the lower triangle of `L1` without `L1[0,0]`, then the lower
/// triangle of `L2`. Triangles are stored row by row; diagonal entries in log scale.
/// `Σ_i = L_i L_iᵀ` and `L1[0,0] = 1`, which pins the scale of `Σ2 ⊗ Σ1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThetaLayout {
    dims: Dims,
    delta: Range<usize>,
    gamma: Range<usize>,
    lags: Vec<(Range<usize>, Range<usize>)>,
    sigma1: Range<usize>,
    sigma2: Range<usize>,
}

fn tri_len(n: usize) -> usize {
    n * (n + 1) / 2
}

impl ThetaLayout {
    pub fn new(dims: Dims) -> Result<Self> {
        dims.validate()?;
        let Dims { n1, n2, r1, r2, p } = dims;
        let mut at = 0;
        let mut take = |len: usize| {
            let r = at..at + len;
            at += len;
            r
        };
        let delta = take(r1 * (n1 - r1));
        let gamma = take(r2 * (n2 - r2));
        let lags = (0..p).map(|_| (take(n1 * r1), take(n2 * r2))).collect();
        let sigma1 = take(tri_len(n1) - 1);
        let sigma2 = take(tri_len(n2));
        Ok(Self { dims, delta, gamma, lags, sigma1, sigma2 })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.sigma2.end
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn delta_range(&self) -> Range<usize> {
        self.delta.clone()
    }

    pub fn gamma_range(&self) -> Range<usize> {
        self.gamma.clone()
    }

    pub fn u3_range(&self, lag: usize) -> Range<usize> {
        self.lags[lag].0.clone()
    }

    pub fn u4_range(&self, lag: usize) -> Range<usize> {
        self.lags[lag].1.clone()
    }

    pub fn sigma1_range(&self) -> Range<usize> {
        self.sigma1.clone()
    }

    pub fn sigma2_range(&self) -> Range<usize> {
        self.sigma2.clone()
    }

    /// `δ*` then `γ*`: the coordinates that get standard errors.
    pub fn coefficient_range(&self) -> Range<usize> {
        0..self.gamma.end
    }

    /// Coordinates of `δ*`, `γ*` and the lag factors (`φ` of them).
    pub fn factor_range(&self) -> Range<usize> {
        0..self.sigma1.start
    }

    /// θ index of `δ*[i, k]`.
    pub fn delta_index(&self, i: usize, k: usize) -> usize {
        self.delta.start + i * (self.dims.n1 - self.dims.r1) + k
    }

    /// θ index of `γ*[i, k]`.
    pub fn gamma_index(&self, i: usize, k: usize) -> usize {
        self.gamma.start + i * (self.dims.n2 - self.dims.r2) + k
    }

    /// Scales `Σ1` to `Σ1[0,0] = 1` and `Σ2` by the same factor; `Σ2 ⊗ Σ1` is unchanged.
    pub fn normalize_covariances(sigma1: &Mat, sigma2: &Mat) -> Result<(Mat, Mat)> {
        let s = sigma1[(0, 0)];
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::NotPositiveDefinite("sigma1"));
        }
        Ok((sigma1 / s, sigma2 * s))
    }

    pub fn pack(&self, params: &PseudoStructParams) -> Result<Vector> {
        params.validate()?;
        if params.dims() != self.dims {
            return Err(shape_err("ThetaLayout::pack", format!("{:?}", self.dims), format!("{:?}", params.dims())));
        }
        let mut theta = Vector::zeros(self.len());
        write_row_major(&mut theta, self.delta.clone(), &params.delta_star);
        write_row_major(&mut theta, self.gamma.clone(), &params.gamma_star);
        for (j, (r3, r4)) in self.lags.iter().enumerate() {
            write_row_major(&mut theta, r3.clone(), &params.u3[j]);
            write_row_major(&mut theta, r4.clone(), &params.u4[j]);
        }
        let (s1, s2) = Self::normalize_covariances(&params.sigma1, &params.sigma2)?;
        let l1 = cholesky_lower(&s1, "sigma1")?;
        let l2 = cholesky_lower(&s2, "sigma2")?;
        write_chol(&mut theta, self.sigma1.start, &l1, true);
        write_chol(&mut theta, self.sigma2.start, &l2, false);
        Ok(theta)
    }

    fn check_len(&self, theta: &Vector) -> Result<()> {
        if theta.len() != self.len() {
            return Err(shape_err("theta", self.len(), theta.len()));
        }
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("theta"));
        }
        Ok(())
    }

    /// Lower Cholesky factors `(L1, L2)` encoded in θ.
    pub fn cholesky_factors(&self, theta: &Vector) -> Result<(Mat, Mat)> {
        self.check_len(theta)?;
        Ok((
            read_chol(theta, self.sigma1.start, self.dims.n1, true),
            read_chol(theta, self.sigma2.start, self.dims.n2, false),
        ))
    }

    pub fn unpack(&self, theta: &Vector) -> Result<PseudoStructParams> {
        self.check_len(theta)?;
        let Dims { n1, n2, r1, r2, .. } = self.dims;
        let (l1, l2) = self.cholesky_factors(theta)?;
        Ok(PseudoStructParams {
            delta_star: read_row_major(theta, self.delta.clone(), r1, n1 - r1),
            gamma_star: read_row_major(theta, self.gamma.clone(), r2, n2 - r2),
            u3: self.lags.iter().map(|(r, _)| read_row_major(theta, r.clone(), n1, r1)).collect(),
            u4: self.lags.iter().map(|(_, r)| read_row_major(theta, r.clone(), n2, r2)).collect(),
            sigma1: &l1 * l1.transpose(),
            sigma2: &l2 * l2.transpose(),
        })
    }

    /// Tangent directions of the lag-factor gauge `(c U3_j, U4_j / c)` at θ, one column
    /// per lag. The likelihood is constant along each of them.
    pub fn gauge_directions(&self, theta: &Vector) -> Mat {
        let mut v = Mat::zeros(self.len(), self.lags.len());
        for (j, (r3, r4)) in self.lags.iter().enumerate() {
            for i in r3.clone() {
                v[(i, j)] = theta[i];
            }
            for i in r4.clone() {
                v[(i, j)] = -theta[i];
            }
        }
        v
    }

    /// Human-readable name of coordinate `i`.
    pub fn coordinate_name(&self, i: usize) -> String {
        let Dims { n1, n2, r1, r2, .. } = self.dims;
        if self.delta.contains(&i) {
            let k = i - self.delta.start;
            return format!("delta_star[{},{}]", k / (n1 - r1), k % (n1 - r1));
        }
        if self.gamma.contains(&i) {
            let k = i - self.gamma.start;
            return format!("gamma_star[{},{}]", k / (n2 - r2), k % (n2 - r2));
        }
        for (j, (r3, r4)) in self.lags.iter().enumerate() {
            if r3.contains(&i) {
                let k = i - r3.start;
                return format!("u3[{j}][{},{}]", k / r1, k % r1);
            }
            if r4.contains(&i) {
                let k = i - r4.start;
                return format!("u4[{j}][{},{}]", k / r2, k % r2);
            }
        }
        if self.sigma1.contains(&i) {
            return format!("chol_sigma1[{}]", i - self.sigma1.start + 1);
        }
        format!("chol_sigma2[{}]", i - self.sigma2.start)
    }
}

fn write_row_major(theta: &mut Vector, r: Range<usize>, m: &Mat) {
    let mut k = r.start;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            theta[k] = m[(i, j)];
            k += 1;
        }
    }
    debug_assert_eq!(k, r.end);
}

fn read_row_major(theta: &Vector, r: Range<usize>, rows: usize, cols: usize) -> Mat {
    debug_assert_eq!(r.len(), rows * cols);
    Mat::from_row_slice(rows, cols, &theta.as_slice()[r])
}

fn write_chol(theta: &mut Vector, start: usize, l: &Mat, skip_first: bool) {
    let mut k = start;
    for i in 0..l.nrows() {
        for j in 0..=i {
            if skip_first && i == 0 {
                continue;
            }
            theta[k] = if i == j { l[(i, i)].ln() } else { l[(i, j)] };
            k += 1;
        }
    }
}

fn read_chol(theta: &Vector, start: usize, n: usize, skip_first: bool) -> Mat {
    let mut l = Mat::zeros(n, n);
    let mut k = start;
    for i in 0..n {
        for j in 0..=i {
            if skip_first && i == 0 {
                l[(0, 0)] = 1.0;
                continue;
            }
            l[(i, j)] = if i == j { theta[k].exp() } else { theta[k] };
            k += 1;
        }
    }
    l
}

/// Cross-product moments of `y_t` and `x_t = (y_{t-1}; …; y_{t-p})` over the effective
/// sample `t = start..T` (0-based).
///
/// Residual moments are expanded around the least-squares fit `A0`, using the exact
/// residual moments `Σ e0 e0ᵀ` and `Σ e0 xᵀ` of `e0_t = y_t - A0 x_t`. This avoids the
/// cancellation of `Syy - Syx Aᵀ - …` when the residuals are tiny next to the data.
#[derive(Debug, Clone)]
pub struct SampleMoments {
    n1: usize,
    n2: usize,
    p: usize,
    n_obs: usize,
    syy: Mat,
    syx: Mat,
    sxx: Mat,
    a0: Mat,
    see0: Mat,
    sex0: Mat,
}

impl SampleMoments {
    /// Conditions on the first `p` observations.
    pub fn new(series: &MatrixSeries, p: usize) -> Result<Self> {
        Self::with_start(series, p, p)
    }

    /// Conditions on the first `start >= p` observations, so models with different
    /// lag orders can share an effective sample.
    pub fn with_start(series: &MatrixSeries, p: usize, start: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidDims("lag order must be at least 1".into()));
        }
        if start < p {
            return Err(Error::InvalidArgument(format!("sample start {start} is below the lag order {p}")));
        }
        if series.len() <= start {
            return Err(Error::TooFewObservations(format!(
                "{} observations cannot condition on the first {start}",
                series.len()
            )));
        }
        let (n1, n2) = (series.n1(), series.n2());
        let n = n1 * n2;
        let vs: Vec<Vector> = (0..series.len()).map(|t| series.vec_at(t)).collect();
        let mut syy = Mat::zeros(n, n);
        let mut syx = Mat::zeros(n, n * p);
        let mut sxx = Mat::zeros(n * p, n * p);
        let mut x = Vector::zeros(n * p);
        // Sequential accumulation in t order keeps the result reproducible.
        for t in start..series.len() {
            for j in 0..p {
                x.rows_mut(j * n, n).copy_from(&vs[t - 1 - j]);
            }
            let y = &vs[t];
            syy.ger(1.0, y, y, 1.0);
            syx.ger(1.0, y, &x, 1.0);
            sxx.ger(1.0, &x, &x, 1.0);
        }
        let mut m = Self {
            n1,
            n2,
            p,
            n_obs: series.len() - start,
            syy,
            syx,
            sxx,
            a0: Mat::zeros(n, n * p),
            see0: Mat::zeros(n, n),
            sex0: Mat::zeros(n, n * p),
        };
        m.a0 = m.ols().unwrap_or_else(|_| Mat::zeros(n, n * p));
        for t in start..series.len() {
            for j in 0..p {
                x.rows_mut(j * n, n).copy_from(&vs[t - 1 - j]);
            }
            let e = &vs[t] - &m.a0 * &x;
            m.see0.ger(1.0, &e, &e, 1.0);
            m.sex0.ger(1.0, &e, &x, 1.0);
        }
        Ok(m)
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn lags(&self) -> usize {
        self.p
    }

    pub fn syy(&self) -> &Mat {
        &self.syy
    }

    pub fn syx(&self) -> &Mat {
        &self.syx
    }

    pub fn sxx(&self) -> &Mat {
        &self.sxx
    }

    /// `Σ_t e_t e_tᵀ` for `e_t = y_t - A x_t`, `A = [A_1 … A_p]`.
    pub fn residual_moment(&self, a: &Mat) -> Mat {
        let d = a - &self.a0;
        let cross = &self.sex0 * d.transpose();
        symmetrize(&(&self.see0 - &cross - cross.transpose() + &d * &self.sxx * d.transpose()))
    }

    /// `Σ_t e_t x_tᵀ` for `e_t = y_t - A x_t`.
    pub fn residual_cross(&self, a: &Mat) -> Mat {
        &self.sex0 - (a - &self.a0) * &self.sxx
    }

    /// Unrestricted least-squares coefficient `Syx Sxx⁻¹`.
    pub fn ols(&self) -> Result<Mat> {
        let sxx = &self.sxx;
        let reg = sxx.trace() / sxx.nrows() as f64 * 1e-12;
        let mut m = sxx.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += reg;
        }
        let chol = Cholesky::new(m).ok_or(Error::NotPositiveDefinite("lagged data moment"))?;
        Ok(chol.solve(&self.syx.transpose()).transpose())
    }
}

/// Log-likelihood value with optional gradient and per-observation contributions.
#[derive(Debug, Clone)]
pub struct LogLikValue {
    pub value: f64,
    pub gradient: Option<Vector>,
    pub per_observation: Option<Vector>,
}

/// The log-likelihood of one dataset at fixed `(r1, r2, p)`, as a function of θ.
#[derive(Debug, Clone)]
pub struct Likelihood {
    layout: ThetaLayout,
    moments: SampleMoments,
}

struct Evaluated {
    value: f64,
    a: Mat,
    s: Mat,
    l1: Mat,
    l2: Mat,
    s1inv: Mat,
    s2inv: Mat,
    u1: Mat,
    u2: Mat,
    u3: Vec<Mat>,
    u4: Vec<Mat>,
}

impl Likelihood {
    pub fn new(series: &MatrixSeries, dims: Dims) -> Result<Self> {
        Self::with_start(series, dims, dims.p)
    }

    /// Conditions on the first `start >= p` observations.
    pub fn with_start(series: &MatrixSeries, dims: Dims, start: usize) -> Result<Self> {
        dims.validate()?;
        if (series.n1(), series.n2()) != (dims.n1, dims.n2) {
            return Err(shape_err(
                "Likelihood::new",
                format!("{}x{} series", dims.n1, dims.n2),
                format!("{}x{}", series.n1(), series.n2()),
            ));
        }
        Ok(Self {
            layout: ThetaLayout::new(dims)?,
            moments: SampleMoments::with_start(series, dims.p, start)?,
        })
    }

    /// Reuses precomputed moments; their lag order must match `dims.p`.
    pub fn from_moments(moments: SampleMoments, dims: Dims) -> Result<Self> {
        if moments.p != dims.p || (moments.n1, moments.n2) != (dims.n1, dims.n2) {
            return Err(shape_err("Likelihood::from_moments", format!("{dims:?}"), format!("p = {}", moments.p)));
        }
        Ok(Self { layout: ThetaLayout::new(dims)?, moments })
    }

    pub fn layout(&self) -> &ThetaLayout {
        &self.layout
    }

    pub fn dims(&self) -> Dims {
        self.layout.dims
    }

    pub fn moments(&self) -> &SampleMoments {
        &self.moments
    }

    /// Effective sample size `n`.
    pub fn n_obs(&self) -> usize {
        self.moments.n_obs
    }

    fn evaluate(&self, theta: &Vector) -> Result<Evaluated> {
        let params = self.layout.unpack(theta)?;
        let (l1, l2) = self.layout.cholesky_factors(theta)?;
        let Dims { n1, n2, p, .. } = self.layout.dims;
        let n = n1 * n2;
        let u1 = params.u1();
        let u2 = params.u2();
        let coefs = coefficient_matrices(&u1, &u2, &params.u3, &params.u4);
        let mut a = Mat::zeros(n, n * p);
        for (j, aj) in coefs.iter().enumerate() {
            a.view_mut((0, j * n), (n, n)).copy_from(aj);
        }
        let s = self.moments.residual_moment(&a);
        let l1inv = l1
            .solve_lower_triangular(&Mat::identity(n1, n1))
            .ok_or(Error::NotPositiveDefinite("sigma1"))?;
        let l2inv = l2
            .solve_lower_triangular(&Mat::identity(n2, n2))
            .ok_or(Error::NotPositiveDefinite("sigma2"))?;
        // Whitened residual moment: (L2⁻¹ ⊗ L1⁻¹) S (L2⁻¹ ⊗ L1⁻¹)ᵀ.
        let w = kron(&l2inv, &l1inv);
        let q = (&w * &s * w.transpose()).trace();
        let logdet1: f64 = 2.0 * (0..n1).map(|i| l1[(i, i)].ln()).sum::<f64>();
        let logdet2: f64 = 2.0 * (0..n2).map(|i| l2[(i, i)].ln()).sum::<f64>();
        let nobs = self.moments.n_obs as f64;
        let value = -0.5 * nobs * (n2 as f64 * logdet1 + n1 as f64 * logdet2) - 0.5 * q;
        if !value.is_finite() {
            return Err(Error::NonFinite("log-likelihood"));
        }
        Ok(Evaluated {
            value,
            a,
            s,
            s1inv: l1inv.transpose() * &l1inv,
            s2inv: l2inv.transpose() * &l2inv,
            l1,
            l2,
            u1,
            u2,
            u3: params.u3,
            u4: params.u4,
        })
    }

    pub fn value(&self, theta: &Vector) -> Result<f64> {
        Ok(self.evaluate(theta)?.value)
    }

    /// Value at a parameter set rather than at a θ vector.
    pub fn value_at(&self, params: &PseudoStructParams) -> Result<f64> {
        self.value(&self.layout.pack(params)?)
    }

    pub fn loglik(&self, theta: &Vector) -> Result<LogLikValue> {
        let (value, g) = self.value_and_gradient(theta)?;
        Ok(LogLikValue { value, gradient: Some(g), per_observation: None })
    }

    /// Value and analytic gradient with respect to θ.
    pub fn value_and_gradient(&self, theta: &Vector) -> Result<(f64, Vector)> {
        let ev = self.evaluate(theta)?;
        let Dims { n1, n2, r1, r2, p } = self.layout.dims;
        let n = n1 * n2;
        let nobs = self.moments.n_obs as f64;
        let k = kron(&ev.s2inv, &ev.s1inv);
        let gfull = &k * self.moments.residual_cross(&ev.a);
        let mut grad = Vector::zeros(self.layout.len());

        let mut du1 = Mat::zeros(n1, r1);
        let mut du2 = Mat::zeros(n2, r2);
        for j in 0..p {
            let gj = gfull.columns(j * n, n);
            let c = &ev.u1 * ev.u3[j].transpose();
            let b = &ev.u2 * ev.u4[j].transpose();
            let mut gc = Mat::zeros(n1, n1);
            let mut gb = Mat::zeros(n2, n2);
            for bb in 0..n2 {
                for aa in 0..n2 {
                    let blk = gj.view((aa * n1, bb * n1), (n1, n1));
                    gc.zip_apply(&blk, |acc, x| *acc += x * b[(aa, bb)]);
                    gb[(aa, bb)] = blk.dot(&c);
                }
            }
            du1 += &gc * &ev.u3[j];
            du2 += &gb * &ev.u4[j];
            write_row_major(&mut grad, self.layout.u3_range(j), &(gc.transpose() * &ev.u1));
            write_row_major(&mut grad, self.layout.u4_range(j), &(gb.transpose() * &ev.u2));
        }
        let ddelta = -du1.rows(0, n1 - r1).transpose();
        let dgamma = -du2.rows(0, n2 - r2).transpose();
        write_row_major(&mut grad, self.layout.delta_range(), &ddelta);
        write_row_major(&mut grad, self.layout.gamma_range(), &dgamma);

        // W1 = Σ_ab Σ2⁻¹[a,b] S_ab and W2[a,b] = ⟨Σ1⁻¹, S_ab⟩ over N1 × N1 blocks of S.
        let mut w1 = Mat::zeros(n1, n1);
        let mut w2 = Mat::zeros(n2, n2);
        for bb in 0..n2 {
            for aa in 0..n2 {
                let blk = ev.s.view((aa * n1, bb * n1), (n1, n1));
                let c = ev.s2inv[(aa, bb)];
                w1.zip_apply(&blk, |acc, x| *acc += c * x);
                w2[(aa, bb)] = blk.dot(&ev.s1inv);
            }
        }
        let g1 = &ev.s1inv * (-0.5 * nobs * n2 as f64) + &ev.s1inv * &w1 * &ev.s1inv * 0.5;
        let g2 = &ev.s2inv * (-0.5 * nobs * n1 as f64) + &ev.s2inv * &w2 * &ev.s2inv * 0.5;
        let dl1 = symmetrize(&g1) * &ev.l1 * 2.0;
        let dl2 = symmetrize(&g2) * &ev.l2 * 2.0;
        write_chol_grad(&mut grad, self.layout.sigma1.start, &dl1, &ev.l1, true);
        write_chol_grad(&mut grad, self.layout.sigma2.start, &dl2, &ev.l2, false);

        if grad.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
        Ok((ev.value, grad))
    }

    pub fn gradient(&self, theta: &Vector) -> Result<Vector> {
        Ok(self.value_and_gradient(theta)?.1)
    }

    /// Central-difference gradient with step `ε^{1/3} (1 + |θ_i|)`.
    pub fn fd_gradient(&self, theta: &Vector) -> Result<Vector> {
        let h0 = f64::EPSILON.cbrt();
        let mut g = Vector::zeros(theta.len());
        let mut work = theta.clone();
        for i in 0..theta.len() {
            let h = h0 * (1.0 + theta[i].abs());
            work[i] = theta[i] + h;
            let fp = self.value(&work)?;
            work[i] = theta[i] - h;
            let fm = self.value(&work)?;
            work[i] = theta[i];
            g[i] = (fp - fm) / (2.0 * h);
        }
        Ok(g)
    }

    /// Negative Hessian by central differences of the analytic gradient, symmetrized.
    pub fn observed_information(&self, theta: &Vector) -> Result<Mat> {
        let d = theta.len();
        let h0 = f64::EPSILON.cbrt();
        let mut h = Mat::zeros(d, d);
        let mut work = theta.clone();
        for i in 0..d {
            let step = h0 * (1.0 + theta[i].abs());
            work[i] = theta[i] + step;
            let gp = self.gradient(&work)?;
            work[i] = theta[i] - step;
            let gm = self.gradient(&work)?;
            work[i] = theta[i];
            h.set_column(i, &((gp - gm) / (2.0 * step)));
        }
        let info = -symmetrize(&h);
        if info.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("observed information"));
        }
        Ok(info)
    }
}

fn write_chol_grad(grad: &mut Vector, start: usize, dl: &Mat, l: &Mat, skip_first: bool) {
    let mut k = start;
    for i in 0..l.nrows() {
        for j in 0..=i {
            if skip_first && i == 0 {
                continue;
            }
            grad[k] = if i == j { dl[(i, i)] * l[(i, i)] } else { dl[(i, j)] };
            k += 1;
        }
    }
}

fn check_series(series: &MatrixSeries, d: &Dims, start: usize) -> Result<()> {
    if (series.n1(), series.n2()) != (d.n1, d.n2) {
        return Err(shape_err(
            "loglik",
            format!("{}x{} series", d.n1, d.n2),
            format!("{}x{}", series.n1(), series.n2()),
        ));
    }
    if start < d.p || series.len() <= start {
        return Err(Error::TooFewObservations(format!(
            "{} observations with {} lags and sample start {start}",
            series.len(),
            d.p
        )));
    }
    Ok(())
}

/// Log-likelihood from per-observation reduced-form residuals
/// `e_t = y_t - Σ_j A_j y_{t-j}`, `t = start..T`. Returns the per-observation terms.
pub fn loglik_direct(series: &MatrixSeries, params: &PseudoStructParams, start: usize) -> Result<LogLikValue> {
    params.validate()?;
    let d = params.dims();
    check_series(series, &d, start)?;
    let coefs = params.coefficients();
    let cov = kron(&params.sigma2, &params.sigma1);
    let chol = Cholesky::new(cov).ok_or(Error::NotPositiveDefinite("sigma2 ⊗ sigma1"))?;
    let logdet1 = Cholesky::new(params.sigma1.clone()).map(|c| c.ln_determinant()).unwrap_or(f64::NAN);
    let logdet2 = Cholesky::new(params.sigma2.clone()).map(|c| c.ln_determinant()).unwrap_or(f64::NAN);
    let per_t_logdet = 0.5 * (d.n2 as f64 * logdet1 + d.n1 as f64 * logdet2);
    let mut terms = Vec::with_capacity(series.len() - start);
    for t in start..series.len() {
        let mut e = series.vec_at(t);
        for (j, a) in coefs.iter().enumerate() {
            e -= a * series.vec_at(t - 1 - j);
        }
        let q = e.dot(&chol.solve(&e));
        terms.push(-per_t_logdet - 0.5 * q);
    }
    let terms = Vector::from_vec(terms);
    Ok(LogLikValue { value: terms.sum(), gradient: None, per_observation: Some(terms) })
}

/// Log-likelihood computed literally from the pseudo-structural system: residuals
/// `Ω vecb(Y_t) - Σ_j Π_j vec(Y_{t-j})` with covariance `Ω P (Σ2 ⊗ Σ1) Pᵀ Ωᵀ`, and the
/// `log|Ω|` term omitted.
pub fn loglik_structural(series: &MatrixSeries, params: &PseudoStructParams, start: usize) -> Result<LogLikValue> {
    params.validate()?;
    let d = params.dims();
    check_series(series, &d, start)?;
    let s = params.structural_matrices()?;
    let perm = vecb_permutation(d.n1, d.n2, d.r1, d.r2)?.matrix();
    let op = &s.omega * &perm;
    let cov = &op * kron(&params.sigma2, &params.sigma1) * op.transpose();
    let chol = Cholesky::new(symmetrize(&cov)).ok_or(Error::NotPositiveDefinite("structural covariance"))?;
    let logdet1 = Cholesky::new(params.sigma1.clone()).map(|c| c.ln_determinant()).unwrap_or(f64::NAN);
    let logdet2 = Cholesky::new(params.sigma2.clone()).map(|c| c.ln_determinant()).unwrap_or(f64::NAN);
    let per_t_logdet = 0.5 * (d.n2 as f64 * logdet1 + d.n1 as f64 * logdet2);
    let mut terms = Vec::with_capacity(series.len() - start);
    for t in start..series.len() {
        let mut r = &s.omega * vecb(series.get(t), d.r1, d.r2)?;
        for (j, pi) in s.pi.iter().enumerate() {
            r -= pi * vec(series.get(t - 1 - j));
        }
        terms.push(-per_t_logdet - 0.5 * r.dot(&chol.solve(&r)));
    }
    let terms = Vector::from_vec(terms);
    Ok(LogLikValue { value: terms.sum(), gradient: None, per_observation: Some(terms) })
}

/// Relative saddle threshold on the gauge-projected information.
pub const SADDLE_TOL: f64 = 1e-6;
/// Relative eigenvalue cutoff below which the projected information counts as singular.
pub const SINGULAR_TOL: f64 = 1e-10;
/// A coordinate is unavailable when a singular direction has a component above this on it.
/// Finite-difference noise in the Hessian tilts eigenvectors by far less.
pub const ESTIMABILITY_TOL: f64 = 1e-3;

/// The observed information after removing the lag-factor gauge directions.
#[derive(Debug, Clone)]
pub struct InformationSummary {
    /// Symmetrized negative Hessian in θ coordinates.
    pub info: Mat,
    /// Orthonormal basis of the complement of the gauge directions.
    pub basis: Mat,
    /// `basisᵀ · info · basis` before any projection.
    pub projected: Mat,
    pub min_eig: f64,
    pub norm: f64,
    pub saddle: bool,
    /// Covariance of θ restricted to the identified directions. Coordinates that
    /// depend on a singular direction are NaN.
    pub covariance: Mat,
}

/// Projects out the gauge, checks for saddle points, clamps tiny negative eigenvalues
/// and inverts. `gauge` holds one direction per column.
pub fn analyze_information(info: &Mat, gauge: &Mat) -> InformationSummary {
    let d = info.nrows();
    let basis = if gauge.ncols() == 0 || gauge.norm() == 0.0 {
        Mat::identity(d, d)
    } else {
        null_space_basis(gauge, Some(1e-12))
    };
    let projected = symmetrize(&(basis.transpose() * info * &basis));
    let min_eig = min_eigenvalue(&projected);
    let norm = sym_norm2(&projected);
    let saddle = min_eig < -SADDLE_TOL * norm;
    let psd = nearest_psd(&projected);
    let inner = match Cholesky::new(psd.clone()) {
        Some(c) if min_eigenvalue(&psd) > SINGULAR_TOL * norm => Some(c.inverse()),
        _ => None,
    };
    let covariance = match inner {
        Some(inv) => symmetrize(&(&basis * inv * basis.transpose())),
        None => pseudo_inverse_covariance(&psd, &basis, norm),
    };
    InformationSummary { info: info.clone(), basis, projected, min_eig, norm, saddle, covariance }
}

fn pseudo_inverse_covariance(psd: &Mat, basis: &Mat, norm: f64) -> Mat {
    let eig = SymmetricEigen::new(psd.clone());
    let k = psd.nrows();
    let mut inv = Mat::zeros(k, k);
    let mut affected = vec![false; basis.nrows()];
    for i in 0..k {
        let l = eig.eigenvalues[i];
        let v = eig.eigenvectors.column(i);
        if l > SINGULAR_TOL * norm.max(f64::MIN_POSITIVE) {
            inv += (v * v.transpose()) / l;
        } else {
            let dir = basis * v;
            for (j, x) in dir.iter().enumerate() {
                if x.abs() > ESTIMABILITY_TOL {
                    affected[j] = true;
                }
            }
        }
    }
    let mut cov = symmetrize(&(basis * inv * basis.transpose()));
    for (j, &bad) in affected.iter().enumerate() {
        if bad {
            cov.row_mut(j).fill(f64::NAN);
            cov.column_mut(j).fill(f64::NAN);
        }
    }
    cov
}
