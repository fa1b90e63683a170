//! RRMAR and pseudo-structural parameterizations.
//!
//! The reduced form is `Y_t = Σ_j U1 U3_jᵀ Y_{t-j} U4_j U2ᵀ + E_t` with
//! `vec(E_t) ~ N(0, Σ2 ⊗ Σ1)`. The pseudo-structural form normalizes the factors to
//! `U1 = [-δ*ᵀ; I_r1]` and `U2 = [-γ*ᵀ; I_r2]`, so that `δ = [I; δ*]` and `γ = [I; γ*]`
//! annihilate the serially correlated part: `δᵀ U1 = 0`, `γᵀ U2 = 0`.

use nalgebra::LU;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::linalg::{
    cholesky_lower, ensure_finite, kron, numerical_rank, serde_mat, spectral_radius, vec,
    vecb_permutation, Mat, Vector,
};

/// Matrix dimensions, ranks and lag order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub n1: usize,
    pub n2: usize,
    pub r1: usize,
    pub r2: usize,
    pub p: usize,
}

impl Dims {
    pub fn new(n1: usize, n2: usize, r1: usize, r2: usize, p: usize) -> Result<Self> {
        let d = Self { n1, n2, r1, r2, p };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n1 == 0 || self.n2 == 0 {
            return Err(Error::InvalidDims(format!(
                "matrix dimensions must be positive, got {}x{}",
                self.n1, self.n2
            )));
        }
        if self.r1 == 0 || self.r1 > self.n1 {
            return Err(Error::RankOutOfRange { dim: 1, rank: self.r1, max: self.n1 });
        }
        if self.r2 == 0 || self.r2 > self.n2 {
            return Err(Error::RankOutOfRange { dim: 2, rank: self.r2, max: self.n2 });
        }
        if self.p == 0 {
            return Err(Error::InvalidDims("lag order must be at least 1".into()));
        }
        Ok(())
    }

    /// `N1 · N2`.
    pub fn n(&self) -> usize {
        self.n1 * self.n2
    }

    /// Free coefficient count `r1 N1 (1 + p) - r1² + r2 N2 (1 + p) - r2²`.
    pub fn phi(&self) -> usize {
        let (n1, n2, r1, r2, p) = (self.n1, self.n2, self.r1, self.r2, self.p);
        r1 * n1 * (1 + p) - r1 * r1 + r2 * n2 * (1 + p) - r2 * r2
    }

    pub fn with_ranks(self, r1: usize, r2: usize) -> Self {
        Self { r1, r2, ..self }
    }

    pub fn with_lags(self, p: usize) -> Self {
        Self { p, ..self }
    }
}

/// A length-T sequence of `N1 × N2` observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixSeries {
    n1: usize,
    n2: usize,
    #[serde(with = "serde_mat::vec")]
    data: Vec<Mat>,
}

impl MatrixSeries {
    pub fn new(data: Vec<Mat>) -> Result<Self> {
        let first = data
            .first()
            .ok_or_else(|| Error::TooFewObservations("series is empty".into()))?;
        let (n1, n2) = first.shape();
        if n1 == 0 || n2 == 0 {
            return Err(Error::InvalidDims("observations must be non-empty matrices".into()));
        }
        for (t, y) in data.iter().enumerate() {
            if y.shape() != (n1, n2) {
                return Err(Error::Data(format!(
                    "observation {t} is {}x{}, expected {n1}x{n2}",
                    y.nrows(),
                    y.ncols()
                )));
            }
            ensure_finite(y, "series observation")?;
        }
        Ok(Self { n1, n2, data })
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, t: usize) -> &Mat {
        &self.data[t]
    }

    pub fn observations(&self) -> &[Mat] {
        &self.data
    }

    pub fn into_observations(self) -> Vec<Mat> {
        self.data
    }

    /// `vec(Y_t)`.
    pub fn vec_at(&self, t: usize) -> Vector {
        vec(&self.data[t])
    }

    /// Concatenation of two series with equal dimensions.
    pub fn concat(&self, other: &MatrixSeries) -> Result<Self> {
        if (self.n1, self.n2) != (other.n1, other.n2) {
            return Err(shape_err(
                "MatrixSeries::concat",
                format!("{}x{}", self.n1, self.n2),
                format!("{}x{}", other.n1, other.n2),
            ));
        }
        let mut data = self.data.clone();
        data.extend(other.data.iter().cloned());
        Ok(Self { n1: self.n1, n2: self.n2, data })
    }
}

/// Reduced-form RRMAR parameters with a single `(U1, U2)` shared by every lag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RRMarParams {
    #[serde(with = "serde_mat")]
    pub u1: Mat,
    #[serde(with = "serde_mat")]
    pub u2: Mat,
    #[serde(with = "serde_mat::vec")]
    pub u3: Vec<Mat>,
    #[serde(with = "serde_mat::vec")]
    pub u4: Vec<Mat>,
    #[serde(with = "serde_mat")]
    pub sigma1: Mat,
    #[serde(with = "serde_mat")]
    pub sigma2: Mat,
}

/// Pseudo-structural parameters: `δ*` is `r1 × (N1 - r1)`, `γ*` is `r2 × (N2 - r2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoStructParams {
    #[serde(with = "serde_mat")]
    pub delta_star: Mat,
    #[serde(with = "serde_mat")]
    pub gamma_star: Mat,
    #[serde(with = "serde_mat::vec")]
    pub u3: Vec<Mat>,
    #[serde(with = "serde_mat::vec")]
    pub u4: Vec<Mat>,
    #[serde(with = "serde_mat")]
    pub sigma1: Mat,
    #[serde(with = "serde_mat")]
    pub sigma2: Mat,
}

fn check_shape(m: &Mat, rows: usize, cols: usize, context: &'static str) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(shape_err(
            context,
            format!("{rows}x{cols}"),
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}

fn check_lag_factors(u3: &[Mat], u4: &[Mat], d: &Dims) -> Result<()> {
    if u3.len() != d.p || u4.len() != d.p {
        return Err(shape_err("lag factors", format!("{} lags", d.p), format!("{} and {}", u3.len(), u4.len())));
    }
    for (a, b) in u3.iter().zip(u4) {
        check_shape(a, d.n1, d.r1, "u3")?;
        check_shape(b, d.n2, d.r2, "u4")?;
        ensure_finite(a, "u3")?;
        ensure_finite(b, "u4")?;
    }
    Ok(())
}

fn check_covariances(sigma1: &Mat, sigma2: &Mat, d: &Dims) -> Result<()> {
    check_shape(sigma1, d.n1, d.n1, "sigma1")?;
    check_shape(sigma2, d.n2, d.n2, "sigma2")?;
    cholesky_lower(sigma1, "sigma1")?;
    cholesky_lower(sigma2, "sigma2")?;
    Ok(())
}

/// `C_j = U1 U3_jᵀ`, `B_j = U2 U4_jᵀ` and `A_j = B_j ⊗ C_j`.
pub fn coefficient_matrices(u1: &Mat, u2: &Mat, u3: &[Mat], u4: &[Mat]) -> Vec<Mat> {
    u3.iter()
        .zip(u4)
        .map(|(a, b)| kron(&(u2 * b.transpose()), &(u1 * a.transpose())))
        .collect()
}

/// Block companion matrix of `y_t = Σ_j A_j y_{t-j}`.
pub fn companion_matrix(coefs: &[Mat]) -> Mat {
    let p = coefs.len();
    if p == 0 {
        return Mat::zeros(0, 0);
    }
    let n = coefs[0].nrows();
    let mut c = Mat::zeros(n * p, n * p);
    for (j, a) in coefs.iter().enumerate() {
        c.view_mut((0, j * n), (n, n)).copy_from(a);
    }
    for j in 1..p {
        c.view_mut((j * n, (j - 1) * n), (n, n)).fill_with_identity();
    }
    c
}

/// `U1 = [-δ*ᵀ; I_r1]`.
pub fn normalized_factor(star: &Mat) -> Mat {
    let (r, k) = star.shape();
    let mut u = Mat::zeros(k + r, r);
    u.view_mut((0, 0), (k, r)).copy_from(&(-star.transpose()));
    u.view_mut((k, 0), (r, r)).fill_with_identity();
    u
}

/// `δ = [I; δ*]`, the annihilating basis matching [`normalized_factor`].
pub fn annihilator(star: &Mat) -> Mat {
    let (r, k) = star.shape();
    let mut d = Mat::zeros(k + r, k);
    d.view_mut((0, 0), (k, k)).fill_with_identity();
    d.view_mut((k, 0), (r, k)).copy_from(star);
    d
}

impl RRMarParams {
    pub fn dims(&self) -> Dims {
        Dims {
            n1: self.u1.nrows(),
            n2: self.u2.nrows(),
            r1: self.u1.ncols(),
            r2: self.u2.ncols(),
            p: self.u3.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dims();
        d.validate()?;
        ensure_finite(&self.u1, "u1")?;
        ensure_finite(&self.u2, "u2")?;
        check_lag_factors(&self.u3, &self.u4, &d)?;
        check_covariances(&self.sigma1, &self.sigma2, &d)
    }

    /// `A_j = (U2 ⊗ U1)(U4_j ⊗ U3_j)ᵀ` for each lag.
    pub fn coefficients(&self) -> Vec<Mat> {
        coefficient_matrices(&self.u1, &self.u2, &self.u3, &self.u4)
    }

    pub fn companion(&self) -> Mat {
        companion_matrix(&self.coefficients())
    }

    pub fn spectral_radius(&self) -> Result<f64> {
        spectral_radius(&self.companion())
    }
}

impl PseudoStructParams {
    pub fn dims(&self) -> Dims {
        Dims {
            n1: self.delta_star.nrows() + self.delta_star.ncols(),
            n2: self.gamma_star.nrows() + self.gamma_star.ncols(),
            r1: self.delta_star.nrows(),
            r2: self.gamma_star.nrows(),
            p: self.u3.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dims();
        d.validate()?;
        ensure_finite(&self.delta_star, "delta_star")?;
        ensure_finite(&self.gamma_star, "gamma_star")?;
        check_lag_factors(&self.u3, &self.u4, &d)?;
        check_covariances(&self.sigma1, &self.sigma2, &d)
    }

    /// `U1* = [-δ*ᵀ; I_r1]`.
    pub fn u1(&self) -> Mat {
        normalized_factor(&self.delta_star)
    }

    /// `U2* = [-γ*ᵀ; I_r2]`.
    pub fn u2(&self) -> Mat {
        normalized_factor(&self.gamma_star)
    }

    /// `δ = [I_{N1-r1}; δ*]`.
    pub fn delta(&self) -> Mat {
        annihilator(&self.delta_star)
    }

    /// `γ = [I_{N2-r2}; γ*]`.
    pub fn gamma(&self) -> Mat {
        annihilator(&self.gamma_star)
    }

    pub fn coefficients(&self) -> Vec<Mat> {
        coefficient_matrices(&self.u1(), &self.u2(), &self.u3, &self.u4)
    }

    pub fn companion(&self) -> Mat {
        companion_matrix(&self.coefficients())
    }

    pub fn spectral_radius(&self) -> Result<f64> {
        spectral_radius(&self.companion())
    }

    /// Number of stored coefficient entries (δ*, γ*, U3_j, U4_j); equals [`Dims::phi`].
    pub fn free_parameter_count(&self) -> usize {
        self.delta_star.len()
            + self.gamma_star.len()
            + self.u3.iter().map(|m| m.len()).sum::<usize>()
            + self.u4.iter().map(|m| m.len()).sum::<usize>()
    }

    /// Ω and Π_j of the pseudo-structural system.
    pub fn structural_matrices(&self) -> Result<StructuralMatrices> {
        Ok(StructuralMatrices {
            omega: build_omega(&self.delta_star, &self.gamma_star)?,
            pi: build_pi(&self.u3, &self.u4)?,
        })
    }

    /// Rescales each lag pair to `(U3_j / c, U4_j · c)` so that both factors have the
    /// same Frobenius norm and the largest-magnitude entry of `U3_j` is positive.
    /// The likelihood is unchanged.
    pub fn canonicalize_lags(&mut self) {
        for (a, b) in self.u3.iter_mut().zip(self.u4.iter_mut()) {
            let (na, nb) = (a.norm(), b.norm());
            if !(na > 0.0 && nb > 0.0 && na.is_finite() && nb.is_finite()) {
                continue;
            }
            let lead = a.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            let c = (na / nb).sqrt() * lead.signum();
            *a /= c;
            *b *= c;
        }
    }
}

/// Ω (vecb ordering, unit upper-triangular) and the lag matrices Π_j.
#[derive(Debug, Clone)]
pub struct StructuralMatrices {
    pub omega: Mat,
    pub pi: Vec<Mat>,
}

/// Index offsets of the four vecb blocks `(Y11, Y21, Y12, Y22)`.
fn vecb_offsets(n1: usize, n2: usize, r1: usize, r2: usize) -> [usize; 4] {
    let (a, b) = (n1 - r1, n2 - r2);
    let o1 = a * b;
    let o2 = o1 + r1 * b;
    let o3 = o2 + a * r2;
    [0, o1, o2, o3]
}

fn place(m: &mut Mat, r: usize, c: usize, block: &Mat) {
    if block.nrows() > 0 && block.ncols() > 0 {
        m.view_mut((r, c), block.shape()).copy_from(block);
    }
}

fn omega_blocks(delta_star: &Mat, gamma_star: &Mat) -> Result<(Mat, [usize; 4], [Mat; 5])> {
    ensure_finite(delta_star, "delta_star")?;
    ensure_finite(gamma_star, "gamma_star")?;
    let (r1, a) = delta_star.shape();
    let (r2, b) = gamma_star.shape();
    if r1 == 0 || r2 == 0 {
        return Err(Error::InvalidDims("ranks must be at least 1".into()));
    }
    let (n1, n2) = (a + r1, b + r2);
    let n = n1 * n2;
    let dt = delta_star.transpose();
    let gt = gamma_star.transpose();
    let blocks = [
        kron(&Mat::identity(b, b), &dt),  // Y21 in the Y11 equation
        kron(&gt, &Mat::identity(a, a)),  // Y12 in the Y11 equation
        kron(&gt, &dt),                   // Y22 in the Y11 equation
        kron(&gt, &Mat::identity(r1, r1)), // Y22 in the Y21 equation
        kron(&Mat::identity(r2, r2), &dt), // Y22 in the Y12 equation
    ];
    Ok((Mat::identity(n, n), vecb_offsets(n1, n2, r1, r2), blocks))
}

/// Ω with equations ordered like the vecb blocks: `δᵀYγ`, the bottom rows of `Yγ`,
/// the right columns of `δᵀY`, and `Y22`. Unit upper-triangular, so `det Ω = 1`.
pub fn build_omega(delta_star: &Mat, gamma_star: &Mat) -> Result<Mat> {
    let (mut om, o, [b12, b13, b14, b24, b34]) = omega_blocks(delta_star, gamma_star)?;
    place(&mut om, o[0], o[1], &b12);
    place(&mut om, o[0], o[2], &b13);
    place(&mut om, o[0], o[3], &b14);
    place(&mut om, o[1], o[3], &b24);
    place(&mut om, o[2], o[3], &b34);
    Ok(om)
}

/// Ω with the block rows in the published display order: the `Y12` equation second
/// and the `Y21` equation third. A block-row permutation of [`build_omega`], so
/// `|det Ω| = 1` but the sign can be negative.
pub fn build_omega_displayed(delta_star: &Mat, gamma_star: &Mat) -> Result<Mat> {
    let vecb_order = build_omega(delta_star, gamma_star)?;
    let (r1, a) = delta_star.shape();
    let (r2, b) = gamma_star.shape();
    let o = vecb_offsets(a + r1, b + r2, r1, r2);
    let n = vecb_order.nrows();
    let (len21, len12) = (o[2] - o[1], o[3] - o[2]);
    let mut out = vecb_order.clone();
    // Y12 equation rows first, then the Y21 equation rows.
    out.rows_mut(o[1], len12).copy_from(&vecb_order.rows(o[2], len12));
    out.rows_mut(o[1] + len12, len21).copy_from(&vecb_order.rows(o[1], len21));
    debug_assert_eq!(out.nrows(), n);
    Ok(out)
}

/// Π_j: zero except for the bottom `r1 r2` rows, which hold `(U4_j ⊗ U3_j)ᵀ`.
/// Rows follow the vecb ordering of Ω, columns the vec ordering of `y_{t-j}`.
pub fn build_pi(u3: &[Mat], u4: &[Mat]) -> Result<Vec<Mat>> {
    if u3.is_empty() || u3.len() != u4.len() {
        return Err(shape_err("build_pi", "matching nonempty lag lists", format!("{} and {}", u3.len(), u4.len())));
    }
    let (n1, r1) = u3[0].shape();
    let (n2, r2) = u4[0].shape();
    let n = n1 * n2;
    u3.iter()
        .zip(u4)
        .map(|(a, b)| {
            check_shape(a, n1, r1, "u3")?;
            check_shape(b, n2, r2, "u4")?;
            let mut pi = Mat::zeros(n, n);
            place(&mut pi, n - r1 * r2, 0, &kron(b, a).transpose());
            Ok(pi)
        })
        .collect()
}

/// Relative conditioning threshold below which a bottom block counts as singular.
const ROTATION_RCOND: f64 = 1e-10;

fn bottom_block_inverse(u: &Mat) -> Option<Mat> {
    let (n, r) = u.shape();
    let bottom = u.rows(n - r, r).into_owned();
    let scale = u.norm().max(f64::MIN_POSITIVE);
    let sv = bottom.singular_values();
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if !(smin / scale > ROTATION_RCOND) {
        return None;
    }
    LU::new(bottom).try_inverse()
}

/// Normalizes a factor to `[-star ᵀ; I]` and returns `(star, Bᵀ)`, where `B` is the
/// bottom block, so lag factors transform as `U3 ↦ U3 Bᵀ`.
fn rotate_factor(u: &Mat, which: &'static str, axis: &'static str) -> Result<(Mat, Mat)> {
    let (n, r) = u.shape();
    let binv = bottom_block_inverse(u).ok_or(Error::NonRotatable { which, which_axis: axis, size: r })?;
    let top = u.rows(0, n - r) * &binv;
    let bt = u.rows(n - r, r).transpose();
    Ok((-top.transpose(), bt))
}

/// Rotates a reduced-form parameter set into pseudo-structural form. The rotation
/// is absorbed into the lag factors so every `A_j` is unchanged.
pub fn rrmar_to_pseudo(params: &RRMarParams) -> Result<PseudoStructParams> {
    params.validate()?;
    let d = params.dims();
    if numerical_rank(&params.u1, None) < d.r1 {
        return Err(Error::RankDeficient("u1"));
    }
    if numerical_rank(&params.u2, None) < d.r2 {
        return Err(Error::RankDeficient("u2"));
    }
    let (delta_star, b1t) = rotate_factor(&params.u1, "u1", "rows")?;
    let (gamma_star, b2t) = rotate_factor(&params.u2, "u2", "columns")?;
    Ok(PseudoStructParams {
        delta_star,
        gamma_star,
        u3: params.u3.iter().map(|a| a * &b1t).collect(),
        u4: params.u4.iter().map(|b| b * &b2t).collect(),
        sigma1: params.sigma1.clone(),
        sigma2: params.sigma2.clone(),
    })
}

/// Inverse of [`rrmar_to_pseudo`] up to rotation: `U1 = [-δ*ᵀ; I]`, `U2 = [-γ*ᵀ; I]`.
pub fn pseudo_to_reduced(params: &PseudoStructParams) -> RRMarParams {
    RRMarParams {
        u1: params.u1(),
        u2: params.u2(),
        u3: params.u3.clone(),
        u4: params.u4.clone(),
        sigma1: params.sigma1.clone(),
        sigma2: params.sigma2.clone(),
    }
}

/// A pseudo-structural parameter set for reordered data `Y' = Y[row_perm, col_perm]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReorderedPseudo {
    pub params: PseudoStructParams,
    /// `row_perm[k]` is the original row placed at position `k`.
    pub row_perm: Vec<usize>,
    pub col_perm: Vec<usize>,
}

impl ReorderedPseudo {
    pub fn is_identity(&self) -> bool {
        self.row_perm.iter().enumerate().all(|(k, &i)| k == i)
            && self.col_perm.iter().enumerate().all(|(k, &i)| k == i)
    }
}

/// Rows picked by partial-pivoting elimination on `u`, moved to the bottom with the
/// remaining rows kept in their original order above them.
fn pivot_ordering(u: &Mat) -> Vec<usize> {
    let (n, r) = u.shape();
    let mut work = u.clone();
    let mut rows: Vec<usize> = (0..n).collect();
    for k in 0..r {
        let piv = (k..n)
            .max_by(|&i, &j| work[(i, k)].abs().total_cmp(&work[(j, k)].abs()))
            .unwrap_or(k);
        work.swap_rows(k, piv);
        rows.swap(k, piv);
        let pv = work[(k, k)];
        if pv == 0.0 {
            continue;
        }
        for i in k + 1..n {
            let f = work[(i, k)] / pv;
            for c in k..r {
                let w = work[(k, c)];
                work[(i, c)] -= f * w;
            }
        }
    }
    let mut chosen: Vec<usize> = rows[..r].to_vec();
    chosen.sort_unstable();
    let mut order: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
    order.extend(chosen);
    order
}

fn permute_rows(m: &Mat, perm: &[usize]) -> Mat {
    Mat::from_fn(perm.len(), m.ncols(), |i, j| m[(perm[i], j)])
}

fn permute_sym(m: &Mat, perm: &[usize]) -> Mat {
    Mat::from_fn(perm.len(), perm.len(), |i, j| m[(perm[i], perm[j])])
}

/// Like [`rrmar_to_pseudo`], but when a bottom block is singular the rows (columns)
/// of the data are reordered so that it is not. The permutations are recorded.
pub fn rrmar_to_pseudo_reordered(params: &RRMarParams) -> Result<ReorderedPseudo> {
    let d = params.dims();
    match rrmar_to_pseudo(params) {
        Ok(p) => {
            return Ok(ReorderedPseudo {
                params: p,
                row_perm: (0..d.n1).collect(),
                col_perm: (0..d.n2).collect(),
            })
        }
        Err(Error::NonRotatable { .. }) => {}
        Err(e) => return Err(e),
    }
    let row_perm = if bottom_block_inverse(&params.u1).is_some() {
        (0..d.n1).collect()
    } else {
        pivot_ordering(&params.u1)
    };
    let col_perm = if bottom_block_inverse(&params.u2).is_some() {
        (0..d.n2).collect()
    } else {
        pivot_ordering(&params.u2)
    };
    let permuted = RRMarParams {
        u1: permute_rows(&params.u1, &row_perm),
        u2: permute_rows(&params.u2, &col_perm),
        u3: params.u3.iter().map(|a| permute_rows(a, &row_perm)).collect(),
        u4: params.u4.iter().map(|b| permute_rows(b, &col_perm)).collect(),
        sigma1: permute_sym(&params.sigma1, &row_perm),
        sigma2: permute_sym(&params.sigma2, &col_perm),
    };
    Ok(ReorderedPseudo { params: rrmar_to_pseudo(&permuted)?, row_perm, col_perm })
}

/// Reorders the rows and columns of every observation: `Y'[k, l] = Y[row_perm[k], col_perm[l]]`.
pub fn reorder_series(series: &MatrixSeries, row_perm: &[usize], col_perm: &[usize]) -> Result<MatrixSeries> {
    if row_perm.len() != series.n1() || col_perm.len() != series.n2() {
        return Err(shape_err(
            "reorder_series",
            format!("{}x{}", series.n1(), series.n2()),
            format!("{}x{}", row_perm.len(), col_perm.len()),
        ));
    }
    MatrixSeries::new(
        series
            .observations()
            .iter()
            .map(|y| Mat::from_fn(row_perm.len(), col_perm.len(), |i, j| y[(row_perm[i], col_perm[j])]))
            .collect(),
    )
}

/// Both sides of the stacked first-order pseudo-structural system
/// `lhs · z_t = rhs · z_{t-1} + lhs · (e_t, 0, …)`, with `z_t = (y_t, …, y_{t-p+1})`,
/// `lhs = diag(Ω P, I, …, I)` and `rhs` the block companion of the Π_j.
/// `lhs⁻¹ rhs` is the reduced-form companion matrix.
pub fn structural_companion(params: &PseudoStructParams) -> Result<(Mat, Mat)> {
    let d = params.dims();
    let n = d.n();
    let s = params.structural_matrices()?;
    let perm = vecb_permutation(d.n1, d.n2, d.r1, d.r2)?;
    let op = &s.omega * perm.matrix();
    let mut lhs = Mat::identity(n * d.p, n * d.p);
    lhs.view_mut((0, 0), (n, n)).copy_from(&op);
    Ok((lhs, companion_matrix(&s.pi)))
}

/// The three annihilated combinations of each observation.
#[derive(Debug, Clone)]
pub struct StructuralResiduals {
    /// `δᵀ Y_t`, `(N1 - r1) × N2`.
    pub row: Vec<Mat>,
    /// `Y_t γ`, `N1 × (N2 - r2)`.
    pub column: Vec<Mat>,
    /// `δᵀ Y_t γ`, `(N1 - r1) × (N2 - r2)`.
    pub joint: Vec<Mat>,
}

pub fn structural_residuals(series: &MatrixSeries, params: &PseudoStructParams) -> Result<StructuralResiduals> {
    let d = params.dims();
    if (series.n1(), series.n2()) != (d.n1, d.n2) {
        return Err(shape_err(
            "structural_residuals",
            format!("{}x{}", d.n1, d.n2),
            format!("{}x{}", series.n1(), series.n2()),
        ));
    }
    let dt = params.delta().transpose();
    let g = params.gamma();
    let mut out = StructuralResiduals { row: vec![], column: vec![], joint: vec![] };
    for y in series.observations() {
        let dy = &dt * y;
        out.joint.push(&dy * &g);
        out.row.push(dy);
        out.column.push(y * &g);
    }
    Ok(out)
}
