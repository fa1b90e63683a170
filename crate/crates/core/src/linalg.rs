//! Dense linear-algebra kernels shared by the model, likelihood and simulation code.
//!
//! Matrices are [`nalgebra::DMatrix<f64>`] and therefore stored column-major;
//! [`vec`] follows the same column-stacking convention, so `vec(m)` is simply
//! the underlying storage of `m`.

use nalgebra::{Cholesky, DMatrix, DVector, Schur, SymmetricEigen, SVD};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

/// Dense real matrix, column-major.
pub type Mat = DMatrix<f64>;
/// Dense real column vector.
pub type Vector = DVector<f64>;

/// Jitter added to the diagonal after clamping eigenvalues in [`nearest_psd`].
pub const PSD_JITTER: f64 = 1e-12;

/// Rejects matrices with NaN or infinite entries.
pub fn ensure_finite(m: &Mat, what: &'static str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Builds a matrix from row-major data, rejecting non-finite entries.
pub fn mat_from_rows(rows: usize, cols: usize, data: &[f64]) -> Result<Mat> {
    if data.len() != rows * cols {
        return Err(shape_err("mat_from_rows", rows * cols, data.len()));
    }
    let m = Mat::from_row_slice(rows, cols, data);
    ensure_finite(&m, "mat_from_rows")?;
    Ok(m)
}

/// Kronecker product: `kron(a, b)[(i*b.rows + k, j*b.cols + l)] = a[(i, j)] * b[(k, l)]`.
pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let (br, bc) = b.shape();
    let mut out = Mat::zeros(a.nrows() * br, a.ncols() * bc);
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let aij = a[(i, j)];
            if aij == 0.0 {
                continue;
            }
            let mut block = out.view_mut((i * br, j * bc), (br, bc));
            block.zip_apply(b, |o, x| *o = aij * x);
        }
    }
    out
}

/// Column-wise vectorization.
pub fn vec(m: &Mat) -> Vector {
    Vector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec`].
pub fn unvec(v: &Vector, rows: usize, cols: usize) -> Result<Mat> {
    if v.len() != rows * cols {
        return Err(shape_err("unvec", rows * cols, v.len()));
    }
    Ok(Mat::from_column_slice(rows, cols, v.as_slice()))
}

fn check_ranks(n1: usize, n2: usize, r1: usize, r2: usize) -> Result<()> {
    if r1 > n1 {
        return Err(Error::RankOutOfRange { dim: 1, rank: r1, max: n1 });
    }
    if r2 > n2 {
        return Err(Error::RankOutOfRange { dim: 2, rank: r2, max: n2 });
    }
    Ok(())
}

/// Index ranges of the four blocks `(Y11, Y21, Y12, Y22)` of the rank partition,
/// as `(row_start, row_len, col_start, col_len)`.
pub(crate) fn block_partition(
    n1: usize,
    n2: usize,
    r1: usize,
    r2: usize,
) -> [(usize, usize, usize, usize); 4] {
    let (a, b) = (n1 - r1, n2 - r2);
    [(0, a, 0, b), (a, r1, 0, b), (0, a, b, r2), (a, r1, b, r2)]
}

/// Block vectorization: `(vec(Y11)ᵀ, vec(Y21)ᵀ, vec(Y12)ᵀ, vec(Y22)ᵀ)ᵀ` where `Y11` is
/// the top-left `(rows - r1) × (cols - r2)` block.
pub fn vecb(m: &Mat, r1: usize, r2: usize) -> Result<Vector> {
    let (n1, n2) = m.shape();
    check_ranks(n1, n2, r1, r2)?;
    let mut out = Vec::with_capacity(n1 * n2);
    for (r0, nr, c0, nc) in block_partition(n1, n2, r1, r2) {
        for j in c0..c0 + nc {
            for i in r0..r0 + nr {
                out.push(m[(i, j)]);
            }
        }
    }
    Ok(Vector::from_vec(out))
}

/// A permutation of `0..n`, stored as `map[k] = source index of target position k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Permutation {
    map: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Self { map: (0..n).collect() }
    }

    /// Validates that `map` is a bijection on `0..map.len()`.
    pub fn from_map(map: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; map.len()];
        for &s in &map {
            if s >= map.len() || std::mem::replace(&mut seen[s], true) {
                return Err(Error::InvalidArgument(format!(
                    "permutation map is not a bijection on 0..{}",
                    map.len()
                )));
            }
        }
        Ok(Self { map })
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn map(&self) -> &[usize] {
        &self.map
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(k, &s)| k == s)
    }

    /// `out[k] = v[map[k]]`.
    pub fn apply(&self, v: &Vector) -> Vector {
        assert_eq!(v.len(), self.map.len(), "permutation length mismatch");
        Vector::from_iterator(v.len(), self.map.iter().map(|&s| v[s]))
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.map.len()];
        for (k, &s) in self.map.iter().enumerate() {
            inv[s] = k;
        }
        Self { map: inv }
    }

    /// `self.then(other).apply(v) == other.apply(&self.apply(v))`.
    pub fn then(&self, other: &Permutation) -> Self {
        assert_eq!(self.len(), other.len(), "permutation length mismatch");
        Self {
            map: other.map.iter().map(|&k| self.map[k]).collect(),
        }
    }

    /// The 0/1 matrix `P` with `P · v == self.apply(v)`.
    pub fn matrix(&self) -> Mat {
        let n = self.map.len();
        let mut p = Mat::zeros(n, n);
        for (k, &s) in self.map.iter().enumerate() {
            p[(k, s)] = 1.0;
        }
        p
    }
}

/// The permutation taking `vec(Y)` to `vecb(Y, r1, r2)` for an `n1 × n2` matrix.
pub fn vecb_permutation(n1: usize, n2: usize, r1: usize, r2: usize) -> Result<Permutation> {
    check_ranks(n1, n2, r1, r2)?;
    let mut map = Vec::with_capacity(n1 * n2);
    for (r0, nr, c0, nc) in block_partition(n1, n2, r1, r2) {
        for j in c0..c0 + nc {
            for i in r0..r0 + nr {
                map.push(j * n1 + i);
            }
        }
    }
    Permutation::from_map(map)
}

/// Default relative threshold for numerical rank: `max(rows, cols) · ε`.
pub fn default_rank_tol(m: &Mat) -> f64 {
    m.nrows().max(m.ncols()) as f64 * f64::EPSILON
}

/// Full left singular basis of `m` with the singular value attached to each column
/// (zero for the columns beyond `min(rows, cols)`), plus `σ_max`.
fn left_singular_system(m: &Mat) -> (Mat, Vec<f64>, f64) {
    let (rows, cols) = m.shape();
    if rows == 0 {
        return (Mat::zeros(0, 0), Vec::new(), 0.0);
    }
    // Padding with zero columns makes the thin U of the SVD a full orthogonal basis.
    let work = if cols < rows {
        let mut padded = Mat::zeros(rows, rows);
        padded.view_mut((0, 0), (rows, cols)).copy_from(m);
        padded
    } else {
        m.clone()
    };
    let svd = SVD::new_unordered(work, true, false);
    let u = svd.u.expect("u requested");
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    (u.columns(0, rows).into_owned(), sv[..rows].to_vec(), smax)
}

fn select_columns(u: &Mat, keep: impl Fn(usize) -> bool) -> Mat {
    let idx: Vec<usize> = (0..u.ncols()).filter(|&j| keep(j)).collect();
    let mut out = Mat::zeros(u.nrows(), idx.len());
    for (k, &j) in idx.iter().enumerate() {
        out.set_column(k, &u.column(j));
    }
    out
}

/// Numerical rank with relative threshold `tol` (default [`default_rank_tol`]).
pub fn numerical_rank(m: &Mat, tol: Option<f64>) -> usize {
    let (_, sv, smax) = left_singular_system(m);
    let thresh = tol.unwrap_or_else(|| default_rank_tol(m)) * smax;
    sv.iter().filter(|&&s| s > thresh).count()
}

/// Orthonormal basis of the left null space of `m` (the null space of `mᵀ`), so that
/// `Bᵀ m ≈ 0`. Singular values at or below `tol · σ_max` count as zero; `tol` defaults
/// to [`default_rank_tol`]. Full row-rank input yields a basis with zero columns.
pub fn null_space_basis(m: &Mat, tol: Option<f64>) -> Mat {
    let (u, sv, smax) = left_singular_system(m);
    let thresh = tol.unwrap_or_else(|| default_rank_tol(m)) * smax;
    select_columns(&u, |j| sv[j] <= thresh)
}

/// Orthonormal basis of the column space of `m`.
pub fn column_space_basis(m: &Mat, tol: Option<f64>) -> Mat {
    let (u, sv, smax) = left_singular_system(m);
    let thresh = tol.unwrap_or_else(|| default_rank_tol(m)) * smax;
    select_columns(&u, |j| sv[j] > thresh)
}

/// Orthonormal bases of the three components of the left null space of `U2 ⊗ U1`.
#[derive(Debug, Clone)]
pub struct KronNullDecomposition {
    /// `N(U2ᵀ) ⊗ C(U1)`, width `(N2 - r2)·r1`.
    pub column_specific: Mat,
    /// `C(U2) ⊗ N(U1ᵀ)`, width `r2·(N1 - r1)`.
    pub row_specific: Mat,
    /// `N(U2ᵀ) ⊗ N(U1ᵀ)`, width `(N2 - r2)·(N1 - r1)`.
    pub joint: Mat,
    /// `C(U2) ⊗ C(U1)`, the complement the three components annihilate.
    pub range: Mat,
}

impl KronNullDecomposition {
    /// The three null components side by side.
    pub fn stacked(&self) -> Mat {
        let n = self.joint.nrows();
        let w = [&self.column_specific, &self.row_specific, &self.joint];
        let total: usize = w.iter().map(|b| b.ncols()).sum();
        let mut out = Mat::zeros(n, total);
        let mut c = 0;
        for b in w {
            out.view_mut((0, c), (n, b.ncols())).copy_from(b);
            c += b.ncols();
        }
        out
    }
}

/// Splits the left null space of `U2 ⊗ U1` into column-specific, row-specific and
/// joint components, each built as a Kronecker product of orthonormal factor bases.
pub fn kron_null_decomposition(u1: &Mat, u2: &Mat) -> Result<KronNullDecomposition> {
    ensure_finite(u1, "u1")?;
    ensure_finite(u2, "u2")?;
    if u1.ncols() > u1.nrows() || numerical_rank(u1, None) < u1.ncols() {
        return Err(Error::RankDeficient("u1"));
    }
    if u2.ncols() > u2.nrows() || numerical_rank(u2, None) < u2.ncols() {
        return Err(Error::RankDeficient("u2"));
    }
    let c1 = column_space_basis(u1, None);
    let n1 = null_space_basis(u1, None);
    let c2 = column_space_basis(u2, None);
    let n2 = null_space_basis(u2, None);
    Ok(KronNullDecomposition {
        column_specific: kron(&n2, &c1),
        row_specific: kron(&c2, &n1),
        joint: kron(&n2, &n1),
        range: kron(&c2, &c1),
    })
}

/// Largest eigenvalue modulus, from the real Schur form.
pub fn spectral_radius(m: &Mat) -> Result<f64> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare("spectral_radius input"));
    }
    ensure_finite(m, "spectral_radius input")?;
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 100_000)
        .ok_or_else(|| Error::InvalidArgument("Schur decomposition did not converge".into()))?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

/// Projection of the symmetric part of `m` onto the positive semidefinite cone in
/// Frobenius norm. Inputs that are already PSD come back as their symmetric part;
/// otherwise negative eigenvalues are clamped to zero and [`PSD_JITTER`] is added to
/// the diagonal.
pub fn nearest_psd(m: &Mat) -> Mat {
    let sym = symmetrize(m);
    let eig = SymmetricEigen::new(sym.clone());
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return sym;
    }
    let clamped = eig.eigenvalues.map(|l| l.max(0.0));
    let v = &eig.eigenvectors;
    let mut out = v * Mat::from_diagonal(&clamped) * v.transpose();
    out = symmetrize(&out);
    for i in 0..out.nrows() {
        out[(i, i)] += PSD_JITTER;
    }
    out
}

/// `(m + mᵀ) / 2`.
pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
pub fn sym_norm2(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .map(|l| l.abs())
        .fold(0.0, f64::max)
}

/// Lower Cholesky factor, or `NotPositiveDefinite(what)`.
pub fn cholesky_lower(m: &Mat, what: &'static str) -> Result<Mat> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare(what));
    }
    ensure_finite(m, what)?;
    Cholesky::new(m.clone())
        .map(|c| c.l())
        .ok_or(Error::NotPositiveDefinite(what))
}

/// Draws `E` with `vec(E) ~ N(vec(mean), Σ2 ⊗ Σ1)` as `mean + L1·Z·L2ᵀ`, `Z` filled
/// column by column with independent standard normals.
pub fn sample_matrix_normal<R: Rng + ?Sized>(
    rng: &mut R,
    mean: &Mat,
    sigma1: &Mat,
    sigma2: &Mat,
) -> Result<Mat> {
    let (n1, n2) = mean.shape();
    if sigma1.shape() != (n1, n1) {
        return Err(shape_err("sample_matrix_normal sigma1", format!("{n1}x{n1}"), format!("{:?}", sigma1.shape())));
    }
    if sigma2.shape() != (n2, n2) {
        return Err(shape_err("sample_matrix_normal sigma2", format!("{n2}x{n2}"), format!("{:?}", sigma2.shape())));
    }
    let l1 = cholesky_lower(sigma1, "sigma1")?;
    let l2 = cholesky_lower(sigma2, "sigma2")?;
    Ok(sample_matrix_normal_factored(rng, mean, &l1, &l2))
}

/// [`sample_matrix_normal`] with precomputed lower Cholesky factors.
pub fn sample_matrix_normal_factored<R: Rng + ?Sized>(
    rng: &mut R,
    mean: &Mat,
    l1: &Mat,
    l2: &Mat,
) -> Mat {
    let (n1, n2) = mean.shape();
    let z = Mat::from_fn(n1, n2, |_, _| rng.sample::<f64, _>(StandardNormal));
    mean + l1 * z * l2.transpose()
}

/// Seed for an independent stream, mixing `base` with stream identifiers through
/// splitmix64 so neighbouring ids give unrelated seeds.
pub fn derive_seed(base: u64, stream: &[u64]) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    stream.iter().fold(splitmix(base), |acc, &s| splitmix(acc ^ splitmix(s)))
}

/// Serde adapter storing a matrix as `{ "rows", "cols", "data" }` with row-major data.
/// Non-finite entries are written as `null` and read back as NaN.
pub mod serde_mat {
    use super::Mat;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Repr {
        rows: usize,
        cols: usize,
        data: Vec<Option<f64>>,
    }

    fn to_repr(m: &Mat) -> Repr {
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let x = m[(i, j)];
                data.push(x.is_finite().then_some(x));
            }
        }
        Repr { rows: m.nrows(), cols: m.ncols(), data }
    }

    fn from_repr<E: serde::de::Error>(r: Repr) -> Result<Mat, E> {
        if r.data.len() != r.rows * r.cols {
            return Err(E::custom(format!(
                "matrix data has {} entries, expected {}x{}",
                r.data.len(),
                r.rows,
                r.cols
            )));
        }
        let vals: Vec<f64> = r.data.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect();
        Ok(Mat::from_row_slice(r.rows, r.cols, &vals))
    }

    pub fn serialize<S: Serializer>(m: &Mat, s: S) -> Result<S::Ok, S::Error> {
        to_repr(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat, D::Error> {
        from_repr(Repr::deserialize(d)?)
    }

    pub mod vec {
        use super::*;

        pub fn serialize<S: Serializer>(ms: &[Mat], s: S) -> Result<S::Ok, S::Error> {
            let reprs: Vec<Repr> = ms.iter().map(to_repr).collect();
            reprs.serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Mat>, D::Error> {
            Vec::<Repr>::deserialize(d)?.into_iter().map(from_repr).collect()
        }
    }
}

/// Serde adapter storing a vector as a plain array, non-finite entries as `null`.
pub mod serde_vector {
    use super::Vector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vector, s: S) -> Result<S::Ok, S::Error> {
        let data: Vec<Option<f64>> = v.iter().map(|x| x.is_finite().then_some(*x)).collect();
        data.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector, D::Error> {
        let data = Vec::<Option<f64>>::deserialize(d)?;
        Ok(Vector::from_iterator(data.len(), data.into_iter().map(|x| x.unwrap_or(f64::NAN))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
        Mat::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn kron_identity_and_scalar() {
        assert_eq!(kron(&Mat::identity(2, 2), &Mat::identity(3, 3)), Mat::identity(6, 6));
        let b = mat_from_rows(2, 3, &[1.0, -2.0, 3.0, 0.5, 4.0, 6.0]).unwrap();
        assert_eq!(kron(&Mat::from_element(1, 1, 2.0), &b), &b * 2.0);
    }

    #[test]
    fn kron_swap_blocks() {
        let swap = mat_from_rows(2, 2, &[0.0, 1.0, 1.0, 0.0]).unwrap();
        let k = kron(&Mat::identity(2, 2), &swap);
        let expected = mat_from_rows(
            4,
            4,
            &[
                0.0, 1.0, 0.0, 0.0, //
                1.0, 0.0, 0.0, 0.0, //
                0.0, 0.0, 0.0, 1.0, //
                0.0, 0.0, 1.0, 0.0,
            ],
        )
        .unwrap();
        assert_eq!(k, expected);
    }

    #[test]
    fn vec_stacks_columns() {
        let m = mat_from_rows(2, 2, &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert_eq!(vec(&m).as_slice(), &[1.0, 2.0, 3.0, 4.0]);
        let col = Mat::from_column_slice(3, 1, &[5.0, 6.0, 7.0]);
        assert_eq!(vec(&col).as_slice(), &[5.0, 6.0, 7.0]);
        assert_eq!(unvec(&vec(&m), 2, 2).unwrap(), m);
    }

    #[test]
    fn vec_kron_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let a = randn(&mut rng, 2, 3);
            let x = randn(&mut rng, 3, 4);
            let b = randn(&mut rng, 4, 5);
            // Direct product computed entrywise.
            let axb = &a * &x * &b;
            let via_kron = kron(&b.transpose(), &a) * vec(&x);
            assert!((vec(&axb) - via_kron).norm() < 1e-10);
        }
    }

    #[test]
    fn vecb_three_by_four() {
        // Entry (i, j) holds 10*(i+1) + (j+1) so positions are readable.
        let m = Mat::from_fn(3, 4, |i, j| (10 * (i + 1) + j + 1) as f64);
        let v = vecb(&m, 2, 2).unwrap();
        let expected = [
            11.0, 12.0, // Y11: row 1, cols 1-2
            21.0, 31.0, 22.0, 32.0, // Y21: rows 2-3, cols 1-2
            13.0, 14.0, // Y12: row 1, cols 3-4
            23.0, 33.0, 24.0, 34.0, // Y22
        ];
        assert_eq!(v.as_slice(), &expected);
    }

    #[test]
    fn vecb_full_rank_is_vec() {
        let m = Mat::from_fn(3, 4, |i, j| (i * 4 + j) as f64);
        assert_eq!(vecb(&m, 3, 4).unwrap(), vec(&m));
        assert!(vecb_permutation(3, 4, 3, 4).unwrap().is_identity());
        // Zero ranks put everything in Y11, which is vec again.
        assert_eq!(vecb(&m, 0, 0).unwrap(), vec(&m));
    }

    #[test]
    fn vecb_rank_out_of_range() {
        let m = Mat::zeros(3, 4);
        assert!(matches!(vecb(&m, 4, 1), Err(Error::RankOutOfRange { dim: 1, .. })));
        assert!(matches!(vecb_permutation(3, 4, 1, 5), Err(Error::RankOutOfRange { dim: 2, .. })));
    }

    #[test]
    fn vecb_permutation_two_by_two() {
        // Brute force: classify each of the four cells by block membership.
        let (n1, n2, r1, r2) = (2, 2, 1, 1);
        let mut expected = vec![];
        for block in 0..4 {
            for j in 0..n2 {
                for i in 0..n1 {
                    let top = i < n1 - r1;
                    let left = j < n2 - r2;
                    let b = match (top, left) {
                        (true, true) => 0,
                        (false, true) => 1,
                        (true, false) => 2,
                        (false, false) => 3,
                    };
                    if b == block {
                        expected.push(j * n1 + i);
                    }
                }
            }
        }
        let p = vecb_permutation(n1, n2, r1, r2).unwrap();
        assert_eq!(p.map(), expected.as_slice());
        assert_eq!(p.map(), &[0, 1, 2, 3]);
        let p = vecb_permutation(3, 2, 1, 1).unwrap();
        assert_eq!(p.then(&p.inverse()), Permutation::identity(6));
        assert_eq!(p.inverse().then(&p), Permutation::identity(6));
    }

    #[test]
    fn vecb_matches_permutation_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (n1, n2, r1, r2) in [(3, 4, 2, 2), (3, 4, 1, 3), (2, 5, 1, 1), (4, 3, 0, 2)] {
            let y = randn(&mut rng, n1, n2);
            let p = vecb_permutation(n1, n2, r1, r2).unwrap();
            let direct = vecb(&y, r1, r2).unwrap();
            assert_eq!(p.apply(&vec(&y)), direct);
            assert_eq!(p.matrix() * vec(&y), direct);
        }
    }

    #[test]
    fn permutation_rejects_non_bijection() {
        assert!(Permutation::from_map(vec![0, 0, 1]).is_err());
        assert!(Permutation::from_map(vec![0, 3, 1]).is_err());
    }

    #[test]
    fn null_space_examples() {
        assert_eq!(null_space_basis(&Mat::identity(3, 3), None).ncols(), 0);
        let ones = Mat::from_column_slice(2, 1, &[1.0, 1.0]);
        let b = null_space_basis(&ones, None);
        assert_eq!(b.ncols(), 1);
        assert!((b[(0, 0)] + b[(1, 0)]).abs() < 1e-14);
        assert!((b.column(0).norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn null_space_random_rank_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = randn(&mut rng, 4, 2);
        let b = null_space_basis(&m, None);
        assert_eq!(b.ncols(), 2);
        assert!((b.transpose() * &m).norm() < 1e-10);
        assert!((b.transpose() * &b - Mat::identity(2, 2)).norm() < 1e-12);
        // Rank-one 4x3 matrix has a three dimensional left null space.
        let u = randn(&mut rng, 4, 1);
        let v = randn(&mut rng, 3, 1);
        let m = &u * v.transpose();
        let b = null_space_basis(&m, None);
        assert_eq!(b.ncols(), 3);
        assert!((b.transpose() * &m).norm() <= 1e-12 * m.norm());
    }

    #[test]
    fn kron_null_widths() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u1 = randn(&mut rng, 3, 2);
        let u2 = randn(&mut rng, 4, 3);
        let d = kron_null_decomposition(&u1, &u2).unwrap();
        assert_eq!(d.column_specific.ncols(), 2);
        assert_eq!(d.row_specific.ncols(), 3);
        assert_eq!(d.joint.ncols(), 1);
        let full = kron_null_decomposition(&randn(&mut rng, 3, 3), &randn(&mut rng, 4, 4)).unwrap();
        assert_eq!(full.stacked().ncols(), 0);
    }

    #[test]
    fn kron_null_rejects_rank_deficient() {
        let u1 = Mat::from_column_slice(3, 2, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        let u2 = Mat::identity(2, 1);
        assert!(matches!(kron_null_decomposition(&u1, &u2), Err(Error::RankDeficient("u1"))));
    }

    #[test]
    fn spectral_radius_examples() {
        let d = Mat::from_diagonal(&Vector::from_vec(vec![0.5, -0.9]));
        assert!((spectral_radius(&d).unwrap() - 0.9).abs() < 1e-14);
        let nil = mat_from_rows(2, 2, &[0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(spectral_radius(&nil).unwrap(), 0.0);
        assert!(matches!(spectral_radius(&Mat::zeros(2, 3)), Err(Error::NotSquare(_))));
    }

    #[test]
    fn spectral_radius_ar2_companion() {
        // y_t = 0.5 y_{t-1} + 0.24 y_{t-2}: characteristic z^2 - 0.5 z - 0.24 = (z - 0.8)(z + 0.3).
        let c = mat_from_rows(2, 2, &[0.5, 0.24, 1.0, 0.0]).unwrap();
        let a = 0.5f64;
        let b = 0.24f64;
        let disc = (a * a + 4.0 * b).sqrt();
        let roots = [(a + disc) / 2.0, (a - disc) / 2.0];
        let oracle = roots.iter().map(|r| r.abs()).fold(0.0, f64::max);
        assert!((spectral_radius(&c).unwrap() - oracle).abs() < 1e-12);
        // Complex pair: z^2 - z + 0.5 has roots 0.5 ± 0.5i, modulus sqrt(0.5).
        let c = mat_from_rows(2, 2, &[1.0, -0.5, 1.0, 0.0]).unwrap();
        assert!((spectral_radius(&c).unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn nearest_psd_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = randn(&mut rng, 4, 4);
        let psd = &g * g.transpose();
        assert!((nearest_psd(&psd) - &psd).amax() < 1e-12);
        let d = Mat::from_diagonal(&Vector::from_vec(vec![1.0, -0.3]));
        let p = nearest_psd(&d);
        let expected = Mat::from_diagonal(&Vector::from_vec(vec![1.0 + PSD_JITTER, PSD_JITTER]));
        assert!((p - expected).amax() < 1e-15);
    }

    #[test]
    fn nearest_psd_satisfies_projection_conditions() {
        // X is the projection of M onto the PSD cone iff X ⪰ 0, X - M ⪰ 0 ... more precisely
        // M - X ⪯ 0 and ⟨X, X - M⟩ = 0.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let m = symmetrize(&randn(&mut rng, 5, 5));
            let x = nearest_psd(&m);
            let jitterless = &x - Mat::identity(5, 5) * PSD_JITTER;
            assert!(min_eigenvalue(&jitterless) > -1e-12);
            let resid = &m - &jitterless;
            assert!(min_eigenvalue(&(-&resid)) > -1e-12);
            assert!(jitterless.dot(&resid).abs() < 1e-10);
            // Idempotent.
            assert!((nearest_psd(&x) - &x).amax() < 1e-10);
        }
    }

    #[test]
    fn matrix_normal_is_deterministic_and_shrinks() {
        let mean = Mat::from_element(2, 3, 1.5);
        let s1 = Mat::identity(2, 2);
        let s2 = Mat::identity(3, 3);
        let a = sample_matrix_normal(&mut ChaCha8Rng::seed_from_u64(9), &mean, &s1, &s2).unwrap();
        let b = sample_matrix_normal(&mut ChaCha8Rng::seed_from_u64(9), &mean, &s1, &s2).unwrap();
        assert_eq!(a, b);
        let tiny = sample_matrix_normal(
            &mut ChaCha8Rng::seed_from_u64(9),
            &mean,
            &(&s1 * 1e-20),
            &(&s2 * 1e-20),
        )
        .unwrap();
        assert!((tiny - &mean).amax() < 1e-15);
        let bad = Mat::from_diagonal(&Vector::from_vec(vec![1.0, -1.0]));
        assert!(matches!(
            sample_matrix_normal(&mut ChaCha8Rng::seed_from_u64(9), &mean, &bad, &s2),
            Err(Error::NotPositiveDefinite("sigma1"))
        ));
    }

    #[test]
    fn matrix_normal_identity_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let n = 100_000usize;
        let mean = Mat::zeros(2, 2);
        let i2 = Mat::identity(2, 2);
        let mut acc = Mat::zeros(4, 4);
        for _ in 0..n {
            let e = sample_matrix_normal(&mut rng, &mean, &i2, &i2).unwrap();
            let v = vec(&e);
            acc += &v * v.transpose();
        }
        acc /= n as f64;
        // MC standard error of a variance estimate is sqrt(2/n), of a covariance sqrt(1/n).
        for i in 0..4 {
            for j in 0..4 {
                let target = if i == j { 1.0 } else { 0.0 };
                let se = if i == j { (2.0 / n as f64).sqrt() } else { (1.0 / n as f64).sqrt() };
                assert!((acc[(i, j)] - target).abs() < 3.0 * se, "entry ({i},{j}) = {}", acc[(i, j)]);
            }
        }
    }

    #[test]
    fn matrix_normal_kronecker_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s1 = mat_from_rows(2, 2, &[2.0, 0.6, 0.6, 1.0]).unwrap();
        let s2 = mat_from_rows(2, 2, &[1.0, -0.3, -0.3, 0.5]).unwrap();
        let mean = Mat::zeros(2, 2);
        let n = 50_000;
        let mut acc = Mat::zeros(4, 4);
        for _ in 0..n {
            let v = vec(&sample_matrix_normal(&mut rng, &mean, &s1, &s2).unwrap());
            acc += &v * v.transpose();
        }
        acc /= n as f64;
        assert!((acc - kron(&s2, &s1)).amax() < 0.05);
    }

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(7, &[0]);
        assert_eq!(a, derive_seed(7, &[0]));
        assert_ne!(a, derive_seed(7, &[1]));
        assert_ne!(a, derive_seed(8, &[0]));
        assert_ne!(derive_seed(7, &[1, 2]), derive_seed(7, &[2, 1]));
    }

    #[test]
    fn serde_round_trip_keeps_shape() {
        #[derive(Serialize, Deserialize)]
        struct W {
            #[serde(with = "serde_mat")]
            m: Mat,
        }
        let w = W { m: Mat::zeros(3, 0) };
        let s = serde_json::to_string(&w).unwrap();
        let back: W = serde_json::from_str(&s).unwrap();
        assert_eq!(back.m.shape(), (3, 0));
        assert!(mat_from_rows(2, 2, &[1.0, f64::NAN, 3.0, 4.0]).is_err());
        let w = W { m: Mat::from_row_slice(2, 2, &[1.0, f64::NAN, 3.0, 4.0]) };
        let s = serde_json::to_string(&w).unwrap();
        assert!(s.contains("null"));
        let back: W = serde_json::from_str(&s).unwrap();
        assert!(back.m[(0, 1)].is_nan());
        assert_eq!(back.m[(1, 0)], 3.0);
    }
}
