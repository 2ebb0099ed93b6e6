//! Dense matrix primitives for the small systems this crate handles
//! (a handful of states and sensors).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Builds a matrix from nested rows, rejecting ragged or non-finite input.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().position(|r| r.len() != ncols) {
        return Err(Error::InvalidMatrix(format!(
            "row {bad} has {} entries, expected {ncols}",
            rows[bad].len()
        )));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    let m = Matrix::from_row_slice(nrows, ncols, &flat);
    ensure_finite(&m, "matrix")?;
    Ok(m)
}

pub(crate) fn ensure_finite(m: &Matrix, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidMatrix(format!(
            "{what} has non-finite entries"
        )))
    }
}

fn is_symmetric(m: &Matrix) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let n = m.nrows();
    (0..n).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= 1e-9 * scale))
}

/// Symmetric positive-semidefinite matrix.
///
/// Symmetric within `1e-9` relative and every eigenvalue at least
/// `-1e-9 * λ_max`. The stored matrix is exactly symmetrized.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricPsd(Matrix);

impl SymmetricPsd {
    pub fn new(m: Matrix) -> Result<Self> {
        ensure_finite(&m, "covariance")?;
        if !is_symmetric(&m) {
            return Err(Error::InvalidMatrix("matrix is not symmetric".into()));
        }
        let m = symmetrize(&m);
        let eig = symmetric_eigen(&m)?;
        let max = eig.values.first().copied().unwrap_or(0.0).max(0.0);
        let min = eig.values.last().copied().unwrap_or(0.0);
        if min < -1e-9 * max.max(f64::MIN_POSITIVE) {
            return Err(Error::InvalidMatrix(format!(
                "matrix is indefinite (smallest eigenvalue {min:e})"
            )));
        }
        Ok(SymmetricPsd(m))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_inner(self) -> Matrix {
        self.0
    }

    /// Smallest eigenvalue.
    pub fn min_eigenvalue(&self) -> f64 {
        symmetric_eigen(&self.0)
            .map(|e| e.values.last().copied().unwrap_or(0.0))
            .unwrap_or(f64::NAN)
    }
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues in descending order with matching orthonormal eigenvectors
/// stored as columns.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

/// Cyclic Jacobi eigensolver for small symmetric matrices.
pub fn symmetric_eigen(s: &Matrix) -> Result<SymmetricEigen> {
    if !s.is_square() {
        return Err(Error::dim(
            "symmetric eigenproblem",
            "square",
            format!("{}x{}", s.nrows(), s.ncols()),
        ));
    }
    if !is_symmetric(s) {
        return Err(Error::InvalidMatrix(
            "eigensolver input is not symmetric".into(),
        ));
    }
    let n = s.nrows();
    let mut a = symmetrize(s);
    let mut v = Matrix::identity(n, n);
    let total = a.norm();

    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = v.column(src).into_owned();
        canonicalize_sign(&mut col);
        vectors.set_column(dst, &col);
    }
    Ok(SymmetricEigen { values, vectors })
}

/// Flips `v` so its first component with magnitude above `1e-12` is positive.
pub fn canonicalize_sign(v: &mut Vector) {
    if let Some(first) = v.iter().find(|c| c.abs() > 1e-12) {
        if *first < 0.0 {
            v.neg_mut();
        }
    }
}

/// Largest eigenvalue and its unit eigenvector (sign-canonicalized).
pub fn max_eigenpair(s: &SymmetricPsd) -> (f64, Vector) {
    let eig = symmetric_eigen(s.matrix()).expect("SymmetricPsd is square and symmetric");
    let lambda = eig.values[0].max(0.0);
    (lambda, eig.vectors.column(0).into_owned())
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(a: &Matrix) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::dim(
            "spectral radius",
            "square",
            format!("{}x{}", a.nrows(), a.ncols()),
        ));
    }
    if a.nrows() == 0 {
        return Ok(0.0);
    }
    ensure_finite(a, "spectral radius input")?;
    let eigs = a.clone().complex_eigenvalues();
    Ok(eigs.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Symmetric square root `X` with `X X = S`.
pub fn psd_sqrt(s: &SymmetricPsd) -> Matrix {
    let eig = symmetric_eigen(s.matrix()).expect("SymmetricPsd is square and symmetric");
    let roots = Vector::from_iterator(
        eig.values.len(),
        eig.values.iter().map(|l| l.max(0.0).sqrt()),
    );
    let v = &eig.vectors;
    symmetrize(&(v * Matrix::from_diagonal(&roots) * v.transpose()))
}

/// A factor `B` with `B Bᵀ = S`, Cholesky when `S` is definite and the
/// symmetric square root otherwise.
pub fn sampling_factor(s: &SymmetricPsd) -> Matrix {
    match s.matrix().clone().cholesky() {
        Some(ch) => ch.l(),
        None => psd_sqrt(s),
    }
}

pub fn solve(a: &Matrix, b: &Matrix, what: &str) -> Result<Matrix> {
    let lu = a.clone().lu();
    lu.solve(b)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::StabilityPrecondition(format!("{what} is singular")))
}

/// Steady-state Kalman solution from the Riccati fixed point.
#[derive(Debug, Clone)]
pub struct DareSolution {
    pub p: SymmetricPsd,
    pub gain: Matrix,
    pub iterations: usize,
    pub residual: f64,
}

fn riccati_map(
    f: &Matrix,
    c: &Matrix,
    r1: &Matrix,
    r2: &Matrix,
    p: &Matrix,
) -> Result<(Matrix, Matrix)> {
    let s = c * p * c.transpose() + r2;
    let fpct = f * p * c.transpose();
    // gain = F P Cᵀ S⁻¹, via Sᵀ gainᵀ = (F P Cᵀ)ᵀ
    let gain_t = solve(&s, &fpct.transpose(), "innovation covariance")?;
    let gain = gain_t.transpose();
    let next = f * p * f.transpose() - &gain * fpct.transpose() + r1;
    Ok((symmetrize(&next), gain))
}

/// Fixed-point iteration of the filter Riccati recursion from `P₀ = R1`.
///
/// Returns the predictor-form gain `L = F P Cᵀ (C P Cᵀ + R2)⁻¹`.
pub fn solve_dare(
    f: &Matrix,
    c: &Matrix,
    r1: &SymmetricPsd,
    r2: &SymmetricPsd,
) -> Result<DareSolution> {
    let n = f.nrows();
    if !f.is_square() {
        return Err(Error::dim(
            "F",
            "square",
            format!("{}x{}", f.nrows(), f.ncols()),
        ));
    }
    if c.ncols() != n {
        return Err(Error::dim("C columns", n, c.ncols()));
    }
    if r1.dim() != n {
        return Err(Error::dim("R1", n, r1.dim()));
    }
    if r2.dim() != c.nrows() {
        return Err(Error::dim("R2", c.nrows(), r2.dim()));
    }
    if r2.min_eigenvalue() <= 0.0 {
        return Err(Error::InvalidMatrix("R2 must be positive definite".into()));
    }
    let (r1m, r2m) = (r1.matrix(), r2.matrix());
    let mut p = r1m.clone();
    for it in 1..=100_000 {
        let (next, _) = riccati_map(f, c, r1m, r2m, &p)?;
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::NonConvergence("Riccati iteration diverged".into()));
        }
        let step = (&next - &p).norm();
        p = next;
        if step <= 1e-14 * p.norm().max(1.0) {
            let (image, gain) = riccati_map(f, c, r1m, r2m, &p)?;
            let residual = (&image - &p).norm() / p.norm().max(1.0);
            if residual > 1e-10 {
                return Err(Error::NonConvergence(format!(
                    "Riccati residual {residual:e} too large"
                )));
            }
            let closed = f - &gain * c;
            let rho = spectral_radius(&closed)?;
            if rho >= 1.0 {
                return Err(Error::NonConvergence(format!(
                    "rho[F-LC] = {rho} is not stabilizing"
                )));
            }
            return Ok(DareSolution {
                p: SymmetricPsd::new(p)?,
                gain,
                iterations: it,
                residual,
            });
        }
    }
    Err(Error::NonConvergence(
        "Riccati iteration exceeded 100000 iterations".into(),
    ))
}

/// Solves `P = A P Aᵀ + Q` for stable `A` by Smith doubling.
pub fn solve_lyapunov(a: &Matrix, q: &Matrix) -> Result<Matrix> {
    let rho = spectral_radius(a)?;
    if rho >= 1.0 {
        return Err(Error::StabilityPrecondition(format!(
            "Lyapunov operator has rho = {rho}"
        )));
    }
    let mut ak = a.clone();
    let mut p = q.clone();
    for _ in 0..64 {
        let inc = &ak * &p * ak.transpose();
        p += &inc;
        ak = &ak * &ak;
        if inc.norm() <= 1e-17 * p.norm() || ak.norm() == 0.0 {
            break;
        }
    }
    let residual = (a * &p * a.transpose() + q - &p).norm() / p.norm().max(f64::MIN_POSITIVE);
    if !residual.is_finite() || residual > 1e-9 {
        return Err(Error::NonConvergence(format!(
            "Lyapunov residual {residual:e}"
        )));
    }
    Ok(symmetrize(&p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        matrix_from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn rejects_ragged_and_nan() {
        assert!(matrix_from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
        assert!(matrix_from_rows(&[vec![1.0, f64::NAN]]).is_err());
    }

    #[test]
    fn eigenpair_of_diagonal() {
        let s = SymmetricPsd::new(m(&[&[4.0, 0.0], &[0.0, 1.0]])).unwrap();
        let (l, v) = max_eigenpair(&s);
        assert!((l - 4.0).abs() < 1e-14);
        assert!((v[0] - 1.0).abs() < 1e-14 && v[1].abs() < 1e-14);
    }

    #[test]
    fn eigenpair_of_all_ones() {
        let s = SymmetricPsd::new(m(&[&[1.0, 1.0], &[1.0, 1.0]])).unwrap();
        let (l, v) = max_eigenpair(&s);
        assert!((l - 2.0).abs() < 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((v[0] - h).abs() < 1e-14 && (v[1] - h).abs() < 1e-14);
    }

    #[test]
    fn eigenpair_sign_is_canonical() {
        let s = SymmetricPsd::new(m(&[&[1.0, -1.0], &[-1.0, 1.0]])).unwrap();
        let (_, v) = max_eigenpair(&s);
        assert!(v[0] > 0.0 && v[1] < 0.0);
    }

    #[test]
    fn non_symmetric_rejected() {
        assert!(SymmetricPsd::new(m(&[&[1.0, 2.0], &[0.0, 1.0]])).is_err());
        assert!(symmetric_eigen(&m(&[&[1.0, 2.0], &[0.0, 1.0]])).is_err());
    }

    #[test]
    fn indefinite_rejected() {
        assert!(SymmetricPsd::new(m(&[&[1.0, 0.0], &[0.0, -1.0]])).is_err());
    }

    #[test]
    fn spectral_radius_basics() {
        for n in 1..6 {
            let r = spectral_radius(&Matrix::identity(n, n)).unwrap();
            assert!((r - 1.0).abs() < 1e-12);
            assert_eq!(spectral_radius(&Matrix::zeros(n, n)).unwrap(), 0.0);
        }
        // rotation by 90 degrees scaled by 0.5: eigenvalues ±0.5i
        let r = spectral_radius(&m(&[&[0.0, -0.5], &[0.5, 0.0]])).unwrap();
        assert!((r - 0.5).abs() < 1e-12);
        assert!(spectral_radius(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn sqrt_of_diagonal() {
        let s = SymmetricPsd::new(m(&[&[4.0, 0.0], &[0.0, 9.0]])).unwrap();
        let x = psd_sqrt(&s);
        assert!((x - m(&[&[2.0, 0.0], &[0.0, 3.0]])).norm() < 1e-14);
        let id = SymmetricPsd::new(Matrix::identity(3, 3)).unwrap();
        assert!((psd_sqrt(&id) - Matrix::identity(3, 3)).norm() < 1e-14);
    }

    #[test]
    fn sampling_factor_handles_semidefinite() {
        let s = SymmetricPsd::new(m(&[&[1.0, 1.0], &[1.0, 1.0]])).unwrap();
        let b = sampling_factor(&s);
        assert!((&b * b.transpose() - s.matrix()).norm() < 1e-12);
    }

    #[test]
    fn dare_scalar_closed_form() {
        // p = 0.25 p - 0.25 p²/(p+1) + 1  ⇔  p² - 0.25 p - 1 = 0
        let expected = (0.25 + (0.0625f64 + 4.0).sqrt()) / 2.0;
        let one = SymmetricPsd::new(m(&[&[1.0]])).unwrap();
        let sol = solve_dare(&m(&[&[0.5]]), &m(&[&[1.0]]), &one, &one).unwrap();
        let p = sol.p.matrix()[(0, 0)];
        assert!((p - expected).abs() < 1e-12, "{p} vs {expected}");
        assert!((sol.gain[(0, 0)] - 0.5 * p / (p + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn dare_with_zero_dynamics() {
        let r1 = SymmetricPsd::new(m(&[&[2.0, 0.5], &[0.5, 1.0]])).unwrap();
        let r2 = SymmetricPsd::new(m(&[&[3.0]])).unwrap();
        let sol = solve_dare(&Matrix::zeros(2, 2), &m(&[&[1.0, 0.0]]), &r1, &r2).unwrap();
        assert!((sol.p.matrix() - r1.matrix()).norm() < 1e-14);
        assert_eq!(sol.gain.norm(), 0.0);
    }

    #[test]
    fn dare_rejects_undetectable() {
        // unstable mode invisible to C
        let one = SymmetricPsd::new(m(&[&[1.0]])).unwrap();
        let r1 = SymmetricPsd::new(Matrix::identity(2, 2)).unwrap();
        let err = solve_dare(
            &m(&[&[2.0, 0.0], &[0.0, 0.5]]),
            &m(&[&[0.0, 1.0]]),
            &r1,
            &one,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonConvergence(_)), "{err}");
    }

    #[test]
    fn lyapunov_scalar() {
        // p = 0.25 p + 1 → 4/3
        let p = solve_lyapunov(&m(&[&[0.5]]), &m(&[&[1.0]])).unwrap();
        assert!((p[(0, 0)] - 4.0 / 3.0).abs() < 1e-14);
        assert!(solve_lyapunov(&m(&[&[1.5]]), &m(&[&[1.0]])).is_err());
    }
}
