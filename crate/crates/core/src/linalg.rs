//! Small dense complex linear algebra on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
pub use num_complex::Complex64 as C64;

pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

#[inline]
pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn identity(d: usize) -> CMat {
    CMat::identity(d, d)
}

/// `|a⟩⟨b|`.
pub fn outer(a: &CVec, b: &CVec) -> CMat {
    a * b.adjoint()
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

/// Spectral (operator 2-) norm.
pub fn op_norm(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

pub fn hermitian_defect(m: &CMat) -> f64 {
    (m - m.adjoint()).camax()
}

pub fn unitarity_defect(u: &CMat) -> f64 {
    (u.adjoint() * u - identity(u.nrows())).camax()
}

pub fn expm(m: &CMat) -> CMat {
    m.exp()
}

/// Eigenpairs of a Hermitian matrix, eigenvalues ascending, eigenvectors as
/// columns.
pub fn hermitian_eigh(m: &CMat) -> (DVector<f64>, CMat) {
    let d = m.nrows();
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(d, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = CMat::zeros(d, d);
    for (col, &k) in order.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        let n = v.norm();
        vectors.set_column(col, &(v / c(n)));
    }
    (values, vectors)
}

/// Eigen-decomposition of a general complex matrix.
#[derive(Clone, Debug)]
pub struct Eigen {
    pub values: Vec<C64>,
    /// Right eigenvectors as unit columns.
    pub right: CMat,
    /// Rows of `right⁻¹`; `left.row(k) * right.column(k) = 1`.
    pub left: CMat,
}

impl Eigen {
    /// Rank-one spectral projection `|r_k⟩⟨l_k|` onto eigenvalue `k`.
    pub fn projection(&self, k: usize) -> CMat {
        self.right.column(k) * self.left.row(k)
    }
}

/// Eigenvalues and right/left eigenvectors of a diagonalizable complex matrix,
/// obtained from a complex Schur form by back-substitution.
pub fn eig(m: &CMat) -> Option<Eigen> {
    let d = m.nrows();
    let (q, t) = Schur::try_new(m.clone(), f64::EPSILON, 10_000)?.unpack();
    let values: Vec<C64> = (0..d).map(|k| t[(k, k)]).collect();
    let scale = t.camax().max(f64::MIN_POSITIVE);
    let mut x = CMat::zeros(d, d);
    for k in 0..d {
        let lambda = values[k];
        x[(k, k)] = c(1.0);
        for i in (0..k).rev() {
            let mut s = C64::new(0.0, 0.0);
            for j in (i + 1)..=k {
                s += t[(i, j)] * x[(j, k)];
            }
            let mut den = t[(i, i)] - lambda;
            if den.norm() < f64::EPSILON * scale {
                den = c(f64::EPSILON * scale);
            }
            x[(i, k)] = -s / den;
        }
    }
    let mut right = q * x;
    for k in 0..d {
        let n = right.column(k).norm();
        right.column_mut(k).unscale_mut(n);
    }
    let left = right.clone().try_inverse()?;
    Some(Eigen { values, right, left })
}

/// Orthogonal projector `|φ⟩⟨φ|` onto column `k`.
pub fn column_projector(vectors: &CMat, k: usize) -> CMat {
    let v = vectors.column(k).into_owned();
    outer(&v, &v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eig_recovers_diagonal() {
        let m = CMat::from_diagonal(&CVec::from_vec(vec![C64::new(1.0, -0.1), C64::new(2.0, 0.0)]));
        let e = eig(&m).unwrap();
        let mut vals = e.values.clone();
        vals.sort_by(|a, b| a.re.total_cmp(&b.re));
        assert!((vals[0] - C64::new(1.0, -0.1)).norm() < 1e-14);
        let recon: CMat = (0..2).map(|k| e.projection(k) * e.values[k]).fold(CMat::zeros(2, 2), |a, b| a + b);
        assert!((recon - m).camax() < 1e-13);
    }

    #[test]
    fn eig_non_normal() {
        let m = CMat::from_row_slice(
            3,
            3,
            &[
                C64::new(1.0, 0.0),
                C64::new(0.3, 0.2),
                C64::new(0.0, 0.5),
                C64::new(0.0, 0.0),
                C64::new(2.0, -0.1),
                C64::new(0.7, 0.0),
                C64::new(0.1, 0.1),
                C64::new(0.0, 0.0),
                C64::new(3.5, 0.2),
            ],
        );
        let e = eig(&m).unwrap();
        let recon: CMat = (0..3).map(|k| e.projection(k) * e.values[k]).fold(CMat::zeros(3, 3), |a, b| a + b);
        assert!((recon - &m).camax() < 1e-12);
        for k in 0..3 {
            let p = e.projection(k);
            assert!((&p * &p - &p).camax() < 1e-12);
        }
    }

    #[test]
    fn hermitian_eigh_sorted_and_unitary() {
        let m = CMat::from_row_slice(2, 2, &[c(2.0), C64::new(0.0, 0.5), C64::new(0.0, -0.5), c(1.0)]);
        let (vals, vecs) = hermitian_eigh(&m);
        assert!(vals[0] < vals[1]);
        assert!(unitarity_defect(&vecs) < 1e-14);
        let recon = &vecs * CMat::from_diagonal(&vals.map(c)) * vecs.adjoint();
        assert!((recon - m).camax() < 1e-14);
    }
}
