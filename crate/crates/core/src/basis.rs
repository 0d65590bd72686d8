//! Orthonormal polynomial bases of `P_m` on reference simplices.

use crate::dense::DenseMatrix;
use crate::error::{HdgError, Result};
use crate::quadrature::{make_quadrature, RefPoint};
use crate::Scalar;

pub const MAX_BASIS_DEGREE: usize = 4;

/// `binom(m + dim, dim)`.
pub fn polynomial_space_dim(dim: usize, degree: usize) -> usize {
    let mut num = 1usize;
    let mut den = 1usize;
    for i in 1..=dim {
        num *= degree + i;
        den *= i;
    }
    num / den
}

/// Basis of `P_m` on the reference `dim`-simplex, orthonormal in `L^2(K̂)`.
///
/// Members are linear combinations of monomials centered at the reference
/// centroid; member 0 is the constant.
#[derive(Clone, Debug)]
pub struct ReferenceBasis<T> {
    dim: usize,
    degree: usize,
    exponents: Vec<[usize; 3]>,
    center: [T; 3],
    /// Row `i` holds the monomial coefficients of member `i`.
    coeffs: DenseMatrix<T>,
}

/// Values and reference gradients of a basis at a set of points.
#[derive(Clone, Debug)]
pub struct BasisTable<T> {
    /// `values[(q, i)]` is member `i` at point `q`.
    pub values: DenseMatrix<T>,
    /// `grads[c][(q, i)]` is the `c`-th reference derivative.
    pub grads: Vec<DenseMatrix<T>>,
}

pub fn make_basis<T: Scalar>(dim: usize, degree: usize) -> Result<ReferenceBasis<T>> {
    if !(1..=3).contains(&dim) || degree > MAX_BASIS_DEGREE {
        return Err(HdgError::UnsupportedDegree { dim, degree });
    }
    let mut exponents = Vec::new();
    for total in 0..=degree {
        match dim {
            1 => exponents.push([total, 0, 0]),
            2 => {
                for b in 0..=total {
                    exponents.push([total - b, b, 0]);
                }
            }
            _ => {
                for a in (0..=total).rev() {
                    for b in (0..=total - a).rev() {
                        exponents.push([a, b, total - a - b]);
                    }
                }
            }
        }
    }
    debug_assert_eq!(exponents.len(), polynomial_space_dim(dim, degree));
    let centroid = T::one() / T::of(dim + 1);
    let mut center = [T::zero(); 3];
    for c in center.iter_mut().take(dim) {
        *c = centroid;
    }
    let mut basis = ReferenceBasis {
        dim,
        degree,
        exponents,
        center,
        coeffs: DenseMatrix::identity(polynomial_space_dim(dim, degree)),
    };
    // Two Cholesky-based Gram–Schmidt passes; the second removes the
    // residual non-orthogonality left by the conditioning of the first.
    let rule = make_quadrature::<T>(dim, 2 * degree)?;
    for _pass in 0..2 {
        let table = basis.tabulate(&rule.points);
        let n = basis.size();
        let mut gram = DenseMatrix::zeros(n, n);
        for (q, &w) in rule.weights.iter().enumerate() {
            let row = table.values.row(q);
            for i in 0..n {
                for j in 0..n {
                    gram[(i, j)] += w * row[i] * row[j];
                }
            }
        }
        let l = gram
            .cholesky()
            .ok_or(HdgError::UnsupportedDegree { dim, degree })?;
        basis.coeffs = l.lower_triangular_inverse().matmul(&basis.coeffs);
    }
    Ok(basis)
}

impl<T: Scalar> ReferenceBasis<T> {
    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn degree(&self) -> usize {
        self.degree
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.exponents.len()
    }

    fn monomials(&self, p: &RefPoint<T>, out_val: &mut [T], out_grad: Option<&mut [[T; 3]]>) {
        let m = self.degree;
        let mut pows = [[T::one(); MAX_BASIS_DEGREE + 1]; 3];
        for c in 0..self.dim {
            let x = p[c] - self.center[c];
            for e in 1..=m {
                pows[c][e] = pows[c][e - 1] * x;
            }
        }
        for (j, e) in self.exponents.iter().enumerate() {
            out_val[j] = (0..self.dim).map(|c| pows[c][e[c]]).fold(T::one(), |a, b| a * b);
        }
        if let Some(grad) = out_grad {
            for (j, e) in self.exponents.iter().enumerate() {
                for c in 0..3 {
                    grad[j][c] = T::zero();
                }
                for c in 0..self.dim {
                    if e[c] == 0 {
                        continue;
                    }
                    let mut g = T::of(e[c]) * pows[c][e[c] - 1];
                    for o in 0..self.dim {
                        if o != c {
                            g *= pows[o][e[o]];
                        }
                    }
                    grad[j][c] = g;
                }
            }
        }
    }

    /// Values of all members at `p`.
    pub fn eval(&self, p: &RefPoint<T>) -> Vec<T> {
        let n = self.size();
        let mut mono = vec![T::zero(); n];
        self.monomials(p, &mut mono, None);
        self.coeffs.matvec(&mono)
    }

    /// Reference gradients of all members at `p`.
    pub fn eval_grad(&self, p: &RefPoint<T>) -> Vec<[T; 3]> {
        let n = self.size();
        let mut mono = vec![T::zero(); n];
        let mut mgrad = vec![[T::zero(); 3]; n];
        self.monomials(p, &mut mono, Some(&mut mgrad));
        (0..n)
            .map(|i| {
                let row = self.coeffs.row(i);
                let mut g = [T::zero(); 3];
                for (j, &cij) in row.iter().enumerate() {
                    for c in 0..3 {
                        g[c] += cij * mgrad[j][c];
                    }
                }
                g
            })
            .collect()
    }

    /// Values and reference gradients at every point.
    pub fn tabulate(&self, points: &[RefPoint<T>]) -> BasisTable<T> {
        let n = self.size();
        let mut values = DenseMatrix::zeros(points.len(), n);
        let mut grads = vec![DenseMatrix::zeros(points.len(), n); self.dim];
        let mut mono = vec![T::zero(); n];
        let mut mgrad = vec![[T::zero(); 3]; n];
        for (q, p) in points.iter().enumerate() {
            self.monomials(p, &mut mono, Some(&mut mgrad));
            for i in 0..n {
                let row = self.coeffs.row(i);
                let mut v = T::zero();
                let mut g = [T::zero(); 3];
                for j in 0..n {
                    v += row[j] * mono[j];
                    for c in 0..self.dim {
                        g[c] += row[j] * mgrad[j][c];
                    }
                }
                values[(q, i)] = v;
                for c in 0..self.dim {
                    grads[c][(q, i)] = g[c];
                }
            }
        }
        BasisTable { values, grads }
    }
}
