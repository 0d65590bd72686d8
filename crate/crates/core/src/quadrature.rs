//! Quadrature on reference simplices.
//!
//! Rules are collapsed (conical) products of Gauss–Jacobi rules: a
//! degree-`q` rule on the `d`-simplex uses `ceil((q + 1) / 2)` points per
//! collapsed direction. All weights are positive.
//!
//! Reference simplices: `[0, 1]` in 1D, `{x, y >= 0, x + y <= 1}` in 2D and
//! `{x, y, z >= 0, x + y + z <= 1}` in 3D.

use crate::dense::DenseMatrix;
use crate::error::{HdgError, Result};
use crate::Scalar;

/// Highest exactness degree offered by [`make_quadrature`].
pub const MAX_QUADRATURE_DEGREE: usize = 14;

/// Reference coordinates, padded with zeros beyond the rule's dimension.
pub type RefPoint<T> = [T; 3];

#[derive(Clone, Debug)]
pub struct QuadratureRule<T> {
    pub dim: usize,
    pub degree: usize,
    pub points: Vec<RefPoint<T>>,
    pub weights: Vec<T>,
}

impl<T: Scalar> QuadratureRule<T> {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn integrate(&self, mut f: impl FnMut(&RefPoint<T>) -> T) -> T {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, &w)| w * f(p))
            .sum()
    }
}

/// Measure of the reference simplex of dimension `dim`.
pub fn reference_measure<T: Scalar>(dim: usize) -> T {
    let fact: usize = (1..=dim).product();
    T::one() / T::of(fact)
}

/// Quadrature rule on the reference `dim`-simplex exact for total degree `degree`.
pub fn make_quadrature<T: Scalar>(dim: usize, degree: usize) -> Result<QuadratureRule<T>> {
    if degree > MAX_QUADRATURE_DEGREE || !(1..=3).contains(&dim) {
        return Err(HdgError::QuadratureUnavailable(degree, dim));
    }
    let n = degree / 2 + 1;
    let (points, weights) = match dim {
        1 => {
            let (x, w) = gauss_jacobi_unit(n, 0);
            let pts = x.iter().map(|&s| [s, T::zero(), T::zero()]).collect();
            (pts, w)
        }
        2 => {
            let (xs, ws) = gauss_jacobi_unit::<T>(n, 0);
            let (xt, wt) = gauss_jacobi_unit::<T>(n, 1);
            let mut pts = Vec::with_capacity(n * n);
            let mut wts = Vec::with_capacity(n * n);
            for (&t, &wtj) in xt.iter().zip(&wt) {
                for (&s, &wsi) in xs.iter().zip(&ws) {
                    pts.push([s * (T::one() - t), t, T::zero()]);
                    wts.push(wsi * wtj);
                }
            }
            (pts, wts)
        }
        _ => {
            let (xs, ws) = gauss_jacobi_unit::<T>(n, 0);
            let (xt, wt) = gauss_jacobi_unit::<T>(n, 1);
            let (xr, wr) = gauss_jacobi_unit::<T>(n, 2);
            let mut pts = Vec::with_capacity(n * n * n);
            let mut wts = Vec::with_capacity(n * n * n);
            for (&r, &wrk) in xr.iter().zip(&wr) {
                for (&t, &wtj) in xt.iter().zip(&wt) {
                    for (&s, &wsi) in xs.iter().zip(&ws) {
                        let one = T::one();
                        pts.push([s * (one - t) * (one - r), t * (one - r), r]);
                        wts.push(wsi * wtj * wrk);
                    }
                }
            }
            (pts, wts)
        }
    };
    Ok(QuadratureRule {
        dim,
        degree,
        points,
        weights,
    })
}

/// `n`-point Gauss rule on `[0, 1]` for the weight `(1 - t)^a`, via Golub–Welsch.
pub fn gauss_jacobi_unit<T: Scalar>(n: usize, a: usize) -> (Vec<T>, Vec<T>) {
    let alpha = T::of(a);
    let two = T::lit(2.0);
    // Jacobi matrix for (1 - x)^alpha on [-1, 1] (beta = 0).
    let mut jac = DenseMatrix::zeros(n, n);
    for i in 0..n {
        let k = T::of(i);
        let s = two * k + alpha;
        jac[(i, i)] = if s == T::zero() {
            T::zero()
        } else {
            -alpha * alpha / (s * (s + two))
        };
        if i + 1 < n {
            let k = T::of(i + 1);
            let s = two * k + alpha;
            let num = T::lit(4.0) * k * (k + alpha) * k * (k + alpha);
            let den = s * s * (s + T::one()) * (s - T::one());
            let b = (num / den).sqrt();
            jac[(i, i + 1)] = b;
            jac[(i + 1, i)] = b;
        }
    }
    let (vals, vecs) = symmetric_eigen(&jac);
    // mu0 = int_{-1}^{1} (1 - x)^a dx = 2^(a+1) / (a + 1); the map to [0, 1]
    // divides by 2^(a+1), leaving 1 / (a + 1).
    let mu0 = T::one() / (alpha + T::one());
    let mut pairs: Vec<(T, T)> = (0..n)
        .map(|j| {
            let v0 = vecs[(0, j)];
            ((vals[j] + T::one()) / two, mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("finite nodes"));
    pairs.into_iter().unzip()
}

/// Cyclic Jacobi eigensolver for small symmetric matrices. Eigenvectors are columns.
fn symmetric_eigen<T: Scalar>(a: &DenseMatrix<T>) -> (Vec<T>, DenseMatrix<T>) {
    let n = a.rows();
    let mut a = a.clone();
    let mut v = DenseMatrix::identity(n);
    for _sweep in 0..100 {
        let mut off = T::zero();
        for i in 0..n {
            for j in i + 1..n {
                off += a[(i, j)] * a[(i, j)];
            }
        }
        if off <= T::min_positive_value() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[(i, i)]).collect(), v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|v| v as f64).product()
    }

    /// Closed form of the reference-simplex monomial integral.
    fn monomial_integral(exps: &[usize]) -> f64 {
        let d = exps.len();
        let num: f64 = exps.iter().map(|&e| factorial(e)).product();
        num / factorial(exps.iter().sum::<usize>() + d)
    }

    #[test]
    fn weights_sum_to_reference_measure() {
        for q in 0..=MAX_QUADRATURE_DEGREE {
            let r1 = make_quadrature::<f64>(1, q).unwrap();
            let r2 = make_quadrature::<f64>(2, q).unwrap();
            let r3 = make_quadrature::<f64>(3, q).unwrap();
            assert!((r1.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            assert!((r2.weights.iter().sum::<f64>() - 0.5).abs() < 1e-14);
            assert!((r3.weights.iter().sum::<f64>() - 1.0 / 6.0).abs() < 1e-14);
            assert!(r3.weights.iter().all(|&w| w > 0.0));
        }
    }

    #[test]
    fn closed_form_examples() {
        let r = make_quadrature::<f64>(2, 2).unwrap();
        let v = r.integrate(|p| p[0] * p[1]);
        assert!((v - 1.0 / 24.0).abs() < 1e-15);
        let r = make_quadrature::<f64>(3, 2).unwrap();
        let v = r.integrate(|p| p[0] * p[0]);
        assert!((v - 1.0 / 60.0).abs() < 1e-15);
    }

    #[test]
    fn monomials_integrated_exactly() {
        for q in 0..=MAX_QUADRATURE_DEGREE {
            let r1 = make_quadrature::<f64>(1, q).unwrap();
            let r2 = make_quadrature::<f64>(2, q).unwrap();
            let r3 = make_quadrature::<f64>(3, q).unwrap();
            for a in 0..=q {
                let exact = monomial_integral(&[a]);
                let got = r1.integrate(|p| p[0].powi(a as i32));
                assert!((got - exact).abs() <= 1e-13 * exact);
                for b in 0..=q - a {
                    let exact = monomial_integral(&[a, b]);
                    let got = r2.integrate(|p| p[0].powi(a as i32) * p[1].powi(b as i32));
                    assert!((got - exact).abs() <= 1e-13 * exact, "2D q={q} ({a},{b})");
                    for c in 0..=q - a - b {
                        let exact = monomial_integral(&[a, b, c]);
                        let got = r3.integrate(|p| {
                            p[0].powi(a as i32) * p[1].powi(b as i32) * p[2].powi(c as i32)
                        });
                        assert!((got - exact).abs() <= 1e-13 * exact, "3D q={q} ({a},{b},{c})");
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_excess_degree() {
        assert!(make_quadrature::<f64>(2, 15).is_err());
        assert!(make_quadrature::<f64>(4, 2).is_err());
    }

    #[test]
    fn single_precision_rule_builds() {
        let r = make_quadrature::<f32>(2, 4).unwrap();
        assert!((r.weights.iter().sum::<f32>() - 0.5).abs() < 1e-6);
    }
}
