//! Element-local matrices of the HDG forms and the lifting operator `K_h`.
//!
//! Local unknown ordering: flux `q` as `dim` consecutive component blocks of
//! the `P_{k-1}` basis, scalar `u` in the `P_k` basis, and trace dofs face by
//! face (local face `i` occupies `i * nl .. (i + 1) * nl`).

use rayon::prelude::*;

use crate::dense::{DenseMatrix, Lu};
use crate::mesh::Point;
use crate::space::HdgSpace;
use crate::Scalar;

/// Transport-independent blocks of one element.
///
/// The stabilization blocks carry `tau` but not `nu`.
#[derive(Clone, Debug)]
pub struct LocalLinear<T> {
    /// `(q, r)` (role M1).
    pub mass_q: DenseMatrix<T>,
    /// `-(u, div r)`, rows `r`, columns `u` (role M2).
    pub div: DenseMatrix<T>,
    /// `<mu, r . n>`, rows `r`, columns trace (role M3).
    pub trace_q: DenseMatrix<T>,
    /// `(u, w)` (role M4).
    pub mass_u: DenseMatrix<T>,
    /// `<tau P u, P w>` (role M5).
    pub stab_uu: DenseMatrix<T>,
    /// `-<tau mu, P w>`, rows `w`, columns trace (role M6).
    pub stab_ul: DenseMatrix<T>,
    /// `<tau mu, mu'>` (role M7).
    pub stab_ll: DenseMatrix<T>,
    /// `<phi_hat_m, phi_j>_e` per local face, used for the face projection.
    pub face_moments: Vec<DenseMatrix<T>>,
    /// Physical to reference face measure ratio per local face.
    pub face_jac: Vec<T>,
    pub mass_q_lu: Lu<T>,
}

/// Convection blocks for a frozen transport field (roles M8, M9).
#[derive(Clone, Debug)]
pub struct LocalConvection<T> {
    pub uu: DenseMatrix<T>,
    pub ul: DenseMatrix<T>,
    pub lu: DenseMatrix<T>,
}

/// A space together with the cached linear blocks of every element.
#[derive(Clone, Debug)]
pub struct Discretization<T> {
    pub space: HdgSpace<T>,
    pub blocks: Vec<LocalLinear<T>>,
}

impl<T: Scalar> Discretization<T> {
    pub fn new(space: HdgSpace<T>) -> Self {
        let blocks = (0..space.mesh.num_elements())
            .into_par_iter()
            .map(|e| build_local_linear(&space, e))
            .collect();
        Self { space, blocks }
    }
}

pub fn build_local_linear<T: Scalar>(space: &HdgSpace<T>, elem: usize) -> LocalLinear<T> {
    let dim = space.dim();
    let (nu, nqs, nq, nl) = (space.nu(), space.nq_scalar(), space.nq(), space.nl());
    let nll = space.nl_local();
    let geo = &space.mesh.geometry[elem];
    let det = geo.map.det;
    let tab = &space.matrix_tables;
    let rule = &tab.rule;

    let mut mass_q = DenseMatrix::zeros(nq, nq);
    let mut div = DenseMatrix::zeros(nq, nu);
    let mut mass_u = DenseMatrix::zeros(nu, nu);
    for (p, &w0) in rule.weights.iter().enumerate() {
        let w = w0 * det;
        let qv = tab.q.values.row(p);
        let uv = tab.u.values.row(p);
        for i in 0..nqs {
            for j in 0..nqs {
                let m = w * qv[i] * qv[j];
                for c in 0..dim {
                    mass_q[(c * nqs + i, c * nqs + j)] += m;
                }
            }
        }
        for i in 0..nu {
            for j in 0..nu {
                mass_u[(i, j)] += w * uv[i] * uv[j];
            }
        }
        for i in 0..nqs {
            let mut g = [T::zero(); 3];
            for (r, gr) in g.iter_mut().enumerate().take(dim) {
                *gr = tab.q.grads[r][(p, i)];
            }
            let phys = geo.map.push_gradient(&g);
            for c in 0..dim {
                let dv = w * phys[c];
                for j in 0..nu {
                    div[(c * nqs + i, j)] -= dv * uv[j];
                }
            }
        }
    }

    let tau = space.tau[elem];
    let mut trace_q = DenseMatrix::zeros(nq, nll);
    let mut stab_uu = DenseMatrix::zeros(nu, nu);
    let mut stab_ul = DenseMatrix::zeros(nu, nll);
    let mut stab_ll = DenseMatrix::zeros(nll, nll);
    let mut face_moments = Vec::with_capacity(dim + 1);
    let mut face_jac = Vec::with_capacity(dim + 1);
    for f in 0..=dim {
        let link = &space.mesh.elem_to_faces[elem][f];
        let jac = space.face_jacobian(link.face);
        let ft = &space.face_tables[space.face_table_of[elem][f]];
        let n = space.mesh.normals[elem][f];
        let mut moments = DenseMatrix::zeros(nl, nu);
        for (p, &w0) in space.face_rule.weights.iter().enumerate() {
            let w = w0 * jac;
            let lv = space.trace_values.row(p);
            let qv = ft.q.row(p);
            let uv = ft.u.row(p);
            for m in 0..nl {
                for i in 0..nqs {
                    let v = w * lv[m] * qv[i];
                    for c in 0..dim {
                        trace_q[(c * nqs + i, f * nl + m)] += v * n[c];
                    }
                }
                for j in 0..nu {
                    moments[(m, j)] += w * lv[m] * uv[j];
                }
            }
        }
        // P_e u has coefficients moments * u / jac because the face basis
        // is orthonormal on the reference face.
        for i in 0..nu {
            for j in 0..nu {
                let s: T = (0..nl).map(|m| moments[(m, i)] * moments[(m, j)]).sum();
                stab_uu[(i, j)] += tau * s / jac;
            }
            for m in 0..nl {
                stab_ul[(i, f * nl + m)] = -tau * moments[(m, i)];
            }
        }
        for m in 0..nl {
            stab_ll[(f * nl + m, f * nl + m)] = tau * jac;
        }
        face_moments.push(moments);
        face_jac.push(jac);
    }
    let mass_q_lu = mass_q.lu().expect("flux mass matrix of a valid element is SPD");
    LocalLinear {
        mass_q,
        div,
        trace_q,
        mass_u,
        stab_uu,
        stab_ul,
        stab_ll,
        face_moments,
        face_jac,
        mass_q_lu,
    }
}

/// Convection blocks for `b(v) = (v, .., v)` with `v` given by the element's
/// own `P_k` coefficients `v_coef`, on volume and faces alike.
pub fn build_local_convection<T: Scalar>(space: &HdgSpace<T>, elem: usize, v_coef: &[T]) -> LocalConvection<T> {
    let dim = space.dim();
    let (nu, nl, nll) = (space.nu(), space.nl(), space.nl_local());
    let third = T::one() / T::of(3);
    let geo = &space.mesh.geometry[elem];
    let a = space.transport_direction(elem);
    let tab = &space.matrix_tables;
    let mut uu = DenseMatrix::zeros(nu, nu);
    let mut ul = DenseMatrix::zeros(nu, nll);
    if v_coef.iter().all(|c| *c == T::zero()) {
        return LocalConvection { lu: ul.transpose(), uu, ul };
    }
    let mut dir = vec![T::zero(); nu];
    for (p, &w0) in tab.rule.weights.iter().enumerate() {
        let uv = tab.u.values.row(p);
        let v: T = uv.iter().zip(v_coef).map(|(&a, &b)| a * b).sum();
        let w = third * w0 * geo.map.det * v;
        for (j, d) in dir.iter_mut().enumerate() {
            *d = (0..dim).map(|r| a[r] * tab.u.grads[r][(p, j)]).sum();
        }
        for i in 0..nu {
            for j in 0..nu {
                uu[(i, j)] += w * (uv[i] * dir[j] - uv[j] * dir[i]);
            }
        }
    }
    for f in 0..=dim {
        let link = &space.mesh.elem_to_faces[elem][f];
        let jac = space.face_jacobian(link.face);
        let ft = &space.face_tables[space.face_table_of[elem][f]];
        let n = space.mesh.normals[elem][f];
        let one_n: T = n[..dim].iter().copied().sum();
        for (p, &w0) in space.face_rule.weights.iter().enumerate() {
            let uv = ft.u.row(p);
            let v: T = uv.iter().zip(v_coef).map(|(&a, &b)| a * b).sum();
            let w = third * w0 * jac * v * one_n;
            let lv = space.trace_values.row(p);
            for i in 0..nu {
                for m in 0..nl {
                    ul[(i, f * nl + m)] += w * uv[i] * lv[m];
                }
            }
        }
    }
    let mut lu = ul.transpose();
    lu.scale(-T::one());
    LocalConvection { uu, ul, lu }
}

/// Element contribution of `K_h(w, mu)`.
pub fn element_k_h<T: Scalar>(block: &LocalLinear<T>, w: &[T], mu_local: &[T]) -> Vec<T> {
    let mut rhs = block.div.matvec(w);
    block.trace_q.matvec_add(mu_local, &mut rhs);
    block.mass_q_lu.solve(&rhs)
}

/// Global `K_h(w, mu)` in the flux layout.
pub fn apply_k_h<T: Scalar>(disc: &Discretization<T>, w: &[T], trace: &[T]) -> Vec<T> {
    let space = &disc.space;
    let parts: Vec<Vec<T>> = (0..space.mesh.num_elements())
        .into_par_iter()
        .map(|e| element_k_h(&disc.blocks[e], &w[space.u_range(e)], &space.gather_trace(e, trace)))
        .collect();
    parts.concat()
}

/// `(f(., t), phi_i)_K` for every scalar basis member.
pub fn element_load<T: Scalar>(
    space: &HdgSpace<T>,
    elem: usize,
    f: &(dyn Fn(&Point<T>, T) -> T + Sync),
    t: T,
) -> Vec<T> {
    let tab = &space.load_tables;
    let map = &space.mesh.geometry[elem].map;
    let mut out = vec![T::zero(); space.nu()];
    for (p, &w0) in tab.rule.weights.iter().enumerate() {
        let x = map.apply(&tab.rule.points[p]);
        let fw = w0 * map.det * f(&x, t);
        for (o, &phi) in out.iter_mut().zip(tab.u.values.row(p)) {
            *o += fw * phi;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_uniform_mesh;
    use crate::space::TraceMode;

    fn disc(dim: usize, m: usize, k: usize, mode: TraceMode) -> Discretization<f64> {
        let mesh = build_uniform_mesh::<f64>(dim, m).unwrap();
        Discretization::new(HdgSpace::new(mesh, k, mode).unwrap())
    }

    #[test]
    fn constant_vector_mass_equals_area() {
        let d = disc(2, 3, 1, TraceMode::Equal);
        let area = d.space.mesh.geometry[0].measure;
        // The constant 1 is phi_0 / sqrt(2) on the reference triangle.
        let m = &d.blocks[0].mass_q;
        assert!((m[(0, 0)] / 2.0 - area).abs() < 1e-14);
        assert!((m[(1, 1)] / 2.0 - area).abs() < 1e-14);
        assert!(m[(0, 1)].abs() < 1e-14);
    }

    #[test]
    fn nodal_p1_mass_matrix() {
        let d = disc(2, 2, 1, TraceMode::Equal);
        let e = 3;
        let space = &d.space;
        let area = space.mesh.geometry[e].measure;
        let refv = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        // Nodal functions N_a = sum_i C[i][a] phi_i, with V C = I.
        let vand = DenseMatrix::from_fn(3, 3, |a, i| space.u_basis.eval(&refv[a])[i]);
        let c = vand.lu().unwrap().inverse();
        let nodal = c.transpose().matmul(&d.blocks[e].mass_u).matmul(&c);
        for a in 0..3 {
            for b in 0..3 {
                let exact = area / 12.0 * if a == b { 2.0 } else { 1.0 };
                assert!((nodal[(a, b)] - exact).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn k_h_kills_matching_constants() {
        for dim in [2, 3] {
            let d = disc(dim, 2, 2, TraceMode::Equal);
            let s = &d.space;
            let c = 0.7;
            let mut w = vec![0.0; s.num_u_dofs()];
            let phi0 = s.u_basis.eval(&[0.2, 0.2, 0.2])[0];
            for e in 0..s.mesh.num_elements() {
                w[s.u_range(e).start] = c / phi0;
            }
            // Constant trace on every face including the boundary.
            let psi0 = s.trace_basis.eval(&[0.3, 0.3, 0.0])[0];
            for e in 0..s.mesh.num_elements() {
                let mu = vec![c / psi0; s.nl_local()]
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| if i % s.nl() == 0 { v } else { 0.0 })
                    .collect::<Vec<_>>();
                let kq = element_k_h(&d.blocks[e], &w[s.u_range(e)], &mu);
                assert!(kq.iter().all(|v| v.abs() < 1e-12), "{kq:?}");
            }
        }
    }

    fn pk_coeffs(space: &HdgSpace<f64>, e: usize, g: impl Fn(&Point<f64>) -> f64) -> Vec<f64> {
        let tab = &space.load_tables;
        let map = &space.mesh.geometry[e].map;
        let mut out = vec![0.0; space.nu()];
        for (p, &w) in tab.rule.weights.iter().enumerate() {
            let gv = g(&map.apply(&tab.rule.points[p])) * w;
            for i in 0..space.nu() {
                out[i] += gv * tab.u.values[(p, i)];
            }
        }
        out
    }

    #[test]
    fn k_h_of_polynomial_trace_is_gradient() {
        // w quadratic, mu its trace; K_h(w, mu) = grad w, which lies in P_1,
        // so the recovered flux -K_h is -grad w.
        let d = disc(2, 2, 2, TraceMode::Equal);
        let s = &d.space;
        let g = |x: &Point<f64>| x[0] * x[0] - 2.0 * x[0] * x[1] + 0.5 * x[1];
        let grad = |x: &Point<f64>| [2.0 * x[0] - 2.0 * x[1], -2.0 * x[0] + 0.5];
        for e in 0..s.mesh.num_elements() {
            let w = pk_coeffs(s, e, g);
            let mut mu = vec![0.0; s.nl_local()];
            for f in 0..3 {
                // Trace of w is in P_2 on the face: moments / jac.
                let bl = &d.blocks[e];
                let tr = bl.face_moments[f].matvec(&w);
                for m in 0..s.nl() {
                    mu[f * s.nl() + m] = tr[m] / bl.face_jac[f];
                }
            }
            let kq = element_k_h(&d.blocks[e], &w, &mu);
            let tab = &s.load_tables;
            let map = &s.mesh.geometry[e].map;
            for (p, pt) in tab.rule.points.iter().enumerate() {
                let x = map.apply(pt);
                let ex = grad(&x);
                for c in 0..2 {
                    let v: f64 = (0..s.nq_scalar()).map(|i| kq[c * s.nq_scalar() + i] * tab.q.values[(p, i)]).sum();
                    assert!((v - ex[c]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn integrated_by_parts_k_h_agrees() {
        // (K_h(w,mu), r) = (grad w, r) + <mu - w, r.n>
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        for (dim, k, mode) in [(2, 2, TraceMode::Minus), (3, 1, TraceMode::Equal)] {
            let d = disc(dim, 1, k, mode);
            let s = &d.space;
            for e in 0..s.mesh.num_elements() {
                let w: Vec<f64> = (0..s.nu()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let mu: Vec<f64> = (0..s.nl_local()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let kq = element_k_h(&d.blocks[e], &w, &mu);
                let lhs = d.blocks[e].mass_q.matvec(&kq);
                let rhs = ibp_oracle(s, e, &w, &mu);
                for (a, b) in lhs.iter().zip(&rhs) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    fn ibp_oracle(s: &HdgSpace<f64>, e: usize, w: &[f64], mu: &[f64]) -> Vec<f64> {
        let dim = s.dim();
        let nqs = s.nq_scalar();
        let geo = &s.mesh.geometry[e];
        let mut out = vec![0.0; s.nq()];
        let tab = &s.matrix_tables;
        for (p, &w0) in tab.rule.weights.iter().enumerate() {
            let mut gw = [0.0; 3];
            for j in 0..s.nu() {
                let g = [tab.u.grads[0][(p, j)], tab.u.grads[1][(p, j)], if dim == 3 { tab.u.grads[2][(p, j)] } else { 0.0 }];
                let pg = geo.map.push_gradient(&g);
                for c in 0..dim {
                    gw[c] += w[j] * pg[c];
                }
            }
            for i in 0..nqs {
                for c in 0..dim {
                    out[c * nqs + i] += w0 * geo.map.det * gw[c] * tab.q.values[(p, i)];
                }
            }
        }
        for f in 0..=dim {
            let jac = s.face_jacobian(s.mesh.elem_to_faces[e][f].face);
            let ft = &s.face_tables[s.face_table_of[e][f]];
            let n = s.mesh.normals[e][f];
            for (p, &w0) in s.face_rule.weights.iter().enumerate() {
                let wv: f64 = (0..s.nu()).map(|j| w[j] * ft.u[(p, j)]).sum();
                let mv: f64 = (0..s.nl()).map(|m| mu[f * s.nl() + m] * s.trace_values[(p, m)]).sum();
                for i in 0..nqs {
                    for c in 0..dim {
                        out[c * nqs + i] += w0 * jac * (mv - wv) * n[c] * ft.q[(p, i)];
                    }
                }
            }
        }
        out
    }

    #[test]
    fn zero_transport_gives_zero_blocks() {
        let d = disc(2, 2, 2, TraceMode::Equal);
        let c = build_local_convection(&d.space, 1, &vec![0.0; d.space.nu()]);
        assert_eq!(c.uu.max_abs() + c.ul.max_abs() + c.lu.max_abs(), 0.0);
    }

    #[test]
    fn convection_volume_block_is_antisymmetric() {
        let d = disc(3, 1, 2, TraceMode::Equal);
        let v: Vec<f64> = (0..d.space.nu()).map(|i| (i as f64 * 0.37).sin()).collect();
        let c = build_local_convection(&d.space, 2, &v);
        for i in 0..d.space.nu() {
            for j in 0..d.space.nu() {
                assert!((c.uu[(i, j)] + c.uu[(j, i)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn stabilization_is_positive_semidefinite_and_scales() {
        for dim in [2usize, 3] {
            let coarse = disc(dim, 1, 1, TraceMode::Minus);
            let fine = disc(dim, 2, 1, TraceMode::Minus);
            let a = &coarse.blocks[0];
            let b = &fine.blocks[0];
            // mass ~ h^d, tau * face measure ~ h^{d-2}
            let rm = a.mass_u[(0, 0)] / b.mass_u[(0, 0)];
            assert!((rm - 2f64.powi(dim as i32)).abs() < 1e-12);
            let rl = a.stab_ll[(0, 0)] / b.stab_ll[(0, 0)];
            assert!((rl - 2f64.powi(dim as i32 - 2)).abs() < 1e-12);
            // Quadratic form of the full [uu ul; ul^T ll] block.
            let n = coarse.space.nu() + coarse.space.nl_local();
            let mut full = DenseMatrix::zeros(n, n);
            full.add_block(0, 0, &a.stab_uu, 1.0);
            full.add_block(0, coarse.space.nu(), &a.stab_ul, 1.0);
            full.add_block(coarse.space.nu(), 0, &a.stab_ul.transpose(), 1.0);
            full.add_block(coarse.space.nu(), coarse.space.nu(), &a.stab_ll, 1.0);
            let mut shifted = full.clone();
            for i in 0..n {
                shifted[(i, i)] += 1e-12;
            }
            assert!(shifted.cholesky().is_some());
        }
    }
}
