//! `L^2` projections onto the discrete spaces, the HDG triple norm and
//! relative error measures.

use rayon::prelude::*;

use crate::local::{element_k_h, Discretization};
use crate::mesh::Point;
use crate::space::HdgSpace;
use crate::Scalar;

/// Scalar field evaluated at a physical point.
pub type ScalarField<'a, T> = &'a (dyn Fn(&Point<T>) -> T + Sync);
/// Vector field evaluated at a physical point (unused components ignored).
pub type VectorField<'a, T> = &'a (dyn Fn(&Point<T>) -> [T; 3] + Sync);

/// Discrete solution at one time level.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldState<T> {
    pub t: T,
    pub u: Vec<T>,
    pub q: Vec<T>,
    /// Interior-face trace; boundary faces carry no unknowns.
    pub trace: Vec<T>,
}

impl<T: Scalar> FieldState<T> {
    pub fn zeros(space: &HdgSpace<T>, t: T) -> Self {
        Self {
            t,
            u: vec![T::zero(); space.num_u_dofs()],
            q: vec![T::zero(); space.num_q_dofs()],
            trace: vec![T::zero(); space.num_trace_dofs()],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.q).chain(&self.trace).all(|v| v.is_finite())
    }
}

/// Orthonormality of the reference basis turns the projection into plain
/// moments against the reference weights.
fn element_moments<T: Scalar>(space: &HdgSpace<T>, elem: usize, f: ScalarField<'_, T>) -> Vec<T> {
    let tab = &space.load_tables;
    let map = &space.mesh.geometry[elem].map;
    let mut out = vec![T::zero(); space.nu()];
    for (p, &w) in tab.rule.weights.iter().enumerate() {
        let fw = w * f(&map.apply(&tab.rule.points[p]));
        for (o, &phi) in out.iter_mut().zip(tab.u.values.row(p)) {
            *o += fw * phi;
        }
    }
    out
}

/// `Pi_k^o f` in the scalar layout.
pub fn project_element_scalar<T: Scalar>(space: &HdgSpace<T>, f: ScalarField<'_, T>) -> Vec<T> {
    let parts: Vec<Vec<T>> = (0..space.mesh.num_elements())
        .into_par_iter()
        .map(|e| element_moments(space, e, f))
        .collect();
    parts.concat()
}

/// Componentwise `Pi_{k-1}^o f` in the flux layout.
pub fn project_element_vector<T: Scalar>(space: &HdgSpace<T>, f: VectorField<'_, T>) -> Vec<T> {
    let dim = space.dim();
    let nqs = space.nq_scalar();
    let tab = &space.load_tables;
    let parts: Vec<Vec<T>> = (0..space.mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let map = &space.mesh.geometry[e].map;
            let mut out = vec![T::zero(); space.nq()];
            for (p, &w) in tab.rule.weights.iter().enumerate() {
                let fv = f(&map.apply(&tab.rule.points[p]));
                for i in 0..nqs {
                    let phi = w * tab.q.values[(p, i)];
                    for c in 0..dim {
                        out[c * nqs + i] += phi * fv[c];
                    }
                }
            }
            out
        })
        .collect();
    parts.concat()
}

/// `Pi_l^d f` on one face in canonical orientation.
pub fn project_single_face<T: Scalar>(space: &HdgSpace<T>, face: usize, f: ScalarField<'_, T>) -> Vec<T> {
    let nl = space.nl();
    let mut out = vec![T::zero(); nl];
    for (p, (s, &w)) in space
        .load_face_rule
        .points
        .iter()
        .zip(&space.load_face_rule.weights)
        .enumerate()
    {
        let fw = w * f(&space.face_point(face, s));
        for (o, &phi) in out.iter_mut().zip(space.trace_load_values.row(p)) {
            *o += fw * phi;
        }
    }
    out
}

/// `Pi_l^d f` on interior faces; boundary values are dropped since the
/// trace is pinned to zero there.
pub fn project_face<T: Scalar>(space: &HdgSpace<T>, f: ScalarField<'_, T>) -> Vec<T> {
    let parts: Vec<Vec<T>> = space
        .mesh
        .interior_faces
        .par_iter()
        .map(|&face| project_single_face(space, face, f))
        .collect();
    parts.concat()
}

/// Projects the element scalar `w` to `P_l` on each face of `elem`.
pub fn element_face_projection<T: Scalar>(disc: &Discretization<T>, elem: usize, w: &[T]) -> Vec<T> {
    let block = &disc.blocks[elem];
    let nl = disc.space.nl();
    let mut out = Vec::with_capacity(disc.space.nl_local());
    for (moments, &jac) in block.face_moments.iter().zip(&block.face_jac) {
        out.extend(moments.matvec(w).into_iter().map(|v| v / jac));
    }
    debug_assert_eq!(out.len(), (disc.space.dim() + 1) * nl);
    out
}

/// `|||(w, mu)|||` with `tau = 1 / h_K`.
pub fn triple_norm<T: Scalar>(disc: &Discretization<T>, w: &[T], trace: &[T]) -> T {
    let space = &disc.space;
    let parts: Vec<T> = (0..space.mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let b = &disc.blocks[e];
            let we = &w[space.u_range(e)];
            let mu = space.gather_trace(e, trace);
            let kq = element_k_h(b, we, &mu);
            let lift = dot(&kq, &b.mass_q.matvec(&kq));
            let jump = dot(we, &b.stab_uu.matvec(we))
                + T::lit(2.0) * dot(we, &b.stab_ul.matvec(&mu))
                + dot(&mu, &b.stab_ll.matvec(&mu));
            lift + jump
        })
        .collect();
    parts.iter().fold(T::zero(), |a, &b| a + b).max(T::zero()).sqrt()
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Relative `L^2` errors; absolute when the exact norm is below `1e-14`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorMeasures<T> {
    pub err_u: T,
    pub err_q: T,
    pub norm_u: T,
    pub norm_q: T,
    pub absolute_u: bool,
    pub absolute_q: bool,
}

/// `L^2` norm of `u_h - u` and `q_h - q` alongside the exact norms.
pub fn relative_errors<T: Scalar>(
    space: &HdgSpace<T>,
    u_h: &[T],
    q_h: &[T],
    exact_u: ScalarField<'_, T>,
    exact_q: VectorField<'_, T>,
) -> ErrorMeasures<T> {
    let dim = space.dim();
    let nqs = space.nq_scalar();
    let tab = &space.error_tables;
    let parts: Vec<[T; 4]> = (0..space.mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let map = &space.mesh.geometry[e].map;
            let ue = &u_h[space.u_range(e)];
            let qe = &q_h[space.q_range(e)];
            let mut acc = [T::zero(); 4];
            for (p, &w0) in tab.rule.weights.iter().enumerate() {
                let w = w0 * map.det;
                let x = map.apply(&tab.rule.points[p]);
                let uex = exact_u(&x);
                let uh = dot(ue, tab.u.values.row(p));
                acc[0] += w * (uh - uex) * (uh - uex);
                acc[1] += w * uex * uex;
                let qex = exact_q(&x);
                let qrow = tab.q.values.row(p);
                for c in 0..dim {
                    let qh = dot(&qe[c * nqs..(c + 1) * nqs], qrow);
                    acc[2] += w * (qh - qex[c]) * (qh - qex[c]);
                    acc[3] += w * qex[c] * qex[c];
                }
            }
            acc
        })
        .collect();
    let mut tot = [T::zero(); 4];
    for a in &parts {
        for i in 0..4 {
            tot[i] += a[i];
        }
    }
    let tiny = T::lit(1e-14);
    let (eu, nu_, eq, nq_) = (tot[0].sqrt(), tot[1].sqrt(), tot[2].sqrt(), tot[3].sqrt());
    ErrorMeasures {
        err_u: if nu_ < tiny { eu } else { eu / nu_ },
        err_q: if nq_ < tiny { eq } else { eq / nq_ },
        norm_u: nu_,
        norm_q: nq_,
        absolute_u: nu_ < tiny,
        absolute_q: nq_ < tiny,
    }
}

/// `L^2` norm of a discrete scalar field.
pub fn scalar_l2_norm<T: Scalar>(disc: &Discretization<T>, u: &[T]) -> T {
    let s = &disc.space;
    let mut tot = T::zero();
    for e in 0..s.mesh.num_elements() {
        let ue = &u[s.u_range(e)];
        tot += dot(ue, &disc.blocks[e].mass_u.matvec(ue));
    }
    tot.max(T::zero()).sqrt()
}
