//! Static condensation of one linearized implicit step onto the
//! interior-face trace, the global trace solve and field recovery.
//!
//! Per element the local system over `(q, u, mu)` reads
//!
//! ```text
//! [ M1        A_qu              A_ql        ] [q ]   [0]
//! [ -nu A_qu^T  alpha M4 + S + B  S_ul + B_ul ] [u ] = [G]
//! [ -nu A_ql^T  S_lu + B_lu       S_ll        ] [mu]   [0]
//! ```
//!
//! with `S` the stabilization scaled by `nu`. The `(q, u)` block is
//! eliminated element by element.

use std::sync::Arc;

use rayon::prelude::*;

use crate::dense::DenseMatrix;
use crate::error::{HdgError, Result};
use crate::local::{build_local_convection, Discretization, LocalConvection};
use crate::projection::FieldState;
use crate::sparse::{relative_residual, BlockLu, BlockPattern, BlockSparseMatrix, SymbolicLu};
use crate::Scalar;

/// Data of one linearized step.
#[derive(Clone, Copy, Debug)]
pub struct StepParams<'a, T> {
    pub nu: T,
    /// Reaction coefficient; zero only in the steady diagnostic mode.
    pub alpha: T,
    /// Frozen transport field in the scalar layout; `None` drops convection.
    pub transport: Option<&'a [T]>,
    /// Integrated right-hand side `(g, w)` in the scalar layout.
    pub rhs: &'a [T],
    /// Prescribed trace on boundary faces, indexed by face (`num_faces * nl`).
    /// `None` is the homogeneous condition of the Burgers' problems; other
    /// values serve the steady consistency diagnostics.
    pub boundary_trace: Option<&'a [T]>,
}

/// Mesh-dependent structure reused by every step: the trace sparsity and
/// its symbolic factorization.
#[derive(Clone, Debug)]
pub struct TraceStructure {
    pub pattern: Arc<BlockPattern>,
    pub symbolic: Arc<SymbolicLu>,
}

impl TraceStructure {
    pub fn new<T: Scalar>(disc: &Discretization<T>) -> Self {
        let space = &disc.space;
        let n = space.mesh.num_interior_faces();
        let mut adj = vec![Vec::new(); n];
        for e in 0..space.mesh.num_elements() {
            let slots: Vec<usize> = space.local_trace_slots(e).iter().flatten().copied().collect();
            for &a in &slots {
                adj[a].extend(slots.iter().copied().filter(|&b| b != a));
            }
        }
        let pattern = Arc::new(BlockPattern::from_adjacency(&adj));
        let symbolic = Arc::new(SymbolicLu::analyze(&pattern));
        Self { pattern, symbolic }
    }
}

/// Per-element recovery data: `x_I = y - X mu_local`.
#[derive(Clone, Debug)]
pub struct ElementRecovery<T> {
    pub y: Vec<T>,
    pub x: DenseMatrix<T>,
}

#[derive(Clone, Debug)]
pub struct GlobalTraceSystem<T> {
    pub matrix: BlockSparseMatrix<T>,
    pub rhs: Vec<T>,
    pub recovery: Vec<ElementRecovery<T>>,
    pub boundary_trace: Option<Vec<T>>,
}

/// Element-local trace vector from interior unknowns and boundary data.
fn local_trace<T: Scalar>(disc: &Discretization<T>, elem: usize, trace: &[T], boundary: Option<&[T]>) -> Vec<T> {
    let space = &disc.space;
    let mut mu = space.gather_trace(elem, trace);
    if let Some(bd) = boundary {
        let nl = space.nl();
        for (i, link) in space.mesh.elem_to_faces[elem].iter().enumerate().take(space.dim() + 1) {
            if space.mesh.faces[link.face].boundary {
                mu[i * nl..(i + 1) * nl].copy_from_slice(&bd[link.face * nl..(link.face + 1) * nl]);
            }
        }
    }
    mu
}

/// Dense local system of one element, in the `(q, u, mu)` ordering.
#[derive(Clone, Debug)]
pub struct LocalSystem<T> {
    pub a_ii: DenseMatrix<T>,
    pub a_il: DenseMatrix<T>,
    pub a_li: DenseMatrix<T>,
    pub a_ll: DenseMatrix<T>,
    pub f_i: Vec<T>,
}

pub fn local_system<T: Scalar>(disc: &Discretization<T>, elem: usize, params: &StepParams<'_, T>) -> LocalSystem<T> {
    let space = &disc.space;
    let b = &disc.blocks[elem];
    let (nq, nu, nll) = (space.nq(), space.nu(), space.nl_local());
    let ni = nq + nu;
    let nu_visc = params.nu;
    let conv = match params.transport {
        Some(v) => build_local_convection(space, elem, &v[space.u_range(elem)]),
        None => LocalConvection {
            uu: DenseMatrix::zeros(nu, nu),
            ul: DenseMatrix::zeros(nu, nll),
            lu: DenseMatrix::zeros(nll, nu),
        },
    };
    let mut a_ii = DenseMatrix::zeros(ni, ni);
    a_ii.add_block(0, 0, &b.mass_q, T::one());
    a_ii.add_block(0, nq, &b.div, T::one());
    a_ii.add_block(nq, 0, &b.div.transpose(), -nu_visc);
    a_ii.add_block(nq, nq, &b.mass_u, params.alpha);
    a_ii.add_block(nq, nq, &b.stab_uu, nu_visc);
    a_ii.add_block(nq, nq, &conv.uu, T::one());

    let mut a_il = DenseMatrix::zeros(ni, nll);
    a_il.add_block(0, 0, &b.trace_q, T::one());
    a_il.add_block(nq, 0, &b.stab_ul, nu_visc);
    a_il.add_block(nq, 0, &conv.ul, T::one());

    let mut a_li = DenseMatrix::zeros(nll, ni);
    a_li.add_block(0, 0, &b.trace_q.transpose(), -nu_visc);
    a_li.add_block(0, nq, &b.stab_ul.transpose(), nu_visc);
    a_li.add_block(0, nq, &conv.lu, T::one());

    let mut a_ll = b.stab_ll.clone();
    a_ll.scale(nu_visc);

    let mut f_i = vec![T::zero(); ni];
    f_i[nq..].copy_from_slice(&params.rhs[space.u_range(elem)]);
    LocalSystem { a_ii, a_il, a_li, a_ll, f_i }
}

pub fn assemble_condensed<T: Scalar>(
    disc: &Discretization<T>,
    structure: &TraceStructure,
    params: &StepParams<'_, T>,
) -> Result<GlobalTraceSystem<T>> {
    let space = &disc.space;
    let nl = space.nl();
    let locals: Vec<Result<(DenseMatrix<T>, Vec<T>, ElementRecovery<T>)>> = (0..space.mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let sys = local_system(disc, e, params);
            let lu = sys.a_ii.lu().ok_or(HdgError::LocalFactorization(e))?;
            let y = lu.solve(&sys.f_i);
            let x = lu.solve_matrix(&sys.a_il);
            let mut schur = sys.a_ll;
            schur.add_assign(&{
                let mut p = sys.a_li.matmul(&x);
                p.scale(-T::one());
                p
            });
            let mut r = sys.a_li.matvec(&y);
            for v in &mut r {
                *v = -*v;
            }
            if let Some(bd) = params.boundary_trace {
                // Known boundary coefficients move to the right-hand side.
                let mut g = vec![T::zero(); space.nl_local()];
                for (i, link) in space.mesh.elem_to_faces[e].iter().enumerate().take(space.dim() + 1) {
                    if space.mesh.faces[link.face].boundary {
                        for m in 0..nl {
                            g[i * nl + m] = -bd[link.face * nl + m];
                        }
                    }
                }
                schur.matvec_add(&g, &mut r);
            }
            if !schur.is_finite() {
                return Err(HdgError::LocalFactorization(e));
            }
            Ok((schur, r, ElementRecovery { y, x }))
        })
        .collect();

    let mut matrix = BlockSparseMatrix::zeros(structure.pattern.clone(), nl);
    let mut rhs = vec![T::zero(); space.num_trace_dofs()];
    let mut recovery = Vec::with_capacity(locals.len());
    for (e, item) in locals.into_iter().enumerate() {
        let (schur, r, rec) = item?;
        let slots = space.local_trace_slots(e);
        for (i, si) in slots.iter().enumerate().take(space.dim() + 1) {
            let Some(si) = *si else { continue };
            for m in 0..nl {
                rhs[si * nl + m] += r[i * nl + m];
            }
            for (j, sj) in slots.iter().enumerate().take(space.dim() + 1) {
                let Some(sj) = *sj else { continue };
                let slot = structure.pattern.find(si, sj).expect("face pair shares an element");
                let blk = matrix.block_mut(slot);
                for a in 0..nl {
                    for c in 0..nl {
                        blk[a * nl + c] += schur[(i * nl + a, j * nl + c)];
                    }
                }
            }
        }
        recovery.push(rec);
    }
    Ok(GlobalTraceSystem {
        matrix,
        rhs,
        recovery,
        boundary_trace: params.boundary_trace.map(|b| b.to_vec()),
    })
}

/// Residual tolerance of the trace solve for scalar type `T`.
pub fn trace_tolerance<T: Scalar>() -> T {
    T::lit(1e-10).max(T::epsilon() * T::lit(1e3))
}

/// Direct solve of the trace system with an explicit residual check.
pub fn solve_trace<T: Scalar>(system: &GlobalTraceSystem<T>, structure: &TraceStructure) -> Result<Vec<T>> {
    if system.rhs.is_empty() {
        return Ok(Vec::new());
    }
    if system.rhs.iter().all(|v| *v == T::zero()) {
        return Ok(vec![T::zero(); system.rhs.len()]);
    }
    let lu = BlockLu::factor(&system.matrix, structure.symbolic.clone())?;
    let x = lu.solve(&system.rhs);
    let res = relative_residual(&system.matrix, &x, &system.rhs);
    let tol = trace_tolerance::<T>();
    if !(res <= tol) {
        return Err(HdgError::TraceResidual {
            residual: res.to_f64_lossy(),
            tolerance: tol.to_f64_lossy(),
        });
    }
    Ok(x)
}

/// Back-substitutes the element unknowns from a solved trace.
pub fn recover_fields<T: Scalar>(disc: &Discretization<T>, system: &GlobalTraceSystem<T>, trace: Vec<T>, t: T) -> FieldState<T> {
    let space = &disc.space;
    let nq = space.nq();
    let parts: Vec<Vec<T>> = (0..space.mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let rec = &system.recovery[e];
            let mu = local_trace(disc, e, &trace, system.boundary_trace.as_deref());
            let xm = rec.x.matvec(&mu);
            rec.y.iter().zip(&xm).map(|(&a, &b)| a - b).collect()
        })
        .collect();
    let mut q = Vec::with_capacity(space.num_q_dofs());
    let mut u = Vec::with_capacity(space.num_u_dofs());
    for p in parts {
        q.extend_from_slice(&p[..nq]);
        u.extend_from_slice(&p[nq..]);
    }
    FieldState { t, u, q, trace }
}

/// Assemble, solve and recover one linearized step.
pub fn solve_step<T: Scalar>(
    disc: &Discretization<T>,
    structure: &TraceStructure,
    params: &StepParams<'_, T>,
    t: T,
) -> Result<FieldState<T>> {
    let system = assemble_condensed(disc, structure, params)?;
    let trace = solve_trace(&system, structure)?;
    Ok(recover_fields(disc, &system, trace, t))
}
