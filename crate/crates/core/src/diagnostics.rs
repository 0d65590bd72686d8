//! Verification utilities: the uncondensed three-field system on tiny meshes
//! and stability monitors for time-marching runs.

use crate::condensed::{local_system, StepParams};
use crate::dense::DenseMatrix;
use crate::error::{HdgError, Result};
use crate::local::Discretization;
use crate::projection::FieldState;
use crate::timestep::Trajectory;
use crate::Scalar;

/// Largest mesh accepted by the dense oracle.
pub const ORACLE_MAX_ELEMENTS: usize = 16;

/// Dense system over all `(q, u, trace)` unknowns, ordered as every
/// element's `q`, then every element's `u`, then the interior-face trace.
#[derive(Clone, Debug)]
pub struct MonolithicSystem<T> {
    pub matrix: DenseMatrix<T>,
    pub rhs: Vec<T>,
    pub num_q: usize,
    pub num_u: usize,
    pub num_trace: usize,
}

impl<T: Scalar> MonolithicSystem<T> {
    pub fn size(&self) -> usize {
        self.num_q + self.num_u + self.num_trace
    }

    /// Dense LU solve, split back into fields.
    pub fn solve(&self, t: T) -> Result<FieldState<T>> {
        let lu = self
            .matrix
            .lu()
            .ok_or_else(|| HdgError::InvalidArgument("singular monolithic system".into()))?;
        let x = lu.solve(&self.rhs);
        let (q, rest) = x.split_at(self.num_q);
        let (u, trace) = rest.split_at(self.num_u);
        Ok(FieldState {
            t,
            u: u.to_vec(),
            q: q.to_vec(),
            trace: trace.to_vec(),
        })
    }

    /// Copy with the `q` rows multiplied by `-nu`. Without convection the
    /// result is symmetric.
    pub fn symmetrized(&self, nu: T) -> DenseMatrix<T> {
        let n = self.size();
        DenseMatrix::from_fn(n, n, |r, c| {
            let v = self.matrix[(r, c)];
            if r < self.num_q {
                -nu * v
            } else {
                v
            }
        })
    }

    /// Schur complement of [`Self::symmetrized`] onto `(u, trace)`.
    pub fn scalar_schur(&self, nu: T) -> Result<DenseMatrix<T>> {
        let s = self.symmetrized(nu);
        let (nq, n) = (self.num_q, self.size());
        let m = n - nq;
        let a = DenseMatrix::from_fn(nq, nq, |r, c| s[(r, c)]);
        let b = DenseMatrix::from_fn(nq, m, |r, c| s[(r, nq + c)]);
        let c = DenseMatrix::from_fn(m, nq, |r, cc| s[(nq + r, cc)]);
        let mut d = DenseMatrix::from_fn(m, m, |r, cc| s[(nq + r, nq + cc)]);
        let lu = a
            .lu()
            .ok_or_else(|| HdgError::InvalidArgument("singular flux mass block".into()))?;
        let mut p = c.matmul(&lu.solve_matrix(&b));
        p.scale(-T::one());
        d.add_assign(&p);
        Ok(d)
    }
}

/// Assembles the full system of one linearized step without condensation.
pub fn assemble_monolithic<T: Scalar>(disc: &Discretization<T>, params: &StepParams<'_, T>) -> Result<MonolithicSystem<T>> {
    let space = &disc.space;
    let ne = space.mesh.num_elements();
    if ne > ORACLE_MAX_ELEMENTS {
        return Err(HdgError::OracleSizeGuard(ne));
    }
    let (nq_tot, nu_tot, nt) = (space.num_q_dofs(), space.num_u_dofs(), space.num_trace_dofs());
    let n = nq_tot + nu_tot + nt;
    let (nq, nl, dim) = (space.nq(), space.nl(), space.dim());
    let mut matrix = DenseMatrix::zeros(n, n);
    let mut rhs = vec![T::zero(); n];
    for e in 0..ne {
        let sys = local_system(disc, e, params);
        let ni = sys.a_ii.rows();
        let interior: Vec<usize> = (0..ni)
            .map(|i| if i < nq { space.q_range(e).start + i } else { nq_tot + space.u_range(e).start + i - nq })
            .collect();
        // Local trace index -> global unknown, or the boundary value it carries.
        let mut trace_idx: Vec<Option<usize>> = vec![None; space.nl_local()];
        let mut known = vec![T::zero(); space.nl_local()];
        for (f, slot) in space.local_trace_slots(e).iter().enumerate().take(dim + 1) {
            for m in 0..nl {
                match slot {
                    Some(s) => trace_idx[f * nl + m] = Some(nq_tot + nu_tot + s * nl + m),
                    None => {
                        if let Some(bd) = params.boundary_trace {
                            let face = space.mesh.elem_to_faces[e][f].face;
                            known[f * nl + m] = bd[face * nl + m];
                        }
                    }
                }
            }
        }
        for (i, &gi) in interior.iter().enumerate() {
            rhs[gi] += sys.f_i[i];
            for (j, &gj) in interior.iter().enumerate() {
                matrix[(gi, gj)] += sys.a_ii[(i, j)];
            }
            for (j, tj) in trace_idx.iter().enumerate() {
                match tj {
                    Some(gj) => matrix[(gi, *gj)] += sys.a_il[(i, j)],
                    None => rhs[gi] -= sys.a_il[(i, j)] * known[j],
                }
            }
        }
        for (i, ti) in trace_idx.iter().enumerate() {
            let Some(gi) = *ti else { continue };
            for (j, &gj) in interior.iter().enumerate() {
                matrix[(gi, gj)] += sys.a_li[(i, j)];
            }
            for (j, tj) in trace_idx.iter().enumerate() {
                match tj {
                    Some(gj) => matrix[(gi, *gj)] += sys.a_ll[(i, j)],
                    None => rhs[gi] -= sys.a_ll[(i, j)] * known[j],
                }
            }
        }
    }
    Ok(MonolithicSystem {
        matrix,
        rhs,
        num_q: nq_tot,
        num_u: nu_tot,
        num_trace: nt,
    })
}

/// Cumulative quantities of the discrete energy estimate, indexed by step
/// (entry 0 is the initial state).
#[derive(Clone, Debug, PartialEq)]
pub struct StabilityTrace<T> {
    /// `||u_h^n||`.
    pub norms: Vec<T>,
    /// `sum_{i <= n} ||u^i - u^{i-1}||^2`.
    pub increments: Vec<T>,
    /// `nu dt sum_{i <= n} |||(u^i, trace^i)|||^2`.
    pub dissipation: Vec<T>,
    /// `(dt / nu) sum_{i <= n} ||f^i||^2`.
    pub data: Vec<T>,
}

impl<T: Scalar> StabilityTrace<T> {
    /// Builds the trace from a run made with monitoring enabled.
    pub fn from_trajectory(traj: &Trajectory<T>, nu: T) -> Result<Self> {
        let missing = || HdgError::InvalidArgument("stability trace needs a monitored run".into());
        let n = traj.records.len() + 1;
        let mut out = Self {
            norms: Vec::with_capacity(n),
            increments: Vec::with_capacity(n),
            dissipation: Vec::with_capacity(n),
            data: Vec::with_capacity(n),
        };
        out.norms.push(traj.initial_norm);
        out.increments.push(T::zero());
        out.dissipation.push(T::zero());
        out.data.push(T::zero());
        let (mut inc, mut dis, mut dat) = (T::zero(), T::zero(), T::zero());
        for r in &traj.records {
            inc += r.increment * r.increment;
            dis += nu * traj.dt * r.triple_norm_sq.ok_or_else(missing)?;
            dat += traj.dt / nu * r.forcing_norm_sq.ok_or_else(missing)?;
            out.norms.push(r.norm_u);
            out.increments.push(inc);
            out.dissipation.push(dis);
            out.data.push(dat);
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    /// Left side of the estimate at step `n`.
    pub fn lhs(&self, n: usize) -> T {
        self.norms[n] * self.norms[n] + self.increments[n] + self.dissipation[n]
    }

    pub fn is_valid(&self) -> bool {
        [&self.norms, &self.increments, &self.dissipation, &self.data]
            .iter()
            .all(|v| v.len() == self.norms.len() && v.iter().all(|x| x.is_finite() && *x >= T::zero()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityVerdict<T> {
    pub pass: bool,
    /// `max_n lhs_n / rhs_n`; the check passes when it is at most `C`.
    pub margin: T,
    /// First step violating the bound or the monotonicity requirement.
    pub first_violation: Option<usize>,
    /// Whether the monotonicity test applied (zero forcing).
    pub monotone_checked: bool,
}

/// Checks `lhs_n <= C (||u_h^0||^2 + data_n)` for every `n`, and with zero
/// forcing also `||u_h^n|| <= ||u_h^{n-1}||`.
pub fn check_stability<T: Scalar>(trace: &StabilityTrace<T>, u0_norm: T, c: T) -> StabilityVerdict<T> {
    let mut margin = T::zero();
    let mut first_violation = None;
    let valid = trace.is_valid();
    let unforced = trace.data.iter().all(|&d| d == T::zero());
    for n in 0..trace.len() {
        let lhs = trace.lhs(n);
        let rhs = u0_norm * u0_norm + trace.data[n];
        let ratio = if rhs > T::zero() {
            lhs / rhs
        } else if lhs > T::zero() {
            T::infinity()
        } else {
            T::zero()
        };
        margin = margin.max(ratio);
        let decays = !unforced || n == 0 || trace.norms[n] <= trace.norms[n - 1];
        if first_violation.is_none() && (!(ratio <= c) || !decays) {
            first_violation = Some(n);
        }
    }
    StabilityVerdict {
        pass: valid && first_violation.is_none(),
        margin,
        first_violation,
        monotone_checked: unforced,
    }
}
