//! Discrete spaces `Q_h x V_h x V̂_h` on a mesh, with the reference tables
//! shared by all affine elements.

use crate::basis::{make_basis, BasisTable, ReferenceBasis};
use crate::dense::DenseMatrix;
use crate::error::{HdgError, Result};
use crate::mesh::{ElementGeometry, Mesh, Point};
use crate::quadrature::{make_quadrature, reference_measure, QuadratureRule, RefPoint, MAX_QUADRATURE_DEGREE};
use crate::Scalar;

/// Trace degree variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TraceMode {
    /// HDG-I: `l = k`.
    Equal,
    /// HDG-II: `l = k - 1`.
    Minus,
}

impl TraceMode {
    pub fn trace_degree(self, k: usize) -> usize {
        match self {
            TraceMode::Equal => k,
            TraceMode::Minus => k - 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            TraceMode::Equal => "HDG-I",
            TraceMode::Minus => "HDG-II",
        }
    }
}

/// Element length scale `h_K` entering the stabilization `tau = 1 / h_K`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TauRule {
    /// Shortest edge; equals the grid step on the uniform meshes.
    #[default]
    MinEdge,
    /// Longest edge (element diameter).
    Diameter,
}

impl TauRule {
    pub fn tau<T: Scalar>(self, g: &ElementGeometry<T>) -> T {
        match self {
            TauRule::MinEdge => T::one() / g.min_edge,
            TauRule::Diameter => T::one() / g.diameter,
        }
    }
}

/// Exactness degrees of the quadrature rules used by a space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QuadratureOrders {
    /// Element and face matrices, including the convection terms.
    pub matrix: usize,
    /// Load vectors and projections of non-polynomial data.
    pub load: usize,
    /// Error norms against exact solutions.
    pub error: usize,
}

impl QuadratureOrders {
    pub fn for_degree(k: usize) -> Self {
        Self {
            matrix: (3 * k + 2).min(MAX_QUADRATURE_DEGREE),
            load: (2 * k + 8).min(MAX_QUADRATURE_DEGREE),
            error: (2 * k + 8).min(MAX_QUADRATURE_DEGREE),
        }
    }
}

/// A volume rule with the scalar and flux bases tabulated at its points.
#[derive(Clone, Debug)]
pub struct VolumeTables<T> {
    pub rule: QuadratureRule<T>,
    pub u: BasisTable<T>,
    pub q: BasisTable<T>,
}

/// Element bases restricted to one local face seen through one vertex permutation.
#[derive(Clone, Debug)]
pub struct FaceTables<T> {
    pub local_face: usize,
    pub perm: [usize; 3],
    /// Face quadrature points in element reference coordinates.
    pub points: Vec<RefPoint<T>>,
    pub u: DenseMatrix<T>,
    pub q: DenseMatrix<T>,
}

#[derive(Clone, Debug)]
pub struct HdgSpace<T> {
    pub mesh: Mesh<T>,
    pub k: usize,
    pub l: usize,
    pub mode: TraceMode,
    pub orders: QuadratureOrders,
    pub u_basis: ReferenceBasis<T>,
    pub q_basis: ReferenceBasis<T>,
    pub trace_basis: ReferenceBasis<T>,
    pub matrix_tables: VolumeTables<T>,
    pub load_tables: VolumeTables<T>,
    pub error_tables: VolumeTables<T>,
    pub face_rule: QuadratureRule<T>,
    pub load_face_rule: QuadratureRule<T>,
    /// Trace basis at `face_rule` points.
    pub trace_values: DenseMatrix<T>,
    /// Trace basis at `load_face_rule` points.
    pub trace_load_values: DenseMatrix<T>,
    pub face_tables: Vec<FaceTables<T>>,
    /// Index into `face_tables` for every (element, local face).
    pub face_table_of: Vec<[usize; 4]>,
    pub tau_rule: TauRule,
    /// Stabilization `tau = 1 / h_K` per element.
    pub tau: Vec<T>,
}

impl<T: Scalar> HdgSpace<T> {
    pub fn new(mesh: Mesh<T>, k: usize, mode: TraceMode) -> Result<Self> {
        Self::with_options(mesh, k, mode, QuadratureOrders::for_degree(k), TauRule::default())
    }

    pub fn with_options(
        mesh: Mesh<T>,
        k: usize,
        mode: TraceMode,
        orders: QuadratureOrders,
        tau_rule: TauRule,
    ) -> Result<Self> {
        let dim = mesh.dim;
        if k == 0 {
            return Err(HdgError::UnsupportedDegree { dim, degree: 0 });
        }
        let l = mode.trace_degree(k);
        let u_basis = make_basis::<T>(dim, k)?;
        let q_basis = make_basis::<T>(dim, k - 1)?;
        let trace_basis = make_basis::<T>(dim - 1, l)?;
        let volume = |deg: usize| -> Result<VolumeTables<T>> {
            let rule = make_quadrature::<T>(dim, deg)?;
            Ok(VolumeTables {
                u: u_basis.tabulate(&rule.points),
                q: q_basis.tabulate(&rule.points),
                rule,
            })
        };
        let matrix_tables = volume(orders.matrix)?;
        let load_tables = volume(orders.load)?;
        let error_tables = volume(orders.error)?;
        let face_rule = make_quadrature::<T>(dim - 1, orders.matrix)?;
        let load_face_rule = make_quadrature::<T>(dim - 1, orders.load)?;
        let trace_values = trace_basis.tabulate(&face_rule.points).values;
        let trace_load_values = trace_basis.tabulate(&load_face_rule.points).values;

        let mut face_tables: Vec<FaceTables<T>> = Vec::new();
        let mut face_table_of = Vec::with_capacity(mesh.num_elements());
        for links in &mesh.elem_to_faces {
            let mut idx = [usize::MAX; 4];
            for (i, link) in links.iter().enumerate().take(dim + 1) {
                let found = face_tables
                    .iter()
                    .position(|t| t.local_face == i && t.perm == link.perm);
                idx[i] = match found {
                    Some(p) => p,
                    None => {
                        let points: Vec<RefPoint<T>> = face_rule
                            .points
                            .iter()
                            .map(|s| face_to_element_ref(dim, &link.perm, s))
                            .collect();
                        face_tables.push(FaceTables {
                            local_face: i,
                            perm: link.perm,
                            u: u_basis.tabulate(&points).values,
                            q: q_basis.tabulate(&points).values,
                            points,
                        });
                        face_tables.len() - 1
                    }
                };
            }
            face_table_of.push(idx);
        }
        let tau = mesh.geometry.iter().map(|g| tau_rule.tau(g)).collect();
        Ok(Self {
            mesh,
            k,
            l,
            mode,
            orders,
            u_basis,
            q_basis,
            trace_basis,
            matrix_tables,
            load_tables,
            error_tables,
            face_rule,
            load_face_rule,
            trace_values,
            trace_load_values,
            face_tables,
            face_table_of,
            tau_rule,
            tau,
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.mesh.dim
    }

    /// Scalar unknowns per element.
    #[inline]
    pub fn nu(&self) -> usize {
        self.u_basis.size()
    }

    /// Scalar members of the flux basis (per component).
    #[inline]
    pub fn nq_scalar(&self) -> usize {
        self.q_basis.size()
    }

    /// Flux unknowns per element (`dim` components).
    #[inline]
    pub fn nq(&self) -> usize {
        self.dim() * self.q_basis.size()
    }

    /// Trace unknowns per face.
    #[inline]
    pub fn nl(&self) -> usize {
        self.trace_basis.size()
    }

    /// Trace unknowns on the faces of one element.
    #[inline]
    pub fn nl_local(&self) -> usize {
        (self.dim() + 1) * self.nl()
    }

    pub fn num_u_dofs(&self) -> usize {
        self.mesh.num_elements() * self.nu()
    }

    pub fn num_q_dofs(&self) -> usize {
        self.mesh.num_elements() * self.nq()
    }

    pub fn num_trace_dofs(&self) -> usize {
        self.mesh.num_interior_faces() * self.nl()
    }

    /// Ratio of physical face measure to reference face measure.
    #[inline]
    pub fn face_jacobian(&self, face: usize) -> T {
        self.mesh.face_measure[face] / reference_measure::<T>(self.dim() - 1)
    }

    /// Physical point of a face reference point in canonical vertex order.
    pub fn face_point(&self, face: usize, s: &RefPoint<T>) -> Point<T> {
        let dim = self.dim();
        let verts = &self.mesh.faces[face].vertices;
        let mut lam = [T::zero(); 3];
        lam[0] = T::one() - s[..dim - 1].iter().fold(T::zero(), |a, &b| a + b);
        lam[1..dim].copy_from_slice(&s[..dim - 1]);
        let mut x = [T::zero(); 3];
        for j in 0..dim {
            let v = self.mesh.vertices[verts[j]];
            for c in 0..3 {
                x[c] += lam[j] * v[c];
            }
        }
        x
    }

    /// `J^{-1} 1`: contracting it with a reference gradient gives `(1, .., 1) . grad`.
    pub fn transport_direction(&self, elem: usize) -> [T; 3] {
        let jt = &self.mesh.geometry[elem].map.jac_inv_t;
        let mut a = [T::zero(); 3];
        for (r, ar) in a.iter_mut().enumerate().take(self.dim()) {
            for row in jt.iter().take(self.dim()) {
                *ar += row[r];
            }
        }
        a
    }

    #[inline]
    pub fn u_range(&self, elem: usize) -> std::ops::Range<usize> {
        elem * self.nu()..(elem + 1) * self.nu()
    }

    #[inline]
    pub fn q_range(&self, elem: usize) -> std::ops::Range<usize> {
        elem * self.nq()..(elem + 1) * self.nq()
    }

    /// Trace slot for each local face of `elem` (`None` on the boundary).
    pub fn local_trace_slots(&self, elem: usize) -> [Option<usize>; 4] {
        let mut out = [None; 4];
        for (i, link) in self.mesh.elem_to_faces[elem].iter().enumerate().take(self.dim() + 1) {
            out[i] = self.mesh.trace_slot[link.face];
        }
        out
    }

    /// Gathers the element-local trace vector (zeros on boundary faces).
    pub fn gather_trace(&self, elem: usize, trace: &[T]) -> Vec<T> {
        let nl = self.nl();
        let mut out = vec![T::zero(); self.nl_local()];
        for (i, slot) in self.local_trace_slots(elem).iter().enumerate().take(self.dim() + 1) {
            if let Some(s) = slot {
                out[i * nl..(i + 1) * nl].copy_from_slice(&trace[s * nl..(s + 1) * nl]);
            }
        }
        out
    }
}

/// Maps a point of the canonical face reference simplex to element reference
/// coordinates through the stored vertex permutation.
pub fn face_to_element_ref<T: Scalar>(dim: usize, perm: &[usize; 3], s: &RefPoint<T>) -> RefPoint<T> {
    let mut bary = [T::zero(); 4];
    let mut lam0 = T::one();
    for j in 1..dim {
        bary[perm[j]] = s[j - 1];
        lam0 -= s[j - 1];
    }
    bary[perm[0]] = lam0;
    let mut xi = [T::zero(); 3];
    xi[..dim].copy_from_slice(&bary[1..=dim]);
    xi
}
