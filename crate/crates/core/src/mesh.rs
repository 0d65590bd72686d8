//! Uniform simplicial meshes of the unit square and unit cube.
//!
//! The square is split into `M x M` cells, each cut by its lower-left to
//! upper-right diagonal. The cube is split into `M^3` cells, each carrying the
//! six-tetrahedron Kuhn (Freudenthal) triangulation.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{HdgError, Result};
use crate::Scalar;

/// Physical coordinates, padded with zeros in 2D.
pub type Point<T> = [T; 3];

const NONE: usize = usize::MAX;

/// Reference-to-physical affine map `x = origin + jac * xi`.
#[derive(Clone, Copy, Debug)]
pub struct AffineMap<T> {
    pub origin: Point<T>,
    /// Column `c` is the edge vector from vertex 0 to vertex `c + 1`.
    pub jac: [[T; 3]; 3],
    /// Inverse-transpose of `jac`, mapping reference gradients to physical.
    pub jac_inv_t: [[T; 3]; 3],
    pub det: T,
}

impl<T: Scalar> AffineMap<T> {
    pub fn apply(&self, xi: &Point<T>) -> Point<T> {
        let mut x = self.origin;
        for r in 0..3 {
            for c in 0..3 {
                x[r] += self.jac[r][c] * xi[c];
            }
        }
        x
    }

    /// Physical gradient from a reference gradient.
    #[inline]
    pub fn push_gradient(&self, g: &[T; 3]) -> [T; 3] {
        let mut out = [T::zero(); 3];
        for r in 0..3 {
            for c in 0..3 {
                out[r] += self.jac_inv_t[r][c] * g[c];
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ElementGeometry<T> {
    pub measure: T,
    pub diameter: T,
    /// Shortest edge length.
    pub min_edge: T,
    pub map: AffineMap<T>,
}

/// Link from an element's local face to the global face.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FaceLink {
    pub face: usize,
    /// `perm[j]` is the element-local vertex at canonical face vertex `j`.
    pub perm: [usize; 3],
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Face {
    /// Global vertex indices in increasing order (unused slots are `usize::MAX`).
    pub vertices: [usize; 3],
    pub boundary: bool,
    /// Adjacent `(element, local face)` pairs; the second is absent on the boundary.
    pub neighbors: [(usize, usize); 2],
}

#[derive(Clone, Debug)]
pub struct Mesh<T> {
    pub dim: usize,
    pub divisions: usize,
    pub vertices: Vec<Point<T>>,
    /// Positively oriented vertex tuples (`dim + 1` entries used).
    pub elements: Vec<[usize; 4]>,
    pub faces: Vec<Face>,
    pub elem_to_faces: Vec<[FaceLink; 4]>,
    pub geometry: Vec<ElementGeometry<T>>,
    pub face_diameter: Vec<T>,
    pub face_measure: Vec<T>,
    /// Outward unit normal per (element, local face).
    pub normals: Vec<[Point<T>; 4]>,
    /// Trace unknown slot of each face; `None` on the boundary.
    pub trace_slot: Vec<Option<usize>>,
    /// Interior faces in slot order.
    pub interior_faces: Vec<usize>,
}

/// Builds the uniform mesh with `divisions` cells per direction.
pub fn build_uniform_mesh<T: Scalar>(dim: usize, divisions: usize) -> Result<Mesh<T>> {
    if divisions == 0 {
        return Err(HdgError::InvalidMesh("M must be at least 1".into()));
    }
    let m = divisions;
    let inv = T::one() / T::of(m);
    let (vertices, elements) = match dim {
        2 => {
            let id = |i: usize, j: usize| j * (m + 1) + i;
            let mut vs = Vec::with_capacity((m + 1) * (m + 1));
            for j in 0..=m {
                for i in 0..=m {
                    vs.push([T::of(i) * inv, T::of(j) * inv, T::zero()]);
                }
            }
            let mut es = Vec::with_capacity(2 * m * m);
            for j in 0..m {
                for i in 0..m {
                    let (v00, v10, v01, v11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
                    es.push([v00, v10, v11, NONE]);
                    es.push([v00, v11, v01, NONE]);
                }
            }
            (vs, es)
        }
        3 => {
            let id = |i: usize, j: usize, k: usize| (k * (m + 1) + j) * (m + 1) + i;
            let mut vs = Vec::with_capacity((m + 1).pow(3));
            for k in 0..=m {
                for j in 0..=m {
                    for i in 0..=m {
                        vs.push([T::of(i) * inv, T::of(j) * inv, T::of(k) * inv]);
                    }
                }
            }
            const PERMS: [[usize; 3]; 6] = [
                [0, 1, 2],
                [0, 2, 1],
                [1, 0, 2],
                [1, 2, 0],
                [2, 0, 1],
                [2, 1, 0],
            ];
            let mut es = Vec::with_capacity(6 * m * m * m);
            for k in 0..m {
                for j in 0..m {
                    for i in 0..m {
                        for perm in PERMS {
                            let mut c = [i, j, k];
                            let mut tet = [id(c[0], c[1], c[2]), 0, 0, 0];
                            for (s, &axis) in perm.iter().enumerate() {
                                c[axis] += 1;
                                tet[s + 1] = id(c[0], c[1], c[2]);
                            }
                            es.push(tet);
                        }
                    }
                }
            }
            (vs, es)
        }
        _ => return Err(HdgError::InvalidMesh(format!("dimension {dim} not in {{2, 3}}"))),
    };
    Mesh::from_simplices(dim, divisions, vertices, elements)
}

impl<T: Scalar> Mesh<T> {
    /// Builds connectivity and geometry; reorients negatively oriented simplices.
    pub fn from_simplices(
        dim: usize,
        divisions: usize,
        vertices: Vec<Point<T>>,
        mut elements: Vec<[usize; 4]>,
    ) -> Result<Self> {
        let nv = dim + 1;
        let mut geometry = Vec::with_capacity(elements.len());
        for (e, el) in elements.iter_mut().enumerate() {
            let mut g = affine_map(dim, &vertices, el);
            if g.det < T::zero() {
                el.swap(dim - 1, dim);
                g = affine_map(dim, &vertices, el);
            }
            let fact: usize = (1..=dim).product();
            let measure = g.det / T::of(fact);
            let scale = (0..nv)
                .flat_map(|a| (0..dim).map(move |c| (a, c)))
                .fold(T::zero(), |s, (a, c)| s.max(vertices[el[a]][c].abs()))
                .max(T::one());
            if !(measure > T::epsilon() * scale.powi(dim as i32)) {
                return Err(HdgError::DegenerateElement(e));
            }
            let mut diameter = T::zero();
            let mut min_edge = T::infinity();
            for a in 0..nv {
                for b in a + 1..nv {
                    let d = distance(&vertices[el[a]], &vertices[el[b]]);
                    diameter = diameter.max(d);
                    min_edge = min_edge.min(d);
                }
            }
            geometry.push(ElementGeometry {
                measure,
                diameter,
                min_edge,
                map: g,
            });
        }

        let mut lookup: HashMap<[usize; 3], usize> = HashMap::new();
        let mut faces: Vec<Face> = Vec::new();
        let mut elem_to_faces = Vec::with_capacity(elements.len());
        for (e, el) in elements.iter().enumerate() {
            let mut links = [FaceLink {
                face: NONE,
                perm: [NONE; 3],
            }; 4];
            for (i, link) in links.iter_mut().enumerate().take(nv) {
                let mut locals: Vec<usize> = (0..nv).filter(|&a| a != i).collect();
                locals.sort_by_key(|&a| el[a]);
                let mut key = [NONE; 3];
                let mut perm = [NONE; 3];
                for (j, &a) in locals.iter().enumerate() {
                    key[j] = el[a];
                    perm[j] = a;
                }
                let f = *lookup.entry(key).or_insert_with(|| {
                    faces.push(Face {
                        vertices: key,
                        boundary: true,
                        neighbors: [(e, i), (NONE, NONE)],
                    });
                    faces.len() - 1
                });
                if faces[f].neighbors[0].0 != e {
                    if faces[f].neighbors[1].0 != NONE {
                        return Err(HdgError::InvalidMesh(format!(
                            "face {f} shared by more than two elements"
                        )));
                    }
                    faces[f].neighbors[1] = (e, i);
                    faces[f].boundary = false;
                }
                *link = FaceLink { face: f, perm };
            }
            elem_to_faces.push(links);
        }

        let mut face_diameter = Vec::with_capacity(faces.len());
        let mut face_measure = Vec::with_capacity(faces.len());
        for f in &faces {
            let vs: Vec<&Point<T>> = f.vertices[..dim].iter().map(|&v| &vertices[v]).collect();
            let mut diam = T::zero();
            for a in 0..dim {
                for b in a + 1..dim {
                    diam = diam.max(distance(vs[a], vs[b]));
                }
            }
            face_diameter.push(diam);
            let meas = if dim == 2 {
                distance(vs[0], vs[1])
            } else {
                let u = sub(vs[1], vs[0]);
                let v = sub(vs[2], vs[0]);
                norm(&cross(&u, &v)) / T::lit(2.0)
            };
            face_measure.push(meas);
        }

        let normals = geometry
            .iter()
            .map(|g| {
                let mut ns = [[T::zero(); 3]; 4];
                for (i, n) in ns.iter_mut().enumerate().take(nv) {
                    // Outward normal of the face opposite vertex i is -grad(lambda_i).
                    let mut grad = [T::zero(); 3];
                    if i == 0 {
                        for c in 0..dim {
                            let e = unit(c);
                            let gc = g.map.push_gradient(&e);
                            for r in 0..3 {
                                grad[r] -= gc[r];
                            }
                        }
                    } else {
                        grad = g.map.push_gradient(&unit(i - 1));
                    }
                    let len = norm(&grad);
                    for r in 0..3 {
                        n[r] = -grad[r] / len;
                    }
                }
                ns
            })
            .collect();

        let mut trace_slot = vec![None; faces.len()];
        let mut interior_faces = Vec::new();
        for (f, face) in faces.iter().enumerate() {
            if !face.boundary {
                trace_slot[f] = Some(interior_faces.len());
                interior_faces.push(f);
            }
        }

        Ok(Self {
            dim,
            divisions,
            vertices,
            elements,
            faces,
            elem_to_faces,
            geometry,
            face_diameter,
            face_measure,
            normals,
            trace_slot,
            interior_faces,
        })
    }

    #[inline]
    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    #[inline]
    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    #[inline]
    pub fn num_interior_faces(&self) -> usize {
        self.interior_faces.len()
    }

    pub fn num_boundary_faces(&self) -> usize {
        self.faces.iter().filter(|f| f.boundary).count()
    }

    /// Local vertices of element `e` that span the simplex.
    pub fn element_vertices(&self, e: usize) -> &[usize] {
        &self.elements[e][..=self.dim]
    }

    /// `(measure, h_K, affine map)` of element `e`.
    pub fn element_geometry(&self, e: usize) -> Result<(T, T, AffineMap<T>)> {
        let g = self
            .geometry
            .get(e)
            .ok_or_else(|| HdgError::InvalidArgument(format!("element index {e} out of range")))?;
        Ok((g.measure, g.diameter, g.map))
    }

    /// Mesh size `h = max h_K`.
    pub fn mesh_size(&self) -> T {
        self.geometry.iter().fold(T::zero(), |h, g| h.max(g.diameter))
    }

    /// Debug dump: `dim M nv ne nf`, then vertex and element lines.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} {} {} {} {}",
            self.dim,
            self.divisions,
            self.vertices.len(),
            self.elements.len(),
            self.faces.len()
        );
        for v in &self.vertices {
            let coords: Vec<String> = v[..self.dim].iter().map(|c| format!("{c}")).collect();
            let _ = writeln!(s, "{}", coords.join(" "));
        }
        for e in 0..self.num_elements() {
            let ids: Vec<String> = self.element_vertices(e).iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "{}", ids.join(" "));
        }
        s
    }
}

fn affine_map<T: Scalar>(dim: usize, vertices: &[Point<T>], el: &[usize; 4]) -> AffineMap<T> {
    let origin = vertices[el[0]];
    let mut jac = [[T::zero(); 3]; 3];
    for c in 0..3 {
        if c < dim {
            let v = vertices[el[c + 1]];
            for r in 0..3 {
                jac[r][c] = v[r] - origin[r];
            }
        } else {
            jac[c][c] = T::one();
        }
    }
    let det = det3(&jac);
    let inv = inverse3(&jac, det);
    let mut jac_inv_t = [[T::zero(); 3]; 3];
    for r in 0..dim {
        for c in 0..dim {
            jac_inv_t[r][c] = inv[c][r];
        }
    }
    AffineMap {
        origin,
        jac,
        jac_inv_t,
        det,
    }
}

fn det3<T: Scalar>(a: &[[T; 3]; 3]) -> T {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

fn inverse3<T: Scalar>(a: &[[T; 3]; 3], det: T) -> [[T; 3]; 3] {
    let mut inv = [[T::zero(); 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            let (r1, r2) = ((c + 1) % 3, (c + 2) % 3);
            let (c1, c2) = ((r + 1) % 3, (r + 2) % 3);
            inv[r][c] = (a[r1][c1] * a[r2][c2] - a[r1][c2] * a[r2][c1]) / det;
        }
    }
    inv
}

fn unit<T: Scalar>(c: usize) -> [T; 3] {
    let mut e = [T::zero(); 3];
    e[c] = T::one();
    e
}

fn sub<T: Scalar>(a: &Point<T>, b: &Point<T>) -> Point<T> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross<T: Scalar>(a: &Point<T>, b: &Point<T>) -> Point<T> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm<T: Scalar>(a: &Point<T>) -> T {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn distance<T: Scalar>(a: &Point<T>, b: &Point<T>) -> T {
    norm(&sub(a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_square() {
        let m = build_uniform_mesh::<f64>(2, 1).unwrap();
        assert_eq!(m.num_elements(), 2);
        assert_eq!(m.num_faces(), 5);
        assert_eq!(m.num_boundary_faces(), 4);
        assert_eq!(m.num_interior_faces(), 1);
    }

    #[test]
    fn element_counts() {
        let m = build_uniform_mesh::<f64>(2, 4).unwrap();
        assert_eq!(m.num_elements(), 32);
        let m = build_uniform_mesh::<f64>(3, 2).unwrap();
        assert_eq!(m.num_elements(), 48);
        let vol: f64 = m.geometry.iter().map(|g| g.measure).sum();
        assert!((vol - 1.0).abs() < 1e-12);
    }

    #[test]
    fn element_geometry_values() {
        let m = build_uniform_mesh::<f64>(2, 4).unwrap();
        for e in 0..m.num_elements() {
            let (meas, h, map) = m.element_geometry(e).unwrap();
            assert!((meas - 1.0 / 32.0).abs() < 1e-15);
            assert!((h - 2f64.sqrt() / 4.0).abs() < 1e-15);
            assert!(map.det > 0.0);
        }
        let m = build_uniform_mesh::<f64>(3, 2).unwrap();
        for e in 0..m.num_elements() {
            let (meas, _, map) = m.element_geometry(e).unwrap();
            assert!((meas - 1.0 / 48.0).abs() < 1e-15);
            assert!(map.det > 0.0);
            // vertex images
            let v = m.element_vertices(e);
            let x3 = map.apply(&[0.0, 0.0, 1.0]);
            for c in 0..3 {
                assert!((x3[c] - m.vertices[v[3]][c]).abs() < 1e-15);
            }
        }
        assert!(m.element_geometry(1000).is_err());
    }

    #[test]
    fn rejects_bad_requests() {
        assert!(build_uniform_mesh::<f64>(2, 0).is_err());
        assert!(build_uniform_mesh::<f64>(4, 2).is_err());
        let verts = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]];
        let err = Mesh::from_simplices(2, 1, verts, vec![[0, 1, 2, NONE]]);
        assert!(matches!(err, Err(HdgError::DegenerateElement(0))));
    }

    fn check_invariants(m: &Mesh<f64>) {
        let d = m.dim;
        let mut refs = vec![0usize; m.num_faces()];
        for links in &m.elem_to_faces {
            for l in &links[..=d] {
                refs[l.face] += 1;
            }
        }
        for (f, face) in m.faces.iter().enumerate() {
            assert_eq!(refs[f], if face.boundary { 1 } else { 2 });
        }
        let total: f64 = m.geometry.iter().map(|g| g.measure).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for e in 0..m.num_elements() {
            let mut s = [0.0; 3];
            for i in 0..=d {
                let a = m.face_measure[m.elem_to_faces[e][i].face];
                for c in 0..3 {
                    s[c] += a * m.normals[e][i][c];
                }
            }
            assert!(s.iter().all(|v| v.abs() < 1e-12));
            let h = m.geometry[e].diameter;
            assert!(h > 0.0);
            for i in 0..=d {
                assert!(m.face_diameter[m.elem_to_faces[e][i].face] <= h + 1e-15);
            }
        }
        // simplicial identity: (d+1) * #elements = 2 * #interior + #boundary
        let nb = m.num_boundary_faces();
        assert_eq!((d + 1) * m.num_elements() + nb, 2 * m.num_faces());
        for face in m.faces.iter().filter(|f| !f.boundary) {
            let (e0, i0) = face.neighbors[0];
            let (e1, i1) = face.neighbors[1];
            for c in 0..3 {
                assert!((m.normals[e0][i0][c] + m.normals[e1][i1][c]).abs() < 1e-12);
            }
        }
        // Normals point away from the opposite vertex.
        for e in 0..m.num_elements() {
            let v = m.element_vertices(e);
            for i in 0..=d {
                let f = &m.faces[m.elem_to_faces[e][i].face];
                let on_face = m.vertices[f.vertices[0]];
                let opp = m.vertices[v[i]];
                let dot: f64 = (0..3).map(|c| (on_face[c] - opp[c]) * m.normals[e][i][c]).sum();
                assert!(dot > 0.0);
            }
        }
    }

    #[test]
    fn connectivity_invariants() {
        for (d, mm) in [(2, 1), (2, 3), (2, 8), (3, 1), (3, 2), (3, 3)] {
            check_invariants(&build_uniform_mesh(d, mm).unwrap());
        }
    }

    #[test]
    fn deterministic_rebuild() {
        let a = build_uniform_mesh::<f64>(3, 2).unwrap();
        let b = build_uniform_mesh::<f64>(3, 2).unwrap();
        assert_eq!(a.dump(), b.dump());
        assert_eq!(a.faces, b.faces);
        assert_eq!(a.elem_to_faces, b.elem_to_faces);
        let bits = |m: &Mesh<f64>| -> Vec<u64> {
            m.normals.iter().flatten().flatten().map(|v| v.to_bits()).collect()
        };
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn dump_header() {
        let m = build_uniform_mesh::<f64>(2, 1).unwrap();
        let s = m.dump();
        assert_eq!(s.lines().next().unwrap(), "2 1 4 2 5");
        assert_eq!(s.lines().count(), 1 + 4 + 2);
    }
}
