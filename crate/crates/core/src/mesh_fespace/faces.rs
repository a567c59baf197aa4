use std::collections::HashMap;

use super::{lex_linear, HighOrderMesh, MeshError};

/// A face shared by two elements. `qmap[i]` is the index, in element 1's
/// face-point numbering, of face point `i` of element 0.
#[derive(Debug, Clone, PartialEq)]
pub struct InteriorFace {
    pub elem: [usize; 2],
    pub local_face: [usize; 2],
    pub qmap: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFace {
    pub elem: usize,
    pub local_face: usize,
}

/// Face connectivity. Local face `f` of an element lies on reference plane
/// `ξ_{f/2} = ±1` (minus for even `f`); its points are numbered
/// lexicographically over the remaining axes in increasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceTopology {
    pub dim: usize,
    pub nq1d: usize,
    pub interior: Vec<InteriorFace>,
    pub boundary: Vec<BoundaryFace>,
    pub neighbors: Vec<Vec<usize>>,
}

pub fn face_axis(local_face: usize) -> (usize, usize) {
    (local_face / 2, local_face % 2)
}

pub fn tangential_axes(dim: usize, axis: usize) -> Vec<usize> {
    (0..dim).filter(|&a| a != axis).collect()
}

/// Local node indices on face `f`, lexicographic over the tangential axes.
pub fn face_local_nodes(dim: usize, order: usize, local_face: usize) -> Vec<usize> {
    let (axis, side) = face_axis(local_face);
    let tang = tangential_axes(dim, axis);
    let n1d = order + 1;
    let nf = n1d.pow((dim - 1) as u32);
    (0..nf)
        .map(|t| {
            let mut idx = [0usize; 3];
            idx[axis] = side * order;
            let mut r = t;
            for &a in &tang {
                idx[a] = r % n1d;
                r /= n1d;
            }
            lex_linear(&idx[..dim], n1d)
        })
        .collect()
}

fn face_corners(mesh: &HighOrderMesh, e: usize, local_face: usize) -> Vec<usize> {
    let (axis, side) = face_axis(local_face);
    let tang = tangential_axes(mesh.dim, axis);
    let nodes = mesh.element_nodes(e);
    (0..1usize << (mesh.dim - 1))
        .map(|k| {
            let mut idx = [0usize; 3];
            idx[axis] = side * mesh.order;
            for (m, &a) in tang.iter().enumerate() {
                idx[a] = ((k >> m) & 1) * mesh.order;
            }
            nodes[lex_linear(&idx[..mesh.dim], mesh.order + 1)]
        })
        .collect()
}

impl FaceTopology {
    /// Build face connectivity with `points` (ascending, symmetric about 0)
    /// as the 1D face quadrature points.
    pub fn build(mesh: &HighOrderMesh, points: &[f64]) -> Result<Self, MeshError> {
        let dim = mesh.dim;
        let nq = points.len();
        let nfaces = 2 * dim;
        let mut seen: HashMap<Vec<usize>, (usize, usize)> = HashMap::new();
        let mut interior = Vec::new();
        let mut neighbors = vec![Vec::new(); mesh.num_elements];
        let mut paired: HashMap<Vec<usize>, bool> = HashMap::new();
        for e in 0..mesh.num_elements {
            for f in 0..nfaces {
                let corners = face_corners(mesh, e, f);
                let mut key = corners.clone();
                key.sort_unstable();
                match seen.get(&key) {
                    None => {
                        seen.insert(key, (e, f));
                    }
                    Some(&(e0, f0)) => {
                        if paired.insert(key.clone(), true).is_some() {
                            return Err(MeshError::Invalid(format!("face shared by more than two elements (element {e})")));
                        }
                        let qmap = Self::orientation(mesh, (e0, f0), (e, f), points)?;
                        interior.push(InteriorFace {
                            elem: [e0, e],
                            local_face: [f0, f],
                            qmap,
                        });
                        neighbors[e0].push(e);
                        neighbors[e].push(e0);
                    }
                }
            }
        }
        let mut boundary: Vec<BoundaryFace> = seen
            .iter()
            .filter(|(k, _)| !paired.contains_key(*k))
            .map(|(_, &(elem, local_face))| BoundaryFace { elem, local_face })
            .collect();
        boundary.sort_by_key(|b| (b.elem, b.local_face));
        for n in neighbors.iter_mut() {
            n.sort_unstable();
        }
        let _ = nq;
        Ok(Self {
            dim,
            nq1d: nq,
            interior,
            boundary,
            neighbors,
        })
    }

    fn orientation(
        mesh: &HighOrderMesh,
        a: (usize, usize),
        b: (usize, usize),
        points: &[f64],
    ) -> Result<Vec<usize>, MeshError> {
        let fd = mesh.dim - 1;
        let ca = face_corners(mesh, a.0, a.1);
        let cb = face_corners(mesh, b.0, b.1);
        // Reference coordinates (±1) of each of A's corners on B's face.
        let image = |k: usize| -> Result<[f64; 2], MeshError> {
            let kb = cb
                .iter()
                .position(|&g| g == ca[k])
                .ok_or_else(|| MeshError::Invalid("mismatched face corners".into()))?;
            let mut p = [0.0; 2];
            for (m, v) in p.iter_mut().enumerate().take(fd) {
                *v = if (kb >> m) & 1 == 1 { 1.0 } else { -1.0 };
            }
            Ok(p)
        };
        let origin = image(0)?;
        let mut edges = [[0.0; 2]; 2];
        for m in 0..fd {
            let pm = image(1 << m)?;
            for j in 0..fd {
                edges[m][j] = pm[j] - origin[j];
            }
        }
        let nq = points.len();
        let nfp = nq.pow(fd as u32);
        let locate = |x: f64| -> Result<usize, MeshError> {
            points
                .iter()
                .position(|&p| (p - x).abs() < 1e-10)
                .ok_or_else(|| MeshError::Invalid("face points are not symmetric".into()))
        };
        (0..nfp)
            .map(|i| {
                let mut eta = [0.0; 2];
                let mut r = i;
                for v in eta.iter_mut().take(fd) {
                    *v = points[r % nq];
                    r /= nq;
                }
                let mut j_lin = 0;
                for j in (0..fd).rev() {
                    let mut x = origin[j];
                    for m in 0..fd {
                        x += edges[m][j] * 0.5 * (eta[m] + 1.0);
                    }
                    j_lin = j_lin * nq + locate(x)?;
                }
                Ok(j_lin)
            })
            .collect()
    }

    /// Mesh nodes lying on the domain boundary.
    pub fn boundary_nodes(&self, mesh: &HighOrderMesh) -> Vec<bool> {
        let mut mask = vec![false; mesh.num_nodes];
        for bf in &self.boundary {
            let nodes = mesh.element_nodes(bf.elem);
            for l in face_local_nodes(mesh.dim, mesh.order, bf.local_face) {
                mask[nodes[l]] = true;
            }
        }
        mask
    }

    /// Essential velocity constraints (`v·n = 0` on walls): component `c`
    /// of every node on a boundary face whose unit normal is aligned with
    /// axis `c`. Indexed like an H1 vector field (`c * num_nodes + node`).
    pub fn wall_mask(&self, mesh: &HighOrderMesh, positions: &[f64]) -> Vec<bool> {
        let d = mesh.dim;
        let nn = mesh.num_nodes;
        let mut mask = vec![false; d * nn];
        for bf in &self.boundary {
            let corners = face_corners(mesh, bf.elem, bf.local_face);
            let x = |k: usize, c: usize| positions[c * nn + corners[k]];
            let mut n = [0.0; 3];
            if d == 2 {
                n[0] = x(1, 1) - x(0, 1);
                n[1] = -(x(1, 0) - x(0, 0));
            } else {
                let u: Vec<f64> = (0..3).map(|c| x(1, c) - x(0, c)).collect();
                let v: Vec<f64> = (0..3).map(|c| x(2, c) - x(0, c)).collect();
                n = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
            }
            let len = n.iter().map(|v| v * v).sum::<f64>().sqrt();
            if len == 0.0 {
                continue;
            }
            let nodes = mesh.element_nodes(bf.elem);
            for c in 0..d {
                if (n[c] / len).abs() > 0.999 {
                    for l in face_local_nodes(d, mesh.order, bf.local_face) {
                        mask[c * nn + nodes[l]] = true;
                    }
                }
            }
        }
        mask
    }
}
