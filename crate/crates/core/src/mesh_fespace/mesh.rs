use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{lex_index, lex_linear, MeshError};
use crate::tensor_basis::nodal_points;

/// Isoparametric high-order mesh: every element carries `(order+1)^dim`
/// nodes in lexicographic order; node coordinates are stored by component
/// (`coords[c * num_nodes + n]`).
#[derive(Debug, Clone, PartialEq)]
pub struct HighOrderMesh {
    pub dim: usize,
    pub order: usize,
    pub num_elements: usize,
    pub num_nodes: usize,
    pub elem_nodes: Vec<usize>,
    pub coords: Vec<f64>,
}

impl HighOrderMesh {
    pub fn new(
        dim: usize,
        order: usize,
        num_nodes: usize,
        elem_nodes: Vec<usize>,
        coords: Vec<f64>,
    ) -> Result<Self, MeshError> {
        if !(2..=3).contains(&dim) {
            return Err(MeshError::Dimension(dim));
        }
        if order == 0 {
            return Err(MeshError::Invalid("mesh order must be at least 1".into()));
        }
        let nloc = (order + 1).pow(dim as u32);
        if elem_nodes.is_empty() || elem_nodes.len() % nloc != 0 {
            return Err(MeshError::Invalid(format!(
                "connectivity length {} is not a positive multiple of {nloc}",
                elem_nodes.len()
            )));
        }
        if coords.len() != dim * num_nodes {
            return Err(MeshError::Length {
                expected: dim * num_nodes,
                got: coords.len(),
            });
        }
        if let Some(&bad) = elem_nodes.iter().find(|&&n| n >= num_nodes) {
            return Err(MeshError::Invalid(format!("node index {bad} out of range")));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(MeshError::Invalid("non-finite coordinate".into()));
        }
        Ok(Self {
            dim,
            order,
            num_elements: elem_nodes.len() / nloc,
            num_nodes,
            elem_nodes,
            coords,
        })
    }

    pub fn nodes_per_element(&self) -> usize {
        (self.order + 1).pow(self.dim as u32)
    }

    pub fn element_nodes(&self, e: usize) -> &[usize] {
        let n = self.nodes_per_element();
        &self.elem_nodes[e * n..(e + 1) * n]
    }

    /// Local indices of the 2^dim element corners, lexicographic.
    pub fn corner_locals(&self) -> Vec<usize> {
        let n1d = self.order + 1;
        (0..1usize << self.dim)
            .map(|c| {
                let idx: Vec<usize> = (0..self.dim).map(|a| ((c >> a) & 1) * self.order).collect();
                lex_linear(&idx, n1d)
            })
            .collect()
    }

    /// Largest corner-to-corner distance of each element for `positions`.
    pub fn element_diameters(&self, positions: &[f64]) -> Vec<f64> {
        let corners = self.corner_locals();
        let nn = self.num_nodes;
        (0..self.num_elements)
            .map(|e| {
                let nodes = self.element_nodes(e);
                let mut dmax = 0.0f64;
                for (i, &a) in corners.iter().enumerate() {
                    for &b in &corners[i + 1..] {
                        let mut s = 0.0;
                        for c in 0..self.dim {
                            let d = positions[c * nn + nodes[a]] - positions[c * nn + nodes[b]];
                            s += d * d;
                        }
                        dmax = dmax.max(s.sqrt());
                    }
                }
                dmax
            })
            .collect()
    }

    pub fn bounding_box(&self) -> ([f64; 3], [f64; 3]) {
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for c in 0..self.dim {
            let s = &self.coords[c * self.num_nodes..(c + 1) * self.num_nodes];
            lo[c] = s.iter().cloned().fold(f64::INFINITY, f64::min);
            hi[c] = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        }
        (lo, hi)
    }

    /// Random displacement of the nodes not flagged in `fixed`, scaled by
    /// `amplitude` times the smallest element diameter over the node count
    /// per direction.
    pub fn perturbed_positions(&self, fixed: &[bool], amplitude: f64, seed: u64) -> Vec<f64> {
        let hmin = self
            .element_diameters(&self.coords)
            .into_iter()
            .fold(f64::INFINITY, f64::min)
            / (self.order as f64 * (self.dim as f64).sqrt());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = self.coords.clone();
        for n in 0..self.num_nodes {
            if fixed[n] {
                continue;
            }
            for c in 0..self.dim {
                x[c * self.num_nodes + n] += amplitude * hmin * rng.gen_range(-1.0..1.0);
            }
        }
        x
    }

    /// Plain-text mesh format:
    ///
    /// ```text
    /// dim 2 order 1
    /// elements 1 nodes 4
    /// 0 1 2 3
    /// 0 0
    /// 1 0
    /// 0 1
    /// 1 1
    /// ```
    ///
    /// Element lines list local nodes lexicographically (axis 0 fastest);
    /// `#` starts a comment.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "dim {} order {}", self.dim, self.order);
        let _ = writeln!(s, "elements {} nodes {}", self.num_elements, self.num_nodes);
        for e in 0..self.num_elements {
            let line: Vec<String> = self.element_nodes(e).iter().map(|n| n.to_string()).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        for n in 0..self.num_nodes {
            let line: Vec<String> = (0..self.dim)
                .map(|c| format!("{:e}", self.coords[c * self.num_nodes + n]))
                .collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, MeshError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let perr = |line: usize, m: &str| MeshError::Parse {
            line,
            message: m.to_string(),
        };
        let mut header = |keys: [&str; 2]| -> Result<(usize, [usize; 2]), MeshError> {
            let (ln, l) = lines.next().ok_or_else(|| perr(0, "unexpected end of file"))?;
            let tok: Vec<&str> = l.split_whitespace().collect();
            if tok.len() != 4 || tok[0] != keys[0] || tok[2] != keys[1] {
                return Err(perr(ln, &format!("expected `{} <n> {} <n>`", keys[0], keys[1])));
            }
            let a = tok[1].parse().map_err(|_| perr(ln, "bad integer"))?;
            let b = tok[3].parse().map_err(|_| perr(ln, "bad integer"))?;
            Ok((ln, [a, b]))
        };
        let (_, [dim, order]) = header(["dim", "order"])?;
        let (ln, [ne, nn]) = header(["elements", "nodes"])?;
        if !(2..=3).contains(&dim) {
            return Err(perr(1, &format!("unsupported dimension {dim}")));
        }
        if order == 0 || ne == 0 || nn == 0 {
            return Err(perr(ln, "order, element and node counts must be positive"));
        }
        let nloc = (order + 1).pow(dim as u32);
        let mut elem_nodes = Vec::with_capacity(ne * nloc);
        for _ in 0..ne {
            let (ln, l) = lines.next().ok_or_else(|| perr(0, "missing element lines"))?;
            let ids: Result<Vec<usize>, _> = l.split_whitespace().map(str::parse).collect();
            let ids = ids.map_err(|_| perr(ln, "bad node index"))?;
            if ids.len() != nloc {
                return Err(perr(ln, &format!("expected {nloc} node indices, found {}", ids.len())));
            }
            elem_nodes.extend(ids);
        }
        let mut coords = vec![0.0; dim * nn];
        for n in 0..nn {
            let (ln, l) = lines.next().ok_or_else(|| perr(0, "missing coordinate lines"))?;
            let xs: Result<Vec<f64>, _> = l.split_whitespace().map(str::parse).collect();
            let xs = xs.map_err(|_| perr(ln, "bad coordinate"))?;
            if xs.len() != dim {
                return Err(perr(ln, &format!("expected {dim} coordinates")));
            }
            for c in 0..dim {
                coords[c * nn + n] = xs[c];
            }
        }
        if let Some((ln, _)) = lines.next() {
            return Err(perr(ln, "trailing data"));
        }
        Self::new(dim, order, nn, elem_nodes, coords)
    }

    pub fn read(path: &Path) -> Result<Self, MeshError> {
        let text = std::fs::read_to_string(path).map_err(|e| MeshError::Io(format!("{}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    pub fn write(&self, path: &Path) -> Result<(), MeshError> {
        std::fs::write(path, self.to_text()).map_err(|e| MeshError::Io(format!("{}: {e}", path.display())))
    }
}

/// Structured box mesh `[0, lengths[0]] × ...` with `counts[a]` elements per
/// axis. High-order nodes sit at Gauss–Lobatto positions inside each element.
pub fn cartesian_mesh(dim: usize, counts: &[usize], lengths: &[f64], order: usize) -> Result<HighOrderMesh, MeshError> {
    if !(2..=3).contains(&dim) {
        return Err(MeshError::Dimension(dim));
    }
    if counts.len() < dim || lengths.len() < dim {
        return Err(MeshError::Invalid("counts/lengths shorter than dimension".into()));
    }
    if counts[..dim].iter().any(|&c| c == 0) || lengths[..dim].iter().any(|&l| l.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)) {
        return Err(MeshError::Invalid("element counts and lengths must be positive".into()));
    }
    if order == 0 {
        return Err(MeshError::Invalid("mesh order must be at least 1".into()));
    }
    let lob = nodal_points(order);
    let n1d = order + 1;
    let lattice: Vec<usize> = (0..dim).map(|a| counts[a] * order + 1).collect();
    let num_nodes: usize = lattice.iter().product();
    let ne: usize = counts[..dim].iter().product();
    let nloc = n1d.pow(dim as u32);
    let mut coords = vec![0.0; dim * num_nodes];
    let mut elem_nodes = vec![0usize; ne * nloc];
    let mut written = vec![false; num_nodes];
    for e in 0..ne {
        let mut r = e;
        let mut ecoord = [0usize; 3];
        for a in 0..dim {
            ecoord[a] = r % counts[a];
            r /= counts[a];
        }
        for l in 0..nloc {
            let li = lex_index(l, n1d, dim);
            let mut g = 0;
            for a in (0..dim).rev() {
                g = g * lattice[a] + ecoord[a] * order + li[a];
            }
            elem_nodes[e * nloc + l] = g;
            if !written[g] {
                written[g] = true;
                for a in 0..dim {
                    let h = lengths[a] / counts[a] as f64;
                    coords[a * num_nodes + g] = h * (ecoord[a] as f64 + 0.5 * (lob[li[a]] + 1.0));
                }
            }
        }
    }
    HighOrderMesh::new(dim, order, num_nodes, elem_nodes, coords)
}
