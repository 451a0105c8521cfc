//! Meshes on intervals (d = 1) and planar triangulations (d = 2).
//!
//! The plain-text mesh format is: line 1 `d n m`, then `n` lines of node
//! coordinates, then `m` lines of 0-based element node indices (pairs for
//! segments, triples for triangles).

use crate::error::{Error, Result};
use std::path::Path;

/// Conforming simplicial mesh: segments on an interval or triangles in
/// the plane.
#[derive(Debug, Clone)]
pub struct Mesh {
    dim: usize,
    /// Node coordinates, node-major (`n * dim` values).
    coords: Vec<f64>,
    /// Element connectivity, element-major (`m * (dim + 1)` indices).
    elements: Vec<usize>,
}

impl Mesh {
    /// Validate and construct a mesh.
    pub fn new(dim: usize, coords: Vec<f64>, elements: Vec<usize>) -> Result<Mesh> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidMesh(format!("dimension must be 1 or 2, got {dim}")));
        }
        if coords.len() % dim != 0 {
            return Err(Error::InvalidMesh("coordinate list length not divisible by d".into()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidMesh("non-finite node coordinate".into()));
        }
        let nodes_per_el = dim + 1;
        if elements.len() % nodes_per_el != 0 {
            return Err(Error::InvalidMesh("element list length not divisible by d+1".into()));
        }
        let mesh = Mesh { dim, coords, elements };
        mesh.validate()?;
        Ok(mesh)
    }

    fn validate(&self) -> Result<()> {
        let n = self.n_nodes();
        for (e, el) in self.element_iter().enumerate() {
            for &i in el {
                if i >= n {
                    return Err(Error::InvalidMesh(format!(
                        "element {e} references node {i} but mesh has {n} nodes"
                    )));
                }
            }
            let mut sorted = el.to_vec();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != el.len() {
                return Err(Error::InvalidMesh(format!("element {e} repeats a node")));
            }
            if self.element_measure(e) <= 0.0 {
                return Err(Error::InvalidMesh(format!("element {e} is degenerate")));
            }
        }
        self.check_conforming()
    }

    /// Conformity: elements may only meet at shared nodes (d = 1) or
    /// shared nodes/edges (d = 2).
    fn check_conforming(&self) -> Result<()> {
        match self.dim {
            1 => {
                // Segments must tile without interior overlap.
                let mut intervals: Vec<(f64, f64, usize)> = self
                    .element_iter()
                    .enumerate()
                    .map(|(e, el)| {
                        let (a, b) = (self.coords[el[0]], self.coords[el[1]]);
                        (a.min(b), a.max(b), e)
                    })
                    .collect();
                intervals.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
                for w in intervals.windows(2) {
                    let tol = 1e-12 * (w[0].1 - w[0].0).abs().max(1.0);
                    if w[1].0 < w[0].1 - tol {
                        return Err(Error::InvalidMesh(format!(
                            "segments {} and {} overlap",
                            w[0].2, w[1].2
                        )));
                    }
                }
            }
            2 => {
                // Each undirected edge may be shared by at most two triangles.
                let mut edge_count = std::collections::HashMap::new();
                for el in self.element_iter() {
                    for (a, b) in [(el[0], el[1]), (el[1], el[2]), (el[2], el[0])] {
                        let key = (a.min(b), a.max(b));
                        *edge_count.entry(key).or_insert(0usize) += 1;
                    }
                }
                if let Some((edge, c)) = edge_count.iter().find(|(_, &c)| c > 2) {
                    return Err(Error::InvalidMesh(format!(
                        "edge {edge:?} shared by {c} triangles; mesh is not conforming"
                    )));
                }
            }
            _ => unreachable!(),
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_nodes(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len() / (self.dim + 1)
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn element(&self, e: usize) -> &[usize] {
        let k = self.dim + 1;
        &self.elements[e * k..(e + 1) * k]
    }

    pub fn element_iter(&self) -> impl Iterator<Item = &[usize]> {
        self.elements.chunks(self.dim + 1)
    }

    /// Length (d = 1) or area (d = 2) of an element.
    pub fn element_measure(&self, e: usize) -> f64 {
        let el = self.element(e);
        match self.dim {
            1 => (self.coords[el[1]] - self.coords[el[0]]).abs(),
            2 => {
                let p0 = self.node(el[0]);
                let p1 = self.node(el[1]);
                let p2 = self.node(el[2]);
                0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1])).abs()
            }
            _ => unreachable!(),
        }
    }

    /// Total domain measure.
    pub fn total_measure(&self) -> f64 {
        (0..self.n_elements()).map(|e| self.element_measure(e)).sum()
    }

    /// Uniform mesh on [a, b] with n nodes.
    pub fn interval(a: f64, b: f64, n: usize) -> Result<Mesh> {
        if !(b > a) || n < 2 {
            return Err(Error::InvalidMesh(format!("bad interval mesh: a={a}, b={b}, n={n}")));
        }
        let coords: Vec<f64> = (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect();
        let elements: Vec<usize> = (0..n - 1).flat_map(|i| [i, i + 1]).collect();
        Mesh::new(1, coords, elements)
    }

    /// Regular triangulated grid on [x0, x1] × [y0, y1] with nx × ny nodes.
    /// Each cell is split along its lower-left to upper-right diagonal.
    pub fn grid(x0: f64, x1: f64, y0: f64, y1: f64, nx: usize, ny: usize) -> Result<Mesh> {
        if !(x1 > x0 && y1 > y0) || nx < 2 || ny < 2 {
            return Err(Error::InvalidMesh("bad grid mesh specification".into()));
        }
        let mut coords = Vec::with_capacity(nx * ny * 2);
        for j in 0..ny {
            for i in 0..nx {
                coords.push(x0 + (x1 - x0) * i as f64 / (nx - 1) as f64);
                coords.push(y0 + (y1 - y0) * j as f64 / (ny - 1) as f64);
            }
        }
        let id = |i: usize, j: usize| j * nx + i;
        let mut elements = Vec::with_capacity((nx - 1) * (ny - 1) * 6);
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                elements.extend_from_slice(&[a, b, c]);
                elements.extend_from_slice(&[a, c, d]);
            }
        }
        Mesh::new(2, coords, elements)
    }

    /// Interval mesh padded by `pad` on each side, keeping the interior
    /// node spacing implied by `n` nodes over [a, b]. Padding mitigates
    /// boundary inflation from the implicit Neumann conditions; callers
    /// typically use a multiple of the correlation range (2/κ by default).
    pub fn extended_interval(a: f64, b: f64, n: usize, pad: f64) -> Result<Mesh> {
        if pad < 0.0 {
            return Err(Error::InvalidMesh("negative mesh padding".into()));
        }
        let spacing = (b - a) / (n - 1) as f64;
        let extra = (pad / spacing).ceil() as usize;
        let lo = a - extra as f64 * spacing;
        let hi = b + extra as f64 * spacing;
        Mesh::interval(lo, hi, n + 2 * extra)
    }

    /// Grid mesh padded by `pad` on each side of the box, keeping spacing.
    #[allow(clippy::too_many_arguments)]
    pub fn extended_grid(
        x0: f64,
        x1: f64,
        y0: f64,
        y1: f64,
        nx: usize,
        ny: usize,
        pad: f64,
    ) -> Result<Mesh> {
        if pad < 0.0 {
            return Err(Error::InvalidMesh("negative mesh padding".into()));
        }
        let sx = (x1 - x0) / (nx - 1) as f64;
        let sy = (y1 - y0) / (ny - 1) as f64;
        let ex = (pad / sx).ceil() as usize;
        let ey = (pad / sy).ceil() as usize;
        Mesh::grid(
            x0 - ex as f64 * sx,
            x1 + ex as f64 * sx,
            y0 - ey as f64 * sy,
            y1 + ey as f64 * sy,
            nx + 2 * ex,
            ny + 2 * ey,
        )
    }

    /// Parse the plain-text mesh format.
    pub fn parse(text: &str) -> Result<Mesh> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::Parse("empty mesh file".into()))?;
        let head: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|e| Error::Parse(format!("bad header `{t}`: {e}"))))
            .collect::<Result<_>>()?;
        if head.len() != 3 {
            return Err(Error::Parse("mesh header must be `d n m`".into()));
        }
        let (dim, n, m) = (head[0], head[1], head[2]);
        if dim != 1 && dim != 2 {
            return Err(Error::Parse(format!("mesh dimension must be 1 or 2, got {dim}")));
        }
        let mut coords = Vec::with_capacity(n * dim);
        for k in 0..n {
            let line = lines.next().ok_or_else(|| Error::Parse(format!("missing node line {k}")))?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("bad coordinate `{t}`: {e}"))))
                .collect::<Result<_>>()?;
            if vals.len() != dim {
                return Err(Error::Parse(format!(
                    "node line {k} has {} coordinates, expected {dim}",
                    vals.len()
                )));
            }
            coords.extend_from_slice(&vals);
        }
        let mut elements = Vec::with_capacity(m * (dim + 1));
        for k in 0..m {
            let line =
                lines.next().ok_or_else(|| Error::Parse(format!("missing element line {k}")))?;
            let vals: Vec<usize> = line
                .split_whitespace()
                .map(|t| t.parse::<usize>().map_err(|e| Error::Parse(format!("bad index `{t}`: {e}"))))
                .collect::<Result<_>>()?;
            if vals.len() != dim + 1 {
                return Err(Error::Parse(format!(
                    "element line {k} has {} indices, expected {}",
                    vals.len(),
                    dim + 1
                )));
            }
            elements.extend_from_slice(&vals);
        }
        if lines.next().is_some() {
            return Err(Error::Parse("trailing content after element list".into()));
        }
        Mesh::new(dim, coords, elements)
    }

    /// Load from a file in the plain-text format.
    pub fn load(path: &Path) -> Result<Mesh> {
        let text = std::fs::read_to_string(path)?;
        Mesh::parse(&text)
    }

    /// Serialise to the plain-text format.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {} {}\n", self.dim, self.n_nodes(), self.n_elements());
        for i in 0..self.n_nodes() {
            let node = self.node(i);
            let line: Vec<String> = node.iter().map(|c| format!("{c}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        for el in self.element_iter() {
            let line: Vec<String> = el.iter().map(|i| format!("{i}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    /// Index of the node closest to the centroid of the node cloud.
    pub fn central_node(&self) -> usize {
        let n = self.n_nodes();
        let mut centroid = vec![0.0; self.dim];
        for i in 0..n {
            for (c, x) in centroid.iter_mut().zip(self.node(i)) {
                *c += x / n as f64;
            }
        }
        (0..n)
            .min_by(|&a, &b| {
                let da: f64 =
                    self.node(a).iter().zip(&centroid).map(|(x, c)| (x - c) * (x - c)).sum();
                let db: f64 =
                    self.node(b).iter().zip(&centroid).map(|(x, c)| (x - c) * (x - c)).sum();
                da.partial_cmp(&db).unwrap()
            })
            .unwrap()
    }

    /// Node nearest to a given point.
    pub fn nearest_node(&self, point: &[f64]) -> usize {
        (0..self.n_nodes())
            .min_by(|&a, &b| {
                let da: f64 = self.node(a).iter().zip(point).map(|(x, c)| (x - c) * (x - c)).sum();
                let db: f64 = self.node(b).iter().zip(point).map(|(x, c)| (x - c) * (x - c)).sum();
                da.partial_cmp(&db).unwrap()
            })
            .unwrap()
    }
}

/// Load a mesh from a file path (CLI entry point).
pub fn load_mesh<P: AsRef<Path>>(path: P) -> Result<Mesh> {
    Mesh::load(path.as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_smallest_interval_mesh() {
        let mesh = Mesh::parse("1 3 2\n0\n0.5\n1\n0 1\n1 2\n").unwrap();
        assert_eq!(mesh.dim(), 1);
        assert_eq!(mesh.n_nodes(), 3);
        assert_eq!(mesh.n_elements(), 2);
        assert_eq!(mesh.total_measure(), 1.0);
    }

    #[test]
    fn parse_unit_square() {
        let text = "2 4 2\n0 0\n1 0\n1 1\n0 1\n0 1 2\n0 2 3\n";
        let mesh = Mesh::parse(text).unwrap();
        assert_eq!(mesh.n_nodes(), 4);
        assert_eq!(mesh.n_elements(), 2);
        assert!((mesh.total_measure() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn out_of_range_index_rejected() {
        let text = "2 4 2\n0 0\n1 0\n1 1\n0 1\n0 1 2\n0 2 4\n";
        let err = Mesh::parse(text).unwrap_err();
        assert!(matches!(err, Error::InvalidMesh(_)), "{err}");
    }

    #[test]
    fn degenerate_elements_rejected() {
        // Zero-length segment.
        assert!(Mesh::new(1, vec![0.0, 0.0, 1.0], vec![0, 1]).is_err());
        // Collinear triangle.
        let coords = vec![0.0, 0.0, 1.0, 0.0, 2.0, 0.0];
        assert!(Mesh::new(2, coords, vec![0, 1, 2]).is_err());
    }

    #[test]
    fn overlapping_segments_rejected() {
        let coords = vec![0.0, 1.0, 0.5, 1.5];
        let err = Mesh::new(1, coords, vec![0, 1, 2, 3]).unwrap_err();
        assert!(matches!(err, Error::InvalidMesh(_)));
    }

    #[test]
    fn edge_shared_three_ways_rejected() {
        let coords = vec![0.0, 0.0, 1.0, 0.0, 0.5, 1.0, 0.5, -1.0, 0.5, 2.0];
        let elements = vec![0, 1, 2, 0, 1, 3, 0, 1, 4];
        let err = Mesh::new(2, coords, elements).unwrap_err();
        assert!(matches!(err, Error::InvalidMesh(_)));
    }

    #[test]
    fn grid_builder_measure() {
        let mesh = Mesh::grid(0.0, 2.0, 0.0, 1.0, 5, 3).unwrap();
        assert_eq!(mesh.n_nodes(), 15);
        assert_eq!(mesh.n_elements(), 16);
        assert!((mesh.total_measure() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn extension_pads_and_keeps_spacing() {
        let base = Mesh::interval(0.0, 1.0, 11).unwrap();
        let ext = Mesh::extended_interval(0.0, 1.0, 11, 0.35).unwrap();
        let spacing = 0.1;
        assert_eq!(ext.n_nodes(), 11 + 2 * 4);
        assert!((ext.node(0)[0] - (-0.4)).abs() < 1e-12);
        assert!((ext.node(1)[0] - ext.node(0)[0] - spacing).abs() < 1e-12);
        assert!(ext.total_measure() > base.total_measure());
    }

    #[test]
    fn round_trip_text() {
        let mesh = Mesh::grid(0.0, 1.0, 0.0, 1.0, 3, 3).unwrap();
        let re = Mesh::parse(&mesh.to_text()).unwrap();
        assert_eq!(re.n_nodes(), mesh.n_nodes());
        assert_eq!(re.n_elements(), mesh.n_elements());
    }
}
