//! Conforming triangulations of convex polygons.
//!
//! Triangles are stored counter-clockwise together with the local index of
//! their refinement edge (the edge opposite local vertex `i` has local index
//! `i`) and their bisection generation.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::{cross, norm, signed_area2, sub, Point};

pub mod io;

/// Collinearity tolerance for boundary tangents, relative to the product of
/// edge lengths.
const CORNER_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum VertexClass {
    Interior,
    /// Boundary vertex whose two boundary edges are collinear. `tangent` is
    /// the unit tangent following the counter-clockwise boundary orientation.
    BoundaryFlat { tangent: [f64; 2] },
    Corner,
}

impl VertexClass {
    pub fn is_boundary(&self) -> bool {
        !matches!(self, VertexClass::Interior)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    /// Endpoints in ascending index order.
    pub vertices: [usize; 2],
    /// Adjacent triangles, the lower triangle index first.
    pub triangles: (usize, Option<usize>),
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.triangles.1.is_none()
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub edges: Vec<Edge>,
    /// `triangle_edges[t][i]` is the edge opposite local vertex `i`.
    pub triangle_edges: Vec<[usize; 3]>,
    pub vertex_class: Vec<VertexClass>,
    pub elem_diameter: Vec<f64>,
    pub refinement_edge: Vec<u8>,
    pub generation: Vec<u32>,
}

impl Mesh {
    /// Builds a mesh from raw connectivity, labelling the longest edge of
    /// every triangle as its refinement edge.
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let refinement_edge = triangles
            .iter()
            .map(|t| longest_edge(&vertices, t))
            .collect::<Vec<_>>();
        let generation = vec![0; triangles.len()];
        Self::with_labels(vertices, triangles, refinement_edge, generation)
    }

    pub fn with_labels(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        refinement_edge: Vec<u8>,
        generation: Vec<u32>,
    ) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::InvalidMesh("no triangles".into()));
        }
        if refinement_edge.len() != triangles.len() || generation.len() != triangles.len() {
            return Err(Error::InvalidMesh("label arrays do not match triangle count".into()));
        }
        if vertices.iter().any(|v| !v[0].is_finite() || !v[1].is_finite()) {
            return Err(Error::InvalidMesh("non-finite vertex coordinate".into()));
        }
        let mut used = vec![false; vertices.len()];
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::InvalidMesh(format!("triangle {t} references a missing vertex")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::InvalidMesh(format!("triangle {t} repeats a vertex")));
            }
            let a2 = signed_area2(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if !(a2 > 0.0) {
                return Err(Error::InvalidMesh(format!("triangle {t} is not counter-clockwise (2·area = {a2})")));
            }
            if refinement_edge[t] > 2 {
                return Err(Error::InvalidMesh(format!("triangle {t} has refinement edge {}", refinement_edge[t])));
            }
            for &v in tri {
                used[v] = true;
            }
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(Error::InvalidMesh(format!("vertex {v} is not used by any triangle")));
        }

        let mut lookup: HashMap<[usize; 2], usize> = HashMap::with_capacity(triangles.len() * 2);
        let mut edges: Vec<Edge> = Vec::with_capacity(triangles.len() * 2);
        let mut triangle_edges = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut te = [0usize; 3];
            for i in 0..3 {
                let (a, b) = (tri[(i + 1) % 3], tri[(i + 2) % 3]);
                let key = [a.min(b), a.max(b)];
                let e = *lookup.entry(key).or_insert_with(|| {
                    edges.push(Edge { vertices: key, triangles: (t, None) });
                    edges.len() - 1
                });
                if edges[e].triangles.0 != t {
                    if edges[e].triangles.1.is_some() {
                        return Err(Error::InvalidMesh(format!("edge {key:?} is shared by more than two triangles")));
                    }
                    edges[e].triangles.1 = Some(t);
                }
                te[i] = e;
            }
            triangle_edges.push(te);
        }

        // boundary orientation: each boundary edge traversed with the
        // interior on its left
        let mut next_on_boundary: Vec<Option<usize>> = vec![None; vertices.len()];
        let mut prev_on_boundary: Vec<Option<usize>> = vec![None; vertices.len()];
        for e in edges.iter().filter(|e| e.is_boundary()) {
            let tri = &triangles[e.triangles.0];
            let i = (0..3)
                .find(|&i| !e.vertices.contains(&tri[i]))
                .expect("edge belongs to triangle");
            let (a, b) = (tri[(i + 1) % 3], tri[(i + 2) % 3]);
            if next_on_boundary[a].is_some() || prev_on_boundary[b].is_some() {
                return Err(Error::InvalidMesh(format!("boundary is not a simple loop at vertex {a} or {b}")));
            }
            next_on_boundary[a] = Some(b);
            prev_on_boundary[b] = Some(a);
        }
        let mut vertex_class = vec![VertexClass::Interior; vertices.len()];
        for v in 0..vertices.len() {
            match (prev_on_boundary[v], next_on_boundary[v]) {
                (None, None) => {}
                (Some(p), Some(n)) => {
                    let d_in = sub(vertices[v], vertices[p]);
                    let d_out = sub(vertices[n], vertices[v]);
                    let scale = norm(d_in) * norm(d_out);
                    let aligned = cross(d_in, d_out).abs() <= CORNER_TOL * scale && d_in[0] * d_out[0] + d_in[1] * d_out[1] > 0.0;
                    vertex_class[v] = if aligned {
                        let l = norm(d_out);
                        VertexClass::BoundaryFlat { tangent: [d_out[0] / l, d_out[1] / l] }
                    } else {
                        VertexClass::Corner
                    };
                }
                _ => return Err(Error::InvalidMesh(format!("boundary loop is open at vertex {v}"))),
            }
        }

        let elem_diameter = triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|v| vertices[v]);
                norm(sub(a, b)).max(norm(sub(b, c))).max(norm(sub(c, a)))
            })
            .collect();

        Ok(Mesh {
            vertices,
            triangles,
            edges,
            triangle_edges,
            vertex_class,
            elem_diameter,
            refinement_edge,
            generation,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Mesh size `h = max_K h_K`.
    pub fn h(&self) -> f64 {
        self.elem_diameter.iter().cloned().fold(0.0, f64::max)
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|v| self.vertices[v]);
        0.5 * signed_area2(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.area(t)).sum()
    }

    pub fn barycenter(&self, t: usize) -> Point {
        let [a, b, c] = self.triangles[t].map(|v| self.vertices[v]);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        self.triangles[t].map(|v| self.vertices[v])
    }

    /// Outward unit normal of triangle `t` on its local edge `i`.
    pub fn outward_normal(&self, t: usize, i: usize) -> [f64; 2] {
        let tri = self.triangles[t];
        let a = self.vertices[tri[(i + 1) % 3]];
        let b = self.vertices[tri[(i + 2) % 3]];
        let d = sub(b, a);
        let l = norm(d);
        [d[1] / l, -d[0] / l]
    }

    pub fn corner_vertices(&self) -> Vec<usize> {
        (0..self.num_vertices())
            .filter(|&v| self.vertex_class[v] == VertexClass::Corner)
            .collect()
    }

    /// True when every triangle lies in one closed quadrant around `center`,
    /// i.e. the lines `x = center.x` and `y = center.y` are unions of edges.
    pub fn resolves_lines(&self, center: Point) -> bool {
        self.triangles.iter().all(|tri| {
            let mut sx = 0i8;
            let mut sy = 0i8;
            for &v in tri {
                let p = self.vertices[v];
                for (s, d) in [(&mut sx, p[0] - center[0]), (&mut sy, p[1] - center[1])] {
                    let sg = if d > 0.0 { 1 } else if d < 0.0 { -1 } else { 0 };
                    if sg != 0 {
                        if *s != 0 && *s != sg {
                            return false;
                        }
                        *s = sg;
                    }
                }
            }
            true
        })
    }
}

fn longest_edge(vertices: &[Point], tri: &[usize; 3]) -> u8 {
    let mut best = 0;
    let mut best_len = -1.0;
    for i in 0..3 {
        let l = norm(sub(vertices[tri[(i + 1) % 3]], vertices[tri[(i + 2) % 3]]));
        if l > best_len * (1.0 + 1e-12) {
            best = i;
            best_len = l;
        }
    }
    best as u8
}

/// Uniform `n × n` grid on `[xmin, xmax] × [ymin, ymax]`, every square split
/// along its lower-left to upper-right diagonal.
pub fn uniform_rect_mesh(xmin: f64, xmax: f64, ymin: f64, ymax: f64, n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::InvalidArgument("uniform mesh needs n >= 1".into()));
    }
    if !(xmax > xmin && ymax > ymin) {
        return Err(Error::InvalidArgument(format!(
            "empty rectangle [{xmin}, {xmax}] x [{ymin}, {ymax}]"
        )));
    }
    let np = n + 1;
    let mut vertices = Vec::with_capacity(np * np);
    for j in 0..np {
        let y = ymin + (ymax - ymin) * j as f64 / n as f64;
        for i in 0..np {
            let x = xmin + (xmax - xmin) * i as f64 / n as f64;
            vertices.push([x, y]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    let mut refinement_edge = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let ll = j * np + i;
            let (lr, ul, ur) = (ll + 1, ll + np, ll + np + 1);
            triangles.push([ll, lr, ur]);
            refinement_edge.push(1);
            triangles.push([ll, ur, ul]);
            refinement_edge.push(2);
        }
    }
    let generation = vec![0; triangles.len()];
    Mesh::with_labels(vertices, triangles, refinement_edge, generation)
}

/// Newest-vertex bisection of the `marked` triangles, followed by the
/// closure refinements needed to restore conformity.
pub fn newest_vertex_bisect(mesh: &Mesh, marked: &[usize]) -> Result<Mesh> {
    if let Some(&t) = marked.iter().find(|&&t| t >= mesh.num_triangles()) {
        return Err(Error::InvalidArgument(format!("marked triangle {t} does not exist")));
    }
    if marked.is_empty() {
        return Ok(mesh.clone());
    }
    let mut cut = vec![false; mesh.num_edges()];
    for &t in marked {
        cut[mesh.triangle_edges[t][mesh.refinement_edge[t] as usize]] = true;
    }
    // closure: a triangle with any cut edge must also cut its refinement edge
    loop {
        let mut changed = false;
        for t in 0..mesh.num_triangles() {
            let te = mesh.triangle_edges[t];
            let r = te[mesh.refinement_edge[t] as usize];
            if !cut[r] && te.iter().any(|&e| cut[e]) {
                cut[r] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut vertices = mesh.vertices.clone();
    let mut midpoint: HashMap<[usize; 2], usize> = HashMap::new();
    for (e, edge) in mesh.edges.iter().enumerate() {
        if cut[e] {
            let [a, b] = edge.vertices.map(|v| mesh.vertices[v]);
            vertices.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
            midpoint.insert(edge.vertices, vertices.len() - 1);
        }
    }

    let mut triangles = Vec::with_capacity(mesh.num_triangles() * 2);
    let mut refinement_edge = Vec::with_capacity(mesh.num_triangles() * 2);
    let mut generation = Vec::with_capacity(mesh.num_triangles() * 2);
    let mut stack: Vec<([usize; 3], u8, u32)> = Vec::new();
    for t in 0..mesh.num_triangles() {
        stack.push((mesh.triangles[t], mesh.refinement_edge[t], mesh.generation[t]));
        while let Some((tri, r, g)) = stack.pop() {
            let r = r as usize;
            let (p, q, s) = (tri[r], tri[(r + 1) % 3], tri[(r + 2) % 3]);
            match midpoint.get(&[q.min(s), q.max(s)]) {
                Some(&m) => {
                    // children (p, q, m) and (p, m, s); m is the newest vertex
                    stack.push(([p, m, s], 1, g + 1));
                    stack.push(([p, q, m], 2, g + 1));
                }
                None => {
                    triangles.push(tri);
                    refinement_edge.push(r as u8);
                    generation.push(g);
                }
            }
        }
    }
    Mesh::with_labels(vertices, triangles, refinement_edge, generation)
}

/// A priori graded bisection meshes towards the line `y = 1` of the unit
/// square: at every level each triangle `T` with
/// `|T| > c · (y_T - 1)² / #T` is marked and bisected with closure, where
/// `y_T` is the second barycenter coordinate. Level 0 is the coarse
/// `coarse_n × coarse_n` uniform mesh. The sequence stops early if a level
/// marks nothing.
pub fn graded_mesh_sequence_from(coarse: Mesh, levels: usize, c: f64) -> Result<Vec<Mesh>> {
    if levels == 0 {
        return Err(Error::InvalidArgument("graded sequence needs at least one level".into()));
    }
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(format!("grading constant must be positive, got {c}")));
    }
    let mut out = vec![coarse];
    while out.len() < levels {
        let mesh = out.last().expect("non-empty");
        let nt = mesh.num_triangles() as f64;
        let marked: Vec<usize> = (0..mesh.num_triangles())
            .filter(|&t| {
                let y = mesh.barycenter(t)[1];
                mesh.area(t) > c * (y - 1.0) * (y - 1.0) / nt
            })
            .collect();
        if marked.is_empty() {
            break;
        }
        let next = newest_vertex_bisect(mesh, &marked)?;
        out.push(next);
    }
    Ok(out)
}

/// Coarse mesh used for the graded sequence.
pub const GRADED_COARSE_N: usize = 4;

/// [`graded_mesh_sequence_from`] starting from the uniform
/// [`GRADED_COARSE_N`]² mesh of the unit square.
pub fn graded_mesh_sequence(levels: usize, c: f64) -> Result<Vec<Mesh>> {
    let coarse = uniform_rect_mesh(0.0, 1.0, 0.0, 1.0, GRADED_COARSE_N)?;
    graded_mesh_sequence_from(coarse, levels, c)
}
