//! The global `P_k` Hermite space (`k ∈ {3, 4}`): C⁰ across edges, C¹ at
//! vertices, homogeneous Dirichlet data.
//!
//! Global degrees of freedom, in this order:
//!
//! * per vertex: the value and the two first derivatives along the vertex
//!   frame. Interior and corner vertices use the Cartesian frame; flat
//!   boundary vertices use (tangent, outward normal), so the constrained
//!   tangential derivative is a single DOF;
//! * per edge, `k - 3` moments `|e|⁻¹ ∫_e v P_m(s) ds` against shifted
//!   Legendre polynomials, `s` running from the lower to the higher vertex
//!   index;
//! * per triangle, `dim P_{k-3}` moments `|K|⁻¹ ∫_K v q dx` against scaled
//!   monomials.
//!
//! Local bases are obtained per element by inverting the generalized
//! Vandermonde matrix of these functionals against monomials in the scaled
//! coordinates `(x - x_K) / h_K`.

use faer::linalg::solvers::DenseSolveCore;
use faer::Mat;

use crate::error::{Error, Result};
use crate::geometry::{dot, Point, Sym2};
use crate::mesh::{Mesh, VertexClass};
use crate::quadrature::{edge_rule, triangle_rule};

pub mod io;

/// A scalar function with first and second derivatives.
pub trait SmoothFunction: Send + Sync {
    fn value(&self, x: Point) -> f64;
    fn gradient(&self, x: Point) -> [f64; 2];
    fn hessian(&self, x: Point) -> Sym2;
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PointValue {
    pub value: f64,
    pub grad: [f64; 2],
    pub hess: Sym2,
}

/// Derivative directions of the two gradient DOFs at a vertex.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frame {
    pub e1: [f64; 2],
    pub e2: [f64; 2],
}

impl Frame {
    pub const CARTESIAN: Frame = Frame { e1: [1.0, 0.0], e2: [0.0, 1.0] };
}

/// Exponents `(p, q)` of the monomials `ξ^p η^q` of total degree `≤ k`,
/// ordered by total degree.
pub(crate) fn monomial_exponents(k: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity((k + 1) * (k + 2) / 2);
    for d in 0..=k {
        for q in 0..=d {
            out.push((d - q, q));
        }
    }
    out
}

/// Values and first/second derivatives of all monomials at one point.
#[derive(Clone, Debug)]
struct MonomialTable {
    v: Vec<f64>,
    dx: Vec<f64>,
    dy: Vec<f64>,
    dxx: Vec<f64>,
    dxy: Vec<f64>,
    dyy: Vec<f64>,
}

impl MonomialTable {
    fn new(n: usize) -> Self {
        Self {
            v: vec![0.0; n],
            dx: vec![0.0; n],
            dy: vec![0.0; n],
            dxx: vec![0.0; n],
            dxy: vec![0.0; n],
            dyy: vec![0.0; n],
        }
    }

    fn fill(&mut self, exps: &[(usize, usize)], k: usize, x: f64, y: f64) {
        let mut px = [0.0; 8];
        let mut py = [0.0; 8];
        px[0] = 1.0;
        py[0] = 1.0;
        for i in 1..=k {
            px[i] = px[i - 1] * x;
            py[i] = py[i - 1] * y;
        }
        for (m, &(p, q)) in exps.iter().enumerate() {
            let (fp, fq) = (p as f64, q as f64);
            self.v[m] = px[p] * py[q];
            self.dx[m] = if p >= 1 { fp * px[p - 1] * py[q] } else { 0.0 };
            self.dy[m] = if q >= 1 { fq * px[p] * py[q - 1] } else { 0.0 };
            self.dxx[m] = if p >= 2 { fp * (fp - 1.0) * px[p - 2] * py[q] } else { 0.0 };
            self.dxy[m] = if p >= 1 && q >= 1 { fp * fq * px[p - 1] * py[q - 1] } else { 0.0 };
            self.dyy[m] = if q >= 2 { fq * (fq - 1.0) * px[p] * py[q - 2] } else { 0.0 };
        }
    }
}

/// Values, physical gradients and Hessians of all local basis functions at
/// one point. Reusable scratch buffer.
#[derive(Clone, Debug)]
pub struct BasisValues {
    pub value: Vec<f64>,
    pub grad: Vec<[f64; 2]>,
    pub hess: Vec<Sym2>,
    table: MonomialTable,
}

impl BasisValues {
    pub fn new(space: &HermiteSpace<'_>) -> Self {
        let n = space.local_dim();
        Self {
            value: vec![0.0; n],
            grad: vec![[0.0; 2]; n],
            hess: vec![Sym2::ZERO; n],
            table: MonomialTable::new(n),
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Local basis of one element, dual to the element's DOF functionals
/// expressed in global DOF units.
#[derive(Clone, Debug)]
pub struct ElementBasis {
    pub center: Point,
    pub scale: f64,
    /// Global DOF index of each local basis function.
    pub dofs: Vec<usize>,
    /// Row `l` holds the monomial coefficients of basis function `l`.
    coeffs: Vec<f64>,
    degree: usize,
}

impl ElementBasis {
    pub fn len(&self) -> usize {
        self.dofs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dofs.is_empty()
    }

    /// Evaluates all basis functions with derivatives at `x`.
    pub fn eval(&self, exps: &[(usize, usize)], x: Point, out: &mut BasisValues) {
        let n = self.dofs.len();
        let inv = 1.0 / self.scale;
        let inv2 = inv * inv;
        let t = &mut out.table;
        t.fill(exps, self.degree, (x[0] - self.center[0]) * inv, (x[1] - self.center[1]) * inv);
        for l in 0..n {
            let row = &self.coeffs[l * n..(l + 1) * n];
            let (mut v, mut dx, mut dy, mut dxx, mut dxy, mut dyy) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
            for m in 0..n {
                let c = row[m];
                v += c * t.v[m];
                dx += c * t.dx[m];
                dy += c * t.dy[m];
                dxx += c * t.dxx[m];
                dxy += c * t.dxy[m];
                dyy += c * t.dyy[m];
            }
            out.value[l] = v;
            out.grad[l] = [dx * inv, dy * inv];
            out.hess[l] = Sym2::new(dxx * inv2, dxy * inv2, dyy * inv2);
        }
    }
}

pub struct HermiteSpace<'m> {
    mesh: &'m Mesh,
    degree: usize,
    exps: Vec<(usize, usize)>,
    frames: Vec<Frame>,
    ndofs: usize,
    constrained: Vec<bool>,
    free_index: Vec<usize>,
    free_dofs: Vec<usize>,
    elements: Vec<ElementBasis>,
}

const NOT_FREE: usize = usize::MAX;

/// `dim P_d` in two variables.
pub const fn poly_dim(d: usize) -> usize {
    (d + 1) * (d + 2) / 2
}

/// Shifted Legendre polynomial `P_m(2s - 1)`.
pub(crate) fn shifted_legendre(m: usize, s: f64) -> f64 {
    let z = 2.0 * s - 1.0;
    let (mut p0, mut p1) = (1.0, z);
    if m == 0 {
        return 1.0;
    }
    for j in 2..=m {
        let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
        p0 = p1;
        p1 = p2;
    }
    p1
}

impl<'m> HermiteSpace<'m> {
    pub fn new(mesh: &'m Mesh, degree: usize) -> Result<Self> {
        if !(3..=4).contains(&degree) {
            return Err(Error::Unsupported(format!("Hermite degree {degree} (supported: 3, 4)")));
        }
        let nv = mesh.num_vertices();
        let ne = mesh.num_edges();
        let nt = mesh.num_triangles();
        let per_edge = degree - 3;
        let per_tri = poly_dim(degree - 3);
        let ndofs = 3 * nv + per_edge * ne + per_tri * nt;

        let frames: Vec<Frame> = mesh
            .vertex_class
            .iter()
            .map(|c| match c {
                VertexClass::BoundaryFlat { tangent } => Frame { e1: *tangent, e2: [tangent[1], -tangent[0]] },
                _ => Frame::CARTESIAN,
            })
            .collect();

        let mut constrained = vec![false; ndofs];
        for (v, class) in mesh.vertex_class.iter().enumerate() {
            match class {
                VertexClass::Interior => {}
                VertexClass::BoundaryFlat { .. } => {
                    constrained[3 * v] = true;
                    constrained[3 * v + 1] = true;
                }
                VertexClass::Corner => {
                    constrained[3 * v..3 * v + 3].iter_mut().for_each(|c| *c = true);
                }
            }
        }
        for (e, edge) in mesh.edges.iter().enumerate() {
            if edge.is_boundary() {
                for m in 0..per_edge {
                    constrained[3 * nv + per_edge * e + m] = true;
                }
            }
        }
        let mut free_index = vec![NOT_FREE; ndofs];
        let mut free_dofs = Vec::new();
        for (d, &c) in constrained.iter().enumerate() {
            if !c {
                free_index[d] = free_dofs.len();
                free_dofs.push(d);
            }
        }

        let mut space = HermiteSpace {
            mesh,
            degree,
            exps: monomial_exponents(degree),
            frames,
            ndofs,
            constrained,
            free_index,
            free_dofs,
            elements: Vec::with_capacity(nt),
        };
        for t in 0..nt {
            let basis = space.build_element(t)?;
            space.elements.push(basis);
        }
        Ok(space)
    }

    pub fn mesh(&self) -> &'m Mesh {
        self.mesh
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn ndofs(&self) -> usize {
        self.ndofs
    }

    pub fn free_count(&self) -> usize {
        self.free_dofs.len()
    }

    pub fn local_dim(&self) -> usize {
        poly_dim(self.degree)
    }

    pub fn exponents(&self) -> &[(usize, usize)] {
        &self.exps
    }

    pub fn frame(&self, v: usize) -> Frame {
        self.frames[v]
    }

    pub fn is_constrained(&self, dof: usize) -> bool {
        self.constrained[dof]
    }

    pub fn constrained(&self) -> &[bool] {
        &self.constrained
    }

    /// Position of `dof` among the free DOFs.
    pub fn free_index(&self, dof: usize) -> Option<usize> {
        match self.free_index[dof] {
            NOT_FREE => None,
            i => Some(i),
        }
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free_dofs
    }

    pub fn element(&self, t: usize) -> &ElementBasis {
        &self.elements[t]
    }

    pub fn edge_dof(&self, e: usize, m: usize) -> usize {
        3 * self.mesh.num_vertices() + (self.degree - 3) * e + m
    }

    pub fn interior_dof(&self, t: usize, r: usize) -> usize {
        3 * self.mesh.num_vertices() + (self.degree - 3) * self.mesh.num_edges() + poly_dim(self.degree - 3) * t + r
    }

    /// Local indices (within triangle `t`) of the DOFs whose basis functions
    /// have a nonzero trace on local edge `i`.
    pub fn edge_local_dofs(&self, i: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for v in [(i + 1) % 3, (i + 2) % 3] {
            out.extend(3 * v..3 * v + 3);
        }
        let per_edge = self.degree - 3;
        out.extend((0..per_edge).map(|m| 9 + per_edge * i + m));
        out
    }

    /// Embeds a vector over free DOFs into a full DOF vector.
    pub fn expand(&self, free: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.ndofs];
        for (i, &d) in self.free_dofs.iter().enumerate() {
            full[d] = free[i];
        }
        full
    }

    /// Restricts a full DOF vector to the free DOFs.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free_dofs.iter().map(|&d| full[d]).collect()
    }

    /// Physical point of reference coordinates `r` in triangle `t`.
    pub fn map_point(&self, t: usize, r: [f64; 2]) -> Point {
        let [a, b, c] = self.mesh.triangle_points(t);
        [
            a[0] + r[0] * (b[0] - a[0]) + r[1] * (c[0] - a[0]),
            a[1] + r[0] * (b[1] - a[1]) + r[1] * (c[1] - a[1]),
        ]
    }

    /// Applies the DOF functionals of triangle `t` (in global DOF units and
    /// local order) to a function given by value and gradient callbacks.
    pub fn element_functionals(
        &self,
        t: usize,
        value: &dyn Fn(Point) -> f64,
        gradient: &dyn Fn(Point) -> [f64; 2],
        quad_degree: usize,
    ) -> Result<Vec<f64>> {
        let mesh = self.mesh;
        let tri = mesh.triangles[t];
        let mut out = Vec::with_capacity(self.local_dim());
        for &v in &tri {
            let p = mesh.vertices[v];
            let g = gradient(p);
            let f = self.frames[v];
            out.extend([value(p), dot(g, f.e1), dot(g, f.e2)]);
        }
        let per_edge = self.degree - 3;
        if per_edge > 0 {
            let rule = edge_rule(quad_degree)?;
            for i in 0..3 {
                let (a, b) = ordered_edge(tri[(i + 1) % 3], tri[(i + 2) % 3]);
                let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
                for m in 0..per_edge {
                    let s: f64 = rule
                        .points
                        .iter()
                        .zip(&rule.weights)
                        .map(|(&s, &w)| w * value(lerp(pa, pb, s)) * shifted_legendre(m, s))
                        .sum();
                    out.push(s);
                }
            }
        }
        let rule = triangle_rule(quad_degree)?;
        let el = &self.elements[t];
        let nint = poly_dim(self.degree - 3);
        let mut acc = vec![0.0; nint];
        for (r, &w) in rule.points.iter().zip(&rule.weights) {
            let x = self.map_point(t, *r);
            let fx = value(x);
            let (xi, eta) = ((x[0] - el.center[0]) / el.scale, (x[1] - el.center[1]) / el.scale);
            for (j, &(p, q)) in self.exps[..nint].iter().enumerate() {
                acc[j] += 2.0 * w * fx * xi.powi(p as i32) * eta.powi(q as i32);
            }
        }
        out.extend(acc);
        Ok(out)
    }

    fn build_element(&self, t: usize) -> Result<ElementBasis> {
        let mesh = self.mesh;
        let k = self.degree;
        let n = self.local_dim();
        let tri = mesh.triangles[t];
        let pts = mesh.triangle_points(t);
        let center = mesh.barycenter(t);
        let scale = mesh.elem_diameter[t];
        let to_local = |x: Point| [(x[0] - center[0]) / scale, (x[1] - center[1]) / scale];

        let mut vander = Mat::<f64>::zeros(n, n);
        let mut row_scale = vec![1.0; n];
        let mut table = MonomialTable::new(n);
        let mut row = 0;
        for (i, &v) in tri.iter().enumerate() {
            let xl = to_local(pts[i]);
            table.fill(&self.exps, k, xl[0], xl[1]);
            let f = self.frames[v];
            for m in 0..n {
                vander[(row, m)] = table.v[m];
                vander[(row + 1, m)] = f.e1[0] * table.dx[m] + f.e1[1] * table.dy[m];
                vander[(row + 2, m)] = f.e2[0] * table.dx[m] + f.e2[1] * table.dy[m];
            }
            row_scale[row + 1] = scale;
            row_scale[row + 2] = scale;
            row += 3;
        }
        let per_edge = k - 3;
        if per_edge > 0 {
            let rule = edge_rule(2 * k)?;
            for i in 0..3 {
                let (a, b) = ordered_edge(tri[(i + 1) % 3], tri[(i + 2) % 3]);
                let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
                for mm in 0..per_edge {
                    for (&s, &w) in rule.points.iter().zip(&rule.weights) {
                        let xl = to_local(lerp(pa, pb, s));
                        table.fill(&self.exps, k, xl[0], xl[1]);
                        let lw = w * shifted_legendre(mm, s);
                        for m in 0..n {
                            vander[(row, m)] += lw * table.v[m];
                        }
                    }
                    row += 1;
                }
            }
        }
        let nint = poly_dim(k - 3);
        let rule = triangle_rule(2 * k)?;
        for (r, &w) in rule.points.iter().zip(&rule.weights) {
            let xl = to_local(self.map_point(t, *r));
            table.fill(&self.exps, k, xl[0], xl[1]);
            for j in 0..nint {
                let qj = table.v[j];
                for m in 0..n {
                    vander[(row + j, m)] += 2.0 * w * qj * table.v[m];
                }
            }
        }

        let inv = vander.full_piv_lu().inverse();
        // inverse check: V C = I
        let mut err: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for m in 0..n {
                    s += vander[(i, m)] * inv[(m, j)];
                }
                err = err.max((s - if i == j { 1.0 } else { 0.0 }).abs());
            }
        }
        if !err.is_finite() || err > 1e-8 {
            return Err(Error::DegenerateElement { element: t });
        }

        let mut coeffs = vec![0.0; n * n];
        for l in 0..n {
            for m in 0..n {
                coeffs[l * n + m] = inv[(m, l)] * row_scale[l];
            }
        }

        let mut dofs = Vec::with_capacity(n);
        for &v in &tri {
            dofs.extend([3 * v, 3 * v + 1, 3 * v + 2]);
        }
        for i in 0..3 {
            let e = mesh.triangle_edges[t][i];
            dofs.extend((0..per_edge).map(|m| self.edge_dof(e, m)));
        }
        dofs.extend((0..nint).map(|r| self.interior_dof(t, r)));

        Ok(ElementBasis { center, scale, dofs, coeffs, degree: k })
    }

    /// Local DOF matrix of triangle `t` with derivative rows multiplied by
    /// `h_K`, as inverted when building the basis.
    pub fn local_dof_matrix(&self, t: usize) -> Mat<f64> {
        let el = &self.elements[t];
        let n = el.len();
        let mut c = Mat::<f64>::zeros(n, n);
        for l in 0..n {
            for m in 0..n {
                c[(m, l)] = el.coeffs[l * n + m];
            }
        }
        // undo the per-function scaling of derivative DOFs
        for v in 0..3 {
            for l in [3 * v + 1, 3 * v + 2] {
                for m in 0..n {
                    c[(m, l)] /= el.scale;
                }
            }
        }
        c.full_piv_lu().inverse()
    }

    /// Evaluates the finite element function `coeffs` (a full DOF vector)
    /// with first and second derivatives at points of triangle `t`.
    pub fn evaluate(&self, coeffs: &[f64], t: usize, points: &[Point]) -> Vec<PointValue> {
        let el = &self.elements[t];
        let mut bv = BasisValues::new(self);
        points
            .iter()
            .map(|&x| {
                el.eval(&self.exps, x, &mut bv);
                combine(el, coeffs, &bv)
            })
            .collect()
    }

    /// Hermite interpolant of `f` (full DOF vector).
    pub fn interpolate(&self, f: &dyn SmoothFunction) -> Vec<f64> {
        self.interpolate_fn(&|x| f.value(x), &|x| f.gradient(x))
    }

    pub fn interpolate_fn(&self, value: &dyn Fn(Point) -> f64, gradient: &dyn Fn(Point) -> [f64; 2]) -> Vec<f64> {
        let mesh = self.mesh;
        let k = self.degree;
        let qdeg = 2 * k + 4;
        let mut out = vec![0.0; self.ndofs];
        for (v, &p) in mesh.vertices.iter().enumerate() {
            let g = gradient(p);
            let f = self.frames[v];
            out[3 * v] = value(p);
            out[3 * v + 1] = dot(g, f.e1);
            out[3 * v + 2] = dot(g, f.e2);
        }
        if k > 3 {
            let rule = edge_rule(qdeg).expect("supported degree");
            for (e, edge) in mesh.edges.iter().enumerate() {
                let [pa, pb] = edge.vertices.map(|v| mesh.vertices[v]);
                for m in 0..k - 3 {
                    out[self.edge_dof(e, m)] = rule
                        .points
                        .iter()
                        .zip(&rule.weights)
                        .map(|(&s, &w)| w * value(lerp(pa, pb, s)) * shifted_legendre(m, s))
                        .sum();
                }
            }
        }
        let rule = triangle_rule(qdeg).expect("supported degree");
        let nint = poly_dim(k - 3);
        for t in 0..mesh.num_triangles() {
            let el = &self.elements[t];
            for (r, &w) in rule.points.iter().zip(&rule.weights) {
                let x = self.map_point(t, *r);
                let fx = value(x);
                let (xi, eta) = ((x[0] - el.center[0]) / el.scale, (x[1] - el.center[1]) / el.scale);
                for (j, &(p, q)) in self.exps[..nint].iter().enumerate() {
                    out[self.interior_dof(t, j)] += 2.0 * w * fx * xi.powi(p as i32) * eta.powi(q as i32);
                }
            }
        }
        out
    }
}

/// Combines basis values with the coefficients of `el`'s DOFs.
#[inline]
pub fn combine(el: &ElementBasis, coeffs: &[f64], bv: &BasisValues) -> PointValue {
    let mut out = PointValue::default();
    for (l, &d) in el.dofs.iter().enumerate() {
        let c = coeffs[d];
        if c == 0.0 {
            continue;
        }
        out.value += c * bv.value[l];
        out.grad[0] += c * bv.grad[l][0];
        out.grad[1] += c * bv.grad[l][1];
        out.hess = out.hess.add(&bv.hess[l].scale(c));
    }
    out
}

#[inline]
pub(crate) fn lerp(a: Point, b: Point, s: f64) -> Point {
    [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
}

#[inline]
pub(crate) fn ordered_edge(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// `build_space` entry point.
pub fn build_space(mesh: &Mesh, degree: usize) -> Result<HermiteSpace<'_>> {
    HermiteSpace::new(mesh, degree)
}
