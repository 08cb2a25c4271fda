//! Assembly of the jump-augmented bilinear forms and the HJB residual.
//!
//! For trial `w` and test `v` in the discrete space:
//!
//! ```text
//! B(w, v) = Σ_K (γ L w, Δv - λv)_K - σ Σ_F ⟨⟦∇w⟧, Δ_T v - λv⟩_F,   σ = 2 - √(1-ε)
//! ```
//!
//! with `λ = 0` for pure second-order problems. Constrained DOFs are
//! eliminated, so systems live on the free DOFs only.

use std::io::Write;

use crate::error::{Error, Result};
use crate::fespace::{combine, BasisValues, HermiteSpace, PointValue};
use crate::geometry::{dot, Point, Sym2};
use crate::problems::{Coeffs, Control, HjbProblem, NondivProblem, PointFamily};
use crate::quadrature::{edge_rule, triangle_rule, TriangleRule};

/// Square sparse matrix in compressed-row layout with a right-hand side.
/// Row `i` is the test function `φ_i`, column `j` the trial function `φ_j`,
/// both over free DOFs.
#[derive(Clone, Debug)]
pub struct SparseSystem {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
    pub rhs: Vec<f64>,
    /// Space DOF of each free index.
    pub free_dofs: Vec<usize>,
}

impl SparseSystem {
    /// Builds the matrix from unsorted triplets, summing duplicates in
    /// insertion order.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>, rhs: Vec<f64>, free_dofs: Vec<usize>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len() / 2);
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len() / 2);
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().expect("entry exists") += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, col_idx, values, rhs, free_dofs }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1])
                    .map(|p| self.values[p] * x[self.col_idx[p]])
                    .sum()
            })
            .collect()
    }

    /// `B(w, v) = vᵀ A w` over free DOFs.
    pub fn bilinear(&self, w: &[f64], v: &[f64]) -> f64 {
        self.matvec(w).iter().zip(v).map(|(a, b)| a * b).sum()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let cols = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        match cols.binary_search(&j) {
            Ok(p) => self.values[self.row_ptr[i] + p],
            Err(_) => 0.0,
        }
    }

    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| self.values[self.row_ptr[i]..self.row_ptr[i + 1]].iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Coordinate text dump: `row col value` per line, zero-based.
    pub fn write_coo<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for i in 0..self.n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                writeln!(out, "{} {} {:e}", i, self.col_idx[p], self.values[p])?;
            }
        }
        Ok(())
    }
}

/// Quadrature data of one interior edge, shared by both neighbours.
#[derive(Clone, Debug)]
pub struct FaceQuad {
    pub edge: usize,
    /// Lower-indexed neighbour and the local index of the edge in it.
    pub plus: (usize, usize),
    pub minus: (usize, usize),
    pub points: Vec<Point>,
    /// Quadrature weights including the edge length.
    pub weights: Vec<f64>,
    /// Unit normal pointing out of `plus`.
    pub normal: [f64; 2],
    pub tangent: [f64; 2],
    pub length: f64,
}

#[derive(Clone, Debug)]
pub struct FaceTermCache {
    pub faces: Vec<FaceQuad>,
}

impl FaceTermCache {
    pub fn new(space: &HermiteSpace<'_>, degree: usize) -> Result<Self> {
        let mesh = space.mesh();
        let rule = edge_rule(degree)?;
        let mut faces = Vec::new();
        for (e, edge) in mesh.edges.iter().enumerate() {
            let Some(t2) = edge.triangles.1 else { continue };
            let t1 = edge.triangles.0;
            let (tp, tm) = (t1.min(t2), t1.max(t2));
            let local = |t: usize| mesh.triangle_edges[t].iter().position(|&x| x == e).expect("edge in triangle");
            let [a, b] = edge.vertices.map(|v| mesh.vertices[v]);
            let d = [b[0] - a[0], b[1] - a[1]];
            let length = d[0].hypot(d[1]);
            let tangent = [d[0] / length, d[1] / length];
            let normal = mesh.outward_normal(tp, local(tp));
            faces.push(FaceQuad {
                edge: e,
                plus: (tp, local(tp)),
                minus: (tm, local(tm)),
                points: rule.points.iter().map(|&s| [a[0] + s * d[0], a[1] + s * d[1]]).collect(),
                weights: rule.weights.iter().map(|w| w * length).collect(),
                normal,
                tangent,
                length,
            });
        }
        Ok(Self { faces })
    }
}

/// `∇w⁺·n⁺ + ∇w⁻·n⁻` on an interior edge at the given points.
pub fn normal_jump(space: &HermiteSpace<'_>, coeffs: &[f64], edge: usize, points: &[Point]) -> Result<Vec<f64>> {
    let mesh = space.mesh();
    let e = mesh
        .edges
        .get(edge)
        .ok_or_else(|| Error::InvalidArgument(format!("edge {edge} out of range")))?;
    let Some(t2) = e.triangles.1 else {
        return Err(Error::InvalidArgument(format!("edge {edge} is on the boundary")));
    };
    let t1 = e.triangles.0;
    let li = |t: usize| mesh.triangle_edges[t].iter().position(|&x| x == edge).expect("edge in triangle");
    let n1 = mesh.outward_normal(t1, li(t1));
    let n2 = mesh.outward_normal(t2, li(t2));
    let v1 = space.evaluate(coeffs, t1, points);
    let v2 = space.evaluate(coeffs, t2, points);
    Ok(v1.iter().zip(&v2).map(|(a, b)| dot(a.grad, n1) + dot(b.grad, n2)).collect())
}

/// Volume quadrature degree used for degree-`k` spaces.
pub fn volume_degree(k: usize) -> usize {
    2 * k
}

/// Edge quadrature degree used for degree-`k` spaces.
pub fn face_degree(k: usize) -> usize {
    2 * k
}

/// Quadrature and face data for one space, reused across assemblies.
pub struct Assembler<'s, 'm> {
    pub space: &'s HermiteSpace<'m>,
    pub volume: TriangleRule,
    pub faces: FaceTermCache,
}

/// Linear operator frozen at every volume quadrature point:
/// coefficients and the weight γ.
pub type PointCoefficients<'a> = dyn Fn(usize, usize, Point) -> Result<(Coeffs, f64)> + 'a;

impl<'s, 'm> Assembler<'s, 'm> {
    pub fn new(space: &'s HermiteSpace<'m>) -> Result<Self> {
        let k = space.degree();
        Ok(Self { space, volume: triangle_rule(volume_degree(k))?, faces: FaceTermCache::new(space, face_degree(k))? })
    }

    pub fn points_per_element(&self) -> usize {
        self.volume.len()
    }

    /// Physical quadrature points and weights (including `|K|`) of `t`.
    pub fn element_quadrature(&self, t: usize) -> (Vec<Point>, Vec<f64>) {
        let jac = 2.0 * self.space.mesh().area(t);
        let pts = self.volume.points.iter().map(|r| self.space.map_point(t, *r)).collect();
        let wts = self.volume.weights.iter().map(|w| w * jac).collect();
        (pts, wts)
    }

    /// Assembles `B` for the operator given pointwise by `coeffs`, with
    /// test action `Δv - λv` and face coefficient `sigma`.
    pub fn assemble(&self, coeffs: &PointCoefficients<'_>, lambda: f64, sigma: f64) -> Result<SparseSystem> {
        let space = self.space;
        let mesh = space.mesh();
        let n = space.local_dim();
        let nfree = space.free_count();
        let mut triplets = Vec::with_capacity(mesh.num_triangles() * n * n + self.faces.faces.len() * 8 * 2 * n);
        let mut rhs = vec![0.0; nfree];
        let mut bv = BasisValues::new(space);
        let mut local = vec![0.0; n * n];
        let mut local_rhs = vec![0.0; n];
        let mut trial = vec![0.0; n];
        let mut test = vec![0.0; n];

        for t in 0..mesh.num_triangles() {
            let el = space.element(t);
            let (pts, wts) = self.element_quadrature(t);
            local.iter_mut().for_each(|x| *x = 0.0);
            local_rhs.iter_mut().for_each(|x| *x = 0.0);
            for (q, (&x, &w)) in pts.iter().zip(&wts).enumerate() {
                let (c, gamma) = coeffs(t, q, x)?;
                el.eval(space.exponents(), x, &mut bv);
                for l in 0..n {
                    trial[l] = c.a.ddot(&bv.hess[l]) + c.b[0] * bv.grad[l][0] + c.b[1] * bv.grad[l][1] - c.c * bv.value[l];
                    test[l] = bv.hess[l].trace() - lambda * bv.value[l];
                }
                let wg = w * gamma;
                for i in 0..n {
                    let ti = wg * test[i];
                    let row = &mut local[i * n..(i + 1) * n];
                    for j in 0..n {
                        row[j] += ti * trial[j];
                    }
                    local_rhs[i] += ti * c.f;
                }
            }
            for i in 0..n {
                let Some(fi) = space.free_index(el.dofs[i]) else { continue };
                rhs[fi] += local_rhs[i];
                for j in 0..n {
                    if let Some(fj) = space.free_index(el.dofs[j]) {
                        triplets.push((fi, fj, local[i * n + j]));
                    }
                }
            }
        }

        let mut bv_minus = BasisValues::new(space);
        for face in &self.faces.faces {
            let (tp, ip) = face.plus;
            let (tm, _) = face.minus;
            let (ep, em) = (space.element(tp), space.element(tm));
            let rows = space.edge_local_dofs(ip);
            // trial columns: all DOFs of both neighbours, jump accumulated per DOF
            let mut cols: Vec<usize> = ep.dofs.iter().chain(&em.dofs).copied().collect();
            cols.sort_unstable();
            cols.dedup();
            let mut block = vec![0.0; rows.len() * cols.len()];
            let mut jump = vec![0.0; cols.len()];
            let nm = [-face.normal[0], -face.normal[1]];
            for (&x, &w) in face.points.iter().zip(&face.weights) {
                ep.eval(space.exponents(), x, &mut bv);
                em.eval(space.exponents(), x, &mut bv_minus);
                jump.iter_mut().for_each(|j| *j = 0.0);
                for l in 0..n {
                    let c = cols.binary_search(&ep.dofs[l]).expect("column");
                    jump[c] += dot(bv.grad[l], face.normal);
                    let c = cols.binary_search(&em.dofs[l]).expect("column");
                    jump[c] += dot(bv_minus.grad[l], nm);
                }
                for (r, &li) in rows.iter().enumerate() {
                    let tv = -sigma * w * (bv.hess[li].quad(face.tangent) - lambda * bv.value[li]);
                    let row = &mut block[r * cols.len()..(r + 1) * cols.len()];
                    for (c, jv) in jump.iter().enumerate() {
                        row[c] += tv * jv;
                    }
                }
            }
            for (r, &li) in rows.iter().enumerate() {
                let Some(fi) = space.free_index(ep.dofs[li]) else { continue };
                for (c, &d) in cols.iter().enumerate() {
                    if let Some(fj) = space.free_index(d) {
                        triplets.push((fi, fj, block[r * cols.len() + c]));
                    }
                }
            }
        }
        Ok(SparseSystem::from_triplets(nfree, triplets, rhs, space.free_dofs().to_vec()))
    }

    /// `Σ_F ⟨⟦∇u⟧, Δ_T φ_i - λφ_i⟩_F` for every free `i`, scaled by `-sigma`
    /// and added into `out`.
    fn add_face_action(&self, u: &[f64], lambda: f64, sigma: f64, out: &mut [f64]) {
        let space = self.space;
        let mut bv = BasisValues::new(space);
        let mut bvm = BasisValues::new(space);
        for face in &self.faces.faces {
            let (ep, em) = (space.element(face.plus.0), space.element(face.minus.0));
            let rows = space.edge_local_dofs(face.plus.1);
            for (&x, &w) in face.points.iter().zip(&face.weights) {
                ep.eval(space.exponents(), x, &mut bv);
                em.eval(space.exponents(), x, &mut bvm);
                let gp = combine(ep, u, &bv).grad;
                let gm = combine(em, u, &bvm).grad;
                let jump = dot(gp, face.normal) - dot(gm, face.normal);
                for &li in &rows {
                    if let Some(fi) = space.free_index(ep.dofs[li]) {
                        out[fi] -= sigma * w * jump * (bv.hess[li].quad(face.tangent) - lambda * bv.value[li]);
                    }
                }
            }
        }
    }

    /// Evaluates the HJB data at every volume quadrature point of `u`:
    /// the unweighted argmax control field (with frozen coefficients) and
    /// the residual `⟨M_h[u], φ_i⟩` over free DOFs.
    pub fn hjb_point_data(&self, hjb: &HjbProblem, u: &[f64]) -> Result<(ControlField, Vec<f64>)> {
        let space = self.space;
        let mesh = space.mesh();
        let n = space.local_dim();
        let nq = self.points_per_element();
        let lambda = hjb.lambda;
        let sigma = face_coefficient(hjb.epsilon);
        let mut controls = Vec::with_capacity(mesh.num_triangles() * nq);
        let mut frozen = Vec::with_capacity(mesh.num_triangles() * nq);
        let mut residual = vec![0.0; space.free_count()];
        let mut bv = BasisValues::new(space);
        for t in 0..mesh.num_triangles() {
            let el = space.element(t);
            let (pts, wts) = self.element_quadrature(t);
            for (&x, &w) in pts.iter().zip(&wts) {
                el.eval(space.exponents(), x, &mut bv);
                let v = combine(el, u, &bv);
                let family = hjb.at(x);
                let (ctl, _) = hjb.argmax_unweighted(&family, &v);
                let c = family(&ctl);
                controls.push(ctl);
                frozen.push((c, hjb.gamma(&c).and_then(check_gamma)?));
                let (_, fg) = hjb.argmax_weighted(&family, &v);
                for l in 0..n {
                    if let Some(fi) = space.free_index(el.dofs[l]) {
                        residual[fi] += w * fg * (bv.hess[l].trace() - lambda * bv.value[l]);
                    }
                }
            }
        }
        self.add_face_action(u, lambda, sigma, &mut residual);
        Ok((ControlField { points_per_element: nq, controls, frozen }, residual))
    }

    /// Control field of pointwise unweighted maximizers at `u`.
    pub fn control_field(&self, hjb: &HjbProblem, u: &[f64]) -> Result<ControlField> {
        let space = self.space;
        let mesh = space.mesh();
        let nq = self.points_per_element();
        let mut controls = Vec::with_capacity(mesh.num_triangles() * nq);
        let mut frozen = Vec::with_capacity(mesh.num_triangles() * nq);
        let mut bv = BasisValues::new(space);
        for t in 0..mesh.num_triangles() {
            let el = space.element(t);
            let (pts, _) = self.element_quadrature(t);
            for &x in &pts {
                el.eval(space.exponents(), x, &mut bv);
                let v = combine(el, u, &bv);
                let family = hjb.at(x);
                let (ctl, _) = hjb.argmax_unweighted(&family, &v);
                let c = family(&ctl);
                controls.push(ctl);
                frozen.push((c, hjb.gamma(&c).and_then(check_gamma)?));
            }
        }
        Ok(ControlField { points_per_element: nq, controls, frozen })
    }

    /// Control field with prescribed controls at every quadrature point.
    pub fn fixed_control_field(&self, hjb: &HjbProblem, controls: Vec<Control>) -> Result<ControlField> {
        let mesh = self.space.mesh();
        let nq = self.points_per_element();
        if controls.len() != mesh.num_triangles() * nq {
            return Err(Error::InvalidArgument(format!(
                "control field has {} entries, expected {}",
                controls.len(),
                mesh.num_triangles() * nq
            )));
        }
        let mut frozen = Vec::with_capacity(controls.len());
        for t in 0..mesh.num_triangles() {
            let (pts, _) = self.element_quadrature(t);
            for (q, &x) in pts.iter().enumerate() {
                let family: PointFamily<'_> = hjb.at(x);
                let c = family(&controls[t * nq + q]);
                frozen.push((c, hjb.gamma(&c).and_then(check_gamma)?));
            }
        }
        Ok(ControlField { points_per_element: nq, controls, frozen })
    }

    pub fn hjb_linearization(&self, hjb: &HjbProblem, field: &ControlField) -> Result<SparseSystem> {
        let nq = self.points_per_element();
        if field.points_per_element != nq || field.frozen.len() != self.space.mesh().num_triangles() * nq {
            return Err(Error::InvalidArgument("control field does not cover every quadrature point".into()));
        }
        let coeffs = |t: usize, q: usize, _x: Point| Ok(field.frozen[t * nq + q]);
        self.assemble(&coeffs, hjb.lambda, face_coefficient(hjb.epsilon))
    }

    pub fn nondiv_system(&self, problem: &NondivProblem, eps_used: f64) -> Result<SparseSystem> {
        if !(eps_used >= 0.0 && eps_used <= 1.0) {
            return Err(Error::InvalidArgument(format!("ε̃ must lie in [0, 1], got {eps_used}")));
        }
        problem.check_mesh(self.space.mesh())?;
        let coeffs = |_t: usize, _q: usize, x: Point| {
            let c = problem.coeffs(x);
            let g = problem.gamma(&c).and_then(check_gamma)?;
            Ok((c, g))
        };
        let lambda = if problem.lower_order { problem.lambda } else { 0.0 };
        self.assemble(&coeffs, lambda, face_coefficient(eps_used))
    }
}

fn check_gamma(g: f64) -> Result<f64> {
    if g > 0.0 && g.is_finite() {
        Ok(g)
    } else {
        Err(Error::CordesViolation(g))
    }
}

/// `2 - √(1 - ε)`.
pub fn face_coefficient(eps: f64) -> f64 {
    2.0 - (1.0 - eps).sqrt()
}

/// Controls and frozen `(coefficients, γ)` at every volume quadrature
/// point, indexed `element * points_per_element + q`.
#[derive(Clone, Debug)]
pub struct ControlField {
    pub points_per_element: usize,
    pub controls: Vec<Control>,
    pub frozen: Vec<(Coeffs, f64)>,
}

impl ControlField {
    /// Number of entries whose control differs bitwise from `other`.
    pub fn changed_from(&self, other: &ControlField) -> usize {
        self.controls.iter().zip(&other.controls).filter(|(a, b)| !a.same_as(b)).count()
    }
}

/// `B_{0,h}` (or its lower-order extension) with face coefficient
/// `2 - √(1 - eps_used)`, plus the right-hand side `(γf, Δφ_i - λφ_i)`.
pub fn assemble_nondiv_system(space: &HermiteSpace<'_>, problem: &NondivProblem, eps_used: f64) -> Result<SparseSystem> {
    Assembler::new(space)?.nondiv_system(problem, eps_used)
}

/// Newton linear system for a prescribed control at every volume
/// quadrature point.
pub fn assemble_hjb_linearization(space: &HermiteSpace<'_>, hjb: &HjbProblem, controls: Vec<Control>) -> Result<SparseSystem> {
    let asm = Assembler::new(space)?;
    let field = asm.fixed_control_field(hjb, controls)?;
    asm.hjb_linearization(hjb, &field)
}

/// `⟨M_h[u], φ_i⟩` for every free DOF `i`; `u` is a full DOF vector.
pub fn hjb_residual(space: &HermiteSpace<'_>, hjb: &HjbProblem, u: &[f64]) -> Result<Vec<f64>> {
    Ok(Assembler::new(space)?.hjb_point_data(hjb, u)?.1)
}

/// Evaluates `u` at all volume quadrature points, element by element.
pub fn values_at_quadrature(asm: &Assembler<'_, '_>, u: &[f64]) -> Vec<(Point, f64, PointValue)> {
    let space = asm.space;
    let mut out = Vec::new();
    let mut bv = BasisValues::new(space);
    for t in 0..space.mesh().num_triangles() {
        let el = space.element(t);
        let (pts, wts) = asm.element_quadrature(t);
        for (&x, &w) in pts.iter().zip(&wts) {
            el.eval(space.exponents(), x, &mut bv);
            out.push((x, w, combine(el, u, &bv)));
        }
    }
    out
}

/// Tangential second derivative `tᵀ H t`.
#[inline]
pub fn tangential_laplacian(h: &Sym2, t: [f64; 2]) -> f64 {
    h.quad(t)
}
