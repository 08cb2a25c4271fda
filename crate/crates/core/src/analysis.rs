//! Broken norms, errors against exact solutions, the discrete
//! Miranda-Talenti identity and convergence orders.

use std::io::Write;

use crate::error::{Error, Result};
use crate::fespace::{combine, BasisValues, HermiteSpace, SmoothFunction};
use crate::forms::FaceTermCache;
use crate::geometry::dot;
use crate::quadrature::{triangle_rule, TriangleRule};

/// Squared broken seminorms `(‖v‖², |v|²_{H¹}, Σ_K |v|²_{H²(K)})`.
fn squared_norms(space: &HermiteSpace<'_>, coeffs: &[f64], quad_degree: usize) -> Result<[f64; 3]> {
    let rule = triangle_rule(quad_degree)?;
    let mesh = space.mesh();
    let mut bv = BasisValues::new(space);
    let mut acc = [0.0; 3];
    for t in 0..mesh.num_triangles() {
        let el = space.element(t);
        let jac = 2.0 * mesh.area(t);
        for (r, &w) in rule.points.iter().zip(&rule.weights) {
            let x = space.map_point(t, *r);
            el.eval(space.exponents(), x, &mut bv);
            let v = combine(el, coeffs, &bv);
            let w = w * jac;
            acc[0] += w * v.value * v.value;
            acc[1] += w * dot(v.grad, v.grad);
            acc[2] += w * v.hess.norm2();
        }
    }
    Ok(acc)
}

/// `(Σ_K ‖D²v‖² + 2λ‖∇v‖² + λ²‖v‖²)^{1/2}`, exact for members of the space.
pub fn lambda_norm(space: &HermiteSpace<'_>, coeffs: &[f64], lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("λ must be nonnegative, got {lambda}")));
    }
    let [l2, h1, h2] = squared_norms(space, coeffs, 2 * space.degree())?;
    Ok((h2 + 2.0 * lambda * h1 + lambda * lambda * l2).sqrt())
}

/// One row of an error table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorRow {
    pub h: f64,
    pub ndof: usize,
    pub l2: f64,
    pub h1: f64,
    pub h2_broken: f64,
    pub lambda_norm: f64,
}

/// Errors of `coeffs` against `exact` using element quadrature of degree
/// `2k + 4`.
pub fn error_norms(space: &HermiteSpace<'_>, coeffs: &[f64], exact: &dyn SmoothFunction, lambda: f64) -> Result<ErrorRow> {
    let rule = triangle_rule(2 * space.degree() + 4)?;
    error_norms_with_rule(space, coeffs, exact, lambda, &rule)
}

/// As [`error_norms`] with a caller-supplied element rule.
pub fn error_norms_with_rule(
    space: &HermiteSpace<'_>,
    coeffs: &[f64],
    exact: &dyn SmoothFunction,
    lambda: f64,
    rule: &TriangleRule,
) -> Result<ErrorRow> {
    if coeffs.len() != space.ndofs() {
        return Err(Error::InvalidArgument(format!("{} coefficients, expected {}", coeffs.len(), space.ndofs())));
    }
    let mesh = space.mesh();
    let mut bv = BasisValues::new(space);
    let mut acc = [0.0; 3];
    for t in 0..mesh.num_triangles() {
        let el = space.element(t);
        let jac = 2.0 * mesh.area(t);
        for (r, &w) in rule.points.iter().zip(&rule.weights) {
            let x = space.map_point(t, *r);
            el.eval(space.exponents(), x, &mut bv);
            let v = combine(el, coeffs, &bv);
            let (u, g, h) = (exact.value(x), exact.gradient(x), exact.hessian(x));
            let w = w * jac;
            acc[0] += w * (u - v.value).powi(2);
            acc[1] += w * ((g[0] - v.grad[0]).powi(2) + (g[1] - v.grad[1]).powi(2));
            acc[2] += w * h.sub(&v.hess).norm2();
        }
    }
    let [l2, h1, h2] = acc;
    Ok(ErrorRow {
        h: mesh.h(),
        ndof: space.free_count(),
        l2: l2.sqrt(),
        h1: h1.sqrt(),
        h2_broken: h2.sqrt(),
        lambda_norm: (h2 + 2.0 * lambda * h1 + lambda * lambda * l2).sqrt(),
    })
}

/// Terms of the discrete Miranda-Talenti identity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MtTerms {
    /// `Σ_K ‖Δv‖²`
    pub laplacian: f64,
    /// `Σ_K ‖D²v‖²`
    pub hessian: f64,
    /// `Σ_F ⟨⟦∇v⟧, Δ_T v⟩_F`
    pub jump: f64,
}

impl MtTerms {
    /// `Σ‖Δv‖² - Σ‖D²v‖² - 2 Σ_F ⟨⟦∇v⟧, Δ_T v⟩`.
    pub fn gap(&self) -> f64 {
        self.laplacian - self.hessian - 2.0 * self.jump
    }
}

pub fn mt_identity_terms(space: &HermiteSpace<'_>, coeffs: &[f64]) -> Result<MtTerms> {
    let k = space.degree();
    let rule = triangle_rule(2 * k)?;
    let mesh = space.mesh();
    let mut bv = BasisValues::new(space);
    let mut bvm = BasisValues::new(space);
    let (mut lap, mut hess) = (0.0, 0.0);
    for t in 0..mesh.num_triangles() {
        let el = space.element(t);
        let jac = 2.0 * mesh.area(t);
        for (r, &w) in rule.points.iter().zip(&rule.weights) {
            let x = space.map_point(t, *r);
            el.eval(space.exponents(), x, &mut bv);
            let v = combine(el, coeffs, &bv);
            lap += w * jac * v.hess.trace().powi(2);
            hess += w * jac * v.hess.norm2();
        }
    }
    let mut jump = 0.0;
    for face in &FaceTermCache::new(space, 2 * k)?.faces {
        let (ep, em) = (space.element(face.plus.0), space.element(face.minus.0));
        for (&x, &w) in face.points.iter().zip(&face.weights) {
            ep.eval(space.exponents(), x, &mut bv);
            em.eval(space.exponents(), x, &mut bvm);
            let vp = combine(ep, coeffs, &bv);
            let vm = combine(em, coeffs, &bvm);
            let j = dot(vp.grad, face.normal) - dot(vm.grad, face.normal);
            jump += w * j * vp.hess.quad(face.tangent);
        }
    }
    Ok(MtTerms { laplacian: lap, hessian: hess, jump })
}

/// `Σ_K‖Δv‖² - Σ_K‖D²v‖² - 2Σ_F⟨⟦∇v⟧, Δ_T v⟩_F`; zero for every `v` in the
/// space.
pub fn mt_identity_gap(space: &HermiteSpace<'_>, coeffs: &[f64]) -> Result<f64> {
    Ok(mt_identity_terms(space, coeffs)?.gap())
}

/// How orders are measured between consecutive rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OrderBasis {
    /// `log(e_i/e_{i+1}) / log(h_i/h_{i+1})`
    MeshSize,
    /// Orders with respect to `ndof^{-1/2}`.
    Ndof,
}

#[derive(Clone, Debug)]
pub struct ErrorReport {
    pub rows: Vec<ErrorRow>,
    pub basis: OrderBasis,
}

/// Orders of the four error columns between rows `i - 1` and `i`.
pub type Orders = [Option<f64>; 4];

fn order(e0: f64, e1: f64, s0: f64, s1: f64) -> Option<f64> {
    if e0 > 0.0 && e1 > 0.0 && s0 > 0.0 && s1 > 0.0 && s0 != s1 {
        Some((e0 / e1).ln() / (s0 / s1).ln())
    } else {
        None
    }
}

impl ErrorReport {
    pub fn new(basis: OrderBasis) -> Self {
        Self { rows: Vec::new(), basis }
    }

    /// Orders per row; the first row has none.
    pub fn convergence_orders(&self) -> Vec<Orders> {
        let mut out = vec![[None; 4]];
        for w in self.rows.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let (s0, s1) = match self.basis {
                OrderBasis::MeshSize => (a.h, b.h),
                OrderBasis::Ndof => ((a.ndof as f64).powf(-0.5), (b.ndof as f64).powf(-0.5)),
            };
            out.push([
                order(a.l2, b.l2, s0, s1),
                order(a.h1, b.h1, s0, s1),
                order(a.h2_broken, b.h2_broken, s0, s1),
                order(a.lambda_norm, b.lambda_norm, s0, s1),
            ]);
        }
        out.truncate(self.rows.len());
        out
    }

    /// CSV with header
    /// `h,ndof,l2,h1,h2_broken,lambda_norm,order_l2,order_h1,order_h2,order_lambda`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "h",
            "ndof",
            "l2",
            "h1",
            "h2_broken",
            "lambda_norm",
            "order_l2",
            "order_h1",
            "order_h2",
            "order_lambda",
        ])?;
        let fmt = |o: Option<f64>| o.map(|v| format!("{v:e}")).unwrap_or_default();
        for (r, o) in self.rows.iter().zip(self.convergence_orders()) {
            w.write_record([
                format!("{:e}", r.h),
                r.ndof.to_string(),
                format!("{:e}", r.l2),
                format!("{:e}", r.h1),
                format!("{:e}", r.h2_broken),
                format!("{:e}", r.lambda_norm),
                fmt(o[0]),
                fmt(o[1]),
                fmt(o[2]),
                fmt(o[3]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 || x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return None;
    }
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point, Sym2};
    use crate::mesh::uniform_rect_mesh;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Bubble;

    impl SmoothFunction for Bubble {
        fn value(&self, x: Point) -> f64 {
            x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1])
        }
        fn gradient(&self, x: Point) -> [f64; 2] {
            [(1.0 - 2.0 * x[0]) * x[1] * (1.0 - x[1]), x[0] * (1.0 - x[0]) * (1.0 - 2.0 * x[1])]
        }
        fn hessian(&self, x: Point) -> Sym2 {
            Sym2::new(
                -2.0 * x[1] * (1.0 - x[1]),
                (1.0 - 2.0 * x[0]) * (1.0 - 2.0 * x[1]),
                -2.0 * x[0] * (1.0 - x[0]),
            )
        }
    }

    fn row(h: f64, e: f64) -> ErrorRow {
        ErrorRow { h, ndof: 1, l2: e, h1: e, h2_broken: e, lambda_norm: e }
    }

    #[test]
    fn exact_power_law_orders() {
        let mut r = ErrorReport::new(OrderBasis::MeshSize);
        r.rows = vec![row(2.0, 4.0), row(1.0, 1.0), row(0.5, 1.0), row(0.25, 0.0)];
        let o = r.convergence_orders();
        assert_eq!(o[0], [None; 4]);
        assert!((o[1][2].unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(o[2][2], Some(0.0));
        assert_eq!(o[3][2], None);
    }

    #[test]
    fn ndof_orders() {
        let mut r = ErrorReport::new(OrderBasis::Ndof);
        r.rows = vec![ErrorRow { ndof: 100, ..row(1.0, 1.0) }, ErrorRow { ndof: 400, ..row(1.0, 0.25) }];
        assert!((r.convergence_orders()[1][0].unwrap() - 2.0).abs() < 1e-14);
        assert!((loglog_slope(&[100.0, 400.0], &[1.0, 0.25]).unwrap() + 1.0).abs() < 1e-14);
        assert!(loglog_slope(&[1.0], &[1.0]).is_none());
    }

    #[test]
    fn csv_header_and_empty_orders() {
        let mut r = ErrorReport::new(OrderBasis::MeshSize);
        r.rows = vec![row(0.5, 0.1), row(0.25, 0.025)];
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "h,ndof,l2,h1,h2_broken,lambda_norm,order_l2,order_h1,order_h2,order_lambda");
        assert!(lines[1].ends_with(",,,,"));
        assert!(lines[2].ends_with(",2e0,2e0,2e0,2e0"), "{}", lines[2]);
    }

    #[test]
    fn lambda_norm_of_bilinear_function() {
        let m = uniform_rect_mesh(0.0, 1.0, 0.0, 1.0, 2).unwrap();
        let s = HermiteSpace::new(&m, 3).unwrap();
        let c = s.interpolate_fn(&|x| x[0] * x[1], &|x| [x[1], x[0]]);
        assert!((lambda_norm(&s, &c, 0.0).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(lambda_norm(&s, &vec![0.0; s.ndofs()], 3.0).unwrap(), 0.0);
        assert!(lambda_norm(&s, &c, -1.0).is_err());
        let mut prev = 0.0;
        for l in [0.0, 0.5, 1.0, 4.0] {
            let v = lambda_norm(&s, &c, l).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn smooth_member_has_zero_gap_and_no_jumps() {
        let m = uniform_rect_mesh(0.0, 1.0, 0.0, 1.0, 3).unwrap();
        let s = HermiteSpace::new(&m, 4).unwrap();
        let c = s.interpolate(&Bubble);
        let t = mt_identity_terms(&s, &c).unwrap();
        assert!(t.gap().abs() < 1e-12);
        assert!(t.jump.abs() < 1e-12);
        assert!((t.laplacian - t.hessian).abs() < 1e-12);
        let e = error_norms(&s, &c, &Bubble, 1.0).unwrap();
        assert!(e.l2 < 1e-10 && e.h1 < 1e-10 && e.h2_broken < 1e-10);
    }

    #[test]
    fn random_members_satisfy_the_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for (lo, hi) in [(0.0, 1.0), (-1.0, 1.0)] {
            let m = uniform_rect_mesh(lo, hi, lo, hi, 2).unwrap();
            for k in [3, 4] {
                let s = HermiteSpace::new(&m, k).unwrap();
                for _ in 0..5 {
                    let free: Vec<f64> = (0..s.free_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let c = s.expand(&free);
                    let t = mt_identity_terms(&s, &c).unwrap();
                    assert!(t.gap().abs() <= 1e-10 * t.hessian, "{t:?}");
                    assert!(t.jump.abs() > 1e-8 * t.hessian);
                }
            }
        }
    }

    #[test]
    fn interpolation_error_decays_quadratically_in_h2() {
        let m4 = uniform_rect_mesh(0.0, 1.0, 0.0, 1.0, 4).unwrap();
        let m8 = uniform_rect_mesh(0.0, 1.0, 0.0, 1.0, 8).unwrap();
        let u = crate::problems::SineBump { domain: crate::problems::Domain::UNIT };
        let e = |m: &crate::mesh::Mesh| {
            let s = HermiteSpace::new(m, 3).unwrap();
            error_norms(&s, &s.interpolate(&u), &u, 0.0).unwrap().h2_broken
        };
        let rate = (e(&m4) / e(&m8)).log2();
        assert!((rate - 2.0).abs() < 0.15, "{rate}");
    }
}
