//! Coefficient data, Cordes quantities and the built-in experiments.
//!
//! A linear problem `A:D²u + b·∇u - cu = f` is a [`NondivProblem`]. An HJB
//! problem `sup_α (A^α:D²u + b^α·∇u - c^α u - f^α) = 0` is an [`HjbProblem`]
//! whose control set is searched on a sample grid followed by a local
//! golden-section polish.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fespace::{PointValue, SmoothFunction};
use crate::geometry::{Point, Sym2};
use crate::mesh::Mesh;

/// Coefficients of one linear operator at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coeffs {
    pub a: Sym2,
    pub b: [f64; 2],
    pub c: f64,
    pub f: f64,
}

impl Coeffs {
    /// `A:D²v + b·∇v - c v`.
    #[inline]
    pub fn apply(&self, v: &PointValue) -> f64 {
        self.a.ddot(&v.hess) + self.b[0] * v.grad[0] + self.b[1] * v.grad[1] - self.c * v.value
    }

    pub fn has_lower_order(&self) -> bool {
        self.b != [0.0, 0.0] || self.c != 0.0
    }
}

/// `tr A / |A|²`.
pub fn gamma_nondiv(a: &Sym2) -> Result<f64> {
    let tr = a.trace();
    if !(tr > 0.0) {
        return Err(Error::Ellipticity { trace: tr, x: f64::NAN, y: f64::NAN });
    }
    Ok(tr / a.norm2())
}

/// `(tr A + c/λ) / (|A|² + |b|²/(2λ) + (c/λ)²)`.
pub fn gamma_hjb(a: &Sym2, b: [f64; 2], c: f64, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("λ must be positive, got {lambda}")));
    }
    let cl = c / lambda;
    let den = a.norm2() + (b[0] * b[0] + b[1] * b[1]) / (2.0 * lambda) + cl * cl;
    if !(den > 0.0) {
        return Err(Error::InvalidData(format!("nonpositive γ denominator {den}")));
    }
    Ok((a.trace() + cl) / den)
}

/// Weight γ for coefficients `c`: the lower-order branch whenever the
/// problem has lower-order terms anywhere, else the pure second-order one.
#[inline]
pub fn gamma_for(c: &Coeffs, lambda: f64, lower_order: bool) -> Result<f64> {
    if lower_order {
        gamma_hjb(&c.a, c.b, c.c, lambda)
    } else {
        gamma_nondiv(&c.a)
    }
}

/// Largest ε with `|A|²/(tr A)² ≤ 1/(1 + ε)` on the samples, clamped to 1.
pub fn cordes_epsilon_nondiv(samples: &[Sym2]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no sample matrices".into()));
    }
    let eps = samples
        .iter()
        .map(|a| a.trace().powi(2) / a.norm2() - 1.0)
        .fold(f64::INFINITY, f64::min);
    if !(eps > 0.0) {
        return Err(Error::CordesViolation(eps));
    }
    Ok(eps.min(1.0))
}

/// Largest ε with `(|A|² + |b|²/(2λ) + (c/λ)²)/(tr A + c/λ)² ≤ 1/(2 + ε)` on
/// the samples, clamped to 1.
pub fn cordes_epsilon_lower_order(samples: &[Coeffs], lambda: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no sample coefficients".into()));
    }
    let eps = samples
        .iter()
        .map(|s| {
            let cl = s.c / lambda;
            let num = s.a.norm2() + (s.b[0] * s.b[0] + s.b[1] * s.b[1]) / (2.0 * lambda) + cl * cl;
            (s.a.trace() + cl).powi(2) / num - 2.0
        })
        .fold(f64::INFINITY, f64::min);
    if !(eps > 0.0) {
        return Err(Error::CordesViolation(eps));
    }
    Ok(eps.min(1.0))
}

/// Axis-aligned rectangular domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Domain {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
}

impl Domain {
    pub const UNIT: Domain = Domain { xmin: 0.0, xmax: 1.0, ymin: 0.0, ymax: 1.0 };
    pub const SYMMETRIC: Domain = Domain { xmin: -1.0, xmax: 1.0, ymin: -1.0, ymax: 1.0 };

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }
}

type CoefficientFn = dyn Fn(Point) -> Coeffs + Send + Sync;

/// `A:D²u + b·∇u - cu = f` in a rectangle with `u = 0` on the boundary.
#[derive(Clone)]
pub struct NondivProblem {
    pub name: String,
    pub domain: Domain,
    pub epsilon: f64,
    /// Zero for pure second-order problems.
    pub lambda: f64,
    pub lower_order: bool,
    pub exact: Option<Arc<dyn SmoothFunction>>,
    /// Coefficients jump across the lines through this point; meshes must
    /// resolve them.
    pub jump_lines: Option<Point>,
    coefficients: Arc<CoefficientFn>,
}

impl fmt::Debug for NondivProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NondivProblem")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("epsilon", &self.epsilon)
            .field("lambda", &self.lambda)
            .finish_non_exhaustive()
    }
}

impl NondivProblem {
    pub fn new(
        name: impl Into<String>,
        domain: Domain,
        epsilon: f64,
        lambda: f64,
        lower_order: bool,
        coefficients: impl Fn(Point) -> Coeffs + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::InvalidArgument(format!("ε must lie in (0, 1], got {epsilon}")));
        }
        if lower_order && !(lambda > 0.0) {
            return Err(Error::InvalidArgument("lower-order terms need λ > 0".into()));
        }
        Ok(Self {
            name: name.into(),
            domain,
            epsilon,
            lambda,
            lower_order,
            exact: None,
            jump_lines: None,
            coefficients: Arc::new(coefficients),
        })
    }

    pub fn with_exact(mut self, u: Arc<dyn SmoothFunction>) -> Self {
        self.exact = Some(u);
        self
    }

    pub fn with_jump_lines(mut self, center: Point) -> Self {
        self.jump_lines = Some(center);
        self
    }

    /// Replaces the coefficients, keeping everything else.
    pub fn with_coefficients(mut self, coefficients: impl Fn(Point) -> Coeffs + Send + Sync + 'static) -> Self {
        self.coefficients = Arc::new(coefficients);
        self
    }

    #[inline]
    pub fn coeffs(&self, x: Point) -> Coeffs {
        (self.coefficients)(x)
    }

    pub fn gamma(&self, c: &Coeffs) -> Result<f64> {
        gamma_for(c, self.lambda, self.lower_order)
    }

    /// Rejects meshes whose elements straddle a coefficient jump.
    pub fn check_mesh(&self, mesh: &Mesh) -> Result<()> {
        if let Some(c) = self.jump_lines {
            if !mesh.resolves_lines(c) {
                return Err(Error::MeshNotAligned(format!(
                    "{}: mesh must resolve the lines x = {} and y = {}",
                    self.name, c[0], c[1]
                )));
            }
        }
        Ok(())
    }
}

/// One parameter axis of a control set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub samples: usize,
    /// Periodic axes sample `[lo, hi)`; others sample `[lo, hi]`.
    pub periodic: bool,
}

/// A point of the control set with its trigonometric values cached.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Control {
    pub params: [f64; 2],
    pub sin: [f64; 2],
    pub cos: [f64; 2],
}

impl Control {
    pub fn new(params: [f64; 2]) -> Self {
        Self {
            params,
            sin: [params[0].sin(), params[1].sin()],
            cos: [params[0].cos(), params[1].cos()],
        }
    }

    /// Bitwise parameter equality.
    pub fn same_as(&self, other: &Control) -> bool {
        self.params[0].to_bits() == other.params[0].to_bits() && self.params[1].to_bits() == other.params[1].to_bits()
    }
}

/// Compact parameter box discretized by a tensor grid.
#[derive(Clone, Debug)]
pub struct ControlSet {
    axes: Vec<Axis>,
    grid: Vec<Control>,
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

impl ControlSet {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::InvalidArgument("control sets have one or two axes".into()));
        }
        for a in &axes {
            if a.samples == 0 || !(a.hi >= a.lo) || !a.lo.is_finite() || !a.hi.is_finite() {
                return Err(Error::InvalidArgument(format!("bad control axis {a:?}")));
            }
        }
        let coords: Vec<Vec<f64>> = axes.iter().map(axis_samples).collect();
        let mut grid = Vec::new();
        let second = coords.get(1).cloned().unwrap_or_else(|| vec![0.0]);
        for &p in &coords[0] {
            for &q in &second {
                grid.push(Control::new([p, q]));
            }
        }
        Ok(Self { axes, grid })
    }

    /// Set with a single control.
    pub fn single(params: [f64; 2]) -> Self {
        let axes = vec![
            Axis { lo: params[0], hi: params[0], samples: 1, periodic: false },
            Axis { lo: params[1], hi: params[1], samples: 1, periodic: false },
        ];
        Self { axes, grid: vec![Control::new(params)] }
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn grid(&self) -> &[Control] {
        &self.grid
    }

    /// Maximizes `objective` over the set: grid scan (first maximizer wins),
    /// then one golden-section pass per axis around it, accepting only
    /// strict improvements.
    pub fn maximize(&self, objective: impl Fn(&Control) -> f64) -> (Control, f64) {
        let mut best = self.grid[0];
        let mut best_val = objective(&best);
        for ctl in &self.grid[1..] {
            let v = objective(ctl);
            if v > best_val {
                best = *ctl;
                best_val = v;
            }
        }
        for (ax, axis) in self.axes.iter().enumerate() {
            if axis.samples < 2 || axis.hi == axis.lo {
                continue;
            }
            let step = axis_step(axis);
            let centre = best.params[ax];
            let (mut lo, mut hi) = (centre - step, centre + step);
            if !axis.periodic {
                lo = lo.max(axis.lo);
                hi = hi.min(axis.hi);
            }
            let eval = |p: f64| {
                let mut params = best.params;
                params[ax] = p;
                let c = Control::new(params);
                (objective(&c), c)
            };
            let (cand_val, cand) = golden_section(eval, lo, hi);
            if cand_val > best_val {
                best = cand;
                best_val = cand_val;
            }
        }
        (best, best_val)
    }
}

fn axis_samples(a: &Axis) -> Vec<f64> {
    if a.samples == 1 {
        return vec![a.lo];
    }
    let step = axis_step(a);
    (0..a.samples).map(|i| a.lo + i as f64 * step).collect()
}

fn axis_step(a: &Axis) -> f64 {
    if a.periodic {
        (a.hi - a.lo) / a.samples as f64
    } else {
        (a.hi - a.lo) / (a.samples.max(2) - 1) as f64
    }
}

/// Golden-section search for a maximum on `[lo, hi]`; also tries the
/// endpoints so boundary maxima are found exactly.
fn golden_section(eval: impl Fn(f64) -> (f64, Control), lo: f64, hi: f64) -> (f64, Control) {
    let (mut a, mut b) = (lo, hi);
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let mut fc = eval(c);
    let mut fd = eval(d);
    while b - a > 1e-10 * (1.0 + a.abs().max(b.abs())) {
        if fc.0 >= fd.0 {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = eval(d);
        }
    }
    let mut best = if fc.0 >= fd.0 { fc } else { fd };
    for end in [lo, hi] {
        let e = eval(end);
        if e.0 > best.0 {
            best = e;
        }
    }
    best
}

/// Coefficients of an HJB family frozen at a point `x`, as a function of
/// the control.
pub type PointFamily<'a> = Box<dyn Fn(&Control) -> Coeffs + 'a>;

/// Controlled coefficient family `α ↦ (A^α, b^α, c^α, f^α)(x)`.
pub trait ControlledCoefficients: Send + Sync {
    /// Freezes the family at `x`; expensive `x`-only work happens here once.
    fn at(&self, x: Point) -> PointFamily<'_>;
}

/// `sup_α (A^α:D²u + b^α·∇u - c^α u - f^α) = 0` in a rectangle, `u = 0` on the
/// boundary.
#[derive(Clone)]
pub struct HjbProblem {
    pub name: String,
    pub domain: Domain,
    pub control_set: ControlSet,
    pub lambda: f64,
    pub epsilon: f64,
    pub lower_order: bool,
    pub exact: Option<Arc<dyn SmoothFunction>>,
    family: Arc<dyn ControlledCoefficients>,
}

impl fmt::Debug for HjbProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HjbProblem")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("lambda", &self.lambda)
            .field("epsilon", &self.epsilon)
            .finish_non_exhaustive()
    }
}

impl HjbProblem {
    pub fn new(
        name: impl Into<String>,
        domain: Domain,
        control_set: ControlSet,
        lambda: f64,
        epsilon: f64,
        lower_order: bool,
        family: Arc<dyn ControlledCoefficients>,
    ) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::InvalidArgument(format!("ε must lie in (0, 1], got {epsilon}")));
        }
        if lower_order && !(lambda > 0.0) {
            return Err(Error::InvalidArgument("lower-order terms need λ > 0".into()));
        }
        Ok(Self { name: name.into(), domain, control_set, lambda, epsilon, lower_order, exact: None, family })
    }

    pub fn with_exact(mut self, u: Arc<dyn SmoothFunction>) -> Self {
        self.exact = Some(u);
        self
    }

    pub fn with_control_set(mut self, set: ControlSet) -> Self {
        self.control_set = set;
        self
    }

    pub fn at(&self, x: Point) -> PointFamily<'_> {
        self.family.at(x)
    }

    pub fn gamma(&self, c: &Coeffs) -> Result<f64> {
        gamma_for(c, self.lambda, self.lower_order)
    }

    /// Maximizer of `L^α v - f^α` at `x` (no γ weighting).
    pub fn argmax_unweighted(&self, family: &PointFamily<'_>, v: &PointValue) -> (Control, f64) {
        self.control_set.maximize(|ctl| {
            let c = family(ctl);
            c.apply(v) - c.f
        })
    }

    /// Maximizer of `γ^α (L^α v - f^α)` at `x`; the value is `F_γ[v](x)`.
    pub fn argmax_weighted(&self, family: &PointFamily<'_>, v: &PointValue) -> (Control, f64) {
        self.control_set.maximize(|ctl| {
            let c = family(ctl);
            let g = gamma_for(&c, self.lambda, self.lower_order).unwrap_or(f64::NAN);
            g * (c.apply(v) - c.f)
        })
    }
}

/// Pointwise maximizer of `A^α:D²v + b^α·∇v - c^α v - f^α(x)` over the
/// control set and the maximum value.
pub fn hamiltonian_argmax(hjb: &HjbProblem, x: Point, v: &PointValue) -> (Control, f64) {
    hjb.argmax_unweighted(&hjb.at(x), v)
}

/// A problem instance selected by name.
#[derive(Clone, Debug)]
pub enum Problem {
    Nondiv(NondivProblem),
    Hjb(HjbProblem),
}

impl Problem {
    pub fn name(&self) -> &str {
        match self {
            Problem::Nondiv(p) => &p.name,
            Problem::Hjb(p) => &p.name,
        }
    }

    pub fn domain(&self) -> Domain {
        match self {
            Problem::Nondiv(p) => p.domain,
            Problem::Hjb(p) => p.domain,
        }
    }

    pub fn lambda(&self) -> f64 {
        match self {
            Problem::Nondiv(p) => p.lambda,
            Problem::Hjb(p) => p.lambda,
        }
    }

    pub fn exact(&self) -> Option<&Arc<dyn SmoothFunction>> {
        match self {
            Problem::Nondiv(p) => p.exact.as_ref(),
            Problem::Hjb(p) => p.exact.as_ref(),
        }
    }
}

/// Built-in experiments: `exp1` .. `exp4`.
pub fn problem_by_name(name: &str) -> Result<Problem> {
    match name {
        "exp1" => Ok(Problem::Nondiv(exp1())),
        "exp2" => Ok(Problem::Nondiv(exp2())),
        "exp3" => Ok(Problem::Hjb(exp3())),
        "exp4" => Ok(Problem::Hjb(exp4())),
        other => Err(Error::InvalidArgument(format!("unknown experiment `{other}`"))),
    }
}

/// `U(t) = t e^{1-|t|} - t` with derivatives.
fn kinked_profile(t: f64) -> (f64, f64, f64) {
    let e = (1.0 - t.abs()).exp();
    (t * e - t, e * (1.0 - t.abs()) - 1.0, -t.signum() * e * (2.0 - t.abs()))
}

/// Tensor product `U(x₁)U(x₂)` on `(-1, 1)²`.
#[derive(Clone, Copy, Debug, Default)]
pub struct KinkedProduct;

impl SmoothFunction for KinkedProduct {
    fn value(&self, x: Point) -> f64 {
        kinked_profile(x[0]).0 * kinked_profile(x[1]).0
    }
    fn gradient(&self, x: Point) -> [f64; 2] {
        let (a, b) = (kinked_profile(x[0]), kinked_profile(x[1]));
        [a.1 * b.0, a.0 * b.1]
    }
    fn hessian(&self, x: Point) -> Sym2 {
        let (a, b) = (kinked_profile(x[0]), kinked_profile(x[1]));
        Sym2::new(a.2 * b.0, a.1 * b.1, a.0 * b.2)
    }
}

/// `exp(x₁x₂) sin(πx₁) sin(πx₂)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct ExpSine;

impl ExpSine {
    fn parts(x: Point) -> (f64, [f64; 2], Sym2) {
        let (x1, x2) = (x[0], x[1]);
        let e = (x1 * x2).exp();
        let (s1, c1) = (PI * x1).sin_cos();
        let (s2, c2) = (PI * x2).sin_cos();
        let v = e * s1 * s2;
        let gx = e * (x2 * s1 + PI * c1) * s2;
        let gy = e * s1 * (x1 * s2 + PI * c2);
        // product rule on e·(s1 s2)
        let exx = x2 * x2 * e;
        let eyy = x1 * x1 * e;
        let exy = (1.0 + x1 * x2) * e;
        let (ex, ey) = (x2 * e, x1 * e);
        let p = s1 * s2;
        let (px, py) = (PI * c1 * s2, PI * s1 * c2);
        let (pxx, pxy, pyy) = (-PI * PI * p, PI * PI * c1 * c2, -PI * PI * p);
        let h = Sym2::new(
            exx * p + 2.0 * ex * px + e * pxx,
            exy * p + ex * py + ey * px + e * pxy,
            eyy * p + 2.0 * ey * py + e * pyy,
        );
        (v, [gx, gy], h)
    }
}

impl SmoothFunction for ExpSine {
    fn value(&self, x: Point) -> f64 {
        Self::parts(x).0
    }
    fn gradient(&self, x: Point) -> [f64; 2] {
        Self::parts(x).1
    }
    fn hessian(&self, x: Point) -> Sym2 {
        Self::parts(x).2
    }
}

/// `P(x₁) Q(x₂)` with a kink on `x₁ = 1/2` and a boundary layer of width
/// `delta` at `x₂ = 1`.
#[derive(Clone, Copy, Debug)]
pub struct BoundaryLayer {
    pub delta: f64,
}

impl BoundaryLayer {
    fn p(x1: f64) -> (f64, f64, f64) {
        let (u, du, d2u) = kinked_profile(2.0 * x1 - 1.0);
        // U(X) = X e^{1-|X|} - X, the same profile as the kinked product
        (u, 2.0 * du, 4.0 * d2u)
    }

    fn q(&self, x2: f64) -> (f64, f64, f64) {
        let d = self.delta;
        let tail = (-1.0 / d).exp();
        let norm = 1.0 - tail;
        let r = ((x2 - 1.0) / d).exp() / norm;
        let r0 = tail / norm;
        (x2 + r0 - r, 1.0 - r / d, -r / (d * d))
    }
}

impl SmoothFunction for BoundaryLayer {
    fn value(&self, x: Point) -> f64 {
        Self::p(x[0]).0 * self.q(x[1]).0
    }
    fn gradient(&self, x: Point) -> [f64; 2] {
        let (p, q) = (Self::p(x[0]), self.q(x[1]));
        [p.1 * q.0, p.0 * q.1]
    }
    fn hessian(&self, x: Point) -> Sym2 {
        let (p, q) = (Self::p(x[0]), self.q(x[1]));
        Sym2::new(p.2 * q.0, p.1 * q.1, p.0 * q.2)
    }
}

/// Sign of `x₁x₂`, zero on the axes.
fn quadrant_sign(x: Point) -> f64 {
    let p = x[0] * x[1];
    if p > 0.0 {
        1.0
    } else if p < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn quadrant_matrix(x: Point) -> Sym2 {
    Sym2::new(2.0, quadrant_sign(x), 2.0)
}

/// `A:D²u = f` on `(-1, 1)²` with a coefficient jumping across the axes.
pub fn exp1() -> NondivProblem {
    let u = KinkedProduct;
    NondivProblem::new("exp1", Domain::SYMMETRIC, 0.6, 0.0, false, move |x| {
        let a = quadrant_matrix(x);
        Coeffs { a, b: [0.0, 0.0], c: 0.0, f: a.ddot(&u.hessian(x)) }
    })
    .expect("valid data")
    .with_exact(Arc::new(u))
    .with_jump_lines([0.0, 0.0])
}

/// `exp1` with drift `b = x` and reaction `c = 3`, `λ = 1`.
pub fn exp2() -> NondivProblem {
    let u = KinkedProduct;
    NondivProblem::new("exp2", Domain::SYMMETRIC, 9.0 / 20.0, 1.0, true, move |x| {
        let a = quadrant_matrix(x);
        let b = x;
        let c = 3.0;
        let g = u.gradient(x);
        let f = a.ddot(&u.hessian(x)) + b[0] * g[0] + b[1] * g[1] - c * u.value(x);
        Coeffs { a, b, c, f }
    })
    .expect("valid data")
    .with_exact(Arc::new(u))
    .with_jump_lines([0.0, 0.0])
}

pub const EXP3_THETA_SAMPLES: usize = 16;
pub const EXP3_ROTATION_SAMPLES: usize = 64;
pub const EXP4_ROTATION_SAMPLES: usize = 256;

/// `½ Rᵀ S Sᵀ R` with `S = [[1, sin θ], [0, cos θ]]`, `R` the rotation by φ.
fn sheared_diffusion(ctl: &Control) -> Sym2 {
    let (s, c) = (ctl.sin[0], ctl.cos[0]);
    let sst = Sym2::new(0.5 * (1.0 + s * s), 0.5 * s * c, 0.5 * c * c);
    sst.rotate(ctl.cos[1], ctl.sin[1])
}

struct ShearedFamily {
    controls: ControlSet,
}

const SQRT3: f64 = 1.732_050_807_568_877_2;

impl ShearedFamily {
    fn offset(ctl: &Control) -> f64 {
        SQRT3 * ctl.sin[0] * ctl.sin[0] / (PI * PI)
    }
}

impl ControlledCoefficients for ShearedFamily {
    fn at(&self, x: Point) -> PointFamily<'_> {
        let (v, _, h) = ExpSine::parts(x);
        let (_, sup) = self.controls.maximize(|ctl| sheared_diffusion(ctl).ddot(&h) - Self::offset(ctl));
        let g = sup - PI * PI * v;
        Box::new(move |ctl| Coeffs {
            a: sheared_diffusion(ctl),
            b: [0.0, 0.0],
            c: PI * PI,
            f: Self::offset(ctl) + g,
        })
    }
}

pub fn exp3_control_set(theta_samples: usize, rotation_samples: usize) -> ControlSet {
    ControlSet::new(vec![
        Axis { lo: 0.0, hi: PI / 3.0, samples: theta_samples, periodic: false },
        Axis { lo: 0.0, hi: 2.0 * PI, samples: rotation_samples, periodic: true },
    ])
    .expect("valid axes")
}

/// HJB problem over shears and rotations with smooth exact solution.
pub fn exp3() -> HjbProblem {
    let controls = exp3_control_set(EXP3_THETA_SAMPLES, EXP3_ROTATION_SAMPLES);
    let family = Arc::new(ShearedFamily { controls: controls.clone() });
    HjbProblem::new("exp3", Domain::UNIT, controls, 8.0 * PI * PI / 7.0, 1.0 / 7.0, true, family)
        .expect("valid data")
        .with_exact(Arc::new(ExpSine))
}

const EXP4_MATRIX: Sym2 = Sym2::new(20.0, 1.0, 0.1);
const EXP4_DRIFT: [f64; 2] = [0.0, 1.0];
const EXP4_REACTION: f64 = 10.0;

struct RotatedFamily {
    exact: BoundaryLayer,
}

impl ControlledCoefficients for RotatedFamily {
    fn at(&self, x: Point) -> PointFamily<'_> {
        let u = self.exact;
        let (v, g, h) = (u.value(x), u.gradient(x), u.hessian(x));
        let lower = EXP4_DRIFT[0] * g[0] + EXP4_DRIFT[1] * g[1] - EXP4_REACTION * v;
        Box::new(move |ctl| {
            let a = EXP4_MATRIX.rotate(ctl.cos[0], ctl.sin[0]);
            Coeffs { a, b: EXP4_DRIFT, c: EXP4_REACTION, f: a.ddot(&h) + lower }
        })
    }
}

pub fn exp4_control_set(rotation_samples: usize) -> ControlSet {
    ControlSet::new(vec![Axis { lo: 0.0, hi: 2.0 * PI, samples: rotation_samples, periodic: true }])
        .expect("valid axes")
}

/// Rotated, nearly degenerate diffusion with a boundary layer at `x₂ = 1`.
pub fn exp4() -> HjbProblem {
    let exact = BoundaryLayer { delta: 0.01 };
    HjbProblem::new(
        "exp4",
        Domain::UNIT,
        exp4_control_set(EXP4_ROTATION_SAMPLES),
        0.5,
        0.0024,
        true,
        Arc::new(RotatedFamily { exact }),
    )
    .expect("valid data")
    .with_exact(Arc::new(exact))
}

/// `sin(π(x₁ - a)/w₁) sin(π(x₂ - b)/w₂)` on a rectangle.
#[derive(Clone, Copy, Debug)]
pub struct SineBump {
    pub domain: Domain,
}

impl SmoothFunction for SineBump {
    fn value(&self, x: Point) -> f64 {
        let (k1, k2) = self.freq();
        (k1 * (x[0] - self.domain.xmin)).sin() * (k2 * (x[1] - self.domain.ymin)).sin()
    }
    fn gradient(&self, x: Point) -> [f64; 2] {
        let (k1, k2) = self.freq();
        let (s1, c1) = (k1 * (x[0] - self.domain.xmin)).sin_cos();
        let (s2, c2) = (k2 * (x[1] - self.domain.ymin)).sin_cos();
        [k1 * c1 * s2, k2 * s1 * c2]
    }
    fn hessian(&self, x: Point) -> Sym2 {
        let (k1, k2) = self.freq();
        let (s1, c1) = (k1 * (x[0] - self.domain.xmin)).sin_cos();
        let (s2, c2) = (k2 * (x[1] - self.domain.ymin)).sin_cos();
        Sym2::new(-k1 * k1 * s1 * s2, k1 * k2 * c1 * c2, -k2 * k2 * s1 * s2)
    }
}

impl SineBump {
    fn freq(&self) -> (f64, f64) {
        (PI / (self.domain.xmax - self.domain.xmin), PI / (self.domain.ymax - self.domain.ymin))
    }
}

/// Constant coefficients with the manufactured solution [`SineBump`].
pub fn constant_coefficient_problem(
    name: &str,
    domain: Domain,
    a: Sym2,
    b: [f64; 2],
    c: f64,
    epsilon: f64,
    lambda: f64,
) -> Result<NondivProblem> {
    if a.xx <= 0.0 || a.yy <= 0.0 || a.xx * a.yy - a.xy * a.xy <= 0.0 {
        return Err(Error::Ellipticity { trace: a.trace(), x: f64::NAN, y: f64::NAN });
    }
    if c < 0.0 {
        return Err(Error::InvalidData(format!("reaction coefficient must be nonnegative, got {c}")));
    }
    let lower_order = b != [0.0, 0.0] || c != 0.0;
    let sample = Coeffs { a, b, c, f: 0.0 };
    let admissible = if lower_order {
        cordes_epsilon_lower_order(&[sample], lambda)?
    } else {
        cordes_epsilon_nondiv(&[a])?
    };
    if epsilon > admissible * (1.0 + 1e-12) {
        return Err(Error::CordesViolation(admissible));
    }
    let u = SineBump { domain };
    Ok(NondivProblem::new(name, domain, epsilon, lambda, lower_order, move |x| {
        let g = u.gradient(x);
        Coeffs { a, b, c, f: a.ddot(&u.hessian(x)) + b[0] * g[0] + b[1] * g[1] - c * u.value(x) }
    })?
    .with_exact(Arc::new(u)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn gamma_values() {
        assert_eq!(gamma_nondiv(&Sym2::IDENTITY).unwrap(), 1.0);
        assert!(close(gamma_nondiv(&Sym2::new(2.0, 1.0, 2.0)).unwrap(), 0.4, 1e-15));
        assert!(close(gamma_nondiv(&Sym2::new(2.0, 0.0, 1.0)).unwrap(), 0.6, 1e-15));
        assert!(gamma_nondiv(&Sym2::new(-1.0, 0.0, 0.5)).is_err());
        assert_eq!(gamma_hjb(&Sym2::IDENTITY, [0.0, 0.0], 0.0, 1.0).unwrap(), 1.0);
        let a = Sym2::new(2.0, 1.0, 2.0);
        assert!(close(gamma_hjb(&a, [0.0, 0.0], 3.0, 1.0).unwrap(), 7.0 / 19.0, 1e-15));
        // exp3 at θ = 0
        let a3 = sheared_diffusion(&Control::new([0.0, 0.7]));
        assert!(close(a3.trace(), 1.0, 1e-15) && close(a3.norm2(), 0.5, 1e-15));
        let g = gamma_hjb(&a3, [0.0, 0.0], PI * PI, 8.0 * PI * PI / 7.0).unwrap();
        assert!(close(g, 120.0 / 81.0, 1e-14), "{g}");
    }

    #[test]
    fn gamma_branches_agree_without_lower_order_terms() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let a = Sym2::new(rng.gen_range(0.5..3.0), rng.gen_range(-0.4..0.4), rng.gen_range(0.5..3.0));
            let c = Coeffs { a, b: [0.0, 0.0], c: 0.0, f: 0.0 };
            assert_eq!(gamma_for(&c, 1.0, false).unwrap(), gamma_nondiv(&a).unwrap());
            assert!(close(gamma_hjb(&a, [0.0, 0.0], 0.0, 2.5).unwrap(), gamma_nondiv(&a).unwrap(), 1e-15));
        }
    }

    #[test]
    fn cordes_constants_of_the_experiments() {
        assert!(close(cordes_epsilon_nondiv(&[Sym2::new(2.0, 1.0, 2.0), Sym2::new(2.0, -1.0, 2.0)]).unwrap(), 0.6, 1e-14));
        assert_eq!(cordes_epsilon_nondiv(&[Sym2::IDENTITY]).unwrap(), 1.0);
        let e = cordes_epsilon_nondiv(&[Sym2::new(100.0, 0.0, 1.0)]).unwrap();
        assert!(close(e, 101.0 * 101.0 / 10001.0 - 1.0, 1e-14) && (e - 0.02).abs() < 1e-3);
        assert!(matches!(cordes_epsilon_nondiv(&[Sym2::new(1.0, 1.0, 1.0)]), Err(Error::CordesViolation(_))));

        // exp2: worst case at the corners, |x|² = 2
        let p = exp2();
        let samples: Vec<Coeffs> = [[0.9, 0.9], [-1.0, 1.0], [1.0, 1.0], [0.1, -0.3]].iter().map(|&x| p.coeffs(x)).collect();
        assert!(close(cordes_epsilon_lower_order(&samples, 1.0).unwrap(), 9.0 / 20.0, 1e-14));

        let p3 = exp3();
        let fam = p3.at([0.3, 0.4]);
        let samples: Vec<Coeffs> = p3.control_set.grid().iter().map(|c| fam(c)).collect();
        let e3 = cordes_epsilon_lower_order(&samples, p3.lambda).unwrap();
        assert!(e3 >= 1.0 / 7.0 - 1e-14, "{e3}");

        let p4 = exp4();
        let fam = p4.at([0.3, 0.4]);
        let samples: Vec<Coeffs> = p4.control_set.grid().iter().map(|c| fam(c)).collect();
        let e4 = cordes_epsilon_lower_order(&samples, p4.lambda).unwrap();
        assert!(e4 >= 0.0024 && e4 < 0.0025, "{e4}");
    }

    #[test]
    fn exact_solutions() {
        let u = KinkedProduct;
        let v = (0.5 * 0.5f64.exp() - 0.5).powi(2);
        assert!(close(u.value([0.5, 0.5]), v, 1e-15));
        assert!(close(v, 0.105_210, 1e-5));
        for t in [0.0, 0.3, 0.77] {
            assert!(ExpSine.value([t, 0.0]).abs() < 1e-15 && ExpSine.value([1.0, t]).abs() < 1e-15);
        }
        let bl = BoundaryLayer { delta: 0.01 };
        assert!(bl.value([0.25, 1.0]).abs() < 1e-14);
        assert!(bl.value([0.25, 0.0]).abs() < 1e-14);
        assert!(bl.value([0.0, 0.5]).abs() < 1e-14 && bl.value([1.0, 0.5]).abs() < 1e-14);
    }

    fn check_derivatives(u: &dyn SmoothFunction, x: Point) {
        let d = 1e-5;
        let g = u.gradient(x);
        let h = u.hessian(x);
        let fd = |i: usize, f: &dyn Fn(Point) -> f64| {
            let mut p = x;
            let mut m = x;
            p[i] += d;
            m[i] -= d;
            (f(p) - f(m)) / (2.0 * d)
        };
        let tol = |a: f64| 1e-6 * (1.0 + a.abs());
        assert!((fd(0, &|p| u.value(p)) - g[0]).abs() < tol(g[0]));
        assert!((fd(1, &|p| u.value(p)) - g[1]).abs() < tol(g[1]));
        assert!((fd(0, &|p| u.gradient(p)[0]) - h.xx).abs() < tol(h.xx));
        assert!((fd(1, &|p| u.gradient(p)[0]) - h.xy).abs() < tol(h.xy));
        assert!((fd(0, &|p| u.gradient(p)[1]) - h.xy).abs() < tol(h.xy));
        assert!((fd(1, &|p| u.gradient(p)[1]) - h.yy).abs() < tol(h.yy));
    }

    #[test]
    fn exact_derivatives_match_finite_differences() {
        check_derivatives(&KinkedProduct, [0.3, -0.6]);
        check_derivatives(&ExpSine, [0.3, 0.7]);
        check_derivatives(&BoundaryLayer { delta: 0.1 }, [0.3, 0.8]);
        check_derivatives(&BoundaryLayer { delta: 0.01 }, [0.7, 0.5]);
        check_derivatives(&SineBump { domain: Domain { xmin: -1.0, xmax: 2.0, ymin: 0.0, ymax: 1.0 } }, [0.1, 0.4]);
    }

    #[test]
    fn argmax_ties_keep_first_grid_point() {
        let set = exp3_control_set(4, 8);
        let (c, v) = set.maximize(|_| -1.5);
        assert!(c.same_as(&set.grid()[0]));
        assert_eq!(v, -1.5);
    }

    #[test]
    fn exp4_trace_is_rotation_invariant() {
        let p = exp4();
        let x = [0.3, 0.6];
        let hess = PointValue { value: 0.0, grad: [0.0, 0.0], hess: Sym2::IDENTITY };
        let fam = p.at(x);
        let f = fam(&Control::new([0.0, 0.0])).f;
        let f2 = fam(&Control::new([1.1, 0.0])).f;
        assert!(!close(f, f2, 1e-6), "f depends on the rotation");
        let (_, sup) = hamiltonian_argmax(&p, x, &hess);
        // objective 20.1 - f^α is maximized by minimizing f^α over rotations
        let best = p.control_set.grid().iter().map(|c| 20.1 - fam(c).f).fold(f64::NEG_INFINITY, f64::max);
        assert!(sup >= best - 1e-12);
        // at the exact solution every control is a maximizer with value 0
        let u = BoundaryLayer { delta: 0.01 };
        let exact = PointValue { value: u.value(x), grad: u.gradient(x), hess: u.hessian(x) };
        let (_, sup) = hamiltonian_argmax(&p, x, &exact);
        assert!(sup.abs() < 1e-9 * (1.0 + u.hessian(x).norm2().sqrt()));
    }

    /// Closed form of `sup_α A^α:H - √3 sin²θ/π²` for the shear family:
    /// rotations align eigenvectors, giving `½(h₁+h₂) + ½ s (h₁-h₂) - √3 s²/π²`
    /// with `s = sin θ ∈ [0, √3/2]`.
    fn sheared_sup(h: &Sym2) -> f64 {
        let (h1, h2) = h.eigenvalues();
        let s = ((h1 - h2) * PI * PI / (4.0 * SQRT3)).clamp(0.0, SQRT3 / 2.0);
        0.5 * (h1 + h2) + 0.5 * s * (h1 - h2) - SQRT3 * s * s / (PI * PI)
    }

    #[test]
    fn exp3_source_matches_closed_form() {
        let p = exp3();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let x = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            let (v, _, h) = ExpSine::parts(x);
            let fam = p.at(x);
            let ctl = Control::new([0.4, 1.3]);
            let g = fam(&ctl).f - ShearedFamily::offset(&ctl);
            let expect = sheared_sup(&h) - PI * PI * v;
            assert!(close(g, expect, 1e-9), "{g} vs {expect}");
        }
    }

    #[test]
    fn exp3_exact_solution_solves_the_hjb_equation() {
        let p = exp3();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let x = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            let (v, g, h) = ExpSine::parts(x);
            let pv = PointValue { value: v, grad: g, hess: h };
            let (_, sup) = hamiltonian_argmax(&p, x, &pv);
            assert!(sup.abs() < 1e-9, "{sup}");
            let fam = p.at(x);
            let (_, wsup) = p.argmax_weighted(&fam, &pv);
            assert!(wsup.abs() < 1e-9, "{wsup}");
        }
    }

    #[test]
    fn exp3_argmax_beats_a_finer_grid() {
        let p = exp3();
        let fine = exp3_control_set(10 * EXP3_THETA_SAMPLES, 10 * EXP3_ROTATION_SAMPLES);
        let x = [0.3, 0.7];
        let pv = PointValue { value: 0.0, grad: [0.0, 0.0], hess: ExpSine.hessian(x) };
        let fam = p.at(x);
        let (_, sup) = p.argmax_unweighted(&fam, &pv);
        let (_, brute) = fine.maximize(|c| {
            let k = fam(c);
            k.apply(&pv) - k.f
        });
        let grid_only = fine
            .grid()
            .iter()
            .map(|c| {
                let k = fam(c);
                k.apply(&pv) - k.f
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(sup >= grid_only - 1e-12);
        assert!(close(sup, brute, 1e-6), "{sup} vs {brute}");
    }

    #[test]
    fn single_control_set() {
        let s = ControlSet::single([0.2, 0.0]);
        assert_eq!(s.grid().len(), 1);
        let (c, v) = s.maximize(|c| c.params[0]);
        assert_eq!(c.params, [0.2, 0.0]);
        assert_eq!(v, 0.2);
    }

    #[test]
    fn control_axes_cover_the_box() {
        let s = exp3_control_set(16, 64);
        assert_eq!(s.grid().len(), 1024);
        let thetas: Vec<f64> = s.grid().iter().map(|c| c.params[0]).collect();
        assert_eq!(thetas[0], 0.0);
        assert!(close(*thetas.last().unwrap(), PI / 3.0, 1e-15));
        assert!(s.grid().iter().all(|c| c.params[1] < 2.0 * PI));
        assert!(ControlSet::new(vec![]).is_err());
        assert!(ControlSet::new(vec![Axis { lo: 1.0, hi: 0.0, samples: 3, periodic: false }]).is_err());
    }

    #[test]
    fn coefficients_are_continuous_in_the_control() {
        let p = exp3();
        let fam = p.at([0.2, 0.9]);
        let d = 1e-7;
        for params in [[0.3, 1.0], [1.0, 5.0]] {
            let c0 = fam(&Control::new(params));
            let c1 = fam(&Control::new([params[0] + d, params[1] + d]));
            assert!(c0.a.sub(&c1.a).norm2().sqrt() < 1e-5 && (c0.f - c1.f).abs() < 1e-5);
        }
    }

    #[test]
    fn problem_lookup() {
        for name in ["exp1", "exp2", "exp3", "exp4"] {
            assert_eq!(problem_by_name(name).unwrap().name(), name);
        }
        assert!(problem_by_name("exp5").is_err());
    }

    #[test]
    fn quadrant_matrix_on_axes() {
        assert_eq!(quadrant_matrix([0.0, 0.5]).xy, 0.0);
        assert_eq!(quadrant_matrix([0.5, 0.5]).xy, 1.0);
        assert_eq!(quadrant_matrix([-0.5, 0.5]).xy, -1.0);
    }

    #[test]
    fn constant_problem_validation() {
        let ok = constant_coefficient_problem("c", Domain::UNIT, Sym2::IDENTITY, [0.0, 0.0], 0.0, 1.0, 0.0);
        assert!(ok.is_ok());
        let bad = constant_coefficient_problem("c", Domain::UNIT, Sym2::new(100.0, 0.0, 1.0), [0.0, 0.0], 0.0, 0.5, 0.0);
        assert!(matches!(bad, Err(Error::CordesViolation(_))));
        let bad = constant_coefficient_problem("c", Domain::UNIT, Sym2::new(1.0, 2.0, 1.0), [0.0, 0.0], 0.0, 0.5, 0.0);
        assert!(matches!(bad, Err(Error::Ellipticity { .. })));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(200))]

            /// Pointwise Cordes inequality with the exp1 matrix.
            #[test]
            fn nondiv_cordes_inequality(
                xx in -10.0f64..10.0, xy in -10.0f64..10.0, yy in -10.0f64..10.0,
                x in -1.0f64..1.0, y in -1.0f64..1.0,
            ) {
                let h = Sym2::new(xx, xy, yy);
                let a = quadrant_matrix([x, y]);
                let lhs = (gamma_nondiv(&a).unwrap() * a.ddot(&h) - h.trace()).abs();
                let rhs = (1.0f64 - 0.6).sqrt() * h.norm2().sqrt();
                prop_assert!(lhs <= rhs + 1e-12 * (1.0 + rhs));
            }

            /// `|F_γ[w] - F_γ[v] - L_λ z| ≤ √(1-ε) |z|_λ` pointwise with exp3 data.
            #[test]
            fn hjb_cordes_inequality(
                w in proptest::array::uniform6(-5.0f64..5.0),
                v in proptest::array::uniform6(-5.0f64..5.0),
                x in 0.01f64..0.99, y in 0.01f64..0.99,
            ) {
                let p = exp3();
                let fam = p.at([x, y]);
                let pw = PointValue { value: w[0], grad: [w[1], w[2]], hess: Sym2::new(w[3], w[4], w[5]) };
                let pv = PointValue { value: v[0], grad: [v[1], v[2]], hess: Sym2::new(v[3], v[4], v[5]) };
                let fw = p.argmax_weighted(&fam, &pw).1;
                let fv = p.argmax_weighted(&fam, &pv).1;
                let l = p.lambda;
                let z = PointValue {
                    value: w[0] - v[0],
                    grad: [w[1] - v[1], w[2] - v[2]],
                    hess: pw.hess.sub(&pv.hess),
                };
                let lz = z.hess.trace() - l * z.value;
                let zn = (z.hess.norm2() + 2.0 * l * (z.grad[0].powi(2) + z.grad[1].powi(2)) + l * l * z.value.powi(2)).sqrt();
                let lhs = (fw - fv - lz).abs();
                prop_assert!(lhs <= (1.0f64 - p.epsilon).sqrt() * zn + 1e-8 * (1.0 + zn), "{} > {}", lhs, zn);
            }
        }
    }
}
