//! Quadrature on the reference triangle `{(x, y): x, y ≥ 0, x + y ≤ 1}` and
//! on the unit interval.
//!
//! Low degrees use classical symmetric rules with positive weights. Higher
//! degrees fall back to a collapsed (Duffy) product of Gauss-Legendre rules,
//! which is exact for any requested degree.

use crate::error::{Error, Result};

pub const MAX_TRIANGLE_DEGREE: usize = 20;
pub const MAX_EDGE_DEGREE: usize = 25;

/// Quadrature rule on the reference triangle. Points are reference
/// coordinates `(x, y)`; the barycentric coordinates are `(1 - x - y, x, y)`.
#[derive(Clone, Debug)]
pub struct TriangleRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub exact_degree: usize,
}

/// Gauss-Legendre rule on `[0, 1]`.
#[derive(Clone, Debug)]
pub struct EdgeRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub exact_degree: usize,
}

impl TriangleRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl EdgeRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Returns a rule on the reference triangle integrating every polynomial of
/// total degree `degree` exactly.
pub fn triangle_rule(degree: usize) -> Result<TriangleRule> {
    if degree == 0 || degree > MAX_TRIANGLE_DEGREE {
        return Err(Error::Unsupported(format!(
            "triangle quadrature of degree {degree} (supported: 1..={MAX_TRIANGLE_DEGREE})"
        )));
    }
    Ok(match degree {
        1 => TriangleRule {
            points: vec![[1.0 / 3.0, 1.0 / 3.0]],
            weights: vec![0.5],
            exact_degree: 1,
        },
        2 => TriangleRule {
            points: vec![[1.0 / 6.0, 1.0 / 6.0], [2.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 2.0 / 3.0]],
            weights: vec![1.0 / 6.0; 3],
            exact_degree: 2,
        },
        3 | 4 => strang_fix_6(),
        5 => radon_7(),
        _ => collapsed_gauss(degree),
    })
}

/// Gauss-Legendre rule on `[0, 1]` with `⌈(degree + 1) / 2⌉` points.
pub fn edge_rule(degree: usize) -> Result<EdgeRule> {
    if degree == 0 || degree > MAX_EDGE_DEGREE {
        return Err(Error::Unsupported(format!(
            "edge quadrature of degree {degree} (supported: 1..={MAX_EDGE_DEGREE})"
        )));
    }
    let n = (degree + 2) / 2;
    let (x, w) = gauss_legendre(n);
    Ok(EdgeRule {
        points: x.iter().map(|t| 0.5 * (t + 1.0)).collect(),
        weights: w.iter().map(|w| 0.5 * w).collect(),
        exact_degree: 2 * n - 1,
    })
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        let weight = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = weight;
        w[n - 1 - i] = weight;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

fn orbit3(points: &mut Vec<[f64; 2]>, weights: &mut Vec<f64>, a: f64, w: f64) {
    let b = 1.0 - 2.0 * a;
    for p in [[a, a], [b, a], [a, b]] {
        points.push(p);
        weights.push(w);
    }
}

fn orbit6(points: &mut Vec<[f64; 2]>, weights: &mut Vec<f64>, a: f64, b: f64, w: f64) {
    let c = 1.0 - a - b;
    for p in [[a, b], [b, a], [a, c], [c, a], [b, c], [c, b]] {
        points.push(p);
        weights.push(w);
    }
}

/// Dunavant's 12-point symmetric rule of degree 6. Used when comparing
/// error norms against tables measured with that rule.
pub fn dunavant_12() -> TriangleRule {
    let mut points = Vec::with_capacity(12);
    let mut weights = Vec::with_capacity(12);
    orbit3(&mut points, &mut weights, 0.249_286_745_170_910, 0.5 * 0.116_786_275_726_379);
    orbit3(&mut points, &mut weights, 0.063_089_014_491_502, 0.5 * 0.050_844_906_370_207);
    orbit6(&mut points, &mut weights, 0.053_145_049_844_817, 0.310_352_451_033_784, 0.5 * 0.082_851_075_618_374);
    TriangleRule { points, weights, exact_degree: 6 }
}

fn strang_fix_6() -> TriangleRule {
    let mut points = Vec::with_capacity(6);
    let mut weights = Vec::with_capacity(6);
    orbit3(&mut points, &mut weights, 0.445_948_490_915_965, 0.5 * 0.223_381_589_678_011);
    orbit3(&mut points, &mut weights, 0.091_576_213_509_771, 0.5 * 0.109_951_743_655_322);
    TriangleRule { points, weights, exact_degree: 4 }
}

fn radon_7() -> TriangleRule {
    let s15 = 15f64.sqrt();
    let mut points = vec![[1.0 / 3.0, 1.0 / 3.0]];
    let mut weights = vec![0.5 * 9.0 / 40.0];
    orbit3(&mut points, &mut weights, (6.0 - s15) / 21.0, 0.5 * (155.0 - s15) / 1200.0);
    orbit3(&mut points, &mut weights, (6.0 + s15) / 21.0, 0.5 * (155.0 + s15) / 1200.0);
    TriangleRule { points, weights, exact_degree: 5 }
}

fn collapsed_gauss(degree: usize) -> TriangleRule {
    // x = u, y = v (1 - u), dx dy = (1 - u) du dv
    let n = (degree + 3) / 2;
    let (g, w) = gauss_legendre(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (gu, wu) in g.iter().zip(&w) {
        let u = 0.5 * (gu + 1.0);
        for (gv, wv) in g.iter().zip(&w) {
            let v = 0.5 * (gv + 1.0);
            points.push([u, v * (1.0 - u)]);
            weights.push(0.25 * wu * wv * (1.0 - u));
        }
    }
    TriangleRule { points, weights, exact_degree: 2 * n - 2 }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    /// ∫_T x^a y^b = a! b! / (a + b + 2)!
    fn monomial_integral(a: usize, b: usize) -> f64 {
        factorial(a) * factorial(b) / factorial(a + b + 2)
    }

    #[test]
    fn centroid_rule() {
        let r = triangle_rule(1).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r.weights[0], 0.5);
        assert_eq!(r.points[0], [1.0 / 3.0, 1.0 / 3.0]);
    }

    #[test]
    fn degree_four_reproduces_x2y2() {
        let r = triangle_rule(4).unwrap();
        let q: f64 = r.points.iter().zip(&r.weights).map(|(p, w)| w * p[0].powi(2) * p[1].powi(2)).sum();
        assert!((q - 1.0 / 180.0).abs() < 1e-14, "{q}");
    }

    #[test]
    fn dunavant_is_degree_six() {
        let r = dunavant_12();
        assert_eq!(r.len(), 12);
        for total in 0..=6 {
            for a in 0..=total {
                let b = total - a;
                let q: f64 = r.points.iter().zip(&r.weights).map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32)).sum();
                assert!((q - monomial_integral(a, b)).abs() < 1e-13, "x^{a} y^{b}");
            }
        }
        let q: f64 = r.points.iter().zip(&r.weights).map(|(p, w)| w * p[0].powi(7)).sum();
        assert!((q - monomial_integral(7, 0)).abs() > 1e-8);
    }

    #[test]
    fn exactness_sweep() {
        for degree in 1..=MAX_TRIANGLE_DEGREE {
            let r = triangle_rule(degree).unwrap();
            assert!(r.exact_degree >= degree);
            let wsum: f64 = r.weights.iter().sum();
            assert!((wsum - 0.5).abs() < 1e-14);
            assert!(r.weights.iter().all(|&w| w > 0.0));
            for total in 0..=r.exact_degree {
                for a in 0..=total {
                    let b = total - a;
                    let q: f64 = r
                        .points
                        .iter()
                        .zip(&r.weights)
                        .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32))
                        .sum();
                    let exact = monomial_integral(a, b);
                    assert!((q - exact).abs() < 1e-12 * exact.max(1e-3), "deg {degree} x^{a} y^{b}: {q} vs {exact}");
                }
            }
        }
    }

    #[test]
    fn unsupported_degrees() {
        assert!(triangle_rule(21).is_err());
        assert!(triangle_rule(0).is_err());
        assert!(edge_rule(26).is_err());
    }

    #[test]
    fn edge_rules() {
        let r = edge_rule(1).unwrap();
        assert_eq!(r.points, vec![0.5]);
        let r = edge_rule(3).unwrap();
        assert_eq!(r.len(), 2);
        let q: f64 = r.points.iter().zip(&r.weights).map(|(t, w)| w * t.powi(3)).sum();
        assert!((q - 0.25).abs() < 1e-15);
        let r = edge_rule(7).unwrap();
        assert_eq!(r.len(), 4);
        let q: f64 = r.points.iter().zip(&r.weights).map(|(t, w)| w * t.powi(7)).sum();
        assert!((q - 0.125).abs() < 1e-15);
        for degree in 1..=MAX_EDGE_DEGREE {
            let r = edge_rule(degree).unwrap();
            assert_eq!(r.len(), (degree + 2) / 2);
            let wsum: f64 = r.weights.iter().sum();
            assert!((wsum - 1.0).abs() < 1e-14);
            for p in 0..=r.exact_degree {
                let q: f64 = r.points.iter().zip(&r.weights).map(|(t, w)| w * t.powi(p as i32)).sum();
                assert!((q - 1.0 / (p + 1) as f64).abs() < 1e-13, "deg {degree} t^{p}");
            }
        }
    }
}
