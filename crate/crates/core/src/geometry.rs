//! Small fixed-size linear algebra used throughout the crate.

pub type Point = [f64; 2];

#[inline]
pub fn sub(a: Point, b: Point) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
pub fn norm(a: [f64; 2]) -> f64 {
    a[0].hypot(a[1])
}

/// Twice the signed area of the triangle `(a, b, c)`.
#[inline]
pub fn signed_area2(a: Point, b: Point, c: Point) -> f64 {
    cross(sub(b, a), sub(c, a))
}

/// Symmetric 2×2 matrix, used for coefficient matrices and Hessians.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Sym2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Sym2 {
    pub const ZERO: Sym2 = Sym2 { xx: 0.0, xy: 0.0, yy: 0.0 };
    pub const IDENTITY: Sym2 = Sym2 { xx: 1.0, xy: 0.0, yy: 1.0 };

    pub const fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Self { xx, xy, yy }
    }

    #[inline]
    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    /// Squared Frobenius norm.
    #[inline]
    pub fn norm2(&self) -> f64 {
        self.xx * self.xx + 2.0 * self.xy * self.xy + self.yy * self.yy
    }

    /// Frobenius inner product `A : B`.
    #[inline]
    pub fn ddot(&self, other: &Sym2) -> f64 {
        self.xx * other.xx + 2.0 * self.xy * other.xy + self.yy * other.yy
    }

    /// `tᵀ A t`.
    #[inline]
    pub fn quad(&self, t: [f64; 2]) -> f64 {
        self.xx * t[0] * t[0] + 2.0 * self.xy * t[0] * t[1] + self.yy * t[1] * t[1]
    }

    #[inline]
    pub fn scale(&self, s: f64) -> Sym2 {
        Sym2::new(self.xx * s, self.xy * s, self.yy * s)
    }

    #[inline]
    pub fn add(&self, o: &Sym2) -> Sym2 {
        Sym2::new(self.xx + o.xx, self.xy + o.xy, self.yy + o.yy)
    }

    #[inline]
    pub fn sub(&self, o: &Sym2) -> Sym2 {
        Sym2::new(self.xx - o.xx, self.xy - o.xy, self.yy - o.yy)
    }

    /// `Qᵀ A Q` for the rotation `Q = [[c, -s], [s, c]]`.
    pub fn rotate(&self, c: f64, s: f64) -> Sym2 {
        // Q^T A Q
        let (a, b, d) = (self.xx, self.xy, self.yy);
        let xx = c * c * a + 2.0 * c * s * b + s * s * d;
        let yy = s * s * a - 2.0 * c * s * b + c * c * d;
        let xy = -c * s * a + (c * c - s * s) * b + c * s * d;
        Sym2::new(xx, xy, yy)
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let m = 0.5 * (self.xx + self.yy);
        let r = (0.5 * (self.xx - self.yy)).hypot(self.xy);
        (m + r, m - r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_preserves_invariants() {
        let a = Sym2::new(20.0, 1.0, 0.1);
        for k in 0..16 {
            let phi = k as f64 * 0.37;
            let r = a.rotate(phi.cos(), phi.sin());
            assert!((r.trace() - a.trace()).abs() < 1e-13);
            assert!((r.norm2() - a.norm2()).abs() < 1e-11);
        }
    }

    #[test]
    fn eigenvalues_of_diagonal() {
        let (l1, l2) = Sym2::new(2.0, 0.0, 5.0).eigenvalues();
        assert_eq!((l1, l2), (5.0, 2.0));
    }
}
