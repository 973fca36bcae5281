use std::fmt;
use std::ops::Mul;

use nalgebra::{Matrix2, Matrix3, Vector3};

use crate::error::{Error, Result};

/// Planar projective transform, stored with `m[2][2] = 1` whenever that
/// entry is nonzero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
}

fn normalized(mut m: Matrix3<f64>) -> Matrix3<f64> {
    let s = m[(2, 2)];
    if s.abs() > 1e-12 {
        m /= s;
    }
    m
}

impl Homography {
    pub fn identity() -> Self {
        Self {
            m: Matrix3::identity(),
        }
    }

    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("homography has non-finite entries".into()));
        }
        let m = normalized(m);
        let det = m.determinant();
        if det.abs() <= 1e-12 {
            return Err(Error::Degenerate(format!("singular homography (det {det:e})")));
        }
        Ok(Self { m })
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self> {
        Self::new(Matrix3::from_fn(|r, c| rows[r][c]))
    }

    /// Row-major 9 values.
    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != 9 {
            return Err(Error::Format(format!("homography needs 9 values, got {}", v.len())));
        }
        Self::new(Matrix3::from_row_slice(v))
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            m: Matrix3::new(1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0),
        }
    }

    /// Rotation by `angle` radians and isotropic `scale` about `center`,
    /// followed by a translation.
    pub fn similarity(center: (f64, f64), angle: f64, scale: f64, shift: (f64, f64)) -> Self {
        let (c, s) = (scale * angle.cos(), scale * angle.sin());
        let (cx, cy) = center;
        let tx = cx - c * cx + s * cy + shift.0;
        let ty = cy - s * cx - c * cy + shift.1;
        Self {
            m: Matrix3::new(c, -s, tx, s, c, ty, 0.0, 0.0, 1.0),
        }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let mut out = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                out[r * 3 + c] = self.m[(r, c)];
            }
        }
        out
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Homography) -> Homography {
        Homography {
            m: normalized(self.m * other.m),
        }
    }

    pub fn inverse(&self) -> Result<Homography> {
        let inv = self
            .m
            .try_inverse()
            .ok_or_else(|| Error::Degenerate("homography is not invertible".into()))?;
        Homography::new(inv)
    }

    #[inline]
    pub fn apply(&self, p: (f64, f64)) -> (f64, f64) {
        let m = &self.m;
        let w = m[(2, 0)] * p.0 + m[(2, 1)] * p.1 + m[(2, 2)];
        (
            (m[(0, 0)] * p.0 + m[(0, 1)] * p.1 + m[(0, 2)]) / w,
            (m[(1, 0)] * p.0 + m[(1, 1)] * p.1 + m[(1, 2)]) / w,
        )
    }

    /// Derivative of `apply` at `p`.
    pub fn jacobian(&self, p: (f64, f64)) -> Matrix2<f64> {
        let m = &self.m;
        let v = m * Vector3::new(p.0, p.1, 1.0);
        let (u, w) = ((v[0], v[1]), v[2]);
        let w2 = w * w;
        Matrix2::new(
            (m[(0, 0)] * w - u.0 * m[(2, 0)]) / w2,
            (m[(0, 1)] * w - u.0 * m[(2, 1)]) / w2,
            (m[(1, 0)] * w - u.1 * m[(2, 0)]) / w2,
            (m[(1, 1)] * w - u.1 * m[(2, 1)]) / w2,
        )
    }

    /// Frobenius distance to `reference`, relative to its norm.
    pub fn relative_error(&self, reference: &Homography) -> f64 {
        (self.m - reference.m).norm() / reference.m.norm()
    }

    pub fn is_identity(&self) -> bool {
        self.m == Matrix3::identity()
    }
}

impl Default for Homography {
    fn default() -> Self {
        Self::identity()
    }
}

impl Mul for Homography {
    type Output = Homography;
    fn mul(self, rhs: Homography) -> Homography {
        self.compose(&rhs)
    }
}

impl fmt::Display for Homography {
    /// Nine space-separated values, row-major, shortest round-trip form.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.to_row_major();
        for (i, x) in v.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{x}")?;
        }
        Ok(())
    }
}
