//! The box domain, its phase-space boundary classes and the zero extension
//! of gridded velocity fields.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::FaceField;

/// Points and velocities are stored in three slots; slots past the domain
/// dimension are kept at zero.
pub type Point = [f64; 3];

pub const ZERO: Point = [0.0; 3];

/// Default distance within which a point counts as lying on the boundary.
pub const BOUNDARY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    dim: usize,
    lo: Point,
    hi: Point,
    reference: Point,
    circumradius: f64,
}

/// Classification of a boundary phase point `(x, v)` by the sign of `v·n(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PhaseBoundaryClass {
    Outgoing,
    Incoming,
    Grazing,
}

impl PhaseBoundaryClass {
    pub fn label(self) -> &'static str {
        match self {
            PhaseBoundaryClass::Outgoing => "outgoing",
            PhaseBoundaryClass::Incoming => "incoming",
            PhaseBoundaryClass::Grazing => "grazing",
        }
    }
}

pub fn to_point(xs: &[f64]) -> Point {
    let mut p = ZERO;
    for (slot, &x) in p.iter_mut().zip(xs) {
        *slot = x;
    }
    p
}

pub fn norm(v: &Point) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

impl Domain {
    pub fn new(dim: usize, lo: &[f64], hi: &[f64], reference: &[f64]) -> Result<Self> {
        if !(dim == 2 || dim == 3) {
            return Err(Error::validation(format!(
                "dimension must be 2 or 3, got {dim}"
            )));
        }
        if lo.len() != dim || hi.len() != dim || reference.len() != dim {
            return Err(Error::validation(
                "corner and reference point lengths must equal dim",
            ));
        }
        for a in 0..dim {
            if !(lo[a].is_finite() && hi[a].is_finite() && reference[a].is_finite()) {
                return Err(Error::validation("domain coordinates must be finite"));
            }
            if lo[a] >= hi[a] {
                return Err(Error::validation(format!(
                    "lower corner must be below upper corner on axis {a}"
                )));
            }
        }
        let lo = to_point(lo);
        let hi = to_point(hi);
        let reference = to_point(reference);
        let mut domain = Domain {
            dim,
            lo,
            hi,
            reference,
            circumradius: 0.0,
        };
        domain.circumradius = domain.circumradius_about(&reference);
        Ok(domain)
    }

    pub fn unit(dim: usize) -> Self {
        let lo = vec![0.0; dim];
        let hi = vec![1.0; dim];
        let centre = vec![0.5; dim];
        Domain::new(dim, &lo, &hi, &centre).expect("unit box is valid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lo(&self) -> &Point {
        &self.lo
    }

    pub fn hi(&self) -> &Point {
        &self.hi
    }

    pub fn reference_point(&self) -> &Point {
        &self.reference
    }

    pub fn lengths(&self) -> Point {
        let mut l = ZERO;
        for a in 0..self.dim {
            l[a] = self.hi[a] - self.lo[a];
        }
        l
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim).map(|a| self.hi[a] - self.lo[a]).product()
    }

    pub fn diameter(&self) -> f64 {
        norm(&self.lengths())
    }

    /// Radius of the smallest ball about the reference point containing the box.
    pub fn circumradius(&self) -> f64 {
        self.circumradius
    }

    pub fn circumradius_about(&self, centre: &Point) -> f64 {
        let mut s = 0.0;
        for a in 0..self.dim {
            let far = (centre[a] - self.lo[a])
                .abs()
                .max((self.hi[a] - centre[a]).abs());
            s += far * far;
        }
        s.sqrt()
    }

    pub fn inside(&self, x: &Point) -> bool {
        (0..self.dim).all(|a| x[a] > self.lo[a] && x[a] < self.hi[a])
    }

    /// Exact signed distance to the boundary, positive inside.
    pub fn distance_to_boundary(&self, x: &Point) -> f64 {
        let mut interior = f64::INFINITY;
        let mut outside_sq = 0.0;
        let mut is_outside = false;
        for a in 0..self.dim {
            let below = self.lo[a] - x[a];
            let above = x[a] - self.hi[a];
            if below > 0.0 || above > 0.0 {
                is_outside = true;
                let e = below.max(above);
                outside_sq += e * e;
            } else {
                interior = interior.min((-below).min(-above));
            }
        }
        if is_outside {
            -outside_sq.sqrt()
        } else {
            interior
        }
    }

    pub fn boundary_normal(&self, x: &Point) -> Result<Point> {
        self.boundary_normal_with_tol(x, BOUNDARY_TOL)
    }

    /// Outward unit normal of the nearest face. Ties go to the lowest axis,
    /// lower face before upper face.
    pub fn boundary_normal_with_tol(&self, x: &Point, tol: f64) -> Result<Point> {
        let dist = self.distance_to_boundary(x);
        if !dist.is_finite() || dist.abs() > tol {
            return Err(Error::validation(format!(
                "point {:?} is {dist:e} away from the boundary (tolerance {tol:e})",
                &x[..self.dim]
            )));
        }
        let mut best = f64::INFINITY;
        let mut normal = ZERO;
        for a in 0..self.dim {
            let to_lo = (x[a] - self.lo[a]).abs();
            if to_lo < best {
                best = to_lo;
                normal = ZERO;
                normal[a] = -1.0;
            }
            let to_hi = (self.hi[a] - x[a]).abs();
            if to_hi < best {
                best = to_hi;
                normal = ZERO;
                normal[a] = 1.0;
            }
        }
        Ok(normal)
    }

    pub fn classify_phase(&self, x: &Point, v: &Point) -> Result<PhaseBoundaryClass> {
        self.classify_phase_with_tol(x, v, BOUNDARY_TOL)
    }

    pub fn classify_phase_with_tol(
        &self,
        x: &Point,
        v: &Point,
        tol: f64,
    ) -> Result<PhaseBoundaryClass> {
        let n = self.boundary_normal_with_tol(x, tol)?;
        let vn = dot(v, &n);
        let grazing = 1e-12 * (1.0 + norm(v));
        Ok(if vn.abs() <= grazing {
            PhaseBoundaryClass::Grazing
        } else if vn > 0.0 {
            PhaseBoundaryClass::Outgoing
        } else {
            PhaseBoundaryClass::Incoming
        })
    }
}

/// Zero extension of a boundary-vanishing gridded field to all of space.
pub fn extend_field(domain: &Domain, u: &FaceField, x: &Point) -> Point {
    if !domain.inside(x) {
        return ZERO;
    }
    u.interpolate(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sq() -> Domain {
        Domain::unit(2)
    }

    #[test]
    fn inside_examples() {
        let d = sq();
        assert!(d.inside(&[0.5, 0.5, 0.0]));
        assert!(!d.inside(&[1.0, 0.5, 0.0]));
        assert!(!d.inside(&[1.5, 0.5, 0.0]));
    }

    #[test]
    fn normals_and_tie_break() {
        let d = sq();
        assert_eq!(
            d.boundary_normal(&[1.0, 0.5, 0.0]).unwrap(),
            [1.0, 0.0, 0.0]
        );
        assert_eq!(
            d.boundary_normal(&[0.5, 0.0, 0.0]).unwrap(),
            [0.0, -1.0, 0.0]
        );
        assert_eq!(
            d.boundary_normal(&[0.0, 0.0, 0.0]).unwrap(),
            [-1.0, 0.0, 0.0]
        );
        assert!(d.boundary_normal(&[0.5, 0.5, 0.0]).is_err());
    }

    #[test]
    fn phase_classes() {
        let d = sq();
        let x = [1.0, 0.5, 0.0];
        assert_eq!(
            d.classify_phase(&x, &[1.0, 0.0, 0.0]).unwrap(),
            PhaseBoundaryClass::Outgoing
        );
        assert_eq!(
            d.classify_phase(&x, &[-1.0, 0.0, 0.0]).unwrap(),
            PhaseBoundaryClass::Incoming
        );
        assert_eq!(
            d.classify_phase(&x, &[0.0, 1.0, 0.0]).unwrap(),
            PhaseBoundaryClass::Grazing
        );
    }

    #[test]
    fn signed_distance() {
        let d = sq();
        assert!((d.distance_to_boundary(&[0.5, 0.5, 0.0]) - 0.5).abs() < 1e-15);
        assert!((d.distance_to_boundary(&[0.9, 0.5, 0.0]) - 0.1).abs() < 1e-15);
        assert!((d.distance_to_boundary(&[1.2, 0.5, 0.0]) + 0.2).abs() < 1e-15);
        // exterior corner region is Euclidean
        assert!((d.distance_to_boundary(&[1.3, 1.4, 0.0]) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn circumradius_reaches_farthest_corner() {
        let d = Domain::new(2, &[0.0, 0.0], &[2.0, 1.0], &[0.5, 0.5]).unwrap();
        let expected = (1.5f64 * 1.5 + 0.5 * 0.5).sqrt();
        assert!((d.circumradius() - expected).abs() < 1e-15);
    }

    #[test]
    fn rejects_degenerate_boxes() {
        assert!(Domain::new(2, &[0.0, 0.0], &[0.0, 1.0], &[0.0, 0.5]).is_err());
        assert!(Domain::new(4, &[0.0; 4], &[1.0; 4], &[0.5; 4]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn normals_are_unit(axis in 0usize..3, side in proptest::bool::ANY, s in 0.0f64..1.0, r in 0.0f64..1.0) {
            let d = Domain::unit(3);
            let mut x = [s, r, 0.5];
            x[axis] = if side { 1.0 } else { 0.0 };
            let n = d.boundary_normal(&x).unwrap();
            proptest::prop_assert!((norm(&n) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn interior_points_have_positive_distance(x in 0.001f64..0.999, y in 0.001f64..0.999) {
            let d = Domain::unit(2);
            proptest::prop_assert!(d.distance_to_boundary(&[x, y, 0.0]) > 0.0);
        }
    }
}
