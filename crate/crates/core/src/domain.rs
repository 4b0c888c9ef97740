//! Strictly convex bounded domains: balls and axis-aligned ellipses/ellipsoids.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::sphere::check_dim;
use crate::vector::{norm, sub};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain<T, const N: usize> {
    Ball { center: [T; N], radius: T },
    Ellipse { center: [T; N], semi_axes: [T; N] },
}

impl<T: Scalar, const N: usize> Domain<T, N> {
    pub fn ball(center: [T; N], radius: T) -> Result<Self> {
        check_dim::<N>()?;
        if !(radius.is_finite() && radius > T::zero()) || center.iter().any(|c| !c.is_finite()) {
            return Err(invalid(format!("ball radius {radius} must be positive and finite")));
        }
        Ok(Domain::Ball { center, radius })
    }

    pub fn ellipse(center: [T; N], semi_axes: [T; N]) -> Result<Self> {
        check_dim::<N>()?;
        if semi_axes.iter().any(|a| !(a.is_finite() && *a > T::zero())) || center.iter().any(|c| !c.is_finite()) {
            return Err(invalid("ellipse semi-axes must be positive and finite"));
        }
        Ok(Domain::Ellipse { center, semi_axes })
    }

    pub fn unit_ball() -> Self {
        Domain::Ball { center: [T::zero(); N], radius: T::one() }
    }

    pub fn center(&self) -> &[T; N] {
        match self {
            Domain::Ball { center, .. } | Domain::Ellipse { center, .. } => center,
        }
    }

    /// Half extents of the bounding box around the center.
    pub fn half_extents(&self) -> [T; N] {
        match self {
            Domain::Ball { radius, .. } => [*radius; N],
            Domain::Ellipse { semi_axes, .. } => *semi_axes,
        }
    }

    /// Open-set membership: the game ends as soon as the position is not
    /// strictly inside.
    #[inline]
    pub fn contains(&self, p: &[T; N]) -> bool {
        match self {
            Domain::Ball { center, radius } => {
                let mut s = T::zero();
                for i in 0..N {
                    let d = p[i] - center[i];
                    s = s + d * d;
                }
                s < *radius * *radius
            }
            Domain::Ellipse { center, semi_axes } => {
                let mut s = T::zero();
                for i in 0..N {
                    let d = (p[i] - center[i]) / semi_axes[i];
                    s = s + d * d;
                }
                s < T::one()
            }
        }
    }

    pub fn diameter(&self) -> T {
        let e = self.half_extents();
        let m = e.iter().fold(T::zero(), |a, &b| a.max(b));
        m + m
    }

    /// Euclidean distance from `p` to the boundary.
    pub fn boundary_distance(&self, p: &[T; N]) -> T {
        match self {
            Domain::Ball { center, radius } => (norm(&sub(p, center)) - *radius).abs(),
            Domain::Ellipse { center, semi_axes } => {
                T::lit(extreme_distance_on_ellipsoid(&to_f64(center), &to_f64(semi_axes), &to_f64(p), false))
            }
        }
    }

    /// `max_{y in boundary} |y - z|`.
    pub fn max_boundary_distance_from(&self, z: &[T; N]) -> T {
        match self {
            Domain::Ball { center, radius } => norm(&sub(z, center)) + *radius,
            Domain::Ellipse { center, semi_axes } => {
                T::lit(extreme_distance_on_ellipsoid(&to_f64(center), &to_f64(semi_axes), &to_f64(z), true))
            }
        }
    }

    pub fn spec(&self) -> DomainSpec {
        match self {
            Domain::Ball { center, radius } => DomainSpec::Ball {
                center: to_f64(center).to_vec(),
                radius: radius.to_f64_lossy(),
            },
            Domain::Ellipse { center, semi_axes } => DomainSpec::Ellipse {
                center: to_f64(center).to_vec(),
                semi_axes: to_f64(semi_axes).to_vec(),
            },
        }
    }

    pub fn from_spec(spec: &DomainSpec) -> Result<Self> {
        let arr = |v: &[f64], what: &str| -> Result<[T; N]> {
            if v.len() != N {
                return Err(invalid(format!("{what} has {} components, expected {N}", v.len())));
            }
            Ok(std::array::from_fn(|i| T::lit(v[i])))
        };
        match spec {
            DomainSpec::Ball { center, radius } => Self::ball(arr(center, "center")?, T::lit(*radius)),
            DomainSpec::Ellipse { center, semi_axes } => {
                Self::ellipse(arr(center, "center")?, arr(semi_axes, "semi_axes")?)
            }
        }
    }
}

/// Serializable, dimension-erased description of a [`Domain`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DomainSpec {
    Ball { center: Vec<f64>, radius: f64 },
    Ellipse { center: Vec<f64>, semi_axes: Vec<f64> },
}

impl DomainSpec {
    pub fn dim(&self) -> usize {
        match self {
            DomainSpec::Ball { center, .. } | DomainSpec::Ellipse { center, .. } => center.len(),
        }
    }
}

fn to_f64<T: Scalar, const N: usize>(v: &[T; N]) -> [f64; N] {
    crate::vector::to_f64(v)
}

/// Extreme (`max` or `min`) of `|y - z|` over the ellipsoid surface centered
/// at `c`: dense parametric sweep followed by local pattern refinement.
fn extreme_distance_on_ellipsoid<const N: usize>(c: &[f64; N], a: &[f64; N], z: &[f64; N], maximize: bool) -> f64 {
    let point = |u: f64, w: f64| -> [f64; N] {
        let mut p = [0.0; N];
        if N == 2 {
            p[0] = c[0] + a[0] * u.cos();
            p[1] = c[1] + a[1] * u.sin();
        } else {
            p[0] = c[0] + a[0] * w.sin() * u.cos();
            p[1] = c[1] + a[1] * w.sin() * u.sin();
            p[2] = c[2] + a[2] * w.cos();
        }
        p
    };
    let sign = if maximize { 1.0 } else { -1.0 };
    let score = |u: f64, w: f64| -> f64 { sign * point(u, w).iter().zip(z).map(|(x, y)| (x - y).powi(2)).sum::<f64>() };
    let (nu, nw) = if N == 2 { (4096, 1) } else { (512, 256) };
    let mut best = (0.0, 0.0, f64::NEG_INFINITY);
    for i in 0..nu {
        let u = std::f64::consts::TAU * i as f64 / nu as f64;
        for j in 0..nw {
            let w = if N == 2 { 0.0 } else { std::f64::consts::PI * (j as f64 + 0.5) / nw as f64 };
            let v = score(u, w);
            if v > best.2 {
                best = (u, w, v);
            }
        }
    }
    let (mut u, mut w, mut v) = best;
    let mut step = std::f64::consts::TAU / nu as f64;
    while step > 1e-13 {
        let mut improved = false;
        for (du, dw) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
            if N == 2 && dw != 0.0 {
                continue;
            }
            let cand = score(u + du, w + dw);
            if cand > v {
                u += du;
                w += dw;
                v = cand;
                improved = true;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (sign * v).sqrt()
}
