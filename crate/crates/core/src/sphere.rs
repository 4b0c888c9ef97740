//! Spherical caps on `S^{N-1}` for `N = 2` (circle) and `N = 3` (sphere):
//! measures, cap intersections, averages over them and uniform sampling.
//!
//! A cap with axis `a` and threshold `theta` is the set
//! `{ v : <v, a> >= -theta }`. For `theta >= 0` it contains a closed half
//! sphere; the players of the game choose caps whose measure exceeds half the
//! sphere by `delta_eps = sqrt(eps)`.
//!
//! On the circle everything is exact: caps are arcs and an intersection is a
//! union of at most two arcs. On the sphere the intersection of two caps is
//! integrated with a product rule in (height, azimuth) taken in the frame of
//! the first cap's axis, where the second cap cuts each height circle in one
//! arc whose endpoints are known in closed form.

use rand::Rng;
use rand_distr::{Distribution, UnitSphere};

use crate::error::{invalid, Error, Result};
use crate::quadrature::GaussLegendre;
use crate::vector::{dot, norm, scale};
use crate::Scalar;

/// Default per-arc Gauss–Legendre order on the circle.
pub const DEFAULT_ARC_ORDER: usize = 32;
/// Default per-direction order of the product rule on the sphere.
pub const DEFAULT_SPHERE_ORDER: usize = 64;
/// Default bound on rejected draws in [`sample_uniform`].
pub const DEFAULT_MAX_ATTEMPTS: usize = 1_000_000;

pub(crate) fn check_dim<const N: usize>() -> Result<()> {
    if N == 2 || N == 3 {
        Ok(())
    } else {
        Err(invalid(format!("dimension {N} unsupported, expected 2 or 3")))
    }
}

fn check_runtime_dim(n: usize) -> Result<()> {
    if n == 2 || n == 3 {
        Ok(())
    } else {
        Err(invalid(format!("dimension {n} unsupported, expected 2 or 3")))
    }
}

/// A unit vector of `R^N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction<T, const N: usize> {
    v: [T; N],
}

impl<T: Scalar, const N: usize> Direction<T, N> {
    /// Wraps `components`, which must already have unit norm.
    pub fn new(components: [T; N]) -> Result<Self> {
        check_dim::<N>()?;
        let n = norm(&components);
        if !n.is_finite() || (n - T::one()).abs() > T::unit_tolerance() {
            return Err(invalid(format!("direction norm {n} is not 1")));
        }
        Ok(Self { v: components })
    }

    /// Normalizes a nonzero vector.
    pub fn normalize(v: [T; N]) -> Result<Self> {
        check_dim::<N>()?;
        let n = norm(&v);
        if !(n.is_finite() && n > T::zero()) {
            return Err(invalid("cannot normalize a zero or non-finite vector"));
        }
        Ok(Self { v: scale(&v, T::one() / n) })
    }

    /// The `k`-th coordinate unit vector `e_{k+1}`.
    pub fn basis(k: usize) -> Self {
        assert!(k < N, "basis index out of range");
        Self { v: crate::vector::unit(k) }
    }

    /// `e_N`, the last coordinate direction.
    pub fn last() -> Self {
        Self::basis(N - 1)
    }

    pub(crate) fn new_unchecked(v: [T; N]) -> Self {
        Self { v }
    }

    pub fn components(&self) -> &[T; N] {
        &self.v
    }

    pub fn dot(&self, other: &[T; N]) -> T {
        dot(&self.v, other)
    }

    pub fn neg(&self) -> Self {
        Self { v: std::array::from_fn(|i| -self.v[i]) }
    }
}

impl<T: Scalar> Direction<T, 2> {
    pub fn from_angle(phi: T) -> Self {
        Self { v: [phi.cos(), phi.sin()] }
    }

    /// Angle in `[0, 2*pi)`.
    pub fn angle(&self) -> T {
        self.v[1].atan2(self.v[0]).rem_euclid(&T::TAU())
    }
}

/// `{ v in S^{N-1} : <v, axis> >= -theta }`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cap<T, const N: usize> {
    axis: Direction<T, N>,
    theta: T,
}

impl<T: Scalar, const N: usize> Cap<T, N> {
    pub fn new(axis: Direction<T, N>, theta: T) -> Result<Self> {
        if !theta.is_finite() || theta < -T::one() || theta > T::one() {
            return Err(invalid(format!("cap threshold {theta} outside [-1, 1]")));
        }
        Ok(Self { axis, theta })
    }

    pub fn axis(&self) -> &Direction<T, N> {
        &self.axis
    }

    pub fn theta(&self) -> T {
        self.theta
    }

    pub fn contains(&self, v: &[T; N]) -> bool {
        self.axis.dot(v) >= -self.theta
    }

    pub fn measure(&self) -> T {
        cap_measure(self.theta, N).expect("threshold validated at construction")
    }

    /// Whether the cap is a legal move in the game with step `eps`.
    pub fn is_admissible(&self, eps: T) -> bool {
        let need = half_sphere_measure::<T>(N) + eps.sqrt();
        self.measure() >= need * (T::one() - T::unit_tolerance())
    }

    /// The cap as a circular arc (circle only).
    fn arc(&self) -> CircleArc<T> {
        let t = self.theta.max(-T::one()).min(T::one());
        let half_width = T::FRAC_PI_2() + t.asin();
        let center = self.axis.v[1].atan2(self.axis.v[0]);
        CircleArc {
            start: (center - half_width).rem_euclid(&T::TAU()),
            len: half_width + half_width,
        }
    }
}

/// Surface measure of `S^{N-1}`: `2*pi` on the circle, `4*pi` on the sphere.
pub fn sphere_measure<T: Scalar>(n: usize) -> T {
    match n {
        2 => T::TAU(),
        3 => T::lit(2.0) * T::TAU(),
        _ => T::nan(),
    }
}

fn half_sphere_measure<T: Scalar>(n: usize) -> T {
    sphere_measure::<T>(n) / T::lit(2.0)
}

/// Measure margin `delta_eps = eps^{1/2}` by which each admissible cap
/// exceeds half the sphere.
pub fn delta_eps<T: Scalar>(eps: T) -> Result<T> {
    if !(eps.is_finite() && eps > T::zero()) {
        return Err(invalid(format!("step size {eps} must be positive")));
    }
    Ok(eps.sqrt())
}

/// `sigma({ v : <v, e> >= -theta })` for a unit `e`.
pub fn cap_measure<T: Scalar>(theta: T, n: usize) -> Result<T> {
    check_runtime_dim(n)?;
    if !theta.is_finite() || theta < -T::one() || theta > T::one() {
        return Err(invalid(format!("cap threshold {theta} outside [-1, 1]")));
    }
    Ok(match n {
        2 => T::PI() + T::lit(2.0) * theta.asin(),
        _ => T::TAU() * (T::one() + theta),
    })
}

/// Inverse of [`cap_measure`]: the threshold whose cap measures half the
/// sphere plus `delta`.
pub fn theta_from_delta<T: Scalar>(delta: T, n: usize) -> Result<T> {
    check_runtime_dim(n)?;
    let half = half_sphere_measure::<T>(n);
    if !delta.is_finite() || delta < T::zero() || delta >= half {
        return Err(invalid(format!("measure margin {delta} outside [0, {half})")));
    }
    Ok(match n {
        2 => (delta / T::lit(2.0)).sin(),
        _ => delta / T::TAU(),
    })
}

/// `theta_eps`: the threshold of a minimal admissible cap for step `eps`.
pub fn game_theta<T: Scalar>(eps: T, n: usize) -> Result<T> {
    theta_from_delta(delta_eps(eps)?, n)
}

/// Counter-clockwise arc of the unit circle starting at angle `start`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleArc<T> {
    /// Start angle in `[0, 2*pi)`.
    pub start: T,
    /// Arc length in `[0, 2*pi]`.
    pub len: T,
}

impl<T: Scalar> CircleArc<T> {
    pub fn end(&self) -> T {
        self.start + self.len
    }

    pub fn contains_angle(&self, phi: T) -> bool {
        (phi - self.start).rem_euclid(&T::TAU()) <= self.len
    }
}

/// Intersection of two circular arcs: at most two arcs.
pub fn intersect_arcs<T: Scalar>(a: CircleArc<T>, b: CircleArc<T>) -> Vec<CircleArc<T>> {
    let tau = T::TAU();
    let full = tau * (T::one() - T::unit_tolerance());
    if a.len >= full {
        return vec![b];
    }
    if b.len >= full {
        return vec![a];
    }
    let mut out = Vec::with_capacity(2);
    let d = (b.start - a.start).rem_euclid(&tau);
    if d < a.len {
        out.push(CircleArc { start: b.start, len: b.len.min(a.len - d) });
    }
    let e = (a.start - b.start).rem_euclid(&tau);
    if d > T::zero() && e < b.len {
        out.push(CircleArc { start: a.start, len: a.len.min(b.len - e) });
    }
    out.retain(|arc| arc.len > T::zero());
    out
}

/// `A ∩ B` for two caps.
#[derive(Debug, Clone, PartialEq)]
pub struct CapIntersection<T, const N: usize> {
    cap_a: Cap<T, N>,
    cap_b: Cap<T, N>,
    arcs: Vec<CircleArc<T>>,
}

/// Intersects two caps with nonnegative thresholds.
///
/// On the circle the result carries its explicit arc decomposition. An empty
/// intersection is representable; [`CapIntersection::is_degenerate`] flags it.
pub fn intersect_caps<T: Scalar, const N: usize>(
    a: &Cap<T, N>,
    b: &Cap<T, N>,
) -> Result<CapIntersection<T, N>> {
    check_dim::<N>()?;
    if a.theta < T::zero() || b.theta < T::zero() {
        return Err(invalid("cap intersection requires nonnegative thresholds"));
    }
    let arcs = if N == 2 { intersect_arcs(a.arc(), b.arc()) } else { Vec::new() };
    Ok(CapIntersection { cap_a: *a, cap_b: *b, arcs })
}

impl<T: Scalar, const N: usize> CapIntersection<T, N> {
    pub fn caps(&self) -> (&Cap<T, N>, &Cap<T, N>) {
        (&self.cap_a, &self.cap_b)
    }

    /// Arc decomposition; empty on the sphere.
    pub fn arcs(&self) -> &[CircleArc<T>] {
        &self.arcs
    }

    pub fn contains(&self, v: &[T; N]) -> bool {
        self.cap_a.contains(v) && self.cap_b.contains(v)
    }

    /// Surface measure. Exact on the circle, quadrature on the sphere.
    pub fn measure(&self) -> T {
        if N == 2 {
            self.arcs.iter().fold(T::zero(), |acc, a| acc + a.len)
        } else {
            QuadratureRule::for_region(self, DEFAULT_SPHERE_ORDER)
                .map(|r| r.measure())
                .unwrap_or_else(|_| T::zero())
        }
    }

    /// True when the region is (numerically) empty, which violates the
    /// game's precondition that both caps exceed half the sphere.
    pub fn is_degenerate(&self) -> bool {
        self.measure() <= sphere_measure::<T>(N) * T::epsilon()
    }
}

/// Nodes on `S^{N-1}` with positive weights summing to the integrated
/// region's measure.
#[derive(Debug, Clone)]
pub struct QuadratureRule<T, const N: usize> {
    pub nodes: Vec<[T; N]>,
    pub weights: Vec<T>,
}

impl<T: Scalar, const N: usize> QuadratureRule<T, N> {
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn measure(&self) -> T {
        crate::scalar::pairwise_sum(&self.weights)
    }

    pub fn integrate<F: Fn(&[T; N]) -> T>(&self, f: F) -> T {
        let terms: Vec<T> = self.nodes.iter().zip(&self.weights).map(|(v, &w)| w * f(v)).collect();
        crate::scalar::pairwise_sum(&terms)
    }

    /// Rule for a cap intersection. `order` is the Gauss–Legendre order per
    /// arc (circle) or per direction and per height segment (sphere).
    pub fn for_region(region: &CapIntersection<T, N>, order: usize) -> Result<Self> {
        check_dim::<N>()?;
        if order == 0 {
            return Err(invalid("quadrature order must be positive"));
        }
        if N == 2 {
            Ok(Self::circle_rule(&region.arcs, order))
        } else {
            Ok(Self::sphere_rule(&region.cap_a, &region.cap_b, order))
        }
    }

    fn circle_rule(arcs: &[CircleArc<T>], order: usize) -> Self {
        let gl = GaussLegendre::get(order);
        let mut nodes = Vec::with_capacity(arcs.len() * order);
        let mut weights = Vec::with_capacity(arcs.len() * order);
        for arc in arcs {
            let a = arc.start.to_f64_lossy();
            let b = arc.end().to_f64_lossy();
            for (phi, w) in gl.on_interval(a, b) {
                let mut v = [T::zero(); N];
                v[0] = T::lit(phi.cos());
                v[1] = T::lit(phi.sin());
                nodes.push(v);
                weights.push(T::lit(w));
            }
        }
        Self { nodes, weights }
    }

    /// Product rule in the frame of `a`'s axis: height `z = <v, a>` and
    /// azimuth. Height segments are split where `b` starts or stops cutting
    /// full circles; each segment uses the substitution `z = m + r sin t`,
    /// which removes the square-root endpoint behaviour of the arc length.
    fn sphere_rule(a: &Cap<T, N>, b: &Cap<T, N>, order: usize) -> Self {
        let (e1, e2) = perpendicular_pair(&a.axis);
        let ax = to_f64_vec(a.axis.components());
        let e1 = to_f64_vec(&e1);
        let e2 = to_f64_vec(&e2);
        let bv = to_f64_vec(b.axis.components());
        let bz = dot3(&bv, &ax);
        let bx = dot3(&bv, &e1);
        let by = dot3(&bv, &e2);
        let bp = (bx * bx + by * by).sqrt();
        let beta = by.atan2(bx);
        let tb = b.theta.to_f64_lossy();

        let z_lo = (-a.theta.to_f64_lossy()).max(-1.0);
        let z_hi = 1.0;
        let mut cuts = vec![z_lo, z_hi];
        if bp > 1e-14 {
            let s = bp * (1.0 - tb * tb).max(0.0).sqrt();
            cuts.push(-tb * bz + s);
            cuts.push(-tb * bz - s);
        } else if bz.abs() > 1e-14 {
            cuts.push(-tb / bz);
        }
        cuts.retain(|&z| z >= z_lo && z <= z_hi);
        cuts.sort_by(|p, q| p.partial_cmp(q).expect("finite cut"));
        cuts.dedup_by(|p, q| (*p - *q).abs() < 1e-15);

        let gl = GaussLegendre::get(order);
        let uniform_w = std::f64::consts::TAU / order as f64;
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for seg in cuts.windows(2) {
            let (z0, z1) = (seg[0], seg[1]);
            if z1 - z0 <= 1e-15 {
                continue;
            }
            let mid = 0.5 * (z0 + z1);
            let half = 0.5 * (z1 - z0);
            for (t, wt) in gl.on_interval(-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2) {
                let z = mid + half * t.sin();
                let wz = wt * half * t.cos();
                let r = (1.0 - z * z).max(0.0).sqrt();
                let rhs = -tb - z * bz;
                let mut push = |phi: f64, wphi: f64| {
                    let (s, c) = phi.sin_cos();
                    let mut v = [T::zero(); N];
                    for k in 0..3 {
                        v[k] = T::lit(r * c * e1[k] + r * s * e2[k] + z * ax[k]);
                    }
                    nodes.push(v);
                    weights.push(T::lit(wz * wphi));
                };
                let rb = r * bp;
                if rb <= 1e-14 {
                    if rhs <= 0.0 {
                        for k in 0..order {
                            push(uniform_w * k as f64, uniform_w);
                        }
                    }
                    continue;
                }
                let c = rhs / rb;
                if c <= -1.0 {
                    for k in 0..order {
                        push(uniform_w * k as f64, uniform_w);
                    }
                } else if c < 1.0 {
                    let hw = c.acos();
                    for (phi, wphi) in gl.on_interval(beta - hw, beta + hw) {
                        push(phi, wphi);
                    }
                }
            }
        }
        Self { nodes, weights }
    }
}

fn to_f64_vec<T: Scalar, const N: usize>(v: &[T; N]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (o, x) in out.iter_mut().zip(v.iter()) {
        *o = x.to_f64_lossy();
    }
    out
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Two unit vectors completing `axis` to an orthonormal frame (sphere), or
/// the in-plane perpendicular and zero (circle).
pub fn perpendicular_pair<T: Scalar, const N: usize>(axis: &Direction<T, N>) -> ([T; N], [T; N]) {
    let a = axis.components();
    if N == 2 {
        let mut p = [T::zero(); N];
        p[0] = -a[1];
        p[1] = a[0];
        return (p, [T::zero(); N]);
    }
    // Cross with the coordinate axis least aligned with `a`.
    let k = (0..3)
        .min_by(|&i, &j| a[i].abs().partial_cmp(&a[j].abs()).expect("finite axis"))
        .unwrap_or(0);
    let e: [T; N] = crate::vector::unit(k);
    let u = cross(a, &e);
    let nu = norm(&u);
    let u = scale(&u, T::one() / nu);
    let w = cross(a, &u);
    (u, w)
}

fn cross<T: Scalar, const N: usize>(a: &[T; N], b: &[T; N]) -> [T; N] {
    let mut out = [T::zero(); N];
    out[0] = a[1] * b[2] - a[2] * b[1];
    out[1] = a[2] * b[0] - a[0] * b[2];
    out[2] = a[0] * b[1] - a[1] * b[0];
    out
}

/// `(1 / sigma(region)) * ∫_region f dsigma`.
pub fn region_average<T: Scalar, const N: usize, F: Fn(&[T; N]) -> T>(
    region: &CapIntersection<T, N>,
    f: F,
    order: usize,
) -> Result<T> {
    let rule = QuadratureRule::for_region(region, order)?;
    let m = rule.measure();
    if !(m > sphere_measure::<T>(N) * T::epsilon()) {
        return Err(Error::DegenerateRegion);
    }
    Ok(rule.integrate(f) / m)
}

/// Average of `f` over the great sphere `{ v : <v, axis> = 0 }`.
///
/// On the circle this is the two-point average over `±axis⊥`; on the sphere
/// the great circle is sampled at `order` equispaced angles, which is exact
/// for trigonometric polynomials of degree below `order`.
pub fn equator_average<T: Scalar, const N: usize, F: Fn(&[T; N]) -> T>(
    axis: &Direction<T, N>,
    f: F,
    order: usize,
) -> T {
    let (u, w) = perpendicular_pair(axis);
    if N == 2 {
        let m = scale(&u, -T::one());
        return (f(&u) + f(&m)) / T::lit(2.0);
    }
    let n = order.max(3);
    let terms: Vec<T> = (0..n)
        .map(|k| {
            let phi = T::TAU() * T::from_usize_lossy(k) / T::from_usize_lossy(n);
            let (s, c) = phi.sin_cos();
            let v: [T; N] = std::array::from_fn(|i| c * u[i] + s * w[i]);
            f(&v)
        })
        .collect();
    crate::scalar::pairwise_sum(&terms) / T::from_usize_lossy(n)
}

/// The game constant `K = C = ½ ⨍_{<e_N, v> = 0} v_1² dμ`: `1/2` on the
/// circle and `1/4` on the sphere.
pub fn constant_c<T: Scalar>(n: usize) -> Result<T> {
    check_runtime_dim(n)?;
    Ok(match n {
        2 => T::lit(0.5) * equator_average(&Direction::<T, 2>::last(), |v| v[0] * v[0], 0),
        _ => T::lit(0.5) * equator_average(&Direction::<T, 3>::last(), |v| v[0] * v[0], DEFAULT_SPHERE_ORDER),
    })
}

/// Draws a direction uniformly from `region` (see [`sample_uniform_with_limit`]).
pub fn sample_uniform<T: Scalar, const N: usize, R: Rng + ?Sized>(
    region: &CapIntersection<T, N>,
    rng: &mut R,
) -> Result<Direction<T, N>> {
    sample_uniform_with_limit(region, rng, DEFAULT_MAX_ATTEMPTS)
}

/// Uniform sampling: inverse arc-length on the circle, rejection from the
/// uniform sphere distribution otherwise.
pub fn sample_uniform_with_limit<T: Scalar, const N: usize, R: Rng + ?Sized>(
    region: &CapIntersection<T, N>,
    rng: &mut R,
    max_attempts: usize,
) -> Result<Direction<T, N>> {
    check_dim::<N>()?;
    if N == 2 {
        let total = region.arcs.iter().fold(T::zero(), |acc, a| acc + a.len);
        if !(total > T::zero()) {
            return Err(Error::DegenerateRegion);
        }
        let mut u = T::lit(rng.random::<f64>()) * total;
        let last = region.arcs.len() - 1;
        let mut phi = T::zero();
        for (k, arc) in region.arcs.iter().enumerate() {
            if u < arc.len || k == last {
                phi = arc.start + u.min(arc.len);
                break;
            }
            u = u - arc.len;
        }
        let mut v = [T::zero(); N];
        v[0] = phi.cos();
        v[1] = phi.sin();
        return Ok(Direction::new_unchecked(v));
    }
    for _ in 0..max_attempts {
        let p: [f64; 3] = UnitSphere.sample(rng);
        let v: [T; N] = std::array::from_fn(|i| T::lit(p[i]));
        if region.contains(&v) {
            return Ok(Direction::new_unchecked(v));
        }
    }
    Err(Error::SamplingFailure { attempts: max_attempts })
}

/// `m` directions spread over the sphere, closed under `v -> -v`.
///
/// Circle: equispaced angles `2*pi*i/m`. Sphere: a Fibonacci lattice on the
/// upper hemisphere followed by its antipodes, so a player can always answer
/// a cap with the exactly opposite one. `m` must be even.
pub fn axis_set<T: Scalar, const N: usize>(m: usize) -> Result<Vec<Direction<T, N>>> {
    check_dim::<N>()?;
    if m < 2 || !m.is_multiple_of(2) {
        return Err(invalid(format!("axis count {m} must be even and at least 2")));
    }
    if N == 2 {
        return Ok((0..m)
            .map(|i| {
                let phi = T::TAU() * T::from_usize_lossy(i) / T::from_usize_lossy(m);
                let mut v = [T::zero(); N];
                v[0] = phi.cos();
                v[1] = phi.sin();
                Direction::new_unchecked(v)
            })
            .collect());
    }
    let half = m / 2;
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let upper: Vec<Direction<T, N>> = (0..half)
        .map(|k| {
            let z = 1.0 - (k as f64 + 0.5) / half as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * k as f64;
            let mut v = [T::zero(); N];
            v[0] = T::lit(r * phi.cos());
            v[1] = T::lit(r * phi.sin());
            v[2] = T::lit(z);
            Direction::normalize(v).expect("lattice point is nonzero")
        })
        .collect();
    let lower: Vec<Direction<T, N>> = upper.iter().map(|d| d.neg()).collect();
    Ok(upper.into_iter().chain(lower).collect())
}
