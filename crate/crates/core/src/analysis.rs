//! Oracles and numerical checks: the explicit solution on a ball, the band
//! average lemma, the two forms of the curvature operator, superlevel sets
//! with their Hausdorff distances, and the `eps -> 0` convergence study.

use rayon::prelude::*;

use crate::domain::Domain;
use crate::error::{invalid, Error, Result};
use crate::field::{Grid, ValueField};
use crate::solver::{value_iteration, SolveError, SolverConfig};
use crate::sphere::{
    check_dim, constant_c, equator_average, game_theta, intersect_caps, region_average, Cap, Direction,
    DEFAULT_SPHERE_ORDER,
};
use crate::vector::{norm, norm_sq, quad_form, scale, sub, trace};
use crate::Scalar;

/// `u(x) = L (R² - |x - c|²) / (2 (N - 1))`, the solution of
/// `|Du| div(Du/|Du|) = -L` in `B_R(c)` vanishing on the sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallOracle<T, const N: usize> {
    pub center: [T; N],
    pub radius: T,
    pub l: T,
}

impl<T: Scalar, const N: usize> BallOracle<T, N> {
    pub fn new(center: [T; N], radius: T, l: T) -> Result<Self> {
        check_dim::<N>()?;
        if !(radius > T::zero() && l > T::zero()) {
            return Err(invalid("ball oracle needs R > 0 and L > 0"));
        }
        Ok(Self { center, radius, l })
    }

    /// The oracle for a ball domain with `L = 1`.
    pub fn for_domain(domain: &Domain<T, N>) -> Result<Self> {
        match domain {
            Domain::Ball { center, radius } => Self::new(*center, *radius, T::one()),
            Domain::Ellipse { .. } => Err(invalid("the explicit oracle needs a ball domain")),
        }
    }

    /// Radius of the superlevel set `{u > t}`, or `None` when it is empty.
    pub fn level_radius(&self, t: T) -> Option<T> {
        let r2 = self.radius * self.radius - T::lit(2.0 * (N as f64 - 1.0)) * t / self.l;
        (r2 > T::zero()).then(|| r2.sqrt())
    }
}

/// Value of the oracle at `x`; negative outside the ball.
pub fn ball_solution<T: Scalar, const N: usize>(x: &[T; N], oracle: &BallOracle<T, N>) -> T {
    let d2 = norm_sq(&sub(x, &oracle.center));
    oracle.l * (oracle.radius * oracle.radius - d2) / T::lit(2.0 * (N as f64 - 1.0))
}

/// `L (R² - |x|²) / (2 (N - 1))` with `L > 1`: a strict supersolution on any
/// domain inside `B_R(0)`, hence an upper bound for `u^eps`.
pub fn supersolution_bound<T: Scalar, const N: usize>(x: &[T; N], r: T, l: T) -> Result<T> {
    if !(l > T::one()) {
        return Err(invalid(format!("L = {l} must exceed 1 for a strict supersolution")));
    }
    Ok(ball_solution(x, &BallOracle::new([T::zero(); N], r, l)?))
}

/// Which admissible family `A_eps` to pair with `B_eps = {v_N <= theta_eps}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LemmaFamily {
    /// `{v_N >= -theta_eps}`: the symmetric band.
    Mirrored,
    /// The same cap with its axis tilted towards `e_1` by `sqrt(eps)/4`. Its drift is
    /// of order `sqrt(eps)`, so it leaves the drift hypothesis for small `eps`.
    Tilted,
    /// `{v_N >= -(theta_eps + eps)}`: strictly more than the minimum measure.
    Enlarged,
}

impl LemmaFamily {
    pub const ALL: [LemmaFamily; 3] = [LemmaFamily::Mirrored, LemmaFamily::Tilted, LemmaFamily::Enlarged];
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LemmaRow {
    pub eps: f64,
    pub band_average: f64,
    pub equator_average: f64,
    pub error: f64,
    /// `⨍_{A ∩ B} v_N`.
    pub drift: f64,
    /// `-eps <= drift <= 0` and `A` admissible.
    pub hypothesis_ok: bool,
}

fn lemma_cap<T: Scalar, const N: usize>(family: LemmaFamily, eps: T, theta: T) -> Result<Cap<T, N>> {
    let up = Direction::<T, N>::last();
    Ok(match family {
        LemmaFamily::Mirrored => Cap::new(up, theta)?,
        LemmaFamily::Enlarged => Cap::new(up, (theta + eps).min(T::one()))?,
        LemmaFamily::Tilted => {
            let a = eps.sqrt() / T::lit(4.0);
            let mut v = [T::zero(); N];
            v[0] = a.sin();
            v[N - 1] = a.cos();
            Cap::new(Direction::normalize(v)?, theta)?
        }
    })
}

/// `|⨍_{A_eps ∩ B_eps} f - ⨍_{v_N = 0} f|` for each `eps`, with the
/// lemma's drift hypothesis evaluated (violations are reported, not fatal).
pub fn verify_band_lemma<T: Scalar, const N: usize, F: Fn(&[T; N]) -> T>(
    f: F,
    eps_list: &[T],
    family: LemmaFamily,
    order: usize,
) -> Result<Vec<LemmaRow>> {
    let down = Direction::<T, N>::last().neg();
    let equator = equator_average(&Direction::<T, N>::last(), &f, order.max(DEFAULT_SPHERE_ORDER));
    eps_list
        .iter()
        .map(|&eps| {
            let theta = game_theta(eps, N)?;
            let b = Cap::new(down, theta)?;
            let a = lemma_cap::<T, N>(family, eps, theta)?;
            let region = intersect_caps(&a, &b)?;
            let band = region_average(&region, &f, order)?;
            let drift = region_average(&region, |v| v[N - 1], order)?;
            let e = eps.to_f64_lossy();
            let d = drift.to_f64_lossy();
            Ok(LemmaRow {
                eps: e,
                band_average: band.to_f64_lossy(),
                equator_average: equator.to_f64_lossy(),
                error: (band - equator).abs().to_f64_lossy(),
                drift: d,
                hypothesis_ok: a.is_admissible(eps) && d >= -e - 1e-12 && d <= 1e-12,
            })
        })
        .collect()
}

/// A smooth test function given by its gradient and Hessian.
pub trait TestFunction<T, const N: usize> {
    fn gradient(&self, x: &[T; N]) -> [T; N];
    fn hessian(&self, x: &[T; N]) -> [[T; N]; N];
}

/// `phi(x) = ½ <H x, x> + <b, x>` with symmetric `H`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadratic<T, const N: usize> {
    pub h: [[T; N]; N],
    pub b: [T; N],
}

impl<T: Scalar, const N: usize> TestFunction<T, N> for Quadratic<T, N> {
    fn gradient(&self, x: &[T; N]) -> [T; N] {
        std::array::from_fn(|i| (0..N).fold(self.b[i], |acc, j| acc + self.h[i][j] * x[j]))
    }

    fn hessian(&self, _x: &[T; N]) -> [[T; N]; N] {
        self.h
    }
}

/// The curvature operator at `x` in its two forms:
/// `Δφ - <D²φ ĝ, ĝ>` and `⨍_{<v, ĝ> = 0} ½ <D²φ v, v> / C(N)`, `ĝ = ∇φ/|∇φ|`.
pub fn mc_operator_residual<T: Scalar, const N: usize>(phi: &dyn TestFunction<T, N>, x: &[T; N]) -> Result<(T, T)> {
    check_dim::<N>()?;
    let g = phi.gradient(x);
    let n = norm(&g);
    if !(n >= T::lit(1e-10)) {
        return Err(Error::CriticalPoint { norm: n.to_f64_lossy() });
    }
    let hat = Direction::normalize(scale(&g, T::one() / n))?;
    let h = phi.hessian(x);
    let form1 = trace(&h) - quad_form(&h, hat.components());
    let avg = equator_average(&hat, |v| T::lit(0.5) * quad_form(&h, v), DEFAULT_SPHERE_ORDER);
    Ok((form1, avg / constant_c(N)?))
}

/// Nodes of a grid where some property holds.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetMask<T, const N: usize> {
    grid: Grid<T, N>,
    mask: Vec<bool>,
}

impl<T: Scalar, const N: usize> LevelSetMask<T, N> {
    pub fn from_predicate<F: Fn(&[T; N]) -> bool>(grid: &Grid<T, N>, pred: F) -> Self {
        let mask = (0..grid.len()).map(|k| pred(&grid.node(k))).collect();
        Self { grid: grid.clone(), mask }
    }

    /// Nodes strictly inside the ball `B_r(c)`.
    pub fn ball(grid: &Grid<T, N>, c: &[T; N], r: T) -> Self {
        Self::from_predicate(grid, |x| norm_sq(&sub(x, c)) < r * r)
    }

    pub fn grid(&self) -> &Grid<T, N> {
        &self.grid
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// Whether every node of `self` is in `other`.
    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.mask.iter().zip(&other.mask).all(|(&a, &b)| !a || b)
    }
}

/// `{x : field(x) > t}` on the field's nodes. Exterior nodes hold zero and
/// `t >= 0`, so they are never selected.
pub fn superlevel_set<T: Scalar, const N: usize>(field: &ValueField<T, N>, t: T) -> Result<LevelSetMask<T, N>> {
    if !(t >= T::zero()) {
        return Err(invalid(format!("level t = {t} must be nonnegative")));
    }
    let mask = field
        .values()
        .iter()
        .enumerate()
        .map(|(k, &v)| v > t && field.domain().contains(&field.grid().node(k)))
        .collect();
    Ok(LevelSetMask { grid: field.grid().clone(), mask })
}

const FAR: f64 = 1e30;

/// One-dimensional squared distance transform of a sampled function
/// (lower envelope of parabolas), in place.
fn edt_1d(f: &mut [f64], v: &mut [usize], z: &mut [f64], out: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] && k > 0 {
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
    f.copy_from_slice(out);
}

/// Squared Euclidean distance (in index units) from every node to the
/// nearest selected node.
fn squared_distance_map<T: Scalar, const N: usize>(m: &LevelSetMask<T, N>) -> Vec<f64> {
    let shape = *m.grid.shape();
    let strides = *m.grid.strides();
    let mut d: Vec<f64> = m.mask.iter().map(|&b| if b { 0.0 } else { FAR }).collect();
    let longest = shape.iter().copied().max().unwrap_or(1);
    let mut line = vec![0.0; longest];
    let mut out = vec![0.0; longest];
    let mut v = vec![0usize; longest];
    let mut z = vec![0.0; longest + 1];
    for axis in 0..N {
        let n = shape[axis];
        let stride = strides[axis];
        for start in 0..d.len() {
            // Visit each line once, from its first node.
            if !(start / stride).is_multiple_of(n) {
                continue;
            }
            for i in 0..n {
                line[i] = d[start + i * stride];
            }
            edt_1d(&mut line[..n], &mut v, &mut z, &mut out[..n]);
            for i in 0..n {
                d[start + i * stride] = line[i].min(FAR);
            }
        }
    }
    d
}

/// Symmetric Hausdorff distance between two node sets on the same grid, in
/// physical units. Two empty sets are at distance 0; an empty and a
/// nonempty set at `+inf`.
pub fn hausdorff_distance<T: Scalar, const N: usize>(a: &LevelSetMask<T, N>, b: &LevelSetMask<T, N>) -> Result<T> {
    if a.grid != b.grid {
        return Err(invalid("masks live on different grids"));
    }
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return Ok(T::zero()),
        (true, false) | (false, true) => return Ok(T::infinity()),
        _ => {}
    }
    let da = squared_distance_map(a);
    let db = squared_distance_map(b);
    let one_sided = |from: &LevelSetMask<T, N>, to: &[f64]| {
        from.mask.iter().zip(to).filter(|(&m, _)| m).fold(0.0f64, |acc, (_, &d)| acc.max(d))
    };
    let worst = one_sided(a, &db).max(one_sided(b, &da));
    Ok(T::lit(worst.sqrt()) * a.grid.spacing())
}

/// One line of the convergence table.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct StudyRow {
    pub eps: f64,
    pub h: f64,
    pub iterations: usize,
    /// `max |u^eps - u|` over interior nodes.
    pub sup_error: f64,
    /// `max u^eps` over interior nodes within `2 eps` of the boundary.
    pub boundary_max: f64,
    pub center_value: f64,
    /// `(t, Hausdorff(Ω_t^eps, Ω_t))`.
    pub hausdorff: Vec<(f64, f64)>,
}

/// Compares `u^eps` with the ball oracle for each `eps`.
///
/// The solver configuration for each `eps` is `template` with `grid_h`
/// scaled like `eps` and `tol_iter` like `eps²`; `k` is set to `C(N)`.
pub fn convergence_study<T: Scalar, const N: usize>(
    domain: &Domain<T, N>,
    eps_list: &[T],
    template: &SolverConfig<T>,
    t_list: &[T],
    parallel: bool,
) -> Result<Vec<StudyRow>, SolveError<T, N>> {
    let oracle = BallOracle::for_domain(domain)?;
    let k = constant_c(N)?;
    let row = |&eps: &T| -> Result<StudyRow, SolveError<T, N>> {
        let mut cfg = *template;
        cfg.eps = eps;
        cfg.k = k;
        cfg.grid_h = template.grid_h / template.eps * eps;
        cfg.tol_iter = template.tol_iter / (template.eps * template.eps) * eps * eps;
        let sol = value_iteration(domain, &cfg)?;
        Ok(study_row(&sol.field, &oracle, &cfg, sol.iterations, t_list)?)
    };
    if parallel {
        eps_list.par_iter().map(row).collect()
    } else {
        eps_list.iter().map(row).collect()
    }
}

/// Error measures of one solved field against the oracle.
pub fn study_row<T: Scalar, const N: usize>(
    field: &ValueField<T, N>,
    oracle: &BallOracle<T, N>,
    cfg: &SolverConfig<T>,
    iterations: usize,
    t_list: &[T],
) -> Result<StudyRow> {
    let grid = field.grid();
    let two_eps = cfg.eps + cfg.eps;
    let mut sup = T::zero();
    let mut collar = T::zero();
    for k in field.interior_nodes() {
        let x = grid.node(k);
        let u = field.values()[k];
        sup = sup.max((u - ball_solution(&x, oracle)).abs());
        if field.domain().boundary_distance(&x) <= two_eps {
            collar = collar.max(u);
        }
    }
    let hausdorff = t_list
        .iter()
        .map(|&t| {
            let approx = superlevel_set(field, t)?;
            let exact = match oracle.level_radius(t) {
                Some(r) => LevelSetMask::ball(grid, &oracle.center, r),
                None => LevelSetMask::from_predicate(grid, |_| false),
            };
            Ok((t.to_f64_lossy(), hausdorff_distance(&approx, &exact)?.to_f64_lossy()))
        })
        .collect::<Result<_>>()?;
    Ok(StudyRow {
        eps: cfg.eps.to_f64_lossy(),
        h: cfg.grid_h.to_f64_lossy(),
        iterations,
        sup_error: sup.to_f64_lossy(),
        boundary_max: collar.to_f64_lossy(),
        center_value: field.interpolate(&oracle.center)?.to_f64_lossy(),
        hausdorff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_solution_values() {
        let o2 = BallOracle::new([0.0; 2], 1.0, 1.0).unwrap();
        assert_eq!(ball_solution(&[0.0, 0.0], &o2), 0.5);
        assert_eq!(ball_solution(&[0.6, 0.8], &o2), 0.0);
        let o3 = BallOracle::new([0.0; 3], 2.0, 1.0).unwrap();
        assert_eq!(ball_solution(&[1.0, 0.0, 0.0], &o3), 0.75);
        assert!(ball_solution(&[3.0, 0.0, 0.0], &o3) < 0.0);
    }

    #[test]
    fn supersolution_bound_requires_strict_l() {
        assert_eq!(supersolution_bound(&[0.0, 0.0], 2.0, 2.0).unwrap(), 4.0);
        assert!(supersolution_bound(&[0.0, 0.0], 2.0, 1.0).is_err());
        let x = [0.3, 0.4];
        assert!(supersolution_bound(&x, 2.0, 3.0).unwrap() > supersolution_bound(&x, 2.0, 2.0).unwrap());
    }

    #[test]
    fn oracle_level_radius() {
        let o = BallOracle::new([0.0; 2], 1.0, 1.0).unwrap();
        assert!((o.level_radius(0.25).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(o.level_radius(0.5).is_none());
    }

    #[test]
    fn averaged_operator_identity_on_the_oracle() {
        // D²u = -L I / (N - 1): the equator average of ½<D²u v, v> is -C L.
        for l in [1.0, 2.5] {
            let h2 = [[-l, 0.0], [0.0, -l]];
            let g2 = Direction::<f64, 2>::normalize([0.3, -0.7]).unwrap();
            let a2 = equator_average(&g2, |v| 0.5 * quad_form(&h2, v), 8);
            assert!((a2 + 0.5 * l).abs() < 1e-12);
            let h3 = [[-l / 2.0, 0.0, 0.0], [0.0, -l / 2.0, 0.0], [0.0, 0.0, -l / 2.0]];
            let g3 = Direction::<f64, 3>::normalize([0.3, -0.7, 0.2]).unwrap();
            let a3 = equator_average(&g3, |v| 0.5 * quad_form(&h3, v), 64);
            assert!((a3 + 0.25 * l).abs() < 1e-12);
        }
    }

    #[test]
    fn operator_forms_on_simple_functions() {
        let iso = Quadratic { h: [[2.0, 0.0], [0.0, 2.0]], b: [0.0, 0.0] };
        let (f1, f2): (f64, f64) = mc_operator_residual(&iso, &[0.3, 0.1]).unwrap();
        assert!((f1 - 2.0).abs() < 1e-12 && (f2 - 2.0).abs() < 1e-12);
        let lin = Quadratic { h: [[0.0; 3]; 3], b: [1.0, 0.0, 0.0] };
        assert_eq!(mc_operator_residual(&lin, &[0.1, 0.2, 0.3]).unwrap(), (0.0, 0.0));
        assert!(matches!(
            mc_operator_residual(&iso, &[0.0, 0.0]),
            Err(Error::CriticalPoint { .. })
        ));
    }

    #[test]
    fn lemma_constants_have_zero_error() {
        for fam in LemmaFamily::ALL {
            let rows = verify_band_lemma::<f64, 3, _>(|_| 1.0, &[1e-2, 1e-3], fam, 32).unwrap();
            assert!(rows.iter().all(|r| r.error < 1e-12), "{fam:?}");
        }
    }

    #[test]
    fn lemma_odd_function_on_mirrored_band() {
        let rows = verify_band_lemma::<f64, 3, _>(|v| v[2], &[1e-2, 1e-3], LemmaFamily::Mirrored, 32).unwrap();
        assert!(rows.iter().all(|r| r.error < 1e-12 && r.drift.abs() < 1e-12 && r.hypothesis_ok));
    }

    #[test]
    fn lemma_drift_hypothesis_by_family() {
        let eps = [1e-2, 1e-3, 1e-4];
        for fam in [LemmaFamily::Mirrored, LemmaFamily::Enlarged] {
            for r in verify_band_lemma::<f64, 3, _>(|v| v[0] * v[0], &eps, fam, 48).unwrap() {
                assert!(r.hypothesis_ok, "{fam:?} {r:?}");
            }
            for r in verify_band_lemma::<f64, 2, _>(|v| v[0] * v[0], &eps, fam, 48).unwrap() {
                assert!(r.hypothesis_ok, "{fam:?} {r:?}");
            }
        }
        let tilted = verify_band_lemma::<f64, 3, _>(|v| v[0] * v[0], &eps, LemmaFamily::Tilted, 48).unwrap();
        assert!(tilted[0].hypothesis_ok && !tilted[2].hypothesis_ok);
        assert!(tilted.windows(2).all(|w| w[1].error < w[0].error));
    }

    #[test]
    fn superlevel_sets_are_nested_and_exclude_the_exterior() {
        let d = Domain::<f64, 2>::unit_ball();
        let g = Grid::covering(&d, 0.05, 0.1).unwrap();
        let f = ValueField::from_fn(g, d, |x| (1.0 - x[0] * x[0] - x[1] * x[1]) / 2.0 + 0.01);
        let m0 = superlevel_set(&f, 0.0).unwrap();
        assert_eq!(m0.count(), f.interior_nodes().len());
        let m1 = superlevel_set(&f, 0.1).unwrap();
        let m2 = superlevel_set(&f, 0.3).unwrap();
        assert!(m2.is_subset_of(&m1) && m1.is_subset_of(&m0));
        assert!(superlevel_set(&f, 0.6).unwrap().is_empty());
        assert!(superlevel_set(&f, -0.1).is_err());
    }

    #[test]
    fn hausdorff_of_single_nodes() {
        let g = Grid::<f64, 2>::new([0.0, 0.0], 0.1, [20, 20]).unwrap();
        let a = LevelSetMask::from_predicate(&g, |x| (x[0] - 0.2).abs() < 1e-9 && (x[1] - 0.3).abs() < 1e-9);
        let b = LevelSetMask::from_predicate(&g, |x| (x[0] - 0.5).abs() < 1e-9 && (x[1] - 0.7).abs() < 1e-9);
        assert_eq!((a.count(), b.count()), (1, 1));
        assert!((hausdorff_distance(&a, &b).unwrap() - 0.5f64).abs() < 1e-12);
        assert_eq!(hausdorff_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn hausdorff_empty_cases_and_grid_mismatch() {
        let g = Grid::new([0.0, 0.0], 0.1, [5, 5]).unwrap();
        let e = LevelSetMask::from_predicate(&g, |_| false);
        let f = LevelSetMask::from_predicate(&g, |_| true);
        assert_eq!(hausdorff_distance(&e, &e).unwrap(), 0.0);
        assert_eq!(hausdorff_distance(&e, &f).unwrap(), f64::INFINITY);
        let g2 = Grid::new([0.0, 0.0], 0.1, [6, 5]).unwrap();
        assert!(hausdorff_distance(&f, &LevelSetMask::from_predicate(&g2, |_| true)).is_err());
    }

    #[test]
    fn hausdorff_matches_brute_force() {
        let g = Grid::new([-1.0, -1.0, -1.0], 0.1, [21, 21, 21]).unwrap();
        let a = LevelSetMask::from_predicate(&g, |x| x[0] + 0.5 * x[1] > 0.6 || x[2] < -0.8);
        let b = LevelSetMask::ball(&g, &[0.1, 0.0, -0.2], 0.35);
        let pts = |m: &LevelSetMask<f64, 3>| -> Vec<[f64; 3]> {
            (0..g.len()).filter(|&k| m.mask()[k]).map(|k| g.node(k)).collect()
        };
        let (pa, pb) = (pts(&a), pts(&b));
        let directed = |p: &[[f64; 3]], q: &[[f64; 3]]| {
            p.iter()
                .map(|x| q.iter().map(|y| norm(&sub(x, y))).fold(f64::INFINITY, f64::min))
                .fold(0.0, f64::max)
        };
        let brute = directed(&pa, &pb).max(directed(&pb, &pa));
        assert!((hausdorff_distance(&a, &b).unwrap() - brute).abs() < 1e-9);
    }

    #[test]
    fn concentric_disks() {
        let g = Grid::<f64, 2>::new([-0.7, -0.7], 0.01, [141, 141]).unwrap();
        let a = LevelSetMask::ball(&g, &[0.0, 0.0], 0.5);
        let b = LevelSetMask::ball(&g, &[0.0, 0.0], 0.6);
        let d: f64 = hausdorff_distance(&a, &b).unwrap();
        assert!((d - 0.1).abs() <= 0.02, "{d}");
    }

    #[test]
    fn oracle_study_rejects_ellipses() {
        let d = Domain::<f64, 2>::ellipse([0.0; 2], [1.0, 0.5]).unwrap();
        let cfg = SolverConfig::new(0.2, 2).unwrap();
        assert!(convergence_study(&d, &[0.2], &cfg, &[], false).is_err());
    }
}
