//! The dynamic programming principle
//!
//! ```text
//! u(x) = max_A min_B ⨍_{A∩B} u(x + eps v) dσ(v) + eps² K   in the domain,
//! u(x) = 0                                                  outside,
//! ```
//!
//! with `A`, `B` ranging over caps of threshold `theta_eps` around a finite
//! set of axes, solved on a grid by monotone value iteration from `w_0 = 0`.
//!
//! Every band average at a node is assembled from one shared set of sample
//! directions. On the circle the directions are Gauss–Legendre nodes on the
//! elementary arcs cut out by all cap endpoints, so each cap and each band is
//! an exact union of elementary arcs and band sums come from prefix and
//! suffix sums. On the sphere the directions form an equal-area lattice and
//! bands are selected by membership masks. In both cases the operator only
//! adds and scales samples with nonnegative weights, so it is monotone in
//! floating point as well as in exact arithmetic.

use rayon::prelude::*;

use crate::domain::Domain;
use crate::error::{invalid, Error, Result};
use crate::field::{Grid, ValueField};
use crate::quadrature::GaussLegendre;
use crate::sphere::{axis_set, check_dim, constant_c, game_theta, Direction};
use crate::Scalar;

/// Default number of cap axes on the circle.
pub const DEFAULT_AXES_2D: usize = 64;
/// Default number of cap axes on the sphere.
pub const DEFAULT_AXES_3D: usize = 128;
/// Default Gauss–Legendre order per elementary arc (circle).
pub const DEFAULT_ORDER_2D: usize = 3;
/// Default number of height rings of the lattice (sphere).
pub const DEFAULT_ORDER_3D: usize = 24;
/// Default iteration limit.
pub const DEFAULT_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig<T> {
    pub eps: T,
    /// Payoff per round is `eps² k`.
    pub k: T,
    pub axis_count: usize,
    pub quad_order: usize,
    pub tol_iter: T,
    pub max_iter: usize,
    pub grid_h: T,
}

impl<T: Scalar> SolverConfig<T> {
    /// Defaults for dimension `n`: `k = C(n)`, `h = eps/2`,
    /// `tol_iter = eps² / 1000`.
    pub fn new(eps: T, n: usize) -> Result<Self> {
        if !(eps.is_finite() && eps > T::zero()) {
            return Err(invalid(format!("eps = {eps} must be positive")));
        }
        let (axis_count, quad_order) = match n {
            2 => (DEFAULT_AXES_2D, DEFAULT_ORDER_2D),
            3 => (DEFAULT_AXES_3D, DEFAULT_ORDER_3D),
            _ => return Err(invalid(format!("dimension {n} unsupported, expected 2 or 3"))),
        };
        Ok(Self {
            eps,
            k: constant_c(n)?,
            axis_count,
            quad_order,
            tol_iter: eps * eps * T::lit(1e-3),
            max_iter: DEFAULT_MAX_ITER,
            grid_h: eps / T::lit(2.0),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |x: T| x.is_finite() && x > T::zero();
        if !pos(self.eps) {
            return Err(invalid(format!("eps = {} must be positive", self.eps)));
        }
        if !(self.k.is_finite() && self.k >= T::zero()) {
            return Err(invalid(format!("k = {} must be nonnegative", self.k)));
        }
        if self.axis_count < 8 || !self.axis_count.is_multiple_of(2) {
            return Err(invalid(format!("axis_count = {} must be even and at least 8", self.axis_count)));
        }
        if self.quad_order == 0 {
            return Err(invalid("quad_order must be positive"));
        }
        if !pos(self.tol_iter) {
            return Err(invalid(format!("tol_iter = {} must be positive", self.tol_iter)));
        }
        if self.max_iter == 0 {
            return Err(invalid("max_iter must be positive"));
        }
        if !pos(self.grid_h) || self.grid_h > self.eps {
            return Err(invalid(format!("grid_h = {} must lie in (0, eps = {}]", self.grid_h, self.eps)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "eps": self.eps.to_f64_lossy(),
            "k": self.k.to_f64_lossy(),
            "axis_count": self.axis_count,
            "quad_order": self.quad_order,
            "tol_iter": self.tol_iter.to_f64_lossy(),
            "max_iter": self.max_iter,
            "grid_h": self.grid_h.to_f64_lossy(),
        })
    }
}

#[derive(Debug, Clone)]
enum Layout<T> {
    Circle {
        /// `seg_nodes[s]..seg_nodes[s + 1]` are the sample indices of arc `s`.
        seg_nodes: Vec<usize>,
        cap_first: Vec<usize>,
        cap_len: usize,
        /// For each pair `(i, j)`: the suffix start and prefix end of
        /// `A_i ∩ B_j` in the arc run of `A_i` (see [`band_pieces`]).
        pieces: Vec<[u32; 2]>,
    },
    Sphere {
        /// Row-major `Q x M`, entry 1 when sample `q` lies in cap `j`.
        member: Vec<T>,
        cap_nodes: Vec<Vec<u32>>,
    },
}

/// Per-thread buffers for [`DppOperator`] evaluations.
#[derive(Debug, Clone, Default)]
pub struct Scratch<T> {
    samples: Vec<T>,
    seg: Vec<T>,
    prefix: Vec<T>,
    suffix: Vec<T>,
    row: Vec<T>,
}

/// Outcome of one evaluation of the max-min at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Choice<T> {
    /// `max_i min_j avg_ij + eps² k`.
    pub value: T,
    /// Paul's maximizing axis (lowest index on ties).
    pub paul: usize,
    /// Carol's minimizing reply to `paul` (lowest index on ties).
    pub carol: usize,
}

/// The discretized DPP right-hand side for one configuration.
#[derive(Debug, Clone)]
pub struct DppOperator<T, const N: usize> {
    cfg: SolverConfig<T>,
    theta: T,
    axes: Vec<Direction<T, N>>,
    dirs: Vec<[T; N]>,
    weights: Vec<T>,
    /// `1 / sigma(A_i ∩ B_j)`, row-major in `(i, j)`.
    inv_measure: Vec<T>,
    layout: Layout<T>,
}

impl<T: Scalar, const N: usize> DppOperator<T, N> {
    pub fn new(cfg: &SolverConfig<T>) -> Result<Self> {
        check_dim::<N>()?;
        cfg.validate()?;
        let theta = game_theta(cfg.eps, N)?;
        let axes = axis_set::<T, N>(cfg.axis_count)?;
        if N == 2 {
            Self::circle(cfg, theta, axes)
        } else {
            Self::sphere(cfg, theta, axes)
        }
    }

    fn circle(cfg: &SolverConfig<T>, theta: T, axes: Vec<Direction<T, N>>) -> Result<Self> {
        use std::f64::consts::TAU;
        let m = axes.len();
        let th = theta.to_f64_lossy();
        let half = std::f64::consts::FRAC_PI_2 + th.asin();
        let wrap = |x: f64| x.rem_euclid(TAU);
        let center = |i: usize| TAU * i as f64 / m as f64;

        let mut cuts: Vec<f64> = (0..m).flat_map(|i| [wrap(center(i) - half), wrap(center(i) + half)]).collect();
        cuts.sort_by(|a, b| a.partial_cmp(b).expect("finite angles"));
        let tol = 1e-12;
        let mut bp: Vec<f64> = Vec::with_capacity(cuts.len());
        for c in cuts {
            if bp.last().is_none_or(|&l| c - l > tol) {
                bp.push(c);
            }
        }
        if bp.len() > 1 && bp[0] + TAU - bp[bp.len() - 1] <= tol {
            bp.pop();
        }
        let s = bp.len();
        let nearest = |x: f64| -> usize {
            let x = wrap(x);
            (0..s)
                .min_by(|&a, &b| {
                    let da = (bp[a] - x).abs().min(TAU - (bp[a] - x).abs());
                    let db = (bp[b] - x).abs().min(TAU - (bp[b] - x).abs());
                    da.partial_cmp(&db).expect("finite")
                })
                .expect("breakpoints exist")
        };
        let cap_first: Vec<usize> = (0..m).map(|i| nearest(center(i) - half)).collect();
        let lens: Vec<usize> = (0..m).map(|i| (nearest(center(i) + half) + s - cap_first[i]) % s).collect();
        let cap_len = lens[0];
        if cap_len == 0 || lens.iter().any(|&l| l != cap_len) {
            return Err(Error::Invariant("caps do not split into equal runs of elementary arcs".into()));
        }

        let gl = GaussLegendre::get(cfg.quad_order);
        let mut dirs = Vec::new();
        let mut weights = Vec::new();
        let mut seg_nodes = vec![0usize];
        let mut seg_len = Vec::with_capacity(s);
        for k in 0..s {
            let a = bp[k];
            let b = if k + 1 < s { bp[k + 1] } else { bp[0] + TAU };
            seg_len.push(b - a);
            for (phi, w) in gl.on_interval(a, b) {
                let mut v = [T::zero(); N];
                v[0] = T::lit(phi.cos());
                v[1] = T::lit(phi.sin());
                dirs.push(v);
                weights.push(T::lit(w));
            }
            seg_nodes.push(dirs.len());
        }

        // Band measures from the same prefix/suffix bookkeeping as the sums.
        let mut inv_measure = Vec::with_capacity(m * m);
        let mut pieces = Vec::with_capacity(m * m);
        let mut pre = vec![0.0; cap_len + 1];
        let mut suf = vec![0.0; cap_len + 1];
        let seg2: Vec<f64> = seg_len.iter().chain(&seg_len).copied().collect();
        for i in 0..m {
            run_sums(&seg2, [cap_first[i]], cap_len, &mut pre, &mut suf);
            for j in 0..m {
                let [a, b] = band_pieces(cap_first[i], cap_first[j], cap_len, s);
                let mu = suf[a as usize] + pre[b as usize];
                if !(mu > 0.0) {
                    return Err(Error::DegenerateRegion);
                }
                inv_measure.push(T::lit(1.0 / mu));
                pieces.push([a, b]);
            }
        }
        Ok(Self {
            cfg: *cfg,
            theta,
            axes,
            dirs,
            weights,
            inv_measure,
            layout: Layout::Circle { seg_nodes, cap_first, cap_len, pieces },
        })
    }

    fn sphere(cfg: &SolverConfig<T>, theta: T, axes: Vec<Direction<T, N>>) -> Result<Self> {
        use std::f64::consts::{PI, TAU};
        let m = axes.len();
        // Equal-area lattice: uniform heights (Archimedes) times staggered
        // uniform azimuths.
        let nz = cfg.quad_order.max(2);
        let nphi = 2 * nz;
        let w = 4.0 * PI / (nz * nphi) as f64;
        let mut dirs = Vec::with_capacity(nz * nphi);
        for a in 0..nz {
            let z = -1.0 + (a as f64 + 0.5) * 2.0 / nz as f64;
            let r = (1.0 - z * z).sqrt();
            let shift = if a % 2 == 0 { 0.0 } else { 0.5 };
            for b in 0..nphi {
                let phi = TAU * (b as f64 + shift) / nphi as f64;
                let mut v = [T::zero(); N];
                v[0] = T::lit(r * phi.cos());
                v[1] = T::lit(r * phi.sin());
                v[2] = T::lit(z);
                dirs.push(v);
            }
        }
        let q = dirs.len();
        let weights = vec![T::lit(w); q];
        let mut member = vec![T::zero(); q * m];
        let mut cap_nodes = vec![Vec::new(); m];
        for (k, v) in dirs.iter().enumerate() {
            for (j, ax) in axes.iter().enumerate() {
                if ax.dot(v) >= -theta {
                    member[k * m + j] = T::one();
                    cap_nodes[j].push(k as u32);
                }
            }
        }
        let mut inv_measure = Vec::with_capacity(m * m);
        for i in 0..m {
            for j in 0..m {
                let count = cap_nodes[i].iter().filter(|&&k| member[k as usize * m + j] == T::one()).count();
                if count == 0 {
                    return Err(invalid(format!(
                        "lattice of {nz} rings misses the band of axes {i} and {j}; raise quad_order"
                    )));
                }
                inv_measure.push(T::one() / (T::lit(w) * T::from_usize_lossy(count)));
            }
        }
        Ok(Self {
            cfg: *cfg,
            theta,
            axes,
            dirs,
            weights,
            inv_measure,
            layout: Layout::Sphere { member, cap_nodes },
        })
    }

    pub fn config(&self) -> &SolverConfig<T> {
        &self.cfg
    }

    pub fn theta(&self) -> T {
        self.theta
    }

    pub fn axes(&self) -> &[Direction<T, N>] {
        &self.axes
    }

    /// The shared sample directions.
    pub fn directions(&self) -> &[[T; N]] {
        &self.dirs
    }

    pub fn scratch(&self) -> Scratch<T> {
        let m = self.axes.len();
        let (s, l) = match &self.layout {
            Layout::Circle { seg_nodes, cap_len, .. } => (2 * (seg_nodes.len() - 1), BLOCK * (*cap_len + 1)),
            Layout::Sphere { .. } => (0, 0),
        };
        Scratch {
            samples: vec![T::zero(); self.dirs.len()],
            seg: vec![T::zero(); s],
            prefix: vec![T::zero(); l],
            suffix: vec![T::zero(); l],
            row: vec![T::zero(); m],
        }
    }

    /// Band average for every pair `(i, j)` given samples at the shared
    /// directions, reduced to the max-min with payoff added.
    fn reduce(&self, sc: &mut Scratch<T>) -> Choice<T> {
        let m = self.axes.len();
        let mut best = Choice { value: T::neg_infinity(), paul: 0, carol: 0 };
        match &self.layout {
            Layout::Circle { seg_nodes, cap_first, cap_len, pieces } => {
                let s = seg_nodes.len() - 1;
                let l = *cap_len;
                for k in 0..s {
                    let mut acc = T::zero();
                    for q in seg_nodes[k]..seg_nodes[k + 1] {
                        acc = acc + self.weights[q] * sc.samples[q];
                    }
                    sc.seg[k] = acc;
                    sc.seg[k + s] = acc;
                }
                // Values only; Carol's reply is recovered for the winner below.
                let w = l + 1;
                let mut i0 = 0;
                while i0 < m {
                    let b = (m - i0).min(BLOCK);
                    if b == BLOCK {
                        let firsts: [usize; BLOCK] = std::array::from_fn(|t| cap_first[i0 + t]);
                        run_sums(&sc.seg, firsts, l, &mut sc.prefix, &mut sc.suffix);
                    } else {
                        for t in 0..b {
                            let r = t * w..(t + 1) * w;
                            run_sums(&sc.seg, [cap_first[i0 + t]], l, &mut sc.prefix[r.clone()], &mut sc.suffix[r]);
                        }
                    }
                    for t in 0..b {
                        let i = i0 + t;
                        let pre = &sc.prefix[t * w..(t + 1) * w];
                        let suf = &sc.suffix[t * w..(t + 1) * w];
                        let inv = &self.inv_measure[i * m..(i + 1) * m];
                        let worst = pieces[i * m..(i + 1) * m]
                            .iter()
                            .zip(inv)
                            .map(|(&[a, c], &iv)| (suf[a as usize] + pre[c as usize]) * iv)
                            .fold(T::infinity(), |acc, v| if v < acc { v } else { acc });
                        if worst > best.value {
                            best.value = worst;
                            best.paul = i;
                        }
                    }
                    i0 += b;
                }
                let i = best.paul;
                run_sums(&sc.seg, [cap_first[i]], l, &mut sc.prefix[..w], &mut sc.suffix[..w]);
                let inv = &self.inv_measure[i * m..(i + 1) * m];
                let mut worst = T::infinity();
                for (j, (&[a, c], &iv)) in pieces[i * m..(i + 1) * m].iter().zip(inv).enumerate() {
                    let v = (sc.suffix[a as usize] + sc.prefix[c as usize]) * iv;
                    if v < worst {
                        worst = v;
                        best.carol = j;
                    }
                }
            }
            Layout::Sphere { member, cap_nodes } => {
                for i in 0..m {
                    sc.row.iter_mut().for_each(|r| *r = T::zero());
                    for &q in &cap_nodes[i] {
                        let f = sc.samples[q as usize];
                        let mrow = &member[q as usize * m..(q as usize + 1) * m];
                        for (r, &mk) in sc.row.iter_mut().zip(mrow) {
                            *r = *r + f * mk;
                        }
                    }
                    let mut worst = T::infinity();
                    let mut arg = 0;
                    for j in 0..m {
                        let v = sc.row[j] * self.weights[0] * self.inv_measure[i * m + j];
                        if v < worst {
                            worst = v;
                            arg = j;
                        }
                    }
                    if worst > best.value {
                        best = Choice { value: worst, paul: i, carol: arg };
                    }
                }
            }
        }
        best.value = best.value + self.cfg.eps * self.cfg.eps * self.cfg.k;
        best
    }

    /// Band averages as an `M x M` row-major table, without payoff.
    pub fn band_averages(&self, field: &ValueField<T, N>, x: &[T; N]) -> Result<Vec<T>> {
        let mut sc = self.scratch();
        self.sample_point(field, x, &mut sc)?;
        let m = self.axes.len();
        let mut out = vec![T::zero(); m * m];
        for i in 0..m {
            for j in 0..m {
                let mut sum = T::zero();
                for (q, v) in self.dirs.iter().enumerate() {
                    if self.axes[i].dot(v) >= -self.theta && self.axes[j].dot(v) >= -self.theta {
                        sum = sum + self.weights[q] * sc.samples[q];
                    }
                }
                out[i * m + j] = sum * self.inv_measure[i * m + j];
            }
        }
        Ok(out)
    }

    fn sample_point(&self, field: &ValueField<T, N>, x: &[T; N], sc: &mut Scratch<T>) -> Result<()> {
        let eps = self.cfg.eps;
        for (s, v) in sc.samples.iter_mut().zip(&self.dirs) {
            let p: [T; N] = std::array::from_fn(|i| x[i] + eps * v[i]);
            *s = field.interpolate(&p)?;
        }
        Ok(())
    }

    /// Max-min and the optimal axes at an arbitrary point, evaluating the
    /// field by [`ValueField::interpolate`].
    pub fn choice_at(&self, field: &ValueField<T, N>, x: &[T; N]) -> Result<Choice<T>> {
        let mut sc = self.scratch();
        self.sample_point(field, x, &mut sc)?;
        Ok(self.reduce(&mut sc))
    }

    /// Carol's minimax axis `argmin_j max_i avg_ij` at `x` (lowest index on ties).
    pub fn carol_minimax_at(&self, field: &ValueField<T, N>, x: &[T; N]) -> Result<usize> {
        let table = self.band_averages(field, x)?;
        let m = self.axes.len();
        let mut best = (T::infinity(), 0);
        for j in 0..m {
            let worst = (0..m).map(|i| table[i * m + j]).fold(T::neg_infinity(), |a, b| a.max(b));
            if worst < best.0 {
                best = (worst, j);
            }
        }
        Ok(best.1)
    }

    /// Precomputed interpolation stencils for a grid (see [`Sweep`]).
    pub fn sweep(&self, field: &ValueField<T, N>) -> Result<Sweep<T, N>> {
        Sweep::new(self, field)
    }
}

/// Caps handled together in [`run_sums`] so their dependency chains overlap.
const BLOCK: usize = 4;

/// Prefix sums `pre[r]` over the first `r` arcs of a cap and suffix sums
/// `suf[r]` over its arcs `r..len`, both without subtraction, for `B` caps
/// at once (cap `t` uses `pre[t * (len + 1)..]`). `seg` holds the arc values
/// twice in a row so runs never wrap.
fn run_sums<T: Scalar, const B: usize>(seg: &[T], firsts: [usize; B], len: usize, pre: &mut [T], suf: &mut [T]) {
    let runs: [&[T]; B] = std::array::from_fn(|t| &seg[firsts[t]..firsts[t] + len]);
    let mut chunks = pre.chunks_exact_mut(len + 1);
    let pre: [&mut [T]; B] = std::array::from_fn(|_| chunks.next().expect("scratch sized for a block"));
    let mut chunks = suf.chunks_exact_mut(len + 1);
    let suf: [&mut [T]; B] = std::array::from_fn(|_| chunks.next().expect("scratch sized for a block"));
    let mut acc = [T::zero(); B];
    for t in 0..B {
        pre[t][0] = T::zero();
    }
    for r in 0..len {
        for t in 0..B {
            acc[t] = acc[t] + runs[t][r];
            pre[t][r + 1] = acc[t];
        }
    }
    let mut acc = [T::zero(); B];
    for t in 0..B {
        suf[t][len] = T::zero();
    }
    for r in (0..len).rev() {
        for t in 0..B {
            acc[t] = acc[t] + runs[t][r];
            suf[t][r] = acc[t];
        }
    }
}

/// `A_i ∩ B_j` for two caps of equal arc count `len` starting at arcs
/// `first_i`, `first_j` of `s`, as `[a, b]` with the band sum equal to
/// `suf[a] + pre[b]`. In coordinates relative to `A_i` the cap `B_j` is the
/// cyclic run `[p1, p1 + len)`; its part inside `[0, len)` is the suffix
/// `[p1, len)` (empty when `a = len`) and, when it wraps, the prefix
/// `[0, p1 + len - s)` (empty when `b = 0`). Adding an empty sum adds an
/// exact zero.
fn band_pieces(first_i: usize, first_j: usize, len: usize, s: usize) -> [u32; 2] {
    let p1 = (first_j + s - first_i) % s;
    let a = if p1 < len { p1 } else { len };
    let b = (p1 + len).saturating_sub(s);
    [a as u32, b as u32]
}

/// Shared-direction stencils on a fixed grid: the sample `x + eps v_q` at a
/// node `x` falls in the same relative cell with the same weights for every
/// node, so only the exterior test depends on `x`.
#[derive(Debug, Clone)]
pub struct Sweep<T, const N: usize> {
    nodes: Vec<usize>,
    positions: Vec<[T; N]>,
    offsets: Vec<[isize; 8]>,
    corner_weights: Vec<[T; 8]>,
    corners: usize,
}

impl<T: Scalar, const N: usize> Sweep<T, N> {
    fn new(op: &DppOperator<T, N>, field: &ValueField<T, N>) -> Result<Self> {
        let grid = field.grid();
        let h = grid.spacing();
        let eps = op.cfg.eps;
        let strides = grid.strides();
        let corners = 1usize << N;
        let nodes = field.interior_nodes();
        let positions: Vec<[T; N]> = nodes.iter().map(|&k| grid.node(k)).collect();
        // The stencil must stay inside the grid from every interior node.
        for &k in &nodes {
            let idx = grid.multi(k);
            let reach = (eps / h).ceil().to_usize().unwrap_or(usize::MAX) + 1;
            if (0..N).any(|i| idx[i] < reach || idx[i] + reach >= grid.shape()[i]) {
                return Err(invalid("grid margin is narrower than eps"));
            }
        }
        let mut offsets = Vec::with_capacity(op.dirs.len());
        let mut corner_weights = Vec::with_capacity(op.dirs.len());
        for v in &op.dirs {
            let mut base = [0isize; N];
            let mut frac = [T::zero(); N];
            for i in 0..N {
                let d = eps * v[i] / h;
                let f = d.floor();
                base[i] = f.to_isize().expect("finite offset");
                frac[i] = d - f;
            }
            let mut off = [0isize; 8];
            let mut wts = [T::zero(); 8];
            for c in 0..corners {
                let mut w = T::one();
                let mut o = 0isize;
                for i in 0..N {
                    let bit = (c >> i & 1) as isize;
                    o += (base[i] + bit) * strides[i] as isize;
                    w = w * if bit == 1 { frac[i] } else { T::one() - frac[i] };
                }
                off[c] = o;
                wts[c] = w;
            }
            offsets.push(off);
            corner_weights.push(wts);
        }
        Ok(Self { nodes, positions, offsets, corner_weights, corners })
    }

    /// Interior node indices in sweep order.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    fn sample_node(&self, op: &DppOperator<T, N>, field: &ValueField<T, N>, n: usize, sc: &mut Scratch<T>) {
        let k = self.nodes[n] as isize;
        let x = &self.positions[n];
        let vals = field.values();
        let domain = field.domain();
        let eps = op.cfg.eps;
        for (q, v) in op.dirs.iter().enumerate() {
            let p: [T; N] = std::array::from_fn(|i| x[i] + eps * v[i]);
            sc.samples[q] = if domain.contains(&p) {
                let off = &self.offsets[q];
                let w = &self.corner_weights[q];
                let mut acc = T::zero();
                for c in 0..self.corners {
                    acc = acc + w[c] * vals[(k + off[c]) as usize];
                }
                acc
            } else {
                T::zero()
            };
        }
    }

    /// Applies the operator at every interior node of `field`.
    pub fn apply(&self, op: &DppOperator<T, N>, field: &ValueField<T, N>) -> Vec<T> {
        let mut out = Vec::with_capacity(self.nodes.len());
        (0..self.nodes.len())
            .into_par_iter()
            .map_init(
                || op.scratch(),
                |sc, n| {
                    self.sample_node(op, field, n, sc);
                    op.reduce(sc).value
                },
            )
            .collect_into_vec(&mut out);
        out
    }
}

/// Right-hand side of the DPP at one point:
/// `max_i min_j ⨍_{A_i ∩ B_j} field(x + eps v) + eps² k`.
pub fn bellman_rhs<T: Scalar, const N: usize>(field: &ValueField<T, N>, x: &[T; N], cfg: &SolverConfig<T>) -> Result<T> {
    Ok(DppOperator::new(cfg)?.choice_at(field, x)?.value)
}

/// A converged (or interrupted) value iteration.
#[derive(Debug, Clone)]
pub struct Solution<T, const N: usize> {
    pub field: ValueField<T, N>,
    pub iterations: usize,
    /// Sup-norm of the last update.
    pub increment: T,
    pub config: SolverConfig<T>,
}

#[derive(Debug, thiserror::Error)]
pub enum SolveError<T: Scalar, const N: usize> {
    #[error(transparent)]
    Failed(#[from] Error),
    #[error("value iteration stopped after {} iterations with increment {}", .0.iterations, .0.increment)]
    NonConvergence(Box<Solution<T, N>>),
}

/// Progress report passed to the observer of [`value_iteration_observed`].
#[derive(Debug, Clone, Copy)]
pub struct Progress<T> {
    pub iteration: usize,
    pub increment: T,
}

/// Value iteration from `w_0 = 0` on a grid covering `domain` with margin `eps`.
pub fn value_iteration<T: Scalar, const N: usize>(
    domain: &Domain<T, N>,
    cfg: &SolverConfig<T>,
) -> Result<Solution<T, N>, SolveError<T, N>> {
    value_iteration_observed(domain, cfg, |_, _| {})
}

/// As [`value_iteration`], calling `observer` with every new iterate.
///
/// Each iterate is checked to be nodewise no smaller than the previous one,
/// exactly; a decrease is reported as [`Error::Invariant`].
pub fn value_iteration_observed<T: Scalar, const N: usize, F>(
    domain: &Domain<T, N>,
    cfg: &SolverConfig<T>,
    mut observer: F,
) -> Result<Solution<T, N>, SolveError<T, N>>
where
    F: FnMut(&Progress<T>, &ValueField<T, N>),
{
    let op = DppOperator::new(cfg)?;
    let grid = Grid::covering(domain, cfg.grid_h, cfg.eps)?;
    let mut field = ValueField::zeros(grid, *domain);
    let sweep = op.sweep(&field)?;
    let mut increment = T::infinity();
    for it in 1..=cfg.max_iter {
        let next = sweep.apply(&op, &field);
        increment = T::zero();
        let vals = field.values_mut();
        for (&k, &v) in sweep.nodes().iter().zip(&next) {
            let d = v - vals[k];
            if !(d >= T::zero()) {
                return Err(Error::Invariant(format!("iterate {it} decreased at node {k} by {}", -d)).into());
            }
            increment = increment.max(d);
            vals[k] = v;
        }
        observer(&Progress { iteration: it, increment }, &field);
        if increment < cfg.tol_iter {
            return Ok(Solution { field, iterations: it, increment, config: *cfg });
        }
    }
    Err(SolveError::NonConvergence(Box::new(Solution {
        field,
        iterations: cfg.max_iter,
        increment,
        config: *cfg,
    })))
}

/// `field(x) - rhs(field)(x)` at every interior node, in sweep order.
fn defects<T: Scalar, const N: usize>(field: &ValueField<T, N>, cfg: &SolverConfig<T>) -> Result<(Vec<usize>, Vec<T>)> {
    let op = DppOperator::new(cfg)?;
    let sweep = op.sweep(field)?;
    let rhs = sweep.apply(&op, field);
    let d = sweep.nodes().iter().zip(&rhs).map(|(&k, &r)| field.values()[k] - r).collect();
    Ok((sweep.nodes().to_vec(), d))
}

/// `max_x |field(x) - rhs(field)(x)|` over interior nodes.
pub fn dpp_residual<T: Scalar, const N: usize>(field: &ValueField<T, N>, cfg: &SolverConfig<T>) -> Result<T> {
    let (_, d) = defects(field, cfg)?;
    Ok(d.into_iter().fold(T::zero(), |a, b| a.max(b.abs())))
}

/// Default slack of [`check_dpp_supersolution`].
pub const SUPERSOLUTION_SLACK: f64 = 1e-9;

/// Whether `field >= rhs(field) - 1e-9` at all interior nodes and
/// `field >= 0` everywhere; returns the worst violation (0 if none).
pub fn check_dpp_supersolution<T: Scalar, const N: usize>(
    field: &ValueField<T, N>,
    cfg: &SolverConfig<T>,
) -> Result<(bool, T)> {
    check_dpp_supersolution_with_slack(field, cfg, T::lit(SUPERSOLUTION_SLACK))
}

pub fn check_dpp_supersolution_with_slack<T: Scalar, const N: usize>(
    field: &ValueField<T, N>,
    cfg: &SolverConfig<T>,
    slack: T,
) -> Result<(bool, T)> {
    let (_, d) = defects(field, cfg)?;
    let mut worst = d.into_iter().fold(T::zero(), |a, b| a.max(-b));
    worst = field.values().iter().fold(worst, |a, &v| a.max(-v));
    Ok((worst <= slack, worst))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::{intersect_caps, region_average, Cap};

    fn disk_cfg(eps: f64) -> SolverConfig<f64> {
        let mut c = SolverConfig::new(eps, 2).unwrap();
        c.axis_count = 16;
        c
    }

    #[test]
    fn config_validation() {
        let mut c = disk_cfg(0.1);
        assert!(c.validate().is_ok());
        c.grid_h = 0.2;
        assert!(c.validate().is_err());
        let mut c = disk_cfg(0.1);
        c.axis_count = 7;
        assert!(c.validate().is_err());
        assert!(SolverConfig::new(-1.0f64, 2).is_err());
        assert!(SolverConfig::new(0.1f64, 4).is_err());
    }

    #[test]
    fn defaults() {
        let c = SolverConfig::new(0.1f64, 2).unwrap();
        assert_eq!(c.k, 0.5);
        assert_eq!(c.grid_h, 0.05);
        assert!((c.tol_iter - 1e-5).abs() < 1e-18);
        assert_eq!(SolverConfig::new(0.1f64, 3).unwrap().k, 0.25);
    }

    #[test]
    fn circle_band_measures_are_exact() {
        let cfg = disk_cfg(0.04);
        let op = DppOperator::<f64, 2>::new(&cfg).unwrap();
        let m = cfg.axis_count;
        for i in [0, 3, 7] {
            for j in 0..m {
                let r = intersect_caps(
                    &Cap::new(op.axes[i], op.theta).unwrap(),
                    &Cap::new(op.axes[j], op.theta).unwrap(),
                )
                .unwrap();
                let exact = r.measure();
                assert!((1.0 / op.inv_measure[i * m + j] - exact).abs() < 1e-12, "({i},{j})");
            }
        }
    }

    #[test]
    fn band_sums_match_direct_quadrature() {
        // Smooth field sampled through the shared nodes versus a
        // high-order rule on each band.
        let mut cfg = disk_cfg(0.1);
        cfg.quad_order = 8;
        let op = DppOperator::<f64, 2>::new(&cfg).unwrap();
        let f = |v: &[f64; 2]| (1.3 * v[0] - 0.4 * v[1]).exp();
        let mut sc = op.scratch();
        for (s, v) in sc.samples.iter_mut().zip(&op.dirs) {
            *s = f(v);
        }
        let m = cfg.axis_count;
        let mut brute = Choice { value: f64::NEG_INFINITY, paul: 0, carol: 0 };
        for i in 0..m {
            let mut worst = (f64::INFINITY, 0);
            for j in 0..m {
                let r = intersect_caps(
                    &Cap::new(op.axes[i], op.theta).unwrap(),
                    &Cap::new(op.axes[j], op.theta).unwrap(),
                )
                .unwrap();
                let v = region_average(&r, f, 48).unwrap();
                if v < worst.0 - 1e-12 {
                    worst = (v, j);
                }
            }
            if worst.0 > brute.value + 1e-12 {
                brute = Choice { value: worst.0, paul: i, carol: worst.1 };
            }
        }
        let got = op.reduce(&mut sc);
        assert!((got.value - cfg.eps * cfg.eps * cfg.k - brute.value).abs() < 1e-10, "{got:?} {brute:?}");
        assert_eq!((got.paul, got.carol), (brute.paul, brute.carol));
    }

    #[test]
    fn zero_field_gives_payoff() {
        let cfg = disk_cfg(0.1);
        let d = Domain::<f64, 2>::unit_ball();
        let g = Grid::covering(&d, cfg.grid_h, cfg.eps).unwrap();
        let f = ValueField::zeros(g, d);
        let r = bellman_rhs(&f, &[0.2, 0.1], &cfg).unwrap();
        assert!((r - 0.005).abs() < 1e-15);
        assert!((dpp_residual(&f, &cfg).unwrap() - 0.005).abs() < 1e-15);
        let (ok, worst) = check_dpp_supersolution(&f, &cfg).unwrap();
        assert!(!ok && (worst - 0.005).abs() < 1e-15);
    }

    #[test]
    fn constant_field_deep_inside() {
        let cfg = disk_cfg(0.1);
        let d = Domain::<f64, 2>::unit_ball();
        let g = Grid::covering(&d, cfg.grid_h, cfg.eps).unwrap();
        let f = ValueField::from_fn(g, d, |_| 0.7);
        let r = bellman_rhs(&f, &[0.1, -0.2], &cfg).unwrap();
        assert!((r - 0.705).abs() < 1e-13);
    }

    #[test]
    fn first_iterate_is_payoff() {
        let mut cfg = disk_cfg(0.2);
        cfg.max_iter = 1;
        let d = Domain::<f64, 2>::unit_ball();
        let Err(SolveError::NonConvergence(sol)) = value_iteration(&d, &cfg) else {
            panic!("one iteration cannot converge");
        };
        for k in sol.field.interior_nodes() {
            assert!((sol.field.values()[k] - 0.02).abs() < 1e-15);
        }
    }

    #[test]
    fn converged_field_has_small_residual() {
        let cfg = disk_cfg(0.2);
        let d = Domain::<f64, 2>::unit_ball();
        let sol = value_iteration(&d, &cfg).unwrap();
        let r = dpp_residual(&sol.field, &cfg).unwrap();
        assert!(r < cfg.tol_iter, "{r}");
        assert!(check_dpp_supersolution_with_slack(&sol.field, &cfg, cfg.tol_iter).unwrap().0);
    }

    #[test]
    fn solver_is_deterministic() {
        let cfg = disk_cfg(0.25);
        let d = Domain::<f64, 2>::ellipse([0.1, 0.0], [1.0, 0.6]).unwrap();
        let a = value_iteration(&d, &cfg).unwrap();
        let b = value_iteration(&d, &cfg).unwrap();
        assert_eq!(a.field.values(), b.field.values());
    }

    #[test]
    fn sphere_operator_is_consistent() {
        let mut cfg = SolverConfig::new(0.3, 3).unwrap();
        cfg.axis_count = 16;
        cfg.quad_order = 16;
        let op = DppOperator::<f64, 3>::new(&cfg).unwrap();
        let mut sc = op.scratch();
        sc.samples.iter_mut().for_each(|s| *s = 1.0);
        let c = op.reduce(&mut sc);
        assert!((c.value - 1.0 - 0.09 * 0.25).abs() < 1e-12);
    }

    #[test]
    fn sphere_lattice_too_coarse_is_reported() {
        let mut cfg = SolverConfig::new(0.01, 3).unwrap();
        cfg.axis_count = 16;
        cfg.quad_order = 2;
        assert!(DppOperator::<f64, 3>::new(&cfg).is_err());
    }

    #[test]
    fn small_ball_in_three_dimensions() {
        let mut cfg = SolverConfig::new(0.25, 3).unwrap();
        cfg.axis_count = 16;
        cfg.quad_order = 12;
        let d = Domain::<f64, 3>::unit_ball();
        let sol = value_iteration(&d, &cfg).unwrap();
        let u0 = sol.field.interpolate(&[0.0; 3]).unwrap();
        // Oracle (1 - |x|²)/4 gives 0.25 at the center.
        assert!(u0 > 0.1 && u0 < 0.4, "{u0}");
    }
}
