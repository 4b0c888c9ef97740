//! Monte Carlo simulation of the game.
//!
//! Each round both players name a cap; the token moves by `eps v` with `v`
//! uniform on the intersection of the two caps, and the game stops at the
//! first position outside the domain. Carol pays `eps² K` per round.
//!
//! Episode `i` of a run with master seed `s` draws from a ChaCha8 stream
//! seeded with `s` and stream number `i`, so estimates are reproducible and
//! independent of thread scheduling. Aggregates are computed from integer
//! round counts, which makes them exact and order independent.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::domain::Domain;
use crate::error::{invalid, Error, Result};
use crate::field::ValueField;
use crate::solver::DppOperator;
use crate::sphere::{constant_c, game_theta, intersect_caps, sample_uniform, Cap, Direction};
use crate::vector::{norm, norm_sq, scale, sub};
use crate::Scalar;

/// Default bound on the number of rounds of one episode.
pub const MAX_ROUNDS: u64 = 100_000_000;
/// Gradients shorter than this are treated as zero.
pub const CRITICAL_GRADIENT: f64 = 1e-10;

/// Rules of one game: domain, step, payoff constant and the cap threshold
/// `theta_eps` that makes a cap exceed half the sphere by `sqrt(eps)`.
#[derive(Debug, Clone)]
pub struct Game<T, const N: usize> {
    domain: Domain<T, N>,
    eps: T,
    k: T,
    theta: T,
    max_rounds: u64,
}

impl<T: Scalar, const N: usize> Game<T, N> {
    pub fn new(domain: Domain<T, N>, eps: T, k: T) -> Result<Self> {
        if !(k.is_finite() && k >= T::zero()) {
            return Err(invalid(format!("k = {k} must be nonnegative")));
        }
        let theta = game_theta(eps, N)?;
        Ok(Self { domain, eps, k, theta, max_rounds: MAX_ROUNDS })
    }

    /// Game with `K = C(N)`.
    pub fn with_default_k(domain: Domain<T, N>, eps: T) -> Result<Self> {
        Self::new(domain, eps, constant_c(N)?)
    }

    pub fn with_max_rounds(mut self, max_rounds: u64) -> Self {
        self.max_rounds = max_rounds.max(1);
        self
    }

    pub fn domain(&self) -> &Domain<T, N> {
        &self.domain
    }

    pub fn eps(&self) -> T {
        self.eps
    }

    pub fn k(&self) -> T {
        self.k
    }

    pub fn theta(&self) -> T {
        self.theta
    }

    /// Cap of the game threshold around `axis`.
    pub fn cap(&self, axis: Direction<T, N>) -> Cap<T, N> {
        Cap::new(axis, self.theta).expect("game threshold lies in [0, 1)")
    }

    pub fn payoff(&self, rounds: u64) -> T {
        self.eps * self.eps * self.k * T::lit(rounds as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Player {
    Paul,
    Carol,
}

/// A cap chosen by a strategy; `fallback` marks a choice made by the
/// default rule at a degenerate position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapChoice<T, const N: usize> {
    pub cap: Cap<T, N>,
    pub fallback: bool,
}

/// A Markov strategy: the cap depends on the current position (and
/// possibly the round number) only.
pub trait Strategy<T: Scalar, const N: usize>: Send + Sync {
    fn choose(&self, game: &Game<T, N>, x: &[T; N], round: u64) -> Result<CapChoice<T, N>>;

    fn name(&self) -> String;
}

fn plain<T: Scalar, const N: usize>(game: &Game<T, N>, axis: Direction<T, N>) -> CapChoice<T, N> {
    CapChoice { cap: game.cap(axis), fallback: false }
}

fn fallback<T: Scalar, const N: usize>(game: &Game<T, N>) -> CapChoice<T, N> {
    CapChoice { cap: game.cap(Direction::basis(0)), fallback: true }
}

/// Caps around the estimated gradient `g` of a value field: Paul takes
/// `{<v, g> >= -theta}`, Carol `{<v, g> <= theta}`, so the token moves in the
/// band transversal to `g`.
#[derive(Debug, Clone, Copy)]
pub struct GradientCap<'a, T, const N: usize> {
    field: &'a ValueField<T, N>,
    player: Player,
}

pub fn gradient_cap_strategy<T: Scalar, const N: usize>(
    field: &ValueField<T, N>,
    player: Player,
) -> GradientCap<'_, T, N> {
    GradientCap { field, player }
}

impl<T: Scalar, const N: usize> Strategy<T, N> for GradientCap<'_, T, N> {
    fn choose(&self, game: &Game<T, N>, x: &[T; N], _round: u64) -> Result<CapChoice<T, N>> {
        let g = self.field.gradient(x)?;
        let n = norm(&g);
        if !(n >= T::lit(CRITICAL_GRADIENT)) {
            return Ok(fallback(game));
        }
        let s = match self.player {
            Player::Paul => T::one() / n,
            Player::Carol => -T::one() / n,
        };
        Ok(plain(game, Direction::normalize(scale(&g, s))?))
    }

    fn name(&self) -> String {
        format!("gradient-cap/{:?}", self.player).to_lowercase()
    }
}

fn away_from<T: Scalar, const N: usize>(x: &[T; N], z: &[T; N]) -> Option<Direction<T, N>> {
    let d = sub(x, z);
    let n = norm(&d);
    if n > T::zero() {
        Direction::normalize(d).ok()
    } else {
        None
    }
}

/// Carol's strategy of the uniform bound: the cap around `(x - z)/|x - z|`,
/// pushing the token away from `z`.
#[derive(Debug, Clone, Copy)]
pub struct RadialExit<T, const N: usize> {
    z: [T; N],
}

pub fn radial_exit_strategy<T: Scalar, const N: usize>(z: [T; N]) -> RadialExit<T, N> {
    RadialExit { z }
}

impl<T: Scalar, const N: usize> Strategy<T, N> for RadialExit<T, N> {
    fn choose(&self, game: &Game<T, N>, x: &[T; N], _round: u64) -> Result<CapChoice<T, N>> {
        Ok(away_from(x, &self.z).map_or_else(|| fallback(game), |a| plain(game, a)))
    }

    fn name(&self) -> String {
        "radial-exit".into()
    }
}

/// The cap around `(z - x)/|z - x|`. Against [`RadialExit`] with the same `z`
/// this leaves the symmetric band.
#[derive(Debug, Clone, Copy)]
pub struct Mirror<T, const N: usize> {
    z: [T; N],
}

pub fn mirror_strategy<T: Scalar, const N: usize>(z: [T; N]) -> Mirror<T, N> {
    Mirror { z }
}

impl<T: Scalar, const N: usize> Strategy<T, N> for Mirror<T, N> {
    fn choose(&self, game: &Game<T, N>, x: &[T; N], _round: u64) -> Result<CapChoice<T, N>> {
        Ok(away_from(x, &self.z).map_or_else(|| fallback(game), |a| plain(game, a.neg())))
    }

    fn name(&self) -> String {
        "mirror".into()
    }
}

/// The same cap as [`RadialExit`]: a player siding with the exit.
#[derive(Debug, Clone, Copy)]
pub struct Aligned<T, const N: usize> {
    z: [T; N],
}

pub fn aligned_strategy<T: Scalar, const N: usize>(z: [T; N]) -> Aligned<T, N> {
    Aligned { z }
}

impl<T: Scalar, const N: usize> Strategy<T, N> for Aligned<T, N> {
    fn choose(&self, game: &Game<T, N>, x: &[T; N], _round: u64) -> Result<CapChoice<T, N>> {
        Ok(away_from(x, &self.z).map_or_else(|| fallback(game), |a| plain(game, a)))
    }

    fn name(&self) -> String {
        "aligned".into()
    }
}

/// Always the same cap.
#[derive(Debug, Clone, Copy)]
pub struct FixedAxis<T, const N: usize> {
    axis: Direction<T, N>,
}

pub fn fixed_axis_strategy<T: Scalar, const N: usize>(axis: Direction<T, N>) -> FixedAxis<T, N> {
    FixedAxis { axis }
}

impl<T: Scalar, const N: usize> Strategy<T, N> for FixedAxis<T, N> {
    fn choose(&self, game: &Game<T, N>, _x: &[T; N], _round: u64) -> Result<CapChoice<T, N>> {
        Ok(plain(game, self.axis))
    }

    fn name(&self) -> String {
        "fixed-axis".into()
    }
}

/// The discrete optimizers of the DPP at the current position: Paul plays
/// the maximizing axis, Carol the minimizing reply to it.
#[derive(Debug, Clone, Copy)]
pub struct DppPolicy<'a, T, const N: usize> {
    op: &'a DppOperator<T, N>,
    field: &'a ValueField<T, N>,
    player: Player,
}

pub fn dpp_policy_strategy<'a, T: Scalar, const N: usize>(
    op: &'a DppOperator<T, N>,
    field: &'a ValueField<T, N>,
    player: Player,
) -> DppPolicy<'a, T, N> {
    DppPolicy { op, field, player }
}

impl<T: Scalar, const N: usize> Strategy<T, N> for DppPolicy<'_, T, N> {
    fn choose(&self, _game: &Game<T, N>, x: &[T; N], _round: u64) -> Result<CapChoice<T, N>> {
        let c = self.op.choice_at(self.field, x)?;
        let i = match self.player {
            Player::Paul => c.paul,
            Player::Carol => c.carol,
        };
        Ok(CapChoice { cap: Cap::new(self.op.axes()[i], self.op.theta())?, fallback: false })
    }

    fn name(&self) -> String {
        format!("dpp-policy/{:?}", self.player).to_lowercase()
    }
}

/// One played game.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode<T, const N: usize> {
    pub seed: u64,
    pub index: u64,
    /// `x_0, ..., x_tau`; only the last lies outside the domain.
    pub positions: Vec<[T; N]>,
    pub tau: u64,
    pub payoff: T,
    /// Rounds in which some strategy used its fallback cap.
    pub fallbacks: u64,
}

impl<T: Scalar, const N: usize> Episode<T, N> {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "seed": self.seed,
            "index": self.index,
            "tau": self.tau,
            "payoff": self.payoff.to_f64_lossy(),
            "fallbacks": self.fallbacks,
            "positions": self.positions.iter().map(|p| crate::vector::to_f64(p).to_vec()).collect::<Vec<_>>(),
        })
    }
}

/// Random stream of episode `index` under master seed `seed`.
pub fn episode_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Plays until exit, calling `step(x_k, x_{k+1})` for every move. Returns
/// `(tau, fallbacks)`.
fn run<T: Scalar, const N: usize, F: FnMut(&[T; N], &[T; N])>(
    game: &Game<T, N>,
    x0: &[T; N],
    sp: &dyn Strategy<T, N>,
    sc: &dyn Strategy<T, N>,
    rng: &mut ChaCha8Rng,
    mut step: F,
) -> Result<(u64, u64)> {
    if !game.domain.contains(x0) {
        return Err(invalid("starting position lies outside the domain"));
    }
    let mut x = *x0;
    let mut fallbacks = 0;
    for round in 0..game.max_rounds {
        let a = sp.choose(game, &x, round)?;
        let b = sc.choose(game, &x, round)?;
        for c in [&a, &b] {
            if !c.cap.is_admissible(game.eps) {
                return Err(invalid(format!("inadmissible cap with threshold {}", c.cap.theta())));
            }
        }
        if a.fallback || b.fallback {
            fallbacks += 1;
        }
        let band = intersect_caps(&a.cap, &b.cap)?;
        let v = sample_uniform(&band, rng)?;
        debug_assert!(band.contains(v.components()));
        let next: [T; N] = std::array::from_fn(|i| x[i] + game.eps * v.components()[i]);
        step(&x, &next);
        x = next;
        if !game.domain.contains(&x) {
            return Ok((round + 1, fallbacks));
        }
    }
    Err(Error::RunawayEpisode { rounds: game.max_rounds })
}

/// Plays one episode and records its trajectory.
pub fn play_episode<T: Scalar, const N: usize>(
    x0: &[T; N],
    sp: &dyn Strategy<T, N>,
    sc: &dyn Strategy<T, N>,
    game: &Game<T, N>,
    seed: u64,
    index: u64,
) -> Result<Episode<T, N>> {
    let mut rng = episode_rng(seed, index);
    let mut positions = vec![*x0];
    let (tau, fallbacks) = run(game, x0, sp, sc, &mut rng, |_, next| positions.push(*next))?;
    Ok(Episode { seed, index, positions, tau, payoff: game.payoff(tau), fallbacks })
}

/// Sample mean and standard error of the payoff.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
    pub mean_tau: f64,
    pub fallbacks: u64,
}

/// Mean and standard error of `scale * tau` from exact integer sums.
fn tau_statistics(taus: &[u64], scale: f64) -> Result<(f64, f64)> {
    let n = taus.len() as u128;
    if n < 2 {
        return Err(invalid("at least two episodes are needed"));
    }
    let s1: u128 = taus.iter().map(|&t| t as u128).sum();
    let s2: u128 = taus.iter().map(|&t| (t as u128) * (t as u128)).sum();
    let mean = s1 as f64 / n as f64;
    // n * s2 - s1² = sum_{a<b} (t_a - t_b)² >= 0.
    let spread = (n * s2 - s1 * s1) as f64;
    let var = spread / (n as f64 * (n - 1) as f64);
    Ok((scale * mean, scale * (var / n as f64).sqrt()))
}

/// Monte Carlo estimate of the expected payoff from `x0`.
pub fn estimate_value<T: Scalar, const N: usize>(
    x0: &[T; N],
    sp: &dyn Strategy<T, N>,
    sc: &dyn Strategy<T, N>,
    n: u64,
    game: &Game<T, N>,
    seed: u64,
) -> Result<McEstimate> {
    if n < 2 {
        return Err(invalid("at least two episodes are needed"));
    }
    let runs: Vec<(u64, u64)> = (0..n)
        .into_par_iter()
        .map(|i| run(game, x0, sp, sc, &mut episode_rng(seed, i), |_, _| {}))
        .collect::<Result<_>>()?;
    let taus: Vec<u64> = runs.iter().map(|r| r.0).collect();
    let (mean, stderr) = tau_statistics(&taus, game.payoff(1).to_f64_lossy())?;
    let (mean_tau, _) = tau_statistics(&taus, 1.0)?;
    Ok(McEstimate { mean, stderr, n, mean_tau, fallbacks: runs.iter().map(|r| r.1).sum() })
}

/// Lemma-style submartingale check for Carol's radial strategy.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct MartingaleReport {
    pub n: u64,
    pub eps: f64,
    /// Pooled per-round `E[|x_{k+1} - z|² - |x_k - z|²]` (ratio estimator
    /// over episodes).
    pub increment: f64,
    pub increment_stderr: f64,
    /// `increment >= eps² - 3 stderr`.
    pub increment_pass: bool,
    /// Sample mean of `eps² tau`.
    pub eps2_tau: f64,
    pub eps2_tau_stderr: f64,
    /// Sample mean of `|x_tau - z|² - |x_0 - z|²`, which bounds `E[eps² tau]`
    /// by optional stopping.
    pub osth_bound: f64,
    /// `(max_{y on boundary} |y - z| + eps)² - |x_0 - z|²`; the `+ eps`
    /// accounts for the last step overshooting the boundary.
    pub geometric_bound: f64,
    /// `eps2_tau <= osth_bound + 3 stderr` and
    /// `eps2_tau <= geometric_bound + 3 stderr`.
    pub bound_pass: bool,
    pub paul: String,
    pub carol: String,
}

impl MartingaleReport {
    pub fn pass(&self) -> bool {
        self.increment_pass && self.bound_pass
    }
}

/// Runs `n` episodes with Carol playing [`RadialExit`] about `z` against `sp`.
pub fn martingale_diagnostic<T: Scalar, const N: usize>(
    x0: &[T; N],
    z: &[T; N],
    sp: &dyn Strategy<T, N>,
    n: u64,
    game: &Game<T, N>,
    seed: u64,
) -> Result<MartingaleReport> {
    if n < 2 {
        return Err(invalid("at least two episodes are needed"));
    }
    let sc = radial_exit_strategy(*z);
    let d0 = norm_sq(&sub(x0, z)).to_f64_lossy();
    // Per episode: tau and D = |x_tau - z|² - |x_0 - z|² (the telescoped
    // sum of the round increments).
    let runs: Vec<(u64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut last = *x0;
            let (tau, _) = run(game, x0, sp, &sc, &mut episode_rng(seed, i), |_, next| last = *next)?;
            Ok((tau, norm_sq(&sub(&last, z)).to_f64_lossy() - d0))
        })
        .collect::<Result<_>>()?;
    let eps = game.eps.to_f64_lossy();
    let taus: Vec<f64> = runs.iter().map(|r| r.0 as f64).collect();
    let ds: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let (tau_mean, _) = crate::scalar::mean_and_stderr(&taus);
    let (d_mean, d_se) = crate::scalar::mean_and_stderr(&ds);
    let ratio = d_mean / tau_mean;
    // Delta method for a ratio of means over iid episodes.
    let resid: Vec<f64> = runs.iter().map(|r| r.1 - ratio * r.0 as f64).collect();
    let (_, resid_se) = crate::scalar::mean_and_stderr(&resid);
    let increment_stderr = resid_se / tau_mean;
    let (eps2_tau, eps2_tau_stderr) = tau_statistics(&runs.iter().map(|r| r.0).collect::<Vec<_>>(), eps * eps)?;
    let reach = game.domain.max_boundary_distance_from(z).to_f64_lossy() + eps;
    let geometric_bound = reach * reach - d0;
    let slack = 3.0 * (eps2_tau_stderr * eps2_tau_stderr + d_se * d_se).sqrt();
    Ok(MartingaleReport {
        n,
        eps,
        increment: ratio,
        increment_stderr,
        increment_pass: ratio >= eps * eps - 3.0 * increment_stderr,
        eps2_tau,
        eps2_tau_stderr,
        osth_bound: d_mean,
        geometric_bound,
        bound_pass: eps2_tau <= d_mean + slack && eps2_tau <= geometric_bound + 3.0 * eps2_tau_stderr,
        paul: sp.name(),
        carol: sc.name(),
    })
}
