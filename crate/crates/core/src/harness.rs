//! Seeded regret and error protocols and Monte Carlo aggregation.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::adversary::LossModel;
use crate::error::{check_dim, Error, Result};
use crate::geometry::{dot, Domain};
use crate::player::{exact_to_f64, Channel, ExactRational, Feedback, Player};

/// Runs above this horizon keep no per-round trajectory unless asked.
pub const TRAJECTORY_LIMIT: u64 = 10_000;

/// Slack for the per-round membership check on played points.
pub const PLAY_TOL: f64 = 1e-9;

const STREAM_ADVERSARY: u64 = 1;
const STREAM_PLAYER: u64 = 2;
const STREAM_SECRET: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Protocol {
    Regret,
    Error,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Regret => "regret",
            Protocol::Error => "error",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "regret" => Some(Protocol::Regret),
            "error" => Some(Protocol::Error),
            _ => None,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable 64-bit seed for one repetition of one grid cell.
pub fn derive_seed(master: u64, dim: usize, horizon: u64, repetition: usize) -> u64 {
    [dim as u64, horizon, repetition as u64]
        .into_iter()
        .fold(splitmix64(master), |h, v| splitmix64(h ^ splitmix64(v)))
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Stream the adversary samples losses from.
pub fn adversary_rng(seed: u64) -> ChaCha8Rng {
    stream(seed, STREAM_ADVERSARY)
}

/// Stream the player draws its randomness from.
pub fn player_rng(seed: u64) -> ChaCha8Rng {
    stream(seed, STREAM_PLAYER)
}

/// Stream the hidden construction parameter is drawn from.
pub fn secret_rng(seed: u64) -> ChaCha8Rng {
    stream(seed, STREAM_SECRET)
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::default();
        for v in iter {
            s.add(v);
        }
        s
    }
}

/// Coordinate-wise mean of a nonempty set of points.
pub fn average_iterate(points: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = points.first().ok_or_else(|| Error::InvalidParameter("no points".into()))?;
    let dim = first.len();
    let mut sums = vec![CompensatedSum::default(); dim];
    for p in points {
        check_dim(dim, p.len())?;
        for (s, v) in sums.iter_mut().zip(p) {
            s.add(*v);
        }
    }
    let n = points.len() as f64;
    Ok(sums.iter().map(|s| s.value() / n).collect())
}

/// Per-run switches.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Keep per-round points and losses; `None` keeps them up to
    /// [`TRAJECTORY_LIMIT`] rounds.
    pub trajectory: Option<bool>,
}

/// Per-round record kept when trajectories are on.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub points: Vec<Vec<f64>>,
    /// Scored loss of each round: `<x_bar, w_t>` for stochastic models,
    /// `<x_t, w_t>` for binary sequences.
    pub scored: Vec<f64>,
    /// Scalar loss the player observed.
    pub observed: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub protocol: Protocol,
    pub domain_kind: &'static str,
    pub adversary_kind: &'static str,
    pub player_kind: &'static str,
    pub dim: usize,
    pub horizon: u64,
    pub seed: u64,
    pub secret: Option<String>,
    /// Mean used for scoring: exact for stochastic models, empirical for
    /// binary sequences.
    pub scoring_mean: Vec<f64>,
    /// `min_w <scoring_mean, w>`.
    pub optimum: f64,
    /// Sum of scored per-round losses.
    pub scored_loss: f64,
    pub regret: f64,
    /// Final error; error protocol only.
    pub error: Option<f64>,
    /// Point whose error is reported.
    pub final_point: Option<Vec<f64>>,
    pub average_point: Vec<f64>,
    /// Error of the average iterate.
    pub average_error: f64,
    pub trajectory: Option<Trajectory>,
    pub diagnostics: BTreeMap<String, f64>,
    pub wall_ms: f64,
}

impl RunResult {
    /// Regret recomputed from the stored trajectory.
    pub fn recompute_regret(&self) -> Option<f64> {
        let tr = self.trajectory.as_ref()?;
        Some(tr.scored.iter().map(|l| l - self.optimum).collect::<CompensatedSum>().value())
    }

    pub fn value(&self) -> f64 {
        match self.protocol {
            Protocol::Regret => self.regret,
            Protocol::Error => self.error.unwrap_or(self.average_error),
        }
    }
}

/// Rejects triples that cannot be run together.
pub fn check_compatible(domain: &Domain, model: &LossModel, player: &Player) -> Result<()> {
    check_dim(domain.dim(), model.dim())?;
    if player.channel() == Channel::ExactBandit && !model.is_binary() {
        return Err(Error::ChannelMismatch(format!(
            "{} needs the exact-rational loss channel, which only binary_sequence provides; \
             {} emits floating losses",
            player.kind_name(),
            model.kind_name()
        )));
    }
    if let Player::FixedPoint(w) = player {
        check_dim(domain.dim(), w.len())?;
        if !domain.contains(w, PLAY_TOL)? {
            return Err(Error::Incompatible("fixed point lies outside the domain".into()));
        }
    }
    Ok(())
}

pub fn run_regret_protocol(
    domain: &Domain,
    model: LossModel,
    player: Player,
    horizon: u64,
    seed: u64,
) -> Result<RunResult> {
    run_protocol(Protocol::Regret, domain, model, player, horizon, seed, RunOptions::default())
}

pub fn run_error_protocol(
    domain: &Domain,
    model: LossModel,
    player: Player,
    horizon: u64,
    seed: u64,
) -> Result<RunResult> {
    run_protocol(Protocol::Error, domain, model, player, horizon, seed, RunOptions::default())
}

/// One run of either protocol.
pub fn run_protocol(
    protocol: Protocol,
    domain: &Domain,
    mut model: LossModel,
    mut player: Player,
    horizon: u64,
    seed: u64,
    opts: RunOptions,
) -> Result<RunResult> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    check_compatible(domain, &model, &player)?;
    let start = Instant::now();
    let dim = domain.dim();
    let channel = player.channel();
    let mut arng = adversary_rng(seed);
    let mut prng = player_rng(seed);
    let keep = opts.trajectory.unwrap_or(horizon <= TRAJECTORY_LIMIT);
    let mut traj = keep.then(|| Trajectory {
        points: Vec::with_capacity(horizon as usize),
        scored: Vec::with_capacity(horizon as usize),
        observed: Vec::with_capacity(horizon as usize),
    });
    let secret = model.secret().map(|s| s.to_string());
    let adversary_kind = model.kind_name();
    let player_kind = player.kind_name();

    // Stochastic models are scored against the exact mean; binary
    // sequences against their realized losses.
    let binary = model.is_binary();
    let exact_mean = (!binary).then(|| model.mean());
    let exact_opt = match &exact_mean {
        Some(m) => Some(dot(m, &domain.linear_argmin(m)?)),
        None => None,
    };

    let mut regret_acc = CompensatedSum::default();
    let mut loss_acc = CompensatedSum::default();
    let mut point_sums = vec![CompensatedSum::default(); dim];
    let mut decode_mismatches = 0u64;

    for _ in 0..horizon {
        let play = player.choose(&mut prng)?;
        check_dim(dim, play.point.len())?;
        if !domain.contains(&play.point, PLAY_TOL)? {
            return Err(Error::Precondition(format!("{player_kind} played an infeasible point")));
        }
        let (observed, scored) = if let LossModel::Binary(seq) = &mut model {
            let row = seq.next_row(&mut arng)?;
            let x: Vec<f64> = row.iter().map(|&b| b as f64).collect();
            let realized = dot(&x, &play.point);
            let observed = match channel {
                Channel::ExactBandit => {
                    let exact = play.exact.as_ref().ok_or_else(|| {
                        Error::ChannelMismatch(format!("{player_kind} produced no exact point"))
                    })?;
                    let loss: ExactRational = exact
                        .iter()
                        .zip(&row)
                        .filter(|(_, &b)| b == 1)
                        .map(|(w, _)| w.clone())
                        .sum();
                    player.observe(Feedback::Exact(&loss))?;
                    if let Player::DigitDecoder(dec) = &player {
                        if dec.last_decoded() != Some(&row[..]) {
                            decode_mismatches += 1;
                        }
                    }
                    exact_to_f64(&loss)
                }
                Channel::Full => {
                    player.observe(Feedback::Full(&x))?;
                    realized
                }
                Channel::Bandit => {
                    player.observe(Feedback::Scalar(realized))?;
                    realized
                }
            };
            (observed, realized)
        } else {
            let x = model.sample(&mut arng)?;
            let v = dot(&x, &play.point);
            match channel {
                Channel::Bandit => player.observe(Feedback::Scalar(v))?,
                Channel::Full => player.observe(Feedback::Full(&x))?,
                Channel::ExactBandit => unreachable!("rejected by check_compatible"),
            }
            let expected = dot(exact_mean.as_ref().expect("stochastic"), &play.point);
            regret_acc.add(expected - exact_opt.expect("stochastic"));
            (v, expected)
        };
        loss_acc.add(scored);
        for (s, v) in point_sums.iter_mut().zip(&play.point) {
            s.add(*v);
        }
        if let Some(tr) = traj.as_mut() {
            tr.points.push(play.point);
            tr.scored.push(scored);
            tr.observed.push(observed);
        }
    }

    let t = horizon as f64;
    let (scoring_mean, optimum, regret) = match (exact_mean, exact_opt) {
        (Some(m), Some(opt)) => (m, opt, regret_acc.value()),
        _ => {
            let m = model.mean();
            let opt = dot(&m, &domain.linear_argmin(&m)?);
            (m, opt, loss_acc.value() - t * opt)
        }
    };
    let average_point: Vec<f64> = point_sums.iter().map(|s| s.value() / t).collect();
    let average_error = dot(&scoring_mean, &average_point) - optimum;

    let (error, final_point) = match protocol {
        Protocol::Regret => (None, None),
        Protocol::Error => {
            let w = match player.finalize(domain) {
                Some(r) => r?,
                None => average_point.clone(),
            };
            (Some(dot(&scoring_mean, &w) - optimum), Some(w))
        }
    };

    let mut diagnostics = BTreeMap::new();
    match &player {
        Player::Exp3(e) => {
            diagnostics.insert("exp3_clipped".into(), e.clip_count() as f64);
            diagnostics.insert("exp3_clip_fraction".into(), e.clip_count() as f64 / t);
        }
        Player::DigitDecoder(dec) => {
            diagnostics.insert("decode_mismatches".into(), decode_mismatches as f64);
            diagnostics.insert("coupling_gap".into(), dec.cumulative_gap());
            diagnostics.insert("max_round_gap".into(), exact_to_f64(dec.max_round_gap()));
            diagnostics.insert("digit_depth".into(), dec.p() as f64);
        }
        Player::CornerEstimator(c) => {
            diagnostics.insert("mu".into(), c.mu());
        }
        _ => {}
    }
    if let LossModel::Shrink(s) = &model {
        diagnostics.insert("clamp_probability".into(), s.clamp_probability());
    }

    Ok(RunResult {
        protocol,
        domain_kind: domain.kind().as_str(),
        adversary_kind,
        player_kind,
        dim,
        horizon,
        seed,
        secret,
        scoring_mean,
        optimum,
        scored_loss: loss_acc.value(),
        regret,
        error,
        final_point,
        average_point,
        average_error,
        trajectory: traj,
        diagnostics,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Summary of one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateStats {
    pub dim: usize,
    pub horizon: u64,
    pub repetitions: usize,
    pub mean: f64,
    /// Sample standard deviation over `sqrt(repetitions)`; zero for one run.
    pub stderr: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
}

impl AggregateStats {
    pub fn from_values(dim: usize, horizon: u64, values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Degenerate("no successful runs to aggregate".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().copied().collect::<CompensatedSum>().value() / n;
        let stderr = if values.len() < 2 {
            0.0
        } else {
            let ss = values.iter().map(|v| (v - mean) * (v - mean)).collect::<CompensatedSum>();
            (ss.value() / (n - 1.0)).sqrt() / n.sqrt()
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(AggregateStats {
            dim,
            horizon,
            repetitions: values.len(),
            mean,
            stderr,
            q05: quantile(&sorted, 0.05),
            q50: quantile(&sorted, 0.50),
            q95: quantile(&sorted, 0.95),
        })
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// One `(d, T)` cell of a sweep.
#[derive(Debug, Clone, Copy)]
pub struct Cell {
    pub dim: usize,
    pub horizon: u64,
    pub protocol: Protocol,
    pub repetitions: usize,
    pub master_seed: u64,
}

/// Everything one repetition needs, built fresh per repetition.
pub struct Trial {
    pub domain: Domain,
    pub model: LossModel,
    pub player: Player,
}

#[derive(Debug)]
pub struct CellOutcome {
    pub cell: Cell,
    /// Successful runs in repetition order, paired with their index.
    pub runs: Vec<(usize, RunResult)>,
    pub failures: Vec<(usize, Error)>,
    pub stats: AggregateStats,
}

/// Runs every repetition of `cell`, building each trial from the
/// repetition's secret stream, and aggregates the protocol values.
pub fn monte_carlo<F>(cell: Cell, opts: RunOptions, build: F) -> Result<CellOutcome>
where
    F: Fn(usize, &mut ChaCha8Rng) -> Result<Trial> + Sync,
{
    if cell.repetitions == 0 {
        return Err(Error::InvalidParameter("repetitions must be at least 1".into()));
    }
    let results: Vec<(usize, Result<RunResult>)> = (0..cell.repetitions)
        .into_par_iter()
        .map(|rep| {
            let seed = derive_seed(cell.master_seed, cell.dim, cell.horizon, rep);
            let run = build(rep, &mut secret_rng(seed)).and_then(|trial| {
                run_protocol(cell.protocol, &trial.domain, trial.model, trial.player, cell.horizon, seed, opts)
            });
            (rep, run)
        })
        .collect();
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (rep, r) in results {
        match r {
            Ok(run) => runs.push((rep, run)),
            Err(e) => failures.push((rep, e)),
        }
    }
    if runs.is_empty() {
        // Surface the first failure; it usually explains all of them.
        let (_, e) = failures.swap_remove(0);
        return Err(e);
    }
    let values: Vec<f64> = runs.iter().map(|(_, r)| r.value()).collect();
    let stats = AggregateStats::from_values(cell.dim, cell.horizon, &values)?;
    Ok(CellOutcome { cell, runs, failures, stats })
}

/// Runs `f` on a dedicated pool with `workers` threads (machine
/// parallelism when `None`).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        b = b.num_threads(w.max(1));
    }
    let pool = b.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}
