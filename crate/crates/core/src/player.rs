//! Player strategies and the exact-arithmetic digit encoding.

use std::ops::Neg;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, One, Signed, ToPrimitive, Zero};
use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{Domain, DomainKind};
use crate::harness::CompensatedSum;

/// Arbitrary-precision rational in canonical reduced form.
pub type ExactRational = BigRational;

/// Tolerance for accepting a floating point vector as a simplex point.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Largest hypercube or cylinder dimension for which EXP3 enumerates vertices.
pub const MAX_VERTEX_DIM: usize = 12;

/// What a player needs to see after each round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    /// The scalar loss as a float.
    Bandit,
    /// The scalar loss as an exact rational; only binary sequences qualify.
    ExactBandit,
    /// The whole loss vector.
    Full,
}

/// Point played in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct Play {
    pub point: Vec<f64>,
    /// The exact point when the player works in rational arithmetic.
    pub exact: Option<Vec<ExactRational>>,
}

impl Play {
    fn float(point: Vec<f64>) -> Self {
        Play { point, exact: None }
    }
}

/// What the harness hands back after a round.
#[derive(Debug, Clone, Copy)]
pub enum Feedback<'a> {
    Scalar(f64),
    Exact(&'a ExactRational),
    Full(&'a [f64]),
}

/// `x~ = (v / mu) sigma`.
pub fn estimate_loss_vector<S>(v: S, sigma: &[i8], mu: S) -> Result<Vec<S>>
where
    S: Num + Neg<Output = S> + Clone + PartialOrd,
{
    if !(mu > S::zero()) {
        return Err(Error::InvalidParameter("mu must be positive".into()));
    }
    let scaled = v / mu;
    Ok(sigma
        .iter()
        .map(|&s| if s >= 0 { scaled.clone() } else { -scaled.clone() })
        .collect())
}

#[derive(Debug, Clone)]
pub struct CornerEstimator {
    mu: f64,
    sum: Vec<f64>,
    rounds: usize,
    sigma: Option<Vec<i8>>,
}

impl CornerEstimator {
    pub fn new(domain: &Domain, mu: Option<f64>) -> Result<Self> {
        let max = domain
            .corner_set_scale()
            .ok_or(Error::NoCornerSet(domain.kind().as_str()))?;
        let mu = mu.unwrap_or(max);
        if !(mu > 0.0 && mu <= max * (1.0 + 1e-12)) {
            return Err(Error::InvalidParameter(format!("mu must lie in (0, {max}], got {mu}")));
        }
        Ok(CornerEstimator { mu, sum: vec![0.0; domain.dim()], rounds: 0, sigma: None })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    /// The sign vector drawn by the last `choose`, until it is consumed.
    pub fn pending_sigma(&self) -> Option<&[i8]> {
        self.sigma.as_deref()
    }

    fn choose<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<f64> {
        let sigma: Vec<i8> =
            (0..self.sum.len()).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect();
        let w = sigma.iter().map(|&s| self.mu * s as f64).collect();
        self.sigma = Some(sigma);
        w
    }

    fn observe(&mut self, v: f64) -> Result<()> {
        let sigma = self
            .sigma
            .take()
            .ok_or_else(|| Error::Precondition("observe called before choose".into()))?;
        let est = estimate_loss_vector(v, &sigma, self.mu)?;
        for (s, e) in self.sum.iter_mut().zip(est) {
            *s += e;
        }
        self.rounds += 1;
        Ok(())
    }

    /// Average estimate so far.
    pub fn average_estimate(&self) -> Result<Vec<f64>> {
        if self.rounds == 0 {
            return Err(Error::Precondition("no rounds completed".into()));
        }
        let n = self.rounds as f64;
        Ok(self.sum.iter().map(|s| s / n).collect())
    }

    pub fn finalize(&self, domain: &Domain) -> Result<Vec<f64>> {
        domain.linear_argmin(&self.average_estimate()?)
    }
}

/// Exponential weights over the corners of the simplex, in log space.
#[derive(Debug, Clone)]
pub struct Hedge {
    eta: f64,
    log_weights: Vec<f64>,
}

impl Hedge {
    pub fn new(d: usize, eta: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParameter("Hedge needs at least one expert".into()));
        }
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(Error::InvalidParameter(format!("learning rate must be >= 0, got {eta}")));
        }
        Ok(Hedge { eta, log_weights: vec![0.0; d] })
    }

    /// `sqrt(8 ln d / T)`.
    pub fn default_eta(d: usize, horizon: u64) -> f64 {
        (8.0 * (d as f64).ln() / horizon.max(1) as f64).sqrt()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn dim(&self) -> usize {
        self.log_weights.len()
    }

    /// Weights rescaled so the largest is one.
    pub fn weights(&self) -> Vec<f64> {
        let m = self.log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        self.log_weights.iter().map(|l| (l - m).exp()).collect()
    }

    pub fn distribution(&self) -> Vec<f64> {
        let w = self.weights();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|v| v / s).collect()
    }

    pub fn update(&mut self, x: &[f64]) -> Result<()> {
        crate::error::check_dim(self.dim(), x.len())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("loss entries must be finite".into()));
        }
        for (l, v) in self.log_weights.iter_mut().zip(x) {
            *l -= self.eta * v;
        }
        Ok(())
    }
}

/// Importance-weighted exponential weights over a finite set of points.
#[derive(Debug, Clone)]
pub struct Exp3 {
    eta: f64,
    gamma: f64,
    arms: Vec<Vec<f64>>,
    log_weights: Vec<f64>,
    last: Option<(usize, f64)>,
    clipped: u64,
    observed: u64,
}

impl Exp3 {
    pub fn new(arms: Vec<Vec<f64>>, eta: f64, gamma: f64) -> Result<Self> {
        if arms.is_empty() {
            return Err(Error::InvalidParameter("EXP3 needs at least one arm".into()));
        }
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(Error::InvalidParameter(format!("learning rate must be >= 0, got {eta}")));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidParameter(format!("exploration must lie in [0, 1], got {gamma}")));
        }
        let k = arms.len();
        Ok(Exp3 { eta, gamma, arms, log_weights: vec![0.0; k], last: None, clipped: 0, observed: 0 })
    }

    /// `sqrt(2 ln K / (K T))`.
    pub fn default_eta(k: usize, horizon: u64) -> f64 {
        let k = k as f64;
        (2.0 * k.ln() / (k * horizon.max(1) as f64)).sqrt()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn arms(&self) -> &[Vec<f64>] {
        &self.arms
    }

    /// Number of observed losses that fell outside `[-1, 1]`.
    pub fn clip_count(&self) -> u64 {
        self.clipped
    }

    pub fn observed(&self) -> u64 {
        self.observed
    }

    pub fn distribution(&self) -> Vec<f64> {
        let m = self.log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = self.log_weights.iter().map(|l| (l - m).exp()).collect();
        let s: f64 = w.iter().sum();
        let k = w.len() as f64;
        w.into_iter().map(|v| (1.0 - self.gamma) * v / s + self.gamma / k).collect()
    }

    fn choose<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<f64> {
        let p = self.distribution();
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut arm = p.len() - 1;
        for (i, q) in p.iter().enumerate() {
            acc += q;
            if u < acc {
                arm = i;
                break;
            }
        }
        self.last = Some((arm, p[arm]));
        self.arms[arm].clone()
    }

    fn observe(&mut self, v: f64) -> Result<()> {
        let (arm, prob) = self
            .last
            .take()
            .ok_or_else(|| Error::Precondition("observe called before choose".into()))?;
        if !v.is_finite() {
            return Err(Error::InvalidParameter("observed loss must be finite".into()));
        }
        if v.abs() > 1.0 {
            self.clipped += 1;
        }
        self.observed += 1;
        let loss = (v.clamp(-1.0, 1.0) + 1.0) / 2.0;
        self.log_weights[arm] -= self.eta * loss / prob;
        Ok(())
    }
}

/// Finite arm set EXP3 plays on `domain`.
pub fn exp3_arms(domain: &Domain) -> Result<Vec<Vec<f64>>> {
    let dim = domain.dim();
    let unit = |i: usize, s: f64| {
        let mut e = vec![0.0; dim];
        e[i] = s;
        e
    };
    let signed_units = || (0..dim).flat_map(move |i| [unit(i, 1.0), unit(i, -1.0)]);
    Ok(match domain {
        Domain::Simplex { .. } => (0..dim).map(|i| unit(i, 1.0)).collect(),
        Domain::L1Ball { .. } | Domain::UnitBall { .. } => signed_units().collect(),
        Domain::ShiftedBall { shift, .. } => signed_units()
            .map(|e| e.iter().zip(shift).map(|(u, a)| u + a).collect())
            .collect(),
        Domain::Hypercube { .. } => {
            if dim > MAX_VERTEX_DIM {
                return Err(Error::InvalidParameter(format!(
                    "EXP3 enumerates 2^D vertices; D = {dim} exceeds {MAX_VERTEX_DIM}"
                )));
            }
            (0..1usize << dim)
                .map(|m| (0..dim).map(|i| if m >> i & 1 == 1 { 1.0 } else { -1.0 }).collect())
                .collect()
        }
        Domain::Cylinder { .. } => {
            if dim > MAX_VERTEX_DIM {
                return Err(Error::InvalidParameter(format!(
                    "EXP3 enumerates 2^D cylinder points; D = {dim} exceeds {MAX_VERTEX_DIM}"
                )));
            }
            let r = if dim > 1 { 1.0 / ((dim - 1) as f64).sqrt() } else { 0.0 };
            (0..1usize << dim)
                .map(|m| {
                    (0..dim)
                        .map(|i| {
                            let s = if m >> i & 1 == 1 { 1.0 } else { -1.0 };
                            if i == 0 {
                                s
                            } else {
                                s * r
                            }
                        })
                        .collect()
                })
                .collect()
        }
        Domain::CappedBall { cap, .. } => {
            let mut arms = vec![unit(0, *cap), unit(0, -1.0)];
            arms.extend((1..dim).flat_map(|i| [unit(i, 1.0), unit(i, -1.0)]));
            arms
        }
    })
}

/// Smallest `p >= 1` with `10^p >= T`.
pub fn digit_depth(horizon: u64) -> u32 {
    let mut p = 0u32;
    let mut pow: u128 = 1;
    while pow < horizon as u128 {
        pow *= 10;
        p += 1;
    }
    p.max(1)
}

fn pow10(e: u32) -> BigInt {
    num_traits::pow(BigInt::from(10u32), e as usize)
}

/// Output of [`digit_encode`].
#[derive(Debug, Clone, PartialEq)]
pub struct DigitEncoding {
    /// Truncated point plus the digit tail.
    pub w_prime: Vec<ExactRational>,
    /// `w_prime / ||w_prime||_1`, a simplex point.
    pub w: Vec<ExactRational>,
    /// `||w_prime||_1`.
    pub l1: ExactRational,
}

/// Exact rational equal to the given float.
pub fn exact_from_f64(v: f64) -> Result<ExactRational> {
    BigRational::from_float(v)
        .ok_or_else(|| Error::InvalidParameter(format!("cannot convert {v} to a rational")))
}

pub fn exact_to_f64(v: &ExactRational) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

/// Truncates each coordinate of `w_hat` to `p` decimals and appends the
/// marker digits `10^-(p+i)`, `i = 1..=d`.
pub fn digit_encode(w_hat: &[f64], p: u32) -> Result<DigitEncoding> {
    let exact: Vec<ExactRational> =
        w_hat.iter().map(|&v| exact_from_f64(v)).collect::<Result<_>>()?;
    digit_encode_exact(&exact, p)
}

/// [`digit_encode`] on an exact input.
pub fn digit_encode_exact(w_hat: &[ExactRational], p: u32) -> Result<DigitEncoding> {
    let d = w_hat.len();
    if d == 0 {
        return Err(Error::InvalidParameter("empty point".into()));
    }
    if p == 0 {
        return Err(Error::InvalidParameter("digit depth must be at least 1".into()));
    }
    let tol = exact_from_f64(SIMPLEX_TOL)?;
    let one = BigRational::one();
    let total: BigRational = w_hat.iter().cloned().sum();
    let off = (&total - &one).abs();
    let (lo, hi) = (-tol.clone(), &one + &tol);
    if off > tol || w_hat.iter().any(|v| *v < lo || *v > hi) {
        return Err(Error::InvalidParameter("point is not on the simplex".into()));
    }
    // Work with integer numerators over 10^(p+d).
    let scale = pow10(p);
    let tail_scale = pow10(d as u32);
    let denom = &scale * &tail_scale;
    let mut numer = Vec::with_capacity(d);
    for (i, v) in w_hat.iter().enumerate() {
        let trunc = if v.is_negative() {
            BigInt::zero()
        } else {
            (v.numer() * &scale) / v.denom()
        };
        numer.push(trunc * &tail_scale + pow10((d - 1 - i) as u32));
    }
    let l1_numer: BigInt = numer.iter().sum();
    let l1 = BigRational::new(l1_numer.clone(), denom.clone());
    // Each coordinate moves by less than 10^-p, so ||w'||_1 stays within
    // d 10^-p of sum(w_hat).
    let slack = BigRational::new(BigInt::from(d), scale) + &off;
    if (&l1 - &one).abs() > slack {
        return Err(Error::Precondition("digit encoding norm bound violated".into()));
    }
    let w_prime = numer.iter().map(|n| BigRational::new(n.clone(), denom.clone())).collect();
    let w = numer.into_iter().map(|n| BigRational::new(n, l1_numer.clone())).collect();
    Ok(DigitEncoding { w_prime, w, l1 })
}

/// Recovers `x` in `{0,1}^d` from `<x, w'>` by reading decimal places
/// `p+1 ..= p+d`.
pub fn digit_decode(scaled_loss: &ExactRational, p: u32, d: usize) -> Result<Vec<u8>> {
    if scaled_loss.is_negative() {
        return Err(Error::CorruptedChannel("negative scaled loss".into()));
    }
    let n = (scaled_loss * BigRational::from_integer(pow10(p + d as u32))).floor().to_integer();
    let ten = BigInt::from(10u32);
    let mut rest = n;
    let mut x = vec![0u8; d];
    for k in (0..d).rev() {
        let digit = (&rest % &ten).to_u8().unwrap_or(u8::MAX);
        if digit > 1 {
            return Err(Error::CorruptedChannel(format!(
                "digit {digit} at decimal place {}",
                p as usize + k + 1
            )));
        }
        x[k] = digit;
        rest /= &ten;
    }
    Ok(x)
}

/// Bandit player that recovers the full binary loss vector every round and
/// feeds it to an inner Hedge.
#[derive(Debug, Clone)]
pub struct DigitDecoder {
    p: u32,
    hedge: Hedge,
    last: Option<(Vec<ExactRational>, DigitEncoding)>,
    round_bound: ExactRational,
    gap: CompensatedSum,
    max_round_gap: ExactRational,
    last_decoded: Option<Vec<u8>>,
}

impl DigitDecoder {
    pub fn new(hedge: Hedge, p: u32) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidParameter("digit depth must be at least 1".into()));
        }
        let d = hedge.dim();
        // |<x, w_hat - w>| <= ||w_hat - w'||_1 + | ||w'||_1 - 1 | <= 2 d 10^-p
        // plus the simplex slack of the float input.
        let round_bound = BigRational::new(BigInt::from(2 * d), pow10(p))
            + exact_from_f64(2.0 * SIMPLEX_TOL)?;
        Ok(DigitDecoder {
            p,
            hedge,
            last: None,
            round_bound,
            gap: CompensatedSum::default(),
            max_round_gap: BigRational::zero(),
            last_decoded: None,
        })
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn hedge(&self) -> &Hedge {
        &self.hedge
    }

    /// Loss vector recovered in the most recent round.
    pub fn last_decoded(&self) -> Option<&[u8]> {
        self.last_decoded.as_deref()
    }

    /// `sum_t <x_t, w_t - w_hat_t>`: our cumulative loss minus the inner
    /// Hedge's. Each term is exact; the sum is compensated floating point.
    pub fn cumulative_gap(&self) -> f64 {
        self.gap.value()
    }

    pub fn max_round_gap(&self) -> &ExactRational {
        &self.max_round_gap
    }

    /// Bound asserted on every round's `|<x_t, w_t - w_hat_t>|`.
    pub fn round_bound(&self) -> &ExactRational {
        &self.round_bound
    }

    /// Float view of the last encoded `||w'||_1`.
    pub fn last_l1(&self) -> Option<f64> {
        self.last.as_ref().map(|(_, e)| exact_to_f64(&e.l1))
    }

    fn choose(&mut self) -> Result<Play> {
        let w_hat: Vec<ExactRational> = self
            .hedge
            .distribution()
            .into_iter()
            .map(exact_from_f64)
            .collect::<Result<_>>()?;
        let enc = digit_encode_exact(&w_hat, self.p)?;
        let point = enc.w.iter().map(exact_to_f64).collect();
        let exact = enc.w.clone();
        self.last = Some((w_hat, enc));
        Ok(Play { point, exact: Some(exact) })
    }

    fn observe(&mut self, loss: &ExactRational) -> Result<()> {
        let (w_hat, enc) = self
            .last
            .take()
            .ok_or_else(|| Error::Precondition("observe called before choose".into()))?;
        let x = digit_decode(&(loss * &enc.l1), self.p, self.hedge.dim())?;
        let mut round = BigRational::zero();
        for (i, &b) in x.iter().enumerate() {
            if b == 1 {
                round += &enc.w[i] - &w_hat[i];
            }
        }
        let mag = round.abs();
        if mag > self.round_bound {
            return Err(Error::Precondition(format!(
                "coupling gap {} exceeds {}",
                exact_to_f64(&mag),
                exact_to_f64(&self.round_bound)
            )));
        }
        if mag > self.max_round_gap {
            self.max_round_gap = mag;
        }
        self.gap.add(exact_to_f64(&round));
        let xf: Vec<f64> = x.iter().map(|&b| b as f64).collect();
        self.last_decoded = Some(x);
        self.hedge.update(&xf)
    }
}

/// Any of the implemented strategies.
#[derive(Debug, Clone)]
pub enum Player {
    CornerEstimator(CornerEstimator),
    DigitDecoder(DigitDecoder),
    Hedge(Hedge),
    Exp3(Exp3),
    FixedPoint(Vec<f64>),
}

impl Player {
    pub fn corner_estimator(domain: &Domain, mu: Option<f64>) -> Result<Self> {
        Ok(Player::CornerEstimator(CornerEstimator::new(domain, mu)?))
    }

    pub fn hedge(domain: &Domain, horizon: u64, eta: Option<f64>) -> Result<Self> {
        require_simplex(domain, "hedge")?;
        let d = domain.dim();
        Ok(Player::Hedge(Hedge::new(d, eta.unwrap_or_else(|| Hedge::default_eta(d, horizon)))?))
    }

    pub fn exp3(domain: &Domain, horizon: u64, eta: Option<f64>, gamma: f64) -> Result<Self> {
        let arms = exp3_arms(domain)?;
        let eta = eta.unwrap_or_else(|| Exp3::default_eta(arms.len(), horizon));
        Ok(Player::Exp3(Exp3::new(arms, eta, gamma)?))
    }

    pub fn digit_decoder(
        domain: &Domain,
        horizon: u64,
        p: Option<u32>,
        eta: Option<f64>,
    ) -> Result<Self> {
        require_simplex(domain, "digit_decoder")?;
        let d = domain.dim();
        let hedge = Hedge::new(d, eta.unwrap_or_else(|| Hedge::default_eta(d, horizon)))?;
        Ok(Player::DigitDecoder(DigitDecoder::new(hedge, p.unwrap_or_else(|| digit_depth(horizon)))?))
    }

    pub fn fixed_point(domain: &Domain, w: Vec<f64>) -> Result<Self> {
        if !domain.contains(&w, 1e-9)? {
            return Err(Error::InvalidParameter("fixed point lies outside the domain".into()));
        }
        Ok(Player::FixedPoint(w))
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Player::CornerEstimator(_) => "corner_estimator",
            Player::DigitDecoder(_) => "digit_decoder",
            Player::Hedge(_) => "hedge",
            Player::Exp3(_) => "exp3",
            Player::FixedPoint(_) => "fixed_point",
        }
    }

    pub fn channel(&self) -> Channel {
        match self {
            Player::DigitDecoder(_) => Channel::ExactBandit,
            Player::Hedge(_) => Channel::Full,
            _ => Channel::Bandit,
        }
    }

    pub fn choose<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Play> {
        Ok(match self {
            Player::CornerEstimator(c) => Play::float(c.choose(rng)),
            Player::DigitDecoder(p) => return p.choose(),
            Player::Hedge(h) => Play::float(h.distribution()),
            Player::Exp3(e) => Play::float(e.choose(rng)),
            Player::FixedPoint(w) => Play::float(w.clone()),
        })
    }

    pub fn observe(&mut self, feedback: Feedback<'_>) -> Result<()> {
        match (self, feedback) {
            (Player::CornerEstimator(c), Feedback::Scalar(v)) => c.observe(v),
            (Player::Exp3(e), Feedback::Scalar(v)) => e.observe(v),
            (Player::FixedPoint(_), _) => Ok(()),
            (Player::Hedge(h), Feedback::Full(x)) => h.update(x),
            (Player::DigitDecoder(p), Feedback::Exact(v)) => p.observe(v),
            (p, f) => Err(Error::ChannelMismatch(format!(
                "{} cannot consume {} feedback",
                p.kind_name(),
                match f {
                    Feedback::Scalar(_) => "floating scalar",
                    Feedback::Exact(_) => "exact scalar",
                    Feedback::Full(_) => "full-vector",
                }
            ))),
        }
    }

    /// Final answer for players that produce one.
    pub fn finalize(&self, domain: &Domain) -> Option<Result<Vec<f64>>> {
        match self {
            Player::CornerEstimator(c) => Some(c.finalize(domain)),
            _ => None,
        }
    }
}

fn require_simplex(domain: &Domain, who: &str) -> Result<()> {
    if domain.kind() != DomainKind::Simplex {
        return Err(Error::Incompatible(format!(
            "{who} plays on the simplex, not on {}",
            domain.kind()
        )));
    }
    Ok(())
}
