//! Loss models: generic Gaussians, the four lower-bound constructions,
//! binary loss sequences, the bounded-loss wrapper and a validity checker.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, Error, Result};
use crate::geometry::Domain;

/// Tail grid used when the caller does not supply one.
pub const DEFAULT_Z_GRID: [f64; 4] = [1.0, 1.5, 2.0, 3.0];

/// Smallest sample count accepted by [`check_validity`].
pub const MIN_VALIDITY_SAMPLES: usize = 10_000;

/// Default scaling parameter of the bounded-loss wrapper.
pub const DEFAULT_SHRINK_P: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstructionKind {
    ShiftedBall,
    Cylinder,
    Simplex,
    Hypercube,
}

impl ConstructionKind {
    pub const ALL: [ConstructionKind; 4] = [
        ConstructionKind::ShiftedBall,
        ConstructionKind::Cylinder,
        ConstructionKind::Simplex,
        ConstructionKind::Hypercube,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConstructionKind::ShiftedBall => "shifted_ball_construction",
            ConstructionKind::Cylinder => "cylinder_construction",
            ConstructionKind::Simplex => "simplex_construction",
            ConstructionKind::Hypercube => "hypercube_construction",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s || k.short_name() == s)
    }

    /// Name without the `_construction` suffix.
    pub fn short_name(self) -> &'static str {
        match self {
            ConstructionKind::ShiftedBall => "shifted_ball",
            ConstructionKind::Cylinder => "cylinder",
            ConstructionKind::Simplex => "simplex",
            ConstructionKind::Hypercube => "hypercube",
        }
    }

    /// Effective dimension `d` for ambient dimension `dim`.
    pub fn effective_dim(self, dim: usize) -> usize {
        match self {
            ConstructionKind::Simplex => dim,
            _ => dim.saturating_sub(1),
        }
    }

    /// Upper limit on `mu` for effective dimension `d`.
    pub fn mu_cap(self, d: usize) -> f64 {
        let d = d as f64;
        match self {
            ConstructionKind::ShiftedBall => 1.0 / (2.0 * d.sqrt()),
            ConstructionKind::Cylinder => 1.0 / (4.0 * d.sqrt()),
            ConstructionKind::Simplex => 0.5,
            ConstructionKind::Hypercube => 1.0 / (4.0 * d),
        }
    }

    /// Smallest admissible horizon for effective dimension `d`.
    pub fn min_horizon(self, d: usize) -> f64 {
        let d4 = (d as f64).powi(4);
        match self {
            ConstructionKind::Cylinder => d4 / 16.0,
            ConstructionKind::Hypercube => d4 / 4.0,
            _ => 1.0,
        }
    }

    /// Domain the construction is designed against, in ambient dimension `dim`.
    pub fn natural_domain(self, dim: usize) -> Result<Domain> {
        match self {
            ConstructionKind::ShiftedBall => Domain::shifted_ball(dim, None),
            ConstructionKind::Cylinder => Domain::cylinder(dim),
            ConstructionKind::Simplex => Domain::simplex(dim),
            ConstructionKind::Hypercube => Domain::hypercube(dim),
        }
    }
}

impl fmt::Display for ConstructionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Scale `mu` for a construction at effective dimension `d` and horizon `t`.
pub fn select_mu(kind: ConstructionKind, d: usize, t: u64) -> Result<f64> {
    if d == 0 || t == 0 {
        return Err(Error::InvalidParameter("d and T must be at least 1".into()));
    }
    let (df, tf) = (d as f64, t as f64);
    if tf < kind.min_horizon(d) {
        return Err(Error::Precondition(format!(
            "{kind} needs T >= {} at d = {d}, got T = {t}",
            kind.min_horizon(d)
        )));
    }
    Ok(match kind {
        ConstructionKind::ShiftedBall => {
            let r = (df / (144.0 * tf)).sqrt();
            if 1.0 / df.sqrt() > r {
                0.5 * r
            } else {
                1.0 / (2.0 * df.sqrt())
            }
        }
        ConstructionKind::Cylinder => (df / tf).sqrt() / 16.0,
        ConstructionKind::Simplex => {
            if tf >= df / 4.0 {
                0.25 * (df / tf).sqrt()
            } else {
                0.5
            }
        }
        ConstructionKind::Hypercube => 0.125 / tf.sqrt(),
    })
}

/// Hidden parameter of a construction: a sign vector or a 1-based index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Secret {
    Signs(Vec<i8>),
    Index(usize),
}

impl Secret {
    pub fn random<R: Rng + ?Sized>(kind: ConstructionKind, d: usize, rng: &mut R) -> Self {
        match kind {
            ConstructionKind::Simplex => Secret::Index(rng.random_range(1..=d)),
            _ => Secret::Signs((0..d).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect()),
        }
    }
}

impl fmt::Display for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Secret::Signs(s) => {
                for &v in s {
                    f.write_str(if v > 0 { "+" } else { "-" })?;
                }
                Ok(())
            }
            Secret::Index(j) => write!(f, "J={j}"),
        }
    }
}

/// One of the four lower-bound loss distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct Construction {
    kind: ConstructionKind,
    dim: usize,
    mu: f64,
    secret: Secret,
}

impl Construction {
    pub fn new(kind: ConstructionKind, dim: usize, mu: f64, secret: Secret) -> Result<Self> {
        let min_dim = if kind == ConstructionKind::Simplex { 1 } else { 2 };
        if dim < min_dim {
            return Err(Error::InvalidParameter(format!("{kind} needs D >= {min_dim}, got {dim}")));
        }
        let d = kind.effective_dim(dim);
        let cap = kind.mu_cap(d);
        if !(mu.is_finite() && mu >= 0.0 && mu <= cap * (1.0 + 1e-12)) {
            return Err(Error::InvalidParameter(format!(
                "{kind} needs 0 <= mu <= {cap} at d = {d}, got {mu}"
            )));
        }
        match (&secret, kind) {
            (Secret::Index(j), ConstructionKind::Simplex) => {
                if *j < 1 || *j > d {
                    return Err(Error::InvalidParameter(format!("J must lie in 1..={d}, got {j}")));
                }
            }
            (Secret::Signs(s), k) if k != ConstructionKind::Simplex => {
                check_dim(d, s.len())?;
                if s.iter().any(|&v| v != 1 && v != -1) {
                    return Err(Error::InvalidParameter("sign entries must be +1 or -1".into()));
                }
            }
            _ => {
                return Err(Error::InvalidParameter(format!("wrong secret type for {kind}")));
            }
        }
        Ok(Construction { kind, dim, mu, secret })
    }

    /// Draws the secret from `rng` and builds the construction.
    pub fn with_random_secret<R: Rng + ?Sized>(
        kind: ConstructionKind,
        dim: usize,
        mu: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let secret = Secret::random(kind, kind.effective_dim(dim), rng);
        Self::new(kind, dim, mu, secret)
    }

    pub fn kind(&self) -> ConstructionKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn secret(&self) -> &Secret {
        &self.secret
    }

    fn signed_mu(&self, i: usize) -> f64 {
        match &self.secret {
            Secret::Signs(s) => self.mu * s[i] as f64,
            Secret::Index(_) => unreachable!("sign access on an index secret"),
        }
    }

    /// Per-coordinate means and variances.
    fn moments(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.kind.effective_dim(self.dim);
        let df = d as f64;
        match self.kind {
            ConstructionKind::Simplex => {
                let j = match self.secret {
                    Secret::Index(j) => j,
                    Secret::Signs(_) => unreachable!(),
                };
                let mut m = vec![0.0; self.dim];
                m[j - 1] = -self.mu;
                (m, vec![0.25; self.dim])
            }
            kind => {
                let (m0, v0, vt) = match kind {
                    ConstructionKind::ShiftedBall => (0.0, 1.0 / 36.0, 0.0),
                    ConstructionKind::Cylinder => (-0.25, 1.0 / 16.0, 1.0 / (16.0 * df)),
                    ConstructionKind::Hypercube => (-0.25, 1.0 / 16.0, 1.0 / (16.0 * df * df)),
                    ConstructionKind::Simplex => unreachable!(),
                };
                let mut m = vec![m0];
                m.extend((0..d).map(|i| self.signed_mu(i)));
                let mut v = vec![v0];
                v.extend(std::iter::repeat_n(vt, d));
                (m, v)
            }
        }
    }
}

/// Where a binary loss sequence comes from.
#[derive(Clone)]
pub enum BinarySource {
    /// A fixed list of rows.
    List(Vec<Vec<u8>>),
    /// Independent Bernoulli coordinates with the given probabilities of a one.
    Bernoulli(Vec<f64>),
    /// `f(t)` gives the row for round `t` (0-based).
    Callback(Arc<dyn Fn(usize) -> Vec<u8> + Send + Sync>),
}

impl fmt::Debug for BinarySource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BinarySource::List(rows) => f.debug_tuple("List").field(&rows.len()).finish(),
            BinarySource::Bernoulli(p) => f.debug_tuple("Bernoulli").field(p).finish(),
            BinarySource::Callback(_) => f.write_str("Callback"),
        }
    }
}

/// An oblivious sequence of loss vectors in `{0,1}^D`.
#[derive(Debug, Clone)]
pub struct BinarySequence {
    dim: usize,
    source: BinarySource,
    emitted: usize,
    counts: Vec<u64>,
}

impl BinarySequence {
    pub fn new(dim: usize, source: BinarySource) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        match &source {
            BinarySource::List(rows) => {
                for row in rows {
                    check_dim(dim, row.len())?;
                    if row.iter().any(|&b| b > 1) {
                        return Err(Error::InvalidParameter("binary rows must be 0/1".into()));
                    }
                }
            }
            BinarySource::Bernoulli(p) => {
                check_dim(dim, p.len())?;
                if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::InvalidParameter("probabilities must lie in [0, 1]".into()));
                }
            }
            BinarySource::Callback(_) => {}
        }
        Ok(BinarySequence { dim, source, emitted: 0, counts: vec![0; dim] })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn emitted(&self) -> usize {
        self.emitted
    }

    /// Next row of the sequence.
    pub fn next_row<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Vec<u8>> {
        let row = match &self.source {
            BinarySource::List(rows) => rows
                .get(self.emitted)
                .cloned()
                .ok_or(Error::SequenceExhausted(rows.len()))?,
            BinarySource::Bernoulli(p) => p.iter().map(|&q| rng.random_bool(q) as u8).collect(),
            BinarySource::Callback(f) => {
                let row = f(self.emitted);
                check_dim(self.dim, row.len())?;
                if row.iter().any(|&b| b > 1) {
                    return Err(Error::InvalidParameter("callback produced a non-binary row".into()));
                }
                row
            }
        };
        for (c, &b) in self.counts.iter_mut().zip(&row) {
            *c += b as u64;
        }
        self.emitted += 1;
        Ok(row)
    }

    /// Average of the rows emitted so far (zero before the first row).
    pub fn running_mean(&self) -> Vec<f64> {
        if self.emitted == 0 {
            return vec![0.0; self.dim];
        }
        self.counts.iter().map(|&c| c as f64 / self.emitted as f64).collect()
    }
}

/// The bounded-loss wrapper around a model with an exact mean.
#[derive(Debug, Clone)]
pub struct ShrinkToBounded {
    inner: Box<LossModel>,
    domain: Domain,
    p: f64,
    horizon: u64,
    scale: f64,
    clamp_value: Vec<f64>,
    calibration_samples: usize,
    clamp_probability: f64,
}

impl ShrinkToBounded {
    pub fn inner(&self) -> &LossModel {
        &self.inner
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    /// The factor `1/(p sqrt(ln T))` applied to every inner sample.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Value emitted whenever a scaled sample has dual norm above one half.
    pub fn clamp_value(&self) -> &[f64] {
        &self.clamp_value
    }

    pub fn calibration_samples(&self) -> usize {
        self.calibration_samples
    }

    /// Fraction of calibration draws that would have been clamped.
    pub fn clamp_probability(&self) -> f64 {
        self.clamp_probability
    }
}

/// A samplable loss distribution or sequence.
#[derive(Debug, Clone)]
pub enum LossModel {
    /// Independent coordinates `N(mean_i, variance_i)`.
    Gaussian { mean: Vec<f64>, variance: Vec<f64> },
    Construction(Construction),
    Binary(BinarySequence),
    Shrink(ShrinkToBounded),
}

impl LossModel {
    pub fn gaussian(mean: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        if mean.is_empty() {
            return Err(Error::InvalidParameter("mean must be nonempty".into()));
        }
        check_dim(mean.len(), variance.len())?;
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("mean entries must be finite".into()));
        }
        if variance.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter("variances must be finite and nonnegative".into()));
        }
        Ok(LossModel::Gaussian { mean, variance })
    }

    pub fn dim(&self) -> usize {
        match self {
            LossModel::Gaussian { mean, .. } => mean.len(),
            LossModel::Construction(c) => c.dim,
            LossModel::Binary(b) => b.dim,
            LossModel::Shrink(s) => s.inner.dim(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            LossModel::Gaussian { .. } => "generic_gaussian",
            LossModel::Construction(c) => c.kind.as_str(),
            LossModel::Binary(_) => "binary_sequence",
            LossModel::Shrink(_) => "shrink_to_bounded",
        }
    }

    /// True when losses are rows of `{0,1}^D` usable on the exact channel.
    pub fn is_binary(&self) -> bool {
        matches!(self, LossModel::Binary(_))
    }

    /// The construction's hidden parameter, if any.
    pub fn secret(&self) -> Option<&Secret> {
        match self {
            LossModel::Construction(c) => Some(&c.secret),
            LossModel::Shrink(s) => s.inner.secret(),
            _ => None,
        }
    }

    /// One loss vector.
    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Vec<f64>> {
        match self {
            LossModel::Gaussian { mean, variance } => Ok(gaussian_draw(mean, variance, rng)),
            LossModel::Construction(c) => {
                let (m, v) = c.moments();
                Ok(gaussian_draw(&m, &v, rng))
            }
            LossModel::Binary(b) => Ok(b.next_row(rng)?.into_iter().map(f64::from).collect()),
            LossModel::Shrink(s) => {
                let x: Vec<f64> = s.inner.sample(rng)?.into_iter().map(|v| v * s.scale).collect();
                if s.domain.dual_norm(&x)? <= 0.5 {
                    Ok(x)
                } else {
                    Ok(s.clamp_value.clone())
                }
            }
        }
    }

    /// Exact expectation; the running average of emitted rows for sequences.
    pub fn mean(&self) -> Vec<f64> {
        match self {
            LossModel::Gaussian { mean, .. } => mean.clone(),
            LossModel::Construction(c) => c.moments().0,
            LossModel::Binary(b) => b.running_mean(),
            LossModel::Shrink(s) => s.inner.mean().into_iter().map(|v| v * s.scale).collect(),
        }
    }

    /// Exact `E||x||_2^2` for models that have one.
    pub fn second_moment(&self) -> Option<f64> {
        let (m, v) = match self {
            LossModel::Gaussian { mean, variance } => (mean.clone(), variance.clone()),
            LossModel::Construction(c) => c.moments(),
            _ => return None,
        };
        Some(m.iter().map(|x| x * x).sum::<f64>() + v.iter().sum::<f64>())
    }
}

fn gaussian_draw<R: Rng + ?Sized>(mean: &[f64], variance: &[f64], rng: &mut R) -> Vec<f64> {
    mean.iter()
        .zip(variance)
        .map(|(&m, &v)| {
            if v == 0.0 {
                m
            } else {
                let z: f64 = StandardNormal.sample(rng);
                m + v.sqrt() * z
            }
        })
        .collect()
}

/// Tail-check outcome at one threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct TailRow {
    pub z: f64,
    pub exceedances: usize,
    pub frequency: f64,
    /// `2 exp(-z^2/2)`.
    pub bound: f64,
    /// `bound` plus the sampling slack.
    pub threshold: f64,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidityReport {
    pub mean_dual_norm: f64,
    pub mean_check_passed: bool,
    pub tail_samples: usize,
    pub tail: Vec<TailRow>,
    /// Number of grid points whose empirical frequency exceeds its threshold.
    pub tail_violations: usize,
    pub passed: bool,
}

impl fmt::Display for ValidityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mean_dual_norm: {:.6}", self.mean_dual_norm)?;
        writeln!(
            f,
            "mean_check: {}",
            if self.mean_check_passed { "pass" } else { "fail" }
        )?;
        writeln!(f, "tail_samples: {}", self.tail_samples)?;
        writeln!(f, "{:>6} {:>12} {:>12} {:>12} {:>6}", "z", "frequency", "bound", "threshold", "ok")?;
        for r in &self.tail {
            writeln!(
                f,
                "{:>6.3} {:>12.6} {:>12.6} {:>12.6} {:>6}",
                r.z,
                r.frequency,
                r.bound,
                r.threshold,
                if r.violated { "no" } else { "yes" }
            )?;
        }
        writeln!(f, "tail_violations: {}", self.tail_violations)?;
        write!(f, "result: {}", if self.passed { "PASS" } else { "FAIL" })
    }
}

/// Exact mean check plus Monte Carlo sub-Gaussian tail check.
pub fn check_validity<R: Rng + ?Sized>(
    model: &mut LossModel,
    domain: &Domain,
    n_samples: usize,
    z_grid: &[f64],
    rng: &mut R,
) -> Result<ValidityReport> {
    check_dim(domain.dim(), model.dim())?;
    if n_samples < MIN_VALIDITY_SAMPLES {
        return Err(Error::InvalidParameter(format!(
            "validity check needs at least {MIN_VALIDITY_SAMPLES} samples, got {n_samples}"
        )));
    }
    if z_grid.iter().any(|&z| !(z >= 1.0) || !z.is_finite()) {
        return Err(Error::InvalidParameter("tail grid entries must be finite and >= 1".into()));
    }
    let mean_dual_norm = domain.dual_norm(&model.mean())?;
    let mean_check_passed = mean_dual_norm <= 1.0;

    let mut exceed = vec![0usize; z_grid.len()];
    for _ in 0..n_samples {
        let q = domain.dual_norm(&model.sample(rng)?)?;
        for (e, &z) in exceed.iter_mut().zip(z_grid) {
            if q > z {
                *e += 1;
            }
        }
    }
    let n = n_samples as f64;
    let tail: Vec<TailRow> = z_grid
        .iter()
        .zip(&exceed)
        .map(|(&z, &e)| {
            let bound = 2.0 * (-z * z / 2.0).exp();
            let threshold = bound + 3.0 * (bound / n).sqrt();
            let frequency = e as f64 / n;
            TailRow { z, exceedances: e, frequency, bound, threshold, violated: frequency > threshold }
        })
        .collect();
    let tail_violations = tail.iter().filter(|r| r.violated).count();
    Ok(ValidityReport {
        mean_dual_norm,
        mean_check_passed,
        tail_samples: n_samples,
        tail,
        tail_violations,
        passed: mean_check_passed && tail_violations == 0,
    })
}

/// Wraps `model` so that every emitted loss has dual norm at most one
/// (for large enough `p`) while the mean is the scaled inner mean.
pub fn shrink_to_bounded<R: Rng + ?Sized>(
    model: LossModel,
    domain: &Domain,
    horizon: u64,
    p: f64,
    calibration_samples: usize,
    rng: &mut R,
) -> Result<LossModel> {
    check_dim(domain.dim(), model.dim())?;
    if horizon < 2 {
        return Err(Error::InvalidParameter(format!("T must exceed 1, got {horizon}")));
    }
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("p must be positive, got {p}")));
    }
    if model.is_binary() {
        return Err(Error::InvalidParameter("inner model must have an exact mean".into()));
    }
    let scale = 1.0 / (p * (horizon as f64).ln().sqrt());
    let mut inner = model;
    let dim = inner.dim();
    let mut sum = vec![0.0; dim];
    let mut hits = 0usize;
    for _ in 0..calibration_samples {
        let x: Vec<f64> = inner.sample(rng)?.into_iter().map(|v| v * scale).collect();
        if domain.dual_norm(&x)? > 0.5 {
            hits += 1;
            for (s, v) in sum.iter_mut().zip(&x) {
                *s += v;
            }
        }
    }
    let clamp_value: Vec<f64> = if hits == 0 {
        vec![0.0; dim]
    } else {
        sum.iter().map(|s| s / hits as f64).collect()
    };
    let clamp_norm = domain.dual_norm(&clamp_value)?;
    if clamp_norm > 1.0 {
        return Err(Error::Precondition(format!(
            "conditional clamp mean has dual norm {clamp_norm} > 1; increase p"
        )));
    }
    let clamp_probability =
        if calibration_samples == 0 { 0.0 } else { hits as f64 / calibration_samples as f64 };
    Ok(LossModel::Shrink(ShrinkToBounded {
        inner: Box::new(inner),
        domain: domain.clone(),
        p,
        horizon,
        scale,
        clamp_value,
        calibration_samples,
        clamp_probability,
    }))
}
