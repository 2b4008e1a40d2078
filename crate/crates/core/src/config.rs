//! JSON experiment configuration, "auto" resolution and run manifests.
//!
//! Unknown keys are rejected everywhere. Every "auto" value is resolved
//! per grid cell and recorded numerically in the manifest.

use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::adversary::{
    select_mu, shrink_to_bounded, BinarySequence, BinarySource, Construction, ConstructionKind,
    LossModel, Secret, DEFAULT_SHRINK_P,
};
use crate::analysis::{lower_bound_reference, BoundKind};
use crate::error::{Error, Result};
use crate::geometry::{Domain, DomainKind};
use crate::harness::{Protocol, Trial};
use crate::player::{digit_depth, exp3_arms, Exp3, Hedge, Player};

/// Calibration draws used by the bounded-loss wrapper when unspecified.
pub const DEFAULT_CALIBRATION_SAMPLES: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(rename_all = "lowercase")]
enum AutoTag {
    Auto,
}

/// A value or the literal string `"auto"`; absent means auto.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
#[derive(Default)]
pub enum AutoOr<T> {
    #[serde(with = "auto_tag")]
    #[default]
    Auto,
    Value(T),
}

mod auto_tag {
    use super::AutoTag;
    use serde::{Deserialize, Deserializer};

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        AutoTag::deserialize(d).map(|_| ())
    }
}


impl<T: Clone> AutoOr<T> {
    pub fn value(&self) -> Option<T> {
        match self {
            AutoOr::Auto => None,
            AutoOr::Value(v) => Some(v.clone()),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainParams {
    #[serde(default)]
    pub shift: Option<Vec<f64>>,
    #[serde(default)]
    pub cap: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub kind: DomainKind,
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub params: DomainParams,
}

impl DomainSpec {
    pub fn build(&self, dim: usize) -> Result<Domain> {
        if let Some(d) = self.dim {
            if d != dim {
                return Err(Error::Config(format!("domain dim {d} conflicts with grid dim {dim}")));
            }
        }
        let p = &self.params;
        let unused = |name: &str, present: bool| {
            if present {
                Err(Error::Config(format!("{} takes no `{name}` parameter", self.kind)))
            } else {
                Ok(())
            }
        };
        match self.kind {
            DomainKind::ShiftedBall => {
                unused("cap", p.cap.is_some())?;
                Domain::shifted_ball(dim, p.shift.clone())
            }
            DomainKind::CappedBall => {
                unused("shift", p.shift.is_some())?;
                let cap = p.cap.ok_or_else(|| Error::Config("capped_ball needs params.cap".into()))?;
                Domain::capped_ball(dim, cap)
            }
            kind => {
                unused("shift", p.shift.is_some())?;
                unused("cap", p.cap.is_some())?;
                match kind {
                    DomainKind::UnitBall => Domain::unit_ball(dim),
                    DomainKind::Cylinder => Domain::cylinder(dim),
                    DomainKind::Simplex => Domain::simplex(dim),
                    DomainKind::L1Ball => Domain::l1_ball(dim),
                    DomainKind::Hypercube => Domain::hypercube(dim),
                    _ => unreachable!(),
                }
            }
        }
    }

    /// Builds using the spec's own `dim`.
    pub fn build_standalone(&self) -> Result<Domain> {
        let dim = self.dim.ok_or_else(|| Error::Config("domain spec needs `dim`".into()))?;
        self.build(dim)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Diagonal,
    FirstAxis,
}

/// Mean of a generic Gaussian: an explicit vector, or a norm along a
/// direction. `norm_rate: k` means `||m||_2 = k sqrt(D/T)`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum MeanSpec {
    Vector(Vec<f64>),
    Shaped(ShapedMean),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapedMean {
    #[serde(default)]
    pub norm: Option<f64>,
    #[serde(default)]
    pub norm_rate: Option<f64>,
    pub direction: Direction,
}

/// Per-coordinate variance: one number for all coordinates, a vector, or
/// `{"total": s}` for `s / D` per coordinate.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum VarianceSpec {
    Scalar(f64),
    Vector(Vec<f64>),
    Total(TotalVariance),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TotalVariance {
    pub total: f64,
}

impl Default for VarianceSpec {
    fn default() -> Self {
        VarianceSpec::Scalar(0.0)
    }
}

/// Probability of a one: shared or per coordinate.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ProbSpec {
    Scalar(f64),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AdversarySpec {
    GenericGaussian {
        mean: MeanSpec,
        #[serde(default, alias = "scale")]
        variance: VarianceSpec,
        #[serde(default)]
        dim: Option<usize>,
    },
    ShiftedBallConstruction {
        #[serde(default)]
        mu: AutoOr<f64>,
        #[serde(default)]
        sigma: Option<Vec<i8>>,
        #[serde(default)]
        dim: Option<usize>,
    },
    CylinderConstruction {
        #[serde(default)]
        mu: AutoOr<f64>,
        #[serde(default)]
        sigma: Option<Vec<i8>>,
        #[serde(default)]
        dim: Option<usize>,
    },
    SimplexConstruction {
        #[serde(default)]
        mu: AutoOr<f64>,
        #[serde(default, rename = "J", alias = "j")]
        j: Option<usize>,
        #[serde(default)]
        dim: Option<usize>,
    },
    HypercubeConstruction {
        #[serde(default)]
        mu: AutoOr<f64>,
        #[serde(default)]
        sigma: Option<Vec<i8>>,
        #[serde(default)]
        dim: Option<usize>,
    },
    BinarySequence {
        #[serde(default)]
        p_one: Option<ProbSpec>,
        #[serde(default)]
        rows: Option<Vec<Vec<u8>>>,
        #[serde(default)]
        dim: Option<usize>,
    },
    ShrinkToBounded {
        inner: Box<AdversarySpec>,
        #[serde(default)]
        p: AutoOr<f64>,
        #[serde(default)]
        calibration_samples: Option<usize>,
    },
}

/// Numeric values an adversary spec resolved to at one cell.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ResolvedAdversary {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variance: Option<Vec<f64>>,
    /// `sqrt(E ||x||^2)` when exact.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub second_moment_root: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inner: Option<Box<ResolvedAdversary>>,
}

impl AdversarySpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            AdversarySpec::GenericGaussian { .. } => "generic_gaussian",
            AdversarySpec::ShiftedBallConstruction { .. } => "shifted_ball_construction",
            AdversarySpec::CylinderConstruction { .. } => "cylinder_construction",
            AdversarySpec::SimplexConstruction { .. } => "simplex_construction",
            AdversarySpec::HypercubeConstruction { .. } => "hypercube_construction",
            AdversarySpec::BinarySequence { .. } => "binary_sequence",
            AdversarySpec::ShrinkToBounded { .. } => "shrink_to_bounded",
        }
    }

    /// Construction kind, looking through the bounded-loss wrapper.
    pub fn construction(&self) -> Option<ConstructionKind> {
        match self {
            AdversarySpec::ShiftedBallConstruction { .. } => Some(ConstructionKind::ShiftedBall),
            AdversarySpec::CylinderConstruction { .. } => Some(ConstructionKind::Cylinder),
            AdversarySpec::SimplexConstruction { .. } => Some(ConstructionKind::Simplex),
            AdversarySpec::HypercubeConstruction { .. } => Some(ConstructionKind::Hypercube),
            _ => None,
        }
    }

    fn declared_dim(&self) -> Option<usize> {
        match self {
            AdversarySpec::GenericGaussian { dim, .. }
            | AdversarySpec::ShiftedBallConstruction { dim, .. }
            | AdversarySpec::CylinderConstruction { dim, .. }
            | AdversarySpec::SimplexConstruction { dim, .. }
            | AdversarySpec::HypercubeConstruction { dim, .. }
            | AdversarySpec::BinarySequence { dim, .. } => *dim,
            AdversarySpec::ShrinkToBounded { inner, .. } => inner.declared_dim(),
        }
    }

    /// Model for one repetition at ambient dimension `dim` and horizon `t`.
    /// Hidden parameters not fixed by the spec are drawn from `rng`.
    pub fn build(
        &self,
        domain: &Domain,
        t: u64,
        rng: &mut ChaCha8Rng,
    ) -> Result<(LossModel, ResolvedAdversary)> {
        let dim = domain.dim();
        if let Some(d) = self.declared_dim() {
            if d != dim {
                return Err(Error::Config(format!(
                    "adversary dim {d} conflicts with domain dim {dim}"
                )));
            }
        }
        let mut res = ResolvedAdversary { kind: self.kind_name().into(), ..Default::default() };
        let model = match self {
            AdversarySpec::GenericGaussian { mean, variance, .. } => {
                let m = resolve_mean(mean, dim, t)?;
                let v = resolve_variance(variance, dim)?;
                let model = LossModel::gaussian(m.clone(), v.clone())?;
                res.mean = Some(m);
                res.variance = Some(v);
                model
            }
            AdversarySpec::ShiftedBallConstruction { mu, sigma, .. }
            | AdversarySpec::CylinderConstruction { mu, sigma, .. }
            | AdversarySpec::HypercubeConstruction { mu, sigma, .. } => {
                let kind = self.construction().expect("construction");
                let mu = resolve_mu(kind, mu, dim, t)?;
                res.mu = Some(mu);
                let c = match sigma {
                    Some(s) => Construction::new(kind, dim, mu, Secret::Signs(s.clone()))?,
                    None => Construction::with_random_secret(kind, dim, mu, rng)?,
                };
                LossModel::Construction(c)
            }
            AdversarySpec::SimplexConstruction { mu, j, .. } => {
                let kind = ConstructionKind::Simplex;
                let mu = resolve_mu(kind, mu, dim, t)?;
                res.mu = Some(mu);
                let c = match j {
                    Some(j) => Construction::new(kind, dim, mu, Secret::Index(*j))?,
                    None => Construction::with_random_secret(kind, dim, mu, rng)?,
                };
                LossModel::Construction(c)
            }
            AdversarySpec::BinarySequence { p_one, rows, .. } => {
                let source = match (p_one, rows) {
                    (Some(_), Some(_)) => {
                        return Err(Error::Config("binary_sequence takes p_one or rows, not both".into()))
                    }
                    (_, Some(rows)) => BinarySource::List(rows.clone()),
                    (Some(ProbSpec::Vector(p)), None) => BinarySource::Bernoulli(p.clone()),
                    (Some(ProbSpec::Scalar(p)), None) => BinarySource::Bernoulli(vec![*p; dim]),
                    (None, None) => BinarySource::Bernoulli(vec![0.5; dim]),
                };
                LossModel::Binary(BinarySequence::new(dim, source)?)
            }
            AdversarySpec::ShrinkToBounded { inner, p, calibration_samples } => {
                let (inner_model, inner_res) = inner.build(domain, t, rng)?;
                let p = p.value().unwrap_or(DEFAULT_SHRINK_P);
                let n = calibration_samples.unwrap_or(DEFAULT_CALIBRATION_SAMPLES);
                res.p = Some(p);
                res.inner = Some(Box::new(inner_res));
                shrink_to_bounded(inner_model, domain, t, p, n, rng)?
            }
        };
        res.second_moment_root = model.second_moment().map(f64::sqrt);
        Ok((model, res))
    }
}

fn resolve_mu(kind: ConstructionKind, mu: &AutoOr<f64>, dim: usize, t: u64) -> Result<f64> {
    match mu {
        AutoOr::Value(v) => Ok(*v),
        AutoOr::Auto => select_mu(kind, kind.effective_dim(dim), t),
    }
}

fn resolve_mean(spec: &MeanSpec, dim: usize, t: u64) -> Result<Vec<f64>> {
    match spec {
        MeanSpec::Vector(v) => {
            if v.len() != dim {
                return Err(Error::Config(format!("mean has {} entries, dim is {dim}", v.len())));
            }
            Ok(v.clone())
        }
        MeanSpec::Shaped(s) => {
            let norm = match (s.norm, s.norm_rate) {
                (Some(n), None) => n,
                (None, Some(k)) => k * (dim as f64 / t as f64).sqrt(),
                _ => return Err(Error::Config("mean needs exactly one of norm, norm_rate".into())),
            };
            Ok(match s.direction {
                Direction::Diagonal => vec![norm / (dim as f64).sqrt(); dim],
                Direction::FirstAxis => {
                    let mut m = vec![0.0; dim];
                    m[0] = norm;
                    m
                }
            })
        }
    }
}

fn resolve_variance(spec: &VarianceSpec, dim: usize) -> Result<Vec<f64>> {
    match spec {
        VarianceSpec::Scalar(v) => Ok(vec![*v; dim]),
        VarianceSpec::Vector(v) => {
            if v.len() != dim {
                return Err(Error::Config(format!("variance has {} entries, dim is {dim}", v.len())));
            }
            Ok(v.clone())
        }
        VarianceSpec::Total(t) => Ok(vec![t.total / dim as f64; dim]),
    }
}

/// Fixed point: an explicit vector or `"e1"` for `(1, 0, ..., 0)`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum PointSpec {
    Named(NamedPoint),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedPoint {
    E1,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlayerSpec {
    CornerEstimator {
        #[serde(default)]
        mu: AutoOr<f64>,
    },
    DigitDecoder {
        #[serde(default)]
        p: AutoOr<u32>,
        #[serde(default)]
        eta: AutoOr<f64>,
    },
    Hedge {
        #[serde(default)]
        eta: AutoOr<f64>,
    },
    Exp3 {
        #[serde(default)]
        eta: AutoOr<f64>,
        #[serde(default)]
        gamma: Option<f64>,
    },
    FixedPoint {
        w: PointSpec,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ResolvedPlayer {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arms: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<f64>>,
}

impl PlayerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            PlayerSpec::CornerEstimator { .. } => "corner_estimator",
            PlayerSpec::DigitDecoder { .. } => "digit_decoder",
            PlayerSpec::Hedge { .. } => "hedge",
            PlayerSpec::Exp3 { .. } => "exp3",
            PlayerSpec::FixedPoint { .. } => "fixed_point",
        }
    }

    pub fn build(&self, domain: &Domain, t: u64) -> Result<(Player, ResolvedPlayer)> {
        let mut res = ResolvedPlayer { kind: self.kind_name().into(), ..Default::default() };
        let player = match self {
            PlayerSpec::CornerEstimator { mu } => {
                let p = Player::corner_estimator(domain, mu.value())?;
                if let Player::CornerEstimator(c) = &p {
                    res.mu = Some(c.mu());
                }
                p
            }
            PlayerSpec::DigitDecoder { p, eta } => {
                let depth = p.value().unwrap_or_else(|| digit_depth(t));
                let eta = eta.value().unwrap_or_else(|| Hedge::default_eta(domain.dim(), t));
                res.p = Some(depth);
                res.eta = Some(eta);
                Player::digit_decoder(domain, t, Some(depth), Some(eta))?
            }
            PlayerSpec::Hedge { eta } => {
                let eta = eta.value().unwrap_or_else(|| Hedge::default_eta(domain.dim(), t));
                res.eta = Some(eta);
                Player::hedge(domain, t, Some(eta))?
            }
            PlayerSpec::Exp3 { eta, gamma } => {
                let k = exp3_arms(domain)?.len();
                let eta = eta.value().unwrap_or_else(|| Exp3::default_eta(k, t));
                let gamma = gamma.unwrap_or(0.0);
                res.eta = Some(eta);
                res.gamma = Some(gamma);
                res.arms = Some(k);
                Player::exp3(domain, t, Some(eta), gamma)?
            }
            PlayerSpec::FixedPoint { w } => {
                let w = match w {
                    PointSpec::Vector(v) => v.clone(),
                    PointSpec::Named(NamedPoint::E1) => {
                        let mut e = vec![0.0; domain.dim()];
                        e[0] = 1.0;
                        e
                    }
                };
                if w.len() != domain.dim() {
                    return Err(Error::DimensionMismatch { expected: domain.dim(), got: w.len() });
                }
                if !domain.contains(&w, 1e-9)? {
                    return Err(Error::Incompatible("fixed point lies outside the domain".into()));
                }
                res.w = Some(w.clone());
                Player::fixed_point(domain, w)?
            }
        };
        Ok((player, res))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(alias = "d")]
    pub dims: Vec<usize>,
    #[serde(alias = "T")]
    pub horizons: Vec<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment_id: String,
    pub domain: DomainSpec,
    pub adversary: AdversarySpec,
    pub player: PlayerSpec,
    pub grid: GridSpec,
    pub repetitions: usize,
    pub master_seed: u64,
    #[serde(deserialize_with = "de_protocol")]
    pub protocol: Protocol,
    #[serde(default)]
    pub output_dir: Option<String>,
    /// Force per-round trajectories on or off.
    #[serde(default)]
    pub trajectory: Option<bool>,
    /// `c` with `E||x||^2 <= c^2` for models without an exact second moment.
    #[serde(default)]
    pub bound_constant: Option<f64>,
}

fn de_protocol<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Protocol, D::Error> {
    let s = String::deserialize(d)?;
    Protocol::parse(&s)
        .ok_or_else(|| serde::de::Error::custom(format!("protocol must be regret or error, got {s}")))
}

/// Everything resolved for one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedCell {
    pub dim: usize,
    #[serde(rename = "T")]
    pub horizon: u64,
    pub adversary: ResolvedAdversary,
    pub player: ResolvedPlayer,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower_bound_kind: Option<BoundKind>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_value(v)
    }

    /// Accepts a config or a manifest written by a previous run.
    pub fn from_value(v: Value) -> Result<Self> {
        let v = match v {
            Value::Object(mut m) if m.contains_key("resolved") && m.contains_key("config") => {
                m.remove("config").expect("checked")
            }
            v => v,
        };
        let cfg: ExperimentConfig =
            serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, Value)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let v: Value = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        let raw = match &v {
            Value::Object(m) if m.contains_key("resolved") && m.contains_key("config") => {
                m["config"].clone()
            }
            _ => v.clone(),
        };
        Ok((Self::from_value(v)?, raw))
    }

    fn validate(&self) -> Result<()> {
        if self.experiment_id.is_empty() {
            return Err(Error::Config("experiment_id must be nonempty".into()));
        }
        if self.grid.dims.is_empty() || self.grid.horizons.is_empty() {
            return Err(Error::Config("grid must list at least one dim and one horizon".into()));
        }
        if self.grid.dims.contains(&0) || self.grid.horizons.contains(&0) {
            return Err(Error::Config("grid dims and horizons must be positive".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        Ok(())
    }

    /// Grid cells in run order: dims outer, horizons inner.
    pub fn cells(&self) -> Vec<(usize, u64)> {
        let mut out = Vec::new();
        for &d in &self.grid.dims {
            for &t in &self.grid.horizons {
                out.push((d, t));
            }
        }
        out
    }

    /// Builds one repetition's domain, model and player.
    pub fn build_trial(
        &self,
        dim: usize,
        t: u64,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Trial, ResolvedCell)> {
        let domain = self.domain.build(dim)?;
        let (model, adv) = self.adversary.build(&domain, t, rng)?;
        let (player, pl) = self.player.build(&domain, t)?;
        crate::harness::check_compatible(&domain, &model, &player)?;
        let c = self.bound_constant.or(adv.second_moment_root);
        let upper_bound = self.upper_bound(dim, t, c);
        let (lower_bound, lower_bound_kind) = match self.adversary.construction() {
            Some(kind) => match lower_bound_reference(kind, dim, t) {
                Ok(lb) => match (self.protocol, lb.kind) {
                    (Protocol::Regret, _) => (Some(lb.regret_equivalent()), Some(lb.kind)),
                    (Protocol::Error, BoundKind::Error) => (Some(lb.value), Some(lb.kind)),
                    (Protocol::Error, BoundKind::Regret) => (None, None),
                },
                Err(_) => (None, None),
            },
            None => (None, None),
        };
        let cell = ResolvedCell {
            dim,
            horizon: t,
            adversary: adv,
            player: pl,
            upper_bound,
            lower_bound,
            lower_bound_kind,
        };
        Ok((Trial { domain, model, player }, cell))
    }

    fn upper_bound(&self, dim: usize, t: u64, c: Option<f64>) -> Option<f64> {
        let (d, tf) = (dim as f64, t as f64);
        match (&self.player, self.protocol) {
            (PlayerSpec::CornerEstimator { .. }, Protocol::Error) => c.map(|c| 2.0 * c * (d / tf).sqrt()),
            (PlayerSpec::Hedge { .. }, Protocol::Regret) if dim >= 2 => Some(2.0 * (tf * d.ln()).sqrt()),
            (PlayerSpec::DigitDecoder { .. }, Protocol::Regret) if dim >= 2 => {
                Some(2.0 * (tf * d.ln()).sqrt() + 2.0)
            }
            _ => None,
        }
    }

    /// Resolves every cell once (secrets drawn from a throwaway stream).
    /// Fails before any run when a cell is invalid or incompatible.
    pub fn resolve_all(&self) -> Result<Vec<ResolvedCell>> {
        self.cells()
            .into_iter()
            .map(|(d, t)| {
                let mut rng = crate::harness::secret_rng(crate::harness::derive_seed(
                    self.master_seed,
                    d,
                    t,
                    0,
                ));
                self.build_trial(d, t, &mut rng).map(|(_, cell)| cell)
            })
            .collect()
    }
}

/// `{config, resolved}` document written next to the results.
pub fn manifest(raw_config: &Value, resolved: &[ResolvedCell], master_seed: u64) -> Value {
    let mut config = raw_config.clone();
    if let Value::Object(m) = &mut config {
        m.insert("master_seed".into(), json!(master_seed));
    }
    json!({ "config": config, "resolved": resolved })
}
