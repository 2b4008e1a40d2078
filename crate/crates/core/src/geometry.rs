//! Decision domains with closed-form membership, linear minimization,
//! dual-norm and corner-set queries.
//!
//! All queries are pure functions of their inputs. Vectors are plain `f64`
//! slices whose length must equal the ambient dimension of the domain.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{check_dim, Error, Result};

/// Absolute slack used for internal zero/tie comparisons.
pub const EPS: f64 = 1e-12;

/// A compact decision set in `R^D`.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    /// `{w : ||w||_2 <= 1}`.
    UnitBall { dim: usize },
    /// `{a + w : ||w||_2 <= 1}`.
    ShiftedBall { dim: usize, shift: Vec<f64> },
    /// `[-1, 1] x {w in R^(D-1) : ||w||_2 <= 1}`.
    Cylinder { dim: usize },
    /// `{w : ||w||_2 <= 1, w_0 <= cap}` with `cap` in `(0, 1)`.
    CappedBall { dim: usize, cap: f64 },
    /// The probability simplex.
    Simplex { dim: usize },
    /// `{w : ||w||_1 <= 1}`.
    L1Ball { dim: usize },
    /// `[-1, 1]^D`.
    Hypercube { dim: usize },
}

/// Tag-only view of [`Domain`], used in configs and result files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    UnitBall,
    ShiftedBall,
    Cylinder,
    CappedBall,
    Simplex,
    L1Ball,
    Hypercube,
}

impl DomainKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DomainKind::UnitBall => "unit_ball",
            DomainKind::ShiftedBall => "shifted_ball",
            DomainKind::Cylinder => "cylinder",
            DomainKind::CappedBall => "capped_ball",
            DomainKind::Simplex => "simplex",
            DomainKind::L1Ball => "l1_ball",
            DomainKind::Hypercube => "hypercube",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "unit_ball" => DomainKind::UnitBall,
            "shifted_ball" => DomainKind::ShiftedBall,
            "cylinder" => DomainKind::Cylinder,
            "capped_ball" => DomainKind::CappedBall,
            "simplex" => DomainKind::Simplex,
            "l1_ball" => DomainKind::L1Ball,
            "hypercube" => DomainKind::Hypercube,
            _ => return None,
        })
    }
}

impl std::fmt::Display for DomainKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn require_dim(dim: usize) -> Result<()> {
    if dim == 0 {
        return Err(Error::InvalidParameter("dimension must be at least 1".into()));
    }
    Ok(())
}

/// The default shift `(2, 0, ..., 0)`.
pub fn default_shift(dim: usize) -> Vec<f64> {
    let mut a = vec![0.0; dim];
    if dim > 0 {
        a[0] = 2.0;
    }
    a
}

impl Domain {
    pub fn unit_ball(dim: usize) -> Result<Self> {
        require_dim(dim)?;
        Ok(Domain::UnitBall { dim })
    }

    pub fn shifted_ball(dim: usize, shift: Option<Vec<f64>>) -> Result<Self> {
        require_dim(dim)?;
        let shift = shift.unwrap_or_else(|| default_shift(dim));
        check_dim(dim, shift.len())?;
        if shift.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("shift entries must be finite".into()));
        }
        Ok(Domain::ShiftedBall { dim, shift })
    }

    pub fn cylinder(dim: usize) -> Result<Self> {
        require_dim(dim)?;
        Ok(Domain::Cylinder { dim })
    }

    pub fn capped_ball(dim: usize, cap: f64) -> Result<Self> {
        require_dim(dim)?;
        if !(cap > 0.0 && cap < 1.0) {
            return Err(Error::InvalidParameter(format!("cap must lie in (0, 1), got {cap}")));
        }
        Ok(Domain::CappedBall { dim, cap })
    }

    pub fn simplex(dim: usize) -> Result<Self> {
        require_dim(dim)?;
        Ok(Domain::Simplex { dim })
    }

    pub fn l1_ball(dim: usize) -> Result<Self> {
        require_dim(dim)?;
        Ok(Domain::L1Ball { dim })
    }

    pub fn hypercube(dim: usize) -> Result<Self> {
        require_dim(dim)?;
        Ok(Domain::Hypercube { dim })
    }

    pub fn dim(&self) -> usize {
        match *self {
            Domain::UnitBall { dim }
            | Domain::ShiftedBall { dim, .. }
            | Domain::Cylinder { dim }
            | Domain::CappedBall { dim, .. }
            | Domain::Simplex { dim }
            | Domain::L1Ball { dim }
            | Domain::Hypercube { dim } => dim,
        }
    }

    pub fn kind(&self) -> DomainKind {
        match self {
            Domain::UnitBall { .. } => DomainKind::UnitBall,
            Domain::ShiftedBall { .. } => DomainKind::ShiftedBall,
            Domain::Cylinder { .. } => DomainKind::Cylinder,
            Domain::CappedBall { .. } => DomainKind::CappedBall,
            Domain::Simplex { .. } => DomainKind::Simplex,
            Domain::L1Ball { .. } => DomainKind::L1Ball,
            Domain::Hypercube { .. } => DomainKind::Hypercube,
        }
    }

    /// Canonical point returned for a zero loss vector.
    pub fn center(&self) -> Vec<f64> {
        match self {
            Domain::ShiftedBall { shift, .. } => shift.clone(),
            Domain::Simplex { dim } => vec![1.0 / *dim as f64; *dim],
            other => vec![0.0; other.dim()],
        }
    }

    /// Membership up to an additive tolerance on every defining constraint.
    pub fn contains(&self, w: &[f64], tol: f64) -> Result<bool> {
        check_dim(self.dim(), w.len())?;
        if w.iter().any(|v| !v.is_finite()) {
            return Ok(false);
        }
        Ok(match self {
            Domain::UnitBall { .. } => norm2(w) <= 1.0 + tol,
            Domain::ShiftedBall { shift, .. } => {
                let d: f64 = w.iter().zip(shift).map(|(x, a)| (x - a) * (x - a)).sum();
                d.sqrt() <= 1.0 + tol
            }
            Domain::Cylinder { .. } => w[0].abs() <= 1.0 + tol && norm2(&w[1..]) <= 1.0 + tol,
            Domain::CappedBall { cap, .. } => norm2(w) <= 1.0 + tol && w[0] <= cap + tol,
            Domain::Simplex { .. } => {
                w.iter().all(|&v| v >= -tol) && (w.iter().sum::<f64>() - 1.0).abs() <= tol
            }
            Domain::L1Ball { .. } => norm1(w) <= 1.0 + tol,
            Domain::Hypercube { .. } => w.iter().all(|v| v.abs() <= 1.0 + tol),
        })
    }

    /// A minimizer of `<x, w>` over the domain.
    pub fn linear_argmin(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        if is_zero(x) {
            return Ok(self.center());
        }
        Ok(match self {
            Domain::UnitBall { .. } => neg_normalized(x, 1.0),
            Domain::ShiftedBall { shift, .. } => {
                let n = norm2(x);
                shift.iter().zip(x).map(|(a, v)| a - v / n).collect()
            }
            Domain::Cylinder { .. } => {
                let mut w = Vec::with_capacity(x.len());
                w.push(-sign(x[0]));
                w.extend(neg_normalized(&x[1..], 1.0));
                w
            }
            Domain::CappedBall { cap, .. } => {
                let ball = neg_normalized(x, 1.0);
                if ball[0] <= *cap {
                    ball
                } else {
                    let mut w = Vec::with_capacity(x.len());
                    w.push(*cap);
                    w.extend(neg_normalized(&x[1..], (1.0 - cap * cap).sqrt()));
                    w
                }
            }
            Domain::Simplex { dim } => {
                let j = argmin(x);
                let mut w = vec![0.0; *dim];
                w[j] = 1.0;
                w
            }
            Domain::L1Ball { dim } => {
                let j = argmax_abs(x);
                let mut w = vec![0.0; *dim];
                w[j] = -sign(x[j]);
                w
            }
            Domain::Hypercube { .. } => x.iter().map(|&v| -sign(v)).collect(),
        })
    }

    /// `max_{w in W} |<w, x>|`.
    pub fn dual_norm(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(match self {
            Domain::UnitBall { .. } => norm2(x),
            Domain::ShiftedBall { shift, .. } => dot(shift, x).abs() + norm2(x),
            Domain::Cylinder { .. } => x[0].abs() + norm2(&x[1..]),
            Domain::Simplex { .. } | Domain::L1Ball { .. } => {
                x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
            }
            Domain::Hypercube { .. } => norm1(x),
            Domain::CappedBall { .. } => {
                let lo = dot(x, &self.linear_argmin(x)?);
                let neg: Vec<f64> = x.iter().map(|v| -v).collect();
                let hi = -dot(&neg, &self.linear_argmin(&neg)?);
                lo.abs().max(hi.abs())
            }
        })
    }

    /// Largest `mu` with `{-mu, +mu}^D` inside the domain, if any.
    pub fn corner_set_scale(&self) -> Option<f64> {
        let d = self.dim() as f64;
        match self {
            Domain::UnitBall { .. } => Some(1.0 / d.sqrt()),
            Domain::Hypercube { .. } => Some(1.0),
            Domain::Cylinder { dim } => {
                if *dim == 1 {
                    Some(1.0)
                } else {
                    Some(1.0 / ((dim - 1) as f64).sqrt())
                }
            }
            Domain::CappedBall { cap, .. } => Some(cap.min(1.0 / d.sqrt())),
            Domain::L1Ball { .. } => Some(1.0 / d),
            Domain::Simplex { .. } => None,
            Domain::ShiftedBall { shift, .. } => {
                // The farthest corner from `a` is mu*sign(-a): solve
                // D mu^2 + 2 mu ||a||_1 + ||a||^2 = 1 for the positive root.
                let a2: f64 = shift.iter().map(|v| v * v).sum();
                if a2 >= 1.0 {
                    return None;
                }
                let a1 = norm1(shift);
                Some((-a1 + (a1 * a1 + d * (1.0 - a2)).sqrt()) / d)
            }
        }
    }

    /// Draws a point of the domain. Used by sampling oracles and tests;
    /// the distribution is not uniform for every domain.
    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.dim();
        match self {
            Domain::UnitBall { .. } => ball_point(d, 1.0, rng),
            Domain::ShiftedBall { shift, .. } => ball_point(d, 1.0, rng)
                .into_iter()
                .zip(shift)
                .map(|(u, a)| u + a)
                .collect(),
            Domain::Cylinder { .. } => {
                let mut w = vec![rng.random_range(-1.0..=1.0)];
                w.extend(ball_point(d - 1, 1.0, rng));
                w
            }
            Domain::CappedBall { cap, .. } => loop {
                let w = ball_point(d, 1.0, rng);
                if w[0] <= *cap {
                    break w;
                }
            },
            Domain::Simplex { .. } => simplex_point(d, rng),
            Domain::L1Ball { .. } => {
                let r: f64 = rng.random::<f64>().powf(1.0 / d as f64);
                simplex_point(d, rng)
                    .into_iter()
                    .map(|v| if rng.random_bool(0.5) { r * v } else { -r * v })
                    .collect()
            }
            Domain::Hypercube { .. } => (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect(),
        }
    }

    /// Draws a point on the relative boundary or an extreme point; the
    /// maximum of `|<w, x>|` over such draws converges quickly to the dual norm.
    pub fn random_extreme_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.dim();
        match self {
            Domain::UnitBall { .. } => sphere_point(d, 1.0, rng),
            Domain::ShiftedBall { shift, .. } => sphere_point(d, 1.0, rng)
                .into_iter()
                .zip(shift)
                .map(|(u, a)| u + a)
                .collect(),
            Domain::Cylinder { .. } => {
                let mut w = vec![if rng.random_bool(0.5) { 1.0 } else { -1.0 }];
                w.extend(sphere_point(d - 1, 1.0, rng));
                w
            }
            Domain::CappedBall { cap, .. } => {
                let w = sphere_point(d, 1.0, rng);
                if w[0] <= *cap {
                    w
                } else {
                    // Project onto the cap disc rim.
                    let mut out = vec![*cap];
                    let tail = &w[1..];
                    let n = norm2(tail);
                    let r = (1.0 - cap * cap).sqrt();
                    if n > 0.0 {
                        out.extend(tail.iter().map(|v| r * v / n));
                    } else {
                        out.extend(std::iter::repeat_n(0.0, d - 1));
                    }
                    out
                }
            }
            Domain::Simplex { .. } => {
                let mut w = vec![0.0; d];
                w[rng.random_range(0..d)] = 1.0;
                w
            }
            Domain::L1Ball { .. } => {
                let mut w = vec![0.0; d];
                w[rng.random_range(0..d)] = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                w
            }
            Domain::Hypercube { .. } => {
                (0..d).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect()
            }
        }
    }
}

fn ball_point<R: Rng + ?Sized>(d: usize, radius: f64, rng: &mut R) -> Vec<f64> {
    if d == 0 {
        return Vec::new();
    }
    let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
    sphere_point(d, r, rng)
}

fn sphere_point<R: Rng + ?Sized>(d: usize, radius: f64, rng: &mut R) -> Vec<f64> {
    if d == 0 {
        return Vec::new();
    }
    loop {
        let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm2(&g);
        if n > 1e-300 {
            return g.into_iter().map(|v| radius * v / n).collect();
        }
    }
}

fn simplex_point<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    let e: Vec<f64> = (0..d).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn neg_normalized(x: &[f64], radius: f64) -> Vec<f64> {
    let n = norm2(x);
    if n <= EPS {
        return vec![0.0; x.len()];
    }
    x.iter().map(|v| -radius * v / n).collect()
}

fn is_zero(x: &[f64]) -> bool {
    x.iter().all(|v| v.abs() <= EPS)
}

/// Sign with a zero band of width [`EPS`].
pub fn sign(v: f64) -> f64 {
    if v > EPS {
        1.0
    } else if v < -EPS {
        -1.0
    } else {
        0.0
    }
}

fn argmin(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate().skip(1) {
        if v < x[best] - EPS {
            best = i;
        }
    }
    best
}

fn argmax_abs(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in x.iter().enumerate().skip(1) {
        if v.abs() > x[best].abs() + EPS {
            best = i;
        }
    }
    best
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn norm1(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}
