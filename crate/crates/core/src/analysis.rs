//! Scaling-law fits and the numeric diagnostics used by the lower-bound
//! arguments.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::adversary::ConstructionKind;
use crate::error::{Error, Result};

/// One aggregated grid cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMean {
    pub dim: usize,
    pub horizon: u64,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    /// Every cell counts the same.
    #[default]
    Equal,
    /// Cells weighted by `(mean / stderr)^2`, the inverse variance of
    /// `log(mean)` to first order. Cells with zero stderr get the largest
    /// finite weight present.
    InverseVariance,
}

/// `log(mean) ~ log C + alpha log d + beta log T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub alpha: f64,
    pub beta: f64,
    #[serde(rename = "logC")]
    pub log_c: f64,
    pub r2: f64,
    pub cells: usize,
}

pub fn fit_scaling(rows: &[CellMean], weighting: Weighting) -> Result<ScalingFit> {
    let ds: BTreeSet<usize> = rows.iter().map(|r| r.dim).collect();
    let ts: BTreeSet<u64> = rows.iter().map(|r| r.horizon).collect();
    if ds.len() < 3 || ts.len() < 3 {
        return Err(Error::Degenerate(format!(
            "need at least 3 distinct d and 3 distinct T, got {} and {}",
            ds.len(),
            ts.len()
        )));
    }
    if let Some(r) = rows.iter().find(|r| !(r.mean > 0.0) || !r.mean.is_finite()) {
        return Err(Error::Degenerate(format!(
            "mean at d = {}, T = {} is not positive: {}",
            r.dim, r.horizon, r.mean
        )));
    }
    let n = rows.len();
    let weights: Vec<f64> = match weighting {
        Weighting::Equal => vec![1.0; n],
        Weighting::InverseVariance => {
            let raw: Vec<Option<f64>> = rows
                .iter()
                .map(|r| (r.stderr > 0.0).then(|| (r.mean / r.stderr).powi(2)))
                .collect();
            let top = raw.iter().flatten().cloned().fold(0.0, f64::max);
            let top = if top > 0.0 { top } else { 1.0 };
            raw.into_iter().map(|w| w.unwrap_or(top)).collect()
        }
    };
    let y: Vec<f64> = rows.iter().map(|r| r.mean.ln()).collect();
    let mut a = DMatrix::<f64>::zeros(n, 3);
    let mut b = DVector::<f64>::zeros(n);
    for (i, r) in rows.iter().enumerate() {
        let s = weights[i].sqrt();
        a[(i, 0)] = s;
        a[(i, 1)] = s * (r.dim as f64).ln();
        a[(i, 2)] = s * (r.horizon as f64).ln();
        b[i] = s * y[i];
    }
    let coef = a
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| Error::Degenerate(format!("least squares failed: {e}")))?;
    let (log_c, alpha, beta) = (coef[0], coef[1], coef[2]);

    let wsum: f64 = weights.iter().sum();
    let ybar = weights.iter().zip(&y).map(|(w, v)| w * v).sum::<f64>() / wsum;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (i, r) in rows.iter().enumerate() {
        let pred = log_c + alpha * (r.dim as f64).ln() + beta * (r.horizon as f64).ln();
        ss_res += weights[i] * (y[i] - pred).powi(2);
        ss_tot += weights[i] * (y[i] - ybar).powi(2);
    }
    let r2 = if ss_tot > 0.0 { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) } else { 1.0 };
    Ok(ScalingFit { alpha, beta, log_c, r2, cells: n })
}

/// `KL(N(m1, v1) || N(m2, v2))`.
pub fn kl_gaussian(m1: f64, v1: f64, m2: f64, v2: f64) -> Result<f64> {
    if !(v1 > 0.0 && v2 > 0.0) {
        return Err(Error::InvalidParameter("variances must be positive".into()));
    }
    let r = v1 / v2;
    // ln(1/r) - 1 + r is computed as r - 1 - ln(r) via ln_1p for accuracy near r = 1.
    let shape = (r - 1.0) - (r - 1.0).ln_1p();
    Ok(0.5 * (shape + (m2 - m1).powi(2) / v2).max(0.0))
}

/// Upper bound `sqrt(2 kl)` on the integral of `|p - q|` (twice the
/// usual total variation distance).
pub fn pinsker_tv_bound(kl: f64) -> Result<f64> {
    if !(kl >= 0.0) {
        return Err(Error::InvalidParameter(format!("KL must be nonnegative, got {kl}")));
    }
    Ok((2.0 * kl).sqrt())
}

/// Checks `1/(w^2 + 1/d) <= d(1 - |w|) + 1` with `1e-12` slack.
pub fn lemma_dw_check(w: f64, d: u32) -> Result<bool> {
    if !(w.abs() <= 1.0) || d == 0 {
        return Err(Error::InvalidParameter(format!("need |w| <= 1 and d >= 1, got w = {w}, d = {d}")));
    }
    let d = d as f64;
    Ok(1.0 / (w * w + 1.0 / d) <= d * (1.0 - w.abs()) + 1.0 + 1e-12)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Error,
    Regret,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerBound {
    pub value: f64,
    pub kind: BoundKind,
    pub horizon: u64,
}

impl LowerBound {
    /// The bound on cumulative regret; error bounds are multiplied by `T`.
    pub fn regret_equivalent(&self) -> f64 {
        match self.kind {
            BoundKind::Regret => self.value,
            BoundKind::Error => self.value * self.horizon as f64,
        }
    }
}

/// Explicit lower bound the construction proves at ambient dimension `dim`.
pub fn lower_bound_reference(kind: ConstructionKind, dim: usize, horizon: u64) -> Result<LowerBound> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("T must be at least 1".into()));
    }
    let min_dim = if kind == ConstructionKind::Simplex { 1 } else { 2 };
    if dim < min_dim {
        return Err(Error::Precondition(format!("{kind} needs D >= {min_dim}, got {dim}")));
    }
    let d = kind.effective_dim(dim);
    let t = horizon as f64;
    if t < kind.min_horizon(d) {
        return Err(Error::Precondition(format!(
            "{kind} needs T >= {} at D = {dim}, got T = {horizon}",
            kind.min_horizon(d)
        )));
    }
    let (value, bk) = match kind {
        ConstructionKind::ShiftedBall => (0.005 * (d as f64 / t.sqrt()).min(1.0), BoundKind::Error),
        ConstructionKind::Cylinder => (d as f64 * t.sqrt() / 128.0, BoundKind::Regret),
        ConstructionKind::Simplex => ((d as f64 / t).sqrt().min(1.0) / 16.0, BoundKind::Error),
        ConstructionKind::Hypercube => (d as f64 * t.sqrt() / 16.0, BoundKind::Regret),
    };
    Ok(LowerBound { value, kind: bk, horizon })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(f: impl Fn(f64, f64) -> f64) -> Vec<CellMean> {
        let mut rows = Vec::new();
        for d in [2usize, 4, 8, 16] {
            for t in [100u64, 1000, 10_000, 100_000] {
                rows.push(CellMean { dim: d, horizon: t, mean: f(d as f64, t as f64), stderr: 0.01 });
            }
        }
        rows
    }

    #[test]
    fn fit_recovers_exact_power_laws() {
        let f = fit_scaling(&grid(|d, t| (d / t).sqrt()), Weighting::Equal).unwrap();
        assert!((f.alpha - 0.5).abs() < 1e-9);
        assert!((f.beta + 0.5).abs() < 1e-9);
        assert!((f.r2 - 1.0).abs() < 1e-9);
        assert_eq!(f.cells, 16);

        let f = fit_scaling(&grid(|d, t| 3.0 * d * t.sqrt()), Weighting::InverseVariance).unwrap();
        assert!((f.alpha - 1.0).abs() < 1e-9);
        assert!((f.beta - 0.5).abs() < 1e-9);
        assert!((f.log_c - 3f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn fit_rejects_degenerate_input() {
        let one = [CellMean { dim: 2, horizon: 10, mean: 1.0, stderr: 0.0 }];
        assert!(matches!(fit_scaling(&one, Weighting::Equal), Err(Error::Degenerate(_))));
        let mut rows = grid(|d, t| d / t);
        rows[3].mean = 0.0;
        assert!(matches!(fit_scaling(&rows, Weighting::Equal), Err(Error::Degenerate(_))));
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_gaussian(0.3, 2.0, 0.3, 2.0).unwrap(), 0.0);
        let mu: f64 = 0.01;
        let w: f64 = 0.7;
        let kl = kl_gaussian(mu * w, 1.0 / 36.0, -mu * w, 1.0 / 36.0).unwrap();
        assert!((kl - 72.0 * mu * mu * w * w).abs() < 1e-15);
        let kl = kl_gaussian(0.0, 1.0, 0.0, 4.0).unwrap();
        assert!((kl - 0.5 * (0.25 - 1.0 + 4f64.ln())).abs() < 1e-15);
        assert!((kl - 0.3181471805599453).abs() < 1e-12);
        assert!(kl_gaussian(0.0, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn pinsker_examples() {
        assert_eq!(pinsker_tv_bound(0.0).unwrap(), 0.0);
        assert_eq!(pinsker_tv_bound(0.5).unwrap(), 1.0);
        assert!(pinsker_tv_bound(-1.0).is_err());
    }

    #[test]
    fn lemma_examples() {
        assert!(lemma_dw_check(0.0, 4).unwrap());
        for d in [1, 2, 7, 64] {
            assert!(lemma_dw_check(1.0, d).unwrap());
            assert!(lemma_dw_check(-1.0, d).unwrap());
        }
        assert!(lemma_dw_check(1.5, 3).is_err());
        assert!(lemma_dw_check(0.5, 0).is_err());
    }

    #[test]
    fn lower_bound_examples() {
        let b = lower_bound_reference(ConstructionKind::Cylinder, 4, 10_000).unwrap();
        assert_eq!(b.value, 2.34375);
        assert_eq!(b.kind, BoundKind::Regret);
        let b = lower_bound_reference(ConstructionKind::ShiftedBall, 3, 4).unwrap();
        assert_eq!(b.value, 0.005);
        assert_eq!(b.kind, BoundKind::Error);
        assert_eq!(b.regret_equivalent(), 0.02);
        let b = lower_bound_reference(ConstructionKind::Hypercube, 2, 1).unwrap();
        assert_eq!(b.value, 0.0625);
        let b = lower_bound_reference(ConstructionKind::Simplex, 4, 100).unwrap();
        assert!((b.value - 0.0125).abs() < 1e-15);
        assert!(matches!(
            lower_bound_reference(ConstructionKind::Cylinder, 5, 15),
            Err(Error::Precondition(_))
        ));
    }
}
