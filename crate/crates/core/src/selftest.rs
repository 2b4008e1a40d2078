//! Exhaustive and randomized self-checks run by `banditlab selftest`.

use num_rational::{BigRational, Ratio};
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::lemma_dw_check;
use crate::error::Result;
use crate::geometry::{dot, Domain};
use crate::player::{digit_decode, digit_encode, estimate_loss_vector};

/// Outcome of one suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub checks: u64,
    pub failures: u64,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.checks > 0
    }
}

/// All `2^d` sign vectors in lexicographic order.
pub fn sign_vectors(d: usize) -> impl Iterator<Item = Vec<i8>> {
    (0u64..1 << d).map(move |bits| {
        (0..d).map(|i| if bits >> i & 1 == 1 { 1 } else { -1 }).collect()
    })
}

/// Exact `E[x~ | x]` and `E[||x~||^2 | x]` over all sign vectors for the
/// loss `x` and scale `mu`, in rational arithmetic.
pub fn enumerate_moments(x: &[Ratio<i64>], mu: Ratio<i64>) -> Result<(Vec<Ratio<i64>>, Ratio<i64>)> {
    let d = x.len();
    let n = Ratio::from_integer(1i64 << d);
    let mut mean = vec![Ratio::zero(); d];
    let mut sq = Ratio::zero();
    for sigma in sign_vectors(d) {
        let v: Ratio<i64> = sigma
            .iter()
            .zip(x)
            .map(|(&s, &xi)| mu * xi * Ratio::from_integer(s as i64))
            .sum();
        let est = estimate_loss_vector(v, &sigma, mu)?;
        for (m, e) in mean.iter_mut().zip(&est) {
            *m += *e / n;
        }
        sq += est.iter().map(|e| *e * *e).sum::<Ratio<i64>>() / n;
    }
    Ok((mean, sq))
}

/// Unbiasedness and second-moment identities on a `{-9/10, ..., 9/10}`
/// grid for `d <= max_dim`.
pub fn estimator_suite(max_dim: usize) -> Result<SuiteResult> {
    let grid: Vec<Ratio<i64>> = (-9..=9).step_by(2).map(|k| Ratio::new(k, 10)).collect();
    let mu = Ratio::new(1, 10);
    let mut checks = 0;
    let mut failures = 0;
    for d in 1..=max_dim {
        let total = grid.len().pow(d as u32);
        for mut idx in 0..total {
            let mut x = Vec::with_capacity(d);
            for _ in 0..d {
                x.push(grid[idx % grid.len()]);
                idx /= grid.len();
            }
            let (mean, sq) = enumerate_moments(&x, mu)?;
            let norm: Ratio<i64> = x.iter().map(|v| v * v).sum();
            checks += 1;
            if mean != x || sq != norm * Ratio::from_integer(d as i64) {
                failures += 1;
            }
        }
    }
    Ok(SuiteResult { name: "estimator_enumeration", checks, failures })
}

/// `1/(w^2 + 1/d) <= d(1 - |w|) + 1` over `w` in steps of `10^-3`.
pub fn lemma_suite(max_dim: u32) -> Result<SuiteResult> {
    let mut checks = 0;
    let mut failures = 0;
    for d in 1..=max_dim {
        for k in -1000i32..=1000 {
            checks += 1;
            if !lemma_dw_check(k as f64 / 1000.0, d)? {
                failures += 1;
            }
        }
    }
    Ok(SuiteResult { name: "lemma_grid", checks, failures })
}

/// Encode a random simplex point, take an exact inner product with a
/// random binary vector, decode and compare.
pub fn digit_suite(trials: usize, seed: u64) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = 0;
    let mut failures = 0;
    for d in 2..=6usize {
        let dom = Domain::simplex(d)?;
        for p in 1..=5u32 {
            for _ in 0..trials {
                let w = dom.random_point(&mut rng);
                let x: Vec<u8> = (0..d).map(|_| rng.random_range(0..=1)).collect();
                let enc = digit_encode(&w, p)?;
                let s: BigRational = enc
                    .w_prime
                    .iter()
                    .zip(&x)
                    .filter(|(_, &b)| b == 1)
                    .map(|(v, _)| v.clone())
                    .sum();
                let sum_w: BigRational = enc.w.iter().cloned().sum();
                checks += 1;
                if digit_decode(&s, p, d)? != x || sum_w != BigRational::one() {
                    failures += 1;
                }
            }
        }
    }
    Ok(SuiteResult { name: "digit_round_trip", checks, failures })
}

/// `linear_argmin` lands in the domain and beats random feasible points.
pub fn geometry_suite(trials: usize, seed: u64) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = 0;
    let mut failures = 0;
    for dim in [1usize, 2, 3, 5, 8] {
        let mut domains = vec![
            Domain::unit_ball(dim)?,
            Domain::shifted_ball(dim, None)?,
            Domain::cylinder(dim)?,
            Domain::capped_ball(dim, 0.5)?,
            Domain::simplex(dim)?,
            Domain::l1_ball(dim)?,
            Domain::hypercube(dim)?,
        ];
        for dom in domains.drain(..) {
            for _ in 0..trials {
                let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                let w = dom.linear_argmin(&x)?;
                let best = dot(&x, &w);
                checks += 1;
                let mut ok = dom.contains(&w, 1e-9)?;
                for _ in 0..20 {
                    let u = dom.random_point(&mut rng);
                    ok &= best <= dot(&x, &u) + 1e-9;
                }
                if !ok {
                    failures += 1;
                }
            }
        }
    }
    Ok(SuiteResult { name: "geometry_argmin", checks, failures })
}

/// Every suite at the sizes used by the CLI.
pub fn run_all(seed: u64) -> Result<Vec<SuiteResult>> {
    Ok(vec![
        estimator_suite(4)?,
        lemma_suite(64)?,
        digit_suite(50, seed)?,
        geometry_suite(50, seed)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_vectors_are_distinct() {
        let v: Vec<_> = sign_vectors(3).collect();
        assert_eq!(v.len(), 8);
        assert_eq!(v[0], vec![-1, -1, -1]);
        assert_eq!(v[7], vec![1, 1, 1]);
    }

    #[test]
    fn hand_computed_moments() {
        // d = 2, x = (1/2, -1/10), mu = 1/10: E x~ = x, E||x~||^2 = 2 (1/4 + 1/100).
        let x = [Ratio::new(1, 2), Ratio::new(-1, 10)];
        let (m, s) = enumerate_moments(&x, Ratio::new(1, 10)).unwrap();
        assert_eq!(m, x.to_vec());
        assert_eq!(s, Ratio::new(13, 25));
    }

    #[test]
    fn suites_pass() {
        for s in run_all(3).unwrap() {
            assert!(s.passed(), "{s:?}");
        }
    }
}
