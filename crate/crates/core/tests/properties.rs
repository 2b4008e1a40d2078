//! Property tests for the invariants of every module.

use banditlab::adversary::{
    select_mu, shrink_to_bounded, BinarySequence, BinarySource, Construction, ConstructionKind,
    LossModel, Secret,
};
use banditlab::analysis::{fit_scaling, kl_gaussian, lemma_dw_check, lower_bound_reference, CellMean, Weighting};
use banditlab::geometry::Domain;
use banditlab::harness::{monte_carlo, run_protocol, Cell, Protocol, RunOptions, RunResult, Trial};
use banditlab::player::{estimate_loss_vector, Player};
use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::Zero;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

fn domain(idx: usize, dim: usize) -> Domain {
    match idx {
        0 => Domain::unit_ball(dim),
        1 => Domain::shifted_ball(dim, None),
        2 => Domain::cylinder(dim),
        3 => Domain::capped_ball(dim, 0.4),
        4 => Domain::simplex(dim),
        5 => Domain::l1_ball(dim),
        _ => Domain::hypercube(dim),
    }
    .unwrap()
}

fn sphere(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-9 {
            return g.into_iter().map(|v| v / n).collect();
        }
    }
}

fn ball(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let r = rng.random::<f64>().powf(1.0 / dim as f64);
    sphere(dim, rng).into_iter().map(|v| v * r).collect()
}

fn simplex_point(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let e: Vec<f64> = (0..dim).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Feasible point drawn independently of the crate's samplers.
fn feasible(dom: &Domain, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match dom {
        Domain::UnitBall { dim } => ball(*dim, rng),
        Domain::ShiftedBall { dim, shift } => {
            ball(*dim, rng).iter().zip(shift).map(|(w, a)| w + a).collect()
        }
        Domain::Cylinder { dim } => {
            let mut w = vec![rng.random_range(-1.0..=1.0)];
            if *dim > 1 {
                w.extend(ball(dim - 1, rng));
            }
            w
        }
        Domain::CappedBall { dim, cap } => loop {
            let w = ball(*dim, rng);
            if w[0] <= *cap {
                return w;
            }
        },
        Domain::Simplex { dim } => simplex_point(*dim, rng),
        Domain::L1Ball { dim } => {
            let r: f64 = rng.random();
            simplex_point(*dim, rng)
                .into_iter()
                .map(|v| if rng.random_bool(0.5) { v * r } else { -v * r })
                .collect()
        }
        Domain::Hypercube { dim } => (0..*dim).map(|_| rng.random_range(-1.0..=1.0)).collect(),
    }
}

/// Boundary point, so sampled maxima of linear functions get close to
/// the true maximum in low dimension.
fn boundary(dom: &Domain, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match dom {
        Domain::UnitBall { dim } => sphere(*dim, rng),
        Domain::ShiftedBall { dim, shift } => {
            sphere(*dim, rng).iter().zip(shift).map(|(w, a)| w + a).collect()
        }
        Domain::Cylinder { dim } => {
            let mut w = vec![if rng.random_bool(0.5) { 1.0 } else { -1.0 }];
            if *dim > 1 {
                w.extend(sphere(dim - 1, rng));
            }
            w
        }
        Domain::CappedBall { dim, cap } => {
            let mut w = sphere(*dim, rng);
            if w[0] > *cap {
                let rest = w[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
                let target = (1.0 - cap * cap).sqrt();
                w[0] = *cap;
                for v in &mut w[1..] {
                    *v = if rest > 0.0 { *v * target / rest } else { 0.0 };
                }
            }
            w
        }
        Domain::Simplex { dim } => {
            let mut w = vec![0.0; *dim];
            w[rng.random_range(0..*dim)] = 1.0;
            w
        }
        Domain::L1Ball { dim } => {
            let mut w = vec![0.0; *dim];
            w[rng.random_range(0..*dim)] = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            w
        }
        Domain::Hypercube { dim } => {
            (0..*dim).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect()
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn argmin_beats_feasible_points(idx in 0usize..7, dim in 1usize..6, seed: u64) {
        let dom = domain(idx, dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let w = dom.linear_argmin(&x).unwrap();
        prop_assert!(dom.contains(&w, 1e-9).unwrap());
        let best = dot(&x, &w);
        for _ in 0..1000 {
            let u = feasible(&dom, &mut rng);
            prop_assert!(best <= dot(&x, &u) + 1e-9);
        }
    }

    #[test]
    fn dual_norm_is_homogeneous(idx in 0usize..7, dim in 1usize..6, c in 0.0f64..10.0, seed: u64) {
        let dom = domain(idx, dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        prop_assert_eq!(dom.dual_norm(&vec![0.0; dim]).unwrap(), 0.0);
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cx: Vec<f64> = x.iter().map(|v| c * v).collect();
        let lhs = dom.dual_norm(&cx).unwrap();
        let rhs = c * dom.dual_norm(&x).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn dual_norm_matches_sampled_maximum(idx in 0usize..7, dim in 1usize..4, seed: u64) {
        let dom = domain(idx, dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let closed = dom.dual_norm(&x).unwrap();
        let mut sampled = 0.0f64;
        for _ in 0..100_000 {
            sampled = sampled.max(dot(&x, &boundary(&dom, &mut rng)).abs());
        }
        prop_assert!(sampled <= closed + 1e-9, "sampled {sampled} > closed {closed}");
        prop_assert!(sampled >= closed * (1.0 - 1e-2), "sampled {sampled} << closed {closed}");
    }
}

#[test]
fn corner_set_scale_is_tight() {
    for idx in 0..7 {
        for dim in 1..=12 {
            let dom = domain(idx, dim);
            let Some(mu) = dom.corner_set_scale() else { continue };
            let corners = |m: f64| {
                (0u32..1 << dim).map(move |bits| {
                    (0..dim).map(|i| if bits >> i & 1 == 1 { m } else { -m }).collect::<Vec<f64>>()
                })
            };
            for c in corners(mu) {
                assert!(dom.contains(&c, 1e-12).unwrap(), "{dom:?} {c:?}");
            }
            let big = mu * (1.0 + 1e-3);
            assert!(corners(big).any(|c| !dom.contains(&c, 1e-12).unwrap()), "{dom:?}");
        }
    }
}

fn admissible(kind: ConstructionKind) -> impl Strategy<Value = (usize, u64)> {
    (2usize..10, 0u64..4).prop_map(move |(dim, extra)| {
        let d = kind.effective_dim(dim);
        let t = (kind.min_horizon(d).max(1.0).ceil() as u64) * 10u64.pow(extra as u32);
        (dim, t)
    })
}

fn construction_kind() -> impl Strategy<Value = ConstructionKind> {
    prop::sample::select(ConstructionKind::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn construction_mean_dual_norms(
        (kind, (dim, t)) in construction_kind().prop_flat_map(|k| (Just(k), admissible(k))),
        seed: u64,
    ) {
        let d = kind.effective_dim(dim);
        let mu = select_mu(kind, d, t).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = Construction::with_random_secret(kind, dim, mu, &mut rng).unwrap();
        let dom = kind.natural_domain(dim).unwrap();
        let got = dom.dual_norm(&LossModel::Construction(c).mean()).unwrap();
        let df = d as f64;
        let want = match kind {
            ConstructionKind::ShiftedBall => mu * df.sqrt(),
            ConstructionKind::Cylinder => 0.25 + mu * df.sqrt(),
            ConstructionKind::Simplex => mu,
            ConstructionKind::Hypercube => 0.25 + mu * df,
        };
        prop_assert!((got - want).abs() <= 1e-12, "{kind} D={dim} T={t}: {got} vs {want}");
        prop_assert!(got <= 0.5 + 1e-12);
    }

    #[test]
    fn lower_bounds_are_monotone(
        (kind, (dim, t)) in construction_kind().prop_flat_map(|k| (Just(k), admissible(k))),
        dt in 1u64..1000,
    ) {
        let a = lower_bound_reference(kind, dim, t).unwrap().regret_equivalent();
        let b = lower_bound_reference(kind, dim, t + dt).unwrap().regret_equivalent();
        prop_assert!(b >= a);
        let bigger_t = (kind.min_horizon(kind.effective_dim(dim + 1)).ceil() as u64).max(t);
        let a = lower_bound_reference(kind, dim, bigger_t).unwrap().regret_equivalent();
        let b = lower_bound_reference(kind, dim + 1, bigger_t).unwrap().regret_equivalent();
        prop_assert!(b >= a);
    }
}

/// Defining parameters of each construction, written out independently.
fn defining_moments(kind: ConstructionKind, dim: usize, mu: f64, secret: &Secret) -> (Vec<f64>, Vec<f64>) {
    let d = kind.effective_dim(dim) as f64;
    match (kind, secret) {
        (ConstructionKind::Simplex, Secret::Index(j)) => {
            let mut m = vec![0.0; dim];
            m[j - 1] = -mu;
            (m, vec![0.25; dim])
        }
        (_, Secret::Signs(s)) => {
            let (m0, v0, vr) = match kind {
                ConstructionKind::ShiftedBall => (0.0, 1.0 / 36.0, 0.0),
                ConstructionKind::Cylinder => (-0.25, 1.0 / 16.0, 1.0 / (16.0 * d)),
                _ => (-0.25, 1.0 / 16.0, 1.0 / (16.0 * d * d)),
            };
            let mut m = vec![m0];
            m.extend(s.iter().map(|&si| mu * si as f64));
            let mut v = vec![v0];
            v.extend(std::iter::repeat_n(vr, dim - 1));
            (m, v)
        }
        _ => unreachable!(),
    }
}

#[test]
fn construction_draws_match_defining_gaussians() {
    let n = 1_000_000;
    for kind in ConstructionKind::ALL {
        let dim = 4;
        let mu = 0.05;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let c = Construction::with_random_secret(kind, dim, mu, &mut rng).unwrap();
        let (m, v) = defining_moments(kind, dim, mu, c.secret());
        let mut model = LossModel::Construction(c);
        let mut s1 = vec![0.0; dim];
        let mut s2 = vec![0.0; dim];
        for _ in 0..n {
            let x = model.sample(&mut rng).unwrap();
            for i in 0..dim {
                s1[i] += x[i];
                s2[i] += x[i] * x[i];
            }
        }
        let nf = n as f64;
        for i in 0..dim {
            let mean = s1[i] / nf;
            let var = s2[i] / nf - mean * mean;
            if v[i] == 0.0 {
                assert!((mean - m[i]).abs() <= 1e-9, "{kind} coordinate {i}");
                continue;
            }
            let se_mean = (v[i] / nf).sqrt();
            let se_var = v[i] * (2.0 / nf).sqrt();
            assert!((mean - m[i]).abs() <= 4.0 * se_mean, "{kind} mean {i}: {mean} vs {}", m[i]);
            assert!((var - v[i]).abs() <= 4.0 * se_var, "{kind} var {i}: {var} vs {}", v[i]);
        }
    }
}

#[test]
fn shrink_wrapper_stays_bounded() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dom = Domain::shifted_ball(5, None).unwrap();
    let mu = select_mu(ConstructionKind::ShiftedBall, 4, 10_000).unwrap();
    let inner = Construction::with_random_secret(ConstructionKind::ShiftedBall, 5, mu, &mut rng).unwrap();
    let mut m = shrink_to_bounded(LossModel::Construction(inner), &dom, 10_000, 8.0, 100_000, &mut rng).unwrap();
    for _ in 0..100_000 {
        assert!(dom.dual_norm(&m.sample(&mut rng).unwrap()).unwrap() <= 1.0);
    }
}

#[test]
fn secrets_redraw_per_repetition_and_reproduce() {
    let cell = Cell { dim: 9, horizon: 10, protocol: Protocol::Regret, repetitions: 8, master_seed: 4 };
    let build = |_: usize, rng: &mut ChaCha8Rng| {
        let c = Construction::with_random_secret(ConstructionKind::Cylinder, 9, 0.01, rng)?;
        let domain = Domain::cylinder(9)?;
        let player = Player::fixed_point(&domain, vec![0.0; 9])?;
        Ok(Trial { domain, model: LossModel::Construction(c), player })
    };
    let secrets = || -> Vec<String> {
        monte_carlo(cell, RunOptions::default(), build)
            .unwrap()
            .runs
            .into_iter()
            .map(|(_, r)| r.secret.unwrap())
            .collect()
    };
    let a = secrets();
    assert_eq!(a, secrets());
    let distinct: std::collections::BTreeSet<_> = a.iter().collect();
    assert!(distinct.len() > 1);
}

fn grid_point(d: usize) -> impl Strategy<Value = Vec<i64>> {
    prop::collection::vec(prop::sample::select((-9i64..=9).step_by(2).collect::<Vec<_>>()), d)
}

fn big(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// `mu` close to `1/sqrt(d)` with a `10^6` denominator.
fn inv_sqrt_mu(d: usize) -> BigRational {
    big((1e6 / (d as f64).sqrt()).round() as i64, 1_000_000)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn estimator_is_unbiased_with_scaled_second_moment(
        x in (2usize..=8).prop_flat_map(grid_point),
        use_inv_sqrt: bool,
    ) {
        let d = x.len();
        let x: Vec<BigRational> = x.iter().map(|&k| big(k, 10)).collect();
        let mu = if use_inv_sqrt { inv_sqrt_mu(d) } else { big(1, 10) };
        let n = BigRational::from_integer(BigInt::from(1u64 << d));
        let mut mean = vec![BigRational::zero(); d];
        let mut sq = BigRational::zero();
        for bits in 0u32..1 << d {
            let sigma: Vec<i8> = (0..d).map(|i| if bits >> i & 1 == 1 { 1 } else { -1 }).collect();
            let mut v = BigRational::zero();
            for (xi, &s) in x.iter().zip(&sigma) {
                v += xi * &mu * BigRational::from_integer(BigInt::from(s));
            }
            let est = estimate_loss_vector(v, &sigma, mu.clone()).unwrap();
            for (m, e) in mean.iter_mut().zip(&est) {
                *m += e / &n;
            }
            sq += est.iter().map(|e| e * e).sum::<BigRational>() / &n;
        }
        let norm: BigRational = x.iter().map(|v| v * v).sum();
        prop_assert_eq!(mean, x);
        prop_assert_eq!(sq, norm * BigRational::from_integer(BigInt::from(d)));
    }
}

#[test]
fn noise_inflates_second_moment_by_d_over_mu_squared() {
    // v = <x, mu sigma> + g with g = +-1 equiprobable (unit variance).
    for d in [2usize, 4] {
        for mu in [Ratio::new(1i64, 10), Ratio::new(1, 2)] {
            let x: Vec<Ratio<i64>> = (0..d).map(|i| Ratio::new(2 * i as i64 - 3, 10)).collect();
            let n = Ratio::from_integer(2i64 << d);
            let mut sq = Ratio::zero();
            let mut v2 = Ratio::zero();
            for bits in 0u32..1 << d {
                let sigma: Vec<i8> = (0..d).map(|i| if bits >> i & 1 == 1 { 1 } else { -1 }).collect();
                let clean: Ratio<i64> =
                    x.iter().zip(&sigma).map(|(xi, &s)| *xi * mu * Ratio::from_integer(s as i64)).sum();
                for g in [-1i64, 1] {
                    let v = clean + Ratio::from_integer(g);
                    let est = estimate_loss_vector(v, &sigma, mu).unwrap();
                    sq += est.iter().map(|e| *e * *e).sum::<Ratio<i64>>() / n;
                    v2 += v * v / n;
                }
            }
            let d_r = Ratio::from_integer(d as i64);
            assert_eq!(sq, d_r * v2 / (mu * mu));
            assert!(sq >= d_r / (mu * mu));
        }
    }
}

fn strip_time(mut r: RunResult) -> String {
    r.wall_ms = 0.0;
    format!("{r:?}")
}

fn player_for(idx: usize, dom: &Domain, t: u64) -> Player {
    match idx {
        0 => Player::corner_estimator(dom, None).unwrap(),
        1 => Player::exp3(dom, t, None, 0.0).unwrap(),
        _ => Player::fixed_point(dom, dom.center()).unwrap(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn decoder_tracks_hedge_every_round(d in 2usize..=6, t in prop::sample::select(vec![100u64, 1000]), seed: u64) {
        let dom = Domain::simplex(d).unwrap();
        let model = LossModel::Binary(BinarySequence::new(d, BinarySource::Bernoulli(vec![0.5; d])).unwrap());
        let r = run_protocol(Protocol::Regret, &dom, model, Player::digit_decoder(&dom, t, None, None).unwrap(),
            t, seed, RunOptions::default()).unwrap();
        prop_assert_eq!(r.diagnostics["decode_mismatches"], 0.0);
        prop_assert!(r.diagnostics["coupling_gap"].abs() <= 2.0);
        let p = r.diagnostics["digit_depth"] as i32;
        let per_round = 2.0 * d as f64 * 10f64.powi(-p) + 2e-9;
        prop_assert!(r.diagnostics["max_round_gap"] <= per_round);
    }

    #[test]
    fn equal_seeds_give_identical_runs(pidx in 0usize..3, seed: u64) {
        let dom = Domain::hypercube(3).unwrap();
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = Construction::with_random_secret(ConstructionKind::Hypercube, 3, 0.05, &mut rng).unwrap();
            run_protocol(Protocol::Regret, &dom, LossModel::Construction(c), player_for(pidx, &dom, 500),
                500, seed, RunOptions::default()).unwrap()
        };
        prop_assert_eq!(strip_time(run()), strip_time(run()));
    }

    #[test]
    fn scoring_identities(pidx in 0usize..3, protocol in prop::sample::select(vec![Protocol::Regret, Protocol::Error]), seed: u64) {
        let t = 2000u64;
        let dom = Domain::cylinder(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mu = select_mu(ConstructionKind::Cylinder, 3, t).unwrap();
        let c = Construction::with_random_secret(ConstructionKind::Cylinder, 4, mu, &mut rng).unwrap();
        let r = run_protocol(protocol, &dom, LossModel::Construction(c), player_for(pidx, &dom, t),
            t, seed, RunOptions::default()).unwrap();
        let tr = r.trajectory.as_ref().unwrap();
        let mean_loss = tr.scored.iter().sum::<f64>() / t as f64;
        let tol = 1e-9 * (1.0 + t as f64 * r.optimum.abs());
        prop_assert!((r.regret - (t as f64 * mean_loss - t as f64 * r.optimum)).abs() <= tol);
        prop_assert!((r.recompute_regret().unwrap() - r.regret).abs() <= 1e-9 * (1.0 + r.regret.abs()));
        prop_assert!(r.average_error * t as f64 <= r.regret + 1e-9 * (1.0 + r.regret.abs()));
        for l in &tr.scored {
            prop_assert!(l - r.optimum >= -1e-12);
        }
    }
}

/// Simpson's rule on `p log(p/q)` over `m1 +- 14 sd1`.
fn kl_numeric(m1: f64, v1: f64, m2: f64, v2: f64) -> f64 {
    let s1 = v1.sqrt();
    let (a, b) = (m1 - 14.0 * s1, m1 + 14.0 * s1);
    let n = 20_000;
    let h = (b - a) / n as f64;
    let lp = |x: f64, m: f64, v: f64| -0.5 * (x - m).powi(2) / v - 0.5 * (2.0 * std::f64::consts::PI * v).ln();
    let f = |x: f64| {
        let l1 = lp(x, m1, v1);
        l1.exp() * (l1 - lp(x, m2, v2))
    };
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn kl_matches_quadrature(m1 in -2.0f64..2.0, m2 in -2.0f64..2.0, v1 in 0.05f64..3.0, v2 in 0.05f64..3.0) {
        let kl = kl_gaussian(m1, v1, m2, v2).unwrap();
        prop_assert!(kl >= 0.0);
        prop_assert!((kl - kl_numeric(m1, v1, m2, v2)).abs() <= 1e-4);
        prop_assert_eq!(kl_gaussian(m1, v1, m1, v1).unwrap(), 0.0);
        if (m1 - m2).abs() > 1e-3 || (v1 - v2).abs() > 1e-3 {
            prop_assert!(kl > 0.0);
        }
    }

    #[test]
    fn lemma_holds_everywhere(w in -1.0f64..=1.0, d in 1u32..=64) {
        prop_assert!(lemma_dw_check(w, d).unwrap());
    }

    #[test]
    fn fit_recovers_power_laws(alpha in -2.0f64..2.0, beta in -2.0f64..2.0, logc in -3.0f64..3.0) {
        let mut rows = Vec::new();
        for d in [2usize, 3, 5, 9] {
            for t in [10u64, 300, 7000] {
                let mean = (logc + alpha * (d as f64).ln() + beta * (t as f64).ln()).exp();
                rows.push(CellMean { dim: d, horizon: t, mean, stderr: 0.0 });
            }
        }
        let f = fit_scaling(&rows, Weighting::Equal).unwrap();
        prop_assert!((f.alpha - alpha).abs() < 1e-9);
        prop_assert!((f.beta - beta).abs() < 1e-9);
        prop_assert!((f.log_c - logc).abs() < 1e-9);
        prop_assert!((f.r2 - 1.0).abs() < 1e-9);
    }
}
