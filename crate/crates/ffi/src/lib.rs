//! C ABI for banditlab.
//!
//! Every function returns a [`BlStatus`]. On failure a message is kept per
//! thread and can be read with [`bl_last_error`]. Handles are opaque and
//! must be released with their `_free` function. Panics never cross the
//! boundary; they are reported as `BL_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::slice;

use banditlab::adversary::{check_validity, select_mu, ConstructionKind, LossModel};
use banditlab::analysis::{fit_scaling, kl_gaussian, lemma_dw_check, lower_bound_reference, BoundKind, CellMean, Weighting};
use banditlab::cli::run_experiment;
use banditlab::config::{AdversarySpec, DomainSpec, ExperimentConfig, PlayerSpec};
use banditlab::geometry::Domain;
use banditlab::harness::{derive_seed, run_protocol, secret_rng, Protocol, RunOptions};
use banditlab::player::{digit_decode, digit_encode, Player};
use banditlab::Error;
use num_traits::Zero;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Result code of every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Precondition = 4,
    NoCornerSet = 5,
    Incompatible = 6,
    ChannelMismatch = 7,
    CorruptedChannel = 8,
    SequenceExhausted = 9,
    Degenerate = 10,
    Config = 11,
    Io = 12,
    Panic = 13,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlDomainKind {
    UnitBall = 0,
    ShiftedBall = 1,
    Cylinder = 2,
    Simplex = 3,
    L1Ball = 4,
    Hypercube = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlConstruction {
    ShiftedBall = 0,
    Cylinder = 1,
    Simplex = 2,
    Hypercube = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlProtocol {
    Regret = 0,
    Error = 1,
}

/// Decision domain handle.
pub struct BlDomain(Domain);

/// Loss model handle.
pub struct BlModel(LossModel);

/// Player handle.
pub struct BlPlayer(Player);

/// Seeded random stream handle.
pub struct BlRng(ChaCha8Rng);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct BlValidity {
    pub mean_dual_norm: f64,
    pub mean_check_passed: bool,
    pub tail_violations: usize,
    pub passed: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct BlRunSummary {
    pub regret: f64,
    /// NaN for regret runs.
    pub error: f64,
    pub average_error: f64,
    pub optimum: f64,
    pub scored_loss: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct BlScalingFit {
    pub alpha: f64,
    pub beta: f64,
    pub log_c: f64,
    pub r2: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct BlLowerBound {
    pub value: f64,
    /// True for regret bounds, false for error bounds.
    pub is_regret: bool,
    pub regret_equivalent: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> BlStatus {
    match e {
        Error::DimensionMismatch { .. } => BlStatus::DimensionMismatch,
        Error::InvalidParameter(_) => BlStatus::InvalidArgument,
        Error::NoCornerSet(_) => BlStatus::NoCornerSet,
        Error::Precondition(_) => BlStatus::Precondition,
        Error::SequenceExhausted(_) => BlStatus::SequenceExhausted,
        Error::ChannelMismatch(_) => BlStatus::ChannelMismatch,
        Error::Incompatible(_) => BlStatus::Incompatible,
        Error::CorruptedChannel(_) => BlStatus::CorruptedChannel,
        Error::Degenerate(_) => BlStatus::Degenerate,
        Error::Config(_) | Error::Json(_) => BlStatus::Config,
        Error::Io(_) | Error::Csv(_) => BlStatus::Io,
    }
}

struct Fail(BlStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(BlStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> BlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            BlStatus::Ok
        }
        Ok(Err(Fail(s, msg))) => {
            set_error(&msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("panic: {msg}"));
            BlStatus::Panic
        }
    }
}

unsafe fn slice_in<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, n))
}

unsafe fn slice_out<'a, T>(p: *mut T, n: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, n))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn in_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn str_in<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(BlStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

fn check_len(expected: usize, got: usize) -> Result<(), Fail> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got }.into());
    }
    Ok(())
}

fn boxed<T>(out: *mut *mut T, v: T) -> Result<(), Fail> {
    // SAFETY: callers check `out` for null first.
    unsafe { *out = Box::into_raw(Box::new(v)) };
    Ok(())
}

fn construction(k: BlConstruction) -> ConstructionKind {
    match k {
        BlConstruction::ShiftedBall => ConstructionKind::ShiftedBall,
        BlConstruction::Cylinder => ConstructionKind::Cylinder,
        BlConstruction::Simplex => ConstructionKind::Simplex,
        BlConstruction::Hypercube => ConstructionKind::Hypercube,
    }
}

/// Message for the last failed call on this thread; empty after success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn bl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn bl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a domain with default parameters.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn bl_domain_new(kind: BlDomainKind, dim: usize, out: *mut *mut BlDomain) -> BlStatus {
    guard(|| {
        out_ref(out, "out")?;
        let d = match kind {
            BlDomainKind::UnitBall => Domain::unit_ball(dim),
            BlDomainKind::ShiftedBall => Domain::shifted_ball(dim, None),
            BlDomainKind::Cylinder => Domain::cylinder(dim),
            BlDomainKind::Simplex => Domain::simplex(dim),
            BlDomainKind::L1Ball => Domain::l1_ball(dim),
            BlDomainKind::Hypercube => Domain::hypercube(dim),
        }?;
        boxed(out, BlDomain(d))
    })
}

/// Creates `{w : ||w||_2 <= 1, w_0 <= cap}`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn bl_domain_capped_ball(dim: usize, cap: f64, out: *mut *mut BlDomain) -> BlStatus {
    guard(|| {
        out_ref(out, "out")?;
        boxed(out, BlDomain(Domain::capped_ball(dim, cap)?))
    })
}

/// Creates a domain from a JSON spec such as
/// `{"kind": "shifted_ball", "dim": 3, "params": {"shift": [0.5, 0, 0]}}`.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bl_domain_from_json(json: *const c_char, out: *mut *mut BlDomain) -> BlStatus {
    guard(|| {
        out_ref(out, "out")?;
        let spec: DomainSpec = serde_json::from_str(str_in(json, "json")?)
            .map_err(|e| Fail(BlStatus::Config, e.to_string()))?;
        boxed(out, BlDomain(spec.build_standalone()?))
    })
}

/// # Safety
/// `d` must be null or a handle from a `bl_domain_*` constructor, freed once.
#[no_mangle]
pub unsafe extern "C" fn bl_domain_free(d: *mut BlDomain) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// # Safety
/// `d` must be a live domain handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bl_domain_dim(d: *const BlDomain, out: *mut usize) -> BlStatus {
    guard(|| {
        *out_ref(out, "out")? = in_ref(d, "domain")?.0.dim();
        Ok(())
    })
}

/// # Safety
/// `w` must point to `n` doubles; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn bl_domain_contains(
    d: *const BlDomain,
    w: *const f64,
    n: usize,
    tol: f64,
    out: *mut bool,
) -> BlStatus {
    guard(|| {
        let d = &in_ref(d, "domain")?.0;
        let w = slice_in(w, n, "w")?;
        *out_ref(out, "out")? = d.contains(w, tol)?;
        Ok(())
    })
}

/// Writes `argmin_{w in W} <x, w>` to `w_out` (length `n`).
///
/// # Safety
/// `x` and `w_out` must each hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn bl_domain_linear_argmin(
    d: *const BlDomain,
    x: *const f64,
    n: usize,
    w_out: *mut f64,
) -> BlStatus {
    guard(|| {
        let d = &in_ref(d, "domain")?.0;
        let w = d.linear_argmin(slice_in(x, n, "x")?)?;
        slice_out(w_out, n, "w_out")?.copy_from_slice(&w);
        Ok(())
    })
}

/// # Safety
/// `x` must hold `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bl_domain_dual_norm(d: *const BlDomain, x: *const f64, n: usize, out: *mut f64) -> BlStatus {
    guard(|| {
        let d = &in_ref(d, "domain")?.0;
        *out_ref(out, "out")? = d.dual_norm(slice_in(x, n, "x")?)?;
        Ok(())
    })
}

/// Largest `mu` with every `{-mu, mu}^D` corner inside the domain.
/// Returns `BL_STATUS_NO_CORNER_SET` when there is none.
///
/// # Safety
/// `d` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bl_domain_corner_set_scale(d: *const BlDomain, out: *mut f64) -> BlStatus {
    guard(|| {
        let d = &in_ref(d, "domain")?.0;
        let mu = d
            .corner_set_scale()
            .ok_or(Error::NoCornerSet("domain has no inscribed sign-vector corner set"))?;
        *out_ref(out, "out")? = mu;
        Ok(())
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bl_rng_new(seed: u64, out: *mut *mut BlRng) -> BlStatus {
    guard(|| {
        out_ref(out, "out")?;
        boxed(out, BlRng(ChaCha8Rng::seed_from_u64(seed)))
    })
}

/// # Safety
/// `r` must be null or a handle from [`bl_rng_new`], freed once.
#[no_mangle]
pub unsafe extern "C" fn bl_rng_free(r: *mut BlRng) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Gaussian loss model with per-coordinate means and variances.
///
/// # Safety
/// `mean` and `variance` must each hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn bl_model_gaussian(
    mean: *const f64,
    variance: *const f64,
    n: usize,
    out: *mut *mut BlModel,
) -> BlStatus {
    guard(|| {
        out_ref(out, "out")?;
        let m = slice_in(mean, n, "mean")?.to_vec();
        let v = slice_in(variance, n, "variance")?.to_vec();
        boxed(out, BlModel(LossModel::gaussian(m, v)?))
    })
}

/// Loss model from an adversary JSON spec, resolved at `horizon` on
/// `domain`. Hidden parameters are drawn from `seed`.
///
/// # Safety
/// `json` must be NUL-terminated; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn bl_model_from_json(
    json: *const c_char,
    domain: *const BlDomain,
    horizon: u64,
    seed: u64,
    out: *mut *mut BlModel,
) -> BlStatus {
    guard(|| {
        out_ref(out, "out")?;
        let d = &in_ref(domain, "domain")?.0;
        let spec: AdversarySpec = serde_json::from_str(str_in(json, "json")?)
            .map_err(|e| Fail(BlStatus::Config, e.to_string()))?;
        let mut rng = secret_rng(derive_seed(seed, d.dim(), horizon, 0));
        let (m, _) = spec.build(d, horizon, &mut rng)?;
        boxed(out, BlModel(m))
    })
}

/// # Safety
/// `m` must be null or a model handle, freed once.
#[no_mangle]
pub unsafe extern "C" fn bl_model_free(m: *mut BlModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bl_model_dim(m: *const BlModel, out: *mut usize) -> BlStatus {
    guard(|| {
        *out_ref(out, "out")? = in_ref(m, "model")?.0.dim();
        Ok(())
    })
}

/// Writes the model's exact mean to `out` (length `n`).
///
/// # Safety
/// `out` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn bl_model_mean(m: *const BlModel, out: *mut f64, n: usize) -> BlStatus {
    guard(|| {
        let mean = in_ref(m, "model")?.0.mean();
        check_len(mean.len(), n)?;
        slice_out(out, n, "out")?.copy_from_slice(&mean);
        Ok(())
    })
}

/// Draws one loss vector into `out` (length `n`).
///
/// # Safety
/// `m` and `rng` must be live handles not used concurrently; `out` must
/// hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn bl_model_sample(m: *mut BlModel, rng: *mut BlRng, out: *mut f64, n: usize) -> BlStatus {
    guard(|| {
        let m = &mut m.as_mut().ok_or_else(|| null("model"))?.0;
        let rng = &mut rng.as_mut().ok_or_else(|| null("rng"))?.0;
        check_len(m.dim(), n)?;
        let x = m.sample(rng)?;
        slice_out(out, n, "out")?.copy_from_slice(&x);
        Ok(())
    })
}

/// Validity check: exact mean dual norm and a Monte Carlo tail check over
/// `z` (length `nz`) with `samples` draws.
///
/// # Safety
/// Handles must be live; `z` must hold `nz` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bl_check_validity(
    m: *mut BlModel,
    d: *const BlDomain,
    samples: usize,
    z: *const f64,
    nz: usize,
    rng: *mut BlRng,
    out: *mut BlValidity,
) -> BlStatus {
    guard(|| {
        let m = &mut m.as_mut().ok_or_else(|| null("model"))?.0;
        let d = &in_ref(d, "domain")?.0;
        let rng = &mut rng.as_mut().ok_or_else(|| null("rng"))?.0;
        let z = slice_in(z, nz, "z")?;
        let r = check_validity(m, d, samples, z, rng)?;
        *out_ref(out, "out")? = BlValidity {
            mean_dual_norm: r.mean_dual_norm,
            mean_check_passed: r.mean_check_passed,
            tail_violations: r.tail_violations,
            passed: r.passed,
        };
        Ok(())
    })
}

/// Largest admissible `mu` for a construction at effective dimension `d`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bl_select_mu(kind: BlConstruction, d: usize, horizon: u64, out: *mut f64) -> BlStatus {
    guard(|| {
        *out_ref(out, "out")? = select_mu(construction(kind), d, horizon)?;
        Ok(())
    })
}

/// Player from a JSON spec such as `{"kind": "hedge", "eta": "auto"}`.
///
/// # Safety
/// `json` must be NUL-terminated; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn bl_player_from_json(
    json: *const c_char,
    domain: *const BlDomain,
    horizon: u64,
    out: *mut *mut BlPlayer,
) -> BlStatus {
    guard(|| {
        out_ref(out, "out")?;
        let d = &in_ref(domain, "domain")?.0;
        let spec: PlayerSpec = serde_json::from_str(str_in(json, "json")?)
            .map_err(|e| Fail(BlStatus::Config, e.to_string()))?;
        let (p, _) = spec.build(d, horizon)?;
        boxed(out, BlPlayer(p))
    })
}

/// # Safety
/// `p` must be null or a player handle, freed once.
#[no_mangle]
pub unsafe extern "C" fn bl_player_free(p: *mut BlPlayer) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Runs one game. The model and player handles are copied, so they can be
/// reused for further runs.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bl_run(
    protocol: BlProtocol,
    domain: *const BlDomain,
    model: *const BlModel,
    player: *const BlPlayer,
    horizon: u64,
    seed: u64,
    out: *mut BlRunSummary,
) -> BlStatus {
    guard(|| {
        let d = &in_ref(domain, "domain")?.0;
        let m = in_ref(model, "model")?.0.clone();
        let p = in_ref(player, "player")?.0.clone();
        let out = out_ref(out, "out")?;
        let proto = match protocol {
            BlProtocol::Regret => Protocol::Regret,
            BlProtocol::Error => Protocol::Error,
        };
        let r = run_protocol(proto, d, m, p, horizon, seed, RunOptions { trajectory: Some(false) })?;
        *out = BlRunSummary {
            regret: r.regret,
            error: r.error.unwrap_or(f64::NAN),
            average_error: r.average_error,
            optimum: r.optimum,
            scored_loss: r.scored_loss,
        };
        Ok(())
    })
}

/// Runs an experiment config (or manifest) and writes its result files
/// into `out_dir`. `workers = 0` uses machine parallelism.
///
/// # Safety
/// Both strings must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn bl_run_experiment(config_path: *const c_char, out_dir: *const c_char, workers: usize) -> BlStatus {
    guard(|| {
        let cfg_path = str_in(config_path, "config_path")?;
        let out = str_in(out_dir, "out_dir")?;
        let (cfg, raw) = ExperimentConfig::load(Path::new(cfg_path))?;
        let s = run_experiment(&cfg, &raw, Path::new(out), (workers > 0).then_some(workers), false)?;
        if s.failures() > 0 {
            return Err(Fail(BlStatus::Precondition, format!("{} repetitions failed", s.failures())));
        }
        Ok(())
    })
}

/// Fits `log mean = log C + alpha log d + beta log T` over `n` cells.
///
/// # Safety
/// `dims`, `horizons` and `means` must each hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn bl_fit_scaling(
    dims: *const usize,
    horizons: *const u64,
    means: *const f64,
    n: usize,
    out: *mut BlScalingFit,
) -> BlStatus {
    guard(|| {
        let (ds, ts, ms) = (slice_in(dims, n, "dims")?, slice_in(horizons, n, "horizons")?, slice_in(means, n, "means")?);
        let rows: Vec<CellMean> = (0..n)
            .map(|i| CellMean { dim: ds[i], horizon: ts[i], mean: ms[i], stderr: 0.0 })
            .collect();
        let f = fit_scaling(&rows, Weighting::Equal)?;
        *out_ref(out, "out")? = BlScalingFit { alpha: f.alpha, beta: f.beta, log_c: f.log_c, r2: f.r2 };
        Ok(())
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bl_kl_gaussian(m1: f64, v1: f64, m2: f64, v2: f64, out: *mut f64) -> BlStatus {
    guard(|| {
        *out_ref(out, "out")? = kl_gaussian(m1, v1, m2, v2)?;
        Ok(())
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bl_lemma_dw_check(w: f64, d: u32, out: *mut bool) -> BlStatus {
    guard(|| {
        *out_ref(out, "out")? = lemma_dw_check(w, d)?;
        Ok(())
    })
}

/// Lower bound a construction proves at ambient dimension `dim`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bl_lower_bound(kind: BlConstruction, dim: usize, horizon: u64, out: *mut BlLowerBound) -> BlStatus {
    guard(|| {
        let b = lower_bound_reference(construction(kind), dim, horizon)?;
        *out_ref(out, "out")? = BlLowerBound {
            value: b.value,
            is_regret: b.kind == BoundKind::Regret,
            regret_equivalent: b.regret_equivalent(),
        };
        Ok(())
    })
}

/// Plays the digit encoding of `w_hat` (a simplex point of length `d`)
/// against the binary loss `x`, then recovers `x` from the scalar loss
/// alone into `x_out`.
///
/// # Safety
/// `w_hat` must hold `d` doubles; `x` and `x_out` must hold `d` bytes.
#[no_mangle]
pub unsafe extern "C" fn bl_digit_recover(
    w_hat: *const f64,
    d: usize,
    p: u32,
    x: *const u8,
    x_out: *mut u8,
) -> BlStatus {
    guard(|| {
        let w = slice_in(w_hat, d, "w_hat")?;
        let x = slice_in(x, d, "x")?;
        if x.iter().any(|&b| b > 1) {
            return Err(Fail(BlStatus::InvalidArgument, "x must be binary".into()));
        }
        let enc = digit_encode(w, p)?;
        let mut loss = num_rational::BigRational::zero();
        for (wi, &b) in enc.w.iter().zip(x) {
            if b == 1 {
                loss += wi;
            }
        }
        let rec = digit_decode(&(loss * &enc.l1), p, d)?;
        slice_out(x_out, d, "x_out")?.copy_from_slice(&rec);
        Ok(())
    })
}
