//! C ABI over `grf-excursion`.
//!
//! Objects are exposed as opaque handles created by `*_new` functions and
//! released with the matching `*_free`. Every fallible function returns an
//! [`ExStatus`]; on failure a description is available from
//! [`ex_last_error_message`] on the same thread until the next failing call.
//! No function unwinds across the boundary.

use grf_excursion::cokriging::{ObservationBatch, PosteriorState};
use grf_excursion::commands::decide;
use grf_excursion::config::RunConfig;
use grf_excursion::excursion::{excursion_probability_field, ibv};
use grf_excursion::gaussian::bvn_cdf;
use grf_excursion::grf::GeneralizedLocation;
use grf_excursion::planner::{StrategyKind, SurveyState};
use grf_excursion::simulator::Scenario;
use grf_excursion::Error;
use nalgebra::{DMatrix, DVector};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Numerical = 4,
    Io = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Run configuration handle.
pub struct ExConfig {
    inner: RunConfig,
}

/// Posterior handle: the field model, grid and planning context of the
/// configuration it was created from, plus the current posterior.
pub struct ExPosterior {
    cfg: RunConfig,
    scenario: Scenario,
    state: PosteriorState,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> ExStatus {
    match e {
        Error::Config(_) | Error::Schema { .. } => ExStatus::Config,
        Error::Io(_) => ExStatus::Io,
        Error::DimensionMismatch(_) | Error::OffGridLocation(_) | Error::NegativeDistance(_) => ExStatus::InvalidArgument,
        _ => ExStatus::Numerical,
    }
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (ExStatus, String)>) -> ExStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ExStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            ExStatus::Panic
        }
    }
}

fn lib<T>(r: grf_excursion::Result<T>) -> Result<T, (ExStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (ExStatus, String) {
    (ExStatus::NullPointer, format!("{what} is null"))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ex_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or null if none. The
/// pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn ex_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Creates a configuration with all defaults.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn ex_config_new_default(out: *mut *mut ExConfig) -> ExStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = Box::into_raw(Box::new(ExConfig {
            inner: RunConfig::default(),
        }));
        Ok(())
    })
}

/// Parses a TOML configuration.
///
/// # Safety
/// `toml` must be a NUL-terminated UTF-8 string; `out` as in
/// [`ex_config_new_default`].
#[no_mangle]
pub unsafe extern "C" fn ex_config_from_toml(toml: *const c_char, out: *mut *mut ExConfig) -> ExStatus {
    guard(|| {
        if toml.is_null() {
            return Err(null("toml"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(toml)
            .to_str()
            .map_err(|_| (ExStatus::InvalidArgument, "configuration is not UTF-8".to_string()))?;
        let inner = lib(RunConfig::from_toml_str(text))?;
        *out = Box::into_raw(Box::new(ExConfig { inner }));
        Ok(())
    })
}

/// Selects the planning strategy: 0 static north, 1 static east, 2 static
/// zigzag, 3 naive, 4 myopic, 5 look-ahead.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ex_config_set_strategy(cfg: *mut ExConfig, strategy: u32) -> ExStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| null("cfg"))?;
        let kind = StrategyKind::ALL
            .get(strategy as usize)
            .ok_or_else(|| (ExStatus::InvalidArgument, format!("unknown strategy code {strategy}")))?;
        cfg.inner.survey.strategy = *kind;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ex_config_free(cfg: *mut ExConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Creates the prior posterior of a configuration.
///
/// # Safety
/// `cfg` must be a live handle; `out` as in [`ex_config_new_default`].
#[no_mangle]
pub unsafe extern "C" fn ex_posterior_new(cfg: *const ExConfig, out: *mut *mut ExPosterior) -> ExStatus {
    guard(|| {
        let cfg = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let scenario = lib(cfg.inner.scenario())?;
        let state = lib(PosteriorState::from_prior(&scenario.prior, &scenario.grid))?;
        *out = Box::into_raw(Box::new(ExPosterior {
            cfg: cfg.inner.clone(),
            scenario,
            state,
        }));
        Ok(())
    })
}

/// # Safety
/// `post` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ex_posterior_free(post: *mut ExPosterior) {
    if !post.is_null() {
        drop(Box::from_raw(post));
    }
}

/// Number of grid nodes, or 0 for a null handle.
///
/// # Safety
/// `post` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ex_posterior_node_count(post: *const ExPosterior) -> usize {
    post.as_ref().map_or(0, |p| p.state.grid().len())
}

/// Number of responses, or 0 for a null handle.
///
/// # Safety
/// `post` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ex_posterior_response_count(post: *const ExPosterior) -> usize {
    post.as_ref().map_or(0, |p| p.state.p())
}

/// Conditions on `n` observations `values[i]` of response `responses[i]`
/// at `(xs[i], ys[i])` with independent noise of standard deviation
/// `noise_sd[i]`. Points need not be grid nodes; the response index is
/// 0-based.
///
/// # Safety
/// Each array must hold at least `n` readable elements; `post` must be a
/// live handle.
#[no_mangle]
pub unsafe extern "C" fn ex_posterior_update(
    post: *mut ExPosterior,
    n: usize,
    xs: *const f64,
    ys: *const f64,
    responses: *const usize,
    values: *const f64,
    noise_sd: *const f64,
) -> ExStatus {
    guard(|| {
        let post = post.as_mut().ok_or_else(|| null("post"))?;
        if n == 0 {
            return Ok(());
        }
        if xs.is_null() || ys.is_null() || responses.is_null() || values.is_null() || noise_sd.is_null() {
            return Err(null("observation array"));
        }
        let xs = std::slice::from_raw_parts(xs, n);
        let ys = std::slice::from_raw_parts(ys, n);
        let responses = std::slice::from_raw_parts(responses, n);
        let values = std::slice::from_raw_parts(values, n);
        let sd = std::slice::from_raw_parts(noise_sd, n);
        let locs: Vec<GeneralizedLocation> = (0..n)
            .map(|i| GeneralizedLocation::new([xs[i], ys[i]], responses[i]))
            .collect();
        let noise = DMatrix::from_diagonal(&DVector::from_iterator(n, sd.iter().map(|s| s * s)));
        let batch = lib(ObservationBatch::new(locs, values.to_vec(), noise))?;
        post.state = lib(post.state.update(&batch))?;
        Ok(())
    })
}

fn copy_out(src: &[f64], out: *mut f64, len: usize) -> Result<(), (ExStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    if len < src.len() {
        return Err((
            ExStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", src.len()),
        ));
    }
    // SAFETY: the caller guarantees `len` writable elements at `out`.
    unsafe { std::ptr::copy_nonoverlapping(src.as_ptr(), out, src.len()) };
    Ok(())
}

/// Writes the posterior mean, node-major with responses interleaved
/// (`node * p + response`), into `out[0..len)`.
///
/// # Safety
/// `out` must hold `len` writable doubles; `post` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ex_posterior_mean(post: *const ExPosterior, out: *mut f64, len: usize) -> ExStatus {
    guard(|| {
        let post = post.as_ref().ok_or_else(|| null("post"))?;
        copy_out(post.state.mean().as_slice(), out, len)
    })
}

/// Writes the posterior marginal variances in the layout of
/// [`ex_posterior_mean`].
///
/// # Safety
/// As [`ex_posterior_mean`].
#[no_mangle]
pub unsafe extern "C" fn ex_posterior_variance(post: *const ExPosterior, out: *mut f64, len: usize) -> ExStatus {
    guard(|| {
        let post = post.as_ref().ok_or_else(|| null("post"))?;
        let v: Vec<f64> = post.state.cov().diagonal().iter().copied().collect();
        copy_out(&v, out, len)
    })
}

/// Writes the excursion probability of every grid node into `out`.
///
/// # Safety
/// `out` must hold `len` writable doubles; `post` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ex_posterior_excursion_probabilities(
    post: *const ExPosterior,
    out: *mut f64,
    len: usize,
) -> ExStatus {
    guard(|| {
        let post = post.as_ref().ok_or_else(|| null("post"))?;
        let plan = &post.scenario.plan;
        let ep = lib(excursion_probability_field(&post.state, &plan.spec, &plan.cdf))?;
        copy_out(&ep, out, len)
    })
}

/// Integrated Bernoulli variance of the current posterior.
///
/// # Safety
/// `out` must be writable; `post` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ex_posterior_ibv(post: *const ExPosterior, out: *mut f64) -> ExStatus {
    guard(|| {
        let post = post.as_ref().ok_or_else(|| null("post"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let plan = &post.scenario.plan;
        *out = lib(ibv(&post.state, &plan.spec, &plan.weights, &plan.cdf))?;
        Ok(())
    })
}

/// Chooses the next waypoint with the configured strategy.
///
/// `current_node` is the vehicle's waypoint, `visited` the `n_visited`
/// waypoints already travelled (used for revisit pruning) and `stage` the
/// number of completed legs. The candidate table is written to
/// `out_nodes`/`out_scores` (each of `capacity` elements, at most six are
/// needed) and its length to `out_count`.
///
/// # Safety
/// Pointers must be valid for the stated lengths; `post` must be a live
/// handle.
#[no_mangle]
pub unsafe extern "C" fn ex_plan_step(
    post: *const ExPosterior,
    current_node: usize,
    visited: *const usize,
    n_visited: usize,
    stage: usize,
    out_chosen: *mut usize,
    out_nodes: *mut usize,
    out_scores: *mut f64,
    capacity: usize,
    out_count: *mut usize,
) -> ExStatus {
    guard(|| {
        let post = post.as_ref().ok_or_else(|| null("post"))?;
        if out_chosen.is_null() || out_nodes.is_null() || out_scores.is_null() || out_count.is_null() {
            return Err(null("output"));
        }
        let visited = if n_visited == 0 {
            Vec::new()
        } else if visited.is_null() {
            return Err(null("visited"));
        } else {
            std::slice::from_raw_parts(visited, n_visited).to_vec()
        };
        let state = SurveyState {
            current_node,
            visited,
            posterior: post.state.clone(),
            stage,
        };
        let decision = lib(decide(&post.cfg, &post.scenario, &state))?;
        let k = decision.table.len();
        *out_count = k;
        if capacity < k {
            return Err((
                ExStatus::BufferTooSmall,
                format!("candidate buffers hold {capacity}, {k} needed"),
            ));
        }
        for (i, c) in decision.table.iter().enumerate() {
            *out_nodes.add(i) = c.node;
            *out_scores.add(i) = c.score;
        }
        *out_chosen = decision.chosen;
        Ok(())
    })
}

/// Bivariate standard normal CDF `P(X ≤ h, Y ≤ k)` with correlation `rho`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ex_bvn_cdf(h: f64, k: f64, rho: f64, out: *mut f64) -> ExStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if !(-1.0..=1.0).contains(&rho) {
            return Err((ExStatus::InvalidArgument, format!("correlation {rho} outside [-1, 1]")));
        }
        *out = bvn_cdf(h, k, rho);
        Ok(())
    })
}
