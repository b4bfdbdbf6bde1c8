//! C ABI for the qmdp library.
//!
//! Conventions: handles are opaque pointers created and freed by this
//! library; every fallible call returns a [`QmdpStatus`] and writes results
//! through out-pointers; the last error message is kept per thread and read
//! with [`qmdp_last_error`]. Numeric buffers are caller-allocated with their
//! length passed explicitly.
#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::ptr;

use qmdp::environments::{CaseStudyModel, HalvingModel, SyntheticFiniteModel};
use qmdp::error::Error;
use qmdp::finite_solver::{solve, SolveRoute, SolverConfig};
use qmdp::mdp_core::{AcoeSolution, ContinuousModel, FiniteModel};
use qmdp::q_async::{train_async, AsyncConfig, ShiftSupport};
use qmdp::q_sync::{train_sync, SyncConfig};
use qmdp::quantization::{build_finite_model, BuildMethod, QuantizationScheme, WeightMeasure};

/// Result of every fallible call. Matches the CLI exit-code taxonomy where
/// they overlap.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum QmdpStatus {
    Ok = 0,
    NullArgument = 1,
    ConfigError = 2,
    AssumptionError = 3,
    NumericalError = 4,
    DomainError = 5,
    IoError = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_from(err: &Error) -> QmdpStatus {
    set_error(&err.to_string());
    match err {
        Error::Config(_) | Error::Json(_) => QmdpStatus::ConfigError,
        Error::Domain(_) => QmdpStatus::DomainError,
        Error::Assumption(_) => QmdpStatus::AssumptionError,
        Error::Numerical(_) => QmdpStatus::NumericalError,
        Error::Io(_) => QmdpStatus::IoError,
    }
}

fn null_arg(what: &str) -> QmdpStatus {
    set_error(&format!("null argument: {what}"));
    QmdpStatus::NullArgument
}

/// Copy the current thread's last error message into `buf` (NUL-terminated,
/// truncated to `cap`); returns the full message length in bytes.
#[no_mangle]
pub unsafe extern "C" fn qmdp_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let msg = slot.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

enum ModelKind {
    CaseStudy(CaseStudyModel),
    Halving(HalvingModel),
    Synthetic(SyntheticFiniteModel),
}

/// Opaque continuous-model handle.
pub struct QmdpModel {
    kind: ModelKind,
}

impl QmdpModel {
    fn as_model(&self) -> &dyn ContinuousModel {
        match &self.kind {
            ModelKind::CaseStudy(m) => m,
            ModelKind::Halving(m) => m,
            ModelKind::Synthetic(m) => m,
        }
    }
}

/// Opaque quantization-scheme handle.
pub struct QmdpScheme {
    inner: QuantizationScheme,
}

/// Opaque finite-model handle.
pub struct QmdpFiniteModel {
    inner: FiniteModel,
}

/// Opaque solved-optimality-equation handle.
pub struct QmdpSolution {
    inner: AcoeSolution,
}

/// Benchmark continuous control problem on [0,1] with actions in [-1,1].
#[no_mangle]
pub extern "C" fn qmdp_model_case_study() -> *mut QmdpModel {
    Box::into_raw(Box::new(QmdpModel {
        kind: ModelKind::CaseStudy(CaseStudyModel),
    }))
}

/// Uncontrolled halving dynamics on [-1,1] (the quantization
/// counterexample).
#[no_mangle]
pub extern "C" fn qmdp_model_halving() -> *mut QmdpModel {
    Box::into_raw(Box::new(QmdpModel {
        kind: ModelKind::Halving(HalvingModel),
    }))
}

/// Explicit finite model: `cost` is num_states x num_actions row-major,
/// `kernel` is num_states x num_actions x num_states, `floor` has one entry
/// per state (may be NULL for an all-zero floor).
#[no_mangle]
pub unsafe extern "C" fn qmdp_model_synthetic(
    cost: *const f64,
    kernel: *const f64,
    floor: *const f64,
    num_states: usize,
    num_actions: usize,
    out: *mut *mut QmdpModel,
) -> QmdpStatus {
    if cost.is_null() || kernel.is_null() || out.is_null() {
        return null_arg("cost/kernel/out");
    }
    let m = num_states;
    let k = num_actions;
    let cost = std::slice::from_raw_parts(cost, m * k).to_vec();
    let kernel = std::slice::from_raw_parts(kernel, m * k * m).to_vec();
    let floor = if floor.is_null() {
        vec![0.0; m]
    } else {
        std::slice::from_raw_parts(floor, m).to_vec()
    };
    match FiniteModel::new(m, k, cost, kernel, floor).and_then(SyntheticFiniteModel::new) {
        Ok(model) => {
            *out = Box::into_raw(Box::new(QmdpModel {
                kind: ModelKind::Synthetic(model),
            }));
            QmdpStatus::Ok
        }
        Err(err) => status_from(&err),
    }
}

#[no_mangle]
pub unsafe extern "C" fn qmdp_model_free(model: *mut QmdpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Uniform quantization of the model's state space into `num_bins` bins with
/// the given action net. Synthetic finite models use their identity
/// quantizer instead and ignore `num_bins`/`net`.
#[no_mangle]
pub unsafe extern "C" fn qmdp_scheme_uniform(
    model: *const QmdpModel,
    num_bins: usize,
    net: *const f64,
    net_len: usize,
    out: *mut *mut QmdpScheme,
) -> QmdpStatus {
    if model.is_null() || out.is_null() {
        return null_arg("model/out");
    }
    let model = &*model;
    let result = match &model.kind {
        ModelKind::Synthetic(s) => Ok(s.identity_scheme()),
        _ => {
            if net.is_null() {
                return null_arg("net");
            }
            let net = std::slice::from_raw_parts(net, net_len).to_vec();
            QuantizationScheme::uniform(
                model.as_model().state_bounds(),
                num_bins,
                net,
                WeightMeasure::Uniform,
            )
        }
    };
    match result {
        Ok(scheme) => {
            *out = Box::into_raw(Box::new(QmdpScheme { inner: scheme }));
            QmdpStatus::Ok
        }
        Err(err) => status_from(&err),
    }
}

#[no_mangle]
pub unsafe extern "C" fn qmdp_scheme_free(scheme: *mut QmdpScheme) {
    if !scheme.is_null() {
        drop(Box::from_raw(scheme));
    }
}

#[no_mangle]
pub unsafe extern "C" fn qmdp_scheme_num_bins(scheme: *const QmdpScheme) -> usize {
    if scheme.is_null() {
        return 0;
    }
    (*scheme).inner.num_bins()
}

#[no_mangle]
pub unsafe extern "C" fn qmdp_scheme_num_actions(scheme: *const QmdpScheme) -> usize {
    if scheme.is_null() {
        return 0;
    }
    (*scheme).inner.action_net.len()
}

/// Worst-case mean in-bin distance (the resolution term of the error
/// bounds).
#[no_mangle]
pub unsafe extern "C" fn qmdp_scheme_loss_bound(
    scheme: *const QmdpScheme,
    out: *mut f64,
) -> QmdpStatus {
    if scheme.is_null() || out.is_null() {
        return null_arg("scheme/out");
    }
    *out = (*scheme).inner.loss_bound();
    QmdpStatus::Ok
}

/// Bin index and representative state of `x`.
#[no_mangle]
pub unsafe extern "C" fn qmdp_scheme_quantize(
    scheme: *const QmdpScheme,
    x: f64,
    bin_out: *mut usize,
    representative_out: *mut f64,
) -> QmdpStatus {
    if scheme.is_null() || bin_out.is_null() || representative_out.is_null() {
        return null_arg("scheme/outputs");
    }
    match (*scheme).inner.quantize(x) {
        Ok((bin, rep)) => {
            *bin_out = bin;
            *representative_out = rep;
            QmdpStatus::Ok
        }
        Err(err) => status_from(&err),
    }
}

/// Aggregate the continuous model into a finite model. With
/// `use_monte_carlo == 0` the exact kernel integrals are used; otherwise
/// `samples_per_bin` transitions are sampled per cell with the given seed.
#[no_mangle]
pub unsafe extern "C" fn qmdp_build_finite(
    model: *const QmdpModel,
    scheme: *const QmdpScheme,
    use_monte_carlo: i32,
    samples_per_bin: usize,
    seed: u64,
    out: *mut *mut QmdpFiniteModel,
) -> QmdpStatus {
    if model.is_null() || scheme.is_null() || out.is_null() {
        return null_arg("model/scheme/out");
    }
    let method = if use_monte_carlo == 0 {
        BuildMethod::Exact
    } else {
        BuildMethod::MonteCarlo {
            samples_per_bin,
            seed,
        }
    };
    match build_finite_model((*model).as_model(), &(*scheme).inner, method) {
        Ok(finite) => {
            *out = Box::into_raw(Box::new(QmdpFiniteModel { inner: finite }));
            QmdpStatus::Ok
        }
        Err(err) => status_from(&err),
    }
}

/// Parse a finite model from its JSON document.
#[no_mangle]
pub unsafe extern "C" fn qmdp_finite_from_json(
    json: *const c_char,
    out: *mut *mut QmdpFiniteModel,
) -> QmdpStatus {
    if json.is_null() || out.is_null() {
        return null_arg("json/out");
    }
    let text = match CStr::from_ptr(json).to_str() {
        Ok(t) => t,
        Err(_) => {
            set_error("json argument is not valid UTF-8");
            return QmdpStatus::ConfigError;
        }
    };
    match qmdp::io::parse_finite_model_json(text) {
        Ok(finite) => {
            *out = Box::into_raw(Box::new(QmdpFiniteModel { inner: finite }));
            QmdpStatus::Ok
        }
        Err(err) => status_from(&err),
    }
}

/// Serialize a finite model to JSON; free the string with
/// [`qmdp_string_free`].
#[no_mangle]
pub unsafe extern "C" fn qmdp_finite_to_json(
    finite: *const QmdpFiniteModel,
    out: *mut *mut c_char,
) -> QmdpStatus {
    if finite.is_null() || out.is_null() {
        return null_arg("finite/out");
    }
    match qmdp::io::to_json_string(&(*finite).inner) {
        Ok(text) => {
            let c = CString::new(text).unwrap_or_default();
            *out = c.into_raw();
            QmdpStatus::Ok
        }
        Err(err) => status_from(&err),
    }
}

#[no_mangle]
pub unsafe extern "C" fn qmdp_finite_num_states(finite: *const QmdpFiniteModel) -> usize {
    if finite.is_null() {
        return 0;
    }
    (*finite).inner.num_states
}

#[no_mangle]
pub unsafe extern "C" fn qmdp_finite_num_actions(finite: *const QmdpFiniteModel) -> usize {
    if finite.is_null() {
        return 0;
    }
    (*finite).inner.num_actions
}

#[no_mangle]
pub unsafe extern "C" fn qmdp_finite_free(finite: *mut QmdpFiniteModel) {
    if !finite.is_null() {
        drop(Box::from_raw(finite));
    }
}

/// Solve route selector for [`qmdp_solve`].
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum QmdpRoute {
    SpanRvi = 0,
    ShiftedKernel = 1,
}

/// Solve the average cost optimality equation of a finite model.
/// `tolerance <= 0` and `max_iters == 0` select the defaults.
#[no_mangle]
pub unsafe extern "C" fn qmdp_solve(
    finite: *const QmdpFiniteModel,
    route: QmdpRoute,
    tolerance: f64,
    max_iters: u64,
    out: *mut *mut QmdpSolution,
) -> QmdpStatus {
    if finite.is_null() || out.is_null() {
        return null_arg("finite/out");
    }
    let mut cfg = SolverConfig::with_route(match route {
        QmdpRoute::SpanRvi => SolveRoute::SpanRvi,
        QmdpRoute::ShiftedKernel => SolveRoute::ShiftedKernel,
    });
    if tolerance > 0.0 {
        cfg.tolerance = tolerance;
    }
    if max_iters > 0 {
        cfg.max_iters = max_iters;
    }
    match solve(&(*finite).inner, &cfg) {
        Ok(sol) => {
            *out = Box::into_raw(Box::new(QmdpSolution { inner: sol }));
            QmdpStatus::Ok
        }
        Err(err) => status_from(&err),
    }
}

#[no_mangle]
pub unsafe extern "C" fn qmdp_solution_gain(sol: *const QmdpSolution) -> f64 {
    if sol.is_null() {
        return f64::NAN;
    }
    (*sol).inner.gain
}

#[no_mangle]
pub unsafe extern "C" fn qmdp_solution_residual(sol: *const QmdpSolution) -> f64 {
    if sol.is_null() {
        return f64::NAN;
    }
    (*sol).inner.residual
}

/// Copy the Q table (num_states x num_actions, row-major) into `out`.
#[no_mangle]
pub unsafe extern "C" fn qmdp_solution_q(
    sol: *const QmdpSolution,
    out: *mut f64,
    len: usize,
) -> QmdpStatus {
    if sol.is_null() || out.is_null() {
        return null_arg("solution/out");
    }
    let q = &(*sol).inner.q;
    if len != q.len() {
        set_error(&format!("q buffer holds {len} entries, table has {}", q.len()));
        return QmdpStatus::ConfigError;
    }
    ptr::copy_nonoverlapping(q.as_ptr(), out, q.len());
    QmdpStatus::Ok
}

/// Copy the greedy policy (one action index per state) into `out`.
#[no_mangle]
pub unsafe extern "C" fn qmdp_solution_policy(
    sol: *const QmdpSolution,
    out: *mut usize,
    len: usize,
) -> QmdpStatus {
    if sol.is_null() || out.is_null() {
        return null_arg("solution/out");
    }
    let policy = &(*sol).inner.policy;
    if len != policy.len() {
        set_error(&format!(
            "policy buffer holds {len} entries, policy has {}",
            policy.len()
        ));
        return QmdpStatus::ConfigError;
    }
    ptr::copy_nonoverlapping(policy.as_ptr(), out, policy.len());
    QmdpStatus::Ok
}

#[no_mangle]
pub unsafe extern "C" fn qmdp_solution_free(sol: *mut QmdpSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// Synchronous quantized Q-learning; writes the normalized final table into
/// `q_out` (num_bins x net_len entries).
#[no_mangle]
pub unsafe extern "C" fn qmdp_train_sync(
    model: *const QmdpModel,
    scheme: *const QmdpScheme,
    sweeps: u64,
    seed: u64,
    q_out: *mut f64,
    q_len: usize,
) -> QmdpStatus {
    if model.is_null() || scheme.is_null() || q_out.is_null() {
        return null_arg("model/scheme/q_out");
    }
    let scheme = &(*scheme).inner;
    let expect = scheme.num_bins() * scheme.action_net.len();
    if q_len != expect {
        set_error(&format!("q buffer holds {q_len} entries, table has {expect}"));
        return QmdpStatus::ConfigError;
    }
    let cfg = SyncConfig {
        num_sweeps: sweeps,
        seed,
        snapshot_every: sweeps.max(1),
        ..Default::default()
    };
    match train_sync((*model).as_model(), scheme, &cfg, None) {
        Ok(outcome) => {
            ptr::copy_nonoverlapping(outcome.q_hat.as_ptr(), q_out, expect);
            QmdpStatus::Ok
        }
        Err(err) => status_from(&err),
    }
}

/// Asynchronous quantized Q-learning from `x0`; writes the final table into
/// `q_out` and the delta-shifted gain estimate into `gain_out` (either may
/// be NULL).
#[no_mangle]
pub unsafe extern "C" fn qmdp_train_async(
    model: *const QmdpModel,
    scheme: *const QmdpScheme,
    steps: u64,
    delta: f64,
    x0: f64,
    seed: u64,
    q_out: *mut f64,
    q_len: usize,
    gain_out: *mut f64,
) -> QmdpStatus {
    if model.is_null() || scheme.is_null() {
        return null_arg("model/scheme");
    }
    let scheme = &(*scheme).inner;
    let expect = scheme.num_bins() * scheme.action_net.len();
    if !q_out.is_null() && q_len != expect {
        set_error(&format!("q buffer holds {q_len} entries, table has {expect}"));
        return QmdpStatus::ConfigError;
    }
    let cfg = AsyncConfig {
        horizon: steps,
        delta,
        initial_state: x0,
        seed,
        snapshot_every: steps.max(1),
        log_trajectory: false,
        ..Default::default()
    };
    match train_async((*model).as_model(), scheme, &cfg, None) {
        Ok(outcome) => {
            if !q_out.is_null() {
                ptr::copy_nonoverlapping(outcome.q.as_ptr(), q_out, expect);
            }
            if !gain_out.is_null() {
                *gain_out = qmdp::q_async::gain_estimate(
                    &outcome.q,
                    scheme.num_bins(),
                    scheme.action_net.len(),
                    delta,
                    &ShiftSupport::AllBins,
                );
            }
            QmdpStatus::Ok
        }
        Err(err) => status_from(&err),
    }
}

fn bound_out(out: *mut f64, value: Result<f64, Error>) -> QmdpStatus {
    match value {
        Ok(v) => {
            unsafe { *out = v };
            QmdpStatus::Ok
        }
        Err(err) => status_from(&err),
    }
}

/// Value gap of the quantized model: K_c / (1 - K_f) * L_X.
#[no_mangle]
pub unsafe extern "C" fn qmdp_bound_value_gap(
    k_c: f64,
    k_f: f64,
    l_x: f64,
    out: *mut f64,
) -> QmdpStatus {
    if out.is_null() {
        return null_arg("out");
    }
    let value = qmdp::analysis::LipschitzCertificate::declared(k_c, k_f)
        .and_then(|cert| qmdp::analysis::bound_value_gap(&cert, l_x));
    bound_out(out, value)
}

/// Lifted-policy performance gap: 2 K_c / ((1 - K_f) mu) * L_X.
#[no_mangle]
pub unsafe extern "C" fn qmdp_bound_policy_gap(
    k_c: f64,
    k_f: f64,
    l_x: f64,
    mu_mass: f64,
    out: *mut f64,
) -> QmdpStatus {
    if out.is_null() {
        return null_arg("out");
    }
    let value = qmdp::analysis::LipschitzCertificate::declared(k_c, k_f)
        .and_then(|cert| qmdp::analysis::bound_policy_gap(&cert, l_x, mu_mass));
    bound_out(out, value)
}

/// Action-net gap: K_c / (1 - K_f) * (1/n).
#[no_mangle]
pub unsafe extern "C" fn qmdp_bound_action_gap(
    k_c: f64,
    k_f: f64,
    n: f64,
    out: *mut f64,
) -> QmdpStatus {
    if out.is_null() {
        return null_arg("out");
    }
    let value = qmdp::analysis::LipschitzCertificate::declared(k_c, k_f)
        .and_then(|cert| qmdp::analysis::bound_action_gap(&cert, n));
    bound_out(out, value)
}

/// Free a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn qmdp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
