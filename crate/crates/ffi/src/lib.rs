//! C ABI for the photonic network simulator: opaque handles, status codes,
//! and a thread-local last-error message. The header is generated into
//! `include/qpnn.h` at build time.
//!
//! Conventions: every constructor writes its result through an out pointer
//! and returns a status; amplitudes cross the boundary as interleaved
//! `re, im` doubles in basis order; handles must be released with the
//! matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};

use num_complex::Complex64;
use qpnn_core::fock::{inner_product, FockBasis, FockState};
use qpnn_core::network::{forward, NetworkParams};
use qpnn_core::optim::{train, Objective, StatePrepObjective, TrainConfig};

/// Status code returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpnnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ComputationFailed = 3,
    BufferTooSmall = 4,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(message: impl Into<String>) {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = message.into());
}

fn fail(message: impl Into<String>, status: QpnnStatus) -> QpnnStatus {
    set_error(message);
    status
}

/// Opaque Fock-basis handle.
pub struct QpnnBasis {
    inner: std::sync::Arc<FockBasis>,
}

/// Opaque state handle (single photon-number sector).
pub struct QpnnState {
    inner: FockState,
}

/// Opaque network-parameter handle.
pub struct QpnnNetwork {
    inner: NetworkParams,
}

/// Copies the last error message for this thread into `buffer` (NUL
/// terminated, truncated to `capacity`). Returns the full message length.
///
/// # Safety
/// `buffer` must point to at least `capacity` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn qpnn_last_error(buffer: *mut c_char, capacity: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let message = slot.borrow();
        let bytes = message.as_bytes();
        if !buffer.is_null() && capacity > 0 {
            let n = bytes.len().min(capacity - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buffer.cast(), n);
            *buffer.add(n) = 0;
        }
        bytes.len()
    })
}

/// Enumerates the Fock basis for `modes` modes and `photons` photons.
///
/// # Safety
/// `out` must be a valid pointer; the result must be released with
/// [`qpnn_basis_free`].
#[no_mangle]
pub unsafe extern "C" fn qpnn_basis_new(
    modes: usize,
    photons: usize,
    out: *mut *mut QpnnBasis,
) -> QpnnStatus {
    if out.is_null() {
        return fail("out pointer is null", QpnnStatus::NullPointer);
    }
    match FockBasis::new(modes, photons) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(QpnnBasis { inner }));
            QpnnStatus::Ok
        }
        Err(err) => fail(err.to_string(), QpnnStatus::InvalidArgument),
    }
}

/// Number of basis states, or 0 for a null handle.
///
/// # Safety
/// `basis` must be null or a live handle from [`qpnn_basis_new`].
#[no_mangle]
pub unsafe extern "C" fn qpnn_basis_size(basis: *const QpnnBasis) -> usize {
    basis.as_ref().map_or(0, |b| b.inner.len())
}

/// # Safety
/// `basis` must be null or a handle produced by [`qpnn_basis_new`].
#[no_mangle]
pub unsafe extern "C" fn qpnn_basis_free(basis: *mut QpnnBasis) {
    if !basis.is_null() {
        drop(Box::from_raw(basis));
    }
}

/// Builds a state from `2 * basis_size` interleaved `re, im` doubles.
/// The amplitudes are normalized on construction.
///
/// # Safety
/// `amplitudes` must point to `len` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn qpnn_state_new(
    basis: *const QpnnBasis,
    amplitudes: *const f64,
    len: usize,
    out: *mut *mut QpnnState,
) -> QpnnStatus {
    if basis.is_null() || amplitudes.is_null() || out.is_null() {
        return fail("null pointer argument", QpnnStatus::NullPointer);
    }
    let basis = &(*basis).inner;
    if len != 2 * basis.len() {
        return fail(
            format!("expected {} interleaved doubles, got {len}", 2 * basis.len()),
            QpnnStatus::InvalidArgument,
        );
    }
    let raw = std::slice::from_raw_parts(amplitudes, len);
    let amps: Vec<Complex64> = raw
        .chunks_exact(2)
        .map(|pair| Complex64::new(pair[0], pair[1]))
        .collect();
    match FockState::from_amplitudes(basis, amps) {
        Ok(mut state) => {
            state.normalize();
            if state.norm_sqr() == 0.0 {
                return fail("state has zero norm", QpnnStatus::InvalidArgument);
            }
            *out = Box::into_raw(Box::new(QpnnState { inner: state }));
            QpnnStatus::Ok
        }
        Err(err) => fail(err.to_string(), QpnnStatus::InvalidArgument),
    }
}

/// Writes the state's amplitudes as interleaved `re, im` doubles.
///
/// # Safety
/// `buffer` must point to at least `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn qpnn_state_amplitudes(
    state: *const QpnnState,
    buffer: *mut f64,
    capacity: usize,
) -> QpnnStatus {
    if state.is_null() || buffer.is_null() {
        return fail("null pointer argument", QpnnStatus::NullPointer);
    }
    let sector = match (*state).inner.single_sector() {
        Ok(sector) => sector,
        Err(err) => return fail(err.to_string(), QpnnStatus::ComputationFailed),
    };
    let needed = 2 * sector.amplitudes.len();
    if capacity < needed {
        return fail(
            format!("buffer holds {capacity} doubles, need {needed}"),
            QpnnStatus::BufferTooSmall,
        );
    }
    for (i, amp) in sector.amplitudes.iter().enumerate() {
        *buffer.add(2 * i) = amp.re;
        *buffer.add(2 * i + 1) = amp.im;
    }
    QpnnStatus::Ok
}

/// # Safety
/// `state` must be null or a live state handle.
#[no_mangle]
pub unsafe extern "C" fn qpnn_state_free(state: *mut QpnnState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// State fidelity `|<a|b>|`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn qpnn_state_fidelity(
    a: *const QpnnState,
    b: *const QpnnState,
    out: *mut f64,
) -> QpnnStatus {
    if a.is_null() || b.is_null() || out.is_null() {
        return fail("null pointer argument", QpnnStatus::NullPointer);
    }
    match inner_product(&(*a).inner, &(*b).inner) {
        Ok(overlap) => {
            *out = overlap.norm();
            QpnnStatus::Ok
        }
        Err(err) => fail(err.to_string(), QpnnStatus::InvalidArgument),
    }
}

/// Fresh network with all phases drawn uniformly from a seeded generator.
///
/// # Safety
/// `out` must be valid; release with [`qpnn_network_free`].
#[no_mangle]
pub unsafe extern "C" fn qpnn_network_random(
    modes: usize,
    layers: usize,
    seed: u64,
    out: *mut *mut QpnnNetwork,
) -> QpnnStatus {
    if out.is_null() {
        return fail("out pointer is null", QpnnStatus::NullPointer);
    }
    match NetworkParams::random(modes, layers, seed) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(QpnnNetwork { inner }));
            QpnnStatus::Ok
        }
        Err(err) => fail(err.to_string(), QpnnStatus::InvalidArgument),
    }
}

/// # Safety
/// `network` must be null or a live network handle.
#[no_mangle]
pub unsafe extern "C" fn qpnn_network_free(network: *mut QpnnNetwork) {
    if !network.is_null() {
        drop(Box::from_raw(network));
    }
}

/// Length of the flat parameter vector, or 0 for a null handle.
///
/// # Safety
/// `network` must be null or a live network handle.
#[no_mangle]
pub unsafe extern "C" fn qpnn_network_parameter_count(network: *const QpnnNetwork) -> usize {
    network.as_ref().map_or(0, |n| n.inner.parameter_count())
}

/// Copies the packed parameter vector into `buffer`.
///
/// # Safety
/// `buffer` must point to at least `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn qpnn_network_get_parameters(
    network: *const QpnnNetwork,
    buffer: *mut f64,
    capacity: usize,
) -> QpnnStatus {
    if network.is_null() || buffer.is_null() {
        return fail("null pointer argument", QpnnStatus::NullPointer);
    }
    let flat = (*network).inner.flat();
    if capacity < flat.len() {
        return fail(
            format!("buffer holds {capacity} doubles, need {}", flat.len()),
            QpnnStatus::BufferTooSmall,
        );
    }
    std::ptr::copy_nonoverlapping(flat.as_ptr(), buffer, flat.len());
    QpnnStatus::Ok
}

/// Replaces the packed parameter vector.
///
/// # Safety
/// `values` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn qpnn_network_set_parameters(
    network: *mut QpnnNetwork,
    values: *const f64,
    len: usize,
) -> QpnnStatus {
    if network.is_null() || values.is_null() {
        return fail("null pointer argument", QpnnStatus::NullPointer);
    }
    let slice = std::slice::from_raw_parts(values, len);
    match (*network).inner.set_flat(slice) {
        Ok(()) => QpnnStatus::Ok,
        Err(err) => fail(err.to_string(), QpnnStatus::InvalidArgument),
    }
}

/// Forward pass of the network on a state.
///
/// # Safety
/// All pointers must be valid; release the output state.
#[no_mangle]
pub unsafe extern "C" fn qpnn_network_forward(
    network: *const QpnnNetwork,
    state: *const QpnnState,
    out: *mut *mut QpnnState,
) -> QpnnStatus {
    if network.is_null() || state.is_null() || out.is_null() {
        return fail("null pointer argument", QpnnStatus::NullPointer);
    }
    match forward(&(*state).inner, &(*network).inner, None) {
        Ok(image) => {
            *out = Box::into_raw(Box::new(QpnnState { inner: image }));
            QpnnStatus::Ok
        }
        Err(err) => fail(err.to_string(), QpnnStatus::ComputationFailed),
    }
}

/// Serializes the network as checkpoint JSON into `buffer` (NUL terminated).
/// `written` receives the JSON length excluding the terminator.
///
/// # Safety
/// `buffer` must point to `capacity` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn qpnn_network_to_json(
    network: *const QpnnNetwork,
    buffer: *mut c_char,
    capacity: usize,
    written: *mut usize,
) -> QpnnStatus {
    if network.is_null() || buffer.is_null() || written.is_null() {
        return fail("null pointer argument", QpnnStatus::NullPointer);
    }
    let json = match (*network).inner.to_checkpoint_json() {
        Ok(json) => json,
        Err(err) => return fail(err.to_string(), QpnnStatus::ComputationFailed),
    };
    *written = json.len();
    if capacity < json.len() + 1 {
        return fail(
            format!("buffer holds {capacity} bytes, need {}", json.len() + 1),
            QpnnStatus::BufferTooSmall,
        );
    }
    std::ptr::copy_nonoverlapping(json.as_ptr(), buffer.cast(), json.len());
    *buffer.add(json.len()) = 0;
    QpnnStatus::Ok
}

/// Restores a network from checkpoint JSON (NUL-terminated string).
///
/// # Safety
/// `json` must be a valid NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn qpnn_network_from_json(
    json: *const c_char,
    out: *mut *mut QpnnNetwork,
) -> QpnnStatus {
    if json.is_null() || out.is_null() {
        return fail("null pointer argument", QpnnStatus::NullPointer);
    }
    let text = match CStr::from_ptr(json).to_str() {
        Ok(text) => text,
        Err(_) => return fail("checkpoint JSON is not UTF-8", QpnnStatus::InvalidArgument),
    };
    match NetworkParams::from_checkpoint_json(text) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(QpnnNetwork { inner }));
            QpnnStatus::Ok
        }
        Err(err) => fail(err.to_string(), QpnnStatus::InvalidArgument),
    }
}

/// Trains a fresh network to map `input` onto `target` with the Adam
/// protocol (learning rate annealed linearly over the iterations), writing
/// the trained network and its final fidelity.
///
/// # Safety
/// All pointers must be valid; release the output network.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn qpnn_train_state_prep(
    modes: usize,
    layers: usize,
    input: *const QpnnState,
    target: *const QpnnState,
    iterations: usize,
    lr_start: f64,
    lr_end: f64,
    seed: u64,
    out_network: *mut *mut QpnnNetwork,
    out_fidelity: *mut f64,
) -> QpnnStatus {
    if input.is_null() || target.is_null() || out_network.is_null() || out_fidelity.is_null() {
        return fail("null pointer argument", QpnnStatus::NullPointer);
    }
    let cfg = TrainConfig {
        iterations,
        lr_start,
        lr_end,
        seed,
        ..Default::default()
    };
    if let Err(err) = cfg.validate() {
        return fail(err.to_string(), QpnnStatus::InvalidArgument);
    }
    let objective = StatePrepObjective::new((*input).inner.clone(), (*target).inner.clone());
    let result = NetworkParams::random(modes, layers, seed)
        .and_then(|params0| train(&params0, &objective, &cfg))
        .and_then(|(params, _)| {
            let fidelity = objective.fidelity(&params)?;
            Ok((params, fidelity))
        });
    match result {
        Ok((params, fidelity)) => {
            *out_network = Box::into_raw(Box::new(QpnnNetwork { inner: params }));
            *out_fidelity = fidelity;
            QpnnStatus::Ok
        }
        Err(err) => fail(err.to_string(), QpnnStatus::ComputationFailed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_round_trip_through_the_abi() {
        unsafe {
            let mut basis: *mut QpnnBasis = std::ptr::null_mut();
            assert_eq!(qpnn_basis_new(2, 2, &mut basis), QpnnStatus::Ok);
            assert_eq!(qpnn_basis_size(basis), 3);
            qpnn_basis_free(basis);

            let mut bad: *mut QpnnBasis = std::ptr::null_mut();
            assert_eq!(qpnn_basis_new(0, 2, &mut bad), QpnnStatus::InvalidArgument);
            let mut buf = [0i8; 128];
            let len = qpnn_last_error(buf.as_mut_ptr().cast(), buf.len());
            assert!(len > 0);
        }
    }

    #[test]
    fn forward_preserves_norm_through_the_abi() {
        unsafe {
            let mut basis: *mut QpnnBasis = std::ptr::null_mut();
            qpnn_basis_new(3, 1, &mut basis);
            let dim = qpnn_basis_size(basis);
            let mut amps = vec![0.0f64; 2 * dim];
            amps[0] = 1.0;
            let mut state: *mut QpnnState = std::ptr::null_mut();
            assert_eq!(
                qpnn_state_new(basis, amps.as_ptr(), amps.len(), &mut state),
                QpnnStatus::Ok
            );
            let mut network: *mut QpnnNetwork = std::ptr::null_mut();
            assert_eq!(qpnn_network_random(3, 2, 9, &mut network), QpnnStatus::Ok);
            let mut image: *mut QpnnState = std::ptr::null_mut();
            assert_eq!(
                qpnn_network_forward(network, state, &mut image),
                QpnnStatus::Ok
            );
            let mut out = vec![0.0f64; 2 * dim];
            assert_eq!(
                qpnn_state_amplitudes(image, out.as_mut_ptr(), out.len()),
                QpnnStatus::Ok
            );
            let norm: f64 = out.chunks_exact(2).map(|p| p[0] * p[0] + p[1] * p[1]).sum();
            assert!((norm - 1.0).abs() < 1e-10);
            qpnn_state_free(image);
            qpnn_state_free(state);
            qpnn_network_free(network);
            qpnn_basis_free(basis);
        }
    }

    #[test]
    fn parameters_and_json_round_trip() {
        unsafe {
            let mut network: *mut QpnnNetwork = std::ptr::null_mut();
            qpnn_network_random(2, 2, 4, &mut network);
            let count = qpnn_network_parameter_count(network);
            assert_eq!(count, 2 * (2 + 3 * 2));
            let mut params = vec![0.0f64; count];
            assert_eq!(
                qpnn_network_get_parameters(network, params.as_mut_ptr(), count),
                QpnnStatus::Ok
            );
            params[0] += 0.5;
            assert_eq!(
                qpnn_network_set_parameters(network, params.as_ptr(), count),
                QpnnStatus::Ok
            );

            let mut len = 0usize;
            let mut tiny = [0u8; 4];
            assert_eq!(
                qpnn_network_to_json(network, tiny.as_mut_ptr().cast(), tiny.len(), &mut len),
                QpnnStatus::BufferTooSmall
            );
            let mut buf = vec![0u8; len + 1];
            assert_eq!(
                qpnn_network_to_json(network, buf.as_mut_ptr().cast(), buf.len(), &mut len),
                QpnnStatus::Ok
            );
            let mut restored: *mut QpnnNetwork = std::ptr::null_mut();
            assert_eq!(
                qpnn_network_from_json(buf.as_ptr().cast(), &mut restored),
                QpnnStatus::Ok
            );
            let mut restored_params = vec![0.0f64; count];
            qpnn_network_get_parameters(restored, restored_params.as_mut_ptr(), count);
            assert_eq!(params, restored_params);
            qpnn_network_free(network);
            qpnn_network_free(restored);
        }
    }

    #[test]
    fn training_through_the_abi_reaches_the_target() {
        unsafe {
            let mut basis: *mut QpnnBasis = std::ptr::null_mut();
            qpnn_basis_new(2, 1, &mut basis);
            let mut in_amps = vec![0.0f64; 4];
            in_amps[2] = 1.0; // |1, 0>
            let mut target_amps = vec![0.0f64; 4];
            target_amps[0] = 1.0; // |0, 1>
            let mut input: *mut QpnnState = std::ptr::null_mut();
            let mut target: *mut QpnnState = std::ptr::null_mut();
            qpnn_state_new(basis, in_amps.as_ptr(), 4, &mut input);
            qpnn_state_new(basis, target_amps.as_ptr(), 4, &mut target);
            let mut network: *mut QpnnNetwork = std::ptr::null_mut();
            let mut fidelity = 0.0f64;
            let status = qpnn_train_state_prep(
                2, 1, input, target, 2000, 0.025, 0.001, 3, &mut network, &mut fidelity,
            );
            assert_eq!(status, QpnnStatus::Ok);
            assert!(fidelity > 0.999, "fidelity {fidelity}");
            qpnn_network_free(network);
            qpnn_state_free(input);
            qpnn_state_free(target);
            qpnn_basis_free(basis);
        }
    }
}
