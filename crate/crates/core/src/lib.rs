//! Spectrum-sharing laboratory for vehicular networks.
//!
//! A base station allocates uplink channels to V2V links that share spectrum
//! with V2I users. Each V2V link compresses its local channel observation
//! with a small dense network and feeds the result back; allocation decisions
//! are learned with deep Q-learning, either centrally at the BS (C-Decision)
//! or per V2V link from BS-aggregated global information (D-Decision).
//! Brute-force-optimal and uniform-random allocation baselines give exact
//! performance accounting.
//!
//! Module map:
//! - [`channel`]: propagation primitives (path loss, shadowing, fast fading).
//! - [`env`]: Manhattan-grid drop/mobility, per-step gains, SINR, capacity,
//!   reward, and observation assembly.
//! - [`neural`]: dense-network engine with reverse-mode gradients, the
//!   sign/straight-through binarization head, Huber loss and RMSProp.
//! - [`dqn`]: replay buffer, target networks, epsilon-greedy, and the
//!   C-Decision / D-Decision training and testing pipelines.
//! - [`oracle`]: brute-force optimal and random allocation baselines.
//! - [`eval`]: ARP metric, noise injection, sum-rate CDFs and sweeps.

// Pull in the BLAS backend's link directives.
#[cfg(feature = "blas")]
use openblas_src as _;

pub mod channel;
pub mod dqn;
pub mod env;
pub mod eval;
pub mod fdcheck;
pub mod neural;
pub mod oracle;
pub mod scalar;
pub mod seeding;

pub use scalar::Scalar;

/// Number of worker threads the linked BLAS uses for one matrix product.
///
/// Training jobs are parallelized across seeds/grid points, so each job
/// pins BLAS to a single thread by default. No-op without the `blas` feature.
pub fn set_blas_threads(n: usize) {
    #[cfg(feature = "blas")]
    unsafe {
        openblas_set_num_threads(n as i32);
    }
    #[cfg(not(feature = "blas"))]
    let _ = n;
}

/// Kernel name the linked BLAS selected at load time, when available.
pub fn blas_core_name() -> Option<String> {
    #[cfg(feature = "blas")]
    unsafe {
        let ptr = openblas_get_corename();
        if ptr.is_null() {
            return None;
        }
        Some(
            std::ffi::CStr::from_ptr(ptr)
                .to_string_lossy()
                .into_owned(),
        )
    }
    #[cfg(not(feature = "blas"))]
    None
}

#[cfg(feature = "blas")]
extern "C" {
    fn openblas_set_num_threads(n: i32);
    fn openblas_get_corename() -> *const std::os::raw::c_char;
}
