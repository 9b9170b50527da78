//! OpenBLAS kernel-selection workaround for virtualized CPUs.
//!
//! OpenBLAS picks its compute kernel from CPUID at library load time. Some
//! VMs and containers mask the CPU model, so OpenBLAS falls back to a
//! pre-AVX kernel even on AVX-512 hardware (4–5x slower matrix products).
//! The override (`OPENBLAS_CORETYPE`) is only read at load time — before
//! `main` — so when the fallback is detected on hardware whose feature flags
//! say otherwise, the process re-execs itself once with the override set.
//! Results are unaffected either way; only throughput changes.

/// Re-exec with a suitable `OPENBLAS_CORETYPE` when OpenBLAS misdetected the
/// CPU. Call first thing in `main`. No-op when the kernel already matches the
/// hardware, when the user set the variable, or off x86_64 Linux.
pub fn ensure_fast_blas_kernel() {
    #[cfg(all(target_os = "linux", target_arch = "x86_64"))]
    {
        if std::env::var_os("OPENBLAS_CORETYPE").is_some() {
            return;
        }
        let Some(core) = specshare::blas_core_name() else {
            return;
        };
        // kernels OpenBLAS falls back to when CPUID detection fails
        const FALLBACKS: [&str; 6] = ["prescott", "generic", "northwood", "katmai", "banias", "core2"];
        if !FALLBACKS.contains(&core.to_lowercase().as_str()) {
            return;
        }
        let cpuinfo = std::fs::read_to_string("/proc/cpuinfo").unwrap_or_default();
        let target = if cpuinfo.contains("avx512f") {
            "SKYLAKEX"
        } else if cpuinfo.contains("avx2") {
            "HASWELL"
        } else {
            return; // the fallback kernel is appropriate
        };
        let exe = match std::env::current_exe() {
            Ok(p) => p,
            Err(_) => return,
        };
        let status = std::process::Command::new(exe)
            .args(std::env::args_os().skip(1))
            .env("OPENBLAS_CORETYPE", target)
            .status();
        match status {
            Ok(s) => std::process::exit(s.code().unwrap_or(1)),
            Err(_) => {} // fall through and run slowly
        }
    }
}
