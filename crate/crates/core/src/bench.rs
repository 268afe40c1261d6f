//! Elementwise surrogate-evaluation latency and workspace accounting.
//!
//! Each measurement times a full-tensor [`surrogate_backward`] pass after
//! three warm-up passes and reports nearest-rank percentiles over the timed
//! repeats. Workspace bytes count the temporary buffers a pass allocates
//! (one f64 output buffer for every surrogate family; the kernels are fused
//! elementwise loops), so they are a deterministic function of the element
//! count. On Linux the process is pinned to one logical core for the
//! duration of the measurement; the host descriptor records whether pinning
//! succeeded.

use std::hint::black_box;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::quantizer::QuantConfig;
use crate::surrogate::{surrogate_backward, Surrogate};
use crate::tensor::Rng;

/// Bitwidth used for the benchmark quantizer config.
pub const BENCH_BITS: u32 = 4;

/// Latency percentiles and workspace bytes for one surrogate.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub label: String,
    pub n_elems: usize,
    pub repeats: usize,
    pub median_ns: u64,
    pub p10_ns: u64,
    pub p90_ns: u64,
    pub workspace_bytes: u64,
    pub host_descriptor: String,
}

/// Nearest-rank percentile of a sorted sample vector.
fn percentile(sorted: &[u64], q: f64) -> u64 {
    debug_assert!(!sorted.is_empty());
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[cfg(target_os = "linux")]
fn pin_to_one_core() -> Option<PinGuard> {
    unsafe {
        let mut original: libc::cpu_set_t = std::mem::zeroed();
        if libc::sched_getaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &mut original) != 0 {
            return None;
        }
        // pin to the lowest cpu currently allowed
        let mut target: libc::cpu_set_t = std::mem::zeroed();
        let mut chosen = None;
        for cpu in 0..libc::CPU_SETSIZE as usize {
            if libc::CPU_ISSET(cpu, &original) {
                chosen = Some(cpu);
                break;
            }
        }
        let cpu = chosen?;
        libc::CPU_SET(cpu, &mut target);
        if libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &target) != 0 {
            return None;
        }
        Some(PinGuard { original })
    }
}

#[cfg(target_os = "linux")]
struct PinGuard {
    original: libc::cpu_set_t,
}

#[cfg(target_os = "linux")]
impl Drop for PinGuard {
    fn drop(&mut self) {
        unsafe {
            libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &self.original);
        }
    }
}

#[cfg(not(target_os = "linux"))]
struct PinGuard;

#[cfg(not(target_os = "linux"))]
fn pin_to_one_core() -> Option<PinGuard> {
    None
}

/// Times `surrogate_backward` for `spec` on a random tensor of `n_elems`
/// values.
pub fn bench_surrogate(
    spec: &Surrogate,
    n_elems: usize,
    repeats: usize,
    seed: u64,
) -> Result<BenchResult> {
    if n_elems < 10_000 {
        return Err(Error::InvalidArgument(format!(
            "n_elems must be >= 10000, got {n_elems}"
        )));
    }
    if repeats < 5 {
        return Err(Error::InvalidArgument(format!(
            "repeats must be >= 5, got {repeats}"
        )));
    }
    let mut rng = Rng::new(seed);
    let x = rng.uniform_tensor(vec![n_elems], -1.0, 1.0)?;
    let upstream = rng.uniform_tensor(vec![n_elems], -1.0, 1.0)?;
    let cfg = QuantConfig::for_tensor(&x, BENCH_BITS)?;

    let pin = pin_to_one_core();
    let pinned = pin.is_some();

    for _ in 0..3 {
        black_box(surrogate_backward(&upstream, &x, &cfg, spec)?);
    }
    let mut samples = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        let out = surrogate_backward(&upstream, &x, &cfg, spec)?;
        let elapsed = start.elapsed();
        black_box(out);
        samples.push(elapsed.as_nanos() as u64);
    }
    drop(pin);
    samples.sort_unstable();

    Ok(BenchResult {
        label: spec.label().to_string(),
        n_elems,
        repeats,
        median_ns: percentile(&samples, 0.5),
        p10_ns: percentile(&samples, 0.1),
        p90_ns: percentile(&samples, 0.9),
        workspace_bytes: 8 * n_elems as u64,
        host_descriptor: format!(
            "os={};arch={};pinned={}",
            std::env::consts::OS,
            std::env::consts::ARCH,
            if pinned { "yes" } else { "no" }
        ),
    })
}
