//! Data-parallel helpers with a sequential fallback.
//!
//! Every kernel in the crate funnels its outer loop through [`for_each_chunk`].
//! Each output chunk is produced by exactly one closure invocation whose inner
//! reduction order is fixed, so results are bit-identical whether the chunks
//! run on the rayon pool or sequentially. Parallel execution is compiled in
//! with the `parallel` feature and can be switched off at runtime with
//! [`set_parallel`] (benchmarks use this to compare both paths).
//!
//! Kernels run with subnormal floats flushed to zero. Saturated sigmoids and
//! GELU tails otherwise produce subnormal gradients that slow x86 arithmetic
//! several-fold; both paths flush identically, so results stay bit-identical.

use std::sync::atomic::{AtomicBool, Ordering};

static ENABLED: AtomicBool = AtomicBool::new(true);

/// Below this many output elements the rayon split overhead dominates.
#[cfg(feature = "parallel")]
const MIN_PARALLEL_LEN: usize = 4096;

/// Enables or disables parallel kernels at runtime. No-op without the
/// `parallel` feature.
pub fn set_parallel(enabled: bool) {
    ENABLED.store(enabled, Ordering::Relaxed);
}

/// True when kernels will use the rayon pool.
pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel") && ENABLED.load(Ordering::Relaxed)
}

/// Calls `f(index, chunk)` for each `chunk_len`-sized piece of `out`.
pub(crate) fn for_each_chunk<T, F>(out: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Send + Sync,
{
    if chunk_len == 0 || out.is_empty() {
        return;
    }
    #[cfg(feature = "parallel")]
    if parallel_enabled() && out.len() >= MIN_PARALLEL_LEN && out.len() > chunk_len {
        use rayon::prelude::*;
        out.par_chunks_mut(chunk_len).enumerate().for_each(|(i, c)| {
            let _ftz = FlushDenormals::new();
            f(i, c)
        });
        return;
    }
    let _ftz = FlushDenormals::new();
    out.chunks_mut(chunk_len)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
}

/// Sets FTZ and DAZ in MXCSR for the current thread until dropped.
struct FlushDenormals {
    #[cfg(target_arch = "x86_64")]
    saved: u32,
}

impl FlushDenormals {
    #[cfg(target_arch = "x86_64")]
    fn new() -> Self {
        const FTZ_DAZ: u32 = 0x8040;
        let mut saved = 0u32;
        // SAFETY: only the flush-to-zero and denormals-are-zero bits change;
        // the previous state is restored on drop.
        unsafe {
            std::arch::asm!("stmxcsr [{}]", in(reg) &mut saved, options(nostack));
            let flushed = saved | FTZ_DAZ;
            std::arch::asm!("ldmxcsr [{}]", in(reg) &flushed, options(nostack, readonly));
        }
        Self { saved }
    }

    #[cfg(not(target_arch = "x86_64"))]
    fn new() -> Self {
        Self {}
    }
}

#[cfg(target_arch = "x86_64")]
impl Drop for FlushDenormals {
    fn drop(&mut self) {
        // SAFETY: restores the state saved in `new`.
        unsafe {
            std::arch::asm!("ldmxcsr [{}]", in(reg) &self.saved, options(nostack, readonly));
        }
    }
}

/// Maps `f` over `0..n`, preserving order.
pub fn map_indexed<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Send + Sync,
{
    #[cfg(feature = "parallel")]
    if parallel_enabled() && n > 1 {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}
