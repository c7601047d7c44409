//! Data-parallel dispatch with a sequential fallback.
//!
//! The `parallel` feature (on by default) pulls in rayon; the sequential
//! path is always compiled and can be forced at runtime, so `--sequential`
//! works in every build and benches can compare both modes like for like.

/// Execution knobs shared by scoring runs and judge battles.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Force one-at-a-time execution even in parallel builds.
    pub sequential: bool,
}

impl RunOptions {
    pub fn sequential() -> Self {
        Self { sequential: true }
    }
}

/// Runs `f` with a rayon pool of `threads` workers installed, so the
/// data-parallel maps inside can hold that many blocking model calls in
/// flight at once. The global pool sizes itself to the CPU count, which
/// serializes I/O-bound work on small machines; callers pass the
/// endpoint's concurrency cap instead. Falls through to plain invocation
/// in sequential mode or builds.
pub fn blocking_scope<R, F>(threads: usize, options: RunOptions, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    #[cfg(feature = "parallel")]
    if !options.sequential {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build() {
            return pool.install(f);
        }
    }
    let _ = (threads, options);
    f()
}

/// Maps `f` over `items`, preserving input order in the output. Runs on the
/// rayon pool unless the build lacks the `parallel` feature or the caller
/// forces sequential mode.
pub fn map_items<I, T, F>(items: &[I], options: RunOptions, f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if !options.sequential {
        use rayon::prelude::*;
        return items.par_iter().map(&f).collect();
    }
    let _ = options;
    items.iter().map(f).collect()
}
