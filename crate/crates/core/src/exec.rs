//! Sequential vs. parallel execution selection.

/// How row-wise kernels are scheduled.
///
/// `Sequential` is the reference mode. Kernels in this crate never reorder
/// floating-point reductions between modes, so both produce identical bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    #[default]
    Sequential,
    Parallel,
}

pub const THREADS_ENV: &str = "WATS_THREADS";

impl Exec {
    /// Read `WATS_THREADS`: unset, `0` or `1` select sequential mode.
    pub fn from_env() -> (Exec, usize) {
        let threads = std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .unwrap_or(1);
        if threads <= 1 {
            (Exec::Sequential, 1)
        } else {
            (Exec::Parallel, threads)
        }
    }
}
