//! Data-parallel map over independent work items.
//!
//! With the `parallel` feature the map runs on the rayon pool; without it, or
//! when [`set_mode`] selects [`Mode::Sequential`], it is a plain loop. Results
//! always come back in input order, and reductions are done by the caller over
//! that ordered vector, so output is identical in both modes.

use std::sync::atomic::{AtomicU8, Ordering};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Sequential,
    Parallel,
}

static MODE: AtomicU8 = AtomicU8::new(if cfg!(feature = "parallel") { 1 } else { 0 });

/// Selects the execution mode process-wide. `Parallel` is ignored when the
/// crate is built without the `parallel` feature.
pub fn set_mode(mode: Mode) {
    let v = match mode {
        Mode::Parallel if cfg!(feature = "parallel") => 1,
        _ => 0,
    };
    MODE.store(v, Ordering::Relaxed);
}

pub fn mode() -> Mode {
    if MODE.load(Ordering::Relaxed) == 1 {
        Mode::Parallel
    } else {
        Mode::Sequential
    }
}

pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode() == Mode::Parallel {
        use rayon::prelude::*;
        return items.par_iter().enumerate().map(|(i, x)| f(i, x)).collect();
    }
    items.iter().enumerate().map(|(i, x)| f(i, x)).collect()
}

/// Like [`map`] but stops at the first error in input order.
pub fn try_map<T, R, E, F>(items: &[T], f: F) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(usize, &T) -> Result<R, E> + Sync + Send,
{
    map(items, f).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let xs: Vec<u64> = (0..1000).collect();
        set_mode(Mode::Sequential);
        let a = map(&xs, |i, x| (i as u64) * x);
        set_mode(Mode::Parallel);
        let b = map(&xs, |i, x| (i as u64) * x);
        assert_eq!(a, b);
        let err: Result<Vec<u64>, usize> = try_map(&xs, |i, &x| if x == 7 || x == 9 { Err(i) } else { Ok(x) });
        assert_eq!(err, Err(7));
    }
}
