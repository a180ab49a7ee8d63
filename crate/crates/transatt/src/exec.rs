//! Multi-threaded [`Executor`] backed by rayon.

use rayon::prelude::*;
use transatt_core::train::Executor;

/// Maps items on the rayon thread pool. Results keep input order, and the
/// trainer reduces them in that order, so training output is identical to
/// [`transatt_core::train::Sequential`].
#[derive(Debug, Clone, Copy, Default)]
pub struct Rayon;

impl Executor for Rayon {
    fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        items.par_iter().map(f).collect()
    }
}

/// Run-time choice between [`transatt_core::train::Sequential`] and [`Rayon`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnyExecutor {
    Sequential,
    Rayon,
}

impl AnyExecutor {
    pub fn new(parallel: bool) -> Self {
        if parallel {
            AnyExecutor::Rayon
        } else {
            AnyExecutor::Sequential
        }
    }
}

impl Executor for AnyExecutor {
    fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            AnyExecutor::Sequential => transatt_core::train::Sequential.map(items, f),
            AnyExecutor::Rayon => Rayon.map(items, f),
        }
    }
}
