use serde::{Deserialize, Serialize};

/// How batch work (classification, bootstrap, sweeps) is spread over
/// threads. Without the `parallel` feature both variants run sequentially.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    /// Applies `f` to every item and returns results in input order, using
    /// at most `cap` worker threads.
    #[cfg_attr(not(feature = "parallel"), allow(unused_variables))]
    pub fn map<T, R, F>(self, cap: usize, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel if items.len() > 1 && cap > 1 => {
                use rayon::prelude::*;
                match rayon::ThreadPoolBuilder::new().num_threads(cap).build() {
                    Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
                    Err(e) => {
                        tracing::warn!(error = %e, "thread pool unavailable; running sequentially");
                        items.iter().map(f).collect()
                    }
                }
            }
            _ => items.iter().map(f).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_preserve_order() {
        let items: Vec<u64> = (0..500).collect();
        let seq = Execution::Sequential.map(4, &items, |x| x * x);
        let par = Execution::Parallel.map(4, &items, |x| x * x);
        assert_eq!(seq, par);
        assert_eq!(seq[499], 499 * 499);
    }

    #[test]
    fn empty_input() {
        let out: Vec<u8> = Execution::Parallel.map(4, &[] as &[u8], |x| *x);
        assert!(out.is_empty());
    }
}
