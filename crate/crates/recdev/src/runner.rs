//! Thread-pool execution of replications and of the `Λ_n` sum.

use rayon::prelude::*;
use recdev_core::cgf::{normalize, CgfSpec};
use recdev_core::deviations::ReplicationRunner;
use recdev_core::sum::NeumaierSum;
use recdev_core::{Error, Result};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "RECDEV_THREADS";

/// Runs replications on a rayon pool. Results come back in replication order
/// and, on failure, the error of the lowest failing index is returned, so the
/// outcome never depends on scheduling.
#[derive(Debug, Clone, Copy, Default)]
pub struct RayonRunner {
    threads: Option<usize>,
}

impl RayonRunner {
    pub fn new(threads: Option<usize>) -> Self {
        Self {
            threads: threads.filter(|&t| t > 0),
        }
    }

    /// Reads `RECDEV_THREADS`; unset or unparsable means rayon's default.
    pub fn from_env() -> Self {
        Self::new(std::env::var(THREADS_ENV).ok().and_then(|s| s.trim().parse().ok()))
    }

    fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> T {
        match self.threads {
            None => f(),
            Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
                Ok(pool) => pool.install(f),
                Err(_) => f(),
            },
        }
    }
}

impl ReplicationRunner for RayonRunner {
    fn run(&self, replications: u64, job: &(dyn Fn(u64) -> Result<Vec<f64>> + Sync)) -> Result<Vec<Vec<f64>>> {
        let results: Vec<Result<Vec<f64>>> = self.install(|| (0..replications).into_par_iter().map(job).collect());
        results.into_iter().collect()
    }
}

/// Terms per task in [`cgf_finite_n_parallel`]. The chunking is fixed, so the
/// value does not depend on the thread count.
const CHUNK: u64 = 1024;

/// `Λ_{n,x}(u)`, with the `n` terms spread over the pool.
pub fn cgf_finite_n_parallel(runner: &RayonRunner, spec: &CgfSpec, u: f64, n: u64) -> Result<f64> {
    if n < 1 {
        return Err(Error::InvalidParameter("Λ_n needs n >= 1".into()));
    }
    if u == 0.0 {
        return Ok(0.0);
    }
    let a_n = spec.a_n(n);
    let chunks = n.div_ceil(CHUNK);
    let partial: Vec<Result<f64>> = runner.install(|| {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut acc = NeumaierSum::new();
                for i in (c * CHUNK + 1)..=((c + 1) * CHUNK).min(n) {
                    acc.add(spec.term(u, n, i, a_n)?);
                }
                Ok(acc.value())
            })
            .collect()
    });
    let mut total = NeumaierSum::new();
    for p in partial {
        total.add(p?);
    }
    Ok(normalize(spec, n, a_n, total.value()))
}
