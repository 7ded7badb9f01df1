//! Configuration, orchestration and artifact output for the `sedlab` binary.

pub mod config;
pub mod output;
pub mod run;

pub use config::{validate_config, ExperimentConfig, ExperimentKind, Violation};
pub use output::{Check, Manifest};
pub use run::{run_experiment, InvalidConfig};

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> anyhow::Result<T> {
    match threads {
        Some(n) => {
            anyhow::ensure!(n > 0, "--threads must be at least 1");
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build()?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}
