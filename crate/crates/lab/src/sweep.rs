//! Parallel sweeps over independent configs.

use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::manifest::{now, RunManifest};
use crate::run::run;

pub const THREADS_ENV: &str = "BLOWUPLAB_THREADS";

/// `requested` capped by `BLOWUPLAB_THREADS` when that is a positive integer.
pub fn effective_parallelism(requested: usize) -> usize {
    let cap = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|n| *n > 0);
    let n = requested.max(1);
    cap.map_or(n, |c| n.min(c))
}

/// Runs every config, returning manifests in input order. A run that fails
/// to write its output still gets a manifest with `error` set.
pub fn sweep(configs: &[ExperimentConfig], parallelism: usize) -> Vec<RunManifest> {
    let one = |c: &ExperimentConfig| {
        run(c).unwrap_or_else(|e| {
            let mut m = RunManifest::new(c.clone());
            m.error = Some(e.to_string());
            m.finished = now();
            m
        })
    };
    let threads = effective_parallelism(parallelism);
    if threads == 1 || configs.len() < 2 {
        return configs.iter().map(one).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(|| configs.par_iter().map(one).collect()),
        Err(_) => configs.iter().map(one).collect(),
    }
}
