//! Multi-worker dataset synthesis. Draws depend only on `(seed, index)`, so
//! the result is identical for every worker count.

use std::path::Path;

use fmtcheck_core::forge::{DatasetSpec, Forge, ForgeError, QuestionPool, Split};
use fmtcheck_core::MetaConstraint;
use rayon::prelude::*;

use crate::io::{self, IoError};

pub const TRAIN_FILE: &str = "train.jsonl";
pub const TEST_FILE: &str = "test.jsonl";

pub fn forge_parallel(pool: &QuestionPool, library: &[MetaConstraint], spec: DatasetSpec, workers: usize) -> Result<Split, ForgeError> {
    let forge = Forge::new(pool, library, spec)?;
    if forge.is_dense() || workers <= 1 {
        return forge.run();
    }
    let threads = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool");
    let draws = threads.install(|| {
        (0..spec.total())
            .into_par_iter()
            .map(|i| forge.draw(i, 0))
            .collect::<Result<Vec<_>, _>>()
    })?;
    forge.assemble(draws)
}

pub fn write_split(dir: &Path, split: &Split) -> Result<(), IoError> {
    io::save_dataset(&dir.join(TRAIN_FILE), &split.train)?;
    io::save_dataset(&dir.join(TEST_FILE), &split.test)
}
