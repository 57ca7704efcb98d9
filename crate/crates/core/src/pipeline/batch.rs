use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;

use super::remover::MakeupRemover;
use crate::data::{list_images, load_image, save_image};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BatchOutcome {
    pub written: Vec<PathBuf>,
    /// Inputs that could not be read or processed, with the reason.
    pub skipped: Vec<(PathBuf, String)>,
}

impl BatchOutcome {
    pub fn processed(&self) -> usize {
        self.written.len()
    }
}

/// Cleans every image in `dir_in` and writes the result under the same file
/// name in `dir_out`. Unreadable inputs are skipped with a warning.
pub fn batch_clean(dir_in: &Path, dir_out: &Path, remover: &MakeupRemover) -> Result<BatchOutcome> {
    let inputs = list_images(dir_in)?;
    std::fs::create_dir_all(dir_out)?;
    let results: Vec<(PathBuf, std::result::Result<PathBuf, String>)> = inputs
        .par_iter()
        .map(|src| {
            let out = dir_out.join(src.file_name().expect("listed files have names"));
            let r = load_image(src)
                .and_then(|img| remover.remove(&img))
                .and_then(|clean| save_image(&clean, &out))
                .map(|_| out)
                .map_err(|e| e.to_string());
            (src.clone(), r)
        })
        .collect();
    let mut outcome = BatchOutcome::default();
    for (src, r) in results {
        match r {
            Ok(out) => {
                info!("cleaned {} -> {}", src.display(), out.display());
                outcome.written.push(out);
            }
            Err(e) => {
                warn!("skipping {}: {e}", src.display());
                outcome.skipped.push((src, e));
            }
        }
    }
    Ok(outcome)
}
