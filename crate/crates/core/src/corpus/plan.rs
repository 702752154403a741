use serde::{Deserialize, Serialize};
use tracing::warn;

use super::CorpusError;

/// Fraction of the training set used as the batch size.
const BATCH_FRACTION: f64 = 0.002;
const MAX_BATCH: usize = 64;

/// Derived fine-tuning hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetunePlan {
    pub n_train: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_multiplier: f64,
    pub seed: u64,
    /// Disagreements between the derived plan and published runs of the same size.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// A published fine-tuning run used as a reference row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PublishedRun {
    pub task: &'static str,
    pub dataset: &'static str,
    pub n_train: usize,
    pub epochs: usize,
    pub batch_size: usize,
}

pub const PUBLISHED_RUNS: &[PublishedRun] = &[
    PublishedRun { task: "closed", dataset: "MedQA", n_train: 10_178, epochs: 2, batch_size: 13 },
    PublishedRun { task: "closed", dataset: "PubMedQA (PQA-L)", n_train: 552, epochs: 3, batch_size: 1 },
    PublishedRun { task: "closed", dataset: "BioASQ", n_train: 5_049, epochs: 3, batch_size: 2 },
    PublishedRun { task: "long_form", dataset: "PubMedQA (PQA-A)", n_train: 196_144, epochs: 1, batch_size: 64 },
    PublishedRun { task: "long_form", dataset: "MedicationQA", n_train: 551, epochs: 3, batch_size: 1 },
    PublishedRun { task: "long_form", dataset: "LiveQA", n_train: 500, epochs: 3, batch_size: 1 },
    PublishedRun { task: "long_form", dataset: "BioASQ", n_train: 5_049, epochs: 3, batch_size: 10 },
    PublishedRun { task: "long_form", dataset: "Combined Custom Dataset", n_train: 6_652, epochs: 3, batch_size: 13 },
    PublishedRun { task: "short_form", dataset: "MedQA", n_train: 10_178, epochs: 2, batch_size: 13 },
];

/// Batch size is 0.2% of the training set clamped to `[1, 64]`; epochs are
/// banded by size (`> 100k` → 1, `> 10k` → 2, else 3). Without an explicit
/// seed one is derived from `n_train` so the plan stays a pure function.
///
/// When a published run of the same size disagrees with the derived values
/// the disagreement is logged and kept in [`FinetunePlan::warnings`].
pub fn plan_hyperparameters(n_train: usize, seed: Option<u64>) -> Result<FinetunePlan, CorpusError> {
    if n_train == 0 {
        return Err(CorpusError::InvalidCount);
    }
    let batch_size = ((BATCH_FRACTION * n_train as f64).round() as usize).clamp(1, MAX_BATCH);
    let epochs = match n_train {
        n if n > 100_000 => 1,
        n if n > 10_000 => 2,
        _ => 3,
    };

    let mut warnings = Vec::new();
    for run in PUBLISHED_RUNS.iter().filter(|r| r.n_train == n_train) {
        if run.batch_size != batch_size || run.epochs != epochs {
            let msg = format!(
                "{} / {} (n={}): published batch {} epochs {}, derived batch {} epochs {}",
                run.task, run.dataset, n_train, run.batch_size, run.epochs, batch_size, epochs
            );
            warn!("{msg}");
            warnings.push(msg);
        }
    }

    Ok(FinetunePlan {
        n_train,
        batch_size,
        epochs,
        lr_multiplier: 1.0,
        seed: seed.unwrap_or_else(|| derive_seed(n_train)),
        warnings,
    })
}

// splitmix64 finalizer, truncated to 31 bits.
fn derive_seed(n: usize) -> u64 {
    let mut z = (n as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    (z ^ (z >> 31)) >> 33
}
