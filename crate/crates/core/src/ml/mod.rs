//! Fully connected networks trained to imitate the optimizers: end-to-end
//! models and the unfolded cascade.

mod adam;
mod dataset;
mod mlp;
mod model;
mod normalize;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use dataset::{assign_splits, sidecar_path, Dataset, Provenance, Split};
pub use mlp::{backward, forward, forward_batch, mae, Activation, MlpParams, MlpSpec};
pub use model::{predict_dl, predict_ul, project_dl, project_ul, Model, Stage};
pub use normalize::{quantile_sorted, InputScaler, Normalizer, OutputScaler, OUTPUT_FLOOR_DBM};
pub use train::{fit_network, train_cascade, train_e2e, train_unfolded, Batches, EpochStats, TrainConfig, TrainingCurve};

/// DL end-to-end network for `links` associated links.
pub fn dl_e2e_spec(links: usize) -> MlpSpec {
    MlpSpec::pyramid(links, &[1024, 512, 256, 128, 64], links)
}

/// UL end-to-end network for `ues` users.
pub fn ul_e2e_spec(ues: usize) -> MlpSpec {
    MlpSpec::pyramid(ues, &[64, 32, 16], ues)
}

/// One stage of the unfolded DL cascade.
pub fn unfolded_stage_spec(links: usize) -> MlpSpec {
    MlpSpec::pyramid(links, &[128], links)
}
