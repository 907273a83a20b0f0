//! Fixtures shared by the benchmarks.

use cellfree_core::experiment::{Preset, Trial};
use cellfree_core::{BeamformerKind, SystemConfig};

/// Desk-scale system and one of its trials.
pub fn small_trial(index: usize) -> (SystemConfig, Trial) {
    let cfg = Preset::Small.config().system;
    let trial = Trial::generate(&cfg, BeamformerKind::Cb, 7, index).expect("small trial");
    (cfg, trial)
}

pub fn paper_trial(index: usize) -> (SystemConfig, Trial) {
    let cfg = Preset::Paper.config().system;
    let trial = Trial::generate(&cfg, BeamformerKind::Cb, 7, index).expect("paper trial");
    (cfg, trial)
}
