//! Networks for 4x4 channels (pairwise angle features) and 8x8 channels
//! (quantile features) trained on small generated datasets.

use smmi::dataset::{GenConfig, LabeledDataset};
use smmi::experiments::multi_antenna_experiment;
use smmi::features::FeatureOption;
use smmi::trainer::TrainConfig;

fn main() -> smmi::error::Result<()> {
    let cfg = TrainConfig {
        n_hidden: 20,
        restarts: 1,
        max_epochs: 150,
        ..TrainConfig::default()
    };
    for (nt, option) in [(4, FeatureOption::Multi4), (8, FeatureOption::Quant8(5))] {
        let ds = LabeledDataset::generate(&GenConfig {
            nt,
            n_samples: 2_000,
            n_noise_draws: 200,
            ..GenConfig::default()
        })?;
        let r = multi_antenna_experiment(&ds, option, &cfg)?;
        println!("Nt={nt} {option}: {} features, test MSE {:.3e}", r.feature_len, r.test.global_mse);
    }
    Ok(())
}
