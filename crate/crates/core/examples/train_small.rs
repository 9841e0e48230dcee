//! Generates a small labeled dataset, trains an option v network with
//! Levenberg-Marquardt and compares it with the Jensen approximation.
//!
//! cargo run --release --example train_small -- [n_samples]

use smmi::dataset::{GenConfig, LabeledDataset, Split};
use smmi::eval::{evaluate, JensenPredictor, NetworkPredictor};
use smmi::features::FeatureOption;
use smmi::mlp::model_to_string;
use smmi::trainer::{train, TrainConfig};

fn main() -> smmi::error::Result<()> {
    let n_samples = std::env::args().nth(1).map_or(2_000, |s| s.parse().expect("n_samples is an integer"));
    let ds = LabeledDataset::generate(&GenConfig {
        n_samples,
        n_noise_draws: 500,
        ..GenConfig::default()
    })?;
    let cfg = TrainConfig {
        n_hidden: 10,
        restarts: 2,
        max_epochs: 200,
        ..TrainConfig::default()
    };
    let (params, report) = train(&ds, FeatureOption::V, &cfg)?;
    for r in &report.restarts {
        println!("restart {}: {} epochs, best val MSE {:.3e}, {:?}", r.restart, r.epochs_run, r.best_val_mse, r.stop);
    }
    print!("{}", evaluate(&NetworkPredictor { params: &params }, &ds, Split::Test)?.to_csv());
    print!("{}", evaluate(&JensenPredictor, &ds, Split::Test)?.to_csv());
    println!("label noise floor {:.2e}", ds.noise_floor(Split::Test));
    println!("model file is {} bytes", model_to_string(&params)?.len());
    Ok(())
}
