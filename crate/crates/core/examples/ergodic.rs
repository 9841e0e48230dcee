//! Ergodic MI curves of the oracle and the Jensen approximation, averaged
//! over Rayleigh channels.

use smmi::constellation::ConstellationKind;
use smmi::eval::{JensenPredictor, OraclePredictor, Predictor};
use smmi::experiments::{ergodic_csv, ergodic_curve, linspace};

fn main() -> smmi::error::Result<()> {
    let grid = linspace(-20.0, 20.0, 11);
    let oracle = OraclePredictor { n_noise_draws: 300 };
    let predictors: [&dyn Predictor; 2] = [&oracle, &JensenPredictor];
    let points = ergodic_curve(&grid, 30, 2, &ConstellationKind::STANDARD, &predictors, 1)?;
    print!("{}", ergodic_csv(&points));
    Ok(())
}
