//! Feature vectors of every extraction option for one channel.

use smmi::channel::{db_to_linear, sample_rayleigh_channel};
use smmi::features::{extract, static_op_count, FeatureOption};

fn main() -> smmi::error::Result<()> {
    let gamma = db_to_linear(10.0);
    let h2 = sample_rayleigh_channel(5, 2)?;
    let options = [FeatureOption::I, FeatureOption::II, FeatureOption::III, FeatureOption::IV, FeatureOption::V, FeatureOption::Raw];
    for option in options {
        let fv = extract(option, gamma, &h2)?;
        let ops = static_op_count(option, 2);
        println!("{option:>4} ({} products): {:.4?}", ops.products, fv.values);
    }
    let h4 = sample_rayleigh_channel(5, 4)?;
    println!("multi4: {} features", extract(FeatureOption::Multi4, gamma, &h4)?.values.len());
    let h8 = sample_rayleigh_channel(5, 8)?;
    println!("quant8(5): {} features", extract(FeatureOption::Quant8(5), gamma, &h8)?.values.len());
    Ok(())
}
