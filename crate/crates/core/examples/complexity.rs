//! Operation counts and wall time of the Jensen approximation and an option v
//! network with 20 hidden neurons.

use smmi::constellation::ConstellationKind;
use smmi::features::FeatureOption;
use smmi::experiments::{complexity_csv, complexity_report};
use smmi::mlp::{ModelMeta, Scalers};
use smmi::trainer::initialized_network;

fn main() -> smmi::error::Result<()> {
    let meta = ModelMeta {
        option: FeatureOption::V,
        constellations: ConstellationKind::STANDARD.to_vec(),
        nt: 2,
    };
    let scalers = Scalers {
        g0: vec![1.0; 8],
        x0: vec![0.0; 8],
        g3: vec![1.0; 3],
        y0: vec![0.0; 3],
    };
    let net = initialized_network(scalers, 20, meta, 1)?;
    let rows = complexity_report(&net, 7_500, 1)?;
    print!("{}", complexity_csv(&rows));
    let ratio = rows[0].wall_time.as_secs_f64() / rows[1].wall_time.as_secs_f64();
    println!("jensen/network wall time ratio {ratio:.0}");
    Ok(())
}
