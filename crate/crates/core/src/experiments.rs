//! Reproducible experiment jobs built on the oracle, the approximations and
//! the trained networks. Each returns plain records plus a CSV rendering.

use std::fmt::Write as _;
use std::hint::black_box;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{sample_rayleigh_channel, sample_snr_db, ChannelMatrix, ChannelRealization};
use crate::constellation::{Constellation, ConstellationKind};
use crate::dataset::{LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport, NetworkPredictor, Predictor};
use crate::features::{self, extract, FeatureOption};
use crate::geometry::angle_parametrized_channel;
use crate::jensen::{self, jensen_mi_all};
use crate::mlp::NetworkParams;
use crate::ops::{self, OpCount};
use crate::oracle::{mi_finite, MiEstimate};
use crate::rng::derive_seed;
use crate::trainer::{train, TrainConfig, TrainReport};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErgodicPoint {
    pub snr_db: f64,
    pub method: String,
    pub constellation: ConstellationKind,
    pub mean_mi: f64,
    /// Standard error of the mean over channels.
    pub std_error: f64,
}

/// Average instantaneous MI over `n_channels` Rayleigh channels at every SNR
/// of the grid. The same channels (and the same per-channel seeds for
/// stochastic predictors) are used at every SNR point and for every method.
pub fn ergodic_curve(
    snr_grid_db: &[f64],
    n_channels: usize,
    nt: usize,
    constellations: &[ConstellationKind],
    predictors: &[&dyn Predictor],
    seed: u64,
) -> Result<Vec<ErgodicPoint>> {
    if snr_grid_db.is_empty() || n_channels == 0 || predictors.is_empty() || constellations.is_empty() {
        return Err(Error::invalid("ergodic curve needs SNR points, channels, predictors and constellations"));
    }
    let cs: Vec<Constellation> = constellations.iter().map(|&k| Constellation::new(k)).collect();
    let channels = (0..n_channels)
        .map(|c| sample_rayleigh_channel(derive_seed(seed, &[c as u64, 0]), nt))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for &snr_db in snr_grid_db {
        for p in predictors {
            let values = channels
                .par_iter()
                .enumerate()
                .map(|(c, h)| {
                    let ch = ChannelRealization::from_db(h.clone(), snr_db)?;
                    p.predict(&ch, &cs, derive_seed(seed, &[c as u64, 1]))
                })
                .collect::<Result<Vec<_>>>()?;
            for (j, &kind) in constellations.iter().enumerate() {
                let n = values.len() as f64;
                let mean = values.iter().map(|v| v[j]).sum::<f64>() / n;
                let var = values.iter().map(|v| (v[j] - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
                out.push(ErgodicPoint {
                    snr_db,
                    method: p.name(),
                    constellation: kind,
                    mean_mi: mean,
                    std_error: (var / n).sqrt(),
                });
            }
        }
    }
    Ok(out)
}

pub fn ergodic_csv(points: &[ErgodicPoint]) -> String {
    let mut out = String::from("snr_db,method,constellation,mean_mi,std_error\n");
    for p in points {
        let _ = writeln!(out, "{},{},{},{},{}", p.snr_db, p.method, p.constellation, p.mean_mi, p.std_error);
    }
    out
}

/// MI over a `(θ_H, φ)` grid of unit-column two-antenna channels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AngleSurface {
    pub gamma: f64,
    pub constellation: ConstellationKind,
    pub thetas: Vec<f64>,
    pub phis: Vec<f64>,
    /// `values[i][j]` belongs to `(thetas[i], phis[j])`.
    pub values: Vec<Vec<MiEstimate>>,
}

impl AngleSurface {
    /// Peak-to-peak variation over `φ` at `thetas[i]`.
    pub fn ripple(&self, i: usize) -> f64 {
        let row = self.values[i].iter().map(|e| e.value);
        let (lo, hi) = row.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        hi - lo
    }

    pub fn row_mean(&self, i: usize) -> f64 {
        self.values[i].iter().map(|e| e.value).sum::<f64>() / self.phis.len() as f64
    }

    /// Largest standard error on the grid.
    pub fn max_std_error(&self) -> f64 {
        self.values.iter().flatten().map(|e| e.std_error).fold(0.0, f64::max)
    }

    /// Grid indices of the largest value.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0, 0);
        for (i, row) in self.values.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                if e.value > self.values[best.0][best.1].value {
                    best = (i, j);
                }
            }
        }
        best
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta_h,phi,mi,std_error\n");
        for (i, t) in self.thetas.iter().enumerate() {
            for (j, p) in self.phis.iter().enumerate() {
                let e = &self.values[i][j];
                let _ = writeln!(out, "{t},{p},{},{}", e.value, e.std_error);
            }
        }
        out
    }
}

/// Every grid point uses the same noise seed, so differences across the
/// surface are not masked by independent Monte Carlo noise.
pub fn angle_sweep(
    gamma: f64,
    thetas: &[f64],
    phis: &[f64],
    constellation: ConstellationKind,
    n_draws: usize,
    seed: u64,
) -> Result<AngleSurface> {
    if thetas.is_empty() || phis.is_empty() {
        return Err(Error::invalid("angle grids must be nonempty"));
    }
    let c = Constellation::new(constellation);
    let cells: Vec<(usize, usize)> = (0..thetas.len()).flat_map(|i| (0..phis.len()).map(move |j| (i, j))).collect();
    let flat = cells
        .par_iter()
        .map(|&(i, j)| {
            let h = angle_parametrized_channel(thetas[i], phis[j])?;
            mi_finite(&ChannelRealization::new(h, gamma)?, &c, n_draws, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AngleSurface {
        gamma,
        constellation,
        thetas: thetas.to_vec(),
        phis: phis.to_vec(),
        values: flat.chunks(phis.len()).map(|r| r.to_vec()).collect(),
    })
}

/// `n` points evenly covering `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexityRow {
    pub method: String,
    /// Operations per evaluation of all constellations, from the closed form.
    pub static_ops: OpCount,
    /// Operations recorded while evaluating one realization (zero when op
    /// counting is compiled out).
    pub measured_ops: OpCount,
    pub n_evals: usize,
    pub wall_time: Duration,
}

impl ComplexityRow {
    pub fn per_eval(&self) -> Duration {
        self.wall_time / self.n_evals.max(1) as u32
    }
}

/// Static operation count of a network prediction including its features.
pub fn network_op_count(params: &NetworkParams) -> OpCount {
    features::static_op_count(params.meta.option, params.meta.nt) + params.static_op_count()
}

fn nn_eval(params: &NetworkParams, ch: &ChannelRealization, scratch: &mut (Vec<f64>, Vec<f64>, Vec<f64>)) -> Result<f64> {
    let fv = extract(params.meta.option, ch.gamma, &ch.h)?;
    params.forward_into(&fv.values, &mut scratch.0, &mut scratch.1, &mut scratch.2);
    Ok(scratch.2[0])
}

/// Operation counts and single-threaded wall time of the Jensen
/// approximation and of `network` over the same `n_evals` random
/// realizations.
pub fn complexity_report(network: &NetworkParams, n_evals: usize, seed: u64) -> Result<Vec<ComplexityRow>> {
    if n_evals == 0 {
        return Err(Error::invalid("need at least one evaluation"));
    }
    let nt = network.meta.nt;
    let cs = network.meta.constellation_set();
    let channels = (0..n_evals)
        .map(|i| {
            let s = derive_seed(seed, &[i as u64]);
            let h = sample_rayleigh_channel(derive_seed(s, &[0]), nt)?;
            ChannelRealization::from_db(h, sample_snr_db(derive_seed(s, &[1]), -20.0, 20.0)?)
        })
        .collect::<Result<Vec<_>>>()?;

    let orders: Vec<usize> = cs.iter().map(Constellation::order).collect();
    let (_, jensen_measured) = ops::measure(|| jensen_mi_all(&channels[0], &cs));
    let clock = Instant::now();
    for ch in &channels {
        black_box(jensen_mi_all(black_box(ch), &cs));
    }
    let jensen_time = clock.elapsed();

    let mut scratch = (
        vec![0.0; network.n_inputs()],
        vec![0.0; network.n_hidden()],
        vec![0.0; network.n_outputs()],
    );
    let (r, nn_measured) = ops::measure(|| nn_eval(network, &channels[0], &mut scratch));
    r?;
    let clock = Instant::now();
    for ch in &channels {
        black_box(nn_eval(network, black_box(ch), &mut scratch)?);
    }
    let nn_time = clock.elapsed();

    Ok(vec![
        ComplexityRow {
            method: "jensen".into(),
            static_ops: jensen::static_op_count(nt, nt, &orders),
            measured_ops: jensen_measured,
            n_evals,
            wall_time: jensen_time,
        },
        ComplexityRow {
            method: format!("nn-{}-n{}", network.meta.option, network.n_hidden()),
            static_ops: network_op_count(network),
            measured_ops: nn_measured,
            n_evals,
            wall_time: nn_time,
        },
    ])
}

pub fn complexity_csv(rows: &[ComplexityRow]) -> String {
    let mut out = String::from("method,products,exp,log2,other,n_evals,wall_time_s,per_eval_us\n");
    for r in rows {
        let o = r.static_ops;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.method,
            o.products,
            o.exp,
            o.log2,
            o.other,
            r.n_evals,
            r.wall_time.as_secs_f64(),
            r.per_eval().as_secs_f64() * 1e6
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub option: FeatureOption,
    pub n_hidden: usize,
    pub restarts: usize,
    pub seed: u64,
    pub train_mse: f64,
    pub val_mse: f64,
    pub test_mse: f64,
    pub wall_time: Duration,
}

/// Trains one network per `(option, N)` cell with `base` as the template
/// configuration and reports global MSEs.
pub fn feature_ablation(
    dataset: &LabeledDataset,
    options: &[FeatureOption],
    n_hidden: &[usize],
    base: &TrainConfig,
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for &option in options {
        for &n in n_hidden {
            let cfg = TrainConfig { n_hidden: n, ..base.clone() };
            let (_, report) = train(dataset, option, &cfg)?;
            rows.push(AblationRow {
                option,
                n_hidden: n,
                restarts: cfg.restarts,
                seed: cfg.seed,
                train_mse: report.train_mse,
                val_mse: report.val_mse,
                test_mse: report.test_mse.unwrap_or(f64::NAN),
                wall_time: report.wall_time,
            });
        }
    }
    Ok(rows)
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("option,n_hidden,restarts,seed,train_mse,val_mse,test_mse,wall_time_s\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.option,
            r.n_hidden,
            r.restarts,
            r.seed,
            r.train_mse,
            r.val_mse,
            r.test_mse,
            r.wall_time.as_secs_f64()
        );
    }
    out
}

#[derive(Debug, Clone)]
pub struct MultiAntennaResult {
    pub params: NetworkParams,
    pub training: TrainReport,
    pub test: EvalReport,
    pub feature_len: usize,
}

/// Trains and tests a network for a four- or eight-antenna dataset.
pub fn multi_antenna_experiment(dataset: &LabeledDataset, option: FeatureOption, config: &TrainConfig) -> Result<MultiAntennaResult> {
    option.check_antennas(dataset.nt())?;
    let (params, training) = train(dataset, option, config)?;
    let test = evaluate(&NetworkPredictor { params: &params }, dataset, Split::Test)?;
    Ok(MultiAntennaResult {
        feature_len: params.n_inputs(),
        params,
        training,
        test,
    })
}

/// Channel realization from a dataset-style interleaved row-major matrix.
pub fn realization_from_reals(nt: usize, gamma_db: f64, reals: &[f64]) -> Result<ChannelRealization> {
    ChannelRealization::from_db(ChannelMatrix::from_interleaved(nt, nt, reals)?, gamma_db)
}
