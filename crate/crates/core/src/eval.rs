//! Predictors and the accuracy metrics used to compare them.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::channel::ChannelRealization;
use crate::constellation::{Constellation, ConstellationKind};
use crate::dataset::{LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::features::extract;
use crate::jensen::jensen_mi_all;
use crate::mlp::NetworkParams;
use crate::oracle::mi_finite;
use crate::rng::derive_seed;

/// Anything that maps a channel realization to one MI value per
/// constellation.
pub trait Predictor: Sync {
    fn name(&self) -> String;

    /// `seed` is only used by stochastic predictors.
    fn predict(&self, channel: &ChannelRealization, constellations: &[Constellation], seed: u64) -> Result<Vec<f64>>;
}

/// Closed-form Jensen approximation.
pub struct JensenPredictor;

impl Predictor for JensenPredictor {
    fn name(&self) -> String {
        "jensen".into()
    }

    fn predict(&self, channel: &ChannelRealization, constellations: &[Constellation], _seed: u64) -> Result<Vec<f64>> {
        Ok(jensen_mi_all(channel, constellations))
    }
}

/// Trained network; outputs are clamped to the feasible range.
pub struct NetworkPredictor<'a> {
    pub params: &'a NetworkParams,
}

impl Predictor for NetworkPredictor<'_> {
    fn name(&self) -> String {
        format!("nn-{}-n{}", self.params.meta.option, self.params.n_hidden())
    }

    fn predict(&self, channel: &ChannelRealization, constellations: &[Constellation], _seed: u64) -> Result<Vec<f64>> {
        let kinds: Vec<ConstellationKind> = constellations.iter().map(Constellation::kind).collect();
        if kinds != self.params.meta.constellations {
            return Err(Error::invalid(format!(
                "model predicts {:?}, asked for {kinds:?}",
                self.params.meta.constellations
            )));
        }
        let fv = extract(self.params.meta.option, channel.gamma, &channel.h)?;
        Ok(self.params.predict(&fv)?.clamped)
    }
}

/// Predicts the same value for everything.
pub struct ConstantPredictor(pub f64);

impl Predictor for ConstantPredictor {
    fn name(&self) -> String {
        format!("constant-{}", self.0)
    }

    fn predict(&self, _: &ChannelRealization, constellations: &[Constellation], _: u64) -> Result<Vec<f64>> {
        Ok(vec![self.0; constellations.len()])
    }
}

/// Fresh Monte Carlo estimate with its own noise draws.
pub struct OraclePredictor {
    pub n_noise_draws: usize,
}

impl Predictor for OraclePredictor {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn predict(&self, channel: &ChannelRealization, constellations: &[Constellation], seed: u64) -> Result<Vec<f64>> {
        constellations
            .iter()
            .enumerate()
            .map(|(j, c)| Ok(mi_finite(channel, c, self.n_noise_draws, derive_seed(seed, &[j as u64]))?.value))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstellationStats {
    pub constellation: ConstellationKind,
    pub mse: f64,
    /// Mean signed error (prediction minus target).
    pub bias: f64,
    /// Three standard deviations of the signed error.
    pub three_sigma: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub method: String,
    pub n_samples: usize,
    /// Mean over rows and constellations of the squared error.
    pub global_mse: f64,
    pub per_constellation: Vec<ConstellationStats>,
    /// Mean squared Monte Carlo error of the labels.
    pub noise_floor: f64,
    pub wall_time: Duration,
}

impl EvalReport {
    pub fn stats(&self, kind: ConstellationKind) -> Option<&ConstellationStats> {
        self.per_constellation.iter().find(|s| s.constellation == kind)
    }

    /// Comma-separated table: one line per constellation plus an `all` line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,constellation,n_samples,mse,bias,three_sigma,max_abs_error,noise_floor,wall_time_s\n");
        for s in &self.per_constellation {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},,",
                self.method, s.constellation, self.n_samples, s.mse, s.bias, s.three_sigma, s.max_abs_error
            );
        }
        let max = self.per_constellation.iter().map(|s| s.max_abs_error).fold(0.0, f64::max);
        let _ = writeln!(
            out,
            "{},all,{},{},,,{},{},{}",
            self.method,
            self.n_samples,
            self.global_mse,
            max,
            self.noise_floor,
            self.wall_time.as_secs_f64()
        );
        out
    }
}

/// Metrics of `predictions` against `targets` (rows × constellations).
pub fn evaluate_predictions(
    method: &str,
    predictions: &[Vec<f64>],
    targets: &[Vec<f64>],
    kinds: &[ConstellationKind],
) -> Result<EvalReport> {
    if predictions.len() != targets.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    let k = kinds.len();
    if predictions.iter().chain(targets).any(|r| r.len() != k) {
        return Err(Error::Dimension(format!("every row needs {k} values")));
    }
    let n = predictions.len();
    let mut per = Vec::with_capacity(k);
    let mut total = 0.0;
    for (j, &kind) in kinds.iter().enumerate() {
        let errors: Vec<f64> = predictions.iter().zip(targets).map(|(p, t)| p[j] - t[j]).collect();
        let nf = n.max(1) as f64;
        let sq: f64 = errors.iter().map(|e| e * e).sum();
        let bias = errors.iter().sum::<f64>() / nf;
        let var = if n > 1 {
            errors.iter().map(|e| (e - bias) * (e - bias)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        total += sq;
        per.push(ConstellationStats {
            constellation: kind,
            mse: sq / nf,
            bias,
            three_sigma: 3.0 * var.sqrt(),
            max_abs_error: errors.iter().fold(0.0, |m, e| m.max(e.abs())),
        });
    }
    Ok(EvalReport {
        method: method.into(),
        n_samples: n,
        global_mse: total / (n.max(1) * k) as f64,
        per_constellation: per,
        noise_floor: 0.0,
        wall_time: Duration::ZERO,
    })
}

/// Runs `predictor` on every row of `split`; rows seed stochastic predictors.
pub fn predict_split(predictor: &dyn Predictor, dataset: &LabeledDataset, split: Split) -> Result<(Vec<Vec<f64>>, Duration)> {
    let constellations: Vec<Constellation> = dataset.constellations().iter().map(|&k| Constellation::new(k)).collect();
    let rows: Vec<_> = dataset.rows_in(split).collect();
    let channels = rows.iter().map(|r| r.realization()).collect::<Result<Vec<_>>>()?;
    let clock = Instant::now();
    let preds = rows
        .par_iter()
        .zip(&channels)
        .map(|(r, ch)| predictor.predict(ch, &constellations, r.seed))
        .collect::<Result<Vec<_>>>()?;
    Ok((preds, clock.elapsed()))
}

/// Evaluates `predictor` on one split of a labelled dataset.
pub fn evaluate(predictor: &dyn Predictor, dataset: &LabeledDataset, split: Split) -> Result<EvalReport> {
    let (preds, elapsed) = predict_split(predictor, dataset, split)?;
    let targets: Vec<Vec<f64>> = dataset.rows_in(split).map(|r| r.targets.clone()).collect();
    let mut report = evaluate_predictions(&predictor.name(), &preds, &targets, dataset.constellations())?;
    report.noise_floor = dataset.noise_floor(split);
    report.wall_time = elapsed;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::GenConfig;

    fn kinds() -> Vec<ConstellationKind> {
        ConstellationKind::STANDARD.to_vec()
    }

    #[test]
    fn perfect_predictor_scores_zero() {
        let t = vec![vec![0.5, 1.0, 2.0], vec![1.5, 0.2, 3.0]];
        let r = evaluate_predictions("echo", &t, &t, &kinds()).unwrap();
        assert_eq!(r.global_mse, 0.0);
        for s in &r.per_constellation {
            assert_eq!((s.mse, s.bias, s.three_sigma, s.max_abs_error), (0.0, 0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn hand_computed_metrics() {
        let p = vec![vec![1.0], vec![2.0], vec![0.0]];
        let t = vec![vec![0.0], vec![2.0], vec![1.0]];
        let r = evaluate_predictions("x", &p, &t, &kinds()[..1]).unwrap();
        let s = &r.per_constellation[0];
        assert!((r.global_mse - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.bias, 0.0);
        assert!((s.three_sigma - 3.0).abs() < 1e-15);
        assert_eq!(s.max_abs_error, 1.0);
    }

    #[test]
    fn constant_zero_gives_mean_square_target() {
        let ds = LabeledDataset::generate(&GenConfig {
            n_samples: 60,
            n_noise_draws: 30,
            ..GenConfig::default()
        })
        .unwrap();
        let r = evaluate(&ConstantPredictor(0.0), &ds, Split::Train).unwrap();
        let rows: Vec<_> = ds.rows_in(Split::Train).collect();
        let want = rows.iter().flat_map(|r| r.targets.iter()).map(|t| t * t).sum::<f64>() / (rows.len() * 3) as f64;
        assert!((r.global_mse - want).abs() < 1e-12 * want);
    }

    #[test]
    fn row_order_does_not_matter() {
        let ds = LabeledDataset::generate(&GenConfig {
            n_samples: 40,
            n_noise_draws: 30,
            ..GenConfig::default()
        })
        .unwrap();
        let a = evaluate(&JensenPredictor, &ds, Split::Train).unwrap();
        let mut shuffled = ds.clone();
        shuffled.rows.reverse();
        let b = evaluate(&JensenPredictor, &shuffled, Split::Train).unwrap();
        assert!((a.global_mse - b.global_mse).abs() < 1e-14);
        for (x, y) in a.per_constellation.iter().zip(&b.per_constellation) {
            assert_eq!(x.max_abs_error, y.max_abs_error);
            assert!((x.three_sigma - y.three_sigma).abs() < 1e-12);
        }
    }
}
