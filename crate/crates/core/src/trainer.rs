//! Levenberg–Marquardt batch training with validation early stopping and
//! multiple restarts.

use std::fmt::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::features::FeatureOption;
use crate::mlp::{fit_scalers, ModelMeta, NetworkParams, Scalers};
use crate::rng::{derive_seed, rng_from_seed};

/// Samples per Jacobian block. Blocks are reduced in index order, so results
/// do not depend on the number of worker threads.
const BLOCK: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub n_hidden: usize,
    pub max_epochs: usize,
    pub lambda_init: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Consecutive epochs without a new best validation MSE before stopping.
    pub patience: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_hidden: 10,
            max_epochs: 1000,
            lambda_init: 1e-3,
            lambda_up: 10.0,
            lambda_down: 0.1,
            lambda_min: 1e-12,
            lambda_max: 1e12,
            patience: 6,
            restarts: 10,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_hidden == 0 || self.max_epochs == 0 || self.patience == 0 || self.restarts == 0 {
            return Err(Error::invalid(
                "n_hidden, max_epochs, patience and restarts must be positive",
            ));
        }
        if !(self.lambda_up > 1.0) || !(self.lambda_down > 0.0 && self.lambda_down < 1.0) {
            return Err(Error::invalid("need lambda_up > 1 > lambda_down > 0"));
        }
        if !(self.lambda_min > 0.0 && self.lambda_min <= self.lambda_init && self.lambda_init <= self.lambda_max)
            || !self.lambda_max.is_finite()
        {
            return Err(Error::invalid("need 0 < lambda_min <= lambda_init <= lambda_max < inf"));
        }
        Ok(())
    }

    /// Parses a TOML document; missing keys take their defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::invalid(format!("bad training config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }
}

/// Input/target pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Samples {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

impl Samples {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::Dimension(format!(
                "{} inputs but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Output-major error vector `y_k(ℓ) - t_k(ℓ)` and Jacobian rows for one
/// sample, written into `e` (length K) and `rows` (K × P, row-major).
struct Scratch {
    a0: Vec<f64>,
    a1: Vec<f64>,
    y: Vec<f64>,
}

impl Scratch {
    fn new(p: &NetworkParams) -> Self {
        Self {
            a0: vec![0.0; p.n_inputs()],
            a1: vec![0.0; p.n_hidden()],
            y: vec![0.0; p.n_outputs()],
        }
    }
}

fn sample_rows(p: &NetworkParams, x: &[f64], t: &[f64], s: &mut Scratch, e: &mut [f64], j: &mut DMatrix<f64>, row0: usize) {
    let (f, n, k) = (p.n_inputs(), p.n_hidden(), p.n_outputs());
    p.forward_into(x, &mut s.a0, &mut s.a1, &mut s.y);
    let off_b1 = n * f;
    let off_w2 = off_b1 + n;
    let off_b2 = off_w2 + k * n;
    for o in 0..k {
        let r = row0 + o;
        e[o] = s.y[o] - t[o];
        let inv_g = 1.0 / p.g3[o];
        for h in 0..n {
            let back = p.w2[o * n + h] * (1.0 - s.a1[h] * s.a1[h]) * inv_g;
            for (c, a) in s.a0.iter().enumerate() {
                j[(r, h * f + c)] = back * a;
            }
            j[(r, off_b1 + h)] = back;
            j[(r, off_w2 + o * n + h)] = s.a1[h] * inv_g;
        }
        j[(r, off_b2 + o)] = inv_g;
    }
}

fn check_samples(p: &NetworkParams, samples: &Samples) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    for (i, (x, t)) in samples.inputs.iter().zip(&samples.targets).enumerate() {
        if x.len() != p.n_inputs() || t.len() != p.n_outputs() {
            return Err(Error::Dimension(format!("sample {i} does not match the network shape")));
        }
    }
    Ok(())
}

/// Error vector and Jacobian with respect to `[W1, b1, W2, b2]` (the layout of
/// [`NetworkParams::trainable`]). Row `ℓ·K + k` belongs to output `k` of
/// sample `ℓ`.
pub fn jacobian(params: &NetworkParams, samples: &Samples) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_samples(params, samples)?;
    let k = params.n_outputs();
    let rows = samples.len() * k;
    let mut e = DVector::zeros(rows);
    let mut j = DMatrix::zeros(rows, params.n_trainable());
    let mut s = Scratch::new(params);
    let mut ek = vec![0.0; k];
    for (l, (x, t)) in samples.inputs.iter().zip(&samples.targets).enumerate() {
        sample_rows(params, x, t, &mut s, &mut ek, &mut j, l * k);
        e.rows_mut(l * k, k).copy_from_slice(&ek);
    }
    Ok((e, j))
}

/// Per-block sums from which `JᵀJ` is assembled.
///
/// A Jacobian row of output `k` is `[û_k ⊗ a, z/g3_k at block k]` with
/// `a = [a0, 1]`, `z = [a1, 1]` and `û_k = W2[k,:] ∘ (1 - a1²) / g3_k`, so
/// the hidden-layer block of `JᵀJ` is `Σ_s U_s ⊗ a_s a_sᵀ` with
/// `U_s = Σ_k û_k û_kᵀ`. All three blocks are products of small per-sample
/// tables, which is far cheaper than forming `JᵀJ` from the rows.
struct BlockSums {
    /// `Σ_s vec(U_s) vec(a aᵀ)ᵀ`, `N² × (F+1)²`.
    hidden: DMatrix<f64>,
    /// `Σ_s (g3_k û_k[h] z_j) a_c`, rows `(k, h, j)`, `K·N·(N+1) × (F+1)`.
    cross: DMatrix<f64>,
    /// `Σ_s z zᵀ`.
    output: DMatrix<f64>,
    jte: DVector<f64>,
    sse: f64,
}

fn block_sums(p: &NetworkParams, xs: &[Vec<f64>], ts: &[Vec<f64>]) -> BlockSums {
    let (f, n, k) = (p.n_inputs(), p.n_hidden(), p.n_outputs());
    let (fa, nz) = (f + 1, n + 1);
    let rows = xs.len();
    let mut um = DMatrix::zeros(n * n, rows);
    let mut am = DMatrix::zeros(fa * fa, rows);
    let mut vm = DMatrix::zeros(k * n * nz, rows);
    let mut a1m = DMatrix::zeros(fa, rows);
    let mut zm = DMatrix::zeros(nz, rows);
    let mut jte = DVector::zeros(p.n_trainable());
    let mut sse = 0.0;
    let mut s = Scratch::new(p);
    let mut a = vec![0.0; fa];
    let mut z = vec![0.0; nz];
    let mut u = vec![0.0; k * n];
    let mut r = vec![0.0; n];
    let off_b1 = n * f;
    let off_w2 = off_b1 + n;
    let off_b2 = off_w2 + k * n;

    for (row, (x, t)) in xs.iter().zip(ts).enumerate() {
        p.forward_into(x, &mut s.a0, &mut s.a1, &mut s.y);
        a[..f].copy_from_slice(&s.a0);
        a[f] = 1.0;
        z[..n].copy_from_slice(&s.a1);
        z[n] = 1.0;
        r.fill(0.0);
        for o in 0..k {
            let inv_g = 1.0 / p.g3[o];
            let e = s.y[o] - t[o];
            sse += e * e;
            for h in 0..n {
                let uh = p.w2[o * n + h] * (1.0 - s.a1[h] * s.a1[h]) * inv_g;
                u[o * n + h] = uh;
                r[h] += uh * e;
                for (j, zj) in z.iter().enumerate() {
                    vm[((o * n + h) * nz + j, row)] = uh * zj * p.g3[o];
                }
            }
            for j in 0..n {
                jte[off_w2 + o * n + j] += z[j] * e * inv_g;
            }
            jte[off_b2 + o] += e * inv_g;
        }
        for h in 0..n {
            for h2 in 0..n {
                um[(h * n + h2, row)] = (0..k).map(|o| u[o * n + h] * u[o * n + h2]).sum::<f64>();
            }
            for c in 0..f {
                jte[h * f + c] += r[h] * a[c];
            }
            jte[off_b1 + h] += r[h];
        }
        for c in 0..fa {
            a1m[(c, row)] = a[c];
            for c2 in 0..fa {
                am[(c * fa + c2, row)] = a[c] * a[c2];
            }
        }
        for j in 0..nz {
            zm[(j, row)] = z[j];
        }
    }
    BlockSums {
        hidden: &um * am.transpose(),
        cross: &vm * a1m.transpose(),
        output: &zm * zm.transpose(),
        jte,
        sse,
    }
}

/// `JᵀJ`, `Jᵀe` and the sum of squared errors. Blocks of samples are
/// reduced in index order.
fn normal_equations(params: &NetworkParams, samples: &Samples) -> (DMatrix<f64>, DVector<f64>, f64) {
    let (f, n, k) = (params.n_inputs(), params.n_hidden(), params.n_outputs());
    let (fa, nz) = (f + 1, n + 1);
    let np = params.n_trainable();
    let partial: Vec<BlockSums> = samples
        .inputs
        .par_chunks(BLOCK)
        .zip(samples.targets.par_chunks(BLOCK))
        .map(|(xs, ts)| block_sums(params, xs, ts))
        .collect();
    let mut it = partial.into_iter();
    let mut sum = it.next().expect("nonempty sample set");
    for b in it {
        sum.hidden += b.hidden;
        sum.cross += b.cross;
        sum.output += b.output;
        sum.jte += b.jte;
        sum.sse += b.sse;
    }

    let off_b1 = n * f;
    let off_w2 = off_b1 + n;
    let off_b2 = off_w2 + k * n;
    let idx1 = |h: usize, c: usize| if c < f { h * f + c } else { off_b1 + h };
    let idx2 = |o: usize, j: usize| if j < n { off_w2 + o * n + j } else { off_b2 + o };
    let mut jtj = DMatrix::zeros(np, np);
    for h in 0..n {
        for h2 in 0..n {
            for c in 0..fa {
                for c2 in 0..fa {
                    jtj[(idx1(h, c), idx1(h2, c2))] = sum.hidden[(h * n + h2, c * fa + c2)];
                }
            }
        }
    }
    for o in 0..k {
        let w = 1.0 / (params.g3[o] * params.g3[o]);
        for h in 0..n {
            for j in 0..nz {
                for c in 0..fa {
                    let v = sum.cross[((o * n + h) * nz + j, c)] * w;
                    jtj[(idx1(h, c), idx2(o, j))] = v;
                    jtj[(idx2(o, j), idx1(h, c))] = v;
                }
            }
        }
        for j in 0..nz {
            for j2 in 0..nz {
                jtj[(idx2(o, j), idx2(o, j2))] = sum.output[(j, j2)] * w;
            }
        }
    }
    (jtj, sum.jte, sum.sse)
}

/// Mean over samples and outputs of the squared error.
pub fn mse(params: &NetworkParams, samples: &Samples) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    let partial: Vec<f64> = samples
        .inputs
        .par_chunks(BLOCK)
        .zip(samples.targets.par_chunks(BLOCK))
        .map(|(xs, ts)| {
            let mut s = Scratch::new(params);
            let mut sse = 0.0;
            for (x, t) in xs.iter().zip(ts) {
                params.forward_into(x, &mut s.a0, &mut s.a1, &mut s.y);
                sse += s.y.iter().zip(t).map(|(y, t)| (y - t) * (y - t)).sum::<f64>();
            }
            sse
        })
        .collect();
    partial.iter().sum::<f64>() / (samples.len() * params.n_outputs()) as f64
}

/// Solves `(JᵀJ + λI) δ = -Jᵀe` given the normal-equation pieces.
fn solve_damped(jtj: &DMatrix<f64>, jte: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    let mut a = jtj.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += lambda;
    }
    let chol = a.cholesky().ok_or(Error::Singular { lambda })?;
    let delta = -chol.solve(jte);
    if delta.iter().any(|d| !d.is_finite()) {
        return Err(Error::Singular { lambda });
    }
    Ok(delta)
}

/// Damped Gauss–Newton step `δ` for residuals `e` with Jacobian `j`.
pub fn damped_delta(e: &DVector<f64>, j: &DMatrix<f64>, lambda: f64) -> Result<DVector<f64>> {
    if e.len() != j.nrows() {
        return Err(Error::Dimension("residual length differs from Jacobian rows".into()));
    }
    if e.iter().chain(j.iter()).any(|v| !v.is_finite()) || !(lambda >= 0.0) {
        return Err(Error::invalid("LM step needs finite inputs and λ >= 0"));
    }
    solve_damped(&j.tr_mul(j), &j.tr_mul(e), lambda)
}

/// One Levenberg–Marquardt update of the trainable parameters.
pub fn lm_step(params: &NetworkParams, e: &DVector<f64>, j: &DMatrix<f64>, lambda: f64) -> Result<NetworkParams> {
    if j.ncols() != params.n_trainable() {
        return Err(Error::Dimension("Jacobian columns differ from trainable parameters".into()));
    }
    let delta = damped_delta(e, j, lambda)?;
    let mut next = params.clone();
    let theta: Vec<f64> = params.trainable().iter().zip(delta.iter()).map(|(a, d)| a + d).collect();
    next.set_trainable(&theta);
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    ValidationPatience,
    /// No damping in `[lambda_min, lambda_max]` produced a descent step.
    DampingLimit,
    /// Zero gradient or zero training error.
    Converged,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub restart: usize,
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    pub test_mse: Option<f64>,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestartSummary {
    pub restart: usize,
    pub seed: u64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub stop: StopReason,
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub selected_restart: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    /// Global MSEs of the selected model.
    pub train_mse: f64,
    pub val_mse: f64,
    pub test_mse: Option<f64>,
    pub restarts: Vec<RestartSummary>,
    pub history: Vec<EpochRecord>,
    pub wall_time: Duration,
}

impl TrainReport {
    /// Per-epoch history as comma-separated lines with a header.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("restart,epoch,train_mse,val_mse,test_mse,lambda\n");
        for r in &self.history {
            let test = r.test_mse.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{},{},{}", r.restart, r.epoch, r.train_mse, r.val_mse, test, r.lambda);
        }
        out
    }
}

/// Nguyen–Widrow initialisation of the hidden layer; small uniform output
/// layer.
fn initialize(params: &mut NetworkParams, rng: &mut ChaCha8Rng) {
    let (f, n) = (params.n_inputs(), params.n_hidden());
    let beta = 0.7 * (n as f64).powf(1.0 / f as f64);
    for h in 0..n {
        let row = &mut params.w1[h * f..(h + 1) * f];
        for w in row.iter_mut() {
            *w = rng.random_range(-1.0..1.0);
        }
        let norm = row.iter().map(|w| w * w).sum::<f64>().sqrt().max(1e-12);
        for w in row.iter_mut() {
            *w *= beta / norm;
        }
        params.b1[h] = rng.random_range(-beta..beta);
    }
    for w in params.w2.iter_mut().chain(params.b2.iter_mut()) {
        *w = rng.random_range(-0.5..0.5);
    }
}

/// A network with freshly initialised weights and the given scaling.
pub fn initialized_network(scalers: Scalers, n_hidden: usize, meta: ModelMeta, seed: u64) -> Result<NetworkParams> {
    let mut p = NetworkParams::zeros(scalers, n_hidden, meta)?;
    initialize(&mut p, &mut rng_from_seed(seed));
    Ok(p)
}

struct RestartResult {
    params: NetworkParams,
    summary: RestartSummary,
    history: Vec<EpochRecord>,
}

fn run_restart(
    start: NetworkParams,
    restart: usize,
    seed: u64,
    train: &Samples,
    val: &Samples,
    test: Option<&Samples>,
    cfg: &TrainConfig,
) -> RestartResult {
    let clock = Instant::now();
    let mut params = start;
    initialize(&mut params, &mut rng_from_seed(seed));
    let mut lambda = cfg.lambda_init;
    let mut train_mse = mse(&params, train);
    let mut best = (params.clone(), mse(&params, val), 0usize);
    let mut fails = 0;
    let mut history = Vec::new();
    let mut epochs_run = 0;
    let mut stop = StopReason::MaxEpochs;

    'epochs: for epoch in 1..=cfg.max_epochs {
        let (jtj, jte, _) = normal_equations(&params, train);
        if train_mse == 0.0 || jte.amax() == 0.0 {
            stop = StopReason::Converged;
            break;
        }
        let theta = params.trainable();
        loop {
            let accepted = solve_damped(&jtj, &jte, lambda).ok().and_then(|delta| {
                let mut cand = params.clone();
                let next: Vec<f64> = theta.iter().zip(delta.iter()).map(|(a, d)| a + d).collect();
                cand.set_trainable(&next);
                let m = mse(&cand, train);
                (m < train_mse).then_some((cand, m))
            });
            match accepted {
                Some((cand, m)) => {
                    assert!(m < train_mse);
                    params = cand;
                    train_mse = m;
                    lambda = (lambda * cfg.lambda_down).max(cfg.lambda_min);
                    break;
                }
                None => {
                    lambda *= cfg.lambda_up;
                    if lambda > cfg.lambda_max {
                        stop = StopReason::DampingLimit;
                        break 'epochs;
                    }
                }
            }
        }
        epochs_run = epoch;
        let val_mse = mse(&params, val);
        history.push(EpochRecord {
            restart,
            epoch,
            train_mse,
            val_mse,
            test_mse: test.map(|t| mse(&params, t)),
            lambda,
        });
        if val_mse < best.1 {
            best = (params.clone(), val_mse, epoch);
            fails = 0;
        } else {
            fails += 1;
            if fails >= cfg.patience {
                stop = StopReason::ValidationPatience;
                break;
            }
        }
    }

    let (params, best_val_mse, best_epoch) = best;
    RestartResult {
        params,
        summary: RestartSummary {
            restart,
            seed,
            epochs_run,
            best_epoch,
            best_val_mse,
            stop,
            wall_time: clock.elapsed(),
        },
        history,
    }
}

/// Trains `config.restarts` networks from independent initialisations and
/// keeps the one with the lowest validation MSE. Scaling stages are fitted on
/// `train` and frozen.
pub fn train_samples(
    train: &Samples,
    val: &Samples,
    test: Option<&Samples>,
    meta: ModelMeta,
    config: &TrainConfig,
) -> Result<(NetworkParams, TrainReport)> {
    config.validate()?;
    if val.is_empty() {
        return Err(Error::invalid("validation split is empty"));
    }
    let scalers = fit_scalers(&train.inputs, &train.targets)?;
    let template = NetworkParams::zeros(scalers, config.n_hidden, meta)?;
    check_samples(&template, train)?;
    check_samples(&template, val)?;
    if let Some(t) = test {
        check_samples(&template, t)?;
    }

    let clock = Instant::now();
    let mut best: Option<RestartResult> = None;
    let mut restarts = Vec::with_capacity(config.restarts);
    let mut history = Vec::new();
    for r in 0..config.restarts {
        let seed = derive_seed(config.seed, &[r as u64]);
        let result = run_restart(template.clone(), r, seed, train, val, test, config);
        restarts.push(result.summary.clone());
        history.extend(result.history.iter().cloned());
        if best.as_ref().is_none_or(|b| result.summary.best_val_mse < b.summary.best_val_mse) {
            best = Some(result);
        }
    }
    let best = best.expect("at least one restart");
    let params = best.params;
    let report = TrainReport {
        selected_restart: best.summary.restart,
        epochs_run: best.summary.epochs_run,
        best_epoch: best.summary.best_epoch,
        train_mse: mse(&params, train),
        val_mse: best.summary.best_val_mse,
        test_mse: test.map(|t| mse(&params, t)),
        restarts,
        history,
        wall_time: clock.elapsed(),
    };
    Ok((params, report))
}

/// Trains on the dataset's train split, stops early on its validation split
/// and reports the test split MSE of the selected network.
pub fn train(dataset: &LabeledDataset, option: FeatureOption, config: &TrainConfig) -> Result<(NetworkParams, TrainReport)> {
    option.check_antennas(dataset.nt())?;
    let train = dataset.samples(option, Split::Train)?;
    let val = dataset.samples(option, Split::Val)?;
    let test = dataset.samples(option, Split::Test)?;
    let meta = ModelMeta {
        option,
        constellations: dataset.constellations().to_vec(),
        nt: dataset.nt(),
    };
    let test = (!test.is_empty()).then_some(&test);
    train_samples(&train, &val, test, meta, config)
}
