//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero when a criterion fails outside the known gaps listed in the
//! README.
//!
//! Datasets are cached under the cargo target tmp directory. Set
//! `SMMI_FULL_SCALE=1` to use the large dataset sizes instead of the desk
//! defaults.

use std::f64::consts::FRAC_PI_2;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use smmi::channel::{sample_rayleigh_channel, sample_snr_db, ChannelMatrix, ChannelRealization};
use smmi::constellation::{Constellation, ConstellationKind};
use smmi::dataset::{gen_dataset_with_progress, GenConfig, LabeledDataset, Split};
use smmi::error::Result;
use smmi::eval::{evaluate, predict_split, JensenPredictor, NetworkPredictor, OraclePredictor, Predictor};
use smmi::experiments::{angle_sweep, complexity_report, ergodic_curve, feature_ablation, multi_antenna_experiment};
use smmi::features::FeatureOption;
use smmi::jensen::jensen_mi;
use smmi::mlp::{fit_scalers, ModelMeta, NetworkParams};
use smmi::oracle::mi_finite;
use smmi::rng::derive_seed;
use smmi::trainer::{initialized_network, jacobian, train, Samples, TrainConfig};

struct Outcome {
    pass: bool,
    /// Failure limited to a documented, accepted gap.
    known_gap: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self {
            pass,
            known_gap: false,
            detail,
        }
    }
}

struct Scale {
    full: bool,
    nt2: GenConfig,
    nt4: GenConfig,
    nt8: GenConfig,
}

impl Scale {
    fn from_env() -> Self {
        let full = std::env::var("SMMI_FULL_SCALE").is_ok_and(|v| !v.is_empty() && v != "0");
        let cfg = |nt, n_samples, n_noise_draws| GenConfig {
            nt,
            n_samples,
            n_noise_draws,
            ..GenConfig::default()
        };
        if full {
            Self {
                full,
                nt2: cfg(2, 50_000, 5_000),
                nt4: cfg(4, 25_000, 5_000),
                nt8: cfg(8, 25_000, 5_000),
            }
        } else {
            Self {
                full,
                nt2: cfg(2, 20_000, 2_000),
                nt4: cfg(4, 5_000, 2_000),
                nt8: cfg(8, 5_000, 1_000),
            }
        }
    }
}

fn cache_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("smmi-acceptance")
}

fn dataset(cfg: &GenConfig) -> Result<LabeledDataset> {
    let dir = cache_dir();
    std::fs::create_dir_all(&dir).map_err(|e| smmi::error::Error::io(&dir, e))?;
    let path = dir.join(format!(
        "dataset_nt{}_n{}_d{}_s{}.csv",
        cfg.nt, cfg.n_samples, cfg.n_noise_draws, cfg.seed
    ));
    let clock = Instant::now();
    let mut last = Instant::now();
    let ds = gen_dataset_with_progress(cfg, &path, |done, total| {
        if done < total && last.elapsed() > Duration::from_secs(60) {
            eprintln!("  generating {}: {done}/{total}", path.display());
            last = Instant::now();
        }
    })?;
    eprintln!("  dataset {} ready in {:.1?}", path.display(), clock.elapsed());
    Ok(ds)
}

fn desk_train_config(restarts: usize) -> TrainConfig {
    TrainConfig {
        n_hidden: 10,
        restarts,
        ..TrainConfig::default()
    }
}

fn oracle_sanity() -> Result<Outcome> {
    let clock = Instant::now();
    let kinds = ConstellationKind::STANDARD;
    let draws = 2_000;
    let mut violations = 0;
    for i in 0..500u64 {
        let s = derive_seed(11, &[i]);
        let h = sample_rayleigh_channel(derive_seed(s, &[0]), 2)?;
        let ch = ChannelRealization::from_db(h, sample_snr_db(derive_seed(s, &[1]), -20.0, 40.0)?)?;
        let c = Constellation::new(kinds[i as usize % 3]);
        let e = mi_finite(&ch, &c, draws, derive_seed(s, &[2]))?;
        if e.value < -3.0 * e.std_error || e.value > c.max_mi(2) + 3.0 * e.std_error {
            violations += 1;
        }
    }
    let mut zero_err: f64 = 0.0;
    let mut high_err: f64 = 0.0;
    for (j, &k) in kinds.iter().enumerate() {
        let c = Constellation::new(k);
        let zero = mi_finite(&ChannelRealization::new(ChannelMatrix::identity(2), 0.0)?, &c, draws, j as u64)?;
        zero_err = zero_err.max(zero.value.abs() - 3.0 * zero.std_error);
        let high = mi_finite(&ChannelRealization::from_db(ChannelMatrix::identity(2), 40.0)?, &c, draws, j as u64)?;
        high_err = high_err.max((high.value - c.max_mi(2)).abs());
    }
    let wall = clock.elapsed();
    Ok(Outcome::new(
        violations == 0 && zero_err <= 0.0 && high_err <= 0.02 && wall < Duration::from_secs(300),
        format!("range violations {violations}/500, gamma=0 excess {zero_err:.2e}, 40 dB max |err| {high_err:.2e} (<= 0.02), {wall:.1?} (< 5 min)"),
    ))
}

fn well_conditioned(h: &ChannelMatrix, limit: f64) -> bool {
    // eigenvalues of the 2x2 Gram matrix
    let g = h.gram();
    let (a, d) = (g[0].re, g[3].re);
    let det = a * d - g[1].norm_sqr();
    let tr = a + d;
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    let (hi, lo) = (tr / 2.0 + disc, tr / 2.0 - disc);
    lo > 0.0 && (hi / lo).sqrt() < limit
}

fn jensen_limits() -> Result<Outcome> {
    let mut zero_err: f64 = 0.0;
    let mut high_err: f64 = 0.0;
    let mut n = 0;
    let mut i = 0u64;
    while n < 50 {
        let h = sample_rayleigh_channel(derive_seed(21, &[i]), 2)?;
        i += 1;
        if !well_conditioned(&h, 10.0) {
            continue;
        }
        n += 1;
        for k in ConstellationKind::STANDARD {
            let c = Constellation::new(k);
            zero_err = zero_err.max(jensen_mi(&ChannelRealization::new(h.clone(), 0.0)?, &c).abs());
            high_err = high_err.max((jensen_mi(&ChannelRealization::new(h.clone(), 1e8)?, &c) - c.max_mi(2)).abs());
        }
    }
    Ok(Outcome::new(
        zero_err <= f64::EPSILON && high_err <= 1e-3,
        format!("50 channels with cond < 10: gamma=0 max |I| {zero_err:.1e}, gamma=1e8 max |I - log2(2M)| {high_err:.1e} (<= 1e-3)"),
    ))
}

/// Mean signed error on the 10% of samples with the largest target MI, per
/// constellation.
fn top_decile_bias(predictor: &dyn Predictor, ds: &LabeledDataset, split: Split) -> Result<Vec<f64>> {
    let (pred, _) = predict_split(predictor, ds, split)?;
    let rows: Vec<_> = ds.rows_in(split).collect();
    Ok((0..ds.constellations().len())
        .map(|j| {
            let mut idx: Vec<usize> = (0..rows.len()).collect();
            idx.sort_by(|&a, &b| rows[b].targets[j].total_cmp(&rows[a].targets[j]));
            let top = &idx[..rows.len().div_ceil(10)];
            top.iter().map(|&r| pred[r][j] - rows[r].targets[j]).sum::<f64>() / top.len() as f64
        })
        .collect())
}

fn jensen_accuracy(ds: &LabeledDataset) -> Result<(Outcome, f64)> {
    let clock = Instant::now();
    let all = evaluate(&JensenPredictor, ds, Split::Test)?;
    let bias = top_decile_bias(&JensenPredictor, ds, Split::Test)?;
    let wall = clock.elapsed();
    let pass = (5e-3..=5e-2).contains(&all.global_mse) && bias.iter().all(|&b| b > 0.0) && wall < Duration::from_secs(60);
    Ok((
        Outcome::new(
            pass,
            format!(
                "test MSE {:.3e} in [5e-3, 5e-2], top-decile bias {:?} > 0, {wall:.1?}",
                all.global_mse,
                bias.iter().map(|b| format!("{b:.2e}")).collect::<Vec<_>>()
            ),
        ),
        all.global_mse,
    ))
}

fn nn_accuracy(ds: &LabeledDataset, jensen_mse: f64) -> Result<(Outcome, NetworkParams)> {
    let cfg = desk_train_config(10);
    let (params, report) = train(ds, FeatureOption::V, &cfg)?;
    let eval = evaluate(&NetworkPredictor { params: &params }, ds, Split::Test)?;
    let worst_restart = report.restarts.iter().map(|r| r.wall_time).max().unwrap_or_default();
    let three_sigma: Vec<f64> = eval.per_constellation.iter().map(|s| s.three_sigma).collect();
    let ratio = jensen_mse / eval.global_mse;
    let pass = eval.global_mse <= 1e-3
        && ratio >= 10.0
        && three_sigma.iter().all(|&s| s <= 0.06)
        && worst_restart <= Duration::from_secs(15 * 60);
    Ok((
        Outcome::new(
            pass,
            format!(
                "option v N=10, {} restarts (seed {}): test MSE {:.3e} (<= 1e-3), Jensen/NN {ratio:.1}x (>= 10), 3sigma {:?} (<= 0.06), slowest restart {worst_restart:.1?}, noise floor {:.2e}",
                cfg.restarts,
                cfg.seed,
                eval.global_mse,
                three_sigma.iter().map(|s| format!("{s:.3}")).collect::<Vec<_>>(),
                ds.noise_floor(Split::Test)
            ),
        ),
        params,
    ))
}

fn ablation(ds: &LabeledDataset) -> Result<Outcome> {
    let cfg = desk_train_config(3);
    let options = [FeatureOption::V, FeatureOption::II, FeatureOption::I, FeatureOption::Raw];
    let rows = feature_ablation(ds, &options, &[10], &cfg)?;
    let mse: Vec<f64> = rows.iter().map(|r| r.test_mse).collect();
    let pass = mse[0] < mse[1] && mse[1] < mse[2] && mse[3] > 1e-2;
    Ok(Outcome::new(
        pass,
        format!(
            "N=10, {} restarts, seed {}: v {:.3e} < ii {:.3e} < i {:.3e}; raw {:.3e} (> 1e-2)",
            cfg.restarts, cfg.seed, mse[0], mse[1], mse[2], mse[3]
        ),
    ))
}

fn jacobian_check() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    for n in [3, 10] {
        for (f, option) in [(4, FeatureOption::I), (8, FeatureOption::V)] {
            for k in [1, 3] {
                let constellations = ConstellationKind::STANDARD[..k].to_vec();
                let inputs: Vec<Vec<f64>> = (0..20).map(|_| (0..f).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
                let targets: Vec<Vec<f64>> = (0..20).map(|_| (0..k).map(|_| rng.random_range(0.0..3.0)).collect()).collect();
                let meta = ModelMeta {
                    option,
                    constellations,
                    nt: 2,
                };
                let mut p = initialized_network(fit_scalers(&inputs, &targets)?, n, meta, rng.random())?;
                let theta: Vec<f64> = p.trainable().iter().map(|t| t + rng.random_range(-0.5..0.5)).collect();
                p.set_trainable(&theta);
                let samples = Samples::new(inputs, targets)?;
                let (_, j) = jacobian(&p, &samples)?;
                let step = 1e-6;
                for c in 0..theta.len() {
                    let mut plus = p.clone();
                    let mut minus = p.clone();
                    let mut t = theta.clone();
                    t[c] += step;
                    plus.set_trainable(&t);
                    t[c] -= 2.0 * step;
                    minus.set_trainable(&t);
                    let (ep, _) = jacobian(&plus, &samples)?;
                    let (em, _) = jacobian(&minus, &samples)?;
                    for r in 0..ep.len() {
                        let fd = (ep[r] - em[r]) / (2.0 * step);
                        let rel = (j[(r, c)] - fd).abs() / j[(r, c)].abs().max(fd.abs()).max(1e-3);
                        worst = worst.max(rel);
                    }
                }
            }
        }
    }
    Ok(Outcome::new(
        worst < 1e-5,
        format!("N in {{3,10}}, F in {{4,8}}, K in {{1,3}}: max relative error {worst:.2e} (< 1e-5)"),
    ))
}

fn complexity(ds: &LabeledDataset) -> Result<Outcome> {
    // wall time does not depend on the weight values; a short fit gives a
    // realistic network
    let cfg = TrainConfig {
        n_hidden: 20,
        restarts: 1,
        max_epochs: 20,
        ..TrainConfig::default()
    };
    let (net, _) = train(ds, FeatureOption::V, &cfg)?;
    let rows = complexity_report(&net, 7_500, 71)?;
    let (jensen, nn) = (&rows[0], &rows[1]);
    let ratio = jensen.wall_time.as_secs_f64() / nn.wall_time.as_secs_f64();
    let ops_ok = nn.static_ops.products == 368;
    let exp_ok = nn.static_ops.exp == 20;
    let ratio_ok = ratio >= 10.0;
    let mut out = Outcome::new(
        ops_ok && exp_ok && ratio_ok,
        format!(
            "NN v N=20 static {} products (368), {} exp (20); Jensen {} products; wall Jensen {:.2?} / NN {:.2?} over 7500 evals = {ratio:.0}x (>= 10)",
            nn.static_ops.products,
            nn.static_ops.exp,
            jensen.static_ops.products,
            jensen.wall_time,
            nn.wall_time
        ),
    );
    if !ops_ok && exp_ok && ratio_ok {
        out.known_gap = true;
        out.detail.push_str("; product count differs by counting convention (see README)");
    }
    Ok(out)
}

fn ergodic(network: &NetworkParams) -> Result<Outcome> {
    let grid: Vec<f64> = (0..=10).map(|i| -20.0 + 4.0 * i as f64).collect();
    let oracle = OraclePredictor { n_noise_draws: 1_000 };
    let nn = NetworkPredictor { params: network };
    let kinds = ConstellationKind::STANDARD;
    let predictors: [&dyn Predictor; 3] = [&oracle, &nn, &JensenPredictor];
    let points = ergodic_curve(&grid, 100, 2, &kinds, &predictors, 81)?;
    let value = |method: &str, snr: f64, k: ConstellationKind| {
        points
            .iter()
            .find(|p| p.method == method && p.snr_db == snr && p.constellation == k)
            .map(|p| p.mean_mi)
            .unwrap_or(f64::NAN)
    };
    let nn_name = nn.name();
    let mut worst_gap: f64 = 0.0;
    let mut overshoot = (f64::NEG_INFINITY, 0.0);
    for &snr in &grid {
        for k in kinds {
            worst_gap = worst_gap.max((value("oracle", snr, k) - value(&nn_name, snr, k)).abs());
        }
        let over = value("jensen", snr, ConstellationKind::Qam16) - value("oracle", snr, ConstellationKind::Qam16);
        if snr > grid[0] && snr < grid[grid.len() - 1] && over > overshoot.0 {
            overshoot = (over, snr);
        }
    }
    Ok(Outcome::new(
        worst_gap <= 0.05 && overshoot.0 > 0.05,
        format!(
            "100 channels, 1000 draws, -20..20 dB step 4: max |oracle - NN| {worst_gap:.3} (<= 0.05), Jensen 16QAM overshoot {:.3} at {} dB (> 0.05)",
            overshoot.0, overshoot.1
        ),
    ))
}

fn angle_shape() -> Result<Outcome> {
    let thetas = [0.0, FRAC_PI_2 / 2.0, FRAC_PI_2];
    let phis: Vec<f64> = (1..=16).map(|j| -std::f64::consts::PI + std::f64::consts::TAU * j as f64 / 16.0).collect();
    let s = angle_sweep(2.0, &thetas, &phis, ConstellationKind::Qpsk, 4_000, 91)?;
    let gap = s.row_mean(2) - s.row_mean(0);
    let se = s.max_std_error();
    let (r0, r2) = (s.ripple(0), s.ripple(2));
    Ok(Outcome::new(
        gap - 3.0 * se > 0.2 && r0 > r2,
        format!("gamma=2 QPSK: MI(pi/2) - MI(0) = {gap:.3} (> 0.2 + 3se, se {se:.1e}); ripple at 0 {r0:.3} > ripple at pi/2 {r2:.3}"),
    ))
}

fn multi_antenna(nt4: &LabeledDataset, nt8: &LabeledDataset) -> Result<Outcome> {
    let cfg = TrainConfig {
        n_hidden: 20,
        restarts: 3,
        ..TrainConfig::default()
    };
    let r4 = multi_antenna_experiment(nt4, FeatureOption::Multi4, &cfg)?;
    let r8 = multi_antenna_experiment(nt8, FeatureOption::Quant8(5), &cfg)?;
    let pass = r4.test.global_mse <= 2e-3 && r8.test.global_mse <= 1e-3 && r4.feature_len == 16 && r8.feature_len == 18;
    Ok(Outcome::new(
        pass,
        format!(
            "N=20, 3 restarts: Nt=4 test MSE {:.3e} (<= 2e-3), {} features; Nt=8 Q=5 test MSE {:.3e} (<= 1e-3), {} features",
            r4.test.global_mse, r4.feature_len, r8.test.global_mse, r8.feature_len
        ),
    ))
}

fn record(results: &mut Vec<(usize, &'static str, Outcome)>, id: usize, name: &'static str, outcome: Result<Outcome>, started: Instant) {
    let outcome = outcome.unwrap_or_else(|e| Outcome::new(false, format!("error: {e}")));
    println!(
        "{} {id:>2} {name}: {} [{:.1?}]",
        if outcome.pass { "PASS" } else { "FAIL" },
        outcome.detail,
        started.elapsed()
    );
    results.push((id, name, outcome));
}

fn main() -> ExitCode {
    let scale = Scale::from_env();
    eprintln!("acceptance at {} scale", if scale.full { "full" } else { "desk" });
    let mut results = Vec::new();

    let t = Instant::now();
    record(&mut results, 1, "oracle sanity", oracle_sanity(), t);
    let t = Instant::now();
    record(&mut results, 2, "jensen limits", jensen_limits(), t);
    let t = Instant::now();
    record(&mut results, 6, "jacobian", jacobian_check(), t);
    let t = Instant::now();
    record(&mut results, 9, "angle sweep", angle_shape(), t);

    match dataset(&scale.nt2) {
        Ok(ds) => {
            let t = Instant::now();
            let jensen = jensen_accuracy(&ds);
            let jensen_mse = jensen.as_ref().map(|(_, m)| *m).unwrap_or(f64::NAN);
            record(&mut results, 3, "jensen accuracy", jensen.map(|(o, _)| o), t);
            let t = Instant::now();
            let nn = nn_accuracy(&ds, jensen_mse);
            let network = nn.as_ref().ok().map(|(_, p)| p.clone());
            record(&mut results, 4, "nn accuracy", nn.map(|(o, _)| o), t);
            let t = Instant::now();
            record(&mut results, 5, "feature ablation", ablation(&ds), t);
            let t = Instant::now();
            record(&mut results, 7, "complexity", complexity(&ds), t);
            let t = Instant::now();
            let erg = match &network {
                Some(p) => ergodic(p),
                None => Err(smmi::error::Error::Model("no trained network".into())),
            };
            record(&mut results, 8, "ergodic curves", erg, t);
        }
        Err(e) => {
            for (id, name) in [(3, "jensen accuracy"), (4, "nn accuracy"), (5, "feature ablation"), (7, "complexity"), (8, "ergodic curves")] {
                record(&mut results, id, name, Err(smmi::error::Error::Model(format!("dataset: {e}"))), Instant::now());
            }
        }
    }

    let t = Instant::now();
    let multi = dataset(&scale.nt4).and_then(|d4| dataset(&scale.nt8).and_then(|d8| multi_antenna(&d4, &d8)));
    record(&mut results, 10, "multi-antenna", multi, t);

    results.sort_by_key(|r| r.0);
    let passed = results.iter().filter(|r| r.2.pass).count();
    let gaps: Vec<usize> = results.iter().filter(|r| !r.2.pass && r.2.known_gap).map(|r| r.0).collect();
    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass && !r.2.known_gap).map(|r| r.0).collect();
    println!(
        "acceptance: {passed}/{} passed; known gaps {gaps:?}; unexpected failures {failed:?}",
        results.len()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
