//! Command-line front end. Every subcommand writes its artifact to `--out`
//! (when it has one) and prints a one-line summary to stdout.
//!
//! Exit codes: 0 success, 2 usage or invalid input, 3 data error (missing or
//! malformed files), 4 numerical failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::channel::{db_to_linear, ChannelMatrix, ChannelRealization};
use crate::constellation::{Constellation, ConstellationKind};
use crate::dataset::{gen_dataset, GenConfig, LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::eval::{evaluate, ConstantPredictor, JensenPredictor, NetworkPredictor, OraclePredictor, Predictor};
use crate::experiments::{
    ablation_csv, angle_sweep, complexity_csv, complexity_report, ergodic_csv, ergodic_curve, feature_ablation,
    linspace, multi_antenna_experiment,
};
use crate::features::{FeatureOption, DEFAULT_QUANTILES};
use crate::jensen::jensen_mi_all;
use crate::mlp::{load_model, save_model, ModelMeta, NetworkParams, Scalers};
use crate::trainer::{initialized_network, train, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "smmi", version, about = "Mutual information of spatial modulation links: Monte Carlo ground truth, Jensen approximation and neural estimators")]
struct Cli {
    /// Worker threads (0 = all cores). Results do not depend on this.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a labelled dataset of channels and Monte Carlo MI targets.
    GenDataset(GenArgs),
    /// Train a network on a dataset with Levenberg–Marquardt.
    Train(TrainArgs),
    /// Evaluate a method on one split of a dataset.
    Eval(EvalArgs),
    /// Predict the MI of one channel realization.
    Predict(PredictArgs),
    /// Ergodic MI versus SNR for the oracle, Jensen and optionally a network.
    Ergodic(ErgodicArgs),
    /// MI over the (θ_H, φ) grid of unit-column 2×2 channels.
    AngleSweep(AngleArgs),
    /// Global MSE per feature option and hidden-layer size.
    Ablation(AblationArgs),
    /// Operation counts and wall time of Jensen versus a network.
    Bench(BenchArgs),
    /// Train and test a network for a four- or eight-antenna dataset.
    Multi(MultiArgs),
}

fn parse_kind(s: &str) -> std::result::Result<ConstellationKind, String> {
    s.trim().parse::<ConstellationKind>().map_err(|e| e.to_string())
}

fn parse_option(s: &str) -> std::result::Result<FeatureOption, String> {
    s.parse::<FeatureOption>().map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Transmit (= receive) antennas: 2, 4 or 8.
    #[arg(long, default_value_t = 2)]
    nt: usize,
    /// Number of channel realizations.
    #[arg(long = "n", default_value_t = 20_000)]
    n_samples: usize,
    /// Noise draws per Monte Carlo estimate.
    #[arg(long, default_value_t = 2_000)]
    draws: usize,
    #[arg(long, default_value_t = -20.0, allow_negative_numbers = true)]
    snr_min: f64,
    #[arg(long, default_value_t = 20.0, allow_negative_numbers = true)]
    snr_max: f64,
    /// Comma-separated constellations.
    #[arg(long, default_value = "qpsk,8psk,16qam", value_delimiter = ',', value_parser = parse_kind)]
    constellations: Vec<ConstellationKind>,
    /// Train, validation and test fractions.
    #[arg(long, default_value = "0.7,0.15,0.15", value_delimiter = ',', num_args = 3)]
    split: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output file; an existing partial file from the same parameters is resumed.
    #[arg(long, default_value = "dataset.csv")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Feature option: i, ii, iii, iv, v, multi4, quant8[:Q] or raw.
    #[arg(long, default_value = "v", value_parser = parse_option)]
    option: FeatureOption,
    /// Quantile count for quant8.
    #[arg(long)]
    quantiles: Option<usize>,
    /// TOML file with TrainConfig keys; explicit flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Hidden neurons [default: 10].
    #[arg(long)]
    hidden: Option<usize>,
    /// Independent initialisations [default: 10].
    #[arg(long)]
    restarts: Option<usize>,
    /// Epoch limit per restart [default: 1000].
    #[arg(long)]
    max_epochs: Option<usize>,
    /// [default: 1]
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
    /// Per-epoch training history (CSV).
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// jensen, nn, oracle or constant.
    #[arg(long, default_value = "nn")]
    method: String,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    dataset: PathBuf,
    /// train, val or test.
    #[arg(long, default_value = "test")]
    split: String,
    /// Noise draws for the oracle method.
    #[arg(long, default_value_t = 2_000)]
    draws: usize,
    /// Value returned by the constant method.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    constant: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    /// Trained model; without it the Jensen approximation is used.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    gamma_db: f64,
    /// Channel matrix as 2·Nt·Nr reals, row-major with re/im interleaved.
    #[arg(long = "h", value_delimiter = ',', num_args = 1.., allow_negative_numbers = true, conflicts_with = "h_file")]
    h: Vec<f64>,
    /// File holding the reals of `--h`, separated by commas or whitespace.
    #[arg(long)]
    h_file: Option<PathBuf>,
    /// Constellations for the Jensen method.
    #[arg(long, default_value = "qpsk,8psk,16qam", value_delimiter = ',', value_parser = parse_kind)]
    constellations: Vec<ConstellationKind>,
}

#[derive(Debug, Args)]
struct ErgodicArgs {
    #[arg(long, default_value_t = 2)]
    nt: usize,
    #[arg(long, default_value_t = 100)]
    channels: usize,
    /// Noise draws per oracle estimate.
    #[arg(long, default_value_t = 1_000)]
    draws: usize,
    #[arg(long, default_value_t = -20.0, allow_negative_numbers = true)]
    snr_min: f64,
    #[arg(long, default_value_t = 20.0, allow_negative_numbers = true)]
    snr_max: f64,
    #[arg(long, default_value_t = 4.0)]
    snr_step: f64,
    /// Adds a network curve.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value = "qpsk,8psk,16qam", value_delimiter = ',', value_parser = parse_kind)]
    constellations: Vec<ConstellationKind>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "ergodic.csv")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AngleArgs {
    /// Linear SNR.
    #[arg(long, default_value_t = 2.0)]
    gamma: f64,
    #[arg(long, default_value_t = 19)]
    n_theta: usize,
    #[arg(long, default_value_t = 37)]
    n_phi: usize,
    #[arg(long, default_value = "qpsk")]
    constellation: ConstellationKind,
    #[arg(long, default_value_t = 2_000)]
    draws: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "angle_sweep.csv")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AblationArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "i,ii,iii,iv,v,raw", value_delimiter = ',', value_parser = parse_option)]
    options: Vec<FeatureOption>,
    #[arg(long, default_value = "10,20", value_delimiter = ',')]
    hidden: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    restarts: usize,
    #[arg(long, default_value_t = 1000)]
    max_epochs: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "ablation.csv")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Network to time; defaults to an untrained option v network.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Hidden neurons of the default network.
    #[arg(long, default_value_t = 20)]
    hidden: usize,
    #[arg(long, default_value_t = 7_500)]
    evals: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MultiArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// multi4 for four antennas, quant8 for eight; chosen from the dataset if omitted.
    #[arg(long, value_parser = parse_option)]
    option: Option<FeatureOption>,
    #[arg(long, default_value_t = DEFAULT_QUANTILES)]
    quantiles: usize,
    #[arg(long, default_value_t = 20)]
    hidden: usize,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long, default_value_t = 1000)]
    max_epochs: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "model.json")]
    model_out: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Process exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidInput(_) | Error::Dimension(_) => 2,
        Error::Numerical(_) | Error::Singular { .. } => 4,
        Error::ConstantColumn { .. } | Error::Model(_) | Error::Dataset { .. } | Error::Io { .. } | Error::Json(_) => 3,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return 4;
        }
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn dispatch(cmd: Command) -> Result<String> {
    match cmd {
        Command::GenDataset(a) => gen(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Predict(a) => predict_cmd(a),
        Command::Ergodic(a) => ergodic_cmd(a),
        Command::AngleSweep(a) => angle_cmd(a),
        Command::Ablation(a) => ablation_cmd(a),
        Command::Bench(a) => bench_cmd(a),
        Command::Multi(a) => multi_cmd(a),
    }
}

fn gen(a: GenArgs) -> Result<String> {
    let cfg = GenConfig {
        nt: a.nt,
        n_samples: a.n_samples,
        n_noise_draws: a.draws,
        snr_range_db: [a.snr_min, a.snr_max],
        constellations: a.constellations,
        split_fractions: [a.split[0], a.split[1], a.split[2]],
        seed: a.seed,
    };
    let ds = gen_dataset(&cfg, &a.out)?;
    let counts: Vec<usize> = Split::ALL.iter().map(|&s| ds.rows_in(s).count()).collect();
    Ok(format!(
        "wrote {} rows to {} (train {}, val {}, test {})",
        ds.rows.len(),
        a.out.display(),
        counts[0],
        counts[1],
        counts[2]
    ))
}

fn with_quantiles(option: FeatureOption, q: Option<usize>) -> FeatureOption {
    match (option, q) {
        (FeatureOption::Quant8(_), Some(q)) => FeatureOption::Quant8(q),
        (o, _) => o,
    }
}

fn train_cmd(a: TrainArgs) -> Result<String> {
    let mut cfg = match &a.config {
        Some(p) => TrainConfig::from_file(p)?,
        None => TrainConfig::default(),
    };
    if let Some(v) = a.hidden {
        cfg.n_hidden = v;
    }
    if let Some(v) = a.restarts {
        cfg.restarts = v;
    }
    if let Some(v) = a.max_epochs {
        cfg.max_epochs = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    cfg.validate()?;
    let ds = LabeledDataset::read(&a.dataset)?;
    let option = with_quantiles(a.option, a.quantiles);
    let (params, report) = train(&ds, option, &cfg)?;
    save_model(&params, &a.out)?;
    if let Some(h) = &a.history {
        write(h, &report.history_csv())?;
    }
    Ok(format!(
        "trained option {option} N={} ({} restarts, best restart {} after {} epochs): train MSE {:.3e}, val MSE {:.3e}, test MSE {}; model written to {}",
        cfg.n_hidden,
        cfg.restarts,
        report.selected_restart,
        report.best_epoch,
        report.train_mse,
        report.val_mse,
        report.test_mse.map(|v| format!("{v:.3e}")).unwrap_or_else(|| "n/a".into()),
        a.out.display()
    ))
}

fn eval_cmd(a: EvalArgs) -> Result<String> {
    let split: Split = a.split.parse()?;
    let ds = LabeledDataset::read(&a.dataset)?;
    let model = match (&a.method[..], &a.model) {
        ("nn", Some(p)) => Some(load_model(p)?),
        ("nn", None) => return Err(Error::invalid("--method nn needs --model")),
        _ => None,
    };
    let report = match &a.method[..] {
        "jensen" => evaluate(&JensenPredictor, &ds, split)?,
        "oracle" => evaluate(&OraclePredictor { n_noise_draws: a.draws }, &ds, split)?,
        "constant" => evaluate(&ConstantPredictor(a.constant), &ds, split)?,
        "nn" => {
            let params = model.as_ref().expect("loaded above");
            if params.meta.nt != ds.nt() {
                return Err(Error::invalid(format!(
                    "model is for {} antennas, dataset has {}",
                    params.meta.nt,
                    ds.nt()
                )));
            }
            evaluate(&NetworkPredictor { params }, &ds, split)?
        }
        m => return Err(Error::invalid(format!("unknown method `{m}` (jensen, nn, oracle, constant)"))),
    };
    let table = report.to_csv();
    if let Some(out) = &a.out {
        write(out, &table)?;
    }
    print!("{table}");
    Ok(format!(
        "{} on {} {} rows: global MSE {:.4e} (label noise floor {:.2e})",
        report.method,
        report.n_samples,
        split.name(),
        report.global_mse,
        report.noise_floor
    ))
}

fn read_reals(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| Error::Dataset { line: 1, msg: format!("bad number `{t}`") }))
        .collect()
}

fn channel_from_reals(reals: &[f64]) -> Result<ChannelMatrix> {
    let nt = match reals.len() {
        8 => 2,
        32 => 4,
        128 => 8,
        n => {
            return Err(Error::invalid(format!(
                "H needs 8, 32 or 128 reals (2·Nt·Nr for Nt = 2, 4, 8), got {n}"
            )))
        }
    };
    ChannelMatrix::from_interleaved(nt, nt, reals)
}

fn predict_cmd(a: PredictArgs) -> Result<String> {
    let reals = match &a.h_file {
        Some(p) => read_reals(p)?,
        None => a.h.clone(),
    };
    if reals.is_empty() {
        return Err(Error::invalid("give the channel with --h or --h-file"));
    }
    let h = channel_from_reals(&reals)?;
    let ch = ChannelRealization::new(h, db_to_linear(a.gamma_db))?;
    let (kinds, values) = match &a.model {
        Some(p) => {
            let params = load_model(p)?;
            if params.meta.nt != ch.nt() {
                return Err(Error::invalid(format!(
                    "model is for {} antennas, channel has {}",
                    params.meta.nt,
                    ch.nt()
                )));
            }
            let cs = params.meta.constellation_set();
            let v = NetworkPredictor { params: &params }.predict(&ch, &cs, 0)?;
            (params.meta.constellations.clone(), v)
        }
        None => {
            let cs: Vec<Constellation> = a.constellations.iter().map(|&k| Constellation::new(k)).collect();
            (a.constellations.clone(), jensen_mi_all(&ch, &cs))
        }
    };
    Ok(kinds
        .iter()
        .zip(&values)
        .map(|(k, v)| format!("{k}={v:.6}"))
        .collect::<Vec<_>>()
        .join(" "))
}

fn ergodic_cmd(a: ErgodicArgs) -> Result<String> {
    if !(a.snr_step > 0.0) || a.snr_max < a.snr_min {
        return Err(Error::invalid("need snr_step > 0 and snr_max >= snr_min"));
    }
    let n = ((a.snr_max - a.snr_min) / a.snr_step + 1e-9).floor() as usize + 1;
    let grid = linspace(a.snr_min, a.snr_min + a.snr_step * (n - 1) as f64, n);
    let model = a.model.as_ref().map(load_model).transpose()?;
    let oracle = OraclePredictor { n_noise_draws: a.draws };
    let mut preds: Vec<&dyn Predictor> = vec![&oracle, &JensenPredictor];
    let nn;
    if let Some(p) = &model {
        if p.meta.constellations != a.constellations || p.meta.nt != a.nt {
            return Err(Error::invalid("model antennas/constellations differ from the requested curve"));
        }
        nn = NetworkPredictor { params: p };
        preds.push(&nn);
    }
    let pts = ergodic_curve(&grid, a.channels, a.nt, &a.constellations, &preds, a.seed)?;
    write(&a.out, &ergodic_csv(&pts))?;
    Ok(format!(
        "{} SNR points x {} methods x {} constellations over {} channels written to {}",
        grid.len(),
        preds.len(),
        a.constellations.len(),
        a.channels,
        a.out.display()
    ))
}

fn angle_cmd(a: AngleArgs) -> Result<String> {
    use std::f64::consts::{FRAC_PI_2, PI};
    if a.n_theta == 0 || a.n_phi == 0 {
        return Err(Error::invalid("grids need at least one point"));
    }
    let thetas = linspace(0.0, FRAC_PI_2, a.n_theta);
    let phis = linspace(-PI, PI, a.n_phi + 1)[1..].to_vec();
    let s = angle_sweep(a.gamma, &thetas, &phis, a.constellation, a.draws, a.seed)?;
    write(&a.out, &s.to_csv())?;
    let (i, j) = s.argmax();
    Ok(format!(
        "{}x{} grid written to {}; maximum {:.4} at theta_h={:.4}, phi={:.4}",
        a.n_theta,
        a.n_phi,
        a.out.display(),
        s.values[i][j].value,
        thetas[i],
        phis[j]
    ))
}

fn ablation_cmd(a: AblationArgs) -> Result<String> {
    let ds = LabeledDataset::read(&a.dataset)?;
    let base = TrainConfig {
        restarts: a.restarts,
        max_epochs: a.max_epochs,
        seed: a.seed,
        ..TrainConfig::default()
    };
    let rows = feature_ablation(&ds, &a.options, &a.hidden, &base)?;
    let table = ablation_csv(&rows);
    write(&a.out, &table)?;
    print!("{table}");
    Ok(format!("{} cells written to {}", rows.len(), a.out.display()))
}

/// Untrained option v network with identity input scaling.
fn default_bench_network(n_hidden: usize, seed: u64) -> Result<NetworkParams> {
    let option = FeatureOption::V;
    let f = option.len(2);
    let scalers = Scalers {
        g0: vec![1.0; f],
        x0: vec![-1.0; f],
        g3: vec![1.0; 3],
        y0: vec![0.0; 3],
    };
    let meta = ModelMeta {
        option,
        constellations: ConstellationKind::STANDARD.to_vec(),
        nt: 2,
    };
    initialized_network(scalers, n_hidden, meta, seed)
}

fn bench_cmd(a: BenchArgs) -> Result<String> {
    let params = match &a.model {
        Some(p) => load_model(p)?,
        None => default_bench_network(a.hidden, a.seed)?,
    };
    let rows = complexity_report(&params, a.evals, a.seed)?;
    let table = complexity_csv(&rows);
    if let Some(out) = &a.out {
        write(out, &table)?;
    }
    print!("{table}");
    let ratio = rows[0].wall_time.as_secs_f64() / rows[1].wall_time.as_secs_f64().max(1e-12);
    Ok(format!("jensen/network wall-time ratio over {} evaluations: {ratio:.1}", a.evals))
}

fn multi_cmd(a: MultiArgs) -> Result<String> {
    let ds = LabeledDataset::read(&a.dataset)?;
    let option = match a.option {
        Some(o) => with_quantiles(o, Some(a.quantiles)),
        None => match ds.nt() {
            4 => FeatureOption::Multi4,
            8 => FeatureOption::Quant8(a.quantiles),
            n => return Err(Error::invalid(format!("multi expects a 4- or 8-antenna dataset, got {n}"))),
        },
    };
    let cfg = TrainConfig {
        n_hidden: a.hidden,
        restarts: a.restarts,
        max_epochs: a.max_epochs,
        seed: a.seed,
        ..TrainConfig::default()
    };
    let r = multi_antenna_experiment(&ds, option, &cfg)?;
    save_model(&r.params, &a.model_out)?;
    let table = r.test.to_csv();
    if let Some(out) = &a.out {
        write(out, &table)?;
    }
    print!("{table}");
    Ok(format!(
        "{}x{} option {option} ({} features): test MSE {:.4e}; model written to {}",
        ds.nt(),
        ds.nt(),
        r.feature_len,
        r.test.global_mse,
        a.model_out.display()
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
        let defaults: [&[&str]; 3] = [
            &["smmi", "gen-dataset"],
            &["smmi", "ergodic"],
            &["smmi", "predict", "--gamma-db", "0"],
        ];
        for args in defaults {
            assert!(Cli::try_parse_from(args).is_ok(), "{args:?}");
        }
    }

    #[test]
    fn exit_codes_by_error_kind() {
        assert_eq!(exit_code(&Error::invalid("x")), 2);
        assert_eq!(exit_code(&Error::Model("x".into())), 3);
        assert_eq!(exit_code(&Error::Singular { lambda: 1.0 }), 4);
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["smmi", "no-such-command"]), 2);
        assert_eq!(run(["smmi", "gen-dataset", "--bogus"]), 2);
        assert_eq!(run(["smmi", "--help"]), 0);
    }

    #[test]
    fn h_length_selects_antennas() {
        assert_eq!(channel_from_reals(&[0.0; 32]).unwrap().nt(), 4);
        assert!(channel_from_reals(&[0.0; 7]).is_err());
    }
}
