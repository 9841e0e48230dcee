use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use smmi::dataset::{LabeledDataset, Split};
use smmi::eval::{evaluate, JensenPredictor};

fn smmi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smmi")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn gen(dir: &Path, name: &str, extra: &[&str]) -> String {
    let out = dir.join(name);
    let out = out.to_str().unwrap().to_owned();
    let mut args = vec!["gen-dataset", "--nt", "2", "--n", "100", "--draws", "200", "--seed", "7", "--out", &out];
    args.extend_from_slice(extra);
    let o = smmi(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn gen_dataset_twice_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen(dir.path(), "a.csv", &[]);
    let b = gen(dir.path(), "b.csv", &["--threads", "1"]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let ds = LabeledDataset::read(&a).unwrap();
    let counts: Vec<usize> = Split::ALL.iter().map(|&s| ds.rows_in(s).count()).collect();
    assert_eq!(counts, vec![70, 15, 15]);
}

#[test]
fn eval_jensen_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let path = gen(dir.path(), "d.csv", &[]);
    let table = dir.path().join("report.csv");
    let o = smmi(&["eval", "--method", "jensen", "--dataset", &path, "--out", table.to_str().unwrap()]);
    assert!(o.status.success());
    let ds = LabeledDataset::read(&path).unwrap();
    // everything but the wall time column
    let strip = |t: &str| t.lines().map(|l| l.rsplit_once(',').map_or(l, |p| p.0).to_owned()).collect::<Vec<_>>();
    let want = strip(&evaluate(&JensenPredictor, &ds, Split::Test).unwrap().to_csv());
    assert_eq!(strip(&fs::read_to_string(&table).unwrap()), want);
    assert_eq!(strip(&stdout(&o))[..want.len()], want[..]);
}

#[test]
fn predict_with_trained_model_stays_in_range() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "d.csv", &[]);
    let model = dir.path().join("m.json");
    let model = model.to_str().unwrap();
    let config = dir.path().join("train.toml");
    fs::write(&config, "n_hidden = 4\nrestarts = 1\nmax_epochs = 20\n").unwrap();
    let o = smmi(&["train", "--dataset", &data, "--config", config.to_str().unwrap(), "--out", model]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let h = "0.3,-1.1,0.8,0.2,-0.5,0.9,1.2,-0.4";
    for gamma_db in ["-20", "0", "10", "20"] {
        let o = smmi(&["predict", "--model", model, "--gamma-db", gamma_db, "--h", h]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let line = stdout(&o);
        let values: Vec<f64> = line.split_whitespace().map(|kv| kv.split('=').nth(1).unwrap().parse().unwrap()).collect();
        assert_eq!(values.len(), 3);
        for (v, max) in values.iter().zip([3.0, 4.0, 5.0]) {
            assert!((0.0..=max).contains(v), "{line}");
        }
    }
}

#[test]
fn predict_without_model_uses_jensen() {
    let o = smmi(&["predict", "--gamma-db", "-200", "--h", "1,0,0,0,0,0,1,0"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "qpsk=0.000000 8psk=0.000000 16qam=0.000000");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(smmi(&["gen-dataset", "--bogus"]).status.code(), Some(2));
    assert_eq!(smmi(&["predict", "--gamma-db", "0", "--h", "1,0,0"]).status.code(), Some(2));
    let missing = dir.path().join("nope.csv");
    assert_eq!(smmi(&["eval", "--method", "jensen", "--dataset", missing.to_str().unwrap()]).status.code(), Some(3));

    let nt4 = dir.path().join("nt4.csv");
    let o = smmi(&["gen-dataset", "--nt", "4", "--n", "20", "--draws", "20", "--out", nt4.to_str().unwrap()]);
    assert!(o.status.success());
    let o = smmi(&["train", "--dataset", nt4.to_str().unwrap(), "--option", "v", "--restarts", "1", "--max-epochs", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("antennas"));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "not a dataset\n").unwrap();
    assert_eq!(smmi(&["eval", "--method", "jensen", "--dataset", bad.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn help_lists_subcommands() {
    let o = smmi(&["--help"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for cmd in ["gen-dataset", "train", "eval", "predict", "ergodic", "angle-sweep", "ablation", "bench", "multi"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn experiment_commands_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_owned();
    let data = gen(dir.path(), "d.csv", &[]);
    let nt4 = p("nt4.csv");
    let o = smmi(&["gen-dataset", "--nt", "4", "--n", "60", "--draws", "20", "--out", &nt4]);
    assert!(o.status.success());
    let model = p("m.json");

    let runs: [(&str, Vec<&str>, &str); 5] = [
        ("ergodic.csv", vec!["ergodic", "--channels", "3", "--draws", "20", "--snr-step", "20"], "snr_db,method"),
        ("angle.csv", vec!["angle-sweep", "--n-theta", "3", "--n-phi", "4", "--draws", "20"], "theta_h,phi"),
        ("ablation.csv", vec!["ablation", "--dataset", &data, "--options", "i,v", "--hidden", "3", "--restarts", "1", "--max-epochs", "3"], "option,n_hidden"),
        ("bench.csv", vec!["bench", "--evals", "50"], "method,products"),
        ("multi.csv", vec!["multi", "--dataset", &nt4, "--hidden", "3", "--restarts", "1", "--max-epochs", "3", "--model-out", &model], "method,constellation"),
    ];
    for (file, mut args, header) in runs {
        let out = p(file);
        args.extend(["--out", &out]);
        let o = smmi(&args);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        let text = fs::read_to_string(&out).unwrap();
        assert!(text.starts_with(header), "{file}: {text}");
        assert!(text.lines().count() > 1);
    }
}
