//! Labelled datasets: channel realizations with Monte Carlo MI targets.
//!
//! File layout (UTF-8, one record per line):
//!
//! ```text
//! # {"format":"smmi-dataset","version":1,...,"columns":[...]}
//! row_id,seed,gamma_db,h00_re,h00_im,h01_re,...,mi_qpsk,...,se_qpsk,...,split
//! ```
//!
//! The first line is `#` followed by a JSON header. Every following line is
//! one row; `H` entries are row-major with real and imaginary parts
//! interleaved, `mi_<c>` are the Monte Carlo estimates in bits per channel use
//! and `se_<c>` their standard errors. Floats use the shortest representation
//! that parses back to the same value, so write→read→write is byte-identical.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{sample_rayleigh_channel, sample_snr_db, ChannelMatrix, ChannelRealization, SUPPORTED_ANTENNAS};
use crate::constellation::{Constellation, ConstellationKind};
use crate::error::{Error, Result};
use crate::features::{extract, FeatureOption};
use crate::oracle::mi_finite;
use crate::rng::derive_seed;
use crate::trainer::Samples;

pub const DATASET_FORMAT: &str = "smmi-dataset";
pub const DATASET_VERSION: u32 = 1;
pub const GENERATOR: &str = "smmi mi_finite v1";

/// Rows generated between file flushes.
const WRITE_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::invalid(format!("unknown split `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub format: String,
    pub version: u32,
    pub nt: usize,
    pub constellations: Vec<ConstellationKind>,
    pub n_noise_draws: usize,
    pub snr_range_db: [f64; 2],
    pub split_fractions: [f64; 3],
    pub seed: u64,
    pub n_samples: usize,
    pub generator: String,
    pub columns: Vec<String>,
}

fn column_names(nt: usize, constellations: &[ConstellationKind]) -> Vec<String> {
    let mut cols = vec!["row_id".to_string(), "seed".into(), "gamma_db".into()];
    for r in 0..nt {
        for c in 0..nt {
            cols.push(format!("h{r}{c}_re"));
            cols.push(format!("h{r}{c}_im"));
        }
    }
    cols.extend(constellations.iter().map(|k| format!("mi_{k}")));
    cols.extend(constellations.iter().map(|k| format!("se_{k}")));
    cols.push("split".into());
    cols
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRow {
    pub row_id: usize,
    pub seed: u64,
    pub gamma_db: f64,
    pub h: ChannelMatrix,
    /// Monte Carlo MI per constellation, unclamped.
    pub targets: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub split: Split,
}

impl DatasetRow {
    pub fn realization(&self) -> Result<ChannelRealization> {
        ChannelRealization::from_db(self.h.clone(), self.gamma_db)
    }

    fn write_line(&self, out: &mut String) {
        let _ = write!(out, "{},{},{}", self.row_id, self.seed, self.gamma_db);
        for v in self.h.to_interleaved() {
            let _ = write!(out, ",{v}");
        }
        for v in self.targets.iter().chain(&self.std_errors) {
            let _ = write!(out, ",{v}");
        }
        let _ = writeln!(out, ",{}", self.split.name());
    }
}

/// Parameters of a generation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub nt: usize,
    pub n_samples: usize,
    pub n_noise_draws: usize,
    pub snr_range_db: [f64; 2],
    pub constellations: Vec<ConstellationKind>,
    pub split_fractions: [f64; 3],
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            nt: 2,
            n_samples: 20_000,
            n_noise_draws: 2_000,
            snr_range_db: [-20.0, 20.0],
            constellations: ConstellationKind::STANDARD.to_vec(),
            split_fractions: [0.70, 0.15, 0.15],
            seed: 1,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if !SUPPORTED_ANTENNAS.contains(&self.nt) {
            return Err(Error::invalid(format!("unsupported antenna count {}", self.nt)));
        }
        if self.n_samples == 0 || self.n_noise_draws == 0 || self.constellations.is_empty() {
            return Err(Error::invalid("samples, noise draws and constellations must be nonempty"));
        }
        let [lo, hi] = self.snr_range_db;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::invalid(format!("bad SNR range [{lo}, {hi}]")));
        }
        let f = self.split_fractions;
        if f.iter().any(|x| !(0.0..=1.0).contains(x)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("split fractions {f:?} must be in [0, 1] and sum to 1")));
        }
        let [tr, va, _] = split_sizes(self.n_samples, f);
        if tr + va > self.n_samples {
            return Err(Error::invalid("split fractions round to more rows than requested"));
        }
        Ok(())
    }

    pub fn header(&self) -> DatasetHeader {
        DatasetHeader {
            format: DATASET_FORMAT.into(),
            version: DATASET_VERSION,
            nt: self.nt,
            constellations: self.constellations.clone(),
            n_noise_draws: self.n_noise_draws,
            snr_range_db: self.snr_range_db,
            split_fractions: self.split_fractions,
            seed: self.seed,
            n_samples: self.n_samples,
            generator: GENERATOR.into(),
            columns: column_names(self.nt, &self.constellations),
        }
    }

    fn from_header(h: &DatasetHeader) -> Self {
        Self {
            nt: h.nt,
            n_samples: h.n_samples,
            n_noise_draws: h.n_noise_draws,
            snr_range_db: h.snr_range_db,
            constellations: h.constellations.clone(),
            split_fractions: h.split_fractions,
            seed: h.seed,
        }
    }
}

/// Row counts `[train, val, test]`: the first two rounded, the rest to test.
pub fn split_sizes(n: usize, fractions: [f64; 3]) -> [usize; 3] {
    let tr = (fractions[0] * n as f64).round() as usize;
    let va = (fractions[1] * n as f64).round() as usize;
    [tr, va, n.saturating_sub(tr + va)]
}

fn split_of(row_id: usize, sizes: [usize; 3]) -> Split {
    if row_id < sizes[0] {
        Split::Train
    } else if row_id < sizes[0] + sizes[1] {
        Split::Val
    } else {
        Split::Test
    }
}

/// Generates one row; depends only on `(cfg.seed, row_id)` and the config.
pub fn generate_row(cfg: &GenConfig, row_id: usize) -> Result<DatasetRow> {
    let seed = derive_seed(cfg.seed, &[row_id as u64]);
    let h = sample_rayleigh_channel(derive_seed(seed, &[0]), cfg.nt)?;
    let gamma_db = sample_snr_db(derive_seed(seed, &[1]), cfg.snr_range_db[0], cfg.snr_range_db[1])?;
    let channel = ChannelRealization::from_db(h.clone(), gamma_db)?;
    let mut targets = Vec::with_capacity(cfg.constellations.len());
    let mut std_errors = Vec::with_capacity(cfg.constellations.len());
    for (j, &kind) in cfg.constellations.iter().enumerate() {
        let est = mi_finite(&channel, &Constellation::new(kind), cfg.n_noise_draws, derive_seed(seed, &[2 + j as u64]))?;
        targets.push(est.value);
        std_errors.push(est.std_error);
    }
    Ok(DatasetRow {
        row_id,
        seed,
        gamma_db,
        h,
        targets,
        std_errors,
        split: split_of(row_id, split_sizes(cfg.n_samples, cfg.split_fractions)),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub header: DatasetHeader,
    pub rows: Vec<DatasetRow>,
}

impl LabeledDataset {
    /// Generates the whole dataset in memory.
    pub fn generate(cfg: &GenConfig) -> Result<Self> {
        cfg.validate()?;
        let rows = (0..cfg.n_samples)
            .into_par_iter()
            .map(|i| generate_row(cfg, i))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { header: cfg.header(), rows })
    }

    pub fn nt(&self) -> usize {
        self.header.nt
    }

    pub fn constellations(&self) -> &[ConstellationKind] {
        &self.header.constellations
    }

    pub fn rows_in(&self, split: Split) -> impl Iterator<Item = &DatasetRow> {
        self.rows.iter().filter(move |r| r.split == split)
    }

    /// A dataset holding only the rows of `split`, header unchanged.
    pub fn subset(&self, split: Split) -> Self {
        Self {
            header: self.header.clone(),
            rows: self.rows_in(split).cloned().collect(),
        }
    }

    /// Feature vectors and targets of one split.
    pub fn samples(&self, option: FeatureOption, split: Split) -> Result<Samples> {
        option.check_antennas(self.nt())?;
        let rows: Vec<&DatasetRow> = self.rows_in(split).collect();
        let inputs = rows
            .par_iter()
            .map(|r| Ok(extract(option, r.realization()?.gamma, &r.h)?.values))
            .collect::<Result<Vec<_>>>()?;
        let targets = rows.iter().map(|r| r.targets.clone()).collect();
        Samples::new(inputs, targets)
    }

    /// Mean squared Monte Carlo standard error of the targets: the MSE a
    /// perfect predictor of the true MI would show against these labels.
    pub fn noise_floor(&self, split: Split) -> f64 {
        let (sum, count) = self
            .rows_in(split)
            .flat_map(|r| r.std_errors.iter())
            .fold((0.0, 0usize), |(s, c), se| (s + se * se, c + 1));
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }

    /// Checks row ids, split assignment and target ranges.
    pub fn check(&self) -> Result<()> {
        let cfg = GenConfig::from_header(&self.header);
        let sizes = split_sizes(cfg.n_samples, cfg.split_fractions);
        let bounds: Vec<f64> = self
            .constellations()
            .iter()
            .map(|k| ((self.nt() * k.order()) as f64).log2())
            .collect();
        for (i, r) in self.rows.iter().enumerate() {
            let line = i + 2;
            let bad = |msg: String| Err(Error::Dataset { line, msg });
            if r.row_id != i {
                return bad(format!("row_id {} out of sequence (expected {i})", r.row_id));
            }
            if r.split != split_of(i, sizes) {
                return bad(format!("row {i} is in split {} contrary to the header fractions", r.split.name()));
            }
            for (t, hi) in r.targets.iter().zip(&bounds) {
                if !(*t >= -0.05 && *t <= hi + 0.05) {
                    return bad(format!("target {t} outside [0, {hi}] beyond Monte Carlo tolerance"));
                }
            }
        }
        Ok(())
    }

    pub fn header_line(&self) -> Result<String> {
        Ok(format!("# {}\n", serde_json::to_string(&self.header)?))
    }

    pub fn to_text(&self) -> Result<String> {
        let mut out = self.header_line()?;
        for r in &self.rows {
            r.write_line(&mut out);
        }
        Ok(out)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()?).map_err(|e| Error::io(path, e))
    }

    /// Parses a complete dataset; a truncated last line is an error.
    pub fn parse(text: &str) -> Result<Self> {
        let (ds, rest) = Self::parse_prefix(text)?;
        if !rest.is_empty() {
            return Err(Error::Dataset {
                line: ds.rows.len() + 2,
                msg: "incomplete final line".into(),
            });
        }
        Ok(ds)
    }

    /// Parses the header and all newline-terminated rows; returns the
    /// unterminated remainder.
    fn parse_prefix(text: &str) -> Result<(Self, &str)> {
        let (first, mut body) = text.split_once('\n').ok_or(Error::Dataset {
            line: 1,
            msg: "missing header line".into(),
        })?;
        let json = first.strip_prefix('#').ok_or(Error::Dataset {
            line: 1,
            msg: "header must start with `#`".into(),
        })?;
        let header: DatasetHeader = serde_json::from_str(json.trim()).map_err(|e| Error::Dataset {
            line: 1,
            msg: e.to_string(),
        })?;
        if header.format != DATASET_FORMAT || header.version != DATASET_VERSION {
            return Err(Error::Dataset {
                line: 1,
                msg: format!("unsupported dataset {} v{}", header.format, header.version),
            });
        }
        if header.columns != column_names(header.nt, &header.constellations) {
            return Err(Error::Dataset {
                line: 1,
                msg: "column list does not match antennas and constellations".into(),
            });
        }
        let mut rows = Vec::new();
        while let Some((line, rest)) = body.split_once('\n') {
            rows.push(parse_row(&header, line, rows.len() + 2)?);
            body = rest;
        }
        Ok((Self { header, rows }, body))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ds = Self::parse(&text)?;
        ds.check()?;
        Ok(ds)
    }
}

fn parse_row(header: &DatasetHeader, line: &str, line_no: usize) -> Result<DatasetRow> {
    let err = |msg: String| Error::Dataset { line: line_no, msg };
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != header.columns.len() {
        return Err(err(format!("{} fields, expected {}", fields.len(), header.columns.len())));
    }
    let num = |i: usize| -> Result<f64> {
        let v: f64 = fields[i].parse().map_err(|_| err(format!("bad number `{}` in {}", fields[i], header.columns[i])))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(err(format!("non-finite value in {}", header.columns[i])))
        }
    };
    let nt = header.nt;
    let k = header.constellations.len();
    let nh = 2 * nt * nt;
    let row_id = fields[0].parse().map_err(|_| err(format!("bad row_id `{}`", fields[0])))?;
    let seed = fields[1].parse().map_err(|_| err(format!("bad seed `{}`", fields[1])))?;
    let h_vals = (3..3 + nh).map(num).collect::<Result<Vec<_>>>()?;
    let h = ChannelMatrix::from_interleaved(nt, nt, &h_vals).map_err(|e| err(e.to_string()))?;
    let targets = (3 + nh..3 + nh + k).map(num).collect::<Result<Vec<_>>>()?;
    let std_errors = (3 + nh + k..3 + nh + 2 * k).map(num).collect::<Result<Vec<_>>>()?;
    Ok(DatasetRow {
        row_id,
        seed,
        gamma_db: num(2)?,
        h,
        targets,
        std_errors,
        split: fields[fields.len() - 1].parse().map_err(|e: Error| err(e.to_string()))?,
    })
}

/// Generates `cfg` into `out`, resuming from any complete rows already there
/// (the existing header must describe the same run). Rows are appended in
/// `row_id` order; `progress` receives `(rows_done, n_samples)` after every
/// flush.
pub fn gen_dataset_with_progress(
    cfg: &GenConfig,
    out: impl AsRef<Path>,
    mut progress: impl FnMut(usize, usize),
) -> Result<LabeledDataset> {
    cfg.validate()?;
    let path = out.as_ref();
    let header = cfg.header();
    let mut rows = Vec::new();
    if path.exists() {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if !text.is_empty() {
            let (existing, _) = LabeledDataset::parse_prefix(&text)?;
            if existing.header != header {
                return Err(Error::invalid(format!(
                    "{} holds a dataset with different parameters; refusing to overwrite",
                    path.display()
                )));
            }
            rows = existing.rows;
            rows.truncate(cfg.n_samples);
        }
    }
    let mut ds = LabeledDataset { header, rows };
    ds.check()?;

    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(ds.to_text()?.as_bytes()).map_err(io)?;
    w.flush().map_err(io)?;
    progress(ds.rows.len(), cfg.n_samples);

    while ds.rows.len() < cfg.n_samples {
        let start = ds.rows.len();
        let end = (start + WRITE_CHUNK * rayon::current_num_threads()).min(cfg.n_samples);
        let chunk = (start..end)
            .into_par_iter()
            .map(|i| generate_row(cfg, i))
            .collect::<Result<Vec<_>>>()?;
        let mut text = String::new();
        for r in &chunk {
            r.write_line(&mut text);
        }
        w.write_all(text.as_bytes()).map_err(io)?;
        w.flush().map_err(io)?;
        ds.rows.extend(chunk);
        progress(ds.rows.len(), cfg.n_samples);
    }
    Ok(ds)
}

pub fn gen_dataset(cfg: &GenConfig, out: impl AsRef<Path>) -> Result<LabeledDataset> {
    gen_dataset_with_progress(cfg, out, |_, _| {})
}
