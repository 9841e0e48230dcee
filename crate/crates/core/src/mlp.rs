//! One-hidden-layer feedforward network with linear input/output scaling:
//!
//! ```text
//! a0 = g0 ∘ (x - x0) - 1
//! a1 = tanh(W1 a0 + b1)
//! a2 = W2 a1 + b2
//! y  = (a2 + 1) ⊘ g3 + y0
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::constellation::{Constellation, ConstellationKind};
use crate::error::{Error, Result};
use crate::features::{FeatureOption, FeatureVector};
use crate::ops::{self, OpCount};

pub const MODEL_FORMAT: &str = "smmi-mlp";
pub const MODEL_VERSION: u32 = 1;

/// What a network was trained for.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMeta {
    pub option: FeatureOption,
    pub constellations: Vec<ConstellationKind>,
    pub nt: usize,
}

impl ModelMeta {
    /// `log2(nt · M_k)` for every output.
    pub fn output_bounds(&self) -> Vec<f64> {
        self.constellations
            .iter()
            .map(|&k| ((self.nt * k.order()) as f64).log2())
            .collect()
    }

    pub fn constellation_set(&self) -> Vec<Constellation> {
        self.constellations.iter().map(|&k| Constellation::new(k)).collect()
    }
}

/// Affine maps taking training inputs and targets onto `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scalers {
    pub g0: Vec<f64>,
    pub x0: Vec<f64>,
    pub g3: Vec<f64>,
    pub y0: Vec<f64>,
}

fn min_max_gain(
    rows: &[Vec<f64>],
    width: usize,
    what: &'static str,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut lo = vec![f64::INFINITY; width];
    let mut hi = vec![f64::NEG_INFINITY; width];
    for (i, row) in rows.iter().enumerate() {
        if row.len() != width {
            return Err(Error::Dimension(format!(
                "{what} row {i} has {} columns, expected {width}",
                row.len()
            )));
        }
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::invalid(format!("{what} row {i} column {j} is not finite")));
            }
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }
    let mut gain = Vec::with_capacity(width);
    for j in 0..width {
        if !(hi[j] > lo[j]) {
            return Err(Error::ConstantColumn { what, column: j });
        }
        gain.push(2.0 / (hi[j] - lo[j]));
    }
    Ok((gain, lo))
}

/// Per-column min/max scaling: `x0 = min`, `g0 = 2 / (max - min)`, and the
/// same for targets.
pub fn fit_scalers(features: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<Scalers> {
    if features.is_empty() || targets.is_empty() {
        return Err(Error::invalid("cannot fit scalers on an empty training set"));
    }
    if features.len() != targets.len() {
        return Err(Error::Dimension(format!(
            "{} feature rows but {} target rows",
            features.len(),
            targets.len()
        )));
    }
    let (g0, x0) = min_max_gain(features, features[0].len(), "input")?;
    let (g3, y0) = min_max_gain(targets, targets[0].len(), "target")?;
    Ok(Scalers { g0, x0, g3, y0 })
}

impl Scalers {
    pub fn scale_input(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.g0)
            .zip(&self.x0)
            .map(|((v, g), o)| g * (v - o) - 1.0)
            .collect()
    }

    /// Maps a network activation back to bits per channel use.
    pub fn unscale_output(&self, a2: &[f64]) -> Vec<f64> {
        a2.iter()
            .zip(&self.g3)
            .zip(&self.y0)
            .map(|((a, g), o)| (a + 1.0) / g + o)
            .collect()
    }

    pub fn scale_target(&self, t: &[f64]) -> Vec<f64> {
        t.iter()
            .zip(&self.g3)
            .zip(&self.y0)
            .map(|((v, g), o)| g * (v - o) - 1.0)
            .collect()
    }
}

/// Network output: raw values and a copy clamped to `[0, log2(nt · M_k)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub raw: Vec<f64>,
    pub clamped: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub g0: Vec<f64>,
    pub x0: Vec<f64>,
    /// `N × F`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `K × N`, row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub g3: Vec<f64>,
    pub y0: Vec<f64>,
    pub meta: ModelMeta,
}

impl NetworkParams {
    /// Zero weights with the given scaling; dimensions come from the scalers.
    pub fn zeros(scalers: Scalers, n_hidden: usize, meta: ModelMeta) -> Result<Self> {
        let f = scalers.g0.len();
        let k = scalers.g3.len();
        let p = Self {
            g0: scalers.g0,
            x0: scalers.x0,
            w1: vec![0.0; n_hidden * f],
            b1: vec![0.0; n_hidden],
            w2: vec![0.0; k * n_hidden],
            b2: vec![0.0; k],
            g3: scalers.g3,
            y0: scalers.y0,
            meta,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn n_inputs(&self) -> usize {
        self.g0.len()
    }

    pub fn n_hidden(&self) -> usize {
        self.b1.len()
    }

    pub fn n_outputs(&self) -> usize {
        self.b2.len()
    }

    pub fn scalers(&self) -> Scalers {
        Scalers {
            g0: self.g0.clone(),
            x0: self.x0.clone(),
            g3: self.g3.clone(),
            y0: self.y0.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (f, n, k) = (self.n_inputs(), self.n_hidden(), self.n_outputs());
        let dims = [
            ("x0", self.x0.len(), f),
            ("w1", self.w1.len(), n * f),
            ("w2", self.w2.len(), k * n),
            ("g3", self.g3.len(), k),
            ("y0", self.y0.len(), k),
        ];
        for (name, got, want) in dims {
            if got != want {
                return Err(Error::Dimension(format!("{name} has {got} entries, expected {want}")));
            }
        }
        if f == 0 || n == 0 || k == 0 {
            return Err(Error::Dimension("network has an empty layer".into()));
        }
        let all = [&self.g0, &self.x0, &self.w1, &self.b1, &self.w2, &self.b2, &self.g3, &self.y0];
        if all.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::invalid("network parameters must be finite"));
        }
        if self.g0.iter().chain(&self.g3).any(|&g| !(g > 0.0)) {
            return Err(Error::invalid("scaling gains must be strictly positive"));
        }
        Ok(())
    }

    /// Checks that the layer sizes agree with the feature option and
    /// constellation list in the metadata.
    pub fn validate_meta(&self) -> Result<()> {
        let (f, k) = (self.n_inputs(), self.n_outputs());
        if self.meta.constellations.len() != k {
            return Err(Error::Dimension(format!(
                "{k} outputs but {} constellations in the metadata",
                self.meta.constellations.len()
            )));
        }
        if self.meta.option.len(self.meta.nt) != f {
            return Err(Error::Dimension(format!(
                "feature option {} yields {} inputs for {} antennas, network has {f}",
                self.meta.option,
                self.meta.option.len(self.meta.nt),
                self.meta.nt
            )));
        }
        Ok(())
    }

    /// Number of trainable parameters (`W1, b1, W2, b2`).
    pub fn n_trainable(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// Trainable parameters laid out as `[W1 (row-major), b1, W2 (row-major), b2]`.
    pub fn trainable(&self) -> Vec<f64> {
        [&self.w1[..], &self.b1, &self.w2, &self.b2].concat()
    }

    pub fn set_trainable(&mut self, theta: &[f64]) {
        assert_eq!(theta.len(), self.n_trainable());
        let (w1, rest) = theta.split_at(self.w1.len());
        let (b1, rest) = rest.split_at(self.b1.len());
        let (w2, b2) = rest.split_at(self.w2.len());
        self.w1.copy_from_slice(w1);
        self.b1.copy_from_slice(b1);
        self.w2.copy_from_slice(w2);
        self.b2.copy_from_slice(b2);
    }

    /// Forward pass without dimension checks. `hidden` receives `a1`, `out`
    /// receives `y` (unclamped).
    pub fn forward_into(&self, x: &[f64], a0: &mut [f64], hidden: &mut [f64], out: &mut [f64]) {
        let f = self.n_inputs();
        for j in 0..f {
            a0[j] = self.g0[j] * (x[j] - self.x0[j]) - 1.0;
        }
        for (i, h) in hidden.iter_mut().enumerate() {
            let row = &self.w1[i * f..(i + 1) * f];
            let z: f64 = row.iter().zip(a0.iter()).map(|(w, a)| w * a).sum::<f64>() + self.b1[i];
            *h = z.tanh();
        }
        let n = hidden.len();
        for (k, y) in out.iter_mut().enumerate() {
            let row = &self.w2[k * n..(k + 1) * n];
            let a2: f64 = row.iter().zip(hidden.iter()).map(|(w, a)| w * a).sum::<f64>() + self.b2[k];
            *y = (a2 + 1.0) / self.g3[k] + self.y0[k];
        }
        let c = self.static_op_count();
        ops::record(c.products, c.exp, c.log2, c.other);
    }

    /// Operations of one forward pass, excluding feature extraction.
    pub fn static_op_count(&self) -> OpCount {
        let (f, n, k) = (self.n_inputs() as u64, self.n_hidden() as u64, self.n_outputs() as u64);
        OpCount::new(f + n * f + k * n + k, n, 0, 0)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Prediction> {
        if x.len() != self.n_inputs() {
            return Err(Error::Dimension(format!(
                "network expects {} inputs, got {}",
                self.n_inputs(),
                x.len()
            )));
        }
        let mut a0 = vec![0.0; self.n_inputs()];
        let mut hidden = vec![0.0; self.n_hidden()];
        let mut raw = vec![0.0; self.n_outputs()];
        self.forward_into(x, &mut a0, &mut hidden, &mut raw);
        let clamped = raw
            .iter()
            .zip(self.meta.output_bounds())
            .map(|(y, hi)| y.clamp(0.0, hi))
            .collect();
        Ok(Prediction { raw, clamped })
    }

    pub fn predict(&self, features: &FeatureVector) -> Result<Prediction> {
        if features.option != self.meta.option {
            return Err(Error::invalid(format!(
                "model expects feature option {}, got {}",
                self.meta.option, features.option
            )));
        }
        self.forward(&features.values)
    }

    /// Upper bound on the Euclidean Lipschitz constant of `x ↦ y`, from
    /// Frobenius norms of the layer maps (tanh is 1-Lipschitz).
    pub fn lipschitz_bound(&self) -> f64 {
        let fro = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let inv_g3: Vec<f64> = self.g3.iter().map(|g| 1.0 / g).collect();
        max_abs(&inv_g3) * fro(&self.w2) * fro(&self.w1) * max_abs(&self.g0)
    }
}

/// On-disk model document. Weight matrices are row-major.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    feature_option: FeatureOption,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    quantiles: Option<usize>,
    nt: usize,
    constellations: Vec<ConstellationKind>,
    n_inputs: usize,
    n_hidden: usize,
    n_outputs: usize,
    g0: Vec<f64>,
    x0: Vec<f64>,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
    g3: Vec<f64>,
    y0: Vec<f64>,
}

pub fn model_to_string(params: &NetworkParams) -> Result<String> {
    params.validate()?;
    params.validate_meta()?;
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        feature_option: params.meta.option,
        quantiles: params.meta.option.quantiles(),
        nt: params.meta.nt,
        constellations: params.meta.constellations.clone(),
        n_inputs: params.n_inputs(),
        n_hidden: params.n_hidden(),
        n_outputs: params.n_outputs(),
        g0: params.g0.clone(),
        x0: params.x0.clone(),
        w1: params.w1.clone(),
        b1: params.b1.clone(),
        w2: params.w2.clone(),
        b2: params.b2.clone(),
        g3: params.g3.clone(),
        y0: params.y0.clone(),
    };
    let mut s = serde_json::to_string_pretty(&file)?;
    s.push('\n');
    Ok(s)
}

pub fn model_from_str(text: &str) -> Result<NetworkParams> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Model(e.to_string()))?;
    if file.format != MODEL_FORMAT {
        return Err(Error::Model(format!("unexpected format tag `{}`", file.format)));
    }
    if file.version != MODEL_VERSION {
        return Err(Error::Model(format!(
            "unsupported model version {} (this build reads {MODEL_VERSION})",
            file.version
        )));
    }
    let option = match (file.feature_option, file.quantiles) {
        (FeatureOption::Quant8(_), Some(q)) => FeatureOption::Quant8(q),
        (o, _) => o,
    };
    if file.b1.len() != file.n_hidden || file.g0.len() != file.n_inputs || file.b2.len() != file.n_outputs {
        return Err(Error::Model(format!(
            "declared shape {}x{}x{} does not match the stored arrays",
            file.n_inputs, file.n_hidden, file.n_outputs
        )));
    }
    let params = NetworkParams {
        g0: file.g0,
        x0: file.x0,
        w1: file.w1,
        b1: file.b1,
        w2: file.w2,
        b2: file.b2,
        g3: file.g3,
        y0: file.y0,
        meta: ModelMeta {
            option,
            constellations: file.constellations,
            nt: file.nt,
        },
    };
    params
        .validate()
        .and_then(|_| params.validate_meta())
        .map_err(|e| Error::Model(e.to_string()))?;
    Ok(params)
}

pub fn save_model(params: &NetworkParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_string(params)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<NetworkParams> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_str(&text)
}
