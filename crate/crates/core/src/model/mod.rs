//! The parallel CNN + BiLSTM murmur classifier.
//!
//! The CNN branch reads a `1 x 65 x 61` log spectrogram, the BiLSTM branch a
//! `398 x 13` MFCC sequence; their 128-wide embeddings are concatenated and
//! passed through two ReLU layers and a two-way softmax. Either branch can be
//! trained on its own (the head then sees a single 128-vector).

mod batch;
mod checkpoint;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use batch::{Batch, InputScaling};

use crate::features::{CepstrogramFeature, SpectrogramFeature};
use crate::nn::{glorot_uniform, softmax, Adam, BatchNormState, Graph, LstmParams, Mode, Tensor, Var};
use crate::{Error, Result};

/// Which branches feed the classification head.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branches {
    #[default]
    Full,
    CnnOnly,
    BilstmOnly,
}

impl Branches {
    pub const ALL: [Branches; 3] = [Branches::Full, Branches::CnnOnly, Branches::BilstmOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            Branches::Full => "full",
            Branches::CnnOnly => "cnn-only",
            Branches::BilstmOnly => "bilstm-only",
        }
    }

    pub fn uses_cnn(self) -> bool {
        self != Branches::BilstmOnly
    }

    pub fn uses_rnn(self) -> bool {
        self != Branches::CnnOnly
    }

    /// Row label used in reports.
    pub fn display_name(self) -> &'static str {
        match self {
            Branches::Full => "CNN+BiLSTM",
            Branches::CnnOnly => "CNN",
            Branches::BilstmOnly => "BiLSTM",
        }
    }
}

impl fmt::Display for Branches {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Branches {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Branches::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| Error::Argument(format!("unknown mode {s:?} (expected full, cnn-only or bilstm-only)")))
    }
}

/// Architecture hyperparameters. Serialized into every checkpoint so a
/// saved model is self-describing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub branches: Branches,
    pub conv_channels: [usize; 3],
    pub cnn_units: usize,
    pub lstm_layers: usize,
    pub lstm_hidden: usize,
    pub rnn_units: usize,
    pub head_units: [usize; 2],
    pub dropout_keep: f64,
    pub l2_lambda: f64,
    /// How the recurrent sequence is reduced to one vector.
    pub readout: String,
}

pub const READOUT: &str = "concat(forward state at last step, backward state at first step)";

impl Default for Topology {
    fn default() -> Self {
        Topology {
            branches: Branches::Full,
            conv_channels: [4, 8, 16],
            cnn_units: 128,
            lstm_layers: 2,
            lstm_hidden: 128,
            rnn_units: 128,
            head_units: [256, 128],
            dropout_keep: 0.8,
            l2_lambda: 1e-4,
            readout: READOUT.to_string(),
        }
    }
}

impl Topology {
    pub fn with_branches(branches: Branches) -> Self {
        Topology {
            branches,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = self.conv_channels.iter().all(|&c| c > 0)
            && self.cnn_units > 0
            && self.lstm_layers > 0
            && self.lstm_hidden > 0
            && self.rnn_units > 0
            && self.head_units.iter().all(|&u| u > 0);
        if !positive {
            return Err(Error::Config("all layer sizes must be positive".into()));
        }
        if !(self.dropout_keep > 0.0 && self.dropout_keep <= 1.0) {
            return Err(Error::Config(format!("dropout keep {} outside (0, 1]", self.dropout_keep)));
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return Err(Error::Config(format!("l2 lambda {} must be finite and >= 0", self.l2_lambda)));
        }
        if self.readout != READOUT {
            return Err(Error::Config(format!("unsupported readout {:?}", self.readout)));
        }
        Ok(())
    }

    /// Flattened CNN feature width: two 2x2 pools over the 65 x 61 input.
    pub fn flatten_width(&self) -> usize {
        let (h, w) = (SpectrogramFeature::ROWS / 4, SpectrogramFeature::COLS / 4);
        self.conv_channels[2] * h * w
    }

    fn head_input(&self) -> usize {
        match self.branches {
            Branches::Full => self.cnn_units + self.rnn_units,
            Branches::CnnOnly => self.cnn_units,
            Branches::BilstmOnly => self.rnn_units,
        }
    }

    /// `(name, shape, init, penalized)` for every trainable array, in a
    /// fixed order.
    fn layout(&self) -> Vec<ParamSpec> {
        let mut out = Vec::new();
        let mut push = |name: String, shape: Vec<usize>, init: Init, l2: bool| {
            out.push(ParamSpec { name, shape, init, l2 })
        };
        if self.branches.uses_cnn() {
            let mut in_c = 1;
            for (i, &c) in self.conv_channels.iter().enumerate() {
                let n = i + 1;
                push(format!("cnn.conv{n}.kernel"), vec![c, in_c, 3, 3], Init::Glorot(in_c * 9, c * 9), true);
                push(format!("cnn.conv{n}.bias"), vec![c], Init::Zero, false);
                push(format!("cnn.bn{n}.gamma"), vec![c], Init::One, false);
                push(format!("cnn.bn{n}.beta"), vec![c], Init::Zero, false);
                in_c = c;
            }
            let f = self.flatten_width();
            push("cnn.fc.weight".into(), vec![f, self.cnn_units], Init::Glorot(f, self.cnn_units), true);
            push("cnn.fc.bias".into(), vec![self.cnn_units], Init::Zero, false);
        }
        if self.branches.uses_rnn() {
            let h = self.lstm_hidden;
            let mut input = CepstrogramFeature::ROWS;
            for layer in 1..=self.lstm_layers {
                for dir in ["fwd", "bwd"] {
                    let p = format!("rnn.lstm{layer}.{dir}");
                    push(format!("{p}.w"), vec![input, 4 * h], Init::Lstm, false);
                    push(format!("{p}.u"), vec![h, 4 * h], Init::Lstm, false);
                    push(format!("{p}.b"), vec![4 * h], Init::Lstm, false);
                }
                input = 2 * h;
            }
            push("rnn.fc.weight".into(), vec![2 * h, self.rnn_units], Init::Glorot(2 * h, self.rnn_units), false);
            push("rnn.fc.bias".into(), vec![self.rnn_units], Init::Zero, false);
        }
        let dims = [self.head_input(), self.head_units[0], self.head_units[1], 2];
        for (name, pair) in ["fc1", "fc2", "out"].iter().zip(dims.windows(2)) {
            push(format!("head.{name}.weight"), pair.to_vec(), Init::Glorot(pair[0], pair[1]), false);
            push(format!("head.{name}.bias"), vec![pair[1]], Init::Zero, false);
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
enum Init {
    Zero,
    One,
    Glorot(usize, usize),
    /// Filled per direction by [`LstmParams::init`].
    Lstm,
}

#[derive(Debug, Clone)]
struct ParamSpec {
    name: String,
    shape: Vec<usize>,
    init: Init,
    l2: bool,
}

/// Loss and accuracy of one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub correct: usize,
    pub batch: usize,
}

/// All trainable arrays plus batch-norm running statistics and the fixed
/// input scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    topology: Topology,
    names: Vec<String>,
    tensors: Vec<Tensor>,
    l2: Vec<bool>,
    index: BTreeMap<String, usize>,
    pub bn: Vec<BatchNormState>,
    pub scaling: InputScaling,
    pub seed: u64,
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases, unit BN scale, LSTM forget bias 1.
    pub fn new(topology: Topology, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::build(topology, seed, |spec, rng_cache: &mut BTreeMap<String, LstmParams>| {
            match spec.init {
                Init::Zero => Tensor::zeros(spec.shape.clone()),
                Init::One => Tensor::filled(spec.shape.clone(), 1.0),
                Init::Glorot(fan_in, fan_out) => glorot_uniform(spec.shape.clone(), fan_in, fan_out, &mut rng),
                Init::Lstm => {
                    let (prefix, part) = spec.name.rsplit_once('.').expect("lstm names have a suffix");
                    let p = rng_cache.entry(prefix.to_string()).or_insert_with(|| {
                        let (input, four_h) = (spec.shape[0], spec.shape[1]);
                        LstmParams::init(input, four_h / 4, &mut rng)
                    });
                    match part {
                        "w" => p.w.clone(),
                        "u" => p.u.clone(),
                        _ => p.b.clone(),
                    }
                }
            }
        })
    }

    /// Every array zero (BN scale included).
    pub fn zeros(topology: Topology) -> Result<Self> {
        Self::build(topology, 0, |spec, _| Tensor::zeros(spec.shape.clone()))
    }

    fn build(
        topology: Topology,
        seed: u64,
        mut init: impl FnMut(&ParamSpec, &mut BTreeMap<String, LstmParams>) -> Tensor,
    ) -> Result<Self> {
        topology.validate()?;
        let layout = topology.layout();
        let mut lstm_cache = BTreeMap::new();
        let tensors: Vec<Tensor> = layout.iter().map(|s| init(s, &mut lstm_cache)).collect();
        let names: Vec<String> = layout.iter().map(|s| s.name.clone()).collect();
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        let bn = if topology.branches.uses_cnn() {
            topology.conv_channels.iter().map(|&c| BatchNormState::new(c)).collect()
        } else {
            Vec::new()
        };
        Ok(ModelParams {
            l2: layout.iter().map(|s| s.l2).collect(),
            topology,
            names,
            tensors,
            index,
            bn,
            scaling: InputScaling::identity(),
            seed,
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).map(|&i| &mut self.tensors[i])
    }

    /// Number of trainable scalars; depends on the topology only.
    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Names of the arrays included in the L2 penalty.
    pub fn penalized(&self) -> impl Iterator<Item = &str> {
        self.names.iter().zip(&self.l2).filter(|(_, &p)| p).map(|(n, _)| n.as_str())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    /// `lambda * sum(w^2)` over the convolution kernels and the CNN dense weights.
    pub fn l2_penalty(&self) -> f64 {
        let s: f64 = self
            .tensors
            .iter()
            .zip(&self.l2)
            .filter(|(_, &p)| p)
            .map(|(t, _)| t.data().iter().map(|w| w * w).sum::<f64>())
            .sum();
        self.topology.l2_lambda * s
    }

    /// Registers every array on `g`; trainable arrays become tracked leaves.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Vec<Var> {
        self.tensors
            .iter()
            .map(|t| if trainable { g.param(t.clone()) } else { g.input(t.clone()) })
            .collect()
    }

    fn var(&self, vars: &[Var], name: &str) -> Var {
        vars[self.index[name]]
    }

    fn cnn_graph(&self, g: &mut Graph, vars: &[Var], spec: Var, mode: Mode, bn: &mut [BatchNormState]) -> Result<Var> {
        let s = g.shape(spec);
        if s.len() != 4 || s[1..] != [1, SpectrogramFeature::ROWS, SpectrogramFeature::COLS] {
            return Err(Error::Shape(format!(
                "cnn branch expects [batch, 1, {}, {}], got {s:?}",
                SpectrogramFeature::ROWS,
                SpectrogramFeature::COLS
            )));
        }
        let mut x = spec;
        for (i, state) in bn.iter_mut().enumerate() {
            let n = i + 1;
            x = g.conv3x3(x, self.var(vars, &format!("cnn.conv{n}.kernel")), self.var(vars, &format!("cnn.conv{n}.bias")))?;
            x = g.batchnorm(x, self.var(vars, &format!("cnn.bn{n}.gamma")), self.var(vars, &format!("cnn.bn{n}.beta")), state, mode)?;
            x = g.relu(x);
            if n < 3 {
                x = g.maxpool2(x)?;
            }
        }
        let x = g.flatten(x)?;
        let x = g.dense(x, self.var(vars, "cnn.fc.weight"), self.var(vars, "cnn.fc.bias"))?;
        Ok(g.relu(x))
    }

    fn rnn_graph(&self, g: &mut Graph, vars: &[Var], ceps: Var, mode: Mode, rng: &mut impl Rng) -> Result<Var> {
        let s = g.shape(ceps).to_vec();
        if s.len() != 3 || s[1..] != [CepstrogramFeature::COLS, CepstrogramFeature::ROWS] {
            return Err(Error::Shape(format!(
                "bilstm branch expects [batch, {}, {}], got {s:?}",
                CepstrogramFeature::COLS,
                CepstrogramFeature::ROWS
            )));
        }
        let keep = self.topology.dropout_keep;
        let layers = self.topology.lstm_layers;
        let dir = |layer: usize, d: &str| -> [Var; 3] {
            let p = format!("rnn.lstm{layer}.{d}");
            ["w", "u", "b"].map(|k| self.var(vars, &format!("{p}.{k}")))
        };
        let mut x = ceps;
        for layer in 1..layers {
            x = g.bilstm(x, dir(layer, "fwd"), dir(layer, "bwd"))?;
            x = g.dropout(x, keep, mode, rng)?;
        }
        let [fw, fu, fb] = dir(layers, "fwd");
        let [bw, bu, bb] = dir(layers, "bwd");
        let fwd = g.lstm(x, fw, fu, fb, false)?;
        let bwd = g.lstm(x, bw, bu, bb, true)?;
        // Only the two read-out steps of the last layer are consumed, so its
        // per-step dropout is applied to them directly.
        let last = g.take_step(fwd, s[1] - 1)?;
        let first = g.take_step(bwd, 0)?;
        let last = g.dropout(last, keep, mode, rng)?;
        let first = g.dropout(first, keep, mode, rng)?;
        let summary = g.concat_last(last, first)?;
        let summary = g.dropout(summary, keep, mode, rng)?;
        let y = g.dense(summary, self.var(vars, "rnn.fc.weight"), self.var(vars, "rnn.fc.bias"))?;
        Ok(g.relu(y))
    }

    /// Logits of the whole network for already-scaled inputs.
    #[allow(clippy::too_many_arguments)]
    pub fn logits_graph(
        &self,
        g: &mut Graph,
        vars: &[Var],
        spec: Var,
        ceps: Var,
        mode: Mode,
        bn: &mut [BatchNormState],
        rng: &mut impl Rng,
    ) -> Result<Var> {
        let b = self.topology.branches;
        if b.uses_cnn() && b.uses_rnn() && g.shape(spec)[0] != g.shape(ceps)[0] {
            return Err(Error::Argument(format!(
                "feature batches disagree: {} spectrograms vs {} cepstrograms",
                g.shape(spec)[0],
                g.shape(ceps)[0]
            )));
        }
        let cnn = b.uses_cnn().then(|| self.cnn_graph(g, vars, spec, mode, bn)).transpose()?;
        let rnn = b.uses_rnn().then(|| self.rnn_graph(g, vars, ceps, mode, rng)).transpose()?;
        let mut x = match (cnn, rnn) {
            (Some(c), Some(r)) => g.concat_last(c, r)?,
            (Some(c), None) => c,
            (None, Some(r)) => r,
            (None, None) => unreachable!("at least one branch is active"),
        };
        for name in ["fc1", "fc2"] {
            x = g.dense(x, self.var(vars, &format!("head.{name}.weight")), self.var(vars, &format!("head.{name}.bias")))?;
            x = g.relu(x);
        }
        g.dense(x, self.var(vars, "head.out.weight"), self.var(vars, "head.out.bias"))
    }

    /// Mean cross-entropy plus the CNN L2 penalty.
    #[allow(clippy::too_many_arguments)]
    pub fn loss_graph(
        &self,
        g: &mut Graph,
        vars: &[Var],
        batch: &Batch,
        mode: Mode,
        bn: &mut [BatchNormState],
        rng: &mut impl Rng,
    ) -> Result<(Var, Var)> {
        let (spec, ceps) = self.inputs(g, batch)?;
        let logits = self.logits_graph(g, vars, spec, ceps, mode, bn, rng)?;
        let ce = g.softmax_xent(logits, &batch.one_hot())?;
        let penalized: Vec<Var> = vars.iter().zip(&self.l2).filter(|(_, &p)| p).map(|(v, _)| *v).collect();
        let pen = g.sum_squares(&penalized, self.topology.l2_lambda);
        Ok((g.add(ce, pen)?, logits))
    }

    fn inputs(&self, g: &mut Graph, batch: &Batch) -> Result<(Var, Var)> {
        let (spec, ceps) = self.scaling.apply(batch)?;
        Ok((g.input(spec), g.input(ceps)))
    }

    /// CNN embedding `[batch, 128]` of raw spectrograms `[batch, 1, 65, 61]`.
    /// Train mode updates the batch-norm running statistics.
    pub fn cnn_branch(&mut self, spec: &Tensor, mode: Mode) -> Result<Tensor> {
        if !self.topology.branches.uses_cnn() {
            return Err(Error::Argument("model has no CNN branch".into()));
        }
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let x = g.input(self.scaling.spec(spec));
        let mut bn = std::mem::take(&mut self.bn);
        let out = self.cnn_graph(&mut g, &vars, x, mode, &mut bn);
        self.bn = bn;
        Ok(g.value(out?).clone())
    }

    /// BiLSTM embedding `[batch, 128]` of raw cepstrograms `[batch, 398, 13]`.
    pub fn bilstm_branch(&self, ceps: &Tensor, mode: Mode, rng: &mut impl Rng) -> Result<Tensor> {
        if !self.topology.branches.uses_rnn() {
            return Err(Error::Argument("model has no BiLSTM branch".into()));
        }
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let x = g.input(self.scaling.ceps(ceps)?);
        let out = self.rnn_graph(&mut g, &vars, x, mode, rng)?;
        Ok(g.value(out).clone())
    }

    /// Class probabilities `[batch, 2]` (column 0 normal, column 1 murmur).
    pub fn forward(&mut self, batch: &Batch, mode: Mode, rng: &mut impl Rng) -> Result<Tensor> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let (spec, ceps) = self.inputs(&mut g, batch)?;
        let mut bn = std::mem::take(&mut self.bn);
        let logits = self.logits_graph(&mut g, &vars, spec, ceps, mode, &mut bn, rng);
        self.bn = bn;
        Ok(softmax(g.value(logits?)))
    }

    /// Inference-mode probabilities; leaves every statistic untouched.
    pub fn predict(&self, batch: &Batch) -> Result<Tensor> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let (spec, ceps) = self.inputs(&mut g, batch)?;
        let mut bn = self.bn.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let logits = self.logits_graph(&mut g, &vars, spec, ceps, Mode::Infer, &mut bn, &mut rng)?;
        Ok(softmax(g.value(logits)))
    }

    /// One Adam step on `batch`; every tensor is slot `i` of the optimizer.
    pub fn train_step(&mut self, batch: &Batch, opt: &mut Adam, rng: &mut impl Rng) -> Result<StepStats> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, true);
        let mut bn = self.bn.clone();
        let (loss, logits) = self.loss_graph(&mut g, &vars, batch, Mode::Train, &mut bn, rng)?;
        let loss_value = g.value(loss).item();
        if !loss_value.is_finite() {
            return Err(Error::Numerical(format!(
                "training loss became {loss_value} (learning rate {} may be too high, or inputs overflowed)",
                opt.lr
            )));
        }
        g.backward(loss)?;
        let correct = count_correct(g.value(logits), &batch.labels);
        opt.begin_step();
        for (i, v) in vars.iter().enumerate() {
            if let Some(grad) = g.grad(*v) {
                opt.update(i, self.tensors[i].data_mut(), grad);
            }
        }
        if !self.is_finite() {
            return Err(Error::Numerical("a parameter became non-finite after the update".into()));
        }
        self.bn = bn;
        Ok(StepStats {
            loss: loss_value,
            correct,
            batch: batch.len(),
        })
    }
}

/// Rows whose argmax (first index on ties) equals the label.
pub fn count_correct(scores: &Tensor, labels: &[usize]) -> usize {
    let k = scores.shape()[1];
    scores
        .data()
        .chunks_exact(k)
        .zip(labels)
        .filter(|(row, &l)| argmax(row) == l)
        .count()
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
