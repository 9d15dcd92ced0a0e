//! Full-batch training with Adam and early stopping, seeded multi-run
//! aggregation, and the character n-gram range sweep.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::corpus::{Corpus, Split};
use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::graph::{build_graph, HetGraph};
use crate::models::{build_model, loss, GraphModel, Mode, ModelConfig, ParamStore};
use crate::scalar::Scalar;
use crate::text_stats::{compute_stats, NgramSpec, StatsConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub runs: usize,
    pub optimizer: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.002,
            epochs: 200,
            patience: 20,
            seed: 0,
            runs: 10,
            optimizer: OptimizerKind::Adam,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_owned()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.epochs == 0 || self.patience == 0 || self.runs == 0 {
            return bad("epochs, patience and runs must be at least 1");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps <= 0.0 {
            return bad("adam betas must lie in [0,1) and eps must be positive");
        }
        Ok(())
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<S> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<Matrix<S>>,
    v: Vec<Matrix<S>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(params: &ParamStore<S>, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros = || params.values.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        Self {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn from_config(params: &ParamStore<S>, c: &TrainConfig) -> Self {
        Self::new(params, c.lr, c.beta1, c.beta2, c.eps)
    }

    pub fn timestep(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, params: &mut ParamStore<S>, grads: &[Matrix<S>]) -> Result<()> {
        for (name, g) in params.names.iter().zip(grads) {
            if !g.all_finite() {
                return Err(Error::NonFiniteGradient(name.clone()));
            }
        }
        self.t += 1;
        let (b1, b2) = (S::lit(self.beta1), S::lit(self.beta2));
        let c1 = S::one() - b1.powi(self.t);
        let c2 = S::one() - b2.powi(self.t);
        let (lr, eps) = (S::lit(self.lr), S::lit(self.eps));
        for ((p, g), (m, v)) in params.values.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let ps = p.as_mut_slice();
            let (ms, vs) = (m.as_mut_slice(), v.as_mut_slice());
            for (i, &gi) in g.as_slice().iter().enumerate() {
                ms[i] = b1 * ms[i] + (S::one() - b1) * gi;
                vs[i] = b2 * vs[i] + (S::one() - b2) * gi * gi;
                let m_hat = ms[i] / c1;
                let v_hat = vs[i] / c2;
                ps[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Validation-accuracy early stopping; ties go to the lower validation loss.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best_acc: f64,
    best_loss: f64,
    best_epoch: usize,
    waited: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best_acc: f64::NEG_INFINITY,
            best_loss: f64::INFINITY,
            best_epoch: 0,
            waited: 0,
        }
    }

    pub fn update(&mut self, epoch: usize, val_acc: f64, val_loss: f64) -> StopDecision {
        if val_acc > self.best_acc || (val_acc == self.best_acc && val_loss < self.best_loss) {
            self.best_acc = val_acc;
            self.best_loss = val_loss;
            self.best_epoch = epoch;
            self.waited = 0;
            return StopDecision::Improved;
        }
        self.waited += 1;
        if self.waited >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub test_acc: f64,
    pub wall_time_secs: f64,
    pub precision: String,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl TrainReport {
    pub fn last_epoch(&self) -> usize {
        self.epochs.last().map_or(0, |e| e.epoch)
    }
}

struct Splits {
    labels: Vec<usize>,
    train: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
}

fn splits(graph: &HetGraph) -> Result<Splits> {
    let s = Splits {
        labels: graph.class_ids(),
        train: graph.docs_in(Split::Train),
        val: graph.docs_in(Split::Val),
        test: graph.docs_in(Split::Test),
    };
    for (name, rows) in [("train", &s.train), ("val", &s.val), ("test", &s.test)] {
        if rows.is_empty() {
            return Err(Error::EmptySplit(name));
        }
    }
    Ok(s)
}

/// Logits in evaluation mode (no dropout).
pub fn predict<S: Scalar>(model: &dyn GraphModel<S>, params: &ParamStore<S>) -> Result<Matrix<S>> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape)?;
    let logits = model.forward(&mut tape, &vars, &mut Mode::Eval)?;
    Ok(tape.value(logits).clone())
}

/// `(mean cross-entropy, accuracy)` of `logits` over `rows`.
pub fn score<S: Scalar>(logits: &Matrix<S>, labels: &[usize], rows: &[usize]) -> Result<(f64, f64)> {
    if rows.is_empty() {
        return Err(Error::EmptyMask);
    }
    let pred = logits.argmax_rows();
    let mut correct = 0usize;
    let mut total = 0.0f64;
    for &r in rows {
        let row = logits.row(r);
        let m = row.iter().copied().fold(S::neg_infinity(), S::max).as_f64();
        let lse = m + row.iter().map(|x| (x.as_f64() - m).exp()).sum::<f64>().ln();
        total += lse - row[labels[r]].as_f64();
        correct += usize::from(pred[r] == labels[r]);
    }
    Ok((total / rows.len() as f64, correct as f64 / rows.len() as f64))
}

/// Trains `model` from a fresh seeded initialization and returns the report
/// with the best-validation parameters.
pub fn train_model<S: Scalar>(model: &dyn GraphModel<S>, config: &TrainConfig) -> Result<(TrainReport, ParamStore<S>)> {
    config.validate()?;
    let started = Instant::now();
    let sp = splits(model.graph())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = model.init_params(&mut rng);
    let mut adam = Adam::from_config(&params, config);
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best = params.clone();
    let mut epochs = Vec::new();

    for epoch in 1..=config.epochs {
        let mut tape = Tape::new();
        let vars = params.register(&mut tape)?;
        let logits = model.forward(&mut tape, &vars, &mut Mode::Train(&mut rng))?;
        let l = loss(&mut tape, logits, &sp.labels, &sp.train)?;
        let train_loss = tape.value(l)[(0, 0)].as_f64();
        if !train_loss.is_finite() {
            return Err(Error::Diverged { epoch, loss: train_loss });
        }
        let mut grads = tape.backward(l)?;
        let g: Vec<Matrix<S>> = vars
            .iter()
            .zip(&params.values)
            .map(|(&v, p)| grads.take(v).unwrap_or_else(|| Matrix::zeros(p.rows(), p.cols())))
            .collect();
        adam.step(&mut params, &g)?;

        let logits = predict(model, &params)?;
        let (val_loss, val_acc) = score(&logits, &sp.labels, &sp.val)?;
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_acc,
        });
        log::debug!("epoch {epoch}: train_loss={train_loss:.5} val_loss={val_loss:.5} val_acc={val_acc:.4}");
        match stopper.update(epoch, val_acc, val_loss) {
            StopDecision::Improved => best = params.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
    }

    let logits = predict(model, &best)?;
    let (_, test_acc) = score(&logits, &sp.labels, &sp.test)?;
    let best_val_acc = epochs[stopper.best_epoch() - 1].val_acc;
    let report = TrainReport {
        seed: config.seed,
        best_epoch: stopper.best_epoch(),
        best_val_acc,
        test_acc,
        epochs,
        wall_time_secs: started.elapsed().as_secs_f64(),
        precision: S::NAME.to_owned(),
        model: model.config().clone(),
        train: config.clone(),
    };
    Ok((report, best))
}

pub fn train<S: Scalar>(graph: &HetGraph, model: &ModelConfig, config: &TrainConfig) -> Result<TrainReport> {
    let m = build_model::<S>(graph, model)?;
    train_model(m.as_ref(), config).map(|(r, _)| r)
}

/// Population mean and standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mean: f64,
    pub std: f64,
    pub reports: Vec<TrainReport>,
}

impl RunSummary {
    /// Test accuracy as `mean±std` in percent.
    pub fn display(&self) -> String {
        format!("{:.2}±{:.2}", 100.0 * self.mean, 100.0 * self.std)
    }
}

/// Trains `config.runs` models with seeds `seed, seed+1, …` on up to
/// `threads` workers and aggregates test accuracy.
pub fn run_many<S: Scalar>(graph: &HetGraph, model: &ModelConfig, config: &TrainConfig, threads: usize) -> Result<RunSummary> {
    config.validate()?;
    let m = build_model::<S>(graph, model)?;
    run_many_with(m.as_ref(), config, threads)
}

pub fn run_many_with<S: Scalar>(model: &dyn GraphModel<S>, config: &TrainConfig, threads: usize) -> Result<RunSummary> {
    let runs = config.runs;
    let results: Mutex<Vec<Option<Result<TrainReport>>>> = Mutex::new((0..runs).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        if i >= runs {
            break;
        }
        let cfg = TrainConfig {
            seed: config.seed + i as u64,
            ..config.clone()
        };
        let r = train_model(model, &cfg).map(|(r, _)| r);
        results.lock().expect("result slot")[i] = Some(r);
    };
    let workers = threads.clamp(1, runs);
    if workers == 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(worker);
            }
        });
    }
    let reports = results
        .into_inner()
        .expect("result slots")
        .into_iter()
        .map(|r| r.expect("every run executed"))
        .collect::<Result<Vec<_>>>()?;
    let accs: Vec<f64> = reports.iter().map(|r| r.test_acc).collect();
    let (mean, std) = mean_std(&accs);
    Ok(RunSummary { mean, std, reports })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub n_lo: usize,
    pub n_hi: usize,
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

/// Upper-triangular grid of mean test accuracy over character n-gram ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub lo_values: Vec<usize>,
    pub hi_values: Vec<usize>,
    pub cells: Vec<SweepCell>,
}

impl SweepGrid {
    pub fn cell(&self, lo: usize, hi: usize) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.n_lo == lo && c.n_hi == hi)
    }

    /// Tab-separated grid: a header row of `n_hi` values, then one row per
    /// `n_lo` with percentages to one decimal and blank lower-triangle cells.
    pub fn to_table(&self, title: &str) -> String {
        let mut out = String::new();
        out.push_str(title);
        for hi in &self.hi_values {
            let _ = write!(out, "\t{hi}");
        }
        out.push('\n');
        for &lo in &self.lo_values {
            let _ = write!(out, "{lo}");
            for &hi in &self.hi_values {
                match self.cell(lo, hi) {
                    Some(c) => {
                        let _ = write!(out, "\t{:.1}", 100.0 * c.mean);
                    }
                    None => out.push('\t'),
                }
            }
            out.push('\n');
        }
        out
    }

    /// One JSON object per populated cell.
    pub fn to_json_lines(&self) -> String {
        self.cells
            .iter()
            .map(|c| serde_json::to_string(c).expect("cell serializes") + "\n")
            .collect()
    }
}

/// Rebuilds the graph for every `n_lo ≤ n_hi` character n-gram range and
/// trains `train.runs` seeds on each.
pub fn sweep_char_ngrams<S: Scalar>(
    corpus: &Corpus,
    stats: &StatsConfig,
    model: &ModelConfig,
    train: &TrainConfig,
    lo_values: &[usize],
    hi_values: &[usize],
    threads: usize,
) -> Result<SweepGrid> {
    let min_freq = stats.char_ngrams.map_or(StatsConfig::default().char_ngrams.map_or(1, |s| s.min_freq), |s| s.min_freq);
    let mut cells = Vec::new();
    for &lo in lo_values {
        for &hi in hi_values {
            if lo > hi {
                continue;
            }
            let cfg = StatsConfig {
                char_ngrams: Some(NgramSpec::char(lo, hi, min_freq)),
                ..stats.clone()
            };
            let graph = build_graph(corpus, &compute_stats(corpus, &cfg)?)?;
            let summary = run_many::<S>(&graph, model, train, threads)?;
            log::info!("sweep cell {lo}:{hi} -> {}", summary.display());
            cells.push(SweepCell {
                n_lo: lo,
                n_hi: hi,
                mean: summary.mean,
                std: summary.std,
                runs: summary.reports.len(),
            });
        }
    }
    Ok(SweepGrid {
        lo_values: lo_values.to_vec(),
        hi_values: hi_values.to_vec(),
        cells,
    })
}

/// Trained parameters with the configuration needed to rebuild the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedModel<S> {
    pub model: ModelConfig,
    pub classes: Vec<String>,
    pub params: ParamStore<S>,
}

impl<T: Scalar> SavedModel<T> {
    /// Parameters cast to `S`, after checking they fit `model`'s graph.
    pub fn params_for<S: Scalar>(&self, model: &dyn GraphModel<S>) -> Result<ParamStore<S>> {
        if model.graph().classes() != self.classes {
            return Err(Error::GraphMismatch(format!(
                "graph classes {:?} differ from the model's {:?}",
                model.graph().classes(),
                self.classes
            )));
        }
        let expected = model.init_params(&mut ChaCha8Rng::seed_from_u64(0));
        let fits = expected.names == self.params.names
            && expected.values.len() == self.params.values.len()
            && expected.values.iter().zip(&self.params.values).all(|(a, b)| a.shape() == b.shape());
        if !fits {
            return Err(Error::GraphMismatch("saved parameters do not fit this graph".into()));
        }
        Ok(ParamStore {
            names: self.params.names.clone(),
            values: self.params.values.iter().map(|m| m.cast()).collect(),
        })
    }
}
