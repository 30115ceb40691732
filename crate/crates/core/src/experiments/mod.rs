//! Synthetic structured-vs-unstructured extrapolation experiments.
//!
//! Features `x = (x₁, x₂)` are drawn from `N(0, Σ)` with
//! `Σ = [[I, γO], [γOᵀ, I]]` for a random orthonormal `O`; source and target
//! use independent `O_P`, `O_Q`, so their block marginals match while the
//! joints differ. Noiseless labels come from a random structured network
//! `f₁*(x₁) + f₂*(x₂)`. A structured model `f₁(x₁) + f₂(x₂)` and an
//! unstructured model `f(x)` of twice the width are trained by SGD with
//! momentum on fresh source batches and compared on source (ID) and target
//! (OOD) squared error.

mod mlp;

pub use mlp::{embed_structured, Mlp2};
use mlp::BatchCache;

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::gaussian::{mc_ratio_estimate, GaussianSampler, McRatio};
use crate::numerics::{self, SymMatrix};
use crate::rng::{substream, BoxMuller};

const STREAM_COV_P: u64 = 0;
const STREAM_COV_Q: u64 = 1;
const STREAM_TRUTH: u64 = 2;
const STREAM_INIT: u64 = 3;
const STREAM_BATCHES: u64 = 4;
const STREAM_EVAL_P: u64 = 5;
const STREAM_EVAL_Q: u64 = 6;

pub const THREADS_ENV: &str = "EXTRAP_CERT_THREADS";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reg {
    None,
    L1(f64),
    L2(f64),
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reg::None => write!(f, "none"),
            Reg::L1(l) => write!(f, "l1:{l:?}"),
            Reg::L2(l) => write!(f, "l2:{l:?}"),
        }
    }
}

impl FromStr for Reg {
    type Err = Error;

    /// `none`, `l1:λ` or `l2:λ`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("bad regularizer `{s}` (use none, l1:λ or l2:λ)"));
        if s == "none" {
            return Ok(Reg::None);
        }
        let (kind, lam) = s.split_once(':').ok_or_else(bad)?;
        let lam: f64 = lam.parse().map_err(|_| bad())?;
        if !(lam >= 0.0 && lam.is_finite()) {
            return Err(bad());
        }
        match kind {
            "l1" => Ok(Reg::L1(lam)),
            "l2" => Ok(Reg::L2(lam)),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Structured,
    Unstructured,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Structured => "structured",
            ModelKind::Unstructured => "unstructured",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub d1: usize,
    pub d2: usize,
    pub gamma: f64,
    /// Width of each structured component.
    pub hidden_structured: usize,
    pub hidden_unstructured: usize,
    /// Width of each ground-truth component.
    pub hidden_truth: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub batches_per_epoch: usize,
    pub epochs: usize,
    pub init_std: f64,
    pub reg: Reg,
    /// Size of each held-out evaluation set.
    pub eval_samples: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            d1: 16,
            d2: 16,
            gamma: 0.9,
            hidden_structured: 32,
            hidden_unstructured: 64,
            hidden_truth: 16,
            lr: 3e-3,
            momentum: 0.9,
            batch_size: 128,
            batches_per_epoch: 100,
            epochs: 30,
            init_std: 1e-3,
            reg: Reg::None,
            eval_samples: 8192,
            seed: 0,
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "d1",
    "d2",
    "gamma",
    "hidden_structured",
    "hidden_unstructured",
    "hidden_truth",
    "lr",
    "momentum",
    "batch_size",
    "batches_per_epoch",
    "epochs",
    "init_std",
    "reg",
    "eval_samples",
];

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::DegenerateCorrelation(self.gamma));
        }
        let widths = [
            ("d1", self.d1),
            ("d2", self.d2),
            ("hidden_structured", self.hidden_structured),
            ("hidden_unstructured", self.hidden_unstructured),
            ("hidden_truth", self.hidden_truth),
            ("batch_size", self.batch_size),
            ("batches_per_epoch", self.batches_per_epoch),
            ("eval_samples", self.eval_samples),
        ];
        if let Some((name, _)) = widths.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("{name} must be at least 1")));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("lr must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must lie in [0, 1)"));
        }
        if !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            return Err(Error::invalid("init_std must be nonnegative"));
        }
        Ok(())
    }

    /// Defaults overridden by the keys in `kv`. Keys outside
    /// [`CONFIG_KEYS`] and `extra_keys` are rejected.
    pub fn from_config(kv: &KeyValues, extra_keys: &[&str]) -> Result<Self> {
        let allowed: Vec<&str> = CONFIG_KEYS.iter().chain(extra_keys).copied().collect();
        kv.reject_unknown(&allowed)?;
        let mut c = Self::default();
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = kv.get(stringify!($field))? { c.$field = v; })*
            };
        }
        set!(d1, d2, gamma, hidden_structured, hidden_unstructured, hidden_truth, lr, momentum,
             batch_size, batches_per_epoch, epochs, init_std, eval_samples);
        if let Some(r) = kv.get_str("reg") {
            c.reg = r.parse()?;
        }
        if kv.get_str("hidden_truth").is_none() {
            c.hidden_truth = (c.hidden_structured / 2).max(1);
        }
        c.validate()?;
        Ok(c)
    }

    pub fn input_dim(&self) -> usize {
        self.d1 + self.d2
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// `Σ_P`, `Σ_Q` with cross blocks `γO_P`, `γO_Q`.
pub fn make_covariances(d1: usize, d2: usize, gamma: f64, seed: u64) -> Result<(SymMatrix, SymMatrix)> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::DegenerateCorrelation(gamma));
    }
    let build = |stream| -> Result<SymMatrix> {
        let mut g = BoxMuller::new(substream(seed, stream));
        let o = numerics::random_orthonormal_from(d1.max(d2), &mut g)?;
        let cross = o.view((0, 0), (d1, d2)).into_owned() * gamma;
        numerics::unit_block_matrix(&cross)
    };
    Ok((build(STREAM_COV_P)?, build(STREAM_COV_Q)?))
}

/// The frozen labeler `f₁*(x₁) + f₂*(x₂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub f1: Mlp2,
    pub f2: Mlp2,
}

impl GroundTruth {
    pub fn label(&self, x: &[f64]) -> f64 {
        let d1 = self.f1.input_dim();
        self.f1.forward(&x[..d1]) + self.f2.forward(&x[d1..])
    }
}

pub fn make_ground_truth(config: &ExperimentConfig, seed: u64) -> GroundTruth {
    let mut rng = substream(seed, STREAM_TRUTH);
    GroundTruth {
        f1: Mlp2::uniform_fan_in(config.d1, config.hidden_truth, &mut rng),
        f2: Mlp2::uniform_fan_in(config.d2, config.hidden_truth, &mut rng),
    }
}

/// A trained model of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Structured { f1: Mlp2, f2: Mlp2 },
    Unstructured(Mlp2),
}

impl Model {
    pub fn init(kind: ModelKind, hidden: usize, config: &ExperimentConfig, g: &mut BoxMuller) -> Self {
        match kind {
            ModelKind::Structured => Model::Structured {
                f1: Mlp2::gaussian(config.d1, hidden, config.init_std, g),
                f2: Mlp2::gaussian(config.d2, hidden, config.init_std, g),
            },
            ModelKind::Unstructured => {
                Model::Unstructured(Mlp2::gaussian(config.input_dim(), hidden, config.init_std, g))
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            Model::Structured { f1, f2 } => {
                let d1 = f1.input_dim();
                f1.forward(&x[..d1]) + f2.forward(&x[d1..])
            }
            Model::Unstructured(f) => f.forward(x),
        }
    }

    /// Predictions for row-major points of dimension `dim`.
    pub fn predict_batch(&self, x: &[f64], dim: usize) -> Vec<f64> {
        const CHUNK: usize = 1024;
        let mut out = vec![0.0; x.len() / dim];
        let mut cache = BatchCache::default();
        for (xc, oc) in x.chunks(CHUNK * dim).zip(out.chunks_mut(CHUNK)) {
            for (m, off) in self.parts() {
                m.forward_batch(xc, dim, off, oc, &mut cache);
            }
        }
        out
    }

    fn parts(&self) -> Vec<(&Mlp2, usize)> {
        match self {
            Model::Structured { f1, f2 } => vec![(f1, 0), (f2, f1.input_dim())],
            Model::Unstructured(f) => vec![(f, 0)],
        }
    }

    fn parts_mut(&mut self) -> Vec<(&mut Mlp2, usize)> {
        match self {
            Model::Structured { f1, f2 } => {
                let d1 = f1.input_dim();
                vec![(f1, 0), (f2, d1)]
            }
            Model::Unstructured(f) => vec![(f, 0)],
        }
    }

    fn is_finite(&self) -> bool {
        self.parts().iter().all(|(m, _)| m.is_finite())
    }

    /// Penalty value of `reg` over all weights (biases excluded).
    pub fn penalty(&self, reg: Reg) -> f64 {
        let weights = self.parts().into_iter().flat_map(|(m, _)| m.weights().copied().collect::<Vec<_>>());
        match reg {
            Reg::None => 0.0,
            Reg::L1(l) => l * weights.map(f64::abs).sum::<f64>(),
            Reg::L2(l) => l * weights.map(|w| w * w).sum::<f64>(),
        }
    }
}

/// Held-out points and labels.
#[derive(Debug, Clone)]
pub struct EvalSet {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    dim: usize,
}

impl EvalSet {
    pub fn draw(sampler: &mut GaussianSampler, truth: &GroundTruth, n: usize) -> Self {
        let dim = sampler.dim();
        let mut x = vec![0.0; n * dim];
        for row in x.chunks_mut(dim) {
            sampler.sample_into(row);
        }
        let y = x.chunks(dim).map(|r| truth.label(r)).collect();
        Self { x, y, dim }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn mse(&self, model: &Model) -> f64 {
        let pred = model.predict_batch(&self.x, self.dim);
        pred.iter().zip(&self.y).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / self.len() as f64
    }
}

/// Everything a run needs that is shared between model kinds: covariances,
/// labeler, evaluation sets and the batch stream seed.
#[derive(Debug, Clone)]
pub struct Task {
    pub config: ExperimentConfig,
    pub sigma_p: SymMatrix,
    pub sigma_q: SymMatrix,
    pub truth: GroundTruth,
    pub eval_p: EvalSet,
    pub eval_q: EvalSet,
    sampler_p: GaussianSampler,
    sampler_q: GaussianSampler,
}

impl Task {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let seed = config.seed;
        let (sigma_p, sigma_q) = make_covariances(config.d1, config.d2, config.gamma, seed)?;
        let truth = make_ground_truth(config, seed);
        let sampler_p = GaussianSampler::standard(&sigma_p, 0)?;
        let sampler_q = GaussianSampler::standard(&sigma_q, 0)?;
        let eval_p = EvalSet::draw(&mut sampler_p.with_stream(seed, STREAM_EVAL_P), &truth, config.eval_samples);
        let eval_q = EvalSet::draw(&mut sampler_q.with_stream(seed, STREAM_EVAL_Q), &truth, config.eval_samples);
        Ok(Self {
            config: config.clone(),
            sigma_p,
            sigma_q,
            truth,
            eval_p,
            eval_q,
            sampler_p,
            sampler_q,
        })
    }

    pub fn sampler_p(&self) -> &GaussianSampler {
        &self.sampler_p
    }

    pub fn sampler_q(&self) -> &GaussianSampler {
        &self.sampler_q
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub model_kind: ModelKind,
    pub hidden: usize,
    pub reg: Reg,
    pub seed: u64,
    pub epochs_run: usize,
    /// Loss after each epoch; index 0 is the initialization.
    pub id_curve: Vec<f64>,
    pub ood_curve: Vec<f64>,
    pub id_loss: f64,
    pub ood_loss: f64,
    pub wall_time_secs: f64,
}

impl RunReport {
    pub fn ratio(&self) -> f64 {
        self.ood_loss / self.id_loss
    }

    /// `epoch,id_loss,ood_loss` rows.
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("epoch,id_loss,ood_loss\n");
        for (e, (id, ood)) in self.id_curve.iter().zip(&self.ood_curve).enumerate() {
            writeln!(out, "{e},{},{}", csv_float(*id), csv_float(*ood)).unwrap();
        }
        out
    }

    /// Loss values only; equal for identical config and seed.
    pub fn same_losses(&self, other: &RunReport) -> bool {
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        bits(&self.id_curve) == bits(&other.id_curve) && bits(&self.ood_curve) == bits(&other.ood_curve)
    }
}

/// 17 significant digits; `inf` for infinity.
pub fn csv_float(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

/// When to stop training.
#[derive(Debug, Clone, Copy)]
pub struct Budget {
    pub min_epochs: usize,
    pub max_epochs: usize,
    /// Stop once past `min_epochs` with ID loss at most this value.
    pub target_id: Option<f64>,
}

impl Budget {
    pub fn fixed(epochs: usize) -> Self {
        Self {
            min_epochs: epochs,
            max_epochs: epochs,
            target_id: None,
        }
    }
}

/// Trains one model on `task` and returns it with its report.
pub fn train_model(task: &Task, kind: ModelKind, hidden: usize, budget: Budget) -> Result<(Model, RunReport)> {
    let start = Instant::now();
    let cfg = &task.config;
    if hidden == 0 {
        return Err(Error::invalid("hidden width must be at least 1"));
    }
    let mut init = BoxMuller::new(substream(cfg.seed, STREAM_INIT));
    let mut model = Model::init(kind, hidden, cfg, &mut init);
    let mut velocity = Model::init(kind, hidden, &ExperimentConfig { init_std: 0.0, ..cfg.clone() }, &mut init);
    let mut grad = velocity.clone();
    let mut batches = task.sampler_p.with_stream(cfg.seed, STREAM_BATCHES);

    let dim = cfg.input_dim();
    let bs = cfg.batch_size;
    let mut x = vec![0.0; bs * dim];
    let mut y = vec![0.0; bs];
    let mut out = vec![0.0; bs];
    let mut r = vec![0.0; bs];
    let mut caches = vec![BatchCache::default(), BatchCache::default()];

    let mut id_curve = vec![task.eval_p.mse(&model)];
    let mut ood_curve = vec![task.eval_q.mse(&model)];
    let mut last_finite = id_curve[0].is_finite().then_some(0);
    let mut epoch = 0;
    while epoch < budget.max_epochs {
        if epoch >= budget.min_epochs {
            if let Some(t) = budget.target_id {
                if *id_curve.last().unwrap() <= t {
                    break;
                }
            }
        }
        epoch += 1;
        for _ in 0..cfg.batches_per_epoch {
            for (row, yi) in x.chunks_mut(dim).zip(y.iter_mut()) {
                batches.sample_into(row);
                *yi = task.truth.label(row);
            }
            out.iter_mut().for_each(|o| *o = 0.0);
            for ((m, off), cache) in model.parts().into_iter().zip(caches.iter_mut()) {
                m.forward_batch(&x, dim, off, &mut out, cache);
            }
            for i in 0..bs {
                r[i] = 2.0 * (out[i] - y[i]) / bs as f64;
            }
            {
                let parts = model.parts();
                for (((m, _), (gm, _)), cache) in parts.into_iter().zip(grad.parts_mut()).zip(&caches) {
                    m.backward(&r, cache, gm);
                }
            }
            sgd_step(&mut model, &mut velocity, &grad, cfg);
        }
        let id = task.eval_p.mse(&model);
        let ood = task.eval_q.mse(&model);
        if !(id.is_finite() && ood.is_finite() && model.is_finite()) {
            return Err(Error::DivergenceDetected {
                epoch,
                last_finite_epoch: last_finite,
            });
        }
        last_finite = Some(epoch);
        id_curve.push(id);
        ood_curve.push(ood);
    }
    let report = RunReport {
        model_kind: kind,
        hidden,
        reg: cfg.reg,
        seed: cfg.seed,
        epochs_run: epoch,
        id_loss: *id_curve.last().unwrap(),
        ood_loss: *ood_curve.last().unwrap(),
        id_curve,
        ood_curve,
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}

/// PyTorch-style momentum: `u ← μu + g`, `θ ← θ − η u`, with the
/// regularizer's (sub)gradient added to `g` for weights.
fn sgd_step(model: &mut Model, velocity: &mut Model, grad: &Model, cfg: &ExperimentConfig) {
    let (lr, mu, reg) = (cfg.lr, cfg.momentum, cfg.reg);
    for (((m, _), (v, _)), (g, _)) in model.parts_mut().into_iter().zip(velocity.parts_mut()).zip(grad.parts()) {
        m.zip3(v, g, |p, u, gr, is_weight| {
            let mut gr = gr;
            if is_weight {
                gr += match reg {
                    Reg::None => 0.0,
                    Reg::L1(l) => l * p.signum() * (*p != 0.0) as u8 as f64,
                    Reg::L2(l) => 2.0 * l * *p,
                };
            }
            *u = mu * *u + gr;
            *p -= lr * *u;
        });
    }
}

/// Trains one model kind with the configured epochs.
pub fn train(kind: ModelKind, config: &ExperimentConfig) -> Result<RunReport> {
    let task = Task::new(config)?;
    let hidden = match kind {
        ModelKind::Structured => config.hidden_structured,
        ModelKind::Unstructured => config.hidden_unstructured,
    };
    Ok(train_model(&task, kind, hidden, Budget::fixed(config.epochs))?.1)
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub structured: RunReport,
    pub unstructured: RunReport,
    /// Unstructured ID loss ended within 2x of the structured one.
    pub matched: bool,
    /// `‖f − f*‖²_Q / ‖f − f*‖²_P` of the structured model by Monte Carlo.
    pub discrepancy: McRatio,
    /// `2 / (1 − γ)`.
    pub certified_bound: f64,
}

pub const DISCREPANCY_SAMPLES: usize = 100_000;

/// Structured run for the configured epochs, then the unstructured run
/// until its ID loss first reaches the structured one (at most 3x the
/// epochs). `matched` records whether the two ended within 2x.
pub fn compare(config: &ExperimentConfig) -> Result<Comparison> {
    let task = Task::new(config)?;
    let (model_s, structured) =
        train_model(&task, ModelKind::Structured, config.hidden_structured, Budget::fixed(config.epochs))?;
    let budget = Budget {
        min_epochs: 0,
        max_epochs: 3 * config.epochs,
        target_id: Some(structured.id_loss),
    };
    let (_, unstructured) = train_model(&task, ModelKind::Unstructured, config.hidden_unstructured, budget)?;
    let matched = unstructured.id_loss <= 2.0 * structured.id_loss && structured.id_loss <= 2.0 * unstructured.id_loss;
    let discrepancy = structured_discrepancy(&task, &model_s, DISCREPANCY_SAMPLES)?;
    Ok(Comparison {
        structured,
        unstructured,
        matched,
        discrepancy,
        certified_bound: 2.0 / (1.0 - config.gamma),
    })
}

/// Monte Carlo `‖f − f*‖²_Q / ‖f − f*‖²_P` for a structured model.
pub fn structured_discrepancy(task: &Task, model: &Model, n: usize) -> Result<McRatio> {
    let Model::Structured { f1, f2 } = model else {
        return Err(Error::invalid("discrepancy check needs a structured model"));
    };
    let t = &task.truth;
    mc_ratio_estimate(
        |x1| f1.forward(x1) - t.f1.forward(x1),
        |x2| f2.forward(x2) - t.f2.forward(x2),
        task.config.d1,
        &task.sampler_p,
        &task.sampler_q,
        n,
        task.config.seed ^ 0x5eed,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sweep {
    Widths(Vec<usize>),
    Regs(Vec<Reg>),
}

/// Number of worker threads for sweeps: `EXTRAP_CERT_THREADS` if set to a
/// positive integer, otherwise the available parallelism.
pub fn sweep_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// One unstructured run per setting, all on the same task (same data,
/// labeler and evaluation sets).
pub fn ablation_sweep(sweep: &Sweep, base: &ExperimentConfig, threads: usize) -> Result<Vec<RunReport>> {
    let settings: Vec<(usize, Reg)> = match sweep {
        Sweep::Widths(w) => w.iter().map(|&h| (h, base.reg)).collect(),
        Sweep::Regs(r) => r.iter().map(|&reg| (base.hidden_unstructured, reg)).collect(),
    };
    if settings.is_empty() {
        return Err(Error::invalid("sweep list is empty"));
    }
    let task = Task::new(base)?;
    let run = |&(hidden, reg): &(usize, Reg)| {
        let mut t = task.clone();
        t.config.reg = reg;
        train_model(&t, ModelKind::Unstructured, hidden, Budget::fixed(base.epochs)).map(|(_, r)| r)
    };
    let threads = threads.max(1).min(settings.len());
    if threads == 1 {
        return settings.iter().map(run).collect();
    }
    let mut results: Vec<Option<Result<RunReport>>> = (0..settings.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        for (chunk_settings, chunk_out) in settings
            .chunks(settings.len().div_ceil(threads))
            .zip(results.chunks_mut(settings.len().div_ceil(threads)))
        {
            let run = &run;
            s.spawn(move || {
                for (st, slot) in chunk_settings.iter().zip(chunk_out.iter_mut()) {
                    *slot = Some(run(st));
                }
            });
        }
    });
    results.into_iter().map(|r| r.expect("every slot filled")).collect()
}

/// `run_id,model_kind,hidden,reg,final_id,final_ood,ratio` rows.
pub fn summary_csv(runs: &[RunReport]) -> String {
    let mut out = String::from("run_id,model_kind,hidden,reg,final_id,final_ood,ratio\n");
    for (i, r) in runs.iter().enumerate() {
        writeln!(
            out,
            "{i},{},{},{},{},{},{}",
            r.model_kind,
            r.hidden,
            r.reg,
            csv_float(r.id_loss),
            csv_float(r.ood_loss),
            csv_float(r.ratio())
        )
        .unwrap();
    }
    out
}

/// Writes `run_<i>.csv` per run and `summary.csv` into `dir`.
pub fn write_csvs(dir: &Path, runs: &[RunReport]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, r) in runs.iter().enumerate() {
        let p = dir.join(format!("run_{i}.csv"));
        std::fs::write(&p, r.curve_csv()).map_err(|e| Error::io(&p, e))?;
    }
    let p = dir.join("summary.csv");
    std::fs::write(&p, summary_csv(runs)).map_err(|e| Error::io(&p, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::empirical_covariance;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            d1: 4,
            d2: 4,
            hidden_structured: 8,
            hidden_unstructured: 16,
            hidden_truth: 4,
            batch_size: 32,
            batches_per_epoch: 20,
            epochs: 3,
            eval_samples: 512,
            ..Default::default()
        }
    }

    #[test]
    fn reg_parsing() {
        assert_eq!("none".parse::<Reg>().unwrap(), Reg::None);
        assert_eq!("l1:0.001".parse::<Reg>().unwrap(), Reg::L1(0.001));
        assert_eq!("l2:1e-4".parse::<Reg>().unwrap(), Reg::L2(1e-4));
        assert!("l3:1".parse::<Reg>().is_err());
        assert!("l1:-1".parse::<Reg>().is_err());
        assert_eq!(Reg::L1(0.5).to_string(), "l1:0.5");
    }

    #[test]
    fn config_from_key_values() {
        let kv = KeyValues::parse("d1 = 8\nepochs = 2\nreg = l2:0.01\n", "c").unwrap();
        let c = ExperimentConfig::from_config(&kv, &[]).unwrap();
        assert_eq!((c.d1, c.epochs, c.reg), (8, 2, Reg::L2(0.01)));
        let kv = KeyValues::parse("hidden_structured = 10\n", "c").unwrap();
        assert_eq!(ExperimentConfig::from_config(&kv, &[]).unwrap().hidden_truth, 5);
        let kv = KeyValues::parse("widths = 1 2\n", "c").unwrap();
        assert!(ExperimentConfig::from_config(&kv, &[]).is_err());
        assert!(ExperimentConfig::from_config(&kv, &["widths"]).is_ok());
        let kv = KeyValues::parse("gamma = 1.0\n", "c").unwrap();
        assert!(matches!(ExperimentConfig::from_config(&kv, &[]), Err(Error::DegenerateCorrelation(_))));
        let kv = KeyValues::parse("momentum = 1.0\n", "c").unwrap();
        assert!(ExperimentConfig::from_config(&kv, &[]).is_err());
    }

    #[test]
    fn covariance_examples() {
        let (p, q) = make_covariances(3, 3, 0.0, 1).unwrap();
        assert_eq!(p.as_matrix(), &nalgebra::DMatrix::identity(6, 6));
        assert_eq!(q, p);
        let (p, q) = make_covariances(4, 4, 0.9, 2).unwrap();
        assert!((p.lambda_min() - 0.1).abs() < 1e-9);
        assert!((q.lambda_min() - 0.1).abs() < 1e-9);
        assert_ne!(p, q);
        for i in 0..8 {
            for j in 0..8 {
                if (i < 4) == (j < 4) {
                    assert_eq!(p.get(i, j), q.get(i, j));
                }
            }
        }
        assert!(make_covariances(2, 2, 1.0, 0).is_err());
        let (p, _) = make_covariances(3, 2, 0.5, 3).unwrap();
        let s = numerics::svd(&p.as_matrix().view((0, 3), (3, 2)).into_owned()).unwrap();
        assert!(s.singular_values.iter().all(|v| (v - 0.5).abs() < 1e-12));
    }

    #[test]
    fn matching_marginals_empirically() {
        let (p, q) = make_covariances(4, 4, 0.9, 5).unwrap();
        for sigma in [&p, &q] {
            let mut s = GaussianSampler::standard(sigma, 6).unwrap();
            let c = empirical_covariance(&mut s, 100_000);
            let block = c.view((0, 0), (4, 4)).into_owned();
            let err = (block - nalgebra::DMatrix::identity(4, 4)).norm() / 2.0;
            assert!(err < 0.05, "{err}");
        }
    }

    #[test]
    fn ground_truth_is_deterministic_and_additive() {
        let c = tiny();
        let a = make_ground_truth(&c, 3);
        assert_eq!(a, make_ground_truth(&c, 3));
        assert_ne!(a, make_ground_truth(&c, 4));
        let mut g = BoxMuller::from_seed(1);
        let (p, _) = make_covariances(4, 4, 0.9, 3).unwrap();
        let mut s = GaussianSampler::standard(&p, 2).unwrap();
        let ys: Vec<f64> = (0..10_000).map(|_| a.label(&s.sample())).collect();
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / ys.len() as f64;
        assert!(var > 0.0);
        let x: Vec<f64> = (0..8).map(|_| g.next_normal()).collect();
        assert_eq!(a.label(&x), a.f1.forward(&x[..4]) + a.f2.forward(&x[4..]));
    }

    #[test]
    fn zero_epochs_report_initial_losses() {
        let c = ExperimentConfig { epochs: 0, ..tiny() };
        let task = Task::new(&c).unwrap();
        let r = train(ModelKind::Structured, &c).unwrap();
        assert_eq!(r.epochs_run, 0);
        assert_eq!(r.id_curve.len(), 1);
        let mut g = BoxMuller::new(substream(c.seed, STREAM_INIT));
        let m = Model::init(ModelKind::Structured, c.hidden_structured, &c, &mut g);
        assert_eq!(r.id_loss, task.eval_p.mse(&m));
        assert_eq!(r.ood_loss, task.eval_q.mse(&m));
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let c = ExperimentConfig { epochs: 5, ..tiny() };
        let a = train(ModelKind::Structured, &c).unwrap();
        let b = train(ModelKind::Structured, &c).unwrap();
        assert!(a.same_losses(&b));
        assert!(a.id_loss < a.id_curve[0], "{:?}", a.id_curve);
        let other = train(ModelKind::Structured, &c.with_seed(9)).unwrap();
        assert!(!a.same_losses(&other));
    }

    #[test]
    fn divergence_is_reported() {
        let c = ExperimentConfig { lr: 50.0, init_std: 1.0, epochs: 20, ..tiny() };
        match train(ModelKind::Unstructured, &c) {
            Err(Error::DivergenceDetected { epoch, last_finite_epoch }) => {
                assert_eq!(last_finite_epoch, Some(epoch - 1));
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn regularizers_shrink_weights() {
        let base = ExperimentConfig { epochs: 4, ..tiny() };
        let task = Task::new(&base).unwrap();
        let norm = |reg| {
            let mut t = task.clone();
            t.config.reg = reg;
            let (m, _) = train_model(&t, ModelKind::Unstructured, 16, Budget::fixed(4)).unwrap();
            m.penalty(Reg::L2(1.0))
        };
        let plain = norm(Reg::None);
        assert!(norm(Reg::L2(0.5)) < plain);
        assert!(norm(Reg::L1(0.05)) < plain);
    }

    #[test]
    fn trained_structured_embeds_into_unstructured() {
        let c = ExperimentConfig { epochs: 2, ..tiny() };
        let task = Task::new(&c).unwrap();
        let (m, _) = train_model(&task, ModelKind::Structured, 8, Budget::fixed(2)).unwrap();
        let Model::Structured { f1, f2 } = &m else { unreachable!() };
        let u = Model::Unstructured(embed_structured(f1, f2));
        for x in task.eval_p.x.chunks(8).take(200) {
            assert!((u.predict(x) - m.predict(x)).abs() <= 1e-6);
        }
    }

    #[test]
    fn sweep_is_paired_and_thread_independent() {
        let c = ExperimentConfig { epochs: 2, ..tiny() };
        let sweep = Sweep::Widths(vec![2, 4, 8]);
        let one = ablation_sweep(&sweep, &c, 1).unwrap();
        let many = ablation_sweep(&sweep, &c, 3).unwrap();
        assert_eq!(one.len(), 3);
        for (a, b) in one.iter().zip(&many) {
            assert!(a.same_losses(b));
        }
        // Same evaluation set, so every run starts from losses of a tiny net.
        assert!(one.iter().all(|r| r.id_curve[0] > 0.0));
        assert!(ablation_sweep(&Sweep::Regs(vec![]), &c, 1).is_err());
    }

    #[test]
    fn csv_formats() {
        let c = ExperimentConfig { epochs: 1, ..tiny() };
        let r = train(ModelKind::Structured, &c).unwrap();
        let csv = r.curve_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("epoch,id_loss,ood_loss"));
        let row: Vec<&str> = lines.nth(1).unwrap().split(',').collect();
        assert_eq!(row[1].parse::<f64>().unwrap().to_bits(), r.id_curve[1].to_bits());
        let s = summary_csv(&[r]);
        assert!(s.starts_with("run_id,model_kind,hidden,reg,final_id,final_ood,ratio\n0,structured,8,none,"));
        assert_eq!(csv_float(f64::INFINITY), "inf");
        let dir = tempfile::tempdir().unwrap();
        write_csvs(dir.path(), &[train(ModelKind::Unstructured, &c).unwrap()]).unwrap();
        assert!(dir.path().join("run_0.csv").exists() && dir.path().join("summary.csv").exists());
    }
}
