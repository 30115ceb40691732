//! Command-line front end.
//!
//! Every subcommand computes a [`Report`] and emits it as `key: value` text
//! or a one-row CSV. Exit codes: 0 success, 1 invalid input or usage, 2
//! numerical failure (including any NaN in a report).

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::KeyValues;
use crate::discrete::{self, AdditiveCoefficients, DiscreteJoint, ProductTable};
use crate::error::{Error, Result};
use crate::experiments::{self, csv_float, ExperimentConfig, Reg, Sweep};
use crate::gaussian::{self, BlockGaussianSpec, CorrelationSpec};
use crate::hermite::{self, HermiteBasis};
use crate::lowerbound;
use crate::numerics::SymMatrix;
use crate::rng::BoxMuller;

#[derive(Debug, Parser)]
#[command(name = "extrap-cert", version, about = "Extrapolation certificates for additive models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
}

#[derive(Debug, Args)]
struct Output {
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct JointPair {
    #[arg(long)]
    joint_p: PathBuf,
    #[arg(long)]
    joint_q: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Spectral upper bound on the error ratio of two discrete joints (with the exact value).
    DiscreteBound {
        #[command(flatten)]
        joints: JointPair,
        #[command(flatten)]
        output: Output,
    },
    /// Exact error ratio of two discrete joints.
    DiscreteExact {
        #[command(flatten)]
        joints: JointPair,
        #[command(flatten)]
        output: Output,
    },
    /// Connectivity of the bipartite support graph of a two-feature joint.
    DiscreteConnectivity {
        #[arg(long)]
        joint_p: PathBuf,
        #[command(flatten)]
        output: Output,
    },
    /// Loss-transfer inequality for a labeling and two additive models.
    Prop1Check {
        #[command(flatten)]
        joints: JointPair,
        /// Label table (same format as the joints).
        #[arg(long)]
        labels: PathBuf,
        /// Coefficients of the reference model.
        #[arg(long)]
        fstar: PathBuf,
        /// Coefficients of the model under test.
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        output: Output,
    },
    /// `d / λ_min(Σ_P)` bound for pairwise-Gaussian features.
    GaussianBoundPairwise {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        output: Output,
    },
    /// `2 / (1 − σ_max)` bound for two Gaussian feature blocks.
    GaussianBoundBlock {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        output: Output,
    },
    /// Exact ratio κ over Hermite levels for two pairwise-Gaussian specs.
    GaussianExactKappa {
        #[arg(long)]
        config_p: PathBuf,
        #[arg(long)]
        config_q: PathBuf,
        #[arg(long, default_value_t = 60)]
        max_level: usize,
        #[command(flatten)]
        output: Output,
    },
    /// Truncated Mehler series against its closed form on a square grid.
    MehlerCheck {
        #[arg(long, allow_negative_numbers = true)]
        rho: f64,
        #[arg(long, default_value_t = hermite::DEFAULT_TRUNCATION)]
        n: usize,
        #[arg(long, default_value_t = 61)]
        grid: usize,
        #[arg(long, default_value_t = 3.0)]
        half_width: f64,
        #[command(flatten)]
        output: Output,
    },
    /// Elementwise-power, singular-value and block-eigenvalue identities on random instances.
    LemmaChecks {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        instances: usize,
        #[arg(long, default_value_t = 4)]
        dim: usize,
        #[arg(long, default_value_t = 6)]
        k_max: u32,
        #[command(flatten)]
        output: Output,
    },
    /// Bump network vanishing on the source support and large on target points.
    LowerboundWitness {
        #[arg(long)]
        p_points: PathBuf,
        #[arg(long)]
        q_points: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[command(flatten)]
        output: Output,
    },
    /// Structured vs unstructured training run; writes per-run and summary CSVs.
    Experiment {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "experiment-out")]
        out_dir: PathBuf,
        #[command(flatten)]
        output: Output,
    },
    /// Width or regularizer sweep of the unstructured model (`widths` or `regs` in the config).
    Ablation {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "ablation-out")]
        out_dir: PathBuf,
        #[command(flatten)]
        output: Output,
    },
}

/// Ordered `key: value` results of one subcommand.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    entries: Vec<(String, Value)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Int(i64),
    Bool(bool),
    Text(String),
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num(mut self, key: &str, v: f64) -> Self {
        self.entries.push((key.into(), Value::Num(v)));
        self
    }

    pub fn int(mut self, key: &str, v: impl TryInto<i64>) -> Self {
        self.entries.push((key.into(), Value::Int(v.try_into().unwrap_or(i64::MAX))));
        self
    }

    pub fn flag(mut self, key: &str, v: bool) -> Self {
        self.entries.push((key.into(), Value::Bool(v)));
        self
    }

    pub fn text(mut self, key: &str, v: impl Into<String>) -> Self {
        self.entries.push((key.into(), Value::Text(v.into())));
        self
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    /// Keys of NaN entries.
    pub fn nan_keys(&self) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|(_, v)| matches!(v, Value::Num(x) if x.is_nan()))
            .map(|(k, _)| k.as_str())
            .collect()
    }

    /// `key: value` lines, floats in shortest round-trip form.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let v = match v {
                Value::Num(x) => text_float(*x),
                Value::Int(i) => i.to_string(),
                Value::Bool(b) => b.to_string(),
                Value::Text(s) => s.clone(),
            };
            out.push_str(&format!("{k}: {v}\n"));
        }
        out
    }

    /// Header of keys and one row, floats with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let header: Vec<&str> = self.keys().collect();
        let row: Vec<String> = self
            .entries
            .iter()
            .map(|(_, v)| match v {
                Value::Num(x) => csv_float(*x),
                Value::Int(i) => i.to_string(),
                Value::Bool(b) => b.to_string(),
                Value::Text(s) => s.replace(',', ";"),
            })
            .collect();
        format!("{}\n{}\n", header.join(","), row.join(","))
    }
}

fn text_float(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:?}")
    }
}

/// Writes `report` to `path` (stdout if `None`).
pub fn emit_report(report: &Report, format: Format, path: Option<&Path>) -> Result<()> {
    let body = match format {
        Format::Text => report.to_text(),
        Format::Csv => report.to_csv(),
    };
    match path {
        Some(p) => std::fs::write(p, body).map_err(|e| Error::io(p, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(body.as_bytes()).map_err(|e| Error::io("<stdout>", e))
        }
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Some(out) = cli.command.output().out.as_deref() {
        let parent = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        if !parent.is_dir() {
            eprintln!("error: output directory {} does not exist", parent.display());
            return 1;
        }
    }
    let (result, output) = dispatch(cli.command);
    let report = match result {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return if e.is_numerical() { 2 } else { 1 };
        }
    };
    let nan = report.nan_keys();
    if !nan.is_empty() {
        eprintln!("error: NaN in report ({})", nan.join(", "));
        return 2;
    }
    match emit_report(&report, output.format, output.out.as_deref()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

impl Command {
    fn output(&self) -> &Output {
        match self {
            Command::DiscreteBound { output, .. }
            | Command::DiscreteExact { output, .. }
            | Command::DiscreteConnectivity { output, .. }
            | Command::Prop1Check { output, .. }
            | Command::GaussianBoundPairwise { output, .. }
            | Command::GaussianBoundBlock { output, .. }
            | Command::GaussianExactKappa { output, .. }
            | Command::MehlerCheck { output, .. }
            | Command::LemmaChecks { output, .. }
            | Command::LowerboundWitness { output, .. }
            | Command::Experiment { output, .. }
            | Command::Ablation { output, .. } => output,
        }
    }
}

fn dispatch(cmd: Command) -> (Result<Report>, Output) {
    match cmd {
        Command::DiscreteBound { joints, output } => (discrete_bound(&joints), output),
        Command::DiscreteExact { joints, output } => (discrete_exact(&joints), output),
        Command::DiscreteConnectivity { joint_p, output } => (discrete_connectivity(&joint_p), output),
        Command::Prop1Check {
            joints,
            labels,
            fstar,
            model,
            output,
        } => (prop1(&joints, &labels, &fstar, &model), output),
        Command::GaussianBoundPairwise { config, output } => (gaussian_pairwise(&config), output),
        Command::GaussianBoundBlock { config, output } => (gaussian_block(&config), output),
        Command::GaussianExactKappa {
            config_p,
            config_q,
            max_level,
            output,
        } => (gaussian_kappa(&config_p, &config_q, max_level), output),
        Command::MehlerCheck {
            rho,
            n,
            grid,
            half_width,
            output,
        } => (mehler(rho, n, grid, half_width), output),
        Command::LemmaChecks {
            seed,
            instances,
            dim,
            k_max,
            output,
        } => (lemma_checks(seed, instances, dim, k_max), output),
        Command::LowerboundWitness {
            p_points,
            q_points,
            eps,
            scale,
            output,
        } => (witness(&p_points, &q_points, eps, scale), output),
        Command::Experiment {
            config,
            seed,
            out_dir,
            output,
        } => (experiment(config.as_deref(), seed, &out_dir), output),
        Command::Ablation {
            config,
            seed,
            out_dir,
            output,
        } => (ablation(&config, seed, &out_dir), output),
    }
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::invalid(format!("no such file: {}", path.display())))
    }
}

fn load_joints(j: &JointPair) -> Result<(DiscreteJoint, DiscreteJoint)> {
    require_file(&j.joint_p)?;
    require_file(&j.joint_q)?;
    Ok((DiscreteJoint::load(&j.joint_p)?, DiscreteJoint::load(&j.joint_q)?))
}

fn discrete_bound(j: &JointPair) -> Result<Report> {
    let (p, q) = load_joints(j)?;
    let b = discrete::rer_upper_bound_discrete(&p, &q)?;
    let e = discrete::exact_rer_discrete(&p, &q)?;
    Ok(Report::new()
        .num("bound", b.bound)
        .num("exact", e.tau)
        .int("num_features", b.num_features)
        .num("lambda_k", b.lambda_k)
        .num("marginal_ratio", b.marginal_ratio)
        .text(
            "certificate",
            format!("k / lambda_{}(normalized signless Laplacian of P) * max marginal ratio", b.num_features),
        ))
}

fn discrete_exact(j: &JointPair) -> Result<Report> {
    let (p, q) = load_joints(j)?;
    let e = discrete::exact_rer_discrete(&p, &q)?;
    let mut r = Report::new().num("exact", e.tau).int("null_dim", e.null_dim);
    if let Some(w) = &e.witness {
        let coeffs: Vec<String> = w.as_slice().iter().map(|v| format!("{v:?}")).collect();
        r = r.text("witness", coeffs.join(" "));
    }
    Ok(r.text("certificate", "generalized eigenvalue of (K_Q, K_P) off the common null space"))
}

fn discrete_connectivity(path: &Path) -> Result<Report> {
    require_file(path)?;
    let p = DiscreteJoint::load(path)?;
    let connected = discrete::is_connected(&p)?;
    Ok(Report::new()
        .flag("connected", connected)
        .num("lambda_2", discrete::lambda2_normalized(&p)))
}

fn prop1(j: &JointPair, labels: &Path, fstar: &Path, model: &Path) -> Result<Report> {
    for path in [labels, fstar, model] {
        require_file(path)?;
    }
    let (p, q) = load_joints(j)?;
    let y = ProductTable::load(labels)?;
    let fs = AdditiveCoefficients::load(p.arities(), fstar)?;
    let f = AdditiveCoefficients::load(p.arities(), model)?;
    let r = discrete::check_prop1(&p, &q, &y, &fs, &f)?;
    Ok(Report::new()
        .num("target_loss", r.lhs)
        .num("bound", r.rhs)
        .num("tau", r.tau)
        .num("eps_f", r.eps_f)
        .num("source_loss", r.source_loss)
        .flag("holds", r.holds))
}

fn load_config(path: &Path) -> Result<KeyValues> {
    require_file(path)?;
    KeyValues::load(path)
}

fn gaussian_pairwise(path: &Path) -> Result<Report> {
    let spec = CorrelationSpec::from_config(&load_config(path)?)?;
    let b = gaussian::rer_bound_pairwise(&spec)?;
    Ok(Report::new()
        .num("bound", b.bound)
        .num("lambda_min", b.lambda_min)
        .int("dim", b.dim)
        .text("certificate", "d / lambda_min(Sigma_P)"))
}

fn gaussian_block(path: &Path) -> Result<Report> {
    let spec = BlockGaussianSpec::from_config(&load_config(path)?)?;
    let b = gaussian::rer_bound_two_block(&spec)?;
    Ok(Report::new()
        .num("bound", b.bound)
        .num("sigma_max", b.sigma_max)
        .num("lambda_min", b.lambda_min_block)
        .num("identity_residual", b.identity_residual)
        .text("certificate", "2 / (1 - sigma_max(Sigma_12))"))
}

fn gaussian_kappa(pp: &Path, qp: &Path, max_level: usize) -> Result<Report> {
    let p = CorrelationSpec::from_config(&load_config(pp)?)?;
    let q = CorrelationSpec::from_config(&load_config(qp)?)?;
    let k = gaussian::exact_kappa(&p, &q, max_level)?;
    let b = gaussian::rer_bound_pairwise(&p)?;
    let mut r = Report::new()
        .num("exact", k.kappa)
        .num("bound", b.bound)
        .int("argmax_level", k.argmax_level)
        .int("levels_evaluated", k.per_level.len());
    if let Some(s) = k.stopped_at {
        r = r.int("stopped_at", s);
    }
    Ok(r.num("certified", k.certified())
        .text("certificate", "max over Hermite levels of lambda_max(Sigma_Q^n, Sigma_P^n)"))
}

fn mehler(rho: f64, n: usize, grid: usize, half_width: f64) -> Result<Report> {
    if grid < 2 || !(half_width > 0.0 && half_width.is_finite()) {
        return Err(Error::invalid("grid must be at least 2 and half_width positive"));
    }
    let basis = HermiteBasis::new(n.max(1))?;
    let err = hermite::mehler_grid_error(&basis, &[rho], grid, half_width, n)?;
    let dens = hermite::density_recovery_error(&[rho], grid, half_width)?;
    Ok(Report::new()
        .num("rho", rho)
        .int("n", n)
        .num("max_grid_error", err)
        .num("density_recovery_error", dens))
}

fn lemma_checks(seed: u64, instances: usize, dim: usize, k_max: u32) -> Result<Report> {
    if instances == 0 || dim == 0 {
        return Err(Error::invalid("instances and dim must be at least 1"));
    }
    let mut g = BoxMuller::from_seed(seed);
    let (mut l3, mut l4, mut l5) = (0, 0, 0);
    let mut worst5 = 0.0_f64;
    for _ in 0..instances {
        let sigma: SymMatrix = gaussian::random_correlation(dim, 0.0, &mut g)?;
        l3 += gaussian::lemma3_check(&sigma, k_max)?.holds as usize;
        let s12 = gaussian::random_sigma12(dim, dim, 1.0, &mut g)?;
        l4 += gaussian::lemma4_check(&s12)? as usize;
        let r5 = gaussian::lemma5_check(&s12)?;
        l5 += r5.holds as usize;
        worst5 = worst5.max(r5.residual);
    }
    Ok(Report::new()
        .int("instances", instances)
        .int("elementwise_power_pass", l3)
        .int("singular_value_pass", l4)
        .int("block_eigenvalue_pass", l5)
        .num("block_eigenvalue_max_residual", worst5)
        .flag("all_pass", l3 == instances && l4 == instances && l5 == instances))
}

fn witness(pp: &Path, qp: &Path, eps: f64, scale: f64) -> Result<Report> {
    require_file(pp)?;
    require_file(qp)?;
    let (p, wp) = lowerbound::load_points(pp)?;
    let (q, wq) = lowerbound::load_points(qp)?;
    for w in wp.iter().chain(&wq) {
        eprintln!("warning: {w}");
    }
    let (net, r) = lowerbound::build_witness(&p, &q, eps, scale)?;
    Ok(Report::new()
        .num("max_abs_on_p", r.max_abs_on_p)
        .num("min_on_q", r.min_on_q)
        .num("mean_sq_on_q", r.mean_sq_on_q)
        .int("num_centers", r.num_centers)
        .int("num_neurons", net.len())
        .num("scale", r.scale)
        .num("eps", r.eps))
}

fn create_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

const ABLATION_KEYS: &[&str] = &["widths", "regs"];

fn experiment(config: Option<&Path>, seed: u64, out_dir: &Path) -> Result<Report> {
    let cfg = match config {
        Some(p) => ExperimentConfig::from_config(&load_config(p)?, &[])?,
        None => ExperimentConfig::default(),
    }
    .with_seed(seed);
    create_out_dir(out_dir)?;
    let c = experiments::compare(&cfg)?;
    experiments::write_csvs(out_dir, &[c.structured.clone(), c.unstructured.clone()])?;
    let (s, u) = (&c.structured, &c.unstructured);
    Ok(Report::new()
        .int("seed", seed)
        .num("structured_id", s.id_loss)
        .num("structured_ood", s.ood_loss)
        .num("unstructured_id", u.id_loss)
        .num("unstructured_ood", u.ood_loss)
        .int("structured_epochs", s.epochs_run)
        .int("unstructured_epochs", u.epochs_run)
        .flag("id_matched", c.matched)
        .num("ood_ratio_unstructured_over_structured", u.ood_loss / s.ood_loss)
        .num("discrepancy_ratio", c.discrepancy.ratio)
        .num("discrepancy_stderr", c.discrepancy.stderr)
        .num("bound", c.certified_bound)
        .text("out_dir", out_dir.display().to_string()))
}

fn ablation(config: &Path, seed: u64, out_dir: &Path) -> Result<Report> {
    let kv = load_config(config)?;
    let cfg = ExperimentConfig::from_config(&kv, ABLATION_KEYS)?.with_seed(seed);
    let sweep = match (kv.get_list::<usize>("widths")?, kv.get_list::<String>("regs")?) {
        (Some(w), None) => Sweep::Widths(w),
        (None, Some(r)) => Sweep::Regs(r.iter().map(|s| s.parse::<Reg>()).collect::<Result<_>>()?),
        _ => return Err(Error::invalid("ablation config needs exactly one of `widths` or `regs`")),
    };
    create_out_dir(out_dir)?;
    let runs = experiments::ablation_sweep(&sweep, &cfg, experiments::sweep_threads())?;
    experiments::write_csvs(out_dir, &runs)?;
    let mut r = Report::new().int("seed", seed).int("runs", runs.len());
    for (i, run) in runs.iter().enumerate() {
        r = r
            .text(&format!("run_{i}"), format!("hidden {} reg {}", run.hidden, run.reg))
            .num(&format!("run_{i}_id"), run.id_loss)
            .num(&format!("run_{i}_ood"), run.ood_loss);
    }
    Ok(r.text("out_dir", out_dir.display().to_string()))
}
