//! Width and regularizer sweeps of the unstructured model on one shared task.
//!
//! `cargo run --release --example ablation -- [seed] [epochs]`

use extrap_cert::experiments::{ablation_sweep, summary_csv, sweep_threads, ExperimentConfig, Reg, Sweep};

fn main() -> extrap_cert::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().map_or(0, |s| s.parse().expect("seed"));
    let mut config = ExperimentConfig::default().with_seed(seed);
    if let Some(e) = args.next() {
        config.epochs = e.parse().expect("epochs");
    }
    let threads = sweep_threads();
    let widths = ablation_sweep(&Sweep::Widths(vec![8, 16, 32, 64]), &config, threads)?;
    print!("{}", summary_csv(&widths));
    let regs = ablation_sweep(&Sweep::Regs(vec![Reg::None, Reg::L1(1e-5), Reg::L2(1e-4)]), &config, threads)?;
    print!("{}", summary_csv(&regs));
    Ok(())
}
