//! Structured vs unstructured MLPs under a matching-marginals shift.
//!
//! `cargo run --release --example structured_vs_unstructured -- [seed] [epochs]`

use extrap_cert::experiments::{compare, ExperimentConfig};

fn main() -> extrap_cert::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().map_or(0, |s| s.parse().expect("seed"));
    let mut config = ExperimentConfig::default().with_seed(seed);
    if let Some(e) = args.next() {
        config.epochs = e.parse().expect("epochs");
    }
    let c = compare(&config)?;
    for r in [&c.structured, &c.unstructured] {
        println!(
            "{:<12} hidden {:>3}  epochs {:>3}  id {:.3e}  ood {:.3e}  ood/id {:.2}  ({:.1}s)",
            r.model_kind.to_string(),
            r.hidden,
            r.epochs_run,
            r.id_loss,
            r.ood_loss,
            r.ratio(),
            r.wall_time_secs
        );
    }
    println!("ID matched within 2x: {}", c.matched);
    println!("OOD ratio unstructured/structured: {:.2}", c.unstructured.ood_loss / c.structured.ood_loss);
    println!(
        "structured discrepancy ratio {:.3} ± {:.3} (certified bound {})",
        c.discrepancy.ratio, c.discrepancy.stderr, c.certified_bound
    );
    Ok(())
}
