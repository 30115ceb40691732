//! Driving the command-line front end from code, with the bundled data files.

use extrap_cert::cli::run;

fn main() {
    let data = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data");
    let code = run([
        "extrap-cert".to_string(),
        "discrete-bound".into(),
        "--joint-p".into(),
        format!("{data}/uniform_p.txt"),
        "--joint-q".into(),
        format!("{data}/correlated_q.txt"),
        "--format".into(),
        "csv".into(),
    ]);
    println!("exit code {code}");
}
