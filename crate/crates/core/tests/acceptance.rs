//! Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
//!
//! `cargo test --release --test acceptance`. Criteria 12 and 13 train
//! networks and take several minutes on one core.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;

use extrap_cert::discrete::{
    self, check_prop1, exact_rer_discrete, is_connected, lambda2_normalized, random_block_diagonal, random_joint,
    random_pair_shared_support, rer_upper_bound_discrete, AdditiveCoefficients, DiscreteJoint, ProductTable,
};
use extrap_cert::experiments::{ablation_sweep, compare, Comparison, ExperimentConfig, Reg, RunReport, Sweep};
use extrap_cert::gaussian::{
    exact_kappa, lemma3_check, lemma4_check, lemma5_check, mc_ratio_estimate, random_correlation, random_sigma12,
    rer_bound_pairwise, rer_bound_two_block, BlockGaussianSpec, CorrelationSpec, GaussianSampler,
    HermiteAdditiveFunction,
};
use extrap_cert::hermite::{density_recovery_error, mehler_grid_error, orthonormality_error, HermiteBasis};
use extrap_cert::lowerbound::{build_witness, random_band, random_cap};
use extrap_cert::numerics::SymMatrix;
use extrap_cert::rng::{seeded, BoxMuller};

const SOUNDNESS_TOL: f64 = 1e-8;
const CONNECTIVITY_TOL: f64 = 1e-8;
const WORKED_TOL: f64 = 1e-9;
const MEHLER_TOL: f64 = 1e-8;
const DENSITY_TOL: f64 = 1e-10;
const ORTHO_TOL: f64 = 1e-6;
const KAPPA_TOL: f64 = 1e-9;
const LEMMA5_TOL: f64 = 1e-9;

/// Training budget for criteria 12 and 13; every other setting is the desk default.
const EXPERIMENT_EPOCHS: usize = 300;
const EXPERIMENT_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const UNDERSIZED_WIDTH: usize = 8;
const REGULARIZERS: [Reg; 2] = [Reg::L1(1e-5), Reg::L2(1e-4)];

struct Outcome {
    pass: bool,
    detail: String,
    /// Bit patterns of every computed number, for the determinism check.
    bits: Vec<u64>,
}

fn bits(vals: &[f64]) -> Vec<u64> {
    vals.iter().map(|v| v.to_bits()).collect()
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed())
}

fn random_arities<R: Rng>(k: usize, max: usize, rng: &mut R) -> Vec<usize> {
    (0..k).map(|_| rng.gen_range(2..=max)).collect()
}

/// Same support as `p`, fresh weights.
fn reweighted<R: Rng>(p: &DiscreteJoint, rng: &mut R) -> DiscreteJoint {
    let w: Vec<f64> = p
        .table()
        .values()
        .iter()
        .map(|&m| if m > 0.0 { rng.gen_range(0.05..1.0) } else { 0.0 })
        .collect();
    DiscreteJoint::from_weights(p.arities().to_vec(), w).unwrap()
}

fn soundness_sweep(k: usize, max_arity: usize, n: usize, seed: u64, disconnected: usize) -> (Outcome, usize, usize) {
    let mut rng = seeded(seed);
    let (mut worst_gap, mut violations) = (f64::NEG_INFINITY, 0);
    let (mut exact_inf, mut bound_inf, mut misclassified) = (0, 0, 0);
    let mut out = Vec::new();
    for i in 0..n {
        let (p, q) = if i < disconnected {
            let r1 = rng.gen_range(2..=max_arity);
            let r2 = rng.gen_range(2..=max_arity);
            let p = random_block_diagonal(r1, r2, 2, &mut rng).unwrap();
            let q = reweighted(&p, &mut rng);
            (p, q)
        } else if i % 5 == 4 {
            // Independent supports: the target may put mass where the source has none.
            let ar = random_arities(k, max_arity, &mut rng);
            let d = rng.gen_range(0.4..1.0);
            (random_joint(&ar, d, &mut rng).unwrap(), random_joint(&ar, d, &mut rng).unwrap())
        } else {
            let ar = random_arities(k, max_arity, &mut rng);
            let d = rng.gen_range(0.3..=1.0);
            random_pair_shared_support(&ar, d, &mut rng).unwrap()
        };
        let b = rer_upper_bound_discrete(&p, &q).unwrap().bound;
        let e = exact_rer_discrete(&p, &q).unwrap().tau;
        out.extend([b, e]);
        exact_inf += e.is_infinite() as usize;
        bound_inf += b.is_infinite() as usize;
        if e.is_infinite() && !b.is_infinite() {
            misclassified += 1;
        }
        if e.is_finite() && b.is_finite() {
            worst_gap = worst_gap.max(e - b);
            if e > b + SOUNDNESS_TOL {
                violations += 1;
            }
        }
    }
    let pass = violations == 0 && misclassified == 0;
    let detail = format!(
        "{n} instances, {violations} violations, max(exact - bound) = {worst_gap:.3e}, \
         exact=inf {exact_inf} (all with bound=inf: {}), bound=inf {bound_inf}",
        misclassified == 0
    );
    (
        Outcome {
            pass,
            detail,
            bits: bits(&out),
        },
        exact_inf,
        bound_inf,
    )
}

fn criterion_1() -> Outcome {
    let ((mut o, _, _), t) = timed(|| soundness_sweep(2, 6, 200, 101, 30));
    o.pass &= t < Duration::from_secs(10);
    o.detail = format!("{} [{:.2}s < 10s]", o.detail, t.as_secs_f64());
    o
}

fn criterion_2() -> Outcome {
    let ((mut o, _, _), t) = timed(|| soundness_sweep(3, 4, 50, 202, 0));
    o.pass &= t < Duration::from_secs(10);
    o.detail = format!("{} [{:.2}s < 10s]", o.detail, t.as_secs_f64());
    o
}

fn criterion_3() -> Outcome {
    let mut rng = seeded(303);
    let (mut disagree, mut block_finite, mut connected_count) = (0, 0, 0);
    let mut out = Vec::new();
    for i in 0..200 {
        let block = i < 20;
        let p = if block {
            let r1 = rng.gen_range(2..=6);
            let r2 = rng.gen_range(2..=6);
            let c = rng.gen_range(2..=r1.min(r2));
            random_block_diagonal(r1, r2, c, &mut rng).unwrap()
        } else {
            let ar = random_arities(2, 6, &mut rng);
            random_joint(&ar, rng.gen_range(0.15..=1.0), &mut rng).unwrap()
        };
        let connected = is_connected(&p).unwrap();
        let l2 = lambda2_normalized(&p);
        connected_count += connected as usize;
        if connected != (l2 > CONNECTIVITY_TOL) {
            disagree += 1;
        }
        if block {
            let b = rer_upper_bound_discrete(&p, &p).unwrap().bound;
            if b.is_finite() {
                block_finite += 1;
            }
            out.push(b);
        }
        out.push(l2);
    }
    Outcome {
        pass: disagree == 0 && block_finite == 0,
        detail: format!(
            "200 instances ({connected_count} connected), {disagree} disagreements; \
             20 block-diagonal with finite bound: {block_finite}"
        ),
        bits: bits(&out),
    }
}

fn criterion_4() -> Outcome {
    let u = DiscreteJoint::uniform(vec![2, 2]).unwrap();
    let b = rer_upper_bound_discrete(&u, &u).unwrap();
    let e = exact_rer_discrete(&u, &u).unwrap().tau;
    let l2 = lambda2_normalized(&u);
    let spectrum = discrete::build_kernel(&u).normalized_spectrum();
    let expected = [0.0, 1.0, 1.0, 2.0];
    let spec_ok = spectrum.len() == 4 && spectrum.iter().zip(expected).all(|(s, x)| (s - x).abs() <= WORKED_TOL);
    let pass = (b.bound - 2.0).abs() <= WORKED_TOL && (e - 1.0).abs() <= WORKED_TOL && (l2 - 1.0).abs() <= WORKED_TOL && spec_ok;
    Outcome {
        pass,
        detail: format!("bound {:?}, exact {e:?}, lambda_2 {l2:?}, spectrum {spectrum:.3?}", b.bound),
        bits: vec![],
    }
}

fn criterion_5() -> Outcome {
    let ((per_rho, dens), t) = timed(|| {
        let basis = HermiteBasis::new(60).unwrap();
        let per: Vec<(f64, f64)> = [-0.9, -0.5, -0.2, 0.2, 0.5, 0.9]
            .iter()
            .map(|&r| (r, mehler_grid_error(&basis, &[r], 61, 3.0, 60).unwrap()))
            .collect();
        let dens = density_recovery_error(&[-0.9, -0.5, -0.2, 0.2, 0.5, 0.9], 61, 3.0).unwrap();
        (per, dens)
    });
    let worst = per_rho.iter().map(|p| p.1).fold(0.0, f64::max);
    let failing: Vec<String> = per_rho
        .iter()
        .filter(|p| p.1 > MEHLER_TOL)
        .map(|(r, e)| format!("rho {r}: {e:.2e}"))
        .collect();
    let pass = worst <= MEHLER_TOL && dens <= DENSITY_TOL && t < Duration::from_secs(5);
    Outcome {
        pass,
        detail: format!(
            "61x61 grid on [-3,3]^2, max series error {worst:.3e} (above 1e-8: {}), density recovery {dens:.2e} \
             [{:.2}s < 5s]",
            if failing.is_empty() { "none".to_string() } else { failing.join(", ") },
            t.as_secs_f64()
        ),
        bits: vec![],
    }
}

fn criterion_6() -> Outcome {
    let e = orthonormality_error(10, 12.0, 4001);
    Outcome {
        pass: e <= ORTHO_TOL,
        detail: format!("max |<psi_m, psi_n> - delta_mn| over m, n <= 10: {e:.2e}"),
        bits: vec![],
    }
}

fn criterion_7() -> Outcome {
    let mut g = BoxMuller::from_seed(707);
    let (mut violations, mut worst_slack) = (0, f64::INFINITY);
    let mut out = Vec::new();
    for i in 0..100 {
        let d = [2, 3, 5][i % 3];
        let p = CorrelationSpec::standard(random_correlation(d, 0.05, &mut g).unwrap()).unwrap();
        let q = CorrelationSpec::standard(random_correlation(d, 0.0, &mut g).unwrap()).unwrap();
        let k = exact_kappa(&p, &q, 60).unwrap().kappa;
        let b = rer_bound_pairwise(&p).unwrap().bound;
        worst_slack = worst_slack.min(b - k);
        if k > b + SOUNDNESS_TOL {
            violations += 1;
        }
        out.extend([k, b]);
    }
    let p = CorrelationSpec::standard(SymMatrix::identity(2)).unwrap();
    let q = CorrelationSpec::standard(SymMatrix::new(nalgebra::dmatrix![1.0, 0.8; 0.8, 1.0]).unwrap()).unwrap();
    let k = exact_kappa(&p, &q, 60).unwrap().kappa;
    Outcome {
        pass: violations == 0 && (k - 1.8).abs() <= KAPPA_TOL,
        detail: format!(
            "100 pairs, {violations} violations, min(bound - kappa) = {worst_slack:.3e}; rho_P=0, rho_Q=0.8 -> kappa {k:?}"
        ),
        bits: bits(&out),
    }
}

fn criterion_8() -> Outcome {
    let mut g = BoxMuller::from_seed(808);
    let (mut l3, mut l4, mut l5) = (0, 0, 0);
    let mut out = Vec::new();
    for i in 0..50 {
        let d = 2 + i % 5;
        let sigma = random_correlation(d, 0.0, &mut g).unwrap();
        let r3 = lemma3_check(&sigma, 6).unwrap();
        l3 += r3.holds as usize;
        out.extend(&r3.lambda_min_powers);
        let d2 = 1 + i % 4;
        let s12 = random_sigma12(d, d2, 1.0, &mut g).unwrap();
        l4 += lemma4_check(&s12).unwrap() as usize;
        let r5 = lemma5_check(&s12).unwrap();
        l5 += (r5.residual <= LEMMA5_TOL) as usize;
        out.push(r5.residual);
    }
    Outcome {
        pass: l3 == 50 && l4 == 50 && l5 == 50,
        detail: format!("elementwise powers {l3}/50, sigma_max <= 1 {l4}/50, lambda_min = 1 - sigma_max {l5}/50"),
        bits: bits(&out),
    }
}

const MC_SAMPLES: usize = 100_000;

fn criterion_9() -> Outcome {
    let (res, t) = timed(|| {
        let mut g = BoxMuller::from_seed(909);
        let mut rng = seeded(910);
        let (mut violations, mut worst) = (0, 0.0_f64);
        let mut out = Vec::new();
        for inst in 0..20u64 {
            let gamma = g.uniform();
            let spec = BlockGaussianSpec::new(random_sigma12(4, 4, gamma, &mut g).unwrap()).unwrap();
            let q_spec = BlockGaussianSpec::new(random_sigma12(4, 4, g.uniform(), &mut g).unwrap()).unwrap();
            let bound = rer_bound_two_block(&spec).unwrap();
            let p = GaussianSampler::standard(&spec.block_matrix(), 0).unwrap();
            let q = GaussianSampler::standard(&q_spec.block_matrix(), 0).unwrap();
            for j in 0..50u64 {
                let f1 = HermiteAdditiveFunction::random(3, 4, &mut rng);
                let f2 = HermiteAdditiveFunction::random(3, 4, &mut rng);
                let r =
                    mc_ratio_estimate(|x| f1.eval(x), |x| f2.eval(x), 4, &p, &q, MC_SAMPLES, inst * 1000 + j).unwrap();
                worst = worst.max(r.ratio / bound.bound);
                if r.ratio > bound.bound * (1.0 + 3.0 * r.stderr) {
                    violations += 1;
                }
                out.extend([r.ratio, r.stderr]);
            }
        }
        (violations, worst, out)
    });
    let (violations, worst, out) = res;
    Outcome {
        pass: violations == 0 && t < Duration::from_secs(120),
        detail: format!(
            "20 specs x 50 pairs x 1e5 samples, {violations} violations, max ratio/bound = {worst:.3} [{:.1}s < 120s]",
            t.as_secs_f64()
        ),
        bits: bits(&out),
    }
}

fn criterion_10() -> Outcome {
    let mut g = BoxMuller::from_seed(1010);
    let p = random_band(3, 400, 0.3, &mut g);
    let q = random_cap(3, 200, 0.9, &mut g);
    let mut ok = true;
    let mut parts = Vec::new();
    let mut out = Vec::new();
    for c in [1.0, 10.0, 100.0] {
        let (_, r) = build_witness(&p, &q, 0.5, c).unwrap();
        ok &= r.max_abs_on_p == 0.0 && r.min_on_q >= c;
        parts.push(format!("c={c}: max|f|_P={} min f_Q={:.3}", r.max_abs_on_p, r.min_on_q));
        out.extend([r.max_abs_on_p, r.min_on_q]);
    }
    Outcome {
        pass: ok,
        detail: parts.join("; "),
        bits: bits(&out),
    }
}

fn criterion_11() -> Outcome {
    let mut rng = seeded(1111);
    let (mut holds, mut finite) = (0, 0);
    let mut out = Vec::new();
    for i in 0..100 {
        let k = 2 + i % 2;
        let ar = random_arities(k, 4, &mut rng);
        let (p, q) = if i % 4 == 3 {
            (random_joint(&ar, 0.8, &mut rng).unwrap(), random_joint(&ar, 0.8, &mut rng).unwrap())
        } else {
            random_pair_shared_support(&ar, rng.gen_range(0.5..=1.0), &mut rng).unwrap()
        };
        let y = ProductTable::from_fn(ar.clone(), |_| rng.gen_range(-1.0..1.0)).unwrap();
        let r = p.basis_dim();
        let fstar = AdditiveCoefficients::new(&ar, (0..r).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let f = AdditiveCoefficients::new(&ar, (0..r).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let rep = check_prop1(&p, &q, &y, &fstar, &f).unwrap();
        holds += rep.holds as usize;
        finite += rep.rhs.is_finite() as usize;
        out.extend([rep.lhs, rep.rhs]);
    }
    Outcome {
        pass: holds == 100,
        detail: format!("{holds}/100 hold ({finite} with a finite right-hand side)"),
        bits: bits(&out),
    }
}

fn experiment_config() -> ExperimentConfig {
    ExperimentConfig {
        epochs: EXPERIMENT_EPOCHS,
        ..ExperimentConfig::default()
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn loss_bits(r: &RunReport) -> Vec<u64> {
    bits(&[r.id_curve.clone(), r.ood_curve.clone()].concat())
}

fn criterion_12(runs: &[Comparison], elapsed: Duration) -> Outcome {
    let gap: Vec<f64> = runs.iter().map(|c| c.unstructured.ood_loss / c.structured.ood_loss).collect();
    let s_ratio: Vec<f64> = runs.iter().map(|c| c.structured.ratio()).collect();
    let id_ratio: Vec<f64> = runs.iter().map(|c| c.unstructured.id_loss / c.structured.id_loss).collect();
    let matched = runs.iter().filter(|c| c.matched).count();
    let (mg, ms) = (median(gap.clone()), median(s_ratio.clone()));
    let pass = matched == runs.len() && mg >= 3.0 && ms <= 3.0 && elapsed < Duration::from_secs(600);
    Outcome {
        pass,
        detail: format!(
            "{} epochs, seeds {EXPERIMENT_SEEDS:?}: ID matched within 2x {matched}/{}; unstructured/structured OOD \
             {gap:.2?} (median {mg:.2} >= 3); structured OOD/ID {s_ratio:.2?} (median {ms:.2} <= 3); \
             unstructured/structured ID {id_ratio:.2?} [{:.0}s < 600s]",
            EXPERIMENT_EPOCHS,
            runs.len(),
            elapsed.as_secs_f64()
        ),
        bits: runs.iter().flat_map(|c| [loss_bits(&c.structured), loss_bits(&c.unstructured)].concat()).collect(),
    }
}

fn ablation_runs(seed: u64) -> (RunReport, Vec<RunReport>) {
    let cfg = experiment_config().with_seed(seed);
    let small = ablation_sweep(&Sweep::Widths(vec![UNDERSIZED_WIDTH]), &cfg, 1).unwrap().remove(0);
    let regs = [Reg::None].into_iter().chain(REGULARIZERS).collect();
    (small, ablation_sweep(&Sweep::Regs(regs), &cfg, 1).unwrap())
}

fn criterion_13(runs: &[Comparison], ablations: &[(RunReport, Vec<RunReport>)]) -> Outcome {
    let id_gap: Vec<f64> = ablations.iter().map(|(small, regs)| small.id_loss / regs[0].id_loss).collect();
    let mut reg_ok = true;
    let mut reg_detail = Vec::new();
    for (c, (_, regs)) in runs.iter().zip(ablations) {
        let s = c.structured.ood_loss;
        let r: Vec<f64> = regs[1..].iter().map(|r| r.ood_loss / s).collect();
        reg_ok &= r.iter().all(|&x| x > 1.0);
        reg_detail.push(format!("{r:.2?}"));
    }
    let mg = median(id_gap.clone());
    Outcome {
        pass: mg >= 10.0 && reg_ok,
        detail: format!(
            "ID(width {UNDERSIZED_WIDTH}) / ID(width 64) {id_gap:.1?} (median {mg:.1} >= 10); \
             regularized OOD / structured OOD for {:?} per seed {} (all > 1: {reg_ok})",
            REGULARIZERS.map(|r| r.to_string()),
            reg_detail.join(" ")
        ),
        bits: ablations.iter().flat_map(|(s, regs)| {
            let mut b = loss_bits(s);
            regs.iter().for_each(|r| b.extend(loss_bits(r)));
            b
        })
        .collect(),
    }
}

fn report_to(results: &mut Vec<(u32, Outcome)>, n: u32, o: Outcome) {
    println!("criterion {n:>2}: {}  {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    results.push((n, o));
}

fn main() -> ExitCode {
    let mut results: Vec<(u32, Outcome)> = Vec::new();
    let mut report = |n: u32, o: Outcome| report_to(&mut results, n, o);
    report(1, criterion_1());
    report(2, criterion_2());
    report(3, criterion_3());
    report(4, criterion_4());
    report(5, criterion_5());
    report(6, criterion_6());
    report(7, criterion_7());
    report(8, criterion_8());
    report(9, criterion_9());
    report(10, criterion_10());
    report(11, criterion_11());

    let (runs, elapsed) = timed(|| {
        EXPERIMENT_SEEDS
            .iter()
            .map(|&s| compare(&experiment_config().with_seed(s)).unwrap())
            .collect::<Vec<_>>()
    });
    report(12, criterion_12(&runs, elapsed));
    let ablations: Vec<_> = EXPERIMENT_SEEDS.iter().map(|&s| ablation_runs(s)).collect();
    report(13, criterion_13(&runs, &ablations));

    // Second invocation of every randomized run. The training runs are
    // repeated for the first seed only.
    let again: Vec<(u32, Vec<u64>)> = vec![
        (1, criterion_1().bits),
        (2, criterion_2().bits),
        (3, criterion_3().bits),
        (7, criterion_7().bits),
        (8, criterion_8().bits),
        (9, criterion_9().bits),
        (10, criterion_10().bits),
        (11, criterion_11().bits),
    ];
    let mut mismatched: Vec<String> = again
        .iter()
        .filter(|(n, b)| results.iter().find(|(m, _)| m == n).map(|(_, o)| &o.bits) != Some(b))
        .map(|(n, _)| n.to_string())
        .collect();
    let c = compare(&experiment_config().with_seed(EXPERIMENT_SEEDS[0])).unwrap();
    if !(c.structured.same_losses(&runs[0].structured) && c.unstructured.same_losses(&runs[0].unstructured)) {
        mismatched.push("12".into());
    }
    let (small, regs) = ablation_runs(EXPERIMENT_SEEDS[0]);
    let (small0, regs0) = &ablations[0];
    if !(small.same_losses(small0) && regs.iter().zip(regs0).all(|(a, b)| a.same_losses(b))) {
        mismatched.push("13".into());
    }
    report_to(
        &mut results,
        14,
        Outcome {
            pass: mismatched.is_empty(),
            detail: format!(
                "reran criteria 1-3, 7-11 and seed {} of 12-13: mismatches: {}",
                EXPERIMENT_SEEDS[0],
                if mismatched.is_empty() { "none".into() } else { mismatched.join(", ") }
            ),
            bits: vec![],
        },
    );

    let failed: Vec<String> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| n.to_string()).collect();
    println!(
        "acceptance: {}/{} criteria pass{}",
        results.len() - failed.len(),
        results.len(),
        if failed.is_empty() { String::new() } else { format!("; failing: {}", failed.join(", ")) }
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
