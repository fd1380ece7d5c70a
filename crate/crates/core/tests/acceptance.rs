//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails. Set `PDLAB_ACCEPT=1,4,12` to run a
//! subset.

mod common;

use std::collections::HashMap;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::*;
use pdlab::datagen::{Example, LinearTruth, Truth, TruthKind, FEATURES};
use pdlab::harness::{
    run_experiment, run_with, sweep, train_teacher, Context, Experiment, ExperimentConfig, Variant,
    WarmStart,
};
use pdlab::metrics::{excess_label_loss, model_excess_loss, EvalSet};
use pdlab::nnet::{checkpoint, Activation, ArchKind, ArchitectureSpec, Network};
use pdlab::plot::render_figures;
use pdlab::report::{write_pairs_csv, write_sweep_csv};
use pdlab::stream::{derive_pair_seeds, permutation_for_window, windowed_stream, InitMode, StreamConfig};
use statrs::distribution::{ChiSquared, ContinuousCDF};

const T18: u64 = 1 << 18;
const T20: u64 = 1 << 20;
const T22: u64 = 1 << 22;

/// Tolerances and thresholds, pinned.
const NULL_RUNTIME: Duration = Duration::from_secs(60);
const ORACLE_TOL: f64 = 1e-12;
/// KL(0.8 || 0.5), quoted to five decimals.
const KL_QUOTED: f64 = 0.19274;
const KL_QUOTED_TOL: f64 = 5e-6;
const KL_HAND_TOL: f64 = 1e-6;
const CONVEX_MAX_LOSS: f64 = 0.01;
const CONVEX_RUNTIME: Duration = Duration::from_secs(300);
const LOSS_RATIO_MAX: f64 = 1.25;
const PD_ORDER_FACTOR: f64 = 10.0;
const MONOTONE_SLACK: f64 = 0.10;
const SMOOTH_SEPARATION: f64 = 2.0;
const SMOOTH_SE_BAND: f64 = 2.0;
const REVERSAL_RATIO: f64 = 0.5;
const WARM_RATIO: f64 = 0.5;
const CHI2_P_MIN: f64 = 0.001;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn cfg(truth: TruthKind, arch: ArchKind, act: Activation, t: u64, log2_z: u32, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        truth_kind: truth,
        architecture: ArchitectureSpec::new(arch, act).unwrap(),
        stream: StreamConfig {
            total_examples: t,
            log2_z,
            master_seed: seed,
            ..StreamConfig::default()
        },
        ..ExperimentConfig::default()
    }
}

fn desk_tower() -> ArchKind {
    ArchKind::QuadTower(vec![256, 128])
}

/// Runs shared between criteria.
#[derive(Default)]
struct Cache {
    runs: HashMap<String, Experiment>,
}

impl Cache {
    fn run(&mut self, c: &ExperimentConfig) -> &Experiment {
        let key = pdlab::config::emit_config(c);
        self.runs.entry(key).or_insert_with(|| {
            let t = Instant::now();
            let e = run_experiment(c).unwrap();
            eprintln!(
                "    [{} z={} pairs={} T={}] pd {:.3e} loss {:.3e} ({:.0?})",
                e.row.variant,
                c.stream.log2_z,
                e.pairs.len(),
                c.stream.total_examples,
                e.row.mean_pd,
                e.row.mean_loss,
                t.elapsed()
            );
            e
        })
    }
}

fn crit1_null_control(_: &mut Cache) -> Outcome {
    let mut worst = Duration::ZERO;
    for arch in [
        ArchKind::Linear,
        ArchKind::SingleHidden,
        ArchKind::DoubleHidden,
        ArchKind::tower(),
        ArchKind::wide(),
        desk_tower(),
    ] {
        let truth = if matches!(arch, ArchKind::QuadTower(_)) {
            TruthKind::Quadratic
        } else {
            TruthKind::Linear
        };
        let mut c = cfg(truth, arch, Activation::RELU, T18, 0, 11);
        c.pairs = 1;
        let t = Instant::now();
        let e = run_experiment(&c).unwrap();
        let took = t.elapsed();
        worst = worst.max(took);
        let (a, b) = &e.networks[0];
        let same = checkpoint::encode(a) == checkpoint::encode(b);
        if e.pairs[0].relative_pd != 0.0 || !same || took > NULL_RUNTIME {
            return outcome(
                false,
                format!(
                    "{}: pd {:e}, identical checkpoints {same}, {took:.1?}",
                    c.architecture.descriptor(),
                    e.pairs[0].relative_pd
                ),
            );
        }
    }
    outcome(true, format!("pd = 0 and byte-identical checkpoints for all 6 architectures; slowest {worst:.1?}"))
}

fn crit2_gradients(_: &mut Cache) -> Outcome {
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut skipped = 0;
    let mut seed = 100;
    for arch in gradcheck_archs() {
        for act in activations() {
            seed += 1;
            let r = gradient_check(ArchitectureSpec::new(arch.clone(), act).unwrap(), seed, 100, 64);
            worst = worst.max(r.max_rel);
            checked += r.checked;
            skipped += r.skipped;
            if r.checked == 0 {
                return outcome(false, format!("nothing checked for {arch:?} {act}"));
            }
        }
    }
    outcome(
        worst <= GRAD_TOL,
        format!("24 combos, {checked} checks ({skipped} near kinks skipped), max rel err {worst:.2e} <= {GRAD_TOL:e}"),
    )
}

fn crit3_truth_oracle(_: &mut Cache) -> Outcome {
    let mut rng = pdlab::rng::stream(3);
    let lin = pdlab::datagen::sample_linear_truth(&mut rng);
    let truth = Truth::Linear(lin.clone());
    let eval = EvalSet::draw(&truth, 3, 1 << 13);
    let exact = excess_label_loss(&eval, eval.true_positive()).unwrap();
    // A linear network holding the truth's coefficients predicts p_theta.
    let mut net: Network<f64> = Network::zeros(ArchitectureSpec::linear()).unwrap();
    net.params_mut()[..FEATURES].copy_from_slice(lin.theta());
    let as_model = model_excess_loss(&net, &eval).unwrap();

    let p: f64 = 0.8;
    let mut theta = [0.0; FEATURES];
    theta[0] = (p / (1.0 - p)).ln();
    let one = Truth::Linear(LinearTruth::new(theta));
    let mut x = [0u8; FEATURES];
    x[0] = 1;
    let single = EvalSet::from_inputs(&one, vec![x]);
    let hand = excess_label_loss(&single, &[0.5]).unwrap();
    let closed_form = 0.8 * (0.8f64 / 0.5).ln() + 0.2 * (0.2f64 / 0.5).ln();
    let pass = exact.abs() <= ORACLE_TOL
        && as_model.abs() <= ORACLE_TOL
        && (hand - closed_form).abs() <= KL_HAND_TOL
        && (hand - KL_QUOTED).abs() <= KL_QUOTED_TOL;
    outcome(
        pass,
        format!(
            "self loss {exact:.1e}, truth-as-network {as_model:.1e}, KL(0.8||0.5) = {hand:.7} (closed form {closed_form:.7})"
        ),
    )
}

fn crit4_convex(cache: &mut Cache) -> Outcome {
    let c = cfg(TruthKind::Linear, ArchKind::Linear, Activation::IDENTITY, T22, 0, 4);
    let t = Instant::now();
    let e = cache.run(&c);
    let took = t.elapsed();
    outcome(
        e.row.mean_loss <= CONVEX_MAX_LOSS && took <= CONVEX_RUNTIME,
        format!(
            "mean excess loss {:.3e} <= {CONVEX_MAX_LOSS} over {} pairs in {took:.0?}",
            e.row.mean_loss, e.row.completed
        ),
    )
}

fn crit5_loss_invariance(cache: &mut Cache) -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    for (arch, act) in [
        (ArchKind::Linear, Activation::IDENTITY),
        (ArchKind::DoubleHidden, Activation::IDENTITY),
        (ArchKind::DoubleHidden, Activation::RELU),
    ] {
        let losses: Vec<f64> = [0, 8, 14]
            .into_iter()
            .map(|z| cache.run(&cfg(TruthKind::Linear, arch.clone(), act, T20, z, 5)).row.mean_loss)
            .collect();
        let max = losses.iter().cloned().fold(f64::MIN, f64::max);
        let min = losses.iter().cloned().fold(f64::MAX, f64::min);
        let ratio = max / min;
        pass &= ratio <= LOSS_RATIO_MAX;
        let label = ArchitectureSpec::new(arch, act).unwrap().label();
        notes.push(format!("{label} {ratio:.3}"));
    }
    outcome(pass, format!("max/min loss over log2z 0,8,14: {} (<= {LOSS_RATIO_MAX})", notes.join(", ")))
}

fn crit6_pd_ordering(cache: &mut Cache) -> Outcome {
    let relu = {
        let mut c = cfg(TruthKind::Linear, ArchKind::SingleHidden, Activation::RELU, T20, 0, 6);
        c.init_mode = InitMode::Distinct;
        cache.run(&c).row.mean_pd
    };
    let ident = {
        let mut c = cfg(TruthKind::Linear, ArchKind::SingleHidden, Activation::IDENTITY, T20, 0, 6);
        c.init_mode = InitMode::Distinct;
        cache.run(&c).row.mean_pd
    };
    let emul = {
        let mut c = cfg(TruthKind::Linear, ArchKind::SingleHidden, Activation::IDENTITY, T20, 0, 6);
        c.emulate_batch_nondeterminism = true;
        cache.run(&c).row.mean_pd
    };
    outcome(
        relu >= PD_ORDER_FACTOR * ident && ident >= PD_ORDER_FACTOR * emul,
        format!("relu-1 diff {relu:.2e} >= 10x identity-1 diff {ident:.2e} >= 10x identity-1 emulated {emul:.2e}"),
    )
}

fn crit7_monotone(cache: &mut Cache) -> Outcome {
    let pds: Vec<f64> = [0, 6, 12]
        .into_iter()
        .map(|z| cache.run(&cfg(TruthKind::Linear, ArchKind::DoubleHidden, Activation::RELU, T20, z, 7)).row.mean_pd)
        .collect();
    let mut inversions = 0;
    let mut ok = true;
    for w in pds.windows(2) {
        if w[1] < w[0] {
            inversions += 1;
            ok &= (w[0] - w[1]) <= MONOTONE_SLACK * w[0];
        }
    }
    outcome(
        ok && inversions <= 1,
        format!("relu-2 pd at log2z 0,6,12: {:.2e}, {:.2e}, {:.2e}", pds[0], pds[1], pds[2]),
    )
}

fn tower_cfg(act: Activation) -> ExperimentConfig {
    cfg(TruthKind::Quadratic, desk_tower(), act, T20, 6, 8)
}

/// `lo <= hi` with the required separation, or within the standard-error
/// band (inconclusive). Returns (passes, verdict).
fn compare(lo: (f64, f64), hi: (f64, f64)) -> (bool, &'static str) {
    if hi.0 >= SMOOTH_SEPARATION * lo.0 {
        (true, "separated")
    } else if (hi.0 - lo.0).abs() <= SMOOTH_SE_BAND * (lo.1.hypot(hi.1)) {
        (true, "inconclusive")
    } else {
        (false, "violated")
    }
}

fn crit8_smooth(cache: &mut Cache) -> Outcome {
    let stat = |e: &Experiment| (e.row.mean_pd, e.row.se_pd);
    let ident = stat(cache.run(&tower_cfg(Activation::IDENTITY)));
    let relu = stat(cache.run(&tower_cfg(Activation::RELU)));
    let mut best: Option<(f64, (f64, f64), f64)> = None;
    for beta in [0.5, 1.0, 2.0] {
        let e = cache.run(&tower_cfg(Activation::smelu(beta).unwrap()));
        let cand = (beta, stat(e), e.row.mean_loss);
        if best.is_none_or(|b| cand.2 < b.2) {
            best = Some(cand);
        }
    }
    let (beta, smelu, _) = best.unwrap();
    let (p1, v1) = compare(ident, smelu);
    let (p2, v2) = compare(smelu, relu);
    outcome(
        p1 && p2,
        format!(
            "identity {:.2e}±{:.1e} <= smelu(beta={beta}) {:.2e}±{:.1e} [{v1}] <= relu {:.2e}±{:.1e} [{v2}]",
            ident.0, ident.1, smelu.0, smelu.1, relu.0, relu.1
        ),
    )
}

fn crit9_reversal(cache: &mut Cache) -> Outcome {
    let tower = cache.run(&tower_cfg(Activation::RELU)).row.mean_loss;
    let linear = cache
        .run(&cfg(TruthKind::Quadratic, ArchKind::Linear, Activation::IDENTITY, T20, 6, 8))
        .row
        .mean_loss;
    outcome(
        tower <= REVERSAL_RATIO * linear,
        format!("relu tower loss {tower:.3e} <= 0.5 x linear {linear:.3e} (ratio {:.3})", tower / linear),
    )
}

fn crit10_warm_start(cache: &mut Cache) -> Outcome {
    let cold_cfg = cfg(TruthKind::Quadratic, desk_tower(), Activation::RELU, T20, 12, 10);
    let cold = cache.run(&cold_cfg).row.clone();
    let warm_cfg = ExperimentConfig {
        warm_start: Some(WarmStart {
            checkpoint: None,
            lr_ratio: 0.1,
        }),
        ..cold_cfg.clone()
    };
    let teacher: Network<f64> = train_teacher(&warm_cfg, Arc::new(warm_cfg.truth().unwrap())).unwrap();
    let warm = run_with(&Context::with_teacher(warm_cfg, teacher).unwrap()).unwrap().row;
    eprintln!("    [warm] pd {:.3e} loss {:.3e}", warm.mean_pd, warm.mean_loss);
    outcome(
        warm.mean_pd <= WARM_RATIO * cold.mean_pd,
        format!(
            "warm pd {:.2e} <= 0.5 x cold {:.2e} (ratio {:.3}); losses warm {:.2e}, cold {:.2e}",
            warm.mean_pd,
            cold.mean_pd,
            warm.mean_pd / cold.mean_pd,
            warm.mean_loss,
            cold.mean_loss
        ),
    )
}

fn sweep_artifacts() -> Vec<Vec<u8>> {
    let mut base = cfg(TruthKind::Linear, ArchKind::DoubleHidden, Activation::RELU, 1 << 14, 0, 12);
    base.pairs = 3;
    base.eval_size = 512;
    let mut diff = base.clone();
    diff.init_mode = InitMode::Distinct;
    let mut swish = base.clone();
    swish.architecture = ArchitectureSpec::new(ArchKind::tower(), Activation::swish(1.0).unwrap()).unwrap();
    swish.emulate_batch_nondeterminism = true;
    let variants: Vec<Variant> = [base, diff, swish].into_iter().map(Variant::new).collect();
    let report = sweep(&variants, &[4, 0, 9]).unwrap();
    let mut pairs = Vec::new();
    write_pairs_csv(&report.experiments, &mut pairs).unwrap();
    let mut rows = Vec::new();
    write_sweep_csv(&report.rows, &mut rows).unwrap();
    let mut out = vec![pairs, rows];
    out.extend(render_figures(&report.rows, Some("acceptance")).into_iter().map(|(_, s)| s.into_bytes()));
    out
}

fn crit11_reproducible(_: &mut Cache) -> Outcome {
    let a = sweep_artifacts();
    let b = sweep_artifacts();
    let bytes: usize = a.iter().map(Vec::len).sum();
    outcome(a == b, format!("pairs.csv, sweep.csv and 2 SVGs byte-identical across reruns ({bytes} bytes)"))
}

fn crit12_streams(_: &mut Cache) -> Outcome {
    let mut rng = pdlab::rng::stream(12);
    let truth = Arc::new(Truth::Linear(pdlab::datagen::sample_linear_truth(&mut rng)));
    let key = |e: &Example| (e.x, e.y.as_bit());
    for log2_z in [0, 2, 6] {
        let sc = StreamConfig {
            total_examples: 1 << 14,
            log2_z,
            master_seed: 12,
            ..StreamConfig::default()
        };
        let seeds = derive_pair_seeds(12, 0, InitMode::Identical);
        let a: Vec<Example> = windowed_stream(sc, seeds.data_seed, seeds.shuffle_seed_a, truth.clone()).flatten().collect();
        let b: Vec<Example> = windowed_stream(sc, seeds.data_seed, seeds.shuffle_seed_b, truth.clone()).flatten().collect();
        if a.len() != 1 << 14 || b.len() != a.len() {
            return outcome(false, format!("z=2^{log2_z}: lengths {} and {}", a.len(), b.len()));
        }
        let w = sc.window_len() as usize;
        for (i, (wa, wb)) in a.chunks(w).zip(b.chunks(w)).enumerate() {
            let mut ka: Vec<_> = wa.iter().map(key).collect();
            let mut kb: Vec<_> = wb.iter().map(key).collect();
            ka.sort_unstable();
            kb.sort_unstable();
            if ka != kb {
                return outcome(false, format!("z=2^{log2_z}: window {i} multisets differ"));
            }
        }
        if log2_z > 0 && a == b {
            return outcome(false, format!("z=2^{log2_z}: orders identical"));
        }
    }

    const LEN: usize = 8;
    const SHUFFLES: u64 = 100_000;
    let mut counts = [[0u64; LEN]; LEN];
    for w in 0..SHUFFLES {
        for (pos, &item) in permutation_for_window(12, w, LEN).iter().enumerate() {
            counts[pos][item] += 1;
        }
    }
    let expected = SHUFFLES as f64 / LEN as f64;
    let stat: f64 = counts.iter().flatten().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let dof = ((LEN - 1) * (LEN - 1)) as f64;
    let p = 1.0 - ChiSquared::new(dof).unwrap().cdf(stat);
    outcome(
        p > CHI2_P_MIN,
        format!("window multisets equal for z = 1, 4, 64; shuffler chi2 = {stat:.1} on {dof} dof, p = {p:.3}"),
    )
}

type Criterion = fn(&mut Cache) -> Outcome;

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 12] = [
        ("null control", crit1_null_control),
        ("gradient correctness", crit2_gradients),
        ("truth oracle", crit3_truth_oracle),
        ("convex recovery", crit4_convex),
        ("loss-shuffle invariance", crit5_loss_invariance),
        ("PD ordering under distinct init", crit6_pd_ordering),
        ("PD monotone in z", crit7_monotone),
        ("smooth activation intermediacy", crit8_smooth),
        ("quadratic loss reversal", crit9_reversal),
        ("warm-start mitigation", crit10_warm_start),
        ("laboratory reproducibility", crit11_reproducible),
        ("stream invariants", crit12_streams),
    ];
    // The binary also receives libtest flags such as `--nocapture`; only the
    // environment selects criteria.
    let only: Option<Vec<usize>> = std::env::var("PDLAB_ACCEPT")
        .ok()
        .map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect());
    let mut cache = Cache::default();
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let t = Instant::now();
        let o = f(&mut cache);
        ran += 1;
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} criterion {n:>2} ({name}): {} [{:.1?}]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed()
        );
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
