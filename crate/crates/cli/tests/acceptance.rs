//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria 5 (full run) and 6 train several MNIST networks to completion
//! and take hours on one core; they run only with `ABSNET_ACCEPTANCE_FULL=1`.
//! MNIST is read from `$ABSNET_DATA_DIR` or `<workspace>/data/mnist`.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use absnet_core::data::SynthKind;
use absnet_core::ensemble::{final_accuracies, SynthRunConfig};
use absnet_core::models::{build_catalog, build_mlp, init_params, MNIST_INPUT};
use absnet_core::nn::{Activation, LayerKind, Network, Padding, Tensor};
use absnet_core::probe::{check_gradients, clamp_away_from_zero, gradient_profile, random_batch, GradCheckConfig};
use absnet_core::rng::splitmix64;
use absnet_core::stats::{acc_min_two_halves, accuracy_of, bootstrap, expected_test_accuracy, BootstrapConfig, EstimatorKind};

const FULL_ENV: &str = "ABSNET_ACCEPTANCE_FULL";
/// Seeds of the MNIST runs behind criteria 5 (full) and 6.
const MNIST_SEEDS: [u64; 3] = [0, 1, 2];

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn workspace() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn data_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("ABSNET_DATA_DIR").map(PathBuf::from).unwrap_or_else(|| workspace().join("data/mnist"));
    dir.join("t10k-labels-idx1-ubyte").is_file().then_some(dir)
}

fn full_mode() -> bool {
    std::env::var(FULL_ENV).is_ok_and(|v| v == "1")
}

fn absnet(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_absnet")).arg("-q").args(args).output().expect("absnet runs")
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn criterion_1() -> Outcome {
    let expected = [
        ("lenet", 368_426),
        ("small", 51_890),
        ("tiny", 10_615),
        ("conv120", 76_226),
        ("conv64conv120", 227_474),
        ("lenet+20dabs", 511_226),
    ];
    let mut got = Vec::new();
    let mut ok = true;
    for (name, want) in expected {
        let n = build_catalog::<f32>(name, Activation::Abs).unwrap().count_params();
        ok &= n == want;
        got.push(format!("{name}={n}"));
    }
    for (hidden, want) in [(&[5, 5][..], 57), (&[5][..], 27)] {
        let n = build_mlp::<f32>(2, hidden, Activation::Relu).unwrap().count_params();
        ok &= n == want;
        got.push(format!("mlp{hidden:?}={n}"));
    }
    check(ok, got.join(" "))
}

fn criterion_2() -> Outcome {
    let cfg = GradCheckConfig { include_input: true, ..GradCheckConfig::default() };
    let mut worst = 0.0f64;
    let mut at = String::new();
    let mut note = |err: f64, what: String| {
        if err >= worst {
            worst = err;
            at = what;
        }
    };
    let small = |input: &[usize], kinds: &[LayerKind]| {
        let mut net = Network::<f64>::new("layer", input, kinds).unwrap();
        init_params(&mut net, 1);
        net
    };
    let uniform = |shape: &[usize], seed: u64| {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|i| (splitmix64(seed ^ i as u64) >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0);
        Tensor::new(shape.to_vec(), data.collect()).unwrap()
    };
    for act in Activation::ALL {
        let net = small(&[6], &[LayerKind::act(act), LayerKind::dense(3)]);
        let x = clamp_away_from_zero(&uniform(&[4, 6], 2), 1e-2);
        note(check_gradients(&net, &x, &[0, 1, 2, 1], &cfg).unwrap().max_rel_error, format!("{act} layer"));
    }
    for padding in [Padding::Valid, Padding::Same] {
        let kinds = [LayerKind::conv(3, 3, padding), LayerKind::AvgPool2x2, LayerKind::Flatten, LayerKind::dense(4)];
        let net = small(&[2, 6, 6], &kinds);
        let r = check_gradients(&net, &uniform(&[2, 2, 6, 6], 3), &[3, 0], &cfg).unwrap();
        note(r.max_rel_error, format!("conv/{padding:?}+pool+flatten+dense"));
    }
    let catalog = [
        ("lenet", Activation::Abs),
        ("small", Activation::Abs),
        ("tiny", Activation::Abs),
        ("tiny", Activation::Relu),
        ("tiny", Activation::Tanh),
        ("tiny", Activation::Selu),
        ("conv120", Activation::Abs),
        ("conv64conv120", Activation::Abs),
        ("lenet+20dabs", Activation::Abs),
        ("lenet+20drelu", Activation::Tanh),
    ];
    for (name, act) in catalog {
        let mut net = build_catalog::<f64>(name, act).unwrap();
        init_params(&mut net, 2);
        let (x, y) = random_batch::<f64>(&MNIST_INPUT, 10, 2, 3).unwrap();
        let cfg = GradCheckConfig { max_coords: 600, ..GradCheckConfig::default() };
        note(check_gradients(&net, &x, &y, &cfg).unwrap().max_rel_error, format!("{name}/{act}"));
    }
    check(worst < 1e-6, format!("max relative error {worst:.2e} ({at}), bound 1e-6"))
}

fn criterion_3() -> Outcome {
    let mut net = build_catalog::<f64>("lenet+20dabs", Activation::Abs).unwrap();
    init_params(&mut net, 4);
    let (x, y) = random_batch::<f64>(&MNIST_INPUT, 10, 8, 5).unwrap();
    let trace = net.trace(&x).unwrap();
    let profile = gradient_profile(&net, &x, &y).unwrap();
    let mut worst = 0.0f64;
    let mut layers = 0;
    for l in &profile.layers {
        if net.layers()[l.index].activation() != Some(Activation::Abs) {
            continue;
        }
        if trace[l.index].data().contains(&0.0) {
            return Outcome::Fail(format!("layer {} input has exact zeros", l.index));
        }
        layers += 1;
        worst = worst.max((l.input_grad_norm - l.output_grad_norm).abs() / l.output_grad_norm);
    }
    check(worst < 1e-6 && layers == 24, format!("{layers} Abs layers, max relative norm change {worst:.2e}"))
}

fn criterion_4() -> Outcome {
    let mut detail = Vec::new();
    let mut ok = true;
    for kind in SynthKind::ALL {
        let cfg = SynthRunConfig::new("abs1x5".parse().unwrap(), kind);
        let accs = final_accuracies(&cfg, 20, 0).unwrap();
        let good = accs.iter().filter(|&&a| a >= 0.95).count();
        ok &= good >= 18;
        detail.push(format!("abs {kind} {good}/20>=0.95"));
    }
    for kind in [SynthKind::Cross, SynthKind::Circle] {
        let rate = |net: &str| {
            let cfg = SynthRunConfig::new(net.parse().unwrap(), kind);
            let accs = final_accuracies(&cfg, 50, 0).unwrap();
            accs.iter().filter(|&&a| a < 0.8).count() as f64 / 50.0
        };
        let (relu, abs) = (rate("relu1x5"), rate("abs1x5"));
        ok &= relu > abs;
        detail.push(format!("{kind} instability relu {relu:.2} vs abs {abs:.2}"));
    }
    check(ok, detail.join("; "))
}

fn train_summary(out: &Path, args: &[&str]) -> Result<serde_json::Value, String> {
    let out_s = out.to_string_lossy().to_string();
    let mut full = vec!["train", "--out", out_s.as_str()];
    full.extend_from_slice(args);
    let o = absnet(&full);
    if !o.status.success() {
        return Err(format!("absnet {} failed: {}", full.join(" "), String::from_utf8_lossy(&o.stderr)));
    }
    Ok(read_json(&out.join("summary.json")))
}

fn criterion_5_smoke(dir: &Path) -> Outcome {
    let started = Instant::now();
    let args = ["--arch", "small", "--activation", "abs", "--train-limit", "10000", "--stage-lrs", "1e-3", "--epoch-cap", "5"];
    match train_summary(&dir.join("smoke"), &args) {
        Err(e) => Outcome::Fail(e),
        Ok(s) => {
            let acc = s["test_accuracy"].as_f64().unwrap();
            let secs = started.elapsed().as_secs_f64();
            check(
                acc >= 0.96 && secs <= 300.0 && s["total_epochs"] == 5,
                format!("small+Abs, 10k train, 5 epochs: test {:.2}% (bar 96%), {secs:.0}s", 100.0 * acc),
            )
        }
    }
}

/// Full staircase runs of tiny with `act`, one per seed in [`MNIST_SEEDS`].
fn full_runs(dir: &Path, act: &str) -> Result<Vec<(f64, f64)>, String> {
    MNIST_SEEDS
        .iter()
        .map(|seed| {
            let started = Instant::now();
            let s = seed.to_string();
            let summary = train_summary(
                &dir.join(format!("tiny_{act}_seed{seed}")),
                &["--arch", "tiny", "--activation", act, "--estimator", "1", "--seed", &s],
            )?;
            Ok((summary["test_accuracy"].as_f64().unwrap(), started.elapsed().as_secs_f64()))
        })
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn criteria_5_full_and_6(dir: &Path) -> (Outcome, Outcome) {
    let abs = match full_runs(dir, "abs") {
        Ok(r) => r,
        Err(e) => return (Outcome::Fail(e.clone()), Outcome::Fail(e)),
    };
    let (acc0, secs0) = abs[0];
    let c5 = check(
        acc0 >= 0.986 && secs0 <= 3600.0,
        format!("tiny+Abs seed {}: test {:.2}% (bar 98.6%), {:.0} min", MNIST_SEEDS[0], 100.0 * acc0, secs0 / 60.0),
    );
    let tanh = match full_runs(dir, "tanh") {
        Ok(r) => r,
        Err(e) => return (c5, Outcome::Fail(e)),
    };
    let pct = |r: &[(f64, f64)]| r.iter().map(|(a, _)| format!("{:.2}", 100.0 * a)).collect::<Vec<_>>().join("/");
    let (m_abs, m_tanh) = (median(abs.iter().map(|r| r.0).collect()), median(tanh.iter().map(|r| r.0).collect()));
    let c6 = check(
        m_abs >= m_tanh - 0.001,
        format!(
            "seeds {MNIST_SEEDS:?}: abs {} (median {:.2}) vs tanh {} (median {:.2})",
            pct(&abs),
            100.0 * m_abs,
            pct(&tanh),
            100.0 * m_tanh
        ),
    );
    (c5, c6)
}

fn criterion_7() -> Outcome {
    let correct: Vec<bool> = (0..100).map(|i| i < 75).collect();
    let s = bootstrap(&correct, 10_000, 7, 0.95).unwrap();
    let sigma = (0.75f64 * 0.25 / 100.0).sqrt();
    let rel = (s.std - sigma).abs() / sigma;
    check(
        rel < 0.05 && (s.mean - 0.75).abs() < 0.005,
        format!("std {:.5} vs {sigma:.5} ({:.1}% off), mean {:.4}", s.std, 100.0 * rel, s.mean),
    )
}

fn criterion_8() -> Outcome {
    let cfg = BootstrapConfig { resamples: 200, ..BootstrapConfig::default() };
    let mut violations = 0;
    let mut state = 8u64;
    for _ in 0..1000 {
        state = splitmix64(state);
        let n = 2 + (state % 300) as usize;
        let p = (splitmix64(state ^ 1) % 1000) as f64 / 1000.0;
        let correct: Vec<bool> =
            (0..n).map(|i| (splitmix64(state ^ (i as u64 + 2)) % 1000) as f64 / 1000.0 < p).collect();
        let k1 = expected_test_accuracy(EstimatorKind::MinTwoHalves, &correct, &cfg).unwrap();
        let k2 = expected_test_accuracy(EstimatorKind::BootstrapMeanMinusStd, &correct, &cfg).unwrap();
        let k3 = expected_test_accuracy(EstimatorKind::Combined, &correct, &cfg).unwrap();
        let mean = bootstrap(&correct, cfg.resamples, cfg.seed, cfg.confidence).unwrap().mean;
        if k3 > k1 || k2 > mean {
            violations += 1;
        }
        let half: Vec<bool> = correct[..n / 2].to_vec();
        let doubled: Vec<bool> = half.iter().chain(half.iter()).copied().collect();
        if acc_min_two_halves(&doubled).unwrap() != accuracy_of(&doubled) {
            violations += 1;
        }
    }
    check(violations == 0, format!("1000 random vectors, {violations} violations"))
}

fn criterion_9(dir: &Path) -> Outcome {
    let base = [
        "--arch", "tiny", "--activation", "abs", "--estimator", "3", "--seed", "9", "--train-limit", "1500",
        "--val-limit", "600", "--test-limit", "500", "--stage-lrs", "1e-3,1e-4", "--patience", "1", "--epoch-cap", "2",
        "--resamples", "200", "--deterministic",
    ];
    let (a, b) = (dir.join("det_a"), dir.join("det_b"));
    for out in [&a, &b] {
        if let Err(e) = train_summary(out, &base) {
            return Outcome::Fail(e);
        }
    }
    // a third run driven only by the config file written by the first
    let c = dir.join("det_c");
    let cfg = a.join("config.json").to_string_lossy().to_string();
    let o = absnet(&["train", "--config", &cfg, "--out", &c.to_string_lossy()]);
    if !o.status.success() {
        return Outcome::Fail(String::from_utf8_lossy(&o.stderr).to_string());
    }
    let same = |f: &str| {
        let x = std::fs::read(a.join(f)).unwrap();
        x == std::fs::read(b.join(f)).unwrap() && x == std::fs::read(c.join(f)).unwrap()
    };
    let (csv, ckpt, summary) = (same("metrics.csv"), same("best.ckpt"), same("summary.json"));
    check(csv && ckpt && summary, format!("metrics.csv {csv}, best.ckpt {ckpt}, summary.json {summary} (3 runs)"))
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let runs_dir = std::env::var_os("ABSNET_ACCEPTANCE_DIR").map(PathBuf::from).unwrap_or_else(|| tmp.path().to_path_buf());
    let data = data_dir();
    if let Some(d) = &data {
        std::env::set_var("ABSNET_DATA_DIR", d);
    }
    let no_data = || Outcome::Skip("MNIST not found; set ABSNET_DATA_DIR".into());
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut run = |name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let outcome = f();
        let (tag, detail) = match &outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => ("FAIL", d),
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("{tag} criterion {name}: {detail} [{:.1}s]", t.elapsed().as_secs_f64());
        results.push((name, outcome));
    };
    run("1 parameter counts", &mut criterion_1);
    run("2 gradient check", &mut criterion_2);
    run("3 abs norm preservation", &mut criterion_3);
    run("4 synthetic tasks", &mut criterion_4);
    run("5 smoke accuracy", &mut || if data.is_some() { criterion_5_smoke(&runs_dir) } else { no_data() });
    let mut c6 = None;
    run("5 full tiny+Abs accuracy", &mut || match (&data, full_mode()) {
        (None, _) => no_data(),
        (Some(_), false) => Outcome::Skip(format!("full MNIST runs take hours; set {FULL_ENV}=1")),
        (Some(_), true) => {
            let (c5, ordering) = criteria_5_full_and_6(&runs_dir);
            c6 = Some(ordering);
            c5
        }
    });
    run("6 activation ordering", &mut || {
        c6.take().unwrap_or_else(|| if data.is_some() { Outcome::Skip(format!("runs with criterion 5 full; set {FULL_ENV}=1")) } else { no_data() })
    });
    run("7 bootstrap oracle", &mut criterion_7);
    run("8 estimator algebra", &mut criterion_8);
    run("9 determinism", &mut || if data.is_some() { criterion_9(&runs_dir) } else { no_data() });
    run("10 full campaigns", &mut || Outcome::Skip("excluded from gating".into()));
    let failed: Vec<&str> = results.iter().filter(|(_, o)| matches!(o, Outcome::Fail(_))).map(|(n, _)| *n).collect();
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
