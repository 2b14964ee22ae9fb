use std::fs;
use std::path::Path;
use std::time::Instant;

use absnet_core::data::{load_mnist, mnist_paths, split_train_val, Dataset, MnistPart};
use absnet_core::ensemble::{train_ensemble, EnsembleConfig, SynthRunConfig, DEFAULT_INSTABILITY_THRESHOLD};
use absnet_core::models::{
    init_params, load_checkpoint, save_checkpoint, ArchSpec, Checkpoint, CheckpointMeta, ModelSpec, SimpleNet,
    MNIST_CLASSES, MNIST_INPUT,
};
use absnet_core::nn::Network;
use absnet_core::probe::{depth_sweep, depth_sweep_csv, gradient_profile, random_batch, DepthSweepConfig};
use absnet_core::rng::{derive_seed, stream};
use absnet_core::stats::{BootstrapConfig, BootstrapSummary};
use absnet_core::trainer::{evaluate, evaluate_network, train, BestModel, SimpleConfig, StageSummary, TrainReport};
use absnet_core::Scalar;
use serde::Serialize;

use crate::config::RunConfig;
use crate::failure::Failure;

pub const METRICS_FILE: &str = "metrics.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const CHECKPOINT_FILE: &str = "best.ckpt";
pub const SUMMARY_FILE: &str = "summary.json";
pub const ENSEMBLE_FILE: &str = "ensemble.json";
pub const EVAL_FILE: &str = "eval.json";
pub const SWEEP_FILE: &str = "depth_sweep.csv";

const TEST_CONFIDENCE: f64 = 0.95;

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    write_text(path, &(serde_json::to_string_pretty(value).expect("serializable") + "\n"))
}

struct Splits<T> {
    train: Dataset<T>,
    val: Dataset<T>,
    test: Dataset<T>,
}

fn load_data<T: Scalar>(cfg: &mut RunConfig) -> Result<Splits<T>, Failure> {
    let dir = cfg.resolve_data_dir();
    if !dir.is_dir() {
        return Err(Failure::usage(format!(
            "MNIST data directory not found: {} (pass --data-dir or set {})",
            dir.display(),
            crate::config::DATA_DIR_ENV
        )));
    }
    for part in [MnistPart::Train, MnistPart::Test] {
        let (images, labels) = mnist_paths(&dir, part);
        for p in [images, labels] {
            if !p.is_file() {
                return Err(Failure::usage(format!("MNIST file not found: {}", p.display())));
            }
        }
    }
    let limit = |d: Dataset<T>, n: Option<usize>| -> Result<Dataset<T>, Failure> {
        match n {
            Some(0) => Err(Failure::usage("dataset limits must be at least 1")),
            Some(n) => Ok(d.take(n)?),
            None => Ok(d),
        }
    };
    let full = load_mnist::<T>(&dir, MnistPart::Train)?;
    let (train, val) = split_train_val(&full, cfg.split())?;
    let test = load_mnist::<T>(&dir, MnistPart::Test)?;
    let splits = Splits {
        train: limit(train, cfg.train_limit)?,
        val: limit(val, cfg.val_limit)?,
        test: limit(test, cfg.test_limit)?,
    };
    log::info!(
        "data from {}: train {}, val {}, test {}",
        dir.display(),
        splits.train.len(),
        splits.val.len(),
        splits.test.len()
    );
    Ok(splits)
}

fn model_spec(cfg: &RunConfig) -> Result<ModelSpec, Failure> {
    let arch: ArchSpec = cfg.arch.parse()?;
    if matches!(arch, ArchSpec::Mlp { .. }) {
        return Err(Failure::usage(format!("`{}` is not an MNIST architecture", cfg.arch)));
    }
    Ok(ModelSpec::new(arch, cfg.activation))
}

fn test_bootstrap(cfg: &RunConfig) -> BootstrapConfig {
    BootstrapConfig {
        resamples: cfg.resamples,
        seed: derive_seed(cfg.seed, stream::BOOTSTRAP, 1),
        confidence: TEST_CONFIDENCE,
    }
}

fn checkpoint_meta(cfg: &RunConfig, report: &TrainReport) -> CheckpointMeta {
    CheckpointMeta {
        stage_lr: Some(report.best.stage_lr),
        epoch: Some(report.best.epoch),
        expected_accuracy: Some(report.best.expected_accuracy),
        seed: Some(cfg.seed),
    }
}

fn write_run_artifacts<T: Scalar>(
    dir: &Path,
    cfg: &RunConfig,
    net: &Network<T>,
    report: &TrainReport,
) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::data(format!("{}: {e}", dir.display())))?;
    report.write_csv(dir.join(METRICS_FILE), !cfg.deterministic)?;
    if cfg.deterministic {
        let mut timing = String::from("epoch,seconds\n");
        for r in &report.records {
            timing.push_str(&format!("{},{:.3}\n", r.epoch, r.seconds));
        }
        write_text(&dir.join(TIMING_FILE), &timing)?;
    }
    save_checkpoint(net, &checkpoint_meta(cfg, report), dir.join(CHECKPOINT_FILE))?;
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    model: String,
    param_count: usize,
    seed: u64,
    estimator: u8,
    train_size: usize,
    val_size: usize,
    test_size: usize,
    total_epochs: usize,
    best: BestModel,
    stages: Vec<StageSummary>,
    test_accuracy: f64,
    test_interval: [f64; 2],
    confidence: f64,
    bootstrap: BootstrapSummary,
    diagnostics: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seconds: Option<f64>,
}

pub fn cmd_train(mut cfg: RunConfig) -> Result<(), Failure> {
    let started = Instant::now();
    let spec = model_spec(&cfg)?;
    let tc = cfg.train_config()?;
    let data = load_data::<f32>(&mut cfg)?;
    cfg.write()?;
    let mut net = spec.build::<f32>()?;
    log::info!("training {spec} ({} parameters), seed {}", net.count_params(), cfg.seed);
    let report = train(&mut net, &data.train, &data.val, &tc)?;
    write_run_artifacts(&cfg.out_dir, &cfg, &net, &report)?;
    let (acc, boot) = evaluate_network(&net, &data.test, &test_bootstrap(&cfg))?;
    let summary = TrainSummary {
        model: spec.to_string(),
        param_count: net.count_params(),
        seed: cfg.seed,
        estimator: cfg.estimator,
        train_size: data.train.len(),
        val_size: data.val.len(),
        test_size: data.test.len(),
        total_epochs: report.total_epochs(),
        best: report.best.clone(),
        stages: report.stages.clone(),
        test_accuracy: acc,
        test_interval: [boot.lower, boot.upper],
        confidence: TEST_CONFIDENCE,
        bootstrap: boot,
        diagnostics: report.diagnostics.clone(),
        seconds: (!cfg.deterministic).then(|| started.elapsed().as_secs_f64()),
    };
    write_json(&cfg.out_dir.join(SUMMARY_FILE), &summary)?;
    println!(
        "{spec}: test accuracy {:.2}% ({:.2}, {:.2}) after {} epochs, {} parameters -> {}",
        100.0 * acc,
        100.0 * summary.test_interval[0],
        100.0 * summary.test_interval[1],
        summary.total_epochs,
        summary.param_count,
        cfg.out_dir.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalSummary {
    checkpoint: String,
    model: String,
    split: String,
    samples: usize,
    accuracy: f64,
    interval: [f64; 2],
    confidence: f64,
    bootstrap: BootstrapSummary,
}

fn eval_with<T: Scalar>(mut cfg: RunConfig, ckpt: Checkpoint<T>) -> Result<(), Failure> {
    let data = load_data::<T>(&mut cfg)?;
    let set = match cfg.eval_split.as_str() {
        "test" => data.test,
        "val" => data.val,
        "train" => data.train,
        other => return Err(Failure::usage(format!("unknown split `{other}` (train, val or test)"))),
    };
    cfg.write()?;
    let (acc, boot) = evaluate(&ckpt, &set, &test_bootstrap(&cfg))?;
    let summary = EvalSummary {
        checkpoint: cfg.checkpoint.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
        model: ckpt.model.clone(),
        split: cfg.eval_split.clone(),
        samples: set.len(),
        accuracy: acc,
        interval: [boot.lower, boot.upper],
        confidence: TEST_CONFIDENCE,
        bootstrap: boot,
    };
    write_json(&cfg.out_dir.join(EVAL_FILE), &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary).expect("serializable"));
    Ok(())
}

pub fn cmd_eval(cfg: RunConfig) -> Result<(), Failure> {
    let path = cfg.checkpoint.clone().ok_or_else(|| Failure::usage("eval needs --checkpoint"))?;
    if !path.is_file() {
        return Err(Failure::usage(format!("checkpoint not found: {}", path.display())));
    }
    match load_checkpoint::<f32>(&path) {
        Ok(ckpt) => eval_with(cfg, ckpt),
        Err(first) => match load_checkpoint::<f64>(&path) {
            Ok(ckpt) => eval_with(cfg, ckpt),
            Err(_) => Err(first.into()),
        },
    }
}

pub fn cmd_ensemble(mut cfg: RunConfig) -> Result<(), Failure> {
    let spec = model_spec(&cfg)?;
    if cfg.members == 0 {
        return Err(Failure::usage("--members must be at least 1"));
    }
    let tc = cfg.train_config()?;
    let data = load_data::<f32>(&mut cfg)?;
    cfg.write()?;
    let ens = EnsembleConfig { model: spec.to_string(), members: cfg.members, base_seed: cfg.seed, train: tc };
    let report = train_ensemble(&ens, &data.train, &data.val, &data.test, |i, net, report| {
        let member_cfg = RunConfig { seed: cfg.seed.wrapping_add(i as u64), ..cfg.clone() };
        let dir = cfg.out_dir.join(format!("member_{i:02}"));
        write_run_artifacts(&dir, &member_cfg, net, report).map_err(|f| absnet_core::Error::InvalidArgument(f.message))
    })?;
    write_json(&cfg.out_dir.join(ENSEMBLE_FILE), &report)?;
    let pct = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{:.2}", 100.0 * v));
    println!("{spec}, estimator {}, {} members", cfg.estimator, report.members.len());
    println!("M.V.        {}", pct(report.majority_vote_accuracy));
    println!("[min, max]  [{}, {}]", pct(report.accuracy_min), pct(report.accuracy_max));
    if !report.complete {
        let failed = report.members.iter().filter(|m| m.error.is_some()).count();
        eprintln!("warning: {failed} member(s) failed; see {}", cfg.out_dir.join(ENSEMBLE_FILE).display());
    }
    Ok(())
}

pub fn cmd_probe(cfg: RunConfig) -> Result<(), Failure> {
    let arch: ArchSpec = cfg.arch.parse()?;
    let (base, depth, disturbing) = match arch {
        ArchSpec::Catalog { base, disturbing: Some((d, a)) } => (base, d, a),
        ArchSpec::Catalog { base, disturbing: None } => (base, 0, cfg.activation),
        ArchSpec::Mlp { .. } => return Err(Failure::usage("probe needs an MNIST architecture")),
    };
    let depths = if cfg.depths.is_empty() { vec![depth] } else { cfg.depths.clone() };
    cfg.write()?;
    let sweep = DepthSweepConfig { base, base_activation: cfg.activation, batch: cfg.probe_batch, seed: cfg.seed };
    let rows = depth_sweep(disturbing, &depths, &sweep)?;
    write_text(&cfg.out_dir.join(SWEEP_FILE), &depth_sweep_csv(&rows))?;
    let (x, y) = random_batch::<f64>(&MNIST_INPUT, MNIST_CLASSES, cfg.probe_batch, cfg.seed)?;
    for &d in &depths {
        let mut net = ModelSpec::new(ArchSpec::degraded(base, d, disturbing), cfg.activation).build::<f64>()?;
        init_params(&mut net, cfg.seed);
        let profile = gradient_profile(&net, &x, &y)?;
        write_text(&cfg.out_dir.join(format!("profile_depth{d}.csv")), &profile.to_csv())?;
        let bad = profile.non_finite_layers();
        if !bad.is_empty() {
            eprintln!("warning: depth {d}: non-finite gradients at layers {bad:?}");
        }
    }
    println!("depth  activation  ratio");
    for r in &rows {
        println!("{:>5}  {:<10}  {:.6e}", r.depth, r.activation.to_string(), r.ratio);
    }
    Ok(())
}

#[derive(Serialize)]
struct SynthEntry {
    net: String,
    dataset: String,
    param_count: usize,
    seeds: Vec<u64>,
    final_accuracies: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    instability_rate: Option<f64>,
}

pub fn cmd_synth(cfg: RunConfig) -> Result<(), Failure> {
    let nets = cfg
        .nets
        .iter()
        .map(|n| n.parse::<SimpleNet>().map_err(Failure::from))
        .collect::<Result<Vec<_>, _>>()?;
    if cfg.datasets.is_empty() || nets.is_empty() || cfg.runs == 0 {
        return Err(Failure::usage("synth needs at least one dataset, one network and one run"));
    }
    cfg.write()?;
    let mut entries = Vec::new();
    for net in &nets {
        let params = net.build::<f32>()?.count_params();
        println!("{net}: {params} trainable parameters");
        for &kind in &cfg.datasets {
            let run_cfg = SynthRunConfig {
                net: net.to_string(),
                dataset: kind,
                samples: cfg.samples,
                data_seed: cfg.seed,
                split: cfg.split(),
                training: SimpleConfig { epochs: cfg.epochs, lr: cfg.synth_lr, batch_size: cfg.synth_batch, seed: 0 },
            };
            let data = run_cfg.data::<f32>()?;
            let mut entry = SynthEntry {
                net: net.to_string(),
                dataset: kind.to_string(),
                param_count: params,
                seeds: Vec::new(),
                final_accuracies: Vec::new(),
                instability_rate: None,
            };
            for r in 0..cfg.runs {
                let seed = cfg.seed.wrapping_add(r as u64);
                let report = run_cfg.run(seed, &data)?;
                let mut curve = String::from("epoch,train_loss,train_acc,val_loss,val_acc\n");
                for rec in &report.records {
                    curve.push_str(&format!(
                        "{},{},{},{},{}\n",
                        rec.epoch, rec.train_loss, rec.train_acc, rec.val_loss, rec.val_acc
                    ));
                }
                write_text(&cfg.out_dir.join(format!("{net}_{kind}_seed{seed}.csv")), &curve)?;
                entry.seeds.push(seed);
                entry.final_accuracies.push(report.final_record().val_acc);
            }
            if cfg.runs >= 10 {
                let below = entry.final_accuracies.iter().filter(|&&a| a < DEFAULT_INSTABILITY_THRESHOLD).count();
                entry.instability_rate = Some(below as f64 / cfg.runs as f64);
            }
            let mean = entry.final_accuracies.iter().sum::<f64>() / cfg.runs as f64;
            println!(
                "  {kind}: mean final accuracy {mean:.4} over {} run(s){}",
                cfg.runs,
                entry.instability_rate.map_or(String::new(), |r| format!(", instability rate {r:.2}"))
            );
            entries.push(entry);
        }
    }
    write_json(&cfg.out_dir.join(SUMMARY_FILE), &entries)?;
    Ok(())
}
