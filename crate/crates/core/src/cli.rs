//! The `cfmorph` command-line tool.
//!
//! Exit codes: 0 success, 1 runtime or I/O failure, 2 usage error. Every
//! command writes a `run.json` manifest into its output directory; `replay`
//! re-runs a manifest's arguments.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{run_attack, target_probability, AttackConfig, LrSchedule};
use crate::classifier::{
    evaluate_logits, read_model, train_from_manifests, write_model, Architecture, Classifier, Ensemble, Metrics,
    TrainConfig,
};
use crate::export::export_slices;
use crate::ffd::write_lattice;
use crate::regularize::{bending, RegWeights};
use crate::synth::{generate_dataset, DatasetSpec};
use crate::volume::{read_manifest, read_volume, write_volume, Label, Volume};
use crate::{Error, Result};

pub const RUN_MANIFEST: &str = "run.json";

#[derive(Debug, Parser)]
#[command(name = "cfmorph", version, about = "Counterfactual shape morphologies via adversarial B-spline FFD")]
pub struct Cli {
    /// Worker threads (0 = all cores). `--threads 1` is bit-reproducible by construction.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic labeled dataset.
    Gen(GenArgs),
    /// Train one classifier.
    Train(TrainArgs),
    /// Evaluate classifiers on a manifest.
    Eval(EvalArgs),
    /// Attack volumes towards a target class.
    Attack(AttackArgs),
    /// Export axis-aligned slices as PGM.
    ExportSlices(ExportArgs),
    /// Re-run the command recorded in a run manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenArgs {
    #[arg(long, default_value_t = 444)]
    pub n: usize,
    #[arg(long, default_value_t = 48)]
    pub dim: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Equal class proportions instead of the default imbalance.
    #[arg(long)]
    pub balanced: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    /// Training manifest (e.g. `data/train.txt`).
    #[arg(long)]
    pub data: PathBuf,
    /// Validation manifest; defaults to a held-out slice of `--data`.
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long, default_value = "convnet")]
    pub arch: Architecture,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub mask_prob: Option<f64>,
    /// Output directory; receives `model.sclf` and its sidecar.
    #[arg(long)]
    pub out: PathBuf,
}

impl TrainArgs {
    pub fn config(&self) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            epochs: self.epochs.unwrap_or(d.epochs),
            lr: self.lr.unwrap_or(d.lr),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            weight_decay: self.weight_decay.unwrap_or(d.weight_decay),
            mask_prob: self.mask_prob.unwrap_or(d.mask_prob),
            seed: self.seed,
            ..d
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long = "model", required = true)]
    pub models: Vec<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    /// Also write the metrics CSV here.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AttackArgs {
    /// Input volumes (SVOL).
    #[arg(long = "input")]
    pub inputs: Vec<PathBuf>,
    /// Attack the entries of a manifest whose label differs from the target.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Attack at most this many manifest entries.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long = "model", required = true)]
    pub models: Vec<PathBuf>,
    /// Models excluded from the attack and used for scoring only.
    #[arg(long = "holdout-models")]
    pub holdout: Vec<PathBuf>,
    #[arg(long)]
    pub target: Label,
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    #[arg(long, default_value_t = 5e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 4.5)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    #[arg(long, default_value_t = 1e3)]
    pub lambda_smooth: f64,
    #[arg(long, default_value_t = 1e3)]
    pub lambda_bend: f64,
    /// Lattice cells per axis; default scales 32 cells per 256 voxels, at least 4.
    #[arg(long)]
    pub lattice: Option<usize>,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub freeze_posterior: bool,
    /// One lattice cell per voxel and no regularization.
    #[arg(long)]
    pub ablate_unconstrained: bool,
    /// Score only the unmirrored input.
    #[arg(long)]
    pub no_flip: bool,
    #[arg(long, default_value = "cosine")]
    pub schedule: ScheduleArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleArg {
    Constant,
    Cosine,
}

impl AttackArgs {
    pub fn config(&self, dims: [usize; 3]) -> AttackConfig {
        let cfg = AttackConfig {
            target: self.target,
            steps: self.steps,
            lr: self.lr,
            gamma: self.gamma,
            tau: self.tau,
            weights: RegWeights {
                smooth: self.lambda_smooth,
                bend: self.lambda_bend,
            },
            cells: self.lattice.map(|c| [c; 3]),
            freeze_posterior: self.freeze_posterior,
            schedule: match self.schedule {
                ScheduleArg::Constant => LrSchedule::Constant,
                ScheduleArg::Cosine => LrSchedule::Cosine,
            },
            reg_stride: 1,
            seed: self.seed,
        };
        if self.ablate_unconstrained {
            cfg.ablated(dims)
        } else {
            cfg
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExportArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub axis: usize,
    /// Also export every k-th slice.
    #[arg(long)]
    pub every: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReplayArgs {
    /// A `run.json` written by a previous command.
    pub manifest: PathBuf,
}

/// Enough to replay a run: the argument vector plus the resolved settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub args: Vec<String>,
    pub config: serde_json::Value,
    pub seed: u64,
    pub version: String,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub threads: usize,
    pub duration_secs: f64,
}

struct Run<'a> {
    name: &'static str,
    args: &'a [String],
    threads: usize,
    start: Instant,
}

impl Run<'_> {
    fn finish(
        &self,
        dir: &Path,
        config: serde_json::Value,
        seed: u64,
        inputs: Vec<PathBuf>,
        outputs: Vec<PathBuf>,
    ) -> Result<()> {
        let m = RunManifest {
            subcommand: self.name.into(),
            args: self.args.to_vec(),
            config,
            seed,
            version: env!("CARGO_PKG_VERSION").into(),
            inputs,
            outputs,
            threads: self.threads,
            duration_secs: self.start.elapsed().as_secs_f64(),
        };
        let path = dir.join(RUN_MANIFEST);
        fs::write(&path, serde_json::to_string_pretty(&m)? + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<String> = args
        .into_iter()
        .map(|a| a.into().to_string_lossy().into_owned())
        .collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli, &args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => 2,
                _ => 1,
            }
        }
    }
}

fn execute(cli: Cli, args: &[String]) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let run = Run {
        name: "",
        args,
        threads: cli.threads,
        start: Instant::now(),
    };
    pool.install(|| match cli.command {
        Command::Gen(a) => cmd_gen(&a, Run { name: "gen", ..run }),
        Command::Train(a) => cmd_train(&a, Run { name: "train", ..run }),
        Command::Eval(a) => cmd_eval(&a),
        Command::Attack(a) => cmd_attack(&a, Run { name: "attack", ..run }),
        Command::ExportSlices(a) => cmd_export(&a, Run { name: "export-slices", ..run }),
        Command::Replay(a) => cmd_replay(&a),
    })
}

fn mkdir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn cmd_gen(a: &GenArgs, run: Run) -> Result<()> {
    let mut spec = DatasetSpec {
        count: a.n,
        dim: a.dim,
        seed: a.seed,
        ..DatasetSpec::default()
    };
    if a.balanced {
        spec = spec.balanced();
    }
    let manifest = generate_dataset(&spec, &a.out)?;
    let [m, f] = spec.class_counts();
    println!("wrote {} volumes ({m} male, {f} female) to {}", manifest.len(), a.out.display());
    let outputs = ["manifest.txt", "train.txt", "val.txt", "test.txt"].map(PathBuf::from).to_vec();
    run.finish(&a.out, serde_json::to_value(&spec)?, a.seed, vec![], outputs)
}

fn cmd_train(a: &TrainArgs, run: Run) -> Result<()> {
    let cfg = a.config();
    cfg.validate()?;
    let train = read_manifest(&a.data)?;
    let val = a.val.as_ref().map(read_manifest).transpose()?;
    let (model, report) = train_from_manifests(&train, val.as_ref(), a.arch, &cfg)?;
    mkdir(&a.out)?;
    let path = a.out.join("model.sclf");
    let extra = serde_json::json!({ "train": cfg, "report": report });
    write_model(&model, &path, extra)?;
    let best = &report.epochs[report.best_epoch.min(report.epochs.len().saturating_sub(1))];
    println!(
        "{} seed {}: best epoch {} (val accuracy {}), wrote {}",
        a.arch,
        a.seed,
        report.best_epoch,
        best.val_accuracy.map_or("n/a".into(), |v| format!("{v:.4}")),
        path.display()
    );
    let mut inputs = vec![a.data.clone()];
    inputs.extend(a.val.clone());
    run.finish(
        &a.out,
        serde_json::json!({ "arch": a.arch, "train": cfg }),
        a.seed,
        inputs,
        vec![PathBuf::from("model.sclf")],
    )
}

fn load_models(paths: &[PathBuf]) -> Result<Vec<Classifier>> {
    paths.iter().map(read_model).collect()
}

/// Metrics table and CSV for each model on a manifest.
pub fn eval_table(models: &[(String, Metrics)]) -> (String, String) {
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
    let mut table = format!("{:<32} {:>5} {:>8} {:>8} {:>8}\n", "model", "n", "accuracy", "f1", "auroc");
    let mut csv = String::from("model,n,accuracy,f1,auroc\n");
    for (name, m) in models {
        table.push_str(&format!(
            "{:<32} {:>5} {:>8.4} {:>8.4} {:>8}\n",
            name,
            m.n,
            m.accuracy,
            m.f1,
            fmt(m.auroc)
        ));
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        csv.push_str(&format!("{},{},{},{},{}\n", name, m.n, m.accuracy, m.f1, opt(m.auroc)));
    }
    (table, csv)
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let manifest = read_manifest(&a.data)?;
    let samples = manifest.load_samples()?;
    let labels: Vec<Label> = samples.iter().map(|s| s.label).collect();
    let mut rows = Vec::new();
    for (path, model) in a.models.iter().zip(load_models(&a.models)?) {
        let logits: Vec<f64> = samples
            .par_iter()
            .map(|s| model.forward(&s.volume))
            .collect::<Result<_>>()?;
        rows.push((path.display().to_string(), evaluate_logits(&logits, &labels)?));
    }
    let (table, csv) = eval_table(&rows);
    print!("{table}\n{csv}");
    if let Some(p) = &a.csv {
        fs::write(p, csv).map_err(|e| Error::io(p, e))?;
    }
    Ok(())
}

/// Per-input attack summary row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackSummary {
    pub name: String,
    pub initial_total: f64,
    pub final_total: f64,
    pub bending: f64,
    /// Target-class probability of each hold-out model before and after.
    pub holdout_before: Vec<f64>,
    pub holdout_after: Vec<f64>,
}

fn cmd_attack(a: &AttackArgs, run: Run) -> Result<()> {
    let mut inputs = a.inputs.clone();
    if let Some(mp) = &a.manifest {
        let m = read_manifest(mp)?;
        let picked = m.entries.iter().filter(|e| e.label != a.target).map(|e| m.resolve(e));
        inputs.extend(picked.take(a.limit.unwrap_or(usize::MAX)));
    }
    if inputs.is_empty() {
        return Err(Error::Config("no inputs: pass --input or --manifest".into()));
    }
    let members = load_models(&a.models)?;
    let holdout = load_models(&a.holdout)?;
    let ensemble = Ensemble::new(members, !a.no_flip)?;
    let dims = ensemble.input_dims();
    if let Some(m) = holdout.iter().find(|m| m.input_dims() != dims) {
        return Err(Error::invalid(format!(
            "hold-out model dims {:?} do not match attack model dims {dims:?}",
            m.input_dims()
        )));
    }
    let cfg = a.config(dims);
    cfg.validate()?;
    mkdir(&a.out)?;

    let mut names = Vec::with_capacity(inputs.len());
    for (i, p) in inputs.iter().enumerate() {
        let stem = p.file_stem().map_or(format!("input{i}"), |s| s.to_string_lossy().into_owned());
        names.push(if names.contains(&stem) { format!("{stem}_{i}") } else { stem });
    }
    let summaries: Vec<AttackSummary> = inputs
        .par_iter()
        .zip(&names)
        .map(|(path, name)| -> Result<AttackSummary> {
            let v = read_volume(path)?;
            if v.dims() != dims {
                return Err(Error::invalid(format!(
                    "{}: volume dims {:?} do not match model input dims {dims:?}",
                    path.display(),
                    v.dims()
                )));
            }
            let (out, lattice, trace) = run_attack(&v, &ensemble, &cfg)?;
            write_volume(&out, a.out.join(format!("{name}_cf.svol")))?;
            write_lattice(&lattice, a.out.join(format!("{name}_lattice.sffd")))?;
            write_volume(&out.abs_diff(&v)?, a.out.join(format!("{name}_diff.svol")))?;
            trace.write_csv(a.out.join(format!("{name}_trace.csv")))?;
            let score = |x: &Volume| -> Result<Vec<f64>> {
                holdout
                    .iter()
                    .map(|m| Ok(target_probability(m.forward(x)?, a.target)))
                    .collect()
            };
            Ok(AttackSummary {
                name: name.clone(),
                initial_total: trace.first().map_or(0.0, |r| r.total),
                final_total: trace.last().map_or(0.0, |r| r.total),
                bending: bending(&lattice).value,
                holdout_before: score(&v)?,
                holdout_after: score(&out)?,
            })
        })
        .collect::<Result<_>>()?;

    let mut csv = String::from("input,initial_total,final_total,bending");
    for j in 0..holdout.len() {
        csv.push_str(&format!(",holdout{j}_before,holdout{j}_after"));
    }
    csv.push('\n');
    for s in &summaries {
        csv.push_str(&format!("{},{},{},{}", s.name, s.initial_total, s.final_total, s.bending));
        for (b, f) in s.holdout_before.iter().zip(&s.holdout_after) {
            csv.push_str(&format!(",{b},{f}"));
        }
        csv.push('\n');
    }
    let summary_path = a.out.join("summary.csv");
    fs::write(&summary_path, &csv).map_err(|e| Error::io(&summary_path, e))?;

    println!("attacked {} volume(s) towards {}", summaries.len(), a.target);
    for j in 0..holdout.len() {
        let after: Vec<f64> = summaries.iter().map(|s| s.holdout_after[j]).collect();
        let flipped = after.iter().filter(|&&p| p > 0.5).count();
        let mean = after.iter().sum::<f64>() / after.len() as f64;
        println!(
            "hold-out {}: target probability > 0.5 on {flipped}/{} ({:.1}%), mean {mean:.4}",
            a.holdout[j].display(),
            after.len(),
            100.0 * flipped as f64 / after.len() as f64
        );
    }

    let mut all_inputs = inputs.clone();
    all_inputs.extend(a.models.iter().cloned());
    all_inputs.extend(a.holdout.iter().cloned());
    let outputs = names
        .iter()
        .flat_map(|n| ["cf.svol", "lattice.sffd", "diff.svol", "trace.csv"].map(|s| PathBuf::from(format!("{n}_{s}"))))
        .chain([PathBuf::from("summary.csv")])
        .collect();
    run.finish(&a.out, serde_json::to_value(&cfg)?, a.seed, all_inputs, outputs)
}

fn cmd_export(a: &ExportArgs, run: Run) -> Result<()> {
    if a.axis > 2 {
        return Err(Error::Config(format!("--axis must be 0, 1 or 2, got {}", a.axis)));
    }
    let v = read_volume(&a.input)?;
    let stem = a.input.file_stem().map_or("slice".into(), |s| s.to_string_lossy().into_owned());
    let files = export_slices(&v, a.axis, a.every, &a.out, &stem)?;
    println!("wrote {} slice(s) to {}", files.len(), a.out.display());
    let outputs = files.iter().filter_map(|p| p.file_name().map(PathBuf::from)).collect();
    run.finish(&a.out, serde_json::to_value(a)?, 0, vec![a.input.clone()], outputs)
}

fn cmd_replay(a: &ReplayArgs) -> Result<()> {
    let text = fs::read_to_string(&a.manifest).map_err(|e| Error::io(&a.manifest, e))?;
    let m: RunManifest = serde_json::from_str(&text)?;
    let cli = Cli::try_parse_from(&m.args).map_err(|e| Error::Config(format!("recorded arguments: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(Error::Config("refusing to replay a replay".into()));
    }
    execute(cli, &m.args)
}
