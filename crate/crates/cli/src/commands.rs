use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use ordpool::analysis::{distribution, write_distributions_csv, GroupBy, KernelDistribution};
use ordpool::experiment::{
    load_subsets, paired_run, resolve_data_dir, summarize, sweep as run_sweep, to_json_pretty, train_arm,
    write_file, write_metrics_csv, ArmResult, Dataset, EpochMetrics, ExperimentConfig, KernelDump, KernelRun,
    MetricsRow, SweepArm, SweepConfig, SweepGrid, CHECKPOINT_FILE, CONFIG_FILE, DISTRIBUTIONS_FILE, KERNELS_FILE,
    METRICS_FILE, SUMMARY_FILE,
};
use ordpool::gradcheck::{run_all, GradcheckOptions};
use ordpool::network::{Checkpoint, PoolingArm};
use ordpool::pooling::OrdinalKernelSet;
use serde::Serialize;
use serde_json::json;

use crate::{AnalyzeArgs, Common, CompareArgs, ExportArgs, GradcheckArgs, SweepArgs, TrainArgs};

pub enum Failure {
    /// Invalid flags or configuration: exit code 2.
    Usage(String),
    /// Anything that fails while running: exit code 1.
    Run(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Run(e.into())
    }
}

type Outcome = Result<ExitCode, Failure>;

fn validated(cfg: ExperimentConfig) -> Result<ExperimentConfig, Failure> {
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}

fn load_data(common: &Common, cfg: &ExperimentConfig) -> anyhow::Result<(Dataset, Dataset)> {
    let dir = resolve_data_dir(common.data_dir.as_deref());
    load_subsets(&dir, cfg.train_size, cfg.test_size).with_context(|| {
        format!(
            "loading MNIST from {} (set --data-dir or ORD_DATA_DIR; scripts/fetch_mnist.sh downloads it)",
            dir.display()
        )
    })
}

fn prepare_out(out: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn progress(quiet: bool) -> impl FnMut(PoolingArm, u64, &EpochMetrics) {
    move |arm, seed, m| {
        if !quiet {
            eprintln!(
                "{arm} seed {seed} epoch {}: train loss {:.5}, test loss {:.5}, test error {:.2}%",
                m.epoch, m.train_loss, m.test_loss, m.test_error
            );
        }
    }
}

#[derive(Serialize)]
struct Snapshot<'a, C: Serialize> {
    command: &'a str,
    config: &'a C,
}

fn write_snapshot<C: Serialize>(out: &Path, command: &str, config: &C) -> anyhow::Result<()> {
    write_file(&out.join(CONFIG_FILE), to_json_pretty(&Snapshot { command, config })?)?;
    Ok(())
}

fn write_metrics(out: &Path, rows: &[MetricsRow]) -> anyhow::Result<()> {
    let mut buf = Vec::new();
    write_metrics_csv(&mut buf, rows)?;
    write_file(&out.join(METRICS_FILE), buf)?;
    Ok(())
}

fn metrics_rows<'a>(run_id: &str, r: &'a ArmResult) -> impl Iterator<Item = MetricsRow> + 'a {
    let run_id = run_id.to_string();
    r.history.iter().map(move |m| MetricsRow::new(&run_id, r.arm, m))
}

#[derive(Serialize)]
struct LayerSummary {
    layer: usize,
    window: (usize, usize),
    kernels: usize,
    by_template: BTreeMap<String, usize>,
    by_support_size: BTreeMap<usize, usize>,
    by_argmax: BTreeMap<usize, usize>,
}

/// Writes one distribution table per ordinal layer (`distributions_layer<k>.csv`,
/// 1-based) and `distributions.csv` for the first layer. Returns the pooled
/// counts per layer.
fn write_distributions(out: &Path, dump: &KernelDump) -> anyhow::Result<Vec<LayerSummary>> {
    let layers = dump.runs.iter().map(|r| r.layers.len()).max().unwrap_or(0);
    if layers == 0 {
        return Err(anyhow!("no ordinal kernels to analyze"));
    }
    let mut summaries = Vec::with_capacity(layers);
    for layer in 0..layers {
        let mut per_run: Vec<(String, KernelDistribution)> = Vec::new();
        let mut sets: Vec<&OrdinalKernelSet> = Vec::new();
        for run in &dump.runs {
            if let Some(set) = run.layers.get(layer) {
                per_run.push((run.run_id.clone(), distribution([set])?));
                sets.push(set);
            }
        }
        let pooled = distribution(sets.iter().copied()).with_context(|| format!("ordinal layer {}", layer + 1))?;
        let mut buf = Vec::new();
        write_distributions_csv(&mut buf, &per_run)?;
        if layer == 0 {
            write_file(&out.join(DISTRIBUTIONS_FILE), &buf)?;
        }
        write_file(&out.join(format!("distributions_layer{}.csv", layer + 1)), &buf)?;
        summaries.push(LayerSummary {
            layer: layer + 1,
            window: pooled.window(),
            kernels: pooled.total(),
            by_template: pooled
                .by_template()
                .into_iter()
                .filter(|&(_, c)| c > 0)
                .map(|(id, c)| (id.to_string(), c))
                .collect(),
            by_support_size: pooled.groups(GroupBy::SupportSize),
            by_argmax: pooled.groups(GroupBy::Argmax),
        });
    }
    Ok(summaries)
}

fn print_layers(layers: &[LayerSummary]) {
    for l in layers {
        println!("ordinal layer {} ({}x{} window, {} kernels)", l.layer, l.window.0, l.window.1, l.kernels);
        if !l.by_support_size.is_empty() {
            let s: Vec<String> = l.by_support_size.iter().map(|(k, c)| format!("P{k}: {c}")).collect();
            println!("  by support size: {}", s.join(", "));
        }
        let s: Vec<String> = l.by_argmax.iter().map(|(k, c)| format!("rank {k}: {c}")).collect();
        println!("  by argmax rank:  {}", s.join(", "));
    }
}

pub fn train(args: TrainArgs) -> Outcome {
    let cfg = validated(args.common.config(vec![args.pooling], vec![args.seed]))?;
    let out = &args.common.out;
    let (train, test) = load_data(&args.common, &cfg)?;
    prepare_out(out)?;
    write_snapshot(out, "train", &cfg)?;
    let r = train_arm(&cfg, args.pooling, args.seed, &train, &test, &mut progress(args.common.quiet))?;
    let run_id = format!("seed{}", args.seed);
    write_metrics(out, &metrics_rows(&run_id, &r).collect::<Vec<_>>())?;
    let dump = KernelDump {
        runs: vec![KernelRun {
            run_id: run_id.clone(),
            arm: r.arm,
            layers: r.kernels.clone(),
        }],
    };
    write_file(&out.join(KERNELS_FILE), dump.to_json()?)?;
    write_file(&out.join(CHECKPOINT_FILE), r.checkpoint.to_json()?)?;

    #[derive(Serialize)]
    struct TrainSummary<'a> {
        run_id: &'a str,
        arm: PoolingArm,
        parameter_count: usize,
        initial_loss: f64,
        batch_digest: String,
        samples_seen: usize,
        history: &'a [EpochMetrics],
    }
    let summary = TrainSummary {
        run_id: &run_id,
        arm: r.arm,
        parameter_count: r.parameter_count,
        initial_loss: r.initial_loss,
        batch_digest: format!("{:016x}", r.batch_digest),
        samples_seen: r.samples_seen,
        history: &r.history,
    };
    write_file(&out.join(SUMMARY_FILE), to_json_pretty(&summary)?)?;
    let m = r.final_metrics();
    println!(
        "{} {} seed {}: train loss {:.5}, test loss {:.5}, test error {:.2}% ({} parameters)",
        cfg.network, r.arm, args.seed, m.train_loss, m.test_loss, m.test_error, r.parameter_count
    );
    Ok(ExitCode::SUCCESS)
}

pub fn compare(args: CompareArgs) -> Outcome {
    if args.classic.is_ordinal() {
        return Err(Failure::Usage("--classic must name a classic pooling arm".into()));
    }
    let seeds: Vec<u64> = (args.first_seed..args.first_seed + args.seeds).collect();
    let cfg = validated(args.common.config(vec![args.classic, PoolingArm::Ordinal], seeds))?;
    let out = &args.common.out;
    let (train, test) = load_data(&args.common, &cfg)?;
    prepare_out(out)?;
    write_snapshot(out, "compare", &cfg)?;

    let mut on_epoch = progress(args.common.quiet);
    let mut runs = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        runs.push(paired_run(&cfg, seed, &train, &test, &mut on_epoch)?);
    }

    let mut rows = Vec::new();
    let mut dump = KernelDump::default();
    for r in &runs {
        let run_id = format!("seed{}", r.seed);
        rows.extend(metrics_rows(&run_id, &r.classic));
        rows.extend(metrics_rows(&run_id, &r.ordinal));
        dump.runs.push(KernelRun {
            run_id,
            arm: r.ordinal.arm,
            layers: r.ordinal.kernels.clone(),
        });
    }
    write_metrics(out, &rows)?;
    write_file(&out.join(KERNELS_FILE), dump.to_json()?)?;
    let layers = write_distributions(out, &dump)?;
    let summary = summarize(&runs)?;

    #[derive(Serialize)]
    struct CompareOutput<'a> {
        #[serde(flatten)]
        summary: &'a ordpool::experiment::CompareSummary,
        kernel_distributions: &'a [LayerSummary],
    }
    write_file(
        &out.join(SUMMARY_FILE),
        to_json_pretty(&CompareOutput {
            summary: &summary,
            kernel_distributions: &layers,
        })?,
    )?;

    println!("{:>6}  {:>12} {:>12}  {:>10} {:>10}", "seed", "train classic", "train ord", "err classic", "err ord");
    for p in &summary.pairs {
        println!(
            "{:>6}  {:>12.5} {:>12.5}  {:>9.2}% {:>9.2}%",
            p.seed, p.classic.train_loss, p.ordinal.train_loss, p.classic.test_error, p.ordinal.test_error
        );
    }
    let w = &summary.ordinal_wins;
    println!(
        "ordinal lower: train loss {:.0}%, test loss {:.0}%, test error {:.0}% of seeds",
        100.0 * w.train_loss,
        100.0 * w.test_loss,
        100.0 * w.test_error
    );
    let p = &summary.parameters;
    println!("parameters: {} -> {} ({:+.2}%)", p.classic, p.ordinal, p.change_pct);
    if let Some(v) = &summary.variation {
        for m in &v.metrics {
            let pct = |x: Option<f64>| x.map_or("n/a".to_string(), |x| format!("{x:+.1}%"));
            println!(
                "{:<10} mean {:>8}  variance {:>8}",
                m.metric,
                pct(m.mean_change_pct),
                pct(m.variance_change_pct)
            );
        }
    }
    print_layers(&layers);
    Ok(ExitCode::SUCCESS)
}

pub fn sweep(args: SweepArgs) -> Outcome {
    let cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            SweepConfig::from_json(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
        None => {
            let arms = args
                .arms
                .iter()
                .map(|a| match a.as_str() {
                    "classic" => Ok(SweepArm::Classic),
                    "ordinal" => Ok(SweepArm::Ordinal),
                    other => Err(Failure::Usage(format!("unknown sweep arm `{other}`"))),
                })
                .collect::<Result<_, _>>()?;
            let seeds = (1..=args.seeds).collect();
            SweepConfig {
                experiment: validated(args.common.config(vec![PoolingArm::Ordinal], seeds))?,
                grid: SweepGrid {
                    inits: args.inits.clone(),
                    activations: args.activations.clone(),
                    arms,
                },
            }
        }
    };
    if cfg.cells().is_empty() {
        return Err(Failure::Usage("sweep grid has no cells".into()));
    }
    let out = &args.common.out;
    let (train, test) = load_data(&args.common, &cfg.experiment)?;
    prepare_out(out)?;
    write_snapshot(out, "sweep", &cfg)?;
    let outcome = run_sweep(&cfg, &train, &test, &mut progress(args.common.quiet))?;

    let mut rows = Vec::new();
    let mut dump = KernelDump::default();
    for (cell, results) in outcome.cells.iter().zip(&outcome.runs) {
        for r in results {
            let run_id = cell.run_id(r.seed);
            rows.extend(metrics_rows(&run_id, r));
            if r.arm.is_ordinal() {
                dump.runs.push(KernelRun {
                    run_id,
                    arm: r.arm,
                    layers: r.kernels.clone(),
                });
            }
        }
    }
    write_metrics(out, &rows)?;
    write_file(&out.join(KERNELS_FILE), dump.to_json()?)?;

    #[derive(Serialize)]
    struct SweepOutput<'a> {
        cells: &'a [ordpool::experiment::SweepCell],
    }
    write_file(&out.join(SUMMARY_FILE), to_json_pretty(&SweepOutput { cells: &outcome.cells })?)?;

    println!("{:<10} {:<12} {:<8} {:>10}", "init", "pooling", "act", "test err");
    for c in &outcome.cells {
        println!("{:<10} {:<12} {:<8} {:>9.2}%", c.init, c.pooling, c.activation, c.mean_test_error);
    }
    Ok(ExitCode::SUCCESS)
}

fn read_kernels(path: &PathBuf) -> anyhow::Result<KernelDump> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(dump) = KernelDump::from_json(&text) {
        return Ok(dump);
    }
    let set = OrdinalKernelSet::from_json(&text)
        .with_context(|| format!("{} is neither a kernel dump nor a kernel set", path.display()))?;
    let run_id = path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    Ok(KernelDump {
        runs: vec![KernelRun {
            run_id,
            arm: PoolingArm::Ordinal,
            layers: vec![set],
        }],
    })
}

pub fn analyze(args: AnalyzeArgs) -> Outcome {
    let mut dump = KernelDump::default();
    for path in &args.kernels {
        dump.runs.extend(read_kernels(path)?.runs);
    }
    prepare_out(&args.out)?;
    write_snapshot(&args.out, "analyze", &json!({ "kernels": args.kernels }))?;
    let layers = write_distributions(&args.out, &dump)?;
    #[derive(Serialize)]
    struct AnalyzeOutput<'a> {
        runs: usize,
        layers: &'a [LayerSummary],
    }
    write_file(
        &args.out.join(SUMMARY_FILE),
        to_json_pretty(&AnalyzeOutput {
            runs: dump.runs.len(),
            layers: &layers,
        })?,
    )?;
    print_layers(&layers);
    Ok(ExitCode::SUCCESS)
}

pub fn gradcheck(args: GradcheckArgs) -> Outcome {
    let options = GradcheckOptions {
        trials: args.trials as usize,
        seed: args.seed,
        inject_fault: args.inject_fault,
    };
    let report = run_all(&options)?;
    println!("{:<14} {:>8} {:>10} {:>8} {:>12}", "kind", "trials", "compared", "skipped", "max rel err");
    for k in &report.kinds {
        println!(
            "{:<14} {:>8} {:>10} {:>8} {:>12.3e}{}",
            k.kind.to_string(),
            k.trials,
            k.compared,
            k.skipped,
            k.max_relative_error,
            if k.passed() { "" } else { "  FAIL" }
        );
    }
    println!("max relative error: {:.3e} (tolerance {:.0e})", report.max_relative_error(), report.tolerance);
    if let Some(out) = &args.out {
        prepare_out(out)?;
        write_snapshot(out, "gradcheck", &options)?;
        write_file(&out.join(SUMMARY_FILE), to_json_pretty(&report)?)?;
    }
    if report.passed() {
        println!("gradcheck passed");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("gradcheck FAILED");
        Ok(ExitCode::from(1))
    }
}

pub fn export(args: ExportArgs) -> Outcome {
    let checkpoint = Checkpoint::load(&args.checkpoint)?;
    let layers = checkpoint.ordinal_kernels()?;
    if layers.is_empty() {
        return Err(Failure::Run(anyhow!("{} has no ordinal pooling layers", args.checkpoint.display())));
    }
    prepare_out(&args.out)?;
    write_snapshot(&args.out, "export", &json!({ "checkpoint": args.checkpoint }))?;
    let dump = KernelDump {
        runs: vec![KernelRun {
            run_id: checkpoint.name.clone(),
            arm: PoolingArm::Ordinal,
            layers,
        }],
    };
    write_file(&args.out.join(KERNELS_FILE), dump.to_json()?)?;
    println!("wrote {}", args.out.join(KERNELS_FILE).display());
    Ok(ExitCode::SUCCESS)
}
