//! `realcil` command-line front end.
//!
//! Every subcommand resolves a [`RunConfig`] (defaults, then `--config`,
//! then flags), reads or generates data, and writes artifacts under
//! `--out`. Failures print one line, `error: kind=<kind> msg=<message>`,
//! and exit 1; usage errors exit 2.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use realcil::io::checkpoint::ModelBundle;
use realcil::io::report::{self, accuracies_csv, grid_csv, summary_csv, to_json};
use realcil::io::{load_checkpoint, load_csv, load_dataset, save_checkpoint, save_dataset, RunConfig};
use realcil::protocol::{
    self, make_phase_plan, pretrain_contrastive, pretrain_sl, CilRunReport, GridSummary, PhasePlan, PhaseTrainStore,
};
use realcil::red::{EPOCH_GRID, LAMBDA_GRID};
use realcil::synth::{generate, LabeledSet};
use realcil::{Error, MlpBackbone, Result};

#[derive(Parser)]
#[command(name = "realcil", version, about = "Exemplar-free class-incremental learning runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory holding train/test datasets (.rlfv or .csv); without it the
    /// synthetic suite is generated from the config.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Output directory (output file for `plot`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Sets every seed.* key.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of incremental phases K.
    #[arg(long, global = true)]
    phases: Option<usize>,
    /// Distillation weight λ.
    #[arg(long, global = true)]
    lambda: Option<f64>,
    /// Epochs of the stage the subcommand trains.
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = ReportFormat::Json)]
    report: ReportFormat,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic suite as train.rlfv / test.rlfv.
    GenSynth,
    /// Supervised pretraining on the base classes (teacher.rlck).
    PretrainSl,
    /// Contrastive pretraining on the base rows (student.rlck).
    PretrainSscl,
    /// Distill a teacher into a contrastive student (distilled.rlck).
    Distill {
        #[arg(long)]
        teacher: PathBuf,
        #[arg(long)]
        student: PathBuf,
    },
    /// Full pipeline over all phases (report + model.rlck).
    CilRun {
        /// Run every ablation arm from one pair of pretrained streams.
        #[arg(long)]
        ablation: bool,
    },
    /// Evaluate a model checkpoint on the test split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Search (λ, epochs) on a held-out validation split.
    GridSearch,
    /// Render run reports (accuracy per phase) or a grid summary (λ sweep)
    /// to SVG.
    Plot {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error: kind=usage msg={first}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace(['\n', '\r'], " ");
            eprintln!("error: kind={} msg={msg}", e.kind());
            ExitCode::from(1)
        }
    }
}

fn resolve_config(common: &Common, epochs_key: Option<&str>) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.set_all_seeds(seed);
    }
    if let Some(k) = common.phases {
        cfg.k = k;
    }
    if let Some(l) = common.lambda {
        cfg.set("red.lambda", &l.to_string(), 0)?;
    }
    if let (Some(e), Some(key)) = (common.epochs, epochs_key) {
        cfg.set(key, &e.to_string(), 0)?;
    }
    cfg.pipeline.validate()?;
    Ok(cfg)
}

fn find_split(dir: &Path, name: &str) -> Result<PathBuf> {
    for ext in ["rlfv", "csv"] {
        let p = dir.join(format!("{name}.{ext}"));
        if p.is_file() {
            return Ok(p);
        }
    }
    Err(Error::Io(std::io::Error::new(
        std::io::ErrorKind::NotFound,
        format!("no {name}.rlfv or {name}.csv in {}", dir.display()),
    )))
}

fn load_split(path: &Path) -> Result<LabeledSet> {
    if path.extension().is_some_and(|e| e == "csv") {
        load_csv(path, None)
    } else {
        load_dataset(path)
    }
}

fn load_data(common: &Common, cfg: &RunConfig) -> Result<(LabeledSet, LabeledSet)> {
    match &common.data {
        Some(dir) => {
            let mut train = load_split(&find_split(dir, "train")?)?;
            let mut test = load_split(&find_split(dir, "test")?)?;
            // CSV class counts are inferred per file; reconcile them.
            let classes = train.num_classes.max(test.num_classes);
            train.num_classes = classes;
            test.num_classes = classes;
            Ok((train, test))
        }
        None => {
            let suite = generate(&cfg.synth)?;
            Ok((suite.train, suite.test))
        }
    }
}

fn out_dir(common: &Common) -> Result<PathBuf> {
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn plan_for(train: &LabeledSet, cfg: &RunConfig) -> Result<PhasePlan> {
    make_phase_plan(train.num_classes, cfg.k, realcil::RngSeed(cfg.pipeline.seeds.plan))
}

fn base_rows(train: &LabeledSet, plan: &PhasePlan) -> Result<LabeledSet> {
    plan.validate_against(train)?;
    PhaseTrainStore::new(train, plan).read(0, "pretrain")
}

fn load_backbone(path: &Path) -> Result<MlpBackbone> {
    load_checkpoint(path)?
        .backbone
        .ok_or_else(|| Error::Protocol(format!("{} has no backbone section", path.display())))
}

fn write(path: PathBuf, text: String) -> Result<()> {
    std::fs::write(&path, text)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn stage_report(stage: &str, cfg: &RunConfig, fields: serde_json::Value, seconds: f64) -> serde_json::Value {
    json!({
        "schema": protocol::SCHEMA_VERSION,
        "stage": stage,
        "run_config": cfg.resolved(),
        "result": fields,
        "timing": { stage: seconds },
    })
}

fn run(cli: Cli) -> Result<()> {
    let common = &cli.common;
    match cli.command {
        Command::GenSynth => {
            let cfg = resolve_config(common, None)?;
            let suite = generate(&cfg.synth)?;
            let dir = out_dir(common)?;
            save_dataset(dir.join("train.rlfv"), &suite.train)?;
            save_dataset(dir.join("test.rlfv"), &suite.test)?;
            println!(
                "wrote {} ({} rows) and {} ({} rows)",
                dir.join("train.rlfv").display(),
                suite.train.len(),
                dir.join("test.rlfv").display(),
                suite.test.len()
            );
            write(dir.join("config.txt"), cfg.to_text())
        }
        Command::PretrainSl => {
            let cfg = resolve_config(common, Some("sgd.epochs"))?;
            let (train, _) = load_data(common, &cfg)?;
            let plan = plan_for(&train, &cfg)?;
            let base = base_rows(&train, &plan)?;
            let t0 = Instant::now();
            let (teacher, losses) = pretrain_sl(&base, &plan, &cfg.pipeline)?;
            let dir = out_dir(common)?;
            let bundle = ModelBundle {
                backbone: Some(teacher),
                ..ModelBundle::default()
            };
            save_checkpoint(dir.join("teacher.rlck"), &bundle)?;
            let rep = stage_report(
                "pretrain_sl",
                &cfg,
                json!({ "plan": plan, "losses": losses }),
                t0.elapsed().as_secs_f64(),
            );
            write(dir.join("pretrain_sl.json"), to_json(&rep)?)
        }
        Command::PretrainSscl => {
            let cfg = resolve_config(common, Some("sscl.epochs"))?;
            let (train, _) = load_data(common, &cfg)?;
            let plan = plan_for(&train, &cfg)?;
            let base = base_rows(&train, &plan)?;
            let t0 = Instant::now();
            let out = pretrain_contrastive(&base, &cfg.pipeline)?;
            let dir = out_dir(common)?;
            let bundle = ModelBundle {
                backbone: Some(out.backbone),
                ..ModelBundle::default()
            };
            save_checkpoint(dir.join("student.rlck"), &bundle)?;
            let rep = stage_report(
                "pretrain_sscl",
                &cfg,
                json!({ "plan": plan, "losses": out.losses, "embedding_std": out.embedding_std }),
                t0.elapsed().as_secs_f64(),
            );
            write(dir.join("pretrain_sscl.json"), to_json(&rep)?)
        }
        Command::Distill { teacher, student } => {
            let cfg = resolve_config(common, Some("red.epochs"))?;
            let (train, _) = load_data(common, &cfg)?;
            let plan = plan_for(&train, &cfg)?;
            let base = base_rows(&train, &plan)?;
            let teacher = load_backbone(&teacher)?;
            let student = load_backbone(&student)?;
            let t0 = Instant::now();
            let (distilled, trajectory) = protocol::distill_backbone(
                &student,
                &teacher,
                &base,
                &plan,
                &cfg.pipeline,
                cfg.pipeline.red.lambda,
            )?;
            let dir = out_dir(common)?;
            let bundle = ModelBundle {
                backbone: Some(distilled),
                ..ModelBundle::default()
            };
            save_checkpoint(dir.join("distilled.rlck"), &bundle)?;
            let rep = stage_report(
                "distill",
                &cfg,
                json!({ "plan": plan, "trajectory": trajectory }),
                t0.elapsed().as_secs_f64(),
            );
            write(dir.join("distill.json"), to_json(&rep)?)
        }
        Command::CilRun { ablation } => {
            let cfg = resolve_config(common, Some("red.epochs"))?;
            let (train, test) = load_data(common, &cfg)?;
            let plan = plan_for(&train, &cfg)?;
            let dir = out_dir(common)?;
            let mut runs = if ablation {
                protocol::run_ablation(&train, &test, &plan, &cfg.pipeline)?
            } else {
                vec![protocol::run_cil(&train, &test, &plan, &cfg.pipeline)?]
            };
            for r in &mut runs {
                r.report.run_config = cfg.resolved();
            }
            if ablation {
                for r in &runs {
                    let name = r.report.arm.name();
                    match common.report {
                        ReportFormat::Json => write(dir.join(format!("report_{name}.json")), to_json(&r.report)?)?,
                        ReportFormat::Csv => {
                            write(dir.join(format!("report_{name}.csv")), accuracies_csv(&[&r.report])?)?
                        }
                    }
                }
                let reports: Vec<&CilRunReport> = runs.iter().map(|r| &r.report).collect();
                write(dir.join("ablation.csv"), summary_csv(&reports)?)?;
                for r in &reports {
                    println!(
                        "{:<13} average={:.4} last={:.4}",
                        r.arm.name(),
                        r.average_accuracy,
                        r.last_accuracy
                    );
                }
                Ok(())
            } else {
                let run = runs.pop().expect("one run");
                match common.report {
                    ReportFormat::Json => write(dir.join("report.json"), to_json(&run.report)?)?,
                    ReportFormat::Csv => write(dir.join("report.csv"), accuracies_csv(&[&run.report])?)?,
                }
                let bundle = ModelBundle {
                    backbone: Some(run.backbone),
                    buffer: Some(run.buffer),
                    classifier: Some(run.classifier),
                };
                save_checkpoint(dir.join("model.rlck"), &bundle)?;
                println!(
                    "average accuracy {:.4}, last accuracy {:.4}",
                    run.report.average_accuracy, run.report.last_accuracy
                );
                Ok(())
            }
        }
        Command::Eval { checkpoint } => {
            let cfg = resolve_config(common, None)?;
            let (train, test) = load_data(common, &cfg)?;
            let plan = plan_for(&train, &cfg)?;
            let bundle = load_checkpoint(&checkpoint)?;
            let missing = |what: &str| Error::Protocol(format!("{} has no {what} section", checkpoint.display()));
            let backbone = bundle.backbone.ok_or_else(|| missing("backbone"))?;
            let buffer = bundle.buffer.ok_or_else(|| missing("buffer"))?;
            let classifier = bundle.classifier.ok_or_else(|| missing("classifier"))?;
            let t0 = Instant::now();
            let split = protocol::evaluate_split(&classifier, &backbone, &buffer, &test, &plan)?;
            let total = split.base_total + split.incremental_total;
            let accuracy = (split.base_correct + split.incremental_correct) as f64 / total as f64;
            let dir = out_dir(common)?;
            match common.report {
                ReportFormat::Json => {
                    let rep = stage_report(
                        "eval",
                        &cfg,
                        json!({ "accuracy": accuracy, "split": split }),
                        t0.elapsed().as_secs_f64(),
                    );
                    write(dir.join("eval.json"), to_json(&rep)?)?;
                }
                ReportFormat::Csv => write(
                    dir.join("eval.csv"),
                    format!(
                        "accuracy,base_accuracy,incremental_accuracy\n{accuracy},{},{}\n",
                        split.base, split.incremental
                    ),
                )?,
            }
            println!("accuracy {accuracy:.4}");
            Ok(())
        }
        Command::GridSearch => {
            let cfg = resolve_config(common, None)?;
            let (train, test) = load_data(common, &cfg)?;
            let plan = plan_for(&train, &cfg)?;
            let lambdas: Vec<f64> = common.lambda.map_or_else(|| LAMBDA_GRID.to_vec(), |l| vec![l]);
            let epochs: Vec<usize> = common.epochs.map_or_else(|| EPOCH_GRID.to_vec(), |e| vec![e]);
            let cells: Vec<(f64, usize)> = epochs
                .iter()
                .flat_map(|&e| lambdas.iter().map(move |&l| (l, e)))
                .collect();
            let mut summary: GridSummary = protocol::grid_search(
                &train,
                &test,
                &plan,
                &cfg.pipeline,
                &cells,
                cfg.validation_fraction,
            )?;
            summary.best_report.run_config = cfg.resolved();
            let dir = out_dir(common)?;
            let cell_dir = dir.join("cells");
            std::fs::create_dir_all(&cell_dir)?;
            for c in &summary.cells {
                let path = cell_dir.join(format!("cell_lambda{}_epochs{}.json", c.lambda, c.epochs));
                std::fs::write(path, to_json(c)?)?;
            }
            println!("wrote {} cell reports to {}", summary.cells.len(), cell_dir.display());
            match common.report {
                ReportFormat::Json => write(dir.join("grid.json"), to_json(&summary)?)?,
                ReportFormat::Csv => write(dir.join("grid.csv"), grid_csv(&summary.cells)?)?,
            }
            let best = &summary.cells[summary.best];
            println!(
                "best lambda={} epochs={} validation average={:.4}; test average={:.4} last={:.4}",
                best.lambda,
                best.epochs,
                best.validation_average,
                summary.best_report.average_accuracy,
                summary.best_report.last_accuracy
            );
            Ok(())
        }
        Command::Plot { inputs } => {
            let mut reports: Vec<CilRunReport> = Vec::new();
            let mut grids: Vec<GridSummary> = Vec::new();
            for p in &inputs {
                let value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p)?)?;
                if value.get("cells").is_some() {
                    grids.push(serde_json::from_value(value)?);
                } else {
                    reports.push(serde_json::from_value(value)?);
                }
            }
            if !grids.is_empty() && !reports.is_empty() {
                return Err(Error::Parameter(
                    "plot takes either run reports or one grid summary, not both".into(),
                ));
            }
            if grids.len() > 1 {
                return Err(Error::Parameter("plot takes one grid summary at a time".into()));
            }
            let svg = match grids.first() {
                Some(g) => report::lambda_sweep_svg(&g.cells),
                None => report::accuracy_curve_svg(&reports.iter().collect::<Vec<_>>()),
            };
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from("plot.svg"));
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            write(out, svg)
        }
    }
}
