//! Command-line entry points: gen-data, train, eval, grad-check, ablate.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/config error, 3 failed
//! verification check.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use gapnet_core::data::{self, GeneratorConfig, Instance};
use gapnet_core::gradcheck::{self, GradCheckConfig};
use gapnet_core::model::GapNetParams;
use gapnet_core::rng::SplitMix64;
use gapnet_core::trainer::{self, TrainConfig};

use gapnet::ablate;
use gapnet::checkpoint;
use gapnet::config;
use gapnet::error::CmdError;
use gapnet::jsonl::{self, PredictionRow};
use gapnet::manifest::{FileEntry, Manifest};
use gapnet::report::{self, ReportRecord};
use gapnet::variants;

#[derive(Parser)]
#[command(name = "gapnet", version, about = "Triple-gated CTR model laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic multi-view behavior datasets (train/val/test + manifest)
    GenData {
        /// Generator config JSON (defaults apply when omitted)
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated noise rates; writes one rho_<value> subdirectory each
        #[arg(long)]
        rho: Option<String>,
    },
    /// Train one model variant on a generated dataset directory
    Train {
        /// Dataset directory containing train/val/test.jsonl + manifest.json
        #[arg(long)]
        data: PathBuf,
        /// Experiment config JSON with `model` and `train` sections
        #[arg(long)]
        model_config: Option<PathBuf>,
        /// Ablation preset
        #[arg(long, default_value = "full")]
        ablation: String,
        /// Overrides the training seed from the config
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a dataset with a checkpoint, or re-evaluate a predictions file
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Dataset file, or directory (uses its test.jsonl)
        #[arg(long)]
        data: Option<PathBuf>,
        /// Predictions file to evaluate directly (request_id, score, label)
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// NDCG cutoff (default: full list)
        #[arg(long)]
        k: Option<usize>,
        /// Directory for report.json and predictions.jsonl
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verify backward gradients against central finite differences
    GradCheck {
        #[arg(long)]
        model_config: Option<PathBuf>,
        #[arg(long, default_value = "full")]
        ablation: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        /// Entries probed per parameter tensor
        #[arg(long, default_value_t = 8)]
        entries: usize,
    },
    /// Run the (dataset x variant x seed) ablation sweep
    Ablate {
        /// Glob over dataset directories, e.g. "data/rho_*"
        #[arg(long)]
        data_glob: String,
        /// Comma-separated seeds
        #[arg(long, default_value = "1,2,3,4,5")]
        seeds: String,
        /// Comma-separated presets (default: the five gate-combination rows)
        #[arg(long)]
        variants: Option<String>,
        #[arg(long)]
        model_config: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), CmdError> {
    match cli.command {
        Command::GenData { config, out, rho } => cmd_gen_data(config.as_deref(), &out, rho.as_deref()),
        Command::Train { data, model_config, ablation, seed, out } => {
            cmd_train(&data, model_config.as_deref(), &ablation, seed, &out)
        }
        Command::Eval { checkpoint, data, predictions, k, out } => {
            cmd_eval(checkpoint.as_deref(), data.as_deref(), predictions.as_deref(), k, out.as_deref())
        }
        Command::GradCheck { model_config, ablation, seed, step, tolerance, entries } => {
            cmd_grad_check(model_config.as_deref(), &ablation, seed, step, tolerance, entries)
        }
        Command::Ablate { data_glob, seeds, variants, model_config, k, out } => {
            cmd_ablate(&data_glob, &seeds, variants.as_deref(), model_config.as_deref(), k, &out)
        }
    }
}

// ── gen-data ────────────────────────────────────────────────────────

fn write_dataset(cfg: &GeneratorConfig, dir: &Path) -> Result<(), CmdError> {
    std::fs::create_dir_all(dir)?;
    let instances = data::generate(cfg).map_err(CmdError::data)?;
    let (train, val, test) = data::split_dataset(instances);

    let mut files = std::collections::BTreeMap::new();
    for (name, part) in [("train.jsonl", &train), ("val.jsonl", &val), ("test.jsonl", &test)] {
        let path = dir.join(name);
        jsonl::write_instances(&path, part)?;
        let mut requests: Vec<u64> = part.iter().map(|i| i.request_id).collect();
        requests.sort_unstable();
        requests.dedup();
        files.insert(
            name.to_string(),
            FileEntry {
                sha256: gapnet::manifest::sha256_hex(&path)?,
                instances: part.len(),
                requests: requests.len(),
            },
        );
    }
    gapnet::manifest::write_manifest(dir, &Manifest { config: cfg.clone(), files })?;
    println!(
        "{}: {} train / {} val / {} test instances",
        dir.display(),
        train.len(),
        val.len(),
        test.len()
    );
    Ok(())
}

fn cmd_gen_data(config: Option<&Path>, out: &Path, rho: Option<&str>) -> Result<(), CmdError> {
    let base = match config {
        Some(path) => config::load_generator_config(path)?,
        None => GeneratorConfig::default(),
    };
    base.validate().map_err(CmdError::data)?;
    match rho {
        None => write_dataset(&base, out),
        Some(list) => {
            for token in list.split(',') {
                let rho: f64 = token
                    .trim()
                    .parse()
                    .map_err(|_| CmdError::Usage(format!("invalid rho value `{token}`")))?;
                let cfg = GeneratorConfig { noise_rate: rho, ..base.clone() };
                write_dataset(&cfg, &out.join(format!("rho_{rho}")))?;
            }
            Ok(())
        }
    }
}

// ── train ───────────────────────────────────────────────────────────

fn cmd_train(
    data_dir: &Path,
    model_config: Option<&Path>,
    preset: &str,
    seed: Option<u64>,
    out: &Path,
) -> Result<(), CmdError> {
    let ablation = variants::parse_preset(preset)?;
    let exp = config::load_experiment_config(model_config)?;
    let dataset = ablate::load_dataset_dir(data_dir)?;
    let model_cfg = config::model_for_generator(&exp.model, &dataset.gen_config);
    let train_cfg = TrainConfig { seed: seed.unwrap_or(exp.train.seed), ..exp.train };

    let result = trainer::train(&model_cfg, &ablation, &dataset.train, &dataset.val, &train_cfg)
        .map_err(CmdError::data)?;

    std::fs::create_dir_all(out)?;
    checkpoint::save(&out.join("checkpoint.json"), &result.params, &ablation)?;
    jsonl::write_history(&out.join("history.jsonl"), &result.history)?;
    match result.best_epoch {
        Some(epoch) => println!(
            "trained `{preset}` for {} epochs; best val AUC {:.6} at epoch {epoch}",
            result.history.len(),
            result.best_val_auc
        ),
        None => println!("trained `{preset}` for 0 epochs; checkpoint is the initialization"),
    }
    Ok(())
}

// ── eval ────────────────────────────────────────────────────────────

fn cmd_eval(
    ckpt: Option<&Path>,
    data: Option<&Path>,
    predictions: Option<&Path>,
    k: Option<usize>,
    out: Option<&Path>,
) -> Result<(), CmdError> {
    let (rows, dataset_name) = match (ckpt, data, predictions) {
        (None, None, Some(pred_path)) => {
            (jsonl::read_predictions(pred_path)?, pred_path.display().to_string())
        }
        (Some(ckpt_path), Some(data_path), None) => {
            let (params, ablation) = checkpoint::load(ckpt_path)?;
            let file = if data_path.is_dir() { data_path.join("test.jsonl") } else { data_path.to_path_buf() };
            let instances = jsonl::read_instances(&file)?;
            let scores =
                trainer::score_instances(&params, &ablation, &instances).map_err(CmdError::data)?;
            let rows: Vec<PredictionRow> = instances
                .iter()
                .zip(&scores)
                .map(|(inst, &score)| PredictionRow {
                    request_id: inst.request_id,
                    score,
                    label: inst.label,
                })
                .collect();
            (rows, file.display().to_string())
        }
        _ => {
            return Err(CmdError::Usage(
                "eval needs either --checkpoint with --data, or --predictions".into(),
            ))
        }
    };

    let triples: Vec<(u64, f64, u8)> = rows.iter().map(|r| (r.request_id, r.score, r.label)).collect();
    let groups = gapnet_core::metrics::group_by_request(&triples);
    let metrics = gapnet_core::metrics::evaluate(&groups, k).map_err(CmdError::data)?;
    let record = ReportRecord::new(&dataset_name, k, &metrics);

    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        report::write_report(&dir.join("report.json"), &record)?;
        jsonl::write_predictions(&dir.join("predictions.jsonl"), &rows)?;
    }
    println!("{}", record.render_text());
    Ok(())
}

// ── grad-check ──────────────────────────────────────────────────────

fn grad_check_instances(cfg: &gapnet_core::model::ModelConfig, seed: u64) -> Vec<Instance> {
    let mut rng = SplitMix64::new(seed ^ 0x6772_6164);
    (0..2)
        .map(|r| Instance {
            request_id: r,
            user_id: rng.below(cfg.n_users) as u32,
            context_id: rng.below(cfg.n_contexts) as u32,
            target_item_id: rng.below(cfg.n_items) as u32,
            seq_rt: (0..5).map(|_| rng.below(cfg.n_items) as u32).collect(),
            seq_st: (0..20).map(|_| rng.below(cfg.n_items) as u32).collect(),
            seq_lt: (0..50).map(|_| rng.below(cfg.n_items) as u32).collect(),
            label: r as u8,
        })
        .collect()
}

fn cmd_grad_check(
    model_config: Option<&Path>,
    preset: &str,
    seed: u64,
    step: f64,
    tolerance: f64,
    entries: usize,
) -> Result<(), CmdError> {
    let ablation = variants::parse_preset(preset)?;
    let exp = config::load_experiment_config(model_config)?;
    let params = GapNetParams::new(&exp.model, &ablation, &mut SplitMix64::new(seed))
        .map_err(CmdError::data)?;
    let batch = grad_check_instances(&exp.model, seed);
    let check = GradCheckConfig { step, tolerance, max_entries_per_path: entries };
    let report = gradcheck::check_model(&params, &ablation, &batch, &check).map_err(CmdError::data)?;

    if report.passed {
        println!(
            "all {} parameter paths pass, max rel-err = {:.3e} (tolerance {:.1e})",
            report.paths.len(),
            report.max_rel_err,
            report.tolerance
        );
        Ok(())
    } else {
        for path in report.paths.iter().filter(|p| p.max_rel_err >= report.tolerance) {
            eprintln!("FAIL {}: max rel-err {:.3e}", path.path, path.max_rel_err);
        }
        Err(CmdError::CheckFailed(format!(
            "gradient check failed: max rel-err {:.3e} over tolerance {:.1e}",
            report.max_rel_err, report.tolerance
        )))
    }
}

// ── ablate ──────────────────────────────────────────────────────────

fn parse_seeds(list: &str) -> Result<Vec<u64>, CmdError> {
    let seeds: Result<Vec<u64>, _> = list.split(',').map(|s| s.trim().parse::<u64>()).collect();
    let seeds = seeds.map_err(|_| CmdError::Usage(format!("invalid seed list `{list}`")))?;
    if seeds.is_empty() {
        return Err(CmdError::Usage("seed list is empty".into()));
    }
    Ok(seeds)
}

fn cmd_ablate(
    data_glob: &str,
    seeds: &str,
    variant_list: Option<&str>,
    model_config: Option<&Path>,
    k: Option<usize>,
    out: &Path,
) -> Result<(), CmdError> {
    let seeds = parse_seeds(seeds)?;
    let variant_names: Vec<String> = match variant_list {
        Some(list) => list.split(',').map(|s| s.trim().to_string()).collect(),
        None => variants::TABLE_PRESETS.iter().map(|s| s.to_string()).collect(),
    };
    for name in &variant_names {
        variants::parse_preset(name)?;
    }
    let exp = config::load_experiment_config(model_config)?;

    let mut dirs: Vec<PathBuf> = glob::glob(data_glob)
        .map_err(|e| CmdError::Usage(format!("bad glob `{data_glob}`: {e}")))?
        .filter_map(|entry| entry.ok())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(CmdError::Data(format!("no dataset directories match `{data_glob}`")));
    }

    let mut datasets = Vec::new();
    for dir in &dirs {
        datasets.push(Arc::new(ablate::load_dataset_dir(dir)?));
    }

    let records = ablate::run_cells(&datasets, &variant_names, &seeds, &exp, k);

    std::fs::create_dir_all(out)?;
    let lines: Vec<String> =
        records.iter().map(|r| serde_json::to_string(r).map_err(CmdError::data)).collect::<Result<_, _>>()?;
    std::fs::write(out.join("ablation.jsonl"), lines.join("\n") + "\n")?;

    let table = ablate::render_table(&ablate::aggregate(&records, &variant_names));
    std::fs::write(out.join("table.txt"), &table)?;
    print!("{table}");

    if records.iter().all(|r| r.status != "ok") {
        return Err(CmdError::Data("every ablation cell failed".into()));
    }
    for failed in records.iter().filter(|r| r.status != "ok") {
        eprintln!(
            "cell failed: {} / {} / seed {}: {}",
            failed.dataset,
            failed.variant,
            failed.seed,
            failed.error.as_deref().unwrap_or("unknown")
        );
    }
    Ok(())
}
