use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use vatcmr::checkpoint::{load_checkpoint, save_checkpoint};
use vatcmr::dataset::{build_dataset, load_dataset, save_dataset, DatasetConfig, DatasetSplits, Split, SplitCounts};
use vatcmr::encoders::Modality;
use vatcmr::experiments::{export_curve, project_embeddings, run_grid, write_curve, ExperimentGrid, Pca};
use vatcmr::model::Space;
use vatcmr::retrieval::evaluate;
use vatcmr::training::{train, write_metrics, TrainConfig};
use vatcmr::{Error, Result};

#[derive(Parser)]
#[command(name = "vatcmr", version, about = "Visual-audio-tactile cross-modal retrieval")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic dataset to disk.
    GenerateData {
        #[arg(long, default_value_t = 5)]
        classes: usize,
        #[arg(long, default_value_t = 500)]
        train: usize,
        #[arg(long, default_value_t = 100)]
        val: usize,
        #[arg(long, default_value_t = 100)]
        test: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run both training stages and write a checkpoint plus metrics.csv.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Dataset directory; a default dataset is generated when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Retrieval MAP of a checkpoint on one split.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        query: Space,
        /// A modality, a pair such as `vision+touch`, or `fused` for the two
        /// modalities other than the query.
        #[arg(long)]
        space: String,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an ablation grid and write report.csv.
    Ablate {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "ablation")]
        out: PathBuf,
    },
    /// 2D principal-component projection of a split's representations.
    Project {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        space: Space,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validation MAP per stage-2 epoch from a metrics.csv.
    Curve {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_split(name: &str) -> Result<Split> {
    Split::ALL
        .into_iter()
        .find(|s| s.name() == name)
        .ok_or_else(|| Error::Config(format!("unknown split {name:?}")))
}

fn resolve_space(query: Space, space: &str) -> Result<Space> {
    if space != "fused" {
        return space.parse();
    }
    match query {
        Space::Single(q) => {
            let rest: Vec<Modality> = Modality::ALL.into_iter().filter(|&m| m != q).collect();
            Ok(Space::Fused(rest[0], rest[1]))
        }
        Space::Fused(..) => Err(Error::Config("`fused` needs a single-modality query".into())),
    }
}

fn data_or_default(dir: Option<&Path>, seed: u64) -> Result<DatasetSplits> {
    match dir {
        Some(d) => load_dataset(d),
        None => {
            info!("no --data given; generating the default dataset with seed {seed}");
            build_dataset(&DatasetConfig {
                seed,
                ..DatasetConfig::default()
            })
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::GenerateData {
            classes,
            train,
            val,
            test,
            seed,
            out,
        } => {
            let cfg = DatasetConfig {
                num_classes: classes,
                counts: SplitCounts { train, val, test },
                seed,
                ..DatasetConfig::default()
            };
            save_dataset(&build_dataset(&cfg)?, &out)?;
            info!("wrote {} samples to {}", train + val + test, out.display());
        }
        Command::Train { config, out, data } => {
            let cfg = TrainConfig::from_json(&fs::read_to_string(&config)?)?;
            let data = data_or_default(data.as_deref(), cfg.seed)?;
            let outcome = train(&data, &cfg)?;
            save_checkpoint(&outcome.model, &cfg, &out)?;
            write_metrics(&outcome.log, out.join("metrics.csv"))?;
            if outcome.skipped_batches > 0 {
                log::warn!("{} triplet batches were skipped", outcome.skipped_batches);
            }
            info!("checkpoint written to {}", out.display());
        }
        Command::Evaluate {
            checkpoint,
            data,
            query,
            space,
            split,
            out,
        } => {
            let (model, cfg) = load_checkpoint(&checkpoint)?;
            let data = load_dataset(&data)?;
            let samples = data.split(parse_split(&split)?);
            let space = resolve_space(query, &space)?;
            let map = evaluate(&model, samples, query, space)?;
            let csv = format!(
                "query_modality,space,map,num_queries,seed\n{query},{space},{map},{},{}\n",
                samples.len(),
                cfg.seed
            );
            fs::write(&out, csv)?;
            println!("MAP {query} -> {space}: {map:.4}");
        }
        Command::Ablate { grid, data, out } => {
            let grid = ExperimentGrid::from_json(&fs::read_to_string(&grid)?)?;
            let data = data_or_default(data.as_deref(), grid.base.seed)?;
            let report = run_grid(&grid, &data, &out)?;
            let failed = report.failures();
            println!(
                "{} cells, {failed} failed; report at {}",
                report.rows.len(),
                out.join("report.csv").display()
            );
            return Ok(failed == 0);
        }
        Command::Project {
            checkpoint,
            data,
            space,
            split,
            out,
        } => {
            let (model, _) = load_checkpoint(&checkpoint)?;
            let data = load_dataset(&data)?;
            let samples = data.split(parse_split(&split)?);
            let labeled = samples
                .iter()
                .map(|s| Ok((model.represent(s, space)?, s.class())))
                .collect::<Result<Vec<_>>>()?;
            let (points, projection) = project_embeddings(&labeled, &Pca)?;
            let mut csv = String::from("sample_id,x,y,class_id\n");
            for (s, (p, label)) in samples.iter().zip(&points) {
                writeln!(csv, "{},{},{},{label}", s.id, p[0], p[1]).expect("writing to a String");
            }
            fs::write(&out, csv)?;
            println!("retained variance fraction {:.4}", projection.retained_fraction());
        }
        Command::Curve { metrics, out } => {
            let points = export_curve(&metrics)?;
            write_curve(&points, &out)?;
            println!("{} epochs written to {}", points.len(), out.display());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
