use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use noncomp_core::pipeline::{run_synthetic, Workspace};
use noncomp_core::study::{GateThresholds, Phase};
use noncomp_core::synthetic::{AnnotatorParams, ModelParams, SynthParams};
use noncomp_core::{PipelineConfig, RatingVariant};
use serde_json::Value;

#[derive(Parser)]
#[command(name = "noncomp", version, about = "Sentiment non-compositionality pipeline")]
struct Cli {
    /// Directory holding every stage's inputs and outputs.
    #[arg(long, global = true, default_value = ".")]
    workspace: PathBuf,
    /// TOML config; defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse the treebank and sidecar and report counts.
    Corpus {
        #[command(subcommand)]
        action: CorpusCmd,
    },
    /// Find candidate phrases.
    Select {
        #[command(subcommand)]
        action: SelectCmd,
    },
    /// Control pools and their manual curation.
    Pools {
        #[command(subcommand)]
        action: PoolsCmd,
    },
    /// Annotation study materials and response processing.
    Study {
        #[command(subcommand)]
        action: StudyCmd,
    },
    /// Per-candidate non-compositionality ratings from the study-2 responses.
    Ratings {
        #[command(subcommand)]
        action: RatingsCmd,
    },
    /// Score model predictions against the human ratings.
    Eval {
        #[command(subcommand)]
        action: EvalCmd,
    },
    /// Group statistics of the ratings.
    Analyze {
        /// TSV of `candidate_id<TAB>figurative` tags.
        #[arg(long)]
        figurative: Option<PathBuf>,
        #[arg(long, default_value = "MaxAbs")]
        variant: RatingVariant,
    },
    /// Run the annotation service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        /// Where `<study>.batches.json` and `<study>.practice.json` live (default: the workspace).
        #[arg(long)]
        study_dir: Option<PathBuf>,
        /// Event log (default: `events.jsonl` in the workspace).
        #[arg(long)]
        log_path: Option<PathBuf>,
    },
    /// Synthetic corpus, curation, annotators and models for dry runs.
    Synth {
        #[command(subcommand)]
        action: SynthCmd,
    },
    /// Print the effective config as TOML.
    Config,
}

#[derive(Subcommand)]
enum CorpusCmd {
    Validate,
}

#[derive(Subcommand)]
enum SelectCmd {
    Candidates,
}

#[derive(Subcommand)]
enum PoolsCmd {
    Build,
    /// Write the curation sheet.
    Export {
        /// Rows per side pre-marked as kept (default: the curated count).
        #[arg(long)]
        preselect: Option<usize>,
    },
    /// Read the curation sheet back.
    Import {
        /// Defaults to `curation.tsv` in the workspace.
        #[arg(long)]
        sheet: Option<PathBuf>,
    },
}

#[derive(Args)]
struct PhaseArg {
    #[arg(long, value_parser = parse_phase)]
    phase: Phase,
}

fn parse_phase(s: &str) -> Result<Phase, String> {
    let n: u8 = s.parse().map_err(|_| format!("phase must be 1 or 2, got {s:?}"))?;
    Phase::try_from(n).map_err(|e| e.to_string())
}

#[derive(Subcommand)]
enum StudyCmd {
    Gen(PhaseArg),
    /// Keep the candidates whose controls match in study 1.
    Filter,
    Alpha(PhaseArg),
    Gate(PhaseArg),
}

#[derive(Subcommand)]
enum RatingsCmd {
    Compute,
}

#[derive(Subcommand)]
enum EvalCmd {
    Run {
        /// `NAME=PATH` of a predictions TSV; repeatable. Without it every
        /// `predictions.<name>.tsv` in the workspace is evaluated.
        #[arg(long = "model")]
        models: Vec<String>,
    },
}

#[derive(Args)]
struct SynthCorpusArgs {
    #[arg(long, default_value_t = SynthParams::default().candidates)]
    candidates: usize,
    #[arg(long, default_value_t = SynthParams::default().traps)]
    traps: usize,
    #[arg(long, default_value_t = SynthParams::default().spares)]
    spares: usize,
    #[arg(long, default_value_t = SynthParams::default().distractors)]
    distractors: usize,
    #[arg(long, default_value_t = SynthParams::default().planted_fraction)]
    planted_fraction: f64,
}

impl SynthCorpusArgs {
    fn params(&self, seed: u64) -> SynthParams {
        SynthParams {
            seed,
            candidates: self.candidates,
            traps: self.traps,
            spares: self.spares,
            distractors: self.distractors,
            planted_fraction: self.planted_fraction,
        }
    }
}

#[derive(Args)]
struct AnnotatorArgs {
    #[arg(long, default_value_t = AnnotatorParams::default().noise)]
    noise: f64,
    #[arg(long, default_value_t = AnnotatorParams::default().flag_rate)]
    flag_rate: f64,
    #[arg(long, default_value_t = AnnotatorParams::default().careless)]
    careless: usize,
}

impl AnnotatorArgs {
    fn params(&self, seed: u64) -> AnnotatorParams {
        AnnotatorParams {
            seed,
            noise: self.noise,
            flag_rate: self.flag_rate,
            careless: self.careless,
        }
    }
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, default_value_t = ModelParams::default().seeds)]
    seeds: u64,
    #[arg(long, default_value_t = ModelParams::default().fidelity)]
    fidelity: f64,
    #[arg(long, default_value_t = ModelParams::default().jitter)]
    jitter: f64,
    #[arg(long, default_value_t = ModelParams::default().spread)]
    spread: f64,
}

impl ModelArgs {
    fn params(&self, seed: u64) -> ModelParams {
        ModelParams {
            seed,
            seeds: self.seeds,
            fidelity: self.fidelity,
            jitter: self.jitter,
            spread: self.spread,
        }
    }
}

#[derive(Subcommand)]
enum SynthCmd {
    /// Write a synthetic treebank, sidecar and figurative tags.
    Corpus(SynthCorpusArgs),
    /// Fill in the curation sheet as a curator would.
    Curate,
    /// Simulated participants' responses for one study.
    Respond {
        #[arg(long, value_parser = parse_phase)]
        phase: Phase,
        #[command(flatten)]
        annotators: AnnotatorArgs,
    },
    /// Simulated model predictions for every study-2 item and sentence.
    Predict {
        #[arg(long, default_value = "synthetic")]
        model: String,
        #[command(flatten)]
        params: ModelArgs,
    },
    /// Every stage end to end on synthetic data.
    Run {
        #[command(flatten)]
        corpus: SynthCorpusArgs,
        #[command(flatten)]
        annotators: AnnotatorArgs,
        #[command(flatten)]
        model: ModelArgs,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn parse_models(ws: &Workspace, specs: &[String]) -> Result<Vec<(String, PathBuf)>> {
    if specs.is_empty() {
        let mut found = Vec::new();
        for entry in std::fs::read_dir(&ws.dir).with_context(|| format!("listing {}", ws.dir.display()))? {
            let name = entry?.file_name().to_string_lossy().into_owned();
            if let Some(model) = name.strip_prefix("predictions.").and_then(|n| n.strip_suffix(".tsv")) {
                found.push((model.to_string(), ws.path(&name)));
            }
        }
        if found.is_empty() {
            bail!(
                "no predictions.<name>.tsv in {}; pass --model NAME=PATH or run `noncomp synth predict`",
                ws.dir.display()
            );
        }
        found.sort();
        return Ok(found);
    }
    specs
        .iter()
        .map(|s| match s.split_once('=') {
            Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
            _ => bail!("--model expects NAME=PATH, got {s:?}"),
        })
        .collect()
}

fn serve(ws: &Workspace, host: std::net::IpAddr, port: u16, study_dir: Option<PathBuf>, log_path: Option<PathBuf>) -> Result<()> {
    let study_dir = study_dir.unwrap_or_else(|| ws.dir.clone());
    let log_path = log_path.unwrap_or_else(|| ws.path("events.jsonl"));
    let studies = noncomp_service::load_study_dir(&study_dir)?;
    if studies.is_empty() {
        bail!(
            "no <study>.batches.json in {}; run `noncomp study gen --phase 1` first",
            study_dir.display()
        );
    }
    let thresholds = GateThresholds {
        max_mae: ws.cfg.study.gate_max_mae,
        min_rho: ws.cfg.study.gate_min_rho,
    };
    for s in studies.values() {
        log::info!("study {}: {} slots, {} practice items", s.study_id, s.batches.len(), s.practice.items.len());
    }
    let service = Arc::new(noncomp_service::Service::open(studies, &log_path, thresholds)?);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(noncomp_service::serve(SocketAddr::new(host, port), service))?;
    Ok(())
}

fn run(cli: Cli) -> Result<Option<Value>> {
    let cfg = load_config(&cli)?;
    let seed = cfg.seed;
    let ws = Workspace::open(&cli.workspace, cfg)?;
    let summary = match cli.command {
        Command::Corpus { action: CorpusCmd::Validate } => ws.corpus_validate()?,
        Command::Select { action: SelectCmd::Candidates } => ws.select_candidates()?,
        Command::Pools { action } => match action {
            PoolsCmd::Build => ws.pools_build()?,
            PoolsCmd::Export { preselect } => ws.pools_export(preselect.unwrap_or(ws.cfg.select.curated_per_side))?,
            PoolsCmd::Import { sheet } => ws.pools_import(sheet.as_deref())?,
        },
        Command::Study { action } => match action {
            StudyCmd::Gen(p) => ws.study_gen(p.phase)?,
            StudyCmd::Filter => ws.study_filter()?,
            StudyCmd::Alpha(p) => ws.study_alpha(p.phase)?,
            StudyCmd::Gate(p) => ws.study_gate(p.phase)?,
        },
        Command::Ratings { action: RatingsCmd::Compute } => ws.ratings_compute()?,
        Command::Eval { action: EvalCmd::Run { models } } => ws.eval_run(&parse_models(&ws, &models)?)?,
        Command::Analyze { figurative, variant } => ws.analyze(figurative.as_deref(), variant)?,
        Command::Serve {
            port,
            host,
            study_dir,
            log_path,
        } => {
            serve(&ws, host, port, study_dir, log_path)?;
            return Ok(None);
        }
        Command::Synth { action } => match action {
            SynthCmd::Corpus(a) => ws.synth_corpus(&a.params(seed))?,
            SynthCmd::Curate => ws.synth_curate()?,
            SynthCmd::Respond { phase, annotators } => ws.synth_respond(phase, &annotators.params(seed))?,
            SynthCmd::Predict { model, params } => ws.synth_predict(&model, &params.params(seed))?,
            SynthCmd::Run {
                corpus,
                annotators,
                model,
            } => Value::Array(run_synthetic(
                &ws,
                &corpus.params(seed),
                &annotators.params(seed),
                &model.params(seed),
            )?),
        },
        Command::Config => {
            print!("{}", ws.cfg.to_toml());
            return Ok(None);
        }
    };
    Ok(Some(summary))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Some(summary) = run(Cli::parse())? {
        println!("{}", serde_json::to_string_pretty(&summary)?);
    }
    Ok(())
}
