use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use synthasr::pipeline;
use synthasr::toy::ToyCorpus;
use synthasr::{AsrData, ExperimentConfig, Layout, PipelineError, System};
use synthasr_eval::ConditionKind;
use synthasr_tts::Variant;

#[derive(Parser)]
#[command(name = "synthasr", about = "Train ASR on synthesized speech and evaluate it")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Artifact directory; defaults to runs/<config name>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Decoder variant; defaults to the config's.
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    /// Synthesis condition a, b or c; defaults to the config's.
    #[arg(long, value_parser = parse_condition)]
    condition: Option<ConditionKind>,
    /// Size of the per-utterance worker pool.
    #[arg(long)]
    workers: Option<usize>,
    /// Use the untrained control of the variant.
    #[arg(long)]
    control: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum DataSource {
    Real,
    Synthetic,
}

#[derive(Subcommand)]
enum Command {
    /// Write the bundled toy corpus to a directory.
    ToyCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the flow decoder with alignment search and store durations.
    Align(Common),
    /// Train one decoder variant on the stored durations.
    TrainTts(Common),
    /// Synthesize a condition's utterances to spectrograms and audio.
    Synthesize(Common),
    /// Train a recognizer on real or synthesized audio.
    TrainAsr {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "synthetic")]
        data: DataSource,
    },
    /// Score a recognizer on the held-out utterances.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "synthetic")]
        data: DataSource,
    },
    /// Render the tables from every evaluated system.
    Report(Common),
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: synthasr_tts::TtsError| e.to_string())
}

fn parse_condition(s: &str) -> Result<ConditionKind, String> {
    s.parse().map_err(|e: synthasr_eval::EvalError| e.to_string())
}

struct Context {
    cfg: ExperimentConfig,
    layout: Layout,
    system: System,
}

impl Context {
    fn new(c: &Common) -> Result<Self, PipelineError> {
        let mut cfg = ExperimentConfig::load(&c.config)?;
        if let Some(s) = c.seed {
            cfg.seed = s;
        }
        if let Some(v) = c.variant {
            cfg.variant = v;
        }
        if let Some(k) = c.condition {
            cfg.condition = k;
        }
        if let Some(w) = c.workers {
            cfg.workers = w;
        }
        cfg.validate()?;
        let out = c.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name));
        let system = System {
            variant: cfg.variant,
            untrained: c.control,
        };
        Ok(Self {
            layout: Layout::new(out),
            cfg,
            system,
        })
    }

    fn data(&self, source: DataSource) -> AsrData {
        match source {
            DataSource::Real => AsrData::Real,
            DataSource::Synthetic => AsrData::Synthetic(self.system, self.cfg.condition),
        }
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::ToyCorpus { out, seed } => {
            ToyCorpus::generate(seed).write(&out)?;
            println!("wrote toy corpus to {}", out.display());
        }
        Command::Align(c) => {
            let ctx = Context::new(&c)?;
            let archive = pipeline::align(&ctx.cfg, &ctx.layout)?;
            println!("aligned {} utterances -> {}", archive.len(), ctx.layout.durations().display());
        }
        Command::TrainTts(c) => {
            let ctx = Context::new(&c)?;
            let model = pipeline::train_tts(&ctx.cfg, &ctx.layout, ctx.system)?;
            println!(
                "{}: {} parameters -> {}",
                ctx.system,
                model.num_params(),
                ctx.layout.tts_checkpoint(ctx.system).display()
            );
        }
        Command::Synthesize(c) => {
            let ctx = Context::new(&c)?;
            let set = pipeline::synthesize(&ctx.cfg, &ctx.layout, ctx.system, ctx.cfg.condition)?;
            println!("synthesized {} utterances for {} condition {}", set.len(), ctx.system, ctx.cfg.condition);
        }
        Command::TrainAsr { common, data } => {
            let ctx = Context::new(&common)?;
            let data = ctx.data(data);
            pipeline::train_asr(&ctx.cfg, &ctx.layout, data)?;
            println!("trained recognizer {data} -> {}", ctx.layout.asr_checkpoint(data).display());
        }
        Command::Evaluate { common, data } => {
            let ctx = Context::new(&common)?;
            let row = pipeline::evaluate(&ctx.cfg, &ctx.layout, ctx.data(data))?;
            for (set, w) in &row.wer {
                println!("{}: WER {set} {:.1}%", row.system, 100.0 * w);
            }
            if let Some(s) = row.swer {
                println!("{}: sWER {:.1}%", row.system, 100.0 * s);
            }
        }
        Command::Report(c) => {
            let ctx = Context::new(&c)?;
            let report = pipeline::report(&ctx.cfg, &ctx.layout)?;
            print!("{}\n{}", report.summary, report.conditions);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
