use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use binplay::harness::run::{memory_csv, BaselineMode};
use binplay::harness::{self, Experiment, ExperimentConfig, RunDir};
use binplay::{Error, Result};

/// Generative replay with index-derived binary codes.
#[derive(Parser)]
#[command(name = "binplay", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `section.key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output or run directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }

    fn out(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| Error::Config("--out <dir> is required".into()))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Finetune,
    Joint,
}

#[derive(Subcommand)]
enum Command {
    /// Print the codes of an index range.
    Codes {
        /// Configuration whose `layout.*` keys define the code layout.
        #[arg(long)]
        layout: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        batch: u64,
        #[arg(long, default_value_t = 1)]
        from: u64,
        #[arg(long)]
        to: u64,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[command(flatten)]
        common: Common,
    },
    /// Train BinPlay over the scenario, resuming an existing run directory.
    Train {
        /// Stop once this many batches are complete.
        #[arg(long)]
        batches: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Classifier-only reference runs.
    Baseline {
        #[arg(long, value_enum)]
        mode: Mode,
        #[command(flatten)]
        common: Common,
    },
    /// Compare the three classifier training variants over several seeds.
    Ablate {
        /// Comma-separated seeds; defaults to 0,1,2.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Test accuracy of a run's classifier checkpoint.
    Eval {
        #[arg(long)]
        batch: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Checkpoint sizes per batch of a run directory.
    Report {
        #[command(flatten)]
        common: Common,
    },
    /// Write reconstructions of the given indices as PGM images.
    Gen {
        /// Indices such as `1,5,10-20`.
        #[arg(long)]
        indices: String,
        /// Decoder to use, by batch; defaults to the last.
        #[arg(long)]
        batch: Option<u64>,
        /// Image directory; defaults to `<out>/images`.
        #[arg(long)]
        dest: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

fn parse_indices(text: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("cannot parse indices {text:?}"));
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    Ok(out)
}

fn emit(text: &str) -> Result<()> {
    std::io::stdout()
        .write_all(text.as_bytes())
        .map_err(|e| Error::io(Path::new("<stdout>"), e))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Codes {
            layout,
            batch,
            from,
            to,
            format,
            common,
        } => {
            let cfg = match layout {
                Some(path) => ExperimentConfig::load(&path)?,
                None => common.config()?,
            };
            let codes = cfg.layout.build()?.codebook(batch, from, to)?;
            let mut out = String::new();
            if let Format::Csv = format {
                out.push_str("batch,index,bits\n");
            }
            for (i, code) in (from..).zip(&codes) {
                match format {
                    Format::Text => out.push_str(&format!("{code}\n")),
                    Format::Csv => {
                        let bits: String = code.bits().iter().map(|&b| if b { '1' } else { '0' }).collect();
                        out.push_str(&format!("{batch},{i},{bits}\n"));
                    }
                }
            }
            emit(&out)
        }
        Command::Train { batches, common } => {
            let exp = Experiment::load(common.config()?)?;
            let out = common.out()?;
            let metrics = harness::run_binplay(&exp, out, batches)?;
            emit(&metrics.to_csv())
        }
        Command::Baseline { mode, common } => {
            let mode = match mode {
                Mode::Finetune => BaselineMode::Finetune,
                Mode::Joint => BaselineMode::Joint,
            };
            let exp = Experiment::load(common.config()?)?;
            let metrics = harness::run_baseline(&exp, mode, common.out.as_deref())?;
            emit(&metrics.to_csv())
        }
        Command::Ablate { seeds, common } => {
            let cfg = common.config()?;
            let seeds = if seeds.is_empty() { vec![0, 1, 2] } else { seeds };
            let (train, test) = harness::load_mnist_dir(&cfg.data.resolve_dir())?;
            let exp = Experiment::from_datasets(cfg, &train, &test)?;
            let table = harness::ablation(&exp, &train, &seeds, common.out.as_deref())?;
            emit(&table.to_csv())
        }
        Command::Eval { batch, common } => {
            let out = common.out()?;
            let mut cfg = RunDir::new(out).load_config()?;
            if common.config.is_some() {
                cfg.data = common.config()?.data;
            }
            let (train, test) = harness::load_mnist_dir(&cfg.data.resolve_dir())?;
            let exp = Experiment::from_datasets(cfg, &train, &test)?;
            let (b, eval) = harness::evaluate_run(out, batch, &exp.test)?;
            let mut text = format!("batch,{b}\ntest_avg_acc,{}\n", eval.average);
            for (c, acc) in eval.per_class.iter().enumerate() {
                if let Some(a) = acc {
                    text.push_str(&format!("acc_class{c},{a}\n"));
                }
            }
            emit(&text)
        }
        Command::Report { common } => {
            let out = common.out()?;
            let csv = memory_csv(&harness::memory_report(out)?);
            let path = out.join("memory.csv");
            std::fs::write(&path, &csv).map_err(|e| Error::io(&path, e))?;
            emit(&csv)
        }
        Command::Gen {
            indices,
            batch,
            dest,
            common,
        } => {
            let out = common.out()?;
            let dest = dest.unwrap_or_else(|| out.join("images"));
            let written = harness::dump_images(out, &parse_indices(&indices)?, batch, &dest)?;
            let list: String = written.iter().map(|p| format!("{}\n", p.display())).collect();
            emit(&list)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {message}", e.kind());
            ExitCode::FAILURE
        }
    }
}
