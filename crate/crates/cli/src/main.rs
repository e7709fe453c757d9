use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use iccd_core::eval::{AlphaRow, ShotRow};
use iccd_core::synthetic::{self, BiasDatasetSpec};
use iccd_core::{Error, Experiment, NegativeVariant, RunConfig, SelectionMethod};

#[derive(Parser)]
#[command(name = "iccd", version, about = "Contrastive in-context decoding for few-shot classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one configuration and write summary.json and records.jsonl.
    Run(Overrides),
    /// Sweep alpha or shot count and emit a tab-separated table.
    Sweep {
        #[command(flatten)]
        overrides: Overrides,
        /// Comma-separated alpha values; the alternative axis is a
        /// comma-separated --shots list.
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
    },
    /// Print mean KL(positive || negative) over the test examples.
    Kl(Overrides),
    /// Print the prompt sent to the backend for one test example.
    Render {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        example_index: usize,
        /// Seed whose demonstrations are shown; defaults to the first configured seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        show_negative: bool,
    },
    /// Write the synthetic bias dataset with a ready-to-run oracle config.
    GenSynthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = BiasDatasetSpec::default().seed)]
        seed: u64,
    },
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    variant: Option<NegativeVariant>,
    #[arg(long)]
    selection: Option<SelectionMethod>,
    /// Shot count; `sweep` accepts a comma-separated list.
    #[arg(long, value_delimiter = ',')]
    shots: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Must match the kind of the config's [backend] section.
    #[arg(long, value_parser = ["mock", "oracle", "remote"])]
    backend: Option<String>,
    #[arg(long)]
    max_examples: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl Overrides {
    fn resolve(&self) -> Result<RunConfig, Error> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        if let Some(v) = self.variant {
            cfg.variant = v;
        }
        if let Some(s) = self.selection {
            cfg.selection = s;
        }
        match self.shots.as_deref() {
            None => {}
            Some([n]) => cfg.shots = *n,
            Some(_) => return Err(Error::Config("--shots takes a single value outside `sweep`".into())),
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = s.clone();
        }
        if let Some(kind) = &self.backend {
            if cfg.backend.kind() != kind {
                return Err(Error::Config(format!(
                    "--backend {kind} given but the config describes a {} backend",
                    cfg.backend.kind()
                )));
            }
        }
        if let Some(n) = self.max_examples {
            cfg.max_examples = n;
        }
        if let Some(d) = &self.out_dir {
            cfg.out_dir = Some(d.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn out_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("runs"))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Error> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| io_error(path, e))
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Output(format!("{}: {e}", path.display()))
}

fn alpha_table(rows: &[AlphaRow]) -> String {
    let mut out = String::from("alpha\tmean\tstd\n");
    for r in rows {
        out.push_str(&format!("{}\t{:.4}\t{}\n", r.alpha, r.mean_accuracy, fmt_std(r.std_accuracy)));
    }
    out
}

fn shot_table(rows: &[ShotRow]) -> String {
    let mut out = String::from("shots\tmean\tstd\tregular_mean\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{:.4}\t{}\t{:.4}\n",
            r.shots,
            r.mean_accuracy,
            fmt_std(r.std_accuracy),
            r.regular_mean_accuracy
        ));
    }
    out
}

fn fmt_std(std: Option<f64>) -> String {
    std.map_or_else(|| "-".into(), |s| format!("{s:.4}"))
}

fn execute(command: Command) -> Result<(), Error> {
    match command {
        Command::Run(o) => {
            let cfg = o.resolve()?;
            let report = Experiment::from_config(&cfg)?.evaluate()?;
            let dir = out_dir(&cfg);
            report.write(&dir).map_err(|e| io_error(&dir, e))?;
            for s in &report.seeds {
                println!("seed={}\taccuracy={:.1}", s.seed, s.accuracy);
            }
            println!("{}", report.summary_line());
        }
        Command::Sweep { mut overrides, alphas } => {
            let shot_grid = overrides.shots.take();
            let cfg = overrides.resolve()?;
            let exp = Experiment::from_config(&cfg)?;
            let (name, table) = match (alphas, shot_grid) {
                (Some(a), None) => ("sweep_alpha.tsv", alpha_table(&exp.sweep_alpha(&a)?)),
                (None, Some(n)) => ("sweep_shots.tsv", shot_table(&exp.sweep_shots(&n)?)),
                _ => return Err(Error::Config("give exactly one of --alphas or --shots".into())),
            };
            write_file(&out_dir(&cfg).join(name), &table)?;
            print!("{table}");
        }
        Command::Kl(o) => {
            let cfg = o.resolve()?;
            let kl = Experiment::from_config(&cfg)?.mean_kl()?;
            let record = serde_json::json!({
                "mean_kl": kl,
                "direction": iccd_core::eval::KL_DIRECTION,
                "config": cfg,
            });
            let text = serde_json::to_string_pretty(&record).map_err(|e| Error::Output(e.to_string()))?;
            write_file(&out_dir(&cfg).join("kl.json"), &(text + "\n"))?;
            println!("{kl:.2}");
        }
        Command::Render {
            overrides,
            example_index,
            seed,
            show_negative,
        } => {
            let cfg = overrides.resolve()?;
            let seed = seed.unwrap_or(cfg.seeds[0]);
            let exp = Experiment::from_config(&cfg)?;
            let (positive, negative) = exp.prompts(seed, example_index)?;
            print!("{positive}");
            if show_negative {
                print!("\n\n--- negative ({}) ---\n{negative}", cfg.variant);
            }
        }
        Command::GenSynthetic { out, seed } => {
            let spec = BiasDatasetSpec {
                seed,
                ..Default::default()
            };
            synthetic::write_bundle(&out, &spec, &synthetic::default_oracle_params()).map_err(|e| io_error(&out, e))?;
            println!("{}", out.join("run.toml").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
