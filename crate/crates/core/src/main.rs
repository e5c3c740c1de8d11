use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use assocmem::bench::{
    render_table, run_grid, write_jsonl, GridConfig, Haystack, NeedleKind, Positions, Protocol,
};
use assocmem::{Error, KeyMode};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "assocmem", version, about = "Associative-memory long-context recall harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Passkey retrieval over generated filler contexts.
    Passkey(PasskeyArgs),
    /// Needle-in-a-haystack retrieval.
    Needle(NeedleArgs),
    /// Run every cell of a grid described by a config file.
    Grid {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Args)]
struct PasskeyArgs {
    /// Passkey digit counts, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "3")]
    digits: Vec<u32>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Target context lengths in whitespace tokens, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "128000")]
    context_tokens: Vec<usize>,
    #[arg(long, default_value_t = KeyMode::DEFAULT_PREFIX_WORDS)]
    prefix_words: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct NeedleArgs {
    /// Directory of plain-text haystack files.
    #[arg(long, conflicts_with = "synthetic")]
    corpus: Option<PathBuf>,
    /// Number of generated distractor sentences.
    #[arg(long)]
    synthetic: Option<usize>,
    /// `magic:N`, `sf`, or a literal needle sentence (then --query and --expected are required).
    #[arg(long, default_value = "magic:3")]
    needle: String,
    #[arg(long)]
    query: Option<String>,
    #[arg(long)]
    expected: Option<String>,
    /// Fixed needle position in [0, 1].
    #[arg(long, conflicts_with = "sweep")]
    position: Option<f64>,
    /// Number of evenly spaced needle positions cycled across trials.
    #[arg(long)]
    sweep: Option<usize>,
    #[arg(long, default_value = "prefix")]
    key_mode: String,
    #[arg(long, default_value_t = KeyMode::DEFAULT_PREFIX_WORDS)]
    prefix_words: usize,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    /// Plant a decoy next to the query encoding in every trial.
    #[arg(long)]
    adversarial: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    report: Option<PathBuf>,
}

fn passkey_config(a: PasskeyArgs) -> Result<GridConfig, Error> {
    let mut cfg = GridConfig::passkey(a.seed, a.trials, a.digits, a.context_tokens);
    cfg.key_modes = vec![KeyMode::Prefix(a.prefix_words)
        .validate()
        .map_err(|e| Error::Config(e.to_string()))?];
    cfg.validate()?;
    Ok(cfg)
}

fn needle_config(a: NeedleArgs) -> Result<GridConfig, Error> {
    let kind = match (NeedleKind::parse(&a.needle), a.query, a.expected) {
        (Ok(kind), None, None) => kind,
        (_, Some(query), Some(expected)) => NeedleKind::Custom { needle: a.needle, query, expected },
        _ => {
            return Err(Error::Config(
                "a literal --needle needs both --query and --expected".into(),
            ))
        }
    };
    let haystack = match (a.corpus, a.synthetic) {
        (Some(dir), _) => Haystack::Directory(dir),
        (None, Some(n)) => Haystack::Synthetic(n),
        (None, None) => Haystack::Synthetic(1000),
    };
    let mode = match a.key_mode.as_str() {
        "prefix" => KeyMode::Prefix(a.prefix_words).validate(),
        other => other.parse(),
    }
    .map_err(|e| Error::Config(e.to_string()))?;

    let mut cfg = GridConfig::needle(a.seed, a.trials, vec![kind], haystack);
    cfg.key_modes = vec![mode];
    cfg.adversarial = a.adversarial;
    cfg.positions = match a.position {
        Some(p) => Positions::Fixed(p),
        None => Positions::Sweep(a.sweep.unwrap_or(10)),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn grid_config(path: &Path) -> Result<GridConfig, Error> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    GridConfig::from_toml_str(&text)
}

fn execute(cfg: &GridConfig, report: Option<&Path>) -> Result<(), Error> {
    let reports = run_grid(cfg)?;
    print!("{}", render_table(&reports));
    if cfg.protocol == Protocol::Passkey {
        println!("note: the codec decodes exactly, so passkey digit count does not affect recall");
    }
    for r in &reports {
        for f in &r.failures {
            log::warn!("{}: {f}", r.cell);
        }
    }
    if let Some(path) = report {
        let mut out = BufWriter::new(File::create(path)?);
        write_jsonl(&mut out, &reports)?;
        out.flush()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();

    let result = match cli.command {
        Command::Passkey(a) => {
            let report = a.report.clone();
            passkey_config(a).and_then(|cfg| execute(&cfg, report.as_deref()))
        }
        Command::Needle(a) => {
            let report = a.report.clone();
            needle_config(a).and_then(|cfg| execute(&cfg, report.as_deref()))
        }
        Command::Grid { config, report } => {
            grid_config(&config).and_then(|cfg| execute(&cfg, report.as_deref()))
        }
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Input(_) | Error::Parse { .. } => ExitCode::from(2),
                Error::Io(_) => ExitCode::from(3),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
