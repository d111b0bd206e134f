//! `tfconc`: command-line front end for the concentration toolkit.

mod commands;
mod config;
mod output;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;

use config::{read_config_file, resolve_config, Command, Setting};
use output::OutputDir;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub const CONFIG: u8 = 2;
    pub const NUMERICAL: u8 = 3;

    pub fn config(message: impl Into<String>) -> Self {
        Self { code: Self::CONFIG, message: message.into() }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self { code: Self::NUMERICAL, message: format!("writing {}: {e}", path.display()) }
    }
}

impl From<tfconc::Error> for CliError {
    fn from(e: tfconc::Error) -> Self {
        let code = if e.is_config() { Self::CONFIG } else { Self::NUMERICAL };
        Self { code, message: e.to_string() }
    }
}

#[derive(Debug, Parser)]
#[command(name = "tfconc", version, about = "Time-frequency concentration operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// `key = value` file; flags given on the command line take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// gaussian[:c], triangle, or custom:<t,re,im csv>.
    #[arg(long, global = true)]
    window: Option<String>,
    /// "disc cx cy r", "rect t0 t1 s0 s1", "poly x1 y1 ...", or "mask <csv>".
    #[arg(long, global = true, allow_hyphen_values = true)]
    region: Option<String>,
    /// auto, or N,dt.
    #[arg(long, global = true)]
    grid: Option<String>,
    /// Comma-separated dilation factors (radii for autocorr).
    #[arg(long, global = true)]
    scales: Option<String>,
    #[arg(long, global = true)]
    lambda: Option<String>,
    #[arg(long, global = true)]
    mu: Option<String>,
    #[arg(long, global = true)]
    epsilon: Option<String>,
    /// Eigenfunctions to export, check, or filter with.
    #[arg(long, global = true)]
    rank: Option<String>,
    /// Input signal: t,re,im CSV, raw .bin, or `noise`.
    #[arg(long, global = true)]
    input: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Assemble by direct kernel quadrature (slow reference path).
    #[arg(long, global = true)]
    oracle: bool,
    /// gaussian, normal, gaussian:<sigma>, or powertail (autocorr).
    #[arg(long, global = true)]
    density: Option<String>,
    /// Exponent p of the tail condition (autocorr).
    #[arg(long, global = true)]
    power: Option<String>,
    /// Constant C of the tail condition (autocorr).
    #[arg(long, global = true)]
    constant: Option<String>,
    /// Write operator.bin (spectrum).
    #[arg(long, global = true)]
    dump_operator: bool,
    /// Write the spectrogram of the top eigenfunction (spectrum).
    #[arg(long, global = true)]
    spectrogram: bool,
}

impl Cli {
    fn flags(&self) -> Vec<(&'static str, Option<String>)> {
        let on = |b: bool| b.then(|| "true".to_string());
        vec![
            ("window", self.window.clone()),
            ("region", self.region.clone()),
            ("grid", self.grid.clone()),
            ("scales", self.scales.clone()),
            ("lambda", self.lambda.clone()),
            ("mu", self.mu.clone()),
            ("epsilon", self.epsilon.clone()),
            ("rank", self.rank.clone()),
            ("input", self.input.clone()),
            ("out", self.out.clone()),
            ("seed", self.seed.clone()),
            ("oracle", on(self.oracle)),
            ("density", self.density.clone()),
            ("power", self.power.clone()),
            ("constant", self.constant.clone()),
            ("dump-operator", on(self.dump_operator)),
            ("spectrogram", on(self.spectrogram)),
        ]
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(text) = std::env::var("TFC_THREADS") else {
        return Ok(());
    };
    let n: usize = text
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::config(format!("TFC_THREADS must be a positive integer, got `{text}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::config(format!("cannot configure {n} threads: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let mut settings: BTreeMap<String, Setting> = BTreeMap::new();
    if let Some(path) = &cli.config {
        let base = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
        for (key, value) in read_config_file(path)? {
            settings.insert(key, Setting { value, base: base.clone() });
        }
    }
    for (key, value) in cli.flags() {
        if let Some(value) = value {
            settings.insert(key.to_string(), Setting { value, base: PathBuf::from(".") });
        }
    }
    let cfg = resolve_config(cli.command, &settings)?;
    let out = OutputDir::create(&cfg.out, &cfg.canonical)?;
    match cfg.command {
        Command::Spectrum => commands::spectrum(&cfg, &out),
        Command::Asymptotics => commands::asymptotics(&cfg, &out),
        Command::Decay => commands::decay(&cfg, &out),
        Command::Filter => commands::filter(&cfg, &out),
        Command::Autocorr => commands::autocorr(&cfg, &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
