//! Run configuration: flags merged over an optional `key = value` file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use tfconc::asymptotics::Density;
use tfconc::{Region, SampleGrid, Signal, WindowSpec};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::Subcommand)]
pub enum Command {
    /// Assemble and diagonalize one concentration operator.
    Spectrum,
    /// Scaling experiment over dilated regions, with log-log fits.
    Asymptotics,
    /// Eigenfunction decay, support, Fourier-side and Hermite checks.
    Decay,
    /// Project an input signal onto the top eigenfunctions.
    Filter,
    /// Autocorrelation integral of a density over a dilated set.
    Autocorr,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Asymptotics => "asymptotics",
            Command::Decay => "decay",
            Command::Filter => "filter",
            Command::Autocorr => "autocorr",
        }
    }
}

/// Keys accepted in config files; each matches a long flag.
pub const KEYS: &[&str] = &[
    "window", "region", "grid", "scales", "lambda", "mu", "epsilon", "rank", "input", "out", "seed", "oracle",
    "density", "power", "constant", "dump-operator", "spectrogram",
];

#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    Auto,
    Fixed { n: usize, dt: f64 },
}

#[derive(Debug, Clone)]
pub enum InputSpec {
    Csv(PathBuf),
    Binary(PathBuf),
    Noise,
}

#[derive(Debug, Clone)]
pub struct WindowChoice {
    pub spec: WindowSpec,
    /// Grid of a window read from file.
    pub own_grid: Option<SampleGrid>,
    pub text: String,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub window: WindowChoice,
    pub region: Region,
    pub grid: GridSpec,
    pub scales: Vec<f64>,
    pub lambda: f64,
    pub mu: f64,
    pub epsilon: f64,
    pub rank: Option<usize>,
    pub input: Option<InputSpec>,
    pub out: PathBuf,
    pub seed: u64,
    pub oracle: bool,
    pub density: Density,
    pub power: f64,
    pub constant: f64,
    pub dump_operator: bool,
    pub spectrogram: bool,
    /// Resolved settings as sorted `key=value` lines; hashed into output headers.
    pub canonical: String,
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::config(msg)
}

/// Reads `key = value` lines; `#` starts a comment.
pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| config_error(format!("cannot read config file {}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(config_error(format!("{}:{}: expected `key = value`", path.display(), idx + 1)));
        };
        let key = key.trim().to_string();
        if !KEYS.contains(&key.as_str()) {
            return Err(config_error(format!("{}:{}: unknown key `{key}`", path.display(), idx + 1)));
        }
        out.insert(key, value.trim().to_string());
    }
    Ok(out)
}

/// Accepts plain numbers and the forms `pi`, `<a>pi`, `<a>*pi`, `pi/<b>`.
pub fn parse_scalar(text: &str) -> Option<f64> {
    let t = text.trim().to_ascii_lowercase();
    if let Ok(v) = t.parse::<f64>() {
        return Some(v);
    }
    let pi = std::f64::consts::PI;
    if let Some(rest) = t.strip_prefix("pi") {
        if rest.is_empty() {
            return Some(pi);
        }
        return rest.strip_prefix('/').and_then(|b| b.trim().parse::<f64>().ok()).map(|b| pi / b);
    }
    let head = t.strip_suffix("pi")?;
    let head = head.strip_suffix('*').unwrap_or(head);
    head.trim().parse::<f64>().ok().map(|a| a * pi)
}

fn number(key: &str, text: &str) -> Result<f64, CliError> {
    parse_scalar(text)
        .filter(|v| v.is_finite())
        .ok_or_else(|| config_error(format!("--{key}: `{text}` is not a number")))
}

fn parse_window(text: &str, base: &Path) -> Result<WindowChoice, CliError> {
    let (family, arg) = match text.split_once(':') {
        Some((f, a)) => (f.trim(), Some(a.trim())),
        None => (text.trim(), None),
    };
    match family {
        "gaussian" => {
            let c = match arg {
                Some(a) => number("window", a)?,
                None => std::f64::consts::PI,
            };
            if c <= 0.0 {
                return Err(config_error(format!("--window: gaussian width must be positive, got {c}")));
            }
            Ok(WindowChoice { spec: WindowSpec::Gaussian { c }, own_grid: None, text: format!("gaussian:{c}") })
        }
        "triangle" if arg.is_none() => {
            Ok(WindowChoice { spec: WindowSpec::Triangle, own_grid: None, text: "triangle".into() })
        }
        "custom" => {
            let path = arg.ok_or_else(|| config_error("--window: custom needs a file, as in custom:<path>"))?;
            let path = resolve(base, path);
            let file = fs::File::open(&path)
                .map_err(|e| config_error(format!("--window: cannot open {}: {e}", path.display())))?;
            let sig = Signal::read_csv(std::io::BufReader::new(file))
                .map_err(|e| config_error(format!("--window: {}: {e}", path.display())))?;
            let grid = *sig.grid();
            Ok(WindowChoice {
                spec: WindowSpec::Custom(sig.into_samples()),
                own_grid: Some(grid),
                text: format!("custom:{}", path.display()),
            })
        }
        _ => Err(config_error(format!(
            "--window: unknown window `{text}` (expected gaussian[:c], triangle or custom:<path>)"
        ))),
    }
}

fn parse_grid(text: &str) -> Result<GridSpec, CliError> {
    let t = text.trim();
    if t == "auto" {
        return Ok(GridSpec::Auto);
    }
    let (n, dt) = t
        .split_once([',', ':'])
        .ok_or_else(|| config_error(format!("--grid: expected `auto` or `N,dt`, got `{t}`")))?;
    let n: usize =
        n.trim().parse().map_err(|_| config_error(format!("--grid: `{n}` is not a sample count")))?;
    let dt = number("grid", dt)?;
    SampleGrid::new(n, dt).map_err(|e| config_error(format!("--grid: {e}")))?;
    Ok(GridSpec::Fixed { n, dt })
}

fn parse_density(text: &str) -> Result<Density, CliError> {
    let t = text.trim();
    match t.split_once(':') {
        None if t == "gaussian" => Ok(Density::gaussian_ambiguity()),
        None if t == "normal" => Ok(Density::Gaussian { sigma: 1.0 }),
        None if t == "powertail" => Ok(Density::PowerTail),
        Some(("gaussian", s)) | Some(("normal", s)) => {
            let sigma = number("density", s)?;
            if sigma <= 0.0 {
                return Err(config_error(format!("--density: standard deviation must be positive, got {sigma}")));
            }
            Ok(Density::Gaussian { sigma })
        }
        _ => Err(config_error(format!(
            "--density: unknown density `{t}` (expected gaussian, normal, gaussian:<sigma> or powertail)"
        ))),
    }
}

fn parse_bool(key: &str, text: &str) -> Result<bool, CliError> {
    match text.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(config_error(format!("--{key}: `{other}` is not a boolean"))),
    }
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_relative() {
        base.join(p)
    } else {
        p.to_path_buf()
    }
}

/// One setting with the directory relative paths in it resolve against.
#[derive(Debug, Clone)]
pub struct Setting {
    pub value: String,
    pub base: PathBuf,
}

pub fn resolve_config(command: Command, settings: &BTreeMap<String, Setting>) -> Result<RunConfig, CliError> {
    let get = |k: &str| settings.get(k);
    let here = PathBuf::from(".");
    let base_of = |k: &str| get(k).map_or(here.clone(), |s| s.base.clone());

    let default_region = match command {
        Command::Autocorr => "rect 0 1 0 1",
        Command::Decay => "disc 0 0 1.5",
        _ => "disc 0 0 2",
    };
    let window_text = get("window").map_or("gaussian:pi", |s| s.value.as_str());
    let window = parse_window(window_text, &base_of("window"))?;
    let region_text = get("region").map_or(default_region, |s| s.value.as_str());
    let region = Region::parse(region_text, Some(&base_of("region")))
        .map_err(|e| config_error(format!("--region: {e}")))?;
    let grid = parse_grid(get("grid").map_or("auto", |s| s.value.as_str()))?;
    if let (Some(own), GridSpec::Fixed { n, dt }) = (window.own_grid, &grid) {
        if own.len() != *n || (own.dt() - dt).abs() > 1e-12 * dt {
            return Err(config_error(format!(
                "--grid {n},{dt} disagrees with the custom window's grid ({} samples, dt {})",
                own.len(),
                own.dt()
            )));
        }
    }

    let default_scales = match command {
        Command::Autocorr => "2,4,8,16",
        _ => "1,1.5,2,3,4",
    };
    let scales_text = get("scales").map_or(default_scales, |s| s.value.as_str());
    let mut scales = Vec::new();
    for part in scales_text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let r = number("scales", part)?;
        if r <= 0.0 {
            return Err(config_error(format!("--scales: scale {r} must be positive")));
        }
        scales.push(r);
    }
    if scales.is_empty() {
        return Err(config_error("--scales: no scales given"));
    }

    let threshold = |key: &str, default: f64| -> Result<f64, CliError> {
        let v = get(key).map_or(Ok(default), |s| number(key, &s.value))?;
        if !(v > 0.0 && v < 1.0) {
            return Err(config_error(format!("--{key}: {v} must lie strictly between 0 and 1")));
        }
        Ok(v)
    };
    let lambda = threshold("lambda", if command == Command::Asymptotics { 0.1 } else { 0.5 })?;
    let mu = threshold("mu", 0.9)?;
    let epsilon = get("epsilon").map_or(Ok(0.1), |s| number("epsilon", &s.value))?;
    if !(0.0..1.0).contains(&epsilon) {
        return Err(config_error(format!("--epsilon: {epsilon} must lie in [0, 1)")));
    }
    let rank = match get("rank") {
        Some(s) => {
            let k: usize =
                s.value.trim().parse().map_err(|_| config_error(format!("--rank: `{}` is not a count", s.value)))?;
            if k == 0 {
                return Err(config_error("--rank: rank must be at least 1"));
            }
            Some(k)
        }
        None => None,
    };
    let input = match get("input") {
        None => None,
        Some(s) if s.value.trim() == "noise" => Some(InputSpec::Noise),
        Some(s) => {
            let path = resolve(&s.base, s.value.trim());
            if !path.is_file() {
                return Err(config_error(format!("--input: {} does not exist", path.display())));
            }
            let binary = matches!(path.extension().and_then(|e| e.to_str()), Some("bin" | "f64"));
            Some(if binary { InputSpec::Binary(path) } else { InputSpec::Csv(path) })
        }
    };
    if command == Command::Filter && input.is_none() {
        return Err(config_error("filter needs --input (a t,re,im CSV, a .bin file, or `noise`)"));
    }
    if let (Some(InputSpec::Binary(_)), GridSpec::Auto) = (&input, &grid) {
        return Err(config_error("binary input needs an explicit --grid N,dt"));
    }
    let out = get("out").map_or_else(|| PathBuf::from("."), |s| resolve(&s.base, s.value.trim()));
    let seed = match get("seed") {
        Some(s) => s.value.trim().parse().map_err(|_| config_error(format!("--seed: `{}` is not an integer", s.value)))?,
        None => 0,
    };
    let flag = |key: &str| get(key).map_or(Ok(false), |s| parse_bool(key, &s.value));
    let oracle = flag("oracle")?;
    let dump_operator = flag("dump-operator")?;
    let spectrogram = flag("spectrogram")?;
    let density = parse_density(get("density").map_or("gaussian", |s| s.value.as_str()))?;
    let power = get("power").map_or(Ok(1.0), |s| number("power", &s.value))?;
    let constant = get("constant").map_or(Ok(1.0), |s| number("constant", &s.value))?;
    if power <= 0.0 || constant <= 0.0 {
        return Err(config_error("--power and --constant must be positive"));
    }

    let mut resolved: BTreeMap<&str, String> = BTreeMap::new();
    resolved.insert("command", command.name().into());
    resolved.insert("window", window.text.clone());
    resolved.insert("region", region.label());
    resolved.insert("grid", match grid {
        GridSpec::Auto => "auto".into(),
        GridSpec::Fixed { n, dt } => format!("{n},{dt:e}"),
    });
    resolved.insert("scales", scales.iter().map(|r| format!("{r:e}")).collect::<Vec<_>>().join(","));
    resolved.insert("lambda", format!("{lambda:e}"));
    resolved.insert("mu", format!("{mu:e}"));
    resolved.insert("epsilon", format!("{epsilon:e}"));
    resolved.insert("rank", rank.map_or("default".into(), |k| k.to_string()));
    resolved.insert("input", match &input {
        None => "none".into(),
        Some(InputSpec::Noise) => "noise".into(),
        Some(InputSpec::Csv(p)) | Some(InputSpec::Binary(p)) => p.display().to_string(),
    });
    resolved.insert("seed", seed.to_string());
    resolved.insert("oracle", oracle.to_string());
    resolved.insert("density", format!("{density:?}"));
    resolved.insert("power", format!("{power:e}"));
    resolved.insert("constant", format!("{constant:e}"));
    let canonical = resolved.iter().map(|(k, v)| format!("{k}={v}\n")).collect();

    Ok(RunConfig {
        command,
        window,
        region,
        grid,
        scales,
        lambda,
        mu,
        epsilon,
        rank,
        input,
        out,
        seed,
        oracle,
        density,
        power,
        constant,
        dump_operator,
        spectrogram,
        canonical,
    })
}
