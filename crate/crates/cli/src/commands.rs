use std::f64::consts::PI;
use std::fs;
use std::io::{BufReader, Write};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::{json, Value};

use tfconc::asymptotics::{
    autocorr_integral, decay_condition_check, hs_error_rate, plunge_fit, scaling_experiment, GridChoice,
};
use tfconc::concentration::{phase_grid_for, trace_identity};
use tfconc::regularity::{
    eigenfunction_decay, envelope_admissible, fourier_side_check, hermite_report, kernel_vanishing_check,
    mass_outside, write_decay_csv, DecayEnvelope, DecaySide, VanishingReport,
};
use tfconc::{
    analyze, assemble, auto_grid_for, eigendecompose, eigenfilter, energy, make_window, AssemblyMethod,
    ConcentrationOperator, Region, SampleGrid, Signal, Spectrum, Window, WindowSpec,
};

use crate::config::{GridSpec, InputSpec, RunConfig};
use crate::output::OutputDir;
use crate::CliError;

fn method(cfg: &RunConfig) -> AssemblyMethod {
    if cfg.oracle {
        AssemblyMethod::DirectQuadrature
    } else {
        AssemblyMethod::Factorized
    }
}

fn grid_for(cfg: &RunConfig, region: &Region) -> Result<SampleGrid, CliError> {
    if let Some(own) = cfg.window.own_grid {
        return Ok(own);
    }
    Ok(match cfg.grid {
        GridSpec::Auto => auto_grid_for(&cfg.window.spec, region)?,
        GridSpec::Fixed { n, dt } => SampleGrid::new(n, dt)?,
    })
}

struct Solved {
    phi: Window,
    op: ConcentrationOperator,
    spec: Spectrum,
}

fn solve(cfg: &RunConfig, grid: SampleGrid) -> Result<Solved, CliError> {
    let phi = make_window(&cfg.window.spec, grid)?;
    let op = assemble(&phi, &cfg.region, &phase_grid_for(grid, &cfg.region), method(cfg))?;
    let spec = eigendecompose(&op)?;
    Ok(Solved { phi, op, spec })
}

fn write_spectrum(out: &OutputDir, spec: &Spectrum) -> Result<(), CliError> {
    out.csv("spectrum.csv", |w| spec.write_csv(w))
}

pub fn spectrum(cfg: &RunConfig, out: &OutputDir) -> Result<(), CliError> {
    let grid = grid_for(cfg, &cfg.region)?;
    let Solved { phi, op, spec } = solve(cfg, grid)?;
    write_spectrum(out, &spec)?;
    let exported = cfg.rank.unwrap_or(0).min(spec.len());
    for k in 0..exported {
        out.csv(&format!("eigfun_{}.csv", k + 1), |w| spec.eigenfunction(k).write_csv(w))?;
    }
    if cfg.spectrogram && !spec.is_empty() {
        let coeffs = analyze(spec.eigenfunction(0), &phi, &phase_grid_for(grid, &cfg.region))?;
        out.csv("spectrogram_1.csv", |w| coeffs.write_power_csv(w))?;
    }
    if cfg.dump_operator {
        out.binary("operator.bin", |w| op.write_binary(w))?;
    }
    let trace = trace_identity(&op);
    out.json(
        "summary.json",
        json!({
            "window": phi.label(),
            "region": cfg.region.label(),
            "samples": grid.len(),
            "dt": grid.dt(),
            "method": format!("{:?}", method(cfg)),
            "trace": trace.trace,
            "eigenvalue_sum": spec.sum(),
            "sum_sq": spec.sum_sq(),
            "raster_area": trace.raster_area,
            "analytic_area": cfg.region.area(),
            "lambda_1": spec.eigenvalues().first().copied().unwrap_or(0.0),
            "eigenfunctions_written": exported,
        }),
    )
}

pub fn asymptotics(cfg: &RunConfig, out: &OutputDir) -> Result<(), CliError> {
    if cfg.scales.len() < 3 {
        return Err(CliError::config(format!(
            "the scaling fits need at least 3 scales, got {}",
            cfg.scales.len()
        )));
    }
    if cfg.lambda >= cfg.mu {
        return Err(CliError::config(format!("--lambda {} must be below --mu {}", cfg.lambda, cfg.mu)));
    }
    let choice = match (cfg.window.own_grid, &cfg.grid) {
        (Some(own), _) => GridChoice::Fixed(own),
        (None, GridSpec::Auto) => GridChoice::Auto,
        (None, GridSpec::Fixed { n, dt }) => GridChoice::Fixed(SampleGrid::new(*n, *dt)?),
    };
    let report = scaling_experiment(&cfg.window.spec, &cfg.region, &cfg.scales, cfg.lambda, cfg.mu, choice, method(cfg))?;
    out.csv("scaling.csv", |w| report.write_csv(w))?;
    let fit_value = |fit: tfconc::Result<tfconc::asymptotics::LogLogFit>| match fit {
        Ok(f) => serde_json::to_value(f).expect("fit serializes"),
        Err(e) => json!({ "error": e.to_string() }),
    };
    out.json(
        "fits.json",
        json!({
            "window": report.window,
            "region": report.region,
            "lambda": cfg.lambda,
            "mu": cfg.mu,
            "plunge": fit_value(plunge_fit(&report, cfg.lambda, cfg.mu)),
            "hs_error_rate": fit_value(hs_error_rate(&report)),
            "count_ratio_half": report.count_ratios(0.5),
            "sum_sq_ratio": report.rows.iter().map(|r| r.sum_sq / r.area).collect::<Vec<_>>(),
            "failures": report.failures,
        }),
    )
}

fn envelopes(spec: &WindowSpec) -> (DecayEnvelope, DecayEnvelope) {
    match spec {
        WindowSpec::Gaussian { c } => (
            DecayEnvelope::StretchedExp { kappa: *c, q: 2.0 },
            DecayEnvelope::StretchedExp { kappa: PI * PI / c, q: 2.0 },
        ),
        WindowSpec::Triangle => (DecayEnvelope::PowerLaw { q: 1.9 }, DecayEnvelope::PowerLaw { q: 1.9 }),
        WindowSpec::Custom(_) => (DecayEnvelope::PowerLaw { q: 2.0 }, DecayEnvelope::PowerLaw { q: 2.0 }),
    }
}

const HERMITE_CLUSTERS: usize = 6;
const SUPPORT_RADIUS: f64 = 3.0;

pub fn decay(cfg: &RunConfig, out: &OutputDir) -> Result<(), CliError> {
    let grid = grid_for(cfg, &cfg.region)?;
    let Solved { phi, op, spec } = solve(cfg, grid)?;
    let rank = cfg.rank.unwrap_or(4);
    let (time_env, freq_env) = envelopes(&cfg.window.spec);
    let rows = eigenfunction_decay(&phi, &op, &spec, rank, &time_env, Some(&freq_env), cfg.epsilon)?;
    out.csv("decay.csv", |w| write_decay_csv(&rows, DecaySide::Time, w))?;
    out.csv("decay_frequency.csv", |w| write_decay_csv(&rows, DecaySide::Frequency, w))?;

    let vanishing = kernel_vanishing_check(&phi, &op);
    let support: Vec<Value> = (0..rank.min(spec.len()))
        .filter(|&k| spec.eigenvalues()[k] > 1e-4)
        .map(|k| {
            let (fraction, peak) = mass_outside(spec.eigenfunction(k), SUPPORT_RADIUS);
            json!({ "k": k + 1, "mass_fraction_outside": fraction, "max_abs_outside": peak })
        })
        .collect();
    let fourier = match fourier_side_check(&phi, &cfg.region, rank) {
        Ok(r) => serde_json::to_value(r).expect("report serializes"),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let hermite_applicable = matches!(cfg.window.spec, WindowSpec::Gaussian { c } if (c - PI).abs() < 1e-12)
        && matches!(cfg.region, Region::Disc { center: (cx, cy), .. } if cx == 0.0 && cy == 0.0);
    let hermite = if hermite_applicable {
        let report = hermite_report(&spec, HERMITE_CLUSTERS)?;
        out.csv("hermite.csv", |w| report.write_csv(w))?;
        serde_json::to_value(&report).expect("report serializes")
    } else {
        json!({ "status": "skipped", "reason": "needs the gaussian:pi window on a centered disc" })
    };
    if let VanishingReport::Skipped { reason } = &vanishing {
        eprintln!("note: kernel vanishing check skipped: {reason}");
    }
    out.json(
        "decay_report.json",
        json!({
            "window": phi.label(),
            "region": cfg.region.label(),
            "epsilon": cfg.epsilon,
            "time_envelope": { "label": time_env.label(), "admissibility": envelope_admissible(&time_env, 0.1) },
            "frequency_envelope": { "label": freq_env.label(), "admissibility": envelope_admissible(&freq_env, 0.1) },
            "rows": rows,
            "kernel_vanishing": vanishing,
            "support_outside_3": support,
            "fourier_side": fourier,
            "hermite": hermite,
        }),
    )
}

fn read_input(cfg: &RunConfig) -> Result<Signal, CliError> {
    match cfg.input.as_ref().expect("filter input checked during config") {
        InputSpec::Csv(path) => {
            let file = fs::File::open(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            Signal::read_csv(BufReader::new(file))
                .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
        }
        InputSpec::Binary(path) => {
            let bytes = fs::read(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            let GridSpec::Fixed { n, dt } = cfg.grid else { unreachable!("binary input requires a fixed grid") };
            let sig = Signal::from_le_bytes(&bytes, dt)
                .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            if sig.grid().len() != n {
                return Err(CliError::config(format!(
                    "{} holds {} samples but --grid asks for {n}",
                    path.display(),
                    sig.grid().len()
                )));
            }
            Ok(sig)
        }
        InputSpec::Noise => {
            let grid = grid_for(cfg, &cfg.region)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let samples = (0..grid.len())
                .map(|_| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    Complex64::new(re, im)
                })
                .collect();
            Ok(Signal::new(grid, samples)?)
        }
    }
}

pub fn filter(cfg: &RunConfig, out: &OutputDir) -> Result<(), CliError> {
    let input = read_input(cfg)?;
    let grid = *input.grid();
    if let GridSpec::Fixed { n, dt } = cfg.grid {
        if grid.len() != n || (grid.dt() - dt).abs() > 1e-9 * dt {
            return Err(CliError::config(format!(
                "input grid ({} samples, dt {}) differs from --grid {n},{dt}",
                grid.len(),
                grid.dt()
            )));
        }
    }
    let Solved { phi, spec, .. } = solve(cfg, grid)?;
    let rank = cfg.rank.unwrap_or_else(|| (cfg.region.area().ceil() as usize).max(1));
    if rank > spec.len() {
        return Err(CliError::config(format!("--rank {rank} exceeds the {} available eigenfunctions", spec.len())));
    }
    let filtered = eigenfilter(&input, &spec, rank)?;
    let pg = phase_grid_for(grid, &cfg.region);
    let before = energy(&input, &phi, &cfg.region, &pg)?;
    let after = energy(&filtered, &phi, &cfg.region, &pg)?;
    out.csv("filtered.csv", |w| filtered.write_csv(w))?;
    let frac = |inside: f64, total: f64| if total > 0.0 { inside / total } else { 0.0 };
    out.json(
        "filter_report.json",
        json!({
            "window": phi.label(),
            "region": cfg.region.label(),
            "rank": rank,
            "input_energy": input.norm_sqr(),
            "output_energy": filtered.norm_sqr(),
            "in_region_before": before,
            "in_region_after": after,
            "fraction_before": frac(before, input.norm_sqr()),
            "fraction_after": frac(after, filtered.norm_sqr()),
        }),
    )
}

pub fn autocorr(cfg: &RunConfig, out: &OutputDir) -> Result<(), CliError> {
    let values: Vec<(f64, f64)> = cfg
        .scales
        .iter()
        .map(|&r| autocorr_integral(&cfg.density, &cfg.region, r).map(|v| (r, v)))
        .collect::<tfconc::Result<_>>()?;
    out.csv("autocorr.csv", |w: &mut dyn Write| {
        writeln!(w, "r,value")?;
        for (r, v) in &values {
            writeln!(w, "{r:.16e},{v:.16e}")?;
        }
        Ok(())
    })?;
    let condition = decay_condition_check(&cfg.density, cfg.power, cfg.constant, &cfg.scales);
    out.json(
        "autocorr_report.json",
        json!({
            "density": format!("{:?}", cfg.density),
            "region": cfg.region.label(),
            "region_area": cfg.region.area(),
            "values": values.iter().map(|(r, v)| json!({ "r": r, "value": v })).collect::<Vec<_>>(),
            "decay_condition": { "p": cfg.power, "C": cfg.constant, "radii": cfg.scales, "report": condition },
        }),
    )
}
