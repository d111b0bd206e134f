//! Scaling experiments over dilated regions `Omega_r`, log-log fits, and the
//! autocorrelation and tail-decay checks on planar densities.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::concentration::{
    assemble, auto_grid, counting_at_least, counting_between, eigendecompose, phase_grid_for, trace_identity,
    AssemblyMethod,
};
use crate::error::{Error, Result};
use crate::fft;
use crate::grid::{make_window, SampleGrid, WindowSpec};
use crate::region::Region;

/// How the sample grid is chosen for a scaling run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridChoice {
    /// One auto-sized grid shared by all scales, sized for the largest scale that fits.
    Auto,
    Fixed(SampleGrid),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub r: f64,
    pub area: f64,
    pub raster_area: f64,
    pub trace: f64,
    pub sum_sq: f64,
    pub n_lambda: usize,
    pub n_plunge: usize,
    pub samples: usize,
    #[serde(skip)]
    pub eigenvalues: Vec<f64>,
}

impl ScalingRow {
    /// `sum lambda - sum lambda^2`.
    pub fn deficit(&self) -> f64 {
        self.trace - self.sum_sq
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleFailure {
    pub r: f64,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    pub window: String,
    pub region: String,
    pub lambda: f64,
    pub mu: f64,
    pub rows: Vec<ScalingRow>,
    pub failures: Vec<ScaleFailure>,
}

impl ScalingReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "r,area,trace,sum_sq,n_lambda,n_plunge")?;
        for row in &self.rows {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{},{}",
                row.r, row.area, row.trace, row.sum_sq, row.n_lambda, row.n_plunge
            )?;
        }
        Ok(())
    }

    /// `n(lambda, Omega_r) / area(Omega_r)` with `>=` counting, per row.
    pub fn count_ratios(&self, lambda: f64) -> Vec<f64> {
        self.rows.iter().map(|row| counting_at_least(&row.eigenvalues, lambda) as f64 / row.area).collect()
    }
}

fn check_threshold(name: &str, x: f64) -> Result<()> {
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::Domain(format!("{name} = {x} must lie in (0, 1)")));
    }
    Ok(())
}

/// Assembles and diagonalizes the operator for every `Omega_r`.
///
/// Counts use `n_lambda = card{lambda_k >= lambda}` and
/// `n_plunge = card{lambda <= lambda_k <= mu}`. Scales whose region does not
/// fit the grid are reported in `failures` instead of aborting the run.
pub fn scaling_experiment(
    window: &WindowSpec,
    region: &Region,
    scales: &[f64],
    lambda: f64,
    mu: f64,
    grid: GridChoice,
    method: AssemblyMethod,
) -> Result<ScalingReport> {
    check_threshold("lambda", lambda)?;
    check_threshold("mu", mu)?;
    if scales.is_empty() {
        return Err(Error::Domain("no scales given".into()));
    }
    let mut scales = scales.to_vec();
    for &r in &scales {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::InvalidScale(r));
        }
    }
    scales.sort_by(f64::total_cmp);
    scales.dedup();

    let shared = match grid {
        GridChoice::Fixed(g) => Some(g),
        GridChoice::Auto => scales.iter().rev().find_map(|&r| {
            let scaled = region.scale(r).ok()?;
            auto_grid(window, scaled.tau_extent(), scaled.sigma_extent()).ok()
        }),
    };
    let outcomes: Vec<std::result::Result<ScalingRow, ScaleFailure>> = scales
        .par_iter()
        .map(|&r| {
            let fail = |e: Error| ScaleFailure { r, message: e.to_string() };
            let scaled = region.scale(r).map_err(fail)?;
            let grid = match shared {
                Some(g) => g,
                None => auto_grid(window, scaled.tau_extent(), scaled.sigma_extent()).map_err(fail)?,
            };
            let phi = make_window(window, grid).map_err(fail)?;
            let pg = phase_grid_for(grid, &scaled);
            let op = assemble(&phi, &scaled, &pg, method).map_err(fail)?;
            let spec = eigendecompose(&op).map_err(fail)?;
            let tr = trace_identity(&op);
            let ev = spec.eigenvalues().to_vec();
            Ok(ScalingRow {
                r,
                area: scaled.area(),
                raster_area: tr.raster_area,
                trace: tr.trace,
                sum_sq: spec.sum_sq(),
                n_lambda: counting_at_least(&ev, lambda),
                n_plunge: counting_between(&ev, lambda, mu),
                samples: grid.len(),
                eigenvalues: ev,
            })
        })
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(row) => rows.push(row),
            Err(f) => failures.push(f),
        }
    }
    Ok(ScalingReport { window: window.label(), region: region.label(), lambda, mu, rows, failures })
}

/// Ordinary least squares of `log y` on `log r`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub rows_used: usize,
    /// Set when rows were dropped for having too small a count.
    pub flagged: bool,
}

fn log_log_fit(points: &[(f64, f64)], dropped: bool) -> Result<LogLogFit> {
    if points.len() < 2 {
        return Err(Error::UnsupportedCase(format!(
            "{} usable row(s); a log-log fit needs at least two",
            points.len()
        )));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::UnsupportedCase("all usable rows share one scale".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(LogLogFit { slope, intercept, r2, rows_used: points.len(), flagged: dropped })
}

/// Fit of `log n(lambda, mu, Omega_r)` against `log r` over rows with count >= 2.
pub fn plunge_fit(report: &ScalingReport, lambda: f64, mu: f64) -> Result<LogLogFit> {
    check_threshold("lambda", lambda)?;
    check_threshold("mu", mu)?;
    if lambda >= mu {
        return Err(Error::Domain(format!("lambda = {lambda} must be below mu = {mu}")));
    }
    if report.rows.len() < 3 {
        return Err(Error::Domain(format!("plunge fit needs at least 3 scales, got {}", report.rows.len())));
    }
    let points: Vec<(f64, f64)> = report
        .rows
        .iter()
        .map(|row| (row.r, counting_between(&row.eigenvalues, lambda, mu) as f64))
        .filter(|p| p.1 >= 2.0)
        .collect();
    let dropped = points.len() < report.rows.len();
    log_log_fit(&points, dropped)
}

/// Growth rate of the absolute deficit `sum lambda - sum lambda^2` in `r`.
pub fn hs_error_rate(report: &ScalingReport) -> Result<LogLogFit> {
    if report.rows.len() < 3 {
        return Err(Error::Domain(format!("rate fit needs at least 3 scales, got {}", report.rows.len())));
    }
    let points: Vec<(f64, f64)> =
        report.rows.iter().map(|row| (row.r, row.deficit())).filter(|p| p.1 > 1e-12).collect();
    let dropped = points.len() < report.rows.len();
    log_log_fit(&points, dropped)
}

/// Radially symmetric probability densities on the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Density {
    /// Centered normal with per-axis standard deviation `sigma`.
    Gaussian { sigma: f64 },
    /// `(1 + |x|^2)^(-3/2) / (2 pi)`, whose mass outside radius `r` is `(1 + r^2)^(-1/2)`.
    PowerTail,
}

impl Density {
    /// `|H|^2` of the unit Gaussian window, `exp(-pi |x|^2)`.
    pub fn gaussian_ambiguity() -> Density {
        Density::Gaussian { sigma: 1.0 / (2.0 * PI).sqrt() }
    }

    pub fn radial(&self, rho: f64) -> f64 {
        match *self {
            Density::Gaussian { sigma } => (-rho * rho / (2.0 * sigma * sigma)).exp() / (2.0 * PI * sigma * sigma),
            Density::PowerTail => (1.0 + rho * rho).powf(-1.5) / (2.0 * PI),
        }
    }

    fn length_scale(&self) -> f64 {
        match *self {
            Density::Gaussian { sigma } => sigma,
            Density::PowerTail => 1.0,
        }
    }

    /// `int_{|x| > r} f`, by mapped Gauss-Legendre quadrature in the radius.
    pub fn tail_mass(&self, r: f64) -> f64 {
        let r = r.max(0.0);
        let l = self.length_scale();
        // rho = r + l u / (1 - u) maps [0, 1) onto [r, inf).
        gauss_legendre(0.0, 1.0, 512, |u| {
            if u >= 1.0 {
                return 0.0;
            }
            let rho = r + l * u / (1.0 - u);
            let jac = l / ((1.0 - u) * (1.0 - u));
            2.0 * PI * rho * self.radial(rho) * jac
        })
    }

    pub fn total_mass(&self) -> f64 {
        self.tail_mass(0.0)
    }

    /// Mass of the axis-aligned cell `[x0, x1] x [y0, y1]`.
    fn cell_mass(&self, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
        match *self {
            Density::Gaussian { sigma } => {
                let s = sigma * std::f64::consts::SQRT_2;
                let axis = |a: f64, b: f64| 0.5 * (libm::erf(b / s) - libm::erf(a / s));
                axis(x0, x1) * axis(y0, y1)
            }
            Density::PowerTail => {
                let inner = |x: f64| gauss_legendre(y0, y1, 1, |y| self.radial(x.hypot(y)));
                gauss_legendre(x0, x1, 1, inner)
            }
        }
    }

    fn check_normalized(&self) -> Result<()> {
        if let Density::Gaussian { sigma } = *self {
            if !(sigma.is_finite() && sigma > 0.0) {
                return Err(Error::Domain(format!("gaussian density needs sigma > 0, got {sigma}")));
            }
        }
        let mass = self.total_mass();
        if (mass - 1.0).abs() > 1e-6 {
            return Err(Error::Normalization { mass, tol: 1e-6 });
        }
        Ok(())
    }
}

const GL_NODES: [f64; 4] = [0.1834346424956498, 0.5255324099163290, 0.7966664774136267, 0.9602898564975363];
const GL_WEIGHTS: [f64; 4] = [0.3626837833783620, 0.3137066458778873, 0.2223810344533745, 0.1012285362903763];

/// Composite 8-point Gauss-Legendre rule over `panels` equal panels.
fn gauss_legendre(a: f64, b: f64, panels: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        let half = 0.5 * h;
        let mut s = 0.0;
        for (x, w) in GL_NODES.iter().zip(&GL_WEIGHTS) {
            s += w * (f(mid - half * x) + f(mid + half * x));
        }
        total += s * half;
    }
    total
}

/// Cells per unit length used to discretize `Q` in [`autocorr_integral`].
const AUTOCORR_RESOLUTION: f64 = 200.0;

/// `r^-2 int_{rQ} int_{rQ} f(x - y) dx dy`, evaluated as
/// `int_Q I(eta) d eta` with `I(eta) = int_{r(Q - eta)} f`.
///
/// `Q` is sampled by cell centers at spacing `h`; the density is integrated
/// exactly over each lag cell, so the inner integral stays accurate for
/// arbitrarily concentrated `f`.
pub fn autocorr_integral(density: &Density, q: &Region, r: f64) -> Result<f64> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::InvalidScale(r));
    }
    density.check_normalized()?;
    let Some(bb) = q.bounding_box() else {
        return Ok(0.0);
    };
    let width = (bb[1] - bb[0]).max(bb[3] - bb[2]);
    let m = ((width * AUTOCORR_RESOLUTION).ceil() as usize).clamp(8, 1024);
    let h = width / m as f64;
    let (mx, my) = (((bb[1] - bb[0]) / h).ceil() as usize, ((bb[3] - bb[2]) / h).ceil() as usize);
    let (mx, my) = (mx.max(1), my.max(1));
    let (px, py) = (2 * mx - 1, 2 * my - 1);
    let mut chi = vec![Complex64::new(0.0, 0.0); px * py];
    for i in 0..mx {
        for j in 0..my {
            let (x, y) = (bb[0] + (i as f64 + 0.5) * h, bb[2] + (j as f64 + 0.5) * h);
            if q.contains(x, y) {
                chi[i * py + j] = Complex64::new(1.0, 0.0);
            }
        }
    }
    // Lag kernel: mass of f_r over the lag cell, f_r(u) = r^2 f(r u).
    let mut kern = vec![Complex64::new(0.0, 0.0); px * py];
    for di in -(mx as i64 - 1)..mx as i64 {
        for dj in -(my as i64 - 1)..my as i64 {
            let (ux, uy) = (di as f64 * h, dj as f64 * h);
            let mass = density.cell_mass(r * (ux - h / 2.0), r * (ux + h / 2.0), r * (uy - h / 2.0), r * (uy + h / 2.0));
            let (a, b) = (di.rem_euclid(px as i64) as usize, dj.rem_euclid(py as i64) as usize);
            kern[a * py + b] = Complex64::new(mass, 0.0);
        }
    }
    // sum_eta chi(eta) sum_u K(u) chi(eta + u): circular correlation on a padded grid.
    let mut a = chi.clone();
    fft::forward_2d(&mut a, px, py);
    fft::forward_2d(&mut kern, px, py);
    let mut prod: Vec<Complex64> = a.iter().zip(&kern).map(|(x, k)| x * k.conj()).collect();
    fft::inverse_2d(&mut prod, px, py);
    let norm = (px * py) as f64;
    // prod[eta] = sum_u chi(eta + u) K(u).
    let total: f64 = chi.iter().zip(&prod).map(|(c, p)| c.re * p.re / norm).sum();
    Ok(total * h * h)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayConditionReport {
    pub ok: bool,
    /// Radius where `|1 - int_{B_r} f| r^p / C` is largest.
    pub binding_radius: f64,
    pub worst_ratio: f64,
}

/// Checks `|1 - int_{B_r} f| <= C / r^p` at every radius.
pub fn decay_condition_check(density: &Density, p: f64, c: f64, radii: &[f64]) -> DecayConditionReport {
    let mut worst = 0.0;
    let mut binding = f64::NAN;
    let total = density.total_mass();
    for &r in radii {
        let deficit = (1.0 - total + density.tail_mass(r)).abs();
        let ratio = if r <= 0.0 { 0.0 } else { deficit * r.powf(p) / c };
        if binding.is_nan() || ratio > worst {
            worst = ratio;
            binding = r;
        }
    }
    DecayConditionReport { ok: worst <= 1.0, binding_radius: binding, worst_ratio: worst }
}

/// Gaussian window with `c = pi` and a centered disc of radius 2: the
/// standard scaling setup.
pub fn default_setup() -> (WindowSpec, Region) {
    (WindowSpec::Gaussian { c: PI }, Region::Disc { center: (0.0, 0.0), radius: 2.0 })
}
