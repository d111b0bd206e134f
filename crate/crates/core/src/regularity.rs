//! Eigenfunction decay: admissible envelopes, time- and frequency-side decay
//! checks, compact-support checks, and the Hermite benchmark for the
//! Gaussian window on a centered disc.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::concentration::{
    assemble, assemble_truncating, auto_grid_for, eigendecompose, phase_grid_for, AssemblyMethod, ConcentrationOperator, Spectrum,
};
use crate::error::{Error, Result};
use crate::gabor::analyze_row;
use crate::grid::{inner_product, inverse_fourier_transform, make_window, LogReal, Signal, Window, WindowSpec};
use crate::region::{RasterizedRegion, Region};

/// Positive nonincreasing majorant `gamma(s)` on `[0, inf)`.
#[derive(Clone)]
pub enum DecayEnvelope {
    /// `(1 + s^2)^(-q/2)`
    PowerLaw { q: f64 },
    /// `exp(-kappa s^q)`
    StretchedExp { kappa: f64, q: f64 },
    Custom { label: String, ln_gamma: Arc<dyn Fn(f64) -> f64 + Send + Sync> },
}

impl fmt::Debug for DecayEnvelope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl DecayEnvelope {
    /// Custom envelope given through `ln gamma`.
    pub fn custom(label: impl Into<String>, ln_gamma: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        DecayEnvelope::Custom { label: label.into(), ln_gamma: Arc::new(ln_gamma) }
    }

    pub fn label(&self) -> String {
        match self {
            DecayEnvelope::PowerLaw { q } => format!("powerlaw:{q}"),
            DecayEnvelope::StretchedExp { kappa, q } => format!("stretchedexp:{kappa}:{q}"),
            DecayEnvelope::Custom { label, .. } => label.clone(),
        }
    }

    pub fn ln_eval(&self, s: f64) -> f64 {
        let s = s.abs();
        match self {
            DecayEnvelope::PowerLaw { q } => -0.5 * q * (s * s).ln_1p(),
            DecayEnvelope::StretchedExp { kappa, q } => -kappa * s.powf(*q),
            DecayEnvelope::Custom { ln_gamma, .. } => ln_gamma(s),
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.ln_eval(s).exp()
    }

    /// Positive and nonincreasing on a log-spaced sample of `[0, 1e12]`.
    pub fn is_valid(&self) -> bool {
        let mut prev = self.ln_eval(0.0);
        if !(prev.is_finite() || prev == f64::NEG_INFINITY) || prev == f64::NEG_INFINITY {
            return false;
        }
        for k in 0..=240 {
            let s = 10f64.powf(-6.0 + k as f64 * 0.075);
            let v = self.ln_eval(s);
            if v.is_nan() || v > prev + 1e-12 * prev.abs().max(1.0) || v == f64::INFINITY {
                return false;
            }
            prev = v;
        }
        true
    }
}

/// Per-condition verdicts for an envelope.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Admissibility {
    pub ok: bool,
    pub positive_nonincreasing: bool,
    /// `gamma(s) -> 0` as `s -> inf`.
    pub vanishes_at_infinity: bool,
    /// `int gamma^p < inf` for `p` in `{2, 2 - eps0/2}`.
    pub power_integrable: bool,
    /// `gamma(s - s0) / gamma(s)^(1 - eps)` bounded for `s0` in `{1, 2}` and `eps` in `{0.05, 0.1}`.
    pub shift_bounded: bool,
    /// Recorded for reference; only the limit at infinity is required.
    pub gamma_at_zero: f64,
}

const FAR: f64 = 1e15;

/// `int_a^b exp(p ln gamma(s)) ds` by composite Simpson in `ln s`.
fn decade_integral(gamma: &DecayEnvelope, p: f64, a: f64, b: f64) -> f64 {
    let n = 200;
    let (la, lb) = (a.ln(), b.ln());
    let h = (lb - la) / n as f64;
    let f = |u: f64| {
        let s = u.exp();
        (p * gamma.ln_eval(s) + u).exp()
    };
    let mut total = f(la) + f(lb);
    for k in 1..n {
        total += f(la + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    total * h / 3.0
}

/// Tail-ratio test: successive decade contributions must shrink geometrically.
fn power_integral_converges(gamma: &DecayEnvelope, p: f64) -> bool {
    let earlier = decade_integral(gamma, p, 1e5, 1e6);
    let later = decade_integral(gamma, p, 1e6, 1e7);
    if later == 0.0 {
        return true;
    }
    later.is_finite() && earlier > 0.0 && later / earlier < 0.9
}

fn shift_ratio_bounded(gamma: &DecayEnvelope, s0: f64, eps: f64) -> bool {
    let ln_ratio = |s: f64| gamma.ln_eval(s - s0) - (1.0 - eps) * gamma.ln_eval(s);
    let decade_max = |lo: f64| {
        (0..=64)
            .map(|k| ln_ratio(lo * 10f64.powf(k as f64 / 64.0)))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let last = decade_max(1e5);
    let before = decade_max(1e4);
    let all = (0..=9).map(|d| decade_max(s0.max(1.0) * 10f64.powi(d))).fold(f64::NEG_INFINITY, f64::max);
    all.is_finite() && (last <= before + 1e-9 * before.abs().max(1.0) || last == f64::NEG_INFINITY)
}

pub fn envelope_admissible(gamma: &DecayEnvelope, eps0: f64) -> Admissibility {
    let positive_nonincreasing = gamma.is_valid();
    let vanishes_at_infinity = gamma.eval(FAR) < 1e-6;
    let power_integrable = [2.0, 2.0 - eps0 / 2.0].iter().all(|&p| power_integral_converges(gamma, p));
    let shift_bounded = [1.0, 2.0]
        .iter()
        .all(|&s0| [0.05, 0.1].iter().all(|&eps| shift_ratio_bounded(gamma, s0, eps)));
    Admissibility {
        ok: positive_nonincreasing && vanishes_at_infinity && power_integrable && shift_bounded,
        positive_nonincreasing,
        vanishes_at_infinity,
        power_integrable,
        shift_bounded,
        gamma_at_zero: gamma.eval(0.0),
    }
}

/// `(|x|, ln |v(x)|)` samples of a function, optionally with a noise floor
/// below which samples carry no information.
#[derive(Debug, Clone)]
pub struct DecayProfile {
    points: Vec<(f64, f64)>,
    floor: Option<f64>,
}

/// Samples below this magnitude are treated as numerical noise.
pub const SAMPLE_FLOOR: f64 = 1e-14;

impl DecayProfile {
    pub fn new(points: Vec<(f64, f64)>, floor: Option<f64>) -> Self {
        Self { points, floor }
    }

    /// Profile of the samples themselves, with the [`SAMPLE_FLOOR`] noise floor.
    pub fn from_signal(f: &Signal) -> Self {
        let grid = f.grid();
        let points = f.samples().iter().enumerate().map(|(n, z)| (grid.t(n).abs(), z.norm().ln())).collect();
        Self { points, floor: Some(SAMPLE_FLOOR) }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn max_abscissa(&self) -> f64 {
        self.points.iter().map(|p| p.0).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    pub ok: bool,
    /// `max |psi(t)| / gamma(|t|)^(1 - eps)` over `|t| >= t_min`.
    pub c_fit: f64,
    /// Log-log slope of the binned ratio maxima over the last decade.
    pub trend: f64,
    /// Nothing above the noise floor beyond `t_min`.
    pub vacuous: bool,
}

/// Allowed upward drift of the binned log-ratio per unit of `ln |t|`.
pub const TREND_TOLERANCE: f64 = 0.05;
const BINS_PER_DECADE: f64 = 8.0;

pub fn decay_check(profile: &DecayProfile, gamma: &DecayEnvelope, epsilon: f64, t_min: f64) -> DecayReport {
    let floor_ln = profile.floor.map_or(f64::NEG_INFINITY, f64::ln);
    let usable: Vec<(f64, f64)> = profile
        .points
        .iter()
        .filter(|(s, v)| *s >= t_min && *v > floor_ln && v.is_finite())
        .map(|&(s, v)| (s, v - (1.0 - epsilon) * gamma.ln_eval(s)))
        .collect();
    if usable.is_empty() {
        return DecayReport { ok: true, c_fit: 0.0, trend: 0.0, vacuous: true };
    }
    let ln_c = usable.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let c_fit = ln_c.exp();
    let s_hi = usable.iter().map(|p| p.0).fold(0.0, f64::max);
    let s_lo = (s_hi / 10.0).max(t_min).max(f64::MIN_POSITIVE);
    let nbins = ((s_hi / s_lo).log10() * BINS_PER_DECADE).ceil().max(1.0) as usize;
    let mut bins = vec![f64::NEG_INFINITY; nbins];
    for &(s, r) in &usable {
        if s < s_lo {
            continue;
        }
        let b = (((s / s_lo).log10() * BINS_PER_DECADE).floor() as usize).min(nbins - 1);
        bins[b] = bins[b].max(r);
    }
    let pts: Vec<(f64, f64)> = bins
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .map(|(b, v)| ((s_lo * 10f64.powf((b as f64 + 0.5) / BINS_PER_DECADE)).ln(), *v))
        .collect();
    let trend = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        if sxx > 0.0 { sxy / sxx } else { 0.0 }
    } else {
        0.0
    };
    DecayReport { ok: c_fit.is_finite() && trend <= TREND_TOLERANCE, c_fit, trend, vacuous: false }
}

/// [`decay_check`] on the samples of `psi`.
pub fn decay_check_signal(psi: &Signal, gamma: &DecayEnvelope, epsilon: f64, t_min: f64) -> DecayReport {
    decay_check(&DecayProfile::from_signal(psi), gamma, epsilon, t_min)
}

/// Evaluates an eigenfunction off the grid through
/// `psi = (1/lambda) sum_cells w S psi(p) rho(p) phi`, using the closed form
/// of the window so that tails far beyond the grid stay accurate in log scale.
pub struct EigenExtension<'a> {
    phi: &'a Window,
    lambda: f64,
    /// `(tau, sigma, w S psi(p))` over the region's cells.
    cells: Vec<(f64, f64, Complex64)>,
}

impl<'a> EigenExtension<'a> {
    pub fn new(phi: &'a Window, raster: &RasterizedRegion, psi: &Signal, lambda: f64) -> Result<Self> {
        if phi.eval_log(0.0).is_none() {
            return Err(Error::UnsupportedCase("off-grid extension needs a closed-form window".into()));
        }
        if !(lambda > 0.0) {
            return Err(Error::Domain(format!("extension needs a positive eigenvalue, got {lambda}")));
        }
        let pg = raster.phase_grid();
        let mut cells = Vec::new();
        for i in 0..pg.n_tau() {
            if raster.row_is_empty(i) {
                continue;
            }
            let row = analyze_row(psi, phi, pg, pg.shift(i));
            for (j, w) in raster.row(i).iter().enumerate() {
                if *w > 0.0 {
                    cells.push((pg.tau(i), pg.sigma(j), row[j] * *w));
                }
            }
        }
        Ok(Self { phi, lambda, cells })
    }

    /// Sums `c * exp(ln_mag)` terms accurately when magnitudes span many orders.
    fn log_sum(terms: impl Iterator<Item = (f64, Complex64)>) -> f64 {
        let terms: Vec<(f64, Complex64)> = terms.filter(|t| t.0 > f64::NEG_INFINITY).collect();
        let top = terms.iter().map(|t| t.0).fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let sum: Complex64 = terms.iter().map(|(l, c)| c * (l - top).exp()).sum();
        top + sum.norm().ln()
    }

    /// `ln |psi(x)|`.
    pub fn ln_abs_time(&self, x: f64) -> f64 {
        let terms = self.cells.iter().map(|&(tau, sigma, c)| {
            let LogReal { ln_abs, sign } = self.phi.eval_log(x + tau).expect("closed-form window");
            let phase = Complex64::from_polar(sign, PI * (tau * sigma + 2.0 * sigma * x));
            (ln_abs, c * phase)
        });
        Self::log_sum(terms) - self.lambda.ln()
    }

    /// `ln |psi^(xi)|`, using `(rho(tau, sigma) phi)^ = rho(-sigma, tau) phi^`.
    pub fn ln_abs_frequency(&self, xi: f64) -> f64 {
        let terms = self.cells.iter().map(|&(tau, sigma, c)| {
            let LogReal { ln_abs, sign } = self.phi.eval_hat_log(xi - sigma).expect("closed-form window");
            let phase = Complex64::from_polar(sign, PI * (-tau * sigma + 2.0 * tau * xi));
            (ln_abs, c * phase)
        });
        Self::log_sum(terms) - self.lambda.ln()
    }

    fn profile(&self, from: f64, to: f64, per_decade: usize, eval: impl Fn(f64) -> f64 + Sync) -> DecayProfile {
        let from = from.max(1e-3);
        let decades = (to / from).log10().max(0.0);
        let n = ((decades * per_decade as f64).ceil() as usize).max(1);
        let points: Vec<(f64, f64)> = (0..=n)
            .into_par_iter()
            .flat_map_iter(|k| {
                let s = from * 10f64.powf(decades * k as f64 / n as f64);
                [(s, eval(s)), (s, eval(-s))]
            })
            .collect();
        DecayProfile::new(points, None)
    }

    pub fn time_profile(&self, from: f64, to: f64, per_decade: usize) -> DecayProfile {
        self.profile(from, to, per_decade, |x| self.ln_abs_time(x))
    }

    pub fn frequency_profile(&self, from: f64, to: f64, per_decade: usize) -> DecayProfile {
        self.profile(from, to, per_decade, |x| self.ln_abs_frequency(x))
    }
}

/// Result of a compact-support kernel check.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum VanishingReport {
    Checked { ok: bool, threshold: f64, max_entry: f64 },
    Skipped { reason: String },
}

/// Largest operator entry with `|x - y| >= distance`; `ok` when below 1e-14.
pub fn kernel_vanishing_beyond(op: &ConcentrationOperator, distance: f64) -> VanishingReport {
    let grid = op.grid();
    let n = op.dim();
    let min_lag = (distance / grid.dt() - 1e-9).ceil() as usize;
    let mut worst: f64 = 0.0;
    for r in 0..n {
        for c in 0..n {
            if r.abs_diff(c) >= min_lag {
                worst = worst.max(op.entry(r, c).norm());
            }
        }
    }
    VanishingReport::Checked { ok: worst < 1e-14, threshold: distance, max_entry: worst }
}

/// For a window vanishing outside `[-a, a]`, checks that the operator kernel
/// vanishes whenever `|x - y| >= 2a`.
pub fn kernel_vanishing_check(phi: &Window, op: &ConcentrationOperator) -> VanishingReport {
    match phi.compact_support_radius() {
        Some(a) => kernel_vanishing_beyond(op, 2.0 * a),
        None => VanishingReport::Skipped { reason: format!("window {} has no compact support on the grid", phi.label()) },
    }
}

/// `(mass outside [-radius, radius]) / (total mass)` and the largest sample there.
pub fn mass_outside(psi: &Signal, radius: f64) -> (f64, f64) {
    let grid = psi.grid();
    let mut outside = 0.0;
    let mut peak: f64 = 0.0;
    for (n, z) in psi.samples().iter().enumerate() {
        if grid.t(n).abs() > radius {
            outside += z.norm_sqr();
            peak = peak.max(z.norm());
        }
    }
    let total = psi.samples().iter().map(|z| z.norm_sqr()).sum::<f64>();
    (if total > 0.0 { outside / total } else { 0.0 }, peak)
}

/// Smallest singular value of `A^H B` for two orthonormal families, i.e. the
/// cosine of the largest principal angle between their spans.
pub fn subspace_overlap(a: &[Signal], b: &[Signal]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Ok(0.0);
    }
    let mut g = Mat::<Complex64>::zeros(a.len(), b.len());
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            g[(i, j)] = inner_product(y, x)?;
        }
    }
    let sv = g.singular_values().map_err(|e| Error::Numerical(format!("svd: {e:?}")))?;
    Ok(sv.iter().copied().take(a.len().min(b.len())).fold(f64::INFINITY, f64::min))
}

/// Groups of consecutive indices whose eigenvalues differ by less than `gap`,
/// covering at least the first `k` indices.
pub fn clusters(eigenvalues: &[f64], k: usize, gap: f64) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut i = 0;
    while i < eigenvalues.len() && i < k {
        let mut group = vec![i];
        while i + 1 < eigenvalues.len() && (eigenvalues[i] - eigenvalues[i + 1]).abs() < gap {
            i += 1;
            group.push(i);
        }
        out.push(group);
        i += 1;
    }
    out
}

/// Threshold below which eigenvalues are treated as numerically zero.
pub const EIGEN_FLOOR: f64 = 1e-6;
const CLUSTER_GAP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FourierSideReport {
    pub max_eigenvalue_gap: f64,
    pub max_overlap_defect: f64,
    pub compared: usize,
}

/// Compares `C_Omega(phi)` with the operator for the rotated region and the
/// dual window `F^-1 phi`, whose eigenfunctions are `F^-1 psi_j`.
pub fn fourier_side_check(phi: &Window, region: &Region, k_max: usize) -> Result<FourierSideReport> {
    let grid = *phi.grid();
    let op = assemble(phi, region, &phase_grid_for(grid, region), AssemblyMethod::Factorized)?;
    let spec = eigendecompose(&op)?;
    let dual = phi.inverse_dual()?;
    let rotated = region.fourier_rotate();
    let dual_op = assemble_truncating(&dual, &rotated, &phase_grid_for(*dual.grid(), &rotated))?;
    let dual_spec = eigendecompose(&dual_op)?;
    let a = spec.eigenvalues();
    let b = dual_spec.eigenvalues();
    let k = k_max.min(a.len()).min(b.len());
    let mut gap: f64 = 0.0;
    let mut compared = 0;
    for i in 0..k {
        if a[i] > EIGEN_FLOOR || b[i] > EIGEN_FLOOR {
            gap = gap.max((a[i] - b[i]).abs());
            compared += 1;
        }
    }
    let mut defect: f64 = 0.0;
    for group in clusters(b, compared, CLUSTER_GAP) {
        let mapped: Vec<Signal> = group.iter().map(|&j| inverse_fourier_transform(spec.eigenfunction(j))).collect();
        let theirs: Vec<Signal> = group.iter().map(|&j| dual_spec.eigenfunction(j).clone()).collect();
        defect = defect.max(1.0 - subspace_overlap(&mapped, &theirs)?);
    }
    Ok(FourierSideReport { max_eigenvalue_gap: gap, max_overlap_defect: defect, compared })
}

/// Orthonormal Hermite functions `h_0 .. h_{count-1}` for the Gaussian
/// `exp(-pi t^2)`, by the three-term recurrence followed by Gram-Schmidt on the grid.
pub fn hermite_functions(grid: crate::grid::SampleGrid, count: usize) -> Vec<Signal> {
    let n = grid.len();
    let mut raw: Vec<Vec<f64>> = Vec::with_capacity(count);
    let x: Vec<f64> = (0..n).map(|k| (2.0 * PI).sqrt() * grid.t(k)).collect();
    for j in 0..count {
        let next: Vec<f64> = match j {
            0 => (0..n).map(|k| 2f64.powf(0.25) * (-PI * grid.t(k).powi(2)).exp()).collect(),
            _ => {
                let a = (2.0 / j as f64).sqrt();
                let b = ((j - 1) as f64 / j as f64).sqrt();
                (0..n)
                    .map(|k| a * x[k] * raw[j - 1][k] - if j >= 2 { b * raw[j - 2][k] } else { 0.0 })
                    .collect()
            }
        };
        raw.push(next);
    }
    let mut basis: Vec<Signal> = Vec::with_capacity(count);
    for v in raw {
        let mut s = Signal::new(grid, v.into_iter().map(|r| Complex64::new(r, 0.0)).collect()).expect("grid length");
        for _ in 0..2 {
            for b in &basis {
                let c = inner_product(&s, b).expect("shared grid");
                s = s.axpy(-c, b).expect("shared grid");
            }
        }
        let norm = s.norm();
        basis.push(s.scaled((1.0 / norm).into()));
    }
    basis
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterOverlap {
    pub cluster: usize,
    pub indices: Vec<usize>,
    pub overlap: f64,
    pub lambda_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HermiteReport {
    pub overlaps: Vec<ClusterOverlap>,
    pub decay_slope: f64,
    pub decay_intercept: f64,
    pub decay_r2: f64,
    pub decay_points: usize,
    /// `lambda_n n^m` decreasing over the fitted range, for `m = 2, 3, 4`.
    pub faster_than_polynomial: Vec<(u32, bool)>,
}

impl HermiteReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "cluster,overlap,lambda_mean")?;
        for c in &self.overlaps {
            writeln!(w, "{},{:.16e},{:.16e}", c.cluster + 1, c.overlap, c.lambda_mean)?;
        }
        Ok(())
    }
}

/// Eigenvalue window used for the post-plunge decay fit.
const DECAY_FIT_RANGE: (f64, f64) = (1e-12, 0.1);

/// Gaussian window with `c = pi` on a centered disc: eigenfunctions against
/// Hermite functions, and exponential decay of the eigenvalue tail.
pub fn hermite_benchmark(c: f64, disc_radius: f64, k_max: usize) -> Result<HermiteReport> {
    if (c - PI).abs() > 1e-12 {
        return Err(Error::UnsupportedCase(format!(
            "hermite comparison is implemented for c = pi only (got {c}); other widths need elliptical regions"
        )));
    }
    let spec_w = WindowSpec::Gaussian { c };
    let region = Region::disc(0.0, 0.0, disc_radius)?;
    let grid = auto_grid_for(&spec_w, &region)?;
    let phi = make_window(&spec_w, grid)?;
    let op = assemble(&phi, &region, &phase_grid_for(grid, &region), AssemblyMethod::Factorized)?;
    let spec = eigendecompose(&op)?;
    hermite_report(&spec, k_max)
}

pub fn hermite_report(spec: &Spectrum, k_max: usize) -> Result<HermiteReport> {
    let ev = spec.eigenvalues();
    let groups = clusters(ev, k_max, CLUSTER_GAP);
    let needed = groups.last().map_or(0, |g| g[g.len() - 1] + 1);
    let grid = *spec.eigenfunction(0).grid();
    let herm = hermite_functions(grid, needed);
    let mut overlaps = Vec::new();
    for (ci, g) in groups.iter().enumerate() {
        let ours: Vec<Signal> = g.iter().map(|&j| spec.eigenfunction(j).clone()).collect();
        let theirs: Vec<Signal> = g.iter().map(|&j| herm[j].clone()).collect();
        overlaps.push(ClusterOverlap {
            cluster: ci,
            indices: g.clone(),
            overlap: subspace_overlap(&ours, &theirs)?,
            lambda_mean: g.iter().map(|&j| ev[j]).sum::<f64>() / g.len() as f64,
        });
    }
    let tail: Vec<(f64, f64)> = ev
        .iter()
        .enumerate()
        .filter(|(_, l)| **l >= DECAY_FIT_RANGE.0 && **l <= DECAY_FIT_RANGE.1)
        .map(|(n, l)| (n as f64, *l))
        .collect();
    if tail.len() < 3 {
        return Err(Error::UnsupportedCase(format!("only {} eigenvalues in the decay fit range", tail.len())));
    }
    let n = tail.len() as f64;
    let mx = tail.iter().map(|p| p.0).sum::<f64>() / n;
    let my = tail.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let sxx: f64 = tail.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = tail.iter().map(|p| (p.0 - mx) * (p.1.ln() - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = tail.iter().map(|p| (p.1.ln() - my).powi(2)).sum();
    let ss_res: f64 = tail.iter().map(|p| (p.1.ln() - intercept - slope * p.0).powi(2)).sum();
    let faster_than_polynomial = [2u32, 3, 4]
        .iter()
        .map(|&m| {
            let scaled: Vec<f64> = tail.iter().map(|(k, l)| l * (k + 1.0).powi(m as i32)).collect();
            (m, scaled.windows(2).all(|w| w[1] < w[0]))
        })
        .collect();
    Ok(HermiteReport {
        overlaps,
        decay_slope: slope,
        decay_intercept: intercept,
        decay_r2: if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 },
        decay_points: tail.len(),
        faster_than_polynomial,
    })
}

/// One row of the decay report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayRow {
    pub k: usize,
    pub lambda: f64,
    pub time: DecayReport,
    pub frequency: Option<DecayReport>,
}

/// Which side of a [`DecayRow`] to export.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecaySide {
    Time,
    Frequency,
}

pub fn write_decay_csv<W: Write>(rows: &[DecayRow], side: DecaySide, mut w: W) -> std::io::Result<()> {
    writeln!(w, "k,lambda,C_fit,ok")?;
    for row in rows {
        let report = match side {
            DecaySide::Time => Some(&row.time),
            DecaySide::Frequency => row.frequency.as_ref(),
        };
        if let Some(r) = report {
            writeln!(w, "{},{:.16e},{:.16e},{}", row.k, row.lambda, r.c_fit, r.ok)?;
        }
    }
    Ok(())
}

/// Default `t_min`: region extent plus window radius plus one.
pub fn default_t_min(region_extent: f64, window_radius: f64) -> f64 {
    region_extent + window_radius + 1.0
}

/// Time- and frequency-side decay of the top `k` eigenfunctions against
/// the supplied envelopes, using the closed-form extension when available.
pub fn eigenfunction_decay(
    phi: &Window,
    op: &ConcentrationOperator,
    spec: &Spectrum,
    k: usize,
    time_envelope: &DecayEnvelope,
    frequency_envelope: Option<&DecayEnvelope>,
    epsilon: f64,
) -> Result<Vec<DecayRow>> {
    let region = op.region();
    let radius = region.radius().max(1e-3);
    let t_min = default_t_min(region.tau_extent(), phi.essential_radius());
    let s_min = default_t_min(region.sigma_extent(), phi.fourier_dual()?.essential_radius());
    let reach = 20.0 * radius / epsilon.max(0.01);
    let closed_form = phi.eval_log(0.0).is_some();
    let picks: Vec<usize> = (0..k.min(spec.len())).filter(|&j| spec.eigenvalues()[j] > 1e-4).collect();
    picks
        .par_iter()
        .map(|&j| {
            let psi = spec.eigenfunction(j);
            let lambda = spec.eigenvalues()[j];
            let (time, frequency) = if closed_form {
                let ext = EigenExtension::new(phi, op.raster(), psi, lambda)?;
                let t_hi = reach.max(10.0 * t_min);
                let time = decay_check(&ext.time_profile(t_min, t_hi, 64), time_envelope, epsilon, t_min);
                let frequency = frequency_envelope.map(|g| {
                    let s_hi = reach.max(10.0 * s_min);
                    decay_check(&ext.frequency_profile(s_min, s_hi, 64), g, epsilon, s_min)
                });
                (time, frequency)
            } else {
                let time = decay_check_signal(psi, time_envelope, epsilon, t_min);
                let frequency = frequency_envelope.map(|g| {
                    decay_check_signal(&crate::grid::fourier_transform(psi), g, epsilon, s_min)
                });
                (time, frequency)
            };
            Ok(DecayRow { k: j + 1, lambda, time, frequency })
        })
        .collect()
}
