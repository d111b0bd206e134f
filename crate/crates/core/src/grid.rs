//! Discrete signals on symmetric uniform grids.
//!
//! A [`SampleGrid`] with `N` samples and step `dt` places sample `n` at
//! `t_n = (n - (N-1)/2) dt`. Its frequency grid has the same length, step
//! `1 / (N dt)` and the same symmetric placement, so the Riemann-sum Fourier
//! transform between the two is exactly unitary for every `N`. Integrals are
//! Riemann sums with weight `dt`.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft;

/// Relative tolerance for treating two grid steps as the same grid.
const GRID_STEP_RTOL: f64 = 1e-12;
/// Largest relative misalignment accepted for a time shift.
const ALIGN_RTOL: f64 = 1e-6;
/// Window energy allowed outside the grid or outside its essential radius.
pub const WINDOW_TAIL_MASS: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub struct SampleGrid {
    n: usize,
    dt: f64,
}

impl PartialEq for SampleGrid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && (self.dt - other.dt).abs() <= GRID_STEP_RTOL * self.dt.max(other.dt)
    }
}

impl SampleGrid {
    pub fn new(n: usize, dt: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 samples, got {n}")));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidGrid(format!("step must be positive, got {dt}")));
        }
        Ok(Self { n, dt })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Offset of the sample index from the grid center, `n - (N-1)/2`.
    pub fn centered_index(&self, n: usize) -> f64 {
        n as f64 - (self.n as f64 - 1.0) / 2.0
    }

    pub fn t(&self, n: usize) -> f64 {
        self.centered_index(n) * self.dt
    }

    pub fn t_start(&self) -> f64 {
        self.t(0)
    }

    /// Largest |t| on the grid.
    pub fn half_span(&self) -> f64 {
        (self.n as f64 - 1.0) * self.dt / 2.0
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n).map(|n| self.t(n)).collect()
    }

    /// Step of the induced frequency grid, `1 / (N dt)`.
    pub fn dsigma(&self) -> f64 {
        1.0 / (self.n as f64 * self.dt)
    }

    /// The frequency grid, itself a symmetric [`SampleGrid`].
    pub fn frequency_grid(&self) -> SampleGrid {
        SampleGrid { n: self.n, dt: self.dsigma() }
    }

    /// Index of the sample at exactly `t = 0`, if the grid has one (odd `N`).
    pub fn zero_index(&self) -> Option<usize> {
        (self.n % 2 == 1).then_some((self.n - 1) / 2)
    }

    /// Converts a grid-aligned time shift to a sample offset.
    pub fn shift_steps(&self, tau: f64) -> Result<i64> {
        let m = (tau / self.dt).round();
        if (tau - m * self.dt).abs() > ALIGN_RTOL * self.dt {
            return Err(Error::Alignment { tau, dt: self.dt });
        }
        Ok(m as i64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    grid: SampleGrid,
    samples: Vec<Complex64>,
}

impl Signal {
    pub fn new(grid: SampleGrid, samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "{} samples for a grid of length {}",
                samples.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, samples })
    }

    pub fn zeros(grid: SampleGrid) -> Self {
        Self { grid, samples: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    pub fn from_fn(grid: SampleGrid, f: impl Fn(f64) -> Complex64) -> Self {
        let samples = (0..grid.len()).map(|n| f(grid.t(n))).collect();
        Self { grid, samples }
    }

    pub fn grid(&self) -> &SampleGrid {
        &self.grid
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [Complex64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn norm_sqr(&self) -> f64 {
        self.grid.dt * self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scaled(&self, a: Complex64) -> Signal {
        Signal { grid: self.grid, samples: self.samples.iter().map(|z| z * a).collect() }
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: Complex64, other: &Signal) -> Result<Signal> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let samples = self.samples.iter().zip(&other.samples).map(|(x, y)| x + a * y).collect();
        Ok(Signal { grid: self.grid, samples })
    }

    pub fn max_abs_diff(&self, other: &Signal) -> f64 {
        self.samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Writes `t,re,im` rows at 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,re,im")?;
        for (n, z) in self.samples.iter().enumerate() {
            writeln!(w, "{:.16e},{:.16e},{:.16e}", self.grid.t(n), z.re, z.im)?;
        }
        Ok(())
    }

    /// Reads the `t,re,im` format. Lines starting with `#` are skipped; the
    /// grid is recovered from the time column, which must be uniform and
    /// symmetric about zero.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Signal> {
        let mut times = Vec::new();
        let mut samples = Vec::new();
        let mut seen_header = false;
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if !seen_header {
                if trimmed.replace(' ', "") != "t,re,im" {
                    return Err(Error::Parse {
                        line: lineno,
                        message: format!("expected header `t,re,im`, found `{trimmed}`"),
                    });
                }
                seen_header = true;
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected 3 fields, found {}", fields.len()),
                });
            }
            let mut vals = [0.0; 3];
            for (v, s) in vals.iter_mut().zip(&fields) {
                *v = s.parse::<f64>().map_err(|e| Error::Parse {
                    line: lineno,
                    message: format!("`{s}`: {e}"),
                })?;
            }
            times.push(vals[0]);
            samples.push(Complex64::new(vals[1], vals[2]));
        }
        if !seen_header {
            return Err(Error::Parse { line: 0, message: "missing header".into() });
        }
        let n = times.len();
        if n < 2 {
            return Err(Error::Parse { line: 0, message: format!("need at least 2 rows, got {n}") });
        }
        let dt = (times[n - 1] - times[0]) / (n as f64 - 1.0);
        let grid = SampleGrid::new(n, dt)?;
        for (k, &t) in times.iter().enumerate() {
            if (t - grid.t(k)).abs() > 1e-9 * dt.max(grid.t(k).abs()) {
                return Err(Error::Parse {
                    line: k + 2,
                    message: format!("time {t} is off the symmetric grid (expected {})", grid.t(k)),
                });
            }
        }
        Signal::new(grid, samples)
    }

    /// Little-endian float64 pairs (re, im); length inferred from the byte count.
    pub fn from_le_bytes(bytes: &[u8], dt: f64) -> Result<Signal> {
        if bytes.len() % 16 != 0 {
            return Err(Error::Parse {
                line: 0,
                message: format!("{} bytes is not a whole number of complex samples", bytes.len()),
            });
        }
        let samples: Vec<Complex64> = bytes
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().unwrap());
                let im = f64::from_le_bytes(c[8..].try_into().unwrap());
                Complex64::new(re, im)
            })
            .collect();
        let grid = SampleGrid::new(samples.len(), dt)?;
        Signal::new(grid, samples)
    }
}

/// `dt * sum f_n conj(g_n)`.
pub fn inner_product(f: &Signal, g: &Signal) -> Result<Complex64> {
    if f.grid != g.grid {
        return Err(Error::GridMismatch);
    }
    let s: Complex64 = f.samples.iter().zip(&g.samples).map(|(a, b)| a * b.conj()).sum();
    Ok(s * f.grid.dt)
}

/// Samples of `f^(sigma) = int f(t) exp(-2 pi i t sigma) dt` on the frequency grid.
pub fn fourier_transform(f: &Signal) -> Signal {
    let grid = f.grid;
    let n = grid.len() as i64;
    let mut buf: Vec<Complex64> = f
        .samples
        .iter()
        .enumerate()
        .map(|(k, z)| z * fft::unit_phase((n - 1) * k as i64, n))
        .collect();
    fft::forward(&mut buf);
    let global = fft::unit_phase(-(n - 1) * (n - 1), 2 * n) * grid.dt;
    for (k, z) in buf.iter_mut().enumerate() {
        *z *= fft::unit_phase((n - 1) * k as i64, n) * global;
    }
    Signal { grid: grid.frequency_grid(), samples: buf }
}

/// Inverse of [`fourier_transform`]; maps a frequency-grid signal back to time.
pub fn inverse_fourier_transform(f_hat: &Signal) -> Signal {
    let grid = f_hat.grid;
    let n = grid.len() as i64;
    let mut buf: Vec<Complex64> = f_hat
        .samples
        .iter()
        .enumerate()
        .map(|(k, z)| z * fft::unit_phase(-(n - 1) * k as i64, n))
        .collect();
    fft::inverse(&mut buf);
    let global = fft::unit_phase((n - 1) * (n - 1), 2 * n) * grid.dt;
    for (k, z) in buf.iter_mut().enumerate() {
        *z *= fft::unit_phase(-(n - 1) * k as i64, n) * global;
    }
    Signal { grid: grid.frequency_grid(), samples: buf }
}

/// `rho(tau, sigma) f (t) = exp(pi i tau sigma) exp(2 pi i sigma t) f(t + tau)`,
/// with zero fill for samples shifted in from outside the grid.
pub fn tf_shift(f: &Signal, tau: f64, sigma: f64) -> Result<Signal> {
    let grid = f.grid;
    let m = grid.shift_steps(tau)?;
    let n = grid.len() as i64;
    let base = Complex64::from_polar(1.0, PI * tau * sigma);
    let samples = (0..n)
        .map(|k| {
            let src = k + m;
            if (0..n).contains(&src) {
                base * Complex64::from_polar(1.0, 2.0 * PI * sigma * grid.t(k as usize))
                    * f.samples[src as usize]
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    Ok(Signal { grid, samples })
}

/// Real value kept as log-magnitude and sign so far tails do not underflow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogReal {
    pub ln_abs: f64,
    pub sign: f64,
}

impl LogReal {
    pub const ZERO: LogReal = LogReal { ln_abs: f64::NEG_INFINITY, sign: 0.0 };

    pub fn from_f64(x: f64) -> Self {
        if x == 0.0 {
            Self::ZERO
        } else {
            LogReal { ln_abs: x.abs().ln(), sign: x.signum() }
        }
    }

    pub fn value(&self) -> f64 {
        self.sign * self.ln_abs.exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WindowSpec {
    /// `exp(-c t^2)`
    Gaussian { c: f64 },
    /// `max(0, 1 - |t|)`
    Triangle,
    /// Caller-supplied samples, renormalized on construction.
    Custom(Vec<Complex64>),
}

impl WindowSpec {
    pub fn label(&self) -> String {
        match self {
            WindowSpec::Gaussian { c } => format!("gaussian:{c}"),
            WindowSpec::Triangle => "triangle".into(),
            WindowSpec::Custom(_) => "custom".into(),
        }
    }

    /// Radius outside which the window carries less than [`WINDOW_TAIL_MASS`]
    /// of its energy; `None` when only the samples can tell.
    pub fn essential_radius(&self) -> Option<f64> {
        match self {
            WindowSpec::Gaussian { c } => Some(gaussian_tail_radius(2.0 * c)),
            WindowSpec::Triangle => Some(1.0),
            WindowSpec::Custom(_) => None,
        }
    }

    /// Same as [`essential_radius`](Self::essential_radius) for the Fourier
    /// transform of the window. The triangle's transform decays only like
    /// `sigma^-2`, so its radius is the 1e-12 radius of `1/(pi^4 b^3)`.
    pub fn frequency_radius(&self) -> Option<f64> {
        match self {
            WindowSpec::Gaussian { c } => Some(gaussian_tail_radius(2.0 * PI * PI / c)),
            WindowSpec::Triangle => Some((1.0 / (PI.powi(4) * WINDOW_TAIL_MASS)).cbrt()),
            WindowSpec::Custom(_) => None,
        }
    }
}

/// Radius `a` with `erfc(sqrt(alpha) a) = WINDOW_TAIL_MASS`, i.e. the
/// 1e-12-energy radius of a density proportional to `exp(-alpha t^2)`.
fn gaussian_tail_radius(alpha: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 20.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if libm::erfc(mid) > WINDOW_TAIL_MASS {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi / alpha.sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub enum WindowFamily {
    Gaussian { c: f64 },
    Triangle,
    Custom,
}

/// A unit-norm analysis window sampled on a grid.
#[derive(Debug, Clone)]
pub struct Window {
    signal: Signal,
    family: WindowFamily,
    /// Normalization constant multiplying the analytic shape.
    scale: f64,
}

pub fn make_window(spec: &WindowSpec, grid: SampleGrid) -> Result<Window> {
    match spec {
        WindowSpec::Gaussian { c } => {
            let c = *c;
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::Domain(format!("gaussian width parameter must be positive, got {c}")));
            }
            let tail = libm::erfc((2.0 * c).sqrt() * grid.half_span());
            if tail > WINDOW_TAIL_MASS {
                return Err(Error::Truncation { tail, limit: WINDOW_TAIL_MASS });
            }
            let shape = Signal::from_fn(grid, |t| Complex64::new((-c * t * t).exp(), 0.0));
            let scale = 1.0 / shape.norm();
            Ok(Window { signal: shape.scaled(scale.into()), family: WindowFamily::Gaussian { c }, scale })
        }
        WindowSpec::Triangle => {
            let reach = grid.half_span();
            if reach < 1.0 {
                let tail = (1.0 - reach).powi(3);
                return Err(Error::Truncation { tail, limit: WINDOW_TAIL_MASS });
            }
            let shape = Signal::from_fn(grid, |t| Complex64::new((1.0 - t.abs()).max(0.0), 0.0));
            let scale = 1.0 / shape.norm();
            Ok(Window { signal: shape.scaled(scale.into()), family: WindowFamily::Triangle, scale })
        }
        WindowSpec::Custom(samples) => {
            let sig = Signal::new(grid, samples.clone())?;
            Window::custom(sig)
        }
    }
}

impl Window {
    pub fn custom(signal: Signal) -> Result<Window> {
        let norm = signal.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::DegenerateWindow);
        }
        let signal = if (norm - 1.0).abs() <= 1e-15 { signal } else { signal.scaled((1.0 / norm).into()) };
        Ok(Window { signal, family: WindowFamily::Custom, scale: 1.0 / norm })
    }

    pub fn signal(&self) -> &Signal {
        &self.signal
    }

    pub fn grid(&self) -> &SampleGrid {
        self.signal.grid()
    }

    pub fn samples(&self) -> &[Complex64] {
        self.signal.samples()
    }

    pub fn family(&self) -> &WindowFamily {
        &self.family
    }

    /// Normalization constant applied to the analytic shape.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn label(&self) -> String {
        match &self.family {
            WindowFamily::Gaussian { c } => format!("gaussian:{c}"),
            WindowFamily::Triangle => "triangle".into(),
            WindowFamily::Custom => "custom".into(),
        }
    }

    /// Radius holding all but [`WINDOW_TAIL_MASS`] of the energy.
    pub fn essential_radius(&self) -> f64 {
        match &self.family {
            WindowFamily::Gaussian { c } => gaussian_tail_radius(2.0 * c),
            WindowFamily::Triangle => 1.0,
            WindowFamily::Custom => sampled_tail_radius(&self.signal),
        }
    }

    /// Radius `a` with `phi(t) = 0` for every grid point `|t| >= a`, when the
    /// window is compactly supported.
    pub fn compact_support_radius(&self) -> Option<f64> {
        match &self.family {
            WindowFamily::Gaussian { .. } => None,
            WindowFamily::Triangle => Some(1.0),
            WindowFamily::Custom => {
                let s = self.samples();
                if s[0] != Complex64::new(0.0, 0.0) || s[s.len() - 1] != Complex64::new(0.0, 0.0) {
                    return None;
                }
                let grid = self.grid();
                let reach = (0..s.len())
                    .filter(|&n| s[n] != Complex64::new(0.0, 0.0))
                    .map(|n| grid.t(n).abs())
                    .fold(0.0, f64::max);
                Some(reach + grid.dt())
            }
        }
    }

    /// Analytic value `phi(t)` for the closed-form families.
    pub fn eval_log(&self, t: f64) -> Option<LogReal> {
        match &self.family {
            WindowFamily::Gaussian { c } => Some(LogReal { ln_abs: self.scale.ln() - c * t * t, sign: 1.0 }),
            WindowFamily::Triangle => Some(LogReal::from_f64(self.scale * (1.0 - t.abs()).max(0.0))),
            WindowFamily::Custom => None,
        }
    }

    /// Analytic value of the continuous Fourier transform `phi^(sigma)`.
    pub fn eval_hat_log(&self, sigma: f64) -> Option<LogReal> {
        match &self.family {
            WindowFamily::Gaussian { c } => Some(LogReal {
                ln_abs: self.scale.ln() + 0.5 * (PI / c).ln() - PI * PI * sigma * sigma / c,
                sign: 1.0,
            }),
            WindowFamily::Triangle => {
                let x = PI * sigma;
                let sinc = if x == 0.0 { 1.0 } else { x.sin() / x };
                Some(LogReal::from_f64(self.scale * sinc * sinc))
            }
            WindowFamily::Custom => None,
        }
    }

    /// The window `F^-1 phi` on the frequency grid, renormalized. For even
    /// windows this coincides with `phi^`.
    pub fn inverse_dual(&self) -> Result<Window> {
        // Same kernel as the inverse transform, read as a map from time to frequency.
        let dual = inverse_fourier_transform(&self.signal);
        let norm = dual.norm();
        if norm == 0.0 {
            return Err(Error::DegenerateWindow);
        }
        let family = match &self.family {
            WindowFamily::Gaussian { c } => WindowFamily::Gaussian { c: PI * PI / c },
            _ => WindowFamily::Custom,
        };
        let scale = match &self.family {
            WindowFamily::Gaussian { c } => self.scale * (PI / c).sqrt() / norm,
            _ => 1.0 / norm,
        };
        Ok(Window { signal: dual.scaled((1.0 / norm).into()), family, scale })
    }

    /// The window's Fourier transform on the frequency grid, renormalized.
    pub fn fourier_dual(&self) -> Result<Window> {
        let hat = fourier_transform(&self.signal);
        let norm = hat.norm();
        if norm == 0.0 {
            return Err(Error::DegenerateWindow);
        }
        let (family, scale) = match &self.family {
            WindowFamily::Gaussian { c } => {
                (WindowFamily::Gaussian { c: PI * PI / c }, self.scale * (PI / c).sqrt() / norm)
            }
            _ => (WindowFamily::Custom, 1.0 / norm),
        };
        Ok(Window { signal: hat.scaled((1.0 / norm).into()), family, scale })
    }
}

fn sampled_tail_radius(s: &Signal) -> f64 {
    let grid = s.grid();
    let dt = grid.dt();
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid.t(b).abs().total_cmp(&grid.t(a).abs()));
    let total = s.norm_sqr();
    let mut outside = 0.0;
    for &n in &order {
        outside += dt * s.samples()[n].norm_sqr();
        if outside > WINDOW_TAIL_MASS * total {
            return grid.t(n).abs();
        }
    }
    0.0
}
