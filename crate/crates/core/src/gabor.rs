//! Gabor analysis `S_phi f(tau, sigma) = <f, rho(tau, sigma) phi>` and its adjoint.
//!
//! For a fixed shift `tau`, `S_phi f(tau, .)` is the Fourier transform of
//! `f(t) conj(phi(t + tau))` times `exp(-pi i tau sigma)`, so each row of the
//! phase grid costs one FFT.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fft;
use crate::grid::{fourier_transform, inverse_fourier_transform, SampleGrid, Signal, Window};

/// Phase-space lattice: `tau = m dt` for `m` in `m_lo..=m_hi`, and `sigma`
/// running over the full frequency grid of the sample grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseGrid {
    grid: SampleGrid,
    m_lo: i64,
    m_hi: i64,
}

impl PhaseGrid {
    pub fn new(grid: SampleGrid, m_lo: i64, m_hi: i64) -> Result<Self> {
        if m_lo > m_hi {
            return Err(Error::InvalidGrid(format!("empty tau range {m_lo}..={m_hi}")));
        }
        Ok(Self { grid, m_lo, m_hi })
    }

    /// Every shift that leaves some overlap between a signal and the window.
    pub fn full(grid: SampleGrid) -> Self {
        let r = grid.len() as i64 - 1;
        Self { grid, m_lo: -r, m_hi: r }
    }

    /// Shifts with `|tau| <= extent` (rounded outwards), clipped to the full range.
    pub fn covering(grid: SampleGrid, extent: f64) -> Self {
        let r = grid.len() as i64 - 1;
        let m = ((extent / grid.dt()).ceil() as i64).clamp(0, r);
        Self { grid, m_lo: -m, m_hi: m }
    }

    pub fn sample_grid(&self) -> &SampleGrid {
        &self.grid
    }

    pub fn n_tau(&self) -> usize {
        (self.m_hi - self.m_lo + 1) as usize
    }

    pub fn n_sigma(&self) -> usize {
        self.grid.len()
    }

    pub fn shift(&self, i: usize) -> i64 {
        self.m_lo + i as i64
    }

    pub fn shift_range(&self) -> (i64, i64) {
        (self.m_lo, self.m_hi)
    }

    /// Row index of the shift `m`, if it lies on this grid.
    pub fn row_of_shift(&self, m: i64) -> Option<usize> {
        (self.m_lo..=self.m_hi).contains(&m).then(|| (m - self.m_lo) as usize)
    }

    pub fn tau(&self, i: usize) -> f64 {
        self.shift(i) as f64 * self.grid.dt()
    }

    pub fn sigma(&self, j: usize) -> f64 {
        self.grid.frequency_grid().t(j)
    }

    pub fn tau_values(&self) -> Vec<f64> {
        (0..self.n_tau()).map(|i| self.tau(i)).collect()
    }

    pub fn sigma_values(&self) -> Vec<f64> {
        (0..self.n_sigma()).map(|j| self.sigma(j)).collect()
    }

    pub fn dtau(&self) -> f64 {
        self.grid.dt()
    }

    pub fn dsigma(&self) -> f64 {
        self.grid.dsigma()
    }

    pub fn cell_area(&self) -> f64 {
        self.dtau() * self.dsigma()
    }

    /// Cell-edge bounds `(tau_min, tau_max, sigma_min, sigma_max)`.
    pub fn extent(&self) -> (f64, f64, f64, f64) {
        let (dt, ds) = (self.dtau(), self.dsigma());
        (
            self.tau(0) - dt / 2.0,
            self.tau(self.n_tau() - 1) + dt / 2.0,
            self.sigma(0) - ds / 2.0,
            self.sigma(self.n_sigma() - 1) + ds / 2.0,
        )
    }

    /// `exp(-pi i tau_i sigma_j)`, with the phase reduced exactly.
    pub(crate) fn half_phase(&self, m: i64, j: usize) -> Complex64 {
        let n = self.grid.len() as i64;
        fft::unit_phase(-m * (2 * j as i64 - (n - 1)), 2 * n)
    }
}

/// Gabor coefficients on a [`PhaseGrid`], stored row-major by `tau`.
#[derive(Debug, Clone)]
pub struct GaborCoefficients {
    phase_grid: PhaseGrid,
    values: Vec<Complex64>,
    window_id: String,
}

impl GaborCoefficients {
    pub fn new(phase_grid: PhaseGrid, values: Vec<Complex64>, window_id: impl Into<String>) -> Result<Self> {
        if values.len() != phase_grid.n_tau() * phase_grid.n_sigma() {
            return Err(Error::InvalidGrid(format!(
                "{} coefficients for a {}x{} phase grid",
                values.len(),
                phase_grid.n_tau(),
                phase_grid.n_sigma()
            )));
        }
        Ok(Self { phase_grid, values, window_id: window_id.into() })
    }

    pub fn zeros(phase_grid: PhaseGrid, window_id: impl Into<String>) -> Self {
        let len = phase_grid.n_tau() * phase_grid.n_sigma();
        Self { phase_grid, values: vec![Complex64::new(0.0, 0.0); len], window_id: window_id.into() }
    }

    pub fn phase_grid(&self) -> &PhaseGrid {
        &self.phase_grid
    }

    pub fn window_id(&self) -> &str {
        &self.window_id
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.values[i * self.phase_grid.n_sigma() + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        let ns = self.phase_grid.n_sigma();
        self.values[i * ns + j] = v;
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        let ns = self.phase_grid.n_sigma();
        &self.values[i * ns..(i + 1) * ns]
    }

    /// `dtau dsigma sum |F|^2`.
    pub fn energy(&self) -> f64 {
        self.phase_grid.cell_area() * self.values.iter().map(|z| z.norm_sqr()).sum::<f64>()
    }

    pub fn max_abs_diff(&self, other: &GaborCoefficients) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "tau,sigma,re,im")?;
        let pg = &self.phase_grid;
        for i in 0..pg.n_tau() {
            for j in 0..pg.n_sigma() {
                let z = self.get(i, j);
                writeln!(w, "{:.16e},{:.16e},{:.16e},{:.16e}", pg.tau(i), pg.sigma(j), z.re, z.im)?;
            }
        }
        Ok(())
    }

    /// Spectrogram export `tau,sigma,power` with `power = |F|^2`.
    pub fn write_power_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "tau,sigma,power")?;
        let pg = &self.phase_grid;
        for i in 0..pg.n_tau() {
            for j in 0..pg.n_sigma() {
                writeln!(w, "{:.16e},{:.16e},{:.16e}", pg.tau(i), pg.sigma(j), self.get(i, j).norm_sqr())?;
            }
        }
        Ok(())
    }
}

/// One row `S_phi f(tau_m, .)` over the full frequency grid.
pub(crate) fn analyze_row(f: &Signal, phi: &Window, pg: &PhaseGrid, m: i64) -> Vec<Complex64> {
    let grid = *f.grid();
    let n = grid.len() as i64;
    let fs = f.samples();
    let ps = phi.samples();
    let product: Vec<Complex64> = (0..n)
        .map(|k| {
            let src = k + m;
            if (0..n).contains(&src) {
                fs[k as usize] * ps[src as usize].conj()
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    let hat = fourier_transform(&Signal::new(grid, product).expect("length matches grid"));
    hat.samples().iter().enumerate().map(|(j, z)| z * pg.half_phase(m, j)).collect()
}

fn check_grids(f: &Signal, phi: &Window, pg: &PhaseGrid) -> Result<()> {
    if f.grid() != phi.grid() || f.grid() != pg.sample_grid() {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

/// `values[i][j] = <f, rho(tau_i, sigma_j) phi>`.
pub fn analyze(f: &Signal, phi: &Window, pg: &PhaseGrid) -> Result<GaborCoefficients> {
    check_grids(f, phi, pg)?;
    let rows: Vec<Vec<Complex64>> =
        (0..pg.n_tau()).into_par_iter().map(|i| analyze_row(f, phi, pg, pg.shift(i))).collect();
    GaborCoefficients::new(*pg, rows.concat(), phi.label())
}

/// Contribution `dtau * phi(t + tau_m) * sum_j dsigma G_j exp(pi i tau sigma_j) exp(2 pi i sigma_j t)`.
pub(crate) fn synthesize_row(row: &[Complex64], phi: &Window, pg: &PhaseGrid, m: i64) -> Vec<Complex64> {
    let grid = *pg.sample_grid();
    let n = grid.len() as i64;
    let twisted: Vec<Complex64> =
        row.iter().enumerate().map(|(j, g)| g * pg.half_phase(m, j).conj()).collect();
    let freq = Signal::new(grid.frequency_grid(), twisted).expect("length matches grid");
    let time = inverse_fourier_transform(&freq);
    let ps = phi.samples();
    let dtau = pg.dtau();
    (0..n)
        .map(|k| {
            let src = k + m;
            if (0..n).contains(&src) {
                time.samples()[k as usize] * ps[src as usize] * dtau
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect()
}

/// Adjoint of [`analyze`]: `dtau dsigma sum_ij G_ij rho(tau_i, sigma_j) phi`.
pub fn synthesize(g: &GaborCoefficients, phi: &Window) -> Result<Signal> {
    let pg = g.phase_grid();
    if phi.grid() != pg.sample_grid() {
        return Err(Error::GridMismatch);
    }
    let contributions: Vec<Option<Vec<Complex64>>> = (0..pg.n_tau())
        .into_par_iter()
        .map(|i| {
            let row = g.row(i);
            if row.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
                None
            } else {
                Some(synthesize_row(row, phi, pg, pg.shift(i)))
            }
        })
        .collect();
    // Summed in row order so the result does not depend on the thread schedule.
    let mut out = vec![Complex64::new(0.0, 0.0); pg.n_sigma()];
    for c in contributions.into_iter().flatten() {
        for (o, v) in out.iter_mut().zip(c) {
            *o += v;
        }
    }
    Signal::new(*pg.sample_grid(), out)
}
