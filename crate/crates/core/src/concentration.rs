//! The concentration operator `C = S* chi_Omega S` as a dense Hermitian
//! matrix on the sample grid, with its spectrum and the trace identities.

use std::io::Write;

use faer::{Mat, Side};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fft;
use crate::gabor::{analyze_row, synthesize_row, PhaseGrid};
use crate::grid::{inner_product, SampleGrid, Signal, Window, WindowSpec, WINDOW_TAIL_MASS};
use crate::region::{rasterize, RasterizedRegion, Region};
use crate::rkhs::{kernel, AmbiguityFunction, PhasePoint};

/// Finest phase-space cell side used by [`auto_grid`].
pub const AUTO_CELL: f64 = 0.05;
/// Largest grid [`auto_grid`] will produce.
pub const MAX_AUTO_SAMPLES: usize = 2048;
/// Cap on the frequency margin reserved for slowly decaying window transforms.
const MAX_FREQUENCY_MARGIN: f64 = 12.0;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Self-dual grid (`dt = dsigma = 1/sqrt(N)`, `N` odd) whose time and
/// frequency spans hold the region plus the window's essential support with
/// a unit margin, and whose cells are no coarser than [`AUTO_CELL`].
pub fn auto_grid(window: &WindowSpec, tau_extent: f64, sigma_extent: f64) -> Result<SampleGrid> {
    let a = window.essential_radius().ok_or_else(|| {
        Error::InvalidGrid("custom windows carry their own grid; auto sizing needs a closed-form window".into())
    })?;
    let b = window.frequency_radius().unwrap_or(a).min(MAX_FREQUENCY_MARGIN);
    let reach = (tau_extent + a + 1.0).max(sigma_extent + b + 1.0);
    let need = (2.0 * reach).powi(2).max(1.0 / (AUTO_CELL * AUTO_CELL)).ceil() as usize;
    let n = need | 1;
    if n > MAX_AUTO_SAMPLES {
        return Err(Error::InvalidGrid(format!(
            "auto grid needs {n} samples for reach {reach:.3}, above the cap of {MAX_AUTO_SAMPLES}"
        )));
    }
    SampleGrid::new(n, 1.0 / (n as f64).sqrt())
}

pub fn auto_grid_for(window: &WindowSpec, region: &Region) -> Result<SampleGrid> {
    auto_grid(window, region.tau_extent(), region.sigma_extent())
}

/// Phase grid spanning the region's `tau` range.
pub fn phase_grid_for(grid: SampleGrid, region: &Region) -> PhaseGrid {
    PhaseGrid::covering(grid, region.tau_extent())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AssemblyMethod {
    /// Row-wise factorization through the ambiguity structure of the kernel.
    #[default]
    Factorized,
    /// Column `j` is the synthesis of the masked analysis of an impulse.
    AnalysisSynthesis,
    /// Brute-force cell sum of `rho phi(x) conj(rho phi(y))`; slow oracle.
    DirectQuadrature,
}

/// Dense realization of the concentration operator. `kernel[n][m]` holds
/// `k(x_n, x_m)`; the operator acts on samples as `dt * kernel`.
#[derive(Debug, Clone)]
pub struct ConcentrationOperator {
    window_id: String,
    region: Region,
    raster: RasterizedRegion,
    grid: SampleGrid,
    kernel: Vec<Complex64>,
}

impl ConcentrationOperator {
    pub fn window_id(&self) -> &str {
        &self.window_id
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn raster(&self) -> &RasterizedRegion {
        &self.raster
    }

    pub fn grid(&self) -> &SampleGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.len()
    }

    /// Row-major kernel values `k(x_n, x_m)`.
    pub fn kernel_values(&self) -> &[Complex64] {
        &self.kernel
    }

    pub fn kernel_at(&self, n: usize, m: usize) -> Complex64 {
        self.kernel[n * self.dim() + m]
    }

    /// Matrix entry of the operator acting on sample vectors.
    pub fn entry(&self, n: usize, m: usize) -> Complex64 {
        self.kernel_at(n, m) * self.grid.dt()
    }

    pub fn apply(&self, f: &Signal) -> Result<Signal> {
        if f.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        let n = self.dim();
        let dt = self.grid.dt();
        let out = (0..n)
            .map(|r| self.kernel[r * n..(r + 1) * n].iter().zip(f.samples()).map(|(k, x)| k * x).sum::<Complex64>() * dt)
            .collect();
        Signal::new(self.grid, out)
    }

    /// Largest `|A - A^H|` entry.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for r in 0..n {
            for c in r..n {
                worst = worst.max((self.kernel[r * n + c] - self.kernel[c * n + r].conj()).norm() * self.grid.dt());
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &ConcentrationOperator) -> f64 {
        self.kernel.iter().zip(&other.kernel).map(|(a, b)| (a - b).norm() * self.grid.dt()).fold(0.0, f64::max)
    }

    /// Little-endian `f64` pairs `(re, im)` of the operator matrix, row-major.
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let dt = self.grid.dt();
        for z in &self.kernel {
            w.write_all(&(z.re * dt).to_le_bytes())?;
            w.write_all(&(z.im * dt).to_le_bytes())?;
        }
        Ok(())
    }
}

/// Index interval of the window samples that carry all but
/// [`WINDOW_TAIL_MASS`] of its energy.
fn essential_support(phi: &Window) -> (i64, i64) {
    let s = phi.samples();
    let total: f64 = s.iter().map(|z| z.norm_sqr()).sum();
    let budget = 0.5 * WINDOW_TAIL_MASS * total;
    let mut lo = 0usize;
    let mut acc = 0.0;
    while lo + 1 < s.len() && acc + s[lo].norm_sqr() <= budget {
        acc += s[lo].norm_sqr();
        lo += 1;
    }
    let mut hi = s.len() - 1;
    acc = 0.0;
    while hi > lo && acc + s[hi].norm_sqr() <= budget {
        acc += s[hi].norm_sqr();
        hi -= 1;
    }
    (lo as i64, hi as i64)
}

/// Indices where the window is not negligible; products outside contribute nothing.
fn numerical_support(phi: &Window) -> (i64, i64) {
    let s = phi.samples();
    let peak = s.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let cut = 1e-20 * peak;
    let lo = s.iter().position(|z| z.norm() > cut).unwrap_or(0);
    let hi = s.iter().rposition(|z| z.norm() > cut).unwrap_or(s.len() - 1);
    (lo as i64, hi as i64)
}

fn check_window_coverage(phi: &Window, raster: &RasterizedRegion) -> Result<()> {
    let pg = raster.phase_grid();
    let n = phi.grid().len() as i64;
    let (lo, hi) = essential_support(phi);
    for i in 0..pg.n_tau() {
        if raster.row_is_empty(i) {
            continue;
        }
        let m = pg.shift(i);
        if lo - m < 0 || hi - m > n - 1 {
            return Err(Error::Coverage(format!(
                "window shifted by tau = {:.6} leaves the time grid (half span {:.6})",
                pg.tau(i),
                phi.grid().half_span()
            )));
        }
    }
    Ok(())
}

pub fn assemble(phi: &Window, region: &Region, pg: &PhaseGrid, method: AssemblyMethod) -> Result<ConcentrationOperator> {
    assemble_with(phi, region, pg, method, true)
}

/// Assembly that accepts windows whose shifted tails fall off the grid; the
/// lost tail is simply truncated.
pub(crate) fn assemble_truncating(phi: &Window, region: &Region, pg: &PhaseGrid) -> Result<ConcentrationOperator> {
    assemble_with(phi, region, pg, AssemblyMethod::Factorized, false)
}

fn assemble_with(
    phi: &Window,
    region: &Region,
    pg: &PhaseGrid,
    method: AssemblyMethod,
    check_coverage: bool,
) -> Result<ConcentrationOperator> {
    if pg.sample_grid() != phi.grid() {
        return Err(Error::GridMismatch);
    }
    let raster = rasterize(region, pg)?;
    if check_coverage {
        check_window_coverage(phi, &raster)?;
    }
    let mut kernel = match method {
        AssemblyMethod::Factorized => assemble_factorized(phi, &raster),
        AssemblyMethod::AnalysisSynthesis => assemble_analysis_synthesis(phi, &raster),
        AssemblyMethod::DirectQuadrature => assemble_direct(phi, &raster),
    };
    let n = phi.grid().len();
    for r in 0..n {
        kernel[r * n + r] = Complex64::new(kernel[r * n + r].re, 0.0);
        for c in r + 1..n {
            let avg = 0.5 * (kernel[r * n + c] + kernel[c * n + r].conj());
            kernel[r * n + c] = avg;
            kernel[c * n + r] = avg.conj();
        }
    }
    Ok(ConcentrationOperator { window_id: phi.label(), region: region.clone(), raster, grid: *phi.grid(), kernel })
}

/// `k(n, m) = sum_i phi[n+m_i] conj(phi[m+m_i]) A_i(n-m)` with
/// `A_i(d) = sum_j w_ij exp(2 pi i sigma_j d dt)`.
fn assemble_factorized(phi: &Window, raster: &RasterizedRegion) -> Vec<Complex64> {
    let pg = raster.phase_grid();
    let n = phi.grid().len() as i64;
    let rows: Vec<(i64, Vec<Complex64>)> = (0..pg.n_tau())
        .filter(|&i| !raster.row_is_empty(i))
        .map(|i| {
            let mut buf: Vec<Complex64> = raster.row(i).iter().map(|&w| Complex64::new(w, 0.0)).collect();
            fft::inverse(&mut buf);
            // Index d in -(N-1)..=(N-1), stored at d + N - 1.
            let a: Vec<Complex64> =
                (-(n - 1)..n).map(|d| buf[d.rem_euclid(n) as usize] * fft::unit_phase(-(n - 1) * d, n)).collect();
            (pg.shift(i), a)
        })
        .collect();
    let (lo, hi) = numerical_support(phi);
    let s = phi.samples();
    let out_rows: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|r| {
            let mut row = vec![ZERO; n as usize];
            for (m, a) in &rows {
                let src = r + m;
                if src < lo || src > hi {
                    continue;
                }
                let left = s[src as usize];
                let c_lo = (lo - m).max(0);
                let c_hi = (hi - m).min(n - 1);
                for c in c_lo..=c_hi {
                    row[c as usize] += left * s[(c + m) as usize].conj() * a[(r - c + n - 1) as usize];
                }
            }
            row
        })
        .collect();
    out_rows.concat()
}

fn assemble_analysis_synthesis(phi: &Window, raster: &RasterizedRegion) -> Vec<Complex64> {
    let pg = raster.phase_grid();
    let grid = *phi.grid();
    let n = grid.len();
    let cell = pg.cell_area();
    let active: Vec<usize> = (0..pg.n_tau()).filter(|&i| !raster.row_is_empty(i)).collect();
    let columns: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut impulse = vec![ZERO; n];
            impulse[j] = Complex64::new(1.0 / grid.dt(), 0.0);
            let e = Signal::new(grid, impulse).expect("length matches grid");
            let mut col = vec![ZERO; n];
            for &i in &active {
                let m = pg.shift(i);
                let coeffs: Vec<Complex64> = analyze_row(&e, phi, pg, m)
                    .into_iter()
                    .zip(raster.row(i))
                    .map(|(z, w)| z * (w / cell))
                    .collect();
                for (c, v) in col.iter_mut().zip(synthesize_row(&coeffs, phi, pg, m)) {
                    *c += v;
                }
            }
            col
        })
        .collect();
    let mut kernel = vec![ZERO; n * n];
    for (j, col) in columns.iter().enumerate() {
        for (r, v) in col.iter().enumerate() {
            kernel[r * n + j] = *v;
        }
    }
    kernel
}

fn assemble_direct(phi: &Window, raster: &RasterizedRegion) -> Vec<Complex64> {
    let pg = raster.phase_grid();
    let grid = *phi.grid();
    let n = grid.len() as i64;
    let s = phi.samples();
    let cells: Vec<(i64, f64, f64)> =
        raster.cells().into_iter().map(|(i, j)| (pg.shift(i), pg.sigma(j), raster.weight(i, j))).collect();
    let at = |k: i64| if (0..n).contains(&k) { s[k as usize] } else { ZERO };
    let rows: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|r| {
            let x = grid.t(r as usize);
            (0..n)
                .map(|c| {
                    let y = grid.t(c as usize);
                    let mut acc = ZERO;
                    for &(m, sigma, w) in &cells {
                        let tau = m as f64 * grid.dt();
                        let px = Complex64::from_polar(1.0, std::f64::consts::PI * (tau * sigma + 2.0 * sigma * x)) * at(r + m);
                        let py = Complex64::from_polar(1.0, std::f64::consts::PI * (tau * sigma + 2.0 * sigma * y)) * at(c + m);
                        acc += px * py.conj() * w;
                    }
                    acc
                })
                .collect()
        })
        .collect();
    rows.concat()
}

/// Eigenvalues in descending order with orthonormal eigenfunctions.
#[derive(Debug, Clone)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    eigenfunctions: Vec<Signal>,
    operator_id: String,
}

impl Spectrum {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenfunctions(&self) -> &[Signal] {
        &self.eigenfunctions
    }

    pub fn eigenfunction(&self, k: usize) -> &Signal {
        &self.eigenfunctions[k]
    }

    pub fn operator_id(&self) -> &str {
        &self.operator_id
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    pub fn sum_sq(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l * l).sum()
    }

    /// Clamped to `[0, 1]`, as used by every counting function.
    pub fn clamped(&self) -> impl Iterator<Item = f64> + '_ {
        self.eigenvalues.iter().map(|l| l.clamp(0.0, 1.0))
    }

    /// Largest `|<psi_k, psi_l> - delta_kl|` over the first `k` eigenfunctions.
    pub fn orthonormality_defect(&self, k: usize) -> f64 {
        let k = k.min(self.len());
        let mut worst: f64 = 0.0;
        for a in 0..k {
            for b in a..k {
                let ip = inner_product(&self.eigenfunctions[a], &self.eigenfunctions[b]).expect("shared grid");
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((ip - target).norm());
            }
        }
        worst
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "k,lambda")?;
        for (k, l) in self.eigenvalues.iter().enumerate() {
            writeln!(w, "{},{:.16e}", k + 1, l)?;
        }
        Ok(())
    }
}

/// Hermitian eigenvalues (ascending) and eigenvectors of a dense matrix.
pub(crate) fn hermitian_eigen(n: usize, entry: impl Fn(usize, usize) -> Complex64) -> Result<(Vec<f64>, Mat<Complex64>)> {
    let a = Mat::<Complex64>::from_fn(n, n, entry);
    let evd = a.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Numerical(format!("eigensolver: {e:?}")))?;
    let values: Vec<f64> = evd.S().column_vector().iter().map(|z| z.re).collect();
    Ok((values, evd.U().to_owned()))
}

pub(crate) fn hermitian_eigenvalues(n: usize, entry: impl Fn(usize, usize) -> Complex64) -> Result<Vec<f64>> {
    let a = Mat::<Complex64>::from_fn(n, n, entry);
    let mut v = a.self_adjoint_eigenvalues(Side::Lower).map_err(|e| Error::Numerical(format!("eigensolver: {e:?}")))?;
    v.reverse();
    Ok(v)
}

pub fn eigendecompose(op: &ConcentrationOperator) -> Result<Spectrum> {
    let n = op.dim();
    let (values, u) = hermitian_eigen(n, |r, c| op.entry(r, c))?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite eigenvalue".into()));
    }
    let scale = 1.0 / op.grid.dt().sqrt();
    let mut eigenvalues = Vec::with_capacity(n);
    let mut eigenfunctions = Vec::with_capacity(n);
    for k in (0..n).rev() {
        eigenvalues.push(values[k]);
        let col = u.col(k);
        let mut pivot = 0;
        let mut best = -1.0;
        for r in 0..n {
            let a = col[r].norm();
            if a > best {
                best = a;
                pivot = r;
            }
        }
        let phase = if best > 0.0 { (col[pivot].conj() / best) * scale } else { Complex64::new(scale, 0.0) };
        let samples: Vec<Complex64> = (0..n).map(|r| col[r] * phase).collect();
        eigenfunctions.push(Signal::new(op.grid, samples)?);
    }
    Ok(Spectrum { eigenvalues, eigenfunctions, operator_id: format!("{} | {}", op.window_id, op.region.label()) })
}

/// `card{k : lambda_k > lambda}` on clamped eigenvalues.
pub fn counting(spec: &Spectrum, lambda: f64) -> Result<usize> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::Domain(format!("threshold {lambda} must lie in (0, 1)")));
    }
    Ok(spec.clamped().filter(|l| *l > lambda).count())
}

/// `card{k : lambda_k >= lambda}` on clamped eigenvalues.
pub fn counting_at_least(eigenvalues: &[f64], lambda: f64) -> usize {
    eigenvalues.iter().filter(|l| l.clamp(0.0, 1.0) >= lambda).count()
}

/// `card{k : lambda <= lambda_k <= mu}` on clamped eigenvalues.
pub fn counting_between(eigenvalues: &[f64], lambda: f64, mu: f64) -> usize {
    eigenvalues
        .iter()
        .map(|l| l.clamp(0.0, 1.0))
        .filter(|l| *l >= lambda && *l <= mu)
        .count()
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TraceReport {
    /// `dt sum_n k(x_n, x_n)`.
    pub trace: f64,
    /// Sum of the raster weights.
    pub raster_area: f64,
}

pub fn trace_identity(op: &ConcentrationOperator) -> TraceReport {
    let n = op.dim();
    let trace = (0..n).map(|r| op.entry(r, r).re).sum();
    TraceReport { trace, raster_area: op.raster.total() }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct HsReport {
    pub sum_sq: f64,
    /// `sum_{p, q in Omega} w_p w_q |H(p - q)|^2`.
    pub double_integral: f64,
}

/// Compares `sum lambda_k^2` with the double integral of `|H|^2` over the
/// region, the latter evaluated through the cell-pair lag histogram.
pub fn hs_identity(op: &ConcentrationOperator, spec: &Spectrum, phi: &Window) -> Result<HsReport> {
    if phi.grid() != op.grid() {
        return Err(Error::GridMismatch);
    }
    Ok(HsReport { sum_sq: spec.sum_sq(), double_integral: ambiguity_double_integral(phi, &op.raster) })
}

pub fn ambiguity_double_integral(phi: &Window, raster: &RasterizedRegion) -> f64 {
    let pg = raster.phase_grid();
    let active: Vec<usize> = (0..pg.n_tau()).filter(|&i| !raster.row_is_empty(i)).collect();
    let (Some(&first), Some(&last)) = (active.first(), active.last()) else {
        return 0.0;
    };
    let rows = last - first + 1;
    let nt = 2 * rows - 1;
    let ns = pg.n_sigma();
    // 2-D autocorrelation of the indicator, linear in tau and circular in sigma.
    let mut grid = vec![ZERO; nt * ns];
    for i in first..=last {
        for (j, w) in raster.row(i).iter().enumerate() {
            if *w > 0.0 {
                grid[(i - first) * ns + j] = Complex64::new(1.0, 0.0);
            }
        }
    }
    fft::forward_2d(&mut grid, nt, ns);
    for z in grid.iter_mut() {
        *z = Complex64::new(z.norm_sqr(), 0.0);
    }
    fft::inverse_2d(&mut grid, nt, ns);
    let norm = (nt * ns) as f64;
    let h = AmbiguityFunction::new(phi);
    let cell = pg.cell_area();
    let mut total = 0.0;
    for di in 0..nt {
        let counts: Vec<f64> = (0..ns).map(|dj| (grid[di * ns + dj].re / norm).round()).collect();
        if counts.iter().all(|c| *c == 0.0) {
            continue;
        }
        let lag = if di < rows { di as i64 } else { di as i64 - nt as i64 };
        let sq = h.squared_row(lag);
        total += counts.iter().zip(&sq).map(|(c, s)| c * s).sum::<f64>();
    }
    total * cell * cell
}

/// Nonzero spectrum computed on the phase-space side: eigenvalues of
/// `W^1/2 G W^1/2` with `G_pq = <rho(q) phi, rho(p) phi>` over the region's cells.
pub fn phase_space_spectrum(phi: &Window, raster: &RasterizedRegion) -> Result<Vec<f64>> {
    let pg = raster.phase_grid();
    let cells: Vec<(PhasePoint, f64)> = raster
        .cells()
        .into_iter()
        .map(|(i, j)| (PhasePoint::new(pg.tau(i), pg.sigma(j)), raster.weight(i, j).sqrt()))
        .collect();
    let k = cells.len();
    if k == 0 {
        return Ok(Vec::new());
    }
    let gram: Vec<Vec<Complex64>> = (0..k)
        .into_par_iter()
        .map(|p| (0..k).map(|q| kernel(phi, cells[q].0, cells[p].0).map(|z| z * cells[p].1 * cells[q].1)).collect())
        .collect::<Vec<Result<Vec<Complex64>>>>()
        .into_iter()
        .collect::<Result<_>>()?;
    hermitian_eigenvalues(k, |r, c| if r >= c { gram[r][c] } else { gram[c][r].conj() })
}

/// `E(f) = sum_cells w |S f|^2`.
pub fn energy(f: &Signal, phi: &Window, region: &Region, pg: &PhaseGrid) -> Result<f64> {
    if f.grid() != phi.grid() || pg.sample_grid() != phi.grid() {
        return Err(Error::GridMismatch);
    }
    let raster = rasterize(region, pg)?;
    check_window_coverage(phi, &raster)?;
    Ok(raster_energy(f, phi, &raster))
}

pub(crate) fn raster_energy(f: &Signal, phi: &Window, raster: &RasterizedRegion) -> f64 {
    let pg = raster.phase_grid();
    let per_row: Vec<f64> = (0..pg.n_tau())
        .into_par_iter()
        .map(|i| {
            if raster.row_is_empty(i) {
                return 0.0;
            }
            analyze_row(f, phi, pg, pg.shift(i)).iter().zip(raster.row(i)).map(|(z, w)| w * z.norm_sqr()).sum()
        })
        .collect();
    per_row.iter().sum()
}

/// Projection of `f` onto the span of the top `k` eigenfunctions.
pub fn eigenfilter(f: &Signal, spec: &Spectrum, k: usize) -> Result<Signal> {
    if k == 0 || k > spec.len() {
        return Err(Error::Domain(format!("rank {k} must lie in 1..={}", spec.len())));
    }
    let mut out = Signal::zeros(*f.grid());
    for psi in &spec.eigenfunctions[..k] {
        let c = inner_product(f, psi)?;
        out = out.axpy(c, psi)?;
    }
    Ok(out)
}
