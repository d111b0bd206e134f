//! Reproducing kernel of the Gabor range space, the ambiguity function, and
//! the orthogonal projection onto that range.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft;
use crate::gabor::{analyze, synthesize, GaborCoefficients};
use crate::grid::Window;

/// A phase-space point `(tau, sigma)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint {
    pub tau: f64,
    pub sigma: f64,
}

impl PhasePoint {
    pub fn new(tau: f64, sigma: f64) -> Self {
        Self { tau, sigma }
    }
}

/// `dt sum_n rho(p) phi_a [n] conj(rho(q) phi_b [n])` without materializing
/// either shifted copy.
fn shifted_inner(phi: &Window, p: PhasePoint, q: PhasePoint) -> Result<Complex64> {
    let grid = *phi.grid();
    let mp = grid.shift_steps(p.tau)?;
    let mq = grid.shift_steps(q.tau)?;
    let n = grid.len() as i64;
    let s = phi.samples();
    let lo = 0.max(-mp).max(-mq);
    let hi = n.min(n - mp).min(n - mq);
    let mut acc = Complex64::new(0.0, 0.0);
    let ds = p.sigma - q.sigma;
    for k in lo..hi {
        let t = grid.t(k as usize);
        let phase = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * ds * t);
        acc += phase * s[(k + mp) as usize] * s[(k + mq) as usize].conj();
    }
    let global = Complex64::from_polar(1.0, std::f64::consts::PI * (p.tau * p.sigma - q.tau * q.sigma));
    Ok(global * acc * grid.dt())
}

/// `H(tau, sigma) = <rho(tau, sigma) phi, phi>`.
pub fn ambiguity(phi: &Window, tau: f64, sigma: f64) -> Result<Complex64> {
    shifted_inner(phi, PhasePoint::new(tau, sigma), PhasePoint::new(0.0, 0.0))
}

/// `K(p0; p) = <rho(p0) phi, rho(p) phi>`.
pub fn kernel(phi: &Window, p0: PhasePoint, p: PhasePoint) -> Result<Complex64> {
    shifted_inner(phi, p0, p)
}

/// The kernel through the ambiguity function:
/// `exp(pi i (tau0 sigma - sigma0 tau)) H(tau0 - tau, sigma0 - sigma)`.
pub fn kernel_factorized(phi: &Window, p0: PhasePoint, p: PhasePoint) -> Result<Complex64> {
    let h = ambiguity(phi, p0.tau - p.tau, p0.sigma - p.sigma)?;
    let twist = Complex64::from_polar(1.0, std::f64::consts::PI * (p0.tau * p.sigma - p0.sigma * p.tau));
    Ok(twist * h)
}

/// Lazily evaluated ambiguity function of one window.
#[derive(Debug, Clone, Copy)]
pub struct AmbiguityFunction<'a> {
    phi: &'a Window,
}

impl<'a> AmbiguityFunction<'a> {
    pub fn new(phi: &'a Window) -> Self {
        Self { phi }
    }

    pub fn eval(&self, tau: f64, sigma: f64) -> Result<Complex64> {
        ambiguity(self.phi, tau, sigma)
    }

    /// `|H(m dt, d dsigma)|^2` for every `d` modulo `N` (the discrete ambiguity
    /// is `N`-periodic in the frequency-lag index).
    pub fn squared_row(&self, m: i64) -> Vec<f64> {
        let grid = *self.phi.grid();
        let n = grid.len() as i64;
        let s = self.phi.samples();
        let mut buf: Vec<Complex64> = (0..n)
            .map(|k| {
                let src = k + m;
                if (0..n).contains(&src) {
                    s[src as usize] * s[k as usize].conj()
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        fft::inverse(&mut buf);
        let dt2 = grid.dt() * grid.dt();
        buf.iter().map(|z| z.norm_sqr() * dt2).collect()
    }

    /// `dtau dsigma sum |H|^2` over every lag the grid can represent.
    pub fn energy(&self) -> f64 {
        let grid = *self.phi.grid();
        let n = grid.len() as i64;
        let cell = grid.dt() * grid.dsigma();
        (-(n - 1)..n).map(|m| self.squared_row(m).iter().sum::<f64>()).sum::<f64>() * cell
    }
}

/// `P F = S S* F`, the orthogonal projection onto the range of the Gabor
/// transform when the phase grid spans every shift.
///
/// Coefficients carrying energy in the outermost `tau` rows of a partial grid
/// are rejected, since the truncated synthesis would no longer be adjoint to
/// an isometry there.
pub fn project(f: &GaborCoefficients, phi: &Window) -> Result<GaborCoefficients> {
    let pg = *f.phase_grid();
    if pg.sample_grid() != phi.grid() {
        return Err(Error::GridMismatch);
    }
    let full = pg.shift_range() == (-(pg.n_sigma() as i64 - 1), pg.n_sigma() as i64 - 1);
    if !full {
        let total: f64 = f.values().iter().map(|z| z.norm_sqr()).sum();
        let edge: f64 = [0, pg.n_tau() - 1].iter().flat_map(|&i| f.row(i)).map(|z| z.norm_sqr()).sum();
        if total > 0.0 && edge > 1e-12 * total {
            return Err(Error::Coverage(format!(
                "coefficients reach the edge of the tau range (edge energy fraction {:.3e})",
                edge / total
            )));
        }
    }
    let signal = synthesize(f, phi)?;
    analyze(&signal, phi, &pg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gabor::PhaseGrid;
    use crate::grid::{inner_product, make_window, tf_shift, SampleGrid, Signal, WindowSpec};
    use std::f64::consts::PI;

    #[test]
    fn ambiguity_basics() {
        let grid = SampleGrid::new(129, 1.0 / 16.0).unwrap();
        let phi = make_window(&WindowSpec::Gaussian { c: PI }, grid).unwrap();
        assert!((ambiguity(&phi, 0.0, 0.0).unwrap() - 1.0).norm() < 1e-12);
        let direct = inner_product(&tf_shift(phi.signal(), 0.5, 0.25).unwrap(), phi.signal()).unwrap();
        assert!((ambiguity(&phi, 0.5, 0.25).unwrap() - direct).norm() < 1e-14);
        assert!(matches!(ambiguity(&phi, 0.01, 0.0), Err(Error::Alignment { .. })));
    }

    #[test]
    fn triangle_ambiguity_support() {
        let grid = SampleGrid::new(129, 1.0 / 16.0).unwrap();
        let phi = make_window(&WindowSpec::Triangle, grid).unwrap();
        for tau in [2.0, 2.5, -2.0, -3.0] {
            assert_eq!(ambiguity(&phi, tau, 0.0).unwrap().norm(), 0.0);
        }
        assert!(ambiguity(&phi, 1.5, 0.0).unwrap().norm() > 0.0);
    }

    #[test]
    fn squared_row_matches_pointwise() {
        let grid = SampleGrid::new(33, 0.25).unwrap();
        let phi = make_window(&WindowSpec::Gaussian { c: 2.0 }, grid).unwrap();
        let h = AmbiguityFunction::new(&phi);
        for m in [-5i64, 0, 3] {
            let row = h.squared_row(m);
            for d in [-7i64, 0, 2, 11] {
                let v = h.eval(m as f64 * 0.25, d as f64 * grid.dsigma()).unwrap().norm_sqr();
                assert!((row[d.rem_euclid(33) as usize] - v).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn projection_round_trip() {
        let grid = SampleGrid::new(41, 0.2).unwrap();
        let phi = make_window(&WindowSpec::Gaussian { c: PI }, grid).unwrap();
        let pg = PhaseGrid::full(grid);
        let f = Signal::from_fn(grid, |t| Complex64::new((-3.0 * t * t).exp(), t * (-2.0 * t * t).exp()));
        let coeffs = analyze(&f, &phi, &pg).unwrap();
        let projected = project(&coeffs, &phi).unwrap();
        assert!(projected.max_abs_diff(&coeffs) < 1e-12);
    }

    #[test]
    fn projection_rejects_truncated_grid() {
        let grid = SampleGrid::new(41, 0.2).unwrap();
        let phi = make_window(&WindowSpec::Gaussian { c: PI }, grid).unwrap();
        let pg = PhaseGrid::covering(grid, 1.0);
        let mut g = GaborCoefficients::zeros(pg, "x");
        g.set(0, 3, Complex64::new(1.0, 0.0));
        assert!(matches!(project(&g, &phi), Err(Error::Coverage(_))));
    }
}
