//! Comparisons against values computed independently in 40-digit arithmetic
//! (frozen below) or against closed forms.

use std::f64::consts::PI;

use num_complex::Complex64;
use tfconc::asymptotics::{autocorr_integral, Density};
use tfconc::concentration::phase_grid_for;
use tfconc::*;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[test]
fn inner_product_matches_extended_precision_sum() {
    let grid = SampleGrid::new(64, 0.125).unwrap();
    let f = Signal::new(
        grid,
        (0..64).map(|n| {
            let n = n as f64;
            c((1.3 * n + 0.2).sin(), (0.07 * n * n).cos())
        })
        .collect(),
    )
    .unwrap();
    let g = Signal::new(
        grid,
        (0..64)
            .map(|n| {
                let n = n as f64;
                c((-n / 40.0).exp() * (n / 3.0).cos(), (11.0 * n / 17.0).sin() - 1.0 / 3.0)
            })
            .collect(),
    )
    .unwrap();
    let expected = c(1.0652200326822731448, 0.64449290523810593425);
    let got = inner_product(&f, &g).unwrap();
    assert!((got - expected).norm() / expected.norm() < 1e-13, "{got}");
}

#[test]
fn gaussian_transform_closed_form() {
    let grid = SampleGrid::new(256, 1.0 / 16.0).unwrap();
    let h0 = |t: f64| c(2f64.powf(0.25) * (-PI * t * t).exp(), 0.0);
    let phi = Signal::from_fn(grid, h0);
    let hat = fourier_transform(&phi);
    let fg = hat.grid();
    let worst = (0..fg.len()).map(|k| (hat.samples()[k] - h0(fg.t(k))).norm()).fold(0.0, f64::max);
    assert!(worst < 1e-8, "{worst}");
    let back = inverse_fourier_transform(&Signal::from_fn(grid.frequency_grid(), h0));
    let worst = (0..grid.len()).map(|k| (back.samples()[k] - h0(grid.t(k))).norm()).fold(0.0, f64::max);
    assert!(worst < 1e-8, "{worst}");
}

#[test]
fn gaussian_window_is_self_dual() {
    let grid = auto_grid(&WindowSpec::Gaussian { c: PI }, 1.0, 1.0).unwrap();
    let phi = make_window(&WindowSpec::Gaussian { c: PI }, grid).unwrap();
    let h0 = Signal::from_fn(grid, |t| c(2f64.powf(0.25) * (-PI * t * t).exp(), 0.0));
    assert!(phi.signal().max_abs_diff(&h0) < 1e-12);
    let hat = fourier_transform(phi.signal());
    assert_eq!(hat.grid(), phi.grid());
    assert!(hat.max_abs_diff(phi.signal()) < 1e-8);
}

#[test]
fn triangle_normalization_constant() {
    for dt in [1.0 / 16.0, 1.0 / 64.0] {
        let n = (4.0 / dt) as usize + 1;
        let grid = SampleGrid::new(n, dt).unwrap();
        let phi = make_window(&WindowSpec::Triangle, grid).unwrap();
        let riemann: f64 = grid.times().iter().map(|t| (1.0 - t.abs()).max(0.0).powi(2)).sum::<f64>() * dt;
        assert!((phi.scale() - 1.0 / riemann.sqrt()).abs() < 1e-12);
        // Riemann sum of (1-|t|)^2 is 2/3 + dt^2/3, so the constant is sqrt(3/2) (1 - dt^2/4 + ...).
        assert!((phi.scale() - 1.5f64.sqrt()).abs() < 0.31 * dt * dt, "dt {dt}: {}", phi.scale());
    }
}

#[test]
fn gaussian_ambiguity_matches_quadrature() {
    let grid = SampleGrid::new(257, 1.0 / 16.0).unwrap();
    let phi = make_window(&WindowSpec::Gaussian { c: PI }, grid).unwrap();
    let h = ambiguity(&phi, 0.5, 0.25).unwrap();
    assert!((h.norm() - 0.61209128314701377614).abs() < 1e-8, "{}", h.norm());
    assert!((h.norm() - (-PI * (0.25 + 0.0625) / 2.0).exp()).abs() < 1e-8);
}

#[test]
fn hexagon_area_shoelace() {
    let hex = Region::polygon((0..6).map(|k| ((k as f64 * PI / 3.0).cos(), (k as f64 * PI / 3.0).sin())).collect())
        .unwrap();
    assert!((hex.area() - 2.598076211353316).abs() < 1e-12);
}

#[test]
fn gaussian_disc_eigenvalues_follow_incomplete_gamma() {
    // P(n + 1, pi R^2) for R = 1.5.
    let expected = [
        0.99914856165719484,
        0.9931300986610268,
        0.97185909463453032,
        0.92174047214644012,
        0.83317355552458892,
        0.70796502694995054,
        0.56045720437362369,
        0.41150415345307598,
    ];
    let spec_w = WindowSpec::Gaussian { c: PI };
    let region = Region::disc(0.0, 0.0, 1.5).unwrap();
    let grid = auto_grid_for(&spec_w, &region).unwrap();
    let phi = make_window(&spec_w, grid).unwrap();
    let op = assemble(&phi, &region, &phase_grid_for(grid, &region), AssemblyMethod::Factorized).unwrap();
    let spec = eigendecompose(&op).unwrap();
    for (k, e) in expected.iter().enumerate() {
        assert!((spec.eigenvalues()[k] - e).abs() < 2e-3, "k={k}: {} vs {e}", spec.eigenvalues()[k]);
    }
}

#[test]
fn autocorrelation_matches_separable_oracle() {
    // (E1(s))^2 with E1(s) = (2 Phi(1/s) - 1) - 2 s / sqrt(2 pi) (1 - exp(-1/(2 s^2))), s = sigma / r.
    let square = Region::rect(0.0, 1.0, 0.0, 1.0).unwrap();
    let ambiguity_density = [0.70702044313039372, 0.84717763088575077, 0.92200567194846386, 0.96060705010062905];
    let normal = [0.37154927902527984, 0.6408521753698907, 0.81047604374252715, 0.9027512258854527];
    for (k, r) in [2.0, 4.0, 8.0, 16.0].into_iter().enumerate() {
        let a = autocorr_integral(&Density::gaussian_ambiguity(), &square, r).unwrap();
        assert!((a - ambiguity_density[k]).abs() < 2e-4, "r={r}: {a}");
        let b = autocorr_integral(&Density::Gaussian { sigma: 1.0 }, &square, r).unwrap();
        assert!((b - normal[k]).abs() < 2e-4, "r={r}: {b}");
    }
    let sharp = autocorr_integral(&Density::Gaussian { sigma: 0.01 }, &square, 1.0).unwrap();
    assert!((sharp - 0.98410597076117945).abs() < 1e-3, "{sharp}");
    assert!((sharp - 1.0).abs() < 0.02);
}

#[test]
fn density_tail_masses_closed_form() {
    let g = Density::gaussian_ambiguity();
    let p = Density::PowerTail;
    for r in [0.5, 1.0, 2.0, 4.0] {
        assert!((g.tail_mass(r) - (-PI * r * r).exp()).abs() < 1e-12, "r={r}");
        assert!((p.tail_mass(r) - 1.0 / (1.0 + r * r).sqrt()).abs() < 1e-9, "r={r}");
    }
}
