use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tfconc::asymptotics::{
    decay_condition_check, hs_error_rate, scaling_experiment, Density, GridChoice,
};
use tfconc::concentration::phase_grid_for;
use tfconc::regularity::{
    eigenfunction_decay, envelope_admissible, fourier_side_check, hermite_functions, kernel_vanishing_beyond,
    kernel_vanishing_check, mass_outside, DecayEnvelope, VanishingReport,
};
use tfconc::rkhs::AmbiguityFunction;
use tfconc::*;

fn gaussian_on(grid: SampleGrid) -> Window {
    make_window(&WindowSpec::Gaussian { c: PI }, grid).unwrap()
}

fn solve(spec_w: &WindowSpec, region: &Region) -> (Window, ConcentrationOperator, Spectrum) {
    let grid = auto_grid_for(spec_w, region).unwrap();
    let phi = make_window(spec_w, grid).unwrap();
    let op = assemble(&phi, region, &phase_grid_for(grid, region), AssemblyMethod::Factorized).unwrap();
    let spec = eigendecompose(&op).unwrap();
    (phi, op, spec)
}

fn bump(grid: SampleGrid, center: f64, freq: f64) -> Signal {
    Signal::from_fn(grid, |t| Complex64::from_polar((-4.0 * (t - center).powi(2)).exp(), 2.0 * PI * freq * t))
}

#[test]
fn shift_and_transform_commute_up_to_rotation() {
    let grid = SampleGrid::new(121, 1.0 / 11.0).unwrap();
    let f = bump(grid, 0.3, -0.5);
    for (m, k) in [(3, -2), (-5, 4), (0, 7)] {
        let (tau, sigma) = (m as f64 * grid.dt(), k as f64 * grid.dsigma());
        let lhs = fourier_transform(&tf_shift(&f, tau, sigma).unwrap());
        let rhs = tf_shift(&fourier_transform(&f), -sigma, tau).unwrap();
        assert!(lhs.max_abs_diff(&rhs) < 1e-8, "({m}, {k}): {}", lhs.max_abs_diff(&rhs));
    }
}

#[test]
fn analysis_covariance_under_fourier_transform() {
    let grid = SampleGrid::new(81, 1.0 / 9.0).unwrap();
    let phi = gaussian_on(grid);
    let f = bump(grid, -0.4, 0.6);
    let pg = PhaseGrid::full(grid);
    let sf = analyze(&f, &phi, &pg).unwrap();
    let shat = analyze(&fourier_transform(&f), &phi, &pg).unwrap();
    let half = (grid.len() as i64 - 1) / 2;
    let mut worst: f64 = 0.0;
    for m in -half..=half {
        for j in 0..pg.n_sigma() {
            let i = pg.row_of_shift(m).unwrap();
            // (tau, sigma) = (m dt, sigma_j) maps to (-sigma_j, tau).
            let i2 = pg.row_of_shift(half - j as i64).unwrap();
            let j2 = (m + half) as usize;
            worst = worst.max((sf.get(i, j) - shat.get(i2, j2)).norm());
        }
    }
    assert!(worst < 1e-8, "{worst}");
}

#[test]
fn synthesis_inverts_analysis() {
    let grid = SampleGrid::new(101, 0.1).unwrap();
    let phi = gaussian_on(grid);
    let f = bump(grid, 0.2, 0.0);
    let back = synthesize(&analyze(&f, &phi, &PhaseGrid::full(grid)).unwrap(), &phi).unwrap();
    assert!(back.max_abs_diff(&f) < 1e-6, "{}", back.max_abs_diff(&f));
}

#[test]
fn reproducing_kernel_identities() {
    let grid = SampleGrid::new(81, 1.0 / 9.0).unwrap();
    let phi = gaussian_on(grid);
    let coeffs = analyze(&bump(grid, 0.5, -0.3), &phi, &PhaseGrid::full(grid)).unwrap();
    assert!(project(&coeffs, &phi).unwrap().max_abs_diff(&coeffs) < 1e-6);
    assert!((AmbiguityFunction::new(&phi).energy() - 1.0).abs() < 1e-8);
}

#[test]
fn factorized_kernel_matches_direct_at_random_pairs() {
    let grid = SampleGrid::new(121, 1.0 / 11.0).unwrap();
    let phi = gaussian_on(grid);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let mut point = || PhasePoint::new(rng.gen_range(-15..=15) as f64 * grid.dt(), rng.gen_range(-2.0..2.0));
        let (p, q) = (point(), point());
        let d = (kernel(&phi, p, q).unwrap() - kernel_factorized(&phi, p, q).unwrap()).norm();
        assert!(d < 1e-10, "{d}");
    }
}

#[test]
fn large_box_captures_the_window() {
    let (_, _, spec) = solve(&WindowSpec::Gaussian { c: PI }, &Region::rect(-2.2, 2.2, -2.2, 2.2).unwrap());
    assert!(spec.eigenvalues()[0] >= 0.999, "{}", spec.eigenvalues()[0]);
}

#[test]
fn trace_and_hilbert_schmidt_identities() {
    let region = Region::disc(0.0, 0.0, 2.0).unwrap();
    let (phi, op, spec) = solve(&WindowSpec::Gaussian { c: PI }, &region);
    let tr = trace_identity(&op);
    assert!((spec.sum() - tr.raster_area).abs() < 1e-8);
    assert!((spec.sum() - 4.0 * PI).abs() < 0.02 * 4.0 * PI);
    let hs = hs_identity(&op, &spec, &phi).unwrap();
    assert!((hs.sum_sq - hs.double_integral).abs() < 0.01 * hs.double_integral, "{hs:?}");
    assert_eq!(counting(&spec, 0.5).unwrap(), spec.eigenvalues().iter().filter(|l| **l > 0.5).count());
}

#[test]
fn top_eigenfunction_energy_is_its_eigenvalue() {
    let region = Region::disc(0.0, 0.0, 1.5).unwrap();
    let (phi, _, spec) = solve(&WindowSpec::Gaussian { c: PI }, &region);
    let e = energy(spec.eigenfunction(0), &phi, &region, &phase_grid_for(*phi.grid(), &region)).unwrap();
    assert!((e - spec.eigenvalues()[0]).abs() < 1e-6, "{e}");
}

#[test]
fn eigenfilter_keeps_energy_of_a_noisy_chirp() {
    let region = Region::disc(0.0, 0.0, 2.0).unwrap();
    let (phi, _, spec) = solve(&WindowSpec::Gaussian { c: PI }, &region);
    let grid = *phi.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let noise = 0.05;
    let chirp = Signal::from_fn(grid, |t| Complex64::from_polar((-PI * t * t).exp(), PI * 0.6 * t * t));
    let noisy = Signal::new(
        grid,
        chirp
            .samples()
            .iter()
            .map(|z| z + Complex64::new(rng.gen_range(-noise..noise), rng.gen_range(-noise..noise)))
            .collect(),
    )
    .unwrap();
    let k = region.area().ceil() as usize;
    let filtered = eigenfilter(&noisy, &spec, k).unwrap();
    let pg = phase_grid_for(grid, &region);
    let before = energy(&noisy, &phi, &region, &pg).unwrap();
    let after = energy(&filtered, &phi, &region, &pg).unwrap();
    assert!(after >= 0.9 * before, "{after} of {before}");
    let all = eigenfilter(&noisy, &spec, spec.len()).unwrap();
    assert!(all.max_abs_diff(&noisy) < 1e-8);
    assert!(eigenfilter(&noisy, &spec, 0).is_err());
}

#[test]
fn tiny_region_has_no_large_eigenvalue() {
    let (_, _, spec) = solve(&WindowSpec::Gaussian { c: PI }, &Region::disc(0.0, 0.0, 0.15).unwrap());
    assert!(spec.sum() < 0.1);
    assert_eq!(counting(&spec, 0.5).unwrap(), 0);
}

#[test]
fn rasterized_disc_area_converges() {
    let disc = Region::disc(0.0, 0.0, 1.0).unwrap();
    let errors: Vec<f64> = [100usize, 400, 1600]
        .iter()
        .map(|&n| {
            let grid = SampleGrid::new(n, 1.0 / (n as f64).sqrt()).unwrap();
            (rasterize(&disc, &phase_grid_for(grid, &disc)).unwrap().total() - PI).abs()
        })
        .collect();
    assert!(errors[1] < errors[0] && errors[2] < errors[1], "{errors:?}");
}

#[test]
fn hilbert_schmidt_deficit_grows_linearly() {
    let report = scaling_experiment(
        &WindowSpec::Gaussian { c: PI },
        &Region::disc(0.0, 0.0, 1.0).unwrap(),
        &[1.0, 2.0, 3.0, 4.0],
        0.1,
        0.9,
        GridChoice::Auto,
        AssemblyMethod::Factorized,
    )
    .unwrap();
    let fit = hs_error_rate(&report).unwrap();
    assert!((0.8..=1.2).contains(&fit.slope), "{fit:?}");
}

#[test]
fn fourier_side_of_gaussian_rectangle() {
    let region = Region::rect(0.0, 1.0, 0.0, 2.0).unwrap();
    assert_eq!(region.fourier_rotate(), Region::rect(0.0, 2.0, -1.0, 0.0).unwrap());
    let grid = auto_grid_for(&WindowSpec::Gaussian { c: PI }, &region).unwrap();
    let report = fourier_side_check(&gaussian_on(grid), &region, 16).unwrap();
    assert!(report.max_eigenvalue_gap < 1e-6 && report.max_overlap_defect < 1e-4, "{report:?}");
}

#[test]
fn fourier_side_of_triangle_disc() {
    let region = Region::disc(0.0, 0.0, 1.0).unwrap();
    let grid = auto_grid_for(&WindowSpec::Triangle, &region).unwrap();
    let phi = make_window(&WindowSpec::Triangle, grid).unwrap();
    let report = fourier_side_check(&phi, &region, 10).unwrap();
    assert!(report.max_eigenvalue_gap < 1e-5, "{report:?}");
}

#[test]
fn triangle_eigenfunctions_stay_in_the_support() {
    let region = Region::disc(0.0, 0.0, 1.0).unwrap();
    let (phi, op, spec) = solve(&WindowSpec::Triangle, &region);
    assert!(matches!(kernel_vanishing_check(&phi, &op), VanishingReport::Checked { ok: true, .. }));
    for k in 0..4 {
        assert_eq!(mass_outside(spec.eigenfunction(k), 3.0).1, 0.0);
    }
}

#[test]
fn box_window_kernel_vanishes_beyond_unit_lag() {
    let grid = SampleGrid::new(201, 0.05).unwrap();
    let phi = Window::custom(Signal::from_fn(grid, |t| Complex64::new(if t.abs() < 0.5 - 1e-9 { 1.0 } else { 0.0 }, 0.0)))
        .unwrap();
    let region = Region::rect(-0.5, 0.5, -0.5, 0.5).unwrap();
    let op = assemble(&phi, &region, &phase_grid_for(grid, &region), AssemblyMethod::Factorized).unwrap();
    assert!(matches!(kernel_vanishing_beyond(&op, 1.0), VanishingReport::Checked { ok: true, .. }));
    assert!(matches!(kernel_vanishing_check(&phi, &op), VanishingReport::Checked { ok: true, .. }));
}

#[test]
fn gaussian_eigenfunctions_decay_on_both_sides() {
    let region = Region::disc(0.0, 0.0, 1.5).unwrap();
    let (phi, op, spec) = solve(&WindowSpec::Gaussian { c: PI }, &region);
    let gamma = DecayEnvelope::StretchedExp { kappa: PI, q: 2.0 };
    let rows = eigenfunction_decay(&phi, &op, &spec, 3, &gamma, Some(&gamma), 0.1).unwrap();
    assert_eq!(rows.len(), 3);
    for row in &rows {
        assert!(row.time.ok && !row.time.vacuous, "{row:?}");
        assert!(row.frequency.as_ref().unwrap().ok, "{row:?}");
    }
}

#[test]
fn triangle_spectrum_decays_like_its_window_transform() {
    let region = Region::disc(0.0, 0.0, 1.0).unwrap();
    let (phi, op, spec) = solve(&WindowSpec::Triangle, &region);
    let slow = DecayEnvelope::PowerLaw { q: 1.9 };
    let rows = eigenfunction_decay(&phi, &op, &spec, 3, &slow, Some(&slow), 0.0).unwrap();
    assert!(rows.iter().all(|r| r.frequency.as_ref().unwrap().ok));
    let fast = DecayEnvelope::StretchedExp { kappa: 1.0, q: 1.0 };
    let rows = eigenfunction_decay(&phi, &op, &spec, 3, &fast, Some(&fast), 0.0).unwrap();
    assert!(rows.iter().all(|r| !r.frequency.as_ref().unwrap().ok), "{rows:#?}");
}

#[test]
fn top_eigenfunction_is_the_gaussian() {
    let (_, _, spec) = solve(&WindowSpec::Gaussian { c: PI }, &Region::disc(0.0, 0.0, 1.5).unwrap());
    let h0 = &hermite_functions(*spec.eigenfunction(0).grid(), 1)[0];
    assert!(inner_product(spec.eigenfunction(0), h0).unwrap().norm() >= 0.999);
}

#[test]
fn envelope_admissibility() {
    assert!(!envelope_admissible(&DecayEnvelope::PowerLaw { q: 0.5 }, 0.1).power_integrable);
    assert!(envelope_admissible(&DecayEnvelope::StretchedExp { kappa: PI, q: 2.0 }, 0.1).ok);
}

#[test]
fn decay_condition_examples() {
    let radii: Vec<f64> = (1..=40).map(|k| k as f64 * 0.5).collect();
    let g = Density::gaussian_ambiguity();
    for p in [1.0, 2.0, 4.0, 8.0] {
        assert!(decay_condition_check(&g, p, 10.0, &radii).ok, "p={p}");
    }
    let heavy = Density::PowerTail;
    assert!(decay_condition_check(&heavy, 1.0, 1.0, &radii).ok);
    assert!(!decay_condition_check(&heavy, 2.0, 1.0, &radii).ok);
}
