//! Bounded phase-space regions and their center-point rasterization.

use std::f64::consts::PI;
use std::io::BufRead;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gabor::PhaseGrid;

/// Boolean cell lattice; cell `(i, j)` covers
/// `[tau_min + i dtau, tau_min + (i+1) dtau) x [sigma_min + j dsigma, ...)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMask {
    pub tau_min: f64,
    pub sigma_min: f64,
    pub dtau: f64,
    pub dsigma: f64,
    pub n_tau: usize,
    pub n_sigma: usize,
    bits: Vec<bool>,
}

impl CellMask {
    pub fn new(
        tau_min: f64,
        sigma_min: f64,
        dtau: f64,
        dsigma: f64,
        n_tau: usize,
        n_sigma: usize,
        bits: Vec<bool>,
    ) -> Result<Self> {
        if !(dtau > 0.0 && dsigma > 0.0) {
            return Err(Error::InvalidRegion("mask cell sizes must be positive".into()));
        }
        if bits.len() != n_tau * n_sigma {
            return Err(Error::InvalidRegion(format!(
                "mask has {} cells, expected {}x{}",
                bits.len(),
                n_tau,
                n_sigma
            )));
        }
        Ok(Self { tau_min, sigma_min, dtau, dsigma, n_tau, n_sigma, bits })
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.n_sigma + j]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    fn contains(&self, tau: f64, sigma: f64) -> bool {
        let fi = ((tau - self.tau_min) / self.dtau).floor();
        let fj = ((sigma - self.sigma_min) / self.dsigma).floor();
        if fi < 0.0 || fj < 0.0 || fi >= self.n_tau as f64 || fj >= self.n_sigma as f64 {
            return false;
        }
        self.get(fi as usize, fj as usize)
    }

    fn bounding_box(&self) -> Option<[f64; 4]> {
        let mut bb: Option<[f64; 4]> = None;
        for i in 0..self.n_tau {
            for j in 0..self.n_sigma {
                if self.get(i, j) {
                    let t0 = self.tau_min + i as f64 * self.dtau;
                    let s0 = self.sigma_min + j as f64 * self.dsigma;
                    let cell = [t0, t0 + self.dtau, s0, s0 + self.dsigma];
                    bb = Some(match bb {
                        None => cell,
                        Some(b) => [b[0].min(cell[0]), b[1].max(cell[1]), b[2].min(cell[2]), b[3].max(cell[3])],
                    });
                }
            }
        }
        bb
    }

    /// Reads `tau,sigma,inside` rows listing the cell centers of a uniform lattice.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut rows: Vec<(f64, f64, bool)> = Vec::new();
        let mut header_seen = false;
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if !header_seen {
                if trimmed.replace(' ', "") != "tau,sigma,inside" {
                    return Err(Error::Parse { line: lineno, message: "expected header tau,sigma,inside".into() });
                }
                header_seen = true;
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(Error::Parse { line: lineno, message: format!("expected 3 fields, got {}", fields.len()) });
            }
            let num = |s: &str| {
                s.parse::<f64>().map_err(|e| Error::Parse { line: lineno, message: format!("{s:?}: {e}") })
            };
            let inside = match fields[2] {
                "1" | "true" => true,
                "0" | "false" => false,
                other => {
                    return Err(Error::Parse { line: lineno, message: format!("inside flag {other:?} is not 0/1") })
                }
            };
            rows.push((num(fields[0])?, num(fields[1])?, inside));
        }
        if rows.is_empty() {
            return Err(Error::InvalidRegion("mask file has no cells".into()));
        }
        let axis = |vals: Vec<f64>| -> Result<(f64, f64, usize)> {
            let mut v = vals;
            v.sort_by(f64::total_cmp);
            v.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * (1.0 + b.abs()));
            if v.len() < 2 {
                return Err(Error::InvalidRegion("mask needs at least two cells per axis".into()));
            }
            let step = (v[v.len() - 1] - v[0]) / (v.len() - 1) as f64;
            for (k, x) in v.iter().enumerate() {
                if (v[0] + k as f64 * step - x).abs() > 1e-6 * step {
                    return Err(Error::InvalidRegion("mask cell centers are not uniformly spaced".into()));
                }
            }
            Ok((v[0], step, v.len()))
        };
        let (t0, dtau, nt) = axis(rows.iter().map(|r| r.0).collect())?;
        let (s0, dsigma, ns) = axis(rows.iter().map(|r| r.1).collect())?;
        let mut bits = vec![false; nt * ns];
        for (t, s, inside) in rows {
            let i = ((t - t0) / dtau).round() as usize;
            let j = ((s - s0) / dsigma).round() as usize;
            bits[i * ns + j] |= inside;
        }
        CellMask::new(t0 - dtau / 2.0, s0 - dsigma / 2.0, dtau, dsigma, nt, ns, bits)
    }
}

/// A bounded region of the `(tau, sigma)` plane.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Disc { center: (f64, f64), radius: f64 },
    /// Closed rectangle; degenerate intervals give the empty set.
    Rect { tau: (f64, f64), sigma: (f64, f64) },
    Polygon { vertices: Vec<(f64, f64)> },
    Mask(CellMask),
}

impl Region {
    pub fn disc(cx: f64, cy: f64, radius: f64) -> Result<Region> {
        if !(radius.is_finite() && radius > 0.0) || !cx.is_finite() || !cy.is_finite() {
            return Err(Error::InvalidRegion(format!("disc radius must be positive and finite, got {radius}")));
        }
        Ok(Region::Disc { center: (cx, cy), radius })
    }

    pub fn rect(t0: f64, t1: f64, s0: f64, s1: f64) -> Result<Region> {
        if ![t0, t1, s0, s1].iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidRegion("rectangle bounds must be finite".into()));
        }
        if t1 < t0 || s1 < s0 {
            return Err(Error::InvalidRegion(format!("rectangle [{t0},{t1}]x[{s0},{s1}] has reversed bounds")));
        }
        Ok(Region::Rect { tau: (t0, t1), sigma: (s0, s1) })
    }

    pub fn empty() -> Region {
        Region::Rect { tau: (0.0, 0.0), sigma: (0.0, 0.0) }
    }

    pub fn polygon(vertices: Vec<(f64, f64)>) -> Result<Region> {
        validate_polygon(&vertices)?;
        Ok(Region::Polygon { vertices })
    }

    pub fn is_empty(&self) -> bool {
        match self {
            Region::Disc { .. } | Region::Polygon { .. } => false,
            Region::Rect { tau, sigma } => tau.1 <= tau.0 || sigma.1 <= sigma.0,
            Region::Mask(m) => m.count() == 0,
        }
    }

    pub fn area(&self) -> f64 {
        match self {
            Region::Disc { radius, .. } => PI * radius * radius,
            Region::Rect { .. } if self.is_empty() => 0.0,
            Region::Rect { tau, sigma } => (tau.1 - tau.0) * (sigma.1 - sigma.0),
            Region::Polygon { vertices } => shoelace(vertices).abs(),
            Region::Mask(m) => m.count() as f64 * m.dtau * m.dsigma,
        }
    }

    /// `{(r tau, r sigma) : (tau, sigma) in self}`.
    pub fn scale(&self, r: f64) -> Result<Region> {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::InvalidScale(r));
        }
        Ok(match self {
            Region::Disc { center, radius } => Region::Disc { center: (r * center.0, r * center.1), radius: r * radius },
            Region::Rect { tau, sigma } => Region::Rect { tau: (r * tau.0, r * tau.1), sigma: (r * sigma.0, r * sigma.1) },
            Region::Polygon { vertices } => {
                Region::Polygon { vertices: vertices.iter().map(|(x, y)| (r * x, r * y)).collect() }
            }
            Region::Mask(m) => Region::Mask(CellMask {
                tau_min: r * m.tau_min,
                sigma_min: r * m.sigma_min,
                dtau: r * m.dtau,
                dsigma: r * m.dsigma,
                ..m.clone()
            }),
        })
    }

    /// `{(tau, sigma) : (-sigma, tau) in self}`, a quarter turn clockwise.
    pub fn fourier_rotate(&self) -> Region {
        match self {
            Region::Disc { center, radius } => Region::Disc { center: (center.1, -center.0), radius: *radius },
            Region::Rect { tau, sigma } => Region::Rect { tau: *sigma, sigma: (-tau.1, -tau.0) },
            Region::Polygon { vertices } => Region::Polygon { vertices: vertices.iter().map(|(x, y)| (*y, -x)).collect() },
            Region::Mask(m) => {
                let (nt, ns) = (m.n_sigma, m.n_tau);
                let mut bits = vec![false; nt * ns];
                for i in 0..nt {
                    for j in 0..ns {
                        bits[i * ns + j] = m.get(m.n_tau - 1 - j, i);
                    }
                }
                Region::Mask(CellMask {
                    tau_min: m.sigma_min,
                    sigma_min: -(m.tau_min + m.n_tau as f64 * m.dtau),
                    dtau: m.dsigma,
                    dsigma: m.dtau,
                    n_tau: nt,
                    n_sigma: ns,
                    bits,
                })
            }
        }
    }

    pub fn contains(&self, tau: f64, sigma: f64) -> bool {
        match self {
            Region::Disc { center, radius } => {
                let (a, b) = (tau - center.0, sigma - center.1);
                a * a + b * b <= radius * radius
            }
            Region::Rect { .. } if self.is_empty() => false,
            Region::Rect { tau: t, sigma: s } => t.0 <= tau && tau <= t.1 && s.0 <= sigma && sigma <= s.1,
            Region::Polygon { vertices } => polygon_contains(vertices, tau, sigma),
            Region::Mask(m) => m.contains(tau, sigma),
        }
    }

    /// `[tau_min, tau_max, sigma_min, sigma_max]`, or `None` for the empty set.
    pub fn bounding_box(&self) -> Option<[f64; 4]> {
        if self.is_empty() {
            return None;
        }
        match self {
            Region::Disc { center, radius } => {
                Some([center.0 - radius, center.0 + radius, center.1 - radius, center.1 + radius])
            }
            Region::Rect { tau, sigma } => Some([tau.0, tau.1, sigma.0, sigma.1]),
            Region::Polygon { vertices } => {
                let mut bb = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
                for (x, y) in vertices {
                    bb = [bb[0].min(*x), bb[1].max(*x), bb[2].min(*y), bb[3].max(*y)];
                }
                Some(bb)
            }
            Region::Mask(m) => m.bounding_box(),
        }
    }

    /// Largest `|tau|` over the region (0 if empty).
    pub fn tau_extent(&self) -> f64 {
        self.bounding_box().map_or(0.0, |b| b[0].abs().max(b[1].abs()))
    }

    /// Largest `|sigma|` over the region (0 if empty).
    pub fn sigma_extent(&self) -> f64 {
        self.bounding_box().map_or(0.0, |b| b[2].abs().max(b[3].abs()))
    }

    /// `sup |(tau, sigma)|` over the region, or an upper bound for masks.
    pub fn radius(&self) -> f64 {
        match self {
            Region::Disc { center, radius } => center.0.hypot(center.1) + radius,
            Region::Polygon { vertices } => vertices.iter().map(|(x, y)| x.hypot(*y)).fold(0.0, f64::max),
            _ => self.tau_extent().hypot(self.sigma_extent()),
        }
    }

    /// Short identifier used in reports.
    pub fn label(&self) -> String {
        match self {
            Region::Disc { center, radius } => format!("disc {} {} {}", center.0, center.1, radius),
            Region::Rect { tau, sigma } => format!("rect {} {} {} {}", tau.0, tau.1, sigma.0, sigma.1),
            Region::Polygon { vertices } => {
                let coords: Vec<String> = vertices.iter().map(|(x, y)| format!("{x} {y}")).collect();
                format!("poly {}", coords.join(" "))
            }
            Region::Mask(m) => format!("mask {}x{} cells", m.n_tau, m.n_sigma),
        }
    }

    /// Parses `disc cx cy r`, `rect t0 t1 s0 s1`, `poly x1 y1 x2 y2 ...` or
    /// `mask <csv-path>` (relative paths resolve against `base_dir`).
    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Region> {
        let mut parts = text.split_whitespace();
        let kind = parts.next().ok_or_else(|| Error::InvalidRegion("empty region description".into()))?;
        let rest: Vec<&str> = parts.collect();
        let numbers = || -> Result<Vec<f64>> {
            rest.iter()
                .map(|s| s.parse::<f64>().map_err(|_| Error::InvalidRegion(format!("{s:?} is not a number"))))
                .collect()
        };
        match kind {
            "disc" => match numbers()?.as_slice() {
                [cx, cy, r] => Region::disc(*cx, *cy, *r),
                v => Err(Error::InvalidRegion(format!("disc expects 3 numbers (cx cy r), got {}", v.len()))),
            },
            "rect" => match numbers()?.as_slice() {
                [t0, t1, s0, s1] => Region::rect(*t0, *t1, *s0, *s1),
                v => Err(Error::InvalidRegion(format!("rect expects 4 numbers (t0 t1 s0 s1), got {}", v.len()))),
            },
            "poly" => {
                let v = numbers()?;
                if v.len() % 2 != 0 {
                    return Err(Error::InvalidRegion("poly expects an even number of coordinates".into()));
                }
                Region::polygon(v.chunks(2).map(|c| (c[0], c[1])).collect())
            }
            "mask" => {
                let [path] = rest.as_slice() else {
                    return Err(Error::InvalidRegion("mask expects one file path".into()));
                };
                let path = match base_dir {
                    Some(dir) if Path::new(path).is_relative() => dir.join(path),
                    _ => Path::new(path).to_path_buf(),
                };
                let file = std::fs::File::open(&path)
                    .map_err(|e| Error::InvalidRegion(format!("cannot open mask {}: {e}", path.display())))?;
                Ok(Region::Mask(CellMask::read_csv(std::io::BufReader::new(file))?))
            }
            other => Err(Error::InvalidRegion(format!("unknown region kind {other:?}"))),
        }
    }
}

fn shoelace(v: &[(f64, f64)]) -> f64 {
    let n = v.len();
    (0..n).map(|k| {
        let (a, b) = (v[k], v[(k + 1) % n]);
        a.0 * b.1 - b.0 * a.1
    })
    .sum::<f64>()
        / 2.0
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

fn on_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64), tol: f64) -> bool {
    let len = (b.0 - a.0).hypot(b.1 - a.1);
    if cross(a, b, p).abs() > tol * len.max(1.0) {
        return false;
    }
    p.0 >= a.0.min(b.0) - tol && p.0 <= a.0.max(b.0) + tol && p.1 >= a.1.min(b.1) - tol && p.1 <= a.1.max(b.1) + tol
}

fn segments_intersect(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(a, c, d, 0.0))
        || (d2 == 0.0 && on_segment(b, c, d, 0.0))
        || (d3 == 0.0 && on_segment(c, a, b, 0.0))
        || (d4 == 0.0 && on_segment(d, a, b, 0.0))
}

fn validate_polygon(v: &[(f64, f64)]) -> Result<()> {
    let n = v.len();
    if n < 3 {
        return Err(Error::InvalidRegion(format!("polygon needs at least 3 vertices, got {n}")));
    }
    if v.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::InvalidRegion("polygon vertices must be finite".into()));
    }
    for k in 0..n {
        if v[k] == v[(k + 1) % n] {
            return Err(Error::InvalidRegion(format!("polygon repeats vertex {k}")));
        }
    }
    for i in 0..n {
        let (a, b) = (v[i], v[(i + 1) % n]);
        for j in i + 1..n {
            let (c, d) = (v[j], v[(j + 1) % n]);
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                // Neighbouring edges may only share their common vertex.
                let shared = if j == i + 1 { b } else { a };
                let (other_ab, other_cd) = if j == i + 1 { (a, d) } else { (b, c) };
                if cross(shared, other_ab, other_cd) == 0.0
                    && ((other_ab.0 - shared.0) * (other_cd.0 - shared.0) + (other_ab.1 - shared.1) * (other_cd.1 - shared.1))
                        > 0.0
                {
                    return Err(Error::InvalidRegion(format!("polygon edges {i} and {j} overlap")));
                }
            } else if segments_intersect(a, b, c, d) {
                return Err(Error::InvalidRegion(format!("polygon edges {i} and {j} intersect")));
            }
        }
    }
    if shoelace(v) == 0.0 {
        return Err(Error::InvalidRegion("polygon has zero area".into()));
    }
    Ok(())
}

fn polygon_contains(v: &[(f64, f64)], x: f64, y: f64) -> bool {
    let p = (x, y);
    let n = v.len();
    let scale = v.iter().map(|(a, b)| a.abs().max(b.abs())).fold(1.0, f64::max);
    let tol = 1e-12 * scale;
    let mut winding = 0i32;
    for k in 0..n {
        let (a, b) = (v[k], v[(k + 1) % n]);
        if on_segment(p, a, b, tol) {
            return true;
        }
        if a.1 <= y {
            if b.1 > y && cross(a, b, p) > 0.0 {
                winding += 1;
            }
        } else if b.1 <= y && cross(a, b, p) < 0.0 {
            winding -= 1;
        }
    }
    winding != 0
}

/// Center-point quadrature weights of a region on a phase grid.
#[derive(Debug, Clone)]
pub struct RasterizedRegion {
    phase_grid: PhaseGrid,
    weights: Vec<f64>,
}

impl RasterizedRegion {
    pub fn phase_grid(&self) -> &PhaseGrid {
        &self.phase_grid
    }

    /// Row-major weights, `dtau dsigma` inside and 0 outside.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.phase_grid.n_sigma() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let ns = self.phase_grid.n_sigma();
        &self.weights[i * ns..(i + 1) * ns]
    }

    pub fn row_is_empty(&self, i: usize) -> bool {
        self.row(i).iter().all(|w| *w == 0.0)
    }

    pub fn cell_count(&self) -> usize {
        self.weights.iter().filter(|w| **w > 0.0).count()
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `(i, j)` of every cell with positive weight, row-major.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        let ns = self.phase_grid.n_sigma();
        self.weights.iter().enumerate().filter(|(_, w)| **w > 0.0).map(|(k, _)| (k / ns, k % ns)).collect()
    }
}

pub fn rasterize(region: &Region, pg: &PhaseGrid) -> Result<RasterizedRegion> {
    let (nt, ns) = (pg.n_tau(), pg.n_sigma());
    if let Some(bb) = region.bounding_box() {
        let ext = pg.extent();
        let slack = 1e-9 * (pg.dtau() + pg.dsigma());
        if bb[0] < ext.0 - slack || bb[1] > ext.1 + slack || bb[2] < ext.2 - slack || bb[3] > ext.3 + slack {
            return Err(Error::Coverage(format!(
                "region box [{}, {}]x[{}, {}] exceeds phase grid [{}, {}]x[{}, {}]",
                bb[0], bb[1], bb[2], bb[3], ext.0, ext.1, ext.2, ext.3
            )));
        }
    } else {
        return Ok(RasterizedRegion { phase_grid: *pg, weights: vec![0.0; nt * ns] });
    }
    let cell = pg.cell_area();
    let sigmas = pg.sigma_values();
    let rows: Vec<Vec<f64>> = (0..nt)
        .into_par_iter()
        .map(|i| {
            let tau = pg.tau(i);
            sigmas.iter().map(|&s| if region.contains(tau, s) { cell } else { 0.0 }).collect()
        })
        .collect();
    Ok(RasterizedRegion { phase_grid: *pg, weights: rows.concat() })
}
