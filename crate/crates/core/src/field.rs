//! Synthetic ground-truth fields, sampling layouts and reference selection.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pixels per side of the default 100 × 100 map.
pub const DEFAULT_SIDE: usize = 100;
/// Default per-axis bound of sampling-point displacements.
pub const DEFAULT_PERTURBATION: f64 = 0.3;
pub const DEFAULT_REFERENCE_COUNT: usize = 10;
/// Version tag of the built-in presets; bump when their shapes change.
pub const PRESET_VERSION: u32 = 1;

/// Normalized field values on a pixel grid covering `[0, 1]²`.
///
/// Row-major, top-left origin: pixel `(i, j)` has its centre at
/// `((i + ½)/width, (j + ½)/height)`. `b_min_nt`/`b_max_nt` map normalized
/// 0 and 1 onto physical field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub b_min_nt: f64,
    pub b_max_nt: f64,
}

impl FieldMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter("field map needs at least one pixel".into()));
        }
        if values.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {width}×{height} map",
                values.len()
            )));
        }
        Ok(Self { width, height, values, b_min_nt: 0.0, b_max_nt: 1.0 })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn with_window(mut self, b_min_nt: f64, b_max_nt: f64) -> Self {
        self.b_min_nt = b_min_nt;
        self.b_max_nt = b_max_nt;
        self
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.width + i]
    }

    pub fn pixel_centre(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) / self.width as f64, (j as f64 + 0.5) / self.height as f64)
    }

    pub fn pixel_count(&self) -> usize {
        self.values.len()
    }

    pub fn to_physical(&self, normalized: f64) -> f64 {
        self.b_min_nt + normalized * (self.b_max_nt - self.b_min_nt)
    }

    pub fn to_normalized(&self, b_nt: f64) -> f64 {
        (b_nt - self.b_min_nt) / (self.b_max_nt - self.b_min_nt)
    }

    pub fn same_shape(&self, other: &FieldMap) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Pixel indices whose 8-neighbourhood values are all strictly lower.
    pub fn local_maxima(&self) -> Vec<(usize, usize)> {
        let (w, h) = (self.width as isize, self.height as isize);
        let mut out = Vec::new();
        for j in 0..h {
            for i in 0..w {
                let v = self.get(i as usize, j as usize);
                let mut peak = true;
                'scan: for dj in -1..=1 {
                    for di in -1..=1 {
                        let (ni, nj) = (i + di, j + dj);
                        if (di, dj) == (0, 0) || ni < 0 || nj < 0 || ni >= w || nj >= h {
                            continue;
                        }
                        if self.get(ni as usize, nj as usize) >= v {
                            peak = false;
                            break 'scan;
                        }
                    }
                }
                if peak {
                    out.push((i as usize, j as usize));
                }
            }
        }
        out
    }
}

/// Isotropic Gaussian bump `sign · amplitude · exp(−|x − c|² / 2 width²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub centre: (f64, f64),
    pub width: f64,
    pub amplitude: f64,
    pub sign: f64,
}

impl Bump {
    pub fn new(cx: f64, cy: f64, width: f64, amplitude: f64, sign: f64) -> Self {
        Self { centre: (cx, cy), width, amplitude, sign }
    }
}

/// Sum of Gaussian bumps on a `width × height` grid, rescaled to `[0, 1]`.
pub fn make_field(bumps: &[Bump], width: usize, height: usize) -> Result<FieldMap> {
    if bumps.is_empty() {
        return Err(Error::InvalidParameter("field needs at least one bump".into()));
    }
    for b in bumps {
        if ![b.centre.0, b.centre.1, b.width, b.amplitude, b.sign].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("bump"));
        }
        if !(b.width > 0.0) {
            return Err(Error::Degenerate(format!("bump width must be positive, got {}", b.width)));
        }
    }
    let mut map = FieldMap::filled(width, height, 0.0)?;
    for j in 0..height {
        for i in 0..width {
            let (x, y) = map.pixel_centre(i, j);
            map.values[j * width + i] = bumps
                .iter()
                .map(|b| {
                    let d2 = (x - b.centre.0).powi(2) + (y - b.centre.1).powi(2);
                    b.sign * b.amplitude * (-0.5 * d2 / (b.width * b.width)).exp()
                })
                .sum();
        }
    }
    let lo = map.values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = map.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::Degenerate("field is constant".into()));
    }
    for v in &mut map.values {
        *v = (*v - lo) / (hi - lo);
    }
    Ok(map)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldPreset {
    Single,
    Double,
    Triple,
}

impl FieldPreset {
    pub const ALL: [FieldPreset; 3] = [FieldPreset::Single, FieldPreset::Double, FieldPreset::Triple];

    pub fn name(self) -> &'static str {
        match self {
            FieldPreset::Single => "single",
            FieldPreset::Double => "double",
            FieldPreset::Triple => "triple",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| Error::Parse(format!("unknown field preset '{name}' (single, double, triple)")))
    }

    /// One maximum; a peak and a trough; three maxima. Centres sit on pixel
    /// centres of the 100 × 100 grid so peaks are unambiguous.
    pub fn bumps(self) -> Vec<Bump> {
        match self {
            FieldPreset::Single => vec![Bump::new(0.455, 0.545, 0.40, 1.0, 1.0)],
            FieldPreset::Double => vec![
                Bump::new(0.255, 0.305, 0.40, 1.0, 1.0),
                Bump::new(0.775, 0.715, 0.40, 1.0, -1.0),
            ],
            FieldPreset::Triple => vec![
                Bump::new(0.105, 0.145, 0.30, 1.0, 1.0),
                Bump::new(0.895, 0.195, 0.30, 0.85, 1.0),
                Bump::new(0.495, 0.905, 0.30, 0.90, 1.0),
            ],
        }
    }

    pub fn build(self, width: usize, height: usize) -> Result<FieldMap> {
        make_field(&self.bumps(), width, height)
    }
}

/// Bilinear interpolation between pixel centres; clamped to the outermost
/// centres within half a pixel of the border.
pub fn sample_field(map: &FieldMap, coords: &[(f64, f64)]) -> Result<Vec<f64>> {
    coords.iter().map(|&(x, y)| sample_at(map, x, y)).collect()
}

fn sample_at(map: &FieldMap, x: f64, y: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
        return Err(Error::OutOfExtent(x, y));
    }
    let u = (x * map.width as f64 - 0.5).clamp(0.0, (map.width - 1) as f64);
    let v = (y * map.height as f64 - 0.5).clamp(0.0, (map.height - 1) as f64);
    let (i0, j0) = (u.floor() as usize, v.floor() as usize);
    let (i1, j1) = ((i0 + 1).min(map.width - 1), (j0 + 1).min(map.height - 1));
    let (fu, fv) = (u - i0 as f64, v - j0 as f64);
    let top = map.get(i0, j0) * (1.0 - fu) + map.get(i1, j0) * fu;
    let bottom = map.get(i0, j1) * (1.0 - fu) + map.get(i1, j1) * fu;
    Ok(top * (1.0 - fv) + bottom * fv)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Random,
    Spiral,
    SquareLoop,
    Serpentine,
    Grid,
}

impl Strategy {
    pub const ALL: [Strategy; 5] =
        [Strategy::Random, Strategy::Spiral, Strategy::SquareLoop, Strategy::Serpentine, Strategy::Grid];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Spiral => "spiral",
            Strategy::SquareLoop => "square-loop",
            Strategy::Serpentine => "serpentine",
            Strategy::Grid => "grid",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| {
                Error::Parse(format!(
                    "unknown strategy '{name}' (random, spiral, square-loop, serpentine, grid)"
                ))
            })
    }
}

/// Distribution of per-axis displacements applied to layout points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Perturbation {
    /// Uniform on `[−bound, bound]`.
    Uniform,
    /// Normal with std `bound/3`, truncated at `±bound`.
    Normal,
}

fn displacement<R: Rng + ?Sized>(bound: f64, kind: Perturbation, rng: &mut R) -> f64 {
    if bound == 0.0 {
        return 0.0;
    }
    match kind {
        Perturbation::Uniform => rng.gen_range(-bound..=bound),
        Perturbation::Normal => {
            let z: f64 = rng.sample(StandardNormal);
            (z * bound / 3.0).clamp(-bound, bound)
        }
    }
}

/// `n` points on a polyline, equally spaced in arc length from its start to its end.
fn along_path(path: &[(f64, f64)], n: usize) -> Vec<(f64, f64)> {
    let lengths: Vec<f64> = path
        .windows(2)
        .map(|w| ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt())
        .collect();
    let total: f64 = lengths.iter().sum();
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    let mut walked = 0.0;
    for k in 0..n {
        let target = if n == 1 { 0.5 * total } else { total * k as f64 / (n - 1) as f64 };
        while seg + 1 < lengths.len() && walked + lengths[seg] < target {
            walked += lengths[seg];
            seg += 1;
        }
        let f = if lengths[seg] > 0.0 { ((target - walked) / lengths[seg]).clamp(0.0, 1.0) } else { 0.0 };
        let (a, b) = (path[seg], path[seg + 1]);
        out.push((a.0 + f * (b.0 - a.0), a.1 + f * (b.1 - a.1)));
    }
    out
}

fn spiral_path() -> Vec<(f64, f64)> {
    // Archimedean spiral from the centre out to radius 0.45, three turns
    let turns = 3.0;
    let samples = 2000;
    (0..=samples)
        .map(|k| {
            let s = k as f64 / samples as f64;
            let theta = 2.0 * PI * turns * s;
            let r = 0.45 * s;
            (0.5 + r * theta.cos(), 0.5 + r * theta.sin())
        })
        .collect()
}

fn square_loop_path() -> Vec<(f64, f64)> {
    // three concentric square loops, outermost first, joined radially
    let mut path = Vec::new();
    for half in [0.4, 0.25, 0.1] {
        let (lo, hi) = (0.5 - half, 0.5 + half);
        path.extend([(lo, lo), (hi, lo), (hi, hi), (lo, hi), (lo, lo)]);
    }
    path
}

fn serpentine_path(rows: usize) -> Vec<(f64, f64)> {
    let mut path = Vec::with_capacity(2 * rows);
    for r in 0..rows {
        let y = (r as f64 + 0.5) / rows as f64;
        let (x0, x1) = (0.5 / rows as f64, 1.0 - 0.5 / rows as f64);
        if r % 2 == 0 {
            path.extend([(x0, y), (x1, y)]);
        } else {
            path.extend([(x1, y), (x0, y)]);
        }
    }
    path
}

/// Sampling layout of `n` points in `[0, 1]²` for the given strategy.
///
/// `Grid` perturbs the `⌊√n⌋²` cell centres and draws the remainder uniformly;
/// path strategies spread `n` points along the path by arc length and apply the
/// same perturbation. Everything is clipped to the field of view.
pub fn strategy_points<R: Rng + ?Sized>(
    kind: Strategy,
    n: usize,
    bound: f64,
    perturbation: Perturbation,
    rng: &mut R,
) -> Result<Vec<(f64, f64)>> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one sampling point".into()));
    }
    if !(bound >= 0.0) || !bound.is_finite() {
        return Err(Error::InvalidParameter(format!("perturbation bound must be non-negative, got {bound}")));
    }
    let clip = |p: (f64, f64)| (p.0.clamp(0.0, 1.0), p.1.clamp(0.0, 1.0));
    let perturb = |p: (f64, f64), rng: &mut R| {
        let dx = displacement(bound, perturbation, rng);
        let dy = displacement(bound, perturbation, rng);
        clip((p.0 + dx, p.1 + dy))
    };
    let base = match kind {
        Strategy::Random => {
            return Ok((0..n).map(|_| (rng.gen::<f64>(), rng.gen::<f64>())).collect());
        }
        Strategy::Grid => {
            let m = (n as f64).sqrt().floor() as usize;
            let mut pts = Vec::with_capacity(n);
            for j in 0..m {
                for i in 0..m {
                    let c = ((i as f64 + 0.5) / m as f64, (j as f64 + 0.5) / m as f64);
                    pts.push(perturb(c, rng));
                }
            }
            while pts.len() < n {
                pts.push((rng.gen::<f64>(), rng.gen::<f64>()));
            }
            return Ok(pts);
        }
        Strategy::Spiral => along_path(&spiral_path(), n),
        Strategy::SquareLoop => along_path(&square_loop_path(), n),
        Strategy::Serpentine => {
            let rows = (n as f64).sqrt().ceil() as usize;
            along_path(&serpentine_path(rows.max(1)), n)
        }
    };
    Ok(base.into_iter().map(|p| perturb(p, rng)).collect())
}

/// Reference locations with their true (nominal) normalized values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSet {
    pub coords: Vec<(f64, f64)>,
    pub nominal: Vec<f64>,
    pub measured: Vec<f64>,
}

impl ReferenceSet {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn mean_nominal(&self) -> f64 {
        self.nominal.iter().sum::<f64>() / self.nominal.len() as f64
    }

    pub fn mean_measured(&self) -> f64 {
        self.measured.iter().sum::<f64>() / self.measured.len() as f64
    }
}

/// Picks `count` reference pixels whose true values best match targets spread
/// evenly over the range of `sample_values`. `measured` is left empty.
pub fn choose_references(sample_values: &[f64], map: &FieldMap, count: usize) -> Result<ReferenceSet> {
    if count == 0 {
        return Err(Error::InvalidParameter("reference count must be positive".into()));
    }
    if sample_values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sample values"));
    }
    let lo = sample_values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = sample_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::Degenerate("sample values are constant".into()));
    }
    let mut coords = Vec::with_capacity(count);
    let mut nominal = Vec::with_capacity(count);
    for k in 0..count {
        let target = if count == 1 { 0.5 * (lo + hi) } else { lo + (hi - lo) * k as f64 / (count - 1) as f64 };
        let (idx, _) = map
            .values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |best, (i, &v)| {
                let d = (v - target).abs();
                if d < best.1 {
                    (i, d)
                } else {
                    best
                }
            });
        coords.push(map.pixel_centre(idx % map.width, idx / map.width));
        nominal.push(map.values[idx]);
    }
    Ok(ReferenceSet { coords, nominal, measured: Vec::new() })
}
