//! Synthetic targets, spectral curves and the detector model.
//!
//! Everything is in relative units: the brightest patch of a target has
//! irradiance 1 and spectral curves have unit peak unless scaled.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-linear spectrum sampled at strictly increasing wavelengths (nm).
/// Zero outside its support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct SpectralCurve {
    nm: Vec<f64>,
    values: Vec<f64>,
}

impl TryFrom<Vec<[f64; 2]>> for SpectralCurve {
    type Error = Error;
    fn try_from(v: Vec<[f64; 2]>) -> Result<Self> {
        SpectralCurve::new(v.into_iter().map(|[a, b]| (a, b)).collect())
    }
}

impl From<SpectralCurve> for Vec<[f64; 2]> {
    fn from(c: SpectralCurve) -> Self {
        c.nm.into_iter()
            .zip(c.values)
            .map(|(a, b)| [a, b])
            .collect()
    }
}

impl SpectralCurve {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Invalid(
                "a spectral curve needs at least two samples".into(),
            ));
        }
        for w in samples.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::Invalid(format!(
                    "wavelengths must increase strictly ({} then {})",
                    w[0].0, w[1].0
                )));
            }
        }
        if samples
            .iter()
            .any(|&(l, v)| !l.is_finite() || !v.is_finite() || v < 0.0)
        {
            return Err(Error::Invalid(
                "spectral values must be finite and >= 0".into(),
            ));
        }
        let (nm, values) = samples.into_iter().unzip();
        Ok(SpectralCurve { nm, values })
    }

    /// Constant `value` on `[lo, hi]`.
    pub fn flat(lo: f64, hi: f64, value: f64) -> Result<Self> {
        SpectralCurve::new(vec![(lo, value), (hi, value)])
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nm.iter().copied().zip(self.values.iter().copied())
    }

    pub fn support(&self) -> (f64, f64) {
        (self.nm[0], self.nm[self.nm.len() - 1])
    }

    pub fn value_at(&self, nm: f64) -> f64 {
        let (lo, hi) = self.support();
        if nm < lo || nm > hi {
            return 0.0;
        }
        let i = self.nm.partition_point(|&x| x <= nm);
        if i == 0 {
            return self.values[0];
        }
        if i >= self.nm.len() {
            return self.values[self.nm.len() - 1];
        }
        let (x0, x1) = (self.nm[i - 1], self.nm[i]);
        let t = (nm - x0) / (x1 - x0);
        self.values[i - 1] + t * (self.values[i] - self.values[i - 1])
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn scaled(&self, s: f64) -> SpectralCurve {
        SpectralCurve {
            nm: self.nm.clone(),
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    /// Two-column `nm,value` CSV.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("nm,value\n");
        for (l, v) in self.samples() {
            s.push_str(&format!("{l},{v}\n"));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut samples = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (i == 0 && line.chars().next().is_some_and(|c| c.is_alphabetic()))
            {
                continue;
            }
            let mut parts = line.split(',').map(str::trim);
            let parse = |s: Option<&str>| -> Result<f64> {
                s.and_then(|x| x.parse().ok())
                    .ok_or_else(|| Error::Format(format!("line {}: expected `nm,value`", i + 1)))
            };
            samples.push((parse(parts.next())?, parse(parts.next())?));
        }
        SpectralCurve::new(samples)
    }
}

/// Integral of the pointwise product of up to three curves over their common
/// support. The product is a polynomial of degree <= 3 between consecutive
/// knots of the union grid, so Simpson's rule on each interval is exact.
pub fn integrate_product(curves: &[&SpectralCurve]) -> f64 {
    assert!(
        !curves.is_empty() && curves.len() <= 3,
        "one to three curves"
    );
    let lo = curves
        .iter()
        .map(|c| c.support().0)
        .fold(f64::NEG_INFINITY, f64::max);
    let hi = curves
        .iter()
        .map(|c| c.support().1)
        .fold(f64::INFINITY, f64::min);
    if !(hi > lo) {
        return 0.0;
    }
    let mut knots: Vec<f64> = curves
        .iter()
        .flat_map(|c| c.nm.iter().copied())
        .filter(|&x| x > lo && x < hi)
        .chain([lo, hi])
        .collect();
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let f = |x: f64| curves.iter().map(|c| c.value_at(x)).product::<f64>();
    knots
        .windows(2)
        .map(|w| (w[1] - w[0]) / 6.0 * (f(w[0]) + 4.0 * f(0.5 * (w[0] + w[1])) + f(w[1])))
        .sum()
}

/// Effective signal of `radiance` seen through `responsivity`.
pub fn band_integrate(radiance: &SpectralCurve, responsivity: &SpectralCurve) -> f64 {
    integrate_product(&[radiance, responsivity])
}

/// Gaussian line of unit peak and the given full width at half maximum,
/// sampled over `center +- 3 * fwhm`.
pub fn gaussian_spectrum(center: f64, fwhm: f64) -> Result<SpectralCurve> {
    gaussian_spectrum_truncated(center, fwhm, 3.0)
}

/// Gaussian line cut to zero beyond `center +- extent * fwhm`.
///
/// Knots are spaced `fwhm / 50` and centred on `center`, so the peak and the
/// two half-maximum points are sampled exactly.
pub fn gaussian_spectrum_truncated(center: f64, fwhm: f64, extent: f64) -> Result<SpectralCurve> {
    if !(fwhm > 0.0) || !(extent > 0.0) || !center.is_finite() {
        return Err(Error::Invalid(format!(
            "gaussian needs fwhm > 0 and extent > 0, got {fwhm}, {extent}"
        )));
    }
    let step = fwhm / 50.0;
    let half = (extent * 50.0).round() as i64;
    let c = 4.0 * std::f64::consts::LN_2 / (fwhm * fwhm);
    let samples = (-half..=half)
        .map(|i| {
            let x = i as f64 * step;
            (center + x, (-c * x * x).exp())
        })
        .collect();
    SpectralCurve::new(samples)
}

/// Relative spectral radiance of a blackbody at `kelvin`, unit peak over `[lo, hi]`.
pub fn blackbody(kelvin: f64, lo: f64, hi: f64, step: f64) -> Result<SpectralCurve> {
    const C2: f64 = 1.438_776_877e7; // nm K
    let n = ((hi - lo) / step).round() as usize;
    let planck = |nm: f64| 1.0 / (nm.powi(5) * ((C2 / (nm * kelvin)).exp() - 1.0));
    let raw: Vec<(f64, f64)> = (0..=n)
        .map(|i| lo + i as f64 * step)
        .map(|x| (x, planck(x)))
        .collect();
    let peak = raw.iter().map(|s| s.1).fold(0.0, f64::max);
    SpectralCurve::new(raw.into_iter().map(|(x, v)| (x, v / peak)).collect())
}

/// Dynamic-range convention: `factor * log10(ratio)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum DrConvention {
    /// `20 log10`, irradiance treated as an amplitude-like quantity.
    #[default]
    #[serde(rename = "20log")]
    TwentyLog,
    #[serde(rename = "10log")]
    TenLog,
}

impl DrConvention {
    pub fn factor(self) -> f64 {
        match self {
            DrConvention::TwentyLog => 20.0,
            DrConvention::TenLog => 10.0,
        }
    }

    /// Irradiance ratio (relative to the reference) for a level `db` below it.
    pub fn attenuation(self, db: f64) -> f64 {
        10f64.powf(-db / self.factor())
    }

    pub fn db(self, reference: f64, value: f64) -> f64 {
        self.factor() * (reference / value).log10()
    }
}

/// Set of pixel positions in an image.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub pixels: Vec<(usize, usize)>,
}

impl Region {
    pub fn rect(m0: usize, n0: usize, width: usize, height: usize) -> Self {
        let pixels = (n0..n0 + height)
            .flat_map(|n| (m0..m0 + width).map(move |m| (m, n)))
            .collect();
        Region { pixels }
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SceneData {
    /// One irradiance per raster pixel.
    Irradiance(Vec<f64>),
    /// Per-pixel `(curve index, scale)`; `None` is dark.
    Spectral {
        curves: Vec<SpectralCurve>,
        pixels: Vec<Option<(usize, f64)>>,
    },
    /// One irradiance map per active-illumination source.
    PerSource(Vec<Vec<f64>>),
}

/// Full-raster scene; values are indexed `n * columns + m`.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    columns: usize,
    rows: usize,
    data: SceneData,
}

fn check_map(map: &[f64], len: usize) -> Result<()> {
    if map.len() != len {
        return Err(Error::DimensionMismatch {
            expected: format!("{len} pixels"),
            found: format!("{}", map.len()),
        });
    }
    if map.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Invalid(
            "scene values must be finite and >= 0".into(),
        ));
    }
    Ok(())
}

impl Scene {
    pub fn irradiance(columns: usize, rows: usize, values: Vec<f64>) -> Result<Self> {
        check_map(&values, columns * rows)?;
        Ok(Scene {
            columns,
            rows,
            data: SceneData::Irradiance(values),
        })
    }

    pub fn spectral(
        columns: usize,
        rows: usize,
        curves: Vec<SpectralCurve>,
        pixels: Vec<Option<(usize, f64)>>,
    ) -> Result<Self> {
        if pixels.len() != columns * rows {
            return Err(Error::DimensionMismatch {
                expected: format!("{} pixels", columns * rows),
                found: format!("{}", pixels.len()),
            });
        }
        if pixels
            .iter()
            .flatten()
            .any(|&(i, s)| i >= curves.len() || !s.is_finite() || s < 0.0)
        {
            return Err(Error::Invalid(
                "spectral pixel refers to a missing curve or has a bad scale".into(),
            ));
        }
        Ok(Scene {
            columns,
            rows,
            data: SceneData::Spectral { curves, pixels },
        })
    }

    pub fn per_source(columns: usize, rows: usize, maps: Vec<Vec<f64>>) -> Result<Self> {
        for m in &maps {
            check_map(m, columns * rows)?;
        }
        Ok(Scene {
            columns,
            rows,
            data: SceneData::PerSource(maps),
        })
    }

    pub fn columns(&self) -> usize {
        self.columns
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn data(&self) -> &SceneData {
        &self.data
    }

    /// Reduces the scene to irradiance maps as seen by a detector: one map for
    /// scalar and spectral scenes, one per source for active scenes.
    pub fn effective_maps(&self, responsivity: Option<&SpectralCurve>) -> Result<Vec<Vec<f64>>> {
        match &self.data {
            SceneData::Irradiance(v) => Ok(vec![v.clone()]),
            SceneData::PerSource(maps) => Ok(maps.clone()),
            SceneData::Spectral { curves, pixels } => {
                let resp = responsivity.ok_or_else(|| {
                    Error::Invalid("a spectral scene needs a detector responsivity".into())
                })?;
                let per_curve: Vec<f64> = curves.iter().map(|c| band_integrate(c, resp)).collect();
                Ok(vec![pixels
                    .iter()
                    .map(|p| p.map_or(0.0, |(i, s)| s * per_curve[i]))
                    .collect()])
            }
        }
    }

    /// Scalar irradiance map (fails for spectral and multi-source scenes).
    pub fn values(&self) -> Option<&[f64]> {
        match &self.data {
            SceneData::Irradiance(v) => Some(v),
            _ => None,
        }
    }

    /// `a * self + b * other` for scalar scenes of equal size.
    pub fn combine(&self, a: f64, other: &Scene, b: f64) -> Result<Scene> {
        match (&self.data, &other.data) {
            (SceneData::Irradiance(x), SceneData::Irradiance(y)) if x.len() == y.len() => {
                Scene::irradiance(
                    self.columns,
                    self.rows,
                    x.iter().zip(y).map(|(p, q)| a * p + b * q).collect(),
                )
            }
            _ => Err(Error::DimensionMismatch {
                expected: "two scalar scenes of equal size".into(),
                found: "mismatched scenes".into(),
            }),
        }
    }
}

/// HDR patch target with its measurement regions.
#[derive(Clone, Debug)]
pub struct HdrTarget {
    pub scene: Scene,
    /// One region per level, in the order the levels were given.
    pub patches: Vec<Region>,
    /// Dark pixels between and around the patches.
    pub background: Region,
    pub levels_db: Vec<f64>,
}

/// Lays `levels_db` out row-major on a `layout.0 x layout.1` (rows x columns)
/// grid of cells covering `area = (m0, n0, width, height)`. Each patch fills
/// its cell minus `margin` pixels on every side. A level of `D` dB has
/// irradiance `convention.attenuation(D)`; everything else is 0.
pub fn hdr_patch_target_in(
    columns: usize,
    rows: usize,
    area: (usize, usize, usize, usize),
    levels_db: &[f64],
    layout: (usize, usize),
    margin: usize,
    convention: DrConvention,
) -> Result<HdrTarget> {
    let (m0, n0, width, height) = area;
    let (lrows, lcols) = layout;
    if lrows == 0 || lcols == 0 || width % lcols != 0 || height % lrows != 0 {
        return Err(Error::Layout(format!(
            "{width}x{height} area does not divide into {lrows}x{lcols} cells"
        )));
    }
    if m0 + width > columns || n0 + height > rows {
        return Err(Error::Layout("patch area exceeds the grid".into()));
    }
    if levels_db.len() > lrows * lcols || levels_db.iter().any(|l| !l.is_finite()) {
        return Err(Error::Layout(format!(
            "{} finite levels do not fit {lrows}x{lcols} cells",
            levels_db.len()
        )));
    }
    let (cw, ch) = (width / lcols, height / lrows);
    if 2 * margin >= cw || 2 * margin >= ch {
        return Err(Error::Layout(format!(
            "margin {margin} leaves no patch in a {cw}x{ch} cell"
        )));
    }
    let mut values = vec![0.0; columns * rows];
    let mut in_patch = vec![false; columns * rows];
    let mut patches = Vec::with_capacity(levels_db.len());
    for (i, &db) in levels_db.iter().enumerate() {
        let (r, c) = (i / lcols, i % lcols);
        let region = Region::rect(
            m0 + c * cw + margin,
            n0 + r * ch + margin,
            cw - 2 * margin,
            ch - 2 * margin,
        );
        let level = convention.attenuation(db);
        for &(m, n) in &region.pixels {
            values[n * columns + m] = level;
            in_patch[n * columns + m] = true;
        }
        patches.push(region);
    }
    let background = Region {
        pixels: (0..rows)
            .flat_map(|n| (0..columns).map(move |m| (m, n)))
            .filter(|&(m, n)| !in_patch[n * columns + m])
            .collect(),
    };
    Ok(HdrTarget {
        scene: Scene::irradiance(columns, rows, values)?,
        patches,
        background,
        levels_db: levels_db.to_vec(),
    })
}

/// [`hdr_patch_target_in`] over the whole grid.
pub fn hdr_patch_target(
    columns: usize,
    rows: usize,
    levels_db: &[f64],
    layout: (usize, usize),
    margin: usize,
    convention: DrConvention,
) -> Result<HdrTarget> {
    hdr_patch_target_in(
        columns,
        rows,
        (0, 0, columns, rows),
        levels_db,
        layout,
        margin,
        convention,
    )
}

/// Circular aperture carrying an optical filter.
#[derive(Clone, Debug)]
pub struct Hole {
    pub center: (f64, f64),
    pub radius: f64,
    pub filter: SpectralCurve,
    /// Spot non-uniformity / throughput factor.
    pub gain: f64,
}

impl Hole {
    pub fn contains(&self, (m, n): (usize, usize)) -> bool {
        let dx = m as f64 - self.center.0;
        let dy = n as f64 - self.center.1;
        dx * dx + dy * dy <= self.radius * self.radius
    }
}

/// Active-illumination target: source `p` lights hole pixels with
/// `gain * integral(source_p * filter * responsivity)`; everything else is 0.
pub fn two_hole_target(
    columns: usize,
    rows: usize,
    holes: &[Hole],
    sources: &[SpectralCurve],
    responsivity: Option<&SpectralCurve>,
) -> Result<Scene> {
    let mut maps = vec![vec![0.0; columns * rows]; sources.len()];
    for hole in holes {
        let (cx, cy) = hole.center;
        if cx < 0.0 || cy < 0.0 || cx >= columns as f64 || cy >= rows as f64 {
            return Err(Error::Layout(format!(
                "hole centre ({cx}, {cy}) outside the grid"
            )));
        }
        for (p, src) in sources.iter().enumerate() {
            let level = hole.gain
                * match responsivity {
                    Some(r) => integrate_product(&[src, &hole.filter, r]),
                    None => integrate_product(&[src, &hole.filter]),
                };
            for n in 0..rows {
                for m in 0..columns {
                    if hole.contains((m, n)) {
                        maps[p][n * columns + m] = level;
                    }
                }
            }
        }
    }
    Scene::per_source(columns, rows, maps)
}

/// Fiber-output spot emitting a broadband (350-1800 nm) lamp spectrum with
/// a Gaussian spatial profile of width `sigma` pixels, cut at `radius`.
pub fn dual_band_source(
    columns: usize,
    rows: usize,
    center: (f64, f64),
    radius: f64,
    sigma: f64,
) -> Result<Scene> {
    let lamp = blackbody(3000.0, 350.0, 1800.0, 5.0)?;
    let pixels = (0..rows)
        .flat_map(|n| (0..columns).map(move |m| (m, n)))
        .map(|(m, n)| {
            let dx = m as f64 - center.0;
            let dy = n as f64 - center.1;
            let r2 = dx * dx + dy * dy;
            (r2 <= radius * radius).then(|| (0, (-r2 / (2.0 * sigma * sigma)).exp()))
        })
        .collect();
    Scene::spectral(columns, rows, vec![lamp], pixels)
}

/// Silicon photodiode responsivity (relative), 320-1000 nm band.
pub fn silicon_responsivity() -> SpectralCurve {
    SpectralCurve::new(vec![
        (320.0, 0.05),
        (400.0, 0.2),
        (600.0, 0.6),
        (900.0, 1.0),
        (960.0, 0.8),
        (1000.0, 0.3),
    ])
    .expect("static curve")
}

/// Germanium photodiode responsivity (relative), 800-1800 nm band.
pub fn germanium_responsivity() -> SpectralCurve {
    SpectralCurve::new(vec![
        (800.0, 0.2),
        (1000.0, 0.55),
        (1300.0, 0.85),
        (1550.0, 1.0),
        (1700.0, 0.7),
        (1800.0, 0.1),
    ])
    .expect("static curve")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PinkNoise {
    /// One-sided PSD at 1 Hz is `amplitude^2` (units^2 / Hz).
    pub amplitude: f64,
    /// PSD falls as `1 / f^exponent`.
    pub exponent: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdcModel {
    pub bits: u32,
    pub fullscale: f64,
}

/// Photodetector chain: responsivity, gain, noise and digitizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorModel {
    /// `None` means a flat (wavelength-independent) response of 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub responsivity: Option<SpectralCurve>,
    #[serde(default = "unit_gain")]
    pub gain: f64,
    /// Additive white noise, standard deviation per sample.
    #[serde(default)]
    pub noise_sigma: f64,
    /// Shot-noise variance per unit of instantaneous signal.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shot_noise: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pink_noise: Option<PinkNoise>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adc: Option<AdcModel>,
}

fn unit_gain() -> f64 {
    1.0
}

impl Default for DetectorModel {
    fn default() -> Self {
        DetectorModel {
            responsivity: None,
            gain: 1.0,
            noise_sigma: 0.0,
            shot_noise: None,
            pink_noise: None,
            adc: None,
        }
    }
}

impl DetectorModel {
    pub fn noiseless() -> Self {
        Self::default()
    }

    pub fn with_responsivity(mut self, r: SpectralCurve) -> Self {
        self.responsivity = Some(r);
        self
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn check(&self) -> Result<()> {
        if !(self.gain > 0.0) {
            return Err(Error::Invalid(format!(
                "detector gain must be > 0, got {}",
                self.gain
            )));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Invalid("noise sigma must be >= 0".into()));
        }
        if let Some(s) = self.shot_noise {
            if !(s >= 0.0) {
                return Err(Error::Invalid("shot-noise scale must be >= 0".into()));
            }
        }
        if let Some(p) = self.pink_noise {
            if !(p.exponent > 0.0 && p.exponent <= 2.0) || !(p.amplitude >= 0.0) {
                return Err(Error::Invalid(
                    "pink noise needs 0 < exponent <= 2 and amplitude >= 0".into(),
                ));
            }
        }
        if let Some(a) = self.adc {
            if !(a.fullscale > 0.0) || a.bits == 0 || a.bits > 32 {
                return Err(Error::Invalid(
                    "ADC needs fullscale > 0 and 1..=32 bits".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        self.noise_sigma == 0.0
            && self.shot_noise.is_none_or(|s| s == 0.0)
            && self.pink_noise.is_none()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent fine-grid trapezoid quadrature of the product.
    fn trapezoid_oracle(a: &SpectralCurve, b: &SpectralCurve, step: f64) -> f64 {
        let lo = a.support().0.max(b.support().0);
        let hi = a.support().1.min(b.support().1);
        if hi <= lo {
            return 0.0;
        }
        let n = ((hi - lo) / step).ceil() as usize;
        let h = (hi - lo) / n as f64;
        let f = |x: f64| a.value_at(x) * b.value_at(x);
        let inner: f64 = (1..n).map(|i| f(lo + i as f64 * h)).sum();
        h * (inner + 0.5 * (f(lo) + f(hi)))
    }

    #[test]
    fn disjoint_supports_integrate_to_zero() {
        let a = SpectralCurve::flat(350.0, 1000.0, 1.0).unwrap();
        let b = SpectralCurve::flat(1100.0, 1800.0, 1.0).unwrap();
        assert_eq!(band_integrate(&a, &b), 0.0);
    }

    #[test]
    fn rectangle_area() {
        let a = SpectralCurve::flat(500.0, 600.0, 1.0).unwrap();
        assert!((band_integrate(&a, &a) - 100.0).abs() < 1e-9);
    }

    #[test]
    fn led_through_filter_matches_fine_quadrature() {
        let led = gaussian_spectrum(530.0, 35.0).unwrap();
        let filter = gaussian_spectrum(550.0, 40.0).unwrap();
        let got = band_integrate(&led, &filter);
        // Knot spacing is 0.7 nm; sample 10x finer than that and beyond.
        let oracle = trapezoid_oracle(&led, &filter, 0.0035);
        assert!(((got - oracle) / oracle).abs() < 1e-6, "{got} vs {oracle}");
    }

    #[test]
    fn bilinear_and_symmetric() {
        let a = gaussian_spectrum(455.0, 18.0).unwrap();
        let b = gaussian_spectrum(450.0, 40.0).unwrap();
        let ab = band_integrate(&a, &b);
        assert!((band_integrate(&b, &a) - ab).abs() < 1e-12 * ab);
        assert!((band_integrate(&a.scaled(3.5), &b) - 3.5 * ab).abs() < 1e-12 * ab);
        assert!((band_integrate(&a, &b.scaled(0.25)) - 0.25 * ab).abs() < 1e-12 * ab);
    }

    #[test]
    fn gaussian_shape() {
        let g = gaussian_spectrum(455.0, 18.0).unwrap();
        assert!((g.value_at(446.0) - 0.5).abs() < 1e-3);
        assert!((g.value_at(464.0) - 0.5).abs() < 1e-3);
        let r = gaussian_spectrum(625.0, 17.0).unwrap();
        assert_eq!(r.value_at(625.0), 1.0);
        assert_eq!(r.peak(), 1.0);
        assert!(gaussian_spectrum(500.0, 0.0).is_err());
        let t = gaussian_spectrum_truncated(500.0, 10.0, 1.0).unwrap();
        assert_eq!(t.support(), (490.0, 510.0));
        assert_eq!(t.value_at(511.0), 0.0);
    }

    #[test]
    fn hdr_levels() {
        let t = hdr_patch_target(
            21,
            12,
            &[0.0, 20.0, 30.0, 48.0, 58.0, 64.0],
            (2, 3),
            1,
            DrConvention::TwentyLog,
        )
        .unwrap();
        let v = t.scene.values().unwrap();
        let level = |i: usize| {
            let (m, n) = t.patches[i].pixels[0];
            v[n * 21 + m]
        };
        assert_eq!(level(0), 1.0);
        assert!((level(5) - 10f64.powf(-3.2)).abs() < 1e-18);
        for &(m, n) in &t.background.pixels {
            assert_eq!(v[n * 21 + m], 0.0);
        }
        assert_eq!(
            t.patches.iter().map(Region::len).sum::<usize>() + t.background.len(),
            252
        );

        let unit = hdr_patch_target(1, 1, &[0.0], (1, 1), 0, DrConvention::TwentyLog).unwrap();
        assert_eq!(unit.scene.values().unwrap(), &[1.0]);
        assert!(matches!(
            hdr_patch_target(20, 12, &[0.0], (2, 3), 0, DrConvention::TwentyLog),
            Err(Error::Layout(_))
        ));
    }

    #[test]
    fn dual_band_spot_visible_in_both_bands() {
        let scene = dual_band_source(16, 15, (7.5, 7.0), 5.0, 3.0).unwrap();
        let si = scene
            .effective_maps(Some(&SpectralCurve::flat(320.0, 1000.0, 1.0).unwrap()))
            .unwrap();
        let ge = scene
            .effective_maps(Some(&SpectralCurve::flat(800.0, 1800.0, 1.0).unwrap()))
            .unwrap();
        let c = 7 * 16 + 7;
        assert!(si[0][c] > 0.0 && ge[0][c] > 0.0);
        assert_eq!(si[0][0], 0.0);
        assert!(scene.effective_maps(None).is_err());
    }

    #[test]
    fn hole_spectral_response() {
        let led_g = gaussian_spectrum(530.0, 35.0).unwrap();
        let led_b = gaussian_spectrum(455.0, 18.0).unwrap();
        let green = Hole {
            center: (10.0, 5.0),
            radius: 2.0,
            filter: gaussian_spectrum(550.0, 40.0).unwrap(),
            gain: 1.0,
        };
        let ir = Hole {
            center: (3.0, 5.0),
            radius: 2.0,
            filter: SpectralCurve::flat(1500.0, 1600.0, 1.0).unwrap(),
            gain: 1.0,
        };
        let scene = two_hole_target(16, 10, &[green, ir], &[led_g, led_b], None).unwrap();
        let maps = scene.effective_maps(None).unwrap();
        assert!(maps[0][5 * 16 + 10] > 0.0);
        assert_eq!(maps[0][5 * 16 + 3], 0.0);
        assert_eq!(maps[1][5 * 16 + 3], 0.0);
        assert_eq!(maps[0][0], 0.0);
    }

    #[test]
    fn curve_validation_and_csv() {
        assert!(SpectralCurve::new(vec![(500.0, 1.0), (500.0, 2.0)]).is_err());
        assert!(SpectralCurve::new(vec![(500.0, -1.0), (510.0, 2.0)]).is_err());
        let c = SpectralCurve::new(vec![(400.0, 0.0), (500.0, 1.0), (600.0, 0.5)]).unwrap();
        assert_eq!(SpectralCurve::from_csv(&c.to_csv()).unwrap(), c);
        assert_eq!(c.value_at(450.0), 0.5);
        assert!(SpectralCurve::from_csv("nm,value\n400,x\n").is_err());
    }

    #[test]
    fn detector_checks() {
        assert!(DetectorModel::default().check().is_ok());
        let mut d = DetectorModel::default();
        d.gain = 0.0;
        assert!(d.check().is_err());
        let mut d = DetectorModel::default();
        d.pink_noise = Some(PinkNoise {
            amplitude: 1.0,
            exponent: 2.5,
        });
        assert!(d.check().is_err());
    }
}
