//! Image quality, crosstalk, speed and security figures.

use serde::{Deserialize, Serialize};

use crate::decode::{decode_frame, per_bit_spectra, RecoveredImage};
use crate::error::{Error, Result};
use crate::plan::{build_plan_unchecked, CodingPlan, Mode};
use crate::scene::{DetectorModel, DrConvention, Region, Scene};
use crate::sensor::{synthesize, PdSide, SampleStream};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1); 0 for fewer than two values.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Pearson correlation; 0 when either input is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

fn region_values(values: &[f64], columns: usize, rows: usize, region: &Region) -> Result<Vec<f64>> {
    if region.is_empty()
        || region
            .pixels
            .iter()
            .any(|&(m, n)| m >= columns || n >= rows)
    {
        return Err(Error::EmptyRegion);
    }
    Ok(region
        .pixels
        .iter()
        .map(|&(m, n)| values[n * columns + m])
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchStat {
    pub mean: f64,
    /// Spread of the values inside the patch.
    pub std: f64,
    pub dr_db: f64,
    /// Patch mean over the background standard deviation.
    pub snr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchReport {
    pub convention: DrConvention,
    pub background_mean: f64,
    pub background_std: f64,
    pub patches: Vec<PatchStat>,
}

impl PatchReport {
    pub fn levels_db(&self) -> Vec<f64> {
        self.patches.iter().map(|p| p.dr_db).collect()
    }
}

/// Patch means, dynamic range relative to the first region and SNR against
/// the background region's spread. Use raw (unclamped) values for unbiased
/// statistics.
pub fn patch_dr(
    values: &[f64],
    columns: usize,
    rows: usize,
    regions: &[Region],
    background: &Region,
    convention: DrConvention,
) -> Result<PatchReport> {
    if values.len() != columns * rows {
        return Err(Error::DimensionMismatch {
            expected: format!("{columns}x{rows} image"),
            found: format!("{} values", values.len()),
        });
    }
    let bg = region_values(values, columns, rows, background)?;
    let background_std = std_dev(&bg);
    let mut patches = Vec::with_capacity(regions.len());
    let mut reference = None;
    for region in regions {
        let v = region_values(values, columns, rows, region)?;
        let m = mean(&v);
        let r = *reference.get_or_insert(m);
        if !(r > 0.0) {
            return Err(Error::Invalid("reference patch mean must be > 0".into()));
        }
        patches.push(PatchStat {
            mean: m,
            std: std_dev(&v),
            dr_db: convention.db(r, m),
            snr: if background_std > 0.0 {
                m / background_std
            } else {
                f64::INFINITY
            },
        });
    }
    Ok(PatchReport {
        convention,
        background_mean: mean(&bg),
        background_std,
        patches,
    })
}

/// Energy (over all bits) read at every carrier relative to the probe carrier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrosstalkReport {
    pub probe: usize,
    /// `10 log10(E_p / E_probe)` per carrier; 0 for the probe itself and
    /// negative infinity for exactly zero leakage.
    pub leakage_db: Vec<f64>,
}

impl CrosstalkReport {
    /// Worst leakage into any other carrier.
    pub fn worst_db(&self) -> f64 {
        self.leakage_db
            .iter()
            .enumerate()
            .filter(|&(p, _)| p != self.probe)
            .map(|(_, &d)| d)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Lights one pixel on `probe` (no hopping) and reads every carrier bin.
pub fn crosstalk(plan: &CodingPlan, probe: usize) -> Result<CrosstalkReport> {
    if probe >= plan.channels() {
        return Err(Error::Invalid(format!(
            "probe channel {probe} out of range"
        )));
    }
    let mut params = plan.params().clone();
    params.hopping = false;
    let plan = build_plan_unchecked(params)?;
    let grid = plan.grid();
    let cells = grid.raster_len();
    let (pixel, scene) = if plan.mode() == Mode::ActiveOverlapped {
        let pixel = 0;
        let mut maps = vec![vec![0.0; cells]; plan.channels()];
        maps[probe][grid.raster_index(grid.active()[pixel])] = 1.0;
        (pixel, Scene::per_source(grid.columns(), grid.rows(), maps)?)
    } else {
        let set = plan.set_members(0);
        let pixel = *set
            .get(probe)
            .ok_or_else(|| Error::Invalid("probe channel unused by the first set".into()))?;
        let mut v = vec![0.0; cells];
        v[grid.raster_index(grid.active()[pixel])] = 1.0;
        (pixel, Scene::irradiance(grid.columns(), grid.rows(), v)?)
    };
    let stream = synthesize(&plan, &scene, &DetectorModel::noiseless(), PdSide::Pd1)?;
    let spectra = per_bit_spectra(&stream, &plan)?;
    let mut energy = vec![0.0; plan.channels()];
    for w in 0..spectra.bits {
        if plan.code_bit(pixel, w) == 1 {
            for (p, e) in energy.iter_mut().enumerate() {
                *e += spectra.scaled(w, p).powi(2);
            }
        }
    }
    let leakage_db = energy
        .iter()
        .map(|e| 10.0 * (e / energy[probe]).log10())
        .collect();
    Ok(CrosstalkReport { probe, leakage_db })
}

/// Pearson correlation between `truth` (raster values) and the raw decode of
/// `stream` under the same plan keyed with `wrong_seed`.
pub fn wrong_key_correlation(
    stream: &SampleStream,
    true_plan: &CodingPlan,
    wrong_seed: u64,
    truth: &[f64],
) -> Result<f64> {
    let plan = true_plan.with_key_seed(wrong_seed)?;
    let img = decode_frame(stream, &plan)?.remove(0);
    Ok(image_correlation(&img, truth))
}

/// Correlation of the raw decoded values with `truth` over active pixels.
pub fn image_correlation(img: &RecoveredImage, truth: &[f64]) -> f64 {
    let (a, b): (Vec<f64>, Vec<f64>) = img
        .raw
        .iter()
        .zip(truth)
        .zip(&img.active)
        .filter(|(_, &on)| on)
        .map(|((r, t), _)| (*r, *t))
        .unzip();
    pearson(&a, &b)
}

/// How many times faster plan `a` completes a frame than plan `b`.
pub fn speedup(a: &CodingPlan, b: &CodingPlan) -> f64 {
    b.frame_time() / a.frame_time()
}

/// Root-mean-square difference of the two images after each is divided by
/// its own maximum.
pub fn rmse(image: &[f64], scene: &[f64]) -> f64 {
    let norm = |v: &[f64]| {
        let m = v.iter().copied().fold(0.0, f64::max);
        v.iter()
            .map(|x| if m > 0.0 { x / m } else { 0.0 })
            .collect::<Vec<_>>()
    };
    let (a, b) = (norm(image), norm(scene));
    (a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Largest relative deviation between two normalized images, measured
/// against the larger of the two magnitudes (absolute below `floor`).
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Per-pixel SNR (mean over trials divided by trial standard deviation).
pub fn trial_snr(trials: &[Vec<f64>], pixel: usize) -> f64 {
    let v: Vec<f64> = trials.iter().map(|t| t[pixel]).collect();
    mean(&v) / std_dev(&v)
}
