//! Desk-scale presets of the three camera experiments, the noise calibration
//! used by the HDR preset, and the Monte-Carlo studies behind the multiplex
//! and security figures.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::capture::{capture_dual, capture_spectra};
use crate::config::{Band, BuiltScene, ExperimentConfig, HoleSpec, SceneSpec};
use crate::decode::{decode_spectra, RecoveredImage};
use crate::error::{Error, Result};
use crate::metrics::{self, patch_dr, PatchReport};
use crate::plan::{build_plan, CodingPlan, Mode, PixelGrid, PlanParams, Security};
use crate::scene::{
    germanium_responsivity, integrate_product, silicon_responsivity, DetectorModel, Scene,
};
use crate::sensor::PdSide;

pub const PRESETS: [&str; 6] = [
    "exp1-hdr",
    "exp1-fmcdma",
    "exp2-dualband",
    "exp3-active",
    "exp3-active-a",
    "exp3-active-b",
];

/// Patch levels of the HDR target, brightest first.
pub const EXP1_LEVELS_DB: [f64; 6] = [0.0, 20.0, 30.0, 48.0, 58.0, 64.0];

/// White-noise sigma from [`calibrate_exp1`] at desk scale: puts the
/// FM-CDMA preset's 48 dB patch at SNR 3.
pub const EXP1_NOISE_SIGMA: f64 = 0.246_93;

pub const CALIBRATION_TARGET_SNR: f64 = 3.0;
/// Patch index (48 dB) the calibration targets.
pub const CALIBRATION_PATCH: usize = 3;

const PRESET_KEY: u64 = 0x00C0_FFEE;
const NOISE_SEED: u64 = 20_240_601;

/// Carrier bank shared by the passive presets: 128, 256, 512, 1024 Hz sampled at 65536 sps.
const PASSIVE_F1: f64 = 128.0;
const PASSIVE_FS: f64 = 65_536.0;

// Sources on f1..f3 and filters used by the active preset.
fn led_bands() -> Vec<Band> {
    vec![
        Band::new(530.0, 35.0),
        Band::new(625.0, 17.0),
        Band::new(455.0, 18.0),
    ]
}

fn blue_filter() -> Band {
    Band::new(450.0, 40.0)
}

fn green_filter() -> Band {
    Band::new(550.0, 40.0)
}

fn red_filter() -> Band {
    Band::new(620.0, 10.0)
}

fn exp1_params(fm: bool, full_scale: bool) -> PlanParams {
    let (grid, bit_rate) = if full_scale {
        (PixelGrid::raster(44, 29), 1.0)
    } else {
        (PixelGrid::raster(21, 12), 32.0)
    };
    let grid = grid.with_pixel_size(8);
    let params = if fm {
        PlanParams::new(
            grid,
            Mode::FmCdma,
            1,
            8.0 * PASSIVE_F1,
            bit_rate,
            PASSIVE_FS,
        )
    } else {
        PlanParams::new(
            grid,
            Mode::PassiveFdmaCdma,
            4,
            PASSIVE_F1,
            bit_rate,
            PASSIVE_FS,
        )
    };
    params.with_key(PRESET_KEY, true)
}

/// Sigma giving the same FM-CDMA per-pixel SNR at full scale (SNR scales as
/// `sqrt(W F) / sigma`).
fn exp1_sigma(full_scale: bool) -> f64 {
    if full_scale {
        EXP1_NOISE_SIGMA * ((1280.0_f64 * 65_536.0) / (256.0 * 2048.0)).sqrt()
    } else {
        EXP1_NOISE_SIGMA
    }
}

fn exp1_config(fm: bool, full_scale: bool, sigma: f64) -> ExperimentConfig {
    let scene = if full_scale {
        SceneSpec::HdrPatches {
            levels_db: EXP1_LEVELS_DB.to_vec(),
            layout: [2, 3],
            margin: 2,
            area: Some([1, 0, 42, 28]),
        }
    } else {
        SceneSpec::HdrPatches {
            levels_db: EXP1_LEVELS_DB.to_vec(),
            layout: [2, 3],
            margin: 1,
            area: None,
        }
    };
    ExperimentConfig {
        name: if fm { "exp1-fmcdma" } else { "exp1-hdr" }.into(),
        plan: exp1_params(fm, full_scale),
        detector: DetectorModel::noiseless().with_noise(sigma),
        pd2_detector: None,
        scene,
        noise_seed: NOISE_SEED,
        convention: Default::default(),
        output_dir: None,
    }
}

fn exp2_config(full_scale: bool) -> ExperimentConfig {
    let (grid, bit_rate, scene) = if full_scale {
        (
            PixelGrid::raster(65, 63),
            4.0,
            SceneSpec::DualBand {
                center: [32.0, 31.0],
                radius: 20.0,
                sigma: 12.0,
            },
        )
    } else {
        (
            PixelGrid::raster(16, 15),
            32.0,
            SceneSpec::DualBand {
                center: [7.5, 7.0],
                radius: 5.5,
                sigma: 3.5,
            },
        )
    };
    let mut plan = PlanParams::new(
        grid,
        Mode::PassiveFdmaCdma,
        4,
        PASSIVE_F1,
        bit_rate,
        PASSIVE_FS,
    )
    .with_key(PRESET_KEY, true);
    if full_scale {
        plan.min_code_length = Some(1280);
    }
    ExperimentConfig {
        name: "exp2-dualband".into(),
        plan,
        detector: DetectorModel::noiseless().with_responsivity(silicon_responsivity()),
        pd2_detector: Some(DetectorModel::noiseless().with_responsivity(germanium_responsivity())),
        scene,
        noise_seed: NOISE_SEED,
        convention: Default::default(),
        output_dir: None,
    }
}

fn exp3_config(variant_b: bool, full_scale: bool) -> ExperimentConfig {
    let fs = if full_scale { 2.0e6 } else { 250.0e3 };
    let plan = PlanParams::new(
        PixelGrid::raster(32, 15).with_pixel_size(20),
        Mode::ActiveOverlapped,
        3,
        25e3,
        31.25,
        fs,
    )
    .with_frequencies(vec![25e3, 29e3, 35e3])
    .with_key(PRESET_KEY, false);
    let (left, right) = if variant_b {
        (green_filter(), blue_filter())
    } else {
        (red_filter(), green_filter())
    };
    let holes = vec![
        HoleSpec {
            center: [8.0, 7.0],
            radius: 4.0,
            filter: left,
            gain: 1.0,
        },
        HoleSpec {
            center: [23.0, 7.0],
            radius: 4.0,
            filter: right,
            gain: 0.85,
        },
    ];
    ExperimentConfig {
        name: if variant_b {
            "exp3-active-b"
        } else {
            "exp3-active-a"
        }
        .into(),
        plan,
        detector: DetectorModel::noiseless().with_responsivity(silicon_responsivity()),
        pd2_detector: None,
        scene: SceneSpec::TwoHole {
            holes,
            sources: led_bands(),
        },
        noise_seed: NOISE_SEED,
        convention: Default::default(),
        output_dir: None,
    }
}

/// Configuration of a named preset.
pub fn preset(name: &str, full_scale: bool) -> Result<ExperimentConfig> {
    Ok(match name {
        "exp1-hdr" => exp1_config(false, full_scale, exp1_sigma(full_scale)),
        "exp1-fmcdma" => exp1_config(true, full_scale, exp1_sigma(full_scale)),
        "exp2-dualband" => exp2_config(full_scale),
        "exp3-active" | "exp3-active-a" => exp3_config(false, full_scale),
        "exp3-active-b" => exp3_config(true, full_scale),
        other => {
            return Err(Error::Invalid(format!(
                "unknown preset {other:?}; known: {}",
                PRESETS.join(", ")
            )))
        }
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct AcceptanceCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl AcceptanceCheck {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        AcceptanceCheck {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// Outcome of running one configuration end to end.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub config: ExperimentConfig,
    pub plan: CodingPlan,
    pub scene: BuiltScene,
    /// PD1 images (one, or `P` in active mode).
    pub pd1: Vec<RecoveredImage>,
    pub pd2: Option<Vec<RecoveredImage>>,
    pub patch_report: Option<PatchReport>,
    pub checks: Vec<AcceptanceCheck>,
}

impl RunResult {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Captures and decodes one frame for `config`, then evaluates the preset's
/// acceptance checks (none for custom names).
pub fn run(config: &ExperimentConfig, base_dir: Option<&Path>) -> Result<RunResult> {
    let plan = build_plan(config.plan.clone())?;
    let scene = config.build_scene(base_dir)?;
    let (pd1, pd2) = match &config.pd2_detector {
        Some(d2) => {
            let (s1, s2) =
                capture_dual(&plan, &scene.scene, &config.detector, d2, config.noise_seed)?;
            (
                decode_spectra(&s1, &plan, PdSide::Pd1)?,
                Some(decode_spectra(&s2, &plan, PdSide::Pd2)?),
            )
        }
        None => {
            let s1 = capture_spectra(
                &plan,
                &scene.scene,
                &config.detector,
                PdSide::Pd1,
                config.noise_seed,
            )?;
            (decode_spectra(&s1, &plan, PdSide::Pd1)?, None)
        }
    };
    let patch_report = match &scene.patches {
        Some((patches, background)) => {
            let img = &pd1[0];
            Some(patch_dr(
                &img.raw,
                img.columns,
                img.rows,
                patches,
                background,
                config.convention,
            )?)
        }
        None => None,
    };
    let mut result = RunResult {
        config: config.clone(),
        plan,
        scene,
        pd1,
        pd2,
        patch_report,
        checks: Vec::new(),
    };
    result.checks = preset_checks(&result);
    Ok(result)
}

fn preset_checks(r: &RunResult) -> Vec<AcceptanceCheck> {
    match r.config.name.as_str() {
        "exp1-hdr" => hdr_checks(r, false),
        "exp1-fmcdma" => hdr_checks(r, true),
        "exp2-dualband" => dual_band_checks(r),
        "exp3-active-a" | "exp3-active-b" => active_checks(r),
        _ => Vec::new(),
    }
}

fn hdr_checks(r: &RunResult, fm: bool) -> Vec<AcceptanceCheck> {
    let Some(report) = &r.patch_report else {
        return Vec::new();
    };
    let levels = r.scene.levels_db.clone().unwrap_or_default();
    let mut out = Vec::new();
    if fm {
        for (i, (p, l)) in report.patches.iter().zip(&levels).enumerate() {
            if *l >= 58.0 {
                out.push(AcceptanceCheck::new(
                    format!("patch {i} ({l} dB) not recovered"),
                    p.snr < 1.0,
                    format!("SNR {:.3}", p.snr),
                ));
            }
        }
    } else {
        for (i, (p, l)) in report.patches.iter().zip(&levels).enumerate() {
            out.push(AcceptanceCheck::new(
                format!("patch {i} ({l} dB) within 1 dB"),
                (p.dr_db - l).abs() <= 1.0,
                format!("measured {:.2} dB, SNR {:.3}", p.dr_db, p.snr),
            ));
        }
        if let Some(last) = report.patches.last() {
            out.push(AcceptanceCheck::new(
                "dimmest patch SNR >= 1",
                last.snr >= 1.0,
                format!("SNR {:.3}", last.snr),
            ));
        }
    }
    out
}

fn dual_band_checks(r: &RunResult) -> Vec<AcceptanceCheck> {
    let Some(pd2) = &r.pd2 else { return Vec::new() };
    let mut out = Vec::new();
    for (label, img, det) in [
        ("PD1 band", &r.pd1[0], &r.config.detector),
        (
            "PD2 band",
            &pd2[0],
            r.config.pd2_detector.as_ref().unwrap_or(&r.config.detector),
        ),
    ] {
        let truth = r
            .scene
            .scene
            .effective_maps(det.responsivity.as_ref())
            .map(|m| m[0].clone())
            .unwrap_or_default();
        let rho = metrics::image_correlation(img, &truth);
        out.push(AcceptanceCheck::new(
            format!("{label} spot recovered"),
            img.peak() > 0.0 && rho > 0.99,
            format!(
                "peak {:.4e}, correlation with band-integrated scene {rho:.6}",
                img.peak()
            ),
        ));
    }
    out
}

/// Overlap integrals `source_p x filter` for every hole of a two-hole config.
pub fn hole_overlaps(config: &ExperimentConfig) -> Result<Vec<Vec<f64>>> {
    let SceneSpec::TwoHole { holes, sources } = &config.scene else {
        return Err(Error::Invalid("not a two-hole scene".into()));
    };
    holes
        .iter()
        .map(|h| {
            let f = h.filter.curve()?;
            sources
                .iter()
                .map(|s| Ok(integrate_product(&[&s.curve()?, &f])))
                .collect()
        })
        .collect()
}

/// Presence threshold relative to the brightest pixel of the image set.
pub const PRESENCE_THRESHOLD: f64 = 1e-6;

fn active_checks(r: &RunResult) -> Vec<AcceptanceCheck> {
    let (Ok(overlaps), SceneSpec::TwoHole { holes, .. }) =
        (hole_overlaps(&r.config), &r.config.scene)
    else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let reference = r.pd1.iter().map(RecoveredImage::peak).fold(0.0, f64::max);
    for (p, img) in r.pd1.iter().enumerate() {
        for (h, hole) in holes.iter().enumerate() {
            let c = (
                hole.center[0].round() as usize,
                hole.center[1].round() as usize,
            );
            let level = img.at(c.0, c.1) / reference;
            let expect = overlaps[h][p] > 0.0;
            out.push(AcceptanceCheck::new(
                format!(
                    "image {} hole {} {}",
                    p + 1,
                    h + 1,
                    if expect { "present" } else { "absent" }
                ),
                (level > PRESENCE_THRESHOLD) == expect,
                format!(
                    "normalized level {level:.3e}, overlap {:.3e}",
                    overlaps[h][p]
                ),
            ));
        }
        let empty = overlaps.iter().all(|o| o[p] == 0.0);
        if empty {
            let m = img.peak() / reference;
            out.push(AcceptanceCheck::new(
                format!("image {} empty", p + 1),
                m < PRESENCE_THRESHOLD,
                format!("max normalized level {m:.3e}"),
            ));
        }
    }
    out
}

/// Result of the exp1 noise calibration sweep.
#[derive(Clone, Debug, Serialize)]
pub struct Calibration {
    pub sigma: f64,
    pub snr: f64,
    /// `(sigma, snr)` pairs visited, in order.
    pub sweep: Vec<(f64, f64)>,
}

/// SNR of the calibration patch in the FM-CDMA preset at `sigma`.
pub fn exp1_fm_snr(sigma: f64, full_scale: bool) -> Result<f64> {
    let r = run(&exp1_config(true, full_scale, sigma), None)?;
    let report = r
        .patch_report
        .ok_or_else(|| Error::Invalid("no patch report".into()))?;
    Ok(report.patches[CALIBRATION_PATCH].snr)
}

/// Sweeps sigma over decades, then bisects (geometrically) until the FM-CDMA
/// preset's 48 dB patch sits at `target` SNR within `tol`.
pub fn calibrate_exp1(target: f64, tol: f64, full_scale: bool) -> Result<Calibration> {
    let mut sweep = Vec::new();
    let mut eval = |s: f64| -> Result<f64> {
        let v = exp1_fm_snr(s, full_scale)?;
        sweep.push((s, v));
        Ok(v)
    };
    let mut lo = 1e-4;
    let mut snr_lo = eval(lo)?;
    let mut hi = lo;
    loop {
        hi *= 10f64.sqrt();
        let v = eval(hi)?;
        if v < target {
            break;
        }
        lo = hi;
        snr_lo = v;
        if hi > 1e6 {
            return Err(Error::Invalid(
                "calibration sweep did not bracket the target".into(),
            ));
        }
    }
    if snr_lo < target {
        return Err(Error::Invalid(
            "calibration sweep started below the target".into(),
        ));
    }
    let (mut sigma, mut snr) = (hi, 0.0);
    for _ in 0..60 {
        sigma = (lo * hi).sqrt();
        snr = eval(sigma)?;
        if (snr - target).abs() <= tol {
            break;
        }
        if snr > target {
            lo = sigma;
        } else {
            hi = sigma;
        }
    }
    Ok(Calibration { sigma, snr, sweep })
}

/// Mean per-pixel SNR of FDMA-CDMA and FM-TDMA on the same grid and frame
/// time under white detector noise.
#[derive(Clone, Debug, Serialize)]
pub struct MultiplexStudy {
    pub pixels: usize,
    pub trials: usize,
    pub sigma: f64,
    pub snr_cdma: f64,
    pub snr_tdma: f64,
    pub ratio: f64,
    /// `sqrt(Q/2)`.
    pub expected: f64,
}

/// Plans used by [`multiplex_study`]: 8x8 pixels, `P = 2`, `W = 64` bits
/// against 64 single-pixel slots of the same duration.
pub fn multiplex_plans() -> Result<(CodingPlan, CodingPlan)> {
    let grid = PixelGrid::raster(8, 8);
    let mut cdma = PlanParams::new(grid.clone(), Mode::PassiveFdmaCdma, 2, 4.0, 1.0, 256.0);
    cdma.min_code_length = Some(64);
    let tdma = PlanParams::new(grid, Mode::FmTdma, 1, 4.0, 1.0, 256.0);
    let (a, b) = (build_plan(cdma)?, build_plan(tdma)?);
    debug_assert_eq!(a.frame_time(), b.frame_time());
    Ok((a, b))
}

pub fn multiplex_scene() -> Result<Scene> {
    Scene::irradiance(
        8,
        8,
        (0..64)
            .map(|i| 0.5 + 0.5 * ((i * 37) % 64) as f64 / 63.0)
            .collect(),
    )
}

pub fn multiplex_study(trials: usize, sigma: f64) -> Result<MultiplexStudy> {
    let (cdma, tdma) = multiplex_plans()?;
    let scene = multiplex_scene()?;
    let det = DetectorModel::noiseless().with_noise(sigma);
    let snr = |plan: &CodingPlan| -> Result<f64> {
        let runs = (0..trials as u64)
            .into_par_iter()
            .map(|t| {
                let s = capture_spectra(plan, &scene, &det, PdSide::Pd1, 1000 + t)?;
                Ok(decode_spectra(&s, plan, PdSide::Pd1)?.remove(0).raw)
            })
            .collect::<Result<Vec<_>>>()?;
        let q = plan.pixels();
        Ok((0..q).map(|i| metrics::trial_snr(&runs, i)).sum::<f64>() / q as f64)
    };
    let (snr_cdma, snr_tdma) = (snr(&cdma)?, snr(&tdma)?);
    let q = cdma.pixels();
    Ok(MultiplexStudy {
        pixels: q,
        trials,
        sigma,
        snr_cdma,
        snr_tdma,
        ratio: snr_cdma / snr_tdma,
        expected: (q as f64 / 2.0).sqrt(),
    })
}

/// 16x16 test scene for the key studies: a bright blob on a ramp.
pub fn security_scene() -> Result<Scene> {
    let v = (0..16)
        .flat_map(|n| (0..16).map(move |m| (m as f64, n as f64)))
        .map(|(m, n)| 0.2 + 0.05 * m + (-((m - 5.0).powi(2) + (n - 9.0).powi(2)) / 12.0).exp())
        .collect();
    Scene::irradiance(16, 16, v)
}

/// Correlations of correct-key and wrong-key decodes with the scene.
#[derive(Clone, Debug, Serialize)]
pub struct KeyStudy {
    pub correct: f64,
    pub wrong: Vec<f64>,
}

impl KeyStudy {
    pub fn median_abs_wrong(&self) -> f64 {
        metrics::median(&self.wrong.iter().map(|r| r.abs()).collect::<Vec<_>>())
    }
}

/// Encodes the security scene under `key` with the given protections
/// (`P = 4`) and decodes it with the true key and each wrong key.
pub fn key_study(security: Security, key: u64, wrong_keys: &[u64]) -> Result<KeyStudy> {
    let plan = build_plan(
        PlanParams::new(
            PixelGrid::raster(16, 16),
            Mode::PassiveFdmaCdma,
            4,
            2.0,
            1.0,
            64.0,
        )
        .with_key(key, security.hopping)
        .with_security(security),
    )?;
    let scene = security_scene()?;
    let truth = scene.values().map(<[f64]>::to_vec).unwrap_or_default();
    let stream =
        crate::sensor::synthesize(&plan, &scene, &DetectorModel::noiseless(), PdSide::Pd1)?;
    let correct =
        metrics::image_correlation(&crate::decode::decode_frame(&stream, &plan)?[0], &truth);
    let wrong = wrong_keys
        .par_iter()
        .map(|&k| metrics::wrong_key_correlation(&stream, &plan, k, &truth))
        .collect::<Result<Vec<_>>>()?;
    Ok(KeyStudy { correct, wrong })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_build_valid_plans() {
        for name in PRESETS {
            let c = preset(name, false).unwrap();
            let plan = build_plan(c.plan.clone()).unwrap();
            assert!(crate::plan::validate(&plan).passed(), "{name}");
        }
        assert!(preset("exp9", false).is_err());
    }

    #[test]
    fn scaled_exp1_speedup_is_four() {
        let a = build_plan(preset("exp1-hdr", false).unwrap().plan).unwrap();
        let b = build_plan(preset("exp1-fmcdma", false).unwrap().plan).unwrap();
        assert_eq!((a.bits(), b.bits()), (64, 256));
        assert_eq!(metrics::speedup(&a, &b), 4.0);
    }

    #[test]
    fn full_scale_plans_have_expected_sizes() {
        let a = build_plan(preset("exp1-hdr", true).unwrap().plan).unwrap();
        let b = build_plan(preset("exp1-fmcdma", true).unwrap().plan).unwrap();
        assert_eq!((a.sets(), a.bits(), a.frame_time()), (319, 320, 320.0));
        assert_eq!((b.sets(), b.bits(), b.frame_time()), (1276, 1280, 1280.0));
        let c = build_plan(preset("exp2-dualband", true).unwrap().plan).unwrap();
        assert_eq!(
            (c.bits(), c.samples_per_bit(), c.frame_time()),
            (1280, 16384, 320.0)
        );
        let d = build_plan(preset("exp3-active", true).unwrap().plan).unwrap();
        assert_eq!((d.sets(), d.bits(), d.samples_per_bit()), (480, 512, 64000));
    }

    #[test]
    fn hole_overlap_pattern() {
        let a = hole_overlaps(&preset("exp3-active-a", false).unwrap()).unwrap();
        // Left hole red filter: only the red source; right hole green: only green.
        assert!(a[0][0] == 0.0 && a[0][1] > 0.0 && a[0][2] == 0.0);
        assert!(a[1][0] > 0.0 && a[1][1] == 0.0 && a[1][2] == 0.0);
        let b = hole_overlaps(&preset("exp3-active-b", false).unwrap()).unwrap();
        assert!(b[0][0] > 0.0 && b[0][1] == 0.0 && b[0][2] == 0.0);
        assert!(b[1][0] == 0.0 && b[1][1] == 0.0 && b[1][2] > 0.0);
    }

    #[test]
    fn presets_serialize() {
        for name in PRESETS {
            let c = preset(name, false).unwrap();
            assert_eq!(
                ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap(),
                c
            );
        }
    }
}
