//! Acceptance suite: runs every criterion, prints one
//! `criterion N: PASS|FAIL ...` line each and exits non-zero if any fails.

use std::time::Instant;

use caos_core::codes::codebook;
use caos_core::decode::{decode_dual, decode_frame, dsp_gain_db};
use caos_core::experiments::{
    self, hole_overlaps, key_study, multiplex_study, preset, EXP1_LEVELS_DB,
};
use caos_core::metrics::{self, crosstalk, max_relative_error};
use caos_core::plan::{build_plan, pixel_sets, CodingPlan, Mode, PixelGrid, PlanParams, Security};
use caos_core::scene::{band_integrate, DetectorModel, Scene, SceneData};
use caos_core::sensor::{synthesize, synthesize_dual, PdSide};

type Outcome = (bool, String);

fn scalar_scene(cols: usize, rows: usize) -> Scene {
    Scene::irradiance(
        cols,
        rows,
        (0..cols * rows)
            .map(|i| 0.1 + ((i * 37) % 97) as f64 / 97.0)
            .collect(),
    )
    .unwrap()
}

fn source_scene(cols: usize, rows: usize, sources: usize) -> Scene {
    let maps = (0..sources)
        .map(|p| {
            (0..cols * rows)
                .map(|i| 0.2 + ((i * (13 + 7 * p)) % 29) as f64 / 29.0)
                .collect()
        })
        .collect();
    Scene::per_source(cols, rows, maps).unwrap()
}

fn round_trip_params(mode: Mode, cols: usize, rows: usize, key: u64, hop: bool) -> PlanParams {
    let grid = PixelGrid::raster(cols, rows);
    let p = match mode {
        Mode::PassiveFdmaCdma => PlanParams::new(grid, mode, 4, 2.0, 1.0, 64.0),
        Mode::ActiveOverlapped => {
            PlanParams::new(grid, mode, 3, 4.0, 1.0, 64.0).with_frequencies(vec![4.0, 6.0, 9.0])
        }
        _ => PlanParams::new(grid, mode, 1, 2.0, 1.0, 64.0),
    };
    p.with_key(key, hop)
}

/// Worst relative error of the normalized decodes against the normalized
/// scene maps, for one or both detectors.
fn round_trip_error(plan: &CodingPlan, scene: &Scene, dual: bool) -> f64 {
    let det = DetectorModel::noiseless();
    let maps = scene.effective_maps(None).unwrap();
    let peak = maps.iter().flatten().copied().fold(0.0, f64::max);
    let truth: Vec<Vec<f64>> = maps
        .iter()
        .map(|m| m.iter().map(|v| v / peak).collect())
        .collect();
    let mut sets = Vec::new();
    if dual {
        let (a, b) = decode_dual(&synthesize_dual(plan, scene, &det, &det).unwrap(), plan).unwrap();
        sets.push(a);
        sets.push(b);
    } else {
        sets.push(
            decode_frame(&synthesize(plan, scene, &det, PdSide::Pd1).unwrap(), plan).unwrap(),
        );
    }
    let mut worst = 0.0_f64;
    for images in sets {
        assert_eq!(images.len(), truth.len());
        for (img, t) in images.iter().zip(&truth) {
            worst = worst.max(max_relative_error(&img.normalized(), t, 1e-12));
        }
    }
    worst
}

fn criterion_01_noiseless_round_trip() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0_f64;
    let mut cases = 0;
    for mode in Mode::ALL {
        for (cols, rows) in [(16, 16), (7, 5)] {
            let scene = if mode == Mode::ActiveOverlapped {
                source_scene(cols, rows, 3)
            } else {
                scalar_scene(cols, rows)
            };
            for hop in [false, true] {
                let plan = build_plan(round_trip_params(mode, cols, rows, 0xA11CE, hop)).unwrap();
                for dual in [false, true] {
                    let e = round_trip_error(&plan, &scene, dual);
                    assert!(e.is_finite());
                    if e >= 1e-9 {
                        println!("  {mode} {cols}x{rows} hop={hop} dual={dual}: {e:.3e}");
                    }
                    worst = worst.max(e);
                    cases += 1;
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = worst < 1e-9 && secs < 10.0;
    (
        ok,
        format!("{cases} cases, max relative error {worst:.3e}, {secs:.2} s"),
    )
}

fn criterion_02_dsp_gain() -> Outcome {
    // Coherent integration over F samples: 10 log10(F / 2).
    let oracle = |f: f64| 10.0 * (f / 2.0).log10();
    let (a, b) = (dsp_gain_db(65536), dsp_gain_db(16384));
    let ok = (a - 45.15).abs() <= 0.02
        && (b - 39.13).abs() <= 0.01
        && (a - oracle(65536.0)).abs() < 1e-12
        && (b - oracle(16384.0)).abs() < 1e-12;
    (ok, format!("F=65536: {a:.4} dB, F=16384: {b:.4} dB"))
}

fn criterion_03_partitioning() -> Outcome {
    let (j1, sizes1) = pixel_sets(2035, 8);
    let (j2, _) = pixel_sets(1276, 4);
    // Smallest supported Hadamard order strictly above the code count.
    let w: Vec<usize> = [255, 319, 480]
        .iter()
        .map(|&j| codebook(j, None).unwrap().length())
        .collect();
    let ok = j1 == 255
        && sizes1.last() == Some(&3)
        && sizes1[..254].iter().all(|&s| s == 8)
        && j2 == 319
        && w == [256, 320, 512];
    (
        ok,
        format!(
            "J(2035,8)={j1} last={:?}, J(1276,4)={j2}, W={w:?}",
            sizes1.last()
        ),
    )
}

fn criterion_04_speedup() -> Outcome {
    let fdma = build_plan(preset("exp1-hdr", false).unwrap().plan).unwrap();
    let fm = build_plan(preset("exp1-fmcdma", false).unwrap().plan).unwrap();
    let s1 = metrics::speedup(&fdma, &fm);
    // 2035 pixels: FM-CDMA needs 2048 codes, 8 carriers need 256.
    let grid = PixelGrid::raster(55, 37);
    let eight = build_plan(PlanParams::new(
        grid.clone(),
        Mode::PassiveFdmaCdma,
        8,
        2.0,
        1.0,
        4096.0,
    ))
    .unwrap();
    let one = build_plan(PlanParams::new(grid, Mode::FmCdma, 1, 2.0, 1.0, 4096.0)).unwrap();
    let s2 = metrics::speedup(&eight, &one);
    let ok = (s1 - 4.0).abs() < 5e-4 && (s2 - 8.0).abs() < 5e-4;
    (
        ok,
        format!(
            "exp1 FDMA vs FM {s1:.3}, 2035-pixel worked example {s2:.3} ({} vs {} bits)",
            eight.bits(),
            one.bits()
        ),
    )
}

fn criterion_05_multiplex_advantage() -> Outcome {
    let sigma = 0.27;
    let s = multiplex_study(200, sigma).unwrap();
    let lo = 0.8 * s.expected;
    let hi = 1.2 * s.expected;
    let ok = s.ratio >= lo && s.ratio <= hi && s.trials >= 100 && s.pixels == 64;
    (ok, format!(
            "Q={} trials={} SNR cdma {:.3} tdma {:.3}, ratio {:.3} vs [{lo:.3}, {hi:.3}] (sqrt(Q/2)={:.3}, sqrt(W/4)={:.3})",
            s.pixels,
            s.trials,
            s.snr_cdma,
            s.snr_tdma,
            s.ratio,
            s.expected,
            (s.pixels as f64 / 4.0).sqrt()
        ))
}

fn criterion_06_hdr_recovery() -> Outcome {
    let start = Instant::now();
    let fdma = experiments::run(&preset("exp1-hdr", false).unwrap(), None).unwrap();
    let fm = experiments::run(&preset("exp1-fmcdma", false).unwrap(), None).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let a = fdma.patch_report.as_ref().unwrap();
    let b = fm.patch_report.as_ref().unwrap();
    let levels_ok = a
        .levels_db()
        .iter()
        .zip(EXP1_LEVELS_DB)
        .all(|(got, want)| (got - want).abs() <= 1.0);
    let dim_ok = a.patches.last().unwrap().snr >= 1.0;
    let fm_fails = [4, 5].iter().all(|&i| b.patches[i].snr < 1.0);
    for (name, r) in [("FDMA-CDMA", a), ("FM-CDMA", b)] {
        let cells: Vec<String> = r
            .patches
            .iter()
            .map(|p| format!("{:.2} dB/SNR {:.2}", p.dr_db, p.snr))
            .collect();
        println!("  {name}: {}", cells.join(", "));
    }
    let ok = levels_ok && dim_ok && fm_fails && secs < 60.0;
    (ok, format!(
            "sigma {}: FDMA levels within 1 dB {levels_ok}, dimmest SNR {:.3}; FM SNR at 58/64 dB {:.3}/{:.3}; {secs:.1} s",
            experiments::EXP1_NOISE_SIGMA,
            a.patches[5].snr,
            b.patches[4].snr,
            b.patches[5].snr
        ))
}

fn criterion_07_dual_band() -> Outcome {
    let cfg = preset("exp2-dualband", false).unwrap();
    let r = experiments::run(&cfg, None).unwrap();
    let SceneData::Spectral { curves, pixels } = r.scene.scene.data() else {
        panic!("spectral scene expected")
    };
    let mut worst = 0.0_f64;
    let mut spot = 0;
    let pd2 = r.pd2.as_ref().unwrap();
    for (img, det) in [
        (&r.pd1[0], &cfg.detector),
        (&pd2[0], cfg.pd2_detector.as_ref().unwrap()),
    ] {
        let resp = det.responsivity.as_ref().unwrap();
        let per_curve: Vec<f64> = curves.iter().map(|c| band_integrate(c, resp)).collect();
        for (i, p) in pixels.iter().enumerate() {
            if let Some((k, s)) = p {
                let want = det.gain * s * per_curve[*k];
                worst = worst.max((img.values[i] - want).abs() / want);
                spot += 1;
            }
        }
    }
    let si = r.pd1[0].peak();
    let ge = pd2[0].peak();
    let ok = worst < 1e-6 && spot > 0 && si > 0.0 && ge > 0.0;
    (ok, format!("{spot} spot pixels over both bands, worst relative error {worst:.3e}; Si peak {si:.4e}, Ge peak {ge:.4e}"))
}

fn criterion_08_active_discrimination() -> Outcome {
    let mut all = true;
    let mut lines = Vec::new();
    for name in ["exp3-active-a", "exp3-active-b"] {
        let cfg = preset(name, false).unwrap();
        let r = experiments::run(&cfg, None).unwrap();
        let overlaps = hole_overlaps(&cfg).unwrap();
        let caos_core::config::SceneSpec::TwoHole { holes, .. } = &cfg.scene else {
            unreachable!()
        };
        let peak = r.pd1.iter().map(|i| i.peak()).fold(0.0, f64::max);
        let mut pattern = String::new();
        for (p, img) in r.pd1.iter().enumerate() {
            for (h, hole) in holes.iter().enumerate() {
                let v = img.at(hole.center[0] as usize, hole.center[1] as usize) / peak;
                let present = v > experiments::PRESENCE_THRESHOLD;
                all &= present == (overlaps[h][p] > 0.0);
                pattern.push(if present { '#' } else { '.' });
            }
            if overlaps.iter().all(|o| o[p] == 0.0) {
                all &= img.peak() / peak < 1e-6;
                pattern.push('0');
            }
            pattern.push(' ');
        }
        all &= r.passed();
        lines.push(format!("{name} [{}]", pattern.trim_end()));
    }
    (all, lines.join(", "))
}

fn criterion_09_crosstalk() -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut names = Vec::new();
    let octave = [
        preset("exp1-hdr", false).unwrap().plan,
        PlanParams::new(
            PixelGrid::raster(8, 8),
            Mode::PassiveFdmaCdma,
            8,
            2.0,
            1.0,
            1024.0,
        ),
    ];
    let sine = preset("exp3-active", false).unwrap().plan;
    for params in octave.into_iter().chain([sine]) {
        let plan = build_plan(params).unwrap();
        for probe in 0..plan.channels() {
            let w = crosstalk(&plan, probe).unwrap().worst_db();
            worst = worst.max(w);
        }
        names.push(format!("{} {:?}", plan.mode(), plan.freq_plan().freqs()));
    }
    let ok = worst < -100.0;
    (
        ok,
        format!("worst leakage {worst:.1} dB over {}", names.join("; ")),
    )
}

fn criterion_10_security() -> Outcome {
    let key = 0x05EC_011D;
    let wrong: Vec<u64> = (1..=60u64).map(|i| i * 7919 + 3).collect();
    let s = key_study(Security::ALL, key, &wrong).unwrap();
    let median = s.median_abs_wrong();
    let base = build_plan(round_trip_params(Mode::PassiveFdmaCdma, 16, 16, key, true)).unwrap();
    let scene = scalar_scene(16, 16);
    let mut realloc = 0.0_f64;
    let mut distinct = true;
    for frame in 1..=4 {
        let plan = base.for_frame(frame).unwrap();
        distinct &= plan.codes() != base.codes() || plan.assignment() != base.assignment();
        for dual in [false, true] {
            realloc = realloc.max(round_trip_error(&plan, &scene, dual));
        }
    }
    let ok = wrong.len() >= 50 && median < 0.3 && s.correct > 0.999 && realloc < 1e-9 && distinct;
    (ok, format!(
            "wrong-key median |rho| {median:.4} over {} seeds, correct rho {:.6}, reallocated frames max error {realloc:.3e}",
            wrong.len(),
            s.correct
        ))
}

fn criterion_11_conservation() -> Outcome {
    let scene = scalar_scene(16, 16);
    let total: f64 = scene.values().unwrap().iter().sum();
    let mut det = DetectorModel::noiseless();
    det.gain = 2.5;
    let mut worst = 0.0_f64;
    for mode in Mode::ALL.into_iter().filter(|m| m.is_passive()) {
        for hop in [false, true] {
            let plan = build_plan(round_trip_params(mode, 16, 16, 77, hop)).unwrap();
            let s = synthesize_dual(&plan, &scene, &det, &det).unwrap();
            let want = det.gain * total;
            for (a, b) in s.pd1.samples.iter().zip(&s.pd2.samples) {
                worst = worst.max(((a + b) - want).abs() / want);
            }
        }
    }
    let ok = worst < 1e-9;
    (
        ok,
        format!("max relative deviation of PD1+PD2 from G*sum(I): {worst:.3e}"),
    )
}

fn main() {
    let criteria: [fn() -> Outcome; 11] = [
        criterion_01_noiseless_round_trip,
        criterion_02_dsp_gain,
        criterion_03_partitioning,
        criterion_04_speedup,
        criterion_05_multiplex_advantage,
        criterion_06_hdr_recovery,
        criterion_07_dual_band,
        criterion_08_active_discrimination,
        criterion_09_crosstalk,
        criterion_10_security,
        criterion_11_conservation,
    ];
    let mut failed = Vec::new();
    for (i, run) in criteria.iter().enumerate() {
        let n = i + 1;
        let (ok, detail) =
            std::panic::catch_unwind(run).unwrap_or_else(|_| (false, "panicked".into()));
        println!(
            "criterion {n}: {} {detail}",
            if ok { "PASS" } else { "FAIL" }
        );
        if !ok {
            failed.push(n);
        }
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failed.len(),
        criteria.len()
    );
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
