//! `caos`: build plans, simulate captures, decode them and run the experiment presets.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use caos_core::config::ExperimentConfig;
use caos_core::decode::{decode_frame, per_bit_spectra};
use caos_core::experiments::{self, RunResult};
use caos_core::io::{self, DecodeReport};
use caos_core::metrics;
use caos_core::plan::{build_plan, validate, CodingPlan};
use caos_core::scene::DrConvention;
use caos_core::sensor::{adc, add_noise, synthesize, PdSide};
use caos_core::Error;

const EXIT_OTHER: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_VALIDATION: u8 = 3;
const EXIT_ACCEPTANCE: u8 = 4;

/// Correlation below which a decode is flagged as not matching the truth image.
const LOW_CORRELATION: f64 = 0.5;

#[derive(Parser)]
#[command(
    name = "caos",
    version,
    about = "FDMA-CDMA coded-access camera simulator and codec"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Convention {
    #[value(name = "20log")]
    TwentyLog,
    #[value(name = "10log")]
    TenLog,
}

impl From<Convention> for DrConvention {
    fn from(c: Convention) -> Self {
        match c {
            Convention::TwentyLog => DrConvention::TwentyLog,
            Convention::TenLog => DrConvention::TenLog,
        }
    }
}

#[derive(Args)]
struct Source {
    /// Experiment configuration file (TOML).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Named preset: exp1-hdr, exp1-fmcdma, exp2-dualband, exp3-active, exp3-active-b.
    #[arg(long)]
    preset: Option<String>,
    /// Use the full-size code lengths and bit times instead of the desk-scale preset.
    #[arg(long)]
    full_scale: bool,
    /// Override the plan key seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the detector noise seed.
    #[arg(long)]
    noise_seed: Option<u64>,
    #[arg(long, value_enum)]
    convention: Option<Convention>,
}

#[derive(Subcommand)]
enum Command {
    /// Build and validate a coding plan; writes plan.toml, assignment.csv and validation.json.
    Plan {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Synthesize detector streams for a plan and scene.
    Simulate {
        #[command(flatten)]
        source: Source,
        /// Plan document; built from the configuration when absent.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Decode stream files against a plan document.
    Decode {
        #[arg(long)]
        plan: PathBuf,
        /// Raw stream file(s) (`.f32` with a `.f32.toml` sidecar).
        #[arg(long = "stream", required = true)]
        streams: Vec<PathBuf>,
        /// Ground-truth CSV image to correlate against.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Include the per-bit peak matrix in the report.
        #[arg(long)]
        peaks: bool,
        /// Render PGMs on a log scale spanning this many dB.
        #[arg(long)]
        log_floor_db: Option<f64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run a preset or configuration end to end and write an acceptance summary.
    Experiment {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        log_floor_db: Option<f64>,
    },
    /// Sweep the HDR preset's noise sigma until the FM-CDMA 48 dB patch reaches the target SNR.
    Calibrate {
        #[arg(long, default_value_t = experiments::CALIBRATION_TARGET_SNR)]
        target_snr: f64,
        #[arg(long, default_value_t = 0.01)]
        tolerance: f64,
        #[arg(long)]
        full_scale: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
enum Failure {
    Core(Error),
    Config(String),
    Acceptance(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(Error::Io(e))
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Acceptance(_) => EXIT_ACCEPTANCE,
            Failure::Core(e) => match e {
                Error::Format(_) => EXIT_CONFIG,
                Error::Io(_) => EXIT_OTHER,
                _ => EXIT_VALIDATION,
            },
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Core(e) => write!(f, "{e}"),
            Failure::Config(s) => write!(f, "configuration: {s}"),
            Failure::Acceptance(s) => write!(f, "acceptance failed: {s}"),
        }
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn load_config(src: &Source) -> Outcome<(ExperimentConfig, Option<PathBuf>)> {
    let (mut cfg, base) = match (&src.config, &src.preset) {
        (Some(path), _) => (
            ExperimentConfig::load(path)?,
            path.parent().map(Path::to_path_buf),
        ),
        (None, Some(name)) => (
            experiments::preset(name, src.full_scale)
                .map_err(|e| Failure::Config(e.to_string()))?,
            None,
        ),
        (None, None) => {
            return Err(Failure::Config(
                "one of --config or --preset is required".into(),
            ))
        }
    };
    if let Some(s) = src.seed {
        cfg.plan.key_seed = s;
    }
    if let Some(s) = src.noise_seed {
        cfg.noise_seed = s;
    }
    if let Some(c) = src.convention {
        cfg.convention = c.into();
    }
    Ok((cfg, base))
}

fn plan_checked(cfg: &ExperimentConfig) -> Outcome<CodingPlan> {
    let plan = build_plan(cfg.plan.clone())?;
    let report = validate(&plan);
    if !report.passed() {
        let why: Vec<String> = report
            .failures()
            .map(|c| format!("{}: {}", c.name, c.detail))
            .collect();
        return Err(Failure::Core(Error::Invalid(why.join("; "))));
    }
    Ok(plan)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Outcome {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn cmd_plan(source: &Source, out: &Path) -> Outcome {
    let (cfg, _) = load_config(source)?;
    let plan = build_plan(cfg.plan.clone())?;
    let report = validate(&plan);
    fs::create_dir_all(out)?;
    fs::write(out.join("plan.toml"), plan.to_document()?)?;
    plan.write_assignment_csv(fs::File::create(out.join("assignment.csv"))?)?;
    write_json(&out.join("validation.json"), &report)?;
    for c in &report.checks {
        println!(
            "{} {:<22} {}",
            if c.passed { "pass" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    let s = &report.summary;
    println!(
        "Q = {}, P = {}, J = {}, W = {}, F = {}, frame time {} s, DSP gain {:.2} dB, speedup vs single channel {:.3}",
        s.pixels, s.channels, s.sets, s.code_length, s.samples_per_bit, s.frame_time_s, report.dsp_gain_db,
        report.speedup_vs_single_channel
    );
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Core(Error::Invalid(
            "plan validation failed".into(),
        )))
    }
}

fn cmd_simulate(source: &Source, plan_path: Option<&Path>, out: &Path) -> Outcome {
    let (cfg, base) = load_config(source)?;
    let plan = match plan_path {
        Some(p) => CodingPlan::from_document(&fs::read_to_string(p)?)?,
        None => plan_checked(&cfg)?,
    };
    let built = cfg.build_scene(base.as_deref())?;
    fs::create_dir_all(out)?;
    let mut sides = vec![(PdSide::Pd1, &cfg.detector)];
    if let Some(d2) = &cfg.pd2_detector {
        sides.push((PdSide::Pd2, d2));
    }
    let columns = plan.grid().columns();
    for (side, det) in sides {
        let tag = match side {
            PdSide::Pd1 => "pd1",
            PdSide::Pd2 => "pd2",
        };
        let clean = synthesize(&plan, &built.scene, det, side)?;
        let seed = caos_core::capture::side_seed(cfg.noise_seed, side);
        let stream = adc(&add_noise(&clean, det, seed), det);
        io::write_stream(&out.join(format!("{tag}.f32")), &stream)?;
        let maps = built.scene.effective_maps(det.responsivity.as_ref())?;
        for (p, map) in maps.iter().enumerate() {
            let name = if maps.len() == 1 {
                format!("truth_{tag}.csv")
            } else {
                format!("truth_{tag}_source{}.csv", p + 1)
            };
            io::write_grid_csv(fs::File::create(out.join(name))?, columns, map)?;
        }
        println!(
            "{tag}: {} samples at {} sps ({} bits x {})",
            stream.len(),
            stream.rate,
            stream.bits,
            stream.samples_per_bit
        );
    }
    if plan_path.is_none() {
        fs::write(out.join("plan.toml"), plan.to_document()?)?;
    }
    Ok(())
}

fn cmd_decode(
    plan_path: &Path,
    streams: &[PathBuf],
    truth: Option<&Path>,
    peaks: bool,
    log_floor: Option<f64>,
    out: &Path,
) -> Outcome {
    let plan = CodingPlan::from_document(&fs::read_to_string(plan_path)?)?;
    let truth = match truth {
        Some(p) => Some(io::read_grid_csv(&fs::read_to_string(p)?)?.2),
        None => None,
    };
    for path in streams {
        let stream = io::read_stream(path)?;
        let images = decode_frame(&stream, &plan)?;
        let spectra = if peaks {
            Some(per_bit_spectra(&stream, &plan)?)
        } else {
            None
        };
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("image")
            .to_string();
        for img in &images {
            let name = match img.source {
                Some(p) => format!("{stem}_source{}", p + 1),
                None => stem.clone(),
            };
            let mut report = DecodeReport::new(img);
            report.peaks = spectra.clone();
            if let Some(t) = &truth {
                if t.len() != img.len() {
                    return Err(Failure::Core(Error::DimensionMismatch {
                        expected: format!("{} truth values", img.len()),
                        found: t.len().to_string(),
                    }));
                }
                let rho = metrics::image_correlation(img, t);
                report.ground_truth_correlation = Some(rho);
                let flag = if rho < LOW_CORRELATION {
                    " (LOW: wrong key or plan?)"
                } else {
                    ""
                };
                println!("{name}: correlation with truth {rho:.4}{flag}");
            }
            io::write_image_set(out, &name, img, &report, log_floor)?;
            println!(
                "{name}: normalization reference {:.6e}",
                img.normalization_reference
            );
        }
    }
    Ok(())
}

fn write_run(r: &RunResult, out: &Path, log_floor: Option<f64>) -> Outcome {
    fs::create_dir_all(out)?;
    let name = &r.config.name;
    fs::write(out.join(format!("{name}.config.toml")), r.config.to_toml()?)?;
    fs::write(out.join(format!("{name}.plan.toml")), r.plan.to_document()?)?;
    let mut sets = vec![("pd1", &r.pd1)];
    if let Some(pd2) = &r.pd2 {
        sets.push(("pd2", pd2));
    }
    for (tag, images) in sets {
        for img in images {
            let stem = match img.source {
                Some(p) => format!("{name}_{tag}_source{}", p + 1),
                None => format!("{name}_{tag}"),
            };
            io::write_image_set(out, &stem, img, &DecodeReport::new(img), log_floor)?;
        }
    }
    if let Some(p) = &r.patch_report {
        write_json(&out.join(format!("{name}.patches.json")), p)?;
    }
    write_json(&out.join(format!("{name}.acceptance.json")), &r.checks)?;
    Ok(())
}

fn cmd_experiment(source: &Source, out: Option<&Path>, log_floor: Option<f64>) -> Outcome {
    let mut configs = Vec::new();
    let (cfg, base) = load_config(source)?;
    configs.push(cfg);
    if source.preset.as_deref() == Some("exp3-active") {
        let b = Source {
            preset: Some("exp3-active-b".into()),
            config: None,
            ..*source
        };
        configs.push(load_config(&b)?.0);
    }
    let mut failed = Vec::new();
    for cfg in &configs {
        plan_checked(cfg)?;
        let r = experiments::run(cfg, base.as_deref())?;
        println!("{}", cfg.name);
        if let Some(p) = &r.patch_report {
            for (i, s) in p.patches.iter().enumerate() {
                println!(
                    "  patch {i}: mean {:.4e}  DR {:7.2} dB  SNR {:.3}",
                    s.mean, s.dr_db, s.snr
                );
            }
        }
        for c in &r.checks {
            println!(
                "  {} {}: {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            );
        }
        let dir = out
            .map(Path::to_path_buf)
            .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from));
        if let Some(dir) = dir {
            write_run(&r, &dir, log_floor)?;
        }
        if !r.passed() {
            failed.push(cfg.name.clone());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Acceptance(failed.join(", ")))
    }
}

fn cmd_calibrate(target: f64, tol: f64, full_scale: bool, out: Option<&Path>) -> Outcome {
    let c = experiments::calibrate_exp1(target, tol, full_scale)?;
    for (s, v) in &c.sweep {
        println!("sigma {s:.6e}  SNR {v:.4}");
    }
    println!(
        "calibrated sigma {:.6} (SNR {:.4}; frozen value {})",
        c.sigma,
        c.snr,
        experiments::EXP1_NOISE_SIGMA
    );
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        write_json(&dir.join("calibration.json"), &c)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Plan { source, out } => cmd_plan(source, out),
        Command::Simulate { source, plan, out } => cmd_simulate(source, plan.as_deref(), out),
        Command::Decode {
            plan,
            streams,
            truth,
            peaks,
            log_floor_db,
            out,
        } => cmd_decode(plan, streams, truth.as_deref(), *peaks, *log_floor_db, out),
        Command::Experiment {
            source,
            out,
            log_floor_db,
        } => cmd_experiment(source, out.as_deref(), *log_floor_db),
        Command::Calibrate {
            target_snr,
            tolerance,
            full_scale,
            out,
        } => cmd_calibrate(*target_snr, *tolerance, *full_scale, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
