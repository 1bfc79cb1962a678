//! Photodetector signal synthesis.
//!
//! For bit `w` and sample `t` the detector sees
//! `i(w, t) = G * sum_mn I_mn * d_mn(w, t)` where `d_mn` is the pixel's code
//! bit times its (possibly hopped) carrier. PD2 sees the complementary tilt
//! state: `1 - carrier` while the code bit is 1 and the full pixel light while
//! it is 0 (mirror parked towards PD2). In the overlapped active mode the
//! modulation comes from the sources instead, and each detector receives the
//! source-modulated light of the pixels tilted towards it.
//!
//! Bits are independent, so synthesis and noise run in parallel per bit; per
//! bit noise draws come from their own keyed stream, which keeps results
//! identical regardless of scheduling.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::keyed;
use crate::plan::{CodingPlan, Mode, Waveform};
use crate::scene::{AdcModel, DetectorModel, Scene};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PdSide {
    Pd1,
    Pd2,
}

/// Digitized detector signal for one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleStream {
    pub rate: f64,
    pub bits: usize,
    pub samples_per_bit: usize,
    pub side: PdSide,
    pub samples: Vec<f64>,
}

impl SampleStream {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn bit(&self, w: usize) -> &[f64] {
        &self.samples[w * self.samples_per_bit..(w + 1) * self.samples_per_bit]
    }

    fn map_bits(&self, f: impl Fn(usize, &mut [f64]) + Sync) -> SampleStream {
        let mut out = self.clone();
        out.samples
            .par_chunks_mut(self.samples_per_bit)
            .enumerate()
            .for_each(|(w, chunk)| f(w, chunk));
        out
    }
}

/// Streams from both tilt-state detectors of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct DualStreams {
    pub pd1: SampleStream,
    pub pd2: SampleStream,
}

/// Value of unit carrier `freq_index` at sample `t` of a bit.
pub fn carrier(plan: &CodingPlan, freq_index: usize, t: usize) -> f64 {
    let f = plan.samples_per_bit() as f64;
    let cycles = plan.bins()[freq_index];
    match plan.freq_plan().waveform() {
        Waveform::Dc => 1.0,
        Waveform::Square => {
            let half_periods = (2.0 * cycles * t as f64 / f).floor() as i64;
            if half_periods % 2 == 0 {
                1.0
            } else {
                0.0
            }
        }
        Waveform::Sine => {
            let phase = std::f64::consts::TAU * cycles * t as f64 / f + plan.phases()[freq_index];
            0.5 * (1.0 + phase.sin())
        }
    }
}

/// One bit of unit carrier `freq_index`.
pub fn carrier_table(plan: &CodingPlan, freq_index: usize) -> Vec<f64> {
    (0..plan.samples_per_bit())
        .map(|t| carrier(plan, freq_index, t))
        .collect()
}

/// Per-bit generator holding the carrier tables and per-pixel irradiances.
pub struct Synthesizer<'a> {
    plan: &'a CodingPlan,
    /// `pixel_values[map][pixel]`, pixels in plan order.
    pixel_values: Vec<Vec<f64>>,
    totals: Vec<f64>,
    tables: Vec<Vec<f64>>,
    gain: f64,
}

impl<'a> Synthesizer<'a> {
    pub fn new(plan: &'a CodingPlan, scene: &Scene, detector: &DetectorModel) -> Result<Self> {
        detector.check()?;
        let grid = plan.grid();
        if scene.columns() != grid.columns() || scene.rows() != grid.rows() {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{} scene", grid.columns(), grid.rows()),
                found: format!("{}x{}", scene.columns(), scene.rows()),
            });
        }
        let maps = scene.effective_maps(detector.responsivity.as_ref())?;
        let needed = if plan.mode() == Mode::ActiveOverlapped {
            plan.channels()
        } else {
            1
        };
        let maps = match maps.len() {
            n if n == needed => maps,
            1 => vec![maps[0].clone(); needed],
            n => {
                return Err(Error::DimensionMismatch {
                    expected: format!("{needed} irradiance map(s) for {}", plan.mode()),
                    found: format!("{n}"),
                })
            }
        };
        let pixel_values: Vec<Vec<f64>> = maps
            .iter()
            .map(|map| {
                grid.active()
                    .iter()
                    .map(|&pos| map[grid.raster_index(pos)])
                    .collect()
            })
            .collect();
        let totals = pixel_values.iter().map(|v| v.iter().sum()).collect();
        let tables = (0..plan.channels())
            .map(|p| carrier_table(plan, p))
            .collect();
        Ok(Synthesizer {
            plan,
            pixel_values,
            totals,
            tables,
            gain: detector.gain,
        })
    }

    /// Noiseless samples of bit `w` for one detector.
    pub fn bit(&self, w: usize, side: PdSide, out: &mut [f64]) {
        let plan = self.plan;
        out.fill(0.0);
        let channels = plan.channels();
        let mut on = vec![0.0; channels];
        let mut off = vec![0.0; channels];
        if plan.mode() == Mode::ActiveOverlapped {
            for (p, values) in self.pixel_values.iter().enumerate() {
                let lit: f64 = values
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| plan.code_bit(i, w) == 1)
                    .map(|(_, v)| v)
                    .sum();
                let f = plan.channel_at(p, w);
                on[f] += lit;
                off[f] += self.totals[p] - lit;
            }
            let loads = if side == PdSide::Pd1 { &on } else { &off };
            for (f, &load) in loads.iter().enumerate() {
                if load != 0.0 {
                    for (o, c) in out.iter_mut().zip(&self.tables[f]) {
                        *o += load * c;
                    }
                }
            }
        } else {
            let values = &self.pixel_values[0];
            for (i, &v) in values.iter().enumerate() {
                if plan.code_bit(i, w) == 1 {
                    on[plan.channel_at(plan.slot(i).member, w)] += v;
                }
            }
            for (f, &load) in on.iter().enumerate() {
                if load != 0.0 {
                    for (o, c) in out.iter_mut().zip(&self.tables[f]) {
                        *o += load * c;
                    }
                }
            }
            if side == PdSide::Pd2 {
                let total = self.totals[0];
                for o in out.iter_mut() {
                    *o = total - *o;
                }
            }
        }
        for o in out.iter_mut() {
            *o *= self.gain;
        }
    }
}

/// Noiseless, unquantized detector stream for one frame.
pub fn synthesize(
    plan: &CodingPlan,
    scene: &Scene,
    detector: &DetectorModel,
    side: PdSide,
) -> Result<SampleStream> {
    let synth = Synthesizer::new(plan, scene, detector)?;
    let f = plan.samples_per_bit();
    let mut samples = vec![0.0; plan.frame_samples()];
    samples
        .par_chunks_mut(f)
        .enumerate()
        .for_each(|(w, chunk)| synth.bit(w, side, chunk));
    Ok(SampleStream {
        rate: plan.sample_rate(),
        bits: plan.bits(),
        samples_per_bit: f,
        side,
        samples,
    })
}

/// Both detectors of one frame; each side may use its own detector model.
pub fn synthesize_dual(
    plan: &CodingPlan,
    scene: &Scene,
    pd1: &DetectorModel,
    pd2: &DetectorModel,
) -> Result<DualStreams> {
    Ok(DualStreams {
        pd1: synthesize(plan, scene, pd1, PdSide::Pd1)?,
        pd2: synthesize(plan, scene, pd2, PdSide::Pd2)?,
    })
}

/// Adds white and shot noise to one bit, drawing from that bit's keyed stream.
pub(crate) fn bit_noise(detector: &DetectorModel, seed: u64, w: usize, chunk: &mut [f64]) {
    let shot = detector.shot_noise.unwrap_or(0.0);
    let sigma = detector.noise_sigma;
    if sigma == 0.0 && shot == 0.0 {
        return;
    }
    let mut rng = keyed::keyed_rng(seed, w as u64);
    for x in chunk.iter_mut() {
        let mut noise = 0.0;
        if shot > 0.0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            noise += (shot * x.max(0.0)).sqrt() * z;
        }
        if sigma > 0.0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            noise += sigma * z;
        }
        *x += noise;
    }
}

/// Noise with one-sided PSD `amplitude^2 / f^exponent`, shaped in frequency.
pub fn pink_noise(len: usize, rate: f64, amplitude: f64, exponent: f64, seed: u64) -> Vec<f64> {
    if len == 0 {
        return Vec::new();
    }
    let mut rng = keyed::keyed_rng(seed, keyed::STREAM_PINK);
    let mut buf: Vec<Complex64> = (0..len)
        .map(|_| Complex64::new(StandardNormal.sample(&mut rng), 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    buf[0] = Complex64::new(0.0, 0.0);
    for (k, x) in buf.iter_mut().enumerate().skip(1) {
        let f = k.min(len - k) as f64 * rate / len as f64;
        *x *= (amplitude * amplitude * f.powf(-exponent) * rate / 2.0).sqrt();
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    buf.iter().map(|c| c.re / len as f64).collect()
}

/// Adds the detector's noise terms; deterministic for a given seed.
pub fn add_noise(stream: &SampleStream, detector: &DetectorModel, seed: u64) -> SampleStream {
    let mut out = stream.map_bits(|w, chunk| bit_noise(detector, seed, w, chunk));
    if let Some(p) = detector.pink_noise {
        let pink = pink_noise(out.len(), out.rate, p.amplitude, p.exponent, seed);
        for (x, n) in out.samples.iter_mut().zip(pink) {
            *x += n;
        }
    }
    out
}

/// Clamp to `[0, fullscale]` and round to `2^bits - 1` uniform steps.
pub fn quantize(x: f64, adc: &AdcModel) -> f64 {
    let step = adc.fullscale / ((1u64 << adc.bits) - 1) as f64;
    (x.clamp(0.0, adc.fullscale) / step).round() * step
}

pub fn adc(stream: &SampleStream, detector: &DetectorModel) -> SampleStream {
    match &detector.adc {
        None => stream.clone(),
        Some(a) => {
            let mut out = stream.clone();
            out.samples
                .par_iter_mut()
                .for_each(|x| *x = quantize(*x, a));
            out
        }
    }
}
