//! Per-bit spectrum analysis and code correlation.
//!
//! Each bit of the detector stream is read at the carrier bins only (a direct
//! DFT at `P` bins beats a full FFT when `P` is small, and the bins are exact
//! by plan construction). Magnitudes are divided by the unit-carrier response
//! at its own bin, so a scaled entry equals `G` times the light riding on that
//! carrier during the bit. Correlating the resulting bit sequence with the
//! bipolar code recovers each pixel's scaled irradiance.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plan::{CodeSet, CodingPlan, Mode};
use crate::sensor::{carrier_table, DualStreams, PdSide, SampleStream};

/// Coherent integration gain of an `F`-point DFT, `10 log10(F/2)`.
pub fn dsp_gain_db(samples_per_bit: usize) -> f64 {
    10.0 * (samples_per_bit as f64 / 2.0).log10()
}

/// Single-bin DFT magnitude readout at the plan's carrier bins.
#[derive(Clone, Debug)]
pub struct BinReader {
    cos: Vec<Vec<f64>>,
    sin: Vec<Vec<f64>>,
    gains: Vec<f64>,
}

impl BinReader {
    pub fn new(plan: &CodingPlan) -> Self {
        let f = plan.samples_per_bit();
        let mut cos = Vec::new();
        let mut sin = Vec::new();
        for b in plan.bins() {
            let (c, s): (Vec<f64>, Vec<f64>) = if b.fract() == 0.0 {
                // Integer bin: reduce the phase index exactly before scaling.
                let b = b as u64;
                (0..f as u64)
                    .map(|t| {
                        let a = TAU * ((b * t) % f as u64) as f64 / f as f64;
                        (a.cos(), a.sin())
                    })
                    .unzip()
            } else {
                (0..f)
                    .map(|t| {
                        let a = TAU * b * t as f64 / f as f64;
                        (a.cos(), a.sin())
                    })
                    .unzip()
            };
            cos.push(c);
            sin.push(s);
        }
        let mut reader = BinReader {
            cos,
            sin,
            gains: Vec::new(),
        };
        reader.gains = (0..plan.channels())
            .map(|p| reader.magnitude(&carrier_table(plan, p), p))
            .collect();
        reader
    }

    pub fn channels(&self) -> usize {
        self.cos.len()
    }

    /// Raw DFT magnitude of one bit at carrier `p`'s bin.
    pub fn magnitude(&self, bit: &[f64], p: usize) -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        for ((x, c), s) in bit.iter().zip(&self.cos[p]).zip(&self.sin[p]) {
            re += x * c;
            im -= x * s;
        }
        re.hypot(im)
    }

    /// Magnitude of a unit-amplitude carrier at its own bin.
    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn read(&self, bit: &[f64], out: &mut [f64]) {
        for (p, o) in out.iter_mut().enumerate() {
            *o = self.magnitude(bit, p);
        }
    }
}

/// `W x P` carrier-bin magnitudes, one row per bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralSets {
    pub bits: usize,
    pub channels: usize,
    /// Raw magnitudes, row-major by bit.
    pub magnitudes: Vec<f64>,
    /// Unit-carrier magnitude per channel.
    pub gains: Vec<f64>,
}

impl SpectralSets {
    pub fn zeros(bits: usize, channels: usize, gains: Vec<f64>) -> Self {
        SpectralSets {
            bits,
            channels,
            magnitudes: vec![0.0; bits * channels],
            gains,
        }
    }

    pub fn get(&self, w: usize, p: usize) -> f64 {
        self.magnitudes[w * self.channels + p]
    }

    /// Magnitude in units of light on the carrier.
    pub fn scaled(&self, w: usize, p: usize) -> f64 {
        self.get(w, p) / self.gains[p]
    }

    pub fn row(&self, w: usize) -> &[f64] {
        &self.magnitudes[w * self.channels..(w + 1) * self.channels]
    }

    pub fn rows_mut(&mut self) -> std::slice::ChunksMut<'_, f64> {
        self.magnitudes.chunks_mut(self.channels)
    }
}

pub(crate) fn check_stream(stream: &SampleStream, plan: &CodingPlan) -> Result<()> {
    if stream.len() != plan.frame_samples() {
        return Err(Error::LengthMismatch {
            expected: plan.frame_samples(),
            found: stream.len(),
        });
    }
    if stream.bits != plan.bits() || stream.samples_per_bit != plan.samples_per_bit() {
        return Err(Error::PlanMismatch(format!(
            "stream has W = {}, F = {}; plan has W = {}, F = {}",
            stream.bits,
            stream.samples_per_bit,
            plan.bits(),
            plan.samples_per_bit()
        )));
    }
    if stream.rate != plan.sample_rate() {
        return Err(Error::PlanMismatch(format!(
            "stream sampled at {} Hz, plan at {} Hz",
            stream.rate,
            plan.sample_rate()
        )));
    }
    Ok(())
}

/// Reads every bit of the stream at every carrier bin.
pub fn per_bit_spectra(stream: &SampleStream, plan: &CodingPlan) -> Result<SpectralSets> {
    check_stream(stream, plan)?;
    let reader = BinReader::new(plan);
    let mut sets = SpectralSets::zeros(plan.bits(), plan.channels(), reader.gains().to_vec());
    let f = plan.samples_per_bit();
    sets.magnitudes
        .par_chunks_mut(plan.channels())
        .zip(stream.samples.par_chunks(f))
        .for_each(|(row, bit)| reader.read(bit, row));
    Ok(sets)
}

/// Scaled peak sequence a passive pixel's light rides on, following hops.
pub fn channel_sequence(spectra: &SpectralSets, plan: &CodingPlan, pixel: usize) -> Vec<f64> {
    member_sequence(spectra, plan, plan.slot(pixel).member)
}

/// Scaled peak sequence of source `p` in overlapped active mode.
pub fn source_sequence(spectra: &SpectralSets, plan: &CodingPlan, source: usize) -> Vec<f64> {
    member_sequence(spectra, plan, source)
}

fn member_sequence(spectra: &SpectralSets, plan: &CodingPlan, member: usize) -> Vec<f64> {
    (0..spectra.bits)
        .map(|w| spectra.scaled(w, plan.channel_at(member, w)))
        .collect()
}

/// Unclamped estimate for each listed code: `(2/W) sum_w y(w) (2 c_j(w) - 1)`,
/// or the slot reading for time-slot codes.
pub fn correlate(sequence: &[f64], codes: &CodeSet, sets: &[usize]) -> Vec<f64> {
    match codes {
        CodeSet::TimeSlots { slots } => sets.iter().map(|&j| sequence[slots[j]]).collect(),
        CodeSet::Walsh(book) => {
            let scale = 2.0 / book.length() as f64;
            sets.iter()
                .map(|&j| {
                    let code = book.code(j);
                    scale
                        * sequence
                            .iter()
                            .zip(code)
                            .map(|(y, &c)| if c == 1 { *y } else { -*y })
                            .sum::<f64>()
                })
                .collect()
        }
    }
}

/// Decoded image on the plan's grid (raster order, inactive positions 0).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveredImage {
    pub columns: usize,
    pub rows: usize,
    /// Correlation outputs before clamping.
    pub raw: Vec<f64>,
    /// Scaled irradiances, clamped at zero.
    pub values: Vec<f64>,
    pub active: Vec<bool>,
    /// Brightest scaled irradiance used for normalization.
    pub normalization_reference: f64,
    pub mode: Mode,
    pub key_seed: u64,
    pub bits: usize,
    pub side: PdSide,
    /// Source index in overlapped active mode.
    pub source: Option<usize>,
}

impl RecoveredImage {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn at(&self, m: usize, n: usize) -> f64 {
        self.values[n * self.columns + m]
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Values divided by the normalization reference (zeros if it is zero).
    pub fn normalized(&self) -> Vec<f64> {
        let r = self.normalization_reference;
        self.values
            .iter()
            .map(|v| if r > 0.0 { v / r } else { 0.0 })
            .collect()
    }
}

/// Decodes one detector's carrier magnitudes into images: one for passive
/// modes, `P` for overlapped active mode (normalized across the set).
pub fn decode_spectra(
    spectra: &SpectralSets,
    plan: &CodingPlan,
    side: PdSide,
) -> Result<Vec<RecoveredImage>> {
    if spectra.bits != plan.bits() || spectra.channels != plan.channels() {
        return Err(Error::PlanMismatch(format!(
            "spectra are {}x{}, plan expects {}x{}",
            spectra.bits,
            spectra.channels,
            plan.bits(),
            plan.channels()
        )));
    }
    let grid = plan.grid();
    let sign = if side == PdSide::Pd2 && plan.mode().complement_inverts() {
        -1.0
    } else {
        1.0
    };
    let mut active = vec![false; grid.raster_len()];
    for &pos in grid.active() {
        active[grid.raster_index(pos)] = true;
    }
    let blank = RecoveredImage {
        columns: grid.columns(),
        rows: grid.rows(),
        raw: vec![0.0; grid.raster_len()],
        values: vec![0.0; grid.raster_len()],
        active,
        normalization_reference: 0.0,
        mode: plan.mode(),
        key_seed: plan.key_seed(),
        bits: plan.bits(),
        side,
        source: None,
    };
    let place = |img: &mut RecoveredImage, pixel: usize, raw: f64| {
        let r = grid.raster_index(grid.active()[pixel]);
        img.raw[r] = sign * raw;
        img.values[r] = (sign * raw).max(0.0);
    };

    let mut images = Vec::new();
    if plan.mode() == Mode::ActiveOverlapped {
        let all: Vec<usize> = (0..plan.sets()).collect();
        for p in 0..plan.channels() {
            let y = source_sequence(spectra, plan, p);
            let est = correlate(&y, plan.codes(), &all);
            let mut img = blank.clone();
            img.source = Some(p);
            for (j, e) in est.into_iter().enumerate() {
                place(&mut img, plan.set_members(j)[0], e);
            }
            images.push(img);
        }
        let reference = images.iter().map(RecoveredImage::peak).fold(0.0, f64::max);
        for img in &mut images {
            img.normalization_reference = reference;
        }
    } else {
        let mut img = blank;
        let members = (0..plan.sets())
            .map(|j| plan.set_members(j).len())
            .max()
            .unwrap_or(0);
        for member in 0..members {
            let sets: Vec<usize> = (0..plan.sets())
                .filter(|&j| plan.set_members(j).len() > member)
                .collect();
            let y = member_sequence(spectra, plan, member);
            for (j, e) in sets.iter().zip(correlate(&y, plan.codes(), &sets)) {
                place(&mut img, plan.set_members(*j)[member], e);
            }
        }
        img.normalization_reference = img.peak();
        images.push(img);
    }
    Ok(images)
}

/// Full decode of one detector stream.
pub fn decode_frame(stream: &SampleStream, plan: &CodingPlan) -> Result<Vec<RecoveredImage>> {
    let spectra = per_bit_spectra(stream, plan)?;
    decode_spectra(&spectra, plan, stream.side)
}

/// Independent decodes of both detectors of one frame.
pub fn decode_dual(
    streams: &DualStreams,
    plan: &CodingPlan,
) -> Result<(Vec<RecoveredImage>, Vec<RecoveredImage>)> {
    Ok((
        decode_frame(&streams.pd1, plan)?,
        decode_frame(&streams.pd2, plan)?,
    ))
}
