//! Streaming capture: synthesize, add noise, digitize and read the carrier
//! bins one bit at a time without holding the frame in memory.
//!
//! Gives the same magnitudes as `per_bit_spectra(adc(add_noise(synthesize())))`
//! because every stage is per-bit and draws from the same keyed streams.

use rayon::prelude::*;

use crate::decode::{BinReader, SpectralSets};
use crate::error::Result;
use crate::keyed;
use crate::plan::CodingPlan;
use crate::scene::{DetectorModel, Scene};
use crate::sensor::{bit_noise, pink_noise, quantize, PdSide, Synthesizer};

/// Noise seed used for one detector of a dual capture.
pub fn side_seed(seed: u64, side: PdSide) -> u64 {
    match side {
        PdSide::Pd1 => seed,
        PdSide::Pd2 => keyed::frame_key(seed ^ 0x5044_3200, 1),
    }
}

/// Carrier-bin magnitudes of one detector for one frame.
pub fn capture_spectra(
    plan: &CodingPlan,
    scene: &Scene,
    detector: &DetectorModel,
    side: PdSide,
    seed: u64,
) -> Result<SpectralSets> {
    let synth = Synthesizer::new(plan, scene, detector)?;
    let reader = BinReader::new(plan);
    let f = plan.samples_per_bit();
    let pink = detector.pink_noise.map(|p| {
        pink_noise(
            plan.frame_samples(),
            plan.sample_rate(),
            p.amplitude,
            p.exponent,
            seed,
        )
    });
    let mut sets = SpectralSets::zeros(plan.bits(), plan.channels(), reader.gains().to_vec());
    sets.magnitudes
        .par_chunks_mut(plan.channels())
        .enumerate()
        .for_each_init(
            || vec![0.0; f],
            |buf, (w, row)| {
                synth.bit(w, side, buf);
                bit_noise(detector, seed, w, buf);
                if let Some(p) = &pink {
                    for (x, n) in buf.iter_mut().zip(&p[w * f..(w + 1) * f]) {
                        *x += n;
                    }
                }
                if let Some(a) = &detector.adc {
                    for x in buf.iter_mut() {
                        *x = quantize(*x, a);
                    }
                }
                reader.read(buf, row);
            },
        );
    Ok(sets)
}

/// Both detectors of one frame, each with its own model and noise seed.
pub fn capture_dual(
    plan: &CodingPlan,
    scene: &Scene,
    pd1: &DetectorModel,
    pd2: &DetectorModel,
    seed: u64,
) -> Result<(SpectralSets, SpectralSets)> {
    Ok((
        capture_spectra(plan, scene, pd1, PdSide::Pd1, side_seed(seed, PdSide::Pd1))?,
        capture_spectra(plan, scene, pd2, PdSide::Pd2, side_seed(seed, PdSide::Pd2))?,
    ))
}
