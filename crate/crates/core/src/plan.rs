//! Space-time-frequency coding plans.
//!
//! A [`CodingPlan`] assigns every active pixel a CDMA code (through its set
//! index), an FDMA carrier (through its member index within the set) and,
//! optionally, a per-bit hop of that carrier. It also fixes the timing: bit
//! time `T`, sample rate `f_s` and samples per bit `F = f_s * T`.
//!
//! Pixel positions are zero-based `(m, n)` = (column, row); raster order runs
//! along a row first.

use std::collections::HashSet;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::codes::{self, CodeBook};
use crate::error::{Error, Result};
use crate::keyed;

/// Tolerance used when deciding whether a frequency-time product is integral.
const INTEGRAL_TOL: f64 = 1e-9;

/// Version tag written into plan documents.
pub const PLAN_SCHEMA: &str = "caos-plan/1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "GridSpec", into = "GridSpec")]
pub struct PixelGrid {
    columns: usize,
    rows: usize,
    pixel_size: usize,
    active: Vec<(usize, usize)>,
    full_raster: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSpec {
    columns: usize,
    rows: usize,
    #[serde(default = "one")]
    pixel_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    active_pixels: Option<Vec<[usize; 2]>>,
}

fn one() -> usize {
    1
}

impl From<GridSpec> for PixelGrid {
    fn from(s: GridSpec) -> Self {
        match s.active_pixels {
            None => PixelGrid::raster(s.columns, s.rows).with_pixel_size(s.pixel_size),
            Some(list) => PixelGrid {
                columns: s.columns,
                rows: s.rows,
                pixel_size: s.pixel_size,
                active: list.into_iter().map(|[m, n]| (m, n)).collect(),
                full_raster: false,
            },
        }
    }
}

impl From<PixelGrid> for GridSpec {
    fn from(g: PixelGrid) -> Self {
        GridSpec {
            columns: g.columns,
            rows: g.rows,
            pixel_size: g.pixel_size,
            active_pixels: (!g.full_raster)
                .then(|| g.active.iter().map(|&(m, n)| [m, n]).collect()),
        }
    }
}

impl PixelGrid {
    /// Full `columns x rows` raster.
    pub fn raster(columns: usize, rows: usize) -> Self {
        let active = (0..rows)
            .flat_map(|n| (0..columns).map(move |m| (m, n)))
            .collect();
        PixelGrid {
            columns,
            rows,
            pixel_size: 1,
            active,
            full_raster: true,
        }
    }

    /// Sparse selection of pixels inside a `columns x rows` raster.
    pub fn sparse(columns: usize, rows: usize, active: Vec<(usize, usize)>) -> Result<Self> {
        let g = PixelGrid {
            columns,
            rows,
            pixel_size: 1,
            active,
            full_raster: false,
        };
        g.check()?;
        Ok(g)
    }

    pub fn with_pixel_size(mut self, micromirrors: usize) -> Self {
        self.pixel_size = micromirrors;
        self
    }

    pub fn columns(&self) -> usize {
        self.columns
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn pixel_size(&self) -> usize {
        self.pixel_size
    }

    /// Number of coded pixels `Q`.
    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn active(&self) -> &[(usize, usize)] {
        &self.active
    }

    /// Row-major index of a pixel position in a full raster image.
    pub fn raster_index(&self, (m, n): (usize, usize)) -> usize {
        n * self.columns + m
    }

    pub fn raster_len(&self) -> usize {
        self.columns * self.rows
    }

    pub fn position_index(&self, pos: (usize, usize)) -> Option<usize> {
        self.active.iter().position(|&p| p == pos)
    }

    pub fn check(&self) -> Result<()> {
        if self.active.is_empty() {
            return Err(Error::Invalid("pixel grid has no active pixels".into()));
        }
        let mut seen = HashSet::with_capacity(self.active.len());
        for &(m, n) in &self.active {
            if m >= self.columns || n >= self.rows {
                return Err(Error::Invalid(format!(
                    "pixel ({m}, {n}) outside {}x{} grid",
                    self.columns, self.rows
                )));
            }
            if !seen.insert((m, n)) {
                return Err(Error::Invalid(format!("pixel ({m}, {n}) listed twice")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Waveform {
    /// 50% duty 0/1 micromirror toggling.
    Square,
    /// `(1 + sin)/2` source modulation.
    Sine,
    /// Unmodulated on/off; the carrier is the DC bin.
    Dc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    PassiveFdmaCdma,
    FmCdma,
    PlainCdma,
    FmTdma,
    ActiveOverlapped,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::PassiveFdmaCdma,
        Mode::FmCdma,
        Mode::PlainCdma,
        Mode::FmTdma,
        Mode::ActiveOverlapped,
    ];

    pub fn default_waveform(self) -> Waveform {
        match self {
            Mode::ActiveOverlapped => Waveform::Sine,
            Mode::PlainCdma => Waveform::Dc,
            _ => Waveform::Square,
        }
    }

    /// Whether the complementary detector sees the modulated light during
    /// code-bit 0 (so its correlation comes out with inverted sign).
    pub fn complement_inverts(self) -> bool {
        matches!(self, Mode::PlainCdma | Mode::ActiveOverlapped)
    }

    pub fn is_passive(self) -> bool {
        !matches!(self, Mode::ActiveOverlapped)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Mode::PassiveFdmaCdma => "passive-fdma-cdma",
            Mode::FmCdma => "fm-cdma",
            Mode::PlainCdma => "plain-cdma",
            Mode::FmTdma => "fm-tdma",
            Mode::ActiveOverlapped => "active-overlapped",
        };
        f.write_str(s)
    }
}

/// Carrier frequencies and bit timing.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyPlan {
    fundamental: f64,
    bit_rate: f64,
    waveform: Waveform,
    freqs: Vec<f64>,
    explicit: bool,
    harmonics: u32,
}

impl FrequencyPlan {
    /// Octave-spaced carriers `f_p = 2^(p-1) f1`.
    pub fn octave(f1: f64, channels: usize, bit_rate: f64, waveform: Waveform) -> Self {
        let freqs = (0..channels).map(|p| f1 * (1u64 << p) as f64).collect();
        FrequencyPlan {
            fundamental: f1,
            bit_rate,
            waveform,
            freqs,
            explicit: false,
            harmonics: 1,
        }
    }

    pub fn explicit(freqs: Vec<f64>, bit_rate: f64, waveform: Waveform) -> Self {
        let f1 = freqs.first().copied().unwrap_or(0.0);
        FrequencyPlan {
            fundamental: f1,
            bit_rate,
            waveform,
            freqs,
            explicit: true,
            harmonics: 1,
        }
    }

    pub fn with_harmonics(mut self, h: u32) -> Self {
        self.harmonics = h.max(1);
        self
    }

    pub fn fundamental(&self) -> f64 {
        self.fundamental
    }

    pub fn channels(&self) -> usize {
        self.freqs.len()
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn waveform(&self) -> Waveform {
        self.waveform
    }

    pub fn is_explicit(&self) -> bool {
        self.explicit
    }

    pub fn harmonics(&self) -> u32 {
        self.harmonics
    }

    pub fn bit_rate(&self) -> f64 {
        self.bit_rate
    }

    /// Bit duration `T = 1 / f_b`.
    pub fn bit_time(&self) -> f64 {
        1.0 / self.bit_rate
    }

    /// FFT bin spacing `1 / T`.
    pub fn bin_spacing(&self) -> f64 {
        self.bit_rate
    }

    /// Carrier cycles per bit, `f_p * T`.
    pub fn cycles(&self) -> Vec<f64> {
        self.freqs.iter().map(|f| f / self.bit_rate).collect()
    }

    /// `k = f1 * T`.
    pub fn k(&self) -> f64 {
        self.fundamental / self.bit_rate
    }

    pub fn highest(&self) -> f64 {
        self.freqs.iter().copied().fold(0.0, f64::max)
    }
}

/// Which keyed protections a plan applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Security {
    /// Keyed shuffle of which pixel lands in which (set, channel) slot.
    pub spatial_shuffle: bool,
    /// Keyed reordering of code-book rows across sets, re-keyed per frame.
    pub code_reallocation: bool,
    /// One keyed channel permutation per bit, shared by all sets.
    pub hopping: bool,
}

impl Security {
    pub const NONE: Security = Security {
        spatial_shuffle: false,
        code_reallocation: false,
        hopping: false,
    };
    pub const ALL: Security = Security {
        spatial_shuffle: true,
        code_reallocation: true,
        hopping: true,
    };
}

/// Everything needed to rebuild a plan bit-for-bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanParams {
    pub grid: PixelGrid,
    pub mode: Mode,
    /// `P`; ignored when `frequencies_hz` is given.
    pub channels: usize,
    /// `f1`.
    pub fundamental_hz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequencies_hz: Option<Vec<f64>>,
    pub bit_rate_hz: f64,
    pub sample_rate_hz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waveform: Option<Waveform>,
    /// Square-wave harmonic count the sample rate must resolve.
    #[serde(default = "one_u32")]
    pub harmonics: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_code_length: Option<usize>,
    #[serde(default)]
    pub key_seed: u64,
    #[serde(default)]
    pub hopping: bool,
    /// Defaults to on whenever `key_seed != 0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spatial_shuffle: Option<bool>,
    /// Defaults to on whenever `key_seed != 0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code_reallocation: Option<bool>,
    #[serde(default)]
    pub frame_index: u64,
}

fn one_u32() -> u32 {
    1
}

impl PlanParams {
    pub fn new(
        grid: PixelGrid,
        mode: Mode,
        channels: usize,
        f1: f64,
        bit_rate: f64,
        fs: f64,
    ) -> Self {
        PlanParams {
            grid,
            mode,
            channels,
            fundamental_hz: f1,
            frequencies_hz: None,
            bit_rate_hz: bit_rate,
            sample_rate_hz: fs,
            waveform: None,
            harmonics: 1,
            min_code_length: None,
            key_seed: 0,
            hopping: false,
            spatial_shuffle: None,
            code_reallocation: None,
            frame_index: 0,
        }
    }

    pub fn with_key(mut self, key_seed: u64, hopping: bool) -> Self {
        self.key_seed = key_seed;
        self.hopping = hopping;
        self
    }

    pub fn with_frequencies(mut self, freqs: Vec<f64>) -> Self {
        self.channels = freqs.len();
        self.frequencies_hz = Some(freqs);
        self
    }

    pub fn with_security(mut self, s: Security) -> Self {
        self.spatial_shuffle = Some(s.spatial_shuffle);
        self.code_reallocation = Some(s.code_reallocation);
        self.hopping = s.hopping;
        self
    }

    pub fn security(&self) -> Security {
        let keyed = self.key_seed != 0;
        Security {
            spatial_shuffle: self.spatial_shuffle.unwrap_or(keyed),
            code_reallocation: self.code_reallocation.unwrap_or(keyed),
            hopping: self.hopping,
        }
    }

    pub fn waveform(&self) -> Waveform {
        self.waveform.unwrap_or(self.mode.default_waveform())
    }
}

/// Codes handed to pixel sets.
#[derive(Clone, Debug, PartialEq)]
pub enum CodeSet {
    Walsh(CodeBook),
    /// One-hot time slots; `slots[j]` is the bit at which set `j` is on.
    TimeSlots {
        slots: Vec<usize>,
    },
}

impl CodeSet {
    pub fn length(&self) -> usize {
        match self {
            CodeSet::Walsh(b) => b.length(),
            CodeSet::TimeSlots { slots } => slots.len(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            CodeSet::Walsh(b) => b.len(),
            CodeSet::TimeSlots { slots } => slots.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bit(&self, j: usize, w: usize) -> u8 {
        match self {
            CodeSet::Walsh(b) => b.bit(j, w),
            CodeSet::TimeSlots { slots } => u8::from(slots[j] == w),
        }
    }

    pub fn codebook(&self) -> Option<&CodeBook> {
        match self {
            CodeSet::Walsh(b) => Some(b),
            CodeSet::TimeSlots { .. } => None,
        }
    }
}

/// Where a pixel sits in the coding matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Slot {
    pub set: usize,
    pub member: usize,
}

/// Channel use of a pixel during one bit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChannelUse {
    /// Mirror parked for the whole bit.
    Parked,
    /// Toggling at carrier `p` (index into the frequency list).
    Carrier(usize),
    /// Overlapped active illumination: every source reaches the pixel.
    AllSources,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CodingElement {
    pub code_bit: u8,
    pub channel: ChannelUse,
}

#[derive(Clone, Debug)]
pub struct CodingPlan {
    params: PlanParams,
    freq_plan: FrequencyPlan,
    codes: CodeSet,
    sets: usize,
    assignment: Vec<Slot>,
    members: Vec<Vec<usize>>,
    hops: Option<Vec<Vec<usize>>>,
    phases: Vec<f64>,
    samples_per_bit: usize,
}

/// Number of pixel sets `J = ceil(Q / P)` and the size of each set.
pub fn pixel_sets(pixels: usize, channels: usize) -> (usize, Vec<usize>) {
    assert!(pixels >= 1 && channels >= 1);
    let sets = pixels.div_ceil(channels);
    let mut sizes = vec![channels; sets];
    sizes[sets - 1] = pixels - (sets - 1) * channels;
    (sets, sizes)
}

fn near_integer(x: f64) -> Option<u64> {
    let r = x.round();
    ((x - r).abs() <= INTEGRAL_TOL * x.abs().max(1.0) && r >= 0.0).then_some(r as u64)
}

/// Builds and validates a plan; timing and Nyquist violations are errors.
pub fn build_plan(params: PlanParams) -> Result<CodingPlan> {
    let plan = assemble(params)?;
    plan.check_timing()?;
    Ok(plan)
}

/// Builds a plan without the carrier timing checks, for diagnostics such as
/// mis-tuned carrier leakage. `F = f_s * T` must still be integral.
pub fn build_plan_unchecked(params: PlanParams) -> Result<CodingPlan> {
    assemble(params)
}

fn assemble(params: PlanParams) -> Result<CodingPlan> {
    params.grid.check()?;
    if !(params.bit_rate_hz > 0.0 && params.bit_rate_hz.is_finite()) {
        return Err(Error::Timing(format!(
            "bit rate must be positive, got {}",
            params.bit_rate_hz
        )));
    }
    let samples_per_bit = near_integer(params.sample_rate_hz / params.bit_rate_hz)
        .filter(|&f| f >= 2)
        .ok_or_else(|| {
            Error::Timing(format!(
                "samples per bit f_s*T = {} must be an integer >= 2",
                params.sample_rate_hz / params.bit_rate_hz
            ))
        })? as usize;

    let mode = params.mode;
    let waveform = params.waveform();
    let freq_plan = match mode {
        Mode::PlainCdma => FrequencyPlan::explicit(vec![0.0], params.bit_rate_hz, Waveform::Dc),
        Mode::FmCdma | Mode::FmTdma => {
            if params.channels != 1 || params.frequencies_hz.as_ref().is_some_and(|f| f.len() != 1)
            {
                return Err(Error::Invalid(format!("{mode} uses exactly one carrier")));
            }
            match &params.frequencies_hz {
                Some(f) => FrequencyPlan::explicit(f.clone(), params.bit_rate_hz, waveform),
                None => {
                    FrequencyPlan::octave(params.fundamental_hz, 1, params.bit_rate_hz, waveform)
                }
            }
        }
        Mode::PassiveFdmaCdma | Mode::ActiveOverlapped => match &params.frequencies_hz {
            Some(f) => FrequencyPlan::explicit(f.clone(), params.bit_rate_hz, waveform),
            None => FrequencyPlan::octave(
                params.fundamental_hz,
                params.channels,
                params.bit_rate_hz,
                waveform,
            ),
        },
    }
    .with_harmonics(params.harmonics);
    let channels = freq_plan.channels();
    if channels == 0 {
        return Err(Error::Invalid("at least one carrier is required".into()));
    }
    if mode == Mode::PassiveFdmaCdma && waveform == Waveform::Dc && channels > 1 {
        return Err(Error::Invalid(
            "unmodulated codes cannot share more than one channel".into(),
        ));
    }

    let q = params.grid.len();
    let security = params.security();
    let (sets, group) = match mode {
        Mode::ActiveOverlapped | Mode::FmTdma => (q, 1),
        Mode::FmCdma | Mode::PlainCdma => (q, 1),
        Mode::PassiveFdmaCdma => (pixel_sets(q, channels).0, channels),
    };

    let code_key = keyed::frame_key(params.key_seed, params.frame_index);
    let codes = if mode == Mode::FmTdma {
        let mut slots: Vec<usize> = (0..q).collect();
        if security.code_reallocation {
            slots = keyed::permutation(&mut keyed::keyed_rng(code_key, keyed::STREAM_CODES), q);
        }
        CodeSet::TimeSlots { slots }
    } else {
        let mut book = codes::codebook(sets, params.min_code_length)?;
        if security.code_reallocation {
            let order =
                keyed::permutation(&mut keyed::keyed_rng(code_key, keyed::STREAM_CODES), sets);
            book = book.permuted(&order);
        }
        CodeSet::Walsh(book)
    };
    let bits = codes.length();

    // Pixel order filling slots (set-major, member-minor).
    let order = if security.spatial_shuffle {
        keyed::permutation(
            &mut keyed::keyed_rng(params.key_seed, keyed::STREAM_SPATIAL),
            q,
        )
    } else {
        (0..q).collect()
    };
    let mut assignment = vec![Slot { set: 0, member: 0 }; q];
    let mut members = vec![Vec::new(); sets];
    for (slot, &pixel) in order.iter().enumerate() {
        let s = Slot {
            set: slot / group,
            member: slot % group,
        };
        assignment[pixel] = s;
        members[s.set].push(pixel);
    }

    let hops = security.hopping.then(|| {
        let mut rng = keyed::keyed_rng(params.key_seed, keyed::STREAM_HOPS);
        (0..bits)
            .map(|_| keyed::permutation(&mut rng, channels))
            .collect()
    });

    let phases = if waveform == Waveform::Sine && mode == Mode::ActiveOverlapped {
        let mut rng = keyed::keyed_rng(params.key_seed, keyed::STREAM_PHASES);
        (0..channels)
            .map(|_| {
                if params.key_seed == 0 {
                    0.0
                } else {
                    std::f64::consts::TAU * keyed::unit_interval(&mut rng)
                }
            })
            .collect()
    } else {
        vec![0.0; channels]
    };

    Ok(CodingPlan {
        params,
        freq_plan,
        codes,
        sets,
        assignment,
        members,
        hops,
        phases,
        samples_per_bit,
    })
}

impl CodingPlan {
    pub fn params(&self) -> &PlanParams {
        &self.params
    }

    pub fn grid(&self) -> &PixelGrid {
        &self.params.grid
    }

    pub fn mode(&self) -> Mode {
        self.params.mode
    }

    pub fn freq_plan(&self) -> &FrequencyPlan {
        &self.freq_plan
    }

    pub fn codes(&self) -> &CodeSet {
        &self.codes
    }

    pub fn key_seed(&self) -> u64 {
        self.params.key_seed
    }

    /// `Q`.
    pub fn pixels(&self) -> usize {
        self.params.grid.len()
    }

    /// `P`.
    pub fn channels(&self) -> usize {
        self.freq_plan.channels()
    }

    /// `J`.
    pub fn sets(&self) -> usize {
        self.sets
    }

    /// `W`.
    pub fn bits(&self) -> usize {
        self.codes.length()
    }

    /// `F = f_s * T`.
    pub fn samples_per_bit(&self) -> usize {
        self.samples_per_bit
    }

    pub fn sample_rate(&self) -> f64 {
        self.params.sample_rate_hz
    }

    pub fn bit_time(&self) -> f64 {
        self.freq_plan.bit_time()
    }

    /// `W * T` in seconds.
    pub fn frame_time(&self) -> f64 {
        self.bits() as f64 * self.bit_time()
    }

    pub fn frame_samples(&self) -> usize {
        self.bits() * self.samples_per_bit
    }

    pub fn assignment(&self) -> &[Slot] {
        &self.assignment
    }

    pub fn slot(&self, pixel: usize) -> Slot {
        self.assignment[pixel]
    }

    /// Pixels of set `j`, ordered by member index.
    pub fn set_members(&self, j: usize) -> &[usize] {
        &self.members[j]
    }

    pub fn hop_schedule(&self) -> Option<&[Vec<usize>]> {
        self.hops.as_deref()
    }

    /// Per-source carrier phases in radians (non-zero only for keyed active plans).
    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    /// Carrier cycles per bit for every frequency index.
    pub fn bins(&self) -> Vec<f64> {
        self.freq_plan.cycles()
    }

    /// Frequency index used by nominal channel `member` during bit `w`.
    pub fn channel_at(&self, member: usize, w: usize) -> usize {
        match &self.hops {
            Some(h) => h[w][member],
            None => member,
        }
    }

    pub fn code_bit(&self, pixel: usize, w: usize) -> u8 {
        self.codes.bit(self.assignment[pixel].set, w)
    }

    /// Coding-matrix element of `pixel` at bit `w`: code bit and carrier use.
    pub fn coding_element(&self, pixel: usize, w: usize) -> CodingElement {
        let slot = self.assignment[pixel];
        let code_bit = self.codes.bit(slot.set, w);
        let channel = match (code_bit, self.mode()) {
            (0, _) => ChannelUse::Parked,
            (_, Mode::ActiveOverlapped) => ChannelUse::AllSources,
            _ => ChannelUse::Carrier(self.channel_at(slot.member, w)),
        };
        CodingElement { code_bit, channel }
    }

    /// Same plan with its code allocation re-keyed for frame `frame`.
    pub fn for_frame(&self, frame: u64) -> Result<CodingPlan> {
        let mut p = self.params.clone();
        p.frame_index = frame;
        build_plan(p)
    }

    /// Same plan parameters under a different key.
    pub fn with_key_seed(&self, key_seed: u64) -> Result<CodingPlan> {
        let mut p = self.params.clone();
        p.key_seed = key_seed;
        assemble(p)
    }

    fn check_timing(&self) -> Result<()> {
        let report = validate(self);
        for c in &report.checks {
            if c.passed {
                continue;
            }
            return Err(match c.kind {
                CheckKind::Nyquist => Error::Nyquist {
                    sample_rate: self.sample_rate(),
                    required: self.required_sample_rate(),
                },
                CheckKind::Timing => Error::Timing(format!("{}: {}", c.name, c.detail)),
                CheckKind::Structure => Error::Invalid(format!("{}: {}", c.name, c.detail)),
            });
        }
        Ok(())
    }

    /// Sample rate needed by the highest carrier (and its resolved harmonics).
    pub fn required_sample_rate(&self) -> f64 {
        let h = if self.freq_plan.waveform() == Waveform::Square {
            self.freq_plan.harmonics()
        } else {
            1
        };
        2.0 * h as f64 * self.freq_plan.highest()
    }

    /// Writes the plan document: parameters plus derived summary.
    pub fn to_document(&self) -> Result<String> {
        let doc = PlanDocument {
            schema: PLAN_SCHEMA.to_string(),
            params: self.params.clone(),
            summary: PlanSummary::of(self),
        };
        toml::to_string(&doc).map_err(|e| Error::Format(e.to_string()))
    }

    /// Parses a plan document and rebuilds the plan, checking the summary.
    pub fn from_document(text: &str) -> Result<CodingPlan> {
        let doc: PlanDocument = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if doc.schema != PLAN_SCHEMA {
            return Err(Error::Format(format!(
                "unsupported plan schema {:?}",
                doc.schema
            )));
        }
        let plan = build_plan(doc.params)?;
        let rebuilt = PlanSummary::of(&plan);
        if rebuilt != doc.summary {
            return Err(Error::PlanMismatch(format!(
                "stored summary {:?} does not match rebuilt plan {:?}",
                doc.summary, rebuilt
            )));
        }
        Ok(plan)
    }

    /// CSV of the per-pixel assignment: position, set, member, code row, static carrier.
    pub fn write_assignment_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "pixel,m,n,set,member,code_row,carrier_hz")?;
        let freqs = self.freq_plan.freqs();
        for (i, (&(m, n), slot)) in self
            .grid()
            .active()
            .iter()
            .zip(&self.assignment)
            .enumerate()
        {
            let row = match &self.codes {
                CodeSet::Walsh(b) => b.source_rows()[slot.set],
                CodeSet::TimeSlots { slots } => slots[slot.set],
            };
            let carrier = if self.mode() == Mode::ActiveOverlapped {
                "all".to_string()
            } else {
                format!("{}", freqs[slot.member])
            };
            writeln!(
                out,
                "{i},{m},{n},{},{},{row},{carrier}",
                slot.set, slot.member
            )?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSummary {
    pub pixels: usize,
    pub channels: usize,
    pub sets: usize,
    pub code_length: usize,
    pub samples_per_bit: usize,
    pub frame_time_s: f64,
    pub frequencies_hz: Vec<f64>,
}

impl PlanSummary {
    pub fn of(plan: &CodingPlan) -> Self {
        PlanSummary {
            pixels: plan.pixels(),
            channels: plan.channels(),
            sets: plan.sets(),
            code_length: plan.bits(),
            samples_per_bit: plan.samples_per_bit(),
            frame_time_s: plan.frame_time(),
            frequencies_hz: plan.freq_plan().freqs().to_vec(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanDocument {
    schema: String,
    params: PlanParams,
    summary: PlanSummary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    Timing,
    Nyquist,
    Structure,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub kind: CheckKind,
    pub passed: bool,
    pub detail: String,
}

/// Outcome of [`validate`].
#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub summary: PlanSummary,
    pub dsp_gain_db: f64,
    /// Frame time of the single-channel plan on the same grid divided by this
    /// plan's frame time.
    pub speedup_vs_single_channel: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Frame length (bits) the single-carrier code-division plan would need for `q` pixels.
pub fn single_channel_bits(q: usize) -> usize {
    codes::smallest_supported_order(q + 1)
}

/// Checks every plan invariant and reports each outcome.
pub fn validate(plan: &CodingPlan) -> ValidationReport {
    let mut checks = Vec::new();
    let mut push = |name, kind, passed: bool, detail: String| {
        checks.push(Check {
            name,
            kind,
            passed,
            detail,
        });
    };
    let fp = plan.freq_plan();
    let f_count = plan.samples_per_bit();
    let cycles = fp.cycles();
    let mode = plan.mode();
    let waveform = fp.waveform();

    push(
        "grid",
        CheckKind::Structure,
        plan.grid().check().is_ok(),
        format!("Q = {}", plan.pixels()),
    );

    if waveform != Waveform::Dc {
        let k = fp.k();
        let ok = k >= 1.0 - INTEGRAL_TOL && near_integer(k).is_some();
        push(
            "carrier-cycles-k",
            CheckKind::Timing,
            ok,
            format!("k = f1*T = {k}"),
        );
        let bad: Vec<String> = cycles
            .iter()
            .zip(fp.freqs())
            .filter(|(c, _)| near_integer(**c).is_none_or(|b| b == 0))
            .map(|(c, f)| format!("{f} Hz -> {c} cycles"))
            .collect();
        push(
            "carriers-on-bins",
            CheckKind::Timing,
            bad.is_empty(),
            bad.join("; "),
        );
    }
    push(
        "samples-per-bit",
        CheckKind::Timing,
        f_count >= 2,
        format!("F = {f_count}"),
    );

    let required = plan.required_sample_rate();
    let nyq_ok = waveform == Waveform::Dc
        || (plan.sample_rate() > 2.0 * fp.highest() && plan.sample_rate() >= required);
    push(
        "nyquist",
        CheckKind::Nyquist,
        nyq_ok,
        format!("f_s = {} Hz, required {} Hz", plan.sample_rate(), required),
    );

    if waveform == Waveform::Square {
        let misaligned: Vec<String> = cycles
            .iter()
            .filter(|&&c| {
                let half = f_count as f64 / (2.0 * c);
                near_integer(half).is_none_or(|h| h == 0)
            })
            .map(|c| format!("{c} cycles"))
            .collect();
        push(
            "square-edges-aligned",
            CheckKind::Timing,
            misaligned.is_empty(),
            misaligned.join("; "),
        );

        let mut clashes = Vec::new();
        let bins: Vec<Option<u64>> = cycles.iter().map(|&c| near_integer(c)).collect();
        let f = f_count as u64;
        for (p, bp) in bins.iter().enumerate() {
            let Some(bp) = *bp else { continue };
            for (q, bq) in bins.iter().enumerate() {
                let Some(bq) = *bq else { continue };
                if p == q {
                    continue;
                }
                let hit = (3..f.max(3)).step_by(2).any(|h| {
                    let a = (h * bp) % f;
                    a == bq || f - a == bq
                });
                if hit {
                    clashes.push(format!(
                        "odd harmonic of channel {} lands on channel {}",
                        p + 1,
                        q + 1
                    ));
                }
            }
        }
        push(
            "odd-harmonics-clear",
            CheckKind::Timing,
            clashes.is_empty(),
            clashes.join("; "),
        );
    }

    let distinct: HashSet<u64> = fp.freqs().iter().map(|f| f.to_bits()).collect();
    push(
        "distinct-carriers",
        CheckKind::Structure,
        distinct.len() == fp.channels(),
        format!("{} carriers", fp.channels()),
    );

    let q = plan.pixels();
    let expected_sets = match mode {
        Mode::PassiveFdmaCdma => pixel_sets(q, plan.channels()).0,
        _ => q,
    };
    push(
        "set-count",
        CheckKind::Structure,
        plan.sets() == expected_sets,
        format!("J = {}, expected {}", plan.sets(), expected_sets),
    );

    let code_ok = match plan.codes() {
        CodeSet::Walsh(b) => {
            b.len() == plan.sets()
                && b.length() > b.len()
                && b.codes()
                    .all(|c| 2 * c.iter().filter(|&&x| x == 1).count() == b.length())
        }
        CodeSet::TimeSlots { slots } => {
            let s: HashSet<_> = slots.iter().collect();
            s.len() == slots.len() && slots.iter().all(|&x| x < slots.len())
        }
    };
    push(
        "codes",
        CheckKind::Structure,
        code_ok,
        format!("W = {}", plan.bits()),
    );

    let mut pairs = HashSet::new();
    let unique = plan
        .assignment()
        .iter()
        .all(|s| pairs.insert((s.set, s.member)));
    let members_ok = match mode {
        Mode::PassiveFdmaCdma => plan.assignment().iter().all(|s| s.member < plan.channels()),
        _ => plan.assignment().iter().all(|s| s.member == 0),
    };
    push(
        "unique-code-channel",
        CheckKind::Structure,
        unique && members_ok,
        "each (code, channel) pair used at most once".into(),
    );

    if let Some(h) = plan.hop_schedule() {
        let p = plan.channels();
        let ok = h.len() == plan.bits()
            && h.iter().all(|perm| {
                let mut s = perm.clone();
                s.sort_unstable();
                s == (0..p).collect::<Vec<_>>()
            });
        push(
            "hop-schedule",
            CheckKind::Structure,
            ok,
            format!("{} bit permutations", h.len()),
        );
    }

    let summary = PlanSummary::of(plan);
    let single = single_channel_bits(q) as f64 * plan.bit_time();
    ValidationReport {
        checks,
        dsp_gain_db: crate::decode::dsp_gain_db(f_count),
        speedup_vs_single_channel: single / plan.frame_time(),
        summary,
    }
}
