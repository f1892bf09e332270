//! Stylized 12-lead generator. Each class is a beat template plus a rhythm rule; "hard"
//! records get baseline drift, large interference bursts and heavier white noise, and
//! "flipped" records keep a clean signal under a wrong label.

use std::f64::consts::TAU;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, EcgRecord, CLASS_COUNT, LEAD_COUNT, SAMPLE_RATE};
use crate::seed::{derive_seed, rng_for, stream};

/// Lead order: I, II, III, aVR, aVL, aVF, V1..V6.
const QRS_GAIN: [f64; LEAD_COUNT] = [1.0, 1.3, 0.5, -1.1, 0.3, 0.9, -0.5, 0.3, 0.8, 1.3, 1.2, 1.0];
const P_GAIN: [f64; LEAD_COUNT] = [0.8, 1.0, 0.4, -0.9, 0.3, 0.7, 0.4, 0.5, 0.6, 0.7, 0.7, 0.6];
const T_GAIN: [f64; LEAD_COUNT] = [0.8, 1.0, 0.4, -0.9, 0.3, 0.7, 0.1, 0.6, 0.9, 1.0, 0.9, 0.7];
/// Ventricular ectopics conduct along an abnormal axis.
const PVC_GAIN: [f64; LEAD_COUNT] = [-0.6, -1.0, -1.2, 0.8, 0.9, -1.1, 1.2, 1.1, 0.6, -0.4, -0.8, -0.9];
/// Fibrillatory activity is most visible in V1 and the inferior leads.
const F_GAIN: [f64; LEAD_COUNT] = [0.3, 0.7, 0.8, -0.4, 0.2, 0.8, 1.0, 0.7, 0.4, 0.3, 0.3, 0.2];
const RIGHT_PRECORDIAL: [usize; 3] = [6, 7, 8];
const LATERAL: [usize; 4] = [0, 4, 10, 11];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BundleSide {
    Left,
    Right,
}

/// The feature that sets a class apart from the normal template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Signature {
    None,
    /// No P waves; continuous oscillation at `frequency_hz`.
    FibrillatoryWaves {
        amplitude: f64,
        frequency_hz: f64,
    },
    BundleBranchBlock {
        side: BundleSide,
    },
    /// Every other beat arrives after `prematurity * RR` with an inverted P wave.
    PrematureAtrial {
        prematurity: f64,
    },
    /// Every other beat is an early, wide beat of `amplitude` times the QRS height, no P wave.
    PrematureVentricular {
        prematurity: f64,
        amplitude: f64,
    },
}

/// Waveform descriptors of one class. Times in seconds, amplitudes in millivolts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMorphology {
    pub heart_rate_bpm: (f64, f64),
    /// Half-width of the uniform relative RR jitter.
    pub rr_irregularity: f64,
    pub p_amplitude: f64,
    pub p_width: f64,
    pub pr_interval: f64,
    pub qrs_amplitude: f64,
    pub qrs_width: f64,
    pub t_amplitude: f64,
    pub t_width: f64,
    /// Level shift of the ST segment.
    pub st_offset: f64,
    pub signature: Signature,
}

impl ClassMorphology {
    fn normal() -> Self {
        ClassMorphology {
            heart_rate_bpm: (65.0, 95.0),
            rr_irregularity: 0.03,
            p_amplitude: 0.15,
            p_width: 0.022,
            pr_interval: 0.16,
            qrs_amplitude: 1.2,
            qrs_width: 0.09,
            t_amplitude: 0.3,
            t_width: 0.045,
            st_offset: 0.0,
            signature: Signature::None,
        }
    }

    /// Default templates in label order.
    pub fn defaults() -> Vec<ClassMorphology> {
        let normal = Self::normal();
        vec![
            normal.clone(),
            ClassMorphology {
                heart_rate_bpm: (75.0, 115.0),
                rr_irregularity: 0.3,
                p_amplitude: 0.0,
                signature: Signature::FibrillatoryWaves {
                    amplitude: 0.1,
                    frequency_hz: 6.0,
                },
                ..normal.clone()
            },
            ClassMorphology {
                pr_interval: 0.3,
                ..normal.clone()
            },
            ClassMorphology {
                qrs_width: 0.16,
                signature: Signature::BundleBranchBlock { side: BundleSide::Left },
                ..normal.clone()
            },
            ClassMorphology {
                qrs_width: 0.13,
                signature: Signature::BundleBranchBlock {
                    side: BundleSide::Right,
                },
                ..normal.clone()
            },
            ClassMorphology {
                signature: Signature::PrematureAtrial { prematurity: 0.62 },
                ..normal.clone()
            },
            ClassMorphology {
                signature: Signature::PrematureVentricular {
                    prematurity: 0.6,
                    amplitude: 1.5,
                },
                ..normal.clone()
            },
            ClassMorphology {
                st_offset: -0.18,
                ..normal.clone()
            },
            ClassMorphology {
                st_offset: 0.22,
                ..normal
            },
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Peak drift of hard records (mV).
    pub baseline_drift_amplitude: f64,
    /// Drift frequency range (Hz).
    pub drift_frequency: (f64, f64),
    /// Expected interference bursts per second in hard records.
    pub interference_burst_rate: f64,
    pub burst_amplitude: f64,
    /// White noise on every record.
    pub white_noise_sigma: f64,
    /// White noise on hard records (replaces `white_noise_sigma`).
    pub hard_white_noise_sigma: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            baseline_drift_amplitude: 1.5,
            drift_frequency: (0.2, 1.2),
            interference_burst_rate: 3.0,
            burst_amplitude: 2.0,
            white_noise_sigma: 0.01,
            hard_white_noise_sigma: 0.4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub records_per_class: usize,
    pub class_morphology: Vec<ClassMorphology>,
    pub noise: NoiseConfig,
    pub hard_fraction: f64,
    pub label_flip_fraction: f64,
    /// Record duration range in seconds, within 6..=60.
    pub duration_secs: (f64, f64),
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            records_per_class: 200,
            class_morphology: ClassMorphology::defaults(),
            noise: NoiseConfig::default(),
            hard_fraction: 0.3,
            label_flip_fraction: 0.05,
            duration_secs: (6.0, 60.0),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let fail = |m: String| Err(DataError::InvalidSynthConfig(m));
        if self.class_morphology.len() != CLASS_COUNT {
            return fail(format!(
                "expected {CLASS_COUNT} class morphologies, got {}",
                self.class_morphology.len()
            ));
        }
        for (name, v) in [
            ("hard_fraction", self.hard_fraction),
            ("label_flip_fraction", self.label_flip_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return fail(format!("{name} {v} outside [0, 1]"));
            }
        }
        if self.hard_fraction + self.label_flip_fraction > 1.0 {
            return fail("hard_fraction + label_flip_fraction exceeds 1".into());
        }
        let (lo, hi) = self.duration_secs;
        if !(6.0 <= lo && lo <= hi && hi <= 60.0) {
            return fail(format!(
                "duration range ({lo}, {hi}) must satisfy 6 <= min <= max <= 60"
            ));
        }
        let n = &self.noise;
        let magnitudes = [
            n.baseline_drift_amplitude,
            n.interference_burst_rate,
            n.burst_amplitude,
            n.white_noise_sigma,
            n.hard_white_noise_sigma,
        ];
        if magnitudes.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return fail("noise amplitudes, rates and sigmas must be finite and non-negative".into());
        }
        let (f_lo, f_hi) = n.drift_frequency;
        if !(0.0 < f_lo && f_lo <= f_hi && f_hi.is_finite()) {
            return fail(format!(
                "drift frequency range ({f_lo}, {f_hi}) must be positive and ordered"
            ));
        }
        for (c, m) in self.class_morphology.iter().enumerate() {
            let (a, b) = m.heart_rate_bpm;
            if !(a > 0.0 && a <= b) || !(0.0..0.9).contains(&m.rr_irregularity) {
                return fail(format!("class {c}: invalid rate range or irregularity"));
            }
            if m.p_width <= 0.0 || m.qrs_width <= 0.0 || m.t_width <= 0.0 {
                return fail(format!("class {c}: widths must be positive"));
            }
        }
        Ok(())
    }
}

/// Generator-side facts about each record.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub id: String,
    pub clean_label: u8,
    pub is_hard: bool,
    pub is_flipped: bool,
    /// Mean square of all added noise (mV^2).
    pub noise_energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub dataset: Dataset,
    pub truth: Vec<GroundTruth>,
}

#[derive(Clone, Copy, PartialEq)]
enum Role {
    Clean,
    Hard,
    Flipped,
}

/// Generates `records_per_class` records per class, ordered class by class.
pub fn generate(config: &SynthConfig) -> Result<SynthOutput, DataError> {
    config.validate()?;
    let n = config.records_per_class;
    let n_flip = (config.label_flip_fraction * n as f64).round() as usize;
    let n_hard = ((config.hard_fraction * n as f64).round() as usize).min(n - n_flip);
    let base = derive_seed(config.seed, stream::SYNTH);
    let mut records = Vec::with_capacity(n * CLASS_COUNT);
    let mut truth = Vec::with_capacity(n * CLASS_COUNT);
    for (class, morph) in config.class_morphology.iter().enumerate() {
        let mut roles = vec![Role::Clean; n];
        roles[..n_flip].fill(Role::Flipped);
        roles[n_flip..n_flip + n_hard].fill(Role::Hard);
        roles.shuffle(&mut rng_for(base, class as u64));
        for (j, &role) in roles.iter().enumerate() {
            let index = class * n + j;
            let mut rng = rng_for(base, (CLASS_COUNT + index) as u64);
            let id = format!("rec{index:05}");
            let (samples, noise_energy) =
                synthesize(morph, &config.noise, role == Role::Hard, config.duration_secs, &mut rng);
            let label = if role == Role::Flipped {
                let shift = rng.random_range(1..CLASS_COUNT);
                ((class + shift) % CLASS_COUNT) as u8
            } else {
                class as u8
            };
            records.push(EcgRecord::new(id.clone(), label, LEAD_COUNT, samples).expect("lead-major samples"));
            truth.push(GroundTruth {
                id,
                clean_label: class as u8,
                is_hard: role == Role::Hard,
                is_flipped: role == Role::Flipped,
                noise_energy,
            });
        }
    }
    Ok(SynthOutput {
        dataset: Dataset { records },
        truth,
    })
}

fn gauss(t: f64, sigma: f64) -> f64 {
    (-0.5 * (t / sigma) * (t / sigma)).exp()
}

fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

#[derive(Clone, Copy, PartialEq)]
enum BeatKind {
    Sinus,
    AtrialEctopic,
    VentricularEctopic,
}

struct Beat {
    time: f64,
    kind: BeatKind,
    rr: f64,
}

fn beat_schedule<R: Rng + ?Sized>(m: &ClassMorphology, duration: f64, rng: &mut R) -> Vec<Beat> {
    let rate = rng.random_range(m.heart_rate_bpm.0..=m.heart_rate_bpm.1);
    let rr0 = 60.0 / rate;
    let (ectopic, prematurity) = match m.signature {
        Signature::PrematureAtrial { prematurity } => (Some(BeatKind::AtrialEctopic), prematurity),
        Signature::PrematureVentricular { prematurity, .. } => (Some(BeatKind::VentricularEctopic), prematurity),
        _ => (None, 1.0),
    };
    let mut parity = rng.random_range(0..2usize);
    let mut t = -rng.random_range(0.0..rr0) - 0.5;
    let mut prev = BeatKind::Sinus;
    let mut beats = Vec::new();
    while t < duration + 0.6 {
        let jitter = 1.0 + m.rr_irregularity * rng.random_range(-1.0..1.0);
        let kind = match ectopic {
            Some(k) if parity % 2 == 1 => k,
            _ => BeatKind::Sinus,
        };
        let rr = match (prev, kind) {
            (_, BeatKind::Sinus) if prev == BeatKind::VentricularEctopic => rr0 * (2.0 - prematurity),
            (_, BeatKind::Sinus) => rr0 * jitter,
            _ => rr0 * prematurity * jitter,
        };
        t += rr;
        beats.push(Beat { time: t, kind, rr });
        prev = kind;
        parity += 1;
    }
    beats
}

/// Adds one beat centred on its R peak into every lead.
fn render_beat(m: &ClassMorphology, beat: &Beat, gains: &LeadGains, leads: &mut [Vec<f64>]) {
    let len = leads[0].len();
    let window = (-0.45, 0.6);
    let first = ((beat.time + window.0) * SAMPLE_RATE).ceil().max(0.0) as usize;
    let last = (((beat.time + window.1) * SAMPLE_RATE).floor().max(-1.0) + 1.0) as usize;
    let last = last.min(len);
    if first >= last {
        return;
    }
    let qw = match beat.kind {
        BeatKind::VentricularEctopic => 0.16,
        _ => m.qrs_width,
    };
    let t_delay = 0.22 + 0.12 * beat.rr.min(1.5);
    let st_end = t_delay - 0.04;
    for (lead, samples) in leads.iter_mut().enumerate() {
        let g = gains.scale * gains.jitter[lead];
        let (qrs_gain, t_gain, p_gain) = match beat.kind {
            BeatKind::VentricularEctopic => {
                let q = PVC_GAIN[lead];
                let amp = match m.signature {
                    Signature::PrematureVentricular { amplitude, .. } => amplitude,
                    _ => 1.0,
                };
                (q * amp, -0.6 * q.signum() * T_GAIN[lead].abs().max(0.3), 0.0)
            }
            BeatKind::AtrialEctopic => (QRS_GAIN[lead], T_GAIN[lead], -0.8 * P_GAIN[lead]),
            BeatKind::Sinus => (QRS_GAIN[lead], T_GAIN[lead], P_GAIN[lead]),
        };
        let bundle = match (&m.signature, beat.kind) {
            (Signature::BundleBranchBlock { side }, BeatKind::Sinus) => Some(*side),
            _ => None,
        };
        let (qrs_gain, t_gain) = match bundle {
            Some(BundleSide::Left) if RIGHT_PRECORDIAL.contains(&lead) => (-1.3, 0.5),
            Some(BundleSide::Left) => (qrs_gain, -0.5 * qrs_gain.signum() * t_gain.abs()),
            _ => (qrs_gain, t_gain),
        };
        let p_amp = m.p_amplitude * p_gain;
        let pr = if beat.kind == BeatKind::AtrialEctopic {
            0.13
        } else {
            m.pr_interval
        };
        let st = m.st_offset * if lead == 3 { -1.0 } else { 1.0 };
        for (i, s) in samples.iter_mut().enumerate().take(last).skip(first) {
            let d = i as f64 / SAMPLE_RATE - beat.time;
            let mut v = p_amp * gauss(d + pr, m.p_width);
            let r = match bundle {
                Some(BundleSide::Left) => 0.75 * gauss(d + 0.025, qw / 5.0) + 0.75 * gauss(d - 0.03, qw / 5.0),
                _ => gauss(d, qw / 5.0),
            };
            let qrs = -0.15 * gauss(d + 0.4 * qw, qw / 7.0) + r - 0.3 * gauss(d - 0.4 * qw, qw / 7.0);
            v += m.qrs_amplitude * qrs_gain * qrs;
            if bundle == Some(BundleSide::Right) {
                if RIGHT_PRECORDIAL[..2].contains(&lead) {
                    v += 0.8 * m.qrs_amplitude * gauss(d - 0.07, qw / 7.0);
                } else if LATERAL.contains(&lead) {
                    v -= 0.35 * m.qrs_amplitude * gauss(d - 0.07, 0.022);
                }
            }
            if st != 0.0 {
                v += st * logistic((d - 0.5 * qw - 0.02) / 0.01) * logistic((st_end - d) / 0.02);
            }
            v += m.t_amplitude * t_gain * gauss(d - t_delay, m.t_width);
            *s += g * v;
        }
    }
}

struct LeadGains {
    scale: f64,
    jitter: [f64; LEAD_COUNT],
}

/// Returns lead-major samples and the mean square of the added noise.
fn synthesize<R: Rng + ?Sized>(
    m: &ClassMorphology,
    noise: &NoiseConfig,
    hard: bool,
    duration_range: (f64, f64),
    rng: &mut R,
) -> (Vec<f32>, f64) {
    let duration = rng.random_range(duration_range.0..=duration_range.1);
    let len = (duration * SAMPLE_RATE).round() as usize;
    let mut gains = LeadGains {
        scale: rng.random_range(0.8..1.2),
        jitter: [1.0; LEAD_COUNT],
    };
    for j in gains.jitter.iter_mut() {
        *j = 1.0 + 0.15 * rng.random_range(-1.0..1.0);
    }
    let mut leads = vec![vec![0.0f64; len]; LEAD_COUNT];
    for beat in beat_schedule(m, duration, rng) {
        render_beat(m, &beat, &gains, &mut leads);
    }
    if let Signature::FibrillatoryWaves {
        amplitude,
        frequency_hz,
    } = m.signature
    {
        let f1 = frequency_hz * rng.random_range(0.85..1.15);
        let f2 = f1 * rng.random_range(1.5..1.9);
        for (lead, samples) in leads.iter_mut().enumerate() {
            let (p1, p2) = (rng.random_range(0.0..TAU), rng.random_range(0.0..TAU));
            let a = amplitude * F_GAIN[lead] * gains.scale;
            for (i, s) in samples.iter_mut().enumerate() {
                let t = i as f64 / SAMPLE_RATE;
                *s += a * ((TAU * f1 * t + p1).sin() + 0.5 * (TAU * f2 * t + p2).sin());
            }
        }
    }

    let mut added = vec![vec![0.0f64; len]; LEAD_COUNT];
    // Hard records span a range of corruption levels.
    let severity = if hard { rng.random_range(0.5..1.5) } else { 1.0 };
    let sigma = if hard {
        noise.hard_white_noise_sigma * severity
    } else {
        noise.white_noise_sigma
    };
    if sigma > 0.0 {
        let white = Normal::new(0.0, sigma).expect("finite sigma");
        for lead in added.iter_mut() {
            for v in lead.iter_mut() {
                *v = white.sample(rng);
            }
        }
    }
    if hard {
        for lead in added.iter_mut() {
            if rng.random_bool(0.7) {
                let amp = severity * noise.baseline_drift_amplitude * rng.random_range(0.5..1.0);
                let (lo, hi) = noise.drift_frequency;
                let f = rng.random_range(lo..=hi);
                let phase = rng.random_range(0.0..TAU);
                for (i, v) in lead.iter_mut().enumerate() {
                    *v += amp * (TAU * f * i as f64 / SAMPLE_RATE + phase).sin();
                }
            }
        }
        let expected = severity * noise.interference_burst_rate * duration;
        let bursts = expected.floor() as usize + usize::from(rng.random_bool(expected.fract()));
        for _ in 0..bursts {
            let center = rng.random_range(0.0..duration);
            let width = rng.random_range(0.03..0.15);
            let amp = severity
                * noise.burst_amplitude
                * rng.random_range(0.5..1.5)
                * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let freq = if rng.random_bool(0.5) {
                0.0
            } else {
                rng.random_range(8.0..25.0)
            };
            let affected = rng.random_range(2..=8);
            let mut lead_ids: Vec<usize> = (0..LEAD_COUNT).collect();
            lead_ids.shuffle(rng);
            let lo = (((center - 4.0 * width) * SAMPLE_RATE).max(0.0)) as usize;
            let hi = (((center + 4.0 * width) * SAMPLE_RATE) as usize).min(len);
            for &lead in &lead_ids[..affected] {
                for (i, v) in added[lead].iter_mut().enumerate().take(hi).skip(lo) {
                    let d = i as f64 / SAMPLE_RATE - center;
                    *v += amp * gauss(d, width) * (TAU * freq * d).cos();
                }
            }
        }
    }

    let mut energy = 0.0;
    let mut samples = Vec::with_capacity(LEAD_COUNT * len);
    for (signal, extra) in leads.iter().zip(&added) {
        for (&s, &e) in signal.iter().zip(extra) {
            energy += e * e;
            samples.push((s + e) as f32);
        }
    }
    (samples, energy / (LEAD_COUNT * len).max(1) as f64)
}

/// Sidecar CSV: `id,clean_label,is_hard,is_flipped,noise_energy`.
pub fn write_truth_csv<W: Write>(truth: &[GroundTruth], writer: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "clean_label", "is_hard", "is_flipped", "noise_energy"])?;
    for t in truth {
        w.write_record([
            t.id.clone(),
            t.clean_label.to_string(),
            u8::from(t.is_hard).to_string(),
            u8::from(t.is_flipped).to_string(),
            format!("{:e}", t.noise_energy),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_truth_csv<R: Read>(reader: R) -> Result<Vec<GroundTruth>, DataError> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (line, row) in r.records().enumerate() {
        let row = row?;
        let bad = |field: &str| DataError::Malformed {
            offset: line as u64 + 2,
            reason: format!("truth row field {field} unparsable"),
        };
        let field = |i: usize| row.get(i).unwrap_or("");
        out.push(GroundTruth {
            id: field(0).to_string(),
            clean_label: field(1).parse().map_err(|_| bad("clean_label"))?,
            is_hard: field(2) == "1",
            is_flipped: field(3) == "1",
            noise_energy: field(4).parse().map_err(|_| bad("noise_energy"))?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(per_class: usize) -> SynthConfig {
        SynthConfig {
            records_per_class: per_class,
            duration_secs: (6.0, 7.0),
            seed: 11,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn uniform_class_histogram() {
        let out = generate(&SynthConfig {
            hard_fraction: 0.0,
            label_flip_fraction: 0.0,
            ..small(10)
        })
        .unwrap();
        assert_eq!(out.dataset.len(), 90);
        let mut hist = [0usize; CLASS_COUNT];
        for r in &out.dataset.records {
            hist[r.label as usize] += 1;
            assert_eq!(r.lead_count(), 12);
            assert!((6.0..=7.0).contains(&r.duration_secs()));
        }
        assert_eq!(hist, [10; CLASS_COUNT]);
    }

    #[test]
    fn same_seed_same_records() {
        let a = generate(&small(3)).unwrap();
        let b = generate(&small(3)).unwrap();
        assert_eq!(a, b);
        let c = generate(&SynthConfig { seed: 12, ..small(3) }).unwrap();
        assert_ne!(a.dataset, c.dataset);
    }

    #[test]
    fn roles_are_disjoint_and_counted() {
        let out = generate(&small(20)).unwrap();
        let hard = out.truth.iter().filter(|t| t.is_hard).count();
        let flipped = out.truth.iter().filter(|t| t.is_flipped).count();
        assert_eq!(hard, 9 * 6);
        assert_eq!(flipped, 9);
        for (t, r) in out.truth.iter().zip(&out.dataset.records) {
            assert!(!(t.is_hard && t.is_flipped));
            assert_eq!(t.is_flipped, t.clean_label != r.label);
        }
    }

    #[test]
    fn hard_records_carry_more_noise() {
        let out = generate(&small(10)).unwrap();
        let mean = |hard: bool| {
            let v: Vec<f64> = out
                .truth
                .iter()
                .filter(|t| t.is_hard == hard)
                .map(|t| t.noise_energy)
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!(mean(true) > 10.0 * mean(false));
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(generate(&SynthConfig {
            hard_fraction: 1.2,
            ..small(1)
        })
        .is_err());
        assert!(generate(&SynthConfig {
            duration_secs: (3.0, 8.0),
            ..small(1)
        })
        .is_err());
        assert!(generate(&SynthConfig {
            hard_fraction: 0.7,
            label_flip_fraction: 0.5,
            ..small(1)
        })
        .is_err());
    }

    #[test]
    fn truth_csv_round_trip() {
        let out = generate(&small(2)).unwrap();
        let mut buf = Vec::new();
        write_truth_csv(&out.truth, &mut buf).unwrap();
        let back = read_truth_csv(buf.as_slice()).unwrap();
        assert_eq!(back, out.truth);
    }
}
