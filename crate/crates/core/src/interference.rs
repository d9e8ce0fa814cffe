//! Sum-of-tones interference and its leakage onto the data tones.
//!
//! Tone positions are given in DFT-bin units of the band they fall in, so
//! `52.5` sits midway between bins 52 and 53. The forward DFT is unnormalized:
//! an on-bin tone of amplitude `a` yields `dft_size * a` on its bin.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::BandPlan;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fading {
    #[default]
    None,
    Rayleigh,
}

/// One complex exponential interferer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToneInterferer {
    /// Frequency in DFT-bin units, `0 <= position < dft_size`.
    pub position: f64,
    /// Band (zero based) that contains the tone.
    #[serde(default)]
    pub band: usize,
    /// Linear amplitude; the RMS amplitude for Rayleigh tones.
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
    #[serde(default)]
    pub fading: Fading,
}

fn one() -> f64 {
    1.0
}

impl ToneInterferer {
    pub fn new(position: f64, amplitude: f64, phase: f64) -> Self {
        ToneInterferer {
            position,
            band: 0,
            amplitude,
            phase,
            fading: Fading::None,
        }
    }

    pub fn rayleigh(position: f64, rms_amplitude: f64) -> Self {
        ToneInterferer {
            fading: Fading::Rayleigh,
            ..Self::new(position, rms_amplitude, 0.0)
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InterferenceSpec {
    pub tones: Vec<ToneInterferer>,
    /// Average SIR in dB; `None` keeps the configured amplitudes.
    #[serde(default)]
    pub target_sir: Option<f64>,
    /// Repeat every tone in all bands instead of only its own.
    #[serde(default)]
    pub all_bands: bool,
}

impl InterferenceSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn single(tone: ToneInterferer) -> Self {
        InterferenceSpec {
            tones: vec![tone],
            ..Self::default()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.tones.iter().all(|t| t.amplitude == 0.0)
    }

    /// Common fading type of all tones; mixed specs are rejected.
    pub fn fading(&self) -> Result<Fading> {
        let mut kinds = self.tones.iter().map(|t| t.fading);
        let Some(first) = kinds.next() else {
            return Ok(Fading::None);
        };
        if kinds.any(|k| k != first) {
            return Err(Error::config("mixed faded and non-faded tones are not supported"));
        }
        Ok(first)
    }

    pub fn with_phase(&self, tone: usize, phase: f64) -> Self {
        let mut s = self.clone();
        s.tones[tone].phase = phase;
        s
    }

    pub fn with_position(&self, tone: usize, position: f64) -> Self {
        let mut s = self.clone();
        s.tones[tone].position = position;
        s
    }

    fn validate(&self, plan: &BandPlan) -> Result<()> {
        for t in &self.tones {
            if !(t.amplitude >= 0.0 && t.amplitude.is_finite()) {
                return Err(Error::config(format!("tone amplitude must be non-negative, got {}", t.amplitude)));
            }
            if !(0.0..plan.dft_size as f64).contains(&t.position) || t.band >= plan.bands() {
                return Err(Error::config(format!(
                    "tone at band {} position {} lies outside the band plan",
                    t.band, t.position
                )));
            }
        }
        Ok(())
    }
}

/// Unnormalized DFT of `exp(j 2 pi delta n / n_dft)`, `n = 0..n_dft`, at bin 0.
pub fn dirichlet(delta: f64, n_dft: usize) -> Complex64 {
    let n = n_dft as f64;
    let rounded = delta.round();
    if (delta - rounded).abs() < 1e-12 {
        let r = rounded.rem_euclid(n);
        return if r == 0.0 {
            Complex64::new(n, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        };
    }
    let mag = (PI * delta).sin() / (PI * delta / n).sin();
    Complex64::from_polar(1.0, PI * delta * (n - 1.0) / n) * mag
}

/// Interference on the data tones.
#[derive(Clone, Debug, PartialEq)]
pub struct FreqInterference {
    /// `J` for the configured amplitudes and phases.
    pub j: Vec<Complex64>,
    /// Unit-amplitude leakage vector of each tone, including its phase.
    pub leakage: Vec<Vec<Complex64>>,
    /// `E[alpha_k^2]` of each tone.
    pub mean_square: Vec<f64>,
    pub fading: Fading,
}

impl FreqInterference {
    pub fn zero(n: usize) -> Self {
        FreqInterference {
            j: vec![Complex64::new(0.0, 0.0); n],
            leakage: Vec::new(),
            mean_square: Vec::new(),
            fading: Fading::None,
        }
    }

    pub fn powers(&self) -> Vec<f64> {
        self.j.iter().map(|x| x.norm_sqr()).collect()
    }

    /// Expected per-tone interference power (deterministic power for
    /// non-faded tones).
    pub fn mean_powers(&self) -> Vec<f64> {
        match self.fading {
            Fading::None => self.powers(),
            Fading::Rayleigh => {
                let mut p = vec![0.0; self.j.len()];
                for (d, &ms) in self.leakage.iter().zip(&self.mean_square) {
                    for (pm, x) in p.iter_mut().zip(d) {
                        *pm += ms * x.norm_sqr();
                    }
                }
                p
            }
        }
    }

    /// One quasi-static draw of Rayleigh-faded tones: complex circular
    /// Gaussian coefficient per tone with variance `E[alpha_k^2]`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Complex64> {
        if self.fading == Fading::None {
            return self.j.clone();
        }
        let mut j = vec![Complex64::new(0.0, 0.0); self.j.len()];
        for (d, &ms) in self.leakage.iter().zip(&self.mean_square) {
            let c = crate::complex_gaussian(rng, ms);
            for (jm, x) in j.iter_mut().zip(d) {
                *jm += c * x;
            }
        }
        j
    }
}

/// Samples the tones, applies the DFT of every band and keeps the data tones.
pub fn tones_to_freq(spec: &InterferenceSpec, plan: &BandPlan) -> Result<FreqInterference> {
    spec.validate(plan)?;
    let fading = spec.fading()?;
    let n = plan.n_data();
    let mut out = FreqInterference::zero(n);
    out.fading = fading;
    for t in &spec.tones {
        let rotation = Complex64::from_polar(1.0, t.phase);
        let d: Vec<Complex64> = plan
            .data_bins()
            .map(|(band, bin)| {
                if spec.all_bands || band == t.band {
                    rotation * dirichlet(t.position - bin as f64, plan.dft_size)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        for (jm, x) in out.j.iter_mut().zip(&d) {
            *jm += x * t.amplitude;
        }
        out.leakage.push(d);
        out.mean_square.push(t.amplitude * t.amplitude);
    }
    Ok(out)
}

/// Total interference power over the full DFT of every affected band:
/// `dft_size^2 * sum E[alpha_k^2]` per band.
pub fn total_power(spec: &InterferenceSpec, plan: &BandPlan) -> f64 {
    let bands = if spec.all_bands { plan.bands() as f64 } else { 1.0 };
    let n = plan.dft_size as f64;
    bands * n * n * spec.tones.iter().map(|t| t.amplitude * t.amplitude).sum::<f64>()
}

/// Average SIR in dB for per-tone signal power `signal_power`
/// (`E_s` times the mean channel power) over the `n_total` tones of the
/// equivalent system.
pub fn average_sir_db(spec: &InterferenceSpec, plan: &BandPlan, signal_power: f64) -> f64 {
    let p = total_power(spec, plan);
    10.0 * (plan.n_total() as f64 * signal_power / p).log10()
}

/// SIR in dB of the most impaired data tone.
pub fn affected_tone_sir_db(spec: &InterferenceSpec, plan: &BandPlan, signal_power: f64) -> Result<f64> {
    let fi = tones_to_freq(spec, plan)?;
    let worst = fi.mean_powers().into_iter().fold(0.0, f64::max);
    Ok(10.0 * (signal_power / worst).log10())
}

/// Rescales all amplitudes by a common factor so that the average SIR equals
/// `spec.target_sir`.
pub fn calibrate_sir(spec: &InterferenceSpec, plan: &BandPlan, signal_power: f64) -> Result<InterferenceSpec> {
    let Some(target) = spec.target_sir else {
        return Err(Error::config("no target SIR configured"));
    };
    let mut out = spec.clone();
    if target == f64::INFINITY {
        out.tones.iter_mut().for_each(|t| t.amplitude = 0.0);
        return Ok(out);
    }
    let current = total_power(spec, plan);
    if current == 0.0 {
        return Err(Error::config("cannot reach a finite SIR with all-zero tones"));
    }
    let wanted = plan.n_total() as f64 * signal_power / 10f64.powf(target / 10.0);
    let scale = (wanted / current).sqrt();
    out.tones.iter_mut().for_each(|t| t.amplitude *= scale);
    Ok(out)
}

/// `R_JJ = sum_k E[alpha_k^2] d_k d_k^H` for Rayleigh-faded tones.
pub fn rayleigh_covariance(spec: &InterferenceSpec, plan: &BandPlan) -> Result<DMatrix<Complex64>> {
    if spec.fading()? != Fading::Rayleigh && !spec.tones.is_empty() {
        return Err(Error::config("covariance requested for non-faded tones"));
    }
    let fi = tones_to_freq(spec, plan)?;
    let n = plan.n_data();
    let mut r = DMatrix::<Complex64>::zeros(n, n);
    for (d, &ms) in fi.leakage.iter().zip(&fi.mean_square) {
        for a in 0..n {
            for b in 0..n {
                r[(a, b)] += d[a] * d[b].conj() * ms;
            }
        }
    }
    Ok(r)
}

/// `n` phases `2 pi m / n`, `m = 0..n`.
pub fn phase_grid(n: usize) -> Vec<f64> {
    (0..n).map(|m| 2.0 * PI * m as f64 / n as f64).collect()
}
