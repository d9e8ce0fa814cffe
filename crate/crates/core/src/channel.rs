//! Quasi-static UWB multipath channels (modified Saleh-Valenzuela model),
//! their frequency response on the data tones of a hopped multiband OFDM
//! system, and correlation estimation.

use std::f64::consts::{LN_10, PI};
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the modified Saleh-Valenzuela model. Rates in 1/ns,
/// decay constants and delays in ns, standard deviations in dB.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvParams {
    pub cluster_rate: f64,
    pub ray_rate: f64,
    pub cluster_decay: f64,
    pub ray_decay: f64,
    pub cluster_fade_std: f64,
    pub ray_fade_std: f64,
    pub shadow_std: f64,
    pub max_delay: f64,
}

impl SvParams {
    /// The line-of-sight, 0 to 4 m parameter set.
    pub fn cm1() -> Self {
        SvParams {
            cluster_rate: 0.0233,
            ray_rate: 2.5,
            cluster_decay: 7.1,
            ray_decay: 4.3,
            cluster_fade_std: 3.3941,
            ray_fade_std: 3.3941,
            shadow_std: 3.0,
            max_delay: 60.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("cluster_rate", self.cluster_rate),
            ("ray_rate", self.ray_rate),
            ("cluster_decay", self.cluster_decay),
            ("ray_decay", self.ray_decay),
            ("max_delay", self.max_delay),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("cluster_fade_std", self.cluster_fade_std),
            ("ray_fade_std", self.ray_fade_std),
            ("shadow_std", self.shadow_std),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    /// `E[G^2]` of the lognormal shadowing amplitude.
    pub fn mean_shadow_power(&self) -> f64 {
        let s = self.shadow_std * LN_10 / 10.0;
        (s * s / 2.0).exp()
    }
}

/// Multipath taps of one realization. Amplitudes are real with random sign
/// and satisfy `sum(amplitude^2) = 1`; `shadow` is the lognormal amplitude `G`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImpulseResponse {
    pub delays: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub shadow: f64,
}

pub fn generate_impulse_response<R: Rng + ?Sized>(p: &SvParams, rng: &mut R) -> Result<ImpulseResponse> {
    p.validate()?;
    let cluster_gap = Exp::new(p.cluster_rate).map_err(|e| Error::config(e.to_string()))?;
    let ray_gap = Exp::new(p.ray_rate).map_err(|e| Error::config(e.to_string()))?;
    let var = p.cluster_fade_std.powi(2) + p.ray_fade_std.powi(2);
    let fade = Normal::new(0.0, p.cluster_fade_std).map_err(|e| Error::config(e.to_string()))?;
    let ray_fade = Normal::new(0.0, p.ray_fade_std).map_err(|e| Error::config(e.to_string()))?;
    let shadow = Normal::new(0.0, p.shadow_std).map_err(|e| Error::config(e.to_string()))?;
    // Mean correction so that E[amplitude^2] follows the decay profile exactly.
    let correction = var * LN_10 / 20.0;

    let mut delays = Vec::new();
    let mut amplitudes = Vec::new();
    let mut cluster_start = 0.0;
    while cluster_start < p.max_delay {
        let cluster_db = fade.sample(rng);
        let mut ray = 0.0;
        while cluster_start + ray < p.max_delay {
            let mean_db = 10.0 * (-cluster_start / p.cluster_decay - ray / p.ray_decay) / LN_10 - correction;
            let db = mean_db + cluster_db + ray_fade.sample(rng);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            delays.push(cluster_start + ray);
            amplitudes.push(sign * 10f64.powf(db / 20.0));
            ray += ray_gap.sample(rng);
        }
        cluster_start += cluster_gap.sample(rng);
    }
    let energy: f64 = amplitudes.iter().map(|a| a * a).sum();
    let norm = energy.sqrt();
    amplitudes.iter_mut().for_each(|a| *a /= norm);
    Ok(ImpulseResponse {
        delays,
        amplitudes,
        shadow: 10f64.powf(shadow.sample(rng) / 20.0),
    })
}

/// Hopped multiband OFDM band plan: tone `k` of band `b` sits at
/// `centers_mhz[b] + k * spacing_mhz`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandPlan {
    pub centers_mhz: Vec<f64>,
    pub spacing_mhz: f64,
    pub dft_size: usize,
    /// Signed tone indices carrying data, ascending, identical in every band.
    pub data_tones: Vec<i32>,
    pub cyclic_prefix_ns: f64,
}

impl BandPlan {
    /// Three 528 MHz bands of 128 tones, 100 data tones each, hopped in order.
    pub fn mb_ofdm() -> Self {
        let pilots = [5, 15, 25, 35, 45, 55];
        let data_tones = (-56..=56)
            .filter(|&k: &i32| k != 0 && !pilots.contains(&k.abs()))
            .collect();
        BandPlan {
            centers_mhz: vec![3432.0, 3960.0, 4488.0],
            spacing_mhz: 4.125,
            dft_size: 128,
            data_tones,
            cyclic_prefix_ns: 32.0 / 528.0 * 1000.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.centers_mhz.is_empty() || self.data_tones.is_empty() || self.dft_size == 0 {
            return Err(Error::config("band plan needs bands, data tones and a DFT size"));
        }
        let half = self.dft_size as i32 / 2;
        if self.data_tones.windows(2).any(|w| w[0] >= w[1])
            || self.data_tones.iter().any(|&k| k < -half || k >= half)
        {
            return Err(Error::config("data tones must be ascending and inside the DFT"));
        }
        Ok(())
    }

    pub fn bands(&self) -> usize {
        self.centers_mhz.len()
    }

    /// Data tones of the whole equivalent system.
    pub fn n_data(&self) -> usize {
        self.bands() * self.data_tones.len()
    }

    /// Total tones of the equivalent system (e.g. 384).
    pub fn n_total(&self) -> usize {
        self.bands() * self.dft_size
    }

    /// DFT bin (0 based) of a signed tone index.
    pub fn bin_of(&self, k: i32) -> usize {
        k.rem_euclid(self.dft_size as i32) as usize
    }

    /// Band and DFT bin of each data subcarrier, in transmission order.
    pub fn data_bins(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.bands()).flat_map(move |b| self.data_tones.iter().map(move |&k| (b, self.bin_of(k))))
    }

    /// Absolute frequency in MHz of each data subcarrier.
    pub fn data_frequencies_mhz(&self) -> Vec<f64> {
        self.centers_mhz
            .iter()
            .flat_map(|&fc| self.data_tones.iter().map(move |&k| fc + k as f64 * self.spacing_mhz))
            .collect()
    }
}

/// Frequency-domain gains on the data tones of one realization.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization {
    /// Gains including the shadowing amplitude.
    pub h: Vec<Complex64>,
    pub shadow: f64,
    pub seed: u64,
    pub index: u64,
}

impl ChannelRealization {
    /// Gains with the shadowing removed.
    pub fn normalized(&self) -> Vec<Complex64> {
        self.h.iter().map(|&x| x / self.shadow).collect()
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }
}

/// Evaluates `G * sum_l a_l exp(-j 2 pi f tau_l)` at every data subcarrier.
pub fn to_frequency_domain(ir: &ImpulseResponse, plan: &BandPlan) -> Result<Vec<Complex64>> {
    plan.validate()?;
    if let Some(&max) = ir.delays.iter().max_by(|a, b| a.total_cmp(b)) {
        if max >= plan.cyclic_prefix_ns {
            return Err(Error::config(format!(
                "tap at {max} ns exceeds the cyclic prefix of {} ns",
                plan.cyclic_prefix_ns
            )));
        }
    }
    Ok(plan
        .data_frequencies_mhz()
        .into_iter()
        .map(|f_mhz| {
            let f_ghz = f_mhz * 1e-3;
            let sum: Complex64 = ir
                .delays
                .iter()
                .zip(&ir.amplitudes)
                .map(|(&tau, &a)| Complex64::from_polar(a, -2.0 * PI * f_ghz * tau))
                .sum();
            sum * ir.shadow
        })
        .collect())
}

/// Per-realization RNG: realization `index` of the set `seed`.
pub fn realization_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Generates realizations `0..count` of the set identified by `seed`.
pub fn generate_set(p: &SvParams, plan: &BandPlan, seed: u64, count: usize) -> Result<Vec<ChannelRealization>> {
    (0..count as u64)
        .map(|index| {
            let mut rng = realization_rng(seed, index);
            let ir = generate_impulse_response(p, &mut rng)?;
            Ok(ChannelRealization {
                h: to_frequency_domain(&ir, plan)?,
                shadow: ir.shadow,
                seed,
                index,
            })
        })
        .collect()
}

/// Writes a channel set: one line per realization with `index shadow re im re im ...`.
pub fn write_channel_set(path: impl AsRef<Path>, set: &[ChannelRealization]) -> Result<()> {
    let mut text = String::new();
    let seed = set.first().map_or(0, |r| r.seed);
    let _ = writeln!(text, "# seed {seed} tones {}", set.first().map_or(0, |r| r.len()));
    for r in set {
        let _ = write!(text, "{} {:.16e}", r.index, r.shadow);
        for x in &r.h {
            let _ = write!(text, " {:.16e} {:.16e}", x.re, x.im);
        }
        text.push('\n');
    }
    std::fs::write(path.as_ref(), text).map_err(|e| Error::io(path.as_ref(), e))
}

pub fn read_channel_set(path: impl AsRef<Path>) -> Result<Vec<ChannelRealization>> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    let mut seed = 0;
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix('#') {
            let words: Vec<&str> = rest.split_whitespace().collect();
            if let Some(pos) = words.iter().position(|&w| w == "seed") {
                seed = words.get(pos + 1).and_then(|s| s.parse().ok()).unwrap_or(0);
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let index = parse_field::<u64>(fields.next(), "index")?;
        let shadow = parse_field::<f64>(fields.next(), "shadow")?;
        let values = fields.map(|f| parse_field::<f64>(Some(f), "gain")).collect::<Result<Vec<_>>>()?;
        if values.len() % 2 != 0 {
            return Err(Error::Parse(format!("odd number of gain values for realization {index}")));
        }
        let h = values.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect();
        out.push(ChannelRealization { h, shadow, seed, index });
    }
    Ok(out)
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, what: &str) -> Result<T> {
    field
        .and_then(|f| f.parse().ok())
        .ok_or_else(|| Error::Parse(format!("missing or malformed {what}")))
}

/// Sample correlation of normalized gains.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelCorrelation {
    pub sigma: DMatrix<Complex64>,
    pub sample_count: usize,
}

impl ChannelCorrelation {
    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    /// Rows and columns of `sigma` at `idx`.
    pub fn submatrix(&self, idx: &[usize]) -> DMatrix<Complex64> {
        DMatrix::from_fn(idx.len(), idx.len(), |a, b| self.sigma[(idx[a], idx[b])])
    }

    /// Text matrix file: `n` lines of `2n` numbers (re, im pairs).
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let n = self.dim();
        let mut text = String::new();
        let _ = writeln!(text, "# samples {}", self.sample_count);
        for a in 0..n {
            let row: Vec<String> = (0..n)
                .map(|b| format!("{:.16e} {:.16e}", self.sigma[(a, b)].re, self.sigma[(a, b)].im))
                .collect();
            text.push_str(&row.join(" "));
            text.push('\n');
        }
        std::fs::write(path.as_ref(), text).map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        let mut sample_count = 0;
        let mut rows: Vec<Vec<Complex64>> = Vec::new();
        for line in text.lines().map(str::trim) {
            if let Some(rest) = line.strip_prefix('#') {
                let words: Vec<&str> = rest.split_whitespace().collect();
                if words.first() == Some(&"samples") {
                    sample_count = words.get(1).and_then(|s| s.parse().ok()).unwrap_or(0);
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let values = line
                .split_whitespace()
                .map(|f| parse_field::<f64>(Some(f), "matrix entry"))
                .collect::<Result<Vec<_>>>()?;
            rows.push(values.chunks(2).map(|c| Complex64::new(c[0], *c.get(1).unwrap_or(&0.0))).collect());
        }
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Parse("correlation matrix is not square".into()));
        }
        Ok(ChannelCorrelation {
            sigma: DMatrix::from_fn(n, n, |a, b| rows[a][b]),
            sample_count,
        })
    }
}

/// `Sigma_hh = mean(h_n h_n^H)` over the normalized gains of `realizations`.
pub fn estimate_correlation(realizations: &[ChannelRealization]) -> Result<ChannelCorrelation> {
    let vectors: Vec<Vec<Complex64>> = realizations.iter().map(ChannelRealization::normalized).collect();
    correlation_of(&vectors)
}

/// Sample correlation of arbitrary gain vectors.
pub fn correlation_of(vectors: &[Vec<Complex64>]) -> Result<ChannelCorrelation> {
    let Some(first) = vectors.first() else {
        return Err(Error::invalid("correlation estimate needs at least one realization"));
    };
    let n = first.len();
    if let Some(v) = vectors.iter().find(|v| v.len() != n) {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: v.len(),
        });
    }
    let mut sigma = DMatrix::<Complex64>::zeros(n, n);
    for v in vectors {
        for b in 0..n {
            let vb = v[b].conj();
            for a in b..n {
                sigma[(a, b)] += v[a] * vb;
            }
        }
    }
    let scale = 1.0 / vectors.len() as f64;
    for b in 0..n {
        for a in b..n {
            let val = sigma[(a, b)] * scale;
            sigma[(a, b)] = val;
            sigma[(b, a)] = val.conj();
        }
        sigma[(b, b)].im = 0.0;
    }
    Ok(ChannelCorrelation {
        sigma,
        sample_count: vectors.len(),
    })
}
