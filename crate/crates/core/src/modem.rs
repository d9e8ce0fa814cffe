//! Bit interleaving and Gray-labelled QAM.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::code::Bit;
use crate::error::{Error, Result};

/// Permutation applied to a codeword before mapping.
///
/// The permutation is stored in gather form: `out[i] = in[perm[i]]` (zero based).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Interleaver {
    perm: Vec<usize>,
    inverse: Vec<usize>,
}

impl Interleaver {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let n = perm.len();
        let mut inverse = vec![usize::MAX; n];
        for (i, &p) in perm.iter().enumerate() {
            if p >= n || inverse[p] != usize::MAX {
                return Err(Error::config(format!("interleaver is not a permutation of 0..{n}")));
            }
            inverse[p] = i;
        }
        Ok(Interleaver { perm, inverse })
    }

    pub fn identity(n: usize) -> Self {
        let perm: Vec<usize> = (0..n).collect();
        Interleaver {
            inverse: perm.clone(),
            perm,
        }
    }

    /// Write row by row into a `rows x cols` array, read column by column.
    pub fn block(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::config("block interleaver needs positive dimensions"));
        }
        Self::new((0..rows * cols).map(|k| (k % rows) * cols + k / rows).collect())
    }

    /// Three-stage interleaver in the style of the multiband OFDM PHY.
    ///
    /// Stage one spreads bits over `n_sym` OFDM symbols, stage two is a
    /// 10-row block interleaver inside each symbol, and stage three applies a
    /// cyclic shift of 33 bits per symbol index.
    pub fn mb_ofdm(n_cbps: usize, n_sym: usize) -> Result<Self> {
        if n_cbps == 0 || n_sym == 0 || !n_cbps.is_multiple_of(10) {
            return Err(Error::config(format!(
                "multiband interleaver needs coded bits per symbol divisible by 10, got {n_cbps}"
            )));
        }
        let n_tint = n_cbps / 10;
        let total = n_cbps * n_sym;
        let symbol = |i: usize| i / n_cbps + n_sym * (i % n_cbps);
        let tone = |i: usize| {
            let (j, k) = (i / n_cbps, i % n_cbps);
            j * n_cbps + k / n_tint + 10 * (k % n_tint)
        };
        let cyclic = |i: usize| {
            let (j, k) = (i / n_cbps, i % n_cbps);
            j * n_cbps + (k + 33 * j) % n_cbps
        };
        Self::new((0..total).map(|i| symbol(tone(cyclic(i)))).collect())
    }

    /// Reads newline-separated 1-based indices.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let perm = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| match l.parse::<usize>() {
                Ok(v) if v >= 1 => Ok(v - 1),
                _ => Err(Error::Parse(format!("bad permutation index '{l}'"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(perm)
    }

    /// Newline-separated 1-based indices, the inverse of [`Interleaver::parse`].
    pub fn to_text(&self) -> String {
        self.perm.iter().map(|p| format!("{}\n", p + 1)).collect()
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// Position of input index `k` after interleaving.
    pub fn position_of(&self, k: usize) -> usize {
        self.inverse[k]
    }

    pub fn interleave<T: Copy>(&self, input: &[T]) -> Result<Vec<T>> {
        self.check(input.len())?;
        Ok(self.perm.iter().map(|&p| input[p]).collect())
    }

    pub fn deinterleave<T: Copy>(&self, input: &[T]) -> Result<Vec<T>> {
        self.check(input.len())?;
        Ok(self.inverse.iter().map(|&p| input[p]).collect())
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.perm.len() {
            return Err(Error::LengthMismatch {
                expected: self.perm.len(),
                actual: len,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modulation {
    #[serde(rename = "4qam", alias = "qpsk")]
    Qam4,
    #[serde(rename = "16qam")]
    Qam16,
}

impl Modulation {
    pub fn bits_per_symbol(self) -> usize {
        match self {
            Modulation::Qam4 => 2,
            Modulation::Qam16 => 4,
        }
    }
}

/// Gray-labelled square QAM with average energy `es`.
///
/// A label groups `R_m` bits. The first half of the bits selects the
/// in-phase level and the second half the quadrature level. Per axis the
/// labels are `0 -> +1` for 4-QAM and `00 -> +3, 01 -> +1, 11 -> -1, 10 -> -3`
/// for 16-QAM, before scaling to unit energy.
#[derive(Clone, Debug, PartialEq)]
pub struct QamConstellation {
    modulation: Modulation,
    es: f64,
    /// Indexed by the label read most significant bit first.
    points: Vec<Complex64>,
}

impl QamConstellation {
    pub fn new(modulation: Modulation, es: f64) -> Result<Self> {
        if !(es > 0.0 && es.is_finite()) {
            return Err(Error::config(format!("symbol energy must be positive, got {es}")));
        }
        let m = modulation.bits_per_symbol();
        let half = m / 2;
        let (levels, scale): (&[f64], f64) = match modulation {
            Modulation::Qam4 => (&[1.0, -1.0], (es / 2.0).sqrt()),
            Modulation::Qam16 => (&[3.0, 1.0, -3.0, -1.0], (es / 10.0).sqrt()),
        };
        let points = (0..1usize << m)
            .map(|label| {
                let i = label >> half;
                let q = label & ((1 << half) - 1);
                Complex64::new(levels[i], levels[q]) * scale
            })
            .collect();
        Ok(QamConstellation { modulation, es, points })
    }

    pub fn modulation(&self) -> Modulation {
        self.modulation
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.modulation.bits_per_symbol()
    }

    pub fn energy(&self) -> f64 {
        self.es
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn point(&self, bits: &[Bit]) -> Complex64 {
        self.points[label_of(bits)]
    }

    pub fn map(&self, bits: &[Bit]) -> Result<Vec<Complex64>> {
        let m = self.bits_per_symbol();
        if !bits.len().is_multiple_of(m) {
            return Err(Error::LengthMismatch {
                expected: bits.len().div_ceil(m) * m,
                actual: bits.len(),
            });
        }
        Ok(bits.chunks(m).map(|c| self.point(c)).collect())
    }

    /// Nearest-point hard decision, returned as bits.
    pub fn hard_demap(&self, r: Complex64) -> Vec<Bit> {
        let best = self.nearest(r, Complex64::new(1.0, 0.0));
        label_bits(best, self.bits_per_symbol())
    }

    fn nearest(&self, r: Complex64, h: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (k, &x) in self.points.iter().enumerate() {
            let d = (r - h * x).norm_sqr();
            if d < best_d {
                best = k;
                best_d = d;
            }
        }
        best
    }

    /// Max-log LLRs of the received sample `r = h x + n`, `E|n|^2 = n0`.
    /// Positive values favour bit 0.
    pub fn soft_detect(&self, r: Complex64, h: Complex64, n0: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.bits_per_symbol()];
        self.soft_detect_into(r, h, n0, &mut out);
        out
    }

    pub fn soft_detect_into(&self, r: Complex64, h: Complex64, n0: f64, out: &mut [f64]) {
        let m = self.bits_per_symbol();
        let mut min0 = [f64::INFINITY; 4];
        let mut min1 = [f64::INFINITY; 4];
        for (label, &x) in self.points.iter().enumerate() {
            let d = (r - h * x).norm_sqr();
            for b in 0..m {
                if (label >> (m - 1 - b)) & 1 == 0 {
                    min0[b] = min0[b].min(d);
                } else {
                    min1[b] = min1[b].min(d);
                }
            }
        }
        for b in 0..m {
            out[b] = (min1[b] - min0[b]) / n0;
        }
    }
}

fn label_of(bits: &[Bit]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | (b & 1) as usize)
}

fn label_bits(label: usize, m: usize) -> Vec<Bit> {
    (0..m).map(|b| ((label >> (m - 1 - b)) & 1) as Bit).collect()
}
