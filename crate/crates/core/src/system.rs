//! The coded-modulation chain shared by the analysis methods and the simulator.

use num_complex::Complex64;

use crate::code::{Bit, ConvCode, ErrorVectorSet};
use crate::error::{Error, Result};
use crate::modem::{Interleaver, QamConstellation};

/// Code, interleaver and constellation of one codeword spread over `n_tones` tones.
#[derive(Clone, Debug)]
pub struct System {
    pub code: ConvCode,
    pub interleaver: Interleaver,
    pub constellation: QamConstellation,
    pub n_tones: usize,
}

impl System {
    pub fn new(
        code: ConvCode,
        interleaver: Interleaver,
        constellation: QamConstellation,
        n_tones: usize,
    ) -> Result<Self> {
        let sys = System {
            code,
            interleaver,
            constellation,
            n_tones,
        };
        let lc = sys.codeword_len();
        if sys.interleaver.len() != lc {
            return Err(Error::config(format!(
                "interleaver length {} does not match the codeword length {lc}",
                sys.interleaver.len()
            )));
        }
        let period_bits = sys.code.period_bits();
        if !lc.is_multiple_of(period_bits) {
            return Err(Error::config(format!(
                "codeword length {lc} is not a whole number of puncture periods ({period_bits} bits)"
            )));
        }
        if sys.info_len() <= sys.code.memory() {
            return Err(Error::config("codeword too short for the encoder tail"));
        }
        Ok(sys)
    }

    /// `L_c`, coded bits per codeword.
    pub fn codeword_len(&self) -> usize {
        self.n_tones * self.constellation.bits_per_symbol()
    }

    /// Information bits per codeword including the zero tail.
    pub fn info_len(&self) -> usize {
        self.codeword_len() / self.code.period_bits() * self.code.period()
    }

    /// Information bits that carry data (tail excluded).
    pub fn payload_len(&self) -> usize {
        self.info_len() - self.code.memory()
    }

    pub fn es(&self) -> f64 {
        self.constellation.energy()
    }

    /// Noise power for a given `E_b/N0` in dB, with `E_s = R_c R_m E_b` and
    /// `E_b` measured on a channel of mean power `channel_power`.
    pub fn n0_for(&self, ebn0_db: f64, channel_power: f64) -> f64 {
        let rc = self.code.rate();
        let rm = self.constellation.bits_per_symbol() as f64;
        channel_power * self.es() / (rc * rm * 10f64.powf(ebn0_db / 10.0))
    }

    /// Encodes the payload followed by the zero tail.
    pub fn encode(&self, payload: &[Bit]) -> Result<Vec<Bit>> {
        if payload.len() != self.payload_len() {
            return Err(Error::LengthMismatch {
                expected: self.payload_len(),
                actual: payload.len(),
            });
        }
        self.code.encode_terminated(payload)
    }

    /// Transmitted symbols of a codeword.
    pub fn modulate(&self, codeword: &[Bit]) -> Result<Vec<Complex64>> {
        self.constellation.map(&self.interleaver.interleave(codeword)?)
    }

    /// Tone carrying codeword bit `k`.
    pub fn tone_of_bit(&self, k: usize) -> usize {
        self.interleaver.position_of(k) / self.constellation.bits_per_symbol()
    }

    /// Per-start lists of error terms for codeword `c`; see [`ErrorTerm`].
    pub fn error_terms(&self, set: &ErrorVectorSet, c: &[Bit]) -> Result<Vec<Vec<ErrorTerm>>> {
        let lc = self.codeword_len();
        if c.len() != lc {
            return Err(Error::LengthMismatch {
                expected: lc,
                actual: c.len(),
            });
        }
        let interleaved = self.interleaver.interleave(c)?;
        let m = self.constellation.bits_per_symbol();
        let mut group = vec![0 as Bit; m];
        (0..lc)
            .map(|start| {
                set.for_start(start)
                    .iter()
                    .filter(|ev| start + ev.len() <= lc)
                    .map(|ev| {
                        let mut tones: Vec<usize> = ev.support().map(|k| self.tone_of_bit(start + k)).collect();
                        tones.sort_unstable();
                        tones.dedup();
                        let diffs = tones
                            .iter()
                            .map(|&t| {
                                group.copy_from_slice(&interleaved[t * m..(t + 1) * m]);
                                let x = self.constellation.point(&group);
                                for (b, slot) in group.iter_mut().enumerate() {
                                    let pos = t * m + b;
                                    let k = self.interleaver.permutation()[pos];
                                    if k >= start && k < start + ev.len() {
                                        *slot ^= ev.bits[k - start];
                                    }
                                }
                                x - self.constellation.point(&group)
                            })
                            .collect();
                        Ok(ErrorTerm {
                            info_errors: ev.info_errors,
                            tones,
                            diffs,
                        })
                    })
                    .collect()
            })
            .collect()
    }
}

/// One competing codeword: the tones where its symbols differ from the
/// transmitted ones and the differences `x_m - z_m`.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorTerm {
    pub info_errors: usize,
    pub tones: Vec<usize>,
    pub diffs: Vec<Complex64>,
}

impl ErrorTerm {
    pub fn eta(&self) -> usize {
        self.tones.len()
    }

    /// The term with the tones in `erased` (sorted) removed.
    pub fn without(&self, erased: &[usize]) -> ErrorTerm {
        let (tones, diffs) = self
            .tones
            .iter()
            .zip(&self.diffs)
            .filter(|(t, _)| erased.binary_search(t).is_err())
            .map(|(&t, &d)| (t, d))
            .unzip();
        ErrorTerm {
            info_errors: self.info_errors,
            tones,
            diffs,
        }
    }
}

/// Applies a sorted erasure set to every term.
pub fn erase_terms(terms: &[Vec<ErrorTerm>], erased: &[usize]) -> Vec<Vec<ErrorTerm>> {
    if erased.is_empty() {
        return terms.to_vec();
    }
    terms
        .iter()
        .map(|ts| ts.iter().map(|t| t.without(erased)).collect())
        .collect()
}
