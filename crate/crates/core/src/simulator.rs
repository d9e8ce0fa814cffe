//! Monte Carlo link simulation: encode, interleave, map, pass through
//! `r = H x + J + n`, detect, erase, deinterleave and Viterbi decode.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::code::{Bit, EndState, ViterbiDecoder};
use crate::complex_gaussian;
use crate::error::{Error, Result};
use crate::interference::FreqInterference;
use crate::system::System;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StopRule {
    pub min_errors: u64,
    pub max_packets: u64,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            min_errors: 200,
            max_packets: 100_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimResult {
    pub errors: u64,
    pub bits: u64,
    pub packets: u64,
    /// The packet cap was reached before the error target.
    pub flagged: bool,
}

impl SimResult {
    pub fn ber(&self) -> f64 {
        if self.bits == 0 {
            0.0
        } else {
            self.errors as f64 / self.bits as f64
        }
    }
}

/// Indices of the `n_e` largest powers; ties go to the lower index.
pub fn genie_erase(powers: &[f64], n_e: usize) -> Result<Vec<usize>> {
    if n_e > powers.len() {
        return Err(Error::invalid(format!("cannot erase {n_e} of {} tones", powers.len())));
    }
    let mut order: Vec<usize> = (0..powers.len()).collect();
    order.sort_by(|&a, &b| powers[b].total_cmp(&powers[a]).then(a.cmp(&b)));
    let mut chosen = order[..n_e].to_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Link parameters of one simulated point.
#[derive(Clone, Debug)]
pub struct Link<'a> {
    pub system: &'a System,
    /// Channel gains including shadowing.
    pub h: &'a [Complex64],
    pub interference: &'a FreqInterference,
    pub n0: f64,
    /// Sorted indices of tones whose LLRs are discarded.
    pub erased: &'a [usize],
    /// Skip the code: map raw bits and count hard-decision errors.
    pub uncoded: bool,
}

/// Runs packets until the stop rule fires. Packet `k` draws all its
/// randomness from stream `k` of `seed`.
pub fn simulate_point(link: &Link<'_>, seed: u64, stop: StopRule) -> Result<SimResult> {
    let sys = link.system;
    let n = sys.n_tones;
    if link.h.len() != n || link.interference.j.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: link.h.len().min(link.interference.j.len()),
        });
    }
    if !(link.n0 > 0.0) {
        return Err(Error::invalid("noise power must be positive"));
    }
    let m = sys.constellation.bits_per_symbol();
    let lc = sys.codeword_len();
    let mut erased_bits = vec![false; lc];
    for &t in link.erased {
        if t >= n {
            return Err(Error::invalid(format!("erased tone {t} out of range")));
        }
        erased_bits[t * m..(t + 1) * m].iter_mut().for_each(|e| *e = true);
    }
    let erasures = sys.interleaver.deinterleave(&erased_bits)?;

    let mut decoder = ViterbiDecoder::new(&sys.code);
    let mut llr_tx = vec![0.0; lc];
    let mut result = SimResult {
        errors: 0,
        bits: 0,
        packets: 0,
        flagged: false,
    };
    while result.errors < stop.min_errors && result.packets < stop.max_packets {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(result.packets);

        let payload_len = if link.uncoded { lc } else { sys.payload_len() };
        let payload: Vec<Bit> = (0..payload_len).map(|_| rng.random::<bool>() as Bit).collect();
        let x = if link.uncoded {
            sys.constellation.map(&payload)?
        } else {
            sys.modulate(&sys.encode(&payload)?)?
        };
        let j = link.interference.draw(&mut rng);
        for t in 0..n {
            let r = link.h[t] * x[t] + j[t] + complex_gaussian(&mut rng, link.n0);
            sys.constellation
                .soft_detect_into(r, link.h[t], link.n0, &mut llr_tx[t * m..(t + 1) * m]);
        }
        for &t in link.erased {
            llr_tx[t * m..(t + 1) * m].iter_mut().for_each(|l| *l = 0.0);
        }

        let errors = if link.uncoded {
            payload
                .iter()
                .zip(&llr_tx)
                .filter(|(&b, &l)| (l < 0.0) != (b == 1))
                .count()
        } else {
            let llrs = sys.interleaver.deinterleave(&llr_tx)?;
            let decoded = decoder.decode(&llrs, &erasures, EndState::Zero)?;
            payload.iter().zip(&decoded).filter(|(a, b)| a != b).count()
        };
        result.errors += errors as u64;
        result.bits += payload_len as u64;
        result.packets += 1;
    }
    result.flagged = result.errors < stop.min_errors;
    Ok(result)
}
