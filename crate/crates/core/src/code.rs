//! Punctured convolutional codes.
//!
//! A [`ConvCode`] is a feedforward rate-1/n code with a periodic puncturing
//! mask and an optional repetition factor. The module provides encoding,
//! enumeration of simple error events below a weight threshold, placement of
//! an error event inside a codeword, and soft-input Viterbi decoding.
//!
//! Generator polynomials use the usual octal convention: the most significant
//! of the `K` bits taps the current input and the least significant bit taps
//! the oldest register stage. Output bits of one trellis step are emitted in
//! generator order, skipping punctured generators, and the resulting group is
//! repeated `repetition` times.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A binary digit, always `0` or `1`.
pub type Bit = u8;

/// Feedforward convolutional code with periodic puncturing.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvCode {
    generators: Vec<u32>,
    constraint_length: usize,
    /// `keep[phase][j]` is true when generator `j` is transmitted in `phase`.
    keep: Vec<Vec<bool>>,
    repetition: usize,
    kept_idx: Vec<Vec<usize>>,
    /// `outputs[state][input]` as a bitmask over generators.
    outputs: Vec<[u32; 2]>,
    /// Phase of the trellis step that emits each bit offset of one puncture period.
    bit_phase: Vec<usize>,
}

/// Serializable description of a code, as found in preset files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodeSpec {
    /// Octal generator strings, e.g. `["133", "145", "175"]`.
    pub generators: Vec<String>,
    pub constraint_length: usize,
    /// One 0/1 string per generator, all of equal length (the puncture period).
    #[serde(default)]
    pub puncture: Option<Vec<String>>,
    #[serde(default = "default_repetition")]
    pub repetition: usize,
}

fn default_repetition() -> usize {
    1
}

impl CodeSpec {
    pub fn build(&self) -> Result<ConvCode> {
        let generators = self
            .generators
            .iter()
            .map(|g| {
                u32::from_str_radix(g.trim(), 8)
                    .map_err(|_| Error::config(format!("invalid octal generator '{g}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        let keep = match &self.puncture {
            None => vec![vec![true; generators.len()]],
            Some(rows) => {
                if rows.len() != generators.len() {
                    return Err(Error::config(format!(
                        "puncture mask has {} rows for {} generators",
                        rows.len(),
                        generators.len()
                    )));
                }
                let period = rows[0].trim().len();
                let mut keep = vec![vec![false; generators.len()]; period];
                for (j, row) in rows.iter().enumerate() {
                    let row = row.trim();
                    if row.len() != period {
                        return Err(Error::config("puncture rows differ in length"));
                    }
                    for (p, ch) in row.chars().enumerate() {
                        keep[p][j] = match ch {
                            '1' => true,
                            '0' => false,
                            _ => return Err(Error::config(format!("invalid puncture character '{ch}'"))),
                        };
                    }
                }
                keep
            }
        };
        ConvCode::new(generators, self.constraint_length, keep, self.repetition)
    }

    /// Names accepted by [`CodeSpec::preset`].
    pub const PRESETS: [&'static str; 7] = [
        "mb-ofdm-1/3",
        "mb-ofdm-1/2",
        "mb-ofdm-5/8",
        "mb-ofdm-3/4",
        "mb-ofdm-1/4",
        "mb-ofdm-1/8",
        "max-dfree-1/3",
    ];

    /// Built-in codes. The `mb-ofdm-*` family is the K=7 133/145/175 mother
    /// code; rates 1/4 and 1/8 repeat the rate-1/2 output.
    pub fn preset(name: &str) -> Result<CodeSpec> {
        let mb = |mask: Option<[&str; 3]>, repetition: usize| CodeSpec {
            generators: vec!["133".into(), "145".into(), "175".into()],
            constraint_length: 7,
            puncture: mask.map(|m| m.iter().map(|s| s.to_string()).collect()),
            repetition,
        };
        Ok(match name {
            "mb-ofdm-1/3" => mb(None, 1),
            "mb-ofdm-1/2" => mb(Some(["1", "1", "0"]), 1),
            "mb-ofdm-5/8" => mb(Some(["10110", "01011", "10100"]), 1),
            "mb-ofdm-3/4" => mb(Some(["100", "000", "111"]), 1),
            "mb-ofdm-1/4" => mb(Some(["1", "1", "0"]), 2),
            "mb-ofdm-1/8" => mb(Some(["1", "1", "0"]), 4),
            "max-dfree-1/3" => CodeSpec {
                generators: vec!["133".into(), "165".into(), "171".into()],
                constraint_length: 7,
                puncture: None,
                repetition: 1,
            },
            _ => {
                return Err(Error::config(format!(
                    "unknown code preset '{name}' (known: {})",
                    Self::PRESETS.join(", ")
                )))
            }
        })
    }
}

impl ConvCode {
    /// Builds a code from generator polynomials, a puncture mask indexed as
    /// `keep[phase][generator]`, and a repetition factor.
    pub fn new(
        generators: Vec<u32>,
        constraint_length: usize,
        keep: Vec<Vec<bool>>,
        repetition: usize,
    ) -> Result<Self> {
        if generators.len() < 2 {
            return Err(Error::config("a code needs at least two generators"));
        }
        if !(2..=16).contains(&constraint_length) {
            return Err(Error::config(format!(
                "unsupported constraint length {constraint_length}"
            )));
        }
        for &g in &generators {
            if g == 0 || g >> constraint_length != 0 {
                return Err(Error::config(format!(
                    "generator {g:o} does not fit constraint length {constraint_length}"
                )));
            }
        }
        if keep.is_empty() || keep.iter().any(|row| row.len() != generators.len()) {
            return Err(Error::config("puncture mask does not match the generator count"));
        }
        if !keep.iter().flatten().any(|&k| k) {
            return Err(Error::config("puncture mask keeps no bits"));
        }
        if repetition == 0 {
            return Err(Error::config("repetition factor must be at least 1"));
        }

        let kept_idx: Vec<Vec<usize>> = keep
            .iter()
            .map(|row| row.iter().enumerate().filter(|(_, &k)| k).map(|(j, _)| j).collect())
            .collect();
        let memory = constraint_length - 1;
        let num_states = 1usize << memory;
        let outputs = (0..num_states)
            .map(|state| {
                let out = |input: usize| {
                    let reg = ((input << memory) | state) as u32;
                    generators
                        .iter()
                        .enumerate()
                        .fold(0u32, |acc, (j, &g)| acc | (((reg & g).count_ones() & 1) << j))
                };
                [out(0), out(1)]
            })
            .collect();
        let bit_phase = kept_idx
            .iter()
            .enumerate()
            .flat_map(|(p, idx)| std::iter::repeat_n(p, idx.len() * repetition))
            .collect();

        Ok(ConvCode {
            generators,
            constraint_length,
            keep,
            repetition,
            kept_idx,
            outputs,
            bit_phase,
        })
    }

    /// Unpunctured code with every output stream transmitted.
    pub fn unpunctured(generators: Vec<u32>, constraint_length: usize) -> Result<Self> {
        let n = generators.len();
        Self::new(generators, constraint_length, vec![vec![true; n]], 1)
    }

    pub fn generators(&self) -> &[u32] {
        &self.generators
    }

    pub fn constraint_length(&self) -> usize {
        self.constraint_length
    }

    pub fn memory(&self) -> usize {
        self.constraint_length - 1
    }

    pub fn num_states(&self) -> usize {
        1 << self.memory()
    }

    pub fn repetition(&self) -> usize {
        self.repetition
    }

    /// Puncture period in trellis steps.
    pub fn period(&self) -> usize {
        self.keep.len()
    }

    pub fn puncture_mask(&self) -> &[Vec<bool>] {
        &self.keep
    }

    /// Transmitted bits per puncture period.
    pub fn period_bits(&self) -> usize {
        self.bit_phase.len()
    }

    /// Transmitted bits of a trellis step in the given phase.
    pub fn bits_per_step(&self, phase: usize) -> usize {
        self.kept_idx[phase % self.period()].len() * self.repetition
    }

    /// Code rate as `(info bits, coded bits)` per puncture period.
    pub fn rate_fraction(&self) -> (usize, usize) {
        (self.period(), self.period_bits())
    }

    pub fn rate(&self) -> f64 {
        let (k, n) = self.rate_fraction();
        k as f64 / n as f64
    }

    /// Phase of the trellis step that emits the bit at `offset` of the coded stream.
    pub fn phase_at_bit(&self, offset: usize) -> usize {
        self.bit_phase[offset % self.period_bits()]
    }

    pub(crate) fn next_state(&self, state: usize, input: usize) -> usize {
        (input << (self.memory() - 1)) | (state >> 1)
    }

    fn emit(&self, out: &mut Vec<Bit>, mask: u32, phase: usize) {
        let kept = &self.kept_idx[phase % self.period()];
        for _ in 0..self.repetition {
            out.extend(kept.iter().map(|&j| ((mask >> j) & 1) as Bit));
        }
    }

    /// Number of coded bits produced by `info_len` input bits.
    pub fn coded_len(&self, info_len: usize) -> Result<usize> {
        if !info_len.is_multiple_of(self.period()) {
            return Err(Error::config(format!(
                "{info_len} input bits is not a whole number of puncture periods ({})",
                self.period()
            )));
        }
        Ok(info_len / self.period() * self.period_bits())
    }

    /// Encodes from the all-zero state, starting at puncture phase 0. No tail
    /// is appended; callers that need a terminated codeword end the input
    /// with `memory()` zeros (see [`ConvCode::encode_terminated`]).
    pub fn encode(&self, info: &[Bit]) -> Result<Vec<Bit>> {
        let len = self.coded_len(info.len())?;
        let mut out = Vec::with_capacity(len);
        self.encode_into(info, 0, &mut out);
        Ok(out)
    }

    /// Appends `memory()` zero tail bits and encodes.
    pub fn encode_terminated(&self, info: &[Bit]) -> Result<Vec<Bit>> {
        let mut padded = info.to_vec();
        padded.extend(std::iter::repeat_n(0, self.memory()));
        self.encode(&padded)
    }

    /// Encodes an arbitrary-length input starting at puncture `phase`.
    pub fn encode_from_phase(&self, info: &[Bit], phase: usize) -> Vec<Bit> {
        let mut out = Vec::new();
        self.encode_into(info, phase, &mut out);
        out
    }

    fn encode_into(&self, info: &[Bit], phase: usize, out: &mut Vec<Bit>) {
        let mut state = 0usize;
        for (t, &b) in info.iter().enumerate() {
            let b = (b & 1) as usize;
            self.emit(out, self.outputs[state][b], phase + t);
            state = self.next_state(state, b);
        }
    }
}

/// Quantity compared against `w_max` during enumeration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WeightMeasure {
    /// Hamming weight of the transmitted (punctured) code bits.
    #[default]
    Output,
    /// Hamming weight of the information sequence.
    Input,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EnumerationOptions {
    pub w_max: usize,
    pub measure: WeightMeasure,
    /// Longest event, in transmitted bits, the search may follow.
    pub length_cap: usize,
}

impl EnumerationOptions {
    pub fn new(w_max: usize) -> Self {
        EnumerationOptions {
            w_max,
            measure: WeightMeasure::Output,
            length_cap: 2048,
        }
    }
}

/// A simple error event: one departure from and one return to the all-zero state.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ErrorVector {
    /// Transmitted code bits spanned by the event.
    pub bits: Vec<Bit>,
    /// Information sequence of the event, including the zeros that drive it home.
    pub input: Vec<Bit>,
    /// Information bit errors on the event path.
    pub info_errors: usize,
    /// Hamming weight of `bits`.
    pub weight: usize,
    /// Puncture phase of the first trellis step.
    pub phase: usize,
}

impl ErrorVector {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Positions of the ones in `bits`.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, &b)| b == 1).map(|(k, _)| k)
    }
}

/// Error events below a weight threshold, one list per puncture phase.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorVectorSet {
    pub w_max: usize,
    pub measure: WeightMeasure,
    by_phase: Vec<Vec<ErrorVector>>,
    bit_phase: Vec<usize>,
}

impl ErrorVectorSet {
    /// Events of every phase; for an unpunctured code this is the single set.
    pub fn len(&self) -> usize {
        self.by_phase.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn phases(&self) -> usize {
        self.by_phase.len()
    }

    pub fn phase(&self, phase: usize) -> &[ErrorVector] {
        &self.by_phase[phase]
    }

    pub fn iter(&self) -> impl Iterator<Item = &ErrorVector> {
        self.by_phase.iter().flatten()
    }

    pub fn max_length(&self) -> usize {
        self.iter().map(ErrorVector::len).max().unwrap_or(0)
    }

    /// Smallest event weight, i.e. the free distance when `w_max` exceeds it.
    pub fn min_weight(&self) -> Option<usize> {
        self.iter().map(|e| e.weight).min()
    }

    /// Event variants aligned with a codeword bit position.
    pub fn for_start(&self, start: usize) -> &[ErrorVector] {
        &self.by_phase[self.bit_phase[start % self.bit_phase.len()]]
    }
}

/// Enumerates all simple error events whose weight is below `opts.w_max`.
///
/// The search walks the trellis depth first from the all-zero state, leaving
/// it with a one and following every continuation until the path returns to
/// zero or its weight reaches the threshold. Events are collected for every
/// puncture phase and sorted by length, then bits.
pub fn enumerate_error_vectors(code: &ConvCode, opts: EnumerationOptions) -> Result<ErrorVectorSet> {
    if opts.w_max == 0 {
        return Err(Error::invalid("w_max must be at least 1"));
    }
    let mut by_phase = Vec::with_capacity(code.period());
    for phase in 0..code.period() {
        let mut found = Vec::new();
        let mut bits = Vec::new();
        let mut input = Vec::new();
        search(code, opts, phase, 0, 1, &mut bits, &mut input, &mut found)?;
        found.sort_by(|a: &ErrorVector, b: &ErrorVector| {
            a.len().cmp(&b.len()).then_with(|| a.bits.cmp(&b.bits))
        });
        found.dedup_by(|a, b| a.bits == b.bits);
        by_phase.push(found);
    }
    Ok(ErrorVectorSet {
        w_max: opts.w_max,
        measure: opts.measure,
        by_phase,
        bit_phase: code.bit_phase.clone(),
    })
}

#[allow(clippy::too_many_arguments)]
fn search(
    code: &ConvCode,
    opts: EnumerationOptions,
    phase: usize,
    state: usize,
    input_bit: usize,
    bits: &mut Vec<Bit>,
    input: &mut Vec<Bit>,
    found: &mut Vec<ErrorVector>,
) -> Result<()> {
    let mark = bits.len();
    let step = input.len();
    code.emit(bits, code.outputs[state][input_bit], phase + step);
    input.push(input_bit as Bit);
    let next = code.next_state(state, input_bit);

    let weight = bits.iter().filter(|&&b| b == 1).count();
    let info_errors = input.iter().filter(|&&b| b == 1).count();
    let measured = match opts.measure {
        WeightMeasure::Output => weight,
        WeightMeasure::Input => info_errors,
    };

    let result = if measured >= opts.w_max {
        Ok(())
    } else if next == 0 {
        found.push(ErrorVector {
            bits: bits.clone(),
            input: input.clone(),
            info_errors,
            weight,
            phase,
        });
        Ok(())
    } else if bits.len() > opts.length_cap {
        Err(Error::SearchCap { cap: opts.length_cap })
    } else {
        search(code, opts, phase, next, 0, bits, input, found)
            .and_then(|_| search(code, opts, phase, next, 1, bits, input, found))
    };

    bits.truncate(mark);
    input.pop();
    result
}

/// Places `ev` at bit offset `start` (zero based) of an all-zero word of
/// length `total`.
pub fn build_error_codeword(ev: &ErrorVector, start: usize, total: usize) -> Result<Vec<Bit>> {
    if ev.len() > total || start > total - ev.len() {
        return Err(Error::StartOutOfRange {
            start,
            len: ev.len(),
            total,
        });
    }
    let mut q = vec![0; total];
    q[start..start + ev.len()].copy_from_slice(&ev.bits);
    Ok(q)
}

/// How the decoder chooses the final trellis state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EndState {
    /// The encoder was driven back to the all-zero state.
    Zero,
    /// Best metric over all states, lowest index on ties.
    Best,
}

/// Soft-input Viterbi decoder.
///
/// LLRs follow the convention `llr > 0` favours bit 0. Punctured and erased
/// positions contribute nothing to the branch metric. On equal path metrics
/// the predecessor with the lower state index survives.
pub struct ViterbiDecoder<'a> {
    code: &'a ConvCode,
    metrics: Vec<f64>,
    next_metrics: Vec<f64>,
    decisions: Vec<u8>,
    stream: Vec<f64>,
}

impl<'a> ViterbiDecoder<'a> {
    pub fn new(code: &'a ConvCode) -> Self {
        ViterbiDecoder {
            code,
            metrics: Vec::new(),
            next_metrics: Vec::new(),
            decisions: Vec::new(),
            stream: Vec::new(),
        }
    }

    /// Decodes one codeword; returns one bit per trellis step.
    pub fn decode(&mut self, llrs: &[f64], erasures: &[bool], end: EndState) -> Result<Vec<Bit>> {
        if erasures.len() != llrs.len() {
            return Err(Error::LengthMismatch {
                expected: llrs.len(),
                actual: erasures.len(),
            });
        }
        let code = self.code;
        let n = code.generators.len();
        let num_states = code.num_states();
        let shift = code.memory() - 1;

        // Depuncture into per-step, per-generator soft values.
        let mut steps = 0usize;
        let mut pos = 0usize;
        self.stream.clear();
        while pos < llrs.len() {
            let kept = &code.kept_idx[steps % code.period()];
            let mut soft = vec![0.0; n];
            for _ in 0..code.repetition {
                for &j in kept {
                    if pos >= llrs.len() {
                        return Err(Error::LengthMismatch {
                            expected: pos + 1,
                            actual: llrs.len(),
                        });
                    }
                    if !erasures[pos] {
                        soft[j] += llrs[pos];
                    }
                    pos += 1;
                }
            }
            self.stream.extend_from_slice(&soft);
            steps += 1;
        }

        self.metrics.clear();
        self.metrics.resize(num_states, f64::NEG_INFINITY);
        self.metrics[0] = 0.0;
        self.next_metrics.resize(num_states, 0.0);
        self.decisions.clear();
        self.decisions.resize(steps * num_states, 0);

        let patterns = 1usize << n;
        let mut branch = vec![0.0; patterns];
        for t in 0..steps {
            let soft = &self.stream[t * n..(t + 1) * n];
            for (mask, bm) in branch.iter_mut().enumerate() {
                *bm = soft
                    .iter()
                    .enumerate()
                    .map(|(j, &s)| if (mask >> j) & 1 == 1 { -s } else { s })
                    .sum();
            }
            let dec = &mut self.decisions[t * num_states..(t + 1) * num_states];
            for (ns, slot) in self.next_metrics.iter_mut().enumerate() {
                let input = ns >> shift;
                let p0 = (ns << 1) & (num_states - 1);
                let p1 = p0 | 1;
                let m0 = self.metrics[p0] + branch[code.outputs[p0][input] as usize];
                let m1 = self.metrics[p1] + branch[code.outputs[p1][input] as usize];
                if m1 > m0 {
                    *slot = m1;
                    dec[ns] = 1;
                } else {
                    *slot = m0;
                    dec[ns] = 0;
                }
            }
            std::mem::swap(&mut self.metrics, &mut self.next_metrics);
        }

        let mut state = match end {
            EndState::Zero => 0,
            EndState::Best => {
                let mut best = 0;
                for s in 1..num_states {
                    if self.metrics[s] > self.metrics[best] {
                        best = s;
                    }
                }
                best
            }
        };
        let mut out = vec![0; steps];
        for t in (0..steps).rev() {
            out[t] = (state >> shift) as Bit;
            let d = self.decisions[t * num_states + state] as usize;
            state = ((state << 1) & (num_states - 1)) | d;
        }
        Ok(out)
    }
}

/// Decodes with the best final state; see [`ViterbiDecoder`].
pub fn viterbi_decode(code: &ConvCode, llrs: &[f64], erasures: &[bool]) -> Result<Vec<Bit>> {
    ViterbiDecoder::new(code).decode(llrs, erasures, EndState::Best)
}
