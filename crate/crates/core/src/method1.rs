//! Per-realization BER from a truncated union bound over error events.
//!
//! For a fixed channel `h` and interference `J`, every competing codeword
//! has the pairwise error probability
//! `Q((|Hd|^2/2 + Re{J^H H d}) / sqrt(N0 |Hd|^2 / 2))` with `d = x - z`.
//! Summing `a_l * PEP` over the events starting at a codeword position,
//! capping the sum at 1/2 and averaging over all positions gives `P(H, J)`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::q_function;
use crate::system::ErrorTerm;

/// Pairwise error probability of `z` against the transmitted `x`.
pub fn pep_realization(h: &[Complex64], j: &[Complex64], x: &[Complex64], z: &[Complex64], n0: f64) -> Result<f64> {
    let n = h.len();
    for len in [j.len(), x.len(), z.len()] {
        if len != n {
            return Err(Error::LengthMismatch { expected: n, actual: len });
        }
    }
    if !(n0 > 0.0) {
        return Err(Error::invalid(format!("noise power must be positive, got {n0}")));
    }
    let mut energy = 0.0;
    let mut cross = 0.0;
    for m in 0..n {
        let hd = h[m] * (x[m] - z[m]);
        energy += hd.norm_sqr();
        cross += (j[m].conj() * hd).re;
    }
    if energy == 0.0 {
        return Err(Error::invalid("competing codeword has no distinguishable symbol"));
    }
    Ok(pep_from_moments(energy, cross, n0))
}

fn pep_from_moments(energy: f64, cross: f64, n0: f64) -> f64 {
    q_function((0.5 * energy + cross) / (0.5 * n0 * energy).sqrt())
}

/// PEP of one error term; a term whose tones were all erased is a coin toss.
pub fn pep_term(term: &ErrorTerm, h: &[Complex64], j: &[Complex64], n0: f64) -> f64 {
    let mut energy = 0.0;
    let mut cross = 0.0;
    for (&m, &d) in term.tones.iter().zip(&term.diffs) {
        let hd = h[m] * d;
        energy += hd.norm_sqr();
        cross += (j[m].conj() * hd).re;
    }
    if energy == 0.0 {
        return 0.5;
    }
    pep_from_moments(energy, cross, n0)
}

/// BER estimate of one realization.
#[derive(Clone, Debug, PartialEq)]
pub struct RealizationBer {
    pub value: f64,
    /// Capped `P_i` for every start position, when requested.
    pub per_start: Option<Vec<f64>>,
}

/// `P(H, J)` for precomputed error terms (see [`crate::system::System::error_terms`]).
pub fn ber_realization(terms: &[Vec<ErrorTerm>], h: &[Complex64], j: &[Complex64], n0: f64, keep_per_start: bool) -> RealizationBer {
    let mut per_start = keep_per_start.then(|| Vec::with_capacity(terms.len()));
    let mut total = 0.0;
    for ts in terms {
        let p: f64 = ts
            .iter()
            .map(|t| t.info_errors as f64 * pep_term(t, h, j, n0))
            .sum::<f64>()
            .min(0.5);
        total += p;
        if let Some(v) = per_start.as_mut() {
            v.push(p);
        }
    }
    RealizationBer {
        value: if terms.is_empty() { 0.0 } else { total / terms.len() as f64 },
        per_start,
    }
}

/// Same as [`ber_realization`] without the 1/2 cap.
pub fn ber_realization_uncapped(terms: &[Vec<ErrorTerm>], h: &[Complex64], j: &[Complex64], n0: f64) -> f64 {
    if terms.is_empty() {
        return 0.0;
    }
    let total: f64 = terms
        .iter()
        .flatten()
        .map(|t| t.info_errors as f64 * pep_term(t, h, j, n0))
        .sum();
    total / terms.len() as f64
}

/// Ensemble average of per-realization BERs.
pub fn average_ber(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("cannot average an empty list"));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutageResult {
    pub outage_ber: f64,
    pub percent: f64,
    /// Indices of the realizations kept.
    pub in_set: Vec<usize>,
    /// Indices of the worst realizations, excluded.
    pub out_set: Vec<usize>,
}

/// Worst BER after excluding the worst `percent` of realizations.
pub fn outage_ber(values: &[f64], percent: f64) -> Result<OutageResult> {
    if values.is_empty() {
        return Err(Error::invalid("outage of an empty list"));
    }
    if !(0.0..100.0).contains(&percent) {
        return Err(Error::invalid(format!("outage percent must be in [0, 100), got {percent}")));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    // The small offset keeps e.g. 10% of 100 at exactly 10 despite rounding.
    let removed = (percent / 100.0 * values.len() as f64 - 1e-9).ceil().max(0.0) as usize;
    if removed >= values.len() {
        return Err(Error::invalid("outage percentage removes every realization"));
    }
    let out_set = order[..removed].to_vec();
    let in_set = order[removed..].to_vec();
    Ok(OutageResult {
        outage_ber: values[in_set[0]],
        percent,
        in_set,
        out_set,
    })
}

/// Mean of `eval(phase)` over `n_phases` uniformly spaced phases.
pub fn phase_averaged<F>(n_phases: usize, mut eval: F) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if n_phases == 0 {
        return Err(Error::invalid("at least one phase is required"));
    }
    let mut sum = 0.0;
    for phase in crate::interference::phase_grid(n_phases) {
        sum += eval(phase)?;
    }
    Ok(sum / n_phases as f64)
}
