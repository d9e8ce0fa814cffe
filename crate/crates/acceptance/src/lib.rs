//! Reference helpers for the acceptance checks.

use std::collections::BTreeSet;

use cofdm::code::{Bit, ConvCode};

/// Output bits of every simple error event starting at puncture `phase`
/// with weight below `w_max`, found by walking all inputs of up to
/// `max_input` bits: leave state zero at once, stay away from it, return
/// on the last step.
pub fn brute_force_events(code: &ConvCode, phase: usize, w_max: usize, max_input: usize) -> BTreeSet<Vec<Bit>> {
    let m = code.memory();
    let mut out = BTreeSet::new();
    for len in (m + 1)..=max_input {
        let free = len - m - 1;
        for pattern in 0u64..(1 << free) {
            let mut u = vec![1 as Bit];
            u.extend((0..free).map(|k| ((pattern >> k) & 1) as Bit));
            u.extend(std::iter::repeat_n(0, m));
            let mut state = 0usize;
            let returns_early = u.iter().enumerate().any(|(t, &b)| {
                state = ((state >> 1) | ((b as usize) << (m - 1))) & ((1 << m) - 1);
                state == 0 && t + 1 < u.len()
            });
            if returns_early {
                continue;
            }
            let bits = code.encode_from_phase(&u, phase);
            if bits.iter().map(|&b| b as usize).sum::<usize>() < w_max {
                out.insert(bits);
            }
        }
    }
    out
}

/// `E_b/N0` where a decreasing BER curve first crosses `target`,
/// interpolating log10 BER linearly in dB.
pub fn crossing(curve: &[(f64, f64)], target: f64) -> Option<f64> {
    curve.windows(2).find_map(|w| {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if y0 >= target && y1 < target && y1 > 0.0 {
            let (l0, l1, lt) = (y0.log10(), y1.log10(), target.log10());
            Some(x0 + (x1 - x0) * (l0 - lt) / (l0 - l1))
        } else {
            None
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossing_interpolates_in_log_ber() {
        let c = crossing(&[(0.0, 1e-2), (1.0, 1e-3), (2.0, 1e-5)], 1e-4).unwrap();
        assert!((c - 1.5).abs() < 1e-12);
        assert!(crossing(&[(0.0, 1e-5), (1.0, 1e-6)], 1e-4).is_none());
    }

    #[test]
    fn k3_free_distance_event() {
        let code = ConvCode::unpunctured(vec![0o7, 0o5], 3).unwrap();
        let ev = brute_force_events(&code, 0, 6, 8);
        assert_eq!(ev.into_iter().collect::<Vec<_>>(), vec![vec![1, 1, 1, 0, 1, 1]]);
    }
}
