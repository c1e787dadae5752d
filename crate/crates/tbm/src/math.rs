//! Small numeric helpers shared by the model, samplers and evaluation code.

use rand::Rng;

pub use statrs::function::gamma::ln_gamma;

/// log(Σ exp(x_i)) with max-subtraction. Empty input yields -inf.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

/// Turn log weights into a normalized probability vector.
pub fn normalize_log_weights(lw: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(lw);
    lw.iter().map(|&x| (x - lse).exp()).collect()
}

/// Draw an index from a normalized probability vector.
pub fn sample_index<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Temper a probability vector: p_i^(1/tau), renormalized. tau=1 is the identity.
pub fn temper(probs: &mut [f64], tau: f64) {
    if tau == 1.0 {
        return;
    }
    let inv = 1.0 / tau;
    let mut total = 0.0;
    for p in probs.iter_mut() {
        *p = p.powf(inv);
        total += *p;
    }
    for p in probs.iter_mut() {
        *p /= total;
    }
}

/// FNV-1a 64-bit hash; used to fingerprint vocabularies across runs.
pub fn fnv1a64(chunks: impl IntoIterator<Item = impl AsRef<[u8]>>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for chunk in chunks {
        for &b in chunk.as_ref() {
            h ^= b as u64;
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
        // separator so ["ab","c"] != ["a","bc"]
        h ^= 0xff;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}
