//! Hyperparameters, latent state, sufficient statistics, and the exact
//! collapsed conditionals and joint log-probability that every sampler move
//! and every test oracle is checked against.
//!
//! All continuous parameters (community weights, block rates, topic mixtures,
//! topic-word distributions) are integrated out; only discrete assignments
//! remain. Arithmetic is in log space with max-subtraction normalization.

use serde::{Deserialize, Serialize};

use crate::corpus::InteractionCorpus;
use crate::error::{Error, Result};
use crate::math::ln_gamma;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Number of communities.
    pub k: usize,
    /// Number of topics.
    pub t: usize,
    /// Dirichlet concentration over communities.
    pub xi0: f64,
    /// Per-topic gamma shape for block rates.
    pub alpha_lambda: f64,
    /// Gamma rate for block rates.
    pub beta_lambda: f64,
    /// Topic-word Dirichlet concentration.
    pub kappa: f64,
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 || self.t < 1 {
            return Err(Error::InvalidParam(format!(
                "K and T must be >= 1 (K={}, T={})",
                self.k, self.t
            )));
        }
        for (name, v) in [
            ("xi0", self.xi0),
            ("alpha_lambda", self.alpha_lambda),
            ("beta_lambda", self.beta_lambda),
            ("kappa", self.kappa),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidParam(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Community assignment per node and topic assignment per token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatentState {
    pub c: Vec<usize>,
    /// Topic per token, indexed by (message, position), aligned with the
    /// training corpus.
    pub z: Vec<Vec<usize>>,
}

/// All count statistics needed for the collapsed conditionals.
///
/// Tensors are flattened row-major: `n_blk[(k*K + l)*T + t]`,
/// `m_tw[t*V + v]`, `n_pair[(s*S + r)*T + t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SuffStats {
    pub num_nodes: usize,
    pub num_comms: usize,
    pub num_topics: usize,
    pub num_words: usize,
    /// Community sizes, length K; sums to S.
    pub m: Vec<u64>,
    /// Tokens by (sender community, recipient community, topic), K*K*T.
    pub n_blk: Vec<u64>,
    /// Observed ordered pairs per block, K*K.
    pub p_blk: Vec<u64>,
    /// Tokens by (topic, word), T*V.
    pub m_tw: Vec<u64>,
    /// Row sums of m_tw, length T.
    pub m_t: Vec<u64>,
    /// Tokens by (ordered pair, topic), S*S*T; diagonal unused.
    pub n_pair: Vec<u32>,
    /// Whether each ordered pair is observed (false on the diagonal and for
    /// held-out pairs), S*S.
    pub obs: Vec<bool>,
    pub total_tokens: u64,
    /// Sum over observed pairs of ln((total tokens of the pair)!); a data
    /// constant entering the joint log-probability.
    pub log_fact_pair_totals: f64,
}

impl SuffStats {
    /// Build all statistics from scratch; the consistency oracle for the
    /// incremental updates.
    pub fn recompute(
        corpus: &InteractionCorpus,
        state: &LatentState,
        unobserved_pairs: &[(usize, usize)],
        hyper: &Hyperparams,
    ) -> Result<Self> {
        let s = corpus.num_nodes();
        let k = hyper.k;
        let t = hyper.t;
        let v = corpus.vocab_size();
        if state.c.len() != s {
            return Err(Error::InconsistentState(format!(
                "c has length {} for {} nodes",
                state.c.len(),
                s
            )));
        }
        if state.z.len() != corpus.messages.len() {
            return Err(Error::InconsistentState(format!(
                "z covers {} messages, corpus has {}",
                state.z.len(),
                corpus.messages.len()
            )));
        }
        for (msg, zs) in corpus.messages.iter().zip(&state.z) {
            if msg.tokens.len() != zs.len() {
                return Err(Error::InconsistentState(format!(
                    "message {} has {} tokens but {} topic assignments",
                    msg.id,
                    msg.tokens.len(),
                    zs.len()
                )));
            }
        }
        if let Some(&bad) = state.c.iter().find(|&&ci| ci >= k) {
            return Err(Error::InconsistentState(format!(
                "community index {bad} out of range (K={k})"
            )));
        }

        let mut obs = vec![true; s * s];
        for i in 0..s {
            obs[i * s + i] = false;
        }
        for &(a, b) in unobserved_pairs {
            obs[a * s + b] = false;
        }

        let mut stats = SuffStats {
            num_nodes: s,
            num_comms: k,
            num_topics: t,
            num_words: v,
            m: vec![0; k],
            n_blk: vec![0; k * k * t],
            p_blk: vec![0; k * k],
            m_tw: vec![0; t * v],
            m_t: vec![0; t],
            n_pair: vec![0; s * s * t],
            obs,
            total_tokens: 0,
            log_fact_pair_totals: 0.0,
        };

        for (msg, zs) in corpus.messages.iter().zip(&state.z) {
            if !stats.obs[msg.sender * s + msg.recipient] {
                return Err(Error::InconsistentState(format!(
                    "message {} lies on an unobserved pair",
                    msg.id
                )));
            }
            for (&w, &zi) in msg.tokens.iter().zip(zs) {
                if zi >= t {
                    return Err(Error::InconsistentState(format!(
                        "topic index {zi} out of range (T={t})"
                    )));
                }
                stats.n_pair[(msg.sender * s + msg.recipient) * t + zi] += 1;
                stats.m_tw[zi * v + w] += 1;
                stats.m_t[zi] += 1;
                stats.total_tokens += 1;
            }
        }
        for &ci in &state.c {
            stats.m[ci] += 1;
        }
        for a in 0..s {
            for b in 0..s {
                if !stats.obs[a * s + b] {
                    continue;
                }
                let (ka, kb) = (state.c[a], state.c[b]);
                stats.p_blk[ka * k + kb] += 1;
                let mut pair_total = 0u64;
                for ti in 0..t {
                    let n = stats.n_pair[(a * s + b) * t + ti] as u64;
                    stats.n_blk[(ka * k + kb) * t + ti] += n;
                    pair_total += n;
                }
                stats.log_fact_pair_totals += ln_gamma(pair_total as f64 + 1.0);
            }
        }
        Ok(stats)
    }

    #[inline]
    pub fn obs_pair(&self, a: usize, b: usize) -> bool {
        self.obs[a * self.num_nodes + b]
    }

    /// Remove one token of word `w`, topic `t`, on observed pair (a, b) whose
    /// endpoints currently sit in communities (ka, kb).
    pub fn remove_token(&mut self, a: usize, b: usize, ka: usize, kb: usize, t: usize, w: usize) {
        let s = self.num_nodes;
        let k = self.num_comms;
        let nt = self.num_topics;
        let v = self.num_words;
        self.n_pair[(a * s + b) * nt + t] -= 1;
        self.n_blk[(ka * k + kb) * nt + t] -= 1;
        self.m_tw[t * v + w] -= 1;
        self.m_t[t] -= 1;
        self.total_tokens -= 1;
    }

    pub fn add_token(&mut self, a: usize, b: usize, ka: usize, kb: usize, t: usize, w: usize) {
        let s = self.num_nodes;
        let k = self.num_comms;
        let nt = self.num_topics;
        let v = self.num_words;
        self.n_pair[(a * s + b) * nt + t] += 1;
        self.n_blk[(ka * k + kb) * nt + t] += 1;
        self.m_tw[t * v + w] += 1;
        self.m_t[t] += 1;
        self.total_tokens += 1;
    }

    /// Pull node `node` (currently in community `k_old`) out of the block
    /// statistics: its community slot and every observed pair it touches.
    pub fn remove_node(&mut self, node: usize, k_old: usize, c: &[usize]) {
        let s = self.num_nodes;
        let k = self.num_comms;
        let nt = self.num_topics;
        self.m[k_old] -= 1;
        for (r, &cr) in c.iter().enumerate().take(s) {
            if r == node {
                continue;
            }
            if self.obs_pair(node, r) {
                self.p_blk[k_old * k + cr] -= 1;
                for t in 0..nt {
                    self.n_blk[(k_old * k + cr) * nt + t] -=
                        self.n_pair[(node * s + r) * nt + t] as u64;
                }
            }
            if self.obs_pair(r, node) {
                self.p_blk[cr * k + k_old] -= 1;
                for t in 0..nt {
                    self.n_blk[(cr * k + k_old) * nt + t] -=
                        self.n_pair[(r * s + node) * nt + t] as u64;
                }
            }
        }
    }

    pub fn add_node(&mut self, node: usize, k_new: usize, c: &[usize]) {
        let s = self.num_nodes;
        let k = self.num_comms;
        let nt = self.num_topics;
        self.m[k_new] += 1;
        for (r, &cr) in c.iter().enumerate().take(s) {
            if r == node {
                continue;
            }
            if self.obs_pair(node, r) {
                self.p_blk[k_new * k + cr] += 1;
                for t in 0..nt {
                    self.n_blk[(k_new * k + cr) * nt + t] +=
                        self.n_pair[(node * s + r) * nt + t] as u64;
                }
            }
            if self.obs_pair(r, node) {
                self.p_blk[cr * k + k_new] += 1;
                for t in 0..nt {
                    self.n_blk[(cr * k + k_new) * nt + t] +=
                        self.n_pair[(r * s + node) * nt + t] as u64;
                }
            }
        }
    }
}

/// Log marginal of the per-pair counts in one (block, topic) cell under a
/// Gamma(alpha, beta) prior on the Poisson rate:
///
/// alpha*ln(beta) - lnG(alpha) + lnG(alpha + N) - (alpha + N)*ln(beta + P)
///   - sum_i lnG(counts_i + 1),
///
/// with P = #counts and N = sum of counts.
pub fn block_topic_log_marginal(counts: &[u64], alpha: f64, beta: f64) -> Result<f64> {
    if alpha.is_nan() || alpha <= 0.0 || beta.is_nan() || beta <= 0.0 {
        return Err(Error::InvalidParam(format!(
            "gamma parameters must be positive (alpha={alpha}, beta={beta})"
        )));
    }
    if counts.is_empty() {
        return Ok(0.0);
    }
    let p = counts.len() as f64;
    let n: u64 = counts.iter().sum();
    let mut ll = alpha * beta.ln() - ln_gamma(alpha) + ln_gamma(alpha + n as f64)
        - (alpha + n as f64) * (beta + p).ln();
    for &ni in counts {
        ll -= ln_gamma(ni as f64 + 1.0);
    }
    Ok(ll)
}

/// The "head" of the cell marginal above, dropping the count-factorial terms
/// (which cancel against the token-ordering term of the joint).
#[inline]
fn gp_head(n: u64, p: u64, alpha: f64, beta: f64) -> f64 {
    alpha * beta.ln() - ln_gamma(alpha) + ln_gamma(alpha + n as f64)
        - (alpha + n as f64) * (beta + p as f64).ln()
}

/// Symmetric Dirichlet-multinomial log mass over a count vector (ordered
/// draws, so no multinomial coefficient).
pub fn ln_dirmult_sym(counts: &[u64], conc: f64) -> f64 {
    let dim = counts.len() as f64;
    let total: u64 = counts.iter().sum();
    let mut ll = ln_gamma(dim * conc) - ln_gamma(dim * conc + total as f64);
    for &c in counts {
        if c > 0 {
            ll += ln_gamma(conc + c as f64) - ln_gamma(conc);
        }
    }
    ll
}

/// Collapsed conditional over topics for a single token of word `w` on a pair
/// whose endpoints sit in communities (k, l). `stats` must exclude the token.
pub fn topic_token_conditional(
    k: usize,
    l: usize,
    w: usize,
    stats: &SuffStats,
    hyper: &Hyperparams,
) -> Vec<f64> {
    let nt = stats.num_topics;
    let kk = stats.num_comms;
    let v = stats.num_words as f64;
    let mut p = Vec::with_capacity(nt);
    let mut total = 0.0;
    for t in 0..nt {
        let blk = stats.n_blk[(k * kk + l) * nt + t] as f64;
        let word = stats.m_tw[t * stats.num_words + w] as f64;
        let topic = stats.m_t[t] as f64;
        let weight = (blk + hyper.alpha_lambda) * (word + hyper.kappa) / (topic + v * hyper.kappa);
        p.push(weight);
        total += weight;
    }
    for q in &mut p {
        *q /= total;
    }
    p
}

/// Unnormalized log weights for node `node`'s community, with `stats` having
/// the node removed. `c` supplies the other nodes' communities.
pub fn community_log_weights(
    node: usize,
    stats: &SuffStats,
    c: &[usize],
    hyper: &Hyperparams,
) -> Vec<f64> {
    let s = stats.num_nodes;
    let k = stats.num_comms;
    let nt = stats.num_topics;
    let alpha = hyper.alpha_lambda;
    let beta = hyper.beta_lambda;

    // Node's observed pair counts grouped by the other endpoint's community.
    let mut out_p = vec![0u64; k];
    let mut out_n = vec![0u64; k * nt];
    let mut in_p = vec![0u64; k];
    let mut in_n = vec![0u64; k * nt];
    for (r, &cr) in c.iter().enumerate().take(s) {
        if r == node {
            continue;
        }
        if stats.obs_pair(node, r) {
            out_p[cr] += 1;
            for t in 0..nt {
                out_n[cr * nt + t] += stats.n_pair[(node * s + r) * nt + t] as u64;
            }
        }
        if stats.obs_pair(r, node) {
            in_p[cr] += 1;
            for t in 0..nt {
                in_n[cr * nt + t] += stats.n_pair[(r * s + node) * nt + t] as u64;
            }
        }
    }

    // Change in one cell's marginal when (dn, dp) is added.
    let cell_delta = |base_cell: usize, dn: &dyn Fn(usize) -> u64, dp: u64| -> f64 {
        let p0 = stats.p_blk[base_cell];
        let mut delta = 0.0;
        for t in 0..nt {
            let n0 = stats.n_blk[base_cell * nt + t];
            delta += gp_head(n0 + dn(t), p0 + dp, alpha, beta) - gp_head(n0, p0, alpha, beta);
        }
        delta
    };

    let mut lw = Vec::with_capacity(k);
    for cand in 0..k {
        let mut w = (stats.m[cand] as f64 + hyper.xi0).ln();
        for j in 0..k {
            if j == cand {
                // Outgoing and incoming counts to community `cand` land in
                // the same diagonal cell; they must enter jointly.
                let dn = |t: usize| out_n[cand * nt + t] + in_n[cand * nt + t];
                w += cell_delta(cand * k + cand, &dn, out_p[cand] + in_p[cand]);
            } else {
                let dn_out = |t: usize| out_n[j * nt + t];
                w += cell_delta(cand * k + j, &dn_out, out_p[j]);
                let dn_in = |t: usize| in_n[j * nt + t];
                w += cell_delta(j * k + cand, &dn_in, in_p[j]);
            }
        }
        lw.push(w);
    }
    lw
}

/// Normalized community conditional for one node given all other assignments.
pub fn community_conditional(
    node: usize,
    stats: &SuffStats,
    c: &[usize],
    hyper: &Hyperparams,
) -> Vec<f64> {
    crate::math::normalize_log_weights(&community_log_weights(node, stats, c, hyper))
}

/// Joint log-probability log P(c, n, z, w | hyper) with all continuous
/// parameters integrated out, computed from sufficient statistics.
pub fn joint_log_prob_from_stats(stats: &SuffStats, hyper: &Hyperparams) -> f64 {
    let k = stats.num_comms;
    let nt = stats.num_topics;
    let v = stats.num_words;
    let s = stats.num_nodes as f64;
    let alpha = hyper.alpha_lambda;
    let beta = hyper.beta_lambda;
    let kappa = hyper.kappa;
    let xi0 = hyper.xi0;

    // Dirichlet-multinomial over community assignments.
    let mut ll = ln_gamma(k as f64 * xi0) - ln_gamma(k as f64 * xi0 + s);
    for &mk in &stats.m {
        ll += ln_gamma(xi0 + mk as f64) - ln_gamma(xi0);
    }

    // Gamma-Poisson block marginals (factorial terms cancel against the
    // token-ordering term below, leaving only the data constant).
    for cell in 0..k * k {
        let p = stats.p_blk[cell];
        for t in 0..nt {
            ll += gp_head(stats.n_blk[cell * nt + t], p, alpha, beta);
        }
    }
    ll -= stats.log_fact_pair_totals;

    ll + topic_word_log_marginal(&stats.m_tw, &stats.m_t, v, kappa)
}

/// Sum of per-topic Dirichlet-multinomial log masses over topic-word counts.
pub fn topic_word_log_marginal(m_tw: &[u64], m_t: &[u64], v: usize, kappa: f64) -> f64 {
    let mut ll = 0.0;
    for (t, &total) in m_t.iter().enumerate() {
        ll += ln_gamma(v as f64 * kappa) - ln_gamma(v as f64 * kappa + total as f64);
        for word in 0..v {
            let c = m_tw[t * v + word];
            if c > 0 {
                ll += ln_gamma(kappa + c as f64) - ln_gamma(kappa);
            }
        }
    }
    ll
}

/// Joint log-probability computed from scratch from (corpus, state).
pub fn joint_log_prob(
    corpus: &InteractionCorpus,
    state: &LatentState,
    unobserved_pairs: &[(usize, usize)],
    hyper: &Hyperparams,
) -> Result<f64> {
    let stats = SuffStats::recompute(corpus, state, unobserved_pairs, hyper)?;
    Ok(joint_log_prob_from_stats(&stats, hyper))
}

/// Posterior-mean point estimates of the integrated-out parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointEstimates {
    /// Block topic proportions, K*K*T.
    pub theta_hat: Vec<f64>,
    /// Topic-word probabilities, T*V.
    pub eta_hat: Vec<f64>,
    /// Block-topic Poisson rates (expected words per ordered pair), K*K*T.
    pub lambda_hat: Vec<f64>,
}

pub fn point_estimates(stats: &SuffStats, hyper: &Hyperparams) -> PointEstimates {
    let k = stats.num_comms;
    let nt = stats.num_topics;
    let v = stats.num_words;
    let alpha = hyper.alpha_lambda;

    let mut theta_hat = vec![0.0; k * k * nt];
    let mut lambda_hat = vec![0.0; k * k * nt];
    for cell in 0..k * k {
        let n_tot: u64 = (0..nt).map(|t| stats.n_blk[cell * nt + t]).sum();
        let p = stats.p_blk[cell] as f64;
        for t in 0..nt {
            let n = stats.n_blk[cell * nt + t] as f64;
            theta_hat[cell * nt + t] = (n + alpha) / (n_tot as f64 + nt as f64 * alpha);
            lambda_hat[cell * nt + t] = (n + alpha) / (p + hyper.beta_lambda);
        }
    }
    let mut eta_hat = vec![0.0; nt * v];
    for t in 0..nt {
        let denom = stats.m_t[t] as f64 + v as f64 * hyper.kappa;
        for word in 0..v {
            eta_hat[t * v + word] = (stats.m_tw[t * v + word] as f64 + hyper.kappa) / denom;
        }
    }
    PointEstimates {
        theta_hat,
        eta_hat,
        lambda_hat,
    }
}

/// Alternative marginal for a single pair: negative-binomial total times a
/// symmetric Dirichlet-multinomial split. Exposed for the equivalence tests.
pub fn single_pair_dirmult_form(counts: &[u64], alpha: f64, beta: f64) -> Result<f64> {
    let t = counts.len();
    let total: u64 = counts.iter().sum();
    let nb = block_topic_log_marginal(&[total], t as f64 * alpha, beta)?;
    // unordered Dirichlet-multinomial: multinomial coefficient included
    let mut coeff = ln_gamma(total as f64 + 1.0);
    for &c in counts {
        coeff -= ln_gamma(c as f64 + 1.0);
    }
    Ok(nb + coeff + ln_dirmult_sym(counts, alpha))
}
