//! The four comparison models: LDA, ART, CNT and the Poisson stochastic
//! blockmodel. All share the annealing schedule and MH hyperparameter moves
//! of the main sampler, so the evaluation tasks compare like against like.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::InteractionCorpus;
use crate::error::Result;
use crate::math::{ln_gamma, normalize_log_weights, sample_index, temper};
use crate::model::{
    topic_token_conditional, topic_word_log_marginal, Hyperparams, LatentState, SuffStats,
};
use crate::sampler::{
    mh_update_scalar, tau, ChainConfig, ChainHeader, HyperName, ModelKind, Retained, SampleChain,
    HYPER_PRIOR_RATE, HYPER_PRIOR_SHAPE,
};

fn log_prior(x: f64) -> f64 {
    (HYPER_PRIOR_SHAPE - 1.0) * x.ln() - HYPER_PRIOR_RATE * x
}

fn header(
    kind: ModelKind,
    corpus: &InteractionCorpus,
    hyper: &Hyperparams,
    config: &ChainConfig,
) -> ChainHeader {
    ChainHeader {
        kind,
        num_nodes: corpus.num_nodes(),
        vocab_size: corpus.vocab_size(),
        num_comms: hyper.k,
        num_topics: hyper.t,
        vocab_hash: format!("{:016x}", corpus.vocabulary.hash()),
        hyper_init: *hyper,
        config: config.clone(),
        split: None,
        heldout_pairs: Vec::new(),
        heldout_doc_ids: Vec::new(),
        joint_trace: Vec::new(),
        mh_accepted: BTreeMap::new(),
    }
}

/// Dirichlet-multinomial log mass over a set of count groups with symmetric
/// concentration `conc`; zero-total groups contribute nothing.
fn grouped_dirmult_ll(groups: impl Iterator<Item = Vec<u64>>, conc: f64) -> f64 {
    let mut ll = 0.0;
    for counts in groups {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            continue;
        }
        let dim = counts.len() as f64;
        ll += ln_gamma(dim * conc) - ln_gamma(dim * conc + total as f64);
        for &c in &counts {
            if c > 0 {
                ll += ln_gamma(conc + c as f64) - ln_gamma(conc);
            }
        }
    }
    ll
}

// ---------------------------------------------------------------------------
// LDA: each message is a document with its own topic mixture.
// ---------------------------------------------------------------------------

struct MixtureStats {
    /// Topic counts per mixture group (documents for LDA, ordered pairs for
    /// ART), flattened G*T.
    group_t: Vec<u64>,
    m_tw: Vec<u64>,
    m_t: Vec<u64>,
    num_topics: usize,
    num_words: usize,
}

impl MixtureStats {
    fn new(num_groups: usize, t: usize, v: usize) -> Self {
        MixtureStats {
            group_t: vec![0; num_groups * t],
            m_tw: vec![0; t * v],
            m_t: vec![0; t],
            num_topics: t,
            num_words: v,
        }
    }

    fn add(&mut self, group: usize, t: usize, w: usize) {
        self.group_t[group * self.num_topics + t] += 1;
        self.m_tw[t * self.num_words + w] += 1;
        self.m_t[t] += 1;
    }

    fn remove(&mut self, group: usize, t: usize, w: usize) {
        self.group_t[group * self.num_topics + t] -= 1;
        self.m_tw[t * self.num_words + w] -= 1;
        self.m_t[t] -= 1;
    }

    fn conditional(&self, group: usize, w: usize, alpha: f64, kappa: f64) -> Vec<f64> {
        let t = self.num_topics;
        let v = self.num_words as f64;
        let mut p = Vec::with_capacity(t);
        let mut total = 0.0;
        for ti in 0..t {
            let weight = (self.group_t[group * t + ti] as f64 + alpha)
                * (self.m_tw[ti * self.num_words + w] as f64 + kappa)
                / (self.m_t[ti] as f64 + v * kappa);
            p.push(weight);
            total += weight;
        }
        for q in &mut p {
            *q /= total;
        }
        p
    }

    fn joint(&self, alpha: f64, kappa: f64) -> f64 {
        let t = self.num_topics;
        let groups = self.group_t.chunks(t).map(|c| c.to_vec());
        grouped_dirmult_ll(groups, alpha)
            + topic_word_log_marginal(&self.m_tw, &self.m_t, self.num_words, kappa)
    }
}

/// Collapsed Gibbs for a per-group topic-mixture model; LDA groups tokens by
/// document, ART pools them per ordered sender-recipient pair.
fn fit_mixture_model(
    kind: ModelKind,
    corpus_train: &InteractionCorpus,
    hyper: &Hyperparams,
    config: &ChainConfig,
) -> Result<SampleChain> {
    config.validate()?;
    hyper.validate()?;
    let t = hyper.t;
    let v = corpus_train.vocab_size();
    let s = corpus_train.num_nodes();
    let by_pair = kind == ModelKind::Art;
    let num_groups = if by_pair {
        s * s
    } else {
        corpus_train.messages.len()
    };
    let group_of = |d: usize| -> usize {
        if by_pair {
            let m = &corpus_train.messages[d];
            m.sender * s + m.recipient
        } else {
            d
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut hy = *hyper;
    let mut z: Vec<Vec<usize>> = corpus_train
        .messages
        .iter()
        .map(|m| m.tokens.iter().map(|_| rng.random_range(0..t)).collect())
        .collect();
    let mut stats = MixtureStats::new(num_groups, t, v);
    for (d, msg) in corpus_train.messages.iter().enumerate() {
        for (i, &w) in msg.tokens.iter().enumerate() {
            stats.add(group_of(d), z[d][i], w);
        }
    }

    let sampled: Vec<HyperName> = config
        .sample_hypers
        .iter()
        .copied()
        .filter(|h| matches!(h, HyperName::AlphaLambda | HyperName::Kappa))
        .collect();

    let mut samples = Vec::with_capacity(SampleChain::expected_len(config));
    let mut joint_trace = Vec::with_capacity(config.iterations);
    let mut mh_accepted: BTreeMap<String, u64> = BTreeMap::new();

    for m in 0..config.iterations {
        let temp = tau(m, config.burnin, config.anneal);
        for (d, msg) in corpus_train.messages.iter().enumerate() {
            let g = group_of(d);
            for (i, &w) in msg.tokens.iter().enumerate() {
                stats.remove(g, z[d][i], w);
                let mut p = stats.conditional(g, w, hy.alpha_lambda, hy.kappa);
                temper(&mut p, temp);
                z[d][i] = sample_index(&p, &mut rng);
                stats.add(g, z[d][i], w);
            }
        }
        if m >= config.burnin {
            for &name in &sampled {
                let cur = name.get(&hy);
                let base = hy;
                let log_post = |x: f64| {
                    let mut h = base;
                    name.set(&mut h, x);
                    stats.joint(h.alpha_lambda, h.kappa) + log_prior(x)
                };
                let (new, accepted) = mh_update_scalar(cur, log_post, config.mh_step, &mut rng);
                name.set(&mut hy, new);
                if accepted {
                    *mh_accepted.entry(name.to_string()).or_insert(0) += 1;
                }
            }
        }
        let jlp = stats.joint(hy.alpha_lambda, hy.kappa);
        joint_trace.push(jlp);
        if m >= config.burnin && (m - config.burnin + 1).is_multiple_of(config.thin) {
            let (doc_topics, pair_topics) = if by_pair {
                let mut sparse = Vec::new();
                for a in 0..s {
                    for b in 0..s {
                        let counts = &stats.group_t[(a * s + b) * t..(a * s + b + 1) * t];
                        if counts.iter().any(|&c| c > 0) {
                            sparse.push((a as u32, b as u32, counts.to_vec()));
                        }
                    }
                }
                (Vec::new(), sparse)
            } else {
                (
                    stats.group_t.chunks(t).map(|c| c.to_vec()).collect(),
                    Vec::new(),
                )
            };
            samples.push(Retained {
                iter: m,
                hyper: hy,
                joint_log_prob: jlp,
                c: Vec::new(),
                n_blk: Vec::new(),
                p_blk: Vec::new(),
                m_tw: stats.m_tw.clone(),
                doc_topics,
                pair_topics,
            });
        }
    }

    let mut hdr = header(kind, corpus_train, hyper, config);
    hdr.joint_trace = joint_trace;
    hdr.mh_accepted = mh_accepted;
    Ok(SampleChain { header: hdr, samples })
}

/// Latent Dirichlet allocation: a topic model that ignores network structure.
pub fn fit_lda(
    corpus_train: &InteractionCorpus,
    hyper: &Hyperparams,
    config: &ChainConfig,
) -> Result<SampleChain> {
    fit_mixture_model(ModelKind::Lda, corpus_train, hyper, config)
}

/// Author-recipient topic model: one topic mixture per ordered
/// sender-recipient pair.
pub fn fit_art(
    corpus_train: &InteractionCorpus,
    hyper: &Hyperparams,
    config: &ChainConfig,
) -> Result<SampleChain> {
    fit_mixture_model(ModelKind::Art, corpus_train, hyper, config)
}

// ---------------------------------------------------------------------------
// CNT: the Topic Blockmodel without the count model, conditioning on the
// observed counts.
// ---------------------------------------------------------------------------

/// CNT community log weights: prior term times per-block Dirichlet-multinomial
/// topic-split ratios. Zero-count pairs contribute nothing.
pub fn cnt_community_log_weights(
    node: usize,
    stats: &SuffStats,
    c: &[usize],
    hyper: &Hyperparams,
) -> Vec<f64> {
    let s = stats.num_nodes;
    let k = stats.num_comms;
    let nt = stats.num_topics;
    let alpha = hyper.alpha_lambda;

    let mut out_n = vec![0u64; k * nt];
    let mut in_n = vec![0u64; k * nt];
    for (r, &cr) in c.iter().enumerate().take(s) {
        if r == node {
            continue;
        }
        if stats.obs_pair(node, r) {
            for t in 0..nt {
                out_n[cr * nt + t] += stats.n_pair[(node * s + r) * nt + t] as u64;
            }
        }
        if stats.obs_pair(r, node) {
            for t in 0..nt {
                in_n[cr * nt + t] += stats.n_pair[(r * s + node) * nt + t] as u64;
            }
        }
    }

    let cell_delta = |cell: usize, dn: &dyn Fn(usize) -> u64| -> f64 {
        let mut delta = 0.0;
        let mut n_tot = 0u64;
        let mut dn_tot = 0u64;
        for t in 0..nt {
            let n0 = stats.n_blk[cell * nt + t];
            let d = dn(t);
            delta += ln_gamma(alpha + (n0 + d) as f64) - ln_gamma(alpha + n0 as f64);
            n_tot += n0;
            dn_tot += d;
        }
        let ta = nt as f64 * alpha;
        delta - (ln_gamma(ta + (n_tot + dn_tot) as f64) - ln_gamma(ta + n_tot as f64))
    };

    let mut lw = Vec::with_capacity(k);
    for cand in 0..k {
        let mut w = (stats.m[cand] as f64 + hyper.xi0).ln();
        for j in 0..k {
            if j == cand {
                let dn = |t: usize| out_n[cand * nt + t] + in_n[cand * nt + t];
                w += cell_delta(cand * k + cand, &dn);
            } else {
                let dn_out = |t: usize| out_n[j * nt + t];
                w += cell_delta(cand * k + j, &dn_out);
                let dn_in = |t: usize| in_n[j * nt + t];
                w += cell_delta(j * k + cand, &dn_in);
            }
        }
        lw.push(w);
    }
    lw
}

/// CNT joint: Dirichlet-multinomial over communities, per-block topic splits,
/// and topic-word marginals; counts are conditioned on, not modeled.
pub fn cnt_joint_log_prob(stats: &SuffStats, hyper: &Hyperparams) -> f64 {
    let k = stats.num_comms;
    let nt = stats.num_topics;
    let s = stats.num_nodes as f64;
    let xi0 = hyper.xi0;

    let mut ll = ln_gamma(k as f64 * xi0) - ln_gamma(k as f64 * xi0 + s);
    for &mk in &stats.m {
        ll += ln_gamma(xi0 + mk as f64) - ln_gamma(xi0);
    }
    ll += grouped_dirmult_ll(
        stats.n_blk.chunks(nt).map(|c| c.to_vec()),
        hyper.alpha_lambda,
    );
    ll + topic_word_log_marginal(&stats.m_tw, &stats.m_t, stats.num_words, hyper.kappa)
}

/// Clustered node topic model fitter.
pub fn fit_cnt(
    corpus_train: &InteractionCorpus,
    unobserved_pairs: &[(usize, usize)],
    hyper: &Hyperparams,
    config: &ChainConfig,
) -> Result<SampleChain> {
    config.validate()?;
    hyper.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut hy = *hyper;
    let mut state = LatentState {
        c: (0..corpus_train.num_nodes())
            .map(|_| rng.random_range(0..hy.k))
            .collect(),
        z: corpus_train
            .messages
            .iter()
            .map(|m| m.tokens.iter().map(|_| rng.random_range(0..hy.t)).collect())
            .collect(),
    };
    let mut stats = SuffStats::recompute(corpus_train, &state, unobserved_pairs, &hy)?;

    let sampled: Vec<HyperName> = config
        .sample_hypers
        .iter()
        .copied()
        .filter(|h| !matches!(h, HyperName::BetaLambda))
        .collect();

    let mut samples = Vec::with_capacity(SampleChain::expected_len(config));
    let mut joint_trace = Vec::with_capacity(config.iterations);
    let mut mh_accepted: BTreeMap<String, u64> = BTreeMap::new();

    for m in 0..config.iterations {
        let temp = tau(m, config.burnin, config.anneal);
        // Topic sweep is shared with the Topic Blockmodel (same formula).
        for (d, msg) in corpus_train.messages.iter().enumerate() {
            let (ks, kr) = (state.c[msg.sender], state.c[msg.recipient]);
            for (i, &w) in msg.tokens.iter().enumerate() {
                let old = state.z[d][i];
                stats.remove_token(msg.sender, msg.recipient, ks, kr, old, w);
                let mut p = topic_token_conditional(ks, kr, w, &stats, &hy);
                temper(&mut p, temp);
                let new = sample_index(&p, &mut rng);
                state.z[d][i] = new;
                stats.add_token(msg.sender, msg.recipient, ks, kr, new, w);
            }
        }
        for node in 0..corpus_train.num_nodes() {
            stats.remove_node(node, state.c[node], &state.c);
            let mut lw = cnt_community_log_weights(node, &stats, &state.c, &hy);
            if temp != 1.0 {
                for x in &mut lw {
                    *x /= temp;
                }
            }
            let p = normalize_log_weights(&lw);
            let new = sample_index(&p, &mut rng);
            state.c[node] = new;
            stats.add_node(node, new, &state.c);
        }
        if m >= config.burnin {
            for &name in &sampled {
                let cur = name.get(&hy);
                let base = hy;
                let log_post = |x: f64| {
                    let mut h = base;
                    name.set(&mut h, x);
                    cnt_joint_log_prob(&stats, &h) + log_prior(x)
                };
                let (new, accepted) = mh_update_scalar(cur, log_post, config.mh_step, &mut rng);
                name.set(&mut hy, new);
                if accepted {
                    *mh_accepted.entry(name.to_string()).or_insert(0) += 1;
                }
            }
        }
        let jlp = cnt_joint_log_prob(&stats, &hy);
        joint_trace.push(jlp);
        if m >= config.burnin && (m - config.burnin + 1).is_multiple_of(config.thin) {
            samples.push(Retained {
                iter: m,
                hyper: hy,
                joint_log_prob: jlp,
                c: state.c.clone(),
                n_blk: stats.n_blk.clone(),
                p_blk: Vec::new(),
                m_tw: stats.m_tw.clone(),
                doc_topics: Vec::new(),
                pair_topics: Vec::new(),
            });
        }
    }

    let mut hdr = header(ModelKind::Cnt, corpus_train, hyper, config);
    hdr.heldout_pairs = unobserved_pairs.to_vec();
    hdr.joint_trace = joint_trace;
    hdr.mh_accepted = mh_accepted;
    Ok(SampleChain { header: hdr, samples })
}

/// Poisson stochastic blockmodel: the Topic Blockmodel restricted to T=1 on
/// pair totals. Reuses the main chain, so its community conditional is
/// identical by construction; kappa is never sampled (words are not modeled).
pub fn fit_poisson_sbm(
    corpus_train: &InteractionCorpus,
    unobserved_pairs: &[(usize, usize)],
    hyper: &Hyperparams,
    config: &ChainConfig,
) -> Result<SampleChain> {
    let hyper1 = Hyperparams { t: 1, ..*hyper };
    let config1 = ChainConfig {
        sample_hypers: config
            .sample_hypers
            .iter()
            .copied()
            .filter(|h| !matches!(h, HyperName::Kappa))
            .collect(),
        ..config.clone()
    };
    let mut chain = crate::sampler::run_chain(corpus_train, unobserved_pairs, &hyper1, &config1)?;
    chain.header.kind = ModelKind::Psbm;
    Ok(chain)
}

/// Fit any of the five models with a shared interface.
pub fn fit_model(
    kind: ModelKind,
    corpus_train: &InteractionCorpus,
    unobserved_pairs: &[(usize, usize)],
    hyper: &Hyperparams,
    config: &ChainConfig,
) -> Result<SampleChain> {
    match kind {
        ModelKind::Tbm => crate::sampler::run_chain(corpus_train, unobserved_pairs, hyper, config),
        ModelKind::Lda => fit_lda(corpus_train, hyper, config),
        ModelKind::Art => fit_art(corpus_train, hyper, config),
        ModelKind::Cnt => fit_cnt(corpus_train, unobserved_pairs, hyper, config),
        ModelKind::Psbm => fit_poisson_sbm(corpus_train, unobserved_pairs, hyper, config),
    }
}
