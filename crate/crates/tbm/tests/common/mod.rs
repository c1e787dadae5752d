//! Shared oracles for the integration and acceptance suites: numerical
//! quadrature of the gamma-Poisson marginal and exhaustive conditional
//! checks against the collapsed joint, plus small random instance builders.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use topic_blockmodel::corpus::{InteractionCorpus, Message, Vocabulary};
use topic_blockmodel::math::{ln_gamma, log_sum_exp};
use topic_blockmodel::model::{
    community_conditional, joint_log_prob, topic_token_conditional, Hyperparams, LatentState,
    SuffStats,
};

/// Quadrature oracle for block_topic_log_marginal:
/// log ∫ Gamma(λ; α, β) Π_i Poisson(n_i; λ) dλ, integrated over x = log λ so
/// the integrand is smooth and the tails die doubly-exponentially.
pub fn quadrature_log_marginal(counts: &[u64], alpha: f64, beta: f64) -> f64 {
    let n: u64 = counts.iter().sum();
    let p = counts.len() as f64;
    let shape = alpha + n as f64;
    let rate = beta + p;
    let constant = alpha * beta.ln() - ln_gamma(alpha)
        - counts
            .iter()
            .map(|&c| ln_gamma(c as f64 + 1.0))
            .sum::<f64>();
    // log of the x-space integrand, up to `constant`
    let g = |x: f64| shape * x - rate * x.exp();
    let mode = (shape / rate).ln();
    let g_max = g(mode);
    let mut lo = mode;
    while g(lo) > g_max - 80.0 {
        lo -= 0.5;
    }
    let mut hi = mode;
    while g(hi) > g_max - 80.0 {
        hi += 0.5;
    }
    // composite Simpson in log space
    let panels = 20_000;
    let h = (hi - lo) / panels as f64;
    let mut terms = Vec::with_capacity(panels + 1);
    for i in 0..=panels {
        let w: f64 = if i == 0 || i == panels {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        terms.push(g(lo + i as f64 * h) + w.ln());
    }
    constant + log_sum_exp(&terms) + (h / 3.0).ln()
}

/// A small random model instance with its latent state, suitable for
/// exhaustive conditional-vs-joint checks.
pub struct Instance {
    pub corpus: InteractionCorpus,
    pub state: LatentState,
    pub hyper: Hyperparams,
    pub unobserved: Vec<(usize, usize)>,
}

/// Random instance with S ≤ 4, K ≤ 3, T ≤ 3, V ≤ 4 and ≤ 6 tokens.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = rng.random_range(2..=4);
    let k = rng.random_range(1..=3);
    let t = rng.random_range(1..=3);
    let v = rng.random_range(1..=4);
    let total_tokens = rng.random_range(1..=6);

    let nodes: Vec<String> = (0..s).map(|i| format!("n{i}")).collect();
    let vocab = Vocabulary::new((0..v).map(|i| format!("w{i}")).collect()).unwrap();

    // scatter tokens over a few random ordered pairs
    let mut pair_tokens: std::collections::BTreeMap<(usize, usize), Vec<usize>> =
        std::collections::BTreeMap::new();
    for _ in 0..total_tokens {
        let a = rng.random_range(0..s);
        let b = loop {
            let b = rng.random_range(0..s);
            if b != a {
                break b;
            }
        };
        pair_tokens
            .entry((a, b))
            .or_default()
            .push(rng.random_range(0..v));
    }
    let messages: Vec<Message> = pair_tokens
        .into_iter()
        .enumerate()
        .map(|(i, ((a, b), tokens))| Message {
            id: format!("m{i}"),
            sender: a,
            recipient: b,
            tokens,
        })
        .collect();
    let corpus = InteractionCorpus {
        nodes,
        vocabulary: vocab,
        messages,
    };

    // occasionally hold out one pair that carries no tokens
    let mut unobserved = Vec::new();
    if s >= 3 && rng.random_bool(0.3) {
        let used: std::collections::HashSet<(usize, usize)> = corpus
            .messages
            .iter()
            .map(|m| (m.sender, m.recipient))
            .collect();
        'outer: for a in 0..s {
            for b in 0..s {
                if a != b && !used.contains(&(a, b)) {
                    unobserved.push((a, b));
                    break 'outer;
                }
            }
        }
    }

    let hyper = Hyperparams {
        k,
        t,
        xi0: rng.random_range(0.3..2.0),
        alpha_lambda: rng.random_range(0.3..2.0),
        beta_lambda: rng.random_range(0.3..2.0),
        kappa: rng.random_range(0.3..2.0),
    };
    let state = LatentState {
        c: (0..s).map(|_| rng.random_range(0..k)).collect(),
        z: corpus
            .messages
            .iter()
            .map(|m| m.tokens.iter().map(|_| rng.random_range(0..t)).collect())
            .collect(),
    };
    Instance {
        corpus,
        state,
        hyper,
        unobserved,
    }
}

/// Conditional distribution of one token's topic computed by evaluating the
/// full joint at every topic value and normalizing.
pub fn topic_conditional_by_joint(inst: &Instance, doc: usize, pos: usize) -> Vec<f64> {
    let mut state = inst.state.clone();
    let lj: Vec<f64> = (0..inst.hyper.t)
        .map(|t| {
            state.z[doc][pos] = t;
            joint_log_prob(&inst.corpus, &state, &inst.unobserved, &inst.hyper).unwrap()
        })
        .collect();
    topic_blockmodel::math::normalize_log_weights(&lj)
}

/// Conditional distribution of one node's community by the same route.
pub fn community_conditional_by_joint(inst: &Instance, node: usize) -> Vec<f64> {
    let mut state = inst.state.clone();
    let lj: Vec<f64> = (0..inst.hyper.k)
        .map(|k| {
            state.c[node] = k;
            joint_log_prob(&inst.corpus, &state, &inst.unobserved, &inst.hyper).unwrap()
        })
        .collect();
    topic_blockmodel::math::normalize_log_weights(&lj)
}

/// Max relative error between the implemented conditionals and the exhaustive
/// joint ratios, across every token and node of the instance.
pub fn conditional_vs_joint_max_rel_err(inst: &Instance) -> f64 {
    let mut worst: f64 = 0.0;
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);

    for (d, msg) in inst.corpus.messages.iter().enumerate() {
        let (ks, kr) = (inst.state.c[msg.sender], inst.state.c[msg.recipient]);
        for (i, &w) in msg.tokens.iter().enumerate() {
            let mut stats = SuffStats::recompute(
                &inst.corpus,
                &inst.state,
                &inst.unobserved,
                &inst.hyper,
            )
            .unwrap();
            stats.remove_token(msg.sender, msg.recipient, ks, kr, inst.state.z[d][i], w);
            let got = topic_token_conditional(ks, kr, w, &stats, &inst.hyper);
            let want = topic_conditional_by_joint(inst, d, i);
            for (g, e) in got.iter().zip(&want) {
                worst = worst.max(rel(*g, *e));
            }
        }
    }

    for node in 0..inst.corpus.num_nodes() {
        let mut stats = SuffStats::recompute(
            &inst.corpus,
            &inst.state,
            &inst.unobserved,
            &inst.hyper,
        )
        .unwrap();
        stats.remove_node(node, inst.state.c[node], &inst.state.c);
        let got = community_conditional(node, &stats, &inst.state.c, &inst.hyper);
        let want = community_conditional_by_joint(inst, node);
        for (g, e) in got.iter().zip(&want) {
            worst = worst.max(rel(*g, *e));
        }
    }
    worst
}
