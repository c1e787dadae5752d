//! The collapsed Gibbs chain: tempered sweeps over topic and community
//! assignments, Metropolis-Hastings hyperparameter moves, the forward
//! generator, and the retained-sample file format.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::corpus::{InteractionCorpus, Message, Vocabulary};
use crate::error::{Error, Result};
use crate::math::{normalize_log_weights, sample_index, temper};
use crate::model::{
    community_log_weights, joint_log_prob_from_stats, topic_token_conditional, Hyperparams,
    LatentState, SuffStats,
};

/// Low-information Gamma(1, 0.01) prior shared by all sampled hyperparameters.
pub const HYPER_PRIOR_SHAPE: f64 = 1.0;
pub const HYPER_PRIOR_RATE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HyperName {
    Xi0,
    AlphaLambda,
    BetaLambda,
    Kappa,
}

impl HyperName {
    pub const ALL: [HyperName; 4] = [
        HyperName::Xi0,
        HyperName::AlphaLambda,
        HyperName::BetaLambda,
        HyperName::Kappa,
    ];

    pub fn get(&self, h: &Hyperparams) -> f64 {
        match self {
            HyperName::Xi0 => h.xi0,
            HyperName::AlphaLambda => h.alpha_lambda,
            HyperName::BetaLambda => h.beta_lambda,
            HyperName::Kappa => h.kappa,
        }
    }

    pub fn set(&self, h: &mut Hyperparams, v: f64) {
        match self {
            HyperName::Xi0 => h.xi0 = v,
            HyperName::AlphaLambda => h.alpha_lambda = v,
            HyperName::BetaLambda => h.beta_lambda = v,
            HyperName::Kappa => h.kappa = v,
        }
    }
}

impl fmt::Display for HyperName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            HyperName::Xi0 => "xi0",
            HyperName::AlphaLambda => "alpha_lambda",
            HyperName::BetaLambda => "beta_lambda",
            HyperName::Kappa => "kappa",
        };
        f.write_str(s)
    }
}

impl FromStr for HyperName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xi0" => Ok(HyperName::Xi0),
            "alpha" | "alpha_lambda" => Ok(HyperName::AlphaLambda),
            "beta" | "beta_lambda" => Ok(HyperName::BetaLambda),
            "kappa" => Ok(HyperName::Kappa),
            other => Err(Error::Config(format!("unknown hyperparameter {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burnin: usize,
    pub thin: usize,
    pub seed: u64,
    pub anneal: bool,
    /// Log-scale random-walk scale of the hyperparameter proposals.
    pub mh_step: f64,
    pub sample_hypers: Vec<HyperName>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            iterations: 1000,
            burnin: 500,
            thin: 10,
            seed: 0,
            anneal: true,
            mh_step: 0.1,
            sample_hypers: HyperName::ALL.to_vec(),
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burnin >= self.iterations {
            return Err(Error::Config(format!(
                "burnin ({}) must be < iterations ({})",
                self.burnin, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be >= 1".into()));
        }
        if self.mh_step < 0.0 {
            return Err(Error::Config("mh_step must be >= 0".into()));
        }
        Ok(())
    }
}

/// Annealing temperature at iteration m: e^(1 - m/burnin) during burn-in,
/// 1 afterwards.
pub fn tau(m: usize, burnin: usize, anneal: bool) -> f64 {
    if anneal && m < burnin {
        (1.0 - m as f64 / burnin as f64).exp()
    } else {
        1.0
    }
}

/// One full sweep: every token's topic, then every node's community, each
/// drawn from its collapsed conditional tempered by `tau`.
pub fn gibbs_sweep<R: Rng>(
    corpus: &InteractionCorpus,
    state: &mut LatentState,
    stats: &mut SuffStats,
    hyper: &Hyperparams,
    tau: f64,
    rng: &mut R,
) {
    for (d, msg) in corpus.messages.iter().enumerate() {
        let (ks, kr) = (state.c[msg.sender], state.c[msg.recipient]);
        for (i, &w) in msg.tokens.iter().enumerate() {
            let old = state.z[d][i];
            stats.remove_token(msg.sender, msg.recipient, ks, kr, old, w);
            let mut p = topic_token_conditional(ks, kr, w, stats, hyper);
            temper(&mut p, tau);
            let new = sample_index(&p, rng);
            state.z[d][i] = new;
            stats.add_token(msg.sender, msg.recipient, ks, kr, new, w);
        }
    }
    for node in 0..corpus.num_nodes() {
        stats.remove_node(node, state.c[node], &state.c);
        let mut lw = community_log_weights(node, stats, &state.c, hyper);
        if tau != 1.0 {
            for x in &mut lw {
                *x /= tau;
            }
        }
        let p = normalize_log_weights(&lw);
        let new = sample_index(&p, rng);
        state.c[node] = new;
        stats.add_node(node, new, &state.c);
    }
}

/// One multiplicative random-walk MH update of a positive scalar.
/// `log_post` evaluates log posterior density (up to a constant) at a value.
/// Returns (new value, accepted).
pub fn mh_update_scalar<R: Rng>(
    x: f64,
    log_post: impl Fn(f64) -> f64,
    step: f64,
    rng: &mut R,
) -> (f64, bool) {
    let eps = if step == 0.0 {
        0.0
    } else {
        Normal::new(0.0, step).unwrap().sample(rng)
    };
    let prop = x * eps.exp();
    // log(x'/x) corrects the asymmetry of the multiplicative proposal
    let delta = log_post(prop) - log_post(x) + (prop / x).ln();
    if rng.random::<f64>().ln() < delta {
        (prop, true)
    } else {
        (x, false)
    }
}

fn log_prior(x: f64) -> f64 {
    (HYPER_PRIOR_SHAPE - 1.0) * x.ln() - HYPER_PRIOR_RATE * x
}

/// One MH pass over the selected hyperparameters, using the collapsed joint
/// as likelihood. Returns per-hyperparameter acceptance flags.
pub fn mh_hyper_step<R: Rng>(
    stats: &SuffStats,
    hyper: &mut Hyperparams,
    which: &[HyperName],
    mh_step: f64,
    rng: &mut R,
) -> Vec<(HyperName, bool)> {
    let mut out = Vec::with_capacity(which.len());
    for &name in which {
        let cur = name.get(hyper);
        let base = *hyper;
        let log_post = |v: f64| {
            let mut h = base;
            name.set(&mut h, v);
            joint_log_prob_from_stats(stats, &h) + log_prior(v)
        };
        let (new, accepted) = mh_update_scalar(cur, log_post, mh_step, rng);
        name.set(hyper, new);
        out.push((name, accepted));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Tbm,
    Lda,
    Art,
    Cnt,
    Psbm,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ModelKind::Tbm => "tbm",
            ModelKind::Lda => "lda",
            ModelKind::Art => "art",
            ModelKind::Cnt => "cnt",
            ModelKind::Psbm => "psbm",
        };
        f.write_str(s)
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tbm" => Ok(ModelKind::Tbm),
            "lda" => Ok(ModelKind::Lda),
            "art" => Ok(ModelKind::Art),
            "cnt" => Ok(ModelKind::Cnt),
            "psbm" => Ok(ModelKind::Psbm),
            other => Err(Error::Config(format!("unknown model {other:?}"))),
        }
    }
}

/// How the training set was carved out of the full corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub doc_fraction: f64,
    pub pair_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainHeader {
    pub kind: ModelKind,
    pub num_nodes: usize,
    pub vocab_size: usize,
    pub num_comms: usize,
    pub num_topics: usize,
    /// FNV-1a fingerprint of the vocabulary, hex-encoded.
    pub vocab_hash: String,
    pub hyper_init: Hyperparams,
    pub config: ChainConfig,
    #[serde(default)]
    pub split: Option<SplitSpec>,
    #[serde(default)]
    pub heldout_pairs: Vec<(usize, usize)>,
    #[serde(default)]
    pub heldout_doc_ids: Vec<String>,
    /// Joint log-probability after every sweep.
    #[serde(default)]
    pub joint_trace: Vec<f64>,
    /// MH acceptance counts; attempts = iterations - burnin per entry.
    #[serde(default)]
    pub mh_accepted: BTreeMap<String, u64>,
}

/// One retained (thinned) posterior sample. Which tensors are present
/// depends on the model kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retained {
    pub iter: usize,
    pub hyper: Hyperparams,
    pub joint_log_prob: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub c: Vec<usize>,
    /// K*K*T (PSBM: K*K with T=1).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub n_blk: Vec<u64>,
    /// K*K observed-pair counts per block.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub p_blk: Vec<u64>,
    /// T*V.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub m_tw: Vec<u64>,
    /// LDA: per training document, topic counts (length T each).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub doc_topics: Vec<Vec<u64>>,
    /// ART: sparse per-ordered-pair topic counts (sender, recipient, counts).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pair_topics: Vec<(u32, u32, Vec<u64>)>,
}

/// A thinned chain: header plus retained samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleChain {
    pub header: ChainHeader,
    pub samples: Vec<Retained>,
}

impl SampleChain {
    pub fn expected_len(config: &ChainConfig) -> usize {
        (config.iterations - config.burnin) / config.thin
    }
}

/// Serialize: one JSON header line, then one JSON line per retained sample.
pub fn write_chain(chain: &SampleChain, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &chain.header).map_err(io_err)?;
    w.write_all(b"\n")?;
    for s in &chain.samples {
        serde_json::to_writer(&mut w, s).map_err(io_err)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn io_err(e: serde_json::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

pub fn read_chain(path: &Path) -> Result<SampleChain> {
    let f = File::open(path)?;
    let mut lines = BufReader::new(f).lines().enumerate();
    let header_line = match lines.next() {
        Some((_, Ok(l))) => l,
        Some((_, Err(e))) => return Err(Error::Io(e)),
        None => {
            return Err(Error::Format {
                path: path.display().to_string(),
                line: 1,
                msg: "empty samples file".into(),
            })
        }
    };
    let header: ChainHeader = serde_json::from_str(&header_line).map_err(|e| Error::Format {
        path: path.display().to_string(),
        line: 1,
        msg: e.to_string(),
    })?;
    let mut samples = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: Retained = serde_json::from_str(&line).map_err(|e| Error::Format {
            path: path.display().to_string(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        samples.push(s);
    }
    Ok(SampleChain { header, samples })
}

/// Run the collapsed Gibbs chain on a training corpus.
///
/// Initialization is uniform random; annealing tempers the first `burnin`
/// sweeps; after burn-in one MH pass per sweep updates the selected
/// hyperparameters and every `thin`-th sweep is retained. Fully deterministic
/// given the seed.
pub fn run_chain(
    corpus_train: &InteractionCorpus,
    unobserved_pairs: &[(usize, usize)],
    hyper_init: &Hyperparams,
    config: &ChainConfig,
) -> Result<SampleChain> {
    config.validate()?;
    hyper_init.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut hyper = *hyper_init;
    let mut state = LatentState {
        c: (0..corpus_train.num_nodes())
            .map(|_| rng.random_range(0..hyper.k))
            .collect(),
        z: corpus_train
            .messages
            .iter()
            .map(|m| m.tokens.iter().map(|_| rng.random_range(0..hyper.t)).collect())
            .collect(),
    };
    let mut stats = SuffStats::recompute(corpus_train, &state, unobserved_pairs, &hyper)?;

    let mut samples = Vec::with_capacity(SampleChain::expected_len(config));
    let mut joint_trace = Vec::with_capacity(config.iterations);
    let mut mh_accepted: BTreeMap<String, u64> = BTreeMap::new();

    for m in 0..config.iterations {
        let temp = tau(m, config.burnin, config.anneal);
        gibbs_sweep(corpus_train, &mut state, &mut stats, &hyper, temp, &mut rng);
        if m >= config.burnin && !config.sample_hypers.is_empty() {
            for (name, accepted) in
                mh_hyper_step(&stats, &mut hyper, &config.sample_hypers, config.mh_step, &mut rng)
            {
                if accepted {
                    *mh_accepted.entry(name.to_string()).or_insert(0) += 1;
                }
            }
        }
        let jlp = joint_log_prob_from_stats(&stats, &hyper);
        joint_trace.push(jlp);
        if m >= config.burnin && (m - config.burnin + 1).is_multiple_of(config.thin) {
            samples.push(Retained {
                iter: m,
                hyper,
                joint_log_prob: jlp,
                c: state.c.clone(),
                n_blk: stats.n_blk.clone(),
                p_blk: stats.p_blk.clone(),
                m_tw: stats.m_tw.clone(),
                doc_topics: Vec::new(),
                pair_topics: Vec::new(),
            });
        }
    }

    Ok(SampleChain {
        header: ChainHeader {
            kind: ModelKind::Tbm,
            num_nodes: corpus_train.num_nodes(),
            vocab_size: corpus_train.vocab_size(),
            num_comms: hyper.k,
            num_topics: hyper.t,
            vocab_hash: format!("{:016x}", corpus_train.vocabulary.hash()),
            hyper_init: *hyper_init,
            config: config.clone(),
            split: None,
            heldout_pairs: unobserved_pairs.to_vec(),
            heldout_doc_ids: Vec::new(),
            joint_trace,
            mh_accepted,
        },
        samples,
    })
}

// ---------------------------------------------------------------------------
// Forward generation
// ---------------------------------------------------------------------------

/// Optional overrides for the forward generator; anything left `None` is
/// drawn from its prior.
#[derive(Debug, Clone, Default)]
pub struct GenParams {
    /// Community weights, length K.
    pub phi: Option<Vec<f64>>,
    /// Fixed community assignments, length S (overrides phi).
    pub c: Option<Vec<usize>>,
    /// Block-topic rates, K*K*T.
    pub lambda: Option<Vec<f64>>,
    /// Topic-word probabilities, T*V.
    pub eta: Option<Vec<f64>>,
}

/// A forward draw: corpus, the true latent state and the true parameters.
#[derive(Debug, Clone)]
pub struct Generated {
    pub corpus: InteractionCorpus,
    pub state: LatentState,
    pub phi: Vec<f64>,
    pub lambda: Vec<f64>,
    pub eta: Vec<f64>,
}

pub fn dirichlet_sym<R: Rng>(dim: usize, conc: f64, rng: &mut R) -> Vec<f64> {
    let g = Gamma::new(conc, 1.0).unwrap();
    let mut xs: Vec<f64> = (0..dim).map(|_| g.sample(rng)).collect();
    let total: f64 = xs.iter().sum();
    if total <= 0.0 {
        // all gamma draws underflowed; fall back to uniform
        return vec![1.0 / dim as f64; dim];
    }
    for x in &mut xs {
        *x /= total;
    }
    xs
}

fn sample_poisson<R: Rng>(rate: f64, rng: &mut R) -> u64 {
    if rate <= 0.0 {
        return 0;
    }
    Poisson::new(rate).unwrap().sample(rng) as u64
}

fn sample_discrete<R: Rng>(p: &[f64], rng: &mut R) -> usize {
    sample_index(p, rng)
}

/// Sample counts, topics and words for every observed ordered pair, given
/// fixed community assignments. Used by the forward generator and by the
/// Geweke successive-conditional sampler.
pub fn generate_data_given_c<R: Rng>(
    hyper: &Hyperparams,
    c: &[usize],
    vocab_size: usize,
    params: &GenParams,
    rng: &mut R,
) -> (Vec<Message>, Vec<Vec<usize>>, Vec<f64>, Vec<f64>) {
    let s = c.len();
    let k = hyper.k;
    let t = hyper.t;
    let lambda: Vec<f64> = match &params.lambda {
        Some(l) => l.clone(),
        None => {
            let g = Gamma::new(hyper.alpha_lambda, 1.0 / hyper.beta_lambda).unwrap();
            (0..k * k * t).map(|_| g.sample(rng)).collect()
        }
    };
    let eta: Vec<f64> = match &params.eta {
        Some(e) => e.clone(),
        None => {
            let mut e = Vec::with_capacity(t * vocab_size);
            for _ in 0..t {
                e.extend(dirichlet_sym(vocab_size, hyper.kappa, rng));
            }
            e
        }
    };

    let mut messages = Vec::new();
    let mut z = Vec::new();
    for a in 0..s {
        for b in 0..s {
            if a == b {
                continue;
            }
            let cell = c[a] * k + c[b];
            let mut tokens: Vec<(usize, usize)> = Vec::new(); // (topic, word)
            for ti in 0..t {
                let n = sample_poisson(lambda[cell * t + ti], rng);
                for _ in 0..n {
                    let w = sample_discrete(&eta[ti * vocab_size..(ti + 1) * vocab_size], rng);
                    tokens.push((ti, w));
                }
            }
            if tokens.is_empty() {
                continue;
            }
            tokens.shuffle(rng);
            messages.push(Message {
                id: format!("g{a}-{b}"),
                sender: a,
                recipient: b,
                tokens: tokens.iter().map(|&(_, w)| w).collect(),
            });
            z.push(tokens.iter().map(|&(ti, _)| ti).collect());
        }
    }
    (messages, z, lambda, eta)
}

/// Forward-sample a corpus plus ground truth from the full generative
/// process. Diagonal pairs are skipped; pairs with zero tokens produce no
/// message (but remain observed).
pub fn forward_generate(
    hyper: &Hyperparams,
    num_nodes: usize,
    vocab_size: usize,
    params: &GenParams,
    seed: u64,
) -> Result<Generated> {
    hyper.validate()?;
    if num_nodes < 2 {
        return Err(Error::InvalidParam(format!(
            "need at least 2 nodes, got {num_nodes}"
        )));
    }
    if vocab_size < 1 {
        return Err(Error::InvalidParam("vocabulary size must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phi = match &params.phi {
        Some(p) => p.clone(),
        None => dirichlet_sym(hyper.k, hyper.xi0, &mut rng),
    };
    let c: Vec<usize> = match &params.c {
        Some(c) => c.clone(),
        None => (0..num_nodes).map(|_| sample_discrete(&phi, &mut rng)).collect(),
    };
    let (messages, z, lambda, eta) =
        generate_data_given_c(hyper, &c, vocab_size, params, &mut rng);
    let width = (vocab_size as f64).log10().ceil().max(1.0) as usize;
    let vocab: Vec<String> = (0..vocab_size).map(|i| format!("w{i:0width$}")).collect();
    let node_width = (num_nodes as f64).log10().ceil().max(1.0) as usize;
    let nodes: Vec<String> = (0..num_nodes).map(|i| format!("node{i:0node_width$}")).collect();
    Ok(Generated {
        corpus: InteractionCorpus {
            nodes,
            vocabulary: Vocabulary::new(vocab)?,
            messages,
        },
        state: LatentState { c, z },
        phi,
        lambda,
        eta,
    })
}
