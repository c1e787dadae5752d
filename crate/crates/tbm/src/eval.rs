//! Held-out prediction tasks: text likelihood, recipient and sender/recipient
//! attribution, and edge-count prediction, plus topic-count cross-validation
//! and the adjusted Rand index used by the synthetic recovery tests.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::fit_model;
use crate::corpus::{InteractionCorpus, Message};
use crate::error::{Error, Result};
use crate::math::{ln_gamma, log_sum_exp};
use crate::model::Hyperparams;
use crate::sampler::{ChainConfig, ModelKind, Retained, SampleChain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Text,
    Recipient,
    SenderRecipient,
    EdgeCount,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Task::Text => "text",
            Task::Recipient => "recipient",
            Task::SenderRecipient => "pair",
            Task::EdgeCount => "counts",
        };
        f.write_str(s)
    }
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(Task::Text),
            "recipient" => Ok(Task::Recipient),
            "pair" => Ok(Task::SenderRecipient),
            "counts" => Ok(Task::EdgeCount),
            other => Err(Error::Config(format!("unknown task {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub model: ModelKind,
    pub total_log_predictive: f64,
    pub per_item: Vec<(String, f64)>,
    pub mc_standard_error: f64,
}

impl EvalReport {
    fn new(task: Task, model: ModelKind, per_item: Vec<(String, f64)>) -> Self {
        let total = per_item.iter().map(|(_, s)| s).sum();
        let mc_standard_error = bootstrap_se(&per_item, 1000, 0xB007);
        EvalReport {
            task,
            model,
            total_log_predictive: total,
            per_item,
            mc_standard_error,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("item,log_predictive\n");
        for (id, score) in &self.per_item {
            out.push_str(&format!("{id},{score}\n"));
        }
        out
    }
}

/// Nonparametric bootstrap standard error of the total over held-out items.
fn bootstrap_se(per_item: &[(String, f64)], resamples: usize, seed: u64) -> f64 {
    let n = per_item.len();
    if n < 2 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut totals = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut t = 0.0;
        for _ in 0..n {
            t += per_item[rng.random_range(0..n)].1;
        }
        totals.push(t);
    }
    let mean = totals.iter().sum::<f64>() / resamples as f64;
    let var = totals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (resamples as f64 - 1.0);
    var.sqrt()
}

// ---------------------------------------------------------------------------
// Per-sample predictive quantities for each model kind.
// ---------------------------------------------------------------------------

/// Point-estimate view of one retained sample, exposing exactly what each
/// prediction task needs.
pub struct SamplePredictor<'a> {
    kind: ModelKind,
    num_comms: usize,
    num_topics: usize,
    num_words: usize,
    hyper: Hyperparams,
    sample: &'a Retained,
    /// T*V posterior-mean topic-word probabilities (absent for PSBM).
    eta: Option<Vec<f64>>,
    /// ART: pair -> topic counts.
    pair_counts: HashMap<(usize, usize), &'a [u64]>,
}

impl<'a> SamplePredictor<'a> {
    pub fn new(chain: &'a SampleChain, sample: &'a Retained) -> Self {
        let h = &chain.header;
        let kind = h.kind;
        let v = h.vocab_size;
        let t = if kind == ModelKind::Psbm { 1 } else { h.num_topics };
        let eta = if kind == ModelKind::Psbm {
            None
        } else {
            let kappa = sample.hyper.kappa;
            let mut eta = vec![0.0; t * v];
            for ti in 0..t {
                let total: u64 = (0..v).map(|w| sample.m_tw[ti * v + w]).sum();
                let denom = total as f64 + v as f64 * kappa;
                for w in 0..v {
                    eta[ti * v + w] = (sample.m_tw[ti * v + w] as f64 + kappa) / denom;
                }
            }
            Some(eta)
        };
        let mut pair_counts = HashMap::new();
        for (a, b, counts) in &sample.pair_topics {
            pair_counts.insert((*a as usize, *b as usize), counts.as_slice());
        }
        SamplePredictor {
            kind,
            num_comms: h.num_comms,
            num_topics: t,
            num_words: v,
            hyper: sample.hyper,
            sample,
            eta,
            pair_counts,
        }
    }

    fn block_cell(&self, s: usize, r: usize) -> usize {
        self.sample.c[s] * self.num_comms + self.sample.c[r]
    }

    /// Smoothed topic mixture used to score a document from s to r.
    /// Block mixture for TBM/CNT, pair mixture for ART, prior-mean (uniform)
    /// for an unseen LDA document; None for PSBM.
    pub fn mixture(&self, s: usize, r: usize) -> Option<Vec<f64>> {
        let t = self.num_topics;
        let alpha = self.hyper.alpha_lambda;
        match self.kind {
            ModelKind::Psbm => None,
            ModelKind::Lda => Some(vec![1.0 / t as f64; t]),
            ModelKind::Art => {
                let counts = self.pair_counts.get(&(s, r)).copied();
                let mut mix = vec![alpha; t];
                if let Some(cs) = counts {
                    for (m, &c) in mix.iter_mut().zip(cs) {
                        *m += c as f64;
                    }
                }
                let total: f64 = mix.iter().sum();
                mix.iter_mut().for_each(|m| *m /= total);
                Some(mix)
            }
            ModelKind::Tbm | ModelKind::Cnt => {
                let cell = self.block_cell(s, r);
                let base = &self.sample.n_blk[cell * t..(cell + 1) * t];
                let total: u64 = base.iter().sum();
                let denom = total as f64 + t as f64 * alpha;
                Some(base.iter().map(|&n| (n as f64 + alpha) / denom).collect())
            }
        }
    }

    /// Expected total words per ordered pair (block total rate); None for
    /// models without a count component.
    pub fn lambda_total(&self, s: usize, r: usize) -> Option<f64> {
        match self.kind {
            ModelKind::Tbm | ModelKind::Psbm => {
                let t = self.num_topics;
                let cell = self.block_cell(s, r);
                let n_tot: u64 = self.sample.n_blk[cell * t..(cell + 1) * t].iter().sum();
                let p = self.sample.p_blk[cell] as f64;
                Some(
                    (n_tot as f64 + t as f64 * self.hyper.alpha_lambda)
                        / (p + self.hyper.beta_lambda),
                )
            }
            _ => None,
        }
    }

    /// Σ_i log Σ_t mixture_t * eta_{t, w_i}; None for PSBM.
    pub fn doc_word_loglik(&self, s: usize, r: usize, tokens: &[usize]) -> Option<f64> {
        let mix = self.mixture(s, r)?;
        let eta = self.eta.as_ref()?;
        let v = self.num_words;
        let mut ll = 0.0;
        for &w in tokens {
            let pw: f64 = mix
                .iter()
                .enumerate()
                .map(|(t, &m)| m * eta[t * v + w])
                .sum();
            ll += pw.ln();
        }
        Some(ll)
    }

    /// Negative-binomial posterior-predictive log pmf of the total word count
    /// of a fresh pair in the block of (s, r); None for models without a
    /// count component.
    pub fn count_log_pmf(&self, s: usize, r: usize, n: u64) -> Option<f64> {
        match self.kind {
            ModelKind::Tbm | ModelKind::Psbm => {
                let t = self.num_topics;
                let cell = self.block_cell(s, r);
                let n_tot: u64 = self.sample.n_blk[cell * t..(cell + 1) * t].iter().sum();
                let p_cnt = self.sample.p_blk[cell] as f64;
                let a = t as f64 * self.hyper.alpha_lambda + n_tot as f64;
                let bp = self.hyper.beta_lambda + p_cnt;
                let p = bp / (bp + 1.0);
                Some(
                    ln_gamma(a + n as f64) - ln_gamma(a) - ln_gamma(n as f64 + 1.0)
                        + a * p.ln()
                        + n as f64 * (1.0 - p).ln(),
                )
            }
            _ => None,
        }
    }

    /// Poisson log pmf of observing n words on the (s, r) edge.
    fn poisson_log_pmf(&self, s: usize, r: usize, n: u64) -> Option<f64> {
        let rate = self.lambda_total(s, r)?;
        Some(n as f64 * rate.ln() - rate - ln_gamma(n as f64 + 1.0))
    }
}

fn check_node(chain: &SampleChain, node: usize) -> Result<()> {
    if node >= chain.header.num_nodes {
        return Err(Error::UnknownNode(node.to_string()));
    }
    Ok(())
}

fn nonempty_samples(chain: &SampleChain) -> Result<()> {
    if chain.samples.is_empty() {
        return Err(Error::Config("samples file contains no retained samples".into()));
    }
    Ok(())
}

/// Task 1: log predictive likelihood of held-out document text, conditioned
/// on document length (so no count term appears). Log-mean-exp over retained
/// samples.
pub fn heldout_text_loglik(
    chain: &SampleChain,
    heldout_documents: &[Message],
    _corpus: &InteractionCorpus,
) -> Result<EvalReport> {
    nonempty_samples(chain)?;
    if chain.header.kind == ModelKind::Psbm {
        return Err(Error::Config(
            "the Poisson SBM has no text component; text task unavailable".into(),
        ));
    }
    let predictors: Vec<SamplePredictor> = chain
        .samples
        .iter()
        .map(|s| SamplePredictor::new(chain, s))
        .collect();
    let mut per_item = Vec::with_capacity(heldout_documents.len());
    for doc in heldout_documents {
        check_node(chain, doc.sender)?;
        check_node(chain, doc.recipient)?;
        let lls: Vec<f64> = predictors
            .iter()
            .map(|p| {
                p.doc_word_loglik(doc.sender, doc.recipient, &doc.tokens)
                    .expect("non-PSBM predictor yields word likelihoods")
            })
            .collect();
        let score = log_sum_exp(&lls) - (lls.len() as f64).ln();
        per_item.push((doc.id.clone(), score));
    }
    Ok(EvalReport::new(Task::Text, chain.header.kind, per_item))
}

fn candidate_log_weight(
    p: &SamplePredictor,
    s: usize,
    r: usize,
    tokens: &[usize],
    n_total: u64,
) -> f64 {
    let mut lw = 0.0;
    // ART and CNT do not use the word count; PSBM does not use the words.
    if matches!(p.kind, ModelKind::Tbm | ModelKind::Psbm) {
        lw += p.poisson_log_pmf(s, r, n_total).unwrap();
    }
    if let Some(wll) = p.doc_word_loglik(s, r, tokens) {
        lw += wll;
    }
    lw
}

fn network_predictors<'a>(chain: &'a SampleChain) -> Result<Vec<SamplePredictor<'a>>> {
    nonempty_samples(chain)?;
    if chain.header.kind == ModelKind::Lda {
        return Err(Error::Config(
            "LDA has no network component; attribution tasks unavailable".into(),
        ));
    }
    Ok(chain
        .samples
        .iter()
        .map(|s| SamplePredictor::new(chain, s))
        .collect())
}

/// Task 2 posterior: distribution over recipients for a document with the
/// given sender, text and length. Uniform prior over candidates; mean over
/// retained samples. The sender's own slot is zero.
pub fn recipient_posterior(
    chain: &SampleChain,
    sender: usize,
    tokens: &[usize],
    n_total: u64,
) -> Result<Vec<f64>> {
    check_node(chain, sender)?;
    let predictors = network_predictors(chain)?;
    let s_nodes = chain.header.num_nodes;
    let mut mean = vec![0.0; s_nodes];
    for p in &predictors {
        let candidates: Vec<usize> = (0..s_nodes).filter(|&r| r != sender).collect();
        let lw: Vec<f64> = candidates
            .iter()
            .map(|&r| candidate_log_weight(p, sender, r, tokens, n_total))
            .collect();
        let probs = crate::math::normalize_log_weights(&lw);
        for (&r, &pr) in candidates.iter().zip(&probs) {
            mean[r] += pr / predictors.len() as f64;
        }
    }
    Ok(mean)
}

/// Task 3 posterior: distribution over ordered (sender, recipient) pairs for
/// a document of the given text and length, flattened S*S with zero diagonal.
pub fn sender_recipient_posterior(
    chain: &SampleChain,
    tokens: &[usize],
    n_total: u64,
) -> Result<Vec<f64>> {
    let predictors = network_predictors(chain)?;
    let s_nodes = chain.header.num_nodes;
    let mut mean = vec![0.0; s_nodes * s_nodes];
    let candidates: Vec<(usize, usize)> = (0..s_nodes)
        .flat_map(|a| (0..s_nodes).filter(move |&b| b != a).map(move |b| (a, b)))
        .collect();
    for p in &predictors {
        let lw: Vec<f64> = candidates
            .iter()
            .map(|&(a, b)| candidate_log_weight(p, a, b, tokens, n_total))
            .collect();
        let probs = crate::math::normalize_log_weights(&lw);
        for (&(a, b), &pr) in candidates.iter().zip(&probs) {
            mean[a * s_nodes + b] += pr / predictors.len() as f64;
        }
    }
    Ok(mean)
}

/// Task 2 report: log probability assigned to the true recipient of each
/// held-out document.
pub fn recipient_loglik(
    chain: &SampleChain,
    heldout_documents: &[Message],
    _corpus: &InteractionCorpus,
) -> Result<EvalReport> {
    let mut per_item = Vec::with_capacity(heldout_documents.len());
    for doc in heldout_documents {
        check_node(chain, doc.recipient)?;
        let post = recipient_posterior(chain, doc.sender, &doc.tokens, doc.tokens.len() as u64)?;
        per_item.push((doc.id.clone(), post[doc.recipient].ln()));
    }
    Ok(EvalReport::new(Task::Recipient, chain.header.kind, per_item))
}

/// Task 3 report: log probability assigned to the true (sender, recipient).
pub fn sender_recipient_loglik(
    chain: &SampleChain,
    heldout_documents: &[Message],
    _corpus: &InteractionCorpus,
) -> Result<EvalReport> {
    let s_nodes = chain.header.num_nodes;
    let mut per_item = Vec::with_capacity(heldout_documents.len());
    for doc in heldout_documents {
        check_node(chain, doc.sender)?;
        check_node(chain, doc.recipient)?;
        let post = sender_recipient_posterior(chain, &doc.tokens, doc.tokens.len() as u64)?;
        per_item.push((doc.id.clone(), post[doc.sender * s_nodes + doc.recipient].ln()));
    }
    Ok(EvalReport::new(
        Task::SenderRecipient,
        chain.header.kind,
        per_item,
    ))
}

/// Task 4: log predictive likelihood of the total word count of each held-out
/// pair, negative-binomial under the pair's block, log-mean-exp over samples.
pub fn edge_count_loglik(
    chain: &SampleChain,
    heldout_pairs: &[(usize, usize)],
    corpus: &InteractionCorpus,
) -> Result<EvalReport> {
    nonempty_samples(chain)?;
    if !matches!(chain.header.kind, ModelKind::Tbm | ModelKind::Psbm) {
        return Err(Error::Config(format!(
            "model {} has no count component; counts task unavailable",
            chain.header.kind
        )));
    }
    let trained_heldout: std::collections::HashSet<(usize, usize)> =
        chain.header.heldout_pairs.iter().copied().collect();
    let totals = corpus.pair_token_totals();
    let s_nodes = corpus.num_nodes();
    let predictors: Vec<SamplePredictor> = chain
        .samples
        .iter()
        .map(|s| SamplePredictor::new(chain, s))
        .collect();
    let mut per_item = Vec::with_capacity(heldout_pairs.len());
    for &(a, b) in heldout_pairs {
        check_node(chain, a)?;
        check_node(chain, b)?;
        if !trained_heldout.contains(&(a, b)) {
            return Err(Error::PairNotHeldOut(a, b));
        }
        let n = totals[a * s_nodes + b];
        let lls: Vec<f64> = predictors
            .iter()
            .map(|p| p.count_log_pmf(a, b, n).unwrap())
            .collect();
        let score = log_sum_exp(&lls) - (lls.len() as f64).ln();
        per_item.push((format!("{a}->{b}"), score));
    }
    Ok(EvalReport::new(Task::EdgeCount, chain.header.kind, per_item))
}

/// Select the topic count by document-level cross-validation of the held-out
/// text likelihood. Ties break toward the smaller candidate.
pub fn cross_validate_topics(
    corpus: &InteractionCorpus,
    candidates: &[usize],
    folds: usize,
    num_comms: usize,
    hyper_base: &Hyperparams,
    config: &ChainConfig,
    kind: ModelKind,
) -> Result<(usize, Vec<(usize, f64)>)> {
    if candidates.is_empty() {
        return Err(Error::Config("empty topic-candidate list".into()));
    }
    if folds < 2 {
        return Err(Error::Config("need at least 2 folds".into()));
    }
    let m = corpus.messages.len();
    if m < folds {
        return Err(Error::Config(format!(
            "cannot make {folds} folds from {m} messages"
        )));
    }
    let mut order: Vec<usize> = (0..m).collect();
    // distinct stream from the chains themselves
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5EED_CAFE);
    order.shuffle(&mut rng);

    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();

    let mut table = Vec::with_capacity(sorted.len());
    let mut best: Option<(usize, f64)> = None;
    for &t_cand in &sorted {
        let mut score = 0.0;
        for fold in 0..folds {
            let held: std::collections::HashSet<usize> = order
                .iter()
                .enumerate()
                .filter(|(i, _)| i % folds == fold)
                .map(|(_, &idx)| idx)
                .collect();
            let mut train = corpus.clone();
            let mut heldout = Vec::new();
            let mut train_msgs = Vec::new();
            for (i, msg) in corpus.messages.iter().enumerate() {
                if held.contains(&i) {
                    heldout.push(msg.clone());
                } else {
                    train_msgs.push(msg.clone());
                }
            }
            train.messages = train_msgs;
            let hyper = Hyperparams {
                k: num_comms,
                t: t_cand,
                ..*hyper_base
            };
            let fold_config = ChainConfig {
                seed: config
                    .seed
                    .wrapping_add(fold as u64)
                    .wrapping_mul(0x9E37_79B9_7F4A_7C15),
                ..config.clone()
            };
            let chain = fit_model(kind, &train, &[], &hyper, &fold_config)?;
            let report = heldout_text_loglik(&chain, &heldout, corpus)?;
            score += report.total_log_predictive;
        }
        score /= folds as f64;
        table.push((t_cand, score));
        match best {
            Some((_, s)) if score <= s => {}
            _ => best = Some((t_cand, score)),
        }
    }
    Ok((best.unwrap().0, table))
}

/// Adjusted Rand index between two partitions of the same items.
pub fn adjusted_rand_index(c1: &[usize], c2: &[usize]) -> Result<f64> {
    if c1.len() != c2.len() {
        return Err(Error::LengthMismatch(c1.len(), c2.len()));
    }
    let n = c1.len();
    if n == 0 {
        return Ok(1.0);
    }
    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&a, &b) in c1.iter().zip(c2) {
        *table.entry((a, b)).or_insert(0) += 1;
        *rows.entry(a).or_insert(0) += 1;
        *cols.entry(b).or_insert(0) += 1;
    }
    let choose2 = |x: u64| (x * x.saturating_sub(1)) as f64 / 2.0;
    let sum_cells: f64 = table.values().map(|&x| choose2(x)).sum();
    let sum_rows: f64 = rows.values().map(|&x| choose2(x)).sum();
    let sum_cols: f64 = cols.values().map(|&x| choose2(x)).sum();
    let total = choose2(n as u64);
    let expected = sum_rows * sum_cols / total;
    let max_index = 0.5 * (sum_rows + sum_cols);
    if (max_index - expected).abs() < 1e-12 {
        // degenerate: both partitions trivial
        return Ok(1.0);
    }
    Ok((sum_cells - expected) / (max_index - expected))
}
