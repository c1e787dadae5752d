//! Corpus ingestion: tokenization, stopword and frequency filtering, node
//! degree filtering, train/test splits, and the line-oriented corpus file
//! format.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math::fnv1a64;

/// Ordered dictionary of distinct word strings; token id = position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::InvalidParam(format!(
                    "duplicate vocabulary token {t:?}"
                )));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Order-sensitive fingerprint used to guard against mixing artifacts
    /// from different preprocessing runs.
    pub fn hash(&self) -> u64 {
        fnv1a64(self.tokens.iter().map(|t| t.as_bytes()))
    }
}

/// One document sent across a directed edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub id: String,
    pub sender: usize,
    pub recipient: usize,
    pub tokens: Vec<usize>,
}

/// A tokenized, integer-encoded interaction corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionCorpus {
    pub nodes: Vec<String>,
    pub vocabulary: Vocabulary,
    pub messages: Vec<Message>,
}

impl InteractionCorpus {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocabulary.size()
    }

    pub fn total_tokens(&self) -> usize {
        self.messages.iter().map(|m| m.tokens.len()).sum()
    }

    /// Token totals per ordered pair, flattened row-major [S*S].
    pub fn pair_token_totals(&self) -> Vec<u64> {
        let s = self.num_nodes();
        let mut totals = vec![0u64; s * s];
        for m in &self.messages {
            totals[m.sender * s + m.recipient] += m.tokens.len() as u64;
        }
        totals
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.num_nodes();
        if s < 2 {
            return Err(Error::InvalidParam(format!(
                "corpus needs at least 2 nodes, has {s}"
            )));
        }
        let v = self.vocab_size();
        for m in &self.messages {
            if m.sender >= s || m.recipient >= s {
                return Err(Error::InvalidParam(format!(
                    "message {} references node out of range",
                    m.id
                )));
            }
            if m.sender == m.recipient {
                return Err(Error::InvalidParam(format!(
                    "message {} is a self-message",
                    m.id
                )));
            }
            if let Some(&w) = m.tokens.iter().find(|&&w| w >= v) {
                return Err(Error::InvalidParam(format!(
                    "message {} has token id {w} >= vocabulary size {v}",
                    m.id
                )));
            }
        }
        Ok(())
    }
}

/// Preprocessing rules applied at ingestion.
#[derive(Debug, Clone)]
pub struct PreprocessConfig {
    pub stopwords: HashSet<String>,
    pub min_count: usize,
    pub max_count: usize,
    pub lowercase: bool,
    /// Minimum number of messages sent plus received for a node to be kept.
    pub min_node_degree: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            stopwords: HashSet::new(),
            min_count: 1,
            max_count: usize::MAX,
            lowercase: true,
            min_node_degree: 0,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_count > self.max_count {
            return Err(Error::InvalidParam(format!(
                "min_count {} > max_count {}",
                self.min_count, self.max_count
            )));
        }
        Ok(())
    }
}

/// Split text on non-alphanumeric runs, optionally lowercase, drop stopwords.
pub fn tokenize(raw: &str, config: &PreprocessConfig) -> Vec<String> {
    raw.split(|ch: char| !ch.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| {
            if config.lowercase {
                w.to_lowercase()
            } else {
                w.to_string()
            }
        })
        .filter(|w| !config.stopwords.contains(w))
        .collect()
}

/// A raw (untokenized) message record.
#[derive(Debug, Clone)]
pub struct RawMessage {
    pub id: String,
    pub sender: String,
    pub recipient: String,
    pub text: String,
}

/// One speech in a play script.
#[derive(Debug, Clone)]
pub struct Speech {
    pub scene: String,
    pub speaker: String,
    pub text: String,
}

/// Turn a script into directed interactions: each speech after the first in a
/// scene goes from its speaker to the previous speaker; the first speech of
/// each scene is dropped.
pub fn script_to_messages(script: &[Speech]) -> Vec<RawMessage> {
    let mut out = Vec::new();
    let mut prev: Option<(&str, &str)> = None; // (scene, speaker)
    for (i, sp) in script.iter().enumerate() {
        if let Some((scene, prev_speaker)) = prev {
            if scene == sp.scene {
                out.push(RawMessage {
                    id: format!("s{i}"),
                    sender: sp.speaker.clone(),
                    recipient: prev_speaker.to_string(),
                    text: sp.text.clone(),
                });
            }
        }
        prev = Some((&sp.scene, &sp.speaker));
    }
    out
}

/// Build an encoded corpus from raw messages.
///
/// Self-messages are dropped up front. Word-frequency filtering (corpus-wide
/// counts after stopword removal) and node-degree filtering then iterate to a
/// fixed point, so re-ingesting the decoded output changes nothing.
pub fn ingest_corpus(raw: &[RawMessage], config: &PreprocessConfig) -> Result<InteractionCorpus> {
    config.validate()?;
    struct Work {
        id: String,
        sender: String,
        recipient: String,
        tokens: Vec<String>,
    }
    let mut msgs: Vec<Work> = raw
        .iter()
        .filter(|m| m.sender != m.recipient)
        .map(|m| Work {
            id: m.id.clone(),
            sender: m.sender.clone(),
            recipient: m.recipient.clone(),
            tokens: tokenize(&m.text, config),
        })
        .collect();

    loop {
        let mut changed = false;

        // Word frequency filter on the current message set.
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for m in &msgs {
            for t in &m.tokens {
                *counts.entry(t.as_str()).or_insert(0) += 1;
            }
        }
        let keep: HashSet<String> = counts
            .iter()
            .filter(|&(_, &c)| c >= config.min_count && c <= config.max_count)
            .map(|(&w, _)| w.to_string())
            .collect();
        for m in &mut msgs {
            let before = m.tokens.len();
            m.tokens.retain(|t| keep.contains(t));
            if m.tokens.len() != before {
                changed = true;
            }
        }

        // Node degree filter: messages sent + received.
        let mut degree: HashMap<&str, usize> = HashMap::new();
        for m in &msgs {
            *degree.entry(m.sender.as_str()).or_insert(0) += 1;
            *degree.entry(m.recipient.as_str()).or_insert(0) += 1;
        }
        let drop: HashSet<String> = degree
            .iter()
            .filter(|&(_, &d)| d < config.min_node_degree)
            .map(|(&n, _)| n.to_string())
            .collect();
        if !drop.is_empty() {
            let before = msgs.len();
            msgs.retain(|m| !drop.contains(&m.sender) && !drop.contains(&m.recipient));
            if msgs.len() != before {
                changed = true;
            }
        }

        if !changed {
            break;
        }
    }

    if msgs.is_empty() {
        return Err(Error::EmptyCorpus);
    }

    // Node labels and vocabulary ordered by first occurrence.
    let mut nodes: Vec<String> = Vec::new();
    let mut node_idx: HashMap<String, usize> = HashMap::new();
    let mut vocab: Vec<String> = Vec::new();
    let mut vocab_idx: HashMap<String, usize> = HashMap::new();
    let mut encoded = Vec::with_capacity(msgs.len());
    for m in &msgs {
        for label in [&m.sender, &m.recipient] {
            if !node_idx.contains_key(label) {
                node_idx.insert(label.clone(), nodes.len());
                nodes.push(label.clone());
            }
        }
        let mut toks = Vec::with_capacity(m.tokens.len());
        for t in &m.tokens {
            let id = *vocab_idx.entry(t.clone()).or_insert_with(|| {
                vocab.push(t.clone());
                vocab.len() - 1
            });
            toks.push(id);
        }
        encoded.push(Message {
            id: m.id.clone(),
            sender: node_idx[&m.sender],
            recipient: node_idx[&m.recipient],
            tokens: toks,
        });
    }

    if nodes.len() < 2 {
        return Err(Error::EmptyCorpus);
    }

    Ok(InteractionCorpus {
        nodes,
        vocabulary: Vocabulary::new(vocab)?,
        messages: encoded,
    })
}

/// A train/test split of a corpus.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: InteractionCorpus,
    pub heldout_documents: Vec<Message>,
    /// Ordered (sender, recipient) pairs treated as unobserved in training.
    pub heldout_pairs: Vec<(usize, usize)>,
}

fn check_fraction(fraction: f64) -> Result<()> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidFraction(fraction));
    }
    Ok(())
}

/// Hold out round(fraction * #messages) documents, uniformly without
/// replacement. Deterministic given seed.
pub fn split_documents(corpus: &InteractionCorpus, fraction: f64, seed: u64) -> Result<Split> {
    check_fraction(fraction)?;
    let m = corpus.messages.len();
    if m < 2 {
        return Err(Error::InvalidParam(format!(
            "need at least 2 messages to split, have {m}"
        )));
    }
    let n_hold = (fraction * m as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = sample_indices(&mut rng, m, n_hold).into_vec();
    chosen.sort_unstable();
    let held: HashSet<usize> = chosen.iter().copied().collect();
    let mut train_msgs = Vec::with_capacity(m - n_hold);
    let mut heldout = Vec::with_capacity(n_hold);
    for (i, msg) in corpus.messages.iter().enumerate() {
        if held.contains(&i) {
            heldout.push(msg.clone());
        } else {
            train_msgs.push(msg.clone());
        }
    }
    Ok(Split {
        train: InteractionCorpus {
            nodes: corpus.nodes.clone(),
            vocabulary: corpus.vocabulary.clone(),
            messages: train_msgs,
        },
        heldout_documents: heldout,
        heldout_pairs: Vec::new(),
    })
}

/// Hold out round(fraction * S * (S-1)) ordered pairs drawn from all ordered
/// pairs, including zero-count ones. Their messages leave the training set and
/// the pairs are recorded as unobserved.
pub fn split_pairs(corpus: &InteractionCorpus, fraction: f64, seed: u64) -> Result<Split> {
    check_fraction(fraction)?;
    let s = corpus.num_nodes();
    if s < 2 {
        return Err(Error::InvalidParam("need at least 2 nodes".into()));
    }
    let all: Vec<(usize, usize)> = (0..s)
        .flat_map(|a| (0..s).filter(move |&b| b != a).map(move |b| (a, b)))
        .collect();
    let n_hold = (fraction * all.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = sample_indices(&mut rng, all.len(), n_hold).into_vec();
    chosen.sort_unstable();
    let pairs: Vec<(usize, usize)> = chosen.iter().map(|&i| all[i]).collect();
    let pair_set: HashSet<(usize, usize)> = pairs.iter().copied().collect();
    let (heldout_msgs, train_msgs): (Vec<Message>, Vec<Message>) = corpus
        .messages
        .iter()
        .cloned()
        .partition(|msg| pair_set.contains(&(msg.sender, msg.recipient)));
    Ok(Split {
        train: InteractionCorpus {
            nodes: corpus.nodes.clone(),
            vocabulary: corpus.vocabulary.clone(),
            messages: train_msgs,
        },
        heldout_documents: heldout_msgs,
        heldout_pairs: pairs,
    })
}

/// Apply a document split and a pair split together; pair removal wins, so a
/// message on a held-out pair never appears in heldout_documents.
pub fn split_both(
    corpus: &InteractionCorpus,
    doc_fraction: f64,
    pair_fraction: f64,
    seed: u64,
) -> Result<Split> {
    let pair_split = split_pairs(corpus, pair_fraction, seed)?;
    let doc_split = split_documents(corpus, doc_fraction, seed.wrapping_add(1))?;
    let pair_set: HashSet<(usize, usize)> = pair_split.heldout_pairs.iter().copied().collect();
    let held_doc_ids: HashSet<&str> = doc_split
        .heldout_documents
        .iter()
        .map(|m| m.id.as_str())
        .collect();
    let mut train_msgs = Vec::new();
    let mut heldout_docs = Vec::new();
    for msg in &corpus.messages {
        if pair_set.contains(&(msg.sender, msg.recipient)) {
            continue;
        }
        if held_doc_ids.contains(msg.id.as_str()) {
            heldout_docs.push(msg.clone());
        } else {
            train_msgs.push(msg.clone());
        }
    }
    Ok(Split {
        train: InteractionCorpus {
            nodes: corpus.nodes.clone(),
            vocabulary: corpus.vocabulary.clone(),
            messages: train_msgs,
        },
        heldout_documents: heldout_docs,
        heldout_pairs: pair_split.heldout_pairs,
    })
}

// ---------------------------------------------------------------------------
// Encoded corpus file format:
//   nodes S vocab V messages M
//   <S node-label lines>
//   <V token lines>
//   <M lines: id \t sender_idx \t recipient_idx \t space-joined token ids>
// ---------------------------------------------------------------------------

pub fn corpus_to_string(corpus: &InteractionCorpus) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "nodes {} vocab {} messages {}\n",
        corpus.num_nodes(),
        corpus.vocab_size(),
        corpus.messages.len()
    ));
    for n in &corpus.nodes {
        out.push_str(n);
        out.push('\n');
    }
    for t in corpus.vocabulary.tokens() {
        out.push_str(t);
        out.push('\n');
    }
    for m in &corpus.messages {
        let ids: Vec<String> = m.tokens.iter().map(|t| t.to_string()).collect();
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            m.id,
            m.sender,
            m.recipient,
            ids.join(" ")
        ));
    }
    out
}

pub fn write_corpus(corpus: &InteractionCorpus, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(corpus_to_string(corpus).as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn corpus_from_lines<I>(lines: I, path: &str) -> Result<InteractionCorpus>
where
    I: IntoIterator<Item = std::io::Result<String>>,
{
    let err = |line: usize, msg: String| Error::Format {
        path: path.to_string(),
        line,
        msg,
    };
    let mut it = lines.into_iter().enumerate();
    let (_, header) = it
        .next()
        .ok_or_else(|| err(1, "empty file".into()))
        .and_then(|(i, r)| r.map(|l| (i, l)).map_err(Error::Io))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 6 || parts[0] != "nodes" || parts[2] != "vocab" || parts[4] != "messages" {
        return Err(err(1, format!("bad header {header:?}")));
    }
    let parse = |p: &str, line: usize| {
        p.parse::<usize>()
            .map_err(|_| err(line, format!("bad count {p:?}")))
    };
    let s = parse(parts[1], 1)?;
    let v = parse(parts[3], 1)?;
    let m = parse(parts[5], 1)?;

    let mut next_line = |label: &str| -> Result<(usize, String)> {
        match it.next() {
            Some((i, Ok(l))) => Ok((i + 1, l)),
            Some((_, Err(e))) => Err(Error::Io(e)),
            None => Err(err(0, format!("truncated file: missing {label}"))),
        }
    };

    let mut nodes = Vec::with_capacity(s);
    for _ in 0..s {
        nodes.push(next_line("node label")?.1);
    }
    let mut vocab = Vec::with_capacity(v);
    for _ in 0..v {
        vocab.push(next_line("vocabulary token")?.1);
    }
    let mut messages = Vec::with_capacity(m);
    for _ in 0..m {
        let (lineno, line) = next_line("message")?;
        let fields: Vec<&str> = line.splitn(4, '\t').collect();
        if fields.len() != 4 {
            return Err(err(lineno, "expected 4 tab-separated fields".to_string()));
        }
        let sender = parse(fields[1], lineno)?;
        let recipient = parse(fields[2], lineno)?;
        if sender >= s || recipient >= s {
            return Err(err(lineno, format!("node index out of range (S={s})")));
        }
        let mut tokens = Vec::new();
        for tok in fields[3].split_whitespace() {
            let id = parse(tok, lineno)?;
            if id >= v {
                return Err(err(lineno, format!("token id {id} out of range (V={v})")));
            }
            tokens.push(id);
        }
        messages.push(Message {
            id: fields[0].to_string(),
            sender,
            recipient,
            tokens,
        });
    }
    let vocabulary = Vocabulary::new(vocab).map_err(|e| err(1, e.to_string()))?;
    Ok(InteractionCorpus {
        nodes,
        vocabulary,
        messages,
    })
}

pub fn read_corpus(path: &Path) -> Result<InteractionCorpus> {
    let f = File::open(path)?;
    corpus_from_lines(BufReader::new(f).lines(), &path.display().to_string())
}

/// Read a stopword file: one token per line, blank lines ignored.
pub fn read_stopwords(path: &Path) -> Result<HashSet<String>> {
    let f = File::open(path)?;
    let mut set = HashSet::new();
    for line in BufReader::new(f).lines() {
        let line = line?;
        let w = line.trim();
        if !w.is_empty() {
            set.insert(w.to_string());
        }
    }
    Ok(set)
}

/// Parse JSON-lines message input ("id", "sender", "recipient", "text").
pub fn read_jsonl_messages(path: &Path) -> Result<Vec<RawMessage>> {
    #[derive(serde::Deserialize)]
    struct Rec {
        id: String,
        sender: String,
        recipient: String,
        text: String,
    }
    let f = File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Rec = serde_json::from_str(&line).map_err(|e| Error::Format {
            path: path.display().to_string(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(RawMessage {
            id: rec.id,
            sender: rec.sender,
            recipient: rec.recipient,
            text: rec.text,
        });
    }
    Ok(out)
}

/// Parse JSON-lines script input ("scene", "speaker", "text").
pub fn read_jsonl_script(path: &Path) -> Result<Vec<Speech>> {
    #[derive(serde::Deserialize)]
    struct Rec {
        scene: serde_json::Value,
        speaker: String,
        text: String,
    }
    let f = File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Rec = serde_json::from_str(&line).map_err(|e| Error::Format {
            path: path.display().to_string(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(Speech {
            scene: rec.scene.to_string(),
            speaker: rec.speaker,
            text: rec.text,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(sender: &str, recipient: &str, text: &str) -> RawMessage {
        RawMessage {
            id: format!("{sender}-{recipient}-{}", text.len()),
            sender: sender.into(),
            recipient: recipient.into(),
            text: text.into(),
        }
    }

    #[test]
    fn tokenize_empty_input() {
        assert!(tokenize("", &PreprocessConfig::default()).is_empty());
    }

    #[test]
    fn tokenize_all_stopwords() {
        let cfg = PreprocessConfig {
            stopwords: ["to", "be", "or", "not"].iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        };
        assert!(tokenize("To be, or not to be", &cfg).is_empty());
    }

    #[test]
    fn tokenize_punctuation_and_case() {
        let got = tokenize("Market price risk. Market!", &PreprocessConfig::default());
        assert_eq!(got, vec!["market", "price", "risk", "market"]);
    }

    #[test]
    fn tokenize_never_emits_stopwords() {
        let cfg = PreprocessConfig {
            stopwords: ["the", "a"].iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        };
        for text in ["the cat sat", "A THE a", "dog the dog"] {
            for t in tokenize(text, &cfg) {
                assert!(!cfg.stopwords.contains(&t));
            }
        }
    }

    #[test]
    fn ingest_two_nodes_no_filtering() {
        let msgs = vec![raw("a", "b", "hello world"), raw("b", "a", "world again")];
        let c = ingest_corpus(&msgs, &PreprocessConfig::default()).unwrap();
        assert_eq!(c.num_nodes(), 2);
        assert_eq!(c.vocab_size(), 3);
        assert_eq!(c.messages.len(), 2);
        c.validate().unwrap();
    }

    #[test]
    fn ingest_drops_rare_word() {
        let msgs = vec![raw("a", "b", "common rare common"), raw("b", "a", "common")];
        let cfg = PreprocessConfig {
            min_count: 2,
            ..Default::default()
        };
        let c = ingest_corpus(&msgs, &cfg).unwrap();
        assert_eq!(c.vocabulary.tokens(), &["common".to_string()]);
    }

    #[test]
    fn ingest_drops_self_messages() {
        let msgs = vec![raw("a", "a", "me me me"), raw("a", "b", "hi")];
        let c = ingest_corpus(&msgs, &PreprocessConfig::default()).unwrap();
        assert_eq!(c.messages.len(), 1);
    }

    #[test]
    fn ingest_empty_corpus_error() {
        let msgs = vec![raw("a", "a", "self only")];
        assert!(matches!(
            ingest_corpus(&msgs, &PreprocessConfig::default()),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn script_single_speech_scene_dropped() {
        let script = vec![Speech {
            scene: "1".into(),
            speaker: "A".into(),
            text: "x".into(),
        }];
        assert!(script_to_messages(&script).is_empty());
    }

    #[test]
    fn script_reply_goes_to_previous_speaker() {
        let script = vec![
            Speech { scene: "1".into(), speaker: "A".into(), text: "x".into() },
            Speech { scene: "1".into(), speaker: "B".into(), text: "y".into() },
        ];
        let msgs = script_to_messages(&script);
        assert_eq!(msgs.len(), 1);
        assert_eq!((msgs[0].sender.as_str(), msgs[0].recipient.as_str()), ("B", "A"));
        assert_eq!(msgs[0].text, "y");
    }

    #[test]
    fn script_three_speeches() {
        let script = vec![
            Speech { scene: "1".into(), speaker: "A".into(), text: "1".into() },
            Speech { scene: "1".into(), speaker: "B".into(), text: "2".into() },
            Speech { scene: "1".into(), speaker: "A".into(), text: "3".into() },
        ];
        let msgs = script_to_messages(&script);
        let edges: Vec<(&str, &str)> = msgs
            .iter()
            .map(|m| (m.sender.as_str(), m.recipient.as_str()))
            .collect();
        assert_eq!(edges, vec![("B", "A"), ("A", "B")]);
    }

    #[test]
    fn script_scene_boundary_resets() {
        let script = vec![
            Speech { scene: "1".into(), speaker: "A".into(), text: "1".into() },
            Speech { scene: "2".into(), speaker: "B".into(), text: "2".into() },
            Speech { scene: "2".into(), speaker: "C".into(), text: "3".into() },
        ];
        let msgs = script_to_messages(&script);
        assert_eq!(msgs.len(), 1);
        assert_eq!((msgs[0].sender.as_str(), msgs[0].recipient.as_str()), ("C", "B"));
    }

    fn toy_corpus() -> InteractionCorpus {
        let msgs: Vec<RawMessage> = (0..10)
            .map(|i| RawMessage {
                id: format!("m{i}"),
                sender: if i % 2 == 0 { "a" } else { "b" }.into(),
                recipient: if i % 2 == 0 { "b" } else { "a" }.into(),
                text: format!("word{} word{}", i % 3, (i + 1) % 3),
            })
            .collect();
        ingest_corpus(&msgs, &PreprocessConfig::default()).unwrap()
    }

    #[test]
    fn split_documents_deterministic_and_partitioning() {
        let c = toy_corpus();
        let s1 = split_documents(&c, 0.1, 7).unwrap();
        let s2 = split_documents(&c, 0.1, 7).unwrap();
        assert_eq!(s1.heldout_documents, s2.heldout_documents);
        assert_eq!(s1.heldout_documents.len(), 1);
        assert_eq!(s1.train.messages.len(), 9);
        // union reconstructs original
        let mut ids: Vec<&str> = s1
            .train
            .messages
            .iter()
            .chain(s1.heldout_documents.iter())
            .map(|m| m.id.as_str())
            .collect();
        ids.sort();
        let mut orig: Vec<&str> = c.messages.iter().map(|m| m.id.as_str()).collect();
        orig.sort();
        assert_eq!(ids, orig);
    }

    #[test]
    fn split_documents_tiny_fraction_holds_nothing() {
        let c = toy_corpus();
        let s = split_documents(&c, 0.01, 3).unwrap();
        assert!(s.heldout_documents.is_empty());
        assert_eq!(s.train.messages.len(), c.messages.len());
    }

    #[test]
    fn split_documents_rejects_bad_fraction() {
        let c = toy_corpus();
        assert!(matches!(
            split_documents(&c, 0.0, 0),
            Err(Error::InvalidFraction(_))
        ));
        assert!(matches!(
            split_documents(&c, 1.0, 0),
            Err(Error::InvalidFraction(_))
        ));
    }

    #[test]
    fn split_pairs_two_nodes_half() {
        let c = toy_corpus();
        let s = split_pairs(&c, 0.5, 11).unwrap();
        assert_eq!(s.heldout_pairs.len(), 1);
        let held = s.heldout_pairs[0];
        for m in &s.train.messages {
            assert_ne!((m.sender, m.recipient), held);
        }
        // removed messages are exactly those on the held pair
        let removed = c.messages.len() - s.train.messages.len();
        assert_eq!(removed, s.heldout_documents.len());
        assert!(s
            .heldout_documents
            .iter()
            .all(|m| (m.sender, m.recipient) == held));
    }

    #[test]
    fn roundtrip_corpus_file() {
        let c = toy_corpus();
        let text = corpus_to_string(&c);
        let back =
            corpus_from_lines(text.lines().map(|l| Ok(l.to_string())), "mem").unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn read_rejects_out_of_range_token() {
        let text = "nodes 2 vocab 1 messages 1\na\nb\nhello\nm0\t0\t1\t0 5\n";
        let got = corpus_from_lines(text.lines().map(|l| Ok(l.to_string())), "mem");
        match got {
            Err(Error::Format { line, .. }) => assert_eq!(line, 5),
            other => panic!("expected FormatError, got {other:?}"),
        }
    }

    #[test]
    fn ingest_is_idempotent() {
        let msgs: Vec<RawMessage> = vec![
            raw("a", "b", "apple apple banana cherry"),
            raw("b", "c", "apple banana banana date"),
            raw("c", "a", "apple cherry cherry"),
            raw("c", "b", "banana apple"),
        ];
        let cfg = PreprocessConfig {
            min_count: 2,
            max_count: 5,
            min_node_degree: 2,
            ..Default::default()
        };
        let c1 = ingest_corpus(&msgs, &cfg).unwrap();
        // decode back to raw text and re-ingest
        let raw2: Vec<RawMessage> = c1
            .messages
            .iter()
            .map(|m| RawMessage {
                id: m.id.clone(),
                sender: c1.nodes[m.sender].clone(),
                recipient: c1.nodes[m.recipient].clone(),
                text: m
                    .tokens
                    .iter()
                    .map(|&t| c1.vocabulary.token(t).to_string())
                    .collect::<Vec<_>>()
                    .join(" "),
            })
            .collect();
        let c2 = ingest_corpus(&raw2, &cfg).unwrap();
        assert_eq!(c1.nodes, c2.nodes);
        assert_eq!(c1.vocabulary, c2.vocabulary);
        assert_eq!(
            c1.messages.iter().map(|m| &m.tokens).collect::<Vec<_>>(),
            c2.messages.iter().map(|m| &m.tokens).collect::<Vec<_>>()
        );
    }

    #[test]
    fn ingest_node_degree_fixed_point() {
        // c only talks to b once; with min_node_degree=2, c goes, and with it
        // its message.
        let msgs = vec![
            raw("a", "b", "x x"),
            raw("b", "a", "x"),
            raw("c", "b", "x"),
        ];
        let cfg = PreprocessConfig {
            min_node_degree: 2,
            ..Default::default()
        };
        let c = ingest_corpus(&msgs, &cfg).unwrap();
        assert_eq!(c.nodes, vec!["a".to_string(), "b".to_string()]);
        assert_eq!(c.messages.len(), 2);
    }
}
