//! Acceptance gate: one test per criterion, each printing a single
//! PASS/FAIL line (visible with `-- --nocapture`). Tolerances and budgets
//! are pinned as constants below.

mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use topic_blockmodel::baselines::fit_model;
use topic_blockmodel::corpus::{split_both, InteractionCorpus, Vocabulary};
use topic_blockmodel::eval::{
    adjusted_rand_index, cross_validate_topics, edge_count_loglik, recipient_loglik,
};
use topic_blockmodel::model::{
    block_topic_log_marginal, joint_log_prob, single_pair_dirmult_form, Hyperparams, LatentState,
    SuffStats,
};
use topic_blockmodel::sampler::{
    forward_generate, generate_data_given_c, gibbs_sweep, run_chain, tau, ChainConfig, GenParams,
    ModelKind,
};

const QUADRATURE_ABS_TOL: f64 = 1e-6; // criterion 1
const FACTORIZATION_REL_TOL: f64 = 1e-10; // criterion 2
const CONDITIONAL_REL_TOL: f64 = 1e-9; // criterion 3
const GEWEKE_Z_LIMIT: f64 = 4.0; // criterion 4
const GEWEKE_DRAWS: usize = 10_000;
const RECOVERY_MEDIAN_ARI: f64 = 0.9; // criterion 5
const DIRECTIONAL_MIN_WINS: usize = 8; // criterion 6, out of 10
const CV_MIN_SELECTIONS: usize = 6; // criterion 9, out of 10

fn verdict(criterion: usize, name: &str, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    println!("criterion {criterion} ({name}): {status} [{detail}]");
    assert!(pass, "criterion {criterion} ({name}) FAILED: {detail}");
}

#[test]
fn criterion_1_conjugacy_matches_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let len = rng.random_range(1..=8);
        let counts: Vec<u64> = (0..len).map(|_| rng.random_range(0..=15)).collect();
        let alpha = rng.random_range(0.1..5.0);
        let beta = rng.random_range(0.1..5.0);
        let exact = block_topic_log_marginal(&counts, alpha, beta).unwrap();
        let quad = common::quadrature_log_marginal(&counts, alpha, beta);
        worst = worst.max((exact - quad).abs());
    }
    verdict(
        1,
        "gamma-Poisson marginal vs quadrature",
        worst <= QUADRATURE_ABS_TOL,
        &format!("max abs err {worst:.3e} over 100 cases, tol {QUADRATURE_ABS_TOL:.0e}"),
    );
}

#[test]
fn criterion_2_per_topic_and_split_factorizations_agree() {
    // worked case: alpha=1, beta=1, T=2, counts (1,0) -> 1/8 on both sides
    let worked_product: f64 = [1u64, 0]
        .iter()
        .map(|&n| block_topic_log_marginal(&[n], 1.0, 1.0).unwrap())
        .sum();
    let worked_split = single_pair_dirmult_form(&[1, 0], 1.0, 1.0).unwrap();
    let eighth = (1.0f64 / 8.0).ln();
    let worked_ok =
        (worked_product - eighth).abs() < 1e-12 && (worked_split - eighth).abs() < 1e-12;

    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let t = rng.random_range(1..=6);
        let counts: Vec<u64> = (0..t).map(|_| rng.random_range(0..=10)).collect();
        let alpha = rng.random_range(0.2..4.0);
        let beta = rng.random_range(0.2..4.0);
        let product: f64 = counts
            .iter()
            .map(|&n| block_topic_log_marginal(&[n], alpha, beta).unwrap())
            .sum();
        let split = single_pair_dirmult_form(&counts, alpha, beta).unwrap();
        worst = worst.max((product - split).abs() / split.abs().max(1e-300));
    }
    verdict(
        2,
        "per-topic NB product vs NB x Dirichlet-multinomial",
        worked_ok && worst <= FACTORIZATION_REL_TOL,
        &format!(
            "worked 1/8 case {}, max rel err {worst:.3e} over 100 cases",
            if worked_ok { "ok" } else { "wrong" }
        ),
    );
}

#[test]
fn criterion_3_conditionals_match_exhaustive_joint() {
    let mut worst: f64 = 0.0;
    for seed in 0..50 {
        let inst = common::random_instance(3000 + seed);
        worst = worst.max(common::conditional_vs_joint_max_rel_err(&inst));
    }
    verdict(
        3,
        "conditionals vs joint enumeration",
        worst <= CONDITIONAL_REL_TOL,
        &format!("max rel err {worst:.3e} over 50 instances"),
    );
}

// --- criterion 4: Geweke getting-it-right -----------------------------------

const GEWEKE_NUM_STATS: usize = 10;

fn geweke_stats(
    corpus: &InteractionCorpus,
    state: &LatentState,
    hyper: &Hyperparams,
) -> [f64; GEWEKE_NUM_STATS] {
    let s = corpus.num_nodes();
    let totals = corpus.pair_token_totals();
    let total_tokens: u64 = totals.iter().sum();
    let nonzero = totals.iter().filter(|&&n| n > 0).count();
    let max_pair = totals.iter().copied().max().unwrap_or(0);
    let sum_sq: u64 = totals.iter().map(|&n| n * n).sum();

    let mut comm_sizes = vec![0u64; hyper.k];
    for &c in &state.c {
        comm_sizes[c] += 1;
    }
    let max_comm = comm_sizes.iter().copied().max().unwrap();
    let same_comm_pairs: u64 = comm_sizes.iter().map(|&m| m * m.saturating_sub(1)).sum();

    let mut topic_totals = vec![0u64; hyper.t];
    let mut word_totals = vec![0u64; corpus.vocab_size()];
    for (d, msg) in corpus.messages.iter().enumerate() {
        for (i, &w) in msg.tokens.iter().enumerate() {
            topic_totals[state.z[d][i]] += 1;
            word_totals[w] += 1;
        }
    }
    let max_topic = topic_totals.iter().copied().max().unwrap();
    let min_topic = topic_totals.iter().copied().min().unwrap();
    let max_word = word_totals.iter().copied().max().unwrap_or(0);

    let joint = joint_log_prob(corpus, state, &[], hyper).unwrap();
    let _ = s;
    [
        total_tokens as f64,
        nonzero as f64,
        max_pair as f64,
        sum_sq as f64,
        max_comm as f64,
        same_comm_pairs as f64,
        max_topic as f64,
        min_topic as f64,
        max_word as f64,
        joint,
    ]
}

/// Batch-means standard error of the mean (accounts for autocorrelation).
fn batch_se(xs: &[f64]) -> f64 {
    let batches = 100;
    let size = xs.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| xs[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var =
        means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches as f64 - 1.0);
    (var / batches as f64).sqrt()
}

#[test]
fn criterion_4_geweke_getting_it_right() {
    let hyper = Hyperparams {
        k: 2,
        t: 2,
        xi0: 1.0,
        alpha_lambda: 1.0,
        beta_lambda: 1.0,
        kappa: 1.0,
    };
    let s = 4;
    let v = 5;

    let mut forward: Vec<Vec<f64>> = (0..GEWEKE_NUM_STATS)
        .map(|_| Vec::with_capacity(GEWEKE_DRAWS))
        .collect();
    for seed in 0..GEWEKE_DRAWS as u64 {
        let gen = forward_generate(&hyper, s, v, &GenParams::default(), 900_000 + seed).unwrap();
        for (col, x) in geweke_stats(&gen.corpus, &gen.state, &hyper).iter().enumerate() {
            forward[col].push(*x);
        }
    }

    // successive-conditional side: alternate an exact draw of (data, z) | c
    // with one collapsed Gibbs sweep of (c, z) | data, untempered
    let mut rng = ChaCha8Rng::seed_from_u64(424_242);
    let nodes: Vec<String> = (0..s).map(|i| format!("node{i}")).collect();
    let vocab: Vec<String> = (0..v).map(|i| format!("w{i}")).collect();
    let init = forward_generate(&hyper, s, v, &GenParams::default(), 777).unwrap();
    let mut c = init.state.c;
    let mut successive: Vec<Vec<f64>> = (0..GEWEKE_NUM_STATS)
        .map(|_| Vec::with_capacity(GEWEKE_DRAWS))
        .collect();
    for _ in 0..GEWEKE_DRAWS {
        let (messages, z, _lambda, _eta) =
            generate_data_given_c(&hyper, &c, v, &GenParams::default(), &mut rng);
        let corpus = InteractionCorpus {
            nodes: nodes.clone(),
            vocabulary: Vocabulary::new(vocab.clone()).unwrap(),
            messages,
        };
        let mut state = LatentState { c: c.clone(), z };
        let mut stats = SuffStats::recompute(&corpus, &state, &[], &hyper).unwrap();
        gibbs_sweep(&corpus, &mut state, &mut stats, &hyper, 1.0, &mut rng);
        c = state.c.clone();
        for (col, x) in geweke_stats(&corpus, &state, &hyper).iter().enumerate() {
            successive[col].push(*x);
        }
    }

    let names = [
        "total tokens",
        "nonzero pairs",
        "max pair count",
        "pair count sum of squares",
        "max community size",
        "same-community ordered pairs",
        "max topic total",
        "min topic total",
        "max word total",
        "joint log probability",
    ];
    let mut worst_z: f64 = 0.0;
    let mut detail = String::new();
    for col in 0..GEWEKE_NUM_STATS {
        let mf = forward[col].iter().sum::<f64>() / GEWEKE_DRAWS as f64;
        let ms = successive[col].iter().sum::<f64>() / GEWEKE_DRAWS as f64;
        let se = (batch_se(&forward[col]).powi(2) + batch_se(&successive[col]).powi(2)).sqrt();
        let z = (mf - ms) / se;
        worst_z = worst_z.max(z.abs());
        detail.push_str(&format!("{}: z={z:.2}; ", names[col]));
    }
    verdict(
        4,
        "Geweke forward vs successive-conditional",
        worst_z < GEWEKE_Z_LIMIT,
        &format!("max |z| {worst_z:.2} over {GEWEKE_NUM_STATS} stats; {detail}"),
    );
}

// --- criterion 5: synthetic recovery ----------------------------------------

/// Block rates with within-community totals `within` and cross-community
/// totals `cross`, each block dominated by a different topic.
fn block_lambda(k: usize, t: usize, within: f64, cross: f64) -> Vec<f64> {
    let mut lambda = vec![0.0; k * k * t];
    for a in 0..k {
        for b in 0..k {
            let cell = a * k + b;
            let total = if a == b { within } else { cross };
            let main = cell % t;
            for ti in 0..t {
                lambda[cell * t + ti] = if ti == main {
                    total * 0.95
                } else {
                    total * 0.05 / (t - 1).max(1) as f64
                };
            }
        }
    }
    lambda
}

#[test]
fn criterion_5_synthetic_community_recovery() {
    let (s, k, t, v) = (30usize, 3usize, 4usize, 100usize);
    let truth: Vec<usize> = (0..s).map(|i| i / 10) .collect();
    let gen_hyper = Hyperparams {
        k,
        t,
        xi0: 1.0,
        alpha_lambda: 1.0,
        beta_lambda: 1.0,
        kappa: 0.05, // sharp topics
    };
    // within-community totals 16x the cross-community totals (>= 10x)
    let lambda = block_lambda(k, t, 8.0, 0.5);
    let mut aris = Vec::new();
    for seed in 0..10u64 {
        let gen = forward_generate(
            &gen_hyper,
            s,
            v,
            &GenParams {
                c: Some(truth.clone()),
                lambda: Some(lambda.clone()),
                ..GenParams::default()
            },
            7_000 + seed,
        )
        .unwrap();
        let fit_hyper = Hyperparams {
            k,
            t,
            xi0: 1.0,
            alpha_lambda: 1.0,
            beta_lambda: 1.0,
            kappa: 1.0,
        };
        let config = ChainConfig {
            iterations: 600,
            burnin: 500,
            thin: 10,
            seed: 40 + seed,
            ..ChainConfig::default()
        };
        let chain = run_chain(&gen.corpus, &[], &fit_hyper, &config).unwrap();
        let last = chain.samples.last().unwrap();
        aris.push(adjusted_rand_index(&last.c, &truth).unwrap());
    }
    let mut sorted = aris.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = (sorted[4] + sorted[5]) / 2.0;
    verdict(
        5,
        "synthetic community recovery",
        median >= RECOVERY_MEDIAN_ARI,
        &format!("median ARI {median:.3} over 10 seeds (all: {aris:.3?})"),
    );
}

// --- criterion 6: directional replication of the table orderings ------------

/// Forward-sample a two-community corpus with per-block dominant topics.
fn directional_corpus(
    seed: u64,
    s: usize,
    within: f64,
    cross: f64,
    v: usize,
) -> InteractionCorpus {
    let (k, t) = (2usize, 3usize);
    let truth: Vec<usize> = (0..s).map(|i| i / (s / 2)).collect();
    let lambda = block_lambda(k, t, within, cross);
    let gen_hyper = Hyperparams {
        k,
        t,
        xi0: 1.0,
        alpha_lambda: 1.0,
        beta_lambda: 1.0,
        kappa: 0.05,
    };
    forward_generate(
        &gen_hyper,
        s,
        v,
        &GenParams {
            c: Some(truth),
            lambda: Some(lambda),
            ..GenParams::default()
        },
        seed,
    )
    .unwrap()
    .corpus
}

/// Best of two chains by final joint log probability; mitigates label-mode
/// trapping without touching the per-chain protocol.
fn fit_best_of_two(
    kind: ModelKind,
    train: &InteractionCorpus,
    heldout_pairs: &[(usize, usize)],
    hyper: &Hyperparams,
    config: &ChainConfig,
) -> topic_blockmodel::sampler::SampleChain {
    [0u64, 5000]
        .iter()
        .map(|&off| {
            let cfg = ChainConfig {
                seed: config.seed + off,
                ..config.clone()
            };
            fit_model(kind, train, heldout_pairs, hyper, &cfg).unwrap()
        })
        .max_by(|a, b| {
            let ja = a.header.joint_trace.last().unwrap();
            let jb = b.header.joint_trace.last().unwrap();
            ja.partial_cmp(jb).unwrap()
        })
        .unwrap()
}

#[test]
fn criterion_6_directional_table_orderings() {
    let hyper = Hyperparams {
        k: 2,
        t: 3,
        xi0: 1.0,
        alpha_lambda: 1.0,
        beta_lambda: 1.0,
        kappa: 1.0,
    };

    // recipient task: strong count separation plus block-specific topics
    let mut recipient_wins = 0;
    for rep in 0..10u64 {
        let corpus = directional_corpus(60_000 + rep, 16, 12.0, 1.5, 50);
        let split = split_both(&corpus, 0.1, 0.1, rep).unwrap();
        let config = ChainConfig {
            iterations: 300,
            burnin: 200,
            thin: 10,
            seed: 100 + rep,
            ..ChainConfig::default()
        };
        let mut recipient = std::collections::HashMap::new();
        for kind in [ModelKind::Tbm, ModelKind::Psbm, ModelKind::Cnt, ModelKind::Art] {
            let chain = fit_best_of_two(kind, &split.train, &split.heldout_pairs, &hyper, &config);
            let rec = recipient_loglik(&chain, &split.heldout_documents, &corpus).unwrap();
            recipient.insert(kind, rec.total_log_predictive);
        }
        let tbm = recipient[&ModelKind::Tbm];
        let psbm = recipient[&ModelKind::Psbm];
        if tbm > psbm && psbm > recipient[&ModelKind::Cnt] && psbm > recipient[&ModelKind::Art] {
            recipient_wins += 1;
        }
    }

    // count task: counts weakly separate the communities, text strongly does,
    // so the blockmodel with text recovers better rate estimates
    let mut count_wins = 0;
    for rep in 0..10u64 {
        let corpus = directional_corpus(70_000 + rep, 10, 2.0, 0.8, 50);
        let split = split_both(&corpus, 0.1, 0.3, rep).unwrap();
        let config = ChainConfig {
            iterations: 300,
            burnin: 200,
            thin: 10,
            seed: 300 + rep,
            ..ChainConfig::default()
        };
        let mut counts = std::collections::HashMap::new();
        for kind in [ModelKind::Tbm, ModelKind::Psbm] {
            let chain = fit_best_of_two(kind, &split.train, &split.heldout_pairs, &hyper, &config);
            let cnt = edge_count_loglik(&chain, &split.heldout_pairs, &corpus).unwrap();
            counts.insert(kind, cnt.total_log_predictive);
        }
        if counts[&ModelKind::Tbm] > counts[&ModelKind::Psbm] {
            count_wins += 1;
        }
    }

    verdict(
        6,
        "directional orderings (recipient and count tasks)",
        recipient_wins >= DIRECTIONAL_MIN_WINS && count_wins >= DIRECTIONAL_MIN_WINS,
        &format!(
            "recipient TBM>PSBM>{{CNT,ART}} in {recipient_wins}/10, counts TBM>PSBM in {count_wins}/10, need >= {DIRECTIONAL_MIN_WINS}"
        ),
    );
}

// --- criterion 7: annealing schedule ----------------------------------------

#[test]
fn criterion_7_annealing_schedule() {
    let endpoints_ok = tau(0, 500, true) == 1.0f64.exp() && tau(500, 500, true) == 1.0;
    let mid = tau(250, 500, true);
    let mid_ok = (mid - 0.5f64.exp()).abs() < 1e-15;

    // at tau = 1 the tempered path is bit-identical to the untempered one
    let hyper = Hyperparams {
        k: 2,
        t: 2,
        xi0: 1.0,
        alpha_lambda: 1.0,
        beta_lambda: 0.5,
        kappa: 1.0,
    };
    let gen = forward_generate(&hyper, 8, 20, &GenParams::default(), 31).unwrap();
    let mut chains = Vec::new();
    for anneal in [true, false] {
        let config = ChainConfig {
            iterations: 30,
            burnin: 0,
            thin: 5,
            seed: 9,
            anneal,
            ..ChainConfig::default()
        };
        let chain = run_chain(&gen.corpus, &[], &hyper, &config).unwrap();
        let mut bytes = serde_json::to_vec(&chain.samples).unwrap();
        bytes.extend(serde_json::to_vec(&chain.header.joint_trace).unwrap());
        chains.push(bytes);
    }
    let identical = chains[0] == chains[1];
    verdict(
        7,
        "annealing schedule",
        endpoints_ok && mid_ok && identical,
        &format!(
            "tau(0)=e {}, tau(500)=1 {}, tau=1 path bit-identical {}",
            endpoints_ok, mid_ok, identical
        ),
    );
}

// --- criterion 8: CLI determinism -------------------------------------------

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_tbm")
}

fn run_cli(args: &[&str]) {
    let out = Command::new(bin()).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "command {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap_or_else(|e| panic!("reading {name}: {e}"))
}

#[test]
fn criterion_8_cli_determinism() {
    let root = std::env::temp_dir().join(format!("tbm-accept8-{}", std::process::id()));
    let _ = fs::remove_dir_all(&root);
    let mut identical = true;
    let mut dirs: Vec<PathBuf> = Vec::new();
    for run in 0..2 {
        let dir = root.join(run.to_string());
        fs::create_dir_all(&dir).unwrap();
        let pth = |n: &str| dir.join(n).to_str().unwrap().to_string();
        fs::write(
            dir.join("raw.jsonl"),
            concat!(
                r#"{"id":"a","sender":"ann","recipient":"bo","text":"alpha beta beta gamma"}"#,
                "\n",
                r#"{"id":"b","sender":"bo","recipient":"ann","text":"gamma gamma delta"}"#,
                "\n"
            ),
        )
        .unwrap();
        run_cli(&["ingest", "--input", &pth("raw.jsonl"), "--out", &pth("tiny.corpus")]);
        run_cli(&[
            "generate", "--nodes", "10", "--vocab", "30", "--communities", "2", "--topics",
            "2", "--beta-lambda", "0.2", "--seed", "11", "--out", &pth("synth.corpus"),
        ]);
        run_cli(&[
            "fit", "--corpus", &pth("synth.corpus"), "--model", "tbm", "--topics", "2",
            "--communities", "2", "--iters", "40", "--burnin", "20", "--thin", "10",
            "--holdout", "0.15", "--holdout-pairs", "0.1", "--seed", "3", "--out",
            &pth("samples.jsonl"),
        ]);
        run_cli(&[
            "evaluate", "--corpus", &pth("synth.corpus"), "--samples", &pth("samples.jsonl"),
            "--task", "all", "--out", &pth("eval"),
        ]);
        run_cli(&[
            "report", "--corpus", &pth("synth.corpus"), "--samples", &pth("samples.jsonl"),
            "--out", &pth("rep"),
        ]);
        dirs.push(dir);
    }
    for name in [
        "tiny.corpus",
        "synth.corpus",
        "synth.truth.json",
        "samples.jsonl",
        "eval.text.json",
        "eval.text.csv",
        "eval.recipient.json",
        "eval.pair.json",
        "eval.counts.json",
        "rep.intensity.csv",
        "rep.topics.txt",
    ] {
        if read(&dirs[0], name) != read(&dirs[1], name) {
            identical = false;
            eprintln!("criterion 8: {name} differs between runs");
        }
    }
    let _ = fs::remove_dir_all(&root);
    verdict(
        8,
        "CLI byte-identical reruns",
        identical,
        "ingest/generate/fit/evaluate/report outputs compared across 2 runs",
    );
}

// --- criterion 9: cross-validation selects the true topic count -------------

#[test]
fn criterion_9_cross_validation_selects_true_t() {
    let mut selections = Vec::new();
    for run in 0..10u64 {
        // Sparse regime: few senders, large vocabulary, sharp topics. Extra
        // topics then cost real predictive mass instead of washing out.
        let corpus = directional_corpus(80_000 + run, 10, 4.0, 1.0, 100);
        let hyper = Hyperparams {
            k: 2,
            t: 1,
            xi0: 1.0,
            alpha_lambda: 1.0,
            beta_lambda: 1.0,
            kappa: 0.1,
        };
        let config = ChainConfig {
            iterations: 200,
            burnin: 150,
            thin: 10,
            seed: 500 + run,
            sample_hypers: Vec::new(), // fixed hypers keep candidates comparable
            ..ChainConfig::default()
        };
        let (selected, _table) = cross_validate_topics(
            &corpus,
            &[1, 3, 10],
            3,
            2,
            &hyper,
            &config,
            ModelKind::Tbm,
        )
        .unwrap();
        selections.push(selected);
    }
    let hits = selections.iter().filter(|&&t| t == 3).count();
    verdict(
        9,
        "cross-validation selects T=3 from {1,3,10}",
        hits >= CV_MIN_SELECTIONS,
        &format!("selected {selections:?}; {hits}/10 chose 3, need >= {CV_MIN_SELECTIONS}"),
    );
}
