//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subcap_core::analysis::{param_count, uniqueness_report, vocab_sweep};
use subcap_core::baseline::{
    bpe_merges_for_vocab_size, bpe_tokenize, train_bpe, train_word_vocab, word_oov_rate,
};
use subcap_core::lm::{
    beam_search, decoder_forward, displacement_matrix, encoder_forward, frame_tokens,
    from_model_ids, fused_attention, generate, geometric_weights, grad_check, greedy_decode,
    model_vocab_size, next_token_accuracy, synthetic_regions, to_model_ids, train_step, Adam,
    Example, ModelConfig, ModelParams, Region, RegionSet, SyntheticConfig, SyntheticScene,
    TrainConfig,
};
use subcap_core::unigram::{
    build_seed_vocab, char_pieces, detokenize, em_step, encode, train_unigram, viterbi_segment,
};
use subcap_core::{load_corpus, Caption, Corpus, SubwordVocab, TrainerConfig};

use common::{all_words, enumerate_best, oracle_viterbi, path_score, random_vocab, Engineered};

type Check = Result<String, String>;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

fn desk_corpus() -> Corpus {
    load_corpus(data("desk_corpus.tsv"), 16).expect("desk corpus")
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn table1_parameter_delta() -> Check {
    let cfg = ModelConfig::paper();
    let large = param_count(9486, &cfg).total;
    let small = param_count(1085, &cfg).total;
    let delta = large - small;
    let reported = 54.9e6 - 46.3e6;
    let rel = (delta as f64 - reported).abs() / reported;
    ensure(delta == 8_602_624, || format!("delta {delta} != 8602624"))?;
    ensure(rel < 0.01, || {
        format!("delta {delta} is {:.2}% off 8.6M", rel * 100.0)
    })?;
    Ok(format!("delta {delta}, {:.3}% from 8.6M", rel * 100.0))
}

fn viterbi_oracle() -> Check {
    let words = all_words(8);
    let mut rng = ChaCha8Rng::seed_from_u64(8128);
    let mut cases = 0usize;
    for trial in 0..20 {
        let vocab = random_vocab(&mut rng, trial % 5 == 4);
        for w in &words {
            let best = oracle_viterbi(w, &vocab);
            let seq = viterbi_segment(w, &vocab).map_err(|e| e.to_string())?;
            let diff = (seq.total_score - path_score(&best, &vocab)).abs();
            ensure(diff < 1e-9, || {
                format!("trial {trial} word {w}: score off by {diff}")
            })?;
            cases += 1;
        }
    }
    Ok(format!("{cases} cases matched"))
}

fn em_monotonicity(corpus: &Corpus) -> Check {
    ensure(corpus.len() >= 1000, || {
        format!("corpus has {} captions", corpus.len())
    })?;
    let mut vocab =
        build_seed_vocab(corpus, &TrainerConfig::new(1000)).map_err(|e| e.to_string())?;
    let mut lls = Vec::new();
    for _ in 0..15 {
        let (next, ll) = em_step(corpus, &vocab).map_err(|e| e.to_string())?;
        lls.push(ll);
        vocab = next;
    }
    for (i, w) in lls.windows(2).enumerate() {
        ensure(w[1] >= w[0] - 1e-6, || {
            format!("step {}: {} -> {}", i + 1, w[0], w[1])
        })?;
    }
    Ok(format!(
        "seed {} pieces, log-likelihood {:.3} -> {:.3}",
        vocab.len(),
        lls[0],
        lls[lls.len() - 1]
    ))
}

const SWEEP: [usize; 4] = [300, 500, 1000, 2000];

fn roundtrip(corpus: &Corpus) -> Check {
    let mut sizes = Vec::new();
    for k in SWEEP {
        let vocab = train_unigram(corpus, &TrainerConfig::new(k)).map_err(|e| e.to_string())?;
        let bpe = train_bpe(corpus, bpe_merges_for_vocab_size(corpus, k));
        for text in corpus.texts() {
            let seq = encode(text, &vocab).map_err(|e| format!("unigram k={k}: {e}"))?;
            let back = detokenize(&seq.pieces).map_err(|e| e.to_string())?;
            ensure(back == text, || {
                format!("unigram k={k}: {text:?} -> {back:?}")
            })?;
            let back = detokenize(&bpe_tokenize(text, &bpe)).map_err(|e| e.to_string())?;
            ensure(back == text, || format!("bpe k={k}: {text:?} -> {back:?}"))?;
        }
        sizes.push(format!("{k}:{}/{}", vocab.len(), bpe.vocab().len()));
    }
    Ok(format!(
        "{} captions x 4 sizes lossless (unigram/bpe sizes {})",
        corpus.len(),
        sizes.join(" ")
    ))
}

fn zero_oov(corpus: &Corpus) -> Check {
    let vocab = train_unigram(corpus, &TrainerConfig::new(500)).map_err(|e| e.to_string())?;
    for &ch in corpus.char_inventory() {
        for piece in char_pieces(ch) {
            ensure(vocab.id(&piece).is_some(), || {
                format!("piece {piece:?} missing")
            })?;
        }
    }
    for text in corpus.texts() {
        encode(text, &vocab).map_err(|e| format!("{text:?}: {e}"))?;
    }
    let heldout = load_corpus(data("desk_heldout.tsv"), 16).map_err(|e| e.to_string())?;
    for text in heldout.texts() {
        encode(text, &vocab).map_err(|e| format!("held-out {text:?}: {e}"))?;
    }
    let words = train_word_vocab(corpus, 5);
    let oov = word_oov_rate(heldout.texts(), &words);
    ensure(oov > 0.0, || "word baseline had no held-out OOV".into())?;
    let crochets = !words.contains("crochets");
    Ok(format!(
        "unigram OOV 0 on corpus and held-out; word baseline (min_freq 5, {} words) held-out OOV {:.1}%{}",
        words.len(),
        oov * 100.0,
        if crochets { ", \"crochets\" unknown" } else { "" }
    ))
}

fn compactness(corpus: &Corpus) -> Check {
    let report =
        vocab_sweep(corpus, &SWEEP, &TrainerConfig::new(SWEEP[0])).map_err(|e| e.to_string())?;
    let means: Vec<f64> = report
        .rows
        .iter()
        .map(|r| r.mean_tokens_per_caption)
        .collect();
    for w in means.windows(2) {
        ensure(w[1] <= w[0], || format!("mean tokens rose: {means:?}"))?;
    }
    Ok(format!(
        "mean tokens/caption {}",
        means
            .iter()
            .map(|m| format!("{m:.3}"))
            .collect::<Vec<_>>()
            .join(" -> ")
    ))
}

fn softmax_rows(a: &Array2<f64>) -> Array2<f64> {
    let mut out = a.clone();
    for mut row in out.outer_iter_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    out
}

fn random_regions(n: usize, d_in: usize, rng: &mut ChaCha8Rng) -> RegionSet {
    RegionSet::new(
        (0..n)
            .map(|_| {
                Region::new(
                    rng.gen_range(0.0..1.0),
                    rng.gen_range(0.0..1.0),
                    rng.gen_range(0.02..0.8),
                    rng.gen_range(0.02..0.8),
                    (0..d_in).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                )
                .unwrap()
            })
            .collect(),
    )
    .unwrap()
}

fn attention_invariants() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut constant_cases, mut fallback_rows) = (0, 0);
    for instance in 0..1000 {
        let n = rng.gen_range(1..9);
        let dim = 2 * rng.gen_range(1..5);
        let regions = random_regions(n, 1, &mut rng);
        let w_g = Array2::from_shape_fn((4 * dim, 1), |_| rng.gen_range(-1.0..1.0));
        let g = geometric_weights(&displacement_matrix(&regions), &w_g, dim);
        ensure(g.iter().all(|&v| v >= 0.0), || {
            format!("instance {instance}: negative geometric weight")
        })?;
        let omega_a = Array2::from_shape_fn((n, n), |_| rng.gen_range(-15.0..15.0));
        let omega_g = if instance % 4 == 0 {
            constant_cases += 1;
            Array2::from_elem((n, n), rng.gen_range(0.01..10.0))
        } else {
            g.index_axis(ndarray::Axis(0), 0).to_owned()
        };
        fallback_rows += omega_g
            .outer_iter()
            .filter(|r| r.iter().all(|&v| v == 0.0))
            .count();
        let w = fused_attention(&omega_a, &omega_g);
        for (i, row) in w.outer_iter().enumerate() {
            let s = row.sum();
            ensure((s - 1.0).abs() < 1e-6, || {
                format!("instance {instance} row {i} sums to {s}")
            })?;
        }
        if instance % 4 == 0 {
            let plain = softmax_rows(&omega_a);
            let diff = w
                .iter()
                .zip(plain.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            ensure(diff < 1e-9, || {
                format!("instance {instance}: constant geometry differs by {diff}")
            })?;
        }
    }
    Ok(format!(
        "1000 instances, {constant_cases} constant-geometry, {fallback_rows} all-zero geometry rows"
    ))
}

fn scenes_corpus(scenes: &[SyntheticScene]) -> Corpus {
    Corpus::from_captions(
        scenes
            .iter()
            .map(|s| Caption {
                image_id: s.image_id.clone(),
                text: s.caption.clone(),
            })
            .collect(),
    )
}

fn examples(scenes: &[SyntheticScene], vocab: &SubwordVocab, pad_to: usize) -> Vec<Example> {
    scenes
        .iter()
        .map(|s| Example {
            regions: s.regions.clone(),
            tokens: frame_tokens(
                &to_model_ids(&encode(&s.caption, vocab).unwrap().ids),
                pad_to,
            ),
        })
        .collect()
}

fn gradient_check() -> Check {
    let scenes = synthetic_regions(3, 4, &SyntheticConfig::default()).map_err(|e| e.to_string())?;
    let vocab = train_unigram(&scenes_corpus(&scenes), &TrainerConfig::new(60))
        .map_err(|e| e.to_string())?;
    let cfg = ModelConfig::desk(model_vocab_size(vocab.len()));
    let batch = examples(&scenes, &vocab, 24);
    let params = ModelParams::init(&cfg, 3).map_err(|e| e.to_string())?;
    let err = grad_check(&params, &batch, 50, 2021).map_err(|e| e.to_string())?;
    ensure(err < 1e-4, || format!("max relative error {err:e}"))?;
    Ok(format!(
        "max relative error {err:.2e} over 50 coordinates ({} parameters)",
        params.num_params()
    ))
}

fn jittered_desk(vocab: usize, seed: u64) -> ModelParams {
    let mut p = ModelParams::init(&ModelConfig::desk(vocab), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for t in p.tensors_mut() {
        t.mapv_inplace(|v| v + rng.gen_range(-0.1..0.1));
    }
    p
}

fn equivariance_and_causality() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    for instance in 0..100u64 {
        let params = jittered_desk(40, instance);
        let cfg = params.config().clone();
        let n = rng.gen_range(2..10);
        let regions = random_regions(n, cfg.d_in, &mut rng);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let base = encoder_forward(&regions, &params).map_err(|e| e.to_string())?;
        let perm =
            encoder_forward(&regions.permuted(&order), &params).map_err(|e| e.to_string())?;
        for (i, &src) in order.iter().enumerate() {
            for j in 0..cfg.d_model {
                worst = worst.max((perm.q[[i, j]] - base.q[[src, j]]).abs());
            }
        }
        ensure(worst < 1e-6, || {
            format!("instance {instance}: equivariance error {worst}")
        })?;

        let len = rng.gen_range(2..=cfg.max_seq_len);
        let prefix: Vec<usize> = (0..len).map(|_| rng.gen_range(0..cfg.vocab_size)).collect();
        let t = rng.gen_range(0..len - 1);
        let mut altered = prefix.clone();
        for tok in altered.iter_mut().skip(t + 1) {
            *tok = rng.gen_range(0..cfg.vocab_size);
        }
        let a = decoder_forward(&base, &prefix, &params).map_err(|e| e.to_string())?;
        let b = decoder_forward(&base, &altered, &params).map_err(|e| e.to_string())?;
        for pos in 0..=t {
            for v in 0..cfg.vocab_size {
                ensure(a[[pos, v]].to_bits() == b[[pos, v]].to_bits(), || {
                    format!("instance {instance}: position {pos} changed")
                })?;
            }
        }
    }
    Ok(format!(
        "100 instances, max equivariance error {worst:.1e}, causality bitwise"
    ))
}

fn memorization() -> Check {
    let scenes =
        synthetic_regions(7, 10, &SyntheticConfig::default()).map_err(|e| e.to_string())?;
    let vocab = train_unigram(&scenes_corpus(&scenes), &TrainerConfig::new(80))
        .map_err(|e| e.to_string())?;
    let cfg = ModelConfig::desk(model_vocab_size(vocab.len()));
    let batch = examples(&scenes, &vocab, 0);
    let mut params = ModelParams::init(&cfg, 1).map_err(|e| e.to_string())?;
    let tc = TrainConfig::default();
    let mut adam = Adam::new(&params);
    let mut accuracy = 0.0;
    let mut steps = 0;
    while steps < 2000 {
        train_step(&batch, &mut params, &tc, &mut adam).map_err(|e| e.to_string())?;
        steps += 1;
        if steps % 10 == 0 {
            accuracy = next_token_accuracy(&batch, &params).map_err(|e| e.to_string())?;
            if accuracy >= 0.99 {
                break;
            }
        }
    }
    ensure(accuracy >= 0.99, || {
        format!("accuracy {accuracy:.4} after {steps} steps")
    })?;
    let mut reproduced = 0;
    for s in &scenes {
        let h =
            generate(&s.regions, &params, Some(1), cfg.max_seq_len).map_err(|e| e.to_string())?;
        let ids = from_model_ids(&h.tokens).map_err(|e| e.to_string())?;
        let pieces: Vec<&str> = ids.iter().map(|&i| vocab.piece(i)).collect();
        let text = detokenize(&pieces).map_err(|e| e.to_string())?;
        reproduced += usize::from(text == s.caption);
    }
    let rate = reproduced as f64 / scenes.len() as f64;
    ensure(rate >= 0.99, || {
        format!("reproduced {reproduced}/{}", scenes.len())
    })?;
    Ok(format!(
        "accuracy {:.1}% after {steps} steps, beam-1 reproduced {reproduced}/{}",
        accuracy * 100.0,
        scenes.len()
    ))
}

fn beam_checks() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    for model in 0..100u64 {
        let params = jittered_desk(12, 1000 + model);
        let regions = random_regions(rng.gen_range(1..6), params.config().d_in, &mut rng);
        let greedy = generate(&regions, &params, None, 12).map_err(|e| e.to_string())?;
        let beam = generate(&regions, &params, Some(1), 12).map_err(|e| e.to_string())?;
        ensure(greedy == beam, || {
            format!(
                "model {model}: beam-1 {:?} vs greedy {:?}",
                beam.tokens, greedy.tokens
            )
        })?;
    }
    let optimum = enumerate_best(4);
    let greedy = greedy_decode(&mut Engineered, 4).map_err(|e| e.to_string())?;
    let beam = beam_search(&mut Engineered, 2, 4).map_err(|e| e.to_string())?;
    ensure(beam.tokens == optimum.tokens, || {
        format!("beam {:?} vs optimum {:?}", beam.tokens, optimum.tokens)
    })?;
    ensure(greedy.tokens != optimum.tokens, || {
        "greedy already optimal".into()
    })?;
    Ok(format!(
        "100 models beam-1 = greedy; engineered case beam-2 {:?} ({:.3}) beats greedy {:?} ({:.3})",
        beam.tokens,
        beam.normalized_score(),
        greedy.tokens,
        greedy.normalized_score()
    ))
}

/// Every artifact the pipeline writes, as bytes.
fn artifacts(corpus: &Corpus) -> Result<Vec<(&'static str, Vec<u8>)>, String> {
    let mut out = Vec::new();
    let vocab = train_unigram(corpus, &TrainerConfig::new(500)).map_err(|e| e.to_string())?;
    out.push(("unigram vocab", vocab.to_tsv().into_bytes()));
    let mut bpe = Vec::new();
    train_bpe(corpus, 400)
        .write_to(&mut bpe)
        .map_err(|e| e.to_string())?;
    out.push(("bpe merges", bpe));
    let mut words = Vec::new();
    train_word_vocab(corpus, 5)
        .write_to(&mut words)
        .map_err(|e| e.to_string())?;
    out.push(("word vocab", words));
    let sweep =
        vocab_sweep(corpus, &[300, 500], &TrainerConfig::new(300)).map_err(|e| e.to_string())?;
    out.push(("sweep report", sweep.to_json().into_bytes()));

    let scenes =
        synthetic_regions(11, 6, &SyntheticConfig::default()).map_err(|e| e.to_string())?;
    let syn_vocab = train_unigram(&scenes_corpus(&scenes), &TrainerConfig::new(70))
        .map_err(|e| e.to_string())?;
    let cfg = ModelConfig::desk(model_vocab_size(syn_vocab.len()));
    let batch = examples(&scenes, &syn_vocab, 0);
    let mut params = ModelParams::init(&cfg, 5).map_err(|e| e.to_string())?;
    let mut adam = Adam::new(&params);
    for _ in 0..20 {
        train_step(&batch, &mut params, &TrainConfig::default(), &mut adam)
            .map_err(|e| e.to_string())?;
    }
    out.push(("checkpoint", params.to_checkpoint_bytes()));
    let generated: Vec<String> = scenes
        .iter()
        .map(|s| {
            let h = generate(&s.regions, &params, Some(2), 20).unwrap();
            let ids = from_model_ids(&h.tokens).unwrap_or_default();
            ids.iter()
                .map(|&i| syn_vocab.piece(i))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    out.push((
        "uniqueness report",
        uniqueness_report(&generated, corpus).to_json().into_bytes(),
    ));
    Ok(out)
}

fn determinism(corpus: &Corpus) -> Check {
    let first = artifacts(corpus)?;
    let second = artifacts(corpus)?;
    for ((name, a), (_, b)) in first.iter().zip(&second) {
        ensure(a == b, || format!("{name} differs between runs"))?;
    }
    Ok(format!(
        "{} artifacts byte-identical ({})",
        first.len(),
        first
            .iter()
            .map(|(n, b)| format!("{n} {}B", b.len()))
            .collect::<Vec<_>>()
            .join(", ")
    ))
}

struct Criterion {
    id: usize,
    name: &'static str,
    budget: Option<Duration>,
    run: Box<dyn FnOnce() -> Check>,
}

fn main() {
    let corpus = desk_corpus();
    let c3 = corpus.clone();
    let c4 = corpus.clone();
    let c5 = corpus.clone();
    let c6 = corpus.clone();
    let c12 = corpus;
    let secs = |s| Some(Duration::from_secs(s));
    let criteria = vec![
        Criterion {
            id: 1,
            name: "parameter-count delta at d_model 512",
            budget: secs(1),
            run: Box::new(table1_parameter_delta),
        },
        Criterion {
            id: 2,
            name: "Viterbi matches exhaustive enumeration",
            budget: secs(60),
            run: Box::new(viterbi_oracle),
        },
        Criterion {
            id: 3,
            name: "EM log-likelihood non-decreasing",
            budget: secs(300),
            run: Box::new(move || em_monotonicity(&c3)),
        },
        Criterion {
            id: 4,
            name: "lossless roundtrip, unigram and BPE",
            budget: None,
            run: Box::new(move || roundtrip(&c4)),
        },
        Criterion {
            id: 5,
            name: "character completeness and zero OOV",
            budget: None,
            run: Box::new(move || zero_oov(&c5)),
        },
        Criterion {
            id: 6,
            name: "tokens per caption non-increasing in k",
            budget: None,
            run: Box::new(move || compactness(&c6)),
        },
        Criterion {
            id: 7,
            name: "attention invariants",
            budget: None,
            run: Box::new(attention_invariants),
        },
        Criterion {
            id: 8,
            name: "gradient check",
            budget: secs(120),
            run: Box::new(gradient_check),
        },
        Criterion {
            id: 9,
            name: "permutation equivariance and causality",
            budget: None,
            run: Box::new(equivariance_and_causality),
        },
        Criterion {
            id: 10,
            name: "memorization of 10 synthetic captions",
            budget: secs(600),
            run: Box::new(memorization),
        },
        Criterion {
            id: 11,
            name: "beam search consistency",
            budget: None,
            run: Box::new(beam_checks),
        },
        Criterion {
            id: 12,
            name: "byte-identical artifacts across runs",
            budget: None,
            run: Box::new(move || determinism(&c12)),
        },
    ];
    let total = criteria.len();
    let mut failed = 0;
    for c in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.budget) {
            (Ok(_), Some(b)) if elapsed > b => Err(format!("took {elapsed:.2?}, budget {b:?}")),
            (o, _) => o,
        };
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} [{:02}] {}: {detail} ({elapsed:.2?})", c.id, c.name);
    }
    println!("acceptance: {}/{total} criteria passed", total - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
