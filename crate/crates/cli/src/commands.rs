use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use log::{debug, info, warn};
use subcap_core::analysis::{param_count, param_table, uniqueness_report, vocab_sweep};
use subcap_core::baseline::{bpe_merges_for_vocab_size, train_bpe, train_word_vocab};
use subcap_core::corpus::{normalize, truncate_words, DEFAULT_MAX_WORDS};
use subcap_core::lm::{
    frame_tokens, from_model_ids, generate, model_vocab_size, next_token_accuracy, read_sidecar,
    synthetic_regions, to_model_ids, train_step, write_dataset, Adam, Example, SyntheticConfig,
    SyntheticScene, TrainConfig,
};
use subcap_core::unigram::{detokenize, encode, train_unigram};
use subcap_core::{load_corpus, ModelConfig, ModelParams, SubwordVocab, TrainerConfig};

use crate::args::*;
use crate::error::{CliError, CliResult};
use crate::manifest::RunRecorder;
use crate::settings::Settings;
use crate::tokenizer::Tokenizer;

pub fn run(command: Command, settings: Settings) -> CliResult<()> {
    match command {
        Command::TrainTokenizer(a) => train_tokenizer(a, settings),
        Command::Encode(a) => codec(a, settings, true),
        Command::Decode(a) => codec(a, settings, false),
        Command::Sweep(a) => sweep(a, settings),
        Command::Report(a) => report(a, settings),
        Command::Params(a) => params(a, settings),
        Command::Synth(a) => synth(a, settings),
        Command::TrainLm(a) => train_lm(a, settings),
        Command::Generate(a) => generate_captions(a, settings),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn read_input(path: Option<&Path>) -> CliResult<String> {
    let mut text = String::new();
    match path {
        Some(p) => text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?,
        None => {
            std::io::stdin()
                .read_to_string(&mut text)
                .map_err(|e| CliError::new("io", format!("stdin: {e}")))?;
        }
    }
    Ok(text)
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => write_file(p, text.as_bytes()),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::new("io", format!("stdout: {e}")))
        }
    }
}

/// 8602624 -> "8,602,624".
fn group_digits(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn train_tokenizer(a: TrainTokenizerArgs, mut s: Settings) -> CliResult<()> {
    let mut rec = RunRecorder::start("train-tokenizer");
    let corpus_path: PathBuf = s.required("corpus", a.corpus)?;
    let out: PathBuf = s.required("out", a.out)?;
    let algo = s.value("algo", a.algo, Algo::Unigram)?;
    let max_words = s.value("max_words", a.max_words, DEFAULT_MAX_WORDS)?;
    let seed = s.value("seed", a.seed, 0u64)?;
    let corpus = load_corpus(&corpus_path, max_words)?;
    info!(
        "loaded {} captions from {}",
        corpus.len(),
        corpus_path.display()
    );

    let mut bytes = Vec::new();
    match algo {
        Algo::Unigram => {
            let k = s.value("vocab_size", a.vocab_size, 1000usize)?;
            let vocab = train_unigram(&corpus, &TrainerConfig::new(k))?;
            info!("unigram vocabulary: {} pieces (requested {k})", vocab.len());
            rec.result("vocab_size", vocab.len());
            vocab
                .write_to(&mut bytes)
                .map_err(|e| CliError::io(&out, e))?;
        }
        Algo::Bpe => {
            let merges = match s.optional("merges", a.merges)? {
                Some(m) => m,
                None => {
                    let k = s.value("vocab_size", a.vocab_size, 1000usize)?;
                    bpe_merges_for_vocab_size(&corpus, k)
                }
            };
            let model = train_bpe(&corpus, merges);
            info!(
                "bpe: {} merges learned (budget {merges})",
                model.merges().len()
            );
            rec.result("merges", model.merges().len());
            rec.result(
                "vocab_size",
                corpus.char_inventory().len() + model.merges().len(),
            );
            model
                .write_to(&mut bytes)
                .map_err(|e| CliError::io(&out, e))?;
        }
        Algo::Word => {
            let min_freq = s.value("min_freq", a.min_freq, 5u64)?;
            let vocab = train_word_vocab(&corpus, min_freq);
            info!(
                "word vocabulary: {} entries at min_freq {min_freq}",
                vocab.len()
            );
            rec.result("vocab_size", vocab.len());
            vocab
                .write_to(&mut bytes)
                .map_err(|e| CliError::io(&out, e))?;
        }
    }
    write_file(&out, &bytes)?;
    rec.seed = Some(seed);
    rec.inputs.push(corpus_path);
    rec.outputs.push(out.clone());
    rec.finish(s, &out)?;
    Ok(())
}

fn codec(a: CodecArgs, mut s: Settings, encoding: bool) -> CliResult<()> {
    let mut rec = RunRecorder::start(if encoding { "encode" } else { "decode" });
    let vocab_path: PathBuf = s.required("vocab", a.vocab)?;
    let input: Option<PathBuf> = s.optional("input", a.input)?;
    let out: Option<PathBuf> = s.optional("out", a.out)?;
    let tokenizer = Tokenizer::load(&vocab_path)?;
    let text = read_input(input.as_deref())?;
    let mut result = String::with_capacity(text.len() * 2);
    for (idx, line) in text.lines().enumerate() {
        let converted = if encoding {
            tokenizer.encode_line(&normalize(line)).map(|p| p.join(" "))
        } else {
            let pieces: Vec<&str> = line.split(' ').filter(|p| !p.is_empty()).collect();
            tokenizer.decode_line(&pieces)
        };
        let converted = converted
            .map_err(|e| CliError::new(e.kind, format!("line {}: {}", idx + 1, e.message)))?;
        result.push_str(&converted);
        result.push('\n');
    }
    emit(out.as_deref(), &result)?;
    if let Some(out) = out {
        rec.inputs.push(vocab_path);
        rec.inputs.extend(input);
        rec.outputs.push(out.clone());
        rec.result("lines", text.lines().count());
        rec.finish(s, &out)?;
    }
    Ok(())
}

fn sweep(a: SweepArgs, mut s: Settings) -> CliResult<()> {
    let mut rec = RunRecorder::start("sweep");
    let corpus_path: PathBuf = s.required("corpus", a.corpus)?;
    let ks = s.list("vocab_sizes", a.vocab_sizes, vec![300, 500, 1000, 2000])?;
    let max_words = s.value("max_words", a.max_words, DEFAULT_MAX_WORDS)?;
    let out: Option<PathBuf> = s.optional("out", a.out)?;
    let corpus = load_corpus(&corpus_path, max_words)?;
    let smallest = ks.iter().copied().min().unwrap_or(0);
    let report = vocab_sweep(&corpus, &ks, &TrainerConfig::new(smallest))?;
    emit(None, &report.to_text())?;
    if let Some(out) = out {
        write_file(&out, (report.to_json() + "\n").as_bytes())?;
        let table = out.with_extension("txt");
        write_file(&table, report.to_text().as_bytes())?;
        rec.inputs.push(corpus_path);
        rec.outputs.extend([out.clone(), table]);
        rec.finish(s, &out)?;
    }
    Ok(())
}

fn report(a: ReportArgs, mut s: Settings) -> CliResult<()> {
    let mut rec = RunRecorder::start("report");
    let generated_path: PathBuf = s.required("generated", a.generated)?;
    let corpus_path: PathBuf = s.required("corpus", a.corpus)?;
    let max_words = s.value("max_words", a.max_words, DEFAULT_MAX_WORDS)?;
    let out: Option<PathBuf> = s.optional("out", a.out)?;
    let corpus = load_corpus(&corpus_path, max_words)?;
    let text = read_input(Some(&generated_path))?;
    let generated: Vec<String> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| {
            truncate_words(
                &normalize(l.split_once('\t').map_or(l, |(_, c)| c)),
                max_words,
            )
        })
        .filter(|l| !l.is_empty())
        .collect();
    let report = uniqueness_report(&generated, &corpus);
    emit(None, &report.to_text())?;
    if let Some(out) = out {
        write_file(&out, (report.to_json() + "\n").as_bytes())?;
        let table = out.with_extension("txt");
        write_file(&table, report.to_text().as_bytes())?;
        rec.inputs.extend([generated_path, corpus_path]);
        rec.outputs.extend([out.clone(), table]);
        rec.finish(s, &out)?;
    }
    Ok(())
}

fn params(a: ParamsArgs, mut s: Settings) -> CliResult<()> {
    let mut rec = RunRecorder::start("params");
    let vocabs = s.list("vocabs", a.vocabs, vec![9486, 1085])?;
    let mut cfg = ModelConfig::paper();
    cfg.d_model = s.value("d_model", a.d_model, cfg.d_model)?;
    let layers = s.value("layers", a.layers, cfg.n_enc_layers)?;
    cfg.n_enc_layers = layers;
    cfg.n_dec_layers = layers;
    cfg.n_heads = s.value("heads", a.heads, cfg.n_heads)?;
    cfg.d_ff = s.value("d_ff", a.d_ff, 4 * cfg.d_model)?;
    let out: Option<PathBuf> = s.optional("out", a.out)?;
    cfg.validate()?;
    let counts: Vec<_> = vocabs.iter().map(|&v| param_count(v, &cfg)).collect();
    let mut text = param_table(&counts);
    if let (Some(first), Some(last)) = (counts.first(), counts.last()) {
        if counts.len() > 1 {
            let delta = first.total.abs_diff(last.total) as u64;
            text.push_str(&format!(
                "delta {} ({} vs {})\n",
                group_digits(delta),
                first.vocab_size,
                last.vocab_size
            ));
            rec.result("delta", delta);
        }
    }
    emit(None, &text)?;
    if let Some(out) = out {
        let json = serde_json::to_string_pretty(&counts)
            .map_err(|e| CliError::new("io", e.to_string()))?;
        write_file(&out, (json + "\n").as_bytes())?;
        rec.outputs.push(out.clone());
        rec.finish(s, &out)?;
    }
    Ok(())
}

fn load_scenes(
    a: DatasetArgs,
    s: &mut Settings,
    rec: &mut RunRecorder,
) -> CliResult<Vec<SyntheticScene>> {
    let seed = s.value("seed", a.seed, 0u64)?;
    rec.seed = Some(seed);
    if let Some(path) = s.optional::<PathBuf>("dataset", a.dataset)? {
        let scenes = read_sidecar(&path)?;
        rec.inputs.push(path);
        return Ok(scenes);
    }
    let images = s.value("images", a.images, 10usize)?;
    let regions = s.value("regions", a.regions, 2usize)?;
    let cfg = SyntheticConfig {
        regions_per_image: regions,
        ..SyntheticConfig::default()
    };
    Ok(synthetic_regions(seed, images, &cfg)?)
}

fn synth(a: SynthArgs, mut s: Settings) -> CliResult<()> {
    let mut rec = RunRecorder::start("synth");
    let out: PathBuf = s.required("out", a.out)?;
    let scenes = load_scenes(a.dataset, &mut s, &mut rec)?;
    write_dataset(&scenes, &out)?;
    rec.outputs
        .extend([out.with_extension("tsv"), out.with_extension("json")]);
    rec.result("images", scenes.len());
    rec.finish(s, &out)?;
    Ok(())
}

fn load_unigram(path: &Path) -> CliResult<SubwordVocab> {
    Tokenizer::load(path)?.unigram(path)
}

fn train_lm(a: TrainLmArgs, mut s: Settings) -> CliResult<()> {
    let mut rec = RunRecorder::start("train-lm");
    let vocab_path: PathBuf = s.required("vocab", a.vocab)?;
    let out: PathBuf = s.required("out", a.out)?;
    let scenes = load_scenes(a.dataset, &mut s, &mut rec)?;
    let vocab = load_unigram(&vocab_path)?;
    let first = scenes
        .first()
        .ok_or_else(|| CliError::new("invalid-config", "dataset has no images"))?;

    let mut cfg = ModelConfig::desk(model_vocab_size(vocab.len()));
    cfg.d_model = s.value("d_model", a.d_model, cfg.d_model)?;
    cfg.d_ff = 2 * cfg.d_model;
    let layers = s.value("layers", a.layers, cfg.n_enc_layers)?;
    cfg.n_enc_layers = layers;
    cfg.n_dec_layers = layers;
    cfg.n_heads = s.value("heads", a.heads, cfg.n_heads)?;
    cfg.max_seq_len = s.value("max_len", a.max_len, cfg.max_seq_len)?;
    cfg.d_in = first.regions.appearance_dim();
    cfg.validate()?;
    let steps = s.value("steps", a.steps, 2000usize)?;
    let defaults = TrainConfig::default();
    let train_cfg = TrainConfig {
        learning_rate: s.value("lr", a.lr, defaults.learning_rate)?,
        ..defaults
    };
    let init_seed = s.value("init_seed", a.init_seed, rec.seed.unwrap_or(0))?;
    let target: Option<f64> = s.optional("target_accuracy", a.target_accuracy)?;
    let checkpoint_every = s.value("checkpoint_every", a.checkpoint_every, 0usize)?;

    let batch = scenes
        .iter()
        .map(|scene| {
            let ids = encode(&normalize(&scene.caption), &vocab)?.ids;
            Ok(Example {
                regions: scene.regions.clone(),
                tokens: frame_tokens(&to_model_ids(&ids), 0),
            })
        })
        .collect::<Result<Vec<_>, subcap_core::Error>>()?;
    let mut params = ModelParams::init(&cfg, init_seed)?;
    info!(
        "model: {} parameters, {} images, vocabulary {}",
        params.num_params(),
        batch.len(),
        cfg.vocab_size
    );
    let mut adam = Adam::new(&params);
    let (mut first_loss, mut last_loss) = (None, f64::NAN);
    let mut accuracy = None;
    let mut done = 0;
    for step in 0..steps {
        let loss = train_step(&batch, &mut params, &train_cfg, &mut adam)?;
        first_loss.get_or_insert(loss);
        last_loss = loss;
        done = step + 1;
        debug!("step {step} loss {loss:.6}");
        if step % 100 == 0 {
            info!("step {step} loss {loss:.6}");
        }
        if checkpoint_every > 0 && done % checkpoint_every == 0 {
            let path = PathBuf::from(format!("{}.step{done}", out.display()));
            write_file(&path, &params.to_checkpoint_bytes())?;
            rec.outputs.push(path);
        }
        if let Some(t) = target {
            if done % 10 == 0 {
                let acc = next_token_accuracy(&batch, &params)?;
                accuracy = Some(acc);
                if acc >= t {
                    info!("step {step}: accuracy {acc:.4} reached target {t}");
                    break;
                }
            }
        }
    }
    let accuracy = match accuracy {
        Some(a) => a,
        None => next_token_accuracy(&batch, &params)?,
    };
    info!("finished after {done} steps: loss {last_loss:.6}, accuracy {accuracy:.4}");
    write_file(&out, &params.to_checkpoint_bytes())?;
    rec.inputs.push(vocab_path);
    rec.outputs.push(out.clone());
    rec.result("steps", done);
    rec.result("initial_loss", first_loss);
    rec.result("final_loss", last_loss);
    rec.result("ln_vocab_size", (cfg.vocab_size as f64).ln());
    rec.result("accuracy", accuracy);
    rec.result("parameters", params.num_params());
    rec.finish(s, &out)?;
    Ok(())
}

fn generate_captions(a: GenerateArgs, mut s: Settings) -> CliResult<()> {
    let mut rec = RunRecorder::start("generate");
    let checkpoint: PathBuf = s.required("checkpoint", a.checkpoint)?;
    let vocab_path: PathBuf = s.required("vocab", a.vocab)?;
    let out: Option<PathBuf> = s.optional("out", a.out)?;
    let scenes = load_scenes(a.dataset, &mut s, &mut rec)?;
    let vocab = load_unigram(&vocab_path)?;
    let file = std::fs::File::open(&checkpoint).map_err(|e| CliError::io(&checkpoint, e))?;
    let params = ModelParams::read_checkpoint(std::io::BufReader::new(file))?;
    let cfg = params.config().clone();
    if cfg.vocab_size != model_vocab_size(vocab.len()) {
        return Err(CliError::new(
            "checkpoint",
            format!(
                "checkpoint expects {} token ids but {} gives {}",
                cfg.vocab_size,
                vocab_path.display(),
                model_vocab_size(vocab.len())
            ),
        ));
    }
    if let Some(scene) = scenes
        .iter()
        .find(|sc| sc.regions.appearance_dim() != cfg.d_in)
    {
        return Err(CliError::new(
            "checkpoint",
            format!(
                "image {} has {} appearance features, checkpoint expects {}",
                scene.image_id,
                scene.regions.appearance_dim(),
                cfg.d_in
            ),
        ));
    }
    let greedy = s.value("greedy", a.greedy.then_some(true), false)?;
    let beam = if greedy {
        None
    } else {
        let b = s.value("beam", a.beam, 2usize)?;
        if b == 0 {
            return Err(CliError::usage("--beam must be at least 1"));
        }
        Some(b)
    };
    let max_len = s.value("max_len", a.max_len, cfg.max_seq_len.saturating_sub(1))?;

    let mut text = String::new();
    let mut orphans = 0usize;
    for scene in &scenes {
        let hyp = generate(&scene.regions, &params, beam, max_len)?;
        let ids = from_model_ids(&hyp.tokens)?;
        let pieces: Vec<&str> = ids.iter().map(|&i| vocab.piece(i)).collect();
        let caption = match detokenize(&pieces) {
            Ok(c) => c,
            Err(e) => {
                warn!("{}: {e}; emitting raw pieces", scene.image_id);
                orphans += 1;
                pieces.join(" ")
            }
        };
        text.push_str(&format!("{}\t{caption}\n", scene.image_id));
    }
    emit(out.as_deref(), &text)?;
    if let Some(out) = out {
        rec.inputs.extend([checkpoint, vocab_path]);
        rec.outputs.push(out.clone());
        rec.result("images", scenes.len());
        rec.result("detokenize_failures", orphans);
        rec.finish(s, &out)?;
    }
    Ok(())
}
