//! Command-line driver. Every failure is reported as `[stage] message` and
//! exits with status 1.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mpnmt::corpus::{align_corpora, load_corpus, split_corpus, AlignedCorpus, ParaphraseId};
use mpnmt::experiment::{
    emit_tables, generate_synthetic, run_experiment, write_corpora, RunManifest, Stage, SynthSpec,
};
use mpnmt::metrics::{bucket_fmeasure, bucket_label, corpus_bleu, entropy_report};
use mpnmt::pathgen::{enumerate_paths, is_tag, PathPolicy};
use mpnmt::seq2seq::{
    decode_greedy, init_params, load_checkpoint, save_checkpoint, train_with_progress, Checkpoint,
    EncodedPair, ModelConfig,
};
use mpnmt::subword::{
    bpe_decode, bpe_decode_lossy, build_vocab_from_streams, learn_bpe, MergeTable, Vocabulary,
    SPECIALS,
};

#[derive(Parser)]
#[command(name = "mpnmt", version, about = "Multi-paraphrase NMT experiment toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic paraphrase corpora as <dir>/<id>.txt.
    Synth(SynthArgs),
    /// Keep only verses present in every corpus; report the rest.
    Align(AlignArgs),
    /// Align, then split verse keys 0.75/0.15/0.10.
    Split(SplitArgs),
    /// List translation paths among paraphrase ids with their tags.
    Paths(PathsArgs),
    /// Learn BPE merges from whitespace-tokenized text files.
    BpeLearn(BpeLearnArgs),
    /// Segment (or with --decode, join) text with a merge file.
    BpeApply(BpeApplyArgs),
    /// Train a model on tagged, segmented parallel text.
    Train(TrainArgs),
    /// Greedy-decode tagged, segmented source lines.
    Decode(DecodeArgs),
    /// Score hypotheses against references.
    Eval(EvalArgs),
    /// Run a whole experiment grid from a config file.
    Run(RunArgs),
    /// Summarize run manifests into grid and curve tables.
    Tables(TablesArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 400)]
    vocab_size: usize,
    #[arg(long, default_value_t = 800)]
    sentences: usize,
    #[arg(long, default_value_t = 4)]
    paraphrases: usize,
    #[arg(long, default_value_t = 0.3)]
    rate: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    min_len: usize,
    #[arg(long, default_value_t = 9)]
    max_len: usize,
    #[arg(long, default_value = "f")]
    source_lang: String,
    #[arg(long, default_value = "e")]
    target_lang: String,
}

#[derive(Args)]
struct AlignArgs {
    /// Corpus files named `<id>.txt`, e.g. `f0.txt`.
    #[arg(required = true)]
    corpora: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(required = true)]
    corpora: Vec<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PathsArgs {
    #[arg(required = true)]
    members: Vec<String>,
    #[arg(long, default_value = "all_pairs")]
    policy: String,
}

#[derive(Args)]
struct BpeLearnArgs {
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    merges: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BpeApplyArgs {
    #[arg(long)]
    codes: Option<PathBuf>,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Join `@@` pieces back into words instead of segmenting.
    #[arg(long)]
    decode: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    src: PathBuf,
    #[arg(long)]
    tgt: PathBuf,
    #[arg(long)]
    val_src: PathBuf,
    #[arg(long)]
    val_tgt: PathBuf,
    /// TOML file with model fields; omitted fields take the full-scale defaults.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 50_000)]
    vocab_cap: usize,
    /// Receives checkpoint.txt, vocab.txt and history.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    max_len: Option<usize>,
    /// Keep `@@` subword pieces in the output.
    #[arg(long)]
    keep_bpe: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    hyp: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Training target text for frequency buckets.
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    bootstrap: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct TablesArgs {
    /// Manifest files or directories searched recursively for manifest.json.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn staged<T, E: std::fmt::Display>(stage: Stage, r: std::result::Result<T, E>) -> Result<T> {
    r.map_err(|e| anyhow!("[{stage}] {e}"))
}

fn read(stage: Stage, path: &Path) -> Result<String> {
    staged(stage, fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        staged(Stage::Write, fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display())))?;
    }
    staged(Stage::Write, fs::write(path, contents).map_err(|e| format!("{}: {e}", path.display())))
}

fn token_lines(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(|l| l.split_whitespace().map(str::to_string).collect())
        .collect()
}

fn render_lines(lines: &[Vec<String>]) -> String {
    lines.iter().map(|l| l.join(" ") + "\n").collect()
}

fn reserved() -> BTreeSet<String> {
    SPECIALS.iter().map(|s| s.to_string()).collect()
}

fn load_aligned(files: &[PathBuf]) -> Result<AlignedCorpus> {
    let mut corpora = Vec::new();
    for f in files {
        let stem = f
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| anyhow!("[load] {}: no file name", f.display()))?;
        let id: ParaphraseId = staged(Stage::Load, stem.parse())?;
        corpora.push(staged(Stage::Load, load_corpus(f, id))?);
    }
    staged(Stage::Align, align_corpora(corpora))
}

fn synth(a: SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        vocab_size: a.vocab_size,
        sentences: a.sentences,
        paraphrases_per_side: a.paraphrases,
        substitution_rate: a.rate,
        seed: a.seed,
        min_len: a.min_len,
        max_len: a.max_len,
        source_lang: a.source_lang,
        target_lang: a.target_lang,
    };
    let corpora = staged(Stage::Config, generate_synthetic(&spec))?;
    let paths = staged(Stage::Write, write_corpora(&a.out, &corpora))?;
    for p in paths {
        println!("{}", p.display());
    }
    Ok(())
}

fn align(a: AlignArgs) -> Result<()> {
    let aligned = load_aligned(&a.corpora)?;
    for c in &aligned.corpora {
        write(&a.out.join(format!("{}.txt", c.id)), &c.to_file_string())?;
    }
    let report = aligned.drop_report();
    write(&a.out.join("dropped.tsv"), &report)?;
    println!("{} aligned verses, {} dropped", aligned.keys.len(), aligned.dropped.len());
    Ok(())
}

fn split(a: SplitArgs) -> Result<()> {
    let aligned = load_aligned(&a.corpora)?;
    let split = staged(Stage::Split, split_corpus(&aligned, a.seed))?;
    for (name, keys) in [("train", &split.train), ("validation", &split.validation), ("test", &split.test)] {
        let text: String = keys.iter().map(|k| format!("{}\n", k.as_str())).collect();
        write(&a.out.join(format!("{name}.keys")), &text)?;
    }
    let (tr, va, te) = split.sizes();
    println!("train {tr} validation {va} test {te}");
    Ok(())
}

fn paths(a: PathsArgs) -> Result<()> {
    let policy: PathPolicy = staged(Stage::Config, a.policy.parse())?;
    let mut members = Vec::new();
    for m in &a.members {
        members.push(staged::<ParaphraseId, _>(Stage::Config, m.parse())?);
    }
    for p in enumerate_paths(&members, policy) {
        println!("{p}\t{} {}", p.src_tag().rendered, p.tgt_tag().rendered);
    }
    Ok(())
}

fn bpe_learn(a: BpeLearnArgs) -> Result<()> {
    let mut lines = Vec::new();
    for f in &a.inputs {
        lines.extend(token_lines(&read(Stage::Load, f)?));
    }
    let table = learn_bpe(&lines, a.merges, &reserved());
    write(&a.out, &table.to_file_string())?;
    println!("{} merges learned", table.num_merges());
    Ok(())
}

fn bpe_apply(a: BpeApplyArgs) -> Result<()> {
    let lines = token_lines(&read(Stage::Load, &a.input)?);
    let out: Vec<Vec<String>> = if a.decode {
        let mut out = Vec::with_capacity(lines.len());
        for l in &lines {
            out.push(staged(Stage::Bpe, bpe_decode(l))?);
        }
        out
    } else {
        let codes = a.codes.as_ref().ok_or_else(|| anyhow!("[config] --codes is required to segment"))?;
        let table = staged(Stage::Bpe, MergeTable::parse(&read(Stage::Load, codes)?, reserved()))?;
        let mut enc = table.encoder();
        lines.iter().map(|l| enc.encode(l)).collect()
    };
    write(&a.out, &render_lines(&out))
}

fn parallel(src: &Path, tgt: &Path) -> Result<Vec<(Vec<String>, Vec<String>)>> {
    let s = token_lines(&read(Stage::Load, src)?);
    let t = token_lines(&read(Stage::Load, tgt)?);
    if s.len() != t.len() {
        bail!("[load] {} has {} lines but {} has {}", src.display(), s.len(), tgt.display(), t.len());
    }
    Ok(s.into_iter().zip(t).collect())
}

fn train(a: TrainArgs) -> Result<()> {
    let config: ModelConfig = match &a.model {
        Some(p) => staged(Stage::Config, toml::from_str(&read(Stage::Config, p)?))?,
        None => ModelConfig::default(),
    };
    staged(Stage::Config, config.validate())?;
    let train_text = parallel(&a.src, &a.tgt)?;
    let val_text = parallel(&a.val_src, &a.val_tgt)?;
    let tags: BTreeSet<String> = train_text
        .iter()
        .chain(&val_text)
        .flat_map(|(s, _)| s.iter().filter(|t| is_tag(t)).cloned())
        .collect();
    let vocab = staged(
        Stage::Vocab,
        build_vocab_from_streams(
            &tags,
            train_text.iter().flat_map(|(s, t)| [s.as_slice(), t.as_slice()]),
            a.vocab_cap,
        ),
    )?;
    let ids = |pairs: &[(Vec<String>, Vec<String>)]| -> Vec<EncodedPair> {
        pairs
            .iter()
            .map(|(s, t)| EncodedPair {
                src: vocab.encode(s),
                tgt: vocab.encode(t),
            })
            .collect()
    };
    let params = staged(Stage::Train, init_params(&config, vocab.len()))?;
    let outcome = staged(
        Stage::Train,
        train_with_progress(params, &ids(&train_text), &ids(&val_text), &config, |r| {
            eprintln!("epoch {}: lr {:.4} train {:.4} val {:.4}", r.epoch, r.lr, r.train_loss, r.val_loss)
        }),
    )?;
    let ck = Checkpoint {
        config,
        vocab_hash: vocab.hash(),
        params: outcome.best_params,
    };
    staged(Stage::Write, fs::create_dir_all(&a.out).map_err(|e| format!("{}: {e}", a.out.display())))?;
    staged(Stage::Write, save_checkpoint(&a.out.join("checkpoint.txt"), &ck))?;
    write(&a.out.join("vocab.txt"), &vocab.to_file_string())?;
    let history = serde_json::to_string_pretty(&outcome.history).context("[write] history")?;
    write(&a.out.join("history.json"), &history)?;
    println!("best epoch {}", outcome.best_epoch);
    Ok(())
}

fn decode(a: DecodeArgs) -> Result<()> {
    let ck = staged(Stage::Load, load_checkpoint(&a.checkpoint))?;
    let vocab = staged(Stage::Load, Vocabulary::parse(&read(Stage::Load, &a.vocab)?))?;
    if vocab.hash() != ck.vocab_hash {
        bail!("[decode] {} does not match the checkpoint's vocabulary", a.vocab.display());
    }
    let max_len = a.max_len.unwrap_or(ck.config.max_decode_len);
    let mut out = Vec::new();
    for (i, line) in token_lines(&read(Stage::Load, &a.input)?).iter().enumerate() {
        let (ids, _) = decode_greedy(&ck.params, &vocab.encode(line), max_len)
            .map_err(|e| anyhow!("[decode] line {}: {e}", i + 1))?;
        let pieces = vocab.decode_content(&ids);
        out.push(if a.keep_bpe { pieces } else { bpe_decode_lossy(&pieces) });
    }
    write(&a.out, &render_lines(&out))
}

fn eval(a: EvalArgs) -> Result<()> {
    let hyp = token_lines(&read(Stage::Load, &a.hyp)?);
    let reference = token_lines(&read(Stage::Load, &a.reference)?);
    let bleu = staged(Stage::Metrics, corpus_bleu(&hyp, &reference))?;
    let ent = staged(Stage::Metrics, entropy_report(&hyp, a.bootstrap, a.alpha, a.seed))?;
    println!("bleu\t{:.6}", bleu.bleu);
    println!("brevity_penalty\t{:.6}", bleu.brevity_penalty);
    for (n, p) in bleu.n_gram_precisions.iter().enumerate() {
        println!("p{}\t{p:.6}", n + 1);
    }
    println!("entropy_bits\t{:.6}", ent.entropy_bits);
    println!("ci_low\t{:.6}", ent.ci_low);
    println!("ci_high\t{:.6}", ent.ci_high);
    if let Some(train) = &a.train {
        let mut freqs: HashMap<String, u64> = HashMap::new();
        for w in read(Stage::Load, train)?.split_whitespace() {
            *freqs.entry(w.to_string()).or_insert(0) += 1;
        }
        let f1 = staged(Stage::Metrics, bucket_fmeasure(&hyp, &reference, &freqs))?;
        for b in 0..f1.buckets.len() {
            println!("f1[{}]\t{:.6}", bucket_label(b), f1.f1(b));
        }
    }
    Ok(())
}

fn run(a: RunArgs) -> Result<()> {
    let quiet = a.quiet;
    let out = run_experiment(&a.config, &a.out, &mut |m| {
        if !quiet {
            eprintln!("{m}");
        }
    })
    .map_err(|e| anyhow!("{e}"))?;
    print!("{}", out.report_csv);
    Ok(())
}

fn find_manifests(path: &Path, found: &mut Vec<PathBuf>) -> Result<()> {
    if path.is_file() {
        found.push(path.to_path_buf());
        return Ok(());
    }
    let mut entries: Vec<PathBuf> = staged(
        Stage::Load,
        fs::read_dir(path).map_err(|e| format!("{}: {e}", path.display())),
    )?
    .filter_map(|e| e.ok().map(|e| e.path()))
    .collect();
    entries.sort();
    for e in entries {
        if e.is_dir() {
            find_manifests(&e, found)?;
        } else if e.file_name().is_some_and(|n| n == "manifest.json") {
            found.push(e);
        }
    }
    Ok(())
}

fn tables(a: TablesArgs) -> Result<()> {
    let mut files = Vec::new();
    for p in &a.inputs {
        find_manifests(p, &mut files)?;
    }
    let mut manifests = Vec::new();
    for f in &files {
        let m = RunManifest::from_json(&read(Stage::Load, f)?)
            .map_err(|e| anyhow!("[load] {}: {e}", f.display()))?;
        manifests.push(m);
    }
    let t = emit_tables(&manifests).map_err(|e| anyhow!("{e}"))?;
    write(&a.out.join("grid.csv"), &t.grid_csv)?;
    write(&a.out.join("curve.csv"), &t.curve_csv)?;
    println!("{} manifests", manifests.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Align(a) => align(a),
        Command::Split(a) => split(a),
        Command::Paths(a) => paths(a),
        Command::BpeLearn(a) => bpe_learn(a),
        Command::BpeApply(a) => bpe_apply(a),
        Command::Train(a) => train(a),
        Command::Decode(a) => decode(a),
        Command::Eval(a) => eval(a),
        Command::Run(a) => run(a),
        Command::Tables(a) => tables(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
