use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::config::{BpeSection, RunConfig};
use super::report::{
    config_label, report_csv, BpeRecord, CorpusIdentity, EvalReport, RunManifest, SeedRecord,
};
use super::{at, sha256_hex, ExperimentError, Stage};
use crate::corpus::{
    align_corpora, load_corpus, split_corpus, AlignedCorpus, DataSplit, ParaphraseCorpus,
    ParaphraseId,
};
use crate::metrics::{bucket_fmeasure, corpus_bleu, entropy_report, EntropyReport, MetricError};
use crate::pathgen::{
    assemble_dataset, assemble_paths, equalize_budget, grid_members, render_parallel, ConfigKind,
    ExperimentConfig, TaggedPair,
};
use crate::seq2seq::{
    decode_greedy, init_params, train_with_progress, write_checkpoint, Checkpoint, EncodedPair,
    ModelConfig,
};
use crate::subword::{
    bpe_decode_lossy, build_vocab_from_streams, learn_bpe, BpeEncoder, MergeTable, Vocabulary,
    SPECIALS,
};

/// Writes run artifacts as `<name>.partial` and renames them on commit, so an
/// aborted run leaves only `.partial` files behind.
#[derive(Debug, Default)]
pub struct ArtifactSink {
    dir: Option<PathBuf>,
    names: Vec<String>,
}

impl ArtifactSink {
    /// Keeps nothing on disk.
    pub fn discard() -> Self {
        ArtifactSink::default()
    }

    pub fn in_dir(dir: &Path) -> Result<Self, ExperimentError> {
        fs::create_dir_all(dir).map_err(|e| ExperimentError::new(Stage::Write, format!("{}: {e}", dir.display())))?;
        Ok(ArtifactSink {
            dir: Some(dir.to_path_buf()),
            names: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), ExperimentError> {
        if let Some(dir) = &self.dir {
            let path = dir.join(format!("{name}.partial"));
            fs::write(&path, contents)
                .map_err(|e| ExperimentError::new(Stage::Write, format!("{}: {e}", path.display())))?;
            self.names.push(name.to_string());
        }
        Ok(())
    }

    pub fn commit(self) -> Result<(), ExperimentError> {
        if let Some(dir) = &self.dir {
            for name in &self.names {
                let from = dir.join(format!("{name}.partial"));
                fs::rename(&from, dir.join(name))
                    .map_err(|e| ExperimentError::new(Stage::Write, format!("{}: {e}", from.display())))?;
            }
        }
        Ok(())
    }
}

/// Aligned and split corpora shared by every grid point of a run.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub aligned: AlignedCorpus,
    pub split: DataSplit,
    pub identities: Vec<CorpusIdentity>,
}

/// Loads `<dir>/<id>.txt` for every corpus the config names.
pub fn load_corpora(cfg: &RunConfig) -> Result<(Vec<ParaphraseCorpus>, Vec<CorpusIdentity>), ExperimentError> {
    let mut corpora = Vec::new();
    let mut identities = Vec::new();
    for id in cfg.corpus_ids() {
        let path = cfg.corpora.dir.join(format!("{id}.txt"));
        let bytes = fs::read(&path).map_err(|e| ExperimentError::new(Stage::Load, format!("{}: {e}", path.display())))?;
        let corpus = load_corpus(&path, id.clone()).map_err(at(Stage::Load))?;
        identities.push(CorpusIdentity {
            id: id.to_string(),
            source: path.display().to_string(),
            sha256: sha256_hex(&bytes),
            verses: corpus.len(),
        });
        corpora.push(corpus);
    }
    Ok((corpora, identities))
}

pub fn prepare_data(
    cfg: &RunConfig,
    corpora: Vec<ParaphraseCorpus>,
    identities: Option<Vec<CorpusIdentity>>,
) -> Result<PreparedData, ExperimentError> {
    let identities = identities.unwrap_or_else(|| {
        corpora
            .iter()
            .map(|c| CorpusIdentity {
                id: c.id.to_string(),
                source: "<memory>".into(),
                sha256: sha256_hex(c.to_file_string().as_bytes()),
                verses: c.len(),
            })
            .collect()
    });
    let aligned = align_corpora(corpora).map_err(at(Stage::Align))?;
    let split = split_corpus(&aligned, cfg.experiment.split_seed).map_err(at(Stage::Split))?;
    Ok(PreparedData {
        aligned,
        split,
        identities,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct GridPoint {
    pub kind: ConfigKind,
    pub data: usize,
    pub seed: u64,
}

impl GridPoint {
    pub fn label(&self) -> String {
        config_label(self.kind, self.data)
    }

    pub fn dir_name(&self) -> String {
        format!("{}-s{}", self.label(), self.seed)
    }
}

/// Every (kind, data, seed) combination, sorted.
pub fn grid_points(cfg: &RunConfig) -> Vec<GridPoint> {
    let mut points: Vec<GridPoint> = cfg
        .cells()
        .into_iter()
        .flat_map(|c| {
            cfg.experiment.seeds.iter().map(move |&seed| GridPoint {
                kind: c.kind,
                data: c.data,
                seed,
            })
        })
        .collect();
    points.sort();
    points.dedup();
    points
}

fn experiment_config(cfg: &RunConfig, kind: ConfigKind, data: usize) -> Result<ExperimentConfig, ExperimentError> {
    let members = grid_members(
        kind,
        data,
        &cfg.corpora.sources,
        &cfg.corpora.targets,
        &cfg.corpora.extra,
    )
    .map_err(at(Stage::Config))?;
    let exp = ExperimentConfig {
        kind,
        members,
        eval_path: cfg.eval_path(),
        budget: cfg.budget_for(data),
        path_policy: cfg.experiment.path_policy,
        seed: cfg.experiment.budget_seed,
    };
    exp.validate().map_err(at(Stage::Config))?;
    Ok(exp)
}

/// Training-pair budget per data count: the configured budget for that count,
/// or else the smallest available pair count among the cells at that count.
pub fn resolve_budgets(cfg: &RunConfig, data: &PreparedData) -> Result<BTreeMap<usize, usize>, ExperimentError> {
    let train_keys = data.split.train.len();
    let mut available: BTreeMap<usize, usize> = BTreeMap::new();
    for cell in cfg.cells() {
        let exp = experiment_config(cfg, cell.kind, cell.data)?;
        let n = exp.paths().len() * train_keys;
        available
            .entry(cell.data)
            .and_modify(|a| *a = (*a).min(n))
            .or_insert(n);
    }
    let mut budgets = BTreeMap::new();
    for (d, available) in available {
        let budget = match cfg.budget_for(d) {
            Some(b) if b > available => {
                return Err(ExperimentError::new(
                    Stage::Equalize,
                    format!("budget {b} exceeds the {available} pairs available at data {d}"),
                ))
            }
            Some(b) => b,
            None => available,
        };
        budgets.insert(d, budget);
    }
    Ok(budgets)
}

/// BPE merges, shared by all languages or learned per language.
#[derive(Debug, Clone, PartialEq)]
pub enum SubwordModel {
    Shared(MergeTable),
    PerLanguage(BTreeMap<String, MergeTable>),
}

impl SubwordModel {
    /// Learns from `(language, tokens)` sentences.
    pub fn learn(sentences: &[(String, Vec<String>)], bpe: &BpeSection) -> Self {
        let reserved: BTreeSet<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        if bpe.shared {
            let lines: Vec<&Vec<String>> = sentences.iter().map(|(_, t)| t).collect();
            let lines: Vec<Vec<&str>> = lines.iter().map(|t| t.iter().map(String::as_str).collect()).collect();
            SubwordModel::Shared(learn_bpe(&lines, bpe.num_merges, &reserved))
        } else {
            let mut by_lang: BTreeMap<&str, Vec<Vec<&str>>> = BTreeMap::new();
            for (lang, toks) in sentences {
                by_lang
                    .entry(lang.as_str())
                    .or_default()
                    .push(toks.iter().map(String::as_str).collect());
            }
            SubwordModel::PerLanguage(
                by_lang
                    .into_iter()
                    .map(|(lang, lines)| (lang.to_string(), learn_bpe(&lines, bpe.num_merges, &reserved)))
                    .collect(),
            )
        }
    }

    pub fn learned_merges(&self) -> BTreeMap<String, usize> {
        match self {
            SubwordModel::Shared(t) => [("*".to_string(), t.num_merges())].into(),
            SubwordModel::PerLanguage(m) => m.iter().map(|(l, t)| (l.clone(), t.num_merges())).collect(),
        }
    }

    /// `(file name, contents)` for each merge table.
    pub fn files(&self) -> Vec<(String, String)> {
        match self {
            SubwordModel::Shared(t) => vec![("merges.txt".into(), t.to_file_string())],
            SubwordModel::PerLanguage(m) => m
                .iter()
                .map(|(l, t)| (format!("merges.{l}.txt"), t.to_file_string()))
                .collect(),
        }
    }

    pub fn encoders(&self) -> Encoders<'_> {
        match self {
            SubwordModel::Shared(t) => Encoders::Shared(t.encoder()),
            SubwordModel::PerLanguage(m) => {
                Encoders::PerLanguage(m.iter().map(|(l, t)| (l.clone(), t.encoder())).collect())
            }
        }
    }
}

pub enum Encoders<'a> {
    Shared(BpeEncoder<'a>),
    PerLanguage(BTreeMap<String, BpeEncoder<'a>>),
}

impl Encoders<'_> {
    /// Languages without a table pass through unsegmented.
    pub fn encode(&mut self, lang: &str, tokens: &[String]) -> Vec<String> {
        match self {
            Encoders::Shared(e) => e.encode(tokens),
            Encoders::PerLanguage(m) => match m.get_mut(lang) {
                Some(e) => e.encode(tokens),
                None => tokens.to_vec(),
            },
        }
    }
}

fn encode_pair(pair: &TaggedPair, enc: &mut Encoders) -> (Vec<String>, Vec<String>) {
    let mut src = pair.source_tokens[..2].to_vec();
    src.extend(enc.encode(&pair.path.src.lang, pair.source_text_tokens()));
    let tgt = enc.encode(&pair.path.tgt.lang, &pair.target_tokens);
    (src, tgt)
}

/// Distinct training sentences keyed by (corpus, verse): `(lang, tokens)` lists
/// for both sides, and the eval-target-language sentences on the target side.
fn training_sentences(
    pairs: &[TaggedPair],
    eval_tgt: &ParaphraseId,
) -> (Vec<(String, Vec<String>)>, Vec<Vec<String>>) {
    let mut all: BTreeMap<(String, String), (String, Vec<String>)> = BTreeMap::new();
    let mut target: BTreeMap<(String, String), Vec<String>> = BTreeMap::new();
    for p in pairs {
        all.entry((p.path.src.to_string(), p.key.to_string()))
            .or_insert_with(|| (p.path.src.lang.clone(), p.source_text_tokens().to_vec()));
        all.entry((p.path.tgt.to_string(), p.key.to_string()))
            .or_insert_with(|| (p.path.tgt.lang.clone(), p.target_tokens.clone()));
        if p.path.tgt.lang == eval_tgt.lang {
            target
                .entry((p.path.tgt.to_string(), p.key.to_string()))
                .or_insert_with(|| p.target_tokens.clone());
        }
    }
    (all.into_values().collect(), target.into_values().collect())
}

fn decisions(cfg: &RunConfig) -> BTreeMap<String, String> {
    let d = [
        ("split_rounding", "floor for train and validation, remainder to test"),
        ("budget_sampling", "stratified round-robin over paths, seeded"),
        ("budget_unit", "training pairs after path expansion"),
        ("bpe_training_data", "distinct (corpus, verse) sentences of the equalized training set"),
        ("validation_score", "per-token NLL on the eval path over validation verses"),
        ("init", "uniform [-0.1, 0.1]"),
        ("optimizer", "plain SGD on per-sentence loss, global-norm clipping"),
        ("attention", "global bilinear, decoder starts from encoder final states"),
        ("dropout", "embeddings and between stacked layers"),
        ("checkpoint_for_eval", "lowest validation loss"),
        ("decoding", "greedy"),
        ("entropy_over", "decoded test output of the eval path"),
        ("empty_output_entropy", "0 bits with a zero-width interval"),
        ("bootstrap", "sentence-level resampling, percentile interval"),
        ("frequency_buckets", "0,1,2,3,4,5-9,10-99,100-999,>=1000"),
        (
            "training_frequencies",
            "word counts over distinct training target sentences in the eval target language",
        ),
        ("metric_split", "test"),
    ];
    let mut m: BTreeMap<String, String> = d.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    m.insert(
        "bpe_sharing".into(),
        if cfg.bpe.shared { "joint" } else { "per_language" }.into(),
    );
    m
}

/// Runs one grid point end to end.
pub fn run_point(
    cfg: &RunConfig,
    data: &PreparedData,
    point: GridPoint,
    budget: usize,
    sink: &mut ArtifactSink,
    log: &mut dyn FnMut(&str),
) -> Result<RunManifest, ExperimentError> {
    let started = Instant::now();
    let label = point.label();
    let exp = experiment_config(cfg, point.kind, point.data)?;
    let paths = exp.paths();
    let eval = cfg.eval_path();

    let full = assemble_dataset(&data.aligned, &data.split.train, &exp).map_err(at(Stage::Assemble))?;
    let train_pairs = equalize_budget(&full, budget, cfg.experiment.budget_seed).map_err(at(Stage::Equalize))?;
    let val_pairs =
        assemble_paths(&data.aligned, &data.split.validation, &[eval.clone()]).map_err(at(Stage::Assemble))?;
    let test_pairs = assemble_paths(&data.aligned, &data.split.test, &[eval.clone()]).map_err(at(Stage::Assemble))?;
    let (train_src, train_tgt) = render_parallel(&train_pairs);
    sink.write("train.src", &train_src)?;
    sink.write("train.tgt", &train_tgt)?;
    log(&format!("{label} seed {}: {} paths, {} training pairs", point.seed, paths.len(), train_pairs.len()));

    let (sentences, target_sentences) = training_sentences(&train_pairs, &eval.tgt);
    let subword = SubwordModel::learn(&sentences, &cfg.bpe);
    for (name, text) in subword.files() {
        sink.write(&name, &text)?;
    }

    let mut enc = subword.encoders();
    let tags: BTreeSet<String> = paths
        .iter()
        .flat_map(|p| [p.src_tag().rendered, p.tgt_tag().rendered])
        .collect();
    let encoded_train: Vec<(Vec<String>, Vec<String>)> =
        train_pairs.iter().map(|p| encode_pair(p, &mut enc)).collect();
    let vocab = build_vocab_from_streams(
        &tags,
        encoded_train.iter().flat_map(|(s, t)| [s.as_slice(), t.as_slice()]),
        cfg.bpe.vocab_cap,
    )
    .map_err(at(Stage::Vocab))?;
    sink.write("vocab.txt", &vocab.to_file_string())?;
    let to_ids = |pairs: Vec<(Vec<String>, Vec<String>)>, vocab: &Vocabulary| -> Vec<EncodedPair> {
        pairs
            .into_iter()
            .map(|(s, t)| EncodedPair {
                src: vocab.encode(&s),
                tgt: vocab.encode(&t),
            })
            .collect()
    };
    let train_ids = to_ids(encoded_train, &vocab);
    let val_ids = to_ids(val_pairs.iter().map(|p| encode_pair(p, &mut enc)).collect(), &vocab);
    let test_ids = to_ids(test_pairs.iter().map(|p| encode_pair(p, &mut enc)).collect(), &vocab);

    let model_cfg = ModelConfig {
        seed: point.seed,
        ..cfg.model.clone()
    };
    let params = init_params(&model_cfg, vocab.len()).map_err(at(Stage::Train))?;
    let outcome = train_with_progress(params, &train_ids, &val_ids, &model_cfg, |r| {
        log(&format!(
            "{label} seed {} epoch {}: lr {:.4} train {:.4} val {:.4}",
            point.seed, r.epoch, r.lr, r.train_loss, r.val_loss
        ))
    })
    .map_err(at(Stage::Train))?;
    let checkpoint = Checkpoint {
        config: model_cfg.clone(),
        vocab_hash: vocab.hash(),
        params: outcome.best_params,
    };
    sink.write("checkpoint.txt", &write_checkpoint(&checkpoint))?;

    let mut hyps: Vec<Vec<String>> = Vec::with_capacity(test_ids.len());
    for pair in &test_ids {
        let (ids, _) = decode_greedy(&checkpoint.params, &pair.src, model_cfg.max_decode_len)
            .map_err(at(Stage::Decode))?;
        hyps.push(bpe_decode_lossy(&vocab.decode_content(&ids)));
    }
    let refs: Vec<Vec<String>> = test_pairs.iter().map(|p| p.target_tokens.clone()).collect();
    let lines = |xs: &[Vec<String>]| xs.iter().map(|l| l.join(" ") + "\n").collect::<String>();
    sink.write("test.hyp", &lines(&hyps))?;
    sink.write("test.ref", &lines(&refs))?;

    let bleu = corpus_bleu(&hyps, &refs).map_err(at(Stage::Metrics))?;
    let ent = match entropy_report(&hyps, cfg.eval.num_bootstrap, cfg.eval.alpha, cfg.eval.bootstrap_seed) {
        // A model that emits nothing has a degenerate, zero-entropy output
        // distribution; bootstrap replicates of empty lines score the same.
        Err(MetricError::NoTokens) => EntropyReport {
            entropy_bits: 0.0,
            ci_low: 0.0,
            ci_high: 0.0,
            num_bootstrap: cfg.eval.num_bootstrap,
            alpha: cfg.eval.alpha,
            seed: cfg.eval.bootstrap_seed,
        },
        r => r.map_err(at(Stage::Metrics))?,
    };
    let mut freqs: HashMap<String, u64> = HashMap::new();
    for s in &target_sentences {
        for w in s {
            *freqs.entry(w.clone()).or_insert(0) += 1;
        }
    }
    let f1 = bucket_fmeasure(&hyps, &refs, &freqs).map_err(at(Stage::Metrics))?;

    let report = EvalReport {
        config: label.clone(),
        kind: point.kind,
        data: point.data,
        seed: point.seed,
        paths: paths.len(),
        unique_sentences: train_pairs.len(),
        bleu: bleu.bleu,
        bp: bleu.brevity_penalty,
        precisions: bleu.n_gram_precisions,
        entropy: ent.entropy_bits,
        ci_low: ent.ci_low,
        ci_high: ent.ci_high,
        f1: (0..f1.buckets.len()).map(|b| f1.f1(b)).collect(),
    };
    log(&format!("{label} seed {}: BLEU {:.2}", point.seed, 100.0 * report.bleu));

    let manifest = RunManifest {
        experiment: cfg.experiment.name.clone(),
        config_hash: sha256_hex(cfg.to_toml().as_bytes()),
        label,
        kind: point.kind,
        data: point.data,
        members: exp.members.iter().map(ToString::to_string).collect(),
        paths: paths.iter().map(ToString::to_string).collect(),
        path_policy: format!("{:?}", cfg.experiment.path_policy),
        eval_path: eval.to_string(),
        seeds: SeedRecord {
            split: cfg.experiment.split_seed,
            budget: cfg.experiment.budget_seed,
            model: point.seed,
            bootstrap: cfg.eval.bootstrap_seed,
        },
        corpora: data.identities.clone(),
        aligned_keys: data.aligned.keys.len(),
        dropped: data.aligned.dropped.clone(),
        split_sizes: data.split.sizes(),
        budget: Some(budget),
        train_pairs: train_pairs.len(),
        bpe: BpeRecord {
            shared: cfg.bpe.shared,
            requested_merges: cfg.bpe.num_merges,
            learned_merges: subword.learned_merges(),
            vocab_cap: cfg.bpe.vocab_cap,
            vocab_size: vocab.len(),
            vocab_hash: vocab.hash(),
        },
        model: model_cfg,
        history: outcome.history,
        best_epoch: outcome.best_epoch,
        report,
        decisions: decisions(cfg),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    sink.write("manifest.json", &manifest.to_json())?;
    Ok(manifest)
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub manifests: Vec<RunManifest>,
    /// Per-run metrics; contains no timing, so identical inputs give identical bytes.
    pub report_csv: String,
}

/// Runs every grid point of `cfg` on already-loaded corpora. With `out_dir`,
/// each point's artifacts go to `<out_dir>/<label>-s<seed>/` and the combined
/// report to `<out_dir>/report.csv`.
pub fn run_grid(
    cfg: &RunConfig,
    data: &PreparedData,
    out_dir: Option<&Path>,
    log: &mut dyn FnMut(&str),
) -> Result<ExperimentOutput, ExperimentError> {
    let budgets = resolve_budgets(cfg, data)?;
    let mut manifests = Vec::new();
    for point in grid_points(cfg) {
        let mut sink = match out_dir {
            Some(dir) => ArtifactSink::in_dir(&dir.join(point.dir_name()))?,
            None => ArtifactSink::discard(),
        };
        let manifest = run_point(cfg, data, point, budgets[&point.data], &mut sink, log)?;
        sink.commit()?;
        manifests.push(manifest);
    }
    let report_csv = report_csv(manifests.iter().map(|m| &m.report));
    if let Some(dir) = out_dir {
        let mut sink = ArtifactSink::in_dir(dir)?;
        sink.write("report.csv", &report_csv)?;
        sink.write("config.toml", &cfg.to_toml())?;
        sink.commit()?;
    }
    Ok(ExperimentOutput {
        manifests,
        report_csv,
    })
}

/// Loads the config and its corpora, then runs the whole grid.
pub fn run_experiment(
    config_path: &Path,
    out_dir: &Path,
    log: &mut dyn FnMut(&str),
) -> Result<ExperimentOutput, ExperimentError> {
    let cfg = RunConfig::load(config_path).map_err(|e| ExperimentError::new(Stage::Config, e))?;
    let (corpora, identities) = load_corpora(&cfg)?;
    let data = prepare_data(&cfg, corpora, Some(identities))?;
    run_grid(&cfg, &data, Some(out_dir), log)
}
