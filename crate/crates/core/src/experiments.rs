//! End-to-end runs (load, split, train, evaluate) and the preset
//! configurations with their acceptance bands.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::artifact::ModelArtifact;
use crate::config::{CacheMode, EvalMode, OutputKind, RunConfig};
use crate::corpus::{build_vocabulary, encode_all, load_corpus, reverse_sentences, split_corpus, Sentence, Vocabulary};
use crate::error::{Error, Result};
use crate::evaluation::{perplexity, EvalOptions, EvalReport};
use crate::models::{Architecture, Network};
use crate::numerics::SeededRng;
use crate::training::{dynamic_evaluate, train, EpochReport, ProposalDistribution, Trainer, TrainingSummary};

/// Environment variable naming the directory that holds corpus files.
pub const CORPUS_ROOT_ENV: &str = "NNLM_CORPUS_ROOT";
pub const BROWN_FILE: &str = "brown.txt";
pub const DOMAIN_FILES: [&str; 2] = ["electronics.txt", "books.txt"];

pub struct PreparedData {
    pub vocab: Vocabulary,
    pub train: Vec<Sentence>,
    pub valid: Vec<Sentence>,
    pub test: Vec<Sentence>,
    /// `(file, sha256)` for every corpus file read.
    pub corpus_hashes: Vec<(String, String)>,
}

pub fn resolve(root: Option<&Path>, path: &Path) -> PathBuf {
    match root {
        Some(r) if path.is_relative() => r.join(path),
        _ => path.to_path_buf(),
    }
}

fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

fn load_hashed(root: Option<&Path>, path: &Path, lowercase: bool, hashes: &mut Vec<(String, String)>) -> Result<Vec<Sentence>> {
    let p = resolve(root, path);
    if !p.exists() {
        return Err(Error::Config {
            key: "corpus".into(),
            message: format!(
                "corpus file {} not found; place it there or point {CORPUS_ROOT_ENV} at the directory holding it",
                p.display()
            ),
        });
    }
    hashes.push((p.display().to_string(), file_hash(&p)?));
    load_corpus(&p, lowercase)
}

/// Loads and splits the configured corpus and builds the vocabulary from
/// the training part.
pub fn prepare_data(cfg: &RunConfig, root: Option<&Path>) -> Result<PreparedData> {
    let c = &cfg.corpus;
    let mut hashes = Vec::new();
    let (train, valid, test) = if let Some(train) = &c.train {
        let need = |p: &Option<PathBuf>, key: &str| {
            p.clone().ok_or_else(|| Error::Config {
                key: key.into(),
                message: "required when corpus.train is set".into(),
            })
        };
        let (valid, test) = (need(&c.valid, "corpus.valid")?, need(&c.test, "corpus.test")?);
        (
            load_hashed(root, train, c.lowercase, &mut hashes)?,
            load_hashed(root, &valid, c.lowercase, &mut hashes)?,
            load_hashed(root, &test, c.lowercase, &mut hashes)?,
        )
    } else if let Some(path) = &c.path {
        let all = load_hashed(root, path, c.lowercase, &mut hashes)?;
        let s = split_corpus(&all, c.train_tokens, c.valid_tokens)?;
        (s.train, s.validation, s.test)
    } else {
        return Err(Error::Config {
            key: "corpus.path".into(),
            message: "no corpus configured; set corpus.path or corpus.train/valid/test".into(),
        });
    };
    for (part, name) in [(&train, "training"), (&valid, "validation"), (&test, "test")] {
        if part.is_empty() {
            return Err(Error::Config {
                key: "corpus".into(),
                message: format!("the {name} split is empty"),
            });
        }
    }
    let vocab = build_vocabulary(&train, c.min_count)?;
    Ok(PreparedData {
        vocab,
        train,
        valid,
        test,
        corpus_hashes: hashes,
    })
}

fn reversed_run(cfg: &RunConfig) -> bool {
    cfg.eval.mode == EvalMode::Reversed
}

fn oriented(sentences: &[Sentence], reversed: bool) -> Vec<Sentence> {
    if reversed {
        reverse_sentences(sentences)
    } else {
        sentences.to_vec()
    }
}

/// Fresh network for `cfg`; its output assignment and weights derive from the seed.
pub fn build_network(cfg: &RunConfig, vocab: &Vocabulary) -> Result<Network<f64>> {
    cfg.validate()?;
    let rng = SeededRng::new(cfg.seed);
    let strategy = cfg.output_strategy(vocab, &mut rng.fork(1))?;
    Network::new(cfg.model_spec(vocab.len()), strategy, &mut rng.fork(2))
}

pub struct TrainedModel {
    pub network: Network<f64>,
    pub summary: TrainingSummary,
}

/// Trains a model for `cfg` on `data`; reversed runs see reversed sentences.
pub fn train_model(cfg: &RunConfig, data: &PreparedData, on_epoch: impl FnMut(&EpochReport)) -> Result<TrainedModel> {
    let mut network = build_network(cfg, &data.vocab)?;
    let rev = reversed_run(cfg);
    let train_set = encode_all(&oriented(&data.train, rev), &data.vocab);
    let valid_set = encode_all(&oriented(&data.valid, rev), &data.vocab);
    let proposal = if cfg.training.sampling.enabled {
        Some(ProposalDistribution::unigram(data.vocab.frequencies())?)
    } else {
        None
    };
    let summary = train(&mut network, &train_set, &valid_set, &cfg.training_config(), proposal, on_epoch)?;
    Ok(TrainedModel { network, summary })
}

/// Evaluates `sentences` in the mode `cfg` selects. Dynamic evaluation
/// adapts a copy; `network` itself is never modified.
pub fn evaluate_model(network: &Network<f64>, cfg: &RunConfig, vocab: &Vocabulary, sentences: &[Sentence]) -> Result<EvalReport> {
    let encoded = encode_all(&oriented(sentences, reversed_run(cfg)), vocab);
    match cfg.eval.mode {
        EvalMode::Dynamic => dynamic_evaluate(&mut network.clone(), &encoded, &cfg.dynamic_config()),
        _ => perplexity(
            network,
            &encoded,
            &EvalOptions {
                cache: cfg.cache_config(),
                carryover: cfg.eval.carryover,
            },
        ),
    }
}

/// Training words per second over one epoch on the first `sentences`
/// training sentences.
pub fn training_speed(cfg: &RunConfig, data: &PreparedData, sentences: usize) -> Result<f64> {
    let mut network = build_network(cfg, &data.vocab)?;
    let n = sentences.min(data.train.len());
    let part = encode_all(&data.train[..n], &data.vocab);
    let valid = encode_all(&data.valid[..data.valid.len().min(1)], &data.vocab);
    let mut t = Trainer::new(cfg.training_config(), None)?;
    let r = t.train_epoch(&mut network, &part, &valid)?;
    Ok(r.words_per_s.unwrap_or(0.0))
}

/// Provenance block written at the top of every output file.
pub fn provenance(cfg: &RunConfig, hashes: &[(String, String)], extra: &[(&str, String)]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# nnlm {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "# seed = {}", cfg.seed);
    for (file, hash) in hashes {
        let _ = writeln!(s, "# corpus {file} sha256 {hash}");
    }
    for (k, v) in extra {
        let _ = writeln!(s, "# {k} = {v}");
    }
    let _ = writeln!(s, "# config:");
    for line in cfg.serialize().lines().filter(|l| !l.is_empty()) {
        let _ = writeln!(s, "#   {line}");
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TableId {
    Baseline,
    Classes,
    Caching,
    Reversal,
    Dynamic,
    Domain,
}

impl FromStr for TableId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "1" => TableId::Baseline,
            "2" => TableId::Classes,
            "3" => TableId::Caching,
            "4" => TableId::Reversal,
            "dynamic" => TableId::Dynamic,
            "domain" => TableId::Domain,
            other => return Err(Error::InvalidArgument(format!("unknown table `{other}`; expected one of 1, 2, 3, 4, dynamic, domain"))),
        })
    }
}

impl std::fmt::Display for TableId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TableId::Baseline => "1",
            TableId::Classes => "2",
            TableId::Caching => "3",
            TableId::Reversal => "4",
            TableId::Dynamic => "dynamic",
            TableId::Domain => "domain",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Band {
    /// Measured value must lie in `[lo, hi]`.
    Absolute { lo: f64, hi: f64 },
    /// Within this fraction of the reference value.
    Relative(f64),
    Informational,
}

impl Band {
    pub fn check(&self, reference: Option<f64>, measured: f64) -> Option<bool> {
        match (*self, reference) {
            (Band::Absolute { lo, hi }, _) => Some(measured >= lo && measured <= hi),
            (Band::Relative(f), Some(p)) => Some((measured - p).abs() <= f * p),
            _ => None,
        }
    }

    pub fn describe(&self, reference: Option<f64>) -> String {
        match (*self, reference) {
            (Band::Absolute { lo, hi }, _) => format!("[{lo}, {hi}]"),
            (Band::Relative(f), Some(p)) => format!("[{:.2}, {:.2}]", p * (1.0 - f), p * (1.0 + f)),
            _ => "-".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Preset {
    pub id: &'static str,
    pub table: TableId,
    pub label: &'static str,
    pub reference_ppl: Option<f64>,
    pub band: Band,
    pub overrides: &'static [(&'static str, &'static str)],
}

const BASELINE_BAND: Band = Band::Absolute { lo: 200.0, hi: 280.0 };

/// Every shipped configuration. All start from [`base_config`].
pub fn presets() -> Vec<Preset> {
    use TableId::*;
    let p = |id, table, label, reference_ppl, band, overrides| Preset {
        id,
        table,
        label,
        reference_ppl,
        band,
        overrides,
    };
    vec![
        p("fnn", Baseline, "FNN n=5", Some(223.85), Band::Relative(0.2), &[("model.architecture", "fnn")]),
        p("rnn", Baseline, "RNN", Some(221.10), Band::Relative(0.2), &[("model.architecture", "rnn")]),
        p("lstm", Baseline, "LSTM", Some(237.93), BASELINE_BAND, &[]),
        p("lstm-direct", Baseline, "LSTM + direct", Some(242.54), Band::Informational, &[("model.direct", "true")]),
        p("lstm-bias", Baseline, "LSTM + bias", Some(237.18), Band::Informational, &[("model.bias", "true")]),
        p("uniform-l1", Classes, "uniform l=1", Some(227.51), Band::Informational, &[("output.assignment", "uniform")]),
        p(
            "uniform-l3",
            Classes,
            "uniform l=3",
            Some(312.82),
            Band::Informational,
            &[("output.strategy", "hierarchical"), ("output.assignment", "uniform"), ("output.layers", "3")],
        ),
        p(
            "uniform-l5",
            Classes,
            "uniform l=5",
            Some(438.58),
            Band::Informational,
            &[("output.strategy", "hierarchical"), ("output.assignment", "uniform"), ("output.layers", "5")],
        ),
        p("freq", Classes, "frequency l=1", Some(248.99), Band::Informational, &[("output.assignment", "frequency")]),
        p("sqrt-freq", Classes, "sqrt-frequency l=1", Some(237.93), BASELINE_BAND, &[]),
        p("full-softmax", Classes, "full softmax (speed reference)", None, Band::Informational, &[("output.strategy", "full")]),
        p("no-carryover", Caching, "no carryover", Some(237.93), BASELINE_BAND, &[]),
        p("carryover", Caching, "carryover", Some(241.45), Band::Informational, &[("eval.carryover", "true")]),
        p("forward", Reversal, "forward", Some(237.93), BASELINE_BAND, &[]),
        p("reversed", Reversal, "reversed", Some(240.48), Band::Informational, &[("eval.mode", "reversed")]),
        p("static", Dynamic, "static", Some(237.93), BASELINE_BAND, &[]),
        p("dynamic", Dynamic, "dynamic", Some(174.57), Band::Informational, &[("eval.mode", "dynamic")]),
        p(
            "domain-a",
            Domain,
            "trained on electronics",
            None,
            Band::Informational,
            &[("corpus.path", "electronics.txt"), ("corpus.valid_tokens", "100000")],
        ),
        p(
            "domain-b",
            Domain,
            "trained on books",
            None,
            Band::Informational,
            &[("corpus.path", "books.txt"), ("corpus.valid_tokens", "100000")],
        ),
    ]
}

pub fn preset(id: &str) -> Option<Preset> {
    presets().into_iter().find(|p| p.id == id)
}

/// Baseline: LSTM, m=100, n_h=200, no direct connections, no bias,
/// sqrt-frequency classes, 800k/200k/rest split of the Brown file.
pub fn base_config() -> RunConfig {
    let mut c = RunConfig::default();
    c.corpus.path = Some(PathBuf::from(BROWN_FILE));
    c.corpus.min_count = 4;
    c
}

pub fn preset_config(p: &Preset) -> Result<RunConfig> {
    let mut c = base_config();
    for (k, v) in p.overrides {
        c.set(k, v)?;
    }
    Ok(c)
}

#[derive(Clone, Debug)]
pub struct ReproRow {
    pub id: String,
    pub label: String,
    pub reference: Option<f64>,
    pub measured: f64,
    pub band: String,
    pub pass: Option<bool>,
    pub train_words_per_s: Option<f64>,
    pub test_words_per_s: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrendCheck {
    pub name: String,
    pub detail: String,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct ReproReport {
    pub table: TableId,
    pub rows: Vec<ReproRow>,
    pub checks: Vec<TrendCheck>,
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or("-".into(), |x| format!("{x:.digits$}"))
}

fn verdict(p: Option<bool>) -> &'static str {
    match p {
        Some(true) => "PASS",
        Some(false) => "FAIL",
        None => "-",
    }
}

impl ReproReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass != Some(false)) && self.checks.iter().all(|c| c.pass)
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "## Table {}\n", self.table);
        let _ = writeln!(s, "| row | reference PPL | measured PPL | band | result | train words/s | test words/s |");
        let _ = writeln!(s, "|---|---|---|---|---|---|---|");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "| {} | {} | {:.2} | {} | {} | {} | {} |",
                r.label,
                opt(r.reference, 2),
                r.measured,
                r.band,
                verdict(r.pass),
                opt(r.train_words_per_s, 1),
                opt(r.test_words_per_s, 1)
            );
        }
        if !self.checks.is_empty() {
            let _ = writeln!(s, "\n| check | detail | result |\n|---|---|---|");
            for c in &self.checks {
                let _ = writeln!(s, "| {} | {} | {} |", c.name, c.detail, verdict(Some(c.pass)));
            }
        }
        s
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("table\tid\treference_ppl\tmeasured_ppl\tband\tresult\ttrain_words_per_s\ttest_words_per_s\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{:.4}\t{}\t{}\t{}\t{}",
                self.table,
                r.id,
                opt(r.reference, 2),
                r.measured,
                r.band,
                verdict(r.pass),
                opt(r.train_words_per_s, 1),
                opt(r.test_words_per_s, 1)
            );
        }
        for c in &self.checks {
            let _ = writeln!(s, "{}\tcheck:{}\t-\t-\t{}\t{}\t-\t-", self.table, c.name, c.detail, verdict(Some(c.pass)));
        }
        s
    }
}

/// Reuses trained models across rows and runs; keyed by everything that
/// affects training.
struct ModelStore<'a> {
    dir: Option<&'a Path>,
    memory: HashMap<String, Network<f64>>,
}

fn training_key(cfg: &RunConfig) -> String {
    let mut c = cfg.clone();
    if c.eval.mode != EvalMode::Reversed {
        c.eval.mode = EvalMode::Static;
    }
    c.eval.carryover = false;
    c.cache.mode = CacheMode::None;
    let text = c.serialize();
    format!("{:x}", Sha256::digest(text.as_bytes()))[..16].to_string()
}

impl ModelStore<'_> {
    fn get(&mut self, cfg: &RunConfig, data: &PreparedData, log: &mut dyn FnMut(&str)) -> Result<(Network<f64>, Option<f64>)> {
        let key = training_key(cfg);
        if let Some(n) = self.memory.get(&key) {
            return Ok((n.clone(), None));
        }
        let file = self.dir.map(|d| d.join(format!("{key}.nnlm")));
        if let Some(f) = file.as_ref().filter(|f| f.exists()) {
            let a = ModelArtifact::load_checked(f, &data.vocab)?;
            log(&format!("reusing trained model {}", f.display()));
            self.memory.insert(key, a.network.clone());
            return Ok((a.network, None));
        }
        let t = train_model(cfg, data, |r| log(&format!("  {}", r.tsv_row())))?;
        let wps: Vec<f64> = t.summary.reports.iter().filter_map(|r| r.words_per_s).collect();
        let mean_wps = (!wps.is_empty()).then(|| wps.iter().sum::<f64>() / wps.len() as f64);
        if let Some(f) = &file {
            ModelArtifact::new(t.network.clone(), &data.vocab, cfg.seed, cfg.serialize(), reversed_run(cfg))?.save(f)?;
        }
        self.memory.insert(key, t.network.clone());
        Ok((t.network, mean_wps))
    }
}

fn row(p: &Preset, report: &EvalReport, train_wps: Option<f64>) -> ReproRow {
    ReproRow {
        id: p.id.to_string(),
        label: p.label.to_string(),
        reference: p.reference_ppl,
        measured: report.ppl,
        band: p.band.describe(p.reference_ppl),
        pass: p.band.check(p.reference_ppl, report.ppl),
        train_words_per_s: train_wps,
        test_words_per_s: report.words_per_s,
    }
}

fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / b
}

/// Sentences used by the training-speed probe.
pub const SPEED_PROBE_SENTENCES: usize = 300;

/// Runs a table's configurations in order. `root` holds the corpus files;
/// trained models are cached in `workdir` when given.
pub fn reproduce(table: TableId, root: &Path, workdir: Option<&Path>, log: &mut dyn FnMut(&str)) -> Result<ReproReport> {
    let mut store = ModelStore {
        dir: workdir,
        memory: HashMap::new(),
    };
    let rows_for: Vec<Preset> = presets().into_iter().filter(|p| p.table == table).collect();
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    if table == TableId::Domain {
        return reproduce_domain(root, &mut store, log);
    }
    let data = prepare_data(&base_config(), Some(root))?;
    log(&format!(
        "corpus: {} / {} / {} sentences, vocabulary {}",
        data.train.len(),
        data.valid.len(),
        data.test.len(),
        data.vocab.len()
    ));
    let mut measured: HashMap<&str, f64> = HashMap::new();
    for p in &rows_for {
        let cfg = preset_config(p)?;
        if p.id == "full-softmax" {
            continue;
        }
        log(&format!("{}: training", p.id));
        let (net, wps) = store.get(&cfg, &data, log)?;
        let report = evaluate_model(&net, &cfg, &data.vocab, &data.test)?;
        log(&format!("{}: test PPL {:.2}", p.id, report.ppl));
        measured.insert(p.id, report.ppl);
        rows.push(row(p, &report, wps));
    }
    match table {
        TableId::Classes => {
            let (l1, l3, l5) = (measured["uniform-l1"], measured["uniform-l3"], measured["uniform-l5"]);
            checks.push(TrendCheck {
                name: "uniform PPL increases with layers".into(),
                detail: format!("{l1:.2} < {l3:.2} < {l5:.2}"),
                pass: l1 < l3 && l3 < l5,
            });
            let (sq, fr) = (measured["sqrt-freq"], measured["freq"]);
            checks.push(TrendCheck {
                name: "sqrt-frequency no worse than frequency".into(),
                detail: format!("{sq:.2} <= {fr:.2}"),
                pass: sq <= fr,
            });
            let full = preset_config(&preset("full-softmax").expect("listed"))?;
            let full_wps = training_speed(&full, &data, SPEED_PROBE_SENTENCES)?;
            for id in ["uniform-l1", "uniform-l3", "uniform-l5", "freq", "sqrt-freq"] {
                let cfg = preset_config(&preset(id).expect("listed"))?;
                let wps = training_speed(&cfg, &data, SPEED_PROBE_SENTENCES)?;
                checks.push(TrendCheck {
                    name: format!("{id} training speed vs full softmax"),
                    detail: format!("{wps:.1} / {full_wps:.1} = {:.2}x (need >= 1.5x)", wps / full_wps),
                    pass: wps >= 1.5 * full_wps,
                });
            }
        }
        TableId::Caching => {
            let (base, carry) = (measured["no-carryover"], measured["carryover"]);
            checks.push(TrendCheck {
                name: "carryover within 5% of baseline".into(),
                detail: format!("{carry:.2} vs {base:.2} ({:.2}%)", 100.0 * relative_gap(carry, base)),
                pass: relative_gap(carry, base) <= 0.05,
            });
        }
        TableId::Reversal => {
            let (fwd, rev) = (measured["forward"], measured["reversed"]);
            checks.push(TrendCheck {
                name: "reversed within 5% of forward".into(),
                detail: format!("{rev:.2} vs {fwd:.2} ({:.2}%)", 100.0 * relative_gap(rev, fwd)),
                pass: relative_gap(rev, fwd) <= 0.05,
            });
        }
        TableId::Dynamic => {
            let (st, dy) = (measured["static"], measured["dynamic"]);
            checks.push(TrendCheck {
                name: "dynamic evaluation lowers PPL by at least 10%".into(),
                detail: format!("{dy:.2} vs {st:.2} ({:.1}% lower)", 100.0 * (st - dy) / st),
                pass: dy <= 0.9 * st,
            });
        }
        _ => {}
    }
    Ok(ReproReport { table, rows, checks })
}

fn reproduce_domain(root: &Path, store: &mut ModelStore<'_>, log: &mut dyn FnMut(&str)) -> Result<ReproReport> {
    let pa = preset("domain-a").expect("listed");
    let pb = preset("domain-b").expect("listed");
    let (ca, cb) = (preset_config(&pa)?, preset_config(&pb)?);
    let (da, db) = (prepare_data(&ca, Some(root))?, prepare_data(&cb, Some(root))?);
    // one vocabulary over both training sets keeps the perplexities comparable
    let mut both = da.train.clone();
    both.extend(db.train.iter().cloned());
    let vocab = build_vocabulary(&both, ca.corpus.min_count)?;
    let da = PreparedData { vocab: vocab.clone(), ..da };
    let db = PreparedData { vocab, ..db };
    let mut rows = Vec::new();
    let mut ppl = [[0.0; 2]; 2];
    for (i, (p, cfg, data)) in [(&pa, &ca, &da), (&pb, &cb, &db)].into_iter().enumerate() {
        log(&format!("{}: training", p.id));
        let (net, wps) = store.get(cfg, data, log)?;
        for (j, test) in [&da.test, &db.test].into_iter().enumerate() {
            let r = evaluate_model(&net, cfg, &data.vocab, test)?;
            ppl[i][j] = r.ppl;
            let mut rw = row(p, &r, wps);
            rw.id = format!("{}-on-{}", p.id, ["a", "b"][j]);
            rw.label = format!("{} / test {}", p.label, DOMAIN_FILES[j].trim_end_matches(".txt"));
            rows.push(rw);
        }
    }
    let checks = vec![
        TrendCheck {
            name: "in-domain model wins on A".into(),
            detail: format!("{:.2} < {:.2}", ppl[0][0], ppl[1][0]),
            pass: ppl[0][0] < ppl[1][0],
        },
        TrendCheck {
            name: "in-domain model wins on B".into(),
            detail: format!("{:.2} < {:.2}", ppl[1][1], ppl[0][1]),
            pass: ppl[1][1] < ppl[0][1],
        },
    ];
    Ok(ReproReport {
        table: TableId::Domain,
        rows,
        checks,
    })
}

/// Text of the shipped config file for a preset.
pub fn preset_file(p: &Preset) -> Result<String> {
    let cfg = preset_config(p)?;
    let mut s = format!("# {} (table {})\n", p.label, p.table);
    if let Some(v) = p.reference_ppl {
        let _ = writeln!(s, "# reference test PPL {v}");
    }
    s.push_str(&cfg.serialize());
    Ok(s)
}

/// Model-shape sanity used by the CLI before any data is read.
pub fn describe(cfg: &RunConfig) -> String {
    let out = match cfg.output.strategy {
        OutputKind::Full => "full softmax".to_string(),
        OutputKind::Class => format!(
            "class softmax ({}, {})",
            cfg.output.classes.map_or("sqrt(k)".to_string(), |c| c.to_string()),
            cfg.output.assignment.keyword()
        ),
        OutputKind::Hierarchical => format!("hierarchical softmax (l={}, uniform)", cfg.output.layers),
    };
    let arch = match cfg.model.architecture {
        Architecture::Fnn => format!("fnn n={}", cfg.model.order),
        a => a.to_string(),
    };
    format!("{arch} m={} n_h={} direct={} bias={} | {out}", cfg.model.embedding, cfg.model.hidden, cfg.model.direct, cfg.model.bias)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Assignment;

    #[test]
    fn every_preset_config_is_valid() {
        for p in presets() {
            let c = preset_config(&p).unwrap();
            c.validate().unwrap_or_else(|e| panic!("{}: {e}", p.id));
            let text = preset_file(&p).unwrap();
            assert_eq!(RunConfig::parse(&text).unwrap(), c, "{}", p.id);
        }
    }

    #[test]
    fn baseline_matches_reference_setup() {
        let c = preset_config(&preset("lstm").unwrap()).unwrap();
        assert_eq!(c.model.architecture, Architecture::Lstm);
        assert_eq!((c.model.embedding, c.model.hidden), (100, 200));
        assert!(!c.model.direct && !c.model.bias);
        assert_eq!(c.output.assignment, Assignment::SqrtFrequency);
        assert_eq!((c.corpus.train_tokens, c.corpus.valid_tokens), (800_000, 200_000));
    }

    #[test]
    fn table_ids() {
        assert_eq!("dynamic".parse::<TableId>().unwrap(), TableId::Dynamic);
        assert!("7".parse::<TableId>().is_err());
    }

    #[test]
    fn bands() {
        assert_eq!(BASELINE_BAND.check(None, 240.0), Some(true));
        assert_eq!(BASELINE_BAND.check(None, 281.0), Some(false));
        assert_eq!(Band::Relative(0.2).check(Some(100.0), 119.0), Some(true));
        assert_eq!(Band::Relative(0.2).check(Some(100.0), 79.0), Some(false));
        assert_eq!(Band::Informational.check(Some(1.0), 5.0), None);
    }

    #[test]
    fn missing_corpus_message_is_actionable() {
        let dir = tempfile::tempdir().unwrap();
        let err = match reproduce(TableId::Baseline, dir.path(), None, &mut |_| {}) {
            Err(e) => e,
            Ok(_) => panic!("ran without a corpus"),
        };
        let msg = err.to_string();
        assert!(msg.contains("brown.txt") && msg.contains(CORPUS_ROOT_ENV), "{msg}");
    }
}
