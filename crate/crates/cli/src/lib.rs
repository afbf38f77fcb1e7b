//! Command implementations behind the `hptr` binary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use hptr::checkpoint::{self, Model};
use hptr::config::{LabelSource, RunConfig, Task};
use hptr::corpus::{
    format_conllu, format_rst_bracket, gen_synthetic_dep, gen_synthetic_rst, load_embeddings, parse_conllu,
    parse_conllu_with, parse_edu_lines, parse_rst_bracket, ConlluOptions, LabelSet,
};
use hptr::decoder::{format_trace, TraceStep};
use hptr::dep::{train_dep, DepParser, DepTree, Sentence};
use hptr::metrics::{bucket_csv, bucket_scores, score_dep, score_parseval, DepScore, ParsevalScore, PunctPolicy};
use hptr::rst::{train_rst, DiscTree, RstParser};
use hptr::train::EpochLog;
use hptr::{Error, Result};

pub const CONFIG_FILE: &str = "config.txt";
pub const LOG_FILE: &str = "train.log";
pub const DEP_MODEL: &str = "model.json";
pub const RST_SPAN_MODEL: &str = "model-span.json";
pub const RST_RELATION_MODEL: &str = "model-relation.json";

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 1,
        Error::Numeric { .. } | Error::Diverged { .. } => 3,
        _ => 2,
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Load(format!("{}: {e}", path.display())))
}

fn require<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a PathBuf> {
    let p = p
        .as_ref()
        .ok_or_else(|| Error::Config(format!("missing {what} path")))?;
    if what != "output" && !p.exists() {
        return Err(Error::Config(format!("{what} path {} does not exist", p.display())));
    }
    Ok(p)
}

fn read_dep(path: &Path) -> Result<Vec<(Sentence, DepTree)>> {
    parse_conllu(&read(path)?)
}

fn read_rst(path: &Path) -> Result<Vec<DiscTree>> {
    parse_rst_bracket(&read(path)?)
}

/// Trains the configured task and writes the resolved config, the training
/// log and the selected checkpoint(s) under `config.output`. All paths and
/// values are checked before anything is written.
pub fn cmd_train(config: &RunConfig, mut echo: impl FnMut(&str)) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let out = require(&config.output, "output")?.clone();
    let train_path = require(&config.train, "train")?.clone();
    let dev_path = match &config.dev {
        Some(_) => Some(require(&config.dev, "dev")?.clone()),
        None => None,
    };
    if config.embeddings.is_some() {
        require(&config.embeddings, "embeddings")?;
    }
    if let LabelSource::File(p) = &config.labels {
        if !p.exists() {
            return Err(Error::Config(format!("label file {} does not exist", p.display())));
        }
    }
    fs::create_dir_all(&out)?;
    fs::write(out.join(CONFIG_FILE), config.to_text())?;
    let mut log = fs::File::create(out.join(LOG_FILE))?;
    let mut notes = Vec::new();
    let mut on_epoch = |l: &EpochLog| {
        let line = l.to_string();
        let _ = writeln!(log, "{line}");
        echo(&line);
    };
    let mut written = Vec::new();
    match config.task {
        Task::Dep => {
            let train = read_dep(&train_path)?;
            let dev = dev_path.as_deref().map(read_dep).transpose()?.unwrap_or_default();
            let mut parser = DepParser::from_corpus(config.dep.clone(), &train, config.seed)?;
            if let Some(p) = &config.embeddings {
                let cov = load_embeddings(p, &parser.vocabs.words, &mut parser.store, &parser.encoder.words)?;
                notes.push(format!("embeddings: {} of {} words covered", cov.hits, cov.vocab_size));
            }
            let punct = punct_policy(config.exclude_punct);
            let mut training = config.training.clone();
            training.seed = config.seed;
            let report = train_dep(&mut parser, &train, &dev, &training, &punct, &mut on_epoch)?;
            notes.push(format!(
                "best epoch {} uas={:.4} las={:.4}",
                report.best_epoch,
                report.best.uas(),
                report.best.las()
            ));
            let path = out.join(DEP_MODEL);
            checkpoint::save(&path, &Model::Dep(parser))?;
            written.push(path);
        }
        Task::Rst => {
            let train = read_rst(&train_path)?;
            let dev = dev_path.as_deref().map(read_rst).transpose()?.unwrap_or_default();
            let labels = config.labels.resolve(&train)?;
            let mut parser = RstParser::from_corpus(config.rst.clone(), &train, labels, config.seed)?;
            let mut training = config.training.clone();
            training.seed = config.seed;
            let report = train_rst(&mut parser, &train, &dev, &training, &mut on_epoch)?;
            for (sel, name) in [(&report.best_span, RST_SPAN_MODEL), (&report.best_relation, RST_RELATION_MODEL)] {
                if let Some(sel) = sel {
                    notes.push(format!(
                        "{name}: epoch {} span={:.4} relation={:.4}",
                        sel.epoch,
                        sel.score.span.f1(),
                        sel.score.relation.f1()
                    ));
                    let mut p = parser.clone();
                    p.store = sel.params.clone();
                    let path = out.join(name);
                    checkpoint::save(&path, &Model::Rst(p))?;
                    written.push(path);
                }
            }
        }
    }
    for n in &notes {
        echo(n);
    }
    Ok(written)
}

pub fn punct_policy(exclude: bool) -> PunctPolicy {
    if exclude {
        PunctPolicy::standard()
    } else {
        PunctPolicy::none()
    }
}

/// Discourse parse input: bracketed trees (their EDUs are re-parsed) or one
/// `|||`-separated EDU sequence per line.
fn rst_inputs(text: &str) -> Result<Vec<Vec<String>>> {
    if text.trim_start().starts_with('(') {
        Ok(parse_rst_bracket(text)?.into_iter().map(|t| t.edus).collect())
    } else {
        parse_edu_lines(text)
    }
}

/// Parses `input` with a checkpoint and writes CoNLL-U (dependency) or
/// bracketed trees (discourse). Returns the number of sentences parsed.
pub fn cmd_parse(
    checkpoint_path: &Path,
    input: &Path,
    output: &Path,
    beam: usize,
    labels: Option<&Path>,
    trace: Option<&Path>,
) -> Result<usize> {
    if beam == 0 {
        return Err(Error::Config("beam width must be at least 1".into()));
    }
    let expected = labels.map(|p| read(p).and_then(|t| LabelSet::parse(&t))).transpose()?;
    let model = checkpoint::load(checkpoint_path, expected.as_ref())?;
    let text = read(input)?;
    let mut traces: Vec<TraceStep> = Vec::new();
    let (body, count) = match &model {
        Model::Dep(parser) => {
            let sentences: Vec<Sentence> = parse_conllu_with(
                &text,
                ConlluOptions {
                    allow_missing_heads: true,
                    allow_multi_root: true,
                },
            )?
            .into_iter()
            .map(|s| s.sentence)
            .collect();
            let mut trees = Vec::with_capacity(sentences.len());
            if trace.is_some() {
                for s in &sentences {
                    let (t, p) = parser.parse(s, beam)?;
                    traces.extend(p.trace);
                    trees.push(t);
                }
            } else {
                trees = parser.parse_all(&sentences, beam)?;
            }
            (format_conllu(sentences.iter().zip(&trees).map(|(s, t)| (s, Some(t)))), sentences.len())
        }
        Model::Rst(parser) => {
            let inputs = rst_inputs(&text)?;
            let mut trees = Vec::with_capacity(inputs.len());
            for edus in &inputs {
                let p = parser.parse(edus)?;
                traces.extend(p.trace);
                trees.push(p.tree);
            }
            (format_rst_bracket(&trees), inputs.len())
        }
    };
    fs::write(output, body)?;
    if let Some(t) = trace {
        fs::write(t, format_trace(&traces))?;
    }
    Ok(count)
}

/// Scores printed by `eval` plus the bucketed CSV body.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub summary: Vec<(String, f64)>,
    pub csv: String,
}

impl EvalReport {
    pub fn text(&self) -> String {
        self.summary.iter().map(|(k, v)| format!("{k}\t{v:.2}\n")).collect()
    }
}

pub fn eval_dep(gold: &[(Sentence, DepTree)], pred: &[(Sentence, DepTree)], punct: &PunctPolicy, width: usize) -> Result<EvalReport> {
    if gold.len() != pred.len() {
        return Err(Error::Contract(format!(
            "gold has {} sentences, prediction has {}",
            gold.len(),
            pred.len()
        )));
    }
    let mut per = Vec::with_capacity(gold.len());
    let mut total = DepScore::default();
    for ((s, g), (_, p)) in gold.iter().zip(pred) {
        let sc = score_dep(s, g, p, punct)?;
        total.merge(&sc);
        per.push((s.len(), sc));
    }
    Ok(EvalReport {
        summary: vec![("UAS".into(), total.uas()), ("LAS".into(), total.las())],
        csv: bucket_csv(&bucket_scores(&per, width)?),
    })
}

pub fn eval_rst(gold: &[DiscTree], pred: &[DiscTree], include_root: bool, width: usize) -> Result<EvalReport> {
    if gold.len() != pred.len() {
        return Err(Error::Contract(format!(
            "gold has {} trees, prediction has {}",
            gold.len(),
            pred.len()
        )));
    }
    let mut per = Vec::with_capacity(gold.len());
    let mut total = ParsevalScore::default();
    for (g, p) in gold.iter().zip(pred) {
        let sc = score_parseval(g, p, include_root)?;
        total.merge(&sc);
        per.push((g.num_edus(), sc));
    }
    Ok(EvalReport {
        summary: vec![
            ("Span".into(), total.span.f1()),
            ("Nuclearity".into(), total.nuclearity.f1()),
            ("Relation".into(), total.relation.f1()),
        ],
        csv: bucket_csv(&bucket_scores(&per, width)?),
    })
}

pub struct EvalOptions {
    pub exclude_punct: bool,
    pub include_root: bool,
    pub bucket_width: usize,
}

pub fn cmd_eval(task: Task, gold: &Path, pred: &Path, opts: &EvalOptions) -> Result<EvalReport> {
    match task {
        Task::Dep => eval_dep(&read_dep(gold)?, &read_dep(pred)?, &punct_policy(opts.exclude_punct), opts.bucket_width),
        Task::Rst => eval_rst(&read_rst(gold)?, &read_rst(pred)?, opts.include_root, opts.bucket_width),
    }
}

pub struct GenOptions {
    pub count: usize,
    pub max_len: usize,
    pub vocab: usize,
    pub labels: usize,
}

/// Writes a synthetic corpus and returns its text.
pub fn cmd_gen_data(task: Task, seed: u64, opts: &GenOptions, output: &Path) -> Result<String> {
    let text = match task {
        Task::Dep => {
            let c = gen_synthetic_dep(seed, opts.count, opts.max_len, opts.vocab, opts.labels)?;
            format_conllu(c.iter().map(|(s, t)| (s, Some(t))))
        }
        Task::Rst => format_rst_bracket(&gen_synthetic_rst(seed, opts.count, opts.max_len, opts.labels)?),
    };
    if let Some(dir) = output.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(output, &text)?;
    Ok(text)
}
