use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rayon::prelude::*;
use serde::Serialize;

use rcscore::corpus::{
    load_annotations, load_records, validate_file, write_records, AccuracyCell, AnnotatedDocument, CrsRow,
    DecodingStrategy, Problem, PromptRecord, ResponseRecord, StyleId,
};
use rcscore::evaluation::{accuracy_by_style, round_one_decimal, ssi, EvalError, SsiInput};
use rcscore::score::{document_from_text, ScoreError, StyleResponseSet};
use rcscore::stats::{correlate_report_with, PValueMode};
use rcscore::stylegen::build_prompts;
use rcscore::{aggregate_crs, crs_for_problem, rcscore};
use rcscore_collector::collect;

use crate::config::{DecodingOverrides, RunConfig};
use crate::{Command, GlobalArgs};

/// Bad or missing arguments; reported with exit status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Flags merged over the configuration file.
struct Settings<'a> {
    flags: &'a GlobalArgs,
    config: RunConfig,
}

impl Settings<'_> {
    fn path(&self, flag: &Option<PathBuf>, config: &Option<PathBuf>, name: &str) -> anyhow::Result<PathBuf> {
        flag.clone()
            .or_else(|| config.clone())
            .ok_or_else(|| usage(format!("--{name} is required")))
    }

    fn problems(&self) -> anyhow::Result<PathBuf> {
        self.path(&self.flags.problems, &self.config.problems, "problems")
    }

    fn prompts(&self) -> anyhow::Result<PathBuf> {
        self.path(&self.flags.prompts, &self.config.prompts, "prompts")
    }

    fn responses(&self) -> anyhow::Result<PathBuf> {
        self.path(&self.flags.responses, &self.config.responses, "responses")
    }

    fn accuracy(&self) -> anyhow::Result<PathBuf> {
        self.path(&self.flags.accuracy, &self.config.accuracy, "accuracy")
    }

    fn crs(&self) -> anyhow::Result<PathBuf> {
        self.path(&self.flags.crs, &self.config.crs, "crs")
    }

    fn annotations(&self) -> Option<PathBuf> {
        self.flags.annotations.clone().or_else(|| self.config.annotations.clone())
    }

    fn out(&self) -> Option<PathBuf> {
        self.flags.out.clone().or_else(|| self.config.out.clone())
    }

    fn model(&self) -> Option<String> {
        self.flags.model.clone().or_else(|| self.config.model.clone())
    }

    fn benchmark(&self) -> anyhow::Result<String> {
        self.flags
            .benchmark
            .clone()
            .or_else(|| self.config.benchmark.clone())
            .ok_or_else(|| usage("--benchmark is required"))
    }

    fn styles(&self) -> anyhow::Result<Vec<StyleId>> {
        match self.flags.style.as_deref() {
            None | Some("all") => Ok(StyleId::ALL.to_vec()),
            Some(name) => Ok(vec![name.parse::<StyleId>().map_err(usage)?]),
        }
    }

    fn strategy(&self) -> Option<DecodingStrategy> {
        self.flags
            .decoding
            .or_else(|| self.config.decoding.as_ref().map(|d| d.strategy))
    }
}

pub fn run(flags: &GlobalArgs, command: &Command) -> anyhow::Result<()> {
    let config = match &flags.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let s = Settings { flags, config };
    match command {
        Command::Prompts => prompts(&s),
        Command::Collect { resume } => collect_cmd(&s, *resume),
        Command::Score { a, b } => score(&s, a, b),
        Command::Crs => crs(&s),
        Command::Accuracy { answer_match } => accuracy(&s, answer_match.map(Into::into)),
        Command::Ssi { round_accuracy } => ssi_grid(&s, *round_accuracy),
        Command::Correlate {
            label,
            permutations,
            seed,
        } => correlate(&s, label.as_deref(), *permutations, *seed),
        Command::Validate { kind, path } => {
            let n = validate_file(path, *kind)?;
            println!("{}: {n} {} records ok", path.display(), kind.as_str());
            Ok(())
        }
    }
}

fn emit_records<T: Serialize>(records: &[T], out: Option<PathBuf>) -> anyhow::Result<()> {
    match out {
        Some(path) => Ok(write_records(records, path)?),
        None => {
            let mut text = String::new();
            for r in records {
                text.push_str(&serde_json::to_string(r)?);
                text.push('\n');
            }
            emit_text(&text, None)
        }
    }
}

fn emit_text(text: &str, out: Option<PathBuf>) -> anyhow::Result<()> {
    match out {
        Some(path) => std::fs::write(&path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(stdout.flush()?)
        }
    }
}

fn prompts(s: &Settings) -> anyhow::Result<()> {
    let styles = s.styles()?;
    let problems: Vec<Problem> = load_records(s.problems()?)?;
    let prompts: Vec<PromptRecord> = build_prompts(&problems)
        .into_iter()
        .filter(|p| styles.contains(&p.style))
        .collect();
    log::info!("{} prompts for {} problems", prompts.len(), problems.len());
    emit_records(&prompts, s.out())
}

fn collect_cmd(s: &Settings, resume: bool) -> anyhow::Result<()> {
    let f = s.flags;
    let mut endpoint = s.config.endpoint.clone();
    if let Some(url) = &f.endpoint {
        endpoint.base_url = url.clone();
    }
    if let Some(model) = s.model() {
        endpoint.model = model;
    }
    if let Some(var) = &f.api_key_env {
        endpoint.api_key_env = var.clone();
    }
    endpoint.dry_run |= f.dry_run;

    let overrides = DecodingOverrides {
        strategy: f.decoding,
        temperature: f.temperature,
        top_k: f.top_k,
        top_p: f.top_p,
        max_new_tokens: f.max_new_tokens,
    };
    let decoding = overrides.resolve(s.config.decoding.as_ref()).map_err(usage)?;
    let out = s
        .out()
        .or_else(|| f.responses.clone())
        .or_else(|| s.config.responses.clone())
        .ok_or_else(|| usage("--out is required"))?;
    let styles = s.styles()?;
    let prompts: Vec<PromptRecord> = load_records::<PromptRecord>(s.prompts()?)?
        .into_iter()
        .filter(|p| styles.contains(&p.style))
        .collect();
    let concurrency = f.concurrency.or(s.config.concurrency).unwrap_or(4);

    let summary = collect(&prompts, &endpoint, &decoding, &out, concurrency, resume)?;
    eprintln!(
        "{}: {} requested, {} skipped, {} failed",
        out.display(),
        summary.requested,
        summary.skipped,
        summary.failed
    );
    Ok(())
}

/// A single document as a JSON object, or an annotation file holding exactly one.
fn load_document(path: &Path) -> anyhow::Result<AnnotatedDocument> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(doc) = serde_json::from_str::<AnnotatedDocument>(&text) {
        doc.validate().map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        return Ok(doc);
    }
    let (_, mut docs) = load_annotations(path)?;
    match docs.len() {
        1 => Ok(docs.remove(0)),
        n => Err(usage(format!("{}: expected one document, found {n}", path.display()))),
    }
}

fn score(s: &Settings, a: &Path, b: &Path) -> anyhow::Result<()> {
    let (doc_a, doc_b) = (load_document(a)?, load_document(b)?);
    let v = rcscore(&doc_a, &doc_b, &s.config.metrics)?;
    if v.flags.any() {
        log::warn!("degenerate input: {:?}", v.flags);
    }
    println!(
        "{:.3} {:.3} {:.3} {:.3}",
        v.structurality, v.lexicality, v.coherence, v.overall
    );
    Ok(())
}

/// Responses restricted to one model (when given) and one decoding strategy.
fn select_responses(s: &Settings) -> anyhow::Result<Vec<ResponseRecord>> {
    let styles = s.styles()?;
    let model = s.model();
    let mut records: Vec<ResponseRecord> = load_records::<ResponseRecord>(s.responses()?)?
        .into_iter()
        .filter(|r| styles.contains(&r.style))
        .filter(|r| model.as_ref().is_none_or(|m| &r.model == m))
        .collect();
    match s.strategy() {
        Some(strategy) => records.retain(|r| r.decoding.strategy == strategy),
        None => {
            let seen: BTreeSet<&str> = records.iter().map(|r| r.decoding.strategy.as_str()).collect();
            if seen.len() > 1 {
                return Err(usage(format!(
                    "responses mix decoding strategies ({}); pick one with --decoding",
                    seen.into_iter().collect::<Vec<_>>().join(", ")
                )));
            }
        }
    }
    Ok(records)
}

fn models(records: &[ResponseRecord]) -> Vec<String> {
    let set: BTreeSet<&str> = records.iter().map(|r| r.model.as_str()).collect();
    set.into_iter().map(str::to_owned).collect()
}

fn crs(s: &Settings) -> anyhow::Result<()> {
    let benchmark = s.benchmark()?;
    let records = select_responses(s)?;
    let annotations: HashMap<(String, StyleId), AnnotatedDocument> = match s.annotations() {
        Some(path) => load_annotations(path)?
            .1
            .into_iter()
            .map(|d| ((d.problem_id.clone(), d.style), d))
            .collect(),
        None => HashMap::new(),
    };
    let configs = &s.config.metrics;

    let mut rows: Vec<CrsRow> = Vec::new();
    for model in models(&records) {
        let mut sets: BTreeMap<&str, StyleResponseSet> = BTreeMap::new();
        let mut unannotated = 0usize;
        for r in records.iter().filter(|r| r.model == model) {
            let doc = match annotations.get(&(r.problem_id.clone(), r.style)) {
                Some(d) => d.clone(),
                None => {
                    if !r.text.trim().is_empty() {
                        unannotated += 1;
                    }
                    document_from_text(&r.problem_id, r.style, &r.text)
                }
            };
            sets.entry(&r.problem_id)
                .or_insert_with(|| StyleResponseSet::new(r.problem_id.clone()))
                .insert(doc);
        }
        if unannotated > 0 {
            log::warn!("{model}: {unannotated} responses have no annotation; structurality is 0 for them");
        }

        let sets: Vec<StyleResponseSet> = sets.into_values().collect();
        let results: Vec<Result<_, ScoreError>> = sets.par_iter().map(|set| crs_for_problem(set, configs)).collect();
        let mut per_problem = Vec::with_capacity(results.len());
        for result in results {
            match result {
                Ok(v) => per_problem.push(v),
                Err(ScoreError::TooFewResponses { problem_id, usable }) => {
                    log::warn!("{model}: skipping {problem_id}: only {usable} usable responses")
                }
                Err(e) => return Err(e.into()),
            }
        }
        match aggregate_crs(&per_problem) {
            Ok(v) => rows.push(v.to_row(&model, &benchmark, per_problem.len())),
            Err(_) => log::warn!("{model}: no problem has two usable responses"),
        }
    }
    emit_records(&rows, s.out())
}

fn accuracy(s: &Settings, mode: Option<rcscore::evaluation::AnswerMatch>) -> anyhow::Result<()> {
    let benchmark = s.benchmark()?;
    let problems: Vec<Problem> = load_records(s.problems()?)?;
    let records = select_responses(s)?;
    let mode = mode.unwrap_or(s.config.answer_match);
    let mut cells = Vec::new();
    for model in models(&records) {
        cells.extend(accuracy_by_style(&records, &problems, &model, &benchmark, mode)?);
    }
    emit_records(&cells, s.out())
}

/// First-appearance order of a key in the cells.
fn ordered<'a>(keys: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut out: Vec<&str> = Vec::new();
    for k in keys {
        if !out.contains(&k) {
            out.push(k);
        }
    }
    out
}

fn ssi_grid(s: &Settings, round: bool) -> anyhow::Result<()> {
    let mut cells: Vec<AccuracyCell> = load_records(s.accuracy()?)?;
    if round {
        for c in &mut cells {
            c.accuracy = round_one_decimal(c.accuracy);
        }
    }
    let models = ordered(cells.iter().map(|c| c.model.as_str()));
    let benchmarks = ordered(cells.iter().map(|c| c.benchmark.as_str()));

    let mut csv = String::from("model");
    for b in &benchmarks {
        csv.push(',');
        csv.push_str(b);
    }
    csv.push('\n');
    for m in &models {
        csv.push_str(m);
        for b in &benchmarks {
            let input = SsiInput::from_cells(cells.iter().filter(|c| c.model == *m && c.benchmark == *b));
            let value = match input.map(|i| ssi(&i)) {
                Some(Ok(v)) => format!("{v:.2}"),
                Some(Err(EvalError::ZeroMean)) => {
                    log::warn!("{m}/{b}: every style scored 0, SSI undefined");
                    "NA".into()
                }
                Some(Err(e)) => return Err(anyhow::anyhow!("{m}/{b}: {e}")),
                None => "NA".into(),
            };
            let _ = write!(csv, ",{value}");
        }
        csv.push('\n');
    }
    emit_text(&csv, s.out())
}

fn correlate(s: &Settings, label: Option<&str>, permutations: usize, seed: u64) -> anyhow::Result<()> {
    let rows: Vec<CrsRow> = load_records(s.crs()?)?;
    let cells: Vec<AccuracyCell> = load_records(s.accuracy()?)?;
    let label = label
        .map(str::to_owned)
        .or_else(|| s.strategy().map(|d| d.as_str().to_owned()))
        .unwrap_or_else(|| "report".into());
    let mode = match permutations {
        0 => PValueMode::TTest,
        n => PValueMode::Permutation {
            n_permutations: n,
            seed,
        },
    };
    let report = correlate_report_with(&rows, &cells, &label, mode)?;
    emit_text(&report.to_csv(), s.out())
}
