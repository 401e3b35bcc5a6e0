//! Record types and the line-delimited JSON files that carry them between
//! pipeline stages.
//!
//! Every corpus file holds one JSON object per line. Loading validates each
//! record and reports failures with the 1-based line number; writing emits
//! fields in declaration order so a load/write cycle is byte-stable.

use std::collections::HashSet;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: {message}")]
    Invariant {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl CorpusError {
    /// Line number the error refers to, if any.
    pub fn line(&self) -> Option<usize> {
        match self {
            CorpusError::Io { .. } => None,
            CorpusError::Malformed { line, .. } | CorpusError::Invariant { line, .. } => {
                Some(*line)
            }
        }
    }
}

/// One of the four clause-type instruction styles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StyleId {
    Declarative,
    Interrogative,
    Exclamative,
    Imperative,
}

impl StyleId {
    pub const ALL: [StyleId; 4] = [
        StyleId::Declarative,
        StyleId::Interrogative,
        StyleId::Exclamative,
        StyleId::Imperative,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StyleId::Declarative => "declarative",
            StyleId::Interrogative => "interrogative",
            StyleId::Exclamative => "exclamative",
            StyleId::Imperative => "imperative",
        }
    }
}

impl fmt::Display for StyleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StyleId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StyleId::ALL
            .into_iter()
            .find(|style| style.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown style `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub question: String,
    #[serde(rename = "answer")]
    pub gold_answer: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodingStrategy {
    Greedy,
    Beam,
}

impl DecodingStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            DecodingStrategy::Greedy => "greedy",
            DecodingStrategy::Beam => "beam",
        }
    }
}

impl fmt::Display for DecodingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DecodingStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "greedy" => Ok(DecodingStrategy::Greedy),
            "beam" => Ok(DecodingStrategy::Beam),
            _ => Err(format!("unknown decoding strategy `{s}`")),
        }
    }
}

pub const DEFAULT_MAX_NEW_TOKENS: u32 = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingConfig {
    pub strategy: DecodingStrategy,
    pub temperature: f64,
    pub top_k: Option<u32>,
    pub top_p: Option<f64>,
    pub max_new_tokens: u32,
}

impl DecodingConfig {
    /// Deterministic decoding: always the most probable next token.
    pub fn greedy() -> Self {
        DecodingConfig {
            strategy: DecodingStrategy::Greedy,
            temperature: 0.0,
            top_k: None,
            top_p: None,
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
        }
    }

    /// Sampling parameters used for the "beam" runs.
    pub fn beam() -> Self {
        DecodingConfig {
            strategy: DecodingStrategy::Beam,
            temperature: 1.0,
            top_k: Some(50),
            top_p: Some(0.9),
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
        }
    }

    pub fn for_strategy(strategy: DecodingStrategy) -> Self {
        match strategy {
            DecodingStrategy::Greedy => Self::greedy(),
            DecodingStrategy::Beam => Self::beam(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.temperature >= 0.0) {
            return Err(format!("temperature must be >= 0, got {}", self.temperature));
        }
        if self.strategy == DecodingStrategy::Greedy && self.temperature != 0.0 {
            return Err("greedy decoding must record temperature 0.0".into());
        }
        if self.top_k == Some(0) {
            return Err("top_k must be positive".into());
        }
        if let Some(p) = self.top_p {
            if !(p > 0.0 && p <= 1.0) {
                return Err(format!("top_p must lie in (0, 1], got {p}"));
            }
        }
        if self.max_new_tokens == 0 {
            return Err("max_new_tokens must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub problem_id: String,
    pub style: StyleId,
    pub model: String,
    pub decoding: DecodingConfig,
    pub text: String,
    pub created_at: String,
    /// Set when every attempt to obtain a generation failed; `text` is then empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ResponseRecord {
    pub fn key(&self) -> (&str, StyleId, &str, DecodingStrategy) {
        (
            &self.problem_id,
            self.style,
            &self.model,
            self.decoding.strategy,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub problem_id: String,
    pub style: StyleId,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenAnnotation {
    pub text: String,
    pub pos: String,
    pub dep: String,
    pub head: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceAnnotation {
    pub text: String,
    pub start: usize,
    pub end: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tokens: Vec<TokenAnnotation>,
}

impl SentenceAnnotation {
    fn validate(&self) -> Result<(), String> {
        if self.start >= self.end {
            return Err(format!(
                "sentence span must satisfy start < end, got {}..{}",
                self.start, self.end
            ));
        }
        if self.tokens.is_empty() {
            return Ok(());
        }
        let n = self.tokens.len();
        let mut roots = 0;
        for (idx, tok) in self.tokens.iter().enumerate() {
            if tok.head >= n {
                return Err(format!(
                    "token {idx} (`{}`) has head {} outside 0..{n}",
                    tok.text, tok.head
                ));
            }
            if tok.pos.is_empty() || tok.dep.is_empty() {
                return Err(format!("token {idx} (`{}`) has an empty pos or dep", tok.text));
            }
            let is_root = tok.dep == "root";
            if is_root != (tok.head == idx) {
                return Err(format!(
                    "token {idx} (`{}`): only the root carries dep=\"root\" and head=self",
                    tok.text
                ));
            }
            roots += usize::from(is_root);
        }
        if roots != 1 {
            return Err(format!("sentence must have exactly one root token, found {roots}"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedDocument {
    pub problem_id: String,
    pub style: StyleId,
    pub sentences: Vec<SentenceAnnotation>,
}

impl AnnotatedDocument {
    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Whether every sentence carries token annotations.
    pub fn is_fully_annotated(&self) -> bool {
        self.sentences.iter().all(|s| !s.tokens.is_empty())
    }

    /// Dimension shared by the sentence embeddings, if any sentence has one.
    pub fn embedding_dim(&self) -> Option<usize> {
        self.sentences
            .iter()
            .find_map(|s| s.embedding.as_ref().map(Vec::len))
    }

    pub fn validate(&self) -> Result<(), String> {
        let mut prev_end = 0usize;
        let mut dim: Option<usize> = None;
        for (idx, sentence) in self.sentences.iter().enumerate() {
            sentence
                .validate()
                .map_err(|e| format!("sentence {idx}: {e}"))?;
            if idx > 0 && sentence.start < prev_end {
                return Err(format!(
                    "sentence {idx}: span {}..{} overlaps or precedes the previous sentence",
                    sentence.start, sentence.end
                ));
            }
            prev_end = sentence.end;
            if let Some(e) = &sentence.embedding {
                match dim {
                    None => dim = Some(e.len()),
                    Some(d) if d != e.len() => {
                        return Err(format!(
                            "sentence {idx}: embedding dimension {} differs from {d}",
                            e.len()
                        ))
                    }
                    Some(_) => {}
                }
            }
        }
        Ok(())
    }
}

/// Optional first line of an annotation file identifying the producing pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationHeader {
    pub header: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCell {
    pub model: String,
    pub benchmark: String,
    pub style: StyleId,
    /// Percent in [0, 100], stored at full precision.
    pub accuracy: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrsRow {
    pub model: String,
    pub benchmark: String,
    pub crs_struct: f64,
    pub crs_lex: f64,
    pub crs_coh: f64,
    pub crs_overall: f64,
    pub n_problems: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordKind {
    Problems,
    Prompts,
    Responses,
    Annotations,
    AccuracyCells,
    CrsRows,
}

impl RecordKind {
    pub const ALL: [RecordKind; 6] = [
        RecordKind::Problems,
        RecordKind::Prompts,
        RecordKind::Responses,
        RecordKind::Annotations,
        RecordKind::AccuracyCells,
        RecordKind::CrsRows,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RecordKind::Problems => "problems",
            RecordKind::Prompts => "prompts",
            RecordKind::Responses => "responses",
            RecordKind::Annotations => "annotations",
            RecordKind::AccuracyCells => "accuracy_cells",
            RecordKind::CrsRows => "crs_rows",
        }
    }
}

impl FromStr for RecordKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.replace('-', "_");
        RecordKind::ALL
            .into_iter()
            .find(|k| k.as_str() == wanted)
            .ok_or_else(|| format!("unknown record kind `{s}`"))
    }
}

/// A record type that lives in a corpus file.
pub trait Record: Serialize + DeserializeOwned {
    const KIND: RecordKind;

    /// Per-record invariants.
    fn check(&self) -> Result<(), String> {
        Ok(())
    }

    /// Uniqueness key within one file, for kinds that have one.
    fn unique_key(&self) -> Option<String> {
        None
    }
}

impl Record for Problem {
    const KIND: RecordKind = RecordKind::Problems;

    fn check(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("field `id` must be non-empty".into());
        }
        if self.question.is_empty() {
            return Err("field `question` must be non-empty".into());
        }
        Ok(())
    }

    fn unique_key(&self) -> Option<String> {
        Some(self.id.clone())
    }
}

impl Record for PromptRecord {
    const KIND: RecordKind = RecordKind::Prompts;

    fn unique_key(&self) -> Option<String> {
        Some(format!("{}\u{1f}{}", self.problem_id, self.style))
    }
}

impl Record for ResponseRecord {
    const KIND: RecordKind = RecordKind::Responses;

    fn check(&self) -> Result<(), String> {
        if self.problem_id.is_empty() {
            return Err("field `problem_id` must be non-empty".into());
        }
        self.decoding.validate().map_err(|e| format!("decoding: {e}"))
    }

    fn unique_key(&self) -> Option<String> {
        let (p, s, m, d) = self.key();
        Some(format!("{p}\u{1f}{s}\u{1f}{m}\u{1f}{d}"))
    }
}

impl Record for AnnotatedDocument {
    const KIND: RecordKind = RecordKind::Annotations;

    fn check(&self) -> Result<(), String> {
        self.validate()
    }
}

impl Record for AccuracyCell {
    const KIND: RecordKind = RecordKind::AccuracyCells;

    fn check(&self) -> Result<(), String> {
        if !(0.0..=100.0).contains(&self.accuracy) {
            return Err(format!("accuracy {} outside [0, 100]", self.accuracy));
        }
        Ok(())
    }

    fn unique_key(&self) -> Option<String> {
        Some(format!("{}\u{1f}{}\u{1f}{}", self.model, self.benchmark, self.style))
    }
}

impl Record for CrsRow {
    const KIND: RecordKind = RecordKind::CrsRows;

    fn check(&self) -> Result<(), String> {
        for (name, v) in [
            ("crs_struct", self.crs_struct),
            ("crs_lex", self.crs_lex),
            ("crs_coh", self.crs_coh),
            ("crs_overall", self.crs_overall),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} = {v} outside [0, 1]"));
            }
        }
        Ok(())
    }

    fn unique_key(&self) -> Option<String> {
        Some(format!("{}\u{1f}{}", self.model, self.benchmark))
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads every record of type `T` from `path`, in file order.
///
/// Blank lines are ignored. For annotation files a leading `{"header": ...}`
/// line is accepted and skipped; use [`load_annotations`] to keep it.
pub fn load_records<T: Record>(path: impl AsRef<Path>) -> Result<Vec<T>, CorpusError> {
    load_with_header(path.as_ref()).map(|(_, records)| records)
}

/// Loads an annotation file along with its optional pipeline header.
pub fn load_annotations(
    path: impl AsRef<Path>,
) -> Result<(Option<AnnotationHeader>, Vec<AnnotatedDocument>), CorpusError> {
    load_with_header(path.as_ref())
}

fn load_with_header<T: Record>(
    path: &Path,
) -> Result<(Option<AnnotationHeader>, Vec<T>), CorpusError> {
    let file = File::open(path).map_err(io_err(path))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    let mut header = None;
    let mut seen = HashSet::new();
    let mut dim: Option<usize> = None;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        if T::KIND == RecordKind::Annotations && records.is_empty() && header.is_none() {
            if let Ok(h) = serde_json::from_str::<AnnotationHeader>(&line) {
                header = Some(h);
                continue;
            }
        }
        let record: T = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            path: path.to_path_buf(),
            line: line_no,
            message: strip_position(&e),
        })?;
        let invariant = |message: String| CorpusError::Invariant {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        record.check().map_err(invariant)?;
        if let Some(key) = record.unique_key() {
            if !seen.insert(key.clone()) {
                return Err(invariant(format!(
                    "duplicate key {}",
                    key.replace('\u{1f}', "/")
                )));
            }
        }
        if T::KIND == RecordKind::Annotations {
            // Embedding dimension is fixed per file; check it through the JSON
            // value since T is generic here.
            if let Some(d) = annotation_dim(&line) {
                match dim {
                    None => dim = Some(d),
                    Some(prev) if prev != d => {
                        return Err(invariant(format!(
                            "embedding dimension {d} differs from {prev} used earlier in the file"
                        )))
                    }
                    Some(_) => {}
                }
            }
        }
        records.push(record);
    }
    Ok((header, records))
}

fn annotation_dim(line: &str) -> Option<usize> {
    let doc: AnnotatedDocument = serde_json::from_str(line).ok()?;
    doc.embedding_dim()
}

fn strip_position(e: &serde_json::Error) -> String {
    // serde_json appends " at line 1 column N"; the file line is reported separately.
    let msg = e.to_string();
    match msg.rfind(" at line ") {
        Some(pos) => format!("{} (column {})", &msg[..pos], e.column()),
        None => msg,
    }
}

/// Writes one JSON object per line, creating parent directories as needed.
pub fn write_records<T: Serialize>(records: &[T], path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(path))?;
    }
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for record in records {
        let line = serde_json::to_string(record).expect("corpus records always serialize");
        out.write_all(line.as_bytes()).map_err(io_err(path))?;
        out.write_all(b"\n").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

/// Schema-checks a file of the given kind and returns its record count.
pub fn validate_file(path: impl AsRef<Path>, kind: RecordKind) -> Result<usize, CorpusError> {
    let path = path.as_ref();
    match kind {
        RecordKind::Problems => load_records::<Problem>(path).map(|r| r.len()),
        RecordKind::Prompts => load_records::<PromptRecord>(path).map(|r| r.len()),
        RecordKind::Responses => load_records::<ResponseRecord>(path).map(|r| r.len()),
        RecordKind::Annotations => load_records::<AnnotatedDocument>(path).map(|r| r.len()),
        RecordKind::AccuracyCells => load_records::<AccuracyCell>(path).map(|r| r.len()),
        RecordKind::CrsRows => load_records::<CrsRow>(path).map(|r| r.len()),
    }
}
