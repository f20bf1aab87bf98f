//! Canonical data model for instruction–trajectory datasets, plus
//! tokenization, sentence splitting, JSON I/O, and seeded subsetting.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Characters split off the end of a whitespace run as standalone tokens.
pub const PUNCTUATION: [char; 5] = ['.', '|', '!', '?', ','];

/// Language tag of an instruction. Decides the sentence separator:
/// `|` for Hindi, `.` for everything else.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Language {
    #[default]
    #[serde(rename = "en-us")]
    EnUs,
    #[serde(rename = "en-in")]
    EnIn,
    #[serde(rename = "hi")]
    Hi,
    #[serde(rename = "te")]
    Te,
}

impl Language {
    pub fn sentence_separator(self) -> char {
        match self {
            Language::Hi => '|',
            _ => '.',
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Language::EnUs => "en-us",
            Language::EnIn => "en-in",
            Language::Hi => "hi",
            Language::Te => "te",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "en-us" => Some(Language::EnUs),
            "en-in" => Some(Language::EnIn),
            "hi" => Some(Language::Hi),
            "te" => Some(Language::Te),
            _ => None,
        }
    }
}

/// One language annotation of a trajectory. `text` may be empty (the
/// empty-language ablation writes ""). `source` tags machine annotations
/// (e.g. "uo", "mismatch") and is omitted from files when unset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instruction {
    pub text: String,
    #[serde(default)]
    pub language: Language,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl Instruction {
    pub fn new(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            language: Language::default(),
            source: None,
        }
    }

    pub fn with_language(text: impl Into<String>, language: Language) -> Self {
        Self {
            text: text.into(),
            language,
            source: None,
        }
    }
}

/// One trajectory (scan + ordered viewpoint path) with its annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub path_id: String,
    pub scan: String,
    pub path: Vec<String>,
    pub instructions: Vec<Instruction>,
}

/// An ordered collection of samples plus free-form provenance metadata
/// (seed, transform history, run manifest entries).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Self {
        Self {
            metadata: BTreeMap::new(),
            samples,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Replaces the `transform.*` keys with the latest transform and appends
    /// a compact entry to the running `history` value.
    pub fn record_transform(&mut self, name: &str, params: &[(&str, String)]) {
        let stale: Vec<String> = self
            .metadata
            .keys()
            .filter(|k| *k == "transform" || k.starts_with("transform."))
            .cloned()
            .collect();
        for key in stale {
            self.metadata.remove(&key);
        }
        self.metadata.insert("transform".into(), name.into());
        let mut rendered = Vec::new();
        for (key, value) in params {
            self.metadata
                .insert(format!("transform.{key}"), value.clone());
            rendered.push(format!("{key}={value}"));
        }
        let entry = format!("{name}({})", rendered.join(","));
        let history = match self.metadata.get("history") {
            Some(prev) => format!("{prev};{entry}"),
            None => entry,
        };
        self.metadata.insert("history".into(), history);
    }
}

/// An instruction split into whitespace tokens and sentences.
///
/// Tokens never contain whitespace; terminal punctuation is split off as its
/// own token; the separator token stays as the final token of its sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizedInstruction {
    pub sentences: Vec<Vec<String>>,
    pub separator: String,
}

impl TokenizedInstruction {
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.sentences.iter().flatten().map(String::as_str)
    }

    pub fn word_count(&self) -> usize {
        self.tokens().filter(|t| !is_punctuation_token(t)).count()
    }
}

pub fn is_punctuation_token(token: &str) -> bool {
    let mut chars = token.chars();
    matches!((chars.next(), chars.next()), (Some(c), None) if PUNCTUATION.contains(&c))
}

/// Whole-word tokenization: split on whitespace, peel terminal punctuation
/// off each run, then split sentences on the language separator. The
/// separator token ends its sentence; a trailing run of tokens without a
/// separator forms the final sentence; empty text gives zero sentences.
pub fn tokenize(text: &str, language: Language) -> TokenizedInstruction {
    let separator = language.sentence_separator();
    let mut tokens: Vec<String> = Vec::new();
    for run in text.split_whitespace() {
        let mut word = run;
        let mut trailing: Vec<char> = Vec::new();
        while let Some(c) = word.chars().next_back() {
            if PUNCTUATION.contains(&c) {
                word = &word[..word.len() - c.len_utf8()];
                trailing.push(c);
            } else {
                break;
            }
        }
        if !word.is_empty() {
            tokens.push(word.to_string());
        }
        for c in trailing.into_iter().rev() {
            tokens.push(c.to_string());
        }
    }

    let mut sentences: Vec<Vec<String>> = Vec::new();
    let mut current: Vec<String> = Vec::new();
    for token in tokens {
        let is_separator = token.chars().eq(std::iter::once(separator));
        current.push(token);
        if is_separator {
            sentences.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        sentences.push(current);
    }

    TokenizedInstruction {
        sentences,
        separator: separator.to_string(),
    }
}

/// Inverse of [`tokenize`] up to whitespace normalization: every token
/// joined by a single space.
pub fn detokenize(t: &TokenizedInstruction) -> String {
    t.tokens().collect::<Vec<&str>>().join(" ")
}

fn field_err(path_id: &str, field: &'static str, message: impl ToString) -> Error {
    Error::Record {
        path_id: path_id.to_string(),
        field,
        message: message.to_string(),
    }
}

fn as_str<'v>(value: &'v serde_json::Value, path_id: &str, field: &'static str) -> Result<&'v str> {
    value
        .as_str()
        .ok_or_else(|| field_err(path_id, field, "expected a string"))
}

fn instruction_from_value(value: &serde_json::Value, path_id: &str) -> Result<Instruction> {
    match value {
        // R2R compatibility: plain strings are promoted to en-us instructions.
        serde_json::Value::String(text) => Ok(Instruction::new(text.clone())),
        serde_json::Value::Object(map) => {
            let text = map
                .get("text")
                .ok_or_else(|| field_err(path_id, "instructions", "missing `text`"))?;
            let text = as_str(text, path_id, "instructions")?.to_string();
            let language = match map.get("language") {
                None => Language::default(),
                Some(tag) => {
                    let tag = as_str(tag, path_id, "language")?;
                    Language::from_tag(tag).ok_or_else(|| {
                        field_err(path_id, "language", format!("unknown tag `{tag}`"))
                    })?
                }
            };
            let source = match map.get("source") {
                None | Some(serde_json::Value::Null) => None,
                Some(v) => Some(as_str(v, path_id, "source")?.to_string()),
            };
            Ok(Instruction {
                text,
                language,
                source,
            })
        }
        other => Err(field_err(
            path_id,
            "instructions",
            format!("expected string or object, got {other}"),
        )),
    }
}

fn sample_from_value(value: &serde_json::Value, index: usize) -> Result<Sample> {
    let map = value
        .as_object()
        .ok_or_else(|| field_err(&format!("#{index}"), "sample", "expected a JSON object"))?;
    let path_id = map
        .get("path_id")
        .and_then(|v| v.as_str())
        .ok_or_else(|| field_err(&format!("#{index}"), "path_id", "missing or not a string"))?
        .to_string();
    let scan = as_str(
        map.get("scan")
            .ok_or_else(|| field_err(&path_id, "scan", "missing"))?,
        &path_id,
        "scan",
    )?
    .to_string();
    let path_value = map
        .get("path")
        .ok_or_else(|| field_err(&path_id, "path", "missing"))?;
    let raw_path = path_value
        .as_array()
        .ok_or_else(|| field_err(&path_id, "path", "expected an array"))?;
    let mut path = Vec::with_capacity(raw_path.len());
    for vp in raw_path {
        path.push(as_str(vp, &path_id, "path")?.to_string());
    }
    if path.len() < 2 {
        return Err(field_err(&path_id, "path", "fewer than 2 viewpoints"));
    }
    let mut instructions = Vec::new();
    if let Some(value) = map.get("instructions") {
        let raw = value
            .as_array()
            .ok_or_else(|| field_err(&path_id, "instructions", "expected an array"))?;
        for instr in raw {
            instructions.push(instruction_from_value(instr, &path_id)?);
        }
    }
    Ok(Sample {
        path_id,
        scan,
        path,
        instructions,
    })
}

/// Loads a dataset file. Accepts either the saved object form
/// `{"metadata": {...}, "samples": [...]}` or an R2R-style bare array of
/// sample records.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&raw).map_err(|e| Error::parse(path, e))?;

    let (metadata, records) = match &value {
        serde_json::Value::Array(records) => (BTreeMap::new(), records.as_slice()),
        serde_json::Value::Object(map) => {
            let mut metadata = BTreeMap::new();
            if let Some(meta) = map.get("metadata") {
                let meta = meta
                    .as_object()
                    .ok_or_else(|| Error::parse(path, "`metadata` must be an object"))?;
                for (k, v) in meta {
                    let rendered = match v {
                        serde_json::Value::String(s) => s.clone(),
                        other => other.to_string(),
                    };
                    metadata.insert(k.clone(), rendered);
                }
            }
            let records = map
                .get("samples")
                .and_then(|v| v.as_array())
                .ok_or_else(|| Error::parse(path, "missing `samples` array"))?;
            (metadata, records.as_slice())
        }
        _ => return Err(Error::parse(path, "expected an array or object document")),
    };

    let mut samples = Vec::with_capacity(records.len());
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for (index, record) in records.iter().enumerate() {
        let sample = sample_from_value(record, index)?;
        if !seen.insert(sample.path_id.clone()) {
            return Err(Error::DuplicatePathId(sample.path_id));
        }
        samples.push(sample);
    }
    Ok(Dataset { metadata, samples })
}

/// Saves a dataset as pretty JSON with instruction text normalized to NFC.
/// Sample order and metadata round-trip through [`load_dataset`].
pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut normalized = dataset.clone();
    for sample in &mut normalized.samples {
        for instruction in &mut sample.instructions {
            instruction.text = instruction.text.nfc().collect();
        }
    }
    let body = serde_json::to_string_pretty(&normalized).map_err(|e| Error::parse(path, e))?;
    std::fs::write(path, body + "\n").map_err(|e| Error::io(path, e))
}

/// Uniform subset of `n` samples without replacement, preserving the
/// original relative order. Selection is the Fisher–Yates prefix of the
/// reference PRNG seeded with `seed`.
pub fn subsample(dataset: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    if n > dataset.samples.len() {
        return Err(Error::SubsampleTooLarge {
            requested: n,
            available: dataset.samples.len(),
        });
    }
    let mut rng = SplitMix64::new(seed);
    let chosen = rng.choose_prefix(dataset.samples.len(), n);
    let samples = chosen
        .into_iter()
        .map(|i| dataset.samples[i].clone())
        .collect();
    let mut out = Dataset {
        metadata: dataset.metadata.clone(),
        samples,
    };
    out.record_transform(
        "subsample",
        &[("n", n.to_string()), ("seed", seed.to_string())],
    );
    Ok(out)
}
