//! Instruction corruption transforms: word/sentence shuffles, block and
//! random trajectory mismatching, and the empty-language ablation.
//!
//! Dataset-level transforms derive one seed per (path_id, instruction index)
//! so results never depend on iteration or thread order.

use rayon::prelude::*;

use crate::corpus::{detokenize, is_punctuation_token, tokenize, Dataset, TokenizedInstruction};
use crate::error::{Error, Result};
use crate::rng::{mix_index, mix_str, round_half_up, SplitMix64};

/// The four shuffle severities, mildest to harshest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShuffleMode {
    /// Shuffle words within each sentence, keep sentence order.
    SfWord,
    /// Shuffle sentence order (never the identity), keep words in place.
    SfSent,
    /// Both of the above, with independently derived seeds.
    SfWordSent,
    /// Drop punctuation, shuffle every remaining word, append one period.
    SfAll,
}

impl ShuffleMode {
    pub fn name(self) -> &'static str {
        match self {
            ShuffleMode::SfWord => "sf-word",
            ShuffleMode::SfSent => "sf-sent",
            ShuffleMode::SfWordSent => "sf-word-sent",
            ShuffleMode::SfAll => "sf-all",
        }
    }
}

/// How instructions are reassigned to wrong trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MismatchMode {
    /// Whole annotation blocks move under a derangement of samples.
    Block,
    /// The global instruction pool is permuted; per-sample counts are kept.
    Random,
}

impl MismatchMode {
    pub fn name(self) -> &'static str {
        match self {
            MismatchMode::Block => "block",
            MismatchMode::Random => "random",
        }
    }
}

fn shuffle_words(t: &TokenizedInstruction, seed: u64) -> TokenizedInstruction {
    let mut rng = SplitMix64::new(seed);
    let sentences = t
        .sentences
        .iter()
        .map(|sentence| {
            let mut out = sentence.clone();
            // The sentence-final punctuation token stays put.
            let movable = match out.last() {
                Some(last) if is_punctuation_token(last) => out.len() - 1,
                _ => out.len(),
            };
            rng.shuffle(&mut out[..movable]);
            out
        })
        .collect();
    TokenizedInstruction {
        sentences,
        separator: t.separator.clone(),
    }
}

fn shuffle_sentences(t: &TokenizedInstruction, seed: u64) -> TokenizedInstruction {
    let n = t.sentences.len();
    if n < 2 {
        return t.clone();
    }
    let mut rng = SplitMix64::new(seed);
    // Uniform over non-identity permutations by rejection.
    let order = loop {
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);
        if order.iter().enumerate().any(|(i, &j)| i != j) {
            break order;
        }
    };
    TokenizedInstruction {
        sentences: order.into_iter().map(|i| t.sentences[i].clone()).collect(),
        separator: t.separator.clone(),
    }
}

fn shuffle_all(t: &TokenizedInstruction, seed: u64) -> TokenizedInstruction {
    if t.sentences.is_empty() {
        return t.clone();
    }
    let mut words: Vec<String> = t
        .tokens()
        .filter(|tok| !is_punctuation_token(tok))
        .map(String::from)
        .collect();
    let mut rng = SplitMix64::new(seed);
    rng.shuffle(&mut words);
    words.push(".".to_string());
    TokenizedInstruction {
        sentences: vec![words],
        separator: t.separator.clone(),
    }
}

/// Applies one shuffle mode. Deterministic in (input, mode, seed); the
/// word and sentence stages of `SfWordSent` use seeds derived from the
/// master seed so neither stage perturbs the other.
pub fn shuffle_instruction(
    t: &TokenizedInstruction,
    mode: ShuffleMode,
    seed: u64,
) -> TokenizedInstruction {
    match mode {
        ShuffleMode::SfWord => shuffle_words(t, mix_str(seed, "sf-word")),
        ShuffleMode::SfSent => shuffle_sentences(t, mix_str(seed, "sf-sent")),
        ShuffleMode::SfWordSent => {
            let worded = shuffle_words(t, mix_str(seed, "sf-word"));
            shuffle_sentences(&worded, mix_str(seed, "sf-sent"))
        }
        ShuffleMode::SfAll => shuffle_all(t, mix_str(seed, "sf-all")),
    }
}

/// Shuffles every instruction in the dataset independently. Trajectories
/// are untouched; instructions whose tokenization is unchanged keep their
/// original text byte for byte.
pub fn shuffle_dataset(dataset: &Dataset, mode: ShuffleMode, seed: u64) -> Dataset {
    let samples = dataset
        .samples
        .par_iter()
        .map(|sample| {
            let mut sample = sample.clone();
            let sample_seed = mix_str(seed, &sample.path_id);
            for (index, instruction) in sample.instructions.iter_mut().enumerate() {
                let tokens = tokenize(&instruction.text, instruction.language);
                let shuffled =
                    shuffle_instruction(&tokens, mode, mix_index(sample_seed, index as u64));
                if shuffled != tokens {
                    instruction.text = detokenize(&shuffled);
                }
            }
            sample
        })
        .collect();
    let mut out = Dataset {
        metadata: dataset.metadata.clone(),
        samples,
    };
    out.record_transform(
        "noise",
        &[
            ("mode", mode.name().to_string()),
            ("seed", seed.to_string()),
        ],
    );
    out
}

/// Reassigns instructions to wrong trajectories. `Block` moves whole
/// annotation blocks under a uniformly sampled derangement; `Random`
/// permutes the global instruction pool while keeping each sample's
/// instruction count.
pub fn mismatch(dataset: &Dataset, mode: MismatchMode, seed: u64) -> Result<Dataset> {
    let n = dataset.samples.len();
    let mut out = dataset.clone();
    match mode {
        MismatchMode::Block => {
            if n < 2 {
                return Err(Error::BlockTooSmall(n));
            }
            let mut rng = SplitMix64::new(seed);
            // Rejection-sample a uniform derangement.
            let assignment = loop {
                let mut perm: Vec<usize> = (0..n).collect();
                rng.shuffle(&mut perm);
                if perm.iter().enumerate().all(|(i, &j)| i != j) {
                    break perm;
                }
            };
            let blocks: Vec<_> = dataset
                .samples
                .iter()
                .map(|s| s.instructions.clone())
                .collect();
            for (i, sample) in out.samples.iter_mut().enumerate() {
                sample.instructions = blocks[assignment[i]].clone();
            }
        }
        MismatchMode::Random => {
            let mut pool: Vec<_> = dataset
                .samples
                .iter()
                .flat_map(|s| s.instructions.iter().cloned())
                .collect();
            let mut rng = SplitMix64::new(seed);
            rng.shuffle(&mut pool);
            let mut cursor = pool.into_iter();
            for sample in out.samples.iter_mut() {
                let count = sample.instructions.len();
                sample.instructions = cursor.by_ref().take(count).collect();
            }
        }
    }
    out.record_transform(
        "mismatch",
        &[
            ("mode", mode.name().to_string()),
            ("seed", seed.to_string()),
        ],
    );
    Ok(out)
}

/// Blanks the instruction text of all but `round(keep_fraction * n)`
/// samples. Selection is at trajectory granularity: a sample is keyed by
/// `mix(seed, path_id)` and the lowest keys (ties broken by path_id)
/// keep their text. Instruction counts and languages are preserved.
pub fn empty_language(dataset: &Dataset, keep_fraction: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&keep_fraction) {
        return Err(Error::Invalid(format!(
            "keep fraction {keep_fraction} outside [0, 1]"
        )));
    }
    let n = dataset.samples.len();
    let keep = round_half_up(keep_fraction * n as f64).min(n);
    let selection_seed = mix_str(seed, "empty-lang");
    let mut keyed: Vec<(u64, &str)> = dataset
        .samples
        .iter()
        .map(|s| (mix_str(selection_seed, &s.path_id), s.path_id.as_str()))
        .collect();
    keyed.sort();
    let keepers: std::collections::BTreeSet<&str> =
        keyed.iter().take(keep).map(|&(_, id)| id).collect();

    let mut out = dataset.clone();
    for sample in out.samples.iter_mut() {
        if !keepers.contains(sample.path_id.as_str()) {
            for instruction in sample.instructions.iter_mut() {
                instruction.text.clear();
            }
        }
    }
    out.record_transform(
        "empty-lang",
        &[
            ("keep", keep_fraction.to_string()),
            ("seed", seed.to_string()),
        ],
    );
    Ok(out)
}
