//! Synthetic instruction generation: trajectory-ordered detected object
//! labels interleaved with filler words drawn from a unigram model, plus
//! the shuffled-objects and no-detector ablations.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    detokenize, is_punctuation_token, tokenize, Dataset, Instruction, Language, Sample,
};
use crate::error::{Error, Result};
use crate::noising::{shuffle_instruction, ShuffleMode};
use crate::rng::{mix_index, mix_str, SplitMix64};

/// Word frequencies over a training corpus, with detector label words
/// removed from the support. Sampling weight of `w` is `counts[w] / total`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnigramModel {
    counts: BTreeMap<String, u64>,
    excluded: BTreeSet<String>,
    total: u64,
    cumulative: Vec<(u64, String)>,
}

impl UnigramModel {
    pub fn new(counts: BTreeMap<String, u64>, excluded: BTreeSet<String>) -> Result<Self> {
        let counts: BTreeMap<String, u64> = counts
            .into_iter()
            .filter(|(word, count)| *count > 0 && !excluded.contains(word))
            .collect();
        if counts.is_empty() {
            return Err(Error::EmptyUnigramSupport);
        }
        let mut cumulative = Vec::with_capacity(counts.len());
        let mut running = 0u64;
        for (word, count) in &counts {
            running += count;
            cumulative.push((running, word.clone()));
        }
        Ok(Self {
            counts,
            excluded,
            total: running,
            cumulative,
        })
    }

    pub fn counts(&self) -> &BTreeMap<String, u64> {
        &self.counts
    }

    pub fn excluded(&self) -> &BTreeSet<String> {
        &self.excluded
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn sample(&self, rng: &mut SplitMix64) -> &str {
        let r = rng.next_below(self.total);
        // First cumulative count strictly greater than r.
        let idx = self.cumulative.partition_point(|(cum, _)| *cum <= r);
        &self.cumulative[idx].1
    }
}

/// Empirical distribution of instruction length in words.
#[derive(Debug, Clone, PartialEq)]
pub struct LengthDistribution {
    histogram: BTreeMap<usize, u64>,
    total: u64,
}

impl LengthDistribution {
    pub fn new(histogram: BTreeMap<usize, u64>) -> Result<Self> {
        let histogram: BTreeMap<usize, u64> = histogram
            .into_iter()
            .filter(|(len, count)| *len >= 1 && *count > 0)
            .collect();
        let total = histogram.values().sum();
        if total == 0 {
            return Err(Error::NoInstructionLengths);
        }
        Ok(Self { histogram, total })
    }

    pub fn histogram(&self) -> &BTreeMap<usize, u64> {
        &self.histogram
    }

    pub fn probability(&self, length: usize) -> f64 {
        *self.histogram.get(&length).unwrap_or(&0) as f64 / self.total as f64
    }

    pub fn sample(&self, rng: &mut SplitMix64) -> usize {
        let mut r = rng.next_below(self.total);
        for (len, count) in &self.histogram {
            if r < *count {
                return *len;
            }
            r -= count;
        }
        unreachable!("histogram total out of sync")
    }
}

/// One detection: a label (possibly multi-word) with its confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub label: String,
    pub score: f64,
}

/// Top-k detector output per panorama, keyed by path_id, panoramas in
/// trajectory order, detections in descending score order.
#[derive(Debug, Clone, Default)]
pub struct DetectionSet {
    per_path: BTreeMap<String, Vec<Vec<Detection>>>,
}

impl DetectionSet {
    pub fn new(per_path: BTreeMap<String, Vec<Vec<Detection>>>) -> Result<Self> {
        for (path_id, panoramas) in &per_path {
            for (index, detections) in panoramas.iter().enumerate() {
                let sorted = detections.windows(2).all(|w| w[0].score >= w[1].score);
                if !sorted {
                    return Err(Error::UnsortedDetections {
                        path_id: path_id.clone(),
                        panorama: index,
                    });
                }
            }
        }
        Ok(Self { per_path })
    }

    pub fn get(&self, path_id: &str) -> Option<&[Vec<Detection>]> {
        self.per_path.get(path_id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.per_path.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_path.is_empty()
    }
}

/// Loads `{path_id: [[{"label","score"}, ...] per panorama]}`.
pub fn load_detections(path: impl AsRef<Path>) -> Result<DetectionSet> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let per_path: BTreeMap<String, Vec<Vec<Detection>>> =
        serde_json::from_str(&raw).map_err(|e| Error::parse(path, e))?;
    DetectionSet::new(per_path)
}

/// Generation parameters: `a` objects sampled per window of `b` panoramas,
/// `k` detections used per panorama, plus the two ablation switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UoConfig {
    pub a: usize,
    pub b: usize,
    pub k: usize,
    pub shuffle_objects: bool,
    pub no_detector: bool,
}

impl Default for UoConfig {
    fn default() -> Self {
        Self {
            a: 3,
            b: 2,
            k: 5,
            shuffle_objects: false,
            no_detector: false,
        }
    }
}

impl UoConfig {
    fn validate(&self) -> Result<()> {
        for (name, value) in [("a", self.a), ("b", self.b), ("k", self.k)] {
            if value < 1 {
                return Err(Error::InvalidConfig(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }
}

/// Splits label strings into their words; exclusion and word counting both
/// work at this granularity so multi-word labels stay out of the unigram.
pub fn label_words(labels: &BTreeSet<String>) -> BTreeSet<String> {
    labels
        .iter()
        .flat_map(|label| label.split_whitespace().map(String::from))
        .collect()
}

/// Counts word-token frequencies over the dataset's instructions
/// (punctuation dropped), removing every word of every object label.
pub fn train_unigram(dataset: &Dataset, object_labels: &BTreeSet<String>) -> Result<UnigramModel> {
    let excluded = label_words(object_labels);
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for sample in &dataset.samples {
        for instruction in &sample.instructions {
            let tokens = tokenize(&instruction.text, instruction.language);
            for token in tokens.tokens().filter(|t| !is_punctuation_token(t)) {
                *counts.entry(token.to_string()).or_insert(0) += 1;
            }
        }
    }
    UnigramModel::new(counts, excluded)
}

/// Histogram of instruction lengths in words (punctuation excluded);
/// instructions without any word are skipped.
pub fn fit_length_distribution(dataset: &Dataset) -> Result<LengthDistribution> {
    let mut histogram: BTreeMap<usize, u64> = BTreeMap::new();
    for sample in &dataset.samples {
        for instruction in &sample.instructions {
            let words = tokenize(&instruction.text, instruction.language).word_count();
            if words >= 1 {
                *histogram.entry(words).or_insert(0) += 1;
            }
        }
    }
    LengthDistribution::new(histogram)
}

fn spread_evenly(total: usize, buckets: usize) -> Vec<usize> {
    let base = total / buckets;
    let remainder = total % buckets;
    (0..buckets)
        .map(|i| base + usize::from(i < remainder))
        .collect()
}

/// Generates one synthetic instruction for a trajectory.
///
/// Draw order, fixed for reproducibility: target length first, then the
/// per-window object selections (window by window), then the filler words
/// (window by window), then the shuffle sub-seed if `shuffle_objects`.
pub fn generate_instruction(
    sample: &Sample,
    detections: &[Vec<Detection>],
    unigram: &UnigramModel,
    lengths: &LengthDistribution,
    config: &UoConfig,
    seed: u64,
) -> Result<Instruction> {
    config.validate()?;
    let mut rng = SplitMix64::new(seed);
    let target_len = lengths.sample(&mut rng);

    let text = if config.no_detector {
        if !unigram.excluded().is_empty() {
            return Err(Error::InvalidConfig(
                "no-detector generation needs a unigram model with no excluded words".into(),
            ));
        }
        let mut words: Vec<&str> = (0..target_len).map(|_| unigram.sample(&mut rng)).collect();
        words.push(".");
        words.join(" ")
    } else {
        let expected = sample.path.len();
        if detections.len() != expected {
            return Err(Error::PanoramaCountMismatch {
                path_id: sample.path_id.clone(),
                expected,
                actual: detections.len(),
            });
        }

        // Non-overlapping windows of b panoramas; the candidate pool of a
        // window lists its top-k labels in (panorama, score rank) order.
        let windows: Vec<&[Vec<Detection>]> = detections.chunks(config.b).collect();
        let mut selected: Vec<Vec<&str>> = Vec::with_capacity(windows.len());
        for (window_index, window) in windows.iter().enumerate() {
            let pool: Vec<&str> = window
                .iter()
                .flat_map(|panorama| panorama.iter().take(config.k))
                .map(|d| d.label.as_str())
                .collect();
            if pool.is_empty() {
                return Err(Error::EmptyDetectionPool {
                    path_id: sample.path_id.clone(),
                    window: window_index,
                });
            }
            let take = config.a.min(pool.len());
            let chosen = rng.choose_prefix(pool.len(), take);
            selected.push(chosen.into_iter().map(|i| pool[i]).collect());
        }

        let object_words: usize = selected
            .iter()
            .flat_map(|labels| labels.iter())
            .map(|label| label.split_whitespace().count())
            .sum();
        let filler_counts = if object_words < target_len {
            spread_evenly(target_len - object_words, selected.len())
        } else {
            vec![0; selected.len()]
        };

        let mut sentences: Vec<String> = Vec::with_capacity(selected.len());
        for (labels, &fillers) in selected.iter().zip(&filler_counts) {
            let mut words: Vec<&str> = (0..fillers).map(|_| unigram.sample(&mut rng)).collect();
            words.extend(labels.iter().flat_map(|label| label.split_whitespace()));
            words.push(".");
            sentences.push(words.join(" "));
        }
        sentences.join(" ")
    };

    let text = if config.shuffle_objects {
        let sub_seed = rng.next_u64();
        let shuffled = shuffle_instruction(
            &tokenize(&text, Language::EnUs),
            ShuffleMode::SfAll,
            sub_seed,
        );
        detokenize(&shuffled)
    } else {
        text
    };

    Ok(Instruction::new(text))
}

/// Replaces every sample's annotations with `per_traj` generated
/// instructions (tagged `source: uo`). With a `mix` donor, each sample
/// additionally receives its first `per_traj` instructions from a
/// random-mismatched copy of the donor (tagged `source: mismatch`).
#[allow(clippy::too_many_arguments)]
pub fn annotate_dataset(
    dataset: &Dataset,
    detections: &DetectionSet,
    unigram: &UnigramModel,
    lengths: &LengthDistribution,
    config: &UoConfig,
    per_traj: usize,
    mix: Option<&Dataset>,
    seed: u64,
) -> Result<Dataset> {
    config.validate()?;
    let mismatched = mix
        .map(|donor| {
            crate::noising::mismatch(
                donor,
                crate::noising::MismatchMode::Random,
                mix_str(seed, "mix"),
            )
        })
        .transpose()?;
    let donor_by_id: BTreeMap<&str, &Sample> = mismatched
        .as_ref()
        .map(|d| d.samples.iter().map(|s| (s.path_id.as_str(), s)).collect())
        .unwrap_or_default();

    let samples: Result<Vec<Sample>> = dataset
        .samples
        .par_iter()
        .map(|sample| {
            let entry = detections
                .get(&sample.path_id)
                .ok_or_else(|| Error::MissingDetections(sample.path_id.clone()))?;
            let sample_seed = mix_str(seed, &sample.path_id);
            let mut instructions = Vec::with_capacity(per_traj * 2);
            for j in 0..per_traj {
                let mut generated = generate_instruction(
                    sample,
                    entry,
                    unigram,
                    lengths,
                    config,
                    mix_index(sample_seed, j as u64),
                )?;
                generated.source = Some("uo".to_string());
                instructions.push(generated);
            }
            if mismatched.is_some() {
                let donor_sample = donor_by_id.get(sample.path_id.as_str()).ok_or_else(|| {
                    Error::Invalid(format!(
                        "mix donor has no sample for path_id `{}`",
                        sample.path_id
                    ))
                })?;
                if donor_sample.instructions.len() < per_traj {
                    return Err(Error::InsufficientDonor {
                        path_id: sample.path_id.clone(),
                        needed: per_traj,
                        available: donor_sample.instructions.len(),
                    });
                }
                for instruction in donor_sample.instructions.iter().take(per_traj) {
                    let mut instruction = instruction.clone();
                    instruction.source = Some("mismatch".to_string());
                    instructions.push(instruction);
                }
            }
            Ok(Sample {
                instructions,
                ..sample.clone()
            })
        })
        .collect();

    let mut out = Dataset {
        metadata: dataset.metadata.clone(),
        samples: samples?,
    };
    out.record_transform(
        "uo-generate",
        &[
            ("per_traj", per_traj.to_string()),
            ("a", config.a.to_string()),
            ("b", config.b.to_string()),
            ("k", config.k.to_string()),
            ("shuffle_objects", config.shuffle_objects.to_string()),
            ("no_detector", config.no_detector.to_string()),
            ("mix", mix.is_some().to_string()),
            ("seed", seed.to_string()),
        ],
    );
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    #[serde(default)]
    metadata: BTreeMap<String, String>,
    unigram: UnigramSection,
    length_histogram: BTreeMap<String, u64>,
}

#[derive(Serialize, Deserialize)]
struct UnigramSection {
    counts: BTreeMap<String, u64>,
    excluded: Vec<String>,
}

/// Trained unigram + length model, serializable for reuse across runs.
#[derive(Debug, Clone)]
pub struct UoModel {
    pub metadata: BTreeMap<String, String>,
    pub unigram: UnigramModel,
    pub lengths: LengthDistribution,
}

impl UoModel {
    pub fn train(dataset: &Dataset, object_labels: &BTreeSet<String>) -> Result<Self> {
        Ok(Self {
            metadata: BTreeMap::new(),
            unigram: train_unigram(dataset, object_labels)?,
            lengths: fit_length_distribution(dataset)?,
        })
    }
}

pub fn save_model(model: &UoModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = ModelFile {
        metadata: model.metadata.clone(),
        unigram: UnigramSection {
            counts: model.unigram.counts().clone(),
            excluded: model.unigram.excluded().iter().cloned().collect(),
        },
        length_histogram: model
            .lengths
            .histogram()
            .iter()
            .map(|(len, count)| (len.to_string(), *count))
            .collect(),
    };
    let body = serde_json::to_string_pretty(&file).map_err(|e| Error::parse(path, e))?;
    std::fs::write(path, body + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<UoModel> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ModelFile = serde_json::from_str(&raw).map_err(|e| Error::parse(path, e))?;
    let mut histogram = BTreeMap::new();
    for (key, count) in file.length_histogram {
        let len: usize = key
            .parse()
            .map_err(|_| Error::parse(path, format!("bad length key `{key}`")))?;
        histogram.insert(len, count);
    }
    Ok(UoModel {
        metadata: file.metadata,
        unigram: UnigramModel::new(
            file.unigram.counts,
            file.unigram.excluded.into_iter().collect(),
        )?,
        lengths: LengthDistribution::new(histogram)?,
    })
}
