//! Navigation evaluation: success rate, success weighted by path length,
//! normalized dynamic time warping, success-rate agreement, and aggregate
//! reports with token-length × step-count breakdowns.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Dataset};
use crate::envgraph::{path_length, validate_trajectory, EnvironmentGraph, GeodesicCache};
use crate::error::{Error, Result};

pub const DEFAULT_SUCCESS_THRESHOLD: f64 = 3.0;
pub const DEFAULT_TOKEN_BIN_WIDTH: usize = 10;

/// One evaluated prediction. `instruction_id` follows the
/// `<path_id>_<instruction index>` convention so reports can be joined
/// back to dataset instructions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub instruction_id: String,
    pub scan: String,
    pub predicted_path: Vec<String>,
    pub reference_path: Vec<String>,
}

/// Per-episode metric values, all in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub instruction_id: String,
    pub success: u8,
    pub spl: f64,
    pub ndtw: f64,
}

/// Aggregate means scaled by 100 and rounded to one decimal, the usual
/// leaderboard formatting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub sr: f64,
    pub spl: f64,
    pub ndtw: f64,
}

/// Mean success (x100) of the episodes falling in one
/// (token-length bin, reference step count) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownCell {
    /// Lower bound of the instruction word-count bin.
    pub token_bin: usize,
    /// Reference path step count (edges), kept exact.
    pub steps: usize,
    pub sr: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub bin_width: usize,
    pub cells: Vec<BreakdownCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    pub episodes: Vec<EpisodeResult>,
    pub aggregates: Aggregates,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breakdown: Option<Breakdown>,
}

/// One cell of a ΔSR comparison between two reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaCell {
    pub token_bin: usize,
    pub steps: usize,
    pub delta_sr: f64,
    pub count_a: usize,
    pub count_b: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaMatrix {
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    pub bin_width: usize,
    pub cells: Vec<DeltaCell>,
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// 1 iff the final predicted viewpoint lies within `threshold` meters
/// (geodesic) of the final reference viewpoint.
pub fn success(graph: &EnvironmentGraph, episode: &Episode, threshold: f64) -> Result<u8> {
    let mut cache = GeodesicCache::new(graph);
    success_cached(&mut cache, episode, threshold)
}

fn success_cached(cache: &mut GeodesicCache<'_>, episode: &Episode, threshold: f64) -> Result<u8> {
    let predicted_end = episode.predicted_path.last().ok_or(Error::PathTooShort)?;
    let reference_end = episode.reference_path.last().ok_or(Error::PathTooShort)?;
    let distance = cache.distance(predicted_end, reference_end)?;
    Ok(u8::from(distance <= threshold))
}

/// Success weighted by path length: `S * d* / max(d*, p)` with `d*` the
/// geodesic start→goal distance and `p` the predicted path length.
pub fn spl(graph: &EnvironmentGraph, episode: &Episode, threshold: f64) -> Result<f64> {
    let mut cache = GeodesicCache::new(graph);
    spl_cached(graph, &mut cache, episode, threshold)
}

fn spl_cached(
    graph: &EnvironmentGraph,
    cache: &mut GeodesicCache<'_>,
    episode: &Episode,
    threshold: f64,
) -> Result<f64> {
    let p_start = episode.predicted_path.first().ok_or(Error::PathTooShort)?;
    let r_start = episode.reference_path.first().ok_or(Error::PathTooShort)?;
    if p_start != r_start {
        return Err(Error::StartMismatch {
            predicted: p_start.clone(),
            reference: r_start.clone(),
        });
    }
    let goal = episode.reference_path.last().ok_or(Error::PathTooShort)?;
    let optimal = cache.distance(r_start, goal)?;
    if optimal == 0.0 {
        return Err(Error::ZeroLengthReference);
    }
    if success_cached(cache, episode, threshold)? == 0 {
        return Ok(0.0);
    }
    let walked = path_length(graph, &episode.predicted_path)?;
    Ok(optimal / optimal.max(walked))
}

/// Normalized DTW: `exp(-DTW(P, R) / (|R| * threshold))` where DTW aligns
/// the full lattice with geodesic node distances as step costs.
pub fn ndtw(graph: &EnvironmentGraph, episode: &Episode, threshold: f64) -> Result<f64> {
    let mut cache = GeodesicCache::new(graph);
    ndtw_cached(&mut cache, episode, threshold)
}

fn ndtw_cached(cache: &mut GeodesicCache<'_>, episode: &Episode, threshold: f64) -> Result<f64> {
    let predicted = &episode.predicted_path;
    let reference = &episode.reference_path;
    if predicted.is_empty() || reference.is_empty() {
        return Err(Error::PathTooShort);
    }
    let n = predicted.len();
    let m = reference.len();
    let mut cost = vec![vec![0.0f64; m]; n];
    for i in 0..n {
        for j in 0..m {
            cost[i][j] = cache.distance(&predicted[i], &reference[j])?;
        }
    }
    let mut dtw = vec![vec![f64::INFINITY; m]; n];
    for i in 0..n {
        for j in 0..m {
            let best_prev = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => dtw[0][j - 1],
                (_, 0) => dtw[i - 1][0],
                _ => dtw[i - 1][j].min(dtw[i][j - 1]).min(dtw[i - 1][j - 1]),
            };
            dtw[i][j] = cost[i][j] + best_prev;
        }
    }
    Ok((-dtw[n - 1][m - 1] / (m as f64 * threshold)).exp())
}

/// Success-rate agreement: the fraction of shared instruction ids whose
/// success bits coincide between two reports.
pub fn sra(a: &EvalReport, b: &EvalReport) -> Result<f64> {
    let ids_a: BTreeMap<&str, u8> = a
        .episodes
        .iter()
        .map(|e| (e.instruction_id.as_str(), e.success))
        .collect();
    let ids_b: BTreeMap<&str, u8> = b
        .episodes
        .iter()
        .map(|e| (e.instruction_id.as_str(), e.success))
        .collect();
    let only_a: Vec<&str> = ids_a
        .keys()
        .filter(|k| !ids_b.contains_key(**k))
        .copied()
        .collect();
    let only_b: Vec<&str> = ids_b
        .keys()
        .filter(|k| !ids_a.contains_key(**k))
        .copied()
        .collect();
    if !only_a.is_empty() || !only_b.is_empty() {
        return Err(Error::IdSetMismatch {
            only_a: only_a.join(", "),
            only_b: only_b.join(", "),
        });
    }
    if ids_a.is_empty() {
        return Err(Error::Invalid("no episodes to compare".into()));
    }
    let agreeing = ids_a
        .iter()
        .filter(|(id, bit)| ids_b[**id] == **bit)
        .count();
    Ok(agreeing as f64 / ids_a.len() as f64)
}

/// Looks up the dataset instruction behind `<path_id>_<index>`.
fn instruction_word_count(
    by_path_id: &BTreeMap<&str, &crate::corpus::Sample>,
    instruction_id: &str,
) -> Result<usize> {
    let (path_id, index) = instruction_id
        .rsplit_once('_')
        .ok_or_else(|| Error::MissingInstruction(instruction_id.to_string()))?;
    let index: usize = index
        .parse()
        .map_err(|_| Error::MissingInstruction(instruction_id.to_string()))?;
    let sample = by_path_id
        .get(path_id)
        .ok_or_else(|| Error::MissingInstruction(instruction_id.to_string()))?;
    let instruction = sample
        .instructions
        .get(index)
        .ok_or_else(|| Error::MissingInstruction(instruction_id.to_string()))?;
    Ok(tokenize(&instruction.text, instruction.language).word_count())
}

/// Evaluates every episode against its scan's graph and aggregates.
///
/// Results are folded in instruction_id order; aggregates and breakdown
/// cells are means x100 rounded to one decimal.
pub fn evaluate(
    graphs: &BTreeMap<String, EnvironmentGraph>,
    episodes: &[Episode],
    dataset: &Dataset,
    threshold: f64,
    bin_width: usize,
) -> Result<EvalReport> {
    if bin_width == 0 {
        return Err(Error::Invalid("bin width must be >= 1".into()));
    }
    // Lengths resolved up front so id errors surface before metric errors.
    let by_path_id: BTreeMap<&str, &crate::corpus::Sample> = dataset
        .samples
        .iter()
        .map(|s| (s.path_id.as_str(), s))
        .collect();
    let word_counts: Result<Vec<usize>> = episodes
        .iter()
        .map(|e| {
            instruction_word_count(&by_path_id, &e.instruction_id)
                .map_err(|err| err.for_episode(&e.instruction_id))
        })
        .collect();
    let word_counts = word_counts?;

    let mut indexed: Vec<(usize, &Episode)> = episodes.iter().enumerate().collect();
    indexed.sort_by(|(_, a), (_, b)| a.instruction_id.cmp(&b.instruction_id));

    let evaluated: Result<Vec<(EpisodeResult, usize, usize)>> = indexed
        .par_iter()
        .map(|(original_index, episode)| {
            let run = || -> Result<(EpisodeResult, usize, usize)> {
                let graph = graphs
                    .get(&episode.scan)
                    .ok_or_else(|| Error::MissingGraph(episode.scan.clone()))?;
                if episode.reference_path.len() < 2 {
                    return Err(Error::PathTooShort);
                }
                validate_trajectory(graph, &episode.predicted_path)?;
                validate_trajectory(graph, &episode.reference_path)?;
                let mut cache = GeodesicCache::new(graph);
                let success = success_cached(&mut cache, episode, threshold)?;
                let spl = spl_cached(graph, &mut cache, episode, threshold)?;
                let ndtw = ndtw_cached(&mut cache, episode, threshold)?;
                Ok((
                    EpisodeResult {
                        instruction_id: episode.instruction_id.clone(),
                        success,
                        spl,
                        ndtw,
                    },
                    word_counts[*original_index],
                    episode.reference_path.len() - 1,
                ))
            };
            run().map_err(|err| match err {
                err @ Error::Episode { .. } => err,
                other => other.for_episode(&episode.instruction_id),
            })
        })
        .collect();
    let evaluated = evaluated?;
    if evaluated.is_empty() {
        return Err(Error::Invalid("no episodes to evaluate".into()));
    }

    let n = evaluated.len() as f64;
    let sr_sum: f64 = evaluated.iter().map(|(e, _, _)| e.success as f64).sum();
    let spl_sum: f64 = evaluated.iter().map(|(e, _, _)| e.spl).sum();
    let ndtw_sum: f64 = evaluated.iter().map(|(e, _, _)| e.ndtw).sum();

    let mut cells: BTreeMap<(usize, usize), (usize, usize)> = BTreeMap::new();
    for (result, words, steps) in &evaluated {
        let bin = (words / bin_width) * bin_width;
        let entry = cells.entry((bin, *steps)).or_insert((0, 0));
        entry.0 += result.success as usize;
        entry.1 += 1;
    }
    let breakdown = Breakdown {
        bin_width,
        cells: cells
            .into_iter()
            .map(|((token_bin, steps), (successes, count))| BreakdownCell {
                token_bin,
                steps,
                sr: round1(successes as f64 / count as f64 * 100.0),
                count,
            })
            .collect(),
    };

    Ok(EvalReport {
        metadata: BTreeMap::new(),
        episodes: evaluated.into_iter().map(|(e, _, _)| e).collect(),
        aggregates: Aggregates {
            sr: round1(sr_sum / n * 100.0),
            spl: round1(spl_sum / n * 100.0),
            ndtw: round1(ndtw_sum / n * 100.0),
        },
        breakdown: Some(breakdown),
    })
}

/// Cell-wise SR difference (a minus b) over the breakdown cells present
/// in both reports.
pub fn delta_sr(a: &EvalReport, b: &EvalReport) -> Result<DeltaMatrix> {
    let take = |report: &EvalReport, name: &str| -> Result<Breakdown> {
        report
            .breakdown
            .clone()
            .ok_or_else(|| Error::Invalid(format!("report {name} carries no breakdown")))
    };
    let ba = take(a, "a")?;
    let bb = take(b, "b")?;
    if ba.bin_width != bb.bin_width {
        return Err(Error::Invalid(format!(
            "bin widths differ: {} vs {}",
            ba.bin_width, bb.bin_width
        )));
    }
    let index_b: BTreeMap<(usize, usize), &BreakdownCell> = bb
        .cells
        .iter()
        .map(|c| ((c.token_bin, c.steps), c))
        .collect();
    let cells = ba
        .cells
        .iter()
        .filter_map(|ca| {
            index_b.get(&(ca.token_bin, ca.steps)).map(|cb| DeltaCell {
                token_bin: ca.token_bin,
                steps: ca.steps,
                delta_sr: round1(ca.sr - cb.sr),
                count_a: ca.count,
                count_b: cb.count,
            })
        })
        .collect();
    Ok(DeltaMatrix {
        metadata: BTreeMap::new(),
        bin_width: ba.bin_width,
        cells,
    })
}

/// Loads `[{"instruction_id","scan","predicted_path","reference_path"}, ...]`.
pub fn load_episodes(path: impl AsRef<Path>) -> Result<Vec<Episode>> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&raw).map_err(|e| Error::parse(path, e))
}

pub fn load_report(path: impl AsRef<Path>) -> Result<EvalReport> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&raw).map_err(|e| Error::parse(path, e))
}

pub fn save_report(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let body = serde_json::to_string_pretty(report).map_err(|e| Error::parse(path, e))?;
    std::fs::write(path, body + "\n").map_err(|e| Error::io(path, e))
}

/// Flat per-episode table: instruction_id, success, spl, ndtw.
pub fn report_to_csv(report: &EvalReport) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["instruction_id", "success", "spl", "ndtw"])
        .expect("csv into memory");
    for episode in &report.episodes {
        writer
            .write_record([
                episode.instruction_id.as_str(),
                &episode.success.to_string(),
                &episode.spl.to_string(),
                &episode.ndtw.to_string(),
            ])
            .expect("csv into memory");
    }
    String::from_utf8(writer.into_inner().expect("csv into memory")).expect("utf-8")
}
