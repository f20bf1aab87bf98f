//! Training-dynamics data maps: per-sample confidence and variability of
//! the ground-truth trajectory probability across epochs, region labels,
//! and the data-selection policies built on them.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{round_half_up, SplitMix64};

/// One epoch's record for a sample: either per-step action probabilities
/// or an already multiplied trajectory probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpochProbability {
    Trajectory(f64),
    Steps(Vec<f64>),
}

/// Per-sample training dynamics over epochs 1..E, E identical for all.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DynamicsLog {
    pub samples: BTreeMap<String, DynamicsRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsRecord {
    pub epochs: Vec<EpochProbability>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Easy,
    Ambiguous,
    Hard,
}

impl Region {
    pub fn name(self) -> &'static str {
        match self {
            Region::Easy => "easy",
            Region::Ambiguous => "ambiguous",
            Region::Hard => "hard",
        }
    }
}

/// A sample's position on the data map. `confidence` is the epoch mean of
/// the trajectory probability, `variability` its population standard
/// deviation (so at most 0.5 for values in [0, 1]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartographyPoint {
    pub sample_id: String,
    pub confidence: f64,
    pub variability: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<Region>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionPolicy {
    /// Seeded uniform subset of round(f * n) samples.
    Random,
    /// Everything except the round(f * n) most variable samples.
    CutAmbiguous,
    /// The round(f * n) most variable samples.
    TopAmbiguous,
    /// The round(f * n) most confident samples.
    TopConfident,
}

impl SelectionPolicy {
    pub fn name(self) -> &'static str {
        match self {
            SelectionPolicy::Random => "random",
            SelectionPolicy::CutAmbiguous => "cut_amb",
            SelectionPolicy::TopAmbiguous => "top_amb",
            SelectionPolicy::TopConfident => "top_conf",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "random" => Some(SelectionPolicy::Random),
            "cut_amb" => Some(SelectionPolicy::CutAmbiguous),
            "top_amb" => Some(SelectionPolicy::TopAmbiguous),
            "top_conf" => Some(SelectionPolicy::TopConfident),
            _ => None,
        }
    }
}

fn check_probability(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::ProbabilityRange(p));
    }
    Ok(p)
}

/// Probability of the full trajectory: the product of per-step action
/// probabilities.
pub fn trajectory_probability(step_probs: &[f64]) -> Result<f64> {
    if step_probs.is_empty() {
        return Err(Error::EmptyStepProbs);
    }
    let mut product = 1.0;
    for &p in step_probs {
        product *= check_probability(p)?;
    }
    Ok(product)
}

fn epoch_probability(epoch: &EpochProbability) -> Result<f64> {
    match epoch {
        EpochProbability::Trajectory(p) => check_probability(*p),
        EpochProbability::Steps(steps) => trajectory_probability(steps),
    }
}

/// Computes (confidence, variability) per sample: the mean and population
/// standard deviation (divide by E) of the per-epoch trajectory
/// probabilities. Regions are left unset.
pub fn compute_map(log: &DynamicsLog) -> Result<Vec<CartographyPoint>> {
    let mut expected_epochs: Option<usize> = None;
    let mut points = Vec::with_capacity(log.samples.len());
    for (sample_id, record) in &log.samples {
        let epochs = record.epochs.len();
        match expected_epochs {
            None => {
                if epochs == 0 {
                    return Err(Error::EpochCountMismatch {
                        sample_id: sample_id.clone(),
                        expected: 1,
                        actual: 0,
                    });
                }
                expected_epochs = Some(epochs);
            }
            Some(expected) if expected != epochs => {
                return Err(Error::EpochCountMismatch {
                    sample_id: sample_id.clone(),
                    expected,
                    actual: epochs,
                });
            }
            _ => {}
        }
        let probs: Result<Vec<f64>> = record
            .epochs
            .iter()
            .map(|e| epoch_probability(e).map_err(|err| err.for_sample(sample_id)))
            .collect();
        let probs = probs?;
        let e = probs.len() as f64;
        let mean = probs.iter().sum::<f64>() / e;
        let variance = probs.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / e;
        points.push(CartographyPoint {
            sample_id: sample_id.clone(),
            confidence: mean,
            variability: variance.sqrt(),
            region: None,
        });
    }
    Ok(points)
}

/// Labels regions. A point is AMBIGUOUS when its variability exceeds the
/// `sigma_quantile` split of all variabilities: the split value is the
/// floor(q*n)-th smallest variability, or -inf when that index is zero, and
/// points strictly above it are ambiguous (so equal-variability points
/// always land on the same side). The rest are EASY at
/// `confidence >= mu_threshold`, HARD below.
pub fn classify_regions(
    points: &mut [CartographyPoint],
    mu_threshold: f64,
    sigma_quantile: f64,
) -> Result<()> {
    if points.is_empty() {
        return Err(Error::Invalid("no points to classify".into()));
    }
    if !(0.0..=1.0).contains(&sigma_quantile) {
        return Err(Error::Invalid(format!(
            "sigma quantile {sigma_quantile} outside [0, 1]"
        )));
    }
    let mut sigmas: Vec<f64> = points.iter().map(|p| p.variability).collect();
    sigmas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = (sigma_quantile * sigmas.len() as f64).floor() as usize;
    let split = if rank == 0 {
        f64::NEG_INFINITY
    } else {
        sigmas[rank.min(sigmas.len()) - 1]
    };
    for point in points.iter_mut() {
        point.region = Some(if point.variability > split {
            Region::Ambiguous
        } else if point.confidence >= mu_threshold {
            Region::Easy
        } else {
            Region::Hard
        });
    }
    Ok(())
}

/// Applies a selection policy, returning the chosen sample ids. Sorts are
/// stable with a sample_id tiebreak; `CutAmbiguous` is the exact complement
/// of `TopAmbiguous` at the same fraction.
pub fn select_subset(
    points: &[CartographyPoint],
    policy: SelectionPolicy,
    fraction: f64,
    seed: u64,
) -> Result<BTreeSet<String>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Invalid(format!(
            "fraction {fraction} outside [0, 1]"
        )));
    }
    let n = points.len();
    let k = round_half_up(fraction * n as f64).min(n);

    // Base order: sample_id ascending, the canonical order for both the
    // random draw and sort tiebreaks.
    let mut by_id: Vec<&CartographyPoint> = points.iter().collect();
    by_id.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));

    let top_by = |key: fn(&CartographyPoint) -> f64| -> Vec<&CartographyPoint> {
        let mut sorted = by_id.clone();
        sorted.sort_by(|a, b| {
            key(b)
                .partial_cmp(&key(a))
                .unwrap()
                .then_with(|| a.sample_id.cmp(&b.sample_id))
        });
        sorted.into_iter().take(k).collect()
    };

    let chosen: BTreeSet<String> = match policy {
        SelectionPolicy::Random => {
            let mut rng = SplitMix64::new(seed);
            rng.choose_prefix(n, k)
                .into_iter()
                .map(|i| by_id[i].sample_id.clone())
                .collect()
        }
        SelectionPolicy::TopAmbiguous => top_by(|p| p.variability)
            .into_iter()
            .map(|p| p.sample_id.clone())
            .collect(),
        SelectionPolicy::CutAmbiguous => {
            let cut: BTreeSet<&str> = top_by(|p| p.variability)
                .into_iter()
                .map(|p| p.sample_id.as_str())
                .collect();
            by_id
                .iter()
                .filter(|p| !cut.contains(p.sample_id.as_str()))
                .map(|p| p.sample_id.clone())
                .collect()
        }
        SelectionPolicy::TopConfident => top_by(|p| p.confidence)
            .into_iter()
            .map(|p| p.sample_id.clone())
            .collect(),
    };
    Ok(chosen)
}

/// Loads `{sample_id: {"epochs": [[p, ...] or p, ...]}, ...}`.
pub fn load_dynamics(path: impl AsRef<Path>) -> Result<DynamicsLog> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let samples: BTreeMap<String, DynamicsRecord> =
        serde_json::from_str(&raw).map_err(|e| Error::parse(path, e))?;
    Ok(DynamicsLog { samples })
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PointsFile {
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    pub points: Vec<CartographyPoint>,
}

pub fn load_points(path: impl AsRef<Path>) -> Result<PointsFile> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&raw).map_err(|e| Error::parse(path, e))
}

pub fn save_points(file: &PointsFile, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let body = serde_json::to_string_pretty(file).map_err(|e| Error::parse(path, e))?;
    std::fs::write(path, body + "\n").map_err(|e| Error::io(path, e))
}

/// CSV rendering: header plus one `sample_id,confidence,variability,region`
/// row per point (empty region column when unset).
pub fn points_to_csv(points: &[CartographyPoint]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["sample_id", "confidence", "variability", "region"])
        .expect("csv into memory");
    for point in points {
        writer
            .write_record([
                point.sample_id.as_str(),
                &point.confidence.to_string(),
                &point.variability.to_string(),
                point.region.map(Region::name).unwrap_or(""),
            ])
            .expect("csv into memory");
    }
    String::from_utf8(writer.into_inner().expect("csv into memory")).expect("utf-8")
}

/// SVG scatter: x = variability (0..0.5), y = confidence (0..1), one
/// circle per point colored by region.
pub fn points_to_svg(points: &[CartographyPoint]) -> String {
    const WIDTH: f64 = 640.0;
    const HEIGHT: f64 = 480.0;
    const MARGIN: f64 = 50.0;
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let color = |region: Option<Region>| match region {
        Some(Region::Easy) => "#4c72b0",
        Some(Region::Ambiguous) => "#dd8452",
        Some(Region::Hard) => "#c44e52",
        None => "#999999",
    };
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str(&format!(
        "  <rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{plot_w}\" height=\"{plot_h}\" \
         fill=\"none\" stroke=\"#333333\"/>\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\">variability</text>\n",
        WIDTH / 2.0,
        HEIGHT - 12.0
    ));
    svg.push_str(&format!(
        "  <text x=\"14\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\" \
         transform=\"rotate(-90 14 {})\">confidence</text>\n",
        HEIGHT / 2.0,
        HEIGHT / 2.0
    ));
    for point in points {
        let x = MARGIN + (point.variability / 0.5).clamp(0.0, 1.0) * plot_w;
        let y = MARGIN + (1.0 - point.confidence.clamp(0.0, 1.0)) * plot_h;
        svg.push_str(&format!(
            "  <circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"{}\" fill-opacity=\"0.75\">\
             <title>{}</title></circle>\n",
            color(point.region),
            point.sample_id
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes the CSV map and, when requested, the SVG scatter.
pub fn export_map(
    points: &[CartographyPoint],
    csv_path: impl AsRef<Path>,
    svg_path: Option<&Path>,
) -> Result<()> {
    let csv_path = csv_path.as_ref();
    std::fs::write(csv_path, points_to_csv(points)).map_err(|e| Error::io(csv_path, e))?;
    if let Some(svg_path) = svg_path {
        std::fs::write(svg_path, points_to_svg(points)).map_err(|e| Error::io(svg_path, e))?;
    }
    Ok(())
}

/// Selection manifest: the chosen ids plus the provenance that produced them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionManifest {
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    pub policy: String,
    pub fraction: f64,
    pub seed: u64,
    pub sample_ids: Vec<String>,
}

pub fn save_selection(manifest: &SelectionManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let body = serde_json::to_string_pretty(manifest).map_err(|e| Error::parse(path, e))?;
    std::fs::write(path, body + "\n").map_err(|e| Error::io(path, e))
}
