//! Acceptance suite: one test per shipping criterion, each printing a
//! PASS line (run with `--nocapture` to see them). Criteria that name CLI
//! behavior drive the real binary; oracle checks recompute expectations
//! with independent implementations in this file.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use sha2::{Digest, Sha256};

use vlnprep::cartography::{
    compute_map, select_subset, DynamicsLog, DynamicsRecord, EpochProbability, SelectionPolicy,
};
use vlnprep::corpus::{tokenize, Dataset, Instruction, Language, Sample};
use vlnprep::envgraph::{geodesic, EnvironmentGraph, GeodesicCache, Position};
use vlnprep::metrics::{ndtw, spl, sra, Aggregates, Episode, EpisodeResult, EvalReport};
use vlnprep::noising::{mismatch, shuffle_instruction, MismatchMode, ShuffleMode};
use vlnprep::rng::{mix_index, mix_str, round_half_up, SplitMix64};
use vlnprep::uogen::load_model;

fn bin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vlnprep"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn vlnprep")
}

fn bin_ok(dir: &Path, args: &[&str]) {
    let out = bin(dir, args);
    assert!(
        out.status.success(),
        "vlnprep {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
}

fn sha256_of(path: &Path) -> String {
    hex::encode(Sha256::digest(std::fs::read(path).unwrap()))
}

fn multiset<I: IntoIterator<Item = String>>(items: I) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for item in items {
        *m.entry(item).or_insert(0) += 1;
    }
    m
}

/// Instructions with globally unique per-sentence words, so any sentence
/// reorder is textually visible.
fn synthetic_instructions(count: usize, seed: u64) -> Vec<String> {
    let mut rng = SplitMix64::new(seed);
    (0..count)
        .map(|i| {
            let sentences = if i % 4 == 0 {
                1
            } else {
                2 + rng.next_below(3) as usize
            };
            (0..sentences)
                .map(|s| {
                    let words = 2 + rng.next_below(5) as usize;
                    let body: Vec<String> = (0..words).map(|w| format!("w{i}x{s}x{w}")).collect();
                    format!("{}.", body.join(" "))
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

#[test]
fn criterion_1_shuffle_suite() {
    let start = Instant::now();
    let texts = synthetic_instructions(1000, 11);
    let mut multi = 0usize;
    let mut single = 0usize;
    for (i, text) in texts.iter().enumerate() {
        let tokens = tokenize(text, Language::EnUs);
        let seed = i as u64;

        let worded = shuffle_instruction(&tokens, ShuffleMode::SfWord, seed);
        assert_eq!(worded.sentences.len(), tokens.sentences.len());
        for (before, after) in tokens.sentences.iter().zip(&worded.sentences) {
            assert_eq!(
                multiset(before.iter().cloned()),
                multiset(after.iter().cloned())
            );
        }

        let sented = shuffle_instruction(&tokens, ShuffleMode::SfSent, seed);
        if tokens.sentences.len() >= 2 {
            assert_ne!(sented.sentences, tokens.sentences, "order must change");
            multi += 1;
        } else {
            assert_eq!(
                sented.sentences, tokens.sentences,
                "single sentence untouched"
            );
            single += 1;
        }

        let alled = shuffle_instruction(&tokens, ShuffleMode::SfAll, seed);
        assert_eq!(alled.sentences.len(), 1);
        assert_eq!(alled.sentences[0].last().unwrap(), ".");
    }
    assert!(multi > 0 && single > 0, "corpus covers both shapes");
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!(
        "[PASS] criterion 1: shuffle suite on 1000 instructions \
         ({multi} multi-sentence changed, {single} single-sentence untouched, {elapsed:?})"
    );
}

#[test]
fn criterion_2_mismatch_suite() {
    let start = Instant::now();
    let mut rng = SplitMix64::new(5);
    for case in 0..500u64 {
        let n = 2 + rng.next_below(49) as usize; // sizes 2..=50
        let dataset = Dataset::new(
            (0..n)
                .map(|i| Sample {
                    path_id: format!("p{i}"),
                    scan: "s".into(),
                    path: vec!["a".into(), "b".into()],
                    instructions: (0..1 + (i % 3))
                        .map(|j| Instruction::new(format!("unique {case} {i} {j}")))
                        .collect(),
                })
                .collect(),
        );

        let blocked = mismatch(&dataset, MismatchMode::Block, case).unwrap();
        for (before, after) in dataset.samples.iter().zip(&blocked.samples) {
            assert_ne!(
                before.instructions, after.instructions,
                "fixed block at n={n}"
            );
        }

        let randomized = mismatch(&dataset, MismatchMode::Random, case).unwrap();
        let texts = |d: &Dataset| {
            multiset(
                d.samples
                    .iter()
                    .flat_map(|s| s.instructions.iter().map(|i| i.text.clone())),
            )
        };
        for (before, after) in dataset.samples.iter().zip(&randomized.samples) {
            assert_eq!(before.instructions.len(), after.instructions.len());
        }
        assert_eq!(texts(&dataset), texts(&randomized));
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!("[PASS] criterion 2: mismatch suite on 500 random datasets ({elapsed:?})");
}

/// 50-node scan, 200 trajectories of 3-6 steps, fabricated k=5 detections,
/// and a filler-word training corpus disjoint from the 30 detector labels.
struct UoFixture {
    dir: tempfile::TempDir,
    labels: Vec<String>,
    detections: BTreeMap<String, Vec<Vec<(String, f64)>>>,
}

fn build_uo_fixture(seed: u64) -> UoFixture {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = SplitMix64::new(seed);
    let labels: Vec<String> = (0..30).map(|i| format!("obj{i:02}")).collect();
    let fillers: Vec<String> = (0..60).map(|i| format!("f{i:02}")).collect();
    let nodes: Vec<String> = (0..50).map(|i| format!("v{i:02}")).collect();

    let mut samples = Vec::new();
    let mut detections: BTreeMap<String, Vec<Vec<(String, f64)>>> = BTreeMap::new();
    for t in 0..200 {
        let steps = 3 + rng.next_below(4) as usize; // 3..=6 steps
        let path: Vec<String> = (0..=steps)
            .map(|_| nodes[rng.next_below(50) as usize].clone())
            .collect();
        let path_id = format!("traj{t:03}");
        let per_pano: Vec<Vec<(String, f64)>> = path
            .iter()
            .map(|_| {
                (0..5)
                    .map(|r| {
                        (
                            labels[rng.next_below(30) as usize].clone(),
                            0.95 - r as f64 * 0.1,
                        )
                    })
                    .collect()
            })
            .collect();
        detections.insert(path_id.clone(), per_pano);
        // Training corpus: 3 filler-word instructions per trajectory,
        // 12..=28 words.
        let instructions: Vec<String> = (0..3)
            .map(|_| {
                let len = 12 + rng.next_below(17) as usize;
                let words: Vec<&str> = (0..len)
                    .map(|_| fillers[rng.next_below(60) as usize].as_str())
                    .collect();
                format!("{}.", words.join(" "))
            })
            .collect();
        samples.push(serde_json::json!({
            "path_id": path_id,
            "scan": "synth",
            "path": path,
            "instructions": instructions,
        }));
    }
    std::fs::write(
        dir.path().join("dataset.json"),
        serde_json::to_string(&serde_json::Value::Array(samples)).unwrap(),
    )
    .unwrap();
    std::fs::write(
        dir.path().join("labels.json"),
        serde_json::to_string(&labels).unwrap(),
    )
    .unwrap();
    let det_json: serde_json::Value = serde_json::Value::Object(
        detections
            .iter()
            .map(|(k, panos)| {
                (
                    k.clone(),
                    serde_json::Value::Array(
                        panos
                            .iter()
                            .map(|pano| {
                                serde_json::Value::Array(
                                    pano.iter()
                                        .map(|(label, score)| {
                                            serde_json::json!({"label": label, "score": score})
                                        })
                                        .collect(),
                                )
                            })
                            .collect(),
                    ),
                )
            })
            .collect(),
    );
    std::fs::write(
        dir.path().join("detections.json"),
        serde_json::to_string(&det_json).unwrap(),
    )
    .unwrap();
    UoFixture {
        dir,
        labels,
        detections,
    }
}

#[test]
fn criterion_3_uo_suite() {
    let fixture = build_uo_fixture(77);
    let dir = fixture.dir.path();
    bin_ok(
        dir,
        &[
            "uo",
            "train",
            "--dataset",
            "dataset.json",
            "--labels",
            "labels.json",
            "-o",
            "model.json",
        ],
    );

    let generation_seed = 2024u64;
    let started = Instant::now();
    bin_ok(
        dir,
        &[
            "uo",
            "generate",
            "--dataset",
            "dataset.json",
            "--detections",
            "detections.json",
            "--model",
            "model.json",
            "--per-traj",
            "6",
            "--seed",
            "2024",
            "-o",
            "generated.json",
        ],
    );
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "generate took {elapsed:?}");

    let model = load_model(dir.join("model.json")).unwrap();
    let label_set: BTreeSet<&str> = fixture.labels.iter().map(String::as_str).collect();
    for label in &fixture.labels {
        assert!(
            !model.unigram.counts().contains_key(label),
            "label leaked into unigram"
        );
    }

    let generated: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("generated.json")).unwrap())
            .unwrap();
    let samples = generated["samples"].as_array().unwrap();
    let total: usize = samples
        .iter()
        .map(|s| s["instructions"].as_array().unwrap().len())
        .sum();
    assert_eq!(total, 1200);

    for sample in samples {
        let path_id = sample["path_id"].as_str().unwrap();
        let panoramas = &fixture.detections[path_id];
        // Window pools in trajectory order (b = 2, k = 5).
        let pool_words: Vec<&str> = panoramas
            .chunks(2)
            .flat_map(|window| {
                window
                    .iter()
                    .flat_map(|pano| pano.iter().take(5).map(|(label, _)| label.as_str()))
            })
            .collect();
        let sample_seed = mix_str(generation_seed, path_id);
        for (j, instruction) in sample["instructions"]
            .as_array()
            .unwrap()
            .iter()
            .enumerate()
        {
            let text = instruction["text"].as_str().unwrap();
            let words: Vec<&str> = text.split(' ').filter(|w| *w != ".").collect();
            let objects: Vec<&str> = words
                .iter()
                .copied()
                .filter(|w| label_set.contains(w))
                .collect();
            let fillers: Vec<&str> = words
                .iter()
                .copied()
                .filter(|w| !label_set.contains(w))
                .collect();

            // (a) object words appear in trajectory (pool) order.
            let mut cursor = pool_words.iter();
            for object in &objects {
                assert!(
                    cursor.any(|p| p == object),
                    "{path_id}[{j}]: `{object}` out of trajectory order in `{text}`"
                );
            }

            // (b) whenever fillers were inserted, the word count equals the
            // target length sampled first from the per-instruction stream.
            let instr_seed = mix_index(sample_seed, j as u64);
            let target = model.lengths.sample(&mut SplitMix64::new(instr_seed));
            if fillers.is_empty() {
                assert!(words.len() >= target, "{path_id}[{j}]: no-filler branch");
            } else {
                assert_eq!(words.len(), target, "{path_id}[{j}]: `{text}`");
            }

            // (c) no filler word is a detector label; every filler comes
            // from the unigram support, which excludes all label words.
            for filler in &fillers {
                assert!(
                    model.unigram.counts().contains_key(*filler),
                    "{path_id}[{j}]: filler `{filler}` outside unigram support"
                );
            }
        }
    }
    println!(
        "[PASS] criterion 3: 1200 UO instructions, order/length/filler checks all green \
         (generate took {elapsed:?})"
    );
}

/// Independent Floyd–Warshall oracle.
fn floyd_warshall(graph: &EnvironmentGraph) -> BTreeMap<(String, String), f64> {
    let ids: Vec<String> = graph.node_ids().map(String::from).collect();
    let n = ids.len();
    let mut dist = vec![vec![f64::INFINITY; n]; n];
    for i in 0..n {
        dist[i][i] = 0.0;
        for j in 0..n {
            if graph.has_edge(&ids[i], &ids[j]) {
                dist[i][j] = graph
                    .position(&ids[i])
                    .unwrap()
                    .distance(&graph.position(&ids[j]).unwrap());
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let through = dist[i][k] + dist[k][j];
                if through < dist[i][j] {
                    dist[i][j] = through;
                }
            }
        }
    }
    let mut out = BTreeMap::new();
    for i in 0..n {
        for j in 0..n {
            if dist[i][j].is_finite() {
                out.insert((ids[i].clone(), ids[j].clone()), dist[i][j]);
            }
        }
    }
    out
}

/// Independent brute-force DTW: enumerate all monotone alignments.
fn brute_force_dtw(cost: &[Vec<f64>], i: usize, j: usize) -> f64 {
    let here = cost[i][j];
    if i == 0 && j == 0 {
        return here;
    }
    let mut best = f64::INFINITY;
    if i > 0 {
        best = best.min(brute_force_dtw(cost, i - 1, j));
    }
    if j > 0 {
        best = best.min(brute_force_dtw(cost, i, j - 1));
    }
    if i > 0 && j > 0 {
        best = best.min(brute_force_dtw(cost, i - 1, j - 1));
    }
    here + best
}

fn random_graph(seed: u64, n: usize, extra: usize) -> EnvironmentGraph {
    let mut rng = SplitMix64::new(seed);
    let nodes: Vec<(String, Position)> = (0..n)
        .map(|i| {
            (
                format!("v{i}"),
                Position {
                    x: rng.next_below(10_000) as f64 / 1_000.0,
                    y: rng.next_below(10_000) as f64 / 1_000.0,
                    z: rng.next_below(10_000) as f64 / 1_000.0,
                },
            )
        })
        .collect();
    let mut edges: Vec<(String, String)> = (0..n)
        .map(|i| (format!("v{i}"), format!("v{}", (i + 1) % n)))
        .collect();
    for _ in 0..extra {
        let a = rng.next_below(n as u64) as usize;
        let b = rng.next_below(n as u64) as usize;
        if a != b {
            edges.push((format!("v{a}"), format!("v{b}")));
        }
    }
    EnvironmentGraph::new("rand", nodes, edges).unwrap()
}

#[test]
fn criterion_4_metrics_oracles() {
    // nDTW vs exhaustive alignment enumeration, 200 random pairs.
    let mut rng = SplitMix64::new(314);
    let mut pairs = 0;
    while pairs < 200 {
        let g = random_graph(1000 + pairs as u64, 8, 5);
        let ids: Vec<String> = g.node_ids().map(String::from).collect();
        let len_p = 1 + rng.next_below(6) as usize;
        let len_r = 1 + rng.next_below(6) as usize;
        let predicted: Vec<String> = (0..len_p)
            .map(|_| ids[rng.next_below(8) as usize].clone())
            .collect();
        let reference: Vec<String> = (0..len_r)
            .map(|_| ids[rng.next_below(8) as usize].clone())
            .collect();
        let episode = Episode {
            instruction_id: "x_0".into(),
            scan: "rand".into(),
            predicted_path: predicted.clone(),
            reference_path: reference.clone(),
        };
        let got = ndtw(&g, &episode, 3.0).unwrap();
        let mut cache = GeodesicCache::new(&g);
        let cost: Vec<Vec<f64>> = predicted
            .iter()
            .map(|p| {
                reference
                    .iter()
                    .map(|r| cache.distance(p, r).unwrap())
                    .collect()
            })
            .collect();
        let brute =
            (-brute_force_dtw(&cost, len_p - 1, len_r - 1) / (reference.len() as f64 * 3.0)).exp();
        assert!((got - brute).abs() < 1e-9, "pair {pairs}: {got} vs {brute}");
        pairs += 1;
    }

    // Geodesic vs Floyd–Warshall on 50 random graphs of up to 10 nodes.
    for seed in 0..50u64 {
        let n = 4 + (seed as usize % 7);
        let g = random_graph(seed, n, n / 2);
        let oracle = floyd_warshall(&g);
        for source in g.node_ids() {
            let table = geodesic(&g, source).unwrap();
            for target in g.node_ids() {
                match (
                    oracle.get(&(source.to_string(), target.to_string())),
                    table.get(target),
                ) {
                    (Some(&want), Some(got)) => assert!((want - got).abs() < 1e-9),
                    (None, None) => {}
                    other => panic!("reachability disagrees: {other:?}"),
                }
            }
        }
    }

    // Exactness corners.
    let g = random_graph(9, 8, 5);
    let path: Vec<String> = vec!["v0".into(), "v1".into(), "v2".into()];
    let identity = Episode {
        instruction_id: "x_0".into(),
        scan: "rand".into(),
        predicted_path: path.clone(),
        reference_path: path.clone(),
    };
    assert_eq!(ndtw(&g, &identity, 3.0).unwrap(), 1.0, "ndtw(P,P) exact");

    let chain = EnvironmentGraph::new(
        "chain",
        vec![
            (
                "a".into(),
                Position {
                    x: 0.0,
                    y: 0.0,
                    z: 0.0,
                },
            ),
            (
                "b".into(),
                Position {
                    x: 1.3,
                    y: 0.2,
                    z: 0.0,
                },
            ),
            (
                "c".into(),
                Position {
                    x: 2.9,
                    y: 0.7,
                    z: 0.1,
                },
            ),
        ],
        vec![("a".into(), "b".into()), ("b".into(), "c".into())],
    )
    .unwrap();
    let optimal = Episode {
        instruction_id: "x_0".into(),
        scan: "chain".into(),
        predicted_path: vec!["a".into(), "b".into(), "c".into()],
        reference_path: vec!["a".into(), "b".into(), "c".into()],
    };
    assert_eq!(
        spl(&chain, &optimal, 3.0).unwrap(),
        1.0,
        "optimal SPL exact"
    );
    println!("[PASS] criterion 4: nDTW/geodesic oracles within 1e-9, identity cases exact");
}

#[test]
fn criterion_5_sra() {
    let report = |bits: &[u8]| EvalReport {
        metadata: BTreeMap::new(),
        episodes: bits
            .iter()
            .enumerate()
            .map(|(i, &b)| EpisodeResult {
                instruction_id: format!("i_{i}"),
                success: b,
                spl: 0.0,
                ndtw: 1.0,
            })
            .collect(),
        aggregates: Aggregates {
            sr: 0.0,
            spl: 0.0,
            ndtw: 0.0,
        },
        breakdown: None,
    };
    let x = report(&[1, 0, 1]);
    let y = report(&[1, 1, 1]);
    assert_eq!(sra(&x, &x).unwrap(), 1.0);
    assert_eq!(sra(&x, &y).unwrap(), 2.0 / 3.0);
    assert_eq!(sra(&x, &y).unwrap(), sra(&y, &x).unwrap());
    println!("[PASS] criterion 5: SRA reflexive, symmetric, 2/3 fixture exact");
}

#[test]
fn criterion_6_cartography_oracle() {
    let mut rng = SplitMix64::new(272);
    for case in 0..100 {
        let epochs = 1 + rng.next_below(10) as usize;
        let samples = 1 + rng.next_below(40) as usize;
        let mut log = BTreeMap::new();
        let mut expected = BTreeMap::new();
        for s in 0..samples {
            let probs: Vec<f64> = (0..epochs)
                .map(|_| rng.next_below(10_001) as f64 / 10_000.0)
                .collect();
            // Independent two-pass mean / population std.
            let mean = probs.iter().sum::<f64>() / epochs as f64;
            let sigma =
                (probs.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / epochs as f64).sqrt();
            let id = format!("s{s}");
            expected.insert(id.clone(), (mean, sigma));
            log.insert(
                id,
                DynamicsRecord {
                    epochs: probs
                        .into_iter()
                        .map(EpochProbability::Trajectory)
                        .collect(),
                },
            );
        }
        let points = compute_map(&DynamicsLog { samples: log }).unwrap();
        for point in &points {
            let (mean, sigma) = expected[&point.sample_id];
            assert!((point.confidence - mean).abs() < 1e-12, "case {case}");
            assert!((point.variability - sigma).abs() < 1e-12, "case {case}");
        }
    }

    // Two-epoch fixture: mean exact; sigma exact to machine precision (the
    // fl(0.8)-0.5 deviation sits one ulp above fl(0.3), see README).
    let log = DynamicsLog {
        samples: [(
            "s".to_string(),
            DynamicsRecord {
                epochs: vec![
                    EpochProbability::Trajectory(0.2),
                    EpochProbability::Trajectory(0.8),
                ],
            },
        )]
        .into_iter()
        .collect(),
    };
    let point = &compute_map(&log).unwrap()[0];
    assert_eq!(point.confidence, 0.5);
    assert!((point.variability - 0.3).abs() <= f64::EPSILON);

    // cut_amb / top_amb partition the id set.
    let mut rng = SplitMix64::new(99);
    for case in 0..10u64 {
        let points: Vec<vlnprep::cartography::CartographyPoint> = (0..10)
            .map(|i| vlnprep::cartography::CartographyPoint {
                sample_id: format!("id{i}"),
                confidence: rng.next_below(1000) as f64 / 1000.0,
                variability: rng.next_below(500) as f64 / 1000.0,
                region: None,
            })
            .collect();
        let all: BTreeSet<String> = points.iter().map(|p| p.sample_id.clone()).collect();
        for fraction in [0.1, 0.3, 0.5] {
            let top =
                select_subset(&points, SelectionPolicy::TopAmbiguous, fraction, case).unwrap();
            let cut =
                select_subset(&points, SelectionPolicy::CutAmbiguous, fraction, case).unwrap();
            assert!(top.is_disjoint(&cut));
            assert_eq!(top.union(&cut).cloned().collect::<BTreeSet<_>>(), all);
            assert_eq!(top.len(), round_half_up(fraction * 10.0));
        }
    }
    println!(
        "[PASS] criterion 6: cartography matches two-pass oracle within 1e-12, partitions hold"
    );
}

/// Writes the shared determinism fixture: a 20-sample dataset, detections,
/// two trained models (with and without label exclusions), and a points file.
fn build_determinism_fixture(dir: &Path) {
    let mut rng = SplitMix64::new(31);
    let labels: Vec<String> = (0..10).map(|i| format!("obj{i}")).collect();
    let fillers: Vec<String> = (0..30).map(|i| format!("f{i:02}")).collect();
    let mut samples = Vec::new();
    let mut detections = serde_json::Map::new();
    for t in 0..20 {
        let path: Vec<String> = (0..4).map(|i| format!("v{t}_{i}")).collect();
        let path_id = format!("p{t:02}");
        let instructions: Vec<String> = (0..2)
            .map(|_| {
                let s1: Vec<&str> = (0..6)
                    .map(|_| fillers[rng.next_below(30) as usize].as_str())
                    .collect();
                let s2: Vec<&str> = (0..6)
                    .map(|_| fillers[rng.next_below(30) as usize].as_str())
                    .collect();
                format!("{}. {}.", s1.join(" "), s2.join(" "))
            })
            .collect();
        detections.insert(
            path_id.clone(),
            serde_json::Value::Array(
                path.iter()
                    .map(|_| {
                        serde_json::Value::Array(
                            (0..3)
                                .map(|r| {
                                    serde_json::json!({
                                        "label": labels[rng.next_below(10) as usize],
                                        "score": 0.9 - r as f64 * 0.1,
                                    })
                                })
                                .collect(),
                        )
                    })
                    .collect(),
            ),
        );
        samples.push(serde_json::json!({
            "path_id": path_id, "scan": "s", "path": path, "instructions": instructions,
        }));
    }
    std::fs::write(
        dir.join("dataset.json"),
        serde_json::to_string(&serde_json::Value::Array(samples)).unwrap(),
    )
    .unwrap();
    std::fs::write(
        dir.join("detections.json"),
        serde_json::to_string(&serde_json::Value::Object(detections)).unwrap(),
    )
    .unwrap();
    std::fs::write(
        dir.join("labels.json"),
        serde_json::to_string(&labels).unwrap(),
    )
    .unwrap();
    std::fs::write(dir.join("nolabels.json"), "[]").unwrap();
    bin_ok(
        dir,
        &[
            "uo",
            "train",
            "--dataset",
            "dataset.json",
            "--labels",
            "labels.json",
            "-o",
            "model.json",
        ],
    );
    bin_ok(
        dir,
        &[
            "uo",
            "train",
            "--dataset",
            "dataset.json",
            "--labels",
            "nolabels.json",
            "-o",
            "model-open.json",
        ],
    );

    let points: Vec<serde_json::Value> = (0..12)
        .map(|i| {
            serde_json::json!({
                "sample_id": format!("pt{i:02}"),
                "confidence": (i as f64) / 12.0,
                "variability": ((i * 7) % 12) as f64 / 24.0,
            })
        })
        .collect();
    std::fs::write(
        dir.join("points.json"),
        serde_json::to_string(&serde_json::json!({ "points": points })).unwrap(),
    )
    .unwrap();
}

#[test]
fn criterion_7_determinism_matrix() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    build_determinism_fixture(dir);

    let matrix: Vec<Vec<String>> = [
        vec!["noise", "--mode", "sf-word", "--seed", "9", "dataset.json"],
        vec!["noise", "--mode", "sf-sent", "--seed", "9", "dataset.json"],
        vec![
            "noise",
            "--mode",
            "sf-word-sent",
            "--seed",
            "9",
            "dataset.json",
        ],
        vec!["noise", "--mode", "sf-all", "--seed", "9", "dataset.json"],
        vec!["mismatch", "--mode", "block", "--seed", "9", "dataset.json"],
        vec![
            "mismatch",
            "--mode",
            "random",
            "--seed",
            "9",
            "dataset.json",
        ],
        vec!["empty-lang", "--keep", "0.4", "--seed", "9", "dataset.json"],
        vec!["subsample", "--n", "7", "--seed", "9", "dataset.json"],
        vec![
            "uo",
            "generate",
            "--dataset",
            "dataset.json",
            "--detections",
            "detections.json",
            "--model",
            "model.json",
            "--per-traj",
            "3",
            "--seed",
            "9",
        ],
        vec![
            "uo",
            "generate",
            "--dataset",
            "dataset.json",
            "--detections",
            "detections.json",
            "--model",
            "model.json",
            "--per-traj",
            "3",
            "--shuffle-objects",
            "--seed",
            "9",
        ],
        vec![
            "uo",
            "generate",
            "--dataset",
            "dataset.json",
            "--detections",
            "detections.json",
            "--model",
            "model-open.json",
            "--per-traj",
            "3",
            "--no-detector",
            "--seed",
            "9",
        ],
        vec![
            "uo",
            "generate",
            "--dataset",
            "dataset.json",
            "--detections",
            "detections.json",
            "--model",
            "model.json",
            "--per-traj",
            "2",
            "--mix",
            "dataset.json",
            "--seed",
            "9",
        ],
        vec![
            "carto",
            "select",
            "--points",
            "points.json",
            "--policy",
            "random",
            "--fraction",
            "0.5",
            "--seed",
            "9",
        ],
        vec![
            "carto",
            "select",
            "--points",
            "points.json",
            "--policy",
            "cut-amb",
            "--fraction",
            "0.3",
            "--seed",
            "9",
        ],
        vec![
            "carto",
            "select",
            "--points",
            "points.json",
            "--policy",
            "top-amb",
            "--fraction",
            "0.3",
            "--seed",
            "9",
        ],
        vec![
            "carto",
            "select",
            "--points",
            "points.json",
            "--policy",
            "top-conf",
            "--fraction",
            "0.3",
            "--seed",
            "9",
        ],
    ]
    .into_iter()
    .map(|args| args.into_iter().map(String::from).collect())
    .collect();

    for (index, args) in matrix.iter().enumerate() {
        let out = format!("out_{index}.json");
        let mut argv: Vec<&str> = args.iter().map(String::as_str).collect();
        argv.extend(["-o", &out]);
        bin_ok(dir, &argv);
        let first = sha256_of(&dir.join(&out));
        bin_ok(dir, &argv);
        let second = sha256_of(&dir.join(&out));
        assert_eq!(first, second, "matrix row {index}: {args:?}");
    }
    println!(
        "[PASS] criterion 7: {} stochastic invocations byte-identical on rerun",
        matrix.len()
    );
}

#[test]
fn criterion_8_end_to_end_demo() {
    let started = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    // 12-node chain scan; 9 trajectories as forward runs along the chain.
    let nodes: Vec<serde_json::Value> = (0..12)
        .map(|i| serde_json::json!({"id": format!("n{i:02}"), "x": i as f64 * 1.8, "y": 0.0, "z": 0.0}))
        .collect();
    let edges: Vec<serde_json::Value> = (0..11)
        .map(|i| serde_json::json!([format!("n{i:02}"), format!("n{:02}", i + 1)]))
        .collect();
    std::fs::create_dir(dir.join("graphs")).unwrap();
    std::fs::write(
        dir.join("graphs/demo.json"),
        serde_json::to_string(&serde_json::json!({
            "scan": "demo", "nodes": nodes, "edges": edges,
        }))
        .unwrap(),
    )
    .unwrap();

    let mut rng = SplitMix64::new(8);
    let mut samples = Vec::new();
    let mut episodes = Vec::new();
    for t in 0..9 {
        let steps = 2 + rng.next_below(3) as usize;
        let start = rng.next_below((11 - steps) as u64) as usize;
        let path: Vec<String> = (start..=start + steps)
            .map(|i| format!("n{i:02}"))
            .collect();
        let path_id = format!("demo{t}");
        let instructions = vec![
            format!("walk along segment {t}. then halt at the end."),
            format!("move forward {t} units. stop when done."),
        ];
        for j in 0..instructions.len() {
            episodes.push(serde_json::json!({
                "instruction_id": format!("{path_id}_{j}"),
                "scan": "demo",
                "predicted_path": &path,
                "reference_path": &path,
            }));
        }
        samples.push(serde_json::json!({
            "path_id": path_id, "scan": "demo", "path": path, "instructions": instructions,
        }));
    }
    std::fs::write(
        dir.join("dataset.json"),
        serde_json::to_string(&serde_json::Value::Array(samples)).unwrap(),
    )
    .unwrap();
    std::fs::write(
        dir.join("episodes.json"),
        serde_json::to_string(&serde_json::Value::Array(episodes)).unwrap(),
    )
    .unwrap();

    // empty-lang keep=0.5: exactly ceil(9/2) = 5 samples keep their text.
    bin_ok(
        dir,
        &[
            "empty-lang",
            "--keep",
            "0.5",
            "--seed",
            "1",
            "dataset.json",
            "-o",
            "half.json",
        ],
    );
    let half: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("half.json")).unwrap()).unwrap();
    let kept = half["samples"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|s| {
            s["instructions"]
                .as_array()
                .unwrap()
                .iter()
                .all(|i| !i["text"].as_str().unwrap().is_empty())
        })
        .count();
    assert_eq!(kept, 5, "ceil(9/2) samples retain text");

    // Noise the surviving text, then evaluate perfect predictions.
    bin_ok(
        dir,
        &[
            "noise",
            "--mode",
            "sf-word",
            "--seed",
            "2",
            "half.json",
            "-o",
            "noised.json",
        ],
    );
    bin_ok(
        dir,
        &[
            "eval",
            "--graphs",
            "graphs",
            "--episodes",
            "episodes.json",
            "--dataset",
            "noised.json",
            "-o",
            "report.json",
        ],
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["aggregates"]["sr"], 100.0);
    assert_eq!(report["aggregates"]["spl"], 100.0);

    // Metrics are language-independent: the un-noised dataset scores the same.
    bin_ok(
        dir,
        &[
            "eval",
            "--graphs",
            "graphs",
            "--episodes",
            "episodes.json",
            "--dataset",
            "dataset.json",
            "-o",
            "report-orig.json",
        ],
    );
    let original: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report-orig.json")).unwrap())
            .unwrap();
    assert_eq!(report["aggregates"], original["aggregates"]);
    assert_eq!(report["episodes"], original["episodes"]);

    // Trajectories were never mutated along the pipeline.
    let noised: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("noised.json")).unwrap()).unwrap();
    let dataset: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("dataset.json")).unwrap()).unwrap();
    for (a, b) in dataset
        .as_array()
        .unwrap()
        .iter()
        .zip(noised["samples"].as_array().unwrap())
    {
        assert_eq!(a["path"], b["path"]);
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "demo took {elapsed:?}");
    println!("[PASS] criterion 8: empty-lang -> noise -> eval pipeline, SR 100.0 ({elapsed:?})");
}
