//! Acceptance suite: one test per acceptance criterion, each printing a
//! PASS line (visible with `--nocapture`). Run with:
//!
//! ```text
//! cargo test -p coordscope-cli --test acceptance -- --nocapture
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use chrono::{TimeZone, Utc};
use coordscope_core::coordination::{
    brute_force_components, extract_campaigns, filter_campaigns, group_by_fingerprint,
    GroupingOptions,
};
use coordscope_core::ingest::{parse_timestamp, Post, PostType};
use coordscope_core::metrics::{
    bootstrap, confusion, f1, precision, roc_auc_hard, ConfusionCounts, LabeledPair, MetricValue,
};
use coordscope_core::validation::{evaluate_catalogue, load_ground_truth, StringEqualityJudge};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn ts(secs: i64) -> chrono::DateTime<Utc> {
    Utc.timestamp_opt(1_649_000_000 + secs, 0).unwrap()
}

fn post(id: String, account: String, text: String) -> Post {
    Post::new(id, account, ts(0), text, PostType::Original, None)
}

// ---------------------------------------------------------------------
// 1. Oracle equivalence on 100 seeded random corpora.
// ---------------------------------------------------------------------

#[test]
fn acceptance_1_oracle_equivalence() {
    let started = Instant::now();
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let account_count = rng.gen_range(2..=200usize);
        let post_count = rng.gen_range(0..=2000usize);
        let pool_size = rng.gen_range(1..=30usize);
        let pool: Vec<String> = (0..pool_size)
            .map(|i| {
                let len = rng.gen_range(0..=6usize);
                (0..len).map(|j| format!("#s{i}t{j} ")).collect()
            })
            .collect();
        let posts: Vec<Post> = (0..post_count)
            .map(|i| {
                post(
                    format!("p{i}"),
                    format!("a{:03}", rng.gen_range(0..account_count)),
                    pool[rng.gen_range(0..pool.len())].clone(),
                )
            })
            .collect();

        let campaigns =
            extract_campaigns(&group_by_fingerprint(&posts, &GroupingOptions::all_types()));
        let got: Vec<BTreeSet<String>> = campaigns.into_iter().map(|c| c.accounts).collect();
        let expected = brute_force_components(&posts).unwrap();
        assert_eq!(got, expected, "seed {seed}");
    }
    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs_f64() < 10.0,
        "oracle sweep took {elapsed:?}, budget 10s"
    );
    println!(
        "acceptance 1 (oracle equivalence, 100 corpora in {:.2}s): PASS",
        elapsed.as_secs_f64()
    );
}

// ---------------------------------------------------------------------
// 2. Planted-campaign recovery with exact precision/recall and the
//    10-account filter dropping exactly the sub-threshold group.
// ---------------------------------------------------------------------

fn same_set_pairs(sets: &[BTreeSet<String>]) -> BTreeSet<(String, String)> {
    let mut pairs = BTreeSet::new();
    for set in sets {
        let members: Vec<&String> = set.iter().collect();
        for i in 0..members.len() {
            for j in (i + 1)..members.len() {
                pairs.insert((members[i].clone(), members[j].clone()));
            }
        }
    }
    pairs
}

#[test]
fn acceptance_2_planted_campaign_recovery() {
    let sizes = [45usize, 28, 17, 12, 8];
    let mut posts = Vec::new();
    let mut planted: Vec<BTreeSet<String>> = Vec::new();
    for (g, size) in sizes.iter().enumerate() {
        let mut members = BTreeSet::new();
        for k in 0..*size {
            let account = format!("plant{g}_{k:02}");
            posts.push(post(
                format!("plant{g}_{k}"),
                account.clone(),
                format!("#grp{g}a #grp{g}b #grp{g}c"),
            ));
            members.insert(account);
        }
        planted.push(members);
    }
    // 10k organic posts, each with a unique sequence.
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for i in 0..10_000usize {
        let len = rng.gen_range(0..=6usize);
        let tags: String = (0..len).map(|j| format!(" #org{i}x{j}")).collect();
        posts.push(post(
            format!("org{i}"),
            format!("org_{:04}", rng.gen_range(0..3000)),
            format!("organic{tags}"),
        ));
    }

    let groups = group_by_fingerprint(&posts, &GroupingOptions::all_types());
    assert_eq!(groups.len(), sizes.len(), "one group per planted sequence");
    let campaigns = extract_campaigns(&groups);
    let detected: Vec<BTreeSet<String>> = campaigns.iter().map(|c| c.accounts.clone()).collect();

    let detected_pairs = same_set_pairs(&detected);
    let planted_pairs = same_set_pairs(&planted);
    let true_positive = detected_pairs.intersection(&planted_pairs).count() as f64;
    let precision = true_positive / detected_pairs.len() as f64;
    let recall = true_positive / planted_pairs.len() as f64;
    assert_eq!(precision, 1.0);
    assert_eq!(recall, 1.0);

    let kept = filter_campaigns(campaigns, 10);
    let kept_sets: BTreeSet<BTreeSet<String>> = kept.iter().map(|c| c.accounts.clone()).collect();
    let expected_kept: BTreeSet<BTreeSet<String>> = planted
        .iter()
        .filter(|s| s.len() >= 10)
        .cloned()
        .collect();
    assert_eq!(kept_sets, expected_kept, "filter must drop exactly the sub-threshold group");
    assert_eq!(kept.len(), 4);
    println!("acceptance 2 (planted recovery, precision=recall=1.0, filter drops the 8-account group): PASS");
}

// ---------------------------------------------------------------------
// 3. Throughput: one million posts through fingerprint + grouping +
//    components. Soft target; actuals reported.
// ---------------------------------------------------------------------

fn peak_rss_gb() -> Option<f64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: f64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb / 1024.0 / 1024.0)
}

#[test]
fn acceptance_3_throughput_million_posts() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let total = 1_000_000usize;
    let mut posts = Vec::with_capacity(total);
    for i in 0..total {
        // ~1% of posts share one of 500 coordinated sequences; the rest
        // are unique. Mixed lengths 0-6.
        let text = if i % 100 == 0 {
            let g = rng.gen_range(0..500usize);
            format!("#c{g}x #c{g}y #c{g}z")
        } else {
            match i % 5 {
                0 => String::from("no tags"),
                1 => format!("#u{i}a"),
                2 => format!("#u{i}a #u{i}b #u{i}c"),
                3 => format!("#u{i}a #u{i}b #u{i}c #u{i}d"),
                _ => format!("#u{i}a #u{i}b #u{i}c #u{i}d #u{i}e #u{i}f"),
            }
        };
        posts.push(post(
            format!("p{i}"),
            format!("acct{:06}", i % 200_000),
            text,
        ));
    }

    let started = Instant::now();
    let groups = group_by_fingerprint(&posts, &GroupingOptions::all_types());
    let campaigns = extract_campaigns(&groups);
    let elapsed = started.elapsed();
    assert!(!campaigns.is_empty());

    let rss = peak_rss_gb();
    println!(
        "acceptance 3 (throughput): 1M posts -> {} groups, {} campaigns in {:.1}s, peak RSS {:.2} GB: {}",
        groups.len(),
        campaigns.len(),
        elapsed.as_secs_f64(),
        rss.unwrap_or(f64::NAN),
        if elapsed.as_secs_f64() < 120.0 { "PASS" } else { "FAIL" }
    );
    assert!(
        elapsed.as_secs_f64() < 120.0,
        "detection took {elapsed:?}, budget 120s"
    );
    if let Some(gb) = rss {
        assert!(gb < 4.0, "peak RSS {gb:.2} GB exceeds 4 GB");
    }
}

// ---------------------------------------------------------------------
// 4. Metric exactness on the crafted confusion and the constant-label
//    ROC-AUC law.
// ---------------------------------------------------------------------

#[test]
fn acceptance_4_metric_exactness() {
    let c = ConfusionCounts {
        true_pos: 2,
        false_pos: 1,
        false_neg: 1,
        true_neg: 6,
    };
    // Hand computation: precision 2/3, F1 2*2/(4+1+1) = 2/3,
    // AUC (2/3 + 6/7)/2 = 16/21 ~ 0.7619.
    assert!((precision(&c).value - 2.0 / 3.0).abs() < 1e-9);
    assert!((f1(&c).value - 2.0 / 3.0).abs() < 1e-9);
    assert!((roc_auc_hard(&c).value - 16.0 / 21.0).abs() < 1e-9);

    // Any constant-label predictor scores exactly 0.5 hard-label AUC.
    for positives in 1..30u64 {
        for negatives in 1..30u64 {
            let constant_positive = ConfusionCounts {
                true_pos: positives,
                false_pos: negatives,
                false_neg: 0,
                true_neg: 0,
            };
            let constant_negative = ConfusionCounts {
                true_pos: 0,
                false_pos: 0,
                false_neg: positives,
                true_neg: negatives,
            };
            assert_eq!(roc_auc_hard(&constant_positive).value, 0.5);
            assert_eq!(roc_auc_hard(&constant_negative).value, 0.5);
        }
    }
    println!("acceptance 4 (metric exactness: 2/3, 2/3, 16/21; constant-label AUC = 0.5): PASS");
}

// ---------------------------------------------------------------------
// 5. Bootstrap: bit-reproducible at 1000 iterations; dispersion within
//    15% of the analytic binomial std, cross-checked by an independent
//    Monte Carlo oracle.
// ---------------------------------------------------------------------

#[test]
fn acceptance_5_bootstrap_reproducibility_and_dispersion() {
    // 100 pairs, 80 exact matches: accuracy 0.8.
    let pairs: Vec<LabeledPair> = (0..100)
        .map(|i| LabeledPair {
            post_id: format!("p{i}"),
            predicted: if i < 80 { ["X".to_owned()].into() } else { BTreeSet::new() },
            gold: ["X".to_owned()].into(),
        })
        .collect();
    let accuracy = |s: &[&LabeledPair]| {
        let hits = s.iter().filter(|p| p.predicted == p.gold).count();
        MetricValue {
            value: hits as f64 / s.len() as f64,
            flagged: false,
        }
    };

    let a = bootstrap(&pairs, accuracy, 1000, 42).unwrap();
    let b = bootstrap(&pairs, accuracy, 1000, 42).unwrap();
    assert_eq!(a.mean.to_bits(), b.mean.to_bits(), "bootstrap must be bit-reproducible");
    assert_eq!(a.std.to_bits(), b.std.to_bits());

    let analytic = (0.8f64 * 0.2 / 100.0).sqrt(); // 0.04
    assert!(
        (a.std - analytic).abs() <= 0.15 * analytic,
        "bootstrap std {} outside 15% of {analytic}",
        a.std
    );

    // Independent Monte Carlo oracle: different RNG family, direct
    // resampling of the 0/1 outcomes.
    let outcomes: Vec<f64> = (0..100).map(|i| if i < 80 { 1.0 } else { 0.0 }).collect();
    let mut rng = rand::rngs::StdRng::seed_from_u64(777);
    let mut means = Vec::with_capacity(1000);
    for _ in 0..1000 {
        let mean: f64 = (0..outcomes.len())
            .map(|_| outcomes[rng.gen_range(0..outcomes.len())])
            .sum::<f64>()
            / outcomes.len() as f64;
        means.push(mean);
    }
    let oracle_mean = means.iter().sum::<f64>() / means.len() as f64;
    let oracle_std = (means.iter().map(|m| (m - oracle_mean).powi(2)).sum::<f64>()
        / (means.len() - 1) as f64)
        .sqrt();
    assert!(
        (oracle_std - analytic).abs() <= 0.15 * analytic,
        "oracle std {oracle_std} outside 15% of {analytic}"
    );
    assert!(
        (a.std - oracle_std).abs() <= 0.3 * analytic,
        "implementation ({}) and oracle ({oracle_std}) disagree",
        a.std
    );
    println!(
        "acceptance 5 (bootstrap: bit-reproducible; std {:.4} vs analytic {analytic:.4} vs oracle {oracle_std:.4}): PASS",
        a.std
    );
}

// ---------------------------------------------------------------------
// 6. Template fidelity: prompt and instruction-pair builders byte-match
//    the frozen golden files.
// ---------------------------------------------------------------------

fn golden(name: &str) -> String {
    let path = repo_root().join("fixtures/golden").join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn golden_slice() -> coordscope_core::annotate::CampaignSlice {
    let texts = [
        "Slava Ukraini, la France doit agir #SoutienUkraine #StopWar #Macron2022",
        "Fermez le ciel au-dessus de l'Ukraine #SoutienUkraine #StopWar #Macron2022",
        "La France doit soutenir Kyiv maintenant #SoutienUkraine #StopWar #Macron2022",
    ];
    let posts: Vec<Post> = texts
        .iter()
        .enumerate()
        .map(|(i, text)| {
            Post::new(
                format!("g{i}"),
                format!("c1_acct_{i:02}"),
                parse_timestamp("2022-03-01T12:00:00Z").unwrap(),
                *text,
                PostType::Original,
                Some("fr".into()),
            )
        })
        .collect();
    coordscope_core::annotate::CampaignSlice {
        campaign_id: 1,
        concern: Some("Ukraine".into()),
        window_name: "pre_round1".into(),
        available: posts.len(),
        sampled_posts: posts,
        sample_seed: 42,
    }
}

#[test]
fn acceptance_6_template_fidelity_goldens() {
    use coordscope_core::annotate::{
        build_bend_prompt, build_frame_prompt, build_goal_prompt, BendTactic, FallacyList,
        GoalPromptOptions,
    };
    use coordscope_core::concern::{build_concern_prompt, instruction_pair, ConcernLabelSet, ConcernTaxonomy};
    use coordscope_core::validation::{build_generation_prompt, GroundTruthCampaign};

    let root = repo_root();
    let french =
        ConcernTaxonomy::from_toml_file(root.join("config/taxonomy_french_election.toml")).unwrap();
    let balikatan =
        ConcernTaxonomy::from_toml_file(root.join("config/taxonomy_balikatan.toml")).unwrap();

    let prompt = build_concern_prompt(&french, "Slava Ukraini");
    assert!(prompt.contains("label it as #NoneOther"));
    assert_eq!(prompt, golden("concern_prompt_french.txt"), "french concern prompt");
    assert_eq!(
        build_concern_prompt(&balikatan, "Balikatan exercises begin today"),
        golden("concern_prompt_balikatan.txt"),
        "balikatan concern prompt"
    );

    let post = Post::new(
        "p1",
        "acct",
        parse_timestamp("2022-03-01T12:00:00Z").unwrap(),
        "Poutine menace l'Ukraine",
        PostType::Original,
        Some("fr".into()),
    );
    let labels = ConcernLabelSet::new(
        &french,
        "p1",
        BTreeSet::from(["Ukraine".to_owned(), "Russia".to_owned()]),
        "mock",
        None,
        0,
    );
    let pair = instruction_pair(&french, &post, &labels);
    assert!(pair.instruction.contains("label it as #NoneOther"));
    let mut exported = Vec::new();
    coordscope_core::concern::write_instruction_pairs(&mut exported, &[(&post, &labels)], &french)
        .unwrap();
    assert_eq!(
        String::from_utf8(exported).unwrap(),
        golden("instruction_pair.jsonl"),
        "instruction pair record"
    );

    let slice = golden_slice();
    assert_eq!(
        build_goal_prompt(&slice, &GoalPromptOptions::default()).unwrap(),
        golden("goal_prompt.txt")
    );
    assert_eq!(
        build_bend_prompt(&slice, BendTactic::Excite).unwrap(),
        golden("bend_prompt_excite.txt")
    );
    assert_eq!(
        build_frame_prompt(&slice, &FallacyList::standard()).unwrap(),
        golden("frame_prompt.txt")
    );

    let gt = GroundTruthCampaign {
        record_id: "gt01".into(),
        targeted_country: "Freedonia".into(),
        attacking_country: "Sylvania".into(),
        goal_category: "polarize".into(),
        goal_description: "Deepen the divide over pension reform in Freedonia".into(),
        event_description: "Coordinated posting wave during the 2019 Freedonian pension strikes"
            .into(),
    };
    assert_eq!(build_generation_prompt(&gt), golden("generation_prompt.txt"));
    println!("acceptance 6 (template fidelity: 7 goldens byte-identical): PASS");
}

// ---------------------------------------------------------------------
// 7. Hermetic end-to-end: all five stages over the bundled fixture with
//    mock backends, run twice, byte-identical output trees, no network.
// ---------------------------------------------------------------------

fn write_run_config(dir: &Path, out: &Path, cache: &Path, annotator_kind: &str) -> PathBuf {
    let root = repo_root().canonicalize().unwrap();
    let annotator = match annotator_kind {
        "mock" => format!(
            "kind = \"mock\"\nscript = \"{}\"\nmodel = \"mock-annotator-model\"",
            root.join("fixtures/e2e/mock_annotator.json").display()
        ),
        "failing" => "kind = \"failing\"\nmodel = \"mock-annotator-model\"".to_owned(),
        other => panic!("unknown annotator kind {other}"),
    };
    let config = format!(
        r#"output_dir = "{out}"

[corpus]
path = "{corpus}"

[corpus.fields]
post_id = "id"
account_id = "author_id"
timestamp = "created_at"
text = "text"
post_type = "kind"
language = "lang"

[taxonomy]
path = "{taxonomy}"

[windows]
path = "{windows}"

[fallacies]
path = "{fallacies}"

[ground_truth]
path = "{ground_truth}"

[annotation]
concerns = ["Ukraine"]

[cache]
dir = "{cache}"
retry_base_ms = 1

[backends.concern]
kind = "keyword"

[backends.annotator]
{annotator}

[backends.generator]
kind = "mock"
script = "{generator}"
model = "mock-generator-model"

[backends.judge]
kind = "string_equality"

[backends.offline_stub]
kind = "failing"
"#,
        out = out.display(),
        corpus = root.join("fixtures/corpus_500.jsonl").display(),
        taxonomy = root.join("config/taxonomy_french_election.toml").display(),
        windows = root.join("config/windows_french_election.toml").display(),
        fallacies = root.join("config/fallacies.toml").display(),
        ground_truth = root.join("fixtures/ground_truth_10.csv").display(),
        cache = cache.display(),
        generator = root.join("fixtures/e2e/mock_generator.json").display(),
    );
    let path = dir.join(format!("run_{annotator_kind}.toml"));
    std::fs::write(&path, config).unwrap();
    path
}

fn run_cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_coordscope"))
        .args(args)
        .env("COORDSCOPE_NO_NETWORK", "1")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn assert_success(output: &std::process::Output, what: &str) {
    assert!(
        output.status.success(),
        "{what} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn full_run(config: &Path, out: &Path) {
    let config = config.to_str().unwrap();
    assert_success(&run_cli(&["--config", config, "detect"]), "detect");
    assert_success(
        &run_cli(&["--config", config, "concern", "--export-instructions"]),
        "concern",
    );
    assert_success(&run_cli(&["--config", config, "stats"]), "stats");
    assert_success(&run_cli(&["--config", config, "annotate"]), "annotate");
    assert_success(&run_cli(&["--config", config, "eval"]), "eval");
    let labels = out.join("labels.jsonl");
    assert_success(
        &run_cli(&[
            "--config",
            config,
            "metrics",
            "--predictions",
            labels.to_str().unwrap(),
            "--gold",
            labels.to_str().unwrap(),
        ]),
        "metrics",
    );
}

fn snapshot_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(current) = stack.pop() {
        for entry in std::fs::read_dir(&current).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn acceptance_7_hermetic_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let cache = tmp.path().join("cache");
    let out1 = tmp.path().join("out1");
    let out2 = tmp.path().join("out2");
    let config1 = write_run_config(tmp.path(), &out1, &cache, "mock");
    let config2 = {
        // Same run, second output tree, same cache.
        let dir = tmp.path().join("second");
        std::fs::create_dir_all(&dir).unwrap();
        write_run_config(&dir, &out2, &cache, "mock")
    };

    full_run(&config1, &out1);
    full_run(&config2, &out2);

    let tree1 = snapshot_tree(&out1);
    let tree2 = snapshot_tree(&out2);
    let names1: Vec<&String> = tree1.keys().collect();
    let names2: Vec<&String> = tree2.keys().collect();
    assert_eq!(names1, names2, "output file sets differ");
    for (name, bytes) in &tree1 {
        assert_eq!(bytes, &tree2[name], "output `{name}` differs between runs");
    }

    // The detector reports exactly the three planted campaigns at the
    // 10-account threshold (the fourth planted group is sub-threshold).
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out1.join("detect_summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["campaigns"], 3);
    assert_eq!(summary["campaigns_before_filter"], 4);
    assert_eq!(summary["total_posts"], 500);
    assert_eq!(summary["parse_errors"], 0);

    // Failure-path exit codes: missing ground truth -> I/O (3);
    // missing config file -> config (2).
    let missing_gt = run_cli(&[
        "--config",
        config1.to_str().unwrap(),
        "eval",
        "--ground-truth",
        "/nonexistent/gt.csv",
    ]);
    assert_eq!(missing_gt.status.code(), Some(3));
    let bad_config = run_cli(&["--config", "/nonexistent/run.toml", "detect"]);
    assert_eq!(bad_config.status.code(), Some(2));

    println!(
        "acceptance 7 (hermetic e2e: {} output files byte-identical across runs, offline): PASS",
        tree1.len()
    );
}

// ---------------------------------------------------------------------
// 8. Evaluation harness: hand-counted accuracies on the 10-record
//    fixture with the string-equality judge; derangement baseline.
// ---------------------------------------------------------------------

#[test]
fn acceptance_8_evaluation_harness() {
    let load = load_ground_truth(repo_root().join("fixtures/ground_truth_10.csv")).unwrap();
    assert_eq!(load.records.len(), 10);
    assert!(load.errors.is_empty());
    let gts = load.records;

    // Agreement pattern per field: correct for the first k records.
    // Hand counts: 8, 6, 5, 7, 9 of 10.
    let correct_counts: [(&str, usize); 5] = [
        ("targeted_country", 8),
        ("attacking_country", 6),
        ("goal_category", 5),
        ("goal_description", 7),
        ("event_description", 9),
    ];
    let mut annotations = BTreeMap::new();
    for (i, gt) in gts.iter().enumerate() {
        let pick = |field: &str, value: &str, k: usize| {
            if i < k {
                value.to_owned()
            } else {
                format!("mismatch-{field}-{i}")
            }
        };
        annotations.insert(
            gt.record_id.clone(),
            coordscope_core::annotate::GoalAnnotation {
                targeted_country: pick("targeted_country", &gt.targeted_country, 8),
                attacking_country: pick("attacking_country", &gt.attacking_country, 6),
                goal_category: pick("goal_category", &gt.goal_category, 5),
                goal_description: pick("goal_description", &gt.goal_description, 7),
                event_description: pick("event_description", &gt.event_description, 9),
                raw_response: "crafted".into(),
            },
        );
    }

    let report = evaluate_catalogue(&gts, &annotations, &StringEqualityJudge, 20220424).unwrap();
    for (field, correct) in correct_counts {
        let row = report.rows.iter().find(|r| r.field == field).unwrap();
        let expected = correct as f64 / 10.0;
        assert!(
            (row.accuracy - expected).abs() < 1e-12,
            "{field}: accuracy {} != hand count {expected}",
            row.accuracy
        );
        assert!(
            row.baseline_accuracy <= row.accuracy,
            "{field}: baseline exceeds matched accuracy"
        );
    }

    // The baseline pairing is a derangement: no judgment pairs a record
    // with itself, every record appears exactly once as the mismatched
    // ground truth.
    let mut partners: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for judgment in &report.baseline_judgments {
        let (record, partner) = judgment.record_id.split_once('~').expect("baseline id form");
        assert_ne!(record, partner, "derangement must not self-pair");
        partners.entry(record).or_default().insert(partner);
    }
    assert_eq!(partners.len(), 10);
    for (record, set) in &partners {
        assert_eq!(set.len(), 1, "{record} paired with several partners");
    }
    println!("acceptance 8 (evaluation harness: hand-counted accuracies, verified derangement): PASS");
}

// ---------------------------------------------------------------------
// 9. Cache discipline: a warm-cache annotate rerun issues zero backend
//    calls.
// ---------------------------------------------------------------------

#[test]
fn acceptance_9_cache_discipline() {
    use coordscope_core::annotate::{Annotator, FallacyList, GoalPromptOptions};
    use coordscope_core::gateway::{
        BackendScript, CountingBackend, DiskCache, GatewayConfig, LlmGateway, ScriptRule,
        ScriptedBackend,
    };
    use std::sync::Arc;

    // In-process: a counting mock observes zero calls on the rerun.
    let tmp = tempfile::tempdir().unwrap();
    let cache_dir = tmp.path().join("cache");
    let script = BackendScript {
        rules: vec![
            ScriptRule {
                prompt_digest: None,
                tag: Some("goal".into()),
                contains: None,
                response: "Targeted country: France\nAttacking country: unknown\nGoal category: x\nGoal description: y\nEvent description: z".into(),
            },
            ScriptRule {
                prompt_digest: None,
                tag: Some("bend".into()),
                contains: None,
                response: "Posts: 1\nExplanation: fits".into(),
            },
            ScriptRule {
                prompt_digest: None,
                tag: Some("frame".into()),
                contains: None,
                response: "Problem: p\nCause: c\nRemedy: r\nMetaphors: m\nCatchphrases: s\nFrame examples: e\nCultural cues: u\nRhetorical fallacies: none".into(),
            },
        ],
        default_response: None,
    };
    let slice = golden_slice();
    let annotate_with = |backend: Arc<CountingBackend<ScriptedBackend>>| {
        let annotator = Annotator {
            backend: backend.clone(),
            gateway: Arc::new(LlmGateway::new(
                Some(DiskCache::open(&cache_dir).unwrap()),
                GatewayConfig::default(),
            )),
            model_id: "mock-model".into(),
            fallacies: FallacyList::standard(),
            goal_options: GoalPromptOptions::default(),
        };
        annotator.annotate_slice(&slice).unwrap()
    };
    let cold_backend = Arc::new(CountingBackend::new(ScriptedBackend::new("annotator", script.clone())));
    let first = annotate_with(cold_backend.clone());
    assert_eq!(cold_backend.calls(), 10, "cold run issues goal + 8 tactics + frame");
    let warm_backend = Arc::new(CountingBackend::new(ScriptedBackend::new("annotator", script)));
    let second = annotate_with(warm_backend.clone());
    assert_eq!(warm_backend.calls(), 0, "warm rerun must issue zero backend calls");
    assert_eq!(first, second);

    // CLI-level: rerun cmd_annotate against a failing backend with the
    // same cache; it can only succeed if nothing reaches the backend.
    let e2e = tempfile::tempdir().unwrap();
    let cache = e2e.path().join("cache");
    let out_mock = e2e.path().join("out_mock");
    let out_failing = e2e.path().join("out_failing");
    let config_mock = write_run_config(e2e.path(), &out_mock, &cache, "mock");
    let dir2 = e2e.path().join("failing");
    std::fs::create_dir_all(&dir2).unwrap();
    let config_failing = write_run_config(&dir2, &out_failing, &cache, "failing");

    assert_success(&run_cli(&["--config", config_mock.to_str().unwrap(), "detect"]), "detect");
    assert_success(&run_cli(&["--config", config_mock.to_str().unwrap(), "concern"]), "concern");
    assert_success(&run_cli(&["--config", config_mock.to_str().unwrap(), "annotate"]), "annotate (cold)");

    std::fs::create_dir_all(&out_failing).unwrap();
    std::fs::copy(out_mock.join("campaigns.jsonl"), out_failing.join("campaigns.jsonl")).unwrap();
    std::fs::copy(out_mock.join("labels.jsonl"), out_failing.join("labels.jsonl")).unwrap();
    assert_success(
        &run_cli(&["--config", config_failing.to_str().unwrap(), "annotate"]),
        "annotate (warm cache, failing backend)",
    );
    assert_eq!(
        std::fs::read(out_mock.join("annotations.jsonl")).unwrap(),
        std::fs::read(out_failing.join("annotations.jsonl")).unwrap(),
        "warm-cache annotations must be identical"
    );
    println!("acceptance 9 (cache discipline: warm rerun issues zero backend calls): PASS");
}
