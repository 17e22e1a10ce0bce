//! Subcommand implementations. Each takes the parsed run config plus
//! global options and writes its artifacts under the output directory;
//! reruns with a warm cache and fixed seeds are byte-identical.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use coordscope_core::annotate::{
    build_bend_prompt, build_frame_prompt, build_goal_prompt, slice_campaign, Annotator,
    BendTactic, EventWindowConfig, FallacyList, GoalPromptOptions, SliceRecord,
};
use coordscope_core::concern::{
    build_concern_prompt, concern_frequencies, export_instruction_pairs, label_posts,
    per_campaign_frequencies, sample_teacher_set, write_campaign_frequency_csv,
    write_frequency_csv, ConcernLabelSet, ConcernTaxonomy, TrainingMetadata,
};
use coordscope_core::coordination::{
    extract_campaigns, filter_campaigns, group_by_fingerprint, write_campaigns_jsonl,
    write_groups_jsonl, write_histogram_csv, Campaign, GroupingOptions,
};
use coordscope_core::ingest::{corpus_stats, load_corpus, CorpusFilters, Post, PostType};
use coordscope_core::metrics::{align, metric_report, write_metrics_csv, DEFAULT_BOOTSTRAP_ITERATIONS};
use coordscope_core::validation::{
    build_generation_prompt, evaluate_catalogue, generate_synthetic_posts, load_ground_truth,
    write_eval_csv, write_judgment_log, GroundTruthCampaign,
};
use serde::Serialize;

use crate::backends::{
    build_chat_backend, build_classifier, build_gateway, build_judge, model_id, resolve_backend,
};
use crate::config::RunConfig;
use crate::{CliError, GlobalOpts};

fn create_output_dir(config: &RunConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(&config.output_dir)
        .map_err(|e| CliError::Io(format!("cannot create output dir: {e}")))
}

fn out_file(config: &RunConfig, name: &str) -> Result<BufWriter<File>, CliError> {
    let path = config.output_dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("cannot write `{}`: {e}", path.display())))
}

fn write_json_file<T: Serialize>(config: &RunConfig, name: &str, value: &T) -> Result<(), CliError> {
    let mut w = out_file(config, name)?;
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| CliError::Io(format!("cannot serialize `{name}`: {e}")))?;
    w.write_all(b"\n")
        .map_err(|e| CliError::Io(format!("cannot write `{name}`: {e}")))?;
    Ok(())
}

fn read_corpus(config: &RunConfig) -> Result<(Vec<Post>, u64), CliError> {
    let reader = load_corpus(
        &config.corpus.path,
        config.corpus.fields.clone(),
        CorpusFilters::default(),
    )
    .map_err(|e| CliError::Io(e.to_string()))?;
    let mut reader = reader;
    let posts: Vec<Post> = reader.by_ref().collect();
    for sample in reader.error_samples() {
        log::warn!("corpus parse error: {sample}");
    }
    Ok((posts, reader.error_count()))
}

fn load_taxonomy(config: &RunConfig) -> Result<ConcernTaxonomy, CliError> {
    ConcernTaxonomy::from_toml_file(&config.taxonomy.path)
        .map_err(|e| CliError::Config(e.to_string()))
}

fn grouping_options(config: &RunConfig) -> GroupingOptions {
    let mut options = GroupingOptions {
        rule: config.detection.match_rule,
        min_hashtags: config.thresholds.min_hashtags,
        ..GroupingOptions::default()
    };
    if config.detection.include_reposts {
        options.include_types.insert(PostType::Repost);
    }
    options
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::Io(format!("cannot read `{}`: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: T = serde_json::from_str(&line).map_err(|e| {
            CliError::Io(format!("{} line {}: {e}", path.display(), i + 1))
        })?;
        out.push(value);
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct DetectSummary {
    pub total_posts: u64,
    pub parse_errors: u64,
    pub fingerprint_groups: usize,
    pub campaigns_before_filter: usize,
    pub campaigns: usize,
    pub coordinated_accounts: usize,
    pub coordinated_posts: u64,
    pub coordinated_post_share_percent: f64,
}

/// detect: fingerprint posts, group, extract connected components, keep
/// campaigns at the size threshold, and write the reports.
pub fn cmd_detect(config: &RunConfig, _opts: &GlobalOpts) -> Result<DetectSummary, CliError> {
    create_output_dir(config)?;
    let (posts, parse_errors) = read_corpus(config)?;
    let options = grouping_options(config);
    log::info!(
        "detect: rule {:?}, reposts {}",
        options.rule,
        if config.detection.include_reposts { "included" } else { "excluded" }
    );
    let groups = group_by_fingerprint(&posts, &options);
    let all_campaigns = extract_campaigns(&groups);
    let campaigns = filter_campaigns(all_campaigns.clone(), config.thresholds.min_campaign_accounts);

    let mut w = out_file(config, "campaigns.jsonl")?;
    write_campaigns_jsonl(&campaigns, &mut w).map_err(|e| CliError::Io(e.to_string()))?;
    let mut w = out_file(config, "fingerprint_groups.jsonl")?;
    write_groups_jsonl(&groups, &mut w).map_err(|e| CliError::Io(e.to_string()))?;
    let mut w = out_file(config, "cluster_sizes.csv")?;
    write_histogram_csv(&campaigns, &mut w).map_err(|e| CliError::Io(e.to_string()))?;

    let coordinated: std::collections::BTreeSet<&str> = campaigns
        .iter()
        .flat_map(|c| c.accounts.iter().map(|s| s.as_str()))
        .collect();
    let coordinated_posts = posts
        .iter()
        .filter(|p| coordinated.contains(p.account_id.as_str()))
        .count() as u64;
    let summary = DetectSummary {
        total_posts: posts.len() as u64,
        parse_errors,
        fingerprint_groups: groups.len(),
        campaigns_before_filter: all_campaigns.len(),
        campaigns: campaigns.len(),
        coordinated_accounts: coordinated.len(),
        coordinated_posts,
        coordinated_post_share_percent: if posts.is_empty() {
            0.0
        } else {
            coordinated_posts as f64 * 100.0 / posts.len() as f64
        },
    };
    write_json_file(config, "detect_summary.json", &summary)?;
    println!(
        "detect: {} campaigns (>= {} accounts) from {} groups; {} coordinated accounts authored {} posts ({:.1}% of corpus)",
        summary.campaigns,
        config.thresholds.min_campaign_accounts,
        summary.fingerprint_groups,
        summary.coordinated_accounts,
        summary.coordinated_posts,
        summary.coordinated_post_share_percent,
    );
    Ok(summary)
}

/// stats: corpus tallies; the daily series splits by coordination when a
/// campaigns report is available.
pub fn cmd_stats(
    config: &RunConfig,
    _opts: &GlobalOpts,
    campaigns_path: Option<&Path>,
) -> Result<(), CliError> {
    create_output_dir(config)?;
    let (posts, parse_errors) = read_corpus(config)?;
    let default_campaigns = config.output_dir.join("campaigns.jsonl");
    let campaigns_file = campaigns_path
        .map(Path::to_path_buf)
        .or_else(|| default_campaigns.exists().then_some(default_campaigns));
    let coordinated = match campaigns_file {
        Some(path) => {
            let campaigns: Vec<Campaign> = read_jsonl(&path)?;
            Some(
                campaigns
                    .into_iter()
                    .flat_map(|c| c.accounts)
                    .collect::<std::collections::BTreeSet<String>>(),
            )
        }
        None => None,
    };
    let stats = corpus_stats(&posts, coordinated.as_ref());
    let mut w = out_file(config, "corpus_stats_daily.csv")?;
    stats
        .write_daily_csv(&mut w)
        .map_err(|e| CliError::Io(e.to_string()))?;
    write_json_file(config, "corpus_stats.json", &stats)?;
    println!(
        "stats: {} posts ({} parse errors), {} days, {} languages",
        stats.total_posts,
        parse_errors,
        stats.daily.len(),
        stats.by_language.len()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct ConcernSummary {
    pub labeled: usize,
    pub failures: usize,
    pub unknown_tokens: u64,
}

/// concern: label posts (teacher-sampled or full corpus), write label
/// records and frequency reports, optionally export instruction pairs.
pub fn cmd_concern(
    config: &RunConfig,
    opts: &GlobalOpts,
    export_instructions: bool,
    teacher_sample: Option<usize>,
) -> Result<ConcernSummary, CliError> {
    create_output_dir(config)?;
    let taxonomy = load_taxonomy(config)?;
    let (posts, _) = read_corpus(config)?;
    let selected: Vec<Post> = match teacher_sample {
        Some(n) => sample_teacher_set(&posts, n, config.seeds.master)
            .into_iter()
            .cloned()
            .collect(),
        None => posts.clone(),
    };

    if opts.dry_run {
        for post in &selected {
            println!("--- prompt for post {} ---", post.post_id);
            println!("{}", build_concern_prompt(&taxonomy, &post.text));
        }
        return Ok(ConcernSummary { labeled: 0, failures: 0, unknown_tokens: 0 });
    }

    let gateway = build_gateway(config, opts.cache_dir.as_deref())?;
    let (name, entry) = resolve_backend(config, "concern", opts.backend.as_deref())?;
    let classifier = build_classifier(&name, entry, &taxonomy, gateway)?;
    let run = label_posts(&selected, classifier.as_ref(), config.cache.max_in_flight)
        .map_err(|e| CliError::Backend(e.to_string()))?;

    let mut w = out_file(config, "labels.jsonl")?;
    for set in run.labeled() {
        writeln!(w, "{}", serde_json::to_string(set).expect("serializable"))
            .map_err(|e| CliError::Io(e.to_string()))?;
    }
    let failures: Vec<_> = run.failures().collect();
    if !failures.is_empty() {
        let mut w = out_file(config, "label_failures.jsonl")?;
        for failure in &failures {
            writeln!(w, "{}", serde_json::to_string(failure).expect("serializable"))
                .map_err(|e| CliError::Io(e.to_string()))?;
        }
    }

    let labeled: Vec<ConcernLabelSet> = run.labeled().cloned().collect();
    let table = concern_frequencies(&labeled);
    let mut w = out_file(config, "concern_frequencies.csv")?;
    write_frequency_csv(&table, &mut w).map_err(|e| CliError::Io(e.to_string()))?;

    let campaigns_path = config.output_dir.join("campaigns.jsonl");
    if campaigns_path.exists() {
        let campaigns: Vec<Campaign> = read_jsonl(&campaigns_path)?;
        let by_post: BTreeMap<String, ConcernLabelSet> = labeled
            .iter()
            .map(|set| (set.post_id.clone(), set.clone()))
            .collect();
        let rows = per_campaign_frequencies(&campaigns, &posts, &by_post);
        let mut w = out_file(config, "per_campaign_frequencies.csv")?;
        write_campaign_frequency_csv(&rows, &mut w).map_err(|e| CliError::Io(e.to_string()))?;
    }

    if export_instructions {
        let by_id: BTreeMap<&str, &ConcernLabelSet> = labeled
            .iter()
            .map(|set| (set.post_id.as_str(), set))
            .collect();
        let pairs: Vec<(&Post, &ConcernLabelSet)> = selected
            .iter()
            .filter_map(|post| by_id.get(post.post_id.as_str()).map(|set| (post, *set)))
            .collect();
        export_instruction_pairs(
            config.output_dir.join("instruction_pairs.jsonl"),
            &pairs,
            &taxonomy,
            &TrainingMetadata::default(),
        )
        .map_err(|e| CliError::Io(e.to_string()))?;
    }

    let summary = ConcernSummary {
        labeled: labeled.len(),
        failures: failures.len(),
        unknown_tokens: labeled.iter().map(|s| s.unknown_tokens as u64).sum(),
    };
    println!(
        "concern: labeled {} posts ({} failures, {} unknown tokens dropped)",
        summary.labeled, summary.failures, summary.unknown_tokens
    );
    Ok(summary)
}

fn load_windows(config: &RunConfig) -> Result<EventWindowConfig, CliError> {
    let path = config
        .windows
        .as_ref()
        .ok_or_else(|| CliError::Config("annotate needs a [windows] file".into()))?;
    EventWindowConfig::from_toml_file(&path.path).map_err(|e| CliError::Config(e.to_string()))
}

fn load_fallacies(config: &RunConfig) -> Result<FallacyList, CliError> {
    match &config.fallacies {
        Some(path) => {
            FallacyList::from_toml_file(&path.path).map_err(|e| CliError::Config(e.to_string()))
        }
        None => Ok(FallacyList::standard()),
    }
}

#[derive(Debug, Serialize)]
pub struct AnnotateSummary {
    pub slices: usize,
    pub annotated: usize,
    pub skipped_empty: usize,
}

/// annotate: slice retained campaigns by concern x window and run the
/// goal / tactic / framing prompts over each non-empty slice.
pub fn cmd_annotate(config: &RunConfig, opts: &GlobalOpts) -> Result<AnnotateSummary, CliError> {
    create_output_dir(config)?;
    let (posts, _) = read_corpus(config)?;
    let windows = load_windows(config)?;
    let fallacies = load_fallacies(config)?;

    let campaigns_path = config.output_dir.join("campaigns.jsonl");
    if !campaigns_path.exists() {
        return Err(CliError::Io(format!(
            "`{}` not found; run `detect` first",
            campaigns_path.display()
        )));
    }
    let campaigns: Vec<Campaign> = read_jsonl(&campaigns_path)?;
    let selected: Vec<&Campaign> = if config.annotation.campaign_ids.is_empty() {
        campaigns.iter().collect()
    } else {
        campaigns
            .iter()
            .filter(|c| config.annotation.campaign_ids.contains(&c.campaign_id))
            .collect()
    };

    let labels_path = config.output_dir.join("labels.jsonl");
    let labels_by_post: BTreeMap<String, ConcernLabelSet> = if labels_path.exists() {
        read_jsonl::<ConcernLabelSet>(&labels_path)?
            .into_iter()
            .map(|set| (set.post_id.clone(), set))
            .collect()
    } else {
        BTreeMap::new()
    };
    let concerns: Vec<Option<String>> = if config.annotation.concerns.is_empty() {
        vec![None]
    } else {
        config.annotation.concerns.iter().cloned().map(Some).collect()
    };
    for concern in concerns.iter().flatten() {
        if labels_by_post.is_empty() {
            return Err(CliError::Config(format!(
                "annotation filters on concern `{concern}` but `{}` is missing; run `concern` first",
                labels_path.display()
            )));
        }
    }

    let goal_options = GoalPromptOptions {
        goal_categories: config.annotation.goal_categories.clone(),
    };

    // Slicing is deterministic, so dry-run prints exactly the prompts a
    // real run would send.
    let mut slices = Vec::new();
    for campaign in &selected {
        let member_posts = coordscope_core::coordination::campaign_posts(campaign, &posts);
        for concern in &concerns {
            slices.extend(slice_campaign(
                campaign.campaign_id,
                &member_posts,
                &labels_by_post,
                concern.as_deref(),
                &windows,
                config.thresholds.sample_k,
                config.seeds.master,
            ));
        }
    }

    if opts.dry_run {
        for slice in slices.iter().filter(|s| !s.is_empty()) {
            println!(
                "--- campaign {} / {} / {} ---",
                slice.campaign_id,
                slice.concern.as_deref().unwrap_or("<all>"),
                slice.window_name
            );
            println!("{}", build_goal_prompt(slice, &goal_options).expect("non-empty"));
            for tactic in BendTactic::ALL {
                println!("{}", build_bend_prompt(slice, tactic).expect("non-empty"));
            }
            println!("{}", build_frame_prompt(slice, &fallacies).expect("non-empty"));
        }
        return Ok(AnnotateSummary { slices: slices.len(), annotated: 0, skipped_empty: 0 });
    }

    let gateway = build_gateway(config, opts.cache_dir.as_deref())?;
    let (name, entry) = resolve_backend(config, "annotator", opts.backend.as_deref())?;
    let backend = build_chat_backend(&name, entry)?;
    let annotator = Annotator {
        backend,
        gateway,
        model_id: model_id(entry),
        fallacies,
        goal_options,
    };

    let mut records = Vec::new();
    let mut annotated = 0usize;
    let mut skipped = 0usize;
    for slice in &slices {
        if slice.is_empty() {
            skipped += 1;
            log::warn!(
                "empty slice: campaign {} concern {:?} window {}",
                slice.campaign_id,
                slice.concern,
                slice.window_name
            );
            records.push(SliceRecord::Skipped {
                campaign_id: slice.campaign_id,
                concern: slice.concern.clone(),
                window_name: slice.window_name.clone(),
                available: slice.available,
                skipped: true,
            });
            continue;
        }
        let annotation = annotator
            .annotate_slice(slice)
            .map_err(|e| CliError::Backend(e.to_string()))?;
        annotated += 1;
        records.push(SliceRecord::Annotated(Box::new(annotation)));
    }
    let mut w = out_file(config, "annotations.jsonl")?;
    coordscope_core::annotate::write_slice_records(&records, &mut w)
        .map_err(|e| CliError::Io(e.to_string()))?;

    let summary = AnnotateSummary {
        slices: slices.len(),
        annotated,
        skipped_empty: skipped,
    };
    println!(
        "annotate: {} slices ({} annotated, {} empty)",
        summary.slices, summary.annotated, summary.skipped_empty
    );
    Ok(summary)
}

#[derive(Debug, Serialize)]
pub struct EvalSummary {
    pub records: usize,
    pub generated: usize,
    pub generation_failures: usize,
}

/// eval: generate synthetic posts per catalogue record, annotate them
/// with the annotate-module prompts, judge per-field equivalence, and
/// write the report.
pub fn cmd_eval(
    config: &RunConfig,
    opts: &GlobalOpts,
    ground_truth_override: Option<&Path>,
) -> Result<EvalSummary, CliError> {
    create_output_dir(config)?;
    let gt_path: PathBuf = match ground_truth_override {
        Some(p) => p.to_path_buf(),
        None => config
            .ground_truth
            .as_ref()
            .map(|p| p.path.clone())
            .ok_or_else(|| CliError::Config("eval needs a [ground_truth] file".into()))?,
    };
    let load = load_ground_truth(&gt_path).map_err(|e| CliError::Io(e.to_string()))?;
    for err in &load.errors {
        log::warn!("ground truth: {err}");
    }
    let records = load.records;
    println!("eval: {} catalogue records loaded", records.len());

    if opts.dry_run {
        for gt in &records {
            println!("--- generation prompt for {} ---", gt.record_id);
            println!("{}", build_generation_prompt(gt));
        }
        return Ok(EvalSummary { records: records.len(), generated: 0, generation_failures: 0 });
    }

    let gateway = build_gateway(config, opts.cache_dir.as_deref())?;
    let (gen_name, gen_entry) = resolve_backend(config, "generator", None)?;
    let generator = build_chat_backend(&gen_name, gen_entry)?;
    let generator_model = model_id(gen_entry);
    let (ann_name, ann_entry) = resolve_backend(config, "annotator", opts.backend.as_deref())?;
    let annotator = Annotator {
        backend: build_chat_backend(&ann_name, ann_entry)?,
        gateway: gateway.clone(),
        model_id: model_id(ann_entry),
        fallacies: load_fallacies(config)?,
        goal_options: GoalPromptOptions {
            goal_categories: config.annotation.goal_categories.clone(),
        },
    };
    let (judge_name, judge_entry) = resolve_backend(config, "judge", None)?;
    let judge = build_judge(&judge_name, judge_entry, gateway.clone())?;

    let mut synthetic_sets = Vec::new();
    let mut annotations = BTreeMap::new();
    let mut generation_failures = Vec::new();
    for gt in &records {
        let set = match generate_synthetic_posts(gt, generator.as_ref(), &gateway, &generator_model)
        {
            Ok(set) => set,
            Err(e) => {
                log::warn!("generation failed for {}: {e}", gt.record_id);
                generation_failures.push(serde_json::json!({
                    "record_id": gt.record_id,
                    "error": e.to_string(),
                }));
                continue;
            }
        };
        // The synthetic posts become a pseudo-slice so annotation reuses
        // the exact prompts and parsers applied to real campaigns.
        let slice = synthetic_slice(gt, &set.posts);
        let goal = annotator
            .annotate_goal(&slice)
            .map_err(|e| CliError::Backend(e.to_string()))?;
        annotations.insert(gt.record_id.clone(), goal);
        synthetic_sets.push(set);
    }

    let mut w = out_file(config, "synthetic_posts.jsonl")?;
    for set in &synthetic_sets {
        writeln!(w, "{}", serde_json::to_string(set).expect("serializable"))
            .map_err(|e| CliError::Io(e.to_string()))?;
    }
    let mut w = out_file(config, "eval_annotations.jsonl")?;
    for (record_id, goal) in &annotations {
        let line = serde_json::json!({"record_id": record_id, "goal": goal});
        writeln!(w, "{line}").map_err(|e| CliError::Io(e.to_string()))?;
    }
    if !generation_failures.is_empty() {
        let mut w = out_file(config, "generation_failures.jsonl")?;
        for failure in &generation_failures {
            writeln!(w, "{failure}").map_err(|e| CliError::Io(e.to_string()))?;
        }
    }

    let report = evaluate_catalogue(&records, &annotations, judge.as_ref(), config.seeds.master)
        .map_err(|e| CliError::Backend(e.to_string()))?;
    let mut w = out_file(config, "eval_report.csv")?;
    write_eval_csv(&report, &mut w).map_err(|e| CliError::Io(e.to_string()))?;
    let mut w = out_file(config, "eval_judgments.jsonl")?;
    write_judgment_log(&report, &mut w).map_err(|e| CliError::Io(e.to_string()))?;

    for row in &report.rows {
        println!(
            "eval: {:<20} accuracy {:.3} baseline {:.3} (n={})",
            row.field, row.accuracy, row.baseline_accuracy, row.n
        );
    }
    Ok(EvalSummary {
        records: records.len(),
        generated: synthetic_sets.len(),
        generation_failures: generation_failures.len(),
    })
}

/// Wraps generated post texts as a slice so the annotate module applies
/// unchanged.
fn synthetic_slice(
    gt: &GroundTruthCampaign,
    texts: &[String],
) -> coordscope_core::annotate::CampaignSlice {
    let epoch = coordscope_core::ingest::parse_timestamp("1970-01-01T00:00:00Z").expect("epoch");
    let posts: Vec<Post> = texts
        .iter()
        .enumerate()
        .map(|(i, text)| {
            Post::new(
                format!("{}:{}", gt.record_id, i + 1),
                "synthetic",
                epoch,
                text.clone(),
                PostType::Original,
                None,
            )
        })
        .collect();
    coordscope_core::annotate::CampaignSlice {
        campaign_id: 0,
        concern: None,
        window_name: "synthetic".into(),
        available: posts.len(),
        sampled_posts: posts,
        sample_seed: 0,
    }
}

/// metrics: score a predictions file against a gold file, per taxonomy
/// category, with bootstrap stds and constant-label baselines.
pub fn cmd_metrics(
    config: &RunConfig,
    _opts: &GlobalOpts,
    predictions_path: &Path,
    gold_path: &Path,
) -> Result<(), CliError> {
    create_output_dir(config)?;
    let taxonomy = load_taxonomy(config)?;
    let predictions: Vec<ConcernLabelSet> = read_jsonl(predictions_path)?;
    let gold: Vec<ConcernLabelSet> = read_jsonl(gold_path)?;
    let pairs = align(&predictions, &gold).map_err(|e| CliError::Config(e.to_string()))?;
    let categories: Vec<String> = taxonomy
        .categories
        .iter()
        .map(|c| c.name.clone())
        .collect();
    let rows = metric_report(
        &pairs,
        &categories,
        DEFAULT_BOOTSTRAP_ITERATIONS,
        config.seeds.master,
    )
    .map_err(|e| CliError::Config(e.to_string()))?;
    let mut w = out_file(config, "metrics.csv")?;
    write_metrics_csv(&rows, &mut w).map_err(|e| CliError::Io(e.to_string()))?;
    for row in &rows {
        if row.skipped {
            println!("metrics: {:<24} skipped (undefined)", row.category);
        } else {
            println!(
                "metrics: {:<24} precision {:.3}+/-{:.3} f1 {:.3}+/-{:.3} auc {:.3}+/-{:.3}",
                row.category,
                row.precision.value,
                row.precision_std,
                row.f1.value,
                row.f1_std,
                row.roc_auc.value,
                row.roc_auc_std
            );
        }
    }
    println!("metrics: wrote {}", config.output_dir.join("metrics.csv").display());
    Ok(())
}
