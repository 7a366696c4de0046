use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use oodscore::dataset::{
    ingest_dataset, read_embedding_csv, read_embedding_dir, read_similarity_csv, AffinityLabel, ComplexRecord,
    Dataset, EmbeddingInput, EmbeddingSource, EmbeddingVector, IngestSources, IngestionReport, MeasurementKind,
};
use oodscore::embedding::{interaction_embeddings, project_tsne, render_projection};
use oodscore::metrics::{
    build_report, docking_success_rate, mean_enrichment, read_decoy_csv, DecoySet, MetricReport,
};
use oodscore::scorer::{has_features, load_scorer, save_scorer, ScorerKind};
use oodscore::split::{
    apply_clean_filter, build_ood_split, holdout_limited, stratified_kfold, SplitManifest,
};
use oodscore::synthetic::{generate, write_synthetic};
use oodscore::trainer::{
    self, ensemble_predict, predict_targets, protected_ids, track_curves, FinetuneProvenance, TrainingRun,
};
use oodscore::{Regime, TrainedEnsemble};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{DataConfig, LoadedConfig, MissingEmbeddingPolicy};
use crate::runs::{io_error, CompletedRun, RunDir, Workspace};
use crate::CliError;

const DATASET_FILE: &str = "dataset.json";
const SPLIT_FILE: &str = "split_manifest.json";
const ENSEMBLES_FILE: &str = "ensembles.json";
const REPORT_FILE: &str = "report.json";

fn regime_name(r: Regime) -> &'static str {
    match r {
        Regime::Skf => "SKF",
        Regime::Val => "VAL",
        Regime::Ft => "FT",
    }
}

fn kind_name(k: ScorerKind) -> &'static str {
    match k {
        ScorerKind::EmbeddingMlp => "embedding_mlp",
        ScorerKind::Fusion => "fusion",
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| io_error(path, e))
}

fn load_dataset(run: &CompletedRun) -> Result<Dataset, CliError> {
    let text = read_text(&run.file(DATASET_FILE))?;
    Dataset::from_json(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", run.file(DATASET_FILE).display())))
}

fn load_split(run: &CompletedRun) -> Result<SplitManifest, CliError> {
    let text = read_text(&run.file(SPLIT_FILE))?;
    SplitManifest::from_json(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", run.file(SPLIT_FILE).display())))
}

fn find_run(ws: &Workspace, explicit: Option<&str>, commands: &[&str], needed_for: &str) -> Result<CompletedRun, CliError> {
    let run = match explicit {
        Some(id) => ws.open(id).map_err(|e| match e {
            CliError::Prerequisite(m) => CliError::Prerequisite(format!("{m}; run `oodscore {}` first", commands[0])),
            other => other,
        })?,
        None => ws.latest(commands, needed_for)?,
    };
    if !commands.contains(&run.manifest.command.as_str()) {
        return Err(CliError::Validation(format!(
            "`{needed_for}` expects a {} run, `{}` is a {} run",
            commands.join(" or "),
            run.id(),
            run.manifest.command
        )));
    }
    Ok(run)
}

fn load_embedding_input(input: &EmbeddingInput) -> Result<BTreeMap<String, EmbeddingVector>, CliError> {
    Ok(match &input.source {
        EmbeddingSource::Csv(p) => {
            let f = fs::File::open(p).map_err(|e| io_error(p, e))?;
            read_embedding_csv(f, input.dimension, &p.display().to_string())?
        }
        EmbeddingSource::Directory(p) => read_embedding_dir(p, input.dimension)?,
    })
}

fn input_path(input: &EmbeddingInput) -> &Path {
    match &input.source {
        EmbeddingSource::Csv(p) | EmbeddingSource::Directory(p) => p,
    }
}

fn list_ids(ids: &[String]) -> String {
    const SHOWN: usize = 10;
    let head = ids.iter().take(SHOWN).map(String::as_str).collect::<Vec<_>>().join(", ");
    if ids.len() > SHOWN {
        format!("{head}, ... ({} total)", ids.len())
    } else {
        head
    }
}

pub fn synth(cfg: &LoadedConfig, ws: &Workspace) -> Result<PathBuf, CliError> {
    let spec = &cfg.config.synthetic;
    let (dataset, truth) = generate(spec)?;
    let mut run = ws.create_run("synth")?;
    let files = write_synthetic(&dataset, &truth, &run.path("data"))?;
    for p in [Some(&files.complexes), Some(&files.interaction), files.ligand.as_ref(), Some(&files.ground_truth)]
        .into_iter()
        .flatten()
    {
        run.record_output(p);
    }
    let mut pipeline = cfg.config.clone();
    let rel = |p: &Path| PathBuf::from("data").join(p.file_name().expect("generated file name"));
    pipeline.data = Some(DataConfig {
        complex_table: rel(&files.complexes),
        interaction: Some(EmbeddingInput {
            source: EmbeddingSource::Csv(rel(&files.interaction)),
            dimension: spec.embedding_dim,
        }),
        ligand: files.ligand.as_ref().map(|p| EmbeddingInput {
            source: EmbeddingSource::Csv(rel(p)),
            dimension: spec.ligand_dim,
        }),
        provenance: dataset.provenance().to_string(),
        missing_embeddings: MissingEmbeddingPolicy::Error,
    });
    if pipeline.split.targets.is_empty() {
        pipeline.split.targets = truth.target_clusters();
    }
    let text = serde_json::to_string_pretty(&pipeline).expect("config serializes");
    let pipeline_path = run.write("pipeline_config.json", text)?;
    println!(
        "synthetic dataset: {} complexes in {} clusters; targets {}",
        dataset.len(),
        dataset.cluster_ids().len(),
        pipeline.split.targets.keys().cloned().collect::<Vec<_>>().join(", ")
    );
    println!("pipeline config: {}", pipeline_path.display());
    run.finish(cfg)
}

#[derive(Serialize)]
struct IngestSummary<'a> {
    #[serde(flatten)]
    report: &'a IngestionReport,
    missing_embedding_policy: MissingEmbeddingPolicy,
    dropped_ids: Vec<String>,
    records: usize,
}

pub fn ingest(cfg: &LoadedConfig, ws: &Workspace) -> Result<PathBuf, CliError> {
    let data = cfg
        .config
        .data
        .as_ref()
        .ok_or_else(|| CliError::Validation("data: required by `ingest`".into()))?;
    let Some(interaction) = &data.interaction else {
        return Err(CliError::Validation("data.interaction: required by every scorer".into()));
    };
    let kind = cfg.config.scorer.scorer_kind;
    if kind == ScorerKind::Fusion && data.ligand.is_none() {
        return Err(CliError::Validation("data.ligand: required by the fusion scorer".into()));
    }
    let sources = IngestSources {
        interaction: Some(cfg.resolve_input(interaction)),
        ligand: data.ligand.as_ref().map(|l| cfg.resolve_input(l)),
        provenance: data.provenance.clone(),
    };
    let table = cfg.resolve(&data.complex_table);
    let (dataset, report) = ingest_dataset(&table, &sources)?;
    let missing: Vec<String> = dataset
        .records()
        .iter()
        .filter(|r| !has_features(r, kind))
        .map(|r| r.complex_id.clone())
        .collect();
    let dataset = match (data.missing_embeddings, missing.is_empty()) {
        (_, true) => dataset,
        (MissingEmbeddingPolicy::Error, false) => {
            return Err(CliError::Validation(format!(
                "{} complexes lack embeddings required by the {} scorer: {} (set data.missing_embeddings to \"drop\" to skip them)",
                missing.len(),
                kind_name(kind),
                list_ids(&missing)
            )))
        }
        (MissingEmbeddingPolicy::Drop, false) => {
            log::warn!("dropping {} complexes without required embeddings", missing.len());
            let gone: BTreeSet<&str> = missing.iter().map(String::as_str).collect();
            let kept = dataset
                .records()
                .iter()
                .filter(|r| !gone.contains(r.complex_id.as_str()))
                .cloned()
                .collect();
            Dataset::new(kept, dataset.provenance())?
        }
    };

    let mut run = ws.create_run("ingest")?;
    run.add_input(&table)?;
    for input in [&sources.interaction, &sources.ligand].into_iter().flatten() {
        run.add_input(input_path(input))?;
    }
    run.write(DATASET_FILE, dataset.to_json()?)?;
    let summary = IngestSummary {
        report: &report,
        missing_embedding_policy: data.missing_embeddings,
        dropped_ids: if data.missing_embeddings == MissingEmbeddingPolicy::Drop { missing } else { Vec::new() },
        records: dataset.len(),
    };
    run.write("ingestion_report.json", serde_json::to_string_pretty(&summary).expect("report serializes"))?;
    println!(
        "ingested {} complexes in {} clusters ({} dropped)",
        dataset.len(),
        dataset.cluster_ids().len(),
        summary.dropped_ids.len()
    );
    run.finish(cfg)
}

pub fn split(cfg: &LoadedConfig, ws: &Workspace, from: Option<&str>) -> Result<PathBuf, CliError> {
    let ingest_run = find_run(ws, from, &["ingest"], "split")?;
    let dataset = load_dataset(&ingest_run)?;
    let sc = &cfg.config.split;
    if sc.targets.is_empty() {
        return Err(CliError::Validation("split.targets: at least one target cluster is required".into()));
    }
    let mut manifest = build_ood_split(&dataset, &sc.targets, sc.seed)?;
    let mut run = ws.create_run("split")?;
    run.add_parent("ingest", &ingest_run);
    run.add_input(&ingest_run.file(DATASET_FILE))?;
    if let Some(path) = &sc.similarities {
        let path = cfg.resolve(path);
        run.add_input(&path)?;
        let sims = read_similarity_csv(fs::File::open(&path).map_err(|e| io_error(&path, e))?)?;
        let reference: Vec<String> = match &sc.clean_reference_ids {
            Some(ids) => ids.clone(),
            None => protected_ids(&manifest).into_iter().collect(),
        };
        manifest = apply_clean_filter(&manifest, &sims, &reference, &sc.clean_thresholds, sc.clean_rule)?;
    }
    if sc.folds >= 2 {
        manifest = stratified_kfold(&manifest, &dataset, sc.folds, sc.bins, sc.seed)?;
    }
    if let Some(n) = sc.holdout {
        manifest = holdout_limited(&manifest, n, sc.seed)?;
    }
    manifest.validate(&dataset)?;
    run.write(SPLIT_FILE, manifest.to_json())?;
    let targets: BTreeMap<&str, _> = manifest
        .targets
        .iter()
        .map(|(name, t)| {
            (
                name.as_str(),
                json!({
                    "cluster_id": t.cluster_id,
                    "test": t.test_ids.len(),
                    "holdout": t.holdout_ids.len(),
                    "reporting": t.test_ids.len() - t.holdout_ids.len(),
                }),
            )
        })
        .collect();
    let summary = json!({
        "train_val": manifest.train_val.ids.len(),
        "clean_excluded": manifest.clean_excluded.len(),
        "folds": manifest.k,
        "holdout": manifest.n_holdout,
        "targets": targets,
    });
    run.write("split_summary.json", serde_json::to_string_pretty(&summary).expect("summary serializes"))?;
    println!(
        "split: {} train/validation, {} excluded, {} targets",
        manifest.train_val.ids.len(),
        manifest.clean_excluded.len(),
        manifest.targets.len()
    );
    run.finish(cfg)
}

fn add_data_inputs(run: &mut RunDir, ws: &Workspace, split_run: &CompletedRun) -> Result<(), CliError> {
    run.add_input(&split_run.parent(ws, "ingest")?.file(DATASET_FILE))?;
    run.add_input(&split_run.file(SPLIT_FILE))
}

#[derive(Debug, Serialize, Deserialize)]
struct EnsembleEntry {
    /// The target the ensemble is specific to; `None` serves every target.
    target: Option<String>,
    dir: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct EnsembleMeta {
    regime: Regime,
    manifest_ref: String,
    validation_target: Option<String>,
    finetune: Option<FinetuneProvenance>,
    members: Vec<String>,
    best_epochs: Vec<usize>,
    mean_best_epoch: f64,
}

fn save_ensembles(run: &mut RunDir, trained: &[(Option<String>, TrainingRun)]) -> Result<(), CliError> {
    let mut index = Vec::new();
    for (i, (target, tr)) in trained.iter().enumerate() {
        let dir = format!("ensembles/{i:02}");
        let ens = &tr.ensemble;
        let mut members = Vec::new();
        for (m, model) in ens.members.iter().enumerate() {
            let name = format!("member_{m:02}.oodm");
            let path = run.path(&format!("{dir}/{name}"));
            fs::create_dir_all(path.parent().expect("member path has a parent")).map_err(|e| io_error(&path, e))?;
            save_scorer(model, &path)?;
            run.record_output(&path);
            members.push(name);
        }
        let meta = EnsembleMeta {
            regime: ens.regime,
            manifest_ref: ens.manifest_ref.clone(),
            validation_target: ens.validation_target.clone(),
            finetune: ens.finetune.clone(),
            members,
            best_epochs: ens.members.iter().map(|m| m.best_epoch).collect(),
            mean_best_epoch: ens.mean_best_epoch(),
        };
        run.write(&format!("{dir}/ensemble.json"), serde_json::to_string_pretty(&meta).expect("meta serializes"))?;
        let mut curves = Vec::new();
        track_curves(ens, None)
            .write_csv(&mut curves)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        run.write(&format!("{dir}/curves.csv"), curves)?;
        let audit = tr.merged_audit();
        let audit = json!({
            "gradient_ids": audit.gradient_ids,
            "validation_ids": audit.validation_ids,
            "eval_ids": audit.eval_ids,
        });
        run.write(&format!("{dir}/audit.json"), serde_json::to_string_pretty(&audit).expect("audit serializes"))?;
        index.push(EnsembleEntry {
            target: target.clone(),
            dir,
        });
        println!(
            "{} ensemble{}: {} members, mean best epoch {:.1}",
            regime_name(ens.regime),
            target.as_ref().map(|t| format!(" for {t}")).unwrap_or_default(),
            ens.members.len(),
            ens.mean_best_epoch()
        );
    }
    run.write(ENSEMBLES_FILE, serde_json::to_string_pretty(&index).expect("index serializes"))?;
    Ok(())
}

fn load_ensembles(run: &CompletedRun) -> Result<Vec<(Option<String>, TrainedEnsemble)>, CliError> {
    let index: Vec<EnsembleEntry> = serde_json::from_str(&read_text(&run.file(ENSEMBLES_FILE))?)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", run.file(ENSEMBLES_FILE).display())))?;
    index
        .into_iter()
        .map(|entry| {
            let dir = run.file(&entry.dir);
            let meta_path = dir.join("ensemble.json");
            let meta: EnsembleMeta = serde_json::from_str(&read_text(&meta_path)?)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", meta_path.display())))?;
            let members = meta
                .members
                .iter()
                .map(|m| load_scorer(&dir.join(m)).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.join(m).display()))))
                .collect::<Result<Vec<_>, _>>()?;
            let ens = TrainedEnsemble {
                members,
                regime: meta.regime,
                manifest_ref: meta.manifest_ref,
                validation_target: meta.validation_target,
                finetune: meta.finetune,
            };
            ens.validate()?;
            Ok((entry.target, ens))
        })
        .collect()
}

fn selected_targets(manifest: &SplitManifest, target: Option<&str>) -> Result<Vec<String>, CliError> {
    match target {
        Some(t) => {
            manifest.target(t)?;
            Ok(vec![t.to_string()])
        }
        None => Ok(manifest.targets.keys().cloned().collect()),
    }
}

pub fn train(
    cfg: &LoadedConfig,
    ws: &Workspace,
    regime: Regime,
    target: Option<&str>,
    from: Option<&str>,
) -> Result<PathBuf, CliError> {
    let split_run = find_run(ws, from, &["split"], "train")?;
    let dataset = load_dataset(&split_run.parent(ws, "ingest")?)?;
    let manifest = load_split(&split_run)?;
    let c = &cfg.config;
    let trained = match regime {
        Regime::Skf => {
            if target.is_some() {
                return Err(CliError::Validation("--target applies to the VAL regime only".into()));
            }
            vec![(None, trainer::cross_validate(&dataset, &manifest, &c.scorer, &c.trainer)?)]
        }
        Regime::Val => {
            if !manifest.has_holdouts() {
                return Err(CliError::Validation(format!(
                    "split run `{}` has no target holdouts; set split.holdout and rerun `oodscore split`",
                    split_run.id()
                )));
            }
            selected_targets(&manifest, target)?
                .into_iter()
                .map(|t| {
                    let tr = trainer::train_with_target_validation(&dataset, &manifest, &t, &c.scorer, &c.trainer)?;
                    Ok((Some(t), tr))
                })
                .collect::<Result<Vec<_>, CliError>>()?
        }
        Regime::Ft => unreachable!("fine-tuning has its own command"),
    };
    let mut run = ws.create_run("train")?;
    run.add_parent("split", &split_run);
    add_data_inputs(&mut run, ws, &split_run)?;
    run.argument("regime", regime_name(regime));
    if let Some(t) = target {
        run.argument("target", t);
    }
    save_ensembles(&mut run, &trained)?;
    run.finish(cfg)
}

pub fn finetune(cfg: &LoadedConfig, ws: &Workspace, source: &str, target: Option<&str>) -> Result<PathBuf, CliError> {
    let source_run = find_run(ws, Some(source), &["train"], "finetune")?;
    let split_run = source_run.parent(ws, "split")?;
    let dataset = load_dataset(&split_run.parent(ws, "ingest")?)?;
    let manifest = load_split(&split_run)?;
    let ensembles = load_ensembles(&source_run)?;
    let [(None, base)] = ensembles.as_slice() else {
        return Err(CliError::Validation(format!(
            "finetune needs an SKF source run; `{}` holds per-target ensembles",
            source_run.id()
        )));
    };
    if !manifest.has_holdouts() {
        return Err(CliError::Validation(format!(
            "split run `{}` has no target holdouts to fine-tune on; set split.holdout and rerun `oodscore split`",
            split_run.id()
        )));
    }
    let c = &cfg.config;
    let trained = selected_targets(&manifest, target)?
        .into_iter()
        .map(|t| {
            let tr = trainer::finetune(base, &dataset, &manifest, &t, &c.finetune, &c.trainer)?;
            Ok((Some(t), tr))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut run = ws.create_run("finetune")?;
    run.add_parent("train", &source_run);
    add_data_inputs(&mut run, ws, &split_run)?;
    run.add_input(&source_run.file("ensembles"))?;
    run.argument("regime", regime_name(Regime::Ft));
    run.argument("source", source_run.id());
    if let Some(t) = target {
        run.argument("target", t);
    }
    save_ensembles(&mut run, &trained)?;
    run.finish(cfg)
}

fn placeholder_record(id: &str, target: &str, interaction: Option<&EmbeddingVector>, ligand: Option<&EmbeddingVector>) -> ComplexRecord {
    ComplexRecord {
        complex_id: id.to_string(),
        label: AffinityLabel::new(0.0, MeasurementKind::Kd).expect("zero is finite"),
        cluster_id: target.to_string(),
        interaction_embedding: interaction.cloned(),
        ligand_embedding: ligand.cloned(),
        molecular_weight: None,
    }
}

/// Fill empty decoy scores with ensemble predictions from decoy embeddings.
fn score_decoys(
    cfg: &LoadedConfig,
    sets: &mut [DecoySet],
    ensembles: &[(Option<String>, TrainedEnsemble)],
) -> Result<(), CliError> {
    if sets.iter().all(|s| s.entries.iter().all(|e| e.score.is_some())) {
        return Ok(());
    }
    let ev = &cfg.config.evaluate;
    let interaction = ev
        .decoy_interaction
        .as_ref()
        .ok_or_else(|| CliError::Validation("evaluate.decoy_interaction: required to score unscored decoys".into()))?;
    let interaction = load_embedding_input(&cfg.resolve_input(interaction))?;
    let ligand = ev
        .decoy_ligand
        .as_ref()
        .map(|l| load_embedding_input(&cfg.resolve_input(l)))
        .transpose()?;
    for set in sets.iter_mut() {
        let ens = ensembles
            .iter()
            .find(|(t, _)| t.as_deref() == Some(set.target_id.as_str()))
            .or_else(|| ensembles.iter().find(|(t, _)| t.is_none()))
            .map(|(_, e)| e)
            .ok_or_else(|| {
                CliError::Validation(format!("no ensemble in this run can score decoys of target `{}`", set.target_id))
            })?;
        let records: Vec<ComplexRecord> = set
            .entries
            .iter()
            .filter(|e| e.score.is_none())
            .map(|e| {
                placeholder_record(
                    &e.entry_id,
                    &set.target_id,
                    interaction.get(&e.entry_id),
                    ligand.as_ref().and_then(|l| l.get(&e.entry_id)),
                )
            })
            .collect();
        let refs: Vec<&ComplexRecord> = records.iter().collect();
        let scores = ensemble_predict(ens, &refs)?;
        for e in set.entries.iter_mut().filter(|e| e.score.is_none()) {
            e.score = Some(scores[&e.entry_id]);
        }
    }
    Ok(())
}

fn read_decoys(cfg: &LoadedConfig, run: &mut RunDir, path: &Path) -> Result<Vec<DecoySet>, CliError> {
    let path = cfg.resolve(path);
    run.add_input(&path)?;
    Ok(read_decoy_csv(fs::File::open(&path).map_err(|e| io_error(&path, e))?)?)
}

pub fn evaluate(cfg: &LoadedConfig, ws: &Workspace, run_id: Option<&str>) -> Result<PathBuf, CliError> {
    let source = find_run(ws, run_id, &["train", "finetune"], "evaluate")?;
    let split_run = source.parent(ws, "split")?;
    let dataset = load_dataset(&split_run.parent(ws, "ingest")?)?;
    let manifest = load_split(&split_run)?;
    let ensembles = load_ensembles(&source)?;

    let mut predictions: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for (target, ens) in &ensembles {
        match target {
            None => predictions.extend(predict_targets(ens, &dataset, &manifest)?),
            Some(t) => {
                let ids = manifest.target(t)?.reporting_ids();
                let records = dataset.select(&ids).map_err(|id| CliError::Runtime(format!("complex `{id}` missing")))?;
                predictions.insert(t.clone(), ensemble_predict(ens, &records)?);
            }
        }
    }
    let mut covered = manifest.clone();
    covered.targets.retain(|name, _| predictions.contains_key(name));
    let mut report = build_report(&predictions, &dataset, &covered)?;

    let mut run = ws.create_run("evaluate")?;
    run.add_parent(&source.manifest.command, &source);
    add_data_inputs(&mut run, ws, &split_run)?;
    run.add_input(&source.file("ensembles"))?;
    run.argument("run", source.id());
    let regime = ensembles.first().map(|(_, e)| e.regime).expect("validated ensembles are non-empty");
    run.argument("regime", regime_name(regime));
    let kind = ensembles[0].1.members[0].config.scorer_kind;
    run.argument("scorer_kind", kind_name(kind));

    let ev = &cfg.config.evaluate;
    if let Some(path) = &ev.docking_decoys {
        let mut sets = read_decoys(cfg, &mut run, path)?;
        score_decoys(cfg, &mut sets, &ensembles)?;
        report.docking_success_rate = Some(docking_success_rate(&sets, ev.rmsd_cutoff, ev.top_n)?);
    }
    if let Some(path) = &ev.screening_decoys {
        let mut sets = read_decoys(cfg, &mut run, path)?;
        score_decoys(cfg, &mut sets, &ensembles)?;
        report.enrichment_factors = Some(mean_enrichment(&sets, &ev.ef_fractions)?);
    }

    run.write(REPORT_FILE, report.to_json())?;
    let mut csv_bytes = Vec::new();
    report.write_csv(&mut csv_bytes).map_err(|e| CliError::Runtime(e.to_string()))?;
    run.write("report.csv", csv_bytes)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["target", "complex_id", "predicted_pk", "true_pk"])
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    for (target, preds) in &predictions {
        for (id, p) in preds {
            let y = dataset.get(id).map(|r| r.pk()).expect("predicted ids are in the dataset");
            w.write_record([target.as_str(), id.as_str(), &p.to_string(), &y.to_string()])
                .map_err(|e| CliError::Runtime(e.to_string()))?;
        }
    }
    run.write("predictions.csv", w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?)?;

    for (name, m) in &report.per_target {
        println!("{name:>12}  r = {:.3}  rmse = {:.3}  n = {}", m.pearson_r, m.rmse, m.n);
    }
    println!("{:>12}  Avg = {:.3}  Min = {:.3}", "", report.aggregate.avg_pearson, report.aggregate.min_pearson);
    run.finish(cfg)
}

pub fn project(cfg: &LoadedConfig, ws: &Workspace, from: Option<&str>) -> Result<PathBuf, CliError> {
    let ingest_run = find_run(ws, from, &["ingest"], "project")?;
    let dataset = load_dataset(&ingest_run)?;
    let pc = &cfg.config.projection;
    let result = project_tsne(interaction_embeddings(&dataset), &pc.tsne)?;
    let mut run = ws.create_run("project")?;
    run.add_parent("ingest", &ingest_run);
    run.add_input(&ingest_run.file(DATASET_FILE))?;
    let mut bytes = Vec::new();
    result.write_csv(&mut bytes).map_err(|e| CliError::Runtime(e.to_string()))?;
    run.write("projection.csv", bytes)?;
    run.write(
        "projection.json",
        serde_json::to_string_pretty(&result.parameters).expect("parameters serialize"),
    )?;
    let highlights: Vec<String> = if pc.highlight_clusters.is_empty() {
        cfg.config.split.targets.values().cloned().collect::<BTreeSet<_>>().into_iter().collect()
    } else {
        pc.highlight_clusters.clone()
    };
    for coloring in &pc.colorings {
        let name = serde_json::to_value(coloring).expect("coloring serializes");
        let stem = run.path(&format!("projection_{}", name.as_str().expect("coloring is a string")));
        let out = render_projection(&result, &dataset, *coloring, &highlights, pc.format, &stem)?;
        run.record_output(&out.plot);
        run.record_output(&out.csv);
    }
    println!("projected {} complexes", result.coordinates.len());
    run.finish(cfg)
}

#[derive(Debug, Serialize)]
struct SummaryRow {
    run: String,
    evaluated_run: String,
    regime: String,
    scorer_kind: String,
    per_target: BTreeMap<String, f64>,
    avg_pearson: f64,
    min_pearson: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    docking_success_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    enrichment_factors: Option<Vec<(f64, f64)>>,
}

pub fn report(cfg: &LoadedConfig, ws: &Workspace, runs: &[String]) -> Result<PathBuf, CliError> {
    let ids = if runs.is_empty() {
        ws.completed_runs("evaluate")
    } else {
        runs.to_vec()
    };
    if ids.is_empty() {
        return Err(CliError::Prerequisite(format!(
            "`report` needs at least one completed `evaluate` run in {}; run `oodscore evaluate` first",
            ws.runs_dir().display()
        )));
    }
    let mut run = ws.create_run("report")?;
    let mut rows = Vec::new();
    for id in &ids {
        let ev = find_run(ws, Some(id), &["evaluate"], "report")?;
        let report: MetricReport = serde_json::from_str(&read_text(&ev.file(REPORT_FILE))?)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", ev.file(REPORT_FILE).display())))?;
        run.add_input(&ev.file(REPORT_FILE))?;
        let arg = |k: &str| ev.manifest.arguments.get(k).cloned().unwrap_or_default();
        rows.push(SummaryRow {
            run: id.clone(),
            evaluated_run: arg("run"),
            regime: arg("regime"),
            scorer_kind: arg("scorer_kind"),
            per_target: report.per_target.iter().map(|(k, m)| (k.clone(), m.pearson_r)).collect(),
            avg_pearson: report.aggregate.avg_pearson,
            min_pearson: report.aggregate.min_pearson,
            docking_success_rate: report.docking_success_rate,
            enrichment_factors: report.enrichment_factors,
        });
    }
    let targets: BTreeSet<&String> = rows.iter().flat_map(|r| r.per_target.keys()).collect();
    let summary = json!({ "targets": targets, "rows": rows });
    run.write("summary.json", serde_json::to_string_pretty(&summary).expect("summary serializes"))?;

    let mut header = vec!["run".to_string(), "evaluated_run".into(), "regime".into(), "scorer_kind".into()];
    header.extend(targets.iter().map(|t| t.to_string()));
    header.extend(["avg_pearson".to_string(), "min_pearson".into()]);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).map_err(|e| CliError::Runtime(e.to_string()))?;
    let fmt = |v: Option<&f64>| v.map(|v| format!("{v:.3}")).unwrap_or_default();
    println!("{}", header.join("\t"));
    for r in &rows {
        let mut line = vec![r.run.clone(), r.evaluated_run.clone(), r.regime.clone(), r.scorer_kind.clone()];
        line.extend(targets.iter().map(|t| fmt(r.per_target.get(*t))));
        line.extend([fmt(Some(&r.avg_pearson)), fmt(Some(&r.min_pearson))]);
        println!("{}", line.join("\t"));
        w.write_record(&line).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    run.write("summary.csv", w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?)?;
    for id in &ids {
        let ev = ws.open(id)?;
        run.add_parent(id, &ev);
    }
    run.finish(cfg)
}
