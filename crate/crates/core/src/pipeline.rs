//! Pipeline stages over a flat workspace directory.
//!
//! Each stage reads the files earlier stages wrote, writes its own
//! stage-named files, and returns a JSON summary. No stage rewrites a file
//! owned by another stage.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::analysis::{analysis_report, candidate_meta, group_stats_csv, load_figurative_tags, Grouping};
use crate::config::PipelineConfig;
use crate::corpus::{parse_corpus, Corpus, LinguisticSidecar};
use crate::error::{Error, Result};
use crate::evalharness::{evaluate, read_predictions, sst_item_id, sst_labels, EvalInputs};
use crate::ratings::{
    aggregate_sentiment, candidate_items, compute_ratings, ratings_csv, to_variant, variant_csv, Aggregation,
    NonCompRating, RatingVariant,
};
use crate::select::{
    admitted_subphrases, build_pools, export_curation, filter_by_study1, find_candidates, import_curation,
    short_pools, CandidatePhrase, FilterOutcome,
};
use crate::study::{
    assign_batches, export_batches, ingest_responses, krippendorff_alpha_ordinal, labels_by_item, make_items,
    select_practice, BatchFile, GateStatus, GateThresholds, Phase, PracticeSet, ResponseSet, StudyCatalog,
    StudyItem,
};
use crate::synthetic::{
    generate_corpus, simulate_predictions, simulate_responses, synthetic_curation, AnnotatorParams, ModelParams,
    Perceiver, SynthParams, TrapSet,
};

pub const CORPUS_SUMMARY: &str = "corpus.summary.json";
pub const CANDIDATES: &str = "candidates.json";
pub const POOLS: &str = "pools.json";
pub const CURATION: &str = "curation.tsv";
pub const CURATED: &str = "curated.json";
pub const FILTERED: &str = "filtered.json";
pub const RATINGS_JSON: &str = "ratings.json";
pub const RATINGS_CSV: &str = "ratings.csv";
pub const ANALYSIS_JSON: &str = "analysis.json";
pub const FIGURATIVE: &str = "figurative.tsv";
pub const SYNTH_PARAMS: &str = "synth.params.json";
pub const SYNTH_TRAPS: &str = "synth.traps.json";

pub fn study_id(phase: Phase) -> String {
    format!("study{phase}")
}

/// `study1.items.json` and friends.
pub fn study_file(phase: Phase, what: &str) -> String {
    format!("study{phase}.{what}")
}

pub fn variant_file(v: RatingVariant) -> String {
    format!("variant.{v}.csv")
}

pub fn eval_file(model: &str) -> String {
    format!("eval.{model}.json")
}

pub fn predictions_file(model: &str) -> String {
    format!("predictions.{model}.tsv")
}

pub struct Workspace {
    pub dir: PathBuf,
    pub cfg: PipelineConfig,
}

impl Workspace {
    /// Corpus paths that are still relative resolve against the workspace.
    pub fn open(dir: impl Into<PathBuf>, mut cfg: PipelineConfig) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        cfg.validate()?;
        cfg.corpus.resolve_relative_to(&dir);
        Ok(Workspace { dir, cfg })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn require(&self, name: &str, producer: &str) -> Result<PathBuf> {
        let p = self.path(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(Error::MissingArtifact {
                artifact: p.display().to_string(),
                producer: producer.to_string(),
            })
        }
    }

    fn read_text(&self, name: &str, producer: &str) -> Result<String> {
        let p = self.require(name, producer)?;
        fs::read_to_string(&p).map_err(|e| Error::io(&p, e))
    }

    fn read_json<T: DeserializeOwned>(&self, name: &str, producer: &str) -> Result<T> {
        Ok(serde_json::from_str(&self.read_text(name, producer)?)?)
    }

    fn write_text(&self, name: &str, text: &str) -> Result<()> {
        let p = self.path(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    }

    fn write_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(name, &text)
    }

    fn gate(&self) -> GateThresholds {
        GateThresholds {
            max_mae: self.cfg.study.gate_max_mae,
            min_rho: self.cfg.study.gate_min_rho,
        }
    }

    pub fn load_corpus(&self) -> Result<(Corpus, LinguisticSidecar)> {
        let files = self.cfg.corpus.files();
        for p in [&files.sentences, &files.trees, &files.dictionary, &files.sentiment, &files.raw_annotations] {
            if !p.is_file() {
                return Err(Error::MissingArtifact {
                    artifact: p.display().to_string(),
                    producer: "noncomp synth corpus (or copy the treebank files into the workspace)".into(),
                });
            }
        }
        let corpus = parse_corpus(&files)?;
        let sidecar = LinguisticSidecar::load(&self.cfg.corpus.sidecar)?;
        Ok((corpus, sidecar))
    }

    pub fn corpus_validate(&self) -> Result<Value> {
        let (corpus, sidecar) = self.load_corpus()?;
        let covered = sidecar.sentence_ids();
        let uncovered: Vec<u64> = corpus
            .trees
            .iter()
            .map(|t| t.sentence_id)
            .filter(|id| !covered.contains(id))
            .collect();
        let nodes: usize = corpus.trees.iter().map(|t| t.nodes.len()).sum();
        let summary = json!({
            "stage": "corpus validate",
            "sentences": corpus.sentence_count(),
            "phrases": corpus.phrases.len(),
            "tree_nodes": nodes,
            "sidecar_entries": sidecar.entries.len(),
            "sentences_without_sidecar": uncovered,
        });
        self.write_json(CORPUS_SUMMARY, &summary)?;
        Ok(summary)
    }

    pub fn select_candidates(&self) -> Result<Value> {
        let (corpus, sidecar) = self.load_corpus()?;
        let cands = find_candidates(&corpus, &sidecar, &self.cfg.select, self.cfg.corpus.std_kind)?;
        self.write_json(CANDIDATES, &cands)?;
        Ok(json!({ "stage": "select candidates", "candidates": cands.len() }))
    }

    pub fn pools_build(&self) -> Result<Value> {
        let cands: Vec<CandidatePhrase> = self.read_json(CANDIDATES, "noncomp select candidates")?;
        let pooled = build_pools(&cands, &admitted_subphrases(&cands), self.cfg.select.pool_size, self.cfg.seed);
        self.write_json(POOLS, &pooled)?;
        let sizes: Vec<usize> = pooled
            .iter()
            .flat_map(|c| [c.controls_a.len(), c.controls_b.len()])
            .collect();
        Ok(json!({
            "stage": "pools build",
            "candidates": pooled.len(),
            "min_pool": sizes.iter().min(),
            "max_pool": sizes.iter().max(),
            "short_pools": short_pools(&pooled, self.cfg.select.curated_per_side).len(),
        }))
    }

    pub fn pools_export(&self, preselect: usize) -> Result<Value> {
        let pooled: Vec<CandidatePhrase> = self.read_json(POOLS, "noncomp pools build")?;
        let sheet = export_curation(&pooled, preselect);
        self.write_text(CURATION, &sheet)?;
        Ok(json!({
            "stage": "pools export",
            "file": self.path(CURATION),
            "rows": sheet.lines().count().saturating_sub(1),
            "preselected_per_side": preselect,
        }))
    }

    pub fn pools_import(&self, sheet: Option<&Path>) -> Result<Value> {
        let pooled: Vec<CandidatePhrase> = self.read_json(POOLS, "noncomp pools build")?;
        let text = match sheet {
            Some(p) => fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => self.read_text(CURATION, "noncomp pools export")?,
        };
        let curated = import_curation(&pooled, &text, self.cfg.select.curated_per_side)?;
        self.write_json(CURATED, &curated)?;
        Ok(json!({
            "stage": "pools import",
            "curated": curated.len(),
            "dropped": pooled.len() - curated.len(),
        }))
    }

    pub fn study_gen(&self, phase: Phase) -> Result<Value> {
        let (source, producer) = match phase {
            Phase::One => (CURATED, "noncomp pools import"),
            Phase::Two => (FILTERED, "noncomp study filter"),
        };
        let candidates: Vec<CandidatePhrase> = match phase {
            Phase::One => self.read_json(source, producer)?,
            Phase::Two => self.read_json::<FilterOutcome>(source, producer)?.survivors,
        };
        let items = make_items(&candidates, phase, self.cfg.select.final_controls)?;
        let (corpus, _) = self.load_corpus()?;
        let exclude: HashSet<String> = items.iter().map(StudyItem::text).collect();
        let sid = study_id(phase);
        let practice = select_practice(
            &corpus,
            &exclude,
            self.cfg.study.practice_items,
            self.cfg.select.min_len,
            self.cfg.select.max_len,
            &sid,
        )?;
        let participants = match phase {
            Phase::One => self.cfg.study.participants_phase1,
            Phase::Two => self.cfg.study.participants_phase2,
        };
        let ids: Vec<String> = items.iter().map(|i| i.item_id.clone()).collect();
        let batches = assign_batches(
            &ids,
            participants,
            self.cfg.study.annotations_per_item,
            self.cfg.seed.wrapping_add(u64::from(u8::from(phase))),
        )?;
        let file = export_batches(&sid, &batches, &items)?;
        self.write_json(&study_file(phase, "items.json"), &items)?;
        self.write_json(&study_file(phase, "practice.json"), &practice)?;
        self.write_json(&study_file(phase, "batches.json"), &file)?;
        let sizes: Vec<usize> = batches.iter().map(|b| b.item_ids.len()).collect();
        Ok(json!({
            "stage": format!("study gen --phase {phase}"),
            "candidates": candidates.len(),
            "items": items.len(),
            "participants": participants,
            "batch_size_min": sizes.iter().min(),
            "batch_size_max": sizes.iter().max(),
            "practice_items": practice.items.len(),
        }))
    }

    fn study_inputs(&self, phase: Phase) -> Result<(Vec<StudyItem>, StudyCatalog, ResponseSet)> {
        let gen = format!("noncomp study gen --phase {phase}");
        let items: Vec<StudyItem> = self.read_json(&study_file(phase, "items.json"), &gen)?;
        let practice: PracticeSet = self.read_json(&study_file(phase, "practice.json"), &gen)?;
        let catalog = StudyCatalog::new(&items, &practice, phase);
        let responses = self.read_text(
            &study_file(phase, "responses.jsonl"),
            &format!("the annotation service export (or noncomp synth respond --phase {phase})"),
        )?;
        let set = ingest_responses(&responses, &catalog, self.gate())?;
        Ok((items, catalog, set))
    }

    /// Study-1 sentiments are averaged over every included label; items
    /// with none are reported by the filter as missing.
    pub fn study_filter(&self) -> Result<Value> {
        let curated: Vec<CandidatePhrase> = self.read_json(CURATED, "noncomp pools import")?;
        let (items, catalog, set) = self.study_inputs(Phase::One)?;
        let agg = aggregate_sentiment(&set, &catalog, 1);
        let by_text: HashMap<String, f64> = items
            .iter()
            .filter_map(|i| agg.sentiments.get(&i.item_id).map(|s| (i.text(), s.mean_label)))
            .collect();
        let outcome = filter_by_study1(&curated, &by_text, &self.cfg.select)?;
        self.write_json(&study_file(Phase::One, "sentiments.json"), &agg)?;
        self.write_json(FILTERED, &outcome)?;
        Ok(json!({
            "stage": "study filter",
            "curated": curated.len(),
            "survivors": outcome.survivors.len(),
            "discarded": outcome.discarded.len(),
            "excluded_participants": set.excluded.len(),
            "items_below_minimum": agg.omitted.len(),
            "warnings": set.warnings.len(),
        }))
    }

    pub fn study_alpha(&self, phase: Phase) -> Result<Value> {
        let (_, catalog, set) = self.study_inputs(phase)?;
        let units: Vec<Vec<u8>> = labels_by_item(&set, &catalog).into_values().collect();
        let report = krippendorff_alpha_ordinal(&units)?;
        self.write_json(&study_file(phase, "alpha.json"), &report)?;
        Ok(json!({
            "stage": format!("study alpha --phase {phase}"),
            "alpha": report.alpha,
            "items": report.n_items,
            "responses": report.n_responses,
            "excluded_participants": set.excluded.len(),
        }))
    }

    pub fn study_gate(&self, phase: Phase) -> Result<Value> {
        let (_, _, set) = self.study_inputs(phase)?;
        let count = |f: fn(&GateStatus) -> bool| set.gates.values().filter(|g| f(g)).count();
        let report = json!({
            "gates": set.gates,
            "excluded": set.excluded,
            "warnings": set.warnings,
        });
        self.write_json(&study_file(phase, "gate.json"), &report)?;
        Ok(json!({
            "stage": format!("study gate --phase {phase}"),
            "participants": set.gates.len(),
            "passed": count(|g| matches!(g, GateStatus::Passed(_))),
            "failed": count(|g| matches!(g, GateStatus::Failed(_))),
            "missing_practice": count(|g| matches!(g, GateStatus::MissingPractice)),
            "not_required": count(|g| matches!(g, GateStatus::NotRequired)),
        }))
    }

    pub fn ratings_compute(&self) -> Result<Value> {
        let (items, catalog, set) = self.study_inputs(Phase::Two)?;
        let agg = aggregate_sentiment(&set, &catalog, self.cfg.ratings.min_annotations);
        let layout = candidate_items(&items)?;
        let ratings = compute_ratings(&agg.sentiments, &layout, &self.cfg.ratings);
        self.write_json(&study_file(Phase::Two, "sentiments.json"), &agg)?;
        self.write_json(RATINGS_JSON, &ratings)?;
        self.write_text(RATINGS_CSV, &ratings_csv(&ratings)?)?;
        let mut counts = BTreeMap::new();
        for v in RatingVariant::ALL {
            let vec = to_variant(&ratings, v);
            counts.insert(v.to_string(), vec.len());
            self.write_text(&variant_file(v), &variant_csv(&vec)?)?;
        }
        Ok(json!({
            "stage": "ratings compute",
            "candidates": ratings.len(),
            "excluded_sides": ratings.iter().map(|r| usize::from(r.excluded_a) + usize::from(r.excluded_b)).sum::<usize>(),
            "flagged_items": agg.sentiments.values().filter(|s| s.flagged_ungrammatical).count(),
            "items_below_minimum": agg.omitted.len(),
            "excluded_participants": set.excluded.len(),
            "variant_sizes": counts,
        }))
    }

    pub fn eval_run(&self, models: &[(String, PathBuf)]) -> Result<Value> {
        let ratings: Vec<NonCompRating> = self.read_json(RATINGS_JSON, "noncomp ratings compute")?;
        let agg: Aggregation =
            self.read_json(&study_file(Phase::Two, "sentiments.json"), "noncomp ratings compute")?;
        let items: Vec<StudyItem> =
            self.read_json(&study_file(Phase::Two, "items.json"), "noncomp study gen --phase 2")?;
        let layout = candidate_items(&items)?;
        let (corpus, _) = self.load_corpus()?;
        let gold = sst_labels(&corpus)?;
        let mut out = Vec::new();
        for (name, path) in models {
            if !path.is_file() {
                return Err(Error::MissingArtifact {
                    artifact: path.display().to_string(),
                    producer: format!("noncomp synth predict --model {name} (or export the model's predictions)"),
                });
            }
            let sets = read_predictions(path, name)?;
            let report = evaluate(
                &EvalInputs {
                    model_name: name,
                    predictions: &sets,
                    human_sentiments: &agg.sentiments,
                    human_ratings: &ratings,
                    candidates: &layout,
                    sst_labels: &gold,
                },
                &self.cfg.ratings,
                &self.cfg.eval,
            )?;
            self.write_json(&eval_file(name), &report)?;
            out.push(serde_json::to_value(&report)?);
        }
        Ok(json!({ "stage": "eval run", "models": out }))
    }

    pub fn analyze(&self, figurative: Option<&Path>, variant: RatingVariant) -> Result<Value> {
        let ratings: Vec<NonCompRating> = self.read_json(RATINGS_JSON, "noncomp ratings compute")?;
        let filtered: FilterOutcome = self.read_json(FILTERED, "noncomp study filter")?;
        let meta = candidate_meta(&filtered.survivors)?;
        let mut groupings = vec![Grouping::CompositionType, Grouping::LengthPair, Grouping::CategoryPair];
        let (tags, warnings) = match figurative {
            Some(p) => {
                groupings.push(Grouping::Figurative);
                let ids: Vec<_> = ratings.iter().map(|r| r.candidate_id).collect();
                load_figurative_tags(p, &ids)?
            }
            None => (BTreeMap::new(), Vec::new()),
        };
        let report = analysis_report(&ratings, variant, &groupings, &meta, &tags, warnings, &self.cfg.analysis)?;
        for (g, stats) in &report.groupings {
            self.write_text(&format!("analysis.{g}.csv"), &group_stats_csv(stats)?)?;
        }
        self.write_json(ANALYSIS_JSON, &report)?;
        let groups: BTreeMap<String, usize> = report.groupings.iter().map(|(g, s)| (g.to_string(), s.len())).collect();
        Ok(json!({
            "stage": "analyze",
            "variant": variant,
            "groups": groups,
            "warnings": report.warnings.len(),
        }))
    }

    pub fn synth_corpus(&self, params: &SynthParams) -> Result<Value> {
        let files = generate_corpus(params)?;
        files.write(&self.cfg.corpus, &self.path(FIGURATIVE))?;
        self.write_json(SYNTH_PARAMS, params)?;
        Ok(json!({
            "stage": "synth corpus",
            "sentences": files.sentences.lines().count() - 1,
            "phrases": files.dictionary.lines().count(),
        }))
    }

    pub fn synth_curate(&self) -> Result<Value> {
        let params: SynthParams = self.read_json(SYNTH_PARAMS, "noncomp synth corpus")?;
        let pooled: Vec<CandidatePhrase> = self.read_json(POOLS, "noncomp pools build")?;
        let (sheet, traps) = synthetic_curation(&pooled, &params, self.cfg.select.curated_per_side)?;
        self.write_text(CURATION, &sheet)?;
        self.write_json(SYNTH_TRAPS, &traps)?;
        Ok(json!({
            "stage": "synth curate",
            "kept": params.candidates,
            "traps": traps.trap_candidates.len(),
        }))
    }

    fn perceiver(&self) -> Result<(Corpus, Perceiver)> {
        let traps: TrapSet = self.read_json(SYNTH_TRAPS, "noncomp synth curate")?;
        let (corpus, _) = self.load_corpus()?;
        let p = Perceiver::new(&corpus, &traps);
        Ok((corpus, p))
    }

    pub fn synth_respond(&self, phase: Phase, params: &AnnotatorParams) -> Result<Value> {
        let gen = format!("noncomp study gen --phase {phase}");
        let batches: BatchFile = self.read_json(&study_file(phase, "batches.json"), &gen)?;
        let practice: PracticeSet = self.read_json(&study_file(phase, "practice.json"), &gen)?;
        let (_, perceiver) = self.perceiver()?;
        let responses = simulate_responses(&batches, &practice, &perceiver, params);
        self.write_text(
            &study_file(phase, "responses.jsonl"),
            &crate::study::responses_to_jsonl(&responses),
        )?;
        let participants: BTreeSet<&str> = responses.iter().map(|r| r.participant_id.as_str()).collect();
        Ok(json!({
            "stage": format!("synth respond --phase {phase}"),
            "responses": responses.len(),
            "participants": participants.len(),
        }))
    }

    pub fn synth_predict(&self, model: &str, params: &ModelParams) -> Result<Value> {
        let items: Vec<StudyItem> =
            self.read_json(&study_file(Phase::Two, "items.json"), "noncomp study gen --phase 2")?;
        let (corpus, perceiver) = self.perceiver()?;
        let roots: BTreeMap<String, f64> = corpus
            .trees
            .iter()
            .filter_map(|t| corpus.phrase(t.root().phrase_id))
            .map(|p| (sst_item_id(p.phrase_id), p.sst_value))
            .collect();
        let tsv = simulate_predictions(&items, &roots, &perceiver, params);
        let name = predictions_file(model);
        self.write_text(&name, &tsv)?;
        Ok(json!({
            "stage": "synth predict",
            "model": model,
            "file": self.path(&name),
            "rows": tsv.lines().count() - 1,
        }))
    }
}

/// Every stage in order on a synthetic corpus, with simulated curation,
/// annotators and one model. Returns the per-stage summaries.
pub fn run_synthetic(
    ws: &Workspace,
    synth: &SynthParams,
    annotators: &AnnotatorParams,
    model: &ModelParams,
) -> Result<Vec<Value>> {
    let mut out = vec![
        ws.synth_corpus(synth)?,
        ws.corpus_validate()?,
        ws.select_candidates()?,
        ws.pools_build()?,
        ws.synth_curate()?,
        ws.pools_import(None)?,
        ws.study_gen(Phase::One)?,
        ws.synth_respond(Phase::One, annotators)?,
        ws.study_gate(Phase::One)?,
        ws.study_alpha(Phase::One)?,
        ws.study_filter()?,
        ws.study_gen(Phase::Two)?,
        ws.synth_respond(Phase::Two, annotators)?,
        ws.study_gate(Phase::Two)?,
        ws.study_alpha(Phase::Two)?,
        ws.ratings_compute()?,
        ws.synth_predict("synthetic", model)?,
    ];
    out.push(ws.eval_run(&[("synthetic".into(), ws.path(&predictions_file("synthetic")))])?);
    out.push(ws.analyze(Some(&ws.path(FIGURATIVE)), RatingVariant::MaxAbs)?);
    Ok(out)
}
