//! Synthetic treebanks, curators, annotators and models for exercising the
//! pipeline without human data.
//!
//! Every sentence has the shape `(A B) .`, so each "A B" node is a binary
//! constituent. Side values are drawn inside one sentiment bucket, and the
//! value of "A B" is the mean of its sides plus, for a planted fraction of
//! sentences, a large deviation. Simulated annotators perceive a phrase as
//! six times its treebank value; an unseen combination is perceived as the
//! mean of its two segments. Trap candidates have their A side perceived
//! three points away from its value, which puts every control out of
//! tolerance in study 1.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::CorpusConfig;
use crate::corpus::{normalize_text, Corpus, PhraseId};
use crate::error::{Error, Result};
use crate::rng::derived_rng;
use crate::select::{CandidatePhrase, Side, CURATION_HEADER};
use crate::study::{BatchFile, ItemId, PracticeSet, Response, StudyItem, MAX_LABEL};

const SYLLABLES: [&str; 20] = [
    "ka", "lo", "mi", "ne", "ru", "sa", "ti", "vo", "ze", "pa", "do", "fi", "gu", "ha", "je", "wu", "bi", "co", "mu",
    "te",
];
const LABELS: [&str; 4] = ["NP", "VP", "PP", "SBAR"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub seed: u64,
    /// Candidates the simulated curator keeps.
    pub candidates: usize,
    /// Kept candidates designed to fail the study-1 filter.
    pub traps: usize,
    /// Further valid candidates that only populate control pools.
    pub spares: usize,
    /// Sentences that violate one selection constraint each.
    pub distractors: usize,
    /// Share of sentences whose "A B" value deviates from its parts.
    pub planted_fraction: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            seed: 7,
            candidates: 300,
            traps: 41,
            spares: 200,
            distractors: 24,
            planted_fraction: 0.25,
        }
    }
}

/// Generated file contents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthCorpus {
    pub sentences: String,
    pub trees: String,
    pub dictionary: String,
    pub sentiment: String,
    pub raw_annotations: String,
    pub sidecar: String,
    pub figurative: String,
}

impl SynthCorpus {
    pub fn write(&self, cfg: &CorpusConfig, figurative: &Path) -> Result<()> {
        for (path, text) in [
            (&cfg.sentences, &self.sentences),
            (&cfg.trees, &self.trees),
            (&cfg.dictionary, &self.dictionary),
            (&cfg.sentiment, &self.sentiment),
            (&cfg.raw_annotations, &self.raw_annotations),
            (&cfg.sidecar, &self.sidecar),
            (&figurative.to_path_buf(), &self.figurative),
        ] {
            std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    pub fn corpus(&self) -> Result<Corpus> {
        Corpus::from_sources(crate::corpus::CorpusSources {
            sentences: &self.sentences,
            trees: &self.trees,
            dictionary: &self.dictionary,
            sentiment: &self.sentiment,
            raw_annotations: &self.raw_annotations,
        })
    }
}

#[derive(Default)]
struct Builder {
    ids: HashMap<String, PhraseId>,
    dictionary: Vec<(String, PhraseId, f64, [u8; 3])>,
}

impl Builder {
    /// Register a phrase; the first registration of a text fixes its value.
    fn phrase(&mut self, text: &str, value: f64, ticks: Option<[u8; 3]>) {
        if self.ids.contains_key(text) {
            return;
        }
        let id = self.dictionary.len() as PhraseId;
        let ticks = ticks.unwrap_or_else(|| {
            let c = (1.0 + 24.0 * value).round() as i32;
            [(c - 1).max(1) as u8, c.clamp(1, 25) as u8, (c + 1).min(25) as u8]
        });
        self.ids.insert(text.to_string(), id);
        self.dictionary.push((text.to_string(), id, value, ticks));
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Flaw {
    None,
    NamedEntity,
    ShortChild,
    Disagreement,
}

fn word(rng: &mut impl Rng) -> String {
    let n = rng.random_range(2..=3);
    (0..n).map(|_| SYLLABLES[rng.random_range(0..SYLLABLES.len())]).collect()
}

/// Build a treebank with `candidates + spares` valid candidate sentences and
/// `distractors` sentences that each break one constraint.
pub fn generate_corpus(p: &SynthParams) -> Result<SynthCorpus> {
    let mut rng = derived_rng(p.seed, &[0x5717]);
    let mut b = Builder::default();
    let mut used: HashSet<String> = HashSet::new();
    let mut sentences = String::from("sentence_index\tsentence\n");
    let mut trees = String::new();
    let mut sidecar = String::from("# sentence_id\tstart\tend\tlabel\thas_ne\n");
    let mut figurative = String::new();

    let n_valid = p.candidates + p.spares;
    let flaws = [Flaw::NamedEntity, Flaw::ShortChild, Flaw::Disagreement];
    for s in 0..n_valid + p.distractors {
        let sentence_id = s as u64 + 1;
        let flaw = if s < n_valid { Flaw::None } else { flaws[(s - n_valid) % flaws.len()] };
        let la = rng.random_range(3..=8);
        let lb = if flaw == Flaw::ShortChild { 2 } else { rng.random_range(3..=8) };
        let mut side = |len: usize, rng: &mut rand_chacha::ChaCha8Rng| loop {
            let words: Vec<String> = (0..len).map(|_| word(rng)).collect();
            let text = words.join(" ");
            if used.insert(text.clone()) {
                return words;
            }
        };
        let a_words = side(la, &mut rng);
        let b_words = side(lb, &mut rng);
        let value = |rng: &mut rand_chacha::ChaCha8Rng| {
            let bucket = rng.random_range(1..=9) as f64 / 10.0;
            bucket + rng.random_range(-0.04..0.04)
        };
        let (va, vb) = (value(&mut rng), value(&mut rng));
        let planted = rng.random_bool(p.planted_fraction);
        let deviation = if planted {
            let d = rng.random_range(0.2..0.4);
            if (va + vb) / 2.0 > 0.5 { -d } else { d }
        } else {
            rng.random_range(-0.03..0.03)
        };
        let vx = ((va + vb) / 2.0 + deviation).clamp(0.0, 1.0);
        let tagged_figurative = rng.random_bool(if planted { 0.8 } else { 0.1 });

        let a = a_words.join(" ");
        let bt = b_words.join(" ");
        let x = format!("{a} {bt}");
        let root = format!("{x} .");
        for w in a_words.iter().chain(&b_words) {
            let v = rng.random_range(0.3..0.7);
            b.phrase(w, v, None);
        }
        b.phrase(".", 0.5, None);
        b.phrase(&a, va, None);
        b.phrase(&bt, vb, None);
        let ticks = (flaw == Flaw::Disagreement).then_some([1, 13, 25]);
        b.phrase(&x, vx, ticks);
        b.phrase(&root, vx, None);

        // Leaves 1..=n, then A, B, "A B" and the root.
        let n = la + lb + 1;
        let (na, nb, nx, nr) = (n + 1, n + 2, n + 3, n + 4);
        let mut parents: Vec<usize> = (0..la).map(|_| na).chain((0..lb).map(|_| nb)).collect();
        parents.extend([nr, nx, nx, nr, 0]);
        let row: Vec<String> = parents.iter().map(|p| p.to_string()).collect();
        trees.push_str(&row.join("|"));
        trees.push('\n');
        sentences.push_str(&format!("{sentence_id}\t{root}\n"));

        let label = |rng: &mut rand_chacha::ChaCha8Rng| LABELS[rng.random_range(0..LABELS.len())];
        let (label_a, label_b) = (label(&mut rng), label(&mut rng));
        let ne_a = u8::from(flaw == Flaw::NamedEntity);
        for (start, end, lab, ne) in [
            (0, n, "ROOT", 0),
            (0, la + lb, "S", 0),
            (0, la, label_a, ne_a),
            (la, la + lb, label_b, 0),
        ] {
            sidecar.push_str(&format!("{sentence_id}\t{start}\t{end}\t{lab}\t{ne}\n"));
        }
        if flaw == Flaw::None {
            figurative.push_str(&format!("{}\t{}\n", b.ids[&x], u8::from(tagged_figurative)));
        }
    }

    let mut dictionary = String::new();
    let mut sentiment = String::from("phrase ids|sentiment values\n");
    let mut raw = String::new();
    for (text, id, v, t) in &b.dictionary {
        dictionary.push_str(&format!("{text}|{id}\n"));
        sentiment.push_str(&format!("{id}|{v}\n"));
        raw.push_str(&format!("{id}|{},{},{}\n", t[0], t[1], t[2]));
    }
    Ok(SynthCorpus {
        sentences,
        trees,
        dictionary,
        sentiment,
        raw_annotations: raw,
        sidecar,
        figurative,
    })
}

/// Texts the simulated annotators misperceive in study 1.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrapSet {
    pub trap_candidates: BTreeSet<PhraseId>,
    pub trap_texts: BTreeSet<String>,
}

/// Simulated manual curation over built pools. The first `candidates`
/// candidates with at least `per_side + 2` pool entries per side are kept, `traps` of
/// them spread evenly are designated traps, and each kept side receives the
/// first four pool entries that are not trap texts. Returns the curation
/// sheet and the trap set.
pub fn synthetic_curation(pooled: &[CandidatePhrase], p: &SynthParams, per_side: usize) -> Result<(String, TrapSet)> {
    let kept: Vec<&CandidatePhrase> = pooled
        .iter()
        .filter(|c| Side::BOTH.iter().all(|&s| c.controls(s).len() >= per_side + 2))
        .take(p.candidates)
        .collect();
    if kept.len() < p.candidates || p.traps > p.candidates {
        return Err(Error::Infeasible(format!(
            "synthetic curation wanted {} candidates ({} traps), pools support {}",
            p.candidates,
            p.traps,
            kept.len()
        )));
    }
    let mut traps = TrapSet::default();
    for (i, c) in kept.iter().enumerate() {
        if (i + 1) * p.traps / p.candidates > i * p.traps / p.candidates {
            traps.trap_candidates.insert(c.phrase_id);
            traps.trap_texts.insert(c.side_a.text.clone());
        }
    }
    let kept_ids: HashSet<PhraseId> = kept.iter().map(|c| c.phrase_id).collect();
    let mut sheet = format!("{CURATION_HEADER}\n");
    for c in pooled {
        for side in Side::BOTH {
            let mut taken = 0;
            for ctl in c.controls(side) {
                let keep = kept_ids.contains(&c.phrase_id)
                    && taken < per_side
                    && !traps.trap_texts.contains(&ctl.subphrase.text);
                taken += usize::from(keep);
                sheet.push_str(&format!(
                    "{}\t{side}\t{}\t{}\t\n",
                    c.phrase_id,
                    ctl.subphrase.phrase_id,
                    u8::from(keep)
                ));
            }
            if kept_ids.contains(&c.phrase_id) && taken < per_side {
                return Err(Error::Infeasible(format!(
                    "candidate {} side {side} has only {taken} non-trap controls",
                    c.phrase_id
                )));
            }
        }
    }
    Ok((sheet, traps))
}

/// Ground-truth perception on the 0..6 scale.
#[derive(Debug, Clone)]
pub struct Perceiver {
    values: HashMap<String, f64>,
    traps: HashSet<String>,
}

impl Perceiver {
    pub fn new(corpus: &Corpus, traps: &TrapSet) -> Self {
        Perceiver {
            values: corpus
                .phrases
                .values()
                .map(|p| (normalize_text(&p.text), 6.0 * p.sst_value))
                .collect(),
            traps: traps.trap_texts.iter().cloned().collect(),
        }
    }

    fn single(&self, text: &str) -> f64 {
        let v = self.values.get(text).copied().unwrap_or(3.0);
        if self.traps.contains(text) {
            if v >= 3.0 {
                v - 3.0
            } else {
                v + 3.0
            }
        } else {
            v
        }
    }

    /// What a careful annotator would answer before rounding.
    pub fn perceive(&self, segments: &[String]) -> f64 {
        match segments {
            [one] => self.single(one),
            _ => {
                let joined = segments.join(" ");
                match self.values.get(&joined) {
                    Some(v) => *v,
                    None => segments.iter().map(|s| self.single(s)).sum::<f64>() / segments.len() as f64,
                }
            }
        }
    }

    /// What a purely compositional reader would answer.
    pub fn compositional(&self, segments: &[String]) -> f64 {
        segments.iter().map(|s| self.single(s)).sum::<f64>() / segments.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorParams {
    pub seed: u64,
    /// Probability of answering one point off.
    pub noise: f64,
    /// Probability of ticking the ungrammatical box where it is offered.
    pub flag_rate: f64,
    /// Slots (from 0) that answer carelessly and fail the practice gate.
    pub careless: usize,
}

impl Default for AnnotatorParams {
    fn default() -> Self {
        AnnotatorParams {
            seed: 11,
            noise: 0.0,
            flag_rate: 0.0,
            careless: 0,
        }
    }
}

fn clamp_label(x: f64) -> u8 {
    x.round().clamp(0.0, f64::from(MAX_LABEL)) as u8
}

/// One participant per batch: practice answers first, then the batch.
pub fn simulate_responses(
    batches: &BatchFile,
    practice: &PracticeSet,
    perceiver: &Perceiver,
    p: &AnnotatorParams,
) -> Vec<Response> {
    let mut out = Vec::new();
    let mut ts = 1_700_000_000_000u64;
    for entry in &batches.batches {
        let slot = entry.participant_slot;
        let participant_id = format!("{}-p{slot:03}", batches.study_id);
        let careless = slot < p.careless;
        let mut rng = derived_rng(p.seed, &[slot as u64]);
        let mut push = |item_id: &ItemId, label: u8, ungrammatical: bool| {
            ts += 1000;
            out.push(Response {
                participant_id: participant_id.clone(),
                item_id: item_id.clone(),
                label,
                ungrammatical,
                ts,
            });
        };
        for item in &practice.items {
            push(&item.item_id, if careless { 3 } else { item.reference }, false);
        }
        for item in &entry.items {
            let label = if careless {
                rng.random_range(0..=MAX_LABEL)
            } else {
                let mut v = perceiver.perceive(&item.segments);
                if rng.random_bool(p.noise) {
                    v += if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                }
                clamp_label(v)
            };
            let flag = item.allow_flag && rng.random_bool(p.flag_rate);
            push(&item.item_id, label, flag);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub seed: u64,
    pub seeds: u64,
    /// 1.0 reproduces the perceived sentiment; 0.0 is purely compositional.
    pub fidelity: f64,
    /// Half-width of the per-seed uniform jitter.
    pub jitter: f64,
    /// Width of the class distribution around the predicted sentiment.
    pub spread: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            seed: 3,
            seeds: 3,
            fidelity: 0.5,
            jitter: 0.3,
            spread: 0.7,
        }
    }
}

fn distribution(m: f64, spread: f64) -> [f64; 7] {
    let mut p = [0.0; 7];
    for (c, x) in p.iter_mut().enumerate() {
        let d = c as f64 - m;
        *x = (-d * d / (2.0 * spread * spread)).exp();
    }
    let z: f64 = p.iter().sum();
    p.map(|x| x / z)
}

/// A prediction TSV covering `items` and, when given, treebank rows keyed by
/// item id with their SST value.
pub fn simulate_predictions(
    items: &[StudyItem],
    sst_rows: &BTreeMap<ItemId, f64>,
    perceiver: &Perceiver,
    p: &ModelParams,
) -> String {
    let mut out = String::from("item_id\tseed\tp0\tp1\tp2\tp3\tp4\tp5\tp6\n");
    for seed in 0..p.seeds {
        let mut rng = derived_rng(p.seed, &[seed]);
        let mut row = |id: &str, m: f64, rng: &mut rand_chacha::ChaCha8Rng| {
            let m = (m + rng.random_range(-p.jitter..=p.jitter)).clamp(0.0, 6.0);
            let probs = distribution(m, p.spread);
            let cols: Vec<String> = probs.iter().map(|x| x.to_string()).collect();
            out.push_str(&format!("{id}\t{seed}\t{}\n", cols.join("\t")));
        };
        for item in items {
            let m = p.fidelity * perceiver.perceive(&item.segments)
                + (1.0 - p.fidelity) * perceiver.compositional(&item.segments);
            row(&item.item_id, m, &mut rng);
        }
        for (id, v) in sst_rows {
            row(id, 6.0 * v, &mut rng);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SelectConfig;
    use crate::corpus::{LinguisticSidecar, StdKind};
    use crate::select::{admitted_subphrases, build_pools, find_candidates};

    fn small() -> SynthParams {
        SynthParams {
            seed: 1,
            candidates: 20,
            traps: 3,
            spares: 400,
            distractors: 6,
            planted_fraction: 0.3,
        }
    }

    #[test]
    fn corpus_parses_and_yields_exact_candidates() {
        let p = small();
        let files = generate_corpus(&p).unwrap();
        let corpus = files.corpus().unwrap();
        assert_eq!(corpus.sentence_count(), 426);
        let sidecar = LinguisticSidecar::parse(&files.sidecar).unwrap();
        let cands = find_candidates(&corpus, &sidecar, &SelectConfig::default(), StdKind::Population).unwrap();
        assert_eq!(cands.len(), p.candidates + p.spares);
        assert_eq!(files, generate_corpus(&p).unwrap());
    }

    #[test]
    fn curation_avoids_traps() {
        let p = small();
        let files = generate_corpus(&p).unwrap();
        let corpus = files.corpus().unwrap();
        let sidecar = LinguisticSidecar::parse(&files.sidecar).unwrap();
        let cands = find_candidates(&corpus, &sidecar, &SelectConfig::default(), StdKind::Population).unwrap();
        let pooled = build_pools(&cands, &admitted_subphrases(&cands), 32, 5);
        let (sheet, traps) = synthetic_curation(&pooled, &p, 4).unwrap();
        assert_eq!(traps.trap_candidates.len(), 3);
        let curated = crate::select::import_curation(&pooled, &sheet, 4).unwrap();
        assert_eq!(curated.len(), 20);
        for c in &curated {
            for s in Side::BOTH {
                assert!(c.controls(s).iter().all(|e| !traps.trap_texts.contains(&e.subphrase.text)));
            }
        }
    }

    #[test]
    fn perception_rules() {
        let p = small();
        let corpus = generate_corpus(&p).unwrap().corpus().unwrap();
        let rec = corpus.phrases.values().find(|r| r.text.split(' ').count() == 4).unwrap();
        let mut traps = TrapSet::default();
        let plain = Perceiver::new(&corpus, &traps);
        assert!((plain.perceive(std::slice::from_ref(&rec.text)) - 6.0 * rec.sst_value).abs() < 1e-12);
        traps.trap_texts.insert(rec.text.clone());
        let shifted = Perceiver::new(&corpus, &traps).perceive(std::slice::from_ref(&rec.text));
        assert!((shifted - 6.0 * rec.sst_value).abs() > 2.9);
        let d = distribution(3.0, 0.7);
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(d[2], d[4]);
    }
}
