//! Sentiment treebank ingestion.
//!
//! Reads the five-file layout of the public SST distribution (sentences,
//! parent-pointer trees, phrase dictionary, phrase sentiment values and the
//! raw 25-tick slider annotations) into [`SentimentTree`]s and a phrase table.
//! The externally produced constituency sidecar is parsed by
//! [`LinguisticSidecar`].

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type PhraseId = u64;
pub type SentenceId = u64;

/// Collapse whitespace runs to single spaces and trim. Case is preserved.
pub fn normalize_text(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    /// True iff every character is non-alphanumeric.
    pub is_punct: bool,
}

impl Token {
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        if text.is_empty() || text.contains(['\t', '\n', '\r']) {
            return Err(Error::Invalid(format!("invalid token {text:?}")));
        }
        let is_punct = text.chars().all(|c| !c.is_alphanumeric());
        Ok(Token { text, is_punct })
    }
}

/// Half-open token range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{})", self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeNode {
    /// 1-based, as in the parent-pointer file.
    pub node_id: usize,
    /// 0 for the root.
    pub parent_id: usize,
    pub span: Span,
    pub phrase_id: PhraseId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentimentTree {
    pub sentence_id: SentenceId,
    pub tokens: Vec<Token>,
    /// `nodes[k - 1]` is node `k`; the first `tokens.len()` nodes are leaves.
    pub nodes: Vec<TreeNode>,
}

impl SentimentTree {
    pub fn node(&self, node_id: usize) -> Option<&TreeNode> {
        node_id.checked_sub(1).and_then(|i| self.nodes.get(i))
    }

    pub fn root(&self) -> &TreeNode {
        self.nodes
            .iter()
            .find(|n| n.parent_id == 0)
            .expect("validated tree has a root")
    }

    pub fn children(&self, node_id: usize) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(move |n| n.parent_id == node_id)
    }

    /// Space-joined token texts over `span`.
    pub fn span_text(&self, span: Span) -> Result<String> {
        if span.is_empty() || span.end > self.tokens.len() {
            return Err(Error::Invalid(format!(
                "sentence {}: span {span} is empty or out of bounds",
                self.sentence_id
            )));
        }
        Ok(self.tokens[span.start..span.end]
            .iter()
            .map(|t| t.text.as_str())
            .collect::<Vec<_>>()
            .join(" "))
    }

    pub fn phrase_text(&self, node_id: usize) -> Result<String> {
        let node = self.node(node_id).ok_or_else(|| {
            Error::Invalid(format!(
                "sentence {}: unknown node {node_id}",
                self.sentence_id
            ))
        })?;
        self.span_text(node.span)
    }

    pub fn count_non_punct(&self, span: Span) -> usize {
        self.tokens
            .get(span.start..span.end.min(self.tokens.len()))
            .map_or(0, |ts| ts.iter().filter(|t| !t.is_punct).count())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhraseRecord {
    pub phrase_id: PhraseId,
    pub text: String,
    pub sst_value: f64,
    pub raw_ticks: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawStats {
    pub mean_ticks: f64,
    pub std_ticks: f64,
}

/// Which standard deviation to use over the raw slider ticks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StdKind {
    /// Divide by `n`.
    #[default]
    Population,
    /// Divide by `n - 1`.
    Sample,
}

pub fn raw_stats(record: &PhraseRecord, kind: StdKind) -> Result<RawStats> {
    let n = record.raw_ticks.len();
    if n == 0 {
        return Err(Error::Undefined(format!(
            "phrase {} has no raw annotations",
            record.phrase_id
        )));
    }
    let mean = record.raw_ticks.iter().map(|&t| f64::from(t)).sum::<f64>() / n as f64;
    let ss: f64 = record
        .raw_ticks
        .iter()
        .map(|&t| (f64::from(t) - mean).powi(2))
        .sum();
    let denom = match kind {
        StdKind::Population => n as f64,
        StdKind::Sample if n > 1 => (n - 1) as f64,
        StdKind::Sample => {
            return Err(Error::Undefined(format!(
                "sample std of phrase {} needs at least two ticks",
                record.phrase_id
            )))
        }
    };
    Ok(RawStats {
        mean_ticks: mean,
        std_ticks: (ss / denom).sqrt(),
    })
}

/// Paths of the five treebank files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusFiles {
    pub sentences: PathBuf,
    pub trees: PathBuf,
    pub dictionary: PathBuf,
    pub sentiment: PathBuf,
    pub raw_annotations: PathBuf,
}

/// In-memory contents of the five treebank files.
#[derive(Debug, Clone, Copy)]
pub struct CorpusSources<'a> {
    pub sentences: &'a str,
    pub trees: &'a str,
    pub dictionary: &'a str,
    pub sentiment: &'a str,
    pub raw_annotations: &'a str,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub trees: Vec<SentimentTree>,
    pub phrases: BTreeMap<PhraseId, PhraseRecord>,
    #[serde(skip)]
    by_text: HashMap<String, PhraseId>,
    #[serde(skip)]
    by_sentence: HashMap<SentenceId, usize>,
}

pub(crate) fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn parse_corpus(files: &CorpusFiles) -> Result<Corpus> {
    let sentences = read_file(&files.sentences)?;
    let trees = read_file(&files.trees)?;
    let dictionary = read_file(&files.dictionary)?;
    let sentiment = read_file(&files.sentiment)?;
    let raw_annotations = read_file(&files.raw_annotations)?;
    Corpus::from_sources(CorpusSources {
        sentences: &sentences,
        trees: &trees,
        dictionary: &dictionary,
        sentiment: &sentiment,
        raw_annotations: &raw_annotations,
    })
}

/// Lines with their 1-based numbers, skipping blank lines and an
/// unparseable header on line 1.
fn data_lines<'a>(
    text: &'a str,
    header_ok: impl Fn(&str) -> bool + 'a,
) -> impl Iterator<Item = (usize, &'a str)> + 'a {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(move |(n, l)| !l.trim().is_empty() && !(*n == 1 && !header_ok(l)))
}

impl Corpus {
    pub fn from_sources(src: CorpusSources<'_>) -> Result<Self> {
        let sentences = parse_sentences(src.sentences)?;
        let dictionary = parse_dictionary(src.dictionary)?;
        let sentiment = parse_sentiment(src.sentiment)?;
        let mut raw = parse_raw(src.raw_annotations)?;

        let mut phrases = BTreeMap::new();
        let mut by_text = HashMap::new();
        for (text, id) in dictionary {
            let sst_value = *sentiment.get(&id).ok_or_else(|| {
                Error::Invalid(format!("phrase id {id} has no sentiment value"))
            })?;
            if by_text.contains_key(&text) {
                log::warn!("dictionary phrase {text:?} listed twice; keeping the first id");
                continue;
            }
            by_text.insert(text.clone(), id);
            let raw_ticks = raw.remove(&id).unwrap_or_default();
            if phrases
                .insert(
                    id,
                    PhraseRecord {
                        phrase_id: id,
                        text,
                        sst_value,
                        raw_ticks,
                    },
                )
                .is_some()
            {
                return Err(Error::Invalid(format!("phrase id {id} is not unique")));
            }
        }
        if !raw.is_empty() {
            log::warn!(
                "{} raw annotation rows refer to phrase ids absent from the dictionary",
                raw.len()
            );
        }

        let rows: Vec<(usize, &str)> = data_lines(src.trees, |_| true).collect();
        if rows.len() > sentences.len() {
            return Err(Error::parse(
                "trees",
                rows[sentences.len()].0,
                format!(
                    "{} tree rows but only {} sentences",
                    rows.len(),
                    sentences.len()
                ),
            ));
        }
        let mut trees = Vec::with_capacity(rows.len());
        for ((line, row), (sentence_id, sentence)) in rows.into_iter().zip(&sentences) {
            let parents = parse_pointer_row(row).map_err(|m| Error::parse("trees", line, m))?;
            let tokens = sentence
                .split_whitespace()
                .map(Token::new)
                .collect::<Result<Vec<_>>>()?;
            let mut tree = build_tree(*sentence_id, tokens, &parents)?;
            for i in 0..tree.nodes.len() {
                let text = tree.span_text(tree.nodes[i].span)?;
                let key = normalize_text(&text);
                let id = *by_text.get(&key).ok_or(Error::MissingPhrase {
                    sentence_id: *sentence_id,
                    text: key,
                })?;
                tree.nodes[i].phrase_id = id;
            }
            trees.push(tree);
        }

        Ok(Corpus::new(trees, phrases))
    }

    pub fn new(trees: Vec<SentimentTree>, phrases: BTreeMap<PhraseId, PhraseRecord>) -> Self {
        let mut corpus = Corpus {
            trees,
            phrases,
            by_text: HashMap::new(),
            by_sentence: HashMap::new(),
        };
        corpus.reindex();
        corpus
    }

    /// Rebuild lookup tables (needed after deserialization).
    pub fn reindex(&mut self) {
        self.by_text = self
            .phrases
            .values()
            .map(|p| (normalize_text(&p.text), p.phrase_id))
            .collect();
        self.by_sentence = self
            .trees
            .iter()
            .enumerate()
            .map(|(i, t)| (t.sentence_id, i))
            .collect();
    }

    pub fn tree(&self, sentence_id: SentenceId) -> Option<&SentimentTree> {
        self.by_sentence.get(&sentence_id).map(|&i| &self.trees[i])
    }

    pub fn phrase(&self, id: PhraseId) -> Option<&PhraseRecord> {
        self.phrases.get(&id)
    }

    pub fn phrase_by_text(&self, text: &str) -> Option<&PhraseRecord> {
        self.by_text
            .get(&normalize_text(text))
            .and_then(|id| self.phrases.get(id))
    }

    pub fn sentence_count(&self) -> usize {
        self.trees.len()
    }
}

fn parse_sentences(text: &str) -> Result<Vec<(SentenceId, String)>> {
    let header_ok = |l: &str| {
        l.split('\t')
            .next()
            .is_some_and(|f| f.trim().parse::<u64>().is_ok())
    };
    let mut out = Vec::new();
    for (line, l) in data_lines(text, header_ok) {
        let (idx, sentence) = l
            .split_once('\t')
            .ok_or_else(|| Error::parse("sentences", line, "expected index<TAB>sentence"))?;
        let id = idx
            .trim()
            .parse::<u64>()
            .map_err(|e| Error::parse("sentences", line, format!("bad index: {e}")))?;
        if sentence.trim().is_empty() {
            return Err(Error::parse("sentences", line, "empty sentence"));
        }
        out.push((id, sentence.to_string()));
    }
    Ok(out)
}

fn parse_dictionary(text: &str) -> Result<Vec<(String, PhraseId)>> {
    let mut out = Vec::new();
    for (line, l) in data_lines(text, |_| true) {
        let (phrase, id) = l
            .rsplit_once('|')
            .ok_or_else(|| Error::parse("dictionary", line, "expected phrase|phrase_id"))?;
        let id = id
            .trim()
            .parse::<u64>()
            .map_err(|e| Error::parse("dictionary", line, format!("bad phrase id: {e}")))?;
        out.push((normalize_text(phrase), id));
    }
    Ok(out)
}

fn parse_sentiment(text: &str) -> Result<HashMap<PhraseId, f64>> {
    let header_ok = |l: &str| {
        l.split_once('|')
            .is_some_and(|(a, _)| a.trim().parse::<u64>().is_ok())
    };
    let mut out = HashMap::new();
    for (line, l) in data_lines(text, header_ok) {
        let (id, value) = l
            .split_once('|')
            .ok_or_else(|| Error::parse("sentiment", line, "expected phrase_id|value"))?;
        let id = id
            .trim()
            .parse::<u64>()
            .map_err(|e| Error::parse("sentiment", line, format!("bad phrase id: {e}")))?;
        let value = value
            .trim()
            .parse::<f64>()
            .map_err(|e| Error::parse("sentiment", line, format!("bad value: {e}")))?;
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::parse(
                "sentiment",
                line,
                format!("value {value} outside [0,1]"),
            ));
        }
        out.insert(id, value);
    }
    Ok(out)
}

fn parse_raw(text: &str) -> Result<HashMap<PhraseId, Vec<u8>>> {
    let header_ok = |l: &str| {
        l.split_once('|')
            .is_some_and(|(a, _)| a.trim().parse::<u64>().is_ok())
    };
    let mut out = HashMap::new();
    for (line, l) in data_lines(text, header_ok) {
        let (id, ticks) = l
            .split_once('|')
            .ok_or_else(|| Error::parse("raw annotations", line, "expected phrase_id|t1,t2,t3"))?;
        let id = id.trim().parse::<u64>().map_err(|e| {
            Error::parse("raw annotations", line, format!("bad phrase id: {e}"))
        })?;
        let ticks = ticks
            .split(',')
            .map(|t| match t.trim().parse::<u8>() {
                Ok(v) if (1..=25).contains(&v) => Ok(v),
                _ => Err(Error::parse(
                    "raw annotations",
                    line,
                    format!("tick {t:?} outside 1..25"),
                )),
            })
            .collect::<Result<Vec<_>>>()?;
        out.insert(id, ticks);
    }
    Ok(out)
}

fn parse_pointer_row(row: &str) -> std::result::Result<Vec<usize>, String> {
    row.split(['|', ','])
        .map(|f| {
            f.trim()
                .parse::<usize>()
                .map_err(|e| format!("bad parent pointer {f:?}: {e}"))
        })
        .collect()
}

/// Build and validate a tree from 1-based parent pointers, where the first
/// `tokens.len()` nodes are the leaves in token order.
pub fn build_tree(
    sentence_id: SentenceId,
    tokens: Vec<Token>,
    parents: &[usize],
) -> Result<SentimentTree> {
    let structural = |message: String| Error::Structural {
        sentence_id,
        message,
    };
    let n_nodes = parents.len();
    let n_tokens = tokens.len();
    if n_tokens == 0 {
        return Err(structural("sentence has no tokens".into()));
    }
    if n_nodes < n_tokens {
        return Err(structural(format!(
            "{n_nodes} nodes for {n_tokens} tokens"
        )));
    }
    for (i, &p) in parents.iter().enumerate() {
        if p > n_nodes {
            return Err(structural(format!(
                "node {} points to {p}, out of range 0..={n_nodes}",
                i + 1
            )));
        }
        if p == i + 1 {
            return Err(structural(format!("node {p} is its own parent")));
        }
    }

    // Cycle detection: 0 = unvisited, 1 = on current path, 2 = reaches the root.
    let mut state = vec![0u8; n_nodes + 1];
    for start in 1..=n_nodes {
        let mut path = Vec::new();
        let mut k = start;
        while k != 0 && state[k] == 0 {
            state[k] = 1;
            path.push(k);
            k = parents[k - 1];
        }
        if k != 0 && state[k] == 1 {
            return Err(structural(format!("cycle through node {k}")));
        }
        for v in path {
            state[v] = 2;
        }
    }

    let roots: Vec<usize> = (1..=n_nodes).filter(|&k| parents[k - 1] == 0).collect();
    if roots.len() != 1 {
        return Err(structural(format!(
            "expected exactly one root, found {}",
            roots.len()
        )));
    }

    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n_nodes + 1];
    for k in 1..=n_nodes {
        let p = parents[k - 1];
        if p != 0 {
            if p <= n_tokens {
                return Err(structural(format!("leaf node {p} has a child {k}")));
            }
            children[p].push(k);
        }
    }
    if let Some(k) = (n_tokens + 1..=n_nodes).find(|&k| children[k].is_empty()) {
        return Err(structural(format!(
            "internal node {k} has no children"
        )));
    }

    // Post-order from the root so children are resolved before parents.
    let mut spans: Vec<Option<Span>> = vec![None; n_nodes + 1];
    let mut stack = vec![(roots[0], false)];
    while let Some((k, expanded)) = stack.pop() {
        if k <= n_tokens {
            spans[k] = Some(Span::new(k - 1, k));
            continue;
        }
        if !expanded {
            stack.push((k, true));
            stack.extend(children[k].iter().map(|&c| (c, false)));
            continue;
        }
        let mut child_spans: Vec<Span> = children[k].iter().map(|&c| spans[c].unwrap()).collect();
        child_spans.sort();
        if child_spans.windows(2).any(|w| w[0].end != w[1].start) {
            return Err(structural(format!(
                "children of node {k} do not form a contiguous span"
            )));
        }
        spans[k] = Some(Span::new(
            child_spans[0].start,
            child_spans[child_spans.len() - 1].end,
        ));
    }

    let nodes = (1..=n_nodes)
        .map(|k| TreeNode {
            node_id: k,
            parent_id: parents[k - 1],
            span: spans[k].expect("all nodes reachable from the root"),
            phrase_id: 0,
        })
        .collect();
    Ok(SentimentTree {
        sentence_id,
        tokens,
        nodes,
    })
}

/// Closed set of phrase types used for control matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PhraseLabel {
    NP,
    VP,
    PP,
    SBAR,
    OTHER,
}

impl PhraseLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            PhraseLabel::NP => "NP",
            PhraseLabel::VP => "VP",
            PhraseLabel::PP => "PP",
            PhraseLabel::SBAR => "SBAR",
            PhraseLabel::OTHER => "OTHER",
        }
    }

    /// Parser labels outside the closed set map to `OTHER`.
    pub fn from_parser_label(label: &str) -> Self {
        match label {
            "NP" => PhraseLabel::NP,
            "VP" => PhraseLabel::VP,
            "PP" => PhraseLabel::PP,
            "SBAR" => PhraseLabel::SBAR,
            _ => PhraseLabel::OTHER,
        }
    }
}

impl fmt::Display for PhraseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SidecarEntry {
    pub phrase_label: PhraseLabel,
    /// Partition of the entry's span: the maximal sidecar constituents inside
    /// it, with uncovered tokens as single-token spans.
    pub child_spans: Vec<Span>,
    pub has_named_entity: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LinguisticSidecar {
    pub entries: BTreeMap<(SentenceId, Span), SidecarEntry>,
}

impl LinguisticSidecar {
    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_file(path)?)
    }

    /// Parse `sentence_id<TAB>start<TAB>end<TAB>label<TAB>has_ne`. Lines
    /// starting with `#` are comments. A span listed more than once (unary
    /// chains) keeps its first label and ORs the named-entity flags.
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw: BTreeMap<(SentenceId, Span), (PhraseLabel, bool)> = BTreeMap::new();
        for (i, l) in text.lines().enumerate() {
            let line = i + 1;
            let l = l.trim_end_matches('\r');
            if l.trim().is_empty() || l.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = l.split('\t').collect();
            if fields.len() != 5 {
                return Err(Error::parse(
                    "sidecar",
                    line,
                    format!("expected 5 tab-separated fields, got {}", fields.len()),
                ));
            }
            let num = |f: &str, what: &str| {
                f.trim()
                    .parse::<u64>()
                    .map_err(|e| Error::parse("sidecar", line, format!("bad {what}: {e}")))
            };
            let sentence_id = num(fields[0], "sentence id")?;
            let start = num(fields[1], "start")? as usize;
            let end = num(fields[2], "end")? as usize;
            if end <= start {
                return Err(Error::parse("sidecar", line, "empty span"));
            }
            let label = PhraseLabel::from_parser_label(fields[3].trim());
            let ne = match fields[4].trim() {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::parse(
                        "sidecar",
                        line,
                        format!("has_ne must be 0 or 1, got {other:?}"),
                    ))
                }
            };
            raw.entry((sentence_id, Span::new(start, end)))
                .and_modify(|e| e.1 |= ne)
                .or_insert((label, ne));
        }

        let mut entries = BTreeMap::new();
        let mut by_sentence: BTreeMap<SentenceId, Vec<Span>> = BTreeMap::new();
        for (sid, span) in raw.keys() {
            by_sentence.entry(*sid).or_default().push(*span);
        }
        for ((sid, span), (label, ne)) in &raw {
            let spans = &by_sentence[sid];
            entries.insert(
                (*sid, *span),
                SidecarEntry {
                    phrase_label: *label,
                    child_spans: child_partition(*span, spans),
                    has_named_entity: *ne,
                },
            );
        }
        Ok(LinguisticSidecar { entries })
    }

    pub fn get(&self, sentence_id: SentenceId, span: Span) -> Option<&SidecarEntry> {
        self.entries.get(&(sentence_id, span))
    }

    pub fn sentence_ids(&self) -> std::collections::BTreeSet<SentenceId> {
        self.entries.keys().map(|(s, _)| *s).collect()
    }
}

/// Maximal proper sub-spans of `parent` among `all`, with gaps filled by
/// single-token spans.
fn child_partition(parent: Span, all: &[Span]) -> Vec<Span> {
    let inner: Vec<Span> = all
        .iter()
        .copied()
        .filter(|s| *s != parent && parent.contains(s))
        .collect();
    let mut maximal: Vec<Span> = inner
        .iter()
        .copied()
        .filter(|s| !inner.iter().any(|o| o != s && o.contains(s)))
        .collect();
    maximal.sort();
    // Crossing brackets cannot come from a well-formed parse; keep the
    // leftmost of any overlapping pair.
    let mut out = Vec::new();
    let mut pos = parent.start;
    for s in maximal {
        if s.start < pos {
            continue;
        }
        out.extend((pos..s.start).map(|t| Span::new(t, t + 1)));
        out.push(s);
        pos = s.end;
    }
    out.extend((pos..parent.end).map(|t| Span::new(t, t + 1)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Token> {
        s.split_whitespace().map(|t| Token::new(t).unwrap()).collect()
    }

    #[test]
    fn three_token_tree() {
        let tree = build_tree(1, toks("of eating oatmeal"), &[4, 4, 5, 5, 0]).unwrap();
        assert_eq!(tree.root().span, Span::new(0, 3));
        assert_eq!(tree.node(4).unwrap().span, Span::new(0, 2));
        assert_eq!(tree.phrase_text(5).unwrap(), "of eating oatmeal");
        assert_eq!(tree.phrase_text(3).unwrap(), "oatmeal");
        assert_eq!(tree.children(5).count(), 2);
    }

    #[test]
    fn cycle_is_structural() {
        let err = build_tree(9, toks("a b"), &[2, 1]).unwrap_err();
        assert!(matches!(err, Error::Structural { sentence_id: 9, .. }), "{err}");
    }

    #[test]
    fn structural_errors() {
        // out of range
        assert!(build_tree(1, toks("a b"), &[3, 7, 0]).is_err());
        // two roots
        assert!(build_tree(1, toks("a b"), &[0, 3, 0]).is_err());
        // leaf with a child
        assert!(build_tree(1, toks("a b"), &[2, 0]).is_err());
        // internal cycle away from the leaves
        assert!(build_tree(1, toks("a b"), &[3, 3, 4, 3, 0]).is_err());
        // non-contiguous children: node 4 owns tokens 0 and 2
        assert!(build_tree(1, toks("a b c"), &[4, 5, 4, 5, 0]).is_err());
    }

    #[test]
    fn empty_span_is_rejected() {
        let tree = build_tree(1, toks("a b"), &[3, 3, 0]).unwrap();
        assert!(tree.span_text(Span::new(0, 0)).is_err());
        assert!(tree.phrase_text(7).is_err());
    }

    #[test]
    fn punctuation_tokens() {
        assert!(Token::new(",").unwrap().is_punct);
        assert!(Token::new("--").unwrap().is_punct);
        assert!(!Token::new("don't").unwrap().is_punct);
        assert!(!Token::new("3").unwrap().is_punct);
        assert!(Token::new("").is_err());
        assert!(Token::new("a\tb").is_err());
    }

    fn record(ticks: &[u8]) -> PhraseRecord {
        PhraseRecord {
            phrase_id: 1,
            text: "x".into(),
            sst_value: 0.5,
            raw_ticks: ticks.to_vec(),
        }
    }

    #[test]
    fn raw_stats_values() {
        let s = raw_stats(&record(&[10, 10, 10]), StdKind::Population).unwrap();
        assert_eq!((s.mean_ticks, s.std_ticks), (10.0, 0.0));
        let s = raw_stats(&record(&[12, 13, 14]), StdKind::Population).unwrap();
        assert_eq!(s.mean_ticks, 13.0);
        assert!((s.std_ticks - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((s.std_ticks - 0.8165).abs() < 1e-4);
        let s = raw_stats(&record(&[1, 13, 25]), StdKind::Population).unwrap();
        assert!((s.std_ticks - 96f64.sqrt()).abs() < 1e-12);
        assert!(s.std_ticks > 5.0);
        let s = raw_stats(&record(&[12, 13, 14]), StdKind::Sample).unwrap();
        assert!((s.std_ticks - 1.0).abs() < 1e-12);
        assert!(raw_stats(&record(&[]), StdKind::Population).is_err());
    }

    const SENTENCES: &str = "sentence_index\tsentence\n1\tof eating oatmeal\n2\tgood  fun\n";
    const TREES: &str = "4|4|5|5|0\n3,3,0\n";
    const DICT: &str = "of|1\neating|2\noatmeal|3\nof eating|4\nof eating oatmeal|5\ngood|6\nfun|7\ngood fun|8\n";
    const SENTIMENT: &str =
        "phrase ids|sentiment values\n1|0.5\n2|0.5\n3|0.4\n4|0.3\n5|0.2\n6|0.8\n7|0.8\n8|0.9\n";
    const RAW: &str = "5|12,13,14\n8|20,21,22\n";

    fn sources<'a>(trees: &'a str, dict: &'a str) -> CorpusSources<'a> {
        CorpusSources {
            sentences: SENTENCES,
            trees,
            dictionary: dict,
            sentiment: SENTIMENT,
            raw_annotations: RAW,
        }
    }

    #[test]
    fn corpus_from_sources() {
        let c = Corpus::from_sources(sources(TREES, DICT)).unwrap();
        assert_eq!(c.sentence_count(), 2);
        let t = c.tree(1).unwrap();
        assert_eq!(t.root().phrase_id, 5);
        assert_eq!(t.node(4).unwrap().phrase_id, 4);
        // "good  fun" is normalized before lookup
        assert_eq!(c.tree(2).unwrap().root().phrase_id, 8);
        assert_eq!(c.phrase(5).unwrap().raw_ticks, vec![12, 13, 14]);
        assert!(c.phrase(1).unwrap().raw_ticks.is_empty());
        // round trip: node text resolves to its own phrase record
        for tree in &c.trees {
            for node in &tree.nodes {
                let text = normalize_text(&tree.span_text(node.span).unwrap());
                assert_eq!(c.phrase(node.phrase_id).unwrap().text, text);
            }
        }
    }

    #[test]
    fn empty_tree_file() {
        let c = Corpus::from_sources(sources("", DICT)).unwrap();
        assert_eq!(c.sentence_count(), 0);
    }

    #[test]
    fn missing_phrase() {
        let dict = DICT.replace("of eating oatmeal|5\n", "");
        let err = Corpus::from_sources(sources(TREES, &dict)).unwrap_err();
        assert!(matches!(err, Error::MissingPhrase { sentence_id: 1, .. }), "{err}");
    }

    #[test]
    fn sidecar_children() {
        let sc = LinguisticSidecar::parse(
            "# header\n1\t0\t7\tS\t0\n1\t0\t3\tNP\t0\n1\t3\t7\tVP\t1\n1\t3\t7\tVP\t0\n1\t4\t7\tNP\t0\n",
        )
        .unwrap();
        let root = sc.get(1, Span::new(0, 7)).unwrap();
        assert_eq!(root.phrase_label, PhraseLabel::OTHER);
        assert_eq!(root.child_spans, vec![Span::new(0, 3), Span::new(3, 7)]);
        let vp = sc.get(1, Span::new(3, 7)).unwrap();
        assert!(vp.has_named_entity);
        assert_eq!(vp.child_spans, vec![Span::new(3, 4), Span::new(4, 7)]);
        let np = sc.get(1, Span::new(0, 3)).unwrap();
        assert_eq!(np.child_spans.len(), 3);
        assert!(LinguisticSidecar::parse("1\t0\t3\tNP\n").is_err());
        assert!(LinguisticSidecar::parse("1\t0\t3\tNP\t2\n").is_err());
    }
}
