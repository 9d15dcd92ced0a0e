//! Edge-weight statistics: tf-idf, sliding-window PMI, document cosine
//! similarity, and word / character n-gram extraction.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Vocabulary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NgramKind {
    Word,
    Char,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NgramSpec {
    pub kind: NgramKind,
    pub n_min: usize,
    pub n_max: usize,
    pub min_freq: usize,
}

impl NgramSpec {
    pub fn word(n_min: usize, n_max: usize, min_freq: usize) -> Self {
        Self {
            kind: NgramKind::Word,
            n_min,
            n_max,
            min_freq,
        }
    }

    pub fn char(n_min: usize, n_max: usize, min_freq: usize) -> Self {
        Self {
            kind: NgramKind::Char,
            n_min,
            n_max,
            min_freq,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_min < 2 || self.n_min > self.n_max {
            return Err(Error::Config(format!(
                "n-gram range {}:{} must satisfy 2 <= min <= max",
                self.n_min, self.n_max
            )));
        }
        if self.min_freq == 0 {
            return Err(Error::Config("n-gram min_freq must be at least 1".into()));
        }
        Ok(())
    }

    fn expect_kind(&self, kind: NgramKind) -> Result<()> {
        self.validate()?;
        if self.kind != kind {
            return Err(Error::Config(format!("expected a {kind:?} n-gram spec, got {:?}", self.kind)));
        }
        Ok(())
    }
}

/// Sparse real-valued table sorted by `(row, col)` with unique coordinates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightTable {
    entries: Vec<(usize, usize, f64)>,
}

impl WeightTable {
    /// Sorts entries; duplicates are rejected.
    pub fn from_entries(mut entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        entries.sort_by_key(|e| (e.0, e.1));
        if let Some(w) = entries.windows(2).find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(Error::GraphMismatch(format!(
                "duplicate table entry ({}, {})",
                w[0].0, w[0].1
            )));
        }
        Ok(Self { entries })
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.entries
            .binary_search_by(|e| (e.0, e.1).cmp(&(row, col)))
            .ok()
            .map(|i| self.entries[i].2)
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_symmetric(&self) -> bool {
        self.entries
            .iter()
            .all(|&(i, j, v)| self.get(j, i) == Some(v))
    }

    /// Entries grouped by row, for rows `0..n_rows`.
    pub fn rows(&self, n_rows: usize) -> Vec<Vec<(usize, f64)>> {
        let mut rows = vec![Vec::new(); n_rows];
        for &(i, j, v) in &self.entries {
            rows[i].push((j, v));
        }
        rows
    }
}

/// Per-document `(term id, count)` lists, sorted by term id.
pub type TermCounts = Vec<Vec<(usize, usize)>>;

pub fn term_counts(docs: &[Vec<usize>]) -> TermCounts {
    docs.iter()
        .map(|ids| {
            let mut sorted = ids.clone();
            sorted.sort_unstable();
            let mut out: Vec<(usize, usize)> = Vec::new();
            for id in sorted {
                match out.last_mut() {
                    Some((last, c)) if *last == id => *c += 1,
                    _ => out.push((id, 1)),
                }
            }
            out
        })
        .collect()
}

/// tf-idf with raw term frequency and `idf = ln(n_docs / df)`; zero values are not stored.
pub fn tfidf(counts: &TermCounts) -> WeightTable {
    let n_docs = counts.len();
    let mut df: HashMap<usize, usize> = HashMap::new();
    for doc in counts {
        for &(t, c) in doc {
            if c > 0 {
                *df.entry(t).or_default() += 1;
            }
        }
    }
    let mut entries = Vec::new();
    for (d, doc) in counts.iter().enumerate() {
        for &(t, c) in doc {
            if c == 0 {
                continue;
            }
            let idf = (n_docs as f64 / df[&t] as f64).ln();
            let v = c as f64 * idf;
            if v > 0.0 {
                entries.push((d, t, v));
            }
        }
    }
    WeightTable { entries }
}

/// Positive PMI between words over sliding windows of `window` tokens.
/// A document no longer than the window contributes exactly one window.
pub fn pmi(corpus: &Corpus, window: usize) -> Result<WeightTable> {
    pmi_from_ids(&corpus.encoded(), corpus.vocabulary().len(), window)
}

pub fn pmi_from_ids(docs: &[Vec<usize>], n_words: usize, window: usize) -> Result<WeightTable> {
    if window < 2 {
        return Err(Error::Config(format!("PMI window must be at least 2, got {window}")));
    }
    let mut n_windows: u64 = 0;
    let mut single = vec![0u64; n_words];
    let mut pair: HashMap<(usize, usize), u64> = HashMap::new();
    let mut uniq: Vec<usize> = Vec::with_capacity(window);
    for doc in docs {
        if doc.is_empty() {
            continue;
        }
        let spans = if doc.len() <= window { 1 } else { doc.len() - window + 1 };
        for start in 0..spans {
            let end = (start + window).min(doc.len());
            uniq.clear();
            uniq.extend_from_slice(&doc[start..end]);
            uniq.sort_unstable();
            uniq.dedup();
            n_windows += 1;
            for (a, &i) in uniq.iter().enumerate() {
                single[i] += 1;
                for &j in &uniq[a + 1..] {
                    *pair.entry((i, j)).or_default() += 1;
                }
            }
        }
    }
    if n_windows == 0 {
        return Err(Error::NoWindows);
    }
    let total = n_windows as f64;
    let mut entries = Vec::new();
    for (&(i, j), &c) in &pair {
        let v = ((c as f64 * total) / (single[i] as f64 * single[j] as f64)).ln();
        if v > 0.0 {
            entries.push((i, j, v));
            entries.push((j, i, v));
        }
    }
    WeightTable::from_entries(entries)
}

/// Cosine similarity between documents' tf-idf word vectors. Pairs below
/// `threshold`, zero vectors and the diagonal are omitted.
pub fn doc_similarity(corpus: &Corpus, tfidf_dw: &WeightTable, threshold: f64) -> Result<WeightTable> {
    similarity_table(corpus.len(), tfidf_dw, threshold)
}

pub fn similarity_table(n_docs: usize, tfidf_dw: &WeightTable, threshold: f64) -> Result<WeightTable> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Config(format!("similarity threshold must lie in [0,1], got {threshold}")));
    }
    let rows = tfidf_dw.rows(n_docs);
    let norms: Vec<f64> = rows
        .iter()
        .map(|r| r.iter().map(|(_, v)| v * v).sum::<f64>().sqrt())
        .collect();
    let mut postings: HashMap<usize, Vec<(usize, f64)>> = HashMap::new();
    for (d, row) in rows.iter().enumerate() {
        for &(w, v) in row {
            postings.entry(w).or_default().push((d, v));
        }
    }
    let mut acc = vec![0.0f64; n_docs];
    let mut touched: Vec<usize> = Vec::new();
    let mut entries = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        if norms[i] == 0.0 {
            continue;
        }
        for &(w, v) in row {
            for &(j, u) in &postings[&w] {
                if j > i {
                    if acc[j] == 0.0 {
                        touched.push(j);
                    }
                    acc[j] += v * u;
                }
            }
        }
        touched.sort_unstable();
        touched.dedup();
        for &j in &touched {
            let dot = std::mem::take(&mut acc[j]);
            if norms[j] == 0.0 || dot <= 0.0 {
                continue;
            }
            let sim = (dot / (norms[i] * norms[j])).min(1.0);
            if sim >= threshold {
                entries.push((i, j, sim));
                entries.push((j, i, sim));
            }
        }
        touched.clear();
    }
    WeightTable::from_entries(entries)
}

/// Word n-gram registry with per-document occurrence counts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WordNgrams {
    pub registry: Vocabulary,
    /// `(gram id, count)` per document, sorted by gram id.
    pub doc_counts: TermCounts,
    /// Distinct word ids forming each gram.
    pub members: Vec<Vec<usize>>,
}

pub const WORD_NGRAM_JOINER: char = '_';

pub fn extract_word_ngrams(corpus: &Corpus, spec: &NgramSpec) -> Result<WordNgrams> {
    spec.expect_kind(NgramKind::Word)?;
    let docs = corpus.encoded();
    let vocab = corpus.vocabulary();
    let key = |ids: &[usize]| {
        ids.iter()
            .map(|&i| vocab.word(i).unwrap_or_default())
            .collect::<Vec<_>>()
            .join(&WORD_NGRAM_JOINER.to_string())
    };

    // first pass: candidate registry in first-occurrence order with total frequency
    let mut candidates: HashMap<Vec<usize>, (usize, usize)> = HashMap::new();
    let mut order: Vec<Vec<usize>> = Vec::new();
    for doc in &docs {
        for n in spec.n_min..=spec.n_max {
            for w in doc.windows(n) {
                let next = order.len();
                let e = candidates.entry(w.to_vec()).or_insert_with(|| {
                    order.push(w.to_vec());
                    (next, 0)
                });
                e.1 += 1;
            }
        }
    }
    let mut registry = Vocabulary::new();
    let mut members = Vec::new();
    let mut remap: HashMap<Vec<usize>, usize> = HashMap::new();
    for gram in order {
        if candidates[&gram].1 >= spec.min_freq {
            let id = registry.insert(&key(&gram));
            let mut m = gram.clone();
            m.sort_unstable();
            m.dedup();
            members.push(m);
            remap.insert(gram, id);
        }
    }
    let per_doc: Vec<Vec<usize>> = docs
        .iter()
        .map(|doc| {
            (spec.n_min..=spec.n_max)
                .flat_map(|n| doc.windows(n))
                .filter_map(|w| remap.get(w).copied())
                .collect()
        })
        .collect();
    Ok(WordNgrams {
        registry,
        doc_counts: term_counts(&per_doc),
        members,
    })
}

/// Character n-gram registry and boolean word incidence.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CharNgrams {
    pub registry: Vocabulary,
    /// Sorted `(chargram id, word id)` pairs.
    pub incidence: Vec<(usize, usize)>,
}

/// Character windows of `<word>` for every length in `n_min..=n_max`.
pub fn char_ngrams_of(word: &str, n_min: usize, n_max: usize) -> Vec<String> {
    let chars: Vec<char> = std::iter::once('<')
        .chain(word.chars())
        .chain(std::iter::once('>'))
        .collect();
    let mut out = Vec::new();
    for n in n_min..=n_max {
        for w in chars.windows(n) {
            out.push(w.iter().collect());
        }
    }
    out
}

pub fn extract_char_ngrams(vocabulary: &Vocabulary, spec: &NgramSpec) -> Result<CharNgrams> {
    spec.expect_kind(NgramKind::Char)?;
    let mut all = Vocabulary::new();
    let mut word_freq: Vec<usize> = Vec::new();
    let mut per_word: Vec<Vec<usize>> = Vec::with_capacity(vocabulary.len());
    for word in vocabulary.words() {
        let mut ids: Vec<usize> = char_ngrams_of(word, spec.n_min, spec.n_max)
            .iter()
            .map(|g| all.insert(g))
            .collect();
        ids.sort_unstable();
        ids.dedup();
        word_freq.resize(all.len(), 0);
        for &g in &ids {
            word_freq[g] += 1;
        }
        per_word.push(ids);
    }
    let mut registry = Vocabulary::new();
    let mut remap = vec![None; all.len()];
    for (old, gram) in all.words().iter().enumerate() {
        if word_freq[old] >= spec.min_freq {
            remap[old] = Some(registry.insert(gram));
        }
    }
    let mut incidence: Vec<(usize, usize)> = per_word
        .iter()
        .enumerate()
        .flat_map(|(w, ids)| ids.iter().filter_map(|&g| remap[g]).map(move |g| (g, w)).collect::<Vec<_>>())
        .collect();
    incidence.sort_unstable();
    Ok(CharNgrams { registry, incidence })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsConfig {
    pub window: usize,
    pub word_ngrams: Option<NgramSpec>,
    pub char_ngrams: Option<NgramSpec>,
    /// `None` disables document-similarity edges.
    pub sim_threshold: Option<f64>,
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self {
            window: 20,
            word_ngrams: Some(NgramSpec::word(2, 2, 5)),
            char_ngrams: Some(NgramSpec::char(3, 4, 5)),
            sim_threshold: Some(0.5),
        }
    }
}

/// Every edge statistic of the heterogeneous graph, computed for one corpus.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StatTables {
    pub grams: Vocabulary,
    pub chargrams: Vocabulary,
    pub tfidf_dw: WeightTable,
    pub tfidf_dg: WeightTable,
    pub pmi_ww: WeightTable,
    pub sim_dd: WeightTable,
    /// `(gram, word)` pairs where the gram contains the word.
    pub contain_gw: Vec<(usize, usize)>,
    /// `(doc, gram)` pairs where the document contains the gram.
    pub contain_gd: Vec<(usize, usize)>,
    /// `(chargram, word)` pairs where the word contains the chargram.
    pub contain_cw: Vec<(usize, usize)>,
}

pub fn compute_stats(corpus: &Corpus, config: &StatsConfig) -> Result<StatTables> {
    let encoded = corpus.encoded();
    let tfidf_dw = tfidf(&term_counts(&encoded));
    let pmi_ww = pmi_from_ids(&encoded, corpus.vocabulary().len(), config.window)?;
    let sim_dd = match config.sim_threshold {
        Some(t) => similarity_table(corpus.len(), &tfidf_dw, t)?,
        None => WeightTable::default(),
    };
    let mut tables = StatTables {
        tfidf_dw,
        pmi_ww,
        sim_dd,
        ..Default::default()
    };
    if let Some(spec) = &config.word_ngrams {
        let g = extract_word_ngrams(corpus, spec)?;
        tables.tfidf_dg = tfidf(&g.doc_counts);
        tables.contain_gd = g
            .doc_counts
            .iter()
            .enumerate()
            .flat_map(|(d, c)| c.iter().map(move |&(gid, _)| (d, gid)))
            .collect();
        tables.contain_gw = g
            .members
            .iter()
            .enumerate()
            .flat_map(|(gid, ws)| ws.iter().map(move |&w| (gid, w)))
            .collect();
        tables.grams = g.registry;
    }
    if let Some(spec) = &config.char_ngrams {
        let c = extract_char_ngrams(corpus.vocabulary(), spec)?;
        tables.contain_cw = c.incidence;
        tables.chargrams = c.registry;
    }
    Ok(tables)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, Split};

    fn corpus(docs: &[&[&str]]) -> Corpus {
        Corpus::from_documents(
            docs.iter()
                .enumerate()
                .map(|(i, toks)| Document {
                    doc_id: format!("d{i}"),
                    split: if i == 0 { Split::Test } else { Split::Train },
                    label: "x".into(),
                    tokens: toks.iter().map(|s| s.to_string()).collect(),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn word_bigrams() {
        let c = corpus(&[&["a", "b", "c"], &["z"]]);
        let g = extract_word_ngrams(&c, &NgramSpec::word(2, 2, 1)).unwrap();
        assert_eq!(g.registry.words(), &["a_b", "b_c"]);
        assert_eq!(g.doc_counts[0], vec![(0, 1), (1, 1)]);
        assert!(g.doc_counts[1].is_empty());
    }

    #[test]
    fn word_ngrams_short_doc_and_min_freq() {
        let c = corpus(&[&["a"], &["b"]]);
        let g = extract_word_ngrams(&c, &NgramSpec::word(2, 3, 1)).unwrap();
        assert!(g.registry.is_empty());

        let c = corpus(&[&["a", "b"], &["a", "b"], &["c", "d"]]);
        let g = extract_word_ngrams(&c, &NgramSpec::word(2, 2, 2)).unwrap();
        assert_eq!(g.registry.words(), &["a_b"]);
        let df = g.doc_counts.iter().filter(|c| !c.is_empty()).count();
        assert_eq!(df, 2);
    }

    #[test]
    fn wrong_kind_rejected() {
        let c = corpus(&[&["a"], &["b"]]);
        assert!(extract_word_ngrams(&c, &NgramSpec::char(3, 3, 1)).is_err());
        assert!(NgramSpec::word(3, 2, 1).validate().is_err());
        assert!(NgramSpec::word(1, 2, 1).validate().is_err());
    }

    #[test]
    fn char_ngrams_with_markers() {
        let v: Vocabulary = ["cat"].into_iter().collect();
        let c = extract_char_ngrams(&v, &NgramSpec::char(3, 3, 1)).unwrap();
        assert_eq!(c.registry.words(), &["<ca", "cat", "at>"]);
        assert_eq!(c.incidence, vec![(0, 0), (1, 0), (2, 0)]);

        let v: Vocabulary = ["a"].into_iter().collect();
        let c = extract_char_ngrams(&v, &NgramSpec::char(3, 4, 1)).unwrap();
        assert_eq!(c.registry.words(), &["<a>"]);
    }

    #[test]
    fn char_ngrams_min_freq() {
        let v: Vocabulary = ["cat", "cap"].into_iter().collect();
        let c = extract_char_ngrams(&v, &NgramSpec::char(3, 3, 2)).unwrap();
        assert_eq!(c.registry.words(), &["<ca"]);
        assert_eq!(c.incidence, vec![(0, 0), (0, 1)]);
    }

    #[test]
    fn tfidf_hand_values() {
        let counts = term_counts(&[vec![0, 1], vec![0]]);
        let t = tfidf(&counts);
        assert_eq!(t.get(0, 0), None);
        assert!((t.get(0, 1).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((t.get(0, 1).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!(tfidf(&term_counts(&[vec![0, 1, 1]])).is_empty());
    }

    #[test]
    fn pmi_hand_values() {
        let t = pmi_from_ids(&[vec![0, 1]], 2, 2).unwrap();
        assert!(t.is_empty());

        let t = pmi_from_ids(&[vec![0, 1], vec![0, 1], vec![2, 3]], 4, 2).unwrap();
        let v = t.get(0, 1).unwrap();
        assert!((v - 1.5f64.ln()).abs() < 1e-15);
        assert!((v - 0.405).abs() < 1e-3);
        assert_eq!(t.get(1, 0), Some(v));
        assert!(t.is_symmetric());
    }

    #[test]
    fn pmi_errors() {
        assert!(matches!(pmi_from_ids(&[vec![0]], 1, 1), Err(Error::Config(_))));
        assert!(matches!(pmi_from_ids(&[vec![]], 1, 2), Err(Error::NoWindows)));
    }

    #[test]
    fn similarity_identical_and_disjoint() {
        // d0 == d1, d2 disjoint
        let tf = WeightTable::from_entries(vec![(0, 0, 1.0), (0, 1, 2.0), (1, 0, 1.0), (1, 1, 2.0), (2, 2, 3.0)]).unwrap();
        let s = similarity_table(3, &tf, 0.0).unwrap();
        assert!((s.get(0, 1).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(s.get(0, 2), None);
        assert_eq!(s.get(0, 0), None);
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn similarity_threshold_single_pair() {
        // cos(d0,d1) = 0.7 exactly by construction, the other pairs are lower
        let s07 = (1.0f64 - 0.49).sqrt();
        let tf = WeightTable::from_entries(vec![
            (0, 0, 1.0),
            (1, 0, 0.7),
            (1, 1, s07),
            (2, 2, 1.0),
            (2, 0, 0.1),
        ])
        .unwrap();
        let s = similarity_table(3, &tf, 0.5).unwrap();
        assert_eq!(s.len(), 2);
        assert!((s.get(0, 1).unwrap() - 0.7).abs() < 1e-12);
        assert!(s.is_symmetric());
    }
}
