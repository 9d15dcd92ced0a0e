//! Labeled document collections: TSV ingestion, tokenization, vocabulary
//! construction and train/validation/test split assignment.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Tsv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub doc_id: String,
    pub split: Split,
    pub label: String,
    pub tokens: Vec<String>,
}

/// Dense string interner; ids are assigned in insertion order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, word: &str) -> usize {
        if let Some(&id) = self.ids.get(word) {
            return id;
        }
        let id = self.words.len();
        self.words.push(word.to_owned());
        self.ids.insert(word.to_owned(), id);
        id
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.ids.get(word).copied()
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

impl<'a> FromIterator<&'a str> for Vocabulary {
    fn from_iter<I: IntoIterator<Item = &'a str>>(iter: I) -> Self {
        let mut v = Vocabulary::new();
        for w in iter {
            v.insert(w);
        }
        v
    }
}

#[derive(Debug, Clone, Default)]
pub struct PreprocessConfig {
    pub stopwords: HashSet<String>,
}

impl PreprocessConfig {
    /// Reads a stopword list: one word per line, blank lines and `#` comments ignored.
    pub fn with_stopword_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let stopwords = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        Ok(Self { stopwords })
    }
}

/// Lowercases, maps every character outside `[a-z0-9']` to a space and
/// splits on whitespace. Stopwords are removed after splitting.
pub fn tokenize(text: &str, config: &PreprocessConfig) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .flat_map(char::to_lowercase)
        .map(|c| {
            if c.is_ascii_lowercase() || c.is_ascii_digit() || c == '\'' {
                c
            } else {
                ' '
            }
        })
        .collect();
    cleaned
        .split_whitespace()
        .filter(|t| !config.stopwords.contains(*t))
        .map(str::to_owned)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    documents: Vec<Document>,
    labels: Vec<String>,
    vocabulary: Vocabulary,
}

impl Corpus {
    /// Builds a corpus from already tokenized documents, assigning label and
    /// word ids in first-occurrence order.
    pub fn from_documents(documents: Vec<Document>) -> Result<Self> {
        if documents.is_empty() {
            return Err(Error::NoDocuments);
        }
        let mut seen = HashSet::with_capacity(documents.len());
        let mut labels: Vec<String> = Vec::new();
        let mut vocabulary = Vocabulary::new();
        for doc in &documents {
            if !seen.insert(doc.doc_id.as_str()) {
                return Err(Error::DuplicateDocId(doc.doc_id.clone()));
            }
            if doc.tokens.is_empty() {
                return Err(Error::EmptyDocument(doc.doc_id.clone()));
            }
            if !labels.contains(&doc.label) {
                labels.push(doc.label.clone());
            }
            for t in &doc.tokens {
                vocabulary.insert(t);
            }
        }
        let corpus = Corpus {
            documents,
            labels,
            vocabulary,
        };
        corpus.check_splits()?;
        Ok(corpus)
    }

    /// Parses TSV text (`doc_id<TAB>split<TAB>label<TAB>text`).
    pub fn parse_tsv(text: &str, config: &PreprocessConfig) -> Result<Self> {
        let mut documents = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("expected 4 tab-separated fields, found {}", fields.len()),
                });
            }
            let split = match fields[1] {
                "train" => Split::Train,
                "test" => Split::Test,
                other => {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("split must be train or test, found {other:?}"),
                    })
                }
            };
            if fields[0].is_empty() || fields[2].is_empty() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "empty doc_id or label".into(),
                });
            }
            documents.push(Document {
                doc_id: fields[0].to_owned(),
                split,
                label: fields[2].to_owned(),
                tokens: tokenize(fields[3], config),
            });
        }
        Self::from_documents(documents)
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn label_id(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Token sequences mapped to vocabulary ids.
    pub fn encoded(&self) -> Vec<Vec<usize>> {
        self.documents
            .iter()
            .map(|d| {
                d.tokens
                    .iter()
                    .map(|t| self.vocabulary.id(t).expect("token in vocabulary"))
                    .collect()
            })
            .collect()
    }

    pub fn count_split(&self, split: Split) -> usize {
        self.documents.iter().filter(|d| d.split == split).count()
    }

    fn check_splits(&self) -> Result<()> {
        if self.count_split(Split::Train) + self.count_split(Split::Val) == 0 {
            return Err(Error::EmptySplit("train"));
        }
        if self.count_split(Split::Test) == 0 {
            return Err(Error::EmptySplit("test"));
        }
        Ok(())
    }
}

pub fn load_corpus(path: &Path, format: CorpusFormat, config: &PreprocessConfig) -> Result<Corpus> {
    match format {
        CorpusFormat::Tsv => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            Corpus::parse_tsv(&text, config)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PruneReport {
    pub removed_words: usize,
    pub dropped_documents: usize,
}

/// Removes words with document frequency below `min_df`, re-densifying ids.
/// Documents emptied by pruning are dropped and counted in the report.
pub fn prune_vocabulary(corpus: &Corpus, min_df: usize) -> Result<(Corpus, PruneReport)> {
    if min_df == 0 {
        return Err(Error::Config("min_df must be at least 1".into()));
    }
    let mut df = vec![0usize; corpus.vocabulary.len()];
    for ids in corpus.encoded() {
        let mut uniq = ids;
        uniq.sort_unstable();
        uniq.dedup();
        for id in uniq {
            df[id] += 1;
        }
    }
    let keep: Vec<bool> = df.iter().map(|&c| c >= min_df).collect();
    let removed_words = keep.iter().filter(|k| !**k).count();
    if removed_words == keep.len() {
        return Err(Error::EmptyVocabulary);
    }
    let mut dropped_documents = 0;
    let mut documents = Vec::with_capacity(corpus.len());
    for doc in &corpus.documents {
        let tokens: Vec<String> = doc
            .tokens
            .iter()
            .filter(|t| keep[corpus.vocabulary.id(t).expect("token in vocabulary")])
            .cloned()
            .collect();
        if tokens.is_empty() {
            dropped_documents += 1;
            continue;
        }
        documents.push(Document {
            tokens,
            ..doc.clone()
        });
    }
    if dropped_documents > 0 {
        log::warn!("pruning with min_df={min_df} dropped {dropped_documents} empty documents");
    }
    let pruned = Corpus::from_documents(documents)?;
    Ok((
        pruned,
        PruneReport {
            removed_words,
            dropped_documents,
        },
    ))
}

/// Moves `floor(fraction * |train|)` training documents, sampled uniformly
/// without replacement from a seeded stream, into the validation split.
pub fn assign_validation(corpus: &Corpus, fraction: f64, seed: u64) -> Result<Corpus> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!(
            "validation fraction must lie in (0,1), got {fraction}"
        )));
    }
    let train: Vec<usize> = corpus
        .documents
        .iter()
        .enumerate()
        .filter(|(_, d)| d.split == Split::Train)
        .map(|(i, _)| i)
        .collect();
    if train.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    let n_val = (fraction * train.len() as f64).floor() as usize;
    if n_val == 0 || n_val == train.len() {
        return Err(Error::Config(format!(
            "validation size {n_val} out of {} training documents is degenerate",
            train.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = corpus.clone();
    for pos in sample(&mut rng, train.len(), n_val) {
        out.documents[train[pos]].split = Split::Val;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> PreprocessConfig {
        PreprocessConfig::default()
    }

    #[test]
    fn tokenize_rules() {
        assert_eq!(tokenize("Good, movie!", &cfg()), vec!["good", "movie"]);
        assert!(tokenize("", &cfg()).is_empty());
        assert_eq!(tokenize("A.B 3x", &cfg()), vec!["a", "b", "3x"]);
        assert_eq!(tokenize("Don't STOP", &cfg()), vec!["don't", "stop"]);
    }

    #[test]
    fn tokenize_stopwords() {
        let c = PreprocessConfig {
            stopwords: ["the".to_string()].into_iter().collect(),
        };
        assert_eq!(tokenize("The cat", &c), vec!["cat"]);
    }

    #[test]
    fn load_two_docs() {
        let c = Corpus::parse_tsv("d1\ttrain\tpos\tGood movie\nd2\ttest\tneg\tBad\n", &cfg()).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.vocabulary().words(), &["good", "movie", "bad"]);
        assert_eq!(c.vocabulary().id("bad"), Some(2));
        assert_eq!(c.labels(), &["pos", "neg"]);
    }

    #[test]
    fn comments_are_skipped() {
        let c = Corpus::parse_tsv("# header\nd1\ttrain\tpos\tx\nd2\ttest\tneg\ty\n", &cfg()).unwrap();
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn empty_file() {
        assert!(matches!(Corpus::parse_tsv("", &cfg()), Err(Error::NoDocuments)));
    }

    #[test]
    fn malformed_line() {
        match Corpus::parse_tsv("d1\ttrain\tpos\n", &cfg()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_and_empty_docs() {
        let dup = "d1\ttrain\tpos\ta\nd1\ttest\tneg\tb\n";
        assert!(matches!(Corpus::parse_tsv(dup, &cfg()), Err(Error::DuplicateDocId(id)) if id == "d1"));
        let empty = "d1\ttrain\tpos\t!!!\nd2\ttest\tneg\tb\n";
        assert!(matches!(Corpus::parse_tsv(empty, &cfg()), Err(Error::EmptyDocument(id)) if id == "d1"));
    }

    #[test]
    fn unknown_split_is_parse_error() {
        assert!(matches!(
            Corpus::parse_tsv("d1\tdev\tpos\ta\n", &cfg()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    fn corpus_of(docs: &[(&str, Split, &str)]) -> Corpus {
        Corpus::from_documents(
            docs.iter()
                .enumerate()
                .map(|(i, (text, split, label))| Document {
                    doc_id: format!("d{i}"),
                    split: *split,
                    label: label.to_string(),
                    tokens: tokenize(text, &cfg()),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn prune_identity_and_rare() {
        let c = corpus_of(&[("a rare", Split::Train, "x"), ("a b", Split::Test, "y")]);
        let (same, rep) = prune_vocabulary(&c, 1).unwrap();
        assert_eq!(same, c);
        assert_eq!(rep, PruneReport::default());
        let (p, rep) = prune_vocabulary(&c, 2).unwrap();
        assert_eq!(p.vocabulary().words(), &["a"]);
        assert_eq!(rep.removed_words, 2);
        assert_eq!(p.documents()[0].tokens, vec!["a"]);
    }

    #[test]
    fn prune_everything_errors() {
        let c = corpus_of(&[("a", Split::Train, "x"), ("b", Split::Test, "y")]);
        assert!(matches!(prune_vocabulary(&c, 5), Err(Error::EmptyVocabulary)));
    }

    #[test]
    fn prune_drops_emptied_docs() {
        let c = corpus_of(&[
            ("a", Split::Train, "x"),
            ("a", Split::Train, "x"),
            ("zzz", Split::Train, "x"),
            ("a", Split::Test, "y"),
        ]);
        let (p, rep) = prune_vocabulary(&c, 2).unwrap();
        assert_eq!(rep.dropped_documents, 1);
        assert_eq!(p.len(), 3);
    }

    fn train_corpus(n: usize) -> Corpus {
        let mut docs: Vec<(String, Split)> = (0..n).map(|i| (format!("w{i}"), Split::Train)).collect();
        docs.push(("t".into(), Split::Test));
        Corpus::from_documents(
            docs.into_iter()
                .enumerate()
                .map(|(i, (t, s))| Document {
                    doc_id: format!("d{i}"),
                    split: s,
                    label: "l".into(),
                    tokens: vec![t],
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn validation_ten_percent() {
        let c = assign_validation(&train_corpus(100), 0.1, 7).unwrap();
        assert_eq!(c.count_split(Split::Val), 10);
        assert_eq!(c.count_split(Split::Train), 90);
        assert_eq!(c.count_split(Split::Test), 1);
    }

    #[test]
    fn validation_deterministic() {
        let base = train_corpus(50);
        assert_eq!(
            assign_validation(&base, 0.1, 3).unwrap(),
            assign_validation(&base, 0.1, 3).unwrap()
        );
    }

    #[test]
    fn validation_degenerate() {
        assert!(assign_validation(&train_corpus(5), 0.1, 0).is_err());
    }
}
