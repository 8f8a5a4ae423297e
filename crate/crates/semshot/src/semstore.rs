//! Semantic class embeddings parsed from word-vector text files.
//!
//! The file format is GloVe-style UTF-8 text with no header: one entry per
//! line, a token followed by `d_e` whitespace-separated decimal floats.
//! Multi-word class names resolve to the mean of their token vectors.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::databank::FeatureBank;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },
    #[error("no embedding for token {token:?} (needed by class {class:?})")]
    MissingToken { token: String, class: String },
    #[error("invalid embedding table: {0}")]
    Invalid(String),
}

/// Lowercase and collapse interior whitespace/underscores/hyphens to single
/// spaces. `"King_Crab "` and `"king-crab"` normalize identically.
pub fn normalize_name(name: &str) -> String {
    name.to_lowercase()
        .split(|c: char| c.is_whitespace() || c == '_' || c == '-')
        .filter(|t| !t.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    d_e: usize,
    entries: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(d_e: usize) -> Result<Self, EmbedError> {
        if d_e == 0 {
            return Err(EmbedError::Invalid("d_e must be positive".into()));
        }
        Ok(EmbeddingTable {
            d_e,
            entries: BTreeMap::new(),
        })
    }

    pub fn d_e(&self) -> usize {
        self.d_e
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, token: &str, vector: Vec<f64>) -> Result<(), EmbedError> {
        if vector.len() != self.d_e {
            return Err(EmbedError::Invalid(format!(
                "vector for {token:?} has length {}, table d_e is {}",
                vector.len(),
                self.d_e
            )));
        }
        if let Some(bad) = vector.iter().find(|v| !v.is_finite()) {
            return Err(EmbedError::Invalid(format!(
                "non-finite value {bad} in vector for {token:?}"
            )));
        }
        self.entries.insert(normalize_name(token), vector);
        Ok(())
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.entries.get(&normalize_name(token)).map(Vec::as_slice)
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Resolve a class name: single-token names return their vector
    /// verbatim, multi-token names (split on space/underscore/hyphen) the
    /// arithmetic mean of the constituent token vectors. Any missing token
    /// fails loudly; there is no out-of-vocabulary fallback.
    pub fn embedding_for_class(&self, class_name: &str) -> Result<Vec<f64>, EmbedError> {
        let normalized = normalize_name(class_name);
        if normalized.is_empty() {
            return Err(EmbedError::Invalid(format!(
                "empty class name {class_name:?}"
            )));
        }
        let tokens: Vec<&str> = normalized.split(' ').collect();
        let mut acc = vec![0.0; self.d_e];
        for token in &tokens {
            let v = self
                .entries
                .get(*token)
                .ok_or_else(|| EmbedError::MissingToken {
                    token: (*token).to_owned(),
                    class: class_name.to_owned(),
                })?;
            for (a, x) in acc.iter_mut().zip(v) {
                *a += x;
            }
        }
        let n = tokens.len() as f64;
        for a in &mut acc {
            *a /= n;
        }
        Ok(acc)
    }

    /// Copy of the table with every vector scaled to unit L2 norm.
    /// Zero vectors are left untouched.
    pub fn unit_normalized(&self) -> EmbeddingTable {
        let entries = self
            .entries
            .iter()
            .map(|(k, v)| {
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                let scaled = if norm > 0.0 {
                    v.iter().map(|x| x / norm).collect()
                } else {
                    v.clone()
                };
                (k.clone(), scaled)
            })
            .collect();
        EmbeddingTable {
            d_e: self.d_e,
            entries,
        }
    }

    /// Bank classes with no resolvable embedding. Empty means full coverage.
    pub fn coverage_check(&self, bank: &FeatureBank) -> Vec<String> {
        bank.classes()
            .iter()
            .filter(|c| self.embedding_for_class(&c.name).is_err())
            .map(|c| c.name.clone())
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EmbedError> {
        let mut out = Vec::new();
        for (token, v) in &self.entries {
            // tokens with spaces would not survive the whitespace-split
            // format, so store them underscore-joined
            write!(out, "{}", token.replace(' ', "_"))?;
            for x in v {
                write!(out, " {x}")?;
            }
            writeln!(out)?;
        }
        fs::write(path, out)?;
        Ok(())
    }
}

/// Parse a GloVe-style text file into a token table. Lines whose float count
/// does not match `d_e` are rejected with their 1-based line number.
pub fn load_word_vectors(path: impl AsRef<Path>, d_e: usize) -> Result<EmbeddingTable, EmbedError> {
    let text = fs::read_to_string(path)?;
    parse_word_vectors(&text, d_e)
}

pub fn parse_word_vectors(text: &str, d_e: usize) -> Result<EmbeddingTable, EmbedError> {
    let mut table = EmbeddingTable::new(d_e)?;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let token = fields.next().ok_or(EmbedError::Parse {
            line: line_no,
            detail: "missing token".into(),
        })?;
        let values: Vec<f64> = fields
            .map(|f| {
                f.parse::<f64>().map_err(|e| EmbedError::Parse {
                    line: line_no,
                    detail: format!("unparseable float {f:?}: {e}"),
                })
            })
            .collect::<Result<_, _>>()?;
        if values.len() != d_e {
            return Err(EmbedError::Parse {
                line: line_no,
                detail: format!("expected {d_e} floats, found {}", values.len()),
            });
        }
        table.insert(token, values)?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_line_parse() {
        let table = parse_word_vectors("dog 0.5 -0.25\n", 2).unwrap();
        assert_eq!(table.get("dog").unwrap(), &[0.5, -0.25]);
    }

    #[test]
    fn empty_file_empty_table() {
        let table = parse_word_vectors("", 2).unwrap();
        assert!(table.is_empty());
    }

    #[test]
    fn three_line_fixture() {
        let fixture = "dog 1 2\ncat -0.5 0.125\ncrab 3.25 4\n";
        let table = parse_word_vectors(fixture, 2).unwrap();
        assert_eq!(table.len(), 3);
        assert_eq!(table.get("cat").unwrap(), &[-0.5, 0.125]);
        assert_eq!(table.get("crab").unwrap(), &[3.25, 4.0]);
    }

    #[test]
    fn wrong_arity_reports_line_number() {
        let err = parse_word_vectors("dog 1 2\ncat 1 2 3\n", 2).unwrap_err();
        match err {
            EmbedError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_float_reports_line_number() {
        let err = parse_word_vectors("dog 1 oops\n", 2).unwrap_err();
        assert!(format!("{err}").contains("line 1"));
    }

    #[test]
    fn single_token_class_is_verbatim() {
        let table = parse_word_vectors("dog 0.5 -0.25\n", 2).unwrap();
        assert_eq!(table.embedding_for_class("dog").unwrap(), vec![0.5, -0.25]);
    }

    #[test]
    fn multi_token_class_is_token_mean() {
        let table = parse_word_vectors("king 1 0\ncrab 0 1\n", 2).unwrap();
        for name in ["king crab", "king_crab", "King-Crab"] {
            assert_eq!(table.embedding_for_class(name).unwrap(), vec![0.5, 0.5]);
        }
    }

    #[test]
    fn mean_of_equal_vectors_is_that_vector() {
        let table = parse_word_vectors("king 2 3\ncrab 2 3\n", 2).unwrap();
        assert_eq!(
            table.embedding_for_class("king crab").unwrap(),
            vec![2.0, 3.0]
        );
    }

    #[test]
    fn missing_token_names_the_token() {
        let table = parse_word_vectors("king 1 0\n", 2).unwrap();
        match table.embedding_for_class("king crab") {
            Err(EmbedError::MissingToken { token, .. }) => assert_eq!(token, "crab"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn normalization_rules() {
        assert_eq!(normalize_name("  King_Crab  "), "king crab");
        assert_eq!(normalize_name("a-b c"), "a b c");
    }

    #[test]
    fn unit_normalized_has_unit_vectors() {
        let table = parse_word_vectors("dog 3 4\n", 2).unwrap();
        let unit = table.unit_normalized();
        assert_eq!(unit.get("dog").unwrap(), &[0.6, 0.8]);
        // default table is untouched
        assert_eq!(table.get("dog").unwrap(), &[3.0, 4.0]);
    }

    #[test]
    fn save_round_trips_values_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vecs.txt");
        let table = parse_word_vectors("dog 0.1 -7.25e-3\ncat 1e300 2\n", 2).unwrap();
        table.save(&path).unwrap();
        let back = load_word_vectors(&path, 2).unwrap();
        assert_eq!(table, back);
    }
}
