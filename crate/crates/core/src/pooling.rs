//! Order-less pooling of proposal features and word-vector answer encoding.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::ops::Deref;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reserved prompt token marking the slot to be filled.
pub const BLANK_TOKEN: &str = "<BLANK>";

/// A dense real vector: a proposal/global image feature or a word vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput(
                "feature vector must be non-empty".into(),
            ));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite feature value at position {pos}"
            )));
        }
        Ok(FeatureVector(values))
    }

    // Unchecked: joint-space projections may be all zeros or empty.
    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        FeatureVector(values)
    }

    pub fn zeros(dim: usize) -> Self {
        FeatureVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, factor: f64) -> FeatureVector {
        FeatureVector(self.0.iter().map(|v| v * factor).collect())
    }

    /// Unit-length copy; zero vectors are returned unchanged.
    pub fn l2_normalized(&self) -> FeatureVector {
        let n = self.norm();
        if n > 0.0 {
            self.scaled(1.0 / n)
        } else {
            self.clone()
        }
    }
}

impl Deref for FeatureVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(v: FeatureVector) -> Self {
        v.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolMode {
    #[default]
    Mean,
    Max,
}

impl FromStr for PoolMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(PoolMode::Mean),
            "max" => Ok(PoolMode::Max),
            other => Err(Error::InvalidInput(format!("unknown pool mode {other:?}"))),
        }
    }
}

impl fmt::Display for PoolMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PoolMode::Mean => "mean",
            PoolMode::Max => "max",
        })
    }
}

fn common_dim<'a, I>(vectors: I) -> Result<usize>
where
    I: IntoIterator<Item = &'a FeatureVector>,
{
    let mut iter = vectors.into_iter();
    let dim = iter.next().ok_or(Error::EmptyPool)?.dim();
    for v in iter {
        if v.dim() != dim {
            return Err(Error::Shape(format!(
                "cannot pool vectors of dims {dim} and {}",
                v.dim()
            )));
        }
    }
    Ok(dim)
}

pub fn mean_pool(vectors: &[FeatureVector]) -> Result<FeatureVector> {
    let dim = common_dim(vectors)?;
    let mut acc = vec![0.0; dim];
    for v in vectors {
        for (a, x) in acc.iter_mut().zip(v.iter()) {
            *a += x;
        }
    }
    let n = vectors.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(FeatureVector(acc))
}

pub fn max_pool(vectors: &[FeatureVector]) -> Result<FeatureVector> {
    common_dim(vectors)?;
    let mut acc = vectors[0].0.clone();
    for v in &vectors[1..] {
        for (a, &x) in acc.iter_mut().zip(v.iter()) {
            *a = a.max(x);
        }
    }
    Ok(FeatureVector(acc))
}

pub fn pool(vectors: &[FeatureVector], mode: PoolMode) -> Result<FeatureVector> {
    match mode {
        PoolMode::Mean => mean_pool(vectors),
        PoolMode::Max => max_pool(vectors),
    }
}

/// Mean Box Pooling: pools the global image vector together with the
/// proposal vectors, the global vector counting as one more element.
pub fn build_image_representation(
    global: &FeatureVector,
    proposals: &[FeatureVector],
    mode: PoolMode,
) -> Result<FeatureVector> {
    if proposals.is_empty() {
        return Ok(global.clone());
    }
    let mut all = Vec::with_capacity(proposals.len() + 1);
    all.push(global.clone());
    all.extend_from_slice(proposals);
    pool(&all, mode)
}

/// Lowercases, splits on whitespace and strips surrounding ASCII
/// punctuation. A piece reading `<BLANK>` (any case, optionally followed or
/// preceded by punctuation) is kept as the reserved [`BLANK_TOKEN`].
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|piece| {
            let inner =
                piece.trim_matches(|c: char| c.is_ascii_punctuation() && c != '<' && c != '>');
            if inner.eq_ignore_ascii_case(BLANK_TOKEN) {
                return Some(BLANK_TOKEN.to_string());
            }
            let tok = piece
                .trim_matches(|c: char| c.is_ascii_punctuation())
                .to_lowercase();
            (!tok.is_empty()).then_some(tok)
        })
        .collect()
}

/// A pretrained word-vector table. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    tokens: Vec<String>,
    vectors: Vec<FeatureVector>,
    index: HashMap<String, usize>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("embedding dim must be positive".into()));
        }
        Ok(EmbeddingTable {
            dim,
            tokens: Vec::new(),
            vectors: Vec::new(),
            index: HashMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Adds a token; an already present token keeps its first vector.
    pub fn insert(&mut self, token: impl Into<String>, vector: FeatureVector) -> Result<()> {
        if vector.dim() != self.dim {
            return Err(Error::Shape(format!(
                "word vector has dim {}, table dim is {}",
                vector.dim(),
                self.dim
            )));
        }
        let token = token.into();
        if self.index.contains_key(&token) {
            return Ok(());
        }
        self.index.insert(token.clone(), self.tokens.len());
        self.tokens.push(token);
        self.vectors.push(vector);
        Ok(())
    }

    pub fn get(&self, token: &str) -> Option<&FeatureVector> {
        self.index.get(token).map(|&i| &self.vectors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &FeatureVector)> {
        self.tokens
            .iter()
            .map(String::as_str)
            .zip(self.vectors.iter())
    }

    /// Reads the word2vec text format: an optional `<count> <dim>` header,
    /// then one token per line followed by its components.
    pub fn read_word2vec<R: BufRead>(reader: R) -> Result<Self> {
        let mut table: Option<EmbeddingTable> = None;
        let mut expected_count = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if lineno == 1 && fields.len() == 2 {
                if let (Ok(count), Ok(dim)) =
                    (fields[0].parse::<usize>(), fields[1].parse::<usize>())
                {
                    table = Some(
                        EmbeddingTable::new(dim)
                            .map_err(|e| Error::parse(lineno, e.to_string()))?,
                    );
                    expected_count = Some(count);
                    continue;
                }
            }
            if fields.len() < 2 {
                return Err(Error::parse(lineno, "token without vector components"));
            }
            let values = fields[1..]
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(lineno, e.to_string()))?;
            let vector =
                FeatureVector::new(values).map_err(|e| Error::parse(lineno, e.to_string()))?;
            let t = match table.as_mut() {
                Some(t) => t,
                None => table.insert(EmbeddingTable::new(vector.dim())?),
            };
            if vector.dim() != t.dim {
                return Err(Error::Shape(format!(
                    "line {lineno}: word vector has dim {}, expected {}",
                    vector.dim(),
                    t.dim
                )));
            }
            t.insert(fields[0], vector)?;
        }
        let table = table.ok_or_else(|| Error::parse(0, "empty embedding file"))?;
        if let Some(count) = expected_count {
            if count != table.len() {
                return Err(Error::parse(
                    0,
                    format!("header announces {count} tokens, found {}", table.len()),
                ));
            }
        }
        Ok(table)
    }

    pub fn write_word2vec<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{} {}", self.len(), self.dim)?;
        for (tok, vec) in self.iter() {
            write!(out, "{tok}")?;
            for v in vec.iter() {
                write!(out, " {v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    fn in_vocab<'a>(
        &'a self,
        tokens: &'a [String],
    ) -> impl Iterator<Item = &'a FeatureVector> + 'a {
        tokens.iter().filter_map(|t| self.get(t))
    }

    /// Sum of the vectors of in-vocabulary tokens.
    pub fn encode_sum(&self, tokens: &[String]) -> Result<FeatureVector> {
        let mut acc = vec![0.0; self.dim];
        let mut found = 0usize;
        for v in self.in_vocab(tokens) {
            found += 1;
            for (a, x) in acc.iter_mut().zip(v.iter()) {
                *a += x;
            }
        }
        if found == 0 {
            return Err(Error::Unencodable);
        }
        Ok(FeatureVector(acc))
    }
}

/// Mean of the word vectors of `tokens`, skipping out-of-vocabulary tokens.
pub fn encode_answer(tokens: &[String], table: &EmbeddingTable) -> Result<FeatureVector> {
    let found: Vec<FeatureVector> = table.in_vocab(tokens).cloned().collect();
    if found.is_empty() {
        return Err(Error::Unencodable);
    }
    mean_pool(&found)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn feature_vector_invariants() {
        assert!(FeatureVector::new(vec![]).is_err());
        assert!(FeatureVector::new(vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn mean_pool_examples() {
        let v = fv(&[1.5, -2.0]);
        assert_eq!(mean_pool(std::slice::from_ref(&v)).unwrap(), v);
        assert_eq!(
            mean_pool(&[v.clone(), v.scaled(-1.0)]).unwrap(),
            fv(&[0.0, 0.0])
        );
        assert_eq!(
            mean_pool(&[fv(&[1.0, 2.0]), fv(&[3.0, 4.0])]).unwrap(),
            fv(&[2.0, 3.0])
        );
    }

    #[test]
    fn max_pool_examples() {
        let v = fv(&[1.0, -7.0]);
        assert_eq!(max_pool(std::slice::from_ref(&v)).unwrap(), v);
        assert_eq!(
            max_pool(&[fv(&[1.0, 4.0]), fv(&[3.0, 2.0])]).unwrap(),
            fv(&[3.0, 4.0])
        );
        assert_eq!(max_pool(&[v.clone(), v.clone()]).unwrap(), v);
    }

    #[test]
    fn pooling_errors() {
        assert!(matches!(mean_pool(&[]), Err(Error::EmptyPool)));
        assert!(matches!(max_pool(&[]), Err(Error::EmptyPool)));
        assert!(matches!(
            mean_pool(&[fv(&[1.0]), fv(&[1.0, 2.0])]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn image_representation() {
        let g = fv(&[0.0, 0.0]);
        assert_eq!(
            build_image_representation(&g, &[], PoolMode::Mean).unwrap(),
            g
        );
        assert_eq!(
            build_image_representation(&g, &[fv(&[3.0, 3.0])], PoolMode::Mean).unwrap(),
            fv(&[1.5, 1.5])
        );
        assert_eq!(
            build_image_representation(&fv(&[1.0, 0.0]), &[fv(&[0.0, 2.0])], PoolMode::Max)
                .unwrap(),
            fv(&[1.0, 2.0])
        );
        assert!(build_image_representation(&g, &[fv(&[1.0])], PoolMode::Mean).is_err());
    }

    #[test]
    fn tokenize_rules() {
        assert_eq!(tokenize("The cat."), toks(&["the", "cat"]));
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("A  b"), toks(&["a", "b"]));
        assert_eq!(tokenize("... !"), Vec::<String>::new());
        assert_eq!(
            tokenize("The place is <BLANK>."),
            toks(&["the", "place", "is", BLANK_TOKEN])
        );
        assert_eq!(tokenize("(<blank>)"), toks(&[BLANK_TOKEN]));
    }

    #[test]
    fn encode_answer_examples() {
        let mut t = EmbeddingTable::new(2).unwrap();
        t.insert("cat", fv(&[0.3, 0.7])).unwrap();
        t.insert("a", fv(&[1.0, 0.0])).unwrap();
        t.insert("b", fv(&[0.0, 1.0])).unwrap();
        assert_eq!(encode_answer(&toks(&["cat"]), &t).unwrap(), fv(&[0.3, 0.7]));
        assert_eq!(
            encode_answer(&toks(&["a", "b"]), &t).unwrap(),
            fv(&[0.5, 0.5])
        );
        assert_eq!(
            encode_answer(&toks(&["a", "zzz"]), &t).unwrap(),
            fv(&[1.0, 0.0])
        );
        assert!(matches!(
            encode_answer(&toks(&["zzz"]), &t),
            Err(Error::Unencodable)
        ));
        assert_eq!(
            t.encode_sum(&toks(&["a", "b", "a"])).unwrap(),
            fv(&[2.0, 1.0])
        );
    }

    #[test]
    fn word2vec_with_and_without_header() {
        let with = "2 3\nfoo 1 2 3\nbar 0.5 -1 1e-3\n";
        let without = "foo 1 2 3\nbar 0.5 -1 1e-3\n";
        let a = EmbeddingTable::read_word2vec(with.as_bytes()).unwrap();
        let b = EmbeddingTable::read_word2vec(without.as_bytes()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim(), 3);
        assert_eq!(a.get("bar").unwrap().as_slice(), &[0.5, -1.0, 1e-3]);

        let mut buf = Vec::new();
        a.write_word2vec(&mut buf).unwrap();
        assert_eq!(EmbeddingTable::read_word2vec(buf.as_slice()).unwrap(), a);
    }

    #[test]
    fn word2vec_errors() {
        let err = EmbeddingTable::read_word2vec("foo 1 2\nbar 1 x\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = EmbeddingTable::read_word2vec("foo 1 2\nbar 1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
        let err = EmbeddingTable::read_word2vec("3 2\nfoo 1 2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }
}
