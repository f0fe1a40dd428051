//! Text normalization, lexical ratio and embedding cosine similarity.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowercased text with whitespace runs collapsed to single spaces and no
/// leading or trailing whitespace.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub struct NormalizedText(String);

impl NormalizedText {
    pub fn new(raw: &str) -> Self {
        normalize(raw)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn tokens(&self) -> impl Iterator<Item = NormalizedText> + '_ {
        self.0
            .split(' ')
            .filter(|t| !t.is_empty())
            .map(|t| NormalizedText(t.to_owned()))
    }
}

impl From<String> for NormalizedText {
    fn from(s: String) -> Self {
        normalize(&s)
    }
}

impl From<&str> for NormalizedText {
    fn from(s: &str) -> Self {
        normalize(s)
    }
}

impl From<NormalizedText> for String {
    fn from(t: NormalizedText) -> String {
        t.0
    }
}

impl fmt::Display for NormalizedText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn normalize(raw: &str) -> NormalizedText {
    let lowered = raw.to_lowercase();
    let mut out = String::with_capacity(lowered.len());
    for word in lowered.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    NormalizedText(out)
}

/// Edit distance with unit insert/delete and substitution cost 2.
pub fn edit_distance_sub2<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (a, b) = if a.len() < b.len() { (b, a) } else { (a, b) };
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = diag + if ca == cb { 0 } else { 2 };
            let best = sub.min(row[j] + 1).min(row[j + 1] + 1);
            diag = row[j + 1];
            row[j + 1] = best;
        }
    }
    row[b.len()]
}

/// `(|a| + |b| - d) / (|a| + |b|)` over Unicode scalar values, where `d` is
/// [`edit_distance_sub2`]. Two empty strings compare as 1.0.
pub fn char_ratio(a: &[char], b: &[char]) -> f64 {
    let total = a.len() + b.len();
    if total == 0 {
        return 1.0;
    }
    (total - edit_distance_sub2(a, b)) as f64 / total as f64
}

/// Lexical similarity in `[0, 1]`.
pub fn fuzz_ratio(a: &NormalizedText, b: &NormalizedText) -> f64 {
    let a: Vec<char> = a.as_str().chars().collect();
    let b: Vec<char> = b.as_str().chars().collect();
    char_ratio(&a, &b)
}

/// Best [`fuzz_ratio`] of `word` against any single token of `sentence`.
/// Falls back to the whole-string ratio when `sentence` has no tokens.
pub fn fuzz_ratio_token_best(word: &NormalizedText, sentence: &NormalizedText) -> f64 {
    sentence
        .tokens()
        .map(|tok| fuzz_ratio(word, &tok))
        .fold(None, |best: Option<f64>, r| {
            Some(best.map_or(r, |b| b.max(r)))
        })
        .unwrap_or_else(|| fuzz_ratio(word, sentence))
}

/// How the lexical score compares a candidate with the scene description.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LexicalMode {
    #[default]
    WholeString,
    TokenBest,
}

impl LexicalMode {
    pub fn score(self, candidate: &NormalizedText, description: &NormalizedText) -> f64 {
        match self {
            LexicalMode::WholeString => fuzz_ratio(candidate, description),
            LexicalMode::TokenBest => fuzz_ratio_token_best(candidate, description),
        }
    }
}

/// Dense sentence vector with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Contract(
                "embedding must have at least one dimension".into(),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Contract(format!(
                "embedding entry {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(Self(values))
    }

    /// The all-zero vector; cosine against it is defined as 0.
    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn scaled(&self, k: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|v| v * k).collect())
    }
}

impl TryFrom<Vec<f64>> for Embedding {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Embedding> for Vec<f64> {
    fn from(e: Embedding) -> Vec<f64> {
        e.0
    }
}

/// `dot(u, v) / (|u| |v|)`, or 0 when either vector is zero.
pub fn cosine_similarity(u: &Embedding, v: &Embedding) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::DimensionMismatch {
            left: u.dim(),
            right: v.dim(),
        });
    }
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.values().iter().zip(v.values()) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    // sqrt(nu * nv) rather than sqrt(nu) * sqrt(nv): it is exact for u == v.
    Ok((dot / (nu * nv).sqrt()).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn n(s: &str) -> NormalizedText {
        normalize(s)
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(n("  HELLO   World ").as_str(), "hello world");
        assert_eq!(n("").as_str(), "");
        assert_eq!(n("A\tB\nC").as_str(), "a b c");
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(fuzz_ratio(&n("abc"), &n("abc")), 1.0);
        assert_eq!(fuzz_ratio(&n("abc"), &n("xyz")), 0.0);
        assert_eq!(fuzz_ratio(&n("kitten"), &n("sitting")), 8.0 / 13.0);
        assert_eq!(fuzz_ratio(&n(""), &n("")), 1.0);
        assert_eq!(fuzz_ratio(&n("a"), &n("")), 0.0);
    }

    #[test]
    fn distance_counts_substitution_as_two() {
        let k: Vec<char> = "kitten".chars().collect();
        let s: Vec<char> = "sitting".chars().collect();
        assert_eq!(edit_distance_sub2(&k, &s), 5);
    }

    #[test]
    fn token_best() {
        let desc = n("an exit sign above a door");
        assert_eq!(fuzz_ratio_token_best(&n("exit"), &desc), 1.0);
        assert!(fuzz_ratio(&n("exit"), &desc) < 0.5);
        assert_eq!(fuzz_ratio_token_best(&n("exit"), &n("")), 0.0);
        assert_eq!(LexicalMode::TokenBest.score(&n("door"), &desc), 1.0);
    }

    #[test]
    fn cosine_examples() {
        let u = Embedding::new(vec![1.0, 2.0, 3.0]).unwrap();
        let v = Embedding::new(vec![4.0, 5.0, 6.0]).unwrap();
        assert_eq!(cosine_similarity(&u, &u).unwrap(), 1.0);
        let expected = 32.0 / (14f64.sqrt() * 77f64.sqrt());
        assert!((cosine_similarity(&u, &v).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.9746).abs() < 1e-4);

        let e1 = Embedding::new(vec![1.0, 0.0]).unwrap();
        let e2 = Embedding::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(cosine_similarity(&e1, &e2).unwrap(), 0.0);
        assert_eq!(cosine_similarity(&e1, &Embedding::zeros(2)).unwrap(), 0.0);
    }

    #[test]
    fn cosine_dimension_mismatch() {
        let a = Embedding::zeros(2);
        let b = Embedding::zeros(3);
        match cosine_similarity(&a, &b) {
            Err(Error::DimensionMismatch { left: 2, right: 3 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn embedding_rejects_non_finite() {
        assert!(Embedding::new(vec![]).is_err());
        assert!(Embedding::new(vec![1.0, f64::NAN]).is_err());
        assert!(serde_json::from_str::<Embedding>("[]").is_err());
        assert!(serde_json::from_str::<Embedding>("[0.5, 1]").is_ok());
    }

    fn unit_levenshtein(a: &[char], b: &[char]) -> usize {
        let mut prev: Vec<usize> = (0..=b.len()).collect();
        for (i, ca) in a.iter().enumerate() {
            let mut cur = vec![i + 1; b.len() + 1];
            for (j, cb) in b.iter().enumerate() {
                cur[j + 1] = (prev[j] + usize::from(ca != cb))
                    .min(prev[j + 1] + 1)
                    .min(cur[j] + 1);
            }
            prev = cur;
        }
        prev[b.len()]
    }

    proptest! {
        #[test]
        fn normalize_idempotent(s in "\\PC{0,30}") {
            let once = normalize(&s);
            prop_assert_eq!(normalize(once.as_str()), once.clone());
            prop_assert!(!once.as_str().starts_with(' ') && !once.as_str().ends_with(' '));
            prop_assert!(!once.as_str().contains("  "));
        }

        #[test]
        fn ratio_symmetric_bounded(a in "[a-d ]{0,12}", b in "[a-d ]{0,12}") {
            let (a, b) = (n(&a), n(&b));
            let r = fuzz_ratio(&a, &b);
            prop_assert_eq!(r, fuzz_ratio(&b, &a));
            prop_assert!((0.0..=1.0).contains(&r));
            prop_assert_eq!(r == 1.0, a == b);
        }

        #[test]
        fn ratio_dominates_unit_levenshtein_bound(a in "[abc]{0,10}", b in "[abc]{0,10}") {
            let ac: Vec<char> = a.chars().collect();
            let bc: Vec<char> = b.chars().collect();
            let total = ac.len() + bc.len();
            prop_assume!(total > 0);
            let bound = 1.0 - (2 * unit_levenshtein(&ac, &bc)) as f64 / total as f64;
            prop_assert!(char_ratio(&ac, &bc) >= bound - 1e-15);
        }

        #[test]
        fn cosine_symmetric_scale_invariant(
            u in proptest::collection::vec(-10.0f64..10.0, 4),
            v in proptest::collection::vec(-10.0f64..10.0, 4),
            k in 0.01f64..100.0,
        ) {
            let u = Embedding::new(u).unwrap();
            let v = Embedding::new(v).unwrap();
            let c = cosine_similarity(&u, &v).unwrap();
            prop_assert_eq!(c, cosine_similarity(&v, &u).unwrap());
            prop_assert!((-1.0..=1.0).contains(&c));
            let scaled = cosine_similarity(&u.scaled(k).unwrap(), &v).unwrap();
            prop_assert!((scaled - c).abs() < 1e-12);
        }
    }
}
