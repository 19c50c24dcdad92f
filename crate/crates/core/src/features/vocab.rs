use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{FeatureError, FeatureVector};
use crate::text::normalized_tokens;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabEntry {
    pub index: usize,
    pub document_frequency: usize,
}

/// Term index with document frequencies. Indices follow lexicographic term
/// order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    terms: BTreeMap<String, VocabEntry>,
    n_docs: usize,
}

impl Vocab {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn get(&self, term: &str) -> Option<VocabEntry> {
        self.terms.get(term).copied()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&str, VocabEntry)> {
        self.terms.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Smoothed inverse document frequency, `ln((1 + n) / (1 + df)) + 1`.
    pub fn idf(&self, entry: VocabEntry) -> f64 {
        ((1.0 + self.n_docs as f64) / (1.0 + entry.document_frequency as f64)).ln() + 1.0
    }
}

/// Keeps terms present in at least `min_df` documents.
pub fn fit_vocab<S: AsRef<str>>(texts: &[S], min_df: usize) -> Result<Vocab, FeatureError> {
    if min_df == 0 {
        return Err(FeatureError::InvalidMinDf);
    }
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for text in texts {
        let unique: BTreeSet<String> = normalized_tokens(text.as_ref()).into_iter().collect();
        for term in unique {
            *df.entry(term).or_default() += 1;
        }
    }
    let terms = df
        .into_iter()
        .filter(|(_, d)| *d >= min_df)
        .enumerate()
        .map(|(index, (term, document_frequency))| (term, VocabEntry { index, document_frequency }))
        .collect();
    Ok(Vocab { terms, n_docs: texts.len() })
}

/// Raw term counts times smoothed idf, L2-normalized. Out-of-vocabulary
/// tokens are ignored; a text without vocabulary tokens maps to zero.
pub fn tfidf(text: &str, vocab: &Vocab) -> FeatureVector {
    let mut counts: BTreeMap<usize, (f64, VocabEntry)> = BTreeMap::new();
    for tok in normalized_tokens(text) {
        if let Some(entry) = vocab.get(&tok) {
            counts.entry(entry.index).or_insert((0.0, entry)).0 += 1.0;
        }
    }
    let entries: Vec<(usize, f64)> = counts.into_iter().map(|(i, (tf, e))| (i, tf * vocab.idf(e))).collect();
    let norm = entries.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt();
    let v = FeatureVector::new(vocab.len(), entries).expect("vocab indices are dense");
    if norm > 0.0 {
        v.scaled(1.0 / norm)
    } else {
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn term_list(v: &Vocab) -> Vec<&str> {
        v.terms().map(|t| t.0).collect()
    }

    #[test]
    fn min_df_filtering() {
        let v = fit_vocab(&["a b", "b c"], 2).unwrap();
        assert_eq!(term_list(&v), vec!["b"]);
        let v = fit_vocab(&["x y"], 1).unwrap();
        assert_eq!(term_list(&v), vec!["x", "y"]);
        assert!(fit_vocab(&["x"], 0).is_err());
        assert!(fit_vocab::<&str>(&[], 1).unwrap().is_empty());
    }

    #[test]
    fn three_doc_fixture() {
        // df: sugar 3, insulin 2, diet 2 (counted once per doc), pump 1, walk 1.
        let docs = ["insulin sugar diet diet", "sugar pump insulin", "walk sugar diet"];
        let v = fit_vocab(&docs, 2).unwrap();
        assert_eq!(term_list(&v), vec!["diet", "insulin", "sugar"]);
        assert_eq!(v.get("diet").unwrap(), VocabEntry { index: 0, document_frequency: 2 });
        assert_eq!(v.get("sugar").unwrap(), VocabEntry { index: 2, document_frequency: 3 });
        assert_eq!(v.n_docs(), 3);
    }

    #[test]
    fn zero_and_unit_vectors() {
        let v = fit_vocab(&["alpha beta"], 1).unwrap();
        assert_eq!(tfidf("gamma delta", &v).nnz(), 0);
        let single = tfidf("beta beta beta", &v);
        assert_eq!(single.entries(), &[(1, 1.0)]);
    }

    #[test]
    fn two_term_formula() {
        // n_docs = 4; "p" has df 2, "q" df 4.
        let v = fit_vocab(&["p q", "p q", "q", "q"], 1).unwrap();
        let out = tfidf("p q q", &v);
        let wp = 1.0 * ((5.0f64 / 3.0).ln() + 1.0);
        let wq = 2.0 * ((5.0f64 / 5.0).ln() + 1.0);
        let n = (wp * wp + wq * wq).sqrt();
        assert!((out.get(0) - wp / n).abs() < 1e-15);
        assert!((out.get(1) - wq / n).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn norm_is_zero_or_one(docs in prop::collection::vec("[a-e ]{0,20}", 1..6), text in "[a-g ]{0,30}") {
            let v = fit_vocab(&docs, 1).unwrap();
            let n = tfidf(&text, &v).norm();
            prop_assert!(n == 0.0 || (n - 1.0).abs() < 1e-12);
        }
    }
}
