use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::MeasureError;
use crate::text::normalize_phrase;

/// Semantic category of a medical term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemType {
    Disease,
    Treatment,
    Test,
    Procedure,
    MedicalDevice,
    MedicalProfessional,
}

impl SemType {
    pub fn as_str(self) -> &'static str {
        match self {
            SemType::Disease => "disease",
            SemType::Treatment => "treatment",
            SemType::Test => "test",
            SemType::Procedure => "procedure",
            SemType::MedicalDevice => "medical_device",
            SemType::MedicalProfessional => "medical_professional",
        }
    }
}

impl fmt::Display for SemType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SemType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace([' ', '-'], "_");
        Ok(match norm.as_str() {
            "disease" => SemType::Disease,
            "treatment" => SemType::Treatment,
            "test" => SemType::Test,
            "procedure" => SemType::Procedure,
            "medical_device" => SemType::MedicalDevice,
            "medical_professional" => SemType::MedicalProfessional,
            _ => return Err(format!("unknown semantic type {s:?}")),
        })
    }
}

/// Normalized term → semantic type. Terms are stored as their lowercased
/// tokens joined by single spaces, so they match text under the same
/// tokenization.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    entries: BTreeMap<String, SemType>,
    max_tokens: usize,
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a term; returns false (and leaves the lexicon unchanged) when the
    /// term normalizes to nothing.
    pub fn insert(&mut self, term: &str, semtype: SemType) -> bool {
        let canonical = normalize_phrase(term);
        if canonical.is_empty() {
            return false;
        }
        self.max_tokens = self.max_tokens.max(canonical.split(' ').count());
        self.entries.insert(canonical, semtype);
        true
    }

    pub fn get(&self, canonical: &str) -> Option<SemType> {
        self.entries.get(canonical).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Longest entry, in tokens.
    pub fn max_tokens(&self) -> usize {
        self.max_tokens
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, SemType)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Parses `term<TAB>semtype` lines; `#` starts a comment line.
    pub fn parse_tsv(contents: &str) -> Result<Self, MeasureError> {
        let mut lex = Lexicon::new();
        for (i, raw) in contents.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let err = |message: String| MeasureError::Lexicon { line: i + 1, message };
            let (term, semtype) = line.split_once('\t').ok_or_else(|| err("expected term<TAB>semtype".into()))?;
            let semtype: SemType = semtype.parse().map_err(err)?;
            let canonical = normalize_phrase(term);
            if let Some(prev) = lex.get(&canonical) {
                if prev != semtype {
                    return Err(err(format!("term {canonical:?} listed as both {prev} and {semtype}")));
                }
            }
            if !lex.insert(term, semtype) {
                return Err(err(format!("term {term:?} has no tokens")));
            }
        }
        Ok(lex)
    }

    pub fn load(path: &Path) -> Result<Self, MeasureError> {
        let contents = crate::io::read_to_string(path)?;
        Self::parse_tsv(&contents)
    }
}

impl<'a> FromIterator<(&'a str, SemType)> for Lexicon {
    fn from_iter<I: IntoIterator<Item = (&'a str, SemType)>>(iter: I) -> Self {
        let mut lex = Lexicon::new();
        for (t, s) in iter {
            lex.insert(t, s);
        }
        lex
    }
}
