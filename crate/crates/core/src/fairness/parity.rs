use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::frame::{FrameRow, RegressionFrame};
use super::FairnessError;
use crate::corpus::{AgeBracket, Gender};

const SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    #[default]
    Gender,
    AgeBracket,
    Fv,
}

impl Attribute {
    pub fn as_str(self) -> &'static str {
        match self {
            Attribute::Gender => "gender",
            Attribute::AgeBracket => "age_bracket",
            Attribute::Fv => "fv",
        }
    }

    pub fn parse(s: &str) -> Option<Attribute> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gender" => Some(Attribute::Gender),
            "age" | "age_bracket" => Some(Attribute::AgeBracket),
            "fv" | "face_visible" => Some(Attribute::Fv),
            _ => None,
        }
    }

    /// Group of a row, `None` when unknown.
    pub fn group(self, row: &FrameRow) -> Option<String> {
        match self {
            Attribute::Gender => match row.gender {
                Gender::Female => Some("female".into()),
                Gender::Male => Some("male".into()),
                Gender::Unknown => None,
            },
            Attribute::AgeBracket => (row.age != AgeBracket::Unknown).then(|| row.age.as_str().to_string()),
            Attribute::Fv => Some(if row.fv { "fv1" } else { "fv0" }.to_string()),
        }
    }
}

/// Share of each known group in the frame.
pub fn population_shares(frame: &RegressionFrame, attribute: Attribute) -> BTreeMap<String, f64> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for g in frame.rows.iter().filter_map(|r| attribute.group(r)) {
        *counts.entry(g).or_default() += 1;
    }
    let total: usize = counts.values().sum();
    counts.into_iter().map(|(g, c)| (g, c as f64 / total as f64)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupParity {
    pub group: String,
    pub population_share: f64,
    pub recommended_share: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityReport {
    pub attribute: Attribute,
    pub recommended: usize,
    /// Recommended items whose group is unknown; they enter no share.
    pub unknown: usize,
    pub groups: Vec<GroupParity>,
}

pub fn parity_report(
    recommended: &[String],
    population: &RegressionFrame,
    attribute: Attribute,
) -> Result<ParityReport, FairnessError> {
    if recommended.is_empty() {
        return Err(FairnessError::EmptyRecommendation);
    }
    let rows: BTreeMap<&str, &FrameRow> = population.rows.iter().map(|r| (r.video_id.as_str(), r)).collect();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut unknown = 0;
    let mut seen = BTreeSet::new();
    for id in recommended {
        if !seen.insert(id.as_str()) {
            continue;
        }
        let row = rows.get(id.as_str()).ok_or_else(|| FairnessError::DanglingId(id.clone()))?;
        match attribute.group(row) {
            Some(g) => *counts.entry(g).or_default() += 1,
            None => unknown += 1,
        }
    }
    let known: usize = counts.values().sum();
    if known == 0 {
        return Err(FairnessError::NoKnownGroup(attribute.as_str()));
    }
    let groups = population_shares(population, attribute)
        .into_iter()
        .map(|(group, population_share)| {
            let recommended_share = counts.get(&group).copied().unwrap_or(0) as f64 / known as f64;
            GroupParity { ratio: recommended_share / population_share, group, population_share, recommended_share }
        })
        .collect();
    Ok(ParityReport { attribute, recommended: seen.len(), unknown, groups })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub video_id: String,
    pub und_score: f64,
    pub med_score: f64,
    pub view_count: u64,
    /// `None` places the candidate outside every group.
    pub group: Option<String>,
}

/// UND score, then MED score, then view count, all descending; then id.
pub fn base_order(a: &Candidate, b: &Candidate) -> Ordering {
    b.und_score
        .total_cmp(&a.und_score)
        .then(b.med_score.total_cmp(&a.med_score))
        .then(b.view_count.cmp(&a.view_count))
        .then(a.video_id.cmp(&b.video_id))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairnessConfig {
    pub attribute: Attribute,
    /// Allowed ratio gap; `f64::INFINITY` disables re-ranking.
    pub delta: f64,
}

impl Default for FairnessConfig {
    fn default() -> Self {
        FairnessConfig { attribute: Attribute::Gender, delta: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrefixStatus {
    /// Every ratio lies in `[1 - delta, 1 + delta]`.
    Within,
    /// No integer group counts of this size meet the bounds.
    Infeasible,
    /// Attainable counts exist, but the candidate pool holds too few items
    /// of some group to reach them.
    Exhausted,
    /// Bounds were attainable from the pool but the output misses them.
    Violated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefixCheck {
    pub length: usize,
    /// Items in the prefix with a known group.
    pub known: usize,
    pub counts: BTreeMap<String, usize>,
    pub ratios: BTreeMap<String, f64>,
    pub status: PrefixStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub ranked: Vec<String>,
    pub candidates: usize,
    pub prefixes: Vec<PrefixCheck>,
    pub notes: Vec<String>,
}

impl Recommendation {
    pub fn violations(&self) -> usize {
        self.prefixes.iter().filter(|p| p.status == PrefixStatus::Violated).count()
    }
}

/// Integer count bounds per group for `m` known items.
fn bounds(shares: &BTreeMap<String, f64>, m: usize, delta: f64) -> BTreeMap<&str, (usize, usize)> {
    shares
        .iter()
        .map(|(g, p)| {
            let lo = (m as f64 * p * (1.0 - delta) - SLACK).ceil().max(0.0);
            let hi = (m as f64 * p * (1.0 + delta) + SLACK).floor().min(m as f64);
            (g.as_str(), (lo as usize, hi.max(0.0) as usize))
        })
        .collect()
}

fn feasible(b: &BTreeMap<&str, (usize, usize)>, m: usize) -> bool {
    b.values().all(|(lo, hi)| lo <= hi)
        && b.values().map(|x| x.0).sum::<usize>() <= m
        && b.values().map(|x| x.1).sum::<usize>() >= m
}

/// Like [`feasible`], with each group's count also capped by how many
/// candidates of that group exist.
fn attainable(b: &BTreeMap<&str, (usize, usize)>, m: usize, available: &BTreeMap<String, usize>) -> bool {
    let capped: Vec<(usize, usize)> =
        b.iter().map(|(g, (lo, hi))| (*lo, (*hi).min(available.get(*g).copied().unwrap_or(0)))).collect();
    capped.iter().all(|(lo, hi)| lo <= hi)
        && capped.iter().map(|x| x.0).sum::<usize>() <= m
        && capped.iter().map(|x| x.1).sum::<usize>() >= m
}

fn within(b: &BTreeMap<&str, (usize, usize)>, counts: &BTreeMap<String, usize>) -> bool {
    b.iter().all(|(g, (lo, hi))| {
        let c = counts.get(*g).copied().unwrap_or(0);
        *lo <= c && c <= *hi
    }) && counts.keys().all(|g| b.contains_key(g.as_str()))
}

/// Checks every prefix of `ranked` against the bounds. `pool` is the full
/// candidate set `ranked` was drawn from.
pub fn check_prefixes(
    ranked: &[&Candidate],
    pool: &[Candidate],
    shares: &BTreeMap<String, f64>,
    delta: f64,
) -> Vec<PrefixCheck> {
    let mut available: BTreeMap<String, usize> = BTreeMap::new();
    for g in pool.iter().filter_map(|c| c.group.as_ref()) {
        *available.entry(g.clone()).or_default() += 1;
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut known = 0;
    let mut out = Vec::with_capacity(ranked.len());
    for (i, c) in ranked.iter().enumerate() {
        if let Some(g) = &c.group {
            *counts.entry(g.clone()).or_default() += 1;
            known += 1;
        }
        let ratios: BTreeMap<String, f64> = if known == 0 {
            BTreeMap::new()
        } else {
            shares
                .iter()
                .map(|(g, p)| (g.clone(), counts.get(g).copied().unwrap_or(0) as f64 / known as f64 / p))
                .collect()
        };
        let status = if known == 0 {
            PrefixStatus::Within
        } else {
            let b = bounds(shares, known, delta);
            if within(&b, &counts) {
                PrefixStatus::Within
            } else if !feasible(&b, known) {
                PrefixStatus::Infeasible
            } else if !attainable(&b, known, &available) {
                PrefixStatus::Exhausted
            } else {
                PrefixStatus::Violated
            }
        };
        out.push(PrefixCheck { length: i + 1, known, counts: counts.clone(), ratios, status });
    }
    out
}

/// Greedy fair re-ranking of the top `k`.
///
/// Each step takes the best-ranked remaining candidate whose addition keeps
/// the prefix within bounds; candidates without a group always qualify.
/// When none qualifies, the step takes the best-ranked candidate of the
/// group furthest below its population share.
pub fn rerank(
    candidates: &[Candidate],
    shares: &BTreeMap<String, f64>,
    config: FairnessConfig,
    k: usize,
) -> Result<Recommendation, FairnessError> {
    if k == 0 {
        return Err(FairnessError::InvalidParameter("k must be at least 1".into()));
    }
    if config.delta.is_nan() || config.delta < 0.0 {
        return Err(FairnessError::InvalidParameter(format!("delta must be >= 0, got {}", config.delta)));
    }
    let mut ids = BTreeSet::new();
    if let Some(c) = candidates.iter().find(|c| !ids.insert(c.video_id.as_str())) {
        return Err(FairnessError::DuplicateCandidate(c.video_id.clone()));
    }
    let mut notes = Vec::new();
    if candidates.is_empty() {
        notes.push("no candidates: no video is labeled high on both axes".to_string());
        return Ok(Recommendation { ranked: Vec::new(), candidates: 0, prefixes: Vec::new(), notes });
    }
    let mut remaining: Vec<&Candidate> = candidates.iter().collect();
    remaining.sort_by(|a, b| base_order(a, b));
    let mut chosen: Vec<&Candidate> = Vec::new();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut known = 0usize;
    while chosen.len() < k && !remaining.is_empty() {
        let b = bounds(shares, known + 1, config.delta);
        let admissible = |c: &Candidate| match &c.group {
            None => true,
            Some(g) => {
                let mut next = counts.clone();
                *next.entry(g.clone()).or_default() += 1;
                within(&b, &next)
            }
        };
        let pick = remaining.iter().position(|c| admissible(c)).unwrap_or_else(|| {
            let deficit = |c: &Candidate| {
                let g = c.group.as_deref().expect("groupless candidates are admissible");
                let share = shares.get(g).copied().unwrap_or(0.0);
                share * (known + 1) as f64 - counts.get(g).copied().unwrap_or(0) as f64
            };
            let mut best = 0;
            for (i, c) in remaining.iter().enumerate() {
                if deficit(c) > deficit(remaining[best]) + SLACK {
                    best = i;
                }
            }
            best
        });
        let c = remaining.remove(pick);
        if let Some(g) = &c.group {
            *counts.entry(g.clone()).or_default() += 1;
            known += 1;
        }
        chosen.push(c);
    }
    let prefixes = check_prefixes(&chosen, candidates, shares, config.delta);
    let infeasible: Vec<usize> =
        prefixes.iter().filter(|p| p.status == PrefixStatus::Infeasible).map(|p| p.length).collect();
    if !infeasible.is_empty() {
        notes.push(format!(
            "bounds unattainable at prefix lengths {}",
            infeasible.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(",")
        ));
    }
    let exhausted: Vec<usize> =
        prefixes.iter().filter(|p| p.status == PrefixStatus::Exhausted).map(|p| p.length).collect();
    if !exhausted.is_empty() {
        notes.push(format!(
            "too few candidates of some group to meet bounds at prefix lengths {}",
            exhausted.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(",")
        ));
    }
    let groups: BTreeSet<&str> = candidates.iter().filter_map(|c| c.group.as_deref()).collect();
    for g in shares.keys().filter(|g| !groups.contains(g.as_str())) {
        notes.push(format!("no candidate in group {g}"));
    }
    let violated: Vec<usize> =
        prefixes.iter().filter(|p| p.status == PrefixStatus::Violated).map(|p| p.length).collect();
    if !violated.is_empty() {
        notes.push(format!(
            "bounds violated at prefix lengths {}",
            violated.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(",")
        ));
    }
    Ok(Recommendation {
        ranked: chosen.iter().map(|c| c.video_id.clone()).collect(),
        candidates: candidates.len(),
        prefixes,
        notes,
    })
}

/// Candidates from the frame: rows labeled high on both axes, with scores
/// looked up in `scores` (`video_id -> (med_score, und_score)`; missing
/// scores count as 0).
pub fn frame_candidates(
    frame: &RegressionFrame,
    scores: &BTreeMap<String, (f64, f64)>,
    attribute: Attribute,
) -> Vec<Candidate> {
    frame
        .rows
        .iter()
        .filter(|r| r.med && r.und)
        .map(|r| {
            let (med_score, und_score) = scores.get(&r.video_id).copied().unwrap_or((0.0, 0.0));
            Candidate {
                video_id: r.video_id.clone(),
                und_score,
                med_score,
                view_count: r.view_count,
                group: attribute.group(r),
            }
        })
        .collect()
}

/// Re-ranks the frame's doubly-high videos against the frame's own group
/// shares.
pub fn recommend(
    frame: &RegressionFrame,
    scores: &BTreeMap<String, (f64, f64)>,
    config: FairnessConfig,
    k: usize,
) -> Result<Recommendation, FairnessError> {
    let shares = population_shares(frame, config.attribute);
    rerank(&frame_candidates(frame, scores, config.attribute), &shares, config, k)
}

impl Recommendation {
    /// One row per output position with the prefix check at that length.
    pub fn csv(&self, shares: &BTreeMap<String, f64>) -> String {
        let groups: Vec<&String> = shares.keys().collect();
        let mut header = vec!["rank".to_string(), "video_id".to_string(), "status".to_string()];
        header.extend(groups.iter().map(|g| format!("ratio_{g}")));
        let rows = self
            .ranked
            .iter()
            .zip(&self.prefixes)
            .map(|(id, p)| {
                let mut row = vec![p.length.to_string(), id.clone(), status_str(p.status).to_string()];
                row.extend(
                    groups.iter().map(|g| p.ratios.get(*g).map_or_else(|| "NA".into(), |r| super::report::num(*r))),
                );
                row
            })
            .collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        super::report::csv(&header, rows)
    }

    pub fn text(&self) -> String {
        let mut s = format!("Recommended {} of {} candidates\n", self.ranked.len(), self.candidates);
        for (id, p) in self.ranked.iter().zip(&self.prefixes) {
            s.push_str(&format!("  {:>3}  {:<16} {}\n", p.length, id, status_str(p.status)));
        }
        for n in &self.notes {
            s.push_str(&format!("note: {n}\n"));
        }
        s
    }
}

fn status_str(s: PrefixStatus) -> &'static str {
    match s {
        PrefixStatus::Within => "within",
        PrefixStatus::Infeasible => "infeasible",
        PrefixStatus::Exhausted => "exhausted",
        PrefixStatus::Violated => "violated",
    }
}
