use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::FairnessError;
use crate::corpus::{merge_labels, ActorAnnotation, AgeBracket, Gender, LabelSet, VideoRecord};

/// One analyzed video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRow {
    pub video_id: String,
    pub fv: bool,
    pub gender: Gender,
    pub age: AgeBracket,
    pub actor_count: u32,
    pub med: bool,
    pub und: bool,
    pub view_count: u64,
}

impl FrameRow {
    /// `ln(view_count)`.
    pub fn y(&self) -> f64 {
        (self.view_count as f64).ln()
    }
}

/// How `Gender` enters the numeric analyses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenderCoding {
    #[default]
    MaleIsOne,
    FemaleIsOne,
}

impl GenderCoding {
    pub fn value(self, g: Gender) -> Option<f64> {
        match (self, g) {
            (_, Gender::Unknown) => None,
            (GenderCoding::MaleIsOne, Gender::Male) | (GenderCoding::FemaleIsOne, Gender::Female) => Some(1.0),
            _ => Some(0.0),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegressionFrame {
    pub rows: Vec<FrameRow>,
}

impl RegressionFrame {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn ids(&self) -> BTreeSet<&str> {
        self.rows.iter().map(|r| r.video_id.as_str()).collect()
    }

    pub fn get(&self, video_id: &str) -> Option<&FrameRow> {
        self.rows.iter().find(|r| r.video_id == video_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exclusion {
    Unlabeled,
    Unannotated,
    MultiActor,
    OffTopic,
    Unreadable,
    NoNarration,
    ZeroViews,
}

impl Exclusion {
    pub const ORDER: [Exclusion; 7] = [
        Exclusion::Unlabeled,
        Exclusion::Unannotated,
        Exclusion::MultiActor,
        Exclusion::OffTopic,
        Exclusion::Unreadable,
        Exclusion::NoNarration,
        Exclusion::ZeroViews,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Exclusion::Unlabeled => "unlabeled",
            Exclusion::Unannotated => "unannotated",
            Exclusion::MultiActor => "multi_actor",
            Exclusion::OffTopic => "off_topic",
            Exclusion::Unreadable => "unreadable",
            Exclusion::NoNarration => "no_narration",
            Exclusion::ZeroViews => "zero_views",
        }
    }
}

/// Counts removed at each step, in the order the steps are applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunnelReport {
    pub total: usize,
    pub excluded: Vec<(Exclusion, usize)>,
    pub analyzed: usize,
}

impl FunnelReport {
    pub fn count(&self, e: Exclusion) -> usize {
        self.excluded.iter().find(|x| x.0 == e).map_or(0, |x| x.1)
    }
}

/// Joins records, labels and annotations into the analysis frame.
///
/// Videos need both axis labels and an annotation. Exclusions are applied
/// in [`Exclusion::ORDER`]; each video is counted at the first step that
/// removes it.
pub fn build_frame(
    records: &[VideoRecord],
    labels: &[LabelSet],
    annotations: &[ActorAnnotation],
) -> Result<(RegressionFrame, FunnelReport), FairnessError> {
    let ids: BTreeSet<&str> = records.iter().map(|r| r.video_id.as_str()).collect();
    let merged = merge_labels(labels)?;
    if let Some(id) = merged.keys().find(|id| !ids.contains(id.as_str())) {
        return Err(FairnessError::DanglingId(id.clone()));
    }
    let mut ann: BTreeMap<&str, &ActorAnnotation> = BTreeMap::new();
    for a in annotations {
        if !ids.contains(a.video_id.as_str()) {
            return Err(FairnessError::DanglingId(a.video_id.clone()));
        }
        if ann.insert(a.video_id.as_str(), a).is_some() {
            return Err(FairnessError::DuplicateAnnotation(a.video_id.clone()));
        }
    }
    let mut counts: BTreeMap<Exclusion, usize> = Exclusion::ORDER.iter().map(|e| (*e, 0)).collect();
    let mut rows = Vec::new();
    for r in records {
        let labels = merged.get(&r.video_id).and_then(|(m, u)| Some((m.as_ref()?, u.as_ref()?)));
        let annotation = ann.get(r.video_id.as_str());
        let exclusion = match (labels, annotation) {
            (None, _) => Some(Exclusion::Unlabeled),
            (_, None) => Some(Exclusion::Unannotated),
            (_, Some(a)) if a.actor_count > 1 => Some(Exclusion::MultiActor),
            (_, Some(a)) if a.off_topic => Some(Exclusion::OffTopic),
            (_, Some(a)) if a.unreadable => Some(Exclusion::Unreadable),
            (_, Some(a)) if !a.narration => Some(Exclusion::NoNarration),
            _ if r.view_count == 0 => Some(Exclusion::ZeroViews),
            _ => None,
        };
        if let Some(e) = exclusion {
            *counts.get_mut(&e).expect("all steps counted") += 1;
            continue;
        }
        let ((med, und), a) = (labels.expect("checked"), annotation.expect("checked"));
        if a.gender == Gender::Unknown {
            return Err(FairnessError::UnknownGender(r.video_id.clone()));
        }
        rows.push(FrameRow {
            video_id: r.video_id.clone(),
            fv: a.face_visible,
            gender: a.gender,
            age: a.age_bracket,
            actor_count: a.actor_count,
            med: med.is_high(),
            und: und.is_high(),
            view_count: r.view_count,
        });
    }
    let report = FunnelReport { total: records.len(), excluded: counts.into_iter().collect(), analyzed: rows.len() };
    Ok((RegressionFrame { rows }, report))
}

/// Size of the training part: `ceil(fraction * n)`, guarded against
/// floating-point noise just above an integer.
pub fn train_size(n: usize, train_fraction: f64) -> usize {
    let exact = train_fraction * n as f64;
    let size = (exact - 1e-9 * exact.max(1.0)).ceil().max(0.0) as usize;
    size.min(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitDescriptor {
    pub train_fraction: f64,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
}

/// Seeded random partition; both parts keep the frame's row order.
pub fn split(
    frame: &RegressionFrame,
    train_fraction: f64,
    seed: u64,
) -> Result<(RegressionFrame, RegressionFrame, SplitDescriptor), FairnessError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(FairnessError::InvalidParameter(format!("train fraction must be in (0, 1), got {train_fraction}")));
    }
    let n = frame.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = train_size(n, train_fraction);
    let train_idx: BTreeSet<usize> = order[..n_train].iter().copied().collect();
    let (mut train, mut test) = (Vec::with_capacity(n_train), Vec::with_capacity(n - n_train));
    for (i, row) in frame.rows.iter().enumerate() {
        if train_idx.contains(&i) {
            train.push(row.clone());
        } else {
            test.push(row.clone());
        }
    }
    let desc = SplitDescriptor { train_fraction, seed, n_train, n_test: n - n_train };
    Ok((RegressionFrame { rows: train }, RegressionFrame { rows: test }, desc))
}

/// Counts by MED x UND x Gender x FV.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossTab {
    /// Keyed by `(med, und, gender, fv)`.
    pub cells: BTreeMap<(bool, bool, Gender, bool), usize>,
}

impl CrossTab {
    pub fn get(&self, med: bool, und: bool, gender: Gender, fv: bool) -> usize {
        self.cells.get(&(med, und, gender, fv)).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.cells.values().sum()
    }

    /// Sum over every cell whose key passes `f`.
    pub fn margin(&self, f: impl Fn(bool, bool, Gender, bool) -> bool) -> usize {
        self.cells.iter().filter(|(k, _)| f(k.0, k.1, k.2, k.3)).map(|(_, v)| v).sum()
    }
}

/// Every MED/UND/gender/FV combination, including empty ones.
pub fn crosstab(frame: &RegressionFrame) -> Result<CrossTab, FairnessError> {
    if frame.is_empty() {
        return Err(FairnessError::EmptyFrame);
    }
    let mut cells = BTreeMap::new();
    for med in [false, true] {
        for und in [false, true] {
            for g in [Gender::Female, Gender::Male] {
                for fv in [false, true] {
                    cells.insert((med, und, g, fv), 0);
                }
            }
        }
    }
    for r in &frame.rows {
        *cells.entry((r.med, r.und, r.gender, r.fv)).or_insert(0) += 1;
    }
    Ok(CrossTab { cells })
}

/// Age bracket by gender among one-actor videos.
pub fn age_gender_table(frame: &RegressionFrame) -> BTreeMap<(AgeBracket, Gender), usize> {
    let mut out = BTreeMap::new();
    for r in frame.rows.iter().filter(|r| r.actor_count == 1) {
        *out.entry((r.age, r.gender)).or_insert(0) += 1;
    }
    out
}
