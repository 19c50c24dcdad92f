use std::collections::HashMap;
use std::fmt::Write as _;

use serde::Serialize;

use super::{merge_labels, CorpusError, LabelSet, Level, VideoRecord};

/// Aggregates over the videos of one stratum.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Stratum {
    pub videos: usize,
    pub mean_views: Option<f64>,
    /// Mean over videos with a known subscriber count; absent values are
    /// skipped, never imputed.
    pub mean_subscribers: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StratumPair {
    pub low: Stratum,
    pub high: Stratum,
}

/// Low/high strata of both axes.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SummaryTable {
    pub med: StratumPair,
    pub und: StratumPair,
}

#[derive(Default)]
struct Acc {
    n: usize,
    views: f64,
    subs: f64,
    n_subs: usize,
}

impl Acc {
    fn add(&mut self, r: &VideoRecord) {
        self.n += 1;
        self.views += r.view_count as f64;
        if let Some(s) = r.subscriber_count {
            self.subs += s as f64;
            self.n_subs += 1;
        }
    }

    fn finish(&self) -> Stratum {
        Stratum {
            videos: self.n,
            mean_views: (self.n > 0).then(|| self.views / self.n as f64),
            mean_subscribers: (self.n_subs > 0).then(|| self.subs / self.n_subs as f64),
        }
    }
}

pub fn summarize(records: &[VideoRecord], labels: &[LabelSet]) -> Result<SummaryTable, CorpusError> {
    let by_id: HashMap<&str, &VideoRecord> = records.iter().map(|r| (r.video_id.as_str(), r)).collect();
    let merged = merge_labels(labels)?;
    let mut acc: [Acc; 4] = Default::default();
    for (id, (med, und)) in &merged {
        let record = by_id.get(id.as_str()).ok_or_else(|| CorpusError::DanglingLabel(id.clone()))?;
        if let Some(m) = med {
            acc[usize::from(m.is_high())].add(record);
        }
        if let Some(u) = und {
            acc[2 + usize::from(u.is_high())].add(record);
        }
    }
    Ok(SummaryTable {
        med: StratumPair { low: acc[0].finish(), high: acc[1].finish() },
        und: StratumPair { low: acc[2].finish(), high: acc[3].finish() },
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl SummaryTable {
    fn columns(&self) -> [(&'static str, &Stratum); 4] {
        [
            ("low_med", &self.med.low),
            ("high_med", &self.med.high),
            ("low_und", &self.und.low),
            ("high_und", &self.und.high),
        ]
    }

    pub fn stratum(&self, axis_med: bool, level: Level) -> &Stratum {
        let pair = if axis_med { &self.med } else { &self.und };
        match level {
            Level::Low => &pair.low,
            Level::High => &pair.high,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("stratum,videos,mean_views,mean_subscribers\n");
        for (name, s) in self.columns() {
            let _ = writeln!(out, "{name},{},{},{}", s.videos, opt(s.mean_views), opt(s.mean_subscribers));
        }
        out
    }

    /// Text block: strata as columns, statistics as rows.
    pub fn to_text(&self) -> String {
        let cols = self.columns();
        let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.1}"));
        let mut out = String::new();
        let _ = writeln!(out, "Summary Statistics of Videos");
        let _ = writeln!(out, "{:<16}{:>12}{:>12}{:>12}{:>12}", "", "Low MED", "High MED", "Low UND", "High UND");
        let _ = write!(out, "{:<16}", "#Videos");
        for (_, s) in cols {
            let _ = write!(out, "{:>12}", s.videos);
        }
        let _ = write!(out, "\n{:<16}", "Views (mean)");
        for (_, s) in cols {
            let _ = write!(out, "{:>12}", cell(s.mean_views));
        }
        let _ = write!(out, "\n{:<16}", "Subscribers");
        for (_, s) in cols {
            let _ = write!(out, "{:>12}", cell(s.mean_subscribers));
        }
        out.push('\n');
        out
    }
}
