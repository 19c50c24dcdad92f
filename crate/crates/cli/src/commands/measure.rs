use std::collections::BTreeMap;

use serde::Serialize;
use vidcurate_core::corpus::{read_corpus, Dimension, LabelSet, LabelSource};
use vidcurate_core::features::read_transcripts;
use vidcurate_core::io::write_jsonl;
use vidcurate_core::text::tokenize;
use vidcurate_core::textmeasure::{
    classify_med, classify_und, extract_terms, med_score, pemat_score, read_rubrics, Lexicon, TermHit, Threshold,
};

use super::{csv_string, num, report, write};
use crate::config::{existing, produced, PipelineConfig};
use crate::error::CliError;

#[derive(Serialize)]
struct VideoHits<'a> {
    video_id: &'a str,
    hits: &'a [TermHit],
}

fn threshold(value: f64, flag: &str) -> Result<Threshold, CliError> {
    Threshold::new(value).map_err(|_| CliError::usage(format!("{flag} must lie in (0, 1), got {value}")))
}

/// Term coverage is measured on the transcript when there is one and on the
/// title, description and tags otherwise. Videos with a PEMAT rubric are the
/// expert-rated set: they get human seed labels on both axes.
pub fn run(cfg: &PipelineConfig) -> Result<(), CliError> {
    let med_t = threshold(cfg.measure.threshold_med, "--threshold-med")?;
    let und_t = threshold(cfg.measure.threshold_und, "--threshold-und")?;
    let corpus = read_corpus(&produced(cfg.corpus(), "ingest")?)?;
    let lexicon = Lexicon::load(&existing(cfg.paths.lexicon.as_ref(), "lexicon", "--lexicon")?)?;
    if lexicon.is_empty() {
        return Err(CliError::data("lexicon has no terms"));
    }
    let transcripts = match &cfg.paths.transcripts {
        Some(_) => read_transcripts(&existing(cfg.paths.transcripts.as_ref(), "transcripts", "--transcripts")?)?,
        None => BTreeMap::new(),
    };
    let rubrics = match &cfg.paths.rubrics {
        Some(_) => read_rubrics(&existing(cfg.paths.rubrics.as_ref(), "rubrics", "--rubrics")?)?,
        None => BTreeMap::new(),
    };
    let known: BTreeMap<&str, ()> = corpus.iter().map(|r| (r.video_id.as_str(), ())).collect();
    if let Some(id) = rubrics.keys().find(|id| !known.contains_key(id.as_str())) {
        return Err(CliError::data(format!("rubric for {id:?}, which is not in the corpus")));
    }

    let mut rows = Vec::with_capacity(corpus.len());
    let mut hits_out = Vec::with_capacity(corpus.len());
    let mut seeds = Vec::new();
    for record in &corpus {
        let (source, text) = match transcripts.get(&record.video_id) {
            Some(t) => ("transcript", t.clone()),
            None => ("metadata", record.metadata_text()),
        };
        let hits = extract_terms(&text, &lexicon);
        let score = med_score(&hits, &text);
        let med = classify_med(score, med_t);
        let (pemat, und) = match rubrics.get(&record.video_id) {
            Some(r) => {
                let s = pemat_score(r)?;
                (Some(s), Some(classify_und(s, und_t)))
            }
            None => (None, None),
        };
        if let Some(und) = und {
            seeds.push(LabelSet::single(&record.video_id, Dimension::Med, med, LabelSource::Human, None));
            seeds.push(LabelSet::single(&record.video_id, Dimension::Und, und, LabelSource::Human, None));
        }
        rows.push(vec![
            record.video_id.clone(),
            source.to_string(),
            tokenize(&text).len().to_string(),
            hits.len().to_string(),
            num(score),
            med.as_str().to_string(),
            pemat.map_or_else(|| "NA".into(), num),
            und.map_or_else(|| "NA".into(), |l| l.as_str().to_string()),
        ]);
        hits_out.push((record.video_id.clone(), hits));
    }
    let out = cfg.out();
    let header =
        ["video_id", "text_source", "tokens", "term_hits", "med_score", "med_level", "pemat_score", "und_level"];
    write(&out.join("measures.csv"), &csv_string(&header, &rows)?)?;
    let hits: Vec<VideoHits> = hits_out.iter().map(|(id, h)| VideoHits { video_id: id, hits: h }).collect();
    write_jsonl(&out.join("term_hits.jsonl"), &hits)?;
    write_jsonl(&out.join("seed_labels.jsonl"), &seeds)?;
    report(
        "measure",
        &[
            ("videos", corpus.len().to_string()),
            ("rated", (seeds.len() / 2).to_string()),
            ("with_transcript", rows.iter().filter(|r| r[1] == "transcript").count().to_string()),
        ],
    );
    Ok(())
}
