use vidcurate_core::corpus::{
    dedupe, filter_language, ingest_search, write_corpus, CatalogClient, FixtureCatalog, LiveCatalog,
};
use vidcurate_core::io::read_to_string;

use super::{csv_string, report, write};
use crate::config::{existing, PipelineConfig};
use crate::error::CliError;

pub fn run(cfg: &PipelineConfig, live: bool) -> Result<(), CliError> {
    let terms_path = existing(cfg.paths.terms.as_ref(), "terms file", "--terms")?;
    let terms: Vec<String> = read_to_string(&terms_path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect();
    let client: Box<dyn CatalogClient> = if live {
        Box::new(LiveCatalog::from_env()?)
    } else {
        let dir = existing(cfg.paths.catalog.as_ref(), "catalog directory", "--catalog or --live")?;
        Box::new(FixtureCatalog::new(dir))
    };
    let ingest = ingest_search(&terms, cfg.ingest.per_term, client.as_ref())?;
    let raw = ingest.records.len();
    let unique = dedupe(ingest.records);
    let deduped = unique.len();
    let kept = filter_language(unique, &cfg.ingest.language, cfg.ingest.ascii_threshold);
    let out = cfg.out();
    write_corpus(&cfg.corpus_out(), &kept)?;
    let mut rows = vec![
        vec!["raw".into(), raw.to_string(), String::new()],
        vec!["deduplicated".into(), deduped.to_string(), String::new()],
        vec!["language".into(), kept.len().to_string(), cfg.ingest.language.clone()],
    ];
    for (term, message) in &ingest.failures {
        rows.push(vec!["failed_term".into(), term.clone(), message.clone()]);
    }
    write(&out.join("ingest_report.csv"), &csv_string(&["stage", "value", "detail"], &rows)?)?;
    report(
        "ingest",
        &[
            ("raw", raw.to_string()),
            ("deduplicated", deduped.to_string()),
            ("kept", kept.len().to_string()),
            ("failed_terms", ingest.failures.len().to_string()),
        ],
    );
    Ok(())
}
