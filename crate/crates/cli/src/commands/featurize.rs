use std::collections::BTreeMap;

use vidcurate_core::corpus::read_corpus;
use vidcurate_core::features::{read_transcripts, read_visual_features, write_views, Featurizer, MetadataViewOptions};

use super::{report, write};
use crate::config::{existing, produced, PipelineConfig};
use crate::error::CliError;

pub fn run(cfg: &PipelineConfig) -> Result<(), CliError> {
    if cfg.features.min_df == 0 {
        return Err(CliError::usage("--min-df must be at least 1"));
    }
    let corpus = read_corpus(&produced(cfg.corpus(), "ingest")?)?;
    let transcripts = match &cfg.paths.transcripts {
        Some(_) => read_transcripts(&existing(cfg.paths.transcripts.as_ref(), "transcripts", "--transcripts")?)?,
        None => BTreeMap::new(),
    };
    let visual = match &cfg.paths.visual {
        Some(_) => Some(read_visual_features(&existing(cfg.paths.visual.as_ref(), "visual features", "--visual")?)?),
        None => None,
    };
    let options = MetadataViewOptions { include_view_count: cfg.features.include_view_count };
    let visual_dim = visual.as_ref().map_or(0, |v| v.dimension);
    let featurizer = Featurizer::fit(&corpus, &transcripts, visual_dim, cfg.features.min_df, options)?;
    let views = featurizer.views(&corpus, &transcripts, visual.as_ref()).into_iter().collect::<Result<Vec<_>, _>>()?;
    let out = cfg.out();
    write_views(&out.join("views.jsonl"), &views)?;
    write(&out.join("featurizer.json"), &serde_json::to_string(&featurizer)?)?;
    report(
        "featurize",
        &[
            ("videos", views.len().to_string()),
            ("metadata_dim", featurizer.metadata_dimension().to_string()),
            ("content_dim", featurizer.content_dimension().to_string()),
        ],
    );
    Ok(())
}
