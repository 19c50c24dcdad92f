//! Search catalog clients.

use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde_json::{Map, Value};
use thiserror::Error;

use super::{Definition, VideoRecord};
use crate::io::read_jsonl;

/// Environment variable holding the key for [`LiveCatalog`].
pub const API_KEY_ENV: &str = "VIDCURATE_API_KEY";

const DEFAULT_BASE_URL: &str = "https://www.googleapis.com/youtube/v3";
const PAGE_LIMIT: usize = 50;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("missing API key: set {API_KEY_ENV}")]
    MissingApiKey,
    #[error("request failed: {0}")]
    Request(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("fixture: {0}")]
    Fixture(String),
}

/// A source of ranked search results.
pub trait CatalogClient: Sync {
    /// Returns up to `max_results` records for `term`, best first.
    fn search(&self, term: &str, max_results: usize) -> Result<Vec<VideoRecord>, CatalogError>;
}

/// File name holding the fixture results of a search term: the term
/// lowercased, every run of non-alphanumerics replaced by one `_`.
pub fn term_file_name(term: &str) -> String {
    let mut out = String::new();
    let mut pending_sep = false;
    for c in term.trim().chars() {
        if c.is_alphanumeric() {
            if pending_sep && !out.is_empty() {
                out.push('_');
            }
            pending_sep = false;
            out.extend(c.to_lowercase());
        } else {
            pending_sep = true;
        }
    }
    out.push_str(".jsonl");
    out
}

/// Reads results from `<dir>/<term_file_name(term)>`, one record per line in
/// rank order.
#[derive(Debug, Clone)]
pub struct FixtureCatalog {
    dir: PathBuf,
}

impl FixtureCatalog {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FixtureCatalog { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

impl CatalogClient for FixtureCatalog {
    fn search(&self, term: &str, max_results: usize) -> Result<Vec<VideoRecord>, CatalogError> {
        let path = self.dir.join(term_file_name(term));
        let mut records: Vec<VideoRecord> = read_jsonl(&path).map_err(|e| CatalogError::Fixture(e.to_string()))?;
        records.truncate(max_results);
        Ok(records)
    }
}

/// Data API client: one `search` listing per term followed by a `videos`
/// lookup for statistics and content details.
pub struct LiveCatalog {
    api_key: String,
    base_url: String,
    agent: ureq::Agent,
}

impl LiveCatalog {
    pub fn from_env() -> Result<Self, CatalogError> {
        let key = std::env::var(API_KEY_ENV).map_err(|_| CatalogError::MissingApiKey)?;
        if key.trim().is_empty() {
            return Err(CatalogError::MissingApiKey);
        }
        Ok(Self::new(key, DEFAULT_BASE_URL))
    }

    pub fn new(api_key: impl Into<String>, base_url: impl Into<String>) -> Self {
        let agent: ureq::Agent =
            ureq::Agent::config_builder().timeout_global(Some(Duration::from_secs(30))).build().into();
        LiveCatalog { api_key: api_key.into(), base_url: base_url.into().trim_end_matches('/').to_string(), agent }
    }

    fn get_json(&self, endpoint: &str, query: &[(&str, &str)]) -> Result<Value, CatalogError> {
        let url = format!("{}/{endpoint}", self.base_url);
        let mut req = self.agent.get(&url).query("key", &self.api_key);
        for (k, v) in query {
            req = req.query(*k, *v);
        }
        let mut resp = req.call().map_err(|e| CatalogError::Request(e.to_string()))?;
        let body = resp.body_mut().read_to_string().map_err(|e| CatalogError::Request(e.to_string()))?;
        serde_json::from_str(&body).map_err(|e| CatalogError::Malformed(e.to_string()))
    }
}

impl CatalogClient for LiveCatalog {
    fn search(&self, term: &str, max_results: usize) -> Result<Vec<VideoRecord>, CatalogError> {
        let mut ids = Vec::new();
        let mut page_token: Option<String> = None;
        while ids.len() < max_results {
            let want = (max_results - ids.len()).min(PAGE_LIMIT).to_string();
            let mut query = vec![("part", "snippet"), ("type", "video"), ("q", term), ("maxResults", want.as_str())];
            if let Some(tok) = page_token.as_deref() {
                query.push(("pageToken", tok));
            }
            let page = self.get_json("search", &query)?;
            let (page_ids, next) = parse_search_response(&page)?;
            if page_ids.is_empty() {
                break;
            }
            ids.extend(page_ids);
            match next {
                Some(tok) => page_token = Some(tok),
                None => break,
            }
        }
        ids.truncate(max_results);
        if ids.is_empty() {
            return Ok(Vec::new());
        }
        let mut records = Vec::with_capacity(ids.len());
        for chunk in ids.chunks(PAGE_LIMIT) {
            let joined = chunk.join(",");
            let details =
                self.get_json("videos", &[("part", "snippet,contentDetails,statistics"), ("id", joined.as_str())])?;
            records.extend(parse_videos_response(&details)?);
        }
        // The details endpoint does not promise search order.
        let position = |id: &str| ids.iter().position(|x| x == id).unwrap_or(usize::MAX);
        records.sort_by_key(|r| position(&r.video_id));
        Ok(records)
    }
}

/// Video ids and the next page token of a `search` listing.
pub fn parse_search_response(v: &Value) -> Result<(Vec<String>, Option<String>), CatalogError> {
    let items = v
        .get("items")
        .and_then(Value::as_array)
        .ok_or_else(|| CatalogError::Malformed("search response without items".into()))?;
    let ids =
        items.iter().filter_map(|it| it.pointer("/id/videoId").and_then(Value::as_str)).map(str::to_string).collect();
    let next = v.get("nextPageToken").and_then(Value::as_str).map(str::to_string);
    Ok((ids, next))
}

fn str_at<'a>(v: &'a Value, ptr: &str) -> Option<&'a str> {
    v.pointer(ptr).and_then(Value::as_str)
}

fn count_at(v: &Value, ptr: &str) -> Result<u64, CatalogError> {
    match v.pointer(ptr) {
        None | Some(Value::Null) => Ok(0),
        Some(Value::String(s)) => s.parse().map_err(|_| CatalogError::Malformed(format!("bad count at {ptr}: {s:?}"))),
        Some(Value::Number(n)) => n.as_u64().ok_or_else(|| CatalogError::Malformed(format!("bad count at {ptr}"))),
        Some(_) => Err(CatalogError::Malformed(format!("bad count at {ptr}"))),
    }
}

/// Records from a `videos` lookup.
pub fn parse_videos_response(v: &Value) -> Result<Vec<VideoRecord>, CatalogError> {
    let items = v
        .get("items")
        .and_then(Value::as_array)
        .ok_or_else(|| CatalogError::Malformed("videos response without items".into()))?;
    items.iter().map(parse_video_item).collect()
}

fn parse_video_item(it: &Value) -> Result<VideoRecord, CatalogError> {
    let video_id =
        str_at(it, "/id").ok_or_else(|| CatalogError::Malformed("video item without id".into()))?.to_string();
    let published = str_at(it, "/snippet/publishedAt")
        .ok_or_else(|| CatalogError::Malformed(format!("{video_id}: missing publishedAt")))?;
    let publish_time = DateTime::parse_from_rfc3339(published)
        .map_err(|e| CatalogError::Malformed(format!("{video_id}: {e}")))?
        .with_timezone(&Utc);
    let duration_seconds = match str_at(it, "/contentDetails/duration") {
        Some(d) => parse_iso8601_duration(d)
            .ok_or_else(|| CatalogError::Malformed(format!("{video_id}: bad duration {d:?}")))?,
        None => 0,
    };
    let definition = match str_at(it, "/contentDetails/definition") {
        Some("hd") => Definition::Hd,
        _ => Definition::Sd,
    };
    let captions_available = str_at(it, "/contentDetails/caption") == Some("true");
    let tags = it
        .pointer("/snippet/tags")
        .and_then(Value::as_array)
        .map(|a| a.iter().filter_map(Value::as_str).map(str::to_string).collect())
        .unwrap_or_default();
    let language = str_at(it, "/snippet/defaultAudioLanguage")
        .or_else(|| str_at(it, "/snippet/defaultLanguage"))
        .map(str::to_string);
    Ok(VideoRecord {
        channel_id: str_at(it, "/snippet/channelId").unwrap_or_default().to_string(),
        publish_time,
        title: str_at(it, "/snippet/title").unwrap_or_default().to_string(),
        description: str_at(it, "/snippet/description").unwrap_or_default().to_string(),
        tags,
        duration_seconds,
        definition,
        captions_available,
        rating: None,
        view_count: count_at(it, "/statistics/viewCount")?,
        like_count: count_at(it, "/statistics/likeCount")?,
        dislike_count: count_at(it, "/statistics/dislikeCount")?,
        comment_count: count_at(it, "/statistics/commentCount")?,
        language,
        search_rank: None,
        subscriber_count: None,
        extra: Map::new(),
        video_id,
    })
}

/// Seconds in an ISO-8601 duration such as `PT1H2M3S` or `P1DT5M`.
pub fn parse_iso8601_duration(s: &str) -> Option<u64> {
    let rest = s.strip_prefix('P')?;
    let mut total = 0u64;
    let mut num = String::new();
    let mut in_time = false;
    for c in rest.chars() {
        match c {
            'T' => {
                if !num.is_empty() {
                    return None;
                }
                in_time = true;
            }
            '0'..='9' => num.push(c),
            unit => {
                let n: u64 = num.parse().ok()?;
                num.clear();
                let scale = match (unit, in_time) {
                    ('W', false) => 7 * 86_400,
                    ('D', false) => 86_400,
                    ('H', true) => 3_600,
                    ('M', true) => 60,
                    ('S', true) => 1,
                    _ => return None,
                };
                total = total.checked_add(n.checked_mul(scale)?)?;
            }
        }
    }
    if num.is_empty() {
        Some(total)
    } else {
        None
    }
}
