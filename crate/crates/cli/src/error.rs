use std::fmt;

use thiserror::Error;

/// Exit status classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// Bad invocation: flags, config keys, missing settings. Exit 1.
    Usage,
    /// Unreadable or inconsistent inputs, failed fits. Exit 2.
    Data,
    /// A run paused on review items with no answer; state was saved. Exit 2.
    Resumable,
}

impl Kind {
    pub fn code(self) -> i32 {
        match self {
            Kind::Usage => 1,
            Kind::Data | Kind::Resumable => 2,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Kind::Usage => "usage",
            Kind::Data => "data",
            Kind::Resumable => "resumable",
        }
    }
}

#[derive(Debug, Error)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { kind: Kind::Usage, message: message.into() }
    }

    pub fn data(message: impl fmt::Display) -> Self {
        CliError { kind: Kind::Data, message: message.to_string() }
    }

    /// One logfmt line: `level=error code=2 kind=data command=measure msg="..."`.
    pub fn line(&self, command: &str) -> String {
        format!(
            "level=error code={} kind={} command={} msg={}",
            self.kind.code(),
            self.kind.as_str(),
            command,
            quote(&self.message)
        )
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

macro_rules! data_from {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::data(e)
            }
        })*
    };
}

data_from!(
    vidcurate_core::corpus::CorpusError,
    vidcurate_core::corpus::CatalogError,
    vidcurate_core::textmeasure::MeasureError,
    vidcurate_core::features::FeatureError,
    vidcurate_core::learners::LearnError,
    vidcurate_core::fairness::FairnessError,
    vidcurate_core::io::FormatError,
    vidcurate_service::StoreError,
    vidcurate_service::ServeError,
    csv::Error,
    serde_json::Error
);

impl From<vidcurate_core::cotrain::CoTrainError> for CliError {
    fn from(e: vidcurate_core::cotrain::CoTrainError) -> Self {
        use vidcurate_core::cotrain::CoTrainError;
        let kind = match &e {
            CoTrainError::ResolverFailed { checkpoint: Some(_), .. } => Kind::Resumable,
            CoTrainError::InvalidConfig(_) => Kind::Usage,
            _ => Kind::Data,
        };
        CliError { kind, message: e.to_string() }
    }
}
