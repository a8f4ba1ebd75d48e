use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the engine can report.
///
/// `kind()` gives a stable, machine-parsable tag used by the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left} vs {right}")]
    Shape {
        op: &'static str,
        left: String,
        right: String,
    },

    #[error("matrix is not positive definite (failing pivot {pivot})")]
    Singular { pivot: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("bad data at row {row}: {msg}")]
    Data { row: usize, msg: String },

    #[error("base phase has no training rows")]
    EmptyBase,

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("network is frozen; training operations are not allowed")]
    Frozen,

    #[error("training diverged in {stage} at epoch {epoch}: {msg}")]
    Training {
        stage: &'static str,
        epoch: usize,
        msg: String,
    },

    #[error("row {row} has zero norm")]
    DegenerateRow { row: usize },

    #[error("invalid phase plan: {0}")]
    Plan(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("exemplar access violation: phase {phase} requested training rows of phase {requested}")]
    ExemplarViolation { phase: usize, requested: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("{kind} at byte offset {offset}")]
    Format { kind: FormatErrorKind, offset: u64 },

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Distinct failure kinds of the binary file readers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormatErrorKind {
    BadMagic,
    Truncated,
    TrailingBytes,
    LabelOutOfRange,
    NonFinite,
    BadSection,
}

impl std::fmt::Display for FormatErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FormatErrorKind::BadMagic => "bad magic",
            FormatErrorKind::Truncated => "truncated file",
            FormatErrorKind::TrailingBytes => "trailing bytes",
            FormatErrorKind::LabelOutOfRange => "label out of range",
            FormatErrorKind::NonFinite => "non-finite value",
            FormatErrorKind::BadSection => "malformed section",
        };
        f.write_str(s)
    }
}

impl Error {
    pub fn shape(op: &'static str, left: impl Into<String>, right: impl Into<String>) -> Self {
        Error::Shape {
            op,
            left: left.into(),
            right: right.into(),
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Stable tag for machine consumption.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::Singular { .. } => "singular",
            Error::Parameter(_) => "parameter",
            Error::Data { .. } => "data",
            Error::EmptyBase => "empty_base",
            Error::Protocol(_) => "protocol",
            Error::Frozen => "frozen",
            Error::Training { .. } => "training",
            Error::DegenerateRow { .. } => "degenerate_row",
            Error::Plan(_) => "plan",
            Error::Evaluation(_) => "evaluation",
            Error::ExemplarViolation { .. } => "exemplar_violation",
            Error::Contract(_) => "contract",
            Error::Format { kind, .. } => match kind {
                FormatErrorKind::BadMagic => "bad_magic",
                FormatErrorKind::Truncated => "truncated",
                FormatErrorKind::TrailingBytes => "trailing_bytes",
                FormatErrorKind::LabelOutOfRange => "label_out_of_range",
                FormatErrorKind::NonFinite => "non_finite",
                FormatErrorKind::BadSection => "bad_section",
            },
            Error::Checksum { .. } => "checksum",
            Error::Config { .. } => "config",
            Error::Stage { source, .. } => source.kind(),
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    /// Innermost error, unwrapping stage tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}
