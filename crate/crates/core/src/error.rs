use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the engine can report. `kind()` gives the stable name used in
/// the CLI's `error:<Kind>:` prefix.
#[derive(thiserror::Error, Debug)]
pub enum Error {
    #[error("unknown contig '{0}'")]
    UnknownContig(String),
    #[error("config file not found: {0}")]
    ConfigNotFound(PathBuf),
    #[error("{path}:{line}: {msg}")]
    ConfigParse { path: PathBuf, line: usize, msg: String },
    #[error("{0}")]
    ConfigError(String),
    #[error("no reference build bound to this session: {0}")]
    BuildRequired(String),

    #[error("unknown column '{0}'")]
    UnknownColumn(String),
    #[error("duplicate column '{0}'")]
    DuplicateColumn(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("unknown function '{0}'")]
    UnknownFunction(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("cycle in DAG relation through '{0}'")]
    CyclicDag(String),
    #[error("invalid cell value {0:?}: cells cannot contain tabs or newlines")]
    InvalidCell(String),
    #[error("row has {found} cells, schema has {expected}")]
    Arity { expected: usize, found: usize },

    #[error("rows out of genome order: {previous} followed by {current}; apply 'sort genome' first")]
    OrderViolation { previous: String, current: String },
    #[error("genome-ordered input required: {0}")]
    OrderRequired(String),
    #[error("corrupt file {path}: {msg}")]
    FormatCorrupt { path: PathBuf, msg: String },
    #[error("tags missing from dictionary: {}", .0.join(","))]
    MissingTag(Vec<String>),
    #[error("dictionary manifest error: {0}")]
    ManifestError(String),
    #[error("stream does not support seek")]
    NotSeekable,

    #[error("parse error at offset {offset}: {msg}")]
    Parse { offset: usize, msg: String },
    #[error("unterminated nested expression starting at offset {offset}")]
    NestedUnterminated { offset: usize },
    #[error("cyclic create references at offset {offset}: {}", .cycle.join(" -> "))]
    CreateCycle { cycle: Vec<String>, offset: usize },
    #[error("unknown command '{command}' at offset {offset}{}", suggestion.as_ref().map(|s| format!(", did you mean '{s}'?")).unwrap_or_default())]
    UnknownCommand { command: String, offset: usize, suggestion: Option<String> },
    #[error("duplicate create '{name}' at offset {offset}")]
    DuplicateCreate { name: String, offset: usize },
    #[error("unknown context '{word}' at offset {offset}: expected gor, nor, pgor, parallel or select")]
    UnknownContext { word: String, offset: usize },
    #[error("unresolved relation '[#{0}#]'")]
    UnresolvedRelation(String),

    #[error("duplicate key '{0}' in lookup relation")]
    DuplicateKey(String),
    #[error("value '{0}' contains the list delimiter ','")]
    ListDelimiterError(String),
    #[error("schema error: {0}")]
    SchemaError(String),
    #[error("out of range: {0}")]
    RangeError(String),
    #[error("values length mismatch for bucket '{bucket}' at {key}: expected {expected}, found {found}")]
    ValueSizeMismatch { bucket: String, key: String, expected: usize, found: usize },
    #[error("sample '{0}' not present in bucket layout")]
    MissingSample(String),

    #[error("pipeline cannot be range-partitioned: {0}")]
    NotSplittable(String),
    #[error("missing dependency: {0}")]
    MissingDependency(PathBuf),
    #[error("task for range {range} failed: {source}")]
    TaskFailed { range: String, source: Box<Error> },
    #[error("create '{name}' failed: {source}")]
    Dependency { name: String, source: Box<Error> },

    #[error("unsupported SQL construct: {0}")]
    UnsupportedSql(String),
    #[error("SQL semantic error: {0}")]
    SqlSemantic(String),

    #[error("name '{0}' collides with a pending create")]
    NameCollision(String),
    #[error("{0}")]
    Usage(String),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn parse(offset: usize, msg: impl Into<String>) -> Self {
        Error::Parse { offset, msg: msg.into() }
    }

    /// Offset into the query text, for errors raised while parsing.
    pub fn offset(&self) -> Option<usize> {
        match self {
            Error::Parse { offset, .. }
            | Error::NestedUnterminated { offset }
            | Error::UnknownCommand { offset, .. }
            | Error::UnknownContext { offset, .. }
            | Error::CreateCycle { offset, .. }
            | Error::DuplicateCreate { offset, .. } => Some(*offset),
            _ => None,
        }
    }

    /// Rewrites the offset of a parse-time error.
    pub fn map_offset(self, f: impl FnOnce(usize) -> usize) -> Error {
        match self {
            Error::Parse { offset, msg } => Error::Parse { offset: f(offset), msg },
            Error::NestedUnterminated { offset } => Error::NestedUnterminated { offset: f(offset) },
            Error::UnknownCommand { command, offset, suggestion } => {
                Error::UnknownCommand { command, offset: f(offset), suggestion }
            }
            Error::UnknownContext { word, offset } => Error::UnknownContext { word, offset: f(offset) },
            e => e,
        }
    }

    /// Innermost error of a dependency/task chain.
    pub fn root_cause(&self) -> &Error {
        match self {
            Error::Dependency { source, .. } | Error::TaskFailed { source, .. } => source.root_cause(),
            e => e,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::UnknownContig(_) => "UnknownContig",
            Error::ConfigNotFound(_) => "ConfigNotFound",
            Error::ConfigParse { .. } => "ConfigParse",
            Error::ConfigError(_) => "ConfigError",
            Error::BuildRequired(_) => "BuildRequired",
            Error::UnknownColumn(_) => "UnknownColumn",
            Error::DuplicateColumn(_) => "DuplicateColumn",
            Error::TypeMismatch(_) => "TypeMismatch",
            Error::UnknownFunction(_) => "UnknownFunction",
            Error::DivisionByZero => "DivisionByZero",
            Error::CyclicDag(_) => "CyclicDag",
            Error::InvalidCell(_) => "InvalidCell",
            Error::Arity { .. } => "Arity",
            Error::OrderViolation { .. } => "OrderViolation",
            Error::OrderRequired(_) => "OrderRequired",
            Error::FormatCorrupt { .. } => "FormatCorrupt",
            Error::MissingTag(_) => "MissingTag",
            Error::ManifestError(_) => "ManifestError",
            Error::NotSeekable => "NotSeekable",
            Error::Parse { .. } => "Parse",
            Error::NestedUnterminated { .. } => "NestedUnterminated",
            Error::CreateCycle { .. } => "CreateCycle",
            Error::UnknownCommand { .. } => "UnknownCommand",
            Error::DuplicateCreate { .. } => "DuplicateCreate",
            Error::UnknownContext { .. } => "UnknownContext",
            Error::UnresolvedRelation(_) => "UnresolvedRelation",
            Error::DuplicateKey(_) => "DuplicateKey",
            Error::ListDelimiterError(_) => "ListDelimiterError",
            Error::SchemaError(_) => "SchemaError",
            Error::RangeError(_) => "RangeError",
            Error::ValueSizeMismatch { .. } => "ValueSizeMismatch",
            Error::MissingSample(_) => "MissingSample",
            Error::NotSplittable(_) => "NotSplittable",
            Error::MissingDependency(_) => "MissingDependency",
            Error::TaskFailed { .. } => "TaskFailed",
            Error::Dependency { .. } => "Dependency",
            Error::UnsupportedSql(_) => "UnsupportedSql",
            Error::SqlSemantic(_) => "SqlSemantic",
            Error::NameCollision(_) => "NameCollision",
            Error::Usage(_) => "Usage",
            Error::Io { .. } => "Io",
        }
    }
}
