use std::path::PathBuf;

use thiserror::Error;

use crate::graph::NodeId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("no rows in {0}")]
    NoRows(PathBuf),

    #[error("schema names column `{0}` which is not present in the file")]
    UnknownColumn(String),

    #[error("column `{0}` has no role in the schema")]
    UnassignedColumn(String),

    #[error("schema must designate exactly one {role} column, found {found}")]
    RoleCount { role: &'static str, found: usize },

    #[error("sensitive column `{column}` must have exactly two distinct values, found {found}")]
    SensitiveArity { column: String, found: usize },

    #[error("label column `{column}` must have exactly two distinct values including `{good}`, found {found:?}")]
    LabelValues {
        column: String,
        good: String,
        found: Vec<String>,
    },

    #[error("unparseable numeric cell `{value}` in column `{column}` at row {row}")]
    BadNumber {
        column: String,
        row: usize,
        value: String,
    },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("unknown node id {0}")]
    UnknownNode(NodeId),

    #[error("k = {k} must be positive and smaller than the node count {nodes}")]
    InvalidK { k: usize, nodes: usize },

    #[error("sampling target {target} exceeds available group size {available}")]
    TargetTooLarge { target: usize, available: usize },

    #[error("stratification impossible: majority cell for label {label} has {majority} nodes, minority has {minority}")]
    CellTooSmall {
        label: &'static str,
        majority: usize,
        minority: usize,
    },

    #[error("node count {0} is odd; cannot split into two equal groups")]
    OddTotal(usize),

    #[error("node count {0} is not divisible by 4")]
    NotDivisibleByFour(usize),

    #[error("group roles inverted: majority count {majority} is smaller than {required}")]
    GroupsInverted { majority: usize, required: usize },

    #[error("non-finite loss at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("training set contains a single class")]
    SingleClass,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("gaussian mixture: {0}")]
    Gmm(String),

    #[error("rejection sampling exhausted its retry cap: accepted {accepted} of {requested} after {draws} draws")]
    RetryCapExhausted {
        accepted: usize,
        requested: usize,
        draws: usize,
    },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("malformed file {path}: {message}")]
    Malformed { path: PathBuf, message: String },

    #[error("unknown report format `{0}`")]
    UnknownFormat(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Malformed {
            path: path.into(),
            message: message.into(),
        }
    }
}
