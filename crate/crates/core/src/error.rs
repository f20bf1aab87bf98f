//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("sample `{path_id}`: field `{field}`: {message}")]
    Record {
        path_id: String,
        field: &'static str,
        message: String,
    },
    #[error("duplicate path_id `{0}`")]
    DuplicatePathId(String),
    #[error("subsample size {requested} exceeds dataset size {available}")]
    SubsampleTooLarge { requested: usize, available: usize },

    #[error("scan `{scan}`: duplicate node id `{id}`")]
    DuplicateNode { scan: String, id: String },
    #[error("scan `{scan}`: edge [{a}, {b}] names unknown node `{missing}`")]
    DanglingEdge {
        scan: String,
        a: String,
        b: String,
        missing: String,
    },
    #[error("unknown viewpoint `{0}`")]
    UnknownViewpoint(String),
    #[error("viewpoints `{from}` and `{to}` are not adjacent")]
    NotAdjacent { from: String, to: String },
    #[error("path length < 2")]
    PathTooShort,

    #[error("block mismatch needs at least 2 samples, got {0}")]
    BlockTooSmall(usize),

    #[error("empty unigram support")]
    EmptyUnigramSupport,
    #[error("no instructions with at least one word")]
    NoInstructionLengths,
    #[error("missing detections for path_id `{0}`")]
    MissingDetections(String),
    #[error("path_id `{path_id}`: detections cover {actual} panoramas, path has {expected}")]
    PanoramaCountMismatch {
        path_id: String,
        expected: usize,
        actual: usize,
    },
    #[error("path_id `{path_id}`: empty detection pool in window {window}")]
    EmptyDetectionPool { path_id: String, window: usize },
    #[error("path_id `{path_id}`: panorama {panorama}: detections not sorted by descending score")]
    UnsortedDetections { path_id: String, panorama: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("path_id `{path_id}`: donor provides {available} instructions, {needed} required")]
    InsufficientDonor {
        path_id: String,
        needed: usize,
        available: usize,
    },

    #[error("no route between `{from}` and `{to}`")]
    Unreachable { from: String, to: String },
    #[error("zero-length reference (start == goal)")]
    ZeroLengthReference,
    #[error("predicted path starts at `{predicted}`, reference at `{reference}`")]
    StartMismatch {
        predicted: String,
        reference: String,
    },
    #[error("episode `{instruction_id}`: {source}")]
    Episode {
        instruction_id: String,
        #[source]
        source: Box<Error>,
    },
    #[error("instruction id sets differ; only in a: [{only_a}], only in b: [{only_b}]")]
    IdSetMismatch { only_a: String, only_b: String },
    #[error("no graph loaded for scan `{0}`")]
    MissingGraph(String),
    #[error("no dataset instruction for id `{0}`")]
    MissingInstruction(String),

    #[error("empty step probability list")]
    EmptyStepProbs,
    #[error("probability {0} outside [0, 1]")]
    ProbabilityRange(f64),
    #[error("sample `{sample_id}`: {actual} epochs, expected {expected}")]
    EpochCountMismatch {
        sample_id: String,
        expected: usize,
        actual: usize,
    },
    #[error("sample `{sample_id}`: {source}")]
    Sample {
        sample_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn parse(path: impl AsRef<std::path::Path>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.as_ref().display().to_string(),
            message: message.to_string(),
        }
    }

    pub fn for_sample(self, sample_id: &str) -> Self {
        Error::Sample {
            sample_id: sample_id.to_string(),
            source: Box::new(self),
        }
    }

    pub fn for_episode(self, instruction_id: &str) -> Self {
        Error::Episode {
            instruction_id: instruction_id.to_string(),
            source: Box::new(self),
        }
    }
}
