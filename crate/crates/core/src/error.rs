use thiserror::Error;

/// Crate-wide error type. `exit_code` groups variants into the CLI's
/// contract: 2 = configuration, 3 = data, 4 = numerical.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),

    #[error("row {row}: expected {expected} cells, found {found}")]
    RaggedRow { row: usize, expected: usize, found: usize },

    #[error("duplicate unit id {id:?} at row {row}")]
    DuplicateId { id: String, row: usize },

    #[error("row {row}, column {column:?}: cannot parse {value:?} as a finite number")]
    BadNumeric { row: usize, column: String, value: String },

    #[error("schema names unknown column {0:?}")]
    UnknownColumn(String),

    #[error("column {column:?}: label {label:?} missing from encoding map")]
    UnmappedLabel { column: String, label: String },

    #[error("fewer than 2 units in input")]
    TooFewUnits,

    #[error("table has no columns")]
    NoColumns,

    #[error("missing cell at row {row}, column {column:?}")]
    MissingCell { row: usize, column: String },

    #[error("vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),

    #[error("cosine distance undefined for a zero vector")]
    ZeroVector,

    #[error("correlation distance undefined for a constant vector")]
    ConstantVector,

    #[error("rows ({i}, {j}): {source}")]
    AtPair {
        i: usize,
        j: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("sample size {n_sample} must be smaller than population {n}")]
    SampleTooLarge { n_sample: usize, n: usize },

    #[error("all deviations are zero; inclusion probabilities undefined")]
    AllDeviationsZero,

    #[error("sample of {sample} units does not match plan over {plan} units")]
    PlanMismatch { sample: usize, plan: usize },

    #[error("k = {k} exceeds the number of rows {n}")]
    TooManyClusters { k: usize, n: usize },

    #[error("cluster has no members")]
    EmptyCluster,

    #[error("all sampled clusters are empty")]
    AllClustersEmpty,

    #[error("silhouette undefined with fewer than 2 non-empty clusters")]
    SingleCluster,

    #[error("need at least {need} eigenvalues, have {have}")]
    TooFewEigenvalues { need: usize, have: usize },

    #[error("eigensolver failed to converge ({kind} Laplacian, size {size})")]
    EigenFailed { kind: &'static str, size: usize },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wrap an error with the pipeline stage it arose in.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage { stage, source: Box::new(self) }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::SampleTooLarge { .. } | Error::TooManyClusters { .. }
            | Error::SingleCluster | Error::TooFewEigenvalues { .. } => 2,
            Error::EigenFailed { .. } => 4,
            Error::Stage { source, .. } | Error::AtPair { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
