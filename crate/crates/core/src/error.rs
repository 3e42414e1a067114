use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{table} row {row} at level {level} is not a distribution (sum {sum})")]
    NonStochasticRow {
        table: &'static str,
        level: usize,
        row: usize,
        sum: f64,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("policy covers {covered} levels but {needed} are required")]
    PolicyHorizonMismatch { needed: usize, covered: usize },
    #[error("dataset must contain at least one transition")]
    EmptyDataset,
    #[error("reward {value} at level {level} is outside [0, 1]")]
    RewardOutOfRange { level: usize, value: f64 },
    #[error("coordinate {coord} out of range for dimension {dim}")]
    CoordOutOfRange { coord: usize, dim: usize },
    #[error("level mismatch: expected {expected}, found {found}")]
    LevelMismatch { expected: usize, found: usize },
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("row {row} has norm {norm} > 1")]
    RowNormExceeded { row: usize, norm: f64 },
    #[error("feature class is empty at level {level}")]
    EmptyClass { level: usize },
    #[error("no regression data for level {level}")]
    MissingLevelData { level: usize },
    #[error("no environment with eta_min >= {floor} after {attempts} attempts")]
    GenerationFailed { attempts: usize, floor: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn in_stage(self, stage: impl Into<String>) -> Error {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }
}
