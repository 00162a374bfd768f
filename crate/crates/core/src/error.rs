use thiserror::Error;

pub type Result<T> = std::result::Result<T, CoreError>;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("shape {shape:?} implies {} elements but {len} were given", shape.iter().product::<usize>())]
    ShapeDataMismatch { shape: Vec<usize>, len: usize },

    #[error("non-finite entry {value} rejected at tensor construction")]
    NonFinite { value: f64 },

    #[error("operation {op} cannot combine shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("operation {op} expects {expected} but got shape {got:?}")]
    BadOperand {
        op: &'static str,
        expected: &'static str,
        got: Vec<usize>,
    },

    #[error("backward requires a scalar root, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },

    #[error("gradient check refused: a surrogate-gradient op is on the checked path")]
    SurrogateOnPath,

    #[error("unknown problem family `{0}`")]
    UnknownFamily(String),

    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },

    #[error("unsupported correction method {method} for {context}")]
    UnsupportedMethod {
        method: &'static str,
        context: &'static str,
    },

    #[error("TRAIN-mode batch normalization needs a batch of at least 2 rows, got {0}")]
    BatchTooSmall(usize),

    #[error("training diverged: non-finite loss at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    #[error("non-finite gradient during projection at iteration {iteration}")]
    ProjectionNaN { iteration: usize },

    #[error("relaxation solver diverged: non-finite iterate")]
    RelaxationDiverged,

    #[error("empty trace passed to descent diagnostics")]
    EmptyTrace,

    #[error("enumeration window needs {required} evaluations, above the cap of {cap}")]
    EnumerationTooLarge { required: u128, cap: u64 },

    #[error("container format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
