use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("metric invalid in degree {degree}: {reason}")]
    Metric { degree: usize, reason: String },

    #[error("ambiguous kernel in {context}: eigenvalue {value:.3e} lies in the dead zone [{tau:.3e}, {upper:.3e}]")]
    AmbiguousKernel {
        context: String,
        value: f64,
        tau: f64,
        upper: f64,
    },

    #[error("differential does not square to zero: residual {residual:.3e} exceeds {bound:.3e}")]
    NotSquareZero { residual: f64, bound: f64 },

    #[error("flux is not closed: |dH| = {residual:.3e}")]
    NotClosed { residual: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("size cap exceeded: {requested} generators requested, cap is {cap}")]
    SizeCap { requested: usize, cap: usize },

    #[error("unresolved branch (parity {parity}, index {index}): log-log slope {slope:.4} is {residual:.3} from an integer; refine grid (try geom:1e-6:1:40)")]
    UnresolvedBranch {
        parity: u8,
        index: usize,
        slope: f64,
        residual: f64,
    },

    #[error("grading extrapolation failed: Str(N P_t) extrapolates to {value:.6}, {residual:.3e} from an integer; refine grid")]
    GradingExtrapolation { value: f64, residual: f64 },

    #[error("degenerate grid: {0}")]
    Grid(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}
