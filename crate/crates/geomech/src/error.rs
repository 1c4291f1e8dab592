//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at offset {offset}: {msg}")]
    Syntax { offset: usize, msg: String },

    #[error("unknown symbol `{name}` at offset {offset}")]
    UnknownSymbol { name: String, offset: usize },

    #[error("binding has {got} values but the chart has {expected} coordinates")]
    BindingLength { expected: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension {dim} unsupported: {msg}")]
    Dimension { dim: usize, msg: String },

    #[error("metric is singular at sample point {point:?} (det = {det:e})")]
    SingularMetric { point: Vec<f64>, det: f64 },

    #[error("metric is not adapted to the time coordinate: {0}")]
    NotAdapted(String),

    #[error("coefficient {coeff} depends on the distinguished coordinate (|d/dx0| = {value:e} at {point:?})")]
    TimeDependentCoefficient {
        coeff: String,
        value: f64,
        point: Vec<f64>,
    },

    #[error("|2T| fell below the regularity floor at lambda = {lambda:.6e}; duration/length undefined there")]
    LightQuadric { lambda: f64 },

    #[error("{quantity} below regularity floor: |{value:e}| < {floor:e}")]
    RegularityFloor {
        quantity: String,
        value: f64,
        floor: f64,
    },

    #[error("projected curve meets the zero section at lambda = {lambda:.6e}; duration undefined")]
    ZeroSection { lambda: f64 },

    #[error("orbit not closed at tolerance {tol:e} within span {span}")]
    OrbitNotClosed { tol: f64, span: f64 },

    #[error("requested value {value} outside the sampled range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("tensor/operator order {order} exceeds the supported cap {cap}")]
    OrderCap { order: usize, cap: usize },

    #[error("eigensolve failed to converge: {0}")]
    Eigensolve(String),

    #[error("schema violation at `{path}`: {msg}")]
    Schema { path: String, msg: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
