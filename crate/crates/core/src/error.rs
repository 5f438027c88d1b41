use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("invalid ground set: n = {n}, k = {k} (both must be at least 1)")]
    InvalidGroundSet { n: usize, k: usize },

    #[error("label {label} out of range for k = {k}")]
    InvalidLabel { label: usize, k: usize },

    #[error("subset index {q} out of range for k = {k}")]
    InvalidSubset { q: usize, k: usize },

    #[error("element {element} out of range for n = {n}")]
    InvalidElement { element: usize, n: usize },

    #[error("element {} is assigned to more than one subset", .element + 1)]
    OverlappingAssignment { element: usize },

    #[error("element {} is already assigned", .element + 1)]
    ElementAssigned { element: usize },

    #[error("enumeration needs {required} evaluations, cap is {cap}; {hint}")]
    EnumerationCap { required: u128, cap: u128, hint: &'static str },

    #[error("oracle value bounds are not finite (lower = {lower}, upper = {upper})")]
    UnboundedOracle { lower: f64, upper: f64 },

    #[error("operation requires a monotone oracle")]
    NonMonotoneOracle,

    #[error("value table is missing the entry for {0}")]
    MissingTableEntry(String),

    #[error("oracle is not normalized: value at the empty k-set is {0}")]
    NotNormalized(f64),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("master problem has an empty cut pool")]
    EmptyCutPool,

    #[error("no k-set satisfies the feasible region")]
    Infeasible,

    #[error("linear relaxation is unbounded")]
    Unbounded,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid feasible region: {0}")]
    InvalidRegion(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("parse error{}: {msg}", location_suffix(.line, .field))]
    Parse {
        line: Option<usize>,
        field: Option<String>,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn location_suffix(line: &Option<usize>, field: &Option<String>) -> String {
    match (line, field) {
        (Some(l), Some(f)) => format!(" at line {l}, field `{f}`"),
        (Some(l), None) => format!(" at line {l}"),
        (None, Some(f)) => format!(" in field `{f}`"),
        (None, None) => String::new(),
    }
}

impl Error {
    pub(crate) fn parse(line: Option<usize>, field: Option<&str>, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            field: field.map(str::to_owned),
            msg: msg.into(),
        }
    }
}
