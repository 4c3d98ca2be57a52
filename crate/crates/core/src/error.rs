use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("weight list is empty")]
    EmptyWeights,
    #[error("weight {value} at position {position} is outside (0, 1]")]
    WeightOutOfRange { position: usize, value: String },
    #[error("cannot parse rational from {0:?} (expected p/q or p)")]
    InvalidRational(String),
    #[error("ground set mismatch: expected marks 1..={expected}, found {found}")]
    SizeMismatch { expected: usize, found: String },
    #[error("weight data {0} and {1} are not componentwise comparable")]
    NotComparable(String, String),
    #[error("genus-0 correlator needs at least 3 marks, got {0}")]
    TooFewMarks(usize),
    #[error("corrupt correlator cache at line {line}: {reason}")]
    CorruptCache { line: usize, reason: String },
    #[error("cache i/o error: {0}")]
    CacheIo(String),
    #[error("mark {mark} is not in 1..={n}")]
    InvalidMark { mark: usize, n: usize },
    #[error("exponent vector has length {exponents}, weight data has length {weights}")]
    LengthMismatch { exponents: usize, weights: usize },
    #[error("expressions live on different spaces: (g={g1}, n={n1}) vs (g={g2}, n={n2})")]
    GroundSetMismatch { g1: u32, n1: usize, g2: u32, n2: usize },
    #[error("term of Chow degree {found} cannot be integrated on a space of dimension {expected}")]
    DegreeMismatch { expected: i64, found: i64 },
    #[error("Hassett space with g={genus} and total weight {total} is unstable (2g-2+sum <= 0)")]
    UnstableWeights { genus: u32, total: String },
    #[error("expression is not the pull-back of a ψ-monomial: {0}")]
    NotAPullbackMonomial(String),
    #[error("induction step left {0} non-pinwheel terms uncancelled")]
    UncancelledStratum(usize),
    #[error("no substitution given for x[{0}]")]
    UnmappedVariable(u32),
    #[error("malformed series line {line}: {reason}")]
    MalformedSeries { line: usize, reason: String },
}
