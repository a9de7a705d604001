use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("refusing to materialize a {dim}x{dim} matrix (limit {limit})")]
    SizeGuardExceeded { dim: usize, limit: usize },

    #[error("all weights are zero")]
    AllWeightsZero,

    #[error("component {component} became empty (total responsibility {mass:e})")]
    EmptyCluster { component: usize, mass: f64 },

    #[error("initial partition left a cluster with fewer than 2 members after {attempts} attempts")]
    DegenerateClusterInit { attempts: usize },

    #[error("autoregressive coefficient must satisfy |rho| < 1, got {0}")]
    InvalidRho(f64),

    #[error("mean image needs r, p >= 5, got {r}x{p}")]
    TooSmall { r: usize, p: usize },

    #[error("label vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),

    #[error("exhaustive permutation search supports at most 10 clusters, got {0}")]
    TooManyClusters(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("component {component}: {source}")]
    InComponent { component: usize, source: Box<Error> },

    #[error("EM iteration {iteration}: {source}")]
    AtIteration { iteration: usize, source: Box<Error> },
}

impl Error {
    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::AtIteration { iteration, source: Box::new(self) }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    /// True for failures caused by floating-point degeneracy rather than bad input.
    pub fn is_numeric(&self) -> bool {
        if let Error::InComponent { source, .. } | Error::AtIteration { source, .. } = self {
            return source.is_numeric();
        }
        matches!(self, Error::NotPositiveDefinite(_) | Error::EmptyCluster { .. } | Error::DegenerateClusterInit { .. })
    }
}
