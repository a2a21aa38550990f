use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("input error: {0}")]
    Input(String),
    #[error("point lies outside the domain: {0}")]
    Domain(String),
    #[error("degenerate chart: Jacobian rank {rank} < {expected}")]
    DegenerateChart { rank: usize, expected: usize },
    #[error("degenerate cone: apex lies in the affine span of the base")]
    DegenerateCone,
    #[error("separation refinement failed after {iterations} subdivisions; {offending} simplices unresolved")]
    Refinement { iterations: usize, offending: usize },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("incidence error: {0}")]
    Incidence(String),
    #[error("stack validation failed: {0}")]
    Validation(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<GeomError>,
    },
}

impl GeomError {
    pub fn at(self, stage: &'static str) -> GeomError {
        GeomError::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error under any stage tags.
    pub fn root(&self) -> &GeomError {
        match self {
            GeomError::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, GeomError>;
