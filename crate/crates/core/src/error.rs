use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("degenerate element {element}: local DOF matrix is singular")]
    DegenerateElement { element: usize },

    #[error("ellipticity violated: tr A = {trace} at ({x}, {y})")]
    Ellipticity { trace: f64, x: f64, y: f64 },

    #[error("Cordes condition violated: computed epsilon {0} is not positive")]
    CordesViolation(f64),

    #[error("invalid coefficient data: {0}")]
    InvalidData(String),

    #[error("mesh does not resolve the coefficient discontinuities: {0}")]
    MeshNotAligned(String),

    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
