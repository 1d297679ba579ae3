use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A ray met an obstacle with incidence cosine below the tangency tolerance.
    #[error("tangency ambiguity on obstacle {obstacle} at t={time} (margin {margin:e})")]
    TangencyAmbiguity {
        time: f64,
        point: [f64; 3],
        obstacle: u8,
        margin: f64,
    },

    #[error("probe failure: {0}")]
    ProbeFailure(String),

    /// A wavefront reached a focal point before the requested distance.
    #[error("caustic at distance {focal_distance}")]
    Caustic { focal_distance: f64 },

    #[error("point outside phase domain: {0}")]
    Domain(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
