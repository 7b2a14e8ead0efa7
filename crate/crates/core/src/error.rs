use thiserror::Error;

/// Errors raised by the perception, estimation and mission code.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid image geometry: {0}")]
    InvalidGeometry(&'static str),
    #[error("line is nearly perpendicular to the flight direction (|dx| = {dx:e})")]
    NearVerticalLine { dx: f64 },
    #[error("observation model is singular for this pose (denominator {denominator:e})")]
    SingularObservation { denominator: f64 },
    #[error("invalid thresholds: {0}")]
    InvalidThresholds(String),
    #[error("region of {area} pixel(s) has no principal direction")]
    DegenerateRegion { area: usize },
    #[error("line does not cross the {width}x{height} image")]
    NoIntersection { width: u32, height: u32 },
    #[error("raster shapes differ: {left:?} vs {right:?}")]
    ShapeMismatch { left: (u32, u32), right: (u32, u32) },
    #[error("no regions detected in either image")]
    NoRegionsDetected,
    #[error("malformed mission: {0}")]
    MalformedMission(MissionRule),
    #[error("raster format: {0}")]
    Format(String),
}

/// Rule broken by a waypoint list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissionRule {
    /// Fewer than two waypoints or an odd count.
    Count,
    /// Labels do not alternate PV start, PV end.
    Alternation,
    /// A start/end pair is closer than the minimum row length.
    RowTooShort,
    /// Row indices are not consecutive from zero.
    RowIndex,
}

impl std::fmt::Display for MissionRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            MissionRule::Count => "count",
            MissionRule::Alternation => "alternation",
            MissionRule::RowTooShort => "row-too-short",
            MissionRule::RowIndex => "row-index",
        };
        f.write_str(s)
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
