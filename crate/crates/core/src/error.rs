use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    /// Shapes that do not line up (arity, dimension counts, empty ranges).
    #[error("structural error: {0}")]
    Structure(String),

    /// An evaluated index fell outside the declared array extents.
    #[error("bounds error: {0}")]
    Bounds(String),

    /// An edge or ref points at something that does not exist.
    #[error("reference error: {0}")]
    Reference(String),

    #[error("dependence cycle: {}", format_cycle(.0))]
    Cycle(Vec<usize>),

    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid cache geometry: {0}")]
    Geometry(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("merge error: {0}")]
    Merge(String),

    #[error("internal error: {0}")]
    Internal(String),
}

fn format_cycle(ids: &[usize]) -> String {
    let mut out: Vec<String> = ids.iter().map(|id| format!("P{id}")).collect();
    if let Some(first) = ids.first() {
        out.push(format!("P{first}"));
    }
    out.join(" -> ")
}

impl Error {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}
