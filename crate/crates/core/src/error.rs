use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes of the solver library.
///
/// Validation problems carry the offending field or quantity by name so that
/// CLI diagnostics can point at a concrete config path or channel.
#[derive(Debug, Error)]
pub enum Error {
    /// A physical argument left the supported domain (wavelength range,
    /// non-positive power, V-parameter below cutoff of the model, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A data file could not be parsed. `line` is 1-based.
    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// Configuration failed validation; `path` is the dotted field path.
    #[error("invalid config at `{path}`: {message}")]
    Config { path: String, message: String },

    /// A launch profile did not match the comb it was applied to.
    #[error("launch profile mismatch: {0}")]
    ProfileMismatch(String),

    /// Two evolutions that must share a comb do not.
    #[error("comb mismatch: {0}")]
    CombMismatch(String),

    /// The integrator produced a non-finite power.
    #[error(
        "non-finite power for channel {channel} ({frequency_thz} THz) at z = {z_m} m; \
         reduce the step size or the launch power"
    )]
    NonFinite {
        channel: usize,
        frequency_thz: f64,
        z_m: f64,
    },

    /// The spatial quadrature grid cannot support the requested computation.
    #[error("quadrature grid too coarse: {points} points over {span_m} m (need at least {required})")]
    QuadratureTooCoarse {
        points: usize,
        span_m: f64,
        required: usize,
    },

    /// The order-selection ladder ran out of orders before meeting the target.
    /// `theta` (dimensionless) and `bound_db` trace the heuristic per order.
    #[error(
        "perturbative expansion did not reach {target_db} dB within {max_order} orders; \
         bound trace (dB): {bound_db:?}, theta trace: {theta:?}"
    )]
    NonConvergence {
        target_db: f64,
        max_order: usize,
        theta: Vec<f64>,
        bound_db: Vec<f64>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    InvalidInput(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
