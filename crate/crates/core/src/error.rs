use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("unknown config key `{key}`; valid keys: {valid}")]
    UnknownKey { key: String, valid: String },

    #[error("empty coalition")]
    EmptyCoalition,

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("power cap must be nonnegative, got {0}")]
    NegativePowerCap(f64),

    #[error("degenerate channel: every macro-cell gain is zero")]
    DegenerateChannel,

    #[error("no (lambda, h) pair with both entries positive")]
    NoPositivePair,

    #[error("oracle scale exceeded: K={uus}, M={subbands} (limit K<=5, M<=4)")]
    OracleScale { uus: usize, subbands: usize },

    #[error("unknown preset `{name}`; available: {available}")]
    UnknownPreset { name: String, available: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("{0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
