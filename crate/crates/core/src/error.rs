//! Error type shared across the crate.

use std::fmt;
use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug)]
pub enum Error {
    /// The caller violated an operation's contract (bad argument, bad flag
    /// combination, value out of range).
    Usage(String),
    /// A filesystem operation failed.
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    /// The on-disk dataset does not match its manifest.
    DatasetIntegrity(String),
    /// A batch payload exceeded the per-consumer memory budget.
    SinkOverflow {
        batch_seq: u32,
        payload_bytes: u64,
        sink_budget: u64,
    },
    /// The estimated in-flight memory footprint exceeded the host budget.
    HostOverflow { estimate: u64, host_budget: u64 },
    /// Every candidate cell in the tuning grid overflowed a budget.
    NoFeasibleConfig { attempted: usize },
    /// A persisted file could not be parsed. `line` is 1-based; 0 means the
    /// error is not tied to a specific line.
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
    /// An error raised while measuring one tuning cell, tagged with the cell.
    Trial {
        n_worker: usize,
        n_prefetch: usize,
        source: Box<Error>,
    },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Usage(msg) => write!(f, "usage error: {msg}"),
            Error::Io { path, source } => write!(f, "io error on {}: {source}", path.display()),
            Error::DatasetIntegrity(msg) => write!(f, "dataset integrity error: {msg}"),
            Error::SinkOverflow {
                batch_seq,
                payload_bytes,
                sink_budget,
            } => write!(
                f,
                "sink overflow: batch {batch_seq} payload is {payload_bytes} bytes, \
                 budget is {sink_budget} bytes"
            ),
            Error::HostOverflow {
                estimate,
                host_budget,
            } => write!(
                f,
                "host overflow: estimated footprint {estimate} bytes exceeds \
                 budget {host_budget} bytes"
            ),
            Error::NoFeasibleConfig { attempted } => write!(
                f,
                "no feasible configuration: all {attempted} candidate cells overflowed"
            ),
            Error::Format {
                path,
                line,
                message,
            } => {
                if *line == 0 {
                    write!(f, "format error in {}: {message}", path.display())
                } else {
                    write!(f, "format error in {} line {line}: {message}", path.display())
                }
            }
            Error::Trial {
                n_worker,
                n_prefetch,
                source,
            } => write!(f, "trial (n_worker={n_worker}, n_prefetch={n_prefetch}): {source}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            Error::Trial { source, .. } => Some(source.as_ref()),
            _ => None,
        }
    }
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 1 file/integrity, 2 usage, 3 overflow,
    /// 4 infeasible grid.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 2,
            Error::Io { .. } | Error::DatasetIntegrity(_) | Error::Format { .. } => 1,
            Error::SinkOverflow { .. } | Error::HostOverflow { .. } => 3,
            Error::NoFeasibleConfig { .. } => 4,
            Error::Trial { source, .. } => source.exit_code(),
        }
    }
}
