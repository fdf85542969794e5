use std::io;
use std::path::{Path, PathBuf};

/// Failures of the IO-facing layer. Each variant maps onto a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Bad flags, bad flag combinations or a refused output directory.
    #[error("{0}")]
    Usage(String),
    #[error("missing input: {}", .0.display())]
    Missing(PathBuf),
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    /// A file exists but its content is malformed or violates an invariant.
    #[error("{}: {msg}", .path.display())]
    Format { path: PathBuf, msg: String },
    #[error(transparent)]
    Core(#[from] cycconf_core::Error),
    #[error("training diverged at iteration {iteration}: {msg} (diagnostics in {})", .dump.display())]
    Diverged { iteration: usize, msg: String, dump: PathBuf },
    #[error("{0}")]
    Runtime(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// 2 for usage errors and missing inputs, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Missing(_) => 2,
            _ => 1,
        }
    }

    pub(crate) fn format(path: &Path, msg: impl Into<String>) -> Self {
        Error::Format { path: path.to_path_buf(), msg: msg.into() }
    }
}

/// Wraps an `io::Error` with its path; `NotFound` becomes [`Error::Missing`].
pub(crate) fn io_err(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
    move |source| {
        if source.kind() == io::ErrorKind::NotFound {
            Error::Missing(path.to_path_buf())
        } else {
            Error::Io { path: path.to_path_buf(), source }
        }
    }
}
