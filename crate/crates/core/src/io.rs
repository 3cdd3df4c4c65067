//! Small helpers shared by the CSV and JSON writers.

use std::path::Path;

use crate::error::{Error, Result};

/// Formats with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn parse_f64(s: &str, path: &Path) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| Error::Parse {
        path: path.into(),
        reason: format!("bad float {s:?}: {e}"),
    })
}

pub(crate) fn parse_usize(s: &str, path: &Path) -> Result<usize> {
    s.trim().parse::<usize>().map_err(|e| Error::Parse {
        path: path.into(),
        reason: format!("bad index {s:?}: {e}"),
    })
}
