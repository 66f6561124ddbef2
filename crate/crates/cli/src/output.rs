//! File output. Every file is written to a temporary sibling and renamed
//! into place.

use std::io::Write;
use std::path::{Path, PathBuf};

use qllg::TrajectoryRecord;

use crate::error::CliError;

pub fn build_id() -> String {
    format!("qllg {} ({})", env!("CARGO_PKG_VERSION"), env!("QLLG_GIT_REV"))
}

/// 17 significant digits.
pub fn number(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)
        .map_err(|e| CliError::Io(format!("cannot write into {}: {e}", dir.display())))?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::Io(format!("cannot write {}: {}", path.display(), e.error)))?;
    Ok(())
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values serialize");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// `t_ps`, the observer columns, then the conservation diagnostics.
pub fn trajectory_csv(record: &TrajectoryRecord) -> String {
    let mut out = String::from("t_ps");
    for name in &record.observable_names {
        out.push(',');
        out.push_str(name);
    }
    out.push_str(",trace,purity,trace_cube,min_eig\n");
    for ((t, row), d) in record.times.iter().zip(&record.observables).zip(&record.diagnostics) {
        out.push_str(&number(*t));
        for x in row.iter().chain([d.trace, d.trace_sq, d.trace_cube, d.min_eigenvalue].iter()) {
            out.push(',');
            out.push_str(&number(*x));
        }
        out.push('\n');
    }
    out
}

/// `<dir>/<stem><suffix>`, where `dir` is `out_dir` when given and the
/// directory of `base` otherwise.
pub fn sibling(base: &Path, out_dir: Option<&Path>, suffix: &str) -> PathBuf {
    let stem = base.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "qllg_run".into());
    let dir = match out_dir {
        Some(d) => d.to_path_buf(),
        None => base.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    dir.join(format!("{stem}{suffix}"))
}
