//! Small filesystem helpers shared by the pipeline stages.

use crate::error::{Error, Result};
use std::io::Write;
use std::path::Path;

/// Write a file atomically: content goes to a sibling temp file which is
/// renamed over the target, so interrupted runs never leave truncated
/// artifacts.
pub fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let label = path.display().to_string();
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    if !dir.as_os_str().is_empty() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(label.clone(), e))?;
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {label}")))?;
    let tmp = dir.join(format!(".{}.tmp-{}", file_name.to_string_lossy(), std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(label.clone(), e))?;
        f.write_all(content.as_bytes())
            .map_err(|e| Error::io(label.clone(), e))?;
        f.sync_all().map_err(|e| Error::io(label.clone(), e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(label, e))
}
