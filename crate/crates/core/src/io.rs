//! File helpers shared by every on-disk format.

use std::fs;
use std::io::Write;
use std::path::Path;

/// Writes `contents` to `path` through a temporary file in the same
/// directory followed by a rename, so readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Reads a UTF-8 text file, reporting the byte offset of the first invalid
/// sequence when decoding fails.
pub fn read_utf8(path: &Path) -> std::io::Result<String> {
    let bytes = fs::read(path)?;
    String::from_utf8(bytes).map_err(|e| {
        std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!(
                "{}: invalid UTF-8 at byte offset {}",
                path.display(),
                e.utf8_error().valid_up_to()
            ),
        )
    })
}

/// Lines of a text file, without trailing newline characters.
pub fn read_lines(path: &Path) -> std::io::Result<Vec<String>> {
    Ok(read_utf8(path)?.lines().map(str::to_owned).collect())
}
