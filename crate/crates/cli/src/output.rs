//! File naming and writing shared by the subcommands.

use std::fs;
use std::path::Path;

use biosep::separation::SourceLabel;
use biosep::Error;
use serde::Serialize;

use crate::Failure;

pub fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Run(Error::Io(e.into())))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// File stem without the directory and `.wav` extension.
pub fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "signal".into())
}

/// Splits `mix.heart` into `("mix", Heart)`.
pub fn split_label(stem: &str) -> Option<(&str, SourceLabel)> {
    let (base, label) = stem.rsplit_once('.')?;
    Some((base, SourceLabel::parse(label)?))
}

/// Fails with `FileNotFound` before any work when `path` is missing.
pub fn require_file(path: &Path) -> Result<(), Failure> {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::Run(Error::FileNotFound(path.to_path_buf())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_are_split_from_stems() {
        assert_eq!(split_label("mixture.heart"), Some(("mixture", SourceLabel::Heart)));
        assert_eq!(split_label("a.b.residual"), Some(("a.b", SourceLabel::Residual)));
        assert_eq!(split_label("mixture"), None);
        assert_eq!(split_label("mixture.take2"), None);
    }

    #[test]
    fn stem_drops_directory_and_extension() {
        assert_eq!(stem(Path::new("demo/mixture.lung.wav")), "mixture.lung");
    }
}
