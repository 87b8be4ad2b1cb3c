//! Plain-text number formatting and parsing shared by the file formats.

use std::path::Path;

use crate::error::{Error, Result};

/// 17 significant digits: enough for an exact `f64` round trip.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn parse_error(
    path: &Path,
    line: usize,
    column: usize,
    message: impl Into<String>,
) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message: message.into(),
    }
}

/// Splits `line` on `sep` (or on whitespace when `sep` is `None`), yielding
/// each field with its 1-based starting column.
pub(crate) fn fields(line: &str, sep: Option<char>) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    match sep {
        Some(c) => {
            let mut col = 1;
            for f in line.split(c) {
                let lead = f.len() - f.trim_start().len();
                out.push((col + lead, f.trim()));
                col += f.len() + c.len_utf8();
            }
        }
        None => {
            let mut rest = line;
            let mut offset = 0;
            while let Some(start) = rest.find(|c: char| !c.is_whitespace()) {
                let tail = &rest[start..];
                let end = tail.find(char::is_whitespace).unwrap_or(tail.len());
                out.push((offset + start + 1, &tail[..end]));
                offset += start + end;
                rest = &tail[end..];
            }
        }
    }
    out
}

pub(crate) fn parse_f64(path: &Path, line: usize, column: usize, text: &str) -> Result<f64> {
    text.parse::<f64>().map_err(|_| {
        parse_error(
            path,
            line,
            column,
            format!("expected a number, found {text:?}"),
        )
    })
}

pub(crate) fn parse_usize(path: &Path, line: usize, column: usize, text: &str) -> Result<usize> {
    text.parse::<usize>().map_err(|_| {
        parse_error(
            path,
            line,
            column,
            format!("expected a non-negative integer, found {text:?}"),
        )
    })
}

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_string(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}
