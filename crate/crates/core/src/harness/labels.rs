//! Label files: one label per line, `0`/`1` for binary data and `1..=K` for
//! K-ary data. Blank lines and lines starting with `#` are skipped.

use std::fs;
use std::path::Path;

use crate::loss::{BinaryLabeling, KaryLabeling, Labeling};

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    Binary,
    Kary(u32),
}

pub fn load_labels(path: &Path, kind: LabelKind) -> Result<Labeling, HarnessError> {
    let text = fs::read_to_string(path)?;
    parse_labels(&text, kind)
}

pub fn parse_labels(text: &str, kind: LabelKind) -> Result<Labeling, HarnessError> {
    let mut values = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| HarnessError::Parse { line: i + 1, message };
        let v: u32 = line.parse().map_err(|_| err(format!("{line:?} is not a label")))?;
        let ok = match kind {
            LabelKind::Binary => v <= 1,
            LabelKind::Kary(k) => (1..=k).contains(&v),
        };
        if !ok {
            return Err(err(match kind {
                LabelKind::Binary => format!("{v} is not a binary label"),
                LabelKind::Kary(k) => format!("class {v} is outside 1..={k}"),
            }));
        }
        values.push(v);
    }
    if values.is_empty() {
        return Err(HarnessError::Parse { line: 0, message: "no labels".into() });
    }
    Ok(match kind {
        LabelKind::Binary => Labeling::Binary(BinaryLabeling::new(values.into_iter().map(|v| v as u8).collect())?),
        LabelKind::Kary(k) => Labeling::Kary(KaryLabeling::new(values, k)?),
    })
}

/// The inverse of [`load_labels`].
pub fn write_labels(path: &Path, labels: &Labeling) -> Result<(), HarnessError> {
    let mut text = String::with_capacity(2 * labels.len());
    for v in labels.values() {
        text.push_str(&v.to_string());
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_binary() {
        let l = parse_labels("0\n1\n1\n0\n1\n", LabelKind::Binary).unwrap();
        assert_eq!(l, Labeling::Binary(BinaryLabeling::new(vec![0, 1, 1, 0, 1]).unwrap()));
        assert_eq!(l.len(), 5);
    }

    #[test]
    fn skips_comments_and_blanks() {
        let l = parse_labels("# header\n\n1\n  0 \n# x\n", LabelKind::Binary).unwrap();
        assert_eq!(l.values(), vec![1, 0]);
    }

    #[test]
    fn reports_line_numbers() {
        match parse_labels("2\n", LabelKind::Binary) {
            Err(HarnessError::Parse { line: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        match parse_labels("# c\n1\nx\n", LabelKind::Binary) {
            Err(HarnessError::Parse { line: 3, .. }) => {}
            other => panic!("{other:?}"),
        }
        match parse_labels("1\n4\n", LabelKind::Kary(3)) {
            Err(HarnessError::Parse { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(parse_labels("0\n", LabelKind::Kary(3)).is_err());
        assert!(parse_labels("# nothing\n", LabelKind::Binary).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.txt");
        let l = parse_labels("3\n1\n2\n", LabelKind::Kary(3)).unwrap();
        write_labels(&path, &l).unwrap();
        assert_eq!(load_labels(&path, LabelKind::Kary(3)).unwrap(), l);
    }
}
