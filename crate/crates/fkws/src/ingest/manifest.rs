//! JSON-lines manifests describing the corpus: one clip per line with its
//! domain, polarity and (for positives) the keyword word end frames.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

/// Recording distance. `D025` (0.25 m) is the close-talking source domain;
/// the other two are far-field targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Domain {
    #[serde(rename = "0.25m")]
    D025,
    #[serde(rename = "1m")]
    D1m,
    #[serde(rename = "3m")]
    D3m,
}

impl Domain {
    pub const ALL: [Domain; 3] = [Domain::D025, Domain::D1m, Domain::D3m];

    /// Manifest/report label.
    pub fn label(self) -> &'static str {
        match self {
            Domain::D025 => "0.25m",
            Domain::D1m => "1m",
            Domain::D3m => "3m",
        }
    }

    /// Class index for domain classification (0, 1, 2).
    pub fn index(self) -> usize {
        match self {
            Domain::D025 => 0,
            Domain::D1m => 1,
            Domain::D3m => 2,
        }
    }

    /// Filesystem-safe short name.
    pub fn slug(self) -> &'static str {
        match self {
            Domain::D025 => "d025",
            Domain::D1m => "d1m",
            Domain::D3m => "d3m",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    /// Audio path, relative to the manifest file's directory.
    pub path: String,
    pub domain: Domain,
    pub polarity: Polarity,
    /// Word end frames, strictly increasing; present only on positives.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ends: Vec<usize>,
}

impl ManifestEntry {
    fn validate(&self, line: usize) -> Result<()> {
        match self.polarity {
            Polarity::Positive => {
                if self.ends.is_empty() {
                    return Err(Error::Validation(format!(
                        "line {line}: positive entry {} has no end frames",
                        self.path
                    )));
                }
                if self.ends.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::Validation(format!(
                        "line {line}: end frames {:?} not strictly increasing",
                        self.ends
                    )));
                }
            }
            Polarity::Negative => {
                if !self.ends.is_empty() {
                    return Err(Error::Validation(format!(
                        "line {line}: negative entry {} carries end frames",
                        self.path
                    )));
                }
            }
        }
        Ok(())
    }

    /// Resolves the entry's audio path against the manifest location.
    pub fn resolve(&self, manifest_path: &Path) -> PathBuf {
        manifest_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(&self.path)
    }
}

/// Parses a JSON-lines manifest. Blank lines are not allowed; every error
/// names the 1-based line it came from.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let file = std::fs::File::open(path)?;
    let mut entries = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let text = line?;
        let entry: ManifestEntry = serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        entry.validate(line_no)?;
        entries.push(entry);
    }
    Ok(entries)
}

/// Writes entries as one JSON object per line.
pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    for entry in entries {
        let line = serde_json::to_string(entry)
            .map_err(|e| Error::Format(format!("manifest serialization: {e}")))?;
        writeln!(file, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_positive_and_negative_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        std::fs::write(
            &path,
            concat!(
                r#"{"path":"a.wav","domain":"1m","polarity":"positive","ends":[50,80,110]}"#,
                "\n",
                r#"{"path":"b.wav","domain":"0.25m","polarity":"negative"}"#,
                "\n",
            ),
        )
        .unwrap();
        let entries = read_manifest(&path).unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].ends, vec![50, 80, 110]);
        assert_eq!(entries[0].domain, Domain::D1m);
        assert_eq!(entries[1].polarity, Polarity::Negative);
        assert!(entries[1].ends.is_empty());
    }

    #[test]
    fn empty_file_is_empty_list() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(read_manifest(&path).unwrap().is_empty());
    }

    #[test]
    fn non_increasing_ends_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(
            &path,
            r#"{"path":"a.wav","domain":"1m","polarity":"positive","ends":[80,50,110]}"#,
        )
        .unwrap();
        assert!(matches!(read_manifest(&path), Err(Error::Validation(_))));
    }

    #[test]
    fn missing_field_error_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mf.jsonl");
        std::fs::write(
            &path,
            concat!(
                r#"{"path":"a.wav","domain":"3m","polarity":"negative"}"#,
                "\n",
                r#"{"path":"b.wav","polarity":"negative"}"#,
                "\n",
            ),
        )
        .unwrap();
        match read_manifest(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn round_trip_preserves_entries() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.jsonl");
        let entries = vec![
            ManifestEntry {
                path: "x.wav".into(),
                domain: Domain::D3m,
                polarity: Polarity::Positive,
                ends: vec![40, 71, 99],
            },
            ManifestEntry {
                path: "y.wav".into(),
                domain: Domain::D025,
                polarity: Polarity::Negative,
                ends: vec![],
            },
        ];
        write_manifest(&path, &entries).unwrap();
        let back = read_manifest(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].ends, entries[0].ends);
        assert_eq!(back[1].domain, Domain::D025);
    }

    #[test]
    fn domain_labels_round_trip_through_json() {
        for d in Domain::ALL {
            let json = serde_json::to_string(&d).unwrap();
            assert_eq!(json, format!("\"{}\"", d.label()));
            let back: Domain = serde_json::from_str(&json).unwrap();
            assert_eq!(back, d);
        }
    }
}
