//! Line-delimited JSON dataset manifests.
//!
//! Each non-blank line is one object:
//!
//! ```text
//! {"path":"img/0001.ppm","label":"cancerous","hardware":"with"}
//! ```
//!
//! `hardware` is `"with"`, `"without"` or `null`/absent. Paths are relative
//! to the directory holding the manifest and may not escape it.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::imaging;
use crate::network::{hex_digest, ClassLabel, NUM_CLASSES};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest line {line}: malformed entry: {message}")]
    Malformed { line: usize, message: String },
    #[error("manifest line {line}: unknown label {label:?}")]
    UnknownLabel { line: usize, label: String },
    #[error("manifest line {line}: unknown hardware tag {tag:?}")]
    UnknownHardware { line: usize, tag: String },
    #[error("manifest line {line}: duplicate path {path:?}")]
    DuplicatePath { line: usize, path: String },
    #[error("manifest line {line}: path {path:?} must be relative and stay inside the manifest root")]
    UnsafePath { line: usize, path: String },
}

pub type Result<T> = std::result::Result<T, DatasetError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HardwareTag {
    #[serde(rename = "with")]
    WithHardware,
    #[serde(rename = "without")]
    WithoutHardware,
}

impl HardwareTag {
    pub fn name(self) -> &'static str {
        match self {
            HardwareTag::WithHardware => "with",
            HardwareTag::WithoutHardware => "without",
        }
    }
}

impl fmt::Display for HardwareTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub label: ClassLabel,
    pub hardware: Option<HardwareTag>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    root: PathBuf,
    entries: Vec<ManifestEntry>,
    digest: String,
}

#[derive(Deserialize)]
struct RawEntry {
    path: String,
    label: String,
    #[serde(default)]
    hardware: Option<String>,
}

fn is_safe_relative(path: &str) -> bool {
    let p = Path::new(path);
    !path.is_empty()
        && p.components()
            .all(|c| matches!(c, Component::Normal(_) | Component::CurDir))
}

fn entries_digest(entries: &[ManifestEntry]) -> String {
    let mut h = Sha256::new();
    for e in entries {
        h.update(e.path.as_bytes());
        h.update(b"\t");
        h.update(e.label.name().as_bytes());
        h.update(b"\t");
        h.update(e.hardware.map_or("-", HardwareTag::name).as_bytes());
        h.update(b"\n");
    }
    hex_digest(h)
}

impl DatasetManifest {
    /// Builds a manifest from entries, enforcing unique safe paths. Line
    /// numbers in errors are 1-based entry positions.
    pub fn new(root: impl Into<PathBuf>, entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (i, e) in entries.iter().enumerate() {
            if !is_safe_relative(&e.path) {
                return Err(DatasetError::UnsafePath {
                    line: i + 1,
                    path: e.path.clone(),
                });
            }
            if !seen.insert(e.path.as_str()) {
                return Err(DatasetError::DuplicatePath {
                    line: i + 1,
                    path: e.path.clone(),
                });
            }
        }
        let digest = entries_digest(&entries);
        Ok(Self {
            root: root.into(),
            entries,
            digest,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// SHA-256 over the ordered `(path, label, hardware)` list; independent
    /// of the root directory.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.path)
    }

    /// A manifest with the same root holding only entries accepted by `keep`.
    pub fn filtered(&self, mut keep: impl FnMut(&ManifestEntry) -> bool) -> Self {
        let entries: Vec<_> = self.entries.iter().filter(|e| keep(e)).cloned().collect();
        let digest = entries_digest(&entries);
        Self {
            root: self.root.clone(),
            entries,
            digest,
        }
    }

    /// First `n` entries.
    pub fn truncated(&self, n: usize) -> Self {
        let mut i = 0;
        self.filtered(|_| {
            i += 1;
            i <= n
        })
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for e in &self.entries {
            counts[e.label.index()] += 1;
        }
        counts
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("entries serialize"));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let io = |source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut f = fs::File::create(path).map_err(io)?;
        f.write_all(self.to_jsonl().as_bytes()).map_err(io)?;
        Ok(())
    }
}

pub fn parse_manifest(text: &str, root: impl Into<PathBuf>) -> Result<DatasetManifest> {
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawEntry = serde_json::from_str(line).map_err(|e| DatasetError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        let label = raw
            .label
            .parse::<ClassLabel>()
            .map_err(|_| DatasetError::UnknownLabel {
                line: line_no,
                label: raw.label.clone(),
            })?;
        let hardware = match raw.hardware.as_deref() {
            None => None,
            Some("with") => Some(HardwareTag::WithHardware),
            Some("without") => Some(HardwareTag::WithoutHardware),
            Some(other) => {
                return Err(DatasetError::UnknownHardware {
                    line: line_no,
                    tag: other.to_string(),
                })
            }
        };
        if !is_safe_relative(&raw.path) {
            return Err(DatasetError::UnsafePath {
                line: line_no,
                path: raw.path,
            });
        }
        if !seen.insert(raw.path.clone()) {
            return Err(DatasetError::DuplicatePath {
                line: line_no,
                path: raw.path,
            });
        }
        entries.push(ManifestEntry {
            path: raw.path,
            label,
            hardware,
        });
    }
    let digest = entries_digest(&entries);
    Ok(DatasetManifest {
        root: root.into(),
        entries,
        digest,
    })
}

/// Reads a manifest file; entry paths resolve against its parent directory.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let io = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::open(path).map_err(io)?;
    let mut text = String::new();
    for line in BufReader::new(file).lines() {
        text.push_str(&line.map_err(io)?);
        text.push('\n');
    }
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_manifest(&text, root)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HardwareCounts {
    pub with: usize,
    pub without: usize,
    pub untagged: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub total: usize,
    pub class_counts: [usize; NUM_CLASSES],
    pub hardware: HardwareCounts,
    pub problems: Vec<Problem>,
}

impl ValidationReport {
    /// Images of the oral cavity (cancerous plus non-cancerous).
    pub fn oral_total(&self) -> usize {
        self.class_counts[ClassLabel::Cancerous.index()] + self.class_counts[ClassLabel::NonCancerous.index()]
    }

    pub fn negative_total(&self) -> usize {
        self.class_counts[ClassLabel::Negative.index()]
    }

    pub fn is_clean(&self) -> bool {
        self.problems.is_empty()
    }
}

/// Checks that every entry exists and decodes; never fails, problems are
/// collected in the report.
pub fn validate(manifest: &DatasetManifest) -> ValidationReport {
    let mut hardware = HardwareCounts::default();
    let mut problems = Vec::new();
    for e in &manifest.entries {
        match e.hardware {
            Some(HardwareTag::WithHardware) => hardware.with += 1,
            Some(HardwareTag::WithoutHardware) => hardware.without += 1,
            None => hardware.untagged += 1,
        }
        let full = manifest.resolve(e);
        let message = match fs::read(&full) {
            Err(err) => Some(format!("cannot read: {err}")),
            Ok(bytes) => imaging::decode(&bytes).err().map(|err| format!("cannot decode: {err}")),
        };
        if let Some(message) = message {
            problems.push(Problem {
                path: e.path.clone(),
                message,
            });
        }
    }
    ValidationReport {
        total: manifest.len(),
        class_counts: manifest.class_counts(),
        hardware,
        problems,
    }
}
