//! Cohort manifest: one subject per line,
//! `subject_id,twin_id,train_1;train_2,test,ear_train,ear_test`.
//! Relative paths resolve against the manifest's directory.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("subject {subject} names twin {twin}, which is not in the manifest")]
    DanglingTwin { subject: String, twin: String },
    #[error("subject {subject} names twin {twin}, but {twin} names {back}")]
    AsymmetricTwin {
        subject: String,
        twin: String,
        back: String,
    },
    #[error("duplicate subject id {0}")]
    DuplicateSubject(String),
    #[error("subject {subject}: file {} does not exist", path.display())]
    MissingFile { subject: String, path: PathBuf },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub twin_id: String,
    pub speech_train: Vec<PathBuf>,
    pub speech_test: Vec<PathBuf>,
    /// Left ear.
    pub ear_train: PathBuf,
    /// Right ear.
    pub ear_test: PathBuf,
}

impl SubjectRecord {
    fn paths(&self) -> impl Iterator<Item = &PathBuf> {
        self.speech_train
            .iter()
            .chain(&self.speech_test)
            .chain([&self.ear_train, &self.ear_test])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub cohort_name: String,
    pub subjects: Vec<SubjectRecord>,
}

impl Manifest {
    pub fn subject_ids(&self) -> Vec<String> {
        self.subjects.iter().map(|s| s.subject_id.clone()).collect()
    }

    /// subject id -> co-twin id
    pub fn twin_map(&self) -> HashMap<String, String> {
        self.subjects
            .iter()
            .map(|s| (s.subject_id.clone(), s.twin_id.clone()))
            .collect()
    }

    /// Checks id uniqueness and twin symmetry.
    pub fn validate(&self) -> Result<(), ManifestError> {
        let mut by_id: HashMap<&str, &SubjectRecord> = HashMap::new();
        for s in &self.subjects {
            if by_id.insert(&s.subject_id, s).is_some() {
                return Err(ManifestError::DuplicateSubject(s.subject_id.clone()));
            }
        }
        for s in &self.subjects {
            let twin =
                by_id
                    .get(s.twin_id.as_str())
                    .ok_or_else(|| ManifestError::DanglingTwin {
                        subject: s.subject_id.clone(),
                        twin: s.twin_id.clone(),
                    })?;
            if twin.twin_id != s.subject_id {
                return Err(ManifestError::AsymmetricTwin {
                    subject: s.subject_id.clone(),
                    twin: s.twin_id.clone(),
                    back: twin.twin_id.clone(),
                });
            }
        }
        Ok(())
    }

    /// Serializes with paths written relative to `base` where possible.
    pub fn to_text(&self, base: &Path) -> String {
        let rel = |p: &PathBuf| {
            p.strip_prefix(base)
                .unwrap_or(p)
                .to_string_lossy()
                .into_owned()
        };
        let join = |ps: &[PathBuf]| ps.iter().map(rel).collect::<Vec<_>>().join(";");
        let mut out = format!("# cohort: {}\n", self.cohort_name);
        for s in &self.subjects {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                s.subject_id,
                s.twin_id,
                join(&s.speech_train),
                join(&s.speech_test),
                rel(&s.ear_train),
                rel(&s.ear_test)
            );
        }
        out
    }
}

fn parse_line(line: &str, lineno: usize, base: &Path) -> Result<SubjectRecord, ManifestError> {
    let err = |message: String| ManifestError::ParseError {
        line: lineno,
        message,
    };
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 6 {
        return Err(err(format!(
            "expected 6 comma-separated fields, found {}",
            fields.len()
        )));
    }
    if let Some(i) = fields.iter().position(|f| f.is_empty()) {
        return Err(err(format!("field {} is empty", i + 1)));
    }
    let path_list = |f: &str, what: &str| -> Result<Vec<PathBuf>, ManifestError> {
        f.split(';')
            .map(str::trim)
            .map(|p| {
                if p.is_empty() {
                    Err(err(format!("empty path in {what} list")))
                } else {
                    Ok(base.join(p))
                }
            })
            .collect()
    };
    let (subject_id, twin_id) = (fields[0].to_string(), fields[1].to_string());
    if subject_id == twin_id {
        return Err(err(format!(
            "subject {subject_id} is listed as its own twin"
        )));
    }
    Ok(SubjectRecord {
        subject_id,
        twin_id,
        speech_train: path_list(fields[2], "speech_train")?,
        speech_test: path_list(fields[3], "speech_test")?,
        ear_train: base.join(fields[4]),
        ear_test: base.join(fields[5]),
    })
}

/// Parses manifest text without touching the filesystem.
pub fn parse_manifest_str(
    text: &str,
    base: &Path,
    cohort_name: &str,
) -> Result<Manifest, ManifestError> {
    let mut subjects = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        subjects.push(parse_line(line, i + 1, base)?);
    }
    let manifest = Manifest {
        cohort_name: cohort_name.to_string(),
        subjects,
    };
    manifest.validate()?;
    Ok(manifest)
}

/// Parses and validates a manifest file, including existence of every referenced file.
pub fn parse_manifest(path: impl AsRef<Path>) -> Result<Manifest, ManifestError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new(""));
    let name = text
        .lines()
        .find_map(|l| l.trim().strip_prefix("# cohort:"))
        .map(|s| s.trim().to_string())
        .or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .unwrap_or_default();
    let manifest = parse_manifest_str(&text, base, &name)?;
    for s in &manifest.subjects {
        if let Some(p) = s.paths().find(|p| !p.is_file()) {
            return Err(ManifestError::MissingFile {
                subject: s.subject_id.clone(),
                path: p.clone(),
            });
        }
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Manifest, ManifestError> {
        parse_manifest_str(text, Path::new("/data"), "t")
    }

    #[test]
    fn symmetric_pair() {
        let m = parse("# header\nA,B,a1.wav;a2.wav,a3.wav,al.ppm,ar.ppm\n\nB,A,b1.wav;b2.wav,b3.wav,bl.ppm,br.ppm\n").unwrap();
        assert_eq!(m.subjects.len(), 2);
        assert_eq!(
            m.subjects[0].speech_train,
            vec![PathBuf::from("/data/a1.wav"), PathBuf::from("/data/a2.wav")]
        );
        assert_eq!(m.twin_map()["B"], "A");
    }

    #[test]
    fn dangling_twin() {
        let e = parse("A,B,a1;a2,a3,al,ar\n").unwrap_err();
        assert!(matches!(e, ManifestError::DanglingTwin { .. }));
    }

    #[test]
    fn duplicate_subject() {
        let e = parse("A,B,1;2,3,4,5\nA,B,1;2,3,4,5\nB,A,1;2,3,4,5\n").unwrap_err();
        assert!(matches!(e, ManifestError::DuplicateSubject(id) if id == "A"));
    }

    #[test]
    fn asymmetric_twin() {
        let e = parse("A,B,1;2,3,4,5\nB,C,1;2,3,4,5\nC,B,1;2,3,4,5\n").unwrap_err();
        assert!(matches!(e, ManifestError::AsymmetricTwin { .. }));
    }

    #[test]
    fn parse_error_reports_line() {
        let e = parse("# c\nA,B,1;2,3,4\n").unwrap_err();
        assert!(matches!(e, ManifestError::ParseError { line: 2, .. }));
        let e = parse("A,A,1;2,3,4,5\n").unwrap_err();
        assert!(matches!(e, ManifestError::ParseError { line: 1, .. }));
        let e = parse("A,B,1;;2,3,4,5\n").unwrap_err();
        assert!(matches!(e, ManifestError::ParseError { line: 1, .. }));
    }

    #[test]
    fn missing_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        for f in ["a1", "a2", "a3", "al", "ar", "b1", "b2", "b3", "bl"] {
            fs::write(dir.path().join(f), b"x").unwrap();
        }
        let path = dir.path().join("m.csv");
        fs::write(&path, "A,B,a1;a2,a3,al,ar\nB,A,b1;b2,b3,bl,br\n").unwrap();
        match parse_manifest(&path).unwrap_err() {
            ManifestError::MissingFile { subject, path } => {
                assert_eq!(subject, "B");
                assert!(path.ends_with("br"));
            }
            e => panic!("unexpected {e}"),
        }
        fs::write(dir.path().join("br"), b"x").unwrap();
        let m = parse_manifest(&path).unwrap();
        assert_eq!(m.cohort_name, "m");
        let again = parse_manifest_str(&m.to_text(dir.path()), dir.path(), "m").unwrap();
        assert_eq!(again, m);
    }
}
