//! Labeled recording catalogues and the rules that build them.
//!
//! A rules file maps glob patterns (relative to the data root, `/`-separated)
//! to labels and provenance:
//!
//! ```toml
//! [[rule]]
//! pattern = "michigan/murmur/*.wav"
//! label = "murmur"
//! source = "D1"
//!
//! [[rule]]
//! pattern = "physionet/training-*/*.wav"
//! source = "D3"
//! reference = "REFERENCE.csv"   # per-directory `stem,code` file; -1 = normal
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use globset::{Glob, GlobMatcher};
use serde::Deserialize;

use super::recording::{Label, Source};
use crate::{Error, Result};

const CSV_HEADER: [&str; 5] = ["path", "label", "subject", "source", "noisy"];

/// How a rule derives the subject id of a recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubjectFrom {
    /// File stem: every recording is its own subject.
    #[default]
    Stem,
    /// Name of the containing directory.
    Parent,
}

/// What to do with recordings a reference file marks abnormal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AbnormalPolicy {
    /// Drop them (PhysioNet abnormal recordings mix murmur and CAD cases).
    #[default]
    Skip,
    Murmur,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    pub pattern: String,
    pub source: Source,
    #[serde(default)]
    pub label: Option<Label>,
    /// Reference CSV (`stem,code`), resolved relative to each file's directory.
    #[serde(default)]
    pub reference: Option<String>,
    #[serde(default)]
    pub abnormal: AbnormalPolicy,
    #[serde(default)]
    pub noisy: bool,
    #[serde(default)]
    pub subject: SubjectFrom,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Rules {
    #[serde(rename = "rule", default)]
    pub rules: Vec<Rule>,
}

impl Rules {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let rules: Rules =
            toml::from_str(s).map_err(|e| Error::Config(format!("rules file: {e}")))?;
        for r in &rules.rules {
            if r.label.is_none() && r.reference.is_none() {
                return Err(Error::Config(format!(
                    "rule {:?} needs either `label` or `reference`",
                    r.pattern
                )));
            }
            Glob::new(&r.pattern)
                .map_err(|e| Error::Config(format!("bad pattern {:?}: {e}", r.pattern)))?;
        }
        Ok(rules)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: Label,
    pub subject: String,
    pub source: Source,
    pub noisy: bool,
}

impl ManifestEntry {
    /// Recording id: the file stem.
    pub fn recording_id(&self) -> String {
        self.path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    pub counts: BTreeMap<Label, usize>,
}

impl Manifest {
    /// Validates entries, sorts them by path and tallies class counts.
    pub fn new(mut entries: Vec<ManifestEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyManifest);
        }
        entries.sort_by(|a, b| a.path.cmp(&b.path));
        for pair in entries.windows(2) {
            if pair[0].path == pair[1].path {
                return Err(Error::Validation(format!(
                    "duplicate path {}",
                    pair[0].path.display()
                )));
            }
        }
        let mut ids: HashMap<String, &Path> = HashMap::new();
        for e in &entries {
            if e.subject.is_empty() {
                return Err(Error::Validation(format!(
                    "{} has an empty subject",
                    e.path.display()
                )));
            }
            if let Some(prev) = ids.insert(e.recording_id(), &e.path) {
                return Err(Error::Validation(format!(
                    "recording id {:?} is shared by {} and {}",
                    e.recording_id(),
                    prev.display(),
                    e.path.display()
                )));
            }
        }
        let mut counts = BTreeMap::new();
        for l in Label::ALL {
            counts.insert(l, entries.iter().filter(|e| e.label == l).count());
        }
        Ok(Manifest { entries, counts })
    }

    pub fn count(&self, label: Label) -> usize {
        self.counts.get(&label).copied().unwrap_or(0)
    }

    pub fn to_csv_string(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(CSV_HEADER).expect("in-memory write");
        for e in &self.entries {
            w.write_record([
                e.path.to_string_lossy().as_ref(),
                e.label.as_str(),
                e.subject.as_str(),
                e.source.as_str(),
                if e.noisy { "1" } else { "0" },
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let header = r
            .headers()
            .map_err(|e| Error::Validation(format!("manifest header: {e}")))?;
        if header.iter().collect::<Vec<_>>() != CSV_HEADER {
            return Err(Error::Validation(format!(
                "manifest header must be {}",
                CSV_HEADER.join(",")
            )));
        }
        let mut entries = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| Error::Validation(format!("manifest row {}: {e}", i + 1)))?;
            let noisy = match &rec[4] {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::Validation(format!(
                        "manifest row {}: noisy must be 0 or 1, got {other:?}",
                        i + 1
                    )))
                }
            };
            entries.push(ManifestEntry {
                path: PathBuf::from(&rec[0]),
                label: rec[1].parse()?,
                subject: rec[2].to_string(),
                source: rec[3].parse()?,
                noisy,
            });
        }
        Manifest::new(entries)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text)
    }
}

/// Lazily loaded `stem -> code` reference tables, keyed by CSV path.
#[derive(Default)]
struct ReferenceCache(HashMap<PathBuf, HashMap<String, i64>>);

impl ReferenceCache {
    fn lookup(&mut self, csv_path: &Path, stem: &str) -> Result<Option<i64>> {
        if !self.0.contains_key(csv_path) {
            let text = fs::read_to_string(csv_path).map_err(|e| Error::io(csv_path, e))?;
            let mut table = HashMap::new();
            for (n, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() {
                    continue;
                }
                let mut parts = line.split(',');
                let (Some(k), Some(v)) = (parts.next(), parts.next()) else {
                    return Err(Error::Validation(format!(
                        "{}:{}: expected `stem,code`",
                        csv_path.display(),
                        n + 1
                    )));
                };
                let code = v.trim().parse::<i64>().map_err(|_| {
                    Error::Validation(format!("{}:{}: bad code {v:?}", csv_path.display(), n + 1))
                })?;
                table.insert(k.trim().to_string(), code);
            }
            self.0.insert(csv_path.to_path_buf(), table);
        }
        Ok(self.0[csv_path].get(stem).copied())
    }
}

fn resolve(
    rule: &Rule,
    root: &Path,
    rel: &Path,
    refs: &mut ReferenceCache,
) -> Result<Option<ManifestEntry>> {
    let path = root.join(rel);
    let stem = rel
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let label = match (&rule.reference, rule.label) {
        (Some(reference), fallback) => {
            let dir = path.parent().unwrap_or(root);
            match refs.lookup(&dir.join(reference), &stem)? {
                Some(-1) => Label::Normal,
                Some(_) => match rule.abnormal {
                    AbnormalPolicy::Skip => return Ok(None),
                    AbnormalPolicy::Murmur => Label::Murmur,
                },
                None => match fallback {
                    Some(l) => l,
                    None => {
                        log::warn!("{} is missing from its reference file; skipped", rel.display());
                        return Ok(None);
                    }
                },
            }
        }
        (None, Some(l)) => l,
        (None, None) => unreachable!("validated when the rules were parsed"),
    };
    let subject = match rule.subject {
        SubjectFrom::Stem => stem,
        SubjectFrom::Parent => rel
            .parent()
            .and_then(|p| p.file_name())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or(stem),
    };
    Ok(Some(ManifestEntry {
        path,
        label,
        subject,
        source: rule.source,
        noisy: rule.noisy,
    }))
}

/// Walks `root` and labels every `.wav` file matched by `rules`.
///
/// Entries come out sorted by path. A file matched by several rules that
/// disagree on its attributes is a validation error.
pub fn build_manifest(root: impl AsRef<Path>, rules: &Rules) -> Result<Manifest> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "data root is not a directory"),
        ));
    }
    let matchers: Vec<(GlobMatcher, &Rule)> = rules
        .rules
        .iter()
        .map(|r| {
            Glob::new(&r.pattern)
                .map(|g| (g.compile_matcher(), r))
                .map_err(|e| Error::Config(format!("bad pattern {:?}: {e}", r.pattern)))
        })
        .collect::<Result<_>>()?;

    let mut refs = ReferenceCache::default();
    let mut entries = Vec::new();
    for dent in walkdir::WalkDir::new(root).sort_by_file_name() {
        let dent = dent.map_err(|e| {
            let p = e.path().unwrap_or(root).to_path_buf();
            Error::io(p, e.into())
        })?;
        if !dent.file_type().is_file() {
            continue;
        }
        let is_wav = dent
            .path()
            .extension()
            .is_some_and(|x| x.eq_ignore_ascii_case("wav"));
        if !is_wav {
            continue;
        }
        let rel = dent.path().strip_prefix(root).expect("walk stays under root");
        let rel_str = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");

        let mut chosen: Option<ManifestEntry> = None;
        let mut matched = false;
        for (m, rule) in &matchers {
            if !m.is_match(&rel_str) {
                continue;
            }
            let resolved = resolve(rule, root, rel, &mut refs)?;
            if matched && resolved != chosen {
                return Err(Error::Validation(format!(
                    "conflicting rules for {rel_str}"
                )));
            }
            matched = true;
            chosen = resolved;
        }
        entries.extend(chosen);
    }
    Manifest::new(entries)
}
