//! The App Evidence Database: which files an app may write, and what kinds
//! of evidence each may hold.
//!
//! On disk an AED is UTF-8 text with LF line endings:
//!
//! ```text
//! aed-version 1; catalog 1; config-hash 3f2a...
//! com.evihunter.GPS\t/data/data/com.evihunter.GPS/files/locSink\tLocation,Time\tordinary\t-
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Read, Write};

use crate::ir::MethodRef;
use crate::taint::{render_evset, EvSet, EvidenceType, PathExpr, PathSet};

pub const AED_FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum AedError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("unsupported aed-version {0}")]
    UnsupportedVersion(String),
    #[error("cannot merge databases built with catalog `{0}` and `{1}`")]
    CatalogMismatch(String, String),
    #[error("cannot merge databases built with config hash {0} and {1}")]
    ConfigMismatch(String, String),
    #[error("nothing to merge")]
    NoInputs,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Storage convention of a file. Ordered so that the more specific kind wins
/// when sources disagree.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FileKind {
    #[default]
    Ordinary,
    SharedPrefs,
    Database,
}

impl FileKind {
    pub fn name(self) -> &'static str {
        match self {
            FileKind::Ordinary => "ordinary",
            FileKind::SharedPrefs => "shared_prefs",
            FileKind::Database => "database",
        }
    }

    pub fn parse(s: &str) -> Option<FileKind> {
        match s {
            "ordinary" => Some(FileKind::Ordinary),
            "shared_prefs" => Some(FileKind::SharedPrefs),
            "database" => Some(FileKind::Database),
            _ => None,
        }
    }

    /// Kind implied by Android's directory conventions.
    pub fn from_path(path: &str) -> FileKind {
        if path.contains("/databases/") {
            FileKind::Database
        } else if path.contains("/shared_prefs/") {
            FileKind::SharedPrefs
        } else {
            FileKind::Ordinary
        }
    }
}

impl fmt::Display for FileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Raw analysis output for one sink call site.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SinkRecord {
    pub sink: MethodRef,
    /// Call path and statement that reached the sink.
    pub location: String,
    /// Never empty: an unresolvable destination is `[<unresolved>]`.
    pub paths: PathSet,
    pub evset: EvSet,
    pub kind_hint: Option<FileKind>,
    pub truncated: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AedRecord {
    pub package: String,
    pub path_pattern: String,
    pub evidence: EvSet,
    pub kind: FileKind,
    pub dynamic: bool,
    pub truncated: bool,
}

impl AedRecord {
    pub fn new(package: &str, path_pattern: &str, evidence: EvSet, kind: FileKind, truncated: bool) -> AedRecord {
        let p = PathExpr::parse(path_pattern);
        AedRecord {
            package: package.to_string(),
            path_pattern: path_pattern.to_string(),
            evidence,
            kind,
            dynamic: p.is_dynamic(),
            truncated: truncated || p.is_imprecise(),
        }
    }

    pub fn pattern(&self) -> PathExpr {
        PathExpr::parse(&self.path_pattern)
    }

    pub fn flags(&self) -> String {
        match (self.dynamic, self.truncated) {
            (false, false) => "-".into(),
            (true, false) => "dynamic".into(),
            (false, true) => "truncated".into(),
            (true, true) => "dynamic,truncated".into(),
        }
    }

    fn absorb(&mut self, other: &AedRecord) {
        self.evidence.extend(other.evidence.iter().cloned());
        self.kind = self.kind.max(other.kind);
        self.truncated |= other.truncated;
    }

    fn key(&self) -> (String, String) {
        (self.package.clone(), self.path_pattern.clone())
    }
}

impl fmt::Display for AedRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{}\t{}\t{}",
            self.package,
            self.path_pattern,
            render_evset(&self.evidence),
            self.kind,
            self.flags()
        )
    }
}

/// Collapses runs of `/` the way the file system resolves them.
fn normalize_separators(path: &str) -> String {
    let mut out = String::with_capacity(path.len());
    for c in path.chars() {
        if c == '/' && out.ends_with('/') {
            continue;
        }
        out.push(c);
    }
    out
}

/// Turns sink records into AED rows: renders every path with the package
/// name, merges rows that share a pattern, and sorts.
pub fn build_records(sink_records: &[SinkRecord], package: &str) -> Vec<AedRecord> {
    let mut rows: BTreeMap<(String, String), AedRecord> = BTreeMap::new();
    for r in sink_records {
        for p in r.paths.iter() {
            let pattern = normalize_separators(&p.render(package));
            let derived = FileKind::from_path(&pattern);
            let kind = r.kind_hint.map_or(derived, |h| h.max(derived));
            let row = AedRecord::new(package, &pattern, r.evset.clone(), kind, r.truncated);
            rows.entry(row.key())
                .and_modify(|e| e.absorb(&row))
                .or_insert(row);
        }
    }
    rows.into_values().collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AedDatabase {
    pub catalog_version: String,
    pub config_hash: String,
    records: Vec<AedRecord>,
}

impl AedDatabase {
    pub fn new(catalog_version: &str, config_hash: &str) -> AedDatabase {
        AedDatabase {
            catalog_version: catalog_version.to_string(),
            config_hash: config_hash.to_string(),
            records: Vec::new(),
        }
    }

    pub fn from_records<I>(catalog_version: &str, config_hash: &str, records: I) -> AedDatabase
    where
        I: IntoIterator<Item = AedRecord>,
    {
        let mut db = AedDatabase::new(catalog_version, config_hash);
        db.extend(records);
        db
    }

    /// Adds records, merging evidence for rows that already exist.
    pub fn extend<I: IntoIterator<Item = AedRecord>>(&mut self, records: I) {
        let mut rows: BTreeMap<(String, String), AedRecord> =
            self.records.drain(..).map(|r| (r.key(), r)).collect();
        for r in records {
            rows.entry(r.key())
                .and_modify(|e| e.absorb(&r))
                .or_insert(r);
        }
        self.records = rows.into_values().collect();
    }

    pub fn records(&self) -> &[AedRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn header(&self) -> String {
        format!(
            "aed-version {AED_FORMAT_VERSION}; catalog {}; config-hash {}",
            self.catalog_version, self.config_hash
        )
    }

    pub fn to_text(&self) -> String {
        let mut out = self.header();
        out.push('\n');
        for r in &self.records {
            out.push_str(&r.to_string());
            out.push('\n');
        }
        out
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<usize, AedError> {
        let text = self.to_text();
        w.write_all(text.as_bytes())?;
        Ok(text.len())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<AedDatabase, AedError> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        AedDatabase::parse(&text)
    }

    pub fn parse(text: &str) -> Result<AedDatabase, AedError> {
        let total = text.split('\n').count();
        let mut lines = text.split('\n').enumerate();
        let malformed = |line: usize, message: String| AedError::Malformed { line, message };
        let header = lines.next().map(|(_, l)| l).unwrap_or("");
        let (catalog, hash) = parse_header(header)?;
        let mut db = AedDatabase::new(&catalog, &hash);
        let mut seen = BTreeMap::new();
        let mut records = Vec::new();
        for (idx, line) in lines {
            let line_no = idx + 1;
            if line.is_empty() && idx + 1 == total {
                break;
            }
            let record = parse_record(line).map_err(|m| malformed(line_no, m))?;
            if seen.insert(record.key(), line_no).is_some() {
                return Err(malformed(line_no, "duplicate package/path row".into()));
            }
            records.push(record);
        }
        db.extend(records);
        Ok(db)
    }
}

fn parse_header(line: &str) -> Result<(String, String), AedError> {
    let bad = || AedError::Malformed {
        line: 1,
        message: format!("expected `aed-version 1; catalog <version>; config-hash <hex>`, found `{line}`"),
    };
    let parts: Vec<&str> = line.split("; ").collect();
    let [v, c, h] = parts.as_slice() else {
        return Err(bad());
    };
    let version = v.strip_prefix("aed-version ").ok_or_else(bad)?;
    if version != AED_FORMAT_VERSION.to_string() {
        return Err(AedError::UnsupportedVersion(version.to_string()));
    }
    let catalog = c.strip_prefix("catalog ").ok_or_else(bad)?;
    let hash = h.strip_prefix("config-hash ").ok_or_else(bad)?;
    if catalog.is_empty() || catalog.contains(char::is_whitespace) {
        return Err(bad());
    }
    if !hash.chars().all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase()) {
        return Err(bad());
    }
    Ok((catalog.to_string(), hash.to_string()))
}

fn parse_record(line: &str) -> Result<AedRecord, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    let [package, pattern, evidence, kind, flags] = fields.as_slice() else {
        return Err(format!("expected 5 tab-separated fields, found {}", fields.len()));
    };
    if package.is_empty() || package.contains('/') {
        return Err(format!("invalid package `{package}`"));
    }
    if pattern.is_empty() {
        return Err("empty path pattern".into());
    }
    let mut evset = EvSet::new();
    if *evidence != "-" {
        for e in evidence.split(',') {
            evset.insert(EvidenceType::parse(e).ok_or_else(|| format!("invalid evidence `{e}`"))?);
        }
    }
    let kind = FileKind::parse(kind).ok_or_else(|| format!("invalid kind `{kind}`"))?;
    let (mut dynamic, mut truncated) = (false, false);
    if *flags != "-" {
        for f in flags.split(',') {
            match f {
                "dynamic" => dynamic = true,
                "truncated" => truncated = true,
                _ => return Err(format!("invalid flag `{f}`")),
            }
        }
    }
    let record = AedRecord::new(package, pattern, evset, kind, truncated);
    if record.dynamic != dynamic {
        return Err(format!("dynamic flag disagrees with pattern `{pattern}`"));
    }
    if record.truncated != truncated {
        return Err(format!("pattern `{pattern}` has an imprecise part but no truncated flag"));
    }
    Ok(record)
}

/// Union of databases with per-row evidence merge.
pub fn merge_aed(dbs: &[AedDatabase]) -> Result<AedDatabase, AedError> {
    let first = dbs.first().ok_or(AedError::NoInputs)?;
    let mut out = AedDatabase::new(&first.catalog_version, &first.config_hash);
    for db in dbs {
        if db.catalog_version != out.catalog_version {
            return Err(AedError::CatalogMismatch(
                out.catalog_version.clone(),
                db.catalog_version.clone(),
            ));
        }
        if db.config_hash != out.config_hash {
            return Err(AedError::ConfigMismatch(
                out.config_hash.clone(),
                db.config_hash.clone(),
            ));
        }
        out.extend(db.records.iter().cloned());
    }
    Ok(out)
}
