//! Matching device file listings against AED path patterns.
//!
//! Patterns are split on `/` and matched segment by segment. Literal text
//! matches itself; a placeholder matches by its token class and never
//! crosses a separator.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use crate::aed::{AedDatabase, AedRecord};
use crate::taint::{EvSet, Placeholder};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MatchError {
    #[error("pattern {pattern:?}: unknown placeholder {token}")]
    UnknownPlaceholder { pattern: String, token: String },
    #[error("listing line {line}: {path:?} is not an absolute path")]
    NotAbsolute { line: usize, path: String },
    #[error("bad root mapping {0:?}: expected FROM=TO with absolute paths")]
    BadMap(String),
    #[error("{0}")]
    Io(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MatchMode {
    /// Pattern text, tokens included, equals the device path.
    Exact,
    /// Placeholders match their token class within one segment.
    Pattern,
    /// Any segment holding a placeholder matches any one segment.
    Partial,
}

impl MatchMode {
    pub const ALL: [MatchMode; 3] = [MatchMode::Exact, MatchMode::Pattern, MatchMode::Partial];

    pub fn name(self) -> &'static str {
        match self {
            MatchMode::Exact => "exact",
            MatchMode::Pattern => "pattern",
            MatchMode::Partial => "partial",
        }
    }

    pub fn parse(s: &str) -> Option<MatchMode> {
        MatchMode::ALL.into_iter().find(|m| m.name() == s)
    }
}

impl fmt::Display for MatchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `--map FROM=TO`: paths under `TO` are compared as if under `FROM`
/// (e.g. `/data/data=/data/user/0`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RootMap {
    pub from: String,
    pub to: String,
}

impl RootMap {
    pub fn parse(spec: &str) -> Result<RootMap, MatchError> {
        let (a, b) = spec.split_once('=').ok_or_else(|| MatchError::BadMap(spec.into()))?;
        let (a, b) = (a.trim_end_matches('/'), b.trim_end_matches('/'));
        if !a.starts_with('/') || !b.starts_with('/') {
            return Err(MatchError::BadMap(spec.into()));
        }
        Ok(RootMap {
            from: a.into(),
            to: b.into(),
        })
    }

    fn apply(&self, path: &str) -> Option<String> {
        let rest = path.strip_prefix(self.to.as_str())?;
        (rest.is_empty() || rest.starts_with('/')).then(|| format!("{}{rest}", self.from))
    }
}

fn remap(maps: &[RootMap], path: &str) -> String {
    maps.iter()
        .find_map(|m| m.apply(path))
        .unwrap_or_else(|| path.to_string())
}

#[derive(Clone, Debug)]
pub struct MatchOptions {
    /// Digit-run bounds for `<timestamp>`.
    pub timestamp_digits: (usize, usize),
    pub maps: Vec<RootMap>,
    /// Only consider packages whose `/data/data/<pkg>/` directory appears in
    /// the listing.
    pub installed_only: bool,
}

impl Default for MatchOptions {
    fn default() -> Self {
        MatchOptions {
            timestamp_digits: (8, 17),
            maps: Vec::new(),
            installed_only: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Piece {
    Lit(String),
    Ph(Placeholder),
}

#[derive(Clone, Debug)]
pub struct CompiledPattern<'r> {
    pub record: &'r AedRecord,
    pub mode: MatchMode,
    text: String,
    /// `None` marks a wildcard segment (partial mode).
    segments: Vec<Option<Vec<Piece>>>,
    digits: (usize, usize),
}

fn split_pieces(text: &str, pkg: &str) -> Result<Vec<Piece>, String> {
    let mut out: Vec<Piece> = Vec::new();
    let mut lit = String::new();
    let mut rest = text;
    while !rest.is_empty() {
        if rest.starts_with('<') {
            let end = rest.find('>').ok_or_else(|| rest.to_string())?;
            let token = &rest[..=end];
            match Placeholder::from_token(token) {
                Some(Placeholder::PackageName) => lit.push_str(pkg),
                Some(p) => {
                    if !lit.is_empty() {
                        out.push(Piece::Lit(std::mem::take(&mut lit)));
                    }
                    out.push(Piece::Ph(p));
                }
                None => return Err(token.to_string()),
            }
            rest = &rest[end + 1..];
        } else {
            let n = rest.find('<').unwrap_or(rest.len());
            lit.push_str(&rest[..n]);
            rest = &rest[n..];
        }
    }
    if !lit.is_empty() {
        out.push(Piece::Lit(lit));
    }
    Ok(out)
}

pub fn compile_pattern<'r>(record: &'r AedRecord, mode: MatchMode, opts: &MatchOptions) -> Result<CompiledPattern<'r>, MatchError> {
    let text = remap(&opts.maps, &record.path_pattern);
    let mut segments = Vec::new();
    for seg in text.split('/') {
        let pieces = split_pieces(seg, &record.package).map_err(|token| MatchError::UnknownPlaceholder {
            pattern: record.path_pattern.clone(),
            token,
        })?;
        let dynamic = pieces.iter().any(|p| matches!(p, Piece::Ph(_)));
        segments.push(if mode == MatchMode::Partial && dynamic { None } else { Some(pieces) });
    }
    let text = text.replace(Placeholder::PackageName.token(), &record.package);
    Ok(CompiledPattern {
        record,
        mode,
        text,
        segments,
        digits: opts.timestamp_digits,
    })
}

fn is_uuid(s: &[u8]) -> bool {
    s.len() == 36
        && s.iter().enumerate().all(|(i, c)| match i {
            8 | 13 | 18 | 23 => *c == b'-',
            _ => c.is_ascii_hexdigit(),
        })
}

impl CompiledPattern<'_> {
    pub fn matches(&self, device_path: &str) -> bool {
        if self.mode == MatchMode::Exact {
            return device_path == self.text;
        }
        let segs: Vec<&str> = device_path.split('/').collect();
        segs.len() == self.segments.len()
            && self.segments.iter().zip(&segs).all(|(pat, seg)| match pat {
                None => true,
                Some(pieces) => self.match_pieces(pieces, seg.as_bytes()),
            })
    }

    fn match_pieces(&self, pieces: &[Piece], s: &[u8]) -> bool {
        let Some((first, rest)) = pieces.split_first() else {
            return s.is_empty();
        };
        match first {
            Piece::Lit(l) => s.starts_with(l.as_bytes()) && self.match_pieces(rest, &s[l.len()..]),
            Piece::Ph(p) => {
                let token = p.token().as_bytes();
                if s.starts_with(token) && self.match_pieces(rest, &s[token.len()..]) {
                    return true;
                }
                match p {
                    Placeholder::Timestamp => {
                        let run = s.iter().take_while(|c| c.is_ascii_digit()).count();
                        let (lo, hi) = self.digits;
                        (lo..=hi).contains(&run) && self.match_pieces(rest, &s[run..])
                    }
                    Placeholder::Uuid => s.len() >= 36 && is_uuid(&s[..36]) && self.match_pieces(rest, &s[36..]),
                    _ => (1..=s.len()).rev().any(|n| self.match_pieces(rest, &s[n..])),
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MatchResult {
    pub device_path: String,
    pub matched: Vec<(AedRecord, MatchMode)>,
    pub evidence: EvSet,
}

impl MatchResult {
    pub fn packages(&self) -> BTreeSet<&str> {
        self.matched.iter().map(|(r, _)| r.package.as_str()).collect()
    }
}

/// Tests every listed path against every record of `db`. Results are keyed
/// by device path and sorted.
pub fn match_image(paths: &[String], db: &AedDatabase, mode: MatchMode, opts: &MatchOptions) -> Result<Vec<MatchResult>, MatchError> {
    let normalized: Vec<(String, &String)> = paths.iter().map(|p| (remap(&opts.maps, p), p)).collect();
    let installed: Option<BTreeSet<&str>> = opts.installed_only.then(|| {
        db.records()
            .iter()
            .map(|r| r.package.as_str())
            .filter(|pkg| {
                let dir = format!("/data/data/{pkg}/");
                normalized.iter().any(|(n, _)| n.starts_with(&dir))
            })
            .collect()
    });
    let mut compiled = Vec::new();
    for r in db.records() {
        if installed.as_ref().is_some_and(|set| !set.contains(r.package.as_str())) {
            continue;
        }
        compiled.push(compile_pattern(r, mode, opts)?);
    }
    let mut results: BTreeMap<&String, MatchResult> = BTreeMap::new();
    for (norm, original) in &normalized {
        for c in &compiled {
            if !c.matches(norm) {
                continue;
            }
            let entry = results.entry(original).or_insert_with(|| MatchResult {
                device_path: (*original).clone(),
                matched: Vec::new(),
                evidence: EvSet::new(),
            });
            if !entry.matched.iter().any(|(r, _)| r == c.record) {
                entry.matched.push((c.record.clone(), mode));
                entry.evidence.extend(c.record.evidence.iter().cloned());
            }
        }
    }
    Ok(results
        .into_values()
        .map(|mut r| {
            r.matched.sort_by(|a, b| (&a.0.package, &a.0.path_pattern).cmp(&(&b.0.package, &b.0.path_pattern)));
            r
        })
        .collect())
}

/// Device paths from a listing file (one absolute path per line, `#`
/// comments) or from an extracted image directory whose root stands for `/`.
pub fn ingest_listing(source: &Path) -> Result<Vec<String>, MatchError> {
    let io = |e: &dyn fmt::Display| MatchError::Io(format!("{}: {e}", source.display()));
    let mut out = BTreeSet::new();
    if source.is_dir() {
        for entry in walkdir::WalkDir::new(source).follow_links(false) {
            let entry = entry.map_err(|e| io(&e))?;
            if entry.file_type().is_dir() {
                continue;
            }
            let rel = entry.path().strip_prefix(source).map_err(|e| io(&e))?;
            let parts: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
            out.insert(format!("/{}", parts.join("/")));
        }
    } else {
        let text = std::fs::read_to_string(source).map_err(|e| io(&e))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !line.starts_with('/') {
                return Err(MatchError::NotAbsolute {
                    line: i + 1,
                    path: line.into(),
                });
            }
            out.insert(line.to_string());
        }
    }
    Ok(out.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aed::FileKind;
    use crate::taint::EvidenceType;

    fn rec(pkg: &str, pattern: &str) -> AedRecord {
        AedRecord::new(pkg, pattern, EvSet::from([EvidenceType::Time]), FileKind::Ordinary, false)
    }

    fn m(pattern: &str, path: &str, mode: MatchMode) -> bool {
        let r = rec("com.a", pattern);
        compile_pattern(&r, mode, &MatchOptions::default()).unwrap().matches(path)
    }

    #[test]
    fn timestamp_digit_run() {
        let p = "/data/data/com.a/files/evidence-<timestamp>.txt";
        assert!(m(p, "/data/data/com.a/files/evidence-1514764800000.txt", MatchMode::Pattern));
        assert!(m(p, "/data/data/com.a/files/evidence-20180101120000.txt", MatchMode::Pattern));
        assert!(!m(p, "/data/data/com.a/files/evidence-1234567.txt", MatchMode::Pattern));
        assert!(!m(p, "/data/data/com.a/files/evidence-123456789012345678.txt", MatchMode::Pattern));
        assert!(!m(p, "/data/data/com.a/files/evidence-151476480x.txt", MatchMode::Pattern));
        assert!(!m(p, "/data/data/com.a/files/evidence-1514764800000.txt", MatchMode::Exact));
    }

    #[test]
    fn uuid_class() {
        let p = "/sdcard/<UUID>.jpg";
        assert!(m(p, "/sdcard/123e4567-E89B-12d3-a456-426614174000.jpg", MatchMode::Pattern));
        assert!(!m(p, "/sdcard/not-a-uuid.jpg", MatchMode::Pattern));
        assert!(!m(p, "/sdcard/123e4567-e89b-12d3-a456-42661417400.jpg", MatchMode::Pattern));
        assert!(m(p, "/sdcard/not-a-uuid.jpg", MatchMode::Partial));
    }

    #[test]
    fn intent_stays_in_segment() {
        let p = "/data/data/com.a/files/<intent>";
        assert!(m(p, "/data/data/com.a/files/inbox", MatchMode::Pattern));
        assert!(!m(p, "/data/data/com.a/files/a/b", MatchMode::Pattern));
        assert!(!m(p, "/data/data/com.a/files/", MatchMode::Pattern));
        assert!(!m(p, "/data/data/com.a/files/a/b", MatchMode::Partial));
    }

    #[test]
    fn literal_patterns_are_string_equality() {
        let p = "/data/data/com.vijay.tamilrecipes/databases/databases/ldata.db";
        for mode in MatchMode::ALL {
            assert!(m(p, p, mode));
            assert!(!m(p, "/data/data/com.vijay.tamilrecipes/databases/ldata.db", mode));
            assert!(!m(p, &format!("{p}x"), mode));
        }
    }

    #[test]
    fn token_text_matches_in_every_mode() {
        let p = "/sdcard/log-<timestamp>.txt";
        for mode in MatchMode::ALL {
            assert!(m(p, p, mode), "{mode}");
        }
    }

    #[test]
    fn package_name_token_filled() {
        assert!(m("/data/data/<package name>/files/x", "/data/data/com.a/files/x", MatchMode::Exact));
    }

    #[test]
    fn unknown_token_rejected() {
        let r = rec("com.a", "/sdcard/<date>.txt");
        assert!(matches!(
            compile_pattern(&r, MatchMode::Pattern, &MatchOptions::default()),
            Err(MatchError::UnknownPlaceholder { token, .. }) if token == "<date>"
        ));
    }

    #[test]
    fn root_remap() {
        let db = AedDatabase::from_records("1", "h", vec![rec("com.a", "/data/data/com.a/files/x")]);
        let opts = MatchOptions {
            maps: vec![RootMap::parse("/data/data=/data/user/0").unwrap()],
            ..MatchOptions::default()
        };
        let paths = vec!["/data/user/0/com.a/files/x".to_string()];
        let res = match_image(&paths, &db, MatchMode::Exact, &opts).unwrap();
        assert_eq!(res.len(), 1);
        assert_eq!(res[0].device_path, "/data/user/0/com.a/files/x");
        assert!(match_image(&paths, &db, MatchMode::Exact, &MatchOptions::default()).unwrap().is_empty());
        assert!(RootMap::parse("data=/x").is_err());
    }

    #[test]
    fn results_keyed_by_path() {
        let db = AedDatabase::from_records(
            "1",
            "h",
            vec![rec("com.a", "/sdcard/<intent>.txt"), rec("com.b", "/sdcard/note.txt")],
        );
        let paths = vec!["/sdcard/note.txt".to_string(), "/sdcard/other.bin".to_string()];
        let res = match_image(&paths, &db, MatchMode::Pattern, &MatchOptions::default()).unwrap();
        assert_eq!(res.len(), 1);
        assert_eq!(res[0].matched.len(), 2);
        assert_eq!(res[0].packages(), BTreeSet::from(["com.a", "com.b"]));
    }

    #[test]
    fn installed_filter() {
        let db = AedDatabase::from_records("1", "h", vec![rec("com.a", "/sdcard/a.txt")]);
        let paths = vec!["/sdcard/a.txt".to_string()];
        let opts = MatchOptions {
            installed_only: true,
            ..MatchOptions::default()
        };
        assert!(match_image(&paths, &db, MatchMode::Exact, &opts).unwrap().is_empty());
        let paths = vec!["/sdcard/a.txt".to_string(), "/data/data/com.a/files/z".to_string()];
        assert_eq!(match_image(&paths, &db, MatchMode::Exact, &opts).unwrap().len(), 1);
    }

    #[test]
    fn empty_aed_matches_nothing() {
        let db = AedDatabase::from_records("1", "h", vec![]);
        let paths = vec!["/a".to_string()];
        assert!(match_image(&paths, &db, MatchMode::Partial, &MatchOptions::default()).unwrap().is_empty());
    }

    #[test]
    fn listing_file() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("l.txt");
        std::fs::write(&f, "# image\n/b\n\n/a\n/b\n").unwrap();
        assert_eq!(ingest_listing(&f).unwrap(), ["/a", "/b"]);
        std::fs::write(&f, "/a\nrelative/path\n").unwrap();
        assert_eq!(
            ingest_listing(&f).unwrap_err(),
            MatchError::NotAbsolute {
                line: 2,
                path: "relative/path".into()
            }
        );
    }

    #[test]
    fn image_directory() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path().join("data/data/com.a/files");
        std::fs::create_dir_all(&d).unwrap();
        std::fs::write(d.join("x"), "").unwrap();
        assert_eq!(ingest_listing(dir.path()).unwrap(), ["/data/data/com.a/files/x"]);
    }
}
