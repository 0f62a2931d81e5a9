//! Tag lattice: evidence-type sets and abstract file-path expressions.
//!
//! A [`Tag`] pairs the evidence types a value may carry with the set of file
//! paths the value may denote. Paths are kept as [`PathExpr`]s, sequences of
//! literal text and dynamic placeholders such as `<timestamp>`.

use std::collections::BTreeSet;
use std::fmt;

use crate::ir::Const;

/// Default bound on the number of distinct paths a tag may hold.
pub const DEFAULT_PATH_CAP: usize = 16;

/// A type of evidentiary data.
///
/// The four built-in kinds are always present. Additional kinds (for example
/// `DeviceID`) are declared by the source/sink configuration.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EvidenceType {
    Location,
    TextInput,
    Time,
    VisitedUrl,
    Extension(String),
}

impl EvidenceType {
    pub const BUILTIN: [EvidenceType; 4] = [
        EvidenceType::Location,
        EvidenceType::TextInput,
        EvidenceType::Time,
        EvidenceType::VisitedUrl,
    ];

    pub fn name(&self) -> &str {
        match self {
            EvidenceType::Location => "Location",
            EvidenceType::TextInput => "TextInput",
            EvidenceType::Time => "Time",
            EvidenceType::VisitedUrl => "VisitedURL",
            EvidenceType::Extension(name) => name,
        }
    }

    /// Parses a built-in name, or any identifier as an extension kind.
    /// Returns `None` for text that is not a plain identifier.
    pub fn parse(text: &str) -> Option<EvidenceType> {
        match text {
            "Location" => Some(EvidenceType::Location),
            "TextInput" => Some(EvidenceType::TextInput),
            "Time" => Some(EvidenceType::Time),
            "VisitedURL" => Some(EvidenceType::VisitedUrl),
            _ if is_evidence_ident(text) => Some(EvidenceType::Extension(text.to_string())),
            _ => None,
        }
    }

    pub fn is_builtin(&self) -> bool {
        !matches!(self, EvidenceType::Extension(_))
    }
}

fn is_evidence_ident(text: &str) -> bool {
    let mut chars = text.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl fmt::Display for EvidenceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub type EvSet = BTreeSet<EvidenceType>;

/// Renders an evidence set as a comma-separated list, `-` when empty.
pub fn render_evset(evset: &EvSet) -> String {
    if evset.is_empty() {
        return "-".to_string();
    }
    evset.iter().map(EvidenceType::name).collect::<Vec<_>>().join(",")
}

/// Dynamic part of a file path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Placeholder {
    PackageName,
    Timestamp,
    Uuid,
    Intent,
    Unknown,
    Unresolved,
}

impl Placeholder {
    pub const ALL: [Placeholder; 6] = [
        Placeholder::PackageName,
        Placeholder::Timestamp,
        Placeholder::Uuid,
        Placeholder::Intent,
        Placeholder::Unknown,
        Placeholder::Unresolved,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Placeholder::PackageName => "<package name>",
            Placeholder::Timestamp => "<timestamp>",
            Placeholder::Uuid => "<UUID>",
            Placeholder::Intent => "<intent>",
            Placeholder::Unknown => "<unknown>",
            Placeholder::Unresolved => "<unresolved>",
        }
    }

    pub fn from_token(token: &str) -> Option<Placeholder> {
        Placeholder::ALL.into_iter().find(|p| p.token() == token)
    }

    /// Timestamp, UUID and intent parts make a path dynamic.
    pub fn is_dynamic(self) -> bool {
        matches!(
            self,
            Placeholder::Timestamp | Placeholder::Uuid | Placeholder::Intent
        )
    }

    /// Markers for lost precision.
    pub fn is_imprecise(self) -> bool {
        matches!(self, Placeholder::Unknown | Placeholder::Unresolved)
    }
}

impl fmt::Display for Placeholder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Segment {
    Literal(String),
    Placeholder(Placeholder),
}

/// A file path as literal text interleaved with placeholders.
///
/// Always canonical: no empty literals, no two adjacent literals, and no
/// literal containing a placeholder token spelling. Two canonical paths are
/// equal exactly when their token renderings are equal. The empty path
/// (the empty string literal) has no segments.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PathExpr {
    segments: Vec<Segment>,
}

impl PathExpr {
    pub fn empty() -> PathExpr {
        PathExpr::default()
    }

    pub fn literal(text: &str) -> PathExpr {
        PathExpr::parse(text)
    }

    pub fn placeholder(p: Placeholder) -> PathExpr {
        PathExpr {
            segments: vec![Segment::Placeholder(p)],
        }
    }

    pub fn unknown() -> PathExpr {
        PathExpr::placeholder(Placeholder::Unknown)
    }

    pub fn unresolved() -> PathExpr {
        PathExpr::placeholder(Placeholder::Unresolved)
    }

    /// Builds the canonical form of an arbitrary segment sequence.
    pub fn from_segments<I: IntoIterator<Item = Segment>>(segments: I) -> PathExpr {
        let mut out = Vec::new();
        let mut pending = String::new();
        for seg in segments {
            match seg {
                Segment::Literal(text) => pending.push_str(&text),
                Segment::Placeholder(p) => {
                    lex_into(&pending, &mut out);
                    pending.clear();
                    out.push(Segment::Placeholder(p));
                }
            }
        }
        lex_into(&pending, &mut out);
        PathExpr { segments: out }
    }

    /// Parses a rendered path: every canonical token spelling becomes a
    /// placeholder, everything else is literal text. Total over strings.
    pub fn parse(text: &str) -> PathExpr {
        let mut segments = Vec::new();
        lex_into(text, &mut segments);
        PathExpr { segments }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn concat(&self, other: &PathExpr) -> PathExpr {
        PathExpr::from_segments(self.segments.iter().chain(&other.segments).cloned())
    }

    pub fn placeholders(&self) -> impl Iterator<Item = Placeholder> + '_ {
        self.segments.iter().filter_map(|s| match s {
            Segment::Placeholder(p) => Some(*p),
            Segment::Literal(_) => None,
        })
    }

    pub fn is_dynamic(&self) -> bool {
        self.placeholders().any(Placeholder::is_dynamic)
    }

    pub fn is_imprecise(&self) -> bool {
        self.placeholders().any(Placeholder::is_imprecise)
    }

    /// The collapsed top path `[<unknown>]`.
    pub fn is_top(&self) -> bool {
        self.segments == [Segment::Placeholder(Placeholder::Unknown)]
    }

    /// True when every segment is literal text (including the empty path).
    pub fn is_all_literal(&self) -> bool {
        self.placeholders().next().is_none()
    }

    pub fn ends_with_slash(&self) -> bool {
        matches!(self.segments.last(), Some(Segment::Literal(t)) if t.ends_with('/'))
    }

    pub fn starts_with_slash(&self) -> bool {
        matches!(self.segments.first(), Some(Segment::Literal(t)) if t.starts_with('/'))
    }

    /// Joins two paths with exactly one `/` between them, the way a
    /// `File(parent, child)` constructor does.
    pub fn join_path(&self, child: &PathExpr) -> PathExpr {
        match (self.ends_with_slash(), child.starts_with_slash()) {
            (true, true) => {
                let mut segs = child.segments.clone();
                if let Some(Segment::Literal(t)) = segs.first_mut() {
                    t.remove(0);
                }
                self.concat(&PathExpr::from_segments(segs))
            }
            (false, false) => self.concat(&PathExpr::literal("/")).concat(child),
            _ => self.concat(child),
        }
    }

    /// Renders with the package placeholder substituted.
    pub fn render(&self, package_name: &str) -> String {
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Literal(t) => out.push_str(t),
                Segment::Placeholder(Placeholder::PackageName) => out.push_str(package_name),
                Segment::Placeholder(p) => out.push_str(p.token()),
            }
        }
        out
    }
}

/// Renders every placeholder as its token, including `<package name>`.
impl fmt::Display for PathExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for seg in &self.segments {
            match seg {
                Segment::Literal(t) => f.write_str(t)?,
                Segment::Placeholder(p) => f.write_str(p.token())?,
            }
        }
        Ok(())
    }
}

/// Splits literal text on token spellings, appending to `out` and fusing
/// with a trailing literal already there.
fn lex_into(text: &str, out: &mut Vec<Segment>) {
    let mut rest = text;
    while !rest.is_empty() {
        let next = Placeholder::ALL
            .iter()
            .filter_map(|p| rest.find(p.token()).map(|at| (at, *p)))
            .min_by_key(|(at, _)| *at);
        match next {
            Some((at, p)) => {
                push_literal(out, &rest[..at]);
                out.push(Segment::Placeholder(p));
                rest = &rest[at + p.token().len()..];
            }
            None => {
                push_literal(out, rest);
                rest = "";
            }
        }
    }
}

fn push_literal(out: &mut Vec<Segment>, text: &str) {
    if text.is_empty() {
        return;
    }
    if let Some(Segment::Literal(last)) = out.last_mut() {
        last.push_str(text);
    } else {
        out.push(Segment::Literal(text.to_string()));
    }
}

/// A bounded set of path expressions.
///
/// Holding more than `cap` paths collapses the set to `{[<unknown>]}`, which
/// acts as the top element: it absorbs every union.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PathSet(BTreeSet<PathExpr>);

impl PathSet {
    pub fn new() -> PathSet {
        PathSet::default()
    }

    pub fn single(p: PathExpr) -> PathSet {
        PathSet(BTreeSet::from([p]))
    }

    pub fn top() -> PathSet {
        PathSet::single(PathExpr::unknown())
    }

    pub fn from_paths<I: IntoIterator<Item = PathExpr>>(paths: I, cap: usize) -> PathSet {
        let mut set = PathSet::new();
        for p in paths {
            set.insert(p, cap);
        }
        set
    }

    pub fn is_top(&self) -> bool {
        self.0.len() == 1 && self.0.iter().next().is_some_and(PathExpr::is_top)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &PathExpr> {
        self.0.iter()
    }

    pub fn contains(&self, p: &PathExpr) -> bool {
        self.0.contains(p)
    }

    pub fn insert(&mut self, p: PathExpr, cap: usize) {
        if self.is_top() {
            return;
        }
        if p.is_top() {
            *self = PathSet::top();
            return;
        }
        self.0.insert(p);
        if self.0.len() > cap {
            *self = PathSet::top();
        }
    }

    pub fn union_with(&mut self, other: &PathSet, cap: usize) {
        if other.is_top() {
            *self = PathSet::top();
            return;
        }
        for p in other.iter() {
            self.insert(p.clone(), cap);
            if self.is_top() {
                return;
            }
        }
    }

    /// Pairwise combination of two sets; empty if either side is empty,
    /// top if either side is top.
    pub fn product<F>(&self, other: &PathSet, cap: usize, mut f: F) -> PathSet
    where
        F: FnMut(&PathExpr, &PathExpr) -> PathExpr,
    {
        if self.is_empty() || other.is_empty() {
            return PathSet::new();
        }
        if self.is_top() || other.is_top() {
            return PathSet::top();
        }
        let mut out = PathSet::new();
        for p in self.iter() {
            for q in other.iter() {
                out.insert(f(p, q), cap);
                if out.is_top() {
                    return out;
                }
            }
        }
        out
    }

    /// Set inclusion, with top above everything.
    pub fn leq(&self, other: &PathSet) -> bool {
        other.is_top() || self.0.is_subset(&other.0)
    }

    pub fn into_inner(self) -> BTreeSet<PathExpr> {
        self.0
    }
}

/// Per-value analysis fact.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tag {
    pub evset: EvSet,
    pub paths: PathSet,
}

impl Tag {
    pub fn bottom() -> Tag {
        Tag::default()
    }

    pub fn is_bottom(&self) -> bool {
        self.evset.is_empty() && self.paths.is_empty()
    }

    pub fn with_path(p: PathExpr) -> Tag {
        Tag {
            evset: EvSet::new(),
            paths: PathSet::single(p),
        }
    }

    pub fn with_evidence(e: EvidenceType) -> Tag {
        Tag {
            evset: EvSet::from([e]),
            paths: PathSet::new(),
        }
    }

    pub fn join(&self, other: &Tag, cap: usize) -> Tag {
        let mut out = self.clone();
        out.join_with(other, cap);
        out
    }

    /// In-place join; returns whether `self` changed.
    pub fn join_with(&mut self, other: &Tag, cap: usize) -> bool {
        let before = (self.evset.len(), self.paths.clone());
        self.evset.extend(other.evset.iter().cloned());
        self.paths.union_with(&other.paths, cap);
        before.0 != self.evset.len() || before.1 != self.paths
    }

    /// String concatenation: evidence union, path cross product.
    pub fn concat(&self, other: &Tag, cap: usize) -> Tag {
        Tag {
            evset: self.evset.union(&other.evset).cloned().collect(),
            paths: self.paths.product(&other.paths, cap, PathExpr::concat),
        }
    }

    /// Evidence only; paths cleared.
    pub fn evidence_only(&self) -> Tag {
        Tag {
            evset: self.evset.clone(),
            paths: PathSet::new(),
        }
    }

    pub fn leq(&self, other: &Tag) -> bool {
        self.evset.is_subset(&other.evset) && self.paths.leq(&other.paths)
    }
}

/// A string constant denotes itself as a path; other constants carry nothing.
pub fn tag_of_const(c: &Const) -> Tag {
    match c {
        Const::Str(s) => Tag::with_path(PathExpr::literal(s)),
        _ => Tag::bottom(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lit(s: &str) -> PathExpr {
        PathExpr::literal(s)
    }

    fn tag(ev: &[EvidenceType], paths: &[&str]) -> Tag {
        Tag {
            evset: ev.iter().cloned().collect(),
            paths: PathSet::from_paths(paths.iter().map(|p| lit(p)), DEFAULT_PATH_CAP),
        }
    }

    #[test]
    fn bottom_is_empty() {
        let b = Tag::bottom();
        assert!(b.evset.is_empty() && b.paths.is_empty());
        let t = tag(&[EvidenceType::Time], &["a"]);
        assert_eq!(b.join(&t, DEFAULT_PATH_CAP), t);
    }

    #[test]
    fn const_tags() {
        assert_eq!(
            tag_of_const(&Const::Str("locSink".into())),
            Tag::with_path(lit("locSink"))
        );
        assert_eq!(tag_of_const(&Const::Int(0)), Tag::bottom());
        assert_eq!(tag_of_const(&Const::Int(7)), Tag::bottom());
        let empty = tag_of_const(&Const::Str(String::new()));
        assert_eq!(empty.paths.len(), 1);
        assert!(empty.paths.iter().next().unwrap().is_empty());
    }

    #[test]
    fn merge_unions_components() {
        let a = tag(&[EvidenceType::Location], &["p1"]);
        let b = tag(&[EvidenceType::Time], &["p2"]);
        let m = a.join(&b, DEFAULT_PATH_CAP);
        assert_eq!(
            m,
            tag(&[EvidenceType::Location, EvidenceType::Time], &["p1", "p2"])
        );
        assert_eq!(m.join(&m, DEFAULT_PATH_CAP), m);
    }

    #[test]
    fn cap_overflow_collapses_in_every_order() {
        let tags: Vec<Tag> = (0..17).map(|i| tag(&[], &[&format!("f{i}")])).collect();
        let forward = tags
            .iter()
            .fold(Tag::bottom(), |acc, t| acc.join(t, DEFAULT_PATH_CAP));
        let backward = tags
            .iter()
            .rev()
            .fold(Tag::bottom(), |acc, t| acc.join(t, DEFAULT_PATH_CAP));
        // pairwise tree order
        let mut level = tags.clone();
        while level.len() > 1 {
            level = level
                .chunks(2)
                .map(|c| match c {
                    [a, b] => a.join(b, DEFAULT_PATH_CAP),
                    [a] => a.clone(),
                    _ => unreachable!(),
                })
                .collect();
        }
        for result in [&forward, &backward, &level[0]] {
            assert!(result.paths.is_top());
            assert_eq!(result.paths, PathSet::top());
        }
        let sixteen = tags[..16]
            .iter()
            .fold(Tag::bottom(), |acc, t| acc.join(t, DEFAULT_PATH_CAP));
        assert_eq!(sixteen.paths.len(), 16);
    }

    #[test]
    fn concat_builds_timestamp_file_name() {
        let p = lit("evidence-")
            .concat(&PathExpr::placeholder(Placeholder::Timestamp))
            .concat(&lit(".txt"));
        assert_eq!(p.to_string(), "evidence-<timestamp>.txt");
        assert_eq!(lit("").concat(&lit("a.txt")), lit("a.txt"));
        let fused = lit("/data/").concat(&lit("data/"));
        assert_eq!(fused.segments(), &[Segment::Literal("/data/data/".into())]);
    }

    #[test]
    fn tag_concat_cross_product() {
        let dir = tag(&[], &["dir/"]);
        let names = tag(&[], &["a", "b"]);
        assert_eq!(
            dir.concat(&names, DEFAULT_PATH_CAP),
            tag(&[], &["dir/a", "dir/b"])
        );
        let time_only = tag(&[EvidenceType::Time], &[]);
        let x = tag(&[], &["x"]);
        assert_eq!(
            time_only.concat(&x, DEFAULT_PATH_CAP),
            tag(&[EvidenceType::Time], &[])
        );
        assert_eq!(
            Tag::bottom().concat(&Tag::bottom(), DEFAULT_PATH_CAP),
            Tag::bottom()
        );
    }

    #[test]
    fn render_substitutes_package() {
        let p = PathExpr::from_segments([
            Segment::Literal("/data/data/".into()),
            Segment::Placeholder(Placeholder::PackageName),
            Segment::Literal("/files/locSink".into()),
        ]);
        assert_eq!(
            p.render("com.evihunter.GPS"),
            "/data/data/com.evihunter.GPS/files/locSink"
        );
        let ts = lit("a-").concat(&PathExpr::placeholder(Placeholder::Timestamp));
        assert!(ts.render("x").contains("<timestamp>"));
        assert_eq!(lit("/sdcard/a.txt").render("x"), "/sdcard/a.txt");
    }

    #[test]
    fn token_text_is_lexed_across_fusion() {
        let p = lit("a<UU").concat(&lit("ID>b"));
        assert_eq!(p, PathExpr::parse("a<UUID>b"));
        assert!(p.is_dynamic());
        assert_eq!(PathExpr::parse("<package name>").to_string(), "<package name>");
        assert!(PathExpr::parse("x<notatoken>").is_all_literal());
    }

    #[test]
    fn join_path_inserts_single_separator() {
        assert_eq!(lit("/a/").join_path(&lit("b")), lit("/a/b"));
        assert_eq!(lit("/a").join_path(&lit("b")), lit("/a/b"));
        assert_eq!(lit("/a/").join_path(&lit("/b")), lit("/a/b"));
        assert_eq!(lit("/a").join_path(&lit("/b")), lit("/a/b"));
    }

    #[test]
    fn top_absorbs() {
        let mut s = PathSet::top();
        s.insert(lit("x"), 16);
        assert!(s.is_top());
        let mut t = PathSet::single(lit("x"));
        t.insert(PathExpr::unknown(), 16);
        assert!(t.is_top());
        assert!(PathSet::single(lit("q")).leq(&PathSet::top()));
    }

    #[test]
    fn evidence_names_round_trip() {
        for e in EvidenceType::BUILTIN {
            assert_eq!(EvidenceType::parse(e.name()), Some(e.clone()));
        }
        assert_eq!(
            EvidenceType::parse("DeviceID"),
            Some(EvidenceType::Extension("DeviceID".into()))
        );
        assert_eq!(EvidenceType::parse("no spaces"), None);
    }
}
