//! Source and sink configuration.
//!
//! ```text
//! evidence DeviceID
//! option record-empty false
//! source ReturnEvidence android.location.LocationManager.getLastKnownLocation/1 -> Location
//! source ArgEvidence android.webkit.WebView.loadUrl/1/arg1 -> VisitedURL
//! source ReturnPathToken java.util.UUID.randomUUID/0 -> <UUID>
//! sink java.io.OutputStream.write/1 data=arg1 path=base
//! sink android.content.SharedPreferences$Editor.putString/2 data=arg2 path=base kind=shared_prefs
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use sha2::{Digest, Sha256};

use crate::aed::FileKind;
use crate::ir::MethodRef;
use crate::taint::{EvidenceType, Placeholder};

/// The configuration shipped with the toolkit.
pub const DEFAULT_CONFIG: &str = include_str!("default_config.txt");

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("config line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("config line {line}: {spec} conflicts with an earlier entry")]
    Conflict { line: usize, spec: String },
    #[error("config line {line}: evidence kind `{kind}` is not declared")]
    UndeclaredEvidence { line: usize, kind: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SourceKind {
    ReturnEvidence,
    ArgEvidence,
    CallbackArgEvidence,
    ReturnPathToken,
}

impl SourceKind {
    pub fn name(self) -> &'static str {
        match self {
            SourceKind::ReturnEvidence => "ReturnEvidence",
            SourceKind::ArgEvidence => "ArgEvidence",
            SourceKind::CallbackArgEvidence => "CallbackArgEvidence",
            SourceKind::ReturnPathToken => "ReturnPathToken",
        }
    }

    fn parse(s: &str) -> Option<SourceKind> {
        [
            SourceKind::ReturnEvidence,
            SourceKind::ArgEvidence,
            SourceKind::CallbackArgEvidence,
            SourceKind::ReturnPathToken,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }

    fn takes_arg(self) -> bool {
        matches!(self, SourceKind::ArgEvidence | SourceKind::CallbackArgEvidence)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Payload {
    Evidence(EvidenceType),
    Token(Placeholder),
}

impl fmt::Display for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payload::Evidence(e) => e.fmt(f),
            Payload::Token(p) => p.fmt(f),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SourceSpec {
    pub kind: SourceKind,
    pub signature: MethodRef,
    /// 1-based argument index for argument kinds.
    pub arg: Option<usize>,
    pub payload: Payload,
}

impl fmt::Display for SourceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "source {} {}", self.kind.name(), self.signature)?;
        if let Some(n) = self.arg {
            write!(f, "/arg{n}")?;
        }
        write!(f, " -> {}", self.payload)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PathCarrier {
    Base,
    Arg(usize),
}

impl fmt::Display for PathCarrier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PathCarrier::Base => f.write_str("base"),
            PathCarrier::Arg(n) => write!(f, "arg{n}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SinkSpec {
    pub signature: MethodRef,
    /// 1-based indices of the arguments holding the written data.
    pub data: Vec<usize>,
    pub path: PathCarrier,
    /// `None` derives the kind from the path.
    pub kind: Option<FileKind>,
}

impl fmt::Display for SinkSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let data: Vec<String> = self.data.iter().map(|d| format!("arg{d}")).collect();
        write!(
            f,
            "sink {} data={} path={}",
            self.signature,
            data.join(","),
            self.path
        )?;
        if let Some(k) = self.kind {
            write!(f, " kind={}", k.name())?;
        }
        Ok(())
    }
}

/// Loaded sources, sinks and options. Immutable once built.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Config {
    evidence: BTreeSet<String>,
    sources: BTreeMap<MethodRef, Vec<SourceSpec>>,
    sinks: BTreeMap<MethodRef, SinkSpec>,
    pub record_empty: bool,
}

fn parse_arg(text: &str) -> Option<usize> {
    let n: usize = text.strip_prefix("arg").unwrap_or(text).parse().ok()?;
    (n >= 1).then_some(n)
}

impl Config {
    pub fn builtin() -> Config {
        Config::from_texts(&[DEFAULT_CONFIG]).expect("built-in config is valid")
    }

    /// The built-in configuration extended by each text in turn.
    pub fn with_defaults(extra: &[&str]) -> Result<Config, ConfigError> {
        let mut texts = vec![DEFAULT_CONFIG];
        texts.extend_from_slice(extra);
        Config::from_texts(&texts)
    }

    /// Parses config texts as one combined file. Line numbers in errors refer
    /// to the text the line came from.
    pub fn from_texts(texts: &[&str]) -> Result<Config, ConfigError> {
        let mut config = Config::default();
        // evidence declarations apply regardless of their position
        for text in texts {
            for line in text.lines() {
                if let Some(rest) = line.trim().strip_prefix("evidence ") {
                    config.evidence.insert(rest.trim().to_string());
                }
            }
        }
        for text in texts {
            for (idx, line) in text.lines().enumerate() {
                config.parse_line(idx + 1, line)?;
            }
        }
        Ok(config)
    }

    fn parse_line(&mut self, line_no: usize, line: &str) -> Result<(), ConfigError> {
        let err = |message: String| ConfigError::Parse {
            line: line_no,
            message,
        };
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            return Ok(());
        }
        let (head, rest) = line.split_once(' ').unwrap_or((line, ""));
        match head {
            "evidence" => {
                let name = rest.trim();
                match EvidenceType::parse(name) {
                    Some(EvidenceType::Extension(_)) => Ok(()),
                    Some(_) => Err(err(format!("`{name}` is a built-in evidence kind"))),
                    None => Err(err(format!("invalid evidence kind `{name}`"))),
                }
            }
            "option" => {
                let mut parts = rest.split_whitespace();
                match (parts.next(), parts.next(), parts.next()) {
                    (Some("record-empty"), Some(v @ ("true" | "false")), None) => {
                        self.record_empty = v == "true";
                        Ok(())
                    }
                    _ => Err(err(format!("unknown option `{rest}`"))),
                }
            }
            "source" => {
                let spec = self.parse_source(rest, line_no)?;
                let list = self.sources.entry(spec.signature.clone()).or_default();
                if let Some(existing) = list
                    .iter()
                    .find(|s| s.kind == spec.kind && s.arg == spec.arg)
                {
                    if existing.payload != spec.payload {
                        return Err(ConfigError::Conflict {
                            line: line_no,
                            spec: spec.to_string(),
                        });
                    }
                    return Ok(());
                }
                list.push(spec);
                list.sort();
                Ok(())
            }
            "sink" => {
                let spec = parse_sink(rest).map_err(err)?;
                match self.sinks.get(&spec.signature) {
                    Some(existing) if *existing != spec => Err(ConfigError::Conflict {
                        line: line_no,
                        spec: spec.to_string(),
                    }),
                    Some(_) => Ok(()),
                    None => {
                        self.sinks.insert(spec.signature.clone(), spec);
                        Ok(())
                    }
                }
            }
            _ => Err(err(format!("unrecognised line `{line}`"))),
        }
    }

    fn parse_source(&self, rest: &str, line_no: usize) -> Result<SourceSpec, ConfigError> {
        let err = |message: String| ConfigError::Parse {
            line: line_no,
            message,
        };
        let (lhs, payload) = rest
            .split_once("->")
            .ok_or_else(|| err("expected `->`".into()))?;
        let mut words = lhs.split_whitespace();
        let (Some(kind), Some(sig), None) = (words.next(), words.next(), words.next()) else {
            return Err(err("expected `source <kind> <signature> -> <payload>`".into()));
        };
        let kind = SourceKind::parse(kind).ok_or_else(|| err(format!("unknown source kind `{kind}`")))?;
        let (sig, arg) = match sig.rsplit_once('/') {
            Some((head, tail)) if tail.starts_with("arg") => {
                let n = parse_arg(tail).ok_or_else(|| err(format!("bad argument `{tail}`")))?;
                (head, Some(n))
            }
            _ => (sig, None),
        };
        let signature = MethodRef::parse(sig).ok_or_else(|| err(format!("bad signature `{sig}`")))?;
        match (kind.takes_arg(), arg) {
            (true, None) => return Err(err(format!("{} needs `/argN`", kind.name()))),
            (false, Some(_)) => return Err(err(format!("{} takes no argument", kind.name()))),
            (true, Some(n)) if n > signature.arity => {
                return Err(err(format!("arg{n} out of range for {signature}")))
            }
            _ => {}
        }
        let payload = payload.trim();
        let payload = if kind == SourceKind::ReturnPathToken {
            match Placeholder::from_token(payload) {
                Some(p) if p.is_dynamic() => Payload::Token(p),
                _ => {
                    return Err(err(format!(
                        "path token must be <timestamp>, <UUID> or <intent>, not `{payload}`"
                    )))
                }
            }
        } else {
            match EvidenceType::parse(payload) {
                Some(EvidenceType::Extension(name)) if !self.evidence.contains(&name) => {
                    return Err(ConfigError::UndeclaredEvidence {
                        line: line_no,
                        kind: name,
                    })
                }
                Some(e) => Payload::Evidence(e),
                None => return Err(err(format!("invalid evidence kind `{payload}`"))),
            }
        };
        Ok(SourceSpec {
            kind,
            signature,
            arg,
            payload,
        })
    }

    pub fn sources_for(&self, sig: &MethodRef) -> &[SourceSpec] {
        self.sources.get(sig).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn sink_for(&self, sig: &MethodRef) -> Option<&SinkSpec> {
        self.sinks.get(sig)
    }

    pub fn sources(&self) -> impl Iterator<Item = &SourceSpec> {
        self.sources.values().flatten()
    }

    pub fn sinks(&self) -> impl Iterator<Item = &SinkSpec> {
        self.sinks.values()
    }

    pub fn extension_kinds(&self) -> impl Iterator<Item = &str> {
        self.evidence.iter().map(String::as_str)
    }

    /// Canonical text form: sorted, one entry per line. Equal configurations
    /// dump to identical bytes whatever order their files listed entries in.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for e in &self.evidence {
            out.push_str(&format!("evidence {e}\n"));
        }
        out.push_str(&format!("option record-empty {}\n", self.record_empty));
        let mut sources: Vec<&SourceSpec> = self.sources().collect();
        sources.sort();
        for s in sources {
            out.push_str(&format!("{s}\n"));
        }
        for s in self.sinks() {
            out.push_str(&format!("{s}\n"));
        }
        out
    }

    /// SHA-256 of [`Config::dump`], lowercase hex.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.dump().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn parse_sink(rest: &str) -> Result<SinkSpec, String> {
    let mut words = rest.split_whitespace();
    let sig = words.next().ok_or("missing sink signature")?;
    let signature = MethodRef::parse(sig).ok_or_else(|| format!("bad signature `{sig}`"))?;
    let (mut data, mut path, mut kind) = (None, None, None);
    for w in words {
        let (key, value) = w
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, found `{w}`"))?;
        match key {
            "data" => {
                let mut idx = Vec::new();
                for part in value.split(',') {
                    let n = parse_arg(part).ok_or_else(|| format!("bad data index `{part}`"))?;
                    if n > signature.arity {
                        return Err(format!("data index {n} out of range for {signature}"));
                    }
                    idx.push(n);
                }
                idx.sort_unstable();
                idx.dedup();
                data = Some(idx);
            }
            "path" => {
                path = Some(if value == "base" {
                    PathCarrier::Base
                } else {
                    let n = parse_arg(value).ok_or_else(|| format!("bad path carrier `{value}`"))?;
                    if n > signature.arity {
                        return Err(format!("path carrier arg{n} out of range for {signature}"));
                    }
                    PathCarrier::Arg(n)
                });
            }
            "kind" => {
                kind = match value {
                    "auto" => None,
                    other => Some(FileKind::parse(other).ok_or_else(|| format!("unknown kind `{other}`"))?),
                };
            }
            _ => return Err(format!("unknown sink attribute `{key}`")),
        }
    }
    let data = data.filter(|d| !d.is_empty()).ok_or("sink needs data=")?;
    let path = path.ok_or("sink needs path=")?;
    Ok(SinkSpec {
        signature,
        data,
        path,
        kind,
    })
}
