//! Data-flow summaries for framework methods.
//!
//! A catalog is line-oriented text:
//!
//! ```text
//! # comment
//! extern android.app.Activity extends android.view.ContextThemeWrapper
//! summary 1 android.content.Context.getFilesDir/0 := ret = "/data/data/<package name>/files/"
//! ```
//!
//! Each summary is a `;`-separated list of effects `target = expr` (replace)
//! or `target += expr` (join). Targets are `ret`, `base`, `argN`, a hidden
//! heap field `slot.$name`, or a program-global cell `global.$name`.

mod effect;

use std::collections::BTreeMap;

pub use effect::{apply_effects, native_overapprox, Effect, EffectHost, Expr, Slot, Target};

use crate::ir::MethodRef;

pub const DEFAULT_CATALOG_VERSION: &str = "1";

/// The catalog shipped with the toolkit.
pub const DEFAULT_CATALOG: &str = include_str!("default_catalog.txt");

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CatalogError {
    #[error("catalog line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("catalog line {line}: duplicate summary for {signature}")]
    Duplicate { line: usize, signature: String },
    #[error("catalog has no summaries for version `{0}`")]
    UnknownVersion(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ApiSummary {
    pub signature: MethodRef,
    pub effects: Vec<Effect>,
}

/// Summaries of one catalog version plus the external class hierarchy.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Catalog {
    version: String,
    summaries: BTreeMap<MethodRef, ApiSummary>,
    supers: BTreeMap<String, Vec<String>>,
}

struct RawCatalog {
    by_version: BTreeMap<String, BTreeMap<MethodRef, ApiSummary>>,
    supers: BTreeMap<String, Vec<String>>,
}

fn parse_catalog(text: &str) -> Result<RawCatalog, CatalogError> {
    let mut raw = RawCatalog {
        by_version: BTreeMap::new(),
        supers: BTreeMap::new(),
    };
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let err = |message: String| CatalogError::Parse {
            line: line_no,
            message,
        };
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("extern ") {
            let (class, supers) = rest
                .split_once(" extends ")
                .ok_or_else(|| err("expected `extern <class> extends <super>[, ...]`".into()))?;
            let class = class.trim();
            let supers: Vec<String> = supers
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect();
            if class.is_empty() || supers.is_empty() {
                return Err(err("empty class name in extern line".into()));
            }
            let entry = raw.supers.entry(class.to_string()).or_default();
            for s in supers {
                if !entry.contains(&s) {
                    entry.push(s);
                }
            }
            continue;
        }
        let Some(rest) = trimmed.strip_prefix("summary ") else {
            return Err(err(format!("unrecognised line `{trimmed}`")));
        };
        let (head, body) = rest
            .split_once(":=")
            .ok_or_else(|| err("expected `:=`".into()))?;
        let mut head_parts = head.split_whitespace();
        let (Some(version), Some(sig), None) =
            (head_parts.next(), head_parts.next(), head_parts.next())
        else {
            return Err(err("expected `summary <version> <class>.<method>/<arity>`".into()));
        };
        let signature =
            MethodRef::parse(sig).ok_or_else(|| err(format!("bad signature `{sig}`")))?;
        let effects = effect::parse_effects(body, signature.arity).map_err(err)?;
        let table = raw.by_version.entry(version.to_string()).or_default();
        if table.contains_key(&signature) {
            return Err(CatalogError::Duplicate {
                line: line_no,
                signature: signature.to_string(),
            });
        }
        table.insert(signature.clone(), ApiSummary { signature, effects });
    }
    Ok(raw)
}

impl Catalog {
    /// Loads one version from catalog text.
    pub fn load(text: &str, version: &str) -> Result<Catalog, CatalogError> {
        Catalog::load_layered(&[text], version)
    }

    /// Loads one version from several catalog texts; later texts override
    /// earlier summaries with the same signature and extend the hierarchy.
    pub fn load_layered(texts: &[&str], version: &str) -> Result<Catalog, CatalogError> {
        let mut catalog = Catalog {
            version: version.to_string(),
            ..Catalog::default()
        };
        let mut found = false;
        for text in texts {
            let raw = parse_catalog(text)?;
            for (class, supers) in raw.supers {
                let entry = catalog.supers.entry(class).or_default();
                for s in supers {
                    if !entry.contains(&s) {
                        entry.push(s);
                    }
                }
            }
            if let Some(table) = raw.by_version.get(version) {
                found = true;
                catalog.summaries.extend(table.clone());
            }
        }
        if !found {
            return Err(CatalogError::UnknownVersion(version.to_string()));
        }
        Ok(catalog)
    }

    pub fn builtin() -> Catalog {
        Catalog::load(DEFAULT_CATALOG, DEFAULT_CATALOG_VERSION).expect("built-in catalog is valid")
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    /// Exact-signature lookup.
    pub fn lookup(&self, signature: &MethodRef) -> Option<&ApiSummary> {
        self.summaries.get(signature)
    }

    pub fn len(&self) -> usize {
        self.summaries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.summaries.is_empty()
    }

    pub fn summaries(&self) -> impl Iterator<Item = &ApiSummary> {
        self.summaries.values()
    }

    /// Declared supertypes of an external class.
    pub fn supertypes(&self, class: &str) -> Vec<String> {
        self.supers.get(class).cloned().unwrap_or_default()
    }

    pub fn hierarchy(&self) -> &BTreeMap<String, Vec<String>> {
        &self.supers
    }
}
