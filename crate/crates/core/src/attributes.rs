//! Target attributes: LLM prompts, response parsing, bundled fixtures and text embeddings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pyramid::{EmbeddingProvider, ProviderError};
use crate::remote::{RemoteClient, RemoteError};

/// System prompt sent before either attribute query.
pub const SYSTEM_PROMPT: &str =
    "I am a highly intelligent question-answering bot, and I answer questions from a human perspective.";

pub const DEFAULT_N_GEOMETRIC: usize = 3;
pub const DEFAULT_N_AFFORDANCE: usize = 1;

#[derive(Debug, Error)]
pub enum AttributeError {
    #[error("target object name is empty")]
    EmptyTarget,
    #[error("attribute count must be at least 1")]
    PromptCountError,
    #[error("empty attribute response")]
    EmptyResponse,
    #[error("expected {expected} attributes, found {found}")]
    CountMismatch { expected: usize, found: usize },
    #[error("at least one attribute channel is required")]
    NoChannels,
    #[error("no attribute fixture for category {0:?}")]
    UnknownCategory(String),
    #[error("malformed attribute fixture {path}: {message}")]
    BadFixture { path: String, message: String },
    #[error("remote attribute source unavailable: {0}")]
    RemoteUnavailable(#[from] RemoteError),
    #[error("text embedding failed: {0}")]
    Embedding(#[from] ProviderError),
}

pub fn build_affordance_prompt(target: &str, n: usize) -> Result<String, AttributeError> {
    check_prompt_args(target, n)?;
    Ok(format!(
        "For the target object {target}, please provide {n} affordance attributes that to the most reflect its characteristics."
    ))
}

pub fn build_geometric_prompt(target: &str, n: usize) -> Result<String, AttributeError> {
    check_prompt_args(target, n)?;
    Ok(format!(
        "Summarize {n} geometric part visual features of the {target} which are typically used to identify why it is a {target}."
    ))
}

fn check_prompt_args(target: &str, n: usize) -> Result<(), AttributeError> {
    if target.trim().is_empty() {
        return Err(AttributeError::EmptyTarget);
    }
    if n == 0 {
        return Err(AttributeError::PromptCountError);
    }
    Ok(())
}

/// Normalizes a free-form LLM list answer into exactly `expected` lowercase items.
///
/// One item per line; list markers (`1.`, `2)`, `-`, `*`, `•`) are stripped. A single
/// comma-separated line is split on commas.
pub fn parse_attribute_list(raw: &str, expected: usize) -> Result<Vec<String>, AttributeError> {
    if raw.trim().is_empty() {
        return Err(AttributeError::EmptyResponse);
    }
    let mut items: Vec<String> = raw
        .lines()
        .map(strip_marker)
        .filter(|s| !s.is_empty())
        .collect();
    if items.len() == 1 && expected > 1 && items[0].contains(',') {
        items = items[0]
            .split(',')
            .map(strip_marker)
            .filter(|s| !s.is_empty())
            .collect();
    }
    if items.len() != expected {
        return Err(AttributeError::CountMismatch {
            expected,
            found: items.len(),
        });
    }
    Ok(items)
}

fn strip_marker(line: &str) -> String {
    let mut s = line.trim();
    if let Some(rest) = s.strip_prefix(['-', '*', '•']) {
        s = rest;
    } else {
        let digits = s.len() - s.trim_start_matches(|c: char| c.is_ascii_digit()).len();
        if digits > 0 {
            if let Some(rest) = s[digits..].strip_prefix(['.', ')', ':']) {
                s = rest;
            }
        }
    }
    s.trim().trim_end_matches(['.', ';']).trim().to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSet {
    pub target: String,
    pub geometric: Vec<String>,
    pub affordance: Vec<String>,
}

impl AttributeSet {
    pub fn new(
        target: impl Into<String>,
        geometric: Vec<String>,
        affordance: Vec<String>,
    ) -> Result<Self, AttributeError> {
        let set = Self {
            target: target.into(),
            geometric,
            affordance,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<(), AttributeError> {
        if self.target.trim().is_empty() {
            return Err(AttributeError::EmptyTarget);
        }
        if self.channel_count() == 0 {
            return Err(AttributeError::NoChannels);
        }
        if self
            .geometric
            .iter()
            .chain(&self.affordance)
            .any(|s| s.trim().is_empty())
        {
            return Err(AttributeError::EmptyResponse);
        }
        Ok(())
    }

    /// `C = N_g + N_a`.
    pub fn channel_count(&self) -> usize {
        self.geometric.len() + self.affordance.len()
    }

    /// Channel names: geometric parts first, then affordances.
    pub fn channels(&self) -> Vec<String> {
        self.geometric
            .iter()
            .chain(&self.affordance)
            .cloned()
            .collect()
    }
}

/// Where attribute lists come from.
pub enum AttributeSource<'a> {
    /// Fixtures compiled into the crate.
    Bundled,
    /// `<dir>/<category>.toml` files in the bundled format.
    FixtureDir(PathBuf),
    /// Live generation through the embedding/LLM service.
    Remote(&'a RemoteClient),
}

#[derive(Deserialize)]
struct Fixture {
    target: String,
    geometric: Vec<String>,
    affordance: Vec<String>,
}

const BUNDLED: &[(&str, &str)] = &[
    ("bed", include_str!("../fixtures/attributes/bed.toml")),
    ("chair", include_str!("../fixtures/attributes/chair.toml")),
    ("plant", include_str!("../fixtures/attributes/plant.toml")),
    ("sofa", include_str!("../fixtures/attributes/sofa.toml")),
    ("toilet", include_str!("../fixtures/attributes/toilet.toml")),
    ("tv", include_str!("../fixtures/attributes/tv.toml")),
];

/// Categories with a bundled fixture.
pub fn bundled_categories() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(c, _)| *c)
}

fn parse_fixture(text: &str, origin: &str) -> Result<Fixture, AttributeError> {
    toml::from_str(text).map_err(|e| AttributeError::BadFixture {
        path: origin.to_string(),
        message: e.to_string(),
    })
}

fn take(list: Vec<String>, n: usize) -> Result<Vec<String>, AttributeError> {
    if list.len() < n {
        return Err(AttributeError::CountMismatch {
            expected: n,
            found: list.len(),
        });
    }
    Ok(list.into_iter().take(n).collect())
}

fn load_fixture(target: &str, dir: Option<&Path>) -> Result<Fixture, AttributeError> {
    match dir {
        None => {
            let (_, text) = BUNDLED
                .iter()
                .find(|(c, _)| *c == target)
                .ok_or_else(|| AttributeError::UnknownCategory(target.to_string()))?;
            parse_fixture(text, target)
        }
        Some(dir) => {
            let path = dir.join(format!("{target}.toml"));
            let text = std::fs::read_to_string(&path)
                .map_err(|_| AttributeError::UnknownCategory(target.to_string()))?;
            parse_fixture(&text, &path.display().to_string())
        }
    }
}

/// Full bundled attribute lists for `target`, if it has a fixture.
pub fn bundled_attributes(target: &str) -> Option<AttributeSet> {
    let fx = load_fixture(target, None).ok()?;
    Some(AttributeSet {
        target: fx.target,
        geometric: fx.geometric,
        affordance: fx.affordance,
    })
}

/// Resolves `n_g` geometric-part and `n_a` affordance attributes for `target`.
///
/// Fixture lists hold the attributes in preference order; the first `n` of each list
/// are used.
pub fn resolve_attributes(
    target: &str,
    n_g: usize,
    n_a: usize,
    source: &AttributeSource<'_>,
) -> Result<AttributeSet, AttributeError> {
    if target.trim().is_empty() {
        return Err(AttributeError::EmptyTarget);
    }
    if n_g + n_a == 0 {
        return Err(AttributeError::NoChannels);
    }
    let set = match source {
        AttributeSource::Bundled | AttributeSource::FixtureDir(_) => {
            let dir = match source {
                AttributeSource::FixtureDir(d) => Some(d.as_path()),
                _ => None,
            };
            let fx = load_fixture(target, dir)?;
            AttributeSet {
                target: fx.target,
                geometric: take(fx.geometric, n_g)?,
                affordance: take(fx.affordance, n_a)?,
            }
        }
        AttributeSource::Remote(client) => client.attributes(target, n_g, n_a)?,
    };
    set.validate()?;
    if set.geometric.len() != n_g || set.affordance.len() != n_a {
        return Err(AttributeError::CountMismatch {
            expected: n_g + n_a,
            found: set.channel_count(),
        });
    }
    Ok(set)
}

/// Unit-norm text embeddings, one per channel, in [`AttributeSet::channels`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeEmbeddings {
    names: Vec<String>,
    vectors: Vec<Vec<f64>>,
}

impl AttributeEmbeddings {
    pub fn embed<P: EmbeddingProvider + ?Sized>(
        set: &AttributeSet,
        provider: &P,
    ) -> Result<Self, AttributeError> {
        let names = set.channels();
        let raw = provider.embed_texts(&names)?;
        if raw.len() != names.len() {
            return Err(ProviderError::CountMismatch {
                expected: names.len(),
                got: raw.len(),
            }
            .into());
        }
        Self::from_vectors(names, raw)
    }

    /// Normalizes and wraps precomputed vectors.
    pub fn from_vectors(
        names: Vec<String>,
        vectors: Vec<Vec<f64>>,
    ) -> Result<Self, AttributeError> {
        if names.is_empty() {
            return Err(AttributeError::NoChannels);
        }
        let dim = vectors.first().map_or(0, Vec::len);
        let mut out = Vec::with_capacity(vectors.len());
        for v in vectors {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if v.len() != dim || !(n > 0.0 && n.is_finite()) {
                return Err(ProviderError::Protocol(
                    "text embeddings must be non-zero and of equal dimension".into(),
                )
                .into());
            }
            out.push(v.into_iter().map(|x| x / n).collect());
        }
        Ok(Self {
            names,
            vectors: out,
        })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }
}
