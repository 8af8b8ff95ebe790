//! Matching transcribed operator phrases against the command vocabulary.

use crate::error::{Error, Result};
use crate::sim::TaskConfig;
use serde::{Deserialize, Serialize};

/// Lowercases and collapses runs of whitespace.
pub fn normalize(s: &str) -> String {
    s.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Unit-cost edit distance over the characters of the normalized strings.
pub fn levenshtein(a: &str, b: &str) -> usize {
    levenshtein_raw(&normalize(a), &normalize(b))
}

/// Edit distance without normalization.
pub fn levenshtein_raw(a: &str, b: &str) -> usize {
    if a.is_ascii() && b.is_ascii() {
        return edit_distance(a.as_bytes(), b.as_bytes());
    }
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    edit_distance(&a, &b)
}

/// Single-row Wagner-Fischer; short inputs keep the row on the stack.
fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut stack = [0usize; 64];
    let mut heap = Vec::new();
    let row: &mut [usize] = if b.len() < stack.len() {
        &mut stack[..=b.len()]
    } else {
        heap.resize(b.len() + 1, 0);
        &mut heap
    };
    for (j, r) in row.iter_mut().enumerate() {
        *r = j;
    }
    for (i, ca) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let above = row[j + 1];
            row[j + 1] = (diag + usize::from(ca != cb)).min(above + 1).min(row[j] + 1);
            diag = above;
        }
    }
    row[b.len()]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandVocabulary {
    /// Normalized phrase and the TAP id it triggers, in priority order for ties.
    entries: Vec<(String, usize)>,
    pub max_distance: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandMatch {
    Tap { id: usize, distance: usize },
    NoMatch { best_distance: usize },
}

impl CommandVocabulary {
    pub fn new(entries: Vec<(String, usize)>, max_distance: usize) -> Result<Self> {
        let mut normalized: Vec<(String, usize)> = Vec::with_capacity(entries.len());
        for (phrase, id) in entries {
            let p = normalize(&phrase);
            if normalized.iter().any(|(q, _)| *q == p) {
                return Err(Error::Config(format!("duplicate vocabulary phrase `{p}`")));
            }
            normalized.push((p, id));
        }
        Ok(Self {
            entries: normalized,
            max_distance,
        })
    }

    pub fn from_task(cfg: &TaskConfig) -> Result<Self> {
        let library = cfg.library();
        let entries = cfg
            .vocabulary
            .iter()
            .map(|e| library.require(&e.tap).map(|spec| (e.phrase.clone(), spec.id)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(entries, cfg.max_distance)
    }

    pub fn entries(&self) -> &[(String, usize)] {
        &self.entries
    }

    /// Closest phrase by edit distance; ties go to the earliest entry.
    pub fn parse(&self, text: &str) -> Result<CommandMatch> {
        if self.entries.is_empty() {
            return Err(Error::Config("command vocabulary is empty".into()));
        }
        let text = normalize(text);
        let (best, distance) = self
            .entries
            .iter()
            .map(|(phrase, id)| (*id, levenshtein_raw(&text, phrase)))
            .enumerate()
            .min_by_key(|(idx, (_, d))| (*d, *idx))
            .map(|(_, m)| m)
            .expect("non-empty");
        Ok(if distance <= self.max_distance {
            CommandMatch::Tap { id: best, distance }
        } else {
            CommandMatch::NoMatch {
                best_distance: distance,
            }
        })
    }
}

pub fn parse_command(text: &str, vocab: &CommandVocabulary) -> Result<CommandMatch> {
    vocab.parse(text)
}
