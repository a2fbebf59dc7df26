use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use crate::{Error, Result};

/// How a raw index contributes probabilities for a mention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    /// `mention → entity → count`, normalized per mention.
    Counts,
    /// `mention → entity` lists; each listed entity gets `1 / |list|`.
    Uniform,
}

impl FromStr for SourceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "counts" | "count" => Ok(SourceKind::Counts),
            "uniform" => Ok(SourceKind::Uniform),
            other => Err(Error::invalid(format!("unknown prior source kind `{other}`"))),
        }
    }
}

/// One raw mention–entity index.
#[derive(Debug, Clone)]
pub struct PriorSource {
    pub kind: SourceKind,
    pub weight: f64,
    table: BTreeMap<String, BTreeMap<String, f64>>,
}

/// Trims and collapses internal whitespace.
pub fn normalize_mention(m: &str) -> String {
    m.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl PriorSource {
    pub fn new(kind: SourceKind, weight: f64) -> Self {
        Self { kind, weight, table: BTreeMap::new() }
    }

    /// Adds `count` for `(mention, entity)`; uniform sources ignore the count.
    pub fn add(&mut self, mention: &str, entity: &str, count: f64) {
        let slot = self.table.entry(normalize_mention(mention)).or_default();
        match self.kind {
            SourceKind::Uniform => {
                slot.insert(entity.to_owned(), 1.0);
            }
            SourceKind::Counts => *slot.entry(entity.to_owned()).or_insert(0.0) += count,
        }
    }

    /// Conditional distribution for a mention, or `None` when this source abstains.
    fn distribution(&self, mention: &str) -> Option<Vec<(&str, f64)>> {
        let row = self.table.get(mention)?;
        match self.kind {
            SourceKind::Uniform => {
                let n = row.len() as f64;
                (n > 0.0).then(|| row.keys().map(|e| (e.as_str(), 1.0 / n)).collect())
            }
            SourceKind::Counts => {
                let total: f64 = row.values().sum();
                (total > 0.0).then(|| row.iter().filter(|p| *p.1 > 0.0).map(|(e, c)| (e.as_str(), c / total)).collect())
            }
        }
    }

    /// Reads `mention \t entity \t count` (counts) or `mention \t entity` (uniform).
    pub fn read(path: &Path, kind: SourceKind, weight: f64) -> Result<Self> {
        let name = path.display().to_string();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut src = Self::new(kind, weight);
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            match (kind, cols.len()) {
                (SourceKind::Counts, 3) => {
                    let c: f64 = cols[2].trim().parse().map_err(|_| Error::parse(&name, i + 1, "bad count"))?;
                    if !(c >= 0.0 && c.is_finite()) {
                        return Err(Error::parse(&name, i + 1, "count must be non-negative"));
                    }
                    src.add(cols[0], cols[1], c);
                }
                (SourceKind::Uniform, 2) | (SourceKind::Uniform, 3) => src.add(cols[0], cols[1], 1.0),
                _ => return Err(Error::parse(&name, i + 1, "wrong number of columns")),
            }
        }
        Ok(src)
    }
}

/// Mention–entity prior `p̂(e|m)`: the weighted mean of the source
/// distributions that know the mention, renormalized.
#[derive(Debug, Clone, Default)]
pub struct PriorIndex {
    entries: BTreeMap<String, Vec<(String, f64)>>,
    folded: BTreeMap<String, String>,
}

impl PriorIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Candidates for a mention sorted by descending prior (ties by name).
    /// Exact match on the normalized string first, then case-insensitive.
    pub fn lookup(&self, mention: &str) -> Option<&[(String, f64)]> {
        let key = normalize_mention(mention);
        if let Some(v) = self.entries.get(&key) {
            return Some(v);
        }
        let k = self.folded.get(&key.to_lowercase())?;
        self.entries.get(k).map(Vec::as_slice)
    }

    pub fn prior(&self, mention: &str, entity: &str) -> f64 {
        self.lookup(mention)
            .and_then(|v| v.iter().find(|p| p.0 == entity))
            .map_or(0.0, |p| p.1)
    }

    pub fn mentions(&self) -> impl Iterator<Item = (&str, &[(String, f64)])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    fn insert(&mut self, mention: String, mut dist: Vec<(String, f64)>) {
        dist.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        // BTreeMap iteration is ordered, so the first key per folded form wins.
        self.folded.entry(mention.to_lowercase()).or_insert_with(|| mention.clone());
        self.entries.insert(mention, dist);
    }

    /// Writes `mention \t entity \t probability`.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut s = String::new();
        for (m, dist) in &self.entries {
            for (e, p) in dist {
                s.push_str(&format!("{m}\t{e}\t{p}\n"));
            }
        }
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    /// Reads a file written by [`PriorIndex::write`].
    pub fn read(path: &Path) -> Result<Self> {
        Ok(build_prior(&[PriorSource::read(path, SourceKind::Counts, 1.0)?]))
    }
}

pub fn build_prior(sources: &[PriorSource]) -> PriorIndex {
    let mut mentions: Vec<&String> = sources.iter().flat_map(|s| s.table.keys()).collect();
    mentions.sort();
    mentions.dedup();
    let mut index = PriorIndex::default();
    for m in mentions {
        let mut acc: BTreeMap<&str, f64> = BTreeMap::new();
        let mut wsum = 0.0;
        for s in sources {
            if let Some(dist) = s.distribution(m) {
                wsum += s.weight;
                for (e, p) in dist {
                    *acc.entry(e).or_insert(0.0) += s.weight * p;
                }
            }
        }
        if wsum <= 0.0 {
            continue;
        }
        let total: f64 = acc.values().sum();
        let dist = acc.into_iter().map(|(e, p)| (e.to_owned(), p / total)).collect();
        index.insert(m.clone(), dist);
    }
    index
}
