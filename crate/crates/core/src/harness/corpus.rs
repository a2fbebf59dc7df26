use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A mention span `tokens[start..end]`, optionally annotated with its gold entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub start: usize,
    pub end: usize,
    pub surface: String,
    #[serde(default)]
    pub gold: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub tokens: Vec<String>,
    pub mentions: Vec<Mention>,
}

impl Document {
    /// Sorts mentions by start offset and checks spans: in bounds,
    /// non-empty, and no two gold-annotated mentions overlapping.
    pub fn validate(&mut self) -> Result<()> {
        self.mentions.sort_by_key(|m| (m.start, m.end));
        let n = self.tokens.len();
        for m in &self.mentions {
            if m.start >= m.end || m.end > n {
                return Err(Error::invalid(format!(
                    "document `{}`: mention `{}` span {}..{} outside 0..{n}",
                    self.id, m.surface, m.start, m.end
                )));
            }
        }
        let mut last_end = 0;
        for m in self.mentions.iter().filter(|m| m.gold.is_some()) {
            if m.start < last_end {
                return Err(Error::invalid(format!(
                    "document `{}`: mention `{}` at {} overlaps the previous annotated mention",
                    self.id, m.surface, m.start
                )));
            }
            last_end = m.end;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    JsonLines,
    ColumnText,
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" | "json-lines" => Ok(Self::JsonLines),
            "conll" | "column" | "column-text" => Ok(Self::ColumnText),
            other => Err(Error::invalid(format!("unknown corpus format `{other}`"))),
        }
    }
}

impl CorpusFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("conll") | Some("tsv") | Some("txt") => Self::ColumnText,
            _ => Self::JsonLines,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub split: Split,
    pub docs: Vec<Document>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorpusStats {
    pub docs: usize,
    pub mentions: usize,
    pub gold_mentions: usize,
    pub mentions_per_doc: f64,
}

impl Corpus {
    pub fn new(split: Split, docs: Vec<Document>) -> Self {
        Self { split, docs }
    }

    pub fn stats(&self) -> CorpusStats {
        let mentions: usize = self.docs.iter().map(|d| d.mentions.len()).sum();
        let gold = self.docs.iter().flat_map(|d| &d.mentions).filter(|m| m.gold.is_some()).count();
        let per = if self.docs.is_empty() { 0.0 } else { mentions as f64 / self.docs.len() as f64 };
        CorpusStats { docs: self.docs.len(), mentions, gold_mentions: gold, mentions_per_doc: per }
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        for d in &self.docs {
            serde_json::to_writer(&mut w, d)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Document ids shared between corpora; splits must be disjoint.
pub fn check_disjoint(corpora: &[&Corpus]) -> Result<()> {
    let mut seen = std::collections::HashMap::new();
    for c in corpora {
        for d in &c.docs {
            if let Some(prev) = seen.insert(d.id.as_str(), c.split) {
                if prev != c.split {
                    return Err(Error::invalid(format!("document `{}` appears in two splits", d.id)));
                }
            }
        }
    }
    Ok(())
}

pub fn load_corpus(path: &Path, format: CorpusFormat, split: Split) -> Result<Corpus> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(f);
    let name = path.display().to_string();
    let mut docs = match format {
        CorpusFormat::JsonLines => read_jsonl(reader, &name, path)?,
        CorpusFormat::ColumnText => read_columns(reader, &name, path)?,
    };
    for d in &mut docs {
        d.validate()?;
    }
    Ok(Corpus { split, docs })
}

fn read_jsonl<R: BufRead>(reader: R, name: &str, path: &Path) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let d: Document = serde_json::from_str(&line).map_err(|e| Error::parse(name, i + 1, e.to_string()))?;
        docs.push(d);
    }
    Ok(docs)
}

/// CoNLL-style columns: `-DOCSTART- <id>` opens a document; every other
/// non-blank line is `token [TAB B|I TAB surface TAB gold]`. `B` opens a
/// mention, `I` extends it; a gold of `--NME--` or `-` means unannotated.
fn read_columns<R: BufRead>(reader: R, name: &str, path: &Path) -> Result<Vec<Document>> {
    let mut docs: Vec<Document> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("-DOCSTART-") {
            let id = rest.trim().trim_matches(|c| c == '(' || c == ')');
            let id = if id.is_empty() { format!("doc{}", docs.len()) } else { id.to_owned() };
            docs.push(Document { id, tokens: Vec::new(), mentions: Vec::new() });
            continue;
        }
        let Some(doc) = docs.last_mut() else {
            return Err(Error::parse(name, i + 1, "token before the first -DOCSTART- line"));
        };
        let cols: Vec<&str> = line.split('\t').collect();
        let pos = doc.tokens.len();
        doc.tokens.push(cols[0].to_owned());
        match cols.get(1).copied() {
            None | Some("") | Some("O") => {}
            Some("B") => {
                let surface = cols.get(2).map_or_else(|| cols[0].to_owned(), |s| s.to_string());
                let gold = cols.get(3).map(|g| g.trim()).filter(|g| !g.is_empty() && *g != "--NME--" && *g != "-");
                doc.mentions.push(Mention { start: pos, end: pos + 1, surface, gold: gold.map(str::to_owned) });
            }
            Some("I") => match doc.mentions.last_mut() {
                Some(m) if m.end == pos => m.end += 1,
                _ => return Err(Error::parse(name, i + 1, "`I` tag without an open mention")),
            },
            Some(other) => return Err(Error::parse(name, i + 1, format!("unknown tag `{other}`"))),
        }
    }
    Ok(docs)
}
