use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::IngestError;

/// How an interaction file encodes positives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InteractionFormat {
    /// `user item` per line.
    PairList,
    /// `user item rating [...]`; rows with `rating >= threshold` are kept.
    RatingThreshold(f64),
}

/// Token-level dataset before filtering and remapping.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawDataset {
    /// Deduplicated `(user, item)` pairs in first-seen order.
    pub interactions: Vec<(String, String)>,
    /// Deduplicated `(head, relation, tail)` triplets in first-seen order.
    pub triplets: Vec<(String, String, String)>,
    pub duplicate_interactions: usize,
    pub duplicate_triplets: usize,
}

impl RawDataset {
    pub fn with_kg(mut self, kg: RawKg) -> Self {
        self.triplets = kg.triplets;
        self.duplicate_triplets = kg.duplicates;
        self
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawKg {
    pub triplets: Vec<(String, String, String)>,
    pub duplicates: usize,
}

fn open(path: &Path) -> Result<BufReader<File>, IngestError> {
    File::open(path).map(BufReader::new).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn lines<'a, R: BufRead + 'a>(
    reader: R,
    source_name: &'a str,
) -> impl Iterator<Item = Result<(usize, String), IngestError>> + 'a {
    reader.lines().enumerate().filter_map(move |(n, l)| match l {
        Ok(l) if l.trim().is_empty() => None,
        Ok(l) => Some(Ok((n + 1, l))),
        Err(e) => Some(Err(IngestError::Parse {
            source_name: source_name.to_string(),
            line: n + 1,
            message: e.to_string(),
        })),
    })
}

pub fn parse_interactions<R: BufRead>(
    reader: R,
    format: InteractionFormat,
    source_name: &str,
) -> Result<RawDataset, IngestError> {
    let mut seen = HashSet::new();
    let mut out = RawDataset::default();
    let mut rows = 0usize;
    for line in lines(reader, source_name) {
        let (n, line) = line?;
        rows += 1;
        let toks: Vec<&str> = line.split_whitespace().collect();
        let err = |message: String| IngestError::Parse {
            source_name: source_name.to_string(),
            line: n,
            message,
        };
        let keep = match format {
            InteractionFormat::PairList => {
                if toks.len() != 2 {
                    return Err(err(format!("expected `user item`, found {} fields", toks.len())));
                }
                true
            }
            InteractionFormat::RatingThreshold(threshold) => {
                if toks.len() < 3 {
                    return Err(err(format!("expected `user item rating`, found {} fields", toks.len())));
                }
                let rating: f64 = toks[2]
                    .parse()
                    .map_err(|_| err(format!("rating `{}` is not a number", toks[2])))?;
                rating >= threshold
            }
        };
        if !keep {
            continue;
        }
        let pair = (toks[0].to_string(), toks[1].to_string());
        if seen.insert(pair.clone()) {
            out.interactions.push(pair);
        } else {
            out.duplicate_interactions += 1;
        }
    }
    if rows == 0 {
        return Err(IngestError::EmptyDataset(source_name.to_string()));
    }
    if out.duplicate_interactions > 0 {
        log::info!(
            "{source_name}: dropped {} repeated interactions",
            out.duplicate_interactions
        );
    }
    Ok(out)
}

pub fn load_interactions(path: impl AsRef<Path>, format: InteractionFormat) -> Result<RawDataset, IngestError> {
    let path = path.as_ref();
    parse_interactions(open(path)?, format, &path.display().to_string())
}

pub fn parse_kg<R: BufRead>(reader: R, source_name: &str) -> Result<RawKg, IngestError> {
    let mut seen = HashSet::new();
    let mut out = RawKg::default();
    for line in lines(reader, source_name) {
        let (n, line) = line?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(IngestError::Parse {
                source_name: source_name.to_string(),
                line: n,
                message: format!("expected `head relation tail`, found {} fields", toks.len()),
            });
        }
        let t = (toks[0].to_string(), toks[1].to_string(), toks[2].to_string());
        if seen.insert(t.clone()) {
            out.triplets.push(t);
        } else {
            out.duplicates += 1;
        }
    }
    log::info!(
        "{source_name}: {} triplets ({} duplicates removed)",
        out.triplets.len(),
        out.duplicates
    );
    Ok(out)
}

pub fn load_kg(path: impl AsRef<Path>) -> Result<RawKg, IngestError> {
    let path = path.as_ref();
    parse_kg(open(path)?, &path.display().to_string())
}
