//! On-disk layout of a prepared dataset:
//!
//! ```text
//! train.txt   test.txt   "user_id item_id"
//! kg.txt                 "head_id relation_id tail_id"
//! stats.txt              key=value
//! pipeline.txt           per-stage counts, key=value
//! id_maps/{users,entities,relations}.txt   "id<TAB>token"
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{DatasetStats, IngestError, InteractionTable, KnowledgeGraphStore, PreparedDataset, Triplet};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProcessedDataset {
    pub table: InteractionTable,
    pub kg: KnowledgeGraphStore,
    pub stats: DatasetStats,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: PathBuf, contents: &str) -> Result<(), IngestError> {
    fs::write(&path, contents).map_err(io_err(&path))
}

fn pairs_text(pairs: &[(u32, u32)]) -> String {
    let mut s = String::with_capacity(pairs.len() * 10);
    for (u, i) in pairs {
        let _ = writeln!(s, "{u} {i}");
    }
    s
}

/// Writes `data` under `dir`. An existing non-empty directory is refused
/// unless `force` is set.
pub fn write_processed(dir: impl AsRef<Path>, data: &PreparedDataset, force: bool) -> Result<(), IngestError> {
    let dir = dir.as_ref();
    if dir.exists() {
        let non_empty = fs::read_dir(dir).map_err(io_err(dir))?.next().is_some();
        if non_empty && !force {
            return Err(IngestError::OutputExists(dir.to_path_buf()));
        }
    }
    let maps = dir.join("id_maps");
    fs::create_dir_all(&maps).map_err(io_err(&maps))?;

    write_file(dir.join("train.txt"), &pairs_text(&data.table.train_pairs))?;
    write_file(dir.join("test.txt"), &pairs_text(&data.table.test_pairs))?;
    let mut kg = String::with_capacity(data.kg.triplets.len() * 14);
    for t in &data.kg.triplets {
        let _ = writeln!(kg, "{} {} {}", t.head, t.relation, t.tail);
    }
    write_file(dir.join("kg.txt"), &kg)?;
    write_file(dir.join("stats.txt"), &data.stats.to_text())?;
    write_file(dir.join("pipeline.txt"), &data.report.to_text())?;
    write_file(maps.join("users.txt"), &data.users.to_text())?;
    write_file(maps.join("entities.txt"), &data.entities.to_text())?;
    write_file(maps.join("relations.txt"), &data.relations.to_text())?;
    Ok(())
}

fn read(path: PathBuf) -> Result<String, IngestError> {
    fs::read_to_string(&path).map_err(io_err(&path))
}

fn parse_ids<const N: usize>(text: &str, name: &str) -> Result<Vec<[u32; N]>, IngestError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        let err = |message: String| IngestError::Parse {
            source_name: name.to_string(),
            line: n + 1,
            message,
        };
        if toks.len() != N {
            return Err(err(format!("expected {N} ids, found {}", toks.len())));
        }
        let mut row = [0u32; N];
        for (slot, tok) in row.iter_mut().zip(&toks) {
            *slot = tok.parse().map_err(|_| err(format!("`{tok}` is not an id")))?;
        }
        out.push(row);
    }
    Ok(out)
}

pub fn load_processed(dir: impl AsRef<Path>) -> Result<ProcessedDataset, IngestError> {
    let dir = dir.as_ref();
    let stats = DatasetStats::parse(&read(dir.join("stats.txt"))?)?;
    let train: Vec<(u32, u32)> = parse_ids::<2>(&read(dir.join("train.txt"))?, "train.txt")?
        .into_iter()
        .map(|[u, i]| (u, i))
        .collect();
    let test: Vec<(u32, u32)> = parse_ids::<2>(&read(dir.join("test.txt"))?, "test.txt")?
        .into_iter()
        .map(|[u, i]| (u, i))
        .collect();
    let triplets: Vec<Triplet> = parse_ids::<3>(&read(dir.join("kg.txt"))?, "kg.txt")?
        .into_iter()
        .map(|[head, relation, tail]| Triplet { head, relation, tail })
        .collect();
    let table = InteractionTable::from_pairs(stats.users, stats.items, train, test)?;
    let kg = KnowledgeGraphStore::new(stats.entities, stats.relations, stats.items, triplets)?;
    if table.train_pairs.len() != stats.train_interactions
        || table.test_pairs.len() != stats.test_interactions
        || kg.triplets.len() != stats.triplets
    {
        return Err(IngestError::Processed(format!(
            "{}: file contents disagree with stats.txt",
            dir.display()
        )));
    }
    Ok(ProcessedDataset { table, kg, stats })
}
