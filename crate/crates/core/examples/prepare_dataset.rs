//! Runs the ingest pipeline on raw text files and writes a processed
//! dataset directory.
//!
//! ```text
//! cargo run --example prepare_dataset -- <interactions.txt> <kg.txt> <out-dir>
//! cargo run --example prepare_dataset -- <dir>
//! ```
//!
//! With a single directory (or no arguments, using a temporary directory) a
//! synthetic raw dataset is generated into `<dir>/raw` and processed into
//! `<dir>/processed`.

use std::path::PathBuf;

use kdar::ingest::{
    load_interactions, load_kg, load_processed, prepare, write_processed, InteractionFormat, PrepareOptions,
};
use kdar::synth::{generate, write_raw, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<PathBuf> = std::env::args_os().skip(1).map(PathBuf::from).collect();
    let (interactions, kg, out) = match args.as_slice() {
        [i, k, o] => (i.clone(), k.clone(), o.clone()),
        [] | [_] => {
            let dir = args
                .first()
                .cloned()
                .unwrap_or_else(|| std::env::temp_dir().join("kdar-prepare-example"));
            write_raw(dir.join("raw"), &generate(&SynthConfig::default()).raw)?;
            (
                dir.join("raw/interactions.txt"),
                dir.join("raw/kg.txt"),
                dir.join("processed"),
            )
        }
        _ => return Err("usage: prepare_dataset [<dir> | <interactions> <kg> <out-dir>]".into()),
    };

    let raw = load_interactions(&interactions, InteractionFormat::PairList)?.with_kg(load_kg(&kg)?);
    let prepared = prepare(&raw, &PrepareOptions::default())?;
    print!("{}", prepared.report.to_text());
    write_processed(&out, &prepared, true)?;

    let reloaded = load_processed(&out)?;
    assert_eq!(reloaded.stats, prepared.stats);
    println!("wrote {}", out.display());
    print!("{}", reloaded.stats.to_text());
    Ok(())
}
