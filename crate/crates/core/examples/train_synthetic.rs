//! Trains KDAR on a planted synthetic dataset and prints the metric history.
//!
//! ```text
//! cargo run --release --example train_synthetic
//! ```

use kdar::graph::{build_collab_adjacency, build_kg_adjacency, InverseTripletPolicy};
use kdar::ingest::{prepare, PrepareOptions};
use kdar::model::{AblationFlags, Hyperparameters, KdarModel, KdarParams, ModelShape};
use kdar::synth::{generate, SynthConfig};
use kdar::train::{fit, history_tsv, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();

    let data = prepare(&generate(&SynthConfig::default()).raw, &PrepareOptions::default())?;
    print!("{}", data.stats.to_text());

    let cg = build_collab_adjacency(&data.table);
    let kg = build_kg_adjacency(&data.kg, InverseTripletPolicy::default());
    let hyper = Hyperparameters {
        dim: 32,
        learning_rate: 5e-3,
        batch_size: 512,
        ..Hyperparameters::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut store, params) = KdarParams::init::<f32, _>(&ModelShape::from_graphs(&cg, &kg), hyper.dim, &mut rng);
    let model = KdarModel::new(&cg, &kg, hyper, AblationFlags::NONE, params)?;

    let config = TrainConfig {
        epochs: 60,
        eval_every: 5,
        patience: 3,
        ..TrainConfig::default()
    };
    let result = fit(&config, &model, &mut store, &data.table)?;
    print!("{}", history_tsv(&result.history));
    println!("best epoch {}", result.best_epoch);
    print!("{}", result.best_report.to_table());
    Ok(())
}
