//! Trains briefly, then splits the test users into cold-start and long-tail
//! terciles and reports each group.

use kdar::eval::{evaluate, group_report, GroupMode};
use kdar::graph::{build_collab_adjacency, build_kg_adjacency, InverseTripletPolicy};
use kdar::ingest::{prepare, PrepareOptions};
use kdar::model::{AblationFlags, Hyperparameters, KdarModel, KdarParams, ModelShape};
use kdar::synth::{generate, SynthConfig};
use kdar::train::{fit, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = prepare(&generate(&SynthConfig::default()).raw, &PrepareOptions::default())?;
    let cg = build_collab_adjacency(&data.table);
    let kg = build_kg_adjacency(&data.kg, InverseTripletPolicy::default());
    let hyper = Hyperparameters {
        dim: 32,
        learning_rate: 5e-3,
        batch_size: 512,
        ..Hyperparameters::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut store, params) = KdarParams::init::<f32, _>(&ModelShape::from_graphs(&cg, &kg), hyper.dim, &mut rng);
    let model = KdarModel::new(&cg, &kg, hyper, AblationFlags::NONE, params)?;
    let config = TrainConfig {
        epochs: 20,
        ..TrainConfig::default()
    };
    let result = fit(&config, &model, &mut store, &data.table)?;

    let report = evaluate(&model.embeddings(&result.best)?, &data.table, &[10, 20])?;
    print!("{}", report.to_table());
    for mode in [GroupMode::ColdStart, GroupMode::LongTail] {
        println!();
        print!("{}", group_report(&report, mode).to_table());
    }
    Ok(())
}
