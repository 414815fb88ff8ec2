//! Saves parameters and Adam state mid-training, restores them into a fresh
//! store and shows that the resumed run matches the uninterrupted one.

use kdar::graph::{build_collab_adjacency, build_kg_adjacency, InverseTripletPolicy};
use kdar::ingest::{prepare, PrepareOptions};
use kdar::model::{AblationFlags, Hyperparameters, KdarModel, KdarParams, ModelShape};
use kdar::numerics::{checkpoint, AdamState};
use kdar::synth::{generate, SynthConfig};
use kdar::train::{sample_epoch_batches, train_epoch, TripletBatch};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = prepare(&generate(&SynthConfig::default()).raw, &PrepareOptions::default())?;
    let cg = build_collab_adjacency(&data.table);
    let kg = build_kg_adjacency(&data.kg, InverseTripletPolicy::default());
    let shape = ModelShape::from_graphs(&cg, &kg);
    let hyper = Hyperparameters {
        dim: 16,
        learning_rate: 5e-3,
        batch_size: 512,
        ..Hyperparameters::default()
    };
    let (mut store, params) = KdarParams::init::<f32, _>(&shape, hyper.dim, &mut ChaCha8Rng::seed_from_u64(8));
    let model = KdarModel::new(&cg, &kg, hyper.clone(), AblationFlags::NONE, params)?;

    let mut sampler = ChaCha8Rng::seed_from_u64(9);
    let epochs: Vec<Vec<TripletBatch>> = (0..6)
        .map(|_| sample_epoch_batches(&data.table, hyper.batch_size, &mut sampler).batches)
        .collect();

    let mut adam = AdamState::new(&store);
    for batches in &epochs[..3] {
        train_epoch(&model, &mut store, &mut adam, batches)?;
    }
    let path = std::env::temp_dir().join("kdar-resume-example.kdar");
    checkpoint::save(&path, &store, Some(&adam))?;
    println!("saved {} after {} steps", path.display(), adam.step_count());

    for batches in &epochs[3..] {
        let l = train_epoch(&model, &mut store, &mut adam, batches)?;
        println!("uninterrupted  loss {:.6}", l.total);
    }

    let (mut resumed, _) = KdarParams::init::<f32, _>(&shape, hyper.dim, &mut ChaCha8Rng::seed_from_u64(0));
    let mut resumed_adam = AdamState::new(&resumed);
    checkpoint::load(&path, &mut resumed, Some(&mut resumed_adam))?;
    for batches in &epochs[3..] {
        let l = train_epoch(&model, &mut resumed, &mut resumed_adam, batches)?;
        println!("resumed        loss {:.6}", l.total);
    }
    println!("final parameters identical: {}", resumed == store);
    Ok(())
}
