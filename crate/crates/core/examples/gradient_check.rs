//! Central-difference check of the full training loss in `f64` on a small
//! synthetic dataset.

use kdar::graph::{build_collab_adjacency, build_kg_adjacency, InverseTripletPolicy};
use kdar::ingest::{prepare, PrepareOptions};
use kdar::model::{AblationFlags, Hyperparameters, KdarModel, KdarParams, ModelShape};
use kdar::numerics::finite_difference_check;
use kdar::synth::{generate, SynthConfig};
use kdar::train::sample_epoch_batches;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let synth = SynthConfig {
        users: 12,
        items: 15,
        clusters: 2,
        min_interactions: 5,
        max_interactions: 8,
        ..SynthConfig::default()
    };
    let data = prepare(&generate(&synth).raw, &PrepareOptions::default())?;
    let cg = build_collab_adjacency(&data.table);
    let kg = build_kg_adjacency(&data.kg, InverseTripletPolicy::default());
    let hyper = Hyperparameters {
        dim: 6,
        layers: 2,
        tau: 0.5,
        lambda2: 0.5,
        lambda3: 1e-2,
        batch_size: 16,
        ..Hyperparameters::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut store, params) = KdarParams::init::<f64, _>(&ModelShape::from_graphs(&cg, &kg), hyper.dim, &mut rng);
    let batch = sample_epoch_batches(&data.table, hyper.batch_size, &mut rng)
        .batches
        .remove(0);

    for (name, flags) in AblationFlags::VARIANTS {
        let model = KdarModel::new(&cg, &kg, hyper.clone(), flags, params)?;
        let report = finite_difference_check(
            |tape| {
                let reps = model.forward(tape)?;
                Ok(model.loss(tape, &reps, &batch)?.total)
            },
            &mut store,
            400,
            1e-5,
            1e-4,
            3,
        )?;
        println!(
            "{name:<16} checked {:>4} of {}  max error {:.2e}  failures {}",
            report.checked,
            store.num_coords(),
            report.max_error,
            report.failures.len()
        );
    }
    Ok(())
}
