//! Prints the learned attribute attention of a few items after a short
//! training run, next to the uniform weights used when attention is off.

use kdar::graph::{build_collab_adjacency, build_kg_adjacency, InverseTripletPolicy};
use kdar::ingest::{prepare, PrepareOptions};
use kdar::model::{attention_weights, AblationFlags, Hyperparameters, KdarModel, KdarParams, ModelShape};
use kdar::numerics::Tape;
use kdar::synth::{generate, SynthConfig};
use kdar::train::{fit, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = prepare(&generate(&SynthConfig::default()).raw, &PrepareOptions::default())?;
    let cg = build_collab_adjacency(&data.table);
    let kg = build_kg_adjacency(&data.kg, InverseTripletPolicy::default());
    let hyper = Hyperparameters {
        dim: 16,
        learning_rate: 5e-3,
        batch_size: 512,
        ..Hyperparameters::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut store, params) = KdarParams::init::<f32, _>(&ModelShape::from_graphs(&cg, &kg), hyper.dim, &mut rng);
    let model = KdarModel::new(&cg, &kg, hyper.clone(), AblationFlags::NONE, params)?;
    let config = TrainConfig {
        epochs: 15,
        ..TrainConfig::default()
    };
    let best = fit(&config, &model, &mut store, &data.table)?.best;

    let attrs = model.attributes();
    let mut tape = Tape::new(&best);
    let (e, r) = (tape.param(params.entity), tape.param(params.relation));
    let (wk, wq) = (tape.param(params.w_k), tape.param(params.w_q));
    let learned = attention_weights(&mut tape, e, r, wk, wq, attrs, hyper.dim, false)?;
    let alpha = tape.value(learned.alpha).as_slice();

    let mut shown = 0;
    for (k, &item) in attrs.item.iter().enumerate() {
        if item as usize >= 5 {
            break;
        }
        if k == 0 || attrs.item[k - 1] != item {
            shown += 1;
            println!("item {} ({})", item, data.entities.token(item));
        }
        let (rel, tail) = (attrs.relation[k] as usize, attrs.tail[k]);
        let rel_name = data.relations.tokens().get(rel).map_or_else(
            || {
                format!(
                    "inverse of {}",
                    data.relations.token((rel - data.relations.tokens().len()) as u32)
                )
            },
            Clone::clone,
        );
        println!(
            "  {:<24} {:<16} alpha {:.4}  uniform {:.4}",
            rel_name,
            data.entities.token(tail),
            alpha[k],
            1.0 / attrs.counts[item as usize] as f32
        );
    }
    println!("{shown} items shown");
    Ok(())
}
