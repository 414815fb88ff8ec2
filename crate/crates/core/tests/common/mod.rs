#![allow(dead_code)]

pub mod oracles;

use kdar::graph::{build_collab_adjacency, build_kg_adjacency, CollabAdjacency, InverseTripletPolicy, KGAdjacency};
use kdar::ingest::{InteractionTable, KnowledgeGraphStore, Triplet};
use kdar::model::{AblationFlags, Hyperparameters, KdarModel, KdarParams, ModelShape};
use kdar::numerics::{ParameterStore, Real};
use kdar::train::TripletBatch;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// 6 users, 7 items (item 6 has no attributes), 11 entities, 3 relations,
/// 12 triplets.
#[rustfmt::skip]
pub fn fixture() -> (InteractionTable, KnowledgeGraphStore) {
    let train = vec![
        (0, 0), (0, 1), (0, 2),
        (1, 1), (1, 3),
        (2, 2), (2, 4), (2, 5),
        (3, 0), (3, 5),
        (4, 3), (4, 6),
        (5, 4),
    ];
    let test = vec![(0, 3), (1, 4), (2, 0), (3, 1), (4, 2), (5, 6), (5, 0)];
    let table = InteractionTable::from_pairs(6, 7, train, test).unwrap();
    let t = |head, relation, tail| Triplet { head, relation, tail };
    let kg = KnowledgeGraphStore::new(
        11,
        3,
        7,
        vec![
            t(0, 0, 7), t(0, 1, 8), t(1, 0, 7), t(1, 2, 9),
            t(2, 1, 8), t(2, 1, 10), t(3, 0, 9), t(4, 2, 10),
            t(5, 0, 7), t(5, 1, 9), t(7, 2, 10), t(8, 0, 9),
        ],
    )
    .unwrap();
    (table, kg)
}

pub fn fixture_batch() -> TripletBatch {
    TripletBatch::new(vec![0, 1, 2, 3, 4, 5], vec![0, 3, 4, 5, 6, 4], vec![6, 0, 1, 2, 0, 3])
}

pub fn graphs(table: &InteractionTable, kg: &KnowledgeGraphStore) -> (CollabAdjacency, KGAdjacency) {
    (
        build_collab_adjacency(table),
        build_kg_adjacency(kg, InverseTripletPolicy::default()),
    )
}

pub fn small_hyper() -> Hyperparameters {
    Hyperparameters {
        dim: 4,
        layers: 2,
        tau: 0.5,
        lambda1: 1.0,
        lambda2: 0.5,
        lambda3: 0.01,
        learning_rate: 0.01,
        batch_size: 4,
    }
}

pub fn fixture_model<T: Real>(
    hyper: Hyperparameters,
    flags: AblationFlags,
    seed: u64,
) -> (KdarModel<T>, ParameterStore<T>) {
    let (table, kg) = fixture();
    let (cg, kga) = graphs(&table, &kg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (store, params) = KdarParams::init::<T, _>(&ModelShape::from_graphs(&cg, &kga), hyper.dim, &mut rng);
    (KdarModel::new(&cg, &kga, hyper, flags, params).unwrap(), store)
}

/// Random small dataset: at most 6 users and 5 items (11 CG nodes), at most
/// 10 entities and 3 relations.
pub fn random_data(seed: u64) -> (InteractionTable, KnowledgeGraphStore) {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nu = rng.gen_range(1..=6);
    let ni = rng.gen_range(1..=5);
    let ne = ni + rng.gen_range(0..=5);
    let nr = rng.gen_range(1..=3);
    let mut train = Vec::new();
    for u in 0..nu as u32 {
        for i in 0..ni as u32 {
            if rng.gen_bool(0.4) {
                train.push((u, i));
            }
        }
    }
    let table = InteractionTable::from_pairs(nu, ni, train, vec![]).unwrap();
    let mut triplets: Vec<Triplet> = (0..rng.gen_range(0..14))
        .map(|_| Triplet {
            head: rng.gen_range(0..ne as u32),
            relation: rng.gen_range(0..nr as u32),
            tail: rng.gen_range(0..ne as u32),
        })
        .collect();
    triplets.sort_unstable();
    triplets.dedup();
    let kg = KnowledgeGraphStore::new(ne, nr, ni, triplets).unwrap();
    (table, kg)
}

pub fn model_for<T: Real>(
    table: &InteractionTable,
    kg: &KnowledgeGraphStore,
    hyper: Hyperparameters,
    flags: AblationFlags,
    seed: u64,
) -> (KdarModel<T>, ParameterStore<T>) {
    let (cg, kga) = graphs(table, kg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (store, params) = KdarParams::init::<T, _>(&ModelShape::from_graphs(&cg, &kga), hyper.dim, &mut rng);
    (KdarModel::new(&cg, &kga, hyper, flags, params).unwrap(), store)
}
