//! The KDAR computation graph.
//!
//! A forward pass records every representation for all users, items and
//! entities on one [`Tape`]: collaborative propagation, relation-aware KG
//! propagation, attribute attention, the two attribute-based
//! representations, dual-side enhancement and the final concatenated
//! representations. [`KdarModel::loss`] then adds the BPR, auxiliary BPR,
//! alignment and L2 terms for a [`TripletBatch`].

mod attention;
mod losses;
mod propagate;

use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::graph::{AttributeList, CollabAdjacency, EdgeList, KGAdjacency};
use crate::numerics::{Gradients, NodeId, NumericsError, ParamId, ParameterStore, Real, Tape, Tensor};
use crate::train::TripletBatch;

pub use attention::{attention_weights, attribute_fusion, attribute_sum, user_preference, AttributeAttention};
pub use losses::{alignment_loss, average, combine, l2_batch, loss_bpr, loss_bpr_cf, loss_gac, loss_pac, predict};
pub use propagate::{propagate_cg, propagate_kg, propagate_user_kg, sum_layers, SegmentIndex};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid hyperparameter `{field}`: {message}")]
    InvalidHyperparameter { field: &'static str, message: String },
    #[error("parameter `{name}` has shape {found:?}, expected {expected:?}")]
    ParameterShape {
        name: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("missing parameter `{0}`")]
    MissingParameter(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hyperparameters {
    pub dim: usize,
    pub layers: usize,
    pub tau: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            dim: 64,
            layers: 3,
            tau: 1.0,
            lambda1: 1.0,
            lambda2: 0.1,
            lambda3: 1e-5,
            learning_rate: 1e-4,
            batch_size: 2048,
        }
    }
}

impl Hyperparameters {
    /// Every violated constraint, in field order.
    pub fn violations(&self) -> Vec<ModelError> {
        let mut out = Vec::new();
        let mut bad = |field, message: &str| {
            out.push(ModelError::InvalidHyperparameter {
                field,
                message: message.to_string(),
            })
        };
        if self.dim == 0 {
            bad("dim", "must be at least 1");
        }
        if self.layers == 0 {
            bad("layers", "must be at least 1");
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            bad("tau", "must be positive");
        }
        for (field, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("learning_rate", self.learning_rate),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                bad(field, "must be finite and non-negative");
            }
        }
        if self.batch_size == 0 {
            bad("batch_size", "must be at least 1");
        }
        out
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match self.violations().into_iter().next() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

/// Independent switches for the four ablated variants.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct AblationFlags {
    /// Use `e^C` in place of the enhanced representations.
    pub no_enhancement: bool,
    /// Uniform attribute weights.
    pub no_attention: bool,
    /// Drop both alignment losses.
    pub no_cl: bool,
    /// Score with the KG representations only.
    pub no_cg: bool,
}

impl AblationFlags {
    pub const VARIANTS: [(&'static str, AblationFlags); 5] = [
        ("full", AblationFlags::NONE),
        (
            "w/o Enhancement",
            AblationFlags {
                no_enhancement: true,
                ..AblationFlags::NONE
            },
        ),
        (
            "w/o ATTN",
            AblationFlags {
                no_attention: true,
                ..AblationFlags::NONE
            },
        ),
        (
            "w/o CL",
            AblationFlags {
                no_cl: true,
                ..AblationFlags::NONE
            },
        ),
        (
            "w/o CG",
            AblationFlags {
                no_cg: true,
                ..AblationFlags::NONE
            },
        ),
    ];

    pub const NONE: AblationFlags = AblationFlags {
        no_enhancement: false,
        no_attention: false,
        no_cl: false,
        no_cg: false,
    };
}

/// Table sizes needed to allocate parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelShape {
    pub num_users: usize,
    pub num_items: usize,
    pub num_entities: usize,
    pub num_relations: usize,
}

impl ModelShape {
    pub fn from_graphs(cg: &CollabAdjacency, kg: &KGAdjacency) -> Self {
        Self {
            num_users: cg.num_users(),
            num_items: cg.num_items(),
            num_entities: kg.num_entities(),
            num_relations: kg.num_relations,
        }
    }
}

/// Ids of the six trainable tensors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KdarParams {
    pub user_cf: ParamId,
    pub item_cf: ParamId,
    pub entity: ParamId,
    pub relation: ParamId,
    pub w_k: ParamId,
    pub w_q: ParamId,
}

impl KdarParams {
    pub const NAMES: [&'static str; 6] = ["user_cf_emb", "item_cf_emb", "entity_emb", "relation_emb", "w_k", "w_q"];

    /// Allocates all parameters with Xavier-uniform values.
    pub fn init<T: Real, R: Rng>(shape: &ModelShape, dim: usize, rng: &mut R) -> (ParameterStore<T>, Self) {
        let mut store = ParameterStore::new();
        let user_cf = store.add_xavier("user_cf_emb", shape.num_users, dim, rng);
        let item_cf = store.add_xavier("item_cf_emb", shape.num_items, dim, rng);
        let entity = store.add_xavier("entity_emb", shape.num_entities, dim, rng);
        let relation = store.add_xavier("relation_emb", shape.num_relations, dim, rng);
        let w_k = store.add_xavier("w_k", dim, dim, rng);
        let w_q = store.add_xavier("w_q", dim, dim, rng);
        (
            store,
            Self {
                user_cf,
                item_cf,
                entity,
                relation,
                w_k,
                w_q,
            },
        )
    }

    /// Looks the parameters up by name and checks their shapes.
    pub fn bind<T: Real>(store: &ParameterStore<T>, shape: &ModelShape, dim: usize) -> Result<Self, ModelError> {
        let expected = [
            (shape.num_users, dim),
            (shape.num_items, dim),
            (shape.num_entities, dim),
            (shape.num_relations, dim),
            (dim, dim),
            (dim, dim),
        ];
        let mut ids = [ParamId(0); 6];
        for (k, (name, exp)) in Self::NAMES.iter().zip(expected).enumerate() {
            let id = store
                .id(name)
                .ok_or_else(|| ModelError::MissingParameter(name.to_string()))?;
            let found = store.get(id).shape();
            if found != exp {
                return Err(ModelError::ParameterShape {
                    name: name.to_string(),
                    expected: exp,
                    found,
                });
            }
            ids[k] = id;
        }
        Ok(Self {
            user_cf: ids[0],
            item_cf: ids[1],
            entity: ids[2],
            relation: ids[3],
            w_k: ids[4],
            w_q: ids[5],
        })
    }
}

/// Node ids of every representation produced by a forward pass.
#[derive(Clone, Debug)]
pub struct RepresentationBundle {
    pub e_u_c: NodeId,
    pub e_i_c: NodeId,
    /// KG representations of all entities (items first).
    pub e_h_k: NodeId,
    pub e_i_k: NodeId,
    pub e_u_k: NodeId,
    pub alpha: NodeId,
    pub e_u_p: NodeId,
    pub e_i_a: NodeId,
    pub e_u_e: NodeId,
    pub e_i_e: NodeId,
    pub e_u_star: NodeId,
    pub e_i_star: NodeId,
}

/// Component losses as plain numbers.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub l_bpr: f64,
    pub l_bpr_c: f64,
    pub l_gac: f64,
    pub l_pac: f64,
    pub l_reg: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn scaled(self, c: f64) -> Self {
        Self {
            l_bpr: self.l_bpr * c,
            l_bpr_c: self.l_bpr_c * c,
            l_gac: self.l_gac * c,
            l_pac: self.l_pac * c,
            l_reg: self.l_reg * c,
            total: self.total * c,
        }
    }
}

impl std::ops::Add for LossBreakdown {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            l_bpr: self.l_bpr + o.l_bpr,
            l_bpr_c: self.l_bpr_c + o.l_bpr_c,
            l_gac: self.l_gac + o.l_gac,
            l_pac: self.l_pac + o.l_pac,
            l_reg: self.l_reg + o.l_reg,
            total: self.total + o.total,
        }
    }
}

/// Loss node ids on a tape.
#[derive(Clone, Copy, Debug)]
pub struct LossNodes {
    pub bpr: NodeId,
    pub bpr_c: NodeId,
    pub gac: NodeId,
    pub pac: NodeId,
    pub reg: NodeId,
    pub total: NodeId,
}

impl LossNodes {
    pub fn read<T: Real>(&self, tape: &Tape<'_, T>) -> LossBreakdown {
        let v = |n| tape.scalar(n).map_or(f64::NAN, Real::as_f64);
        LossBreakdown {
            l_bpr: v(self.bpr),
            l_bpr_c: v(self.bpr_c),
            l_gac: v(self.gac),
            l_pac: v(self.pac),
            l_reg: v(self.reg),
            total: v(self.total),
        }
    }
}

/// Final user and item representations, detached from any tape.
#[derive(Clone, Debug, PartialEq)]
pub struct Embeddings<T> {
    pub users: Tensor<T>,
    pub items: Tensor<T>,
}

impl<T: Real> Embeddings<T> {
    /// Scores of `user` against every item.
    pub fn score_all(&self, user: u32) -> Vec<T> {
        let u = self.users.row(user as usize);
        (0..self.items.rows())
            .map(|i| crate::numerics::dot(u, self.items.row(i)))
            .collect()
    }

    pub fn score(&self, user: u32, item: u32) -> T {
        crate::numerics::dot(self.users.row(user as usize), self.items.row(item as usize))
    }
}

/// Graph structure converted to the element type `T`, plus hyperparameters
/// and ablation flags.
#[derive(Clone, Debug)]
pub struct KdarModel<T> {
    pub hyper: Hyperparameters,
    pub flags: AblationFlags,
    pub shape: ModelShape,
    pub params: KdarParams,
    into_users: SegmentIndex<T>,
    into_items: SegmentIndex<T>,
    kg_edges: SegmentIndex<T>,
    kg_relation: Arc<[u32]>,
    /// Into users from items, weight `1 / |N_u|`.
    history: SegmentIndex<T>,
    attributes: AttributeList,
    has_attributes: Vec<bool>,
}

impl<T: Real> KdarModel<T> {
    pub fn new(
        cg: &CollabAdjacency,
        kg: &KGAdjacency,
        hyper: Hyperparameters,
        flags: AblationFlags,
        params: KdarParams,
    ) -> Result<Self, ModelError> {
        hyper.validate()?;
        let shape = ModelShape::from_graphs(cg, kg);
        assert_eq!(
            shape.num_items, kg.num_items,
            "collaborative and knowledge graphs disagree on the item count"
        );
        let hist = &cg.into_users;
        let history_weights: Vec<f64> = hist
            .segment
            .iter()
            .map(|&u| 1.0 / cg.user_neighbors[u as usize].len() as f64)
            .collect();
        let history = EdgeList {
            segment: hist.segment.clone(),
            source: hist.source.clone(),
            weight: history_weights.into(),
        };
        Ok(Self {
            hyper,
            flags,
            shape,
            params,
            into_users: SegmentIndex::from_edges(&cg.into_users, shape.num_users),
            into_items: SegmentIndex::from_edges(&cg.into_items, shape.num_items),
            kg_edges: SegmentIndex::from_edges(&kg.edges, shape.num_entities),
            kg_relation: kg.edge_relation.clone(),
            history: SegmentIndex::from_edges(&history, shape.num_users),
            has_attributes: kg.attributes.counts.iter().map(|&c| c > 0).collect(),
            attributes: kg.attributes.clone(),
        })
    }

    pub fn attributes(&self) -> &AttributeList {
        &self.attributes
    }

    /// Records the full forward pass.
    pub fn forward(&self, tape: &mut Tape<'_, T>) -> Result<RepresentationBundle, NumericsError> {
        let p = self.params;
        let (nu, ni) = (self.shape.num_users, self.shape.num_items);
        let users0 = tape.param(p.user_cf);
        let items0 = tape.param(p.item_cf);
        let entities0 = tape.param(p.entity);
        let relations = tape.param(p.relation);
        let w_k = tape.param(p.w_k);
        let w_q = tape.param(p.w_q);
        let layers = self.hyper.layers;

        let (e_u_c, e_i_c) = propagate_cg(tape, users0, items0, &self.into_users, &self.into_items, layers)?;

        let kg_layers = propagate_kg(tape, entities0, relations, &self.kg_edges, &self.kg_relation, layers)?;
        let e_h_k = sum_layers(tape, &kg_layers)?;
        let e_i_k = tape.row_range(e_h_k, 0, ni)?;
        let item_layers = kg_layers
            .iter()
            .map(|&l| tape.row_range(l, 0, ni))
            .collect::<Result<Vec<_>, _>>()?;
        let e_u_k = propagate_user_kg(tape, &item_layers, &self.history)?;

        let att = attention_weights(
            tape,
            entities0,
            relations,
            w_k,
            w_q,
            &self.attributes,
            self.hyper.dim,
            self.flags.no_attention,
        )?;
        let attr = attribute_sum(tape, &att, &self.attributes)?;
        let e_i_a = attribute_fusion(tape, entities0, attr)?;
        let e_u_p = user_preference(tape, attr, &self.history.segment, &self.history.source, nu)?;

        let (e_u_e, e_i_e) = if self.flags.no_enhancement {
            (e_u_c, e_i_c)
        } else {
            (average(tape, e_u_c, e_u_p)?, average(tape, e_i_c, e_i_a)?)
        };
        let (e_u_star, e_i_star) = if self.flags.no_cg {
            (e_u_k, e_i_k)
        } else {
            (tape.concat_cols(e_u_e, e_u_k)?, tape.concat_cols(e_i_e, e_i_k)?)
        };

        Ok(RepresentationBundle {
            e_u_c,
            e_i_c,
            e_h_k,
            e_i_k,
            e_u_k,
            alpha: att.alpha,
            e_u_p,
            e_i_a,
            e_u_e,
            e_i_e,
            e_u_star,
            e_i_star,
        })
    }

    /// Items of the batch (positives and negatives) that have attributes,
    /// sorted and unique.
    pub fn gac_items(&self, batch: &TripletBatch) -> Arc<[u32]> {
        let mut v: Vec<u32> = batch
            .pos
            .iter()
            .chain(batch.neg.iter())
            .copied()
            .filter(|&i| self.has_attributes[i as usize])
            .collect();
        v.sort_unstable();
        v.dedup();
        v.into()
    }

    /// Records the objective for `batch` on top of `reps`.
    pub fn loss(
        &self,
        tape: &mut Tape<'_, T>,
        reps: &RepresentationBundle,
        batch: &TripletBatch,
    ) -> Result<LossNodes, NumericsError> {
        let bpr = loss_bpr(tape, reps.e_u_star, reps.e_i_star, batch)?;
        let bpr_c = loss_bpr_cf(tape, reps.e_u_c, reps.e_i_c, batch)?;
        let tau = T::from_f64_lossy(self.hyper.tau);
        let (gac, pac) = if self.flags.no_cl {
            let z = tape.constant(Tensor::scalar(T::zero()))?;
            (z, z)
        } else {
            let items = self.gac_items(batch);
            let gac = loss_gac(tape, reps.e_i_a, reps.e_i_c, reps.e_i_k, tau, &items)?;
            let pac = loss_pac(tape, reps.e_u_p, reps.e_u_c, reps.e_u_k, tau, &batch.unique_users())?;
            (gac, pac)
        };

        let p = self.params;
        let pos_neg: Arc<[u32]> = batch.pos.iter().chain(batch.neg.iter()).copied().collect();
        let user_cf = tape.param(p.user_cf);
        let item_cf = tape.param(p.item_cf);
        let entity = tape.param(p.entity);
        let w_k = tape.param(p.w_k);
        let w_q = tape.param(p.w_q);
        let reg = l2_batch(
            tape,
            &[
                (user_cf, batch.users.clone()),
                (item_cf, pos_neg.clone()),
                (entity, pos_neg),
            ],
            &[w_k, w_q],
            batch.len(),
        )?;

        let total = combine(
            tape,
            bpr,
            bpr_c,
            gac,
            pac,
            reg,
            [self.hyper.lambda1, self.hyper.lambda2, self.hyper.lambda3],
            !self.flags.no_cl,
        )?;
        Ok(LossNodes {
            bpr,
            bpr_c,
            gac,
            pac,
            reg,
            total,
        })
    }

    /// Forward, loss and backward for one batch. Gradients are added into
    /// `grads`.
    pub fn loss_and_grad(
        &self,
        store: &ParameterStore<T>,
        batch: &TripletBatch,
        grads: &mut Gradients<T>,
    ) -> Result<LossBreakdown, NumericsError> {
        let mut tape = Tape::new(store);
        let reps = self.forward(&mut tape)?;
        let nodes = self.loss(&mut tape, &reps, batch)?;
        let out = nodes.read(&tape);
        tape.backward_into(nodes.total, grads)?;
        Ok(out)
    }

    /// Forward and loss without gradients.
    pub fn loss_value(&self, store: &ParameterStore<T>, batch: &TripletBatch) -> Result<LossBreakdown, NumericsError> {
        let mut tape = Tape::new(store);
        let reps = self.forward(&mut tape)?;
        Ok(self.loss(&mut tape, &reps, batch)?.read(&tape))
    }

    /// Final representations for scoring.
    pub fn embeddings(&self, store: &ParameterStore<T>) -> Result<Embeddings<T>, NumericsError> {
        let mut tape = Tape::new(store);
        let reps = self.forward(&mut tape)?;
        Ok(Embeddings {
            users: tape.value(reps.e_u_star).clone(),
            items: tape.value(reps.e_i_star).clone(),
        })
    }
}
