use std::collections::BTreeMap;

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{Standardizer, ToyInputs};
use super::net::{backward, forward, BatchLabels, LossSettings};
use super::optim::{optimizer_step, LrSchedule, OptimizerKind, OptimizerState};
use super::params::{NetDims, ToyNetParams, DEFAULT_LEAKY_SLOPE};
use crate::dataset::{EmbeddingSet, Split};
use crate::error::{Error, Result};
use crate::losses::{argmax_rows, sample_pk_indices, LossComponents, LossWeights, TripletConfig, XentMode};
use crate::metrics::{evaluate, EvalExtras, EvalProtocol, EvalReport, EvalSide, ItemMeta, LabelPair};
use crate::posegeom::PoseChannels;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden: usize,
    pub feature: usize,
    pub reid: usize,
    pub leaky_slope: f64,
    pub epochs: usize,
    /// Identities per batch.
    pub p: usize,
    /// Samples per identity in a batch.
    pub k: usize,
    /// PK batches drawn per epoch. Toy train splits are small, so an epoch
    /// revisits each row many times.
    pub batches_per_epoch: usize,
    pub optimizer: OptimizerKind,
    pub schedule: LrSchedule,
    pub weights: LossWeights,
    pub triplet: TripletConfig,
    pub xent_mode: XentMode,
    /// Maps pooled into the descriptor. Fixed when inputs are built.
    pub pose_channels: PoseChannels,
    pub pool_grid: usize,
    /// Concatenate the pose vector after the trunk.
    pub use_pose_vector: bool,
    /// Train and report the color and type heads.
    pub multitask: bool,
    pub protocol: EvalProtocol,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            feature: 64,
            reid: 32,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            epochs: 60,
            p: 8,
            k: 4,
            batches_per_epoch: 100,
            optimizer: OptimizerKind::Adam,
            schedule: LrSchedule::default(),
            weights: LossWeights::default(),
            triplet: TripletConfig::default(),
            xent_mode: XentMode::default(),
            pose_channels: PoseChannels::None,
            pool_grid: 4,
            use_pose_vector: true,
            multitask: true,
            protocol: EvalProtocol::default(),
        }
    }
}

impl TrainConfig {
    pub fn batch_size(&self) -> usize {
        self.p * self.k
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 2 || self.k < 2 {
            return Err(Error::invalid("triplet batches need P >= 2 and K >= 2"));
        }
        if self.epochs == 0 || self.batches_per_epoch == 0 {
            return Err(Error::invalid("epochs and batches per epoch must be positive"));
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0) {
            return Err(Error::invalid("leaky slope must be finite and non-negative"));
        }
        self.schedule.validate()?;
        self.weights.validate()?;
        self.triplet.validate()?;
        self.protocol.validate()
    }

    fn loss_settings(&self) -> LossSettings {
        let mut weights = self.weights;
        if !self.multitask {
            weights.lambda_color = 0.0;
            weights.lambda_type = 0.0;
        }
        LossSettings { weights, triplet: self.triplet, xent_mode: self.xent_mode, mask_pose: !self.use_pose_vector }
    }
}

/// A trained network with everything needed to embed new samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyNetModel {
    pub config: TrainConfig,
    pub standardizer: Standardizer,
    /// The pose vector is z-scored too, otherwise its small spread is
    /// swamped by the standardized descriptor.
    pub pose_standardizer: Standardizer,
    pub params: ToyNetParams,
    /// Identity of each class of the identity head.
    pub id_classes: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub epoch: usize,
    pub lr: f64,
    /// Mean over the epoch's batches.
    pub loss: f64,
    pub components: LossComponents,
    #[serde(rename = "mAP")]
    pub map: f64,
    pub rank1: f64,
    /// Percentages on held-out samples; absent without the attribute heads.
    pub color_acc: Option<f64>,
    pub type_acc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ToyNetModel,
    pub history: Vec<HistoryEntry>,
    pub untrained: EvalReport,
    pub trained: EvalReport,
}

impl ToyNetModel {
    /// Standardized descriptors and the pose vectors the network sees.
    pub fn prepare(&self, inputs: &ToyInputs) -> Result<(Array2<f64>, Array2<f64>)> {
        let x = self.standardizer.apply(inputs.descriptors.view())?;
        let mut pose = self.pose_standardizer.apply(inputs.poses.view())?;
        if !self.config.use_pose_vector {
            pose.fill(0.0);
        }
        Ok((x, pose))
    }
}

/// ReID features (the output of the ReID layer) for every row.
pub fn extract_features(model: &ToyNetModel, inputs: &ToyInputs) -> Result<EmbeddingSet> {
    let (x, pose) = model.prepare(inputs)?;
    let act = forward(&model.params, x.view(), pose.view())?;
    EmbeddingSet::from_f64(act.r.view())
}

/// Retrieval on the query/gallery rows, plus attribute accuracy on those rows
/// when the model has attribute heads.
pub fn evaluate_model(model: &ToyNetModel, inputs: &ToyInputs) -> Result<EvalReport> {
    let (x, pose) = model.prepare(inputs)?;
    let act = forward(&model.params, x.view(), pose.view())?;
    held_out_report(model, inputs, &act.r, &act.color_logits, &act.type_logits)
}

fn held_out_report(
    model: &ToyNetModel,
    inputs: &ToyInputs,
    r: &Array2<f64>,
    color_logits: &Array2<f64>,
    type_logits: &Array2<f64>,
) -> Result<EvalReport> {
    let q = inputs.rows_of(Split::Query);
    let g = inputs.rows_of(Split::Gallery);
    if q.is_empty() || g.is_empty() {
        return Err(Error::invalid("held-out evaluation needs query and gallery rows"));
    }
    let meta = |rows: &[usize]| -> Vec<ItemMeta> {
        rows.iter().map(|&i| ItemMeta { identity: inputs.identities[i], camera: inputs.cameras[i] }).collect()
    };
    let (qm, gm) = (meta(&q), meta(&g));
    let (qf, gf) = (r.select(Axis(0), &q), r.select(Axis(0), &g));

    let test_rows: Vec<usize> = q.iter().chain(&g).copied().collect();
    let pick = |labels: &[usize]| test_rows.iter().map(|&i| labels[i]).collect::<Vec<_>>();
    let (color_truth, type_truth) = (pick(&inputs.colors), pick(&inputs.types));
    let color_pred = argmax_rows(color_logits.select(Axis(0), &test_rows).view());
    let type_pred = argmax_rows(type_logits.select(Axis(0), &test_rows).view());
    let extras = if model.config.multitask {
        EvalExtras {
            color: Some(LabelPair { predicted: &color_pred, truth: &color_truth }),
            vtype: Some(LabelPair { predicted: &type_pred, truth: &type_truth }),
            variability_ratio: false,
        }
    } else {
        EvalExtras::default()
    };
    evaluate(
        EvalSide { features: qf.view(), meta: &qm },
        EvalSide { features: gf.view(), meta: &gm },
        &model.config.protocol,
        &extras,
    )
}

/// Trains from a seeded initialization with PK batches from the train split,
/// scoring the held-out split after every epoch.
pub fn train(config: &TrainConfig, inputs: &ToyInputs, seed: u64) -> Result<TrainOutcome> {
    config.validate()?;
    let train_rows = inputs.rows_of(Split::Train);
    if train_rows.is_empty() {
        return Err(Error::invalid("the train split is empty"));
    }
    let classes: BTreeMap<u32, usize> = train_rows
        .iter()
        .map(|&i| inputs.identities[i])
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(c, id)| (id, c))
        .collect();
    let n_colors = inputs.colors.iter().max().map_or(1, |m| m + 1).max(2);
    let n_types = inputs.types.iter().max().map_or(1, |m| m + 1).max(2);
    let dims = NetDims::new(inputs.descriptors.ncols(), config.hidden, config.feature, config.reid, classes.len().max(2), n_colors, n_types);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = ToyNetParams::init(&dims, config.leaky_slope, &mut rng)?;
    let mut model = ToyNetModel {
        config: config.clone(),
        standardizer: Standardizer::fit(inputs.descriptors.view(), &train_rows)?,
        pose_standardizer: Standardizer::fit(inputs.poses.view(), &train_rows)?,
        params,
        id_classes: classes.keys().copied().collect(),
    };
    let untrained = evaluate_model(&model, inputs)?;

    let (x, pose) = model.prepare(inputs)?;
    let settings = config.loss_settings();
    let mut opt = OptimizerState::new(config.optimizer, &model.params);
    let batches = config.batches_per_epoch;
    let id_labels: Vec<usize> = inputs.identities.iter().map(|id| classes.get(id).copied().unwrap_or(0)).collect();

    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let lr = config.schedule.lr(epoch);
        let mut loss_sum = 0.0;
        let mut comp_sum = LossComponents::default();
        for batch in 0..batches {
            let idx = sample_pk_indices(&inputs.identities, &train_rows, config.p, config.k, &mut rng)?;
            let bx = x.select(Axis(0), &idx);
            let bp = pose.select(Axis(0), &idx);
            let ids: Vec<usize> = idx.iter().map(|&i| id_labels[i]).collect();
            let colors: Vec<usize> = idx.iter().map(|&i| inputs.colors[i]).collect();
            let types: Vec<usize> = idx.iter().map(|&i| inputs.types[i]).collect();
            let labels = BatchLabels {
                ids: &ids,
                color: config.multitask.then_some(colors.as_slice()),
                vtype: config.multitask.then_some(types.as_slice()),
            };
            let act = forward(&model.params, bx.view(), bp.view())?;
            let (total, comps, grads) = backward(&model.params, &act, &labels, &settings)?;
            if !total.is_finite() {
                return Err(Error::Diverged { epoch, batch });
            }
            optimizer_step(&mut model.params, &grads, &mut opt, lr).map_err(|e| match e {
                Error::NonFinite { .. } => Error::Diverged { epoch, batch },
                other => other,
            })?;
            loss_sum += total;
            comp_sum.id += comps.id;
            comp_sum.htri += comps.htri;
            comp_sum.xent += comps.xent;
            comp_sum.color += comps.color;
            comp_sum.vtype += comps.vtype;
        }
        let n = batches as f64;
        let report = evaluate_model(&model, inputs)?;
        history.push(HistoryEntry {
            epoch,
            lr,
            loss: loss_sum / n,
            components: LossComponents {
                id: comp_sum.id / n,
                htri: comp_sum.htri / n,
                xent: comp_sum.xent / n,
                color: comp_sum.color / n,
                vtype: comp_sum.vtype / n,
            },
            map: report.map,
            rank1: report.rank(1).unwrap_or(0.0),
            color_acc: report.color_accuracy,
            type_acc: report.type_accuracy,
        });
    }
    let trained = evaluate_model(&model, inputs)?;
    Ok(TrainOutcome { model, history, untrained, trained })
}
