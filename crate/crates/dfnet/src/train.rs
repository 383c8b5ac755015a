//! Training: SGD with momentum and two learning-rate groups, cosine decay,
//! seeded shuffling and augmentation.

use std::collections::HashMap;

use candle_core::{DType, Tensor};
use hypsam_core::data::{
    augment, decouple_boundary, prepare, prepare_target, AugmentParams, BoundaryParams,
    Normalization, RgbtSample,
};
use hypsam_core::Mask;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{total_loss, LossBreakdown};
use crate::model::DfNet;

/// Parameters whose names start with this prefix use the backbone learning rate.
pub const BACKBONE_PREFIX: &str = "backbone";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Cosine,
    Constant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr_backbone: f64,
    pub lr_head: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub schedule: Schedule,
    pub seed: u64,
    /// Stop after this many steps even if epochs remain.
    pub max_steps: Option<usize>,
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch: 8,
            lr_backbone: 5e-3,
            lr_head: 5e-2,
            momentum: 0.9,
            weight_decay: 5e-4,
            schedule: Schedule::Cosine,
            seed: 0,
            max_steps: None,
            augment: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch == 0 {
            return Err(Error::Config("epochs and batch must be at least 1".into()));
        }
        if !(self.lr_backbone > 0.0 && self.lr_head > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) || self.weight_decay < 0.0 {
            return Err(Error::Config(
                "momentum must lie in [0, 1) and weight decay be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self, samples: usize) -> usize {
        samples.div_ceil(self.batch)
    }

    pub fn total_steps(&self, samples: usize) -> usize {
        let all = self.epochs * self.steps_per_epoch(samples);
        self.max_steps.map_or(all, |m| m.min(all))
    }
}

/// Multiplier on the base rate at `step` of `total`.
pub fn schedule_factor(schedule: Schedule, step: usize, total: usize) -> f64 {
    match schedule {
        Schedule::Constant => 1.0,
        Schedule::Cosine if total == 0 => 1.0,
        Schedule::Cosine => 0.5 * (1.0 + (std::f64::consts::PI * step as f64 / total as f64).cos()),
    }
}

fn is_buffer(name: &str) -> bool {
    name.ends_with("running_mean") || name.ends_with("running_var")
}

/// SGD with heavy-ball momentum and L2 weight decay, in the usual deep
/// learning formulation: `g ← ∇ + λp`, `b ← μb + g` (`b = g` at the first
/// step), `p ← p − ηb`.
pub struct Sgd {
    momentum: f64,
    weight_decay: f64,
    buffers: HashMap<String, Tensor>,
}

impl Sgd {
    pub fn new(momentum: f64, weight_decay: f64) -> Self {
        Self {
            momentum,
            weight_decay,
            buffers: HashMap::new(),
        }
    }

    /// Updates every parameter of `net` that received a gradient;
    /// `lr(name)` gives each parameter's rate.
    pub fn step(
        &mut self,
        net: &DfNet,
        grads: &candle_core::backprop::GradStore,
        lr: impl Fn(&str) -> f64,
    ) -> Result<()> {
        for (name, var) in net.store().vars() {
            if is_buffer(&name) {
                continue;
            }
            let Some(grad) = grads.get(var.as_tensor()) else {
                continue;
            };
            let p = var.as_tensor().detach();
            let mut g = grad.detach();
            if self.weight_decay != 0.0 {
                g = (g + (&p * self.weight_decay)?)?;
            }
            if self.momentum != 0.0 {
                let buf = match self.buffers.get(&name) {
                    Some(b) => ((b * self.momentum)? + &g)?,
                    None => g.clone(),
                };
                g = buf.clone();
                self.buffers.insert(name.clone(), buf);
            }
            var.set(&(p - (g * lr(&name))?)?.detach())?;
        }
        Ok(())
    }
}

/// Stacked inputs and targets of one batch.
pub struct Batch {
    pub rgb: Tensor,
    pub thermal: Tensor,
    pub gt: Tensor,
    pub boundary: Tensor,
}

fn masks_to_tensor(masks: &[Mask], net: &DfNet) -> Result<Tensor> {
    let s = net.config().resolution;
    let data: Vec<f32> = masks
        .iter()
        .flat_map(|m| m.as_array().iter().map(|&b| if b { 1.0 } else { 0.0 }))
        .collect();
    Ok(Tensor::from_vec(data, (masks.len(), 1, s, s), net.device())?.to_dtype(net.dtype())?)
}

/// Builds a batch at the network resolution: optional augmentation with the
/// given per-sample seeds, normalization, binarized target and boundary band.
pub fn make_batch(net: &DfNet, samples: &[&RgbtSample], seeds: Option<&[u64]>) -> Result<Batch> {
    let s = net.config().resolution;
    let norm = Normalization::default();
    let mut pairs = Vec::with_capacity(samples.len());
    let mut gts = Vec::with_capacity(samples.len());
    let mut bds = Vec::with_capacity(samples.len());
    for (i, sample) in samples.iter().enumerate() {
        let owned;
        let sample = match seeds {
            Some(seeds) => {
                owned = augment(sample, AugmentParams::default(), seeds[i]);
                &owned
            }
            None => *sample,
        };
        let gt = sample
            .gt
            .as_ref()
            .ok_or_else(|| Error::Config(format!("sample {} has no ground truth", sample.name)))?;
        let target = prepare_target(gt, s);
        bds.push(decouple_boundary(&target, BoundaryParams::default()).boundary);
        gts.push(target);
        pairs.push(prepare(sample, s, &norm));
    }
    let refs: Vec<_> = pairs.iter().collect();
    let (rgb, thermal) = net.batch_inputs(&refs)?;
    Ok(Batch {
        rgb,
        thermal,
        gt: masks_to_tensor(&gts, net)?,
        boundary: masks_to_tensor(&bds, net)?,
    })
}

pub struct Trainer<'a> {
    net: &'a DfNet,
    cfg: TrainConfig,
    opt: Sgd,
    step: usize,
}

/// Result of one optimization step.
#[derive(Clone, Copy, Debug)]
pub struct StepReport {
    pub step: usize,
    pub epoch: usize,
    pub lr_head: f64,
    pub loss: LossBreakdown,
}

impl StepReport {
    pub fn log_line(&self) -> String {
        self.loss.log_line(self.step, self.lr_head)
    }
}

impl<'a> Trainer<'a> {
    pub fn new(net: &'a DfNet, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            net,
            opt: Sgd::new(cfg.momentum, cfg.weight_decay),
            cfg,
            step: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// One forward/backward/update on `batch` with the given rate factor.
    pub fn train_step(&mut self, batch: &Batch, factor: f64) -> Result<LossBreakdown> {
        let preds = self.net.forward_t(&batch.rgb, &batch.thermal, true)?;
        let loss = total_loss(&preds, &batch.gt, &batch.boundary)?;
        if !loss.breakdown.total.is_finite() {
            return Err(Error::Config(format!(
                "loss diverged at step {}",
                self.step
            )));
        }
        let grads = loss.total.backward()?;
        let (lb, lh) = (self.cfg.lr_backbone * factor, self.cfg.lr_head * factor);
        self.opt.step(self.net, &grads, |name| {
            if name.starts_with(BACKBONE_PREFIX) {
                lb
            } else {
                lh
            }
        })?;
        self.step += 1;
        Ok(loss.breakdown)
    }

    /// Runs the configured epochs over `samples`, calling `on_step` after
    /// every step and `on_epoch` after every completed epoch.
    pub fn run(
        &mut self,
        samples: &[RgbtSample],
        mut on_step: impl FnMut(&StepReport),
        mut on_epoch: impl FnMut(usize, &DfNet) -> Result<()>,
    ) -> Result<Vec<StepReport>> {
        if samples.is_empty() {
            return Err(hypsam_core::Error::EmptyDataset.into());
        }
        let total = self.cfg.total_steps(samples.len());
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        let mut history = Vec::with_capacity(total);
        'epochs: for epoch in 0..self.cfg.epochs {
            let mut order: Vec<usize> = (0..samples.len()).collect();
            order.shuffle(&mut rng);
            for chunk in order.chunks(self.cfg.batch) {
                if self.step >= total {
                    break 'epochs;
                }
                let batch_samples: Vec<&RgbtSample> = chunk.iter().map(|&i| &samples[i]).collect();
                let seeds: Vec<u64> = chunk
                    .iter()
                    .map(|&i| self.cfg.seed ^ ((epoch as u64) << 32) ^ i as u64)
                    .collect();
                let batch = make_batch(
                    self.net,
                    &batch_samples,
                    self.cfg.augment.then_some(&seeds[..]),
                )?;
                let factor = schedule_factor(self.cfg.schedule, self.step, total);
                let step = self.step;
                let loss = self.train_step(&batch, factor)?;
                let report = StepReport {
                    step,
                    epoch,
                    lr_head: self.cfg.lr_head * factor,
                    loss,
                };
                on_step(&report);
                history.push(report);
            }
            on_epoch(epoch, self.net)?;
        }
        Ok(history)
    }
}

/// Converts a `B×1×H×W` tensor to `f32` values, mainly for tests and logs.
pub fn to_f32_vec(t: &Tensor) -> Result<Vec<f32>> {
    Ok(t.to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_schedule_endpoints() {
        assert_eq!(schedule_factor(Schedule::Cosine, 0, 10), 1.0);
        assert!((schedule_factor(Schedule::Cosine, 5, 10) - 0.5).abs() < 1e-12);
        assert!(schedule_factor(Schedule::Cosine, 10, 10).abs() < 1e-12);
        assert_eq!(schedule_factor(Schedule::Constant, 7, 10), 1.0);
    }

    #[test]
    fn step_budget() {
        let cfg = TrainConfig {
            epochs: 3,
            batch: 4,
            max_steps: Some(5),
            ..TrainConfig::default()
        };
        assert_eq!(cfg.steps_per_epoch(10), 3);
        assert_eq!(cfg.total_steps(10), 5);
    }
}
