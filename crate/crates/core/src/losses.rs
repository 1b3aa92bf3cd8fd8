//! Multi-modal hybrid loss.
//!
//! ```text
//! S_r = GAP(R₅), S_t = GAP(T₅)
//! L^u = 2 − 2·cos(S_r, S_t)                     ∈ [0, 4]
//! L_ioubce(D, G) = L_iou + L_bce
//!   L_bce = mean BCE(σ(D), G)
//!   L_iou = 1 − (Σ p·g + ε) / (Σ (p + g − p·g) + ε), p = σ(D), per image
//! L^s = L_ioubce(D_r, G) + L_ioubce(D_t, G)
//! stage 2: total = L^u + α·L^s + w_f·L_ioubce(final, G)
//! stage 1: total = w_f·L_ioubce(final, G)
//! ```
//!
//! All terms are averaged over the batch. `w_f` defaults to 1.

use serde::{Deserialize, Serialize};

use rgbt_tensor::{Graph, Scalar, Tensor, Var};

use crate::{CoreError, Result};

/// Norm below which a summary vector is treated as degenerate.
pub const NORM_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub alpha: f64,
    pub epsilon: f64,
    /// Weight of the final-map term.
    pub final_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 10.0,
            epsilon: 1e-6,
            final_weight: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(CoreError::Config(format!("alpha must be nonnegative, got {}", self.alpha)));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1e-4) {
            return Err(CoreError::Config(format!("epsilon must be in (0, 1e-4], got {}", self.epsilon)));
        }
        if !(self.final_weight >= 0.0 && self.final_weight.is_finite()) {
            return Err(CoreError::Config(format!(
                "final_weight must be nonnegative, got {}",
                self.final_weight
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Stage1,
    Stage2,
}

impl Stage {
    pub fn number(self) -> u8 {
        match self {
            Stage::Stage1 => 1,
            Stage::Stage2 => 2,
        }
    }
}

/// Scalar values of every loss term for one step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub self_sup: f64,
    pub sup_rgb: f64,
    pub sup_thermal: f64,
    pub sup_final: f64,
    pub total: f64,
}

/// Per-channel spatial mean of the level-5 features: `B×C`.
pub fn modality_summary<T: Scalar>(g: &mut Graph<T>, level5: Var) -> Result<Var> {
    crate::fusion::squeeze(g, level5)
}

/// Batch mean of `2 − 2·cos(s_rgb, s_thermal)`. A zero-norm row contributes 2.
pub fn self_supervised_loss<T: Scalar>(g: &mut Graph<T>, s_rgb: Var, s_thermal: Var) -> Result<Var> {
    let (a, b) = (g.shape(s_rgb).to_vec(), g.shape(s_thermal).to_vec());
    if a != b || a.len() != 2 {
        return Err(CoreError::Input(format!("summary shapes {a:?} and {b:?} differ")));
    }
    let cos = g.cosine_rows(s_rgb, s_thermal, NORM_EPS);
    let degenerate = g.value(s_rgb).data().chunks(a[1]).chain(g.value(s_thermal).data().chunks(a[1])).any(|row| {
        row.iter().map(|&x| x.as_f64() * x.as_f64()).sum::<f64>().sqrt() <= NORM_EPS
    });
    if degenerate {
        log::warn!("self-supervised loss: zero-norm summary vector, cosine taken as 0");
    }
    let scaled = g.mul_scalar(cos, T::of(-2.0));
    let per = g.add_scalar(scaled, T::of(2.0));
    Ok(g.mean(per))
}

/// `L_iou + L_bce` of logits against a binary mask of the same shape.
pub fn iou_bce_loss<T: Scalar>(g: &mut Graph<T>, logits: Var, gt: &Tensor<T>, epsilon: f64) -> Result<Var> {
    if g.shape(logits) != gt.shape() {
        return Err(CoreError::Input(format!(
            "prediction {:?} and mask {:?} differ in shape",
            g.shape(logits),
            gt.shape()
        )));
    }
    if let Some(v) = gt.data().iter().find(|v| !(T::zero()..=T::one()).contains(*v)) {
        return Err(CoreError::Input(format!("mask value {v} outside [0, 1]")));
    }
    let bce = g.bce_with_logits(logits, gt);
    let bce = g.mean(bce);
    let p = g.sigmoid(logits);
    let target = g.input(gt.clone());
    let pg = g.mul(p, target);
    let inter = g.sum_per_sample(pg);
    let union = g.add(p, target);
    let union = g.sub(union, pg);
    let union = g.sum_per_sample(union);
    let eps = T::of(epsilon);
    let num = g.add_scalar(inter, eps);
    let den = g.add_scalar(union, eps);
    let ratio = g.div(num, den);
    let ratio = g.mean(ratio);
    let iou = g.mul_scalar(ratio, -T::one());
    let iou = g.add_scalar(iou, T::one());
    Ok(g.add(iou, bce))
}

/// `L_ioubce(D_r, G) + L_ioubce(D_t, G)`.
pub fn supervised_loss<T: Scalar>(
    g: &mut Graph<T>,
    d_rgb: Var,
    d_thermal: Var,
    gt: &Tensor<T>,
    epsilon: f64,
) -> Result<Var> {
    let a = iou_bce_loss(g, d_rgb, gt, epsilon)?;
    let b = iou_bce_loss(g, d_thermal, gt, epsilon)?;
    Ok(g.add(a, b))
}

/// Network outputs consumed by [`total_loss`]. Auxiliary logits must already
/// be upsampled to the mask resolution.
#[derive(Clone, Copy, Debug)]
pub struct LossInputs {
    pub final_logits: Var,
    pub aux_rgb: Option<Var>,
    pub aux_thermal: Option<Var>,
    pub s_rgb: Option<Var>,
    pub s_thermal: Option<Var>,
}

/// Which terms enter the stage-2 objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Self-supervised + auxiliary + final terms.
    Hybrid,
    /// Final-map supervision only.
    FinalOnly,
}

/// Builds the stage objective and reports every term.
pub fn total_loss<T: Scalar>(
    g: &mut Graph<T>,
    inputs: &LossInputs,
    gt: &Tensor<T>,
    stage: Stage,
    objective: Objective,
    config: &LossConfig,
) -> Result<(Var, LossReport)> {
    let final_term = iou_bce_loss(g, inputs.final_logits, gt, config.epsilon)?;
    let sup_final = g.value(final_term).data()[0].as_f64();
    let weighted_final = g.mul_scalar(final_term, T::of(config.final_weight));
    if stage == Stage::Stage1 || objective == Objective::FinalOnly {
        let report = LossReport {
            sup_final,
            total: g.value(weighted_final).data()[0].as_f64(),
            ..LossReport::default()
        };
        return Ok((weighted_final, report));
    }
    let (Some(aux_rgb), Some(aux_thermal), Some(s_rgb), Some(s_thermal)) =
        (inputs.aux_rgb, inputs.aux_thermal, inputs.s_rgb, inputs.s_thermal)
    else {
        return Err(CoreError::Config("stage 2 needs auxiliary and summary outputs of both streams".into()));
    };
    let self_sup = self_supervised_loss(g, s_rgb, s_thermal)?;
    let sup_rgb = iou_bce_loss(g, aux_rgb, gt, config.epsilon)?;
    let sup_thermal = iou_bce_loss(g, aux_thermal, gt, config.epsilon)?;
    let sup = g.add(sup_rgb, sup_thermal);
    let sup = g.mul_scalar(sup, T::of(config.alpha));
    let total = g.add(self_sup, sup);
    let total = g.add(total, weighted_final);
    let value = |g: &Graph<T>, v: Var| g.value(v).data()[0].as_f64();
    let report = LossReport {
        self_sup: value(g, self_sup),
        sup_rgb: value(g, sup_rgb),
        sup_thermal: value(g, sup_thermal),
        sup_final,
        total: value(g, total),
    };
    Ok((total, report))
}

impl LossReport {
    /// Recombines the terms according to the stage rule.
    pub fn combine(&self, stage: Stage, config: &LossConfig) -> f64 {
        match stage {
            Stage::Stage1 => config.final_weight * self.sup_final,
            Stage::Stage2 => {
                self.self_sup + config.alpha * (self.sup_rgb + self.sup_thermal) + config.final_weight * self.sup_final
            }
        }
    }
}
