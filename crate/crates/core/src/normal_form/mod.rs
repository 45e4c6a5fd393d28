//! Birkhoff normal form to optimal order and the second normalization near a
//! Diophantine action point, both realized with Lie-series generators.

mod birkhoff;
mod budget;
mod lie;
mod poschel;
mod transform;

use serde::{Deserialize, Serialize};

use crate::series::{FtSeries, MajorantNorm, TruncationLoss};

pub use birkhoff::{
    birkhoff_normalize, optimal_order, select_least_term, BirkhoffRun, OptimalOrder,
    RemainderProfile,
};
pub use budget::StabilityBudget;
pub use lie::{homological_solve, lie_transform, lie_transform_adaptive};
pub use poschel::{poschel_normalize, PoschelDoc, PoschelOptions, PoschelReport};
pub use transform::{compose_transforms, pull_back, FlowOptions};

/// Output of either normalization stage.
///
/// `normal` is angle-free; `remainder` holds everything else. The truncation
/// loss is the majorant mass discarded along the way and is part of every
/// remainder bound reported from this value.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalFormResult {
    pub normal: FtSeries,
    pub generators: Vec<FtSeries>,
    pub remainder: FtSeries,
    pub loss: TruncationLoss,
    pub remainder_norm: MajorantNorm,
    pub order: u32,
    pub frequency: Vec<f64>,
    /// Action point the series are expanded around (second stage only).
    pub center: Option<Vec<f64>>,
}

impl NormalFormResult {
    /// Majorant of the remainder plus the truncation loss at the given widths.
    pub fn remainder_bound(&self, rho: f64, r: f64) -> f64 {
        self.remainder.majorant_norm(rho, r).value + self.loss.value(rho, r)
    }

    pub fn to_doc(&self) -> NormalFormDoc {
        let (rho, r) = (self.remainder_norm.rho, self.remainder_norm.r);
        NormalFormDoc {
            order: self.order,
            frequency: self.frequency.clone(),
            center: self.center.clone(),
            remainder_norm: self.remainder_norm,
            truncation_loss: self.loss.value(rho, r),
            normal: self.normal.clone(),
            generators: self.generators.clone(),
            remainder: self.remainder.clone(),
        }
    }
}

/// Serialized form of a [`NormalFormResult`]; the loss is stored evaluated at
/// the certification widths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalFormDoc {
    pub order: u32,
    pub frequency: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub center: Option<Vec<f64>>,
    pub remainder_norm: MajorantNorm,
    pub truncation_loss: f64,
    pub normal: FtSeries,
    pub generators: Vec<FtSeries>,
    pub remainder: FtSeries,
}
