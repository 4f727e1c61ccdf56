//! Independently seeded generators whose samples are pooled.

use ndarray::{concatenate, Array2, Axis};
use rayon::prelude::*;

use super::train::{train, CgmDataset, TrainConfig, TrainedCgm};
use super::CgmError;
use crate::market_data::{CgmInputs, DeliveryKey};
use crate::path_samplers::{Generator, TrajectoryEnsemble};

pub const DEFAULT_MEMBERS: usize = 10;
pub const DEFAULT_SAMPLES_PER_MEMBER: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct CgmEnsemble {
    pub members: Vec<TrainedCgm>,
}

fn member_seed(seed: u64, member: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(member as u64 + 1)
}

impl CgmEnsemble {
    /// Training configuration of member `i`: `config` with a member seed.
    pub fn member_config(config: &TrainConfig, i: usize) -> TrainConfig {
        TrainConfig { seed: member_seed(config.seed, i), ..config.clone() }
    }

    /// Trains `members` generators that differ only in their seeds.
    pub fn train(config: &TrainConfig, data: &CgmDataset, members: usize) -> Result<Self, CgmError> {
        let members = (0..members)
            .into_par_iter()
            .map(|i| {
                train(&Self::member_config(config, i), data)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { members })
    }

    /// Pools `per_member` paths from every member, in member order.
    pub fn sample(&self, inputs: &CgmInputs, per_member: usize, key: DeliveryKey, seed: u64) -> Result<TrajectoryEnsemble, CgmError> {
        if let Some(i) = self.members.iter().position(|m| !m.is_trained()) {
            return Err(CgmError::UntrainedMember(i));
        }
        if self.members.is_empty() {
            return Err(CgmError::UntrainedMember(0));
        }
        let parts: Vec<Array2<f64>> = self
            .members
            .iter()
            .enumerate()
            .map(|(i, m)| m.sample(inputs, per_member, member_seed(seed, i)))
            .collect::<Result<_, _>>()?;
        let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
        let samples = concatenate(Axis(0), &views).expect("equal widths");
        Ok(TrajectoryEnsemble { key, generator: Generator::Cgm, seed, samples })
    }
}
