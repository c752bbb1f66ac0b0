use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::MetaError;

pub const DEFAULT_LAMBDA_GRID: [f64; 7] = [0.1, 0.25, 0.5, 1.0, 2.0, 4.0, 10.0];

/// Discrete scaling factors, one independent choice per parameter group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaActionSpace {
    pub grid: Vec<f64>,
    pub n_groups: usize,
}

impl LambdaActionSpace {
    pub fn new(grid: Vec<f64>, n_groups: usize) -> Result<Self, MetaError> {
        let space = LambdaActionSpace { grid, n_groups };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<(), MetaError> {
        if self.grid.is_empty() {
            return Err(MetaError::InvalidSpace("lambda grid is empty".into()));
        }
        if self.grid.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(MetaError::InvalidSpace("lambda grid values must be positive and finite".into()));
        }
        if self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(MetaError::InvalidSpace("lambda grid must be strictly increasing".into()));
        }
        if self.n_groups == 0 {
            return Err(MetaError::InvalidSpace("at least one parameter group required".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperActionSpace {
    pub lr_grid: Vec<f64>,
    pub decay_grid: Vec<f64>,
    pub width_grid: Vec<usize>,
}

impl HyperActionSpace {
    pub fn validate(&self) -> Result<(), MetaError> {
        if self.lr_grid.is_empty() || self.decay_grid.is_empty() || self.width_grid.is_empty() {
            return Err(MetaError::InvalidSpace("hyperparameter grids must be non-empty".into()));
        }
        if self.lr_grid.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(MetaError::InvalidSpace("learning rates must be positive".into()));
        }
        if self.decay_grid.iter().any(|v| !(*v > 0.0 && *v <= 1.0)) {
            return Err(MetaError::InvalidSpace("decay factors must lie in (0, 1]".into()));
        }
        if self.width_grid.contains(&0) {
            return Err(MetaError::InvalidSpace("widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperChoice {
    pub lr: f64,
    pub decay: f64,
    pub width: usize,
}

/// Slot layout of the policy: one slot per parameter group for λ, then
/// learning rate, decay and width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionSpaces {
    pub lambda: LambdaActionSpace,
    pub hyper: HyperActionSpace,
}

impl ActionSpaces {
    pub fn new(lambda: LambdaActionSpace, hyper: HyperActionSpace) -> Result<Self, MetaError> {
        lambda.validate()?;
        hyper.validate()?;
        Ok(ActionSpaces { lambda, hyper })
    }

    pub fn n_slots(&self) -> usize {
        self.lambda.n_groups + 3
    }

    pub fn slot_size(&self, slot: usize) -> usize {
        let n = self.lambda.n_groups;
        match slot {
            s if s < n => self.lambda.grid.len(),
            s if s == n => self.hyper.lr_grid.len(),
            s if s == n + 1 => self.hyper.decay_grid.len(),
            _ => self.hyper.width_grid.len(),
        }
    }

    pub fn lambda_slots(&self) -> Range<usize> {
        0..self.lambda.n_groups
    }

    pub fn hyper_slots(&self) -> Range<usize> {
        self.lambda.n_groups..self.lambda.n_groups + 3
    }

    /// Map chosen λ-slot indices to scaling factors.
    pub fn lambdas(&self, indices: &[usize]) -> Vec<f64> {
        indices.iter().map(|&i| self.lambda.grid[i]).collect()
    }

    /// Map `[lr, decay, width]` indices to values.
    pub fn hyper_choice(&self, indices: &[usize]) -> HyperChoice {
        HyperChoice {
            lr: self.hyper.lr_grid[indices[0]],
            decay: self.hyper.decay_grid[indices[1]],
            width: self.hyper.width_grid[indices[2]],
        }
    }
}
