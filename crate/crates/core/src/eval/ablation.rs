use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::corpus::Dataset;
use crate::scalar::Scalar;
use crate::templates::{MarkerStyle, PromptStyle, TemplateConfig};
use crate::trainer::{multi_seed, Experiment, MultiSeedReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationCell {
    pub marker: MarkerStyle,
    pub prompt: PromptStyle,
}

impl AblationCell {
    pub fn label(&self) -> String {
        format!("{}+{}", self.marker, self.prompt)
    }
}

/// Marker and prompt variants compared against the full model.
pub fn default_cells() -> Vec<AblationCell> {
    use MarkerStyle::*;
    use PromptStyle::*;
    [
        (Iem, Drp),
        (Tem, Drp),
        (Iem, DescriptionOnly),
        (Iem, NameOnly),
    ]
    .into_iter()
    .map(|(marker, prompt)| AblationCell { marker, prompt })
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationMatrix {
    pub base: Experiment,
    pub seeds: Vec<u64>,
    pub cells: Vec<(AblationCell, MultiSeedReport)>,
}

/// Trains and evaluates `base` once per cell and seed, varying only the
/// template settings.
pub fn ablation_matrix<T: Scalar>(
    dataset: &Dataset,
    base: &Experiment,
    cells: &[AblationCell],
    seeds: &[u64],
) -> Result<AblationMatrix, EvalError> {
    if cells.is_empty() {
        return Err(EvalError::NoCells);
    }
    let mut out = Vec::with_capacity(cells.len());
    for &cell in cells {
        let mut exp = base.clone();
        exp.templates = TemplateConfig {
            marker: cell.marker,
            prompt: cell.prompt,
        };
        let report =
            multi_seed::<T>(&exp, dataset, seeds).map_err(|e| EvalError::Train(e.to_string()))?;
        out.push((cell, report));
    }
    Ok(AblationMatrix {
        base: base.clone(),
        seeds: seeds.to_vec(),
        cells: out,
    })
}
