//! Penalty of a plan as seen through an execution-time estimator.

use thiserror::Error;

use crate::adg::Adg;
use crate::estimator::{EstimateError, Estimator};
use crate::grid::{GridInstance, Heading};
use crate::path::{ActionPath, Plan};
use crate::penalty::{per_agent, AgentEstimate, PenaltyError, PenaltyKind};

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Penalty(#[from] PenaltyError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub estimates: Vec<AgentEstimate>,
    pub penalties: Vec<f64>,
    pub avg_penalty: f64,
}

impl Evaluation {
    /// Agents whose estimate (median for distributions) exceeds the deadline.
    pub fn late(&self, deadlines: &[f64]) -> Vec<bool> {
        self.estimates
            .iter()
            .zip(deadlines)
            .map(|(e, &d)| e.central() > d)
            .collect()
    }
}

pub fn headings(instance: &GridInstance) -> Vec<Option<Heading>> {
    instance.agents.iter().map(|a| a.heading).collect()
}

pub fn action_paths(instance: &GridInstance, plan: &Plan) -> Vec<ActionPath> {
    plan.action_paths(&headings(instance))
}

/// Scores precomputed estimates against the instance deadlines.
pub fn score(
    estimates: Vec<AgentEstimate>,
    deadlines: &[f64],
    kind: PenaltyKind,
) -> Result<Evaluation, PenaltyError> {
    let penalties = per_agent(&estimates, deadlines, kind)?;
    let avg_penalty = penalties.iter().sum::<f64>() / penalties.len().max(1) as f64;
    Ok(Evaluation {
        estimates,
        penalties,
        avg_penalty,
    })
}

pub fn evaluate(
    instance: &GridInstance,
    plan: &Plan,
    estimator: &dyn Estimator,
    kind: PenaltyKind,
) -> Result<Evaluation, ObjectiveError> {
    let aps = action_paths(instance, plan);
    let adg = Adg::build(&aps);
    let estimates = estimator.estimate(&aps, &adg)?;
    Ok(score(estimates, &instance.deadlines, kind)?)
}
