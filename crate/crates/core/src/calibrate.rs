//! Deadline-scale calibration: plan, simulate, and pick the scaling factor
//! whose miss rate is nearest one half.

use thiserror::Error;

use crate::adg::Adg;
use crate::grid::{select_k_d, AgentSpec, CalibrationError, DeadlineSpec, GridInstance, GridMap, InstanceError};
use crate::objective::action_paths;
use crate::path::Plan;
use crate::sim::{simulate, NoiseModel, SimConfig, SimError};

/// One instance without deadlines; deadlines are drawn per candidate from `seed`.
#[derive(Debug, Clone)]
pub struct CalibrationCase {
    pub map: GridMap,
    pub agents: Vec<AgentSpec>,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum CalibrateError {
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error("planner failed on seed {seed}: {reason}")]
    Plan { seed: u64, reason: String },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Select(#[from] CalibrationError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub k_d: f64,
    /// `(candidate, miss rate)` in candidate order.
    pub rates: Vec<(f64, f64)>,
}

/// Fraction of agents, over all cases, whose simulated arrival exceeds the deadline.
pub fn miss_rate<P>(
    cases: &[CalibrationCase],
    k_d: f64,
    cfg: &SimConfig,
    noise: &NoiseModel,
    planner: &P,
) -> Result<f64, CalibrateError>
where
    P: Fn(&GridInstance) -> Result<Plan, String> + Sync,
{
    let per_case = crate::parallel::par_map(cases, |case| -> Result<(usize, usize), CalibrateError> {
        let inst = GridInstance::with_generated_deadlines(
            case.map.clone(),
            case.agents.clone(),
            DeadlineSpec::new(k_d),
            &cfg.limits,
            case.seed,
        )?;
        let plan = planner(&inst).map_err(|reason| CalibrateError::Plan { seed: case.seed, reason })?;
        let adg = Adg::build(&action_paths(&inst, &plan));
        let out = simulate(&adg, cfg, noise)?;
        let late = out.arrival.iter().zip(&inst.deadlines).filter(|(a, d)| a > d).count();
        Ok((late, inst.num_agents()))
    });
    let (mut late, mut total) = (0, 0);
    for r in per_case {
        let (l, t) = r?;
        late += l;
        total += t;
    }
    Ok(if total == 0 { 0.0 } else { late as f64 / total as f64 })
}

/// Sweeps `candidates` and keeps the one nearest a 50% miss rate.
pub fn calibrate_k_d<P>(
    cases: &[CalibrationCase],
    candidates: &[f64],
    cfg: &SimConfig,
    noise: &NoiseModel,
    planner: &P,
) -> Result<Calibration, CalibrateError>
where
    P: Fn(&GridInstance) -> Result<Plan, String> + Sync,
{
    let rates = candidates
        .iter()
        .map(|&k| Ok((k, miss_rate(cases, k, cfg, noise, planner)?)))
        .collect::<Result<Vec<_>, CalibrateError>>()?;
    log::info!("deadline calibration sweep: {rates:?}");
    Ok(Calibration {
        k_d: select_k_d(&rates)?,
        rates,
    })
}
