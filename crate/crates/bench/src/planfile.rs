//! Plan files:
//!
//! ```text
//! planv1
//! agents <M>
//! <agent> <x>,<y> <x>,<y> ...     one line per agent, one cell per timestep
//! end
//! ```

use std::fmt::Write as _;

use mapfrd_core::grid::Cell;
use mapfrd_core::path::{GridPath, Plan};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PlanFileError {
    #[error("not a planv1 file")]
    Version,
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("file ends before `end`")]
    Truncated,
}

pub fn write_plan(plan: &Plan) -> String {
    let mut s = format!("planv1\nagents {}\n", plan.paths.len());
    for p in &plan.paths {
        let _ = write!(s, "{}", p.agent);
        for c in &p.cells {
            let _ = write!(s, " {},{}", c.x, c.y);
        }
        s.push('\n');
    }
    s.push_str("end\n");
    s
}

pub fn read_plan(text: &str) -> Result<Plan, PlanFileError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "planv1")) => {}
        _ => return Err(PlanFileError::Version),
    }
    let bad = |line: usize, reason: &str| PlanFileError::Malformed {
        line: line + 1,
        reason: reason.to_string(),
    };
    let (i, header) = lines.next().ok_or(PlanFileError::Truncated)?;
    let count: usize = header
        .strip_prefix("agents ")
        .and_then(|n| n.trim().parse().ok())
        .ok_or_else(|| bad(i, "expected `agents <count>`"))?;
    let mut paths = Vec::with_capacity(count);
    for k in 0..count {
        let (i, line) = lines.next().ok_or(PlanFileError::Truncated)?;
        let mut tok = line.split_whitespace();
        let agent: usize = tok.next().and_then(|a| a.parse().ok()).ok_or_else(|| bad(i, "bad agent id"))?;
        if agent != k {
            return Err(bad(i, "agent ids must be consecutive from 0"));
        }
        let cells = tok
            .map(|c| {
                let (x, y) = c.split_once(',')?;
                Some(Cell::new(x.parse().ok()?, y.parse().ok()?))
            })
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| bad(i, "bad cell"))?;
        if cells.is_empty() {
            return Err(bad(i, "empty path"));
        }
        paths.push(GridPath::new(agent, cells));
    }
    match lines.next() {
        Some((_, "end")) => Ok(Plan::new(paths)),
        Some((i, _)) => Err(bad(i, "expected `end`")),
        None => Err(PlanFileError::Truncated),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let plan = Plan::new(vec![
            GridPath::new(0, vec![Cell::new(0, 0), Cell::new(1, 0)]),
            GridPath::new(1, vec![Cell::new(3, 2)]),
        ]);
        let text = write_plan(&plan);
        assert_eq!(text, "planv1\nagents 2\n0 0,0 1,0\n1 3,2\nend\n");
        assert_eq!(read_plan(&text).unwrap(), plan);
    }

    #[test]
    fn errors() {
        assert_eq!(read_plan("planv2\n"), Err(PlanFileError::Version));
        assert_eq!(read_plan("planv1\nagents 2\n0 0,0\n"), Err(PlanFileError::Truncated));
        assert!(matches!(read_plan("planv1\nagents 1\n1 0,0\nend\n"), Err(PlanFileError::Malformed { line: 3, .. })));
        assert!(matches!(read_plan("planv1\nagents 1\n0 0;0\nend\n"), Err(PlanFileError::Malformed { .. })));
    }
}
