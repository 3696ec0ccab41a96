//! Deadline penalties for point and log-normal execution-time estimates.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum PenaltyKind {
    /// Tardiness `max(0, t - d)`.
    #[default]
    Linear,
    /// Miss indicator `1[t > d]`.
    Percentage,
    /// Squared tardiness.
    Quadratic,
}

impl PenaltyKind {
    pub const ALL: [PenaltyKind; 3] = [PenaltyKind::Linear, PenaltyKind::Percentage, PenaltyKind::Quadratic];

    pub fn as_str(self) -> &'static str {
        match self {
            PenaltyKind::Linear => "linear",
            PenaltyKind::Percentage => "percentage",
            PenaltyKind::Quadratic => "quadratic",
        }
    }
}

impl fmt::Display for PenaltyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PenaltyKind {
    type Err = PenaltyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| PenaltyError::UnknownKind(s.to_string()))
    }
}

/// Execution-time estimate for one agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AgentEstimate {
    /// Seconds.
    Point(f64),
    /// Log-normal with parameters in log-seconds.
    LogNormal { mu: f64, sigma: f64 },
}

impl AgentEstimate {
    /// Point value, or the median `e^mu` of a distribution.
    pub fn central(&self) -> f64 {
        match *self {
            AgentEstimate::Point(t) => t,
            AgentEstimate::LogNormal { mu, .. } => mu.exp(),
        }
    }

    pub fn penalty(&self, deadline: f64, kind: PenaltyKind) -> f64 {
        match *self {
            AgentEstimate::Point(t) => point_penalty(t, deadline, kind),
            AgentEstimate::LogNormal { mu, sigma } => expected_penalty(mu, sigma, deadline, kind),
        }
    }

    fn is_point(&self) -> bool {
        matches!(self, AgentEstimate::Point(_))
    }

    fn validate(&self, agent: usize) -> Result<(), PenaltyError> {
        let ok = match *self {
            AgentEstimate::Point(t) => t.is_finite() && t >= 0.0,
            AgentEstimate::LogNormal { mu, sigma } => mu.is_finite() && sigma.is_finite() && sigma >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(PenaltyError::InvalidEstimate { agent, estimate: *self })
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PenaltyError {
    #[error("{estimates} estimates for {deadlines} deadlines")]
    LengthMismatch { estimates: usize, deadlines: usize },
    #[error("estimates mix point and distribution forms")]
    MixedEstimates,
    #[error("invalid estimate for agent {agent}: {estimate:?}")]
    InvalidEstimate { agent: usize, estimate: AgentEstimate },
    #[error("unknown penalty kind {0:?}")]
    UnknownKind(String),
}

pub fn point_penalty(t: f64, deadline: f64, kind: PenaltyKind) -> f64 {
    let late = (t - deadline).max(0.0);
    match kind {
        PenaltyKind::Linear => late,
        PenaltyKind::Percentage => {
            if t > deadline {
                1.0
            } else {
                0.0
            }
        }
        PenaltyKind::Quadratic => late * late,
    }
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Expected penalty when the execution time is `exp(N(mu, sigma²))`.
pub fn expected_penalty(mu: f64, sigma: f64, deadline: f64, kind: PenaltyKind) -> f64 {
    if sigma == 0.0 {
        return point_penalty(mu.exp(), deadline, kind);
    }
    let z = (deadline.ln() - mu) / sigma;
    match kind {
        PenaltyKind::Percentage => norm_cdf(-z),
        PenaltyKind::Linear => {
            let v = (mu + 0.5 * sigma * sigma).exp() * norm_cdf(sigma - z) - deadline * norm_cdf(-z);
            v.max(0.0)
        }
        PenaltyKind::Quadratic => {
            // integrate over the standard normal variable
            let f = |u: f64| {
                let late = (mu + sigma * u).exp() - deadline;
                late * late * (-0.5 * u * u).exp()
            };
            // the integrand peaks near u = 2 sigma and decays like a Gaussian beyond
            let lo = z.max(-40.0);
            let hi = z.max(2.0 * sigma) + 40.0;
            let mut knots = vec![lo];
            knots.extend([0.0, 2.0 * sigma].into_iter().filter(|&k| k > lo && k < hi));
            knots.push(hi);
            let integral: f64 = knots.windows(2).map(|w| adaptive_gk(&f, w[0], w[1], 1e-12, 24)).sum();
            (integral / (2.0 * std::f64::consts::PI).sqrt()).max(0.0)
        }
    }
}

/// Average penalty over agents; estimates must all be points or all distributions.
pub fn aggregate(estimates: &[AgentEstimate], deadlines: &[f64], kind: PenaltyKind) -> Result<f64, PenaltyError> {
    Ok(per_agent(estimates, deadlines, kind)?.iter().sum::<f64>() / estimates.len().max(1) as f64)
}

pub fn per_agent(estimates: &[AgentEstimate], deadlines: &[f64], kind: PenaltyKind) -> Result<Vec<f64>, PenaltyError> {
    if estimates.len() != deadlines.len() {
        return Err(PenaltyError::LengthMismatch {
            estimates: estimates.len(),
            deadlines: deadlines.len(),
        });
    }
    if let Some(first) = estimates.first() {
        if estimates.iter().any(|e| e.is_point() != first.is_point()) {
            return Err(PenaltyError::MixedEstimates);
        }
    }
    for (i, e) in estimates.iter().enumerate() {
        e.validate(i)?;
    }
    Ok(estimates.iter().zip(deadlines).map(|(e, &d)| e.penalty(d, kind)).collect())
}

// 7-point Gauss / 15-point Kronrod nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

fn adaptive_gk(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64, depth: u32) -> f64 {
    let (whole, _) = gk15(f, a, b);
    refine(f, a, b, rel_tol * whole.abs().max(f64::MIN_POSITIVE), depth)
}

fn refine(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (l, el) = gk15(f, a, m);
    let (r, er) = gk15(f, m, b);
    if depth == 0 || el + er <= tol.max(4.0 * f64::EPSILON * (l + r).abs()) {
        return l + r;
    }
    refine(f, a, m, 0.5 * tol, depth - 1) + refine(f, m, b, 0.5 * tol, depth - 1)
}
