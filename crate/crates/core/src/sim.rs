//! Event-driven execution of action dependency graphs under kinodynamic
//! limits.
//!
//! Robots move along straight runs (maximal sequences of consecutive moves)
//! with a bang-bang velocity profile and come to a full stop at the end of
//! every run, before rotations, waits and the goal. A move may only begin
//! once all of its Type-2 dependencies have completed (plus communication
//! latency); a robot heading toward a closed gate plans to stop at the
//! centre of the cell before it and replans as soon as the gate opens.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::adg::{Adg, EdgeType};
use crate::encode::{encode, EncodedGraph};
use crate::grid::KinodynLimits;
use crate::path::{Action, ActionKind, ActionPath};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("dependency graph has a cycle through nodes {cycle:?}; execution would deadlock")]
    Deadlock { cycle: Vec<usize> },
    #[error("entry speed {speed} outside [0, {v_max}]")]
    EntrySpeed { speed: f64, v_max: f64 },
    #[error("rotation must start from standstill (entry speed {0})")]
    RotateWhileMoving(f64),
    #[error("invalid simulator configuration: {0}")]
    Config(String),
    #[error("{0} durations for {1} nodes")]
    DurationCount(usize, usize),
}

/// Physical parameters shared by all robots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub limits: KinodynLimits,
    /// Metres per grid cell.
    pub cell_size: f64,
    /// Dwell of one wait action in seconds; `None` means one planning
    /// timestep, `cell_size / v_max`.
    pub wait_dwell: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            limits: KinodynLimits::default(),
            cell_size: 1.0,
            wait_dwell: None,
        }
    }
}

impl SimConfig {
    pub fn new(limits: KinodynLimits, cell_size: f64) -> Self {
        SimConfig {
            limits,
            cell_size,
            wait_dwell: None,
        }
    }

    pub fn dwell(&self) -> f64 {
        self.wait_dwell.unwrap_or(self.cell_size / self.limits.v_max)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.limits
            .validate()
            .map_err(|e| SimError::Config(e.to_string()))?;
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            return Err(SimError::Config(format!("cell size {}", self.cell_size)));
        }
        if self.dwell() < 0.0 || !self.dwell().is_finite() {
            return Err(SimError::Config(format!("wait dwell {}", self.dwell())));
        }
        Ok(())
    }
}

/// Stochastic disturbances. Every action is slowed by a factor
/// `exp(sigma * |Z|) >= 1`; every Type-2 dependency is delayed by
/// `latency_base + U[0, latency_jitter]` seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub sigma: f64,
    pub latency_base: f64,
    pub latency_jitter: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn ideal() -> Self {
        NoiseModel {
            sigma: 0.0,
            latency_base: 0.0,
            latency_jitter: 0.0,
            seed: 0,
        }
    }

    pub fn realistic(seed: u64) -> Self {
        NoiseModel {
            sigma: 0.05,
            latency_base: 0.0,
            latency_jitter: 0.1,
            seed,
        }
    }

    pub fn is_ideal(&self) -> bool {
        self.sigma == 0.0 && self.latency_base == 0.0 && self.latency_jitter == 0.0
    }

    fn validate(&self) -> Result<(), SimError> {
        let ok = [self.sigma, self.latency_base, self.latency_jitter]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(SimError::Config(format!("noise {self:?}")))
        }
    }

    /// Per-node slowdown factors and per-edge latencies (zero for Type-1).
    fn draw(&self, adg: &Adg) -> (Vec<f64>, Vec<f64>) {
        if self.is_ideal() {
            return (vec![1.0; adg.nodes().len()], vec![0.0; adg.edges().len()]);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let factors = adg
            .nodes()
            .iter()
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                (self.sigma * z.abs()).exp()
            })
            .collect();
        let latencies = adg
            .edges()
            .iter()
            .map(|e| {
                let u: f64 = rng.random();
                match e.kind {
                    EdgeType::Type1 => 0.0,
                    EdgeType::Type2 => self.latency_base + u * self.latency_jitter,
                }
            })
            .collect();
        (factors, latencies)
    }
}

/// Piece of constant acceleration, in run-local coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionSegment {
    pub agent: usize,
    pub t0: f64,
    pub t1: f64,
    /// Metres from the start of the run.
    pub x0: f64,
    pub v0: f64,
    pub accel: f64,
}

impl MotionSegment {
    pub fn v1(&self) -> f64 {
        self.v0 + self.accel * (self.t1 - self.t0)
    }

    pub fn x1(&self) -> f64 {
        let dt = self.t1 - self.t0;
        self.x0 + self.v0 * dt + 0.5 * self.accel * dt * dt
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEvent {
    pub agent: usize,
    pub action_index: usize,
    pub kind: ActionKind,
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecOutcome {
    /// Goal arrival per agent, seconds.
    pub arrival: Vec<f64>,
    /// One entry per ADG node, in node order.
    pub trace: Vec<TraceEvent>,
    pub segments: Vec<MotionSegment>,
    pub makespan: f64,
}

impl ExecOutcome {
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("agent,action_index,kind,start_s,end_s\n");
        for e in &self.trace {
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{:.6}",
                e.agent,
                e.action_index,
                e.kind.name(),
                e.start_s,
                e.end_s
            );
        }
        out
    }
}

/// Time-optimal stop-at-target profile: accelerate, cruise, brake.
#[derive(Debug, Clone, Copy)]
struct Profile {
    t0: f64,
    x0: f64,
    v0: f64,
    vp: f64,
    acc: f64,
    dec: f64,
    // phase ends, absolute
    t1: f64,
    t2: f64,
    t3: f64,
    x1: f64,
    x2: f64,
    x3: f64,
}

impl Profile {
    fn plan(t0: f64, x0: f64, v0: f64, target: f64, v_max: f64, acc: f64, dec: f64) -> Profile {
        let dist = (target - x0).max(0.0);
        let mut vp = ((2.0 * acc * dec * dist + dec * v0 * v0) / (acc + dec)).sqrt().min(v_max);
        let mut dec = dec;
        if vp < v0 {
            // already at the braking limit (rounding): brake just hard enough
            vp = v0;
            if dist > 0.0 {
                dec = (v0 * v0 / (2.0 * dist)).max(dec);
            }
        }
        let d1 = (vp * vp - v0 * v0) / (2.0 * acc);
        let d3 = if vp > 0.0 { vp * vp / (2.0 * dec) } else { 0.0 };
        let d2 = (dist - d1 - d3).max(0.0);
        let t1 = t0 + (vp - v0) / acc;
        let t2 = t1 + if d2 > 0.0 { d2 / vp } else { 0.0 };
        let t3 = t2 + vp / dec;
        Profile {
            t0,
            x0,
            v0,
            vp,
            acc,
            dec,
            t1,
            t2,
            t3,
            x1: x0 + d1,
            x2: x0 + d1 + d2,
            x3: target.max(x0),
        }
    }

    fn state(&self, t: f64) -> (f64, f64) {
        if t <= self.t0 {
            (self.x0, self.v0)
        } else if t <= self.t1 {
            let dt = t - self.t0;
            (self.x0 + self.v0 * dt + 0.5 * self.acc * dt * dt, self.v0 + self.acc * dt)
        } else if t <= self.t2 {
            (self.x1 + self.vp * (t - self.t1), self.vp)
        } else if t < self.t3 {
            let dt = t - self.t2;
            (
                (self.x2 + self.vp * dt - 0.5 * self.dec * dt * dt).min(self.x3),
                (self.vp - self.dec * dt).max(0.0),
            )
        } else {
            (self.x3, 0.0)
        }
    }

    /// First time the position reaches `x`.
    fn time_at(&self, x: f64) -> f64 {
        if x <= self.x0 {
            self.t0
        } else if x >= self.x3 {
            self.t3
        } else if x <= self.x1 {
            let d = x - self.x0;
            self.t0 + 2.0 * d / (self.v0 + (self.v0 * self.v0 + 2.0 * self.acc * d).sqrt())
        } else if x <= self.x2 {
            self.t1 + (x - self.x1) / self.vp
        } else {
            let d = x - self.x2;
            let disc = (self.vp * self.vp - 2.0 * self.dec * d).max(0.0);
            (self.t2 + 2.0 * d / (self.vp + disc.sqrt())).min(self.t3)
        }
    }

    /// The executed part of the profile up to time `until`.
    fn segments(&self, agent: usize, until: f64, out: &mut Vec<MotionSegment>) {
        let phases = [
            (self.t0, self.t1, self.acc),
            (self.t1, self.t2, 0.0),
            (self.t2, self.t3, -self.dec),
        ];
        for (a, b, accel) in phases {
            let b = b.min(until);
            if b > a {
                let (x0, v0) = self.state(a);
                out.push(MotionSegment {
                    agent,
                    t0: a,
                    t1: b,
                    x0,
                    v0,
                    accel,
                });
            }
        }
    }
}

/// Duration of a single action and the speed at its end.
///
/// A move is the first cell of a straight run of `run_length` cells that
/// starts at `entry_speed` and must end at rest.
pub fn action_duration(
    action: &Action,
    entry_speed: f64,
    run_length: usize,
    cfg: &SimConfig,
) -> Result<(f64, f64), SimError> {
    let lim = &cfg.limits;
    if !(0.0..=lim.v_max).contains(&entry_speed) {
        return Err(SimError::EntrySpeed {
            speed: entry_speed,
            v_max: lim.v_max,
        });
    }
    match action.kind {
        ActionKind::Rotate(deg) => {
            if entry_speed != 0.0 {
                return Err(SimError::RotateWhileMoving(entry_speed));
            }
            Ok((deg.unsigned_abs() as f64 / lim.omega_max, 0.0))
        }
        ActionKind::Wait => Ok((cfg.dwell(), entry_speed)),
        ActionKind::MoveForward => {
            let run = run_length.max(1) as f64 * cfg.cell_size;
            let p = Profile::plan(0.0, 0.0, entry_speed, run, lim.v_max, lim.a_max, -lim.a_min);
            let t = p.time_at(cfg.cell_size);
            Ok((t, p.state(t).1))
        }
    }
}

/// Rest-to-rest time for a straight run of `cells` cells.
pub fn run_time(cells: usize, cfg: &SimConfig) -> f64 {
    let lim = &cfg.limits;
    Profile::plan(0.0, 0.0, 0.0, cells as f64 * cfg.cell_size, lim.v_max, lim.a_max, -lim.a_min).t3
}

/// Noise-free solo execution time of one action path (no dependencies).
pub fn solo_time(path: &ActionPath, cfg: &SimConfig) -> f64 {
    let mut total = 0.0;
    let mut run = 0;
    for a in &path.actions {
        match a.kind {
            ActionKind::MoveForward => run += 1,
            other => {
                total += run_time(run, cfg);
                run = 0;
                total += match other {
                    ActionKind::Rotate(deg) => deg.unsigned_abs() as f64 / cfg.limits.omega_max,
                    _ => cfg.dwell(),
                };
            }
        }
    }
    total + run_time(run, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    GateOpen,
    Crossing { epoch: u64 },
    ActionDone,
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    agent: usize,
    action: usize,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.agent.cmp(&self.agent))
            .then(other.action.cmp(&self.action))
            .then(other.kind.cmp(&self.kind))
    }
}

#[derive(Debug, Clone)]
struct Run {
    /// Agent-local index of the first move.
    first: usize,
    len: usize,
    v_max: f64,
    acc: f64,
    dec: f64,
    profile: Profile,
    next_center: usize,
    target: usize,
    waiting_at: Option<usize>,
    epoch: u64,
}

#[derive(Debug, Clone)]
enum Phase {
    Idle,
    Busy,
    Moving(Run),
}

struct Sim<'a> {
    adg: &'a Adg,
    cfg: &'a SimConfig,
    factors: Vec<f64>,
    latencies: Vec<f64>,
    pending: Vec<usize>,
    release: Vec<f64>,
    open: Vec<bool>,
    next_action: Vec<usize>,
    phase: Vec<Phase>,
    start: Vec<f64>,
    end: Vec<f64>,
    queue: BinaryHeap<Event>,
    segments: Vec<MotionSegment>,
}

impl<'a> Sim<'a> {
    fn node(&self, agent: usize, index: usize) -> usize {
        self.adg.agent_nodes(agent).start + index
    }

    fn agent_len(&self, agent: usize) -> usize {
        self.adg.agent_nodes(agent).len()
    }

    fn push(&mut self, time: f64, agent: usize, action: usize, kind: EventKind) {
        self.queue.push(Event {
            time,
            agent,
            action,
            kind,
        });
    }

    fn finish(&mut self, node: usize, t: f64) {
        self.end[node] = t;
        for &id in self.adg.outgoing_ids(node) {
            let e = self.adg.edges()[id];
            if e.kind != EdgeType::Type2 {
                continue;
            }
            let dst = e.dst;
            self.release[dst] = self.release[dst].max(t + self.latencies[id]);
            self.pending[dst] -= 1;
            if self.pending[dst] == 0 {
                let n = self.adg.nodes()[dst];
                self.push(self.release[dst], n.agent, n.index, EventKind::GateOpen);
            }
        }
    }

    /// First closed gate strictly after run position `after`, or the run end.
    fn target_after(&self, agent: usize, run_first: usize, len: usize, after: usize) -> usize {
        (after + 1..len)
            .find(|&j| !self.open[self.node(agent, run_first + j)])
            .unwrap_or(len)
    }

    fn schedule_crossing(&mut self, agent: usize) {
        if let Phase::Moving(run) = &self.phase[agent] {
            let t = run.profile.time_at(run.next_center as f64 * self.cfg.cell_size);
            let (action, epoch) = (run.first + run.next_center - 1, run.epoch);
            self.push(t, agent, action, EventKind::Crossing { epoch });
        }
    }

    /// Starts the agent's next action if it is idle and allowed to.
    fn advance(&mut self, agent: usize, now: f64) {
        if !matches!(self.phase[agent], Phase::Idle) {
            return;
        }
        let idx = self.next_action[agent];
        if idx >= self.agent_len(agent) {
            return;
        }
        let n = self.node(agent, idx);
        if !self.open[n] {
            return;
        }
        let lim = self.cfg.limits;
        let f = self.factors[n];
        let action = self.adg.nodes()[n].action;
        self.start[n] = now;
        match action.kind {
            ActionKind::Rotate(deg) => {
                self.phase[agent] = Phase::Busy;
                let d = deg.unsigned_abs() as f64 / lim.omega_max * f;
                self.push(now + d, agent, idx, EventKind::ActionDone);
            }
            ActionKind::Wait => {
                self.phase[agent] = Phase::Busy;
                self.push(now + self.cfg.dwell() * f, agent, idx, EventKind::ActionDone);
            }
            ActionKind::MoveForward => {
                let range = self.adg.agent_nodes(agent);
                let len = (idx..range.len())
                    .take_while(|&i| self.adg.nodes()[range.start + i].action.kind == ActionKind::MoveForward)
                    .count();
                let (v_max, acc, dec) = (lim.v_max / f, lim.a_max / (f * f), -lim.a_min / (f * f));
                let target = self.target_after(agent, idx, len, 0);
                let cell = self.cfg.cell_size;
                let profile = Profile::plan(now, 0.0, 0.0, target as f64 * cell, v_max, acc, dec);
                self.phase[agent] = Phase::Moving(Run {
                    first: idx,
                    len,
                    v_max,
                    acc,
                    dec,
                    profile,
                    next_center: 1,
                    target,
                    waiting_at: None,
                    epoch: 0,
                });
                self.schedule_crossing(agent);
            }
        }
    }

    fn on_action_done(&mut self, agent: usize, idx: usize, t: f64) {
        let n = self.node(agent, idx);
        self.finish(n, t);
        self.phase[agent] = Phase::Idle;
        self.next_action[agent] = idx + 1;
        self.advance(agent, t);
    }

    fn on_crossing(&mut self, agent: usize, epoch: u64, t: f64) {
        let Phase::Moving(run) = &self.phase[agent] else {
            return;
        };
        if run.epoch != epoch {
            return;
        }
        let c = run.next_center;
        let (first, len) = (run.first, run.len);
        let ended = self.node(agent, first + c - 1);
        if c == len {
            let mut segs = Vec::new();
            run.profile.segments(agent, f64::INFINITY, &mut segs);
            self.segments.extend(segs);
            self.phase[agent] = Phase::Idle;
            self.next_action[agent] = first + len;
            self.finish(ended, t);
            self.advance(agent, t);
            return;
        }
        let next = self.node(agent, first + c);
        let open = self.open[next];
        if open {
            self.start[next] = t;
        }
        if let Phase::Moving(run) = &mut self.phase[agent] {
            if open {
                run.next_center = c + 1;
            } else {
                run.waiting_at = Some(c);
            }
        }
        if open {
            self.schedule_crossing(agent);
        }
        self.finish(ended, t);
    }

    fn on_gate_open(&mut self, agent: usize, idx: usize, t: f64) {
        let n = self.node(agent, idx);
        self.open[n] = true;
        let Phase::Moving(run) = &self.phase[agent] else {
            self.advance(agent, t);
            return;
        };
        if idx < run.first || idx >= run.first + run.len {
            return;
        }
        let j = idx - run.first;
        let cell = self.cfg.cell_size;
        if run.waiting_at == Some(j) || j == run.target {
            let mut run = run.clone();
            let new_target = self.target_after(agent, run.first, run.len, j);
            let (x, v) = run.profile.state(t);
            run.profile.segments(agent, t, &mut self.segments);
            if run.waiting_at == Some(j) {
                self.start[n] = t;
                run.next_center = j + 1;
                run.waiting_at = None;
            }
            run.target = new_target;
            run.profile = Profile::plan(t, x, v, new_target as f64 * cell, run.v_max, run.acc, run.dec);
            run.epoch += 1;
            self.phase[agent] = Phase::Moving(run);
            self.schedule_crossing(agent);
        }
    }
}

fn check_cycle(adg: &Adg) -> Result<(), SimError> {
    match adg.find_cycle() {
        Some(cycle) => Err(SimError::Deadlock { cycle }),
        None => Ok(()),
    }
}

/// Executes the graph reactively: robots replan their motion whenever a
/// dependency gate opens.
pub fn simulate(adg: &Adg, cfg: &SimConfig, noise: &NoiseModel) -> Result<ExecOutcome, SimError> {
    cfg.validate()?;
    noise.validate()?;
    check_cycle(adg)?;
    let (factors, latencies) = noise.draw(adg);
    let n = adg.nodes().len();
    let pending: Vec<usize> = (0..n)
        .map(|i| adg.incoming(i).filter(|e| e.kind == EdgeType::Type2).count())
        .collect();
    let mut sim = Sim {
        adg,
        cfg,
        factors,
        latencies,
        open: pending.iter().map(|&p| p == 0).collect(),
        pending,
        release: vec![0.0; n],
        next_action: vec![0; adg.num_agents()],
        phase: vec![Phase::Idle; adg.num_agents()],
        start: vec![f64::NAN; n],
        end: vec![f64::NAN; n],
        queue: BinaryHeap::new(),
        segments: Vec::new(),
    };
    for agent in 0..adg.num_agents() {
        sim.advance(agent, 0.0);
    }
    while let Some(ev) = sim.queue.pop() {
        match ev.kind {
            EventKind::ActionDone => sim.on_action_done(ev.agent, ev.action, ev.time),
            EventKind::Crossing { epoch } => sim.on_crossing(ev.agent, epoch, ev.time),
            EventKind::GateOpen => sim.on_gate_open(ev.agent, ev.action, ev.time),
        }
    }
    debug_assert!(sim.end.iter().all(|t| t.is_finite()), "acyclic graphs always complete");
    Ok(outcome(adg, &sim.start, &sim.end, sim.segments))
}

fn outcome(adg: &Adg, start: &[f64], end: &[f64], segments: Vec<MotionSegment>) -> ExecOutcome {
    let arrival: Vec<f64> = (0..adg.num_agents())
        .map(|a| adg.agent_nodes(a).last().map_or(0.0, |n| end[n]))
        .collect();
    let trace = adg
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, node)| TraceEvent {
            agent: node.agent,
            action_index: node.index,
            kind: node.action.kind,
            start_s: start[i],
            end_s: end[i],
        })
        .collect();
    ExecOutcome {
        makespan: arrival.iter().copied().fold(0.0, f64::max),
        arrival,
        trace,
        segments,
    }
}

/// Per-node durations of an unobstructed execution (with the noise
/// factors), and per-edge latencies.
pub fn nominal_durations(adg: &Adg, cfg: &SimConfig, noise: &NoiseModel) -> Result<(Vec<f64>, Vec<f64>), SimError> {
    cfg.validate()?;
    noise.validate()?;
    let (factors, latencies) = noise.draw(adg);
    let lim = cfg.limits;
    let nodes = adg.nodes();
    let mut dur = vec![0.0; nodes.len()];
    for agent in 0..adg.num_agents() {
        let range = adg.agent_nodes(agent);
        let mut i = range.start;
        while i < range.end {
            let f = factors[i];
            match nodes[i].action.kind {
                ActionKind::Rotate(deg) => dur[i] = deg.unsigned_abs() as f64 / lim.omega_max * f,
                ActionKind::Wait => dur[i] = cfg.dwell() * f,
                ActionKind::MoveForward => {
                    let len = (i..range.end)
                        .take_while(|&k| nodes[k].action.kind == ActionKind::MoveForward)
                        .count();
                    let p = Profile::plan(
                        0.0,
                        0.0,
                        0.0,
                        len as f64 * cfg.cell_size,
                        lim.v_max / f,
                        lim.a_max / (f * f),
                        -lim.a_min / (f * f),
                    );
                    for k in 0..len {
                        dur[i + k] = p.time_at((k + 1) as f64 * cfg.cell_size) - p.time_at(k as f64 * cfg.cell_size);
                    }
                    i += len;
                    continue;
                }
            }
            i += 1;
        }
    }
    Ok((dur, latencies))
}

/// Executes with fixed action durations: each node starts once its
/// predecessors (and latencies) are done. Equivalent to a longest-path
/// computation; used where durations must not react to dependencies.
pub fn simulate_fixed(adg: &Adg, durations: &[f64], latencies: &[f64]) -> Result<ExecOutcome, SimError> {
    if durations.len() != adg.nodes().len() {
        return Err(SimError::DurationCount(durations.len(), adg.nodes().len()));
    }
    if latencies.len() != adg.edges().len() {
        return Err(SimError::DurationCount(latencies.len(), adg.edges().len()));
    }
    let order = adg.topological_order().map_err(|cycle| SimError::Deadlock { cycle })?;
    let mut start = vec![0.0; durations.len()];
    let mut end = vec![0.0; durations.len()];
    for v in order {
        let s = adg
            .incoming_ids(v)
            .iter()
            .map(|&i| end[adg.edges()[i].src] + latencies[i])
            .fold(0.0, f64::max);
        start[v] = s;
        end[v] = s + durations[v];
    }
    Ok(outcome(adg, &start, &end, Vec::new()))
}

/// Planned cost (timesteps until final arrival) of an action path.
pub fn planned_cost(path: &ActionPath) -> usize {
    path.project().len() - 1
}

/// Simulates and labels each plan. Plans whose sum of costs was already
/// seen are skipped; the result pairs each kept plan's index with its
/// labelled graph or error.
pub fn label_dataset(
    plans: &[Vec<ActionPath>],
    cfg: &SimConfig,
    noise: &NoiseModel,
) -> Vec<(usize, Result<EncodedGraph, SimError>)> {
    let mut seen = HashSet::new();
    let unique: Vec<usize> = (0..plans.len())
        .filter(|&i| seen.insert(plans[i].iter().map(planned_cost).sum::<usize>()))
        .collect();
    crate::parallel::par_map(&unique, |&i| {
        let adg = Adg::build(&plans[i]);
        let labelled = simulate(&adg, cfg, noise).map(|o| encode(&adg).with_labels(o.arrival));
        (i, labelled)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Cell;
    use crate::path::{expand_actions, GridPath};

    fn aps(paths: &[&[(u32, u32)]]) -> Vec<ActionPath> {
        paths
            .iter()
            .enumerate()
            .map(|(i, p)| expand_actions(&GridPath::new(i, p.iter().map(|&(x, y)| Cell::new(x, y)).collect()), None))
            .collect()
    }

    fn straight(len: u32, y: u32) -> Vec<(u32, u32)> {
        (0..=len).map(|x| (x, y)).collect()
    }

    /// Independent oracle: integrate a bang-bang profile with a fine time step.
    fn integrate_rest_to_rest(dist: f64, v_max: f64, a: f64) -> f64 {
        let dt = 1e-4;
        let (mut x, mut v, mut t) = (0.0f64, 0.0f64, 0.0f64);
        loop {
            let brake = v * v / (2.0 * a) >= dist - x;
            let acc = if brake { -a } else if v < v_max { a } else { 0.0 };
            let v_next = (v + acc * dt).clamp(0.0, v_max);
            x += 0.5 * (v + v_next) * dt;
            v = v_next;
            t += dt;
            if brake && v <= 0.0 {
                return t;
            }
        }
    }

    #[test]
    fn duration_examples() {
        let cfg = SimConfig::default();
        let mv = aps(&[&[(0, 0), (1, 0)]])[0].actions[0];
        let (t, v) = action_duration(&mv, 0.0, 1, &cfg).unwrap();
        assert!((t - 2.0 * 10f64.sqrt()).abs() < 1e-12);
        assert!(v.abs() < 1e-12);
        let rot = aps(&[&[(0, 0), (1, 0), (1, 1)]])[0].actions[1];
        assert_eq!(action_duration(&rot, 0.0, 1, &cfg).unwrap().0, 30.0);
        assert!(matches!(action_duration(&rot, 0.5, 1, &cfg), Err(SimError::RotateWhileMoving(_))));
        assert!(matches!(action_duration(&mv, 6.0, 1, &cfg), Err(SimError::EntrySpeed { .. })));
        let w = aps(&[&[(0, 0), (0, 0)]])[0].actions[0];
        assert_eq!(action_duration(&w, 0.0, 1, &cfg).unwrap().0, 0.2);
    }

    #[test]
    fn long_runs_match_integrated_profile() {
        let cfg = SimConfig::default();
        for cells in [1usize, 10, 200, 400] {
            let want = integrate_rest_to_rest(cells as f64, 5.0, 0.1);
            assert!((run_time(cells, &cfg) - want).abs() < 2e-3, "{cells}: {} vs {want}", run_time(cells, &cfg));
        }
        assert!((run_time(200, &cfg) - 2.0 * 2000f64.sqrt()).abs() < 1e-9);
        assert!((run_time(400, &cfg) - 130.0).abs() < 1e-9);
    }

    #[test]
    fn solo_straight_run() {
        let cfg = SimConfig::default();
        let plan = aps(&[&straight(10, 0)]);
        let out = simulate(&Adg::build(&plan), &cfg, &NoiseModel::ideal()).unwrap();
        assert!((out.arrival[0] - run_time(10, &cfg)).abs() < 1e-9);
        assert!((out.arrival[0] - solo_time(&plan[0], &cfg)).abs() < 1e-9);
    }

    #[test]
    fn independent_agents_match_solo() {
        let cfg = SimConfig::default();
        let a: Vec<(u32, u32)> = vec![(0, 0), (1, 0), (2, 0), (2, 1), (2, 2)];
        let b = straight(5, 4);
        let together = simulate(&Adg::build(&aps(&[&a, &b])), &cfg, &NoiseModel::ideal()).unwrap();
        for (i, p) in [&a, &b].iter().enumerate() {
            let solo = simulate(&Adg::build(&aps(&[p])), &cfg, &NoiseModel::ideal()).unwrap();
            assert_eq!(together.arrival[i], solo.arrival[0]);
        }
    }

    #[test]
    fn gated_agent_enters_after_vacate() {
        let cfg = SimConfig::default();
        // agent 1 waits two steps, then crosses the cell agent 0 passes at t=1
        let plan = aps(&[
            &[(0, 1), (1, 1), (2, 1), (3, 1)],
            &[(1, 3), (1, 3), (1, 3), (1, 3), (1, 2), (1, 1), (1, 0)],
        ]);
        let adg = Adg::build(&plan);
        let out = simulate(&adg, &cfg, &NoiseModel::ideal()).unwrap();
        let e = adg.edges().iter().find(|e| e.kind == EdgeType::Type2).unwrap();
        assert!(out.trace[e.dst].start_s >= out.trace[e.src].end_s);
        // and the solo time is only a lower bound
        let solo = solo_time(&plan[1], &cfg);
        assert!(out.arrival[1] >= solo - 1e-9);
        assert!(out.arrival[1] > solo + 1.0, "agent 1 must actually be held up");
    }

    #[test]
    fn brakes_at_closed_gate_and_respects_limits() {
        let cfg = SimConfig::default();
        // agent 1 runs straight through a cell agent 0 occupies until it leaves
        let plan = aps(&[
            &[(3, 1), (3, 1), (3, 0)],
            &[(0, 1), (0, 1), (0, 1), (0, 1), (1, 1), (2, 1), (3, 1), (4, 1), (5, 1), (6, 1)],
        ]);
        let adg = Adg::build(&plan);
        assert!(adg.is_acyclic());
        let out = simulate(&adg, &cfg, &NoiseModel::realistic(3)).unwrap();
        check_limits(&out, &cfg);
        for e in adg.edges() {
            let (s, d) = (&out.trace[e.src], &out.trace[e.dst]);
            assert!(d.start_s >= s.end_s - 1e-9, "{e:?}");
        }
    }

    fn check_limits(out: &ExecOutcome, cfg: &SimConfig) {
        let lim = cfg.limits;
        for s in &out.segments {
            assert!(s.t1 >= s.t0);
            assert!(s.accel <= lim.a_max + 1e-12 && s.accel >= lim.a_min - 1e-12, "{s:?}");
            assert!(s.v0 >= -1e-9 && s.v0 <= lim.v_max + 1e-9, "{s:?}");
            assert!(s.v1() >= -1e-6 && s.v1() <= lim.v_max + 1e-9, "{s:?}");
        }
        // per agent, segments are contiguous in time while a run lasts
        for w in out.segments.windows(2) {
            if w[0].agent == w[1].agent && (w[0].t1 - w[1].t0).abs() < 1e-12 {
                assert!((w[0].v1() - w[1].v0).abs() < 1e-6);
                assert!((w[0].x1() - w[1].x0).abs() < 1e-6);
            }
        }
        // action intervals per agent are ordered and non-overlapping
        for w in out.trace.windows(2) {
            assert!(w[0].end_s >= w[0].start_s);
            if w[0].agent == w[1].agent {
                assert!(w[1].start_s >= w[0].end_s - 1e-9);
            }
        }
    }

    #[test]
    fn cyclic_graph_deadlocks() {
        let plan = aps(&[&[(0, 1), (1, 1), (2, 1)], &[(1, 0), (1, 1), (1, 2)]]);
        let err = simulate(&Adg::build(&plan), &SimConfig::default(), &NoiseModel::ideal()).unwrap_err();
        assert!(matches!(err, SimError::Deadlock { cycle } if cycle.len() == 2));
    }

    #[test]
    fn noise_is_seeded() {
        let cfg = SimConfig::default();
        let plan = aps(&[&[(0, 0), (1, 0), (2, 0), (2, 1)], &[(3, 3), (3, 2), (3, 1), (3, 0)]]);
        let adg = Adg::build(&plan);
        let a = simulate(&adg, &cfg, &NoiseModel::realistic(7)).unwrap();
        let b = simulate(&adg, &cfg, &NoiseModel::realistic(7)).unwrap();
        let c = simulate(&adg, &cfg, &NoiseModel::realistic(8)).unwrap();
        let ideal = simulate(&adg, &cfg, &NoiseModel::ideal()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.arrival, c.arrival);
        for (n, i) in a.arrival.iter().zip(&ideal.arrival) {
            assert!(n >= i, "noise only slows robots down");
        }
    }

    #[test]
    fn fixed_mode_matches_reactive_without_interaction() {
        let cfg = SimConfig::default();
        let plan = aps(&[&[(0, 0), (1, 0), (2, 0), (2, 1), (2, 2)], &[(5, 5), (5, 5), (4, 5)]]);
        let adg = Adg::build(&plan);
        let (d, l) = nominal_durations(&adg, &cfg, &NoiseModel::ideal()).unwrap();
        let fixed = simulate_fixed(&adg, &d, &l).unwrap();
        let live = simulate(&adg, &cfg, &NoiseModel::ideal()).unwrap();
        for (x, y) in fixed.arrival.iter().zip(&live.arrival) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn trace_csv_header() {
        let plan = aps(&[&straight(2, 0)]);
        let out = simulate(&Adg::build(&plan), &SimConfig::default(), &NoiseModel::ideal()).unwrap();
        let csv = out.trace_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("agent,action_index,kind,start_s,end_s"));
        assert!(lines.next().unwrap().starts_with("0,0,move,0.000000,"));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn dataset_dedups_by_cost() {
        let cfg = SimConfig::default();
        let p1 = aps(&[&straight(3, 0)]);
        let p2 = aps(&[&straight(3, 2)]);
        let p3 = aps(&[&straight(4, 2)]);
        let out = label_dataset(&[p1, p2, p3], &cfg, &NoiseModel::ideal());
        assert_eq!(out.iter().map(|(i, _)| *i).collect::<Vec<_>>(), vec![0, 2]);
        assert!(out.iter().all(|(_, g)| g.as_ref().unwrap().labels.is_some()));
        assert!(label_dataset(&[], &cfg, &NoiseModel::ideal()).is_empty());
    }
}
