//! Feature-annotated graphs and their line-oriented text format.
//!
//! Node features (11): action one-hot [move, rotate, wait], planned
//! timestep / makespan, agent id / agent count, index in the agent's path,
//! in-degree, out-degree, preceding actions of the agent (all types),
//! remaining actions of the agent with the same type, and whether the node
//! has an outgoing Type-2 edge.
//!
//! Edge features (3): type (0 = Type1, 1 = Type2), path-index difference
//! dst − src, planned-timestep difference / makespan.

use std::fmt::Write as _;

use thiserror::Error;

use crate::adg::{Adg, EdgeType};

pub const NODE_FEATURES: usize = 11;
pub const EDGE_FEATURES: usize = 3;
pub const FORMAT_VERSION: &str = "adgv1";

const NODE_FEATURE_NAMES: &str = "move,rotate,wait,timestep/makespan,agent/agents,path_index,in_degree,out_degree,preceding_all,future_same_type,has_type2_out";
const EDGE_FEATURE_NAMES: &str = "type,index_diff,timestep_diff/makespan";

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedGraph {
    pub num_agents: usize,
    pub makespan: u32,
    /// Owning agent per node; nodes of one agent are contiguous and in plan order.
    pub node_agent: Vec<usize>,
    pub node_features: Vec<[f64; NODE_FEATURES]>,
    pub edges: Vec<(usize, usize)>,
    pub edge_features: Vec<[f64; EDGE_FEATURES]>,
    /// Per-agent execution times in seconds, when known.
    pub labels: Option<Vec<f64>>,
}

#[derive(Debug, Error, PartialEq)]
pub enum GraphFormatError {
    #[error("unsupported graph format version {0:?}")]
    Version(String),
    #[error("malformed {section} section at line {line}: {reason}")]
    Malformed {
        section: &'static str,
        line: usize,
        reason: String,
    },
    #[error("truncated graph file: {section} section incomplete")]
    Truncated { section: &'static str },
}

impl EncodedGraph {
    pub fn num_nodes(&self) -> usize {
        self.node_features.len()
    }

    /// Ordered node indices per agent.
    pub fn partition(&self) -> Vec<Vec<usize>> {
        let mut parts = vec![Vec::new(); self.num_agents];
        for (n, &a) in self.node_agent.iter().enumerate() {
            parts[a].push(n);
        }
        parts
    }

    pub fn with_labels(mut self, labels: Vec<f64>) -> Self {
        assert_eq!(labels.len(), self.num_agents, "one label per agent");
        self.labels = Some(labels);
        self
    }
}

pub fn encode(adg: &Adg) -> EncodedGraph {
    let makespan = adg.makespan();
    let ms = makespan as f64;
    let agents = adg.num_agents();
    let nodes = adg.nodes();

    let mut node_features = Vec::with_capacity(nodes.len());
    for agent in 0..agents {
        let range = adg.agent_nodes(agent);
        // remaining same-type counts, walking backwards
        let mut future = vec![0usize; range.len()];
        let mut seen = [0usize; 3];
        for (k, n) in range.clone().enumerate().rev() {
            let class = nodes[n].action.kind.class();
            future[k] = seen[class];
            seen[class] += 1;
        }
        for (k, n) in range.enumerate() {
            let node = &nodes[n];
            let mut f = [0.0; NODE_FEATURES];
            f[node.action.kind.class()] = 1.0;
            f[3] = node.action.planned_timestep as f64 / ms;
            f[4] = agent as f64 / agents as f64;
            f[5] = node.index as f64;
            f[6] = adg.incoming(n).count() as f64;
            f[7] = adg.outgoing(n).count() as f64;
            f[8] = k as f64;
            f[9] = future[k] as f64;
            f[10] = if adg.outgoing(n).any(|e| e.kind == EdgeType::Type2) { 1.0 } else { 0.0 };
            node_features.push(f);
        }
    }

    let edges: Vec<(usize, usize)> = adg.edges().iter().map(|e| (e.src, e.dst)).collect();
    let edge_features = adg
        .edges()
        .iter()
        .map(|e| {
            let (s, d) = (&nodes[e.src], &nodes[e.dst]);
            [
                match e.kind {
                    EdgeType::Type1 => 0.0,
                    EdgeType::Type2 => 1.0,
                },
                d.index as f64 - s.index as f64,
                (d.action.planned_timestep as f64 - s.action.planned_timestep as f64) / ms,
            ]
        })
        .collect();

    EncodedGraph {
        num_agents: agents,
        makespan,
        node_agent: nodes.iter().map(|n| n.agent).collect(),
        node_features,
        edges,
        edge_features,
        labels: None,
    }
}

fn num(out: &mut String, v: f64) {
    // canonical: avoid "-0.000000000"
    let s = format!("{v:.9}");
    if s.trim_start_matches('-').bytes().all(|b| b == b'0' || b == b'.') {
        out.push_str(" 0.000000000");
    } else {
        out.push(' ');
        out.push_str(&s);
    }
}

pub fn serialize_graph(g: &EncodedGraph) -> String {
    let mut out = String::new();
    out.push_str(FORMAT_VERSION);
    out.push('\n');
    let _ = writeln!(out, "# node {NODE_FEATURE_NAMES}");
    let _ = writeln!(out, "# edge {EDGE_FEATURE_NAMES}");
    let _ = writeln!(
        out,
        "counts agents {} nodes {} edges {}",
        g.num_agents,
        g.num_nodes(),
        g.edges.len()
    );
    let _ = writeln!(out, "norm makespan {} agents {}", g.makespan, g.num_agents);
    out.push_str("nodes\n");
    for (a, f) in g.node_agent.iter().zip(&g.node_features) {
        let _ = write!(out, "{a}");
        for &v in f {
            num(&mut out, v);
        }
        out.push('\n');
    }
    out.push_str("edges\n");
    for ((s, d), f) in g.edges.iter().zip(&g.edge_features) {
        let _ = write!(out, "{s} {d}");
        for &v in f {
            num(&mut out, v);
        }
        out.push('\n');
    }
    match &g.labels {
        Some(labels) => {
            out.push_str("labels\n");
            for (a, &t) in labels.iter().enumerate() {
                let _ = write!(out, "{a}");
                num(&mut out, t);
                out.push('\n');
            }
        }
        None => out.push_str("labels none\n"),
    }
    out.push_str("end\n");
    out
}

struct Lines<'a> {
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    /// Next non-comment line, or a truncation error for `section`.
    fn next(&mut self, section: &'static str) -> Result<&'a str, GraphFormatError> {
        for (i, l) in self.iter.by_ref() {
            self.line = i + 1;
            let l = l.trim_end();
            if !l.starts_with('#') {
                return Ok(l);
            }
        }
        Err(GraphFormatError::Truncated { section })
    }

    fn bad(&self, section: &'static str, reason: impl Into<String>) -> GraphFormatError {
        GraphFormatError::Malformed {
            section,
            line: self.line,
            reason: reason.into(),
        }
    }
}

fn keyed<'a>(
    lines: &Lines<'a>,
    line: &'a str,
    section: &'static str,
    keys: &[&str],
) -> Result<Vec<usize>, GraphFormatError> {
    let tok: Vec<&str> = line.split_whitespace().collect();
    if tok.len() != 1 + 2 * keys.len() || tok[0] != section {
        return Err(lines.bad(section, format!("expected `{section}` with {}", keys.join(", "))));
    }
    keys.iter()
        .enumerate()
        .map(|(i, k)| {
            if tok[1 + 2 * i] != *k {
                return Err(lines.bad(section, format!("expected key {k:?}")));
            }
            tok[2 + 2 * i]
                .parse()
                .map_err(|_| lines.bad(section, format!("bad value for {k}")))
        })
        .collect()
}

fn floats<const N: usize>(
    lines: &Lines<'_>,
    section: &'static str,
    tok: &[&str],
) -> Result<[f64; N], GraphFormatError> {
    if tok.len() != N {
        return Err(lines.bad(section, format!("expected {N} values, found {}", tok.len())));
    }
    let mut out = [0.0; N];
    for (o, t) in out.iter_mut().zip(tok) {
        *o = t
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| lines.bad(section, format!("bad number {t:?}")))?;
    }
    Ok(out)
}

pub fn deserialize_graph(text: &str) -> Result<EncodedGraph, GraphFormatError> {
    let mut lines = Lines {
        iter: text.lines().enumerate(),
        line: 0,
    };
    let version = lines.next("header")?;
    if version != FORMAT_VERSION {
        return Err(GraphFormatError::Version(version.to_string()));
    }
    let l = lines.next("header")?;
    let c = keyed(&lines, l, "counts", &["agents", "nodes", "edges"])?;
    let (agents, n_nodes, n_edges) = (c[0], c[1], c[2]);
    let l = lines.next("header")?;
    let norm = keyed(&lines, l, "norm", &["makespan", "agents"])?;
    if norm[1] != agents {
        return Err(lines.bad("header", "agent count disagrees with counts line"));
    }
    let makespan = u32::try_from(norm[0]).map_err(|_| lines.bad("header", "makespan out of range"))?;

    if lines.next("nodes")? != "nodes" {
        return Err(lines.bad("nodes", "expected `nodes`"));
    }
    let mut node_agent = Vec::with_capacity(n_nodes);
    let mut node_features = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let l = lines.next("nodes")?;
        let tok: Vec<&str> = l.split_whitespace().collect();
        let a: usize = tok
            .first()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| lines.bad("nodes", "bad agent id"))?;
        if a >= agents || node_agent.last().is_some_and(|&p| p > a) {
            return Err(lines.bad("nodes", format!("agent {a} out of range or out of order")));
        }
        node_agent.push(a);
        node_features.push(floats::<NODE_FEATURES>(&lines, "nodes", &tok[1..])?);
    }

    if lines.next("edges")? != "edges" {
        return Err(lines.bad("edges", "expected `edges` (node count mismatch?)"));
    }
    let mut edges = Vec::with_capacity(n_edges);
    let mut edge_features = Vec::with_capacity(n_edges);
    for _ in 0..n_edges {
        let l = lines.next("edges")?;
        let tok: Vec<&str> = l.split_whitespace().collect();
        let ends: Vec<usize> = tok
            .iter()
            .take(2)
            .filter_map(|t| t.parse().ok())
            .filter(|&n| n < n_nodes)
            .collect();
        if ends.len() != 2 {
            return Err(lines.bad("edges", "bad endpoints"));
        }
        edges.push((ends[0], ends[1]));
        edge_features.push(floats::<EDGE_FEATURES>(&lines, "edges", &tok[2..])?);
    }

    let labels = match lines.next("labels")? {
        "labels none" => None,
        "labels" => {
            let mut labels = Vec::with_capacity(agents);
            for i in 0..agents {
                let l = lines.next("labels")?;
                let tok: Vec<&str> = l.split_whitespace().collect();
                if tok.first().and_then(|t| t.parse::<usize>().ok()) != Some(i) {
                    return Err(lines.bad("labels", format!("expected agent {i}")));
                }
                labels.push(floats::<1>(&lines, "labels", &tok[1..])?[0]);
            }
            Some(labels)
        }
        _ => return Err(lines.bad("labels", "expected `labels` or `labels none` (edge count mismatch?)")),
    };
    if lines.next("end")? != "end" {
        return Err(lines.bad("end", "expected `end`"));
    }

    Ok(EncodedGraph {
        num_agents: agents,
        makespan,
        node_agent,
        node_features,
        edges,
        edge_features,
        labels,
    })
}
