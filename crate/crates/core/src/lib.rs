//! Planning and execution toolkit for multi-agent path finding with
//! real-world (wall-clock) deadlines.

pub mod grid;
pub mod path;
pub mod search;
pub mod adg;
pub mod encode;
pub mod penalty;
pub mod sim;
pub mod protocol;
pub mod estimator;
pub mod objective;
pub mod lns;
pub mod cbs;
pub mod parallel;
pub mod calibrate;
