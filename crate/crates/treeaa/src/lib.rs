//! Byzantine approximate agreement on labeled trees.
//!
//! Honest parties start with vertices of a tree known to everybody and end
//! with vertices inside the convex hull of the honest inputs, at most one
//! edge apart, while up to `t < n/3` parties behave arbitrarily.
//!
//! The crate contains the protocols (graded broadcast, real-valued AA, path
//! finding, the two tree protocols), a deterministic synchronous simulator to
//! run them in, round-complexity bound calculators, and an experiment
//! harness with a registry of adversaries.
//!
//! ```
//! use std::sync::Arc;
//! use treeaa::sim::NoAdversary;
//! use treeaa::tree::parse_tree;
//! use treeaa::tree_aa::{run_tree_protocol, Mode};
//!
//! let tree = Arc::new(parse_tree("a b\nb c\nc d\nb e").unwrap());
//! let inputs: Vec<_> = ["a", "d", "e", "d"].iter().map(|l| tree.vertex(l).unwrap()).collect();
//! let run = run_tree_protocol(tree.clone(), Mode::Final, &inputs, 1, &mut NoAdversary, 7).unwrap();
//! for out in run.outputs.values() {
//!     println!("{}", tree.label(out.vertex));
//! }
//! ```

pub mod bounds;
pub mod gradecast;
pub mod harness;
pub mod path_select;
pub mod real_aa;
pub mod sim;
pub mod tree;
pub mod tree_aa;
