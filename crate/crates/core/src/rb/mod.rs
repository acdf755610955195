//! Reduced-basis method: greedy offline stage, projected operators and
//! online solves for the four stabilization/supremizer options.

pub mod greedy;
pub mod model;
pub mod online;
pub mod serialize;

pub use greedy::{
    greedy_offline, indicator, snapshot, test_set, training_set, GreedySettings, GreedyTrace, Offline,
    SupremizerOperator,
};
pub use model::{project, RbOption, ReducedBases, ReducedBlocks, ReducedModel, ReducedTensor, Snapshot, View};
pub use online::{modified_infsup_from, ReducedSolution, ReducedSystem};
