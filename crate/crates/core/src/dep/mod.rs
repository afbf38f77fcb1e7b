//! Dependency parsing pipeline.

mod model;
mod oracle;
mod train;
mod tree;

pub use model::{DepModelConfig, DepParse, DepParser, DepSearchState, LossParts, Prepared, StepScores};
pub use oracle::{oracle_order, replay, Decision};
pub use train::{evaluate_dep, train_dep, DepTrainReport};
pub use tree::{DepTree, Sentence, Token};
