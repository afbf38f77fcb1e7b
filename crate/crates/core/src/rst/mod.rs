//! Sentence-level discourse parsing pipeline.

mod model;
mod oracle;
mod train;
mod tree;

pub use model::{edu_tokens, RstInput, RstLossParts, RstModelConfig, RstParse, RstParser, RstPrepared, RstSearchState};
pub use oracle::{oracle_splits, replay_splits, SplitTarget};
pub use train::{evaluate_rst, train_rst, RstTrainReport, Selected};
pub use tree::{DiscNode, DiscTree, Nuclearity, RstLabel, Split};
