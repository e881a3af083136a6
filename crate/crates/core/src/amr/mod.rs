//! AMR: preprocessing, node generation, tree decoding and postprocessing.

pub mod beam;
pub mod cle;
pub mod model;
pub mod preprocess;

pub use beam::{beam_or_greedy, beam_search, greedy, Hypothesis, StepModel};
pub use cle::{chu_liu_edmonds, tree_score};
pub use model::{
    build_amr_graph, copy_sources, edge_inventory, node_vocabulary, AmrConfig, AmrHead, AmrInput, AmrLossWeights,
    AmrLosses, AmrPrediction, AmrResources, AmrToken, NodeEmbedder,
};
pub use preprocess::*;
