//! Graph-based meaning representation parsing for DM, PSD, EDS, UCCA and AMR.

pub mod amr;
pub mod biaffine;
pub mod eds;
pub mod encoder;
pub mod error;
pub mod evaluator;
pub mod graph;
pub mod model;
pub mod nn;
pub mod parallel;
pub mod sdp;
pub mod synthetic;
pub mod trainer;
pub mod ucca;

pub use error::{Error, Result};
pub use graph::{Anchor, Corpus, Framework, MrpEdge, MrpGraph, MrpNode, Sentence, TokenRow};
