//! Drug–disease association scoring from text-derived embeddings.
//!
//! Pipeline: load word-embedding vectors and curated similarity data
//! ([`ingest`], [`simkit`]), pull each vector toward its curated
//! neighborhoods ([`refine`]), fit a bilinear inductive matrix completion
//! model on known associations ([`imc`]), and evaluate it ([`evalkit`]).

pub mod error;
pub mod evalkit;
pub mod imc;
pub mod ingest;
pub mod model;
pub mod refine;
pub mod rng;
pub mod simkit;

pub use error::{Error, Result};
pub use model::{
    AssociationMatrix, EmbeddingSet, EntityCatalog, FactorModel, IdList, ScoreMatrix, Side,
    SimilarityMatrix,
};
