//! Knowledge graph, word embeddings and the partial reward matrix.

mod embedding;
mod graph;
mod reward_matrix;

pub use embedding::{cosine_similarity, load_embeddings, parse_embeddings, synth_embeddings, EmbeddingTable};
pub use graph::{
    build_graph, normalize_adjacency, parse_aliases, parse_triples, write_adjacency, KnowledgeGraph, RelationTriple,
};
pub use reward_matrix::{
    build_partial_reward_matrix, parse_reward_matrix, shipped_reward_matrix, write_reward_matrix,
    PartialRewardMatrix, SHIPPED_ROW_TOLERANCE,
};

/// Relation triples and alias table bundled with the crate.
pub const BUILTIN_TRIPLES: &str = include_str!("../../data/relations.tsv");
pub const BUILTIN_ALIASES: &str = include_str!("../../data/aliases.tsv");
