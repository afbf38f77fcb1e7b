//! Corpus formats, vocabularies, synthetic data and embedding ingestion.

pub mod bracket;
pub mod conllu;
pub mod embeddings;
pub mod synthetic;
pub mod vocab;

pub use bracket::{
    format_rst_bracket, format_rst_tree, parse_edu_lines, parse_rst_bracket, read_rst_bracket, write_rst_bracket,
};
pub use conllu::{format_conllu, parse_conllu, parse_conllu_with, read_conllu, write_conllu, ConlluOptions, ConlluSentence};
pub use embeddings::{load_embeddings, load_embeddings_str, Coverage};
pub use synthetic::{gen_synthetic_dep, gen_synthetic_rst};
pub use vocab::{LabelSet, Vocab, PAD, ROOT, UNK};
