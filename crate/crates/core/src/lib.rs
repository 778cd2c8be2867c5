//! Emotion lexicon generation by machine translation and embedding-based
//! regression.

pub mod embeddings;
pub mod evaluation;
pub mod lexicon;
pub mod models;
pub mod pipeline;
pub mod synthetic;
mod text;
pub mod translation;

pub use text::normalize_word;
