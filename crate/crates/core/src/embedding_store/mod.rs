//! Embedding interchange format and the reference embedder.

mod format;
mod reference;

pub use format::{
    read_embeddings, write_embeddings, EmbeddingError, EmbeddingFileHeader, EmbeddingSequence, DTYPE_F32,
    HEADER_LEN, MAGIC, VERSION,
};
pub use reference::{reference_embed, splitmix64, standard_normal, ReferenceEmbedder, STD_FLOOR};
