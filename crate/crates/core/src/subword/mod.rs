//! Byte-pair encoding with atomic path tags, and the dense token vocabulary.

mod bpe;
mod vocab;

pub use bpe::{
    bpe_decode, bpe_decode_lossy, bpe_encode, learn_bpe, BpeEncoder, BpeError, MergeTable,
    CONTINUATION, END_OF_WORD,
};
pub use vocab::{
    build_vocab, build_vocab_from_streams, VocabError, Vocabulary, BOS, EOS, PAD, SPECIALS, UNK,
};
