//! Corpus-level multi-paraphrase neural machine translation, at desk scale.
//!
//! Paraphrase corpora (complete alternative translations of the same text,
//! aligned verse by verse) are treated as separate "languages": every ordered
//! pair of paraphrases becomes a translation path, the source side of each
//! example carries `__opt_src_<id> __opt_tgt_<id>` tags, and one attentional
//! encoder-decoder is trained on all paths at once.
//!
//! - [`corpus`]: load, align and split verse-keyed corpora
//! - [`pathgen`]: translation paths, tags, dataset assembly and budget equalization
//! - [`subword`]: BPE learning/application and the vocabulary
//! - [`seq2seq`]: LSTM encoder-decoder with global attention, SGD training, greedy decoding
//! - [`metrics`]: corpus BLEU, unigram entropy with bootstrap CI, frequency-bucket F1
//! - [`experiment`]: config files, the end-to-end pipeline, synthetic corpora and tables

pub mod corpus;
pub mod experiment;
pub mod metrics;
pub mod pathgen;
pub mod seq2seq;
pub mod subword;
