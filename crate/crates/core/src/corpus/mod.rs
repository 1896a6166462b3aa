//! Sentences, tag inventories, vocabularies, batching and synthetic data.

mod batch;
mod sentence;
pub mod synth;
mod tags;
mod vocab;

pub use batch::{make_batches, Batch, Edge, Encoded, Encoder, SentenceGraph};
pub use sentence::{Head, Sentence, Trigger};
pub use synth::{gen_synthetic, SynthSpec, SyntheticCorpus};
pub use tags::{Span, TagSet, OUTSIDE};
pub use vocab::{Vocab, PAD, PAD_TOKEN, UNK, UNK_TOKEN};
