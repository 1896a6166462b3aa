//! Corpus preparation and model construction from [`Settings`].

use eegcn_core::corpus::{gen_synthetic, Encoded, Encoder, Sentence};
use eegcn_core::model::{Model, ModelDims};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::{load_corpus, load_embeddings, EmbeddingReport};
use crate::settings::Settings;

/// Raw and encoded splits plus the fitted vocabularies.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub encoder: Encoder,
    pub train: Vec<Sentence>,
    pub dev: Vec<Sentence>,
    pub test: Vec<Sentence>,
    pub train_enc: Vec<Encoded>,
    pub dev_enc: Vec<Encoded>,
    pub test_enc: Vec<Encoded>,
    pub truncated: usize,
}

pub fn dims(encoder: &Encoder) -> ModelDims {
    ModelDims {
        words: encoder.words.len(),
        entities: encoder.entities.len(),
        relations: encoder.edges.len(),
        tags: encoder.tags.len(),
    }
}

/// Reads the corpus files, or generates the synthetic corpus when no train
/// path is set, and fits the vocabularies.
pub fn prepare(settings: &Settings) -> Result<Prepared> {
    let max_len = settings.model.max_len;
    let mut truncated = 0;
    let (train, dev, test) = match (&settings.train_path, &settings.dev_path) {
        (Some(tp), Some(dp)) => {
            let mut load = |p: &std::path::Path| -> Result<Vec<Sentence>> {
                let c = load_corpus(p, max_len)?;
                truncated += c.truncated;
                Ok(c.sentences)
            };
            let train = load(tp)?;
            let dev = load(dp)?;
            let test = match &settings.test_path {
                Some(p) => load(p)?,
                None => Vec::new(),
            };
            (train, dev, test)
        }
        (None, None) => {
            let c = gen_synthetic(&settings.synth, settings.synth_seed)?;
            let mut splits = [c.train, c.dev, c.test];
            for s in splits.iter_mut().flatten() {
                truncated += usize::from(s.truncate(max_len));
            }
            let [a, b, c] = splits;
            (a, b, c)
        }
        _ => return Err(Error::Usage("train_path and dev_path go together".into())),
    };
    let mut encoder = Encoder::fit(&train, &[&dev, &test])?;
    encoder.allow_unk_label = settings.model.allow_unk_label;
    Ok(Prepared {
        train_enc: encoder.encode_all(&train)?,
        dev_enc: encoder.encode_all(&dev)?,
        test_enc: encoder.encode_all(&test)?,
        encoder,
        train,
        dev,
        test,
        truncated,
    })
}

/// A fresh model seeded from `settings.seed`, with pretrained word vectors
/// when an embedding file is configured.
pub fn build_model(settings: &Settings, encoder: &Encoder) -> Result<(Model, Option<EmbeddingReport>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut model = Model::new(settings.model.clone(), dims(encoder), &mut rng)?;
    let report = match &settings.embeddings {
        Some(path) => {
            rng.set_stream(2);
            let (table, report) = load_embeddings(path, &encoder.words, settings.model.word_dim, &mut rng)?;
            let id = model.input_params().word_emb;
            *model.params.value_mut(id) = table;
            log::info!(
                "embeddings: {} found, {} missing, {} duplicated",
                report.found,
                report.missing,
                report.duplicates.len()
            );
            Some(report)
        }
        None => None,
    };
    Ok((model, report))
}
