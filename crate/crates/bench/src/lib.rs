//! Shared fixtures for the benchmarks.

use chronofaith::corpus::generate_drifted_corpus;
use chronofaith::model::{AttentionClassifier, EncodedInput, Vocabulary};
use chronofaith::{seed, DriftSpec};

/// A randomly initialized classifier and encoded inputs of a few lengths,
/// drawn from the drifted generator.
pub struct Fixture {
    pub model: AttentionClassifier,
    pub inputs: Vec<EncodedInput>,
}

pub fn fixture(max_length: usize, n_inputs: usize) -> Fixture {
    let mut spec = DriftSpec::new(500, n_inputs.max(8), 3, 0.5, 17);
    spec.min_len = max_length / 2;
    spec.max_len = max_length;
    let corpus = generate_drifted_corpus(&spec).expect("valid spec");
    let vocab = Vocabulary::build(corpus.examples.iter().map(|e| e.text.as_str()));
    let model = AttentionClassifier::init(vocab, 3, 32, 32, max_length, &mut seed::rng(5));
    let inputs = corpus.examples.iter().take(n_inputs).map(|e| model.encode(&e.text)).collect();
    Fixture { model, inputs }
}
