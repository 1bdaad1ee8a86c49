//! Cleaning, vocabulary fitting and fixed-length encoding.

use textfold::corpus::{Corpus, LabelVocabulary, Sample, SplitTag};
use textfold::preprocess::{clean, encode, fit_vocabulary, tokenize, CleanConfig, EmbeddingMatrix};

fn main() -> textfold::Result<()> {
    let config = CleanConfig {
        max_length: 8,
        ..CleanConfig::default()
    };
    let raw = "BREAKING:   Masks   work, see https://t.co/xYz123 for the data";
    println!("raw:     {raw}");
    println!("cleaned: {}", clean(raw, &config));
    // Whitespace tokenization: punctuation stays attached to its word.
    println!("tokens:  {:?}", tokenize(raw, &config));

    let labels = LabelVocabulary::default();
    let corpus = Corpus::new(
        vec![
            Sample::labeled("a", "masks work", "real"),
            Sample::labeled("b", "masks cause illness", "fake"),
            Sample::labeled("c", "the data on masks", "real"),
        ],
        labels.clone(),
        SplitTag::Train,
    )?;
    let vocab = fit_vocabulary(&corpus, &config, 1);
    println!("vocabulary ({} entries incl. <pad>, <unk>): {:?}", vocab.len(), vocab.tokens());

    let sample = Sample::labeled("q", raw, "real");
    let encoded = encode(&sample, labels.index_of("real"), &vocab, &config);
    println!("ids:     {:?} (true length {})", encoded.token_ids, encoded.true_length);

    let embeddings = EmbeddingMatrix::random(&vocab, 4, 0);
    println!("row for `masks`: {:?}", embeddings.row(vocab.index_of("masks")));
    Ok(())
}
