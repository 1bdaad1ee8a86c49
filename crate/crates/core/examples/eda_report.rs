//! Class balance and the most frequent non-stopword tokens of a corpus.
//!
//!     cargo run --example eda_report -- path/to/train.tsv
//!
//! Without an argument a small built-in corpus is used.

use textfold::corpus::{default_stopwords, eda_report, load_corpus, Corpus, LabelVocabulary, Sample, SplitTag};

fn builtin() -> textfold::Result<Corpus> {
    let rows = [
        ("1", "Covid cases rise again in three states https://t.co/abc", "real"),
        ("2", "Drinking hot water cures covid, doctors hate it", "fake"),
        ("3", "New testing sites open this week https://t.co/xyz", "real"),
        ("4", "Vaccine trial data released by the health ministry", "real"),
        ("5", "5G towers spread the virus says viral post", "fake"),
    ];
    let samples = rows.iter().map(|(id, text, label)| Sample::labeled(*id, *text, label)).collect();
    Corpus::new(samples, LabelVocabulary::default(), SplitTag::Train)
}

fn main() -> textfold::Result<()> {
    let corpus = match std::env::args().nth(1) {
        Some(path) => load_corpus(path, SplitTag::Train, &LabelVocabulary::default())?,
        None => builtin()?,
    };
    let report = eda_report(&corpus, 10, &default_stopwords());
    println!("{} samples, {} unlabeled", report.total_samples, report.unlabeled);
    for c in &report.class_counts {
        println!("  {:<6} {}", c.class, c.count);
    }
    println!("top tokens:");
    for t in &report.top_tokens {
        println!("  {:<12} {}", t.token, t.count);
    }
    Ok(())
}
