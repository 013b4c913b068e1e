#![allow(dead_code)]

use debias_core::corpus::{AnswerOption, Corpus, Provenance, Region, Sample, Shape, VisualPremise};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

pub fn sample(id: &str, question: &str, options: &[&str], correct: usize) -> Sample {
    Sample {
        id: id.to_string(),
        question: words(question),
        options: options.iter().map(|o| AnswerOption::new(words(o))).collect(),
        correct,
        visual: VisualPremise {
            image: None,
            width: 64,
            height: 64,
            objects: Vec::new(),
            caption: None,
        },
        provenance: Provenance::Original,
    }
}

pub fn with_box(mut s: Sample, label: &str, b: [f64; 4]) -> Sample {
    s.visual.objects.push(Region {
        label: label.to_string(),
        shape: Shape::Box {
            x0: b[0],
            y0: b[1],
            x1: b[2],
            y1: b[3],
        },
        relevance: None,
    });
    s
}

const VOCAB: [&str; 24] = [
    "red", "cup", "table", "man", "woman", "dog", "runs", "sits", "holds", "near", "under", "blue", "car", "street",
    "window", "light", "green", "book", "reads", "open", "door", "cat", "sleeps", "chair",
];

pub fn random_text(rng: &mut ChaCha8Rng, min: usize, max: usize) -> String {
    let n = rng.random_range(min..=max);
    (0..n)
        .map(|_| VOCAB[rng.random_range(0..VOCAB.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

/// Four-option samples of random words drawn from a small vocabulary.
pub fn random_corpus(rng: &mut ChaCha8Rng, n: usize) -> Corpus {
    let samples = (0..n)
        .map(|i| {
            let q = random_text(rng, 3, 8);
            let opts: Vec<String> = (0..4).map(|_| random_text(rng, 2, 7)).collect();
            let refs: Vec<&str> = opts.iter().map(String::as_str).collect();
            let mut s = sample(&format!("r{i}"), &q, &refs, rng.random_range(0..4));
            let label = VOCAB[rng.random_range(0..VOCAB.len())];
            s = with_box(s, label, [4.0, 4.0, 40.0, 40.0]);
            s.visual.caption = Some(words(&random_text(rng, 2, 5)));
            s
        })
        .collect();
    Corpus::new(samples).unwrap()
}
