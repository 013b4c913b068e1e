//! Brute-force recomputation of the overlap statistics, written without the
//! library's tokenizer or n-gram code.

use debias_core::corpus::{Corpus, Sample};
use debias_core::text::Stopwords;

fn tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(String::from)
        .collect()
}

fn retokenize(words: &[String]) -> Vec<String> {
    words.iter().flat_map(|w| tokens(w)).collect()
}

/// Every contiguous n-gram with `n <= n_max`, duplicates removed by linear scan.
fn grams(t: &[String], n_max: usize) -> Vec<Vec<String>> {
    let mut out: Vec<Vec<String>> = Vec::new();
    for start in 0..t.len() {
        for len in 1..=n_max {
            if start + len <= t.len() {
                let g = t[start..start + len].to_vec();
                if !out.contains(&g) {
                    out.push(g);
                }
            }
        }
    }
    out
}

pub fn overlap(answer: &[String], premise: &[String], n_max: usize) -> usize {
    let p = grams(premise, n_max);
    grams(answer, n_max).iter().filter(|g| p.contains(g)).count()
}

pub fn question(s: &Sample) -> Vec<String> {
    retokenize(&s.question)
}

/// Labels then caption, as one token sequence.
pub fn visual(s: &Sample) -> Vec<String> {
    let mut v: Vec<String> = s.visual.objects.iter().flat_map(|r| tokens(&r.label)).collect();
    if let Some(c) = &s.visual.caption {
        v.extend(retokenize(c));
    }
    v
}

fn irrelevant(option: &[String], scene: &[String], sw: &Stopwords, n_max: usize) -> usize {
    grams(&retokenize(option), n_max)
        .iter()
        .filter(|g| {
            let content: Vec<&String> = g.iter().filter(|t| !sw.contains(t)).collect();
            !content.is_empty() && content.iter().all(|t| !scene.contains(t))
        })
        .count()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Um {
    pub c_correct: f64,
    pub c_distractor: f64,
    pub matched_correct: f64,
    pub matched_distractor: f64,
    pub irrelevant_correct: f64,
    pub irrelevant_distractor: f64,
}

pub fn um(corpus: &Corpus, use_visual: bool, sw: &Stopwords, n_max: usize) -> Um {
    let (mut cw, mut dw, mut mc, mut md, mut ic, mut id, mut nd) =
        (0usize, 0usize, 0usize, 0usize, 0usize, 0usize, 0usize);
    for s in corpus {
        let premise = if use_visual { visual(s) } else { question(s) };
        let mut scene = question(s);
        scene.extend(visual(s));
        let scores: Vec<usize> = s
            .options
            .iter()
            .map(|o| overlap(&retokenize(&o.text), &premise, n_max))
            .collect();
        let c = scores[s.correct];
        let mut best = 0;
        for (i, o) in s.options.iter().enumerate() {
            let irr = irrelevant(&o.text, &scene, sw, n_max);
            if i == s.correct {
                ic += irr;
            } else {
                nd += 1;
                md += scores[i];
                id += irr;
                best = best.max(scores[i]);
            }
        }
        mc += c;
        if c > best {
            cw += 1;
        }
        if best > c {
            dw += 1;
        }
    }
    let n = corpus.len() as f64;
    let d = nd as f64;
    Um {
        c_correct: cw as f64 / n,
        c_distractor: dw as f64 / n,
        matched_correct: mc as f64 / n,
        matched_distractor: md as f64 / d,
        irrelevant_correct: ic as f64 / n,
        irrelevant_distractor: id as f64 / d,
    }
}

pub fn from_report(r: &debias_core::text::UmReport) -> Um {
    Um {
        c_correct: r.c_correct,
        c_distractor: r.c_distractor,
        matched_correct: r.mean_matched_correct,
        matched_distractor: r.mean_matched_distractor,
        irrelevant_correct: r.mean_irrelevant_correct,
        irrelevant_distractor: r.mean_irrelevant_distractor,
    }
}

/// Option picked by the most text overlap, lowest index on ties.
pub fn text_choice(s: &Sample, n_max: usize) -> usize {
    let q = question(s);
    let scores: Vec<usize> = s
        .options
        .iter()
        .map(|o| overlap(&retokenize(&o.text), &q, n_max))
        .collect();
    let best = *scores.iter().max().unwrap();
    scores.iter().position(|&x| x == best).unwrap()
}
