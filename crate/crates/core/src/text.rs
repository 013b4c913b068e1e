//! Tokenization, n-gram overlap and the unbalanced-matching statistics.
//!
//! All matching uses *distinct* n-grams (set semantics) with `1 <= n <= n_max`.
//! Stored tokens are re-normalized through [`tokenize`] before matching, so
//! corpora tokenized with different casing or with punctuation tokens still
//! compare consistently.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use crate::corpus::{Corpus, Sample};

/// Default maximum n-gram order.
pub const DEFAULT_NGRAM_MAX: usize = 3;

/// Lowercases, turns every non-alphanumeric character into a separator and
/// splits on whitespace. Bracketed entity tags such as `[person2]` therefore
/// survive as the single token `person2`.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            cur.extend(ch.to_lowercase());
        } else if !cur.is_empty() {
            out.push(core::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Re-tokenizes already tokenized text (e.g. tokens read from a corpus file).
pub fn normalize(tokens: &[String]) -> Vec<String> {
    tokens.iter().flat_map(|t| tokenize(t)).collect()
}

/// The set of distinct contiguous n-grams, `1 <= n <= n_max`.
pub fn extract_ngrams(tokens: &[String], n_max: usize) -> BTreeSet<&[String]> {
    let mut set = BTreeSet::new();
    for n in 1..=n_max.min(tokens.len()) {
        for w in tokens.windows(n) {
            set.insert(w);
        }
    }
    set
}

/// `O(a, p)`: the number of distinct n-grams shared by answer and premise.
pub fn overlap_count(answer: &[String], premise: &[String], n_max: usize) -> usize {
    overlap_by_order(answer, premise, n_max).iter().sum()
}

/// Overlap count split by n-gram order; entry `n - 1` counts n-grams of order `n`.
pub fn overlap_by_order(answer: &[String], premise: &[String], n_max: usize) -> Vec<usize> {
    let premise_set = extract_ngrams(premise, n_max);
    let mut by_n = alloc::vec![0usize; n_max];
    for g in extract_ngrams(answer, n_max) {
        if premise_set.contains(g) {
            by_n[g.len() - 1] += 1;
        }
    }
    by_n
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PremiseKind {
    /// The question.
    Text,
    /// Object labels followed by caption tokens.
    Visual,
}

impl PremiseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PremiseKind::Text => "text",
            PremiseKind::Visual => "visual",
        }
    }
}

/// Normalized premise tokens for a sample.
pub fn premise_tokens(sample: &Sample, kind: PremiseKind) -> Vec<String> {
    match kind {
        PremiseKind::Text => normalize(&sample.question),
        PremiseKind::Visual => {
            let mut out: Vec<String> = sample.visual.objects.iter().flat_map(|r| tokenize(&r.label)).collect();
            if let Some(cap) = &sample.visual.caption {
                out.extend(normalize(cap));
            }
            out
        }
    }
}

/// A fixed stopword list used by the irrelevant-n-gram proxy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stopwords(BTreeSet<String>);

const ENGLISH_STOPWORDS: &str = include_str!("../data/stopwords.txt");

impl Stopwords {
    /// The shipped 127-word English list.
    pub fn english() -> Self {
        Self::parse(ENGLISH_STOPWORDS)
    }

    /// One word per line; blank lines and `#` comments ignored.
    pub fn parse(list: &str) -> Self {
        Self(
            list.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .flat_map(tokenize)
                .collect(),
        )
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for Stopwords {
    fn default() -> Self {
        Self::english()
    }
}

/// Unigram context an option is judged against: question, labels and caption.
pub fn scene_vocabulary(sample: &Sample) -> BTreeSet<String> {
    let mut ctx: BTreeSet<String> = premise_tokens(sample, PremiseKind::Text).into_iter().collect();
    ctx.extend(premise_tokens(sample, PremiseKind::Visual));
    ctx
}

/// Number of distinct n-grams of the option (`n <= n_max`) that carry at
/// least one non-stopword token and none of whose non-stopword tokens occur
/// in the scene vocabulary.
pub fn irrelevant_ngram_count(option: &[String], sample: &Sample, stopwords: &Stopwords, n_max: usize) -> usize {
    irrelevant_ngram_count_in(option, &scene_vocabulary(sample), stopwords, n_max)
}

pub(crate) fn irrelevant_ngram_count_in(
    option: &[String],
    context: &BTreeSet<String>,
    stopwords: &Stopwords,
    n_max: usize,
) -> usize {
    let tokens = normalize(option);
    extract_ngrams(&tokens, n_max)
        .into_iter()
        .filter(|g| is_irrelevant(g, context, stopwords))
        .count()
}

fn is_irrelevant(gram: &[String], context: &BTreeSet<String>, stopwords: &Stopwords) -> bool {
    let mut content = gram.iter().filter(|t| !stopwords.contains(t)).peekable();
    content.peek().is_some() && content.all(|t| !context.contains(t))
}

/// Matched or irrelevant n-gram counts split by order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NGramCounts {
    pub by_order: Vec<usize>,
}

impl NGramCounts {
    pub fn total(&self) -> usize {
        self.by_order.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OptionProfile {
    pub matched_question: NGramCounts,
    pub matched_visual: NGramCounts,
    pub irrelevant: NGramCounts,
}

/// Per-option n-gram profile of a sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NGramProfile {
    pub options: Vec<OptionProfile>,
}

pub fn ngram_profile(sample: &Sample, stopwords: &Stopwords, n_max: usize) -> NGramProfile {
    let q = premise_tokens(sample, PremiseKind::Text);
    let v = premise_tokens(sample, PremiseKind::Visual);
    let ctx = scene_vocabulary(sample);
    let options = sample
        .options
        .iter()
        .map(|o| {
            let a = normalize(&o.text);
            let mut irrelevant = alloc::vec![0usize; n_max];
            for g in extract_ngrams(&a, n_max) {
                if is_irrelevant(g, &ctx, stopwords) {
                    irrelevant[g.len() - 1] += 1;
                }
            }
            OptionProfile {
                matched_question: NGramCounts {
                    by_order: overlap_by_order(&a, &q, n_max),
                },
                matched_visual: NGramCounts {
                    by_order: overlap_by_order(&a, &v, n_max),
                },
                irrelevant: NGramCounts { by_order: irrelevant },
            }
        })
        .collect();
    NGramProfile { options }
}

/// Unbalanced-matching report for one premise kind.
#[derive(Debug, Clone, PartialEq)]
pub struct UmReport {
    pub premise: PremiseKind,
    /// Fraction of samples whose correct answer strictly out-matches every distractor.
    pub c_correct: f64,
    /// Fraction of samples where some distractor strictly out-matches the correct answer.
    pub c_distractor: f64,
    pub samples: usize,
    pub mean_matched_correct: f64,
    pub mean_matched_distractor: f64,
    pub mean_irrelevant_correct: f64,
    pub mean_irrelevant_distractor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("corpus is empty")]
pub struct EmptyCorpus;

/// Integer-only running totals for [`um_stats`]; merging partial
/// accumulators in any order yields the same report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct UmAccumulator {
    samples: u64,
    correct_wins: u64,
    distractor_wins: u64,
    matched_correct: u64,
    matched_distractor: u64,
    distractors: u64,
    irrelevant_correct: u64,
    irrelevant_distractor: u64,
}

impl UmAccumulator {
    pub fn add(&mut self, sample: &Sample, kind: PremiseKind, stopwords: &Stopwords, n_max: usize) {
        let p = premise_tokens(sample, kind);
        let ctx = scene_vocabulary(sample);
        let scores: Vec<usize> = sample
            .options
            .iter()
            .map(|o| overlap_count(&normalize(&o.text), &p, n_max))
            .collect();
        let irr: Vec<usize> = sample
            .options
            .iter()
            .map(|o| irrelevant_ngram_count_in(&o.text, &ctx, stopwords, n_max))
            .collect();
        let c = scores[sample.correct];
        let best_d = sample.distractor_indices().map(|i| scores[i]).max().unwrap_or(0);
        self.samples += 1;
        if c > best_d {
            self.correct_wins += 1;
        } else if best_d > c {
            self.distractor_wins += 1;
        }
        self.matched_correct += c as u64;
        self.irrelevant_correct += irr[sample.correct] as u64;
        for i in sample.distractor_indices() {
            self.distractors += 1;
            self.matched_distractor += scores[i] as u64;
            self.irrelevant_distractor += irr[i] as u64;
        }
    }

    pub fn merge(mut self, other: Self) -> Self {
        self.samples += other.samples;
        self.correct_wins += other.correct_wins;
        self.distractor_wins += other.distractor_wins;
        self.matched_correct += other.matched_correct;
        self.matched_distractor += other.matched_distractor;
        self.distractors += other.distractors;
        self.irrelevant_correct += other.irrelevant_correct;
        self.irrelevant_distractor += other.irrelevant_distractor;
        self
    }

    pub fn finish(&self, premise: PremiseKind) -> Result<UmReport, EmptyCorpus> {
        if self.samples == 0 {
            return Err(EmptyCorpus);
        }
        let n = self.samples as f64;
        let d = (self.distractors as f64).max(1.0);
        Ok(UmReport {
            premise,
            c_correct: self.correct_wins as f64 / n,
            c_distractor: self.distractor_wins as f64 / n,
            samples: self.samples as usize,
            mean_matched_correct: self.matched_correct as f64 / n,
            mean_matched_distractor: self.matched_distractor as f64 / d,
            mean_irrelevant_correct: self.irrelevant_correct as f64 / n,
            mean_irrelevant_distractor: self.irrelevant_distractor as f64 / d,
        })
    }
}

/// `C_c` / `C_d` plus mean matched and irrelevant n-gram counts. Ties count in
/// neither fraction. Distractor means are taken over all distractors in the
/// corpus.
pub fn um_stats(
    corpus: &Corpus,
    kind: PremiseKind,
    stopwords: &Stopwords,
    n_max: usize,
) -> Result<UmReport, EmptyCorpus> {
    um_stats_samples(corpus.samples(), kind, stopwords, n_max)
}

pub fn um_stats_samples(
    samples: &[Sample],
    kind: PremiseKind,
    stopwords: &Stopwords,
    n_max: usize,
) -> Result<UmReport, EmptyCorpus> {
    let mut acc = UmAccumulator::default();
    for s in samples {
        acc.add(s, kind, stopwords, n_max);
    }
    acc.finish(kind)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeuristicPolicy {
    Text,
    Visual,
    /// Sum of text and visual overlap.
    Combined,
}

/// Per-option overlap scores under a policy.
pub fn heuristic_scores(sample: &Sample, policy: HeuristicPolicy, n_max: usize) -> Vec<usize> {
    let q = premise_tokens(sample, PremiseKind::Text);
    let v = premise_tokens(sample, PremiseKind::Visual);
    sample
        .options
        .iter()
        .map(|o| {
            let a = normalize(&o.text);
            match policy {
                HeuristicPolicy::Text => overlap_count(&a, &q, n_max),
                HeuristicPolicy::Visual => overlap_count(&a, &v, n_max),
                HeuristicPolicy::Combined => overlap_count(&a, &q, n_max) + overlap_count(&a, &v, n_max),
            }
        })
        .collect()
}

/// Picks the option with the most matched n-grams; ties go to the lowest index.
pub fn heuristic_solve(sample: &Sample, policy: HeuristicPolicy, n_max: usize) -> usize {
    let scores = heuristic_scores(sample, policy, n_max);
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Fraction of samples answered correctly by [`heuristic_solve`].
pub fn heuristic_accuracy(corpus: &Corpus, policy: HeuristicPolicy, n_max: usize) -> Result<f64, EmptyCorpus> {
    if corpus.is_empty() {
        return Err(EmptyCorpus);
    }
    let hits = corpus
        .iter()
        .filter(|s| heuristic_solve(s, policy, n_max) == s.correct)
        .count();
    Ok(hits as f64 / corpus.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tests::{sample, toks};
    use crate::corpus::{Region, Shape};
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn tokenize_keeps_entity_tags() {
        assert_eq!(
            tokenize("Why is [person2] looking down?"),
            toks("why is person2 looking down")
        );
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("A  B"), toks("a b"));
    }

    #[test]
    fn ngram_sets() {
        let abc = toks("a b c");
        assert_eq!(extract_ngrams(&abc, 3).len(), 6);
        let aa = toks("a a");
        assert_eq!(extract_ngrams(&aa, 3).len(), 2);
        assert!(extract_ngrams(&[], 3).is_empty());
    }

    #[test]
    fn overlap_worked_example() {
        let a = toks("she is looking down at the book");
        let q = toks("why is person2 looking down");
        // Shared: is, looking, down, looking·down. "is looking" is not a
        // question bigram because person2 sits between the two words.
        assert_eq!(overlap_count(&a, &q, 3), 4);
        assert_eq!(overlap_by_order(&a, &q, 3), vec![3, 1, 0]);
    }

    #[test]
    fn self_overlap_and_disjoint() {
        let a = toks("p q r s t");
        assert_eq!(overlap_count(&a, &a, 3), 5 + 4 + 3);
        assert_eq!(overlap_count(&a, &toks("x y z"), 3), 0);
    }

    #[test]
    fn identical_options_give_zero_fractions() {
        let samples: Vec<_> = (0..5)
            .map(|i| sample(&alloc::format!("s{i}"), "why is it red", &["it is red"; 4], i % 4))
            .collect();
        let r = um_stats_samples(&samples, PremiseKind::Text, &Stopwords::english(), 3).unwrap();
        assert_eq!(r.c_correct, 0.0);
        assert_eq!(r.c_distractor, 0.0);
        assert_eq!(r.samples, 5);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert_eq!(
            um_stats_samples(&[], PremiseKind::Text, &Stopwords::english(), 3),
            Err(EmptyCorpus)
        );
    }

    #[test]
    fn stopword_list_has_127_entries() {
        assert_eq!(Stopwords::english().len(), 127);
    }

    #[test]
    fn irrelevant_proxy() {
        let mut s = sample("x", "why is person2 looking down", &["a", "b"], 0);
        s.visual.objects.push(Region {
            label: "book".into(),
            shape: Shape::Box {
                x0: 0.0,
                y0: 0.0,
                x1: 50.0,
                y1: 50.0,
            },
            relevance: None,
        });
        let sw = Stopwords::english();
        // "computer", "a computer", "the computer" ... all lack scene content.
        let opt = toks("she is using the computer");
        // content tokens: she(stop), is(stop), using, the(stop), computer
        // irrelevant n-grams: using, computer, is·using, using·the, the·computer,
        // she·is·using, is·using·the, using·the·computer
        assert_eq!(irrelevant_ngram_count(&opt, &s, &sw, 3), 8);
        let sub = toks("person2 looking down");
        assert_eq!(irrelevant_ngram_count(&sub, &s, &sw, 3), 0);
        assert_eq!(irrelevant_ngram_count(&[], &s, &sw, 3), 0);
        let ok = toks("he reads the book");
        // reads, he·reads, reads·the, he·reads·the
        assert_eq!(irrelevant_ngram_count(&ok, &s, &sw, 3), 4);
    }

    #[test]
    fn heuristic_picks_unique_max_and_breaks_ties_low() {
        let s = sample(
            "x",
            "why is the man holding a red umbrella",
            &[
                "it is sunny",
                "he likes hats",
                "the man holding a red umbrella is cold",
                "no",
            ],
            2,
        );
        assert_eq!(heuristic_scores(&s, HeuristicPolicy::Text, 3)[2], 7 + 5 + 4);
        assert_eq!(heuristic_solve(&s, HeuristicPolicy::Text, 3), 2);
        let t = sample("y", "q r", &["same words", "same words", "same words"], 1);
        assert_eq!(heuristic_solve(&t, HeuristicPolicy::Combined, 3), 0);
    }

    #[test]
    fn profile_breakdown_sums() {
        let s = sample(
            "x",
            "why is person2 looking down",
            &["she is looking down at the book", "no"],
            0,
        );
        let p = ngram_profile(&s, &Stopwords::english(), 3);
        assert_eq!(p.options[0].matched_question.total(), 4);
        assert_eq!(p.options[0].matched_question.by_order, vec![3, 1, 0]);
    }

    fn words() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e"]), 0..8)
            .prop_map(|v| v.into_iter().map(String::from).collect())
    }

    proptest! {
        #[test]
        fn overlap_bounded_by_answer_ngrams(a in words(), p in words()) {
            prop_assert!(overlap_count(&a, &p, 3) <= extract_ngrams(&a, 3).len());
        }

        #[test]
        fn appending_premise_never_decreases_overlap(a in words(), p in words(), extra in words()) {
            let mut longer = p.clone();
            longer.extend(extra);
            prop_assert!(overlap_count(&a, &longer, 3) >= overlap_count(&a, &p, 3));
        }

        #[test]
        fn heuristic_is_permutation_equivariant(
            q in words(),
            opts in prop::collection::vec(words().prop_filter("non-empty", |w| !w.is_empty()), 2..5),
            seed in any::<u64>(),
        ) {
            let k = opts.len();
            let mut s = sample("x", "q", &["a", "b"], 0);
            s.question = q;
            s.options = opts.iter().map(|o| crate::AnswerOption { text: o.clone() }).collect();
            // A deterministic permutation from the seed.
            let mut perm: Vec<usize> = (0..k).collect();
            let mut x = seed;
            for i in (1..k).rev() {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                perm.swap(i, (x >> 33) as usize % (i + 1));
            }
            let mut t = s.clone();
            t.options = perm.iter().map(|&i| s.options[i].clone()).collect();
            let scores = heuristic_scores(&s, HeuristicPolicy::Text, 3);
            let picked = heuristic_solve(&t, HeuristicPolicy::Text, 3);
            let max = *scores.iter().max().unwrap();
            // The permuted answer maps to a maximal original option, and it is the
            // first maximal one in the new order.
            prop_assert_eq!(scores[perm[picked]], max);
            prop_assert!(perm[..picked].iter().all(|&i| scores[i] < max));
        }
    }
}
