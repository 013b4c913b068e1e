//! Text-side synthesis: the relevance-minus-similarity weight matrix,
//! maximum-weight bipartite matching for distractor assignment, distractor
//! validation and the refinement prompt workflow.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Sample, Variant};
use crate::embed::{cosine_similarity, Embedder};
use crate::text::{
    extract_ngrams, irrelevant_ngram_count, normalize, overlap_count, premise_tokens, tokenize, PremiseKind, Stopwords,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchParams {
    /// Weight of the dissimilarity term.
    pub lambda: f64,
    /// Weight of the relevance term in multimodal mode.
    pub alpha: f64,
    /// Scores are clamped into `[clamp_eps, 1 - clamp_eps]` before logs.
    pub clamp_eps: f64,
    pub multimodal: bool,
    /// Distractors per sample, one matching round each.
    pub rounds: usize,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            alpha: 0.4,
            clamp_eps: 1e-6,
            multimodal: false,
            rounds: 3,
        }
    }
}

impl MatchParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(ParamError("lambda must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(ParamError("alpha must be positive"));
        }
        if !(self.clamp_eps > 0.0 && self.clamp_eps < 0.5) {
            return Err(ParamError("clamp_eps must lie in (0, 0.5)"));
        }
        if self.rounds == 0 {
            return Err(ParamError("rounds must be at least 1"));
        }
        Ok(())
    }

    fn clamp(&self, s: f64) -> f64 {
        s.clamp(self.clamp_eps, 1.0 - self.clamp_eps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("invalid parameter: {0}")]
pub struct ParamError(pub &'static str);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ScoreKind {
    /// Relevance of a candidate answer to a text premise.
    TextRelevance,
    /// Similarity between two answers.
    Similarity,
    /// Relevance of a candidate answer to an object region label.
    VisualRelevance,
}

impl ScoreKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreKind::TextRelevance => "trel",
            ScoreKind::Similarity => "sim",
            ScoreKind::VisualRelevance => "vrel",
        }
    }
}

/// Scores text pairs into `(0, 1)`. Batched so remote providers can serve a
/// whole weight-matrix row per request.
pub trait ScoreProvider {
    type Error;

    fn score(&self, kind: ScoreKind, pairs: &[(&str, &str)]) -> Result<Vec<f64>, Self::Error>;
}

impl<S: ScoreProvider + ?Sized> ScoreProvider for &S {
    type Error = S::Error;

    fn score(&self, kind: ScoreKind, pairs: &[(&str, &str)]) -> Result<Vec<f64>, Self::Error> {
        (**self).score(kind, pairs)
    }
}

/// Baseline scorer: every score is `(1 + cos) / 2` of the two texts' embeddings.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingScorer<E> {
    embedder: E,
}

impl<E: Embedder> EmbeddingScorer<E> {
    pub fn new(embedder: E) -> Self {
        Self { embedder }
    }
}

impl<E: Embedder> ScoreProvider for EmbeddingScorer<E> {
    type Error = E::Error;

    fn score(&self, _kind: ScoreKind, pairs: &[(&str, &str)]) -> Result<Vec<f64>, E::Error> {
        let mut texts: Vec<&str> = Vec::with_capacity(pairs.len() * 2);
        for (a, b) in pairs {
            texts.push(a);
            texts.push(b);
        }
        let v = self.embedder.embed(&texts)?;
        Ok(v.chunks(2)
            .map(|p| (1.0 + cosine_similarity(&p[0], &p[1]).unwrap_or(0.0)) / 2.0)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MatchError<E> {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("pair ({0}, {0}) is forbidden: a sample cannot donate to itself")]
    SelfPair(usize),
    #[error("need at least 2 samples, found {0}")]
    TooFewSamples(usize),
    #[error("score provider failed on pair ({row}, {col}): {source}")]
    Provider { row: usize, col: usize, source: E },
    #[error("score provider returned {got} scores for {expected} pairs")]
    BatchSize { expected: usize, got: usize },
    #[error("matching round {round}: {source}")]
    Infeasible { round: usize, source: Infeasible },
}

/// The weight formula given the three scores. `max_visual` is the best
/// region score and only used in multimodal mode (`None` when the sample has
/// no regions).
pub fn weight_from_scores(text_relevance: f64, similarity: f64, max_visual: Option<f64>, params: &MatchParams) -> f64 {
    let dissim = params.lambda * libm::log(1.0 - params.clamp(similarity));
    let trel = params.clamp(text_relevance);
    let relevance = if params.multimodal {
        let vrel = max_visual.map_or(0.0, |v| params.clamp(v));
        params.alpha * libm::log(trel + vrel)
    } else {
        libm::log(trel)
    };
    relevance + dissim
}

fn question_text(s: &Sample) -> String {
    s.question.join(" ")
}

/// `W[i][j]` for a single donor pair.
pub fn weight_entry<P: ScoreProvider>(
    samples: &[Sample],
    i: usize,
    j: usize,
    params: &MatchParams,
    scorer: &P,
) -> Result<f64, MatchError<P::Error>> {
    if i == j {
        return Err(MatchError::SelfPair(i));
    }
    let row = weight_row_for(samples, i, &[j], params, scorer)?;
    Ok(row[0])
}

/// Row `i` of the weight matrix; the diagonal entry is `-inf`.
pub fn weight_row<P: ScoreProvider>(
    samples: &[Sample],
    i: usize,
    params: &MatchParams,
    scorer: &P,
) -> Result<Vec<f64>, MatchError<P::Error>> {
    let cols: Vec<usize> = (0..samples.len()).filter(|&j| j != i).collect();
    let vals = weight_row_for(samples, i, &cols, params, scorer)?;
    let mut row = vec![f64::NEG_INFINITY; samples.len()];
    for (&j, v) in cols.iter().zip(vals) {
        row[j] = v;
    }
    Ok(row)
}

fn checked<E>(res: Result<Vec<f64>, E>, expected: usize, row: usize, col: usize) -> Result<Vec<f64>, MatchError<E>> {
    let v = res.map_err(|source| MatchError::Provider { row, col, source })?;
    if v.len() != expected {
        return Err(MatchError::BatchSize { expected, got: v.len() });
    }
    Ok(v)
}

fn weight_row_for<P: ScoreProvider>(
    samples: &[Sample],
    i: usize,
    cols: &[usize],
    params: &MatchParams,
    scorer: &P,
) -> Result<Vec<f64>, MatchError<P::Error>> {
    params.validate()?;
    let si = &samples[i];
    let premise = question_text(si);
    let answer = si.correct_option().joined();
    let donors: Vec<String> = cols.iter().map(|&j| samples[j].correct_option().joined()).collect();
    let first_col = cols.first().copied().unwrap_or(i);

    let rel_pairs: Vec<(&str, &str)> = donors.iter().map(|d| (premise.as_str(), d.as_str())).collect();
    let trel = checked(
        scorer.score(ScoreKind::TextRelevance, &rel_pairs),
        cols.len(),
        i,
        first_col,
    )?;
    let sim_pairs: Vec<(&str, &str)> = donors.iter().map(|d| (answer.as_str(), d.as_str())).collect();
    let sim = checked(
        scorer.score(ScoreKind::Similarity, &sim_pairs),
        cols.len(),
        i,
        first_col,
    )?;

    let mut max_visual: Vec<Option<f64>> = vec![None; cols.len()];
    if params.multimodal && !si.visual.objects.is_empty() {
        let labels: Vec<&str> = si.visual.objects.iter().map(|r| r.label.as_str()).collect();
        let mut pairs = Vec::with_capacity(labels.len() * donors.len());
        for d in &donors {
            for l in &labels {
                pairs.push((*l, d.as_str()));
            }
        }
        let v = checked(
            scorer.score(ScoreKind::VisualRelevance, &pairs),
            pairs.len(),
            i,
            first_col,
        )?;
        for (slot, chunk) in max_visual.iter_mut().zip(v.chunks(labels.len())) {
            *slot = chunk.iter().copied().reduce(f64::max);
        }
    }

    Ok((0..cols.len())
        .map(|x| weight_from_scores(trel[x], sim[x], max_visual[x], params))
        .collect())
}

/// The full `N x N` weight matrix; rows are premises, columns donor answers.
pub fn build_weight_matrix<P: ScoreProvider>(
    samples: &[Sample],
    params: &MatchParams,
    scorer: &P,
) -> Result<Vec<Vec<f64>>, MatchError<P::Error>> {
    params.validate()?;
    if samples.len() < 2 {
        return Err(MatchError::TooFewSamples(samples.len()));
    }
    (0..samples.len())
        .map(|i| weight_row(samples, i, params, scorer))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum Infeasible {
    #[error("weight matrix is not square")]
    NotSquare,
    #[error("no perfect matching avoids the forbidden pairs")]
    NoPerfectMatching,
}

/// A perfect matching: `assignment[row] = column`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    pub assignment: Vec<usize>,
    pub total: f64,
}

/// Maximum-weight perfect matching (Kuhn–Munkres with potentials, `O(n^3)`).
///
/// Pairs in `forbidden` and non-finite entries are never used.
pub fn max_weight_matching(weights: &[Vec<f64>], forbidden: &BTreeSet<(usize, usize)>) -> Result<Matching, Infeasible> {
    let n = weights.len();
    if weights.iter().any(|r| r.len() != n) {
        return Err(Infeasible::NotSquare);
    }
    if n == 0 {
        return Ok(Matching {
            assignment: Vec::new(),
            total: 0.0,
        });
    }
    let inf = f64::INFINITY;
    // Minimize negated weights; 1-based with a virtual column 0.
    let cost = |i: usize, j: usize| -> f64 {
        let w = weights[i][j];
        if !w.is_finite() || forbidden.contains(&(i, j)) {
            inf
        } else {
            -w
        }
    };
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let c = cost(i0 - 1, j - 1);
                if c < inf {
                    let cur = c - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            if delta == inf {
                return Err(Infeasible::NoPerfectMatching);
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
    }
    let total = assignment.iter().enumerate().map(|(i, &j)| weights[i][j]).sum();
    Ok(Matching { assignment, total })
}

/// Result of sequential matching rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct DistractorAssignment {
    pub weights: Vec<Vec<f64>>,
    /// `rounds[r][i]` is the donor sample for sample `i` in round `r`.
    pub rounds: Vec<Vec<usize>>,
}

impl DistractorAssignment {
    /// Donor samples for sample `i`, in round order.
    pub fn donors(&self, i: usize) -> Vec<usize> {
        self.rounds.iter().map(|r| r[i]).collect()
    }

    /// Donor correct answers for sample `i`.
    pub fn distractor_texts<'a>(&self, samples: &'a [Sample], i: usize) -> Vec<&'a [String]> {
        self.donors(i)
            .into_iter()
            .map(|j| samples[j].correct_option().text.as_slice())
            .collect()
    }

    /// Donors for sample `i` ordered by weight, best first, excluding itself.
    pub fn ranked_donors(&self, i: usize) -> Vec<usize> {
        let mut cols: Vec<usize> = (0..self.weights.len())
            .filter(|&j| j != i && self.weights[i][j].is_finite())
            .collect();
        cols.sort_by(|&a, &b| self.weights[i][b].total_cmp(&self.weights[i][a]).then(a.cmp(&b)));
        cols
    }
}

/// Runs `params.rounds` matchings over a shared weight matrix, forbidding
/// every pair chosen in earlier rounds so each round adds a new donor.
pub fn assign_distractors<P: ScoreProvider>(
    samples: &[Sample],
    params: &MatchParams,
    scorer: &P,
) -> Result<DistractorAssignment, MatchError<P::Error>> {
    assign_distractors_with(samples, params, scorer, |_, _| false)
}

/// As [`assign_distractors`], additionally forbidding every pair for which
/// `exclude(premise_sample, donor_sample)` holds.
pub fn assign_distractors_with<P, F>(
    samples: &[Sample],
    params: &MatchParams,
    scorer: &P,
    exclude: F,
) -> Result<DistractorAssignment, MatchError<P::Error>>
where
    P: ScoreProvider,
    F: Fn(&Sample, &Sample) -> bool,
{
    let weights = build_weight_matrix(samples, params, scorer)?;
    assign_from_weights(samples, weights, params.rounds, exclude)
}

/// Matching rounds over a precomputed weight matrix.
pub fn assign_from_weights<E, F>(
    samples: &[Sample],
    weights: Vec<Vec<f64>>,
    rounds: usize,
    exclude: F,
) -> Result<DistractorAssignment, MatchError<E>>
where
    F: Fn(&Sample, &Sample) -> bool,
{
    let n = samples.len();
    let mut forbidden = BTreeSet::new();
    for i in 0..n {
        forbidden.insert((i, i));
        for j in 0..n {
            if i != j && exclude(&samples[i], &samples[j]) {
                forbidden.insert((i, j));
            }
        }
    }
    let mut out = Vec::with_capacity(rounds);
    for round in 0..rounds {
        let m = max_weight_matching(&weights, &forbidden).map_err(|source| MatchError::Infeasible {
            round: round + 1,
            source,
        })?;
        for (i, &j) in m.assignment.iter().enumerate() {
            forbidden.insert((i, j));
        }
        out.push(m.assignment);
    }
    Ok(DistractorAssignment { weights, rounds: out })
}

/// Acceptance thresholds for a candidate distractor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    /// Max difference in matched n-grams against the question.
    pub overlap: usize,
    /// Max irrelevant n-grams.
    pub irrelevant: usize,
    /// Max similarity to the correct answer.
    pub sim_hi: f64,
    /// Max similarity to any other distractor of the sample.
    pub diversity: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            overlap: 1,
            irrelevant: 1,
            sim_hi: 0.9,
            diversity: 0.85,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Verdict {
    pub overlap_balanced: bool,
    pub relevant: bool,
    pub unambiguous: bool,
    pub diverse: bool,
}

impl Verdict {
    pub fn passes(&self) -> bool {
        self.overlap_balanced && self.relevant && self.unambiguous && self.diverse
    }
}

/// Checks a candidate against the four distractor-quality criteria.
/// `others` are the sample's other distractors (for the diversity check).
pub fn validate_distractor<P: ScoreProvider>(
    sample: &Sample,
    candidate: &[String],
    others: &[&[String]],
    scorer: &P,
    thresholds: &Thresholds,
    stopwords: &Stopwords,
    n_max: usize,
) -> Result<Verdict, P::Error> {
    let q = premise_tokens(sample, PremiseKind::Text);
    let cand = normalize(candidate);
    let oc = overlap_count(&cand, &q, n_max);
    let oa = overlap_count(&normalize(&sample.correct_option().text), &q, n_max);
    let irrelevant = irrelevant_ngram_count(candidate, sample, stopwords, n_max);

    let cand_text = candidate.join(" ");
    let correct_text = sample.correct_option().joined();
    let other_texts: Vec<String> = others.iter().map(|o| o.join(" ")).collect();
    let mut pairs: Vec<(&str, &str)> = vec![(correct_text.as_str(), cand_text.as_str())];
    pairs.extend(other_texts.iter().map(|o| (o.as_str(), cand_text.as_str())));
    let sims = scorer.score(ScoreKind::Similarity, &pairs)?;
    let max_other = sims[1..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(Verdict {
        overlap_balanced: oc.abs_diff(oa) <= thresholds.overlap,
        relevant: irrelevant <= thresholds.irrelevant,
        unambiguous: sims[0] <= thresholds.sim_hi,
        diverse: max_other <= thresholds.diversity,
    })
}

/// A human-annotated in-context example for the refinement prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exemplar {
    pub question: String,
    pub answer: String,
    pub distractors: Vec<String>,
}

pub const PROMPT_EXEMPLARS: usize = 5;
pub const PROMPT_TOP_K: usize = 10;
pub const DISTRACTORS_PER_SAMPLE: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("exemplar pool has {0} entries, need at least {PROMPT_EXEMPLARS}")]
    PoolTooSmall(usize),
    #[error("generated text has no fenced list")]
    NoFence,
    #[error("expected {DISTRACTORS_PER_SAMPLE} distractors, parsed {0}")]
    WrongCount(usize),
}

const RANKED_HEADER: &str = "Ranked candidates:";

fn fenced(out: &mut String, items: impl IntoIterator<Item = impl AsRef<str>>) {
    out.push_str("```\n");
    for it in items {
        let _ = writeln!(out, "- {}", it.as_ref());
    }
    out.push_str("```\n");
}

/// Distinct object labels ordered by region area, largest first.
pub fn salient_labels(sample: &Sample, top: usize) -> Vec<String> {
    let mut objs: Vec<(f64, usize)> = sample
        .visual
        .objects
        .iter()
        .enumerate()
        .map(|(i, r)| (r.shape.area(), i))
        .collect();
    objs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (_, i) in objs {
        let l = sample.visual.objects[i].label.trim().to_string();
        if seen.insert(l.clone()) {
            out.push(l);
            if out.len() == top {
                break;
            }
        }
    }
    out
}

/// Distinct n-grams of the correct answer found in the question or scene labels.
pub fn matched_ngrams(sample: &Sample, n_max: usize) -> Vec<String> {
    let a = normalize(&sample.correct_option().text);
    let q = premise_tokens(sample, PremiseKind::Text);
    let v = premise_tokens(sample, PremiseKind::Visual);
    let qs = extract_ngrams(&q, n_max);
    let vs = extract_ngrams(&v, n_max);
    extract_ngrams(&a, n_max)
        .into_iter()
        .filter(|g| qs.contains(g) || vs.contains(g))
        .map(|g| g.join(" "))
        .collect()
}

/// Deterministic refinement prompt: references for the sample plus five
/// exemplars drawn from `pool` with a seeded sampler.
pub fn build_refinement_prompt(
    sample: &Sample,
    ranked: &[String],
    pool: &[Exemplar],
    seed: u64,
) -> Result<String, PromptError> {
    if pool.len() < PROMPT_EXEMPLARS {
        return Err(PromptError::PoolTooSmall(pool.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, pool.len(), PROMPT_EXEMPLARS).into_vec();

    let mut out = String::new();
    out.push_str(
        "Write exactly 3 incorrect answer options (distractors) for a multiple-choice question about an image.\n\
         Each distractor must:\n\
         1. resemble the correct answer and share about as many n-grams with the question and image;\n\
         2. stay on topic for the scene, with no n-grams unrelated to it;\n\
         3. be clearly wrong, never a paraphrase of the correct answer;\n\
         4. differ from the other two distractors.\n\
         Answer with a fenced list of three lines, each starting with \"- \".\n\n",
    );
    for (n, &i) in picks.iter().enumerate() {
        let ex = &pool[i];
        let _ = writeln!(out, "### Example {}", n + 1);
        let _ = writeln!(out, "Question: {}", ex.question);
        let _ = writeln!(out, "Correct answer: {}", ex.answer);
        out.push_str("Distractors:\n");
        fenced(&mut out, &ex.distractors);
        out.push('\n');
    }
    out.push_str("### Task\n");
    let caption = sample.visual.caption.as_ref().map(|c| c.join(" ")).unwrap_or_default();
    let _ = writeln!(out, "Caption: {caption}");
    let _ = writeln!(out, "Question: {}", sample.question.join(" "));
    let _ = writeln!(out, "Correct answer: {}", sample.correct_option().joined());
    let _ = writeln!(out, "Matched n-grams: {}", matched_ngrams(sample, 3).join(" | "));
    let _ = writeln!(
        out,
        "Salient objects: {}",
        salient_labels(sample, PROMPT_TOP_K).join(", ")
    );
    out.push_str(RANKED_HEADER);
    out.push('\n');
    for (n, c) in ranked.iter().take(PROMPT_TOP_K).enumerate() {
        let _ = writeln!(out, "{}. {}", n + 1, c);
    }
    out.push_str("\nDistractors:\n");
    Ok(out)
}

fn strip_bullet(line: &str) -> &str {
    let l = line.trim();
    if let Some(r) = l.strip_prefix("- ").or_else(|| l.strip_prefix("* ")) {
        return r.trim();
    }
    let digits = l.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 {
        let rest = &l[digits..];
        if let Some(r) = rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") ")) {
            return r.trim();
        }
    }
    l
}

fn fenced_items(text: &str) -> Result<Vec<String>, PromptError> {
    let mut lines = text.lines();
    lines
        .by_ref()
        .find(|l| l.trim_start().starts_with("```"))
        .ok_or(PromptError::NoFence)?;
    let mut items = Vec::new();
    for l in lines {
        if l.trim_start().starts_with("```") {
            return Ok(items);
        }
        let item = strip_bullet(l);
        if !item.is_empty() {
            items.push(item.to_string());
        }
    }
    Err(PromptError::NoFence)
}

/// Parses the first fenced block of generated text into exactly three distractors.
pub fn parse_distractors(text: &str) -> Result<Vec<String>, PromptError> {
    let items = fenced_items(text)?;
    if items.len() != DISTRACTORS_PER_SAMPLE {
        return Err(PromptError::WrongCount(items.len()));
    }
    Ok(items)
}

const PARAPHRASE_HEADER: &str = "Rewrite the correct answer";

/// Prompt asking for one rewording of the correct answer (the `A+` option).
pub fn build_paraphrase_prompt(sample: &Sample) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{PARAPHRASE_HEADER} so it keeps its meaning but uses different wording. \
         Answer with a fenced list holding one line that starts with \"- \"."
    );
    let _ = writeln!(out, "Question: {}", sample.question.join(" "));
    let _ = writeln!(out, "Correct answer: {}", sample.correct_option().joined());
    out
}

/// Parses the first fenced block into exactly one line.
pub fn parse_paraphrase(text: &str) -> Result<String, PromptError> {
    let items = fenced_items(text)?;
    match <[String; 1]>::try_from(items) {
        Ok([one]) => Ok(one),
        Err(v) => Err(PromptError::WrongCount(v.len())),
    }
}

/// Text generation backend for distractor refinement.
pub trait Generator {
    type Error;

    fn generate(&self, prompt: &str, max_tokens: u32, seed: u64) -> Result<String, Self::Error>;
}

/// Returns the same text for every prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CannedGenerator(pub String);

impl Generator for CannedGenerator {
    type Error = core::convert::Infallible;

    fn generate(&self, _prompt: &str, _max_tokens: u32, _seed: u64) -> Result<String, Self::Error> {
        Ok(self.0.clone())
    }
}

/// Offline stand-in for a language model: answers a refinement prompt with
/// its first three ranked candidates and a paraphrase prompt with the
/// correct answer unchanged.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExtractiveGenerator;

impl Generator for ExtractiveGenerator {
    type Error = PromptError;

    fn generate(&self, prompt: &str, _max_tokens: u32, _seed: u64) -> Result<String, PromptError> {
        if prompt.starts_with(PARAPHRASE_HEADER) {
            let answer = prompt
                .lines()
                .find_map(|l| l.strip_prefix("Correct answer: "))
                .ok_or(PromptError::WrongCount(0))?;
            let mut out = String::new();
            fenced(&mut out, [answer]);
            return Ok(out);
        }
        let picked: Vec<&str> = prompt
            .lines()
            .skip_while(|l| *l != RANKED_HEADER)
            .skip(1)
            .take_while(|l| !l.trim().is_empty())
            .map(strip_bullet)
            .take(DISTRACTORS_PER_SAMPLE)
            .collect();
        if picked.len() != DISTRACTORS_PER_SAMPLE {
            return Err(PromptError::WrongCount(picked.len()));
        }
        let mut out = String::new();
        fenced(&mut out, picked);
        Ok(out)
    }
}

/// Outcome of refining one sample's distractors.
#[derive(Debug, Clone, PartialEq)]
pub struct Refined {
    pub distractors: Vec<Vec<String>>,
    pub verdicts: Vec<Verdict>,
}

impl Refined {
    pub fn validated(&self) -> usize {
        self.verdicts.iter().filter(|v| v.passes()).count()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RefineError<G, S> {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("generation failed: {0}")]
    Generator(G),
    #[error("scoring failed: {0}")]
    Scorer(S),
    #[error("only {0} distinct candidates available, need {DISTRACTORS_PER_SAMPLE}")]
    NotEnoughCandidates(usize),
}

/// Refinement settings shared across samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineConfig {
    pub thresholds: Thresholds,
    pub max_tokens: u32,
    pub seed: u64,
    pub n_max: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            thresholds: Thresholds::default(),
            max_tokens: 256,
            seed: 0,
            n_max: 3,
        }
    }
}

/// Prompts the generator, then greedily keeps candidates (generated first,
/// then the ranked pool) that pass all four checks against the ones already
/// kept. Shortfalls are filled with the next distinct candidates and carry a
/// failing verdict.
pub fn refine_distractors<G: Generator, P: ScoreProvider>(
    sample: &Sample,
    ranked: &[String],
    pool: &[Exemplar],
    generator: &G,
    scorer: &P,
    stopwords: &Stopwords,
    cfg: &RefineConfig,
) -> Result<Refined, RefineError<G::Error, P::Error>> {
    let prompt = build_refinement_prompt(sample, ranked, pool, cfg.seed)?;
    let generated = generator
        .generate(&prompt, cfg.max_tokens, cfg.seed)
        .map_err(RefineError::Generator)?;
    let generated = parse_distractors(&generated)?;

    let correct = normalize(&sample.correct_option().text);
    let mut seen: BTreeSet<Vec<String>> = BTreeSet::new();
    seen.insert(correct);
    let mut candidates: Vec<Vec<String>> = Vec::new();
    for c in generated.iter().chain(ranked) {
        let toks = tokenize(c);
        if !toks.is_empty() && seen.insert(toks.clone()) {
            candidates.push(toks);
        }
    }

    let mut kept: Vec<(usize, Verdict)> = Vec::new();
    let mut rejected = Vec::new();
    for (idx, cand) in candidates.iter().enumerate() {
        if kept.len() == DISTRACTORS_PER_SAMPLE {
            break;
        }
        let others: Vec<&[String]> = kept.iter().map(|(k, _)| candidates[*k].as_slice()).collect();
        let v = validate_distractor(sample, cand, &others, scorer, &cfg.thresholds, stopwords, cfg.n_max)
            .map_err(RefineError::Scorer)?;
        if v.passes() {
            kept.push((idx, v));
        } else {
            rejected.push((idx, v));
        }
    }
    for r in rejected {
        if kept.len() == DISTRACTORS_PER_SAMPLE {
            break;
        }
        kept.push(r);
    }
    if kept.len() < DISTRACTORS_PER_SAMPLE {
        return Err(RefineError::NotEnoughCandidates(kept.len()));
    }
    Ok(Refined {
        distractors: kept.iter().map(|(i, _)| candidates[*i].clone()).collect(),
        verdicts: kept.iter().map(|(_, v)| *v).collect(),
    })
}

/// Builds the `A+` and `A-` variant samples of `original`. `A+` swaps the
/// correct answer and keeps the distractors; `A-` keeps the correct answer
/// and swaps in the new distractors.
pub fn text_variants(original: &Sample, positive: Vec<String>, negatives: Vec<Vec<String>>) -> (Sample, Sample) {
    use crate::corpus::AnswerOption;
    use crate::variants::SynthParts;
    let parts = SynthParts {
        positive_answer: Some(AnswerOption { text: positive }),
        negative_answers: Some(negatives.into_iter().map(|text| AnswerOption { text }).collect()),
        ..Default::default()
    };
    // Both parts are present, so composing cannot fail.
    let compose = |v| parts.compose(original, v).unwrap_or_else(|_| original.clone());
    (compose(Variant::ANSWER_POSITIVE), compose(Variant::ANSWER_NEGATIVE))
}
