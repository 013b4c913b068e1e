//! Recombining an original sample with its synthesized parts.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::corpus::{AnswerOption, ImageVariant, Provenance, Sample, Variant, VisualPremise};

/// Synthesized components collected for one original sample.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SynthParts {
    pub positive_answer: Option<AnswerOption>,
    pub negative_answers: Option<Vec<AnswerOption>>,
    pub positive_image: Option<VisualPremise>,
    pub negative_image: Option<VisualPremise>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VariantError {
    #[error("sample {sample_id:?} is missing its {part} variant")]
    Missing { sample_id: String, part: &'static str },
    #[error("sample {sample_id:?} has no parent or single-component variant tag")]
    Unusable { sample_id: String },
}

impl SynthParts {
    /// Records the component carried by a single-component synthesized sample.
    pub fn absorb(&mut self, s: &Sample) -> Result<(), VariantError> {
        let v = s.provenance.variant().ok_or_else(|| VariantError::Unusable {
            sample_id: s.id.clone(),
        })?;
        if v == Variant::ANSWER_POSITIVE {
            self.positive_answer = Some(s.correct_option().clone());
        } else if v == Variant::ANSWER_NEGATIVE {
            self.negative_answers = Some(s.distractors().cloned().collect());
        } else if v == Variant::IMAGE_POSITIVE {
            self.positive_image = Some(s.visual.clone());
        } else if v == Variant::IMAGE_NEGATIVE {
            self.negative_image = Some(s.visual.clone());
        } else {
            return Err(VariantError::Unusable {
                sample_id: s.id.clone(),
            });
        }
        Ok(())
    }

    fn need<'a, T>(&'a self, part: &'a Option<T>, name: &'static str, id: &str) -> Result<&'a T, VariantError> {
        part.as_ref().ok_or_else(|| VariantError::Missing {
            sample_id: String::from(id),
            part: name,
        })
    }

    /// Fails naming the first absent component among those `variant` needs.
    pub fn check(&self, sample_id: &str, variant: Variant) -> Result<(), VariantError> {
        match variant.image {
            ImageVariant::Original => {}
            ImageVariant::Positive => {
                self.need(&self.positive_image, "I+", sample_id)?;
            }
            ImageVariant::Negative => {
                self.need(&self.negative_image, "I-", sample_id)?;
            }
        }
        if variant.positive_answer {
            self.need(&self.positive_answer, "A+", sample_id)?;
        }
        if variant.negative_answers {
            self.need(&self.negative_answers, "A-", sample_id)?;
        }
        Ok(())
    }

    /// The original sample with the components named by `variant` swapped in.
    pub fn compose(&self, original: &Sample, variant: Variant) -> Result<Sample, VariantError> {
        self.check(&original.id, variant)?;
        if variant.is_empty() {
            return Ok(original.clone());
        }
        let mut s = original.clone();
        s.id = format!("{}#{}", original.id, variant);
        match variant.image {
            ImageVariant::Original => {}
            ImageVariant::Positive => {
                s.visual = self.need(&self.positive_image, "I+", &original.id)?.clone();
            }
            ImageVariant::Negative => {
                s.visual = self.need(&self.negative_image, "I-", &original.id)?.clone();
            }
        }
        let (options, correct) = replace_options(
            original,
            self.positive_answer.as_ref().filter(|_| variant.positive_answer),
            self.negative_answers.as_deref().filter(|_| variant.negative_answers),
        );
        s.options = options;
        s.correct = correct;
        s.provenance = Provenance::synthesized(original.id.clone(), variant);
        Ok(s)
    }
}

/// Option list with the correct answer and/or the distractors replaced.
/// The correct option keeps its index; negatives fill the distractor slots
/// in order, extra ones are appended and missing ones shrink the list.
pub fn replace_options(
    original: &Sample,
    positive: Option<&AnswerOption>,
    negatives: Option<&[AnswerOption]>,
) -> (Vec<AnswerOption>, usize) {
    let correct = positive.unwrap_or(original.correct_option()).clone();
    let Some(negs) = negatives else {
        let mut o = original.options.clone();
        o[original.correct] = correct;
        return (o, original.correct);
    };
    let before = original.correct.min(negs.len());
    let mut out = Vec::with_capacity(negs.len() + 1);
    out.extend(negs[..before].iter().cloned());
    out.push(correct);
    out.extend(negs[before..].iter().cloned());
    (out, before)
}

/// Groups single-component synthesized samples by parent id.
pub fn collect_parts(synth: &[Sample]) -> Result<BTreeMap<String, SynthParts>, VariantError> {
    let mut out: BTreeMap<String, SynthParts> = BTreeMap::new();
    for s in synth {
        let parent = s.provenance.parent().ok_or_else(|| VariantError::Unusable {
            sample_id: s.id.clone(),
        })?;
        out.entry(String::from(parent)).or_default().absorb(s)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tests::{sample, toks};
    use alloc::vec;

    #[test]
    fn replace_keeps_correct_index() {
        let s = sample("s", "q", &["c", "d1", "d2", "d3"], 2);
        let negs: Vec<AnswerOption> = ["n1", "n2", "n3"]
            .iter()
            .map(|t| AnswerOption { text: toks(t) })
            .collect();
        let (o, c) = replace_options(&s, None, Some(&negs));
        assert_eq!(c, 2);
        assert_eq!(o[2].text, toks("d2"));
        assert_eq!(o[0].text, toks("n1"));
        assert_eq!(o[3].text, toks("n3"));
        let plus = AnswerOption { text: toks("p") };
        let (o, c) = replace_options(&s, Some(&plus), None);
        assert_eq!((o[2].text.clone(), c), (toks("p"), 2));
        assert_eq!(o[0].text, toks("c"));
    }

    #[test]
    fn compose_names_missing_part() {
        let s = sample("s", "q", &["c", "d"], 0);
        let parts = SynthParts {
            positive_answer: Some(AnswerOption { text: toks("p") }),
            ..Default::default()
        };
        let v = parts.compose(&s, Variant::ANSWER_POSITIVE).unwrap();
        assert_eq!(v.id, "s#A+");
        assert_eq!(v.options[0].text, vec!["p"]);
        let err = parts.compose(&s, Variant::ANSWER_NEGATIVE).unwrap_err();
        assert_eq!(
            err,
            VariantError::Missing {
                sample_id: "s".into(),
                part: "A-"
            }
        );
    }
}
