use debias_core::corpus::Provenance;
use debias_core::evalset::{build_adversarial, filter_fair, Confidences};
use debias_core::ict::enumerate_training_pairs;

use super::Ctx;
use crate::cli::{BuildEvalArgs, EnumerateArgs};
use crate::error::{Error, Result};
use crate::format;
use crate::io::Output;

pub fn enumerate_pairs(ctx: &mut Ctx, a: &EnumerateArgs) -> Result<Vec<Output>> {
    let corpus = ctx.load_corpus(&a.corpus)?;
    let parts = ctx.load_parts(&a.synth)?;
    let mut sets = Vec::new();
    let mut skipped = 0usize;
    for s in corpus.iter().filter(|s| s.provenance == Provenance::Original) {
        let Some(p) = parts.get(&s.id) else {
            skipped += 1;
            continue;
        };
        sets.push(enumerate_training_pairs(s, p).map_err(Error::data)?);
    }
    if skipped > 0 {
        log::warn!("{skipped} samples have no synthesized variants; skipped");
    }
    println!(
        "{} samples: {} classification pairs, {} contrastive triples",
        sets.len(),
        sets.iter().map(|p| p.xe_pairs.len()).sum::<usize>(),
        sets.iter().map(|p| p.triples.len()).sum::<usize>()
    );
    let bytes = format::to_lines(sets.iter().map(format::pair_set_line));
    Ok(vec![Output::file(&a.out, bytes)])
}

pub fn build_eval(ctx: &mut Ctx, a: &BuildEvalArgs) -> Result<Vec<Output>> {
    let corpus = ctx.load_corpus(&a.corpus)?;
    let text = ctx.inputs.read_text(&a.confidences)?;
    let records = format::parse_confidences(&text).map_err(|e| Error::input(&a.confidences, e))?;
    let confidences = Confidences::new(&corpus, records).map_err(|e| Error::input(&a.confidences, e))?;
    let parts = ctx.load_parts(&a.synth)?;

    let fair = filter_fair(&corpus, &confidences, &ctx.cfg.fair_criteria()).map_err(Error::data)?;
    let adv = build_adversarial(&fair, &parts).map_err(Error::data)?;
    println!(
        "{} of {} samples kept; {} adversarial samples",
        fair.len(),
        corpus.len(),
        adv.len()
    );
    Ok(vec![
        Output::file(&a.out_fair, format::write_samples(&fair)),
        Output::file(&a.out_adv, format::write_samples(&adv)),
    ])
}
