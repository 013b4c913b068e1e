use std::collections::BTreeMap;

use debias_core::corpus::{Provenance, Sample, Variant};
use debias_core::region::{image_variant_sample, select_regions, synthesize_images, RasterImage, RemovalError};
use rayon::prelude::*;

use super::Ctx;
use crate::cli::SynthImageArgs;
use crate::error::{Error, Result};
use crate::format;
use crate::io::{decode_png, encode_png, Output};
use crate::providers::{AnyEmbedder, AnyInpainter, BackendSpec, ProviderSpec};
use crate::remote::{InpaintModel, ProviderError};

/// File-name-safe form of a sample id.
fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn removal_error(id: &str, e: RemovalError<ProviderError>) -> Error {
    match e {
        RemovalError::Backend { source, .. } => Error::Provider(source),
        other => Error::data(format!("sample {id:?}: {other}")),
    }
}

struct Job<'a> {
    sample: &'a Sample,
    image: RasterImage,
}

pub fn synth_image(ctx: &mut Ctx, a: &SynthImageArgs) -> Result<Vec<Output>> {
    let corpus = ctx.load_corpus(&a.corpus)?;
    let backend = BackendSpec::parse(&ctx.cfg.regions.backend).map_err(Error::Usage)?;
    let spec = ProviderSpec::parse(&ctx.cfg.providers).map_err(Error::Usage)?;
    let net = ctx.cfg.network();

    let mut jobs = Vec::new();
    for s in corpus.iter().filter(|s| s.provenance == Provenance::Original) {
        let Some(rel) = &s.visual.image else {
            log::warn!("sample {:?} has no image; skipped", s.id);
            continue;
        };
        let path = a.images.join(rel);
        let image = decode_png(&ctx.inputs.read(&path)?).map_err(|e| Error::input(&path, e))?;
        if (image.width(), image.height()) != (s.visual.width, s.visual.height) {
            return Err(Error::input(
                &path,
                format!(
                    "image is {}x{} but sample {:?} declares {}x{}",
                    image.width(),
                    image.height(),
                    s.id,
                    s.visual.width,
                    s.visual.height
                ),
            ));
        }
        jobs.push(Job { sample: s, image });
    }

    let mut stems = BTreeMap::new();
    for j in &jobs {
        let stem = file_stem(&j.sample.id);
        if let Some(other) = stems.insert(stem.clone(), j.sample.id.clone()) {
            return Err(Error::data(format!(
                "sample ids {other:?} and {:?} map to the same file name {stem:?}",
                j.sample.id
            )));
        }
    }

    let embedder = AnyEmbedder::new(&spec, net);
    let backend_p = AnyInpainter::new(&backend, InpaintModel::Pretrained, net);
    let backend_f = AnyInpainter::new(&backend, InpaintModel::Finetuned, net);
    let tri = ctx.cfg.tri_pass();
    let select = ctx.cfg.select_params();
    let stopwords = &ctx.stopwords;

    type Done = (Sample, Sample, (String, Vec<u8>), (String, Vec<u8>), bool, bool);
    let done: Vec<Done> = jobs
        .par_iter()
        .map(|j| -> Result<Done> {
            let s = j.sample;
            let part = select_regions(s, &embedder, stopwords, &select)?;
            let out = synthesize_images(s, &j.image, &part, tri, &backend_p, &backend_f)
                .map_err(|e| removal_error(&s.id, e))?;
            let stem = file_stem(&s.id);
            let (pos_name, neg_name) = (format!("{stem}.I+.png"), format!("{stem}.I-.png"));
            let pos = image_variant_sample(s, &part, Variant::IMAGE_POSITIVE, pos_name.clone());
            let neg = image_variant_sample(s, &part, Variant::IMAGE_NEGATIVE, neg_name.clone());
            Ok((
                pos,
                neg,
                (pos_name, encode_png(&out.positive)),
                (neg_name, encode_png(&out.negative)),
                out.positive_noop,
                out.negative_noop,
            ))
        })
        .collect::<Result<_>>()?;

    let noop_pos = done.iter().filter(|d| d.4).count();
    let noop_neg = done.iter().filter(|d| d.5).count();
    println!(
        "{} images: {} I+ and {} I- had no region to remove",
        done.len(),
        noop_pos,
        noop_neg
    );
    let mut files = vec![(
        "synth.jsonl".to_string(),
        format::write_samples(done.iter().flat_map(|d| [&d.0, &d.1])),
    )];
    for d in done {
        files.push(d.2);
        files.push(d.3);
    }
    Ok(vec![Output::Dir {
        path: a.out.clone(),
        files,
    }])
}
