use debias_core::ict::{combined_loss, gradient_sweep, info_nce, xe_loss};
use serde::Serialize;

use super::{json_bytes, Ctx};
use crate::cli::CheckLossesArgs;
use crate::error::{Error, Result};
use crate::io::Output;

#[derive(Serialize)]
struct LossJson {
    seed: u64,
    cases: usize,
    tol: f64,
    xe_max_rel_err: f64,
    info_nce_max_rel_err: f64,
    xe_uniform4: f64,
    info_nce_symmetric: f64,
    combined: f64,
}

pub fn check_losses(ctx: &mut Ctx, a: &CheckLossesArgs) -> Result<Vec<Output>> {
    let seed = ctx.cfg.require_seed()?;
    let l = ctx.cfg.losses;
    let r = gradient_sweep(l.cases, seed);

    let xe = xe_loss(&[0.0; 4], 0).map_err(Error::data)?.0;
    let nce = info_nce(&[1.0, 0.0], &[0.0, 1.0], &[0.0, -1.0], 1.0)
        .map_err(Error::data)?
        .loss;
    let combined = combined_loss(xe, nce, nce, l.delta1, l.delta2);
    println!(
        "xe_loss:  max relative gradient error {:.3e} over {} cases",
        r.xe_max, r.cases
    );
    println!(
        "info_nce: max relative gradient error {:.3e} over {} cases",
        r.info_nce_max, r.cases
    );
    println!("xe at uniform 4-way logits {xe:.8}, info_nce at symmetry {nce:.8}, combined {combined:.8}");

    if !(r.xe_max < l.tol && r.info_nce_max < l.tol) {
        return Err(Error::data(format!(
            "gradient check failed: tolerance {:.1e} exceeded",
            l.tol
        )));
    }
    let Some(out) = &a.out else {
        return Ok(Vec::new());
    };
    let json = LossJson {
        seed,
        cases: r.cases,
        tol: l.tol,
        xe_max_rel_err: r.xe_max,
        info_nce_max_rel_err: r.info_nce_max,
        xe_uniform4: xe,
        info_nce_symmetric: nce,
        combined,
    };
    Ok(vec![Output::file(out, json_bytes(&json))])
}
