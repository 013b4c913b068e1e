use debias_core::ict::{combined_loss, ict_loss, info_nce, xe_loss, IctBatch};
use proptest::prelude::*;

fn scalar(cos_p: f64, cos_n: f64, tau: f64) -> f64 {
    (1.0 + ((cos_n - cos_p) / tau).exp()).ln()
}

#[test]
fn two_positives_average_their_scalar_losses() {
    let z = vec![1.0, 0.0];
    let p2 = vec![0.5, 0.75f64.sqrt()];
    let batch = IctBatch {
        anchor: z.clone(),
        positives: vec![vec![1.0, 0.0], p2],
        negatives: vec![vec![0.0, 1.0]],
        tau: 1.0,
    };
    let want = (scalar(1.0, 0.0, 1.0) + scalar(0.5, 0.0, 1.0)) / 2.0;
    assert!((ict_loss(&batch).unwrap().loss - want).abs() < 1e-12);
}

#[test]
fn scalar_spot_values() {
    assert!((xe_loss(&[0.0; 4], 0).unwrap().0 - 4f64.ln()).abs() < 1e-9);
    let hi = xe_loss(&[10.0, 0.0, 0.0, 0.0], 0).unwrap().0;
    assert!((hi - (1.0 + 3.0 * (-10f64).exp()).ln()).abs() < 1e-7);
    let r = info_nce(&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0], 1.0).unwrap();
    assert!((r.loss - 0.31326169).abs() < 1e-8);
    let r = info_nce(&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0], 0.5).unwrap();
    assert!((r.loss - 0.12692801).abs() < 1e-8);
    assert_eq!(combined_loss(1.0, 0.5, 0.5, 0.5, 2.0), 2.5);
}

proptest! {
    #[test]
    fn equal_positive_and_negative_give_ln2(
        z in prop::collection::vec(-1.0f64..1.0, 4),
        p in prop::collection::vec(-1.0f64..1.0, 4),
        tau in 0.05f64..5.0,
    ) {
        prop_assume!(z.iter().any(|v| v.abs() > 1e-3) && p.iter().any(|v| v.abs() > 1e-3));
        let r = info_nce(&z, &p, &p, tau).unwrap();
        prop_assert_eq!(r.loss, std::f64::consts::LN_2);
    }

    #[test]
    fn info_nce_matches_scalar_form(
        z in prop::collection::vec(-1.0f64..1.0, 6),
        p in prop::collection::vec(-1.0f64..1.0, 6),
        n in prop::collection::vec(-1.0f64..1.0, 6),
        tau in 0.1f64..2.0,
    ) {
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assume!(norm(&z) > 1e-3 && norm(&p) > 1e-3 && norm(&n) > 1e-3);
        let cos = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (norm(a) * norm(b));
        let r = info_nce(&z, &p, &n, tau).unwrap();
        prop_assert!((r.loss - scalar(cos(&z, &p), cos(&z, &n), tau)).abs() < 1e-9);
    }

    #[test]
    fn without_contrastive_weight_only_xe_remains(xe in 0.0f64..10.0, a in 0.0f64..10.0, i in 0.0f64..10.0, d1 in 0.0f64..3.0) {
        prop_assert_eq!(combined_loss(xe, a, i, d1, 0.0), d1 * xe);
    }
}
