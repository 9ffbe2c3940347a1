//! Class-agnostic AP of masked normalized cut on a synthetic room, with the
//! precision/recall curve at IoU 0.5.

use pseudomask::features::Aggregation;
use pseudomask::{
    aggregate_features, evaluate_ap, masked_ncut, oversegment, synth, GroundTruthSet, NCutParams, OversegParams,
    ScoredMask,
};

fn main() -> pseudomask::Result<()> {
    let scene = synth::room(150, 8, 0.008, 2);
    let seg = oversegment(&scene.mesh, &OversegParams::default())?;
    let f = aggregate_features(&scene.features_3d, &seg, Aggregation::Mean)?;
    let params = NCutParams {
        tau_cut: 0.55,
        min_foreground_segments: 2,
        ..Default::default()
    };
    let set = masked_ncut(&pseudomask::cosine_similarity(&f), &seg, &params)?;
    let preds: Vec<ScoredMask> = set.iter().map(ScoredMask::from).collect();
    let gt = GroundTruthSet::new(scene.gt);

    let report = evaluate_ap(&preds, &gt)?;
    println!(
        "{} predictions, {} instances: AP@25 {:.3}  AP@50 {:.3}  AP {:.3}",
        preds.len(),
        gt.num_instances(),
        report.ap25,
        report.ap50,
        report.ap_mean
    );
    if let Some(curve) = report.curves.iter().find(|c| c.threshold == 0.5) {
        println!("rank  precision  recall");
        for (i, (p, r)) in curve.precision.iter().zip(&curve.recall).enumerate() {
            println!("{:>4}  {p:>9.3}  {r:>6.3}", i + 1);
        }
    }
    Ok(())
}
