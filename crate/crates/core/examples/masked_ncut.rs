//! Run the masked normalized-cut loop on planted clusters and print each
//! iteration.

use pseudomask::ncut::masked_ncut_traced;
use pseudomask::{cosine_similarity, synth, NCutParams};

fn main() -> pseudomask::Result<()> {
    let scene = synth::planted_clusters(&[14, 9, 6, 4], 7);
    let params = NCutParams {
        min_foreground_segments: 3,
        ..Default::default()
    };
    let (set, trace) = masked_ncut_traced(&cosine_similarity(&scene.features), &scene.segments, &params)?;

    println!("iter  active  lambda     fg  inverted  kept  accepted");
    for t in &trace.iterations {
        let lambda = t.lambda.map_or("-".to_string(), |l| format!("{l:.2e}"));
        println!(
            "{:>4}  {:>6}  {:>9}  {:>3}  {:>8}  {:>4}  {}",
            t.iteration, t.n_active, lambda, t.foreground_after_inversion, t.inverted, t.kept, t.accepted
        );
    }
    println!("stopped: {:?}", trace.stop);

    for m in set.iter() {
        let object = scene.objects.iter().position(|o| *o == m.segment_ids);
        println!(
            "{}  confidence {:.3}  {} segments  planted object {:?}",
            m.source,
            m.confidence,
            m.segment_ids.len(),
            object
        );
    }
    Ok(())
}
