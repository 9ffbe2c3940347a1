//! Densify a sparse pseudo-mask set with proposals from a second generator.

use pseudomask::{
    cosine_similarity, freemask_generate, masked_ncut, merge_predictions, synth, FreeMaskParams, MergePolicy,
    NCutParams,
};

fn main() -> pseudomask::Result<()> {
    let scene = synth::planted_scene(&[9, 8, 3, 3, 2], &[0, 1, 2, 3, 4], 5);

    // the default foreground gate keeps only the large objects
    let sparse = masked_ncut(&cosine_similarity(&scene.features), &scene.segments, &NCutParams::default())?;
    let params = FreeMaskParams {
        n_seeds: 12,
        ..Default::default()
    };
    let candidates = freemask_generate(&scene.features, &scene.segments, &params)?;

    let policy = MergePolicy::default();
    let merged = merge_predictions(&sparse, &candidates.masks, &policy, 1)?;
    println!(
        "{} pseudo-masks + {} candidates -> {} masks (novelty bound {})",
        sparse.len(),
        candidates.len(),
        merged.len(),
        policy.min_novelty_iou
    );
    for m in merged.iter() {
        let object = scene.objects.iter().position(|o| *o == m.segment_ids);
        println!("  {:<9} {:>3} segments  object {object:?}", m.source.to_string(), m.segment_ids.len());
    }
    Ok(())
}
