//! Seed-based proposals: farthest-point seeds, salient regions, maskness
//! scoring and non-maximum suppression.

use pseudomask::freemask::{farthest_point_sampling, maskness_score, salient_regions};
use pseudomask::{cosine_similarity, freemask_generate, synth, FreeMaskParams};

fn main() -> pseudomask::Result<()> {
    let scene = synth::planted_scene(&[10, 7, 5], &[0, 1, 2], 11);
    let params = FreeMaskParams {
        n_seeds: 8,
        ..Default::default()
    };

    let a = cosine_similarity(&scene.features);
    let seeds = farthest_point_sampling(&scene.features, params.n_seeds)?;
    println!("seeds: {seeds:?}");
    for (seed, region) in seeds.iter().zip(salient_regions(&a, &seeds, params.tau_sim)) {
        let score = maskness_score(&region, &a, &scene.segments)?;
        println!("  seed {seed:>3}: {:>3} segments, maskness {score:.4}", region.len());
    }

    let set = freemask_generate(&scene.features, &scene.segments, &params)?;
    println!("kept {} proposals after suppression", set.len());
    for m in set.iter() {
        let label = match scene.objects.iter().position(|o| *o == m.segment_ids) {
            Some(i) => format!("object {i}"),
            None if m.segment_ids == scene.background => "background".to_string(),
            None => "mixed".to_string(),
        };
        println!("  confidence {:.3}  {:>3} segments  {label}", m.confidence, m.segment_ids.len());
    }
    Ok(())
}
