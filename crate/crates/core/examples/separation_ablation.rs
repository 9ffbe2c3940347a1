//! Effect of the component separation strategy on scenes with several
//! objects of the same kind.

use pseudomask::{cosine_similarity, masked_ncut, synth, NCutParams, Separation};

fn main() -> pseudomask::Result<()> {
    let strategies = [Separation::Max, Separation::Avg, Separation::Largest, Separation::NoSep];
    let mut totals = [0usize; 4];
    let mut planted = 0;
    for seed in 0..20 {
        // two pairs of look-alike objects plus one distinct object
        let scene = synth::planted_scene(&[6, 5, 7, 4, 6], &[0, 0, 1, 1, 2], seed);
        planted += scene.objects.len();
        let a = cosine_similarity(&scene.features);
        for (total, &separation) in totals.iter_mut().zip(&strategies) {
            let params = NCutParams {
                min_foreground_segments: 2,
                separation,
                ..Default::default()
            };
            let set = masked_ncut(&a, &scene.segments, &params)?;
            *total += set.iter().filter(|m| scene.objects.contains(&m.segment_ids)).count();
        }
    }
    println!("objects recovered exactly, out of {planted}");
    for (s, t) in strategies.iter().zip(totals) {
        println!("  {s:?}: {t}");
    }
    Ok(())
}
