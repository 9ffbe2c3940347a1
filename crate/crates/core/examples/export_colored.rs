//! Colour a mesh by pseudo-mask membership and write it as PLY.
//!
//! ```text
//! cargo run --release --example export_colored [out.ply]
//! ```

use pseudomask::features::Aggregation;
use pseudomask::mesh::ply::{save_ply, PlyFormat};
use pseudomask::pipeline::colorize;
use pseudomask::{aggregate_features, cosine_similarity, masked_ncut, oversegment, synth, NCutParams, OversegParams};

fn main() -> pseudomask::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| std::env::temp_dir().join("room.colored.ply").display().to_string());
    let scene = synth::room(150, 6, 0.008, 4);
    let seg = oversegment(&scene.mesh, &OversegParams::default())?;
    let f = aggregate_features(&scene.features_2d, &seg, Aggregation::Mean)?;
    let params = NCutParams {
        min_foreground_segments: 2,
        ..Default::default()
    };
    let set = masked_ncut(&cosine_similarity(&f), &seg, &params)?;
    let colored = colorize(&scene.mesh, &set)?;
    save_ply(&out, &colored, PlyFormat::BinaryLittleEndian)?;
    println!("{} masks, wrote {out}", set.len());
    Ok(())
}
