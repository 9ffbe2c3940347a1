//! Oversegment a mesh and report segment statistics.
//!
//! ```text
//! cargo run --release --example oversegment_mesh [mesh.ply]
//! ```
//! Without an argument a synthetic room is used.

use pseudomask::overseg::segment_count_sweep;
use pseudomask::{load_ply, oversegment, synth, OversegParams};

fn main() -> pseudomask::Result<()> {
    let mesh = match std::env::args().nth(1) {
        Some(path) => load_ply(&path)?,
        None => synth::room(200, 9, 0.008, 1).mesh,
    };
    let params = OversegParams::default();
    let seg = oversegment(&mesh, &params)?;
    let mut sizes: Vec<usize> = (0..seg.num_segments()).map(|s| seg.segment_size(s)).collect();
    sizes.sort_unstable();
    println!(
        "{} vertices, {} faces -> {} segments, {} adjacent pairs",
        mesh.vertex_count(),
        mesh.faces.len(),
        seg.num_segments(),
        seg.adjacency().len()
    );
    println!(
        "segment size min {} / median {} / max {}",
        sizes[0],
        sizes[sizes.len() / 2],
        sizes[sizes.len() - 1]
    );

    println!("min_size  segments");
    for (m, count) in segment_count_sweep(&mesh, params.k, params.color_weight, &[1, 10, 25, 50, 100, 200])? {
        println!("{m:>8}  {count:>8}");
    }
    Ok(())
}
