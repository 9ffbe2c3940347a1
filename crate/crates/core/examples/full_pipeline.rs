//! The file-based pipeline end to end: write scenes to disk, oversegment,
//! generate pseudo-masks, export and evaluate, all driven by one config.
//!
//! ```text
//! cargo run --release --example full_pipeline [work_dir]
//! ```

use pseudomask::eval::format_table;
use pseudomask::pipeline::{self, PipelineConfig};
use pseudomask::synth;

const CONFIG: &str = r#"
generator = "ncut"
modality = "fused"
w2d = 0.5

[ncut]
tau_cut = 0.65
min_foreground_segments = 2

[eval]
mode = "pooled"
"#;

fn main() -> pseudomask::Result<()> {
    let work = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("pseudomask_pipeline"));
    let data = work.join("data");
    let scenes: Vec<String> = (0..3).map(|i| format!("room{i}")).collect();
    for (i, name) in scenes.iter().enumerate() {
        synth::room(140, 5 + i, 0.008, 100 + i as u64).write(&data, name)?;
    }

    let mut cfg = PipelineConfig::from_toml(CONFIG)?;
    let d = data.display();
    cfg.paths.mesh = Some(format!("{d}/{{scene}}.ply"));
    cfg.paths.features_3d = Some(format!("{d}/{{scene}}.3d.fmat"));
    cfg.paths.features_2d = Some(format!("{d}/{{scene}}.2d.fmat"));
    cfg.paths.gt = Some(format!("{d}/{{scene}}.gt.txt"));
    cfg.paths.output_dir = Some(work.join("out").display().to_string());
    cfg.validate()?;

    let report = pipeline::run_batch(&scenes, 0, |scene| {
        pipeline::cmd_oversegment(&cfg, scene)?;
        let set = pipeline::cmd_pseudomask(&cfg, scene)?;
        pipeline::cmd_export_colored(&cfg, scene)?;
        Ok(set.len())
    })?;
    println!("{} of {} scenes processed", report.succeeded.len(), scenes.len());

    let summary = pipeline::cmd_eval(&cfg, &scenes, 0)?;
    print!("{}", format_table(&summary));
    println!("outputs in {}", work.join("out").display());
    Ok(())
}
