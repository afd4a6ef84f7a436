//! Generate a small but complete dataset (all six levels, all splits),
//! validate it, and print its statistics.
//!
//!     cargo run --release --example generate_dataset

use granucount::levels::LevelTag;
use granucount::pipeline::{
    cmd_generate, cmd_stats, cmd_validate, GenerationJob, LevelCounts,
};
use std::collections::BTreeMap;
use std::path::Path;

fn main() -> Result<(), granucount::Error> {
    let mut job = GenerationJob::new(2024);
    job.image_size = (192, 192);
    // a twentieth of the stock shape so the example finishes in seconds
    job.counts = LevelTag::ALL
        .into_iter()
        .map(|l| {
            (l, LevelCounts { train_normal: 8, train_dense: 2, test_a: 2, test_b: 2 })
        })
        .collect::<BTreeMap<_, _>>();

    let out = Path::new("generate_dataset_out");
    let manifest = cmd_generate(&job, out)?;
    println!(
        "generated {} scenes and {} queries under {}",
        manifest.scenes.len(),
        manifest.query_count,
        out.display()
    );
    println!("manifest hash: {}", manifest.content_hash);

    let report = cmd_validate(out)?;
    println!(
        "validation: {} scenes checked, {} violations",
        report.scenes_checked,
        report.violations.len()
    );

    let stats = cmd_stats(out)?;
    println!("max instances in any scene: {}", stats.max_instances);
    for (level, summary) in &stats.instances_per_level {
        println!(
            "{:7}: {} scenes, counts {}..{} (mean {:.1})",
            level.as_str(),
            summary.scenes,
            summary.min,
            summary.max,
            summary.mean
        );
    }
    println!("category balance ratio: {:.2}", stats.category_balance_ratio);
    Ok(())
}
