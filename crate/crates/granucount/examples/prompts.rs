//! Print the exact text prompt each granularity level produces, straight
//! from queries of a freshly generated dataset.
//!
//!     cargo run --release --example prompts

use granucount::eval::emit_prompt;
use granucount::levels::LevelTag;
use granucount::pipeline::{cmd_generate, load_queries, GenerationJob, LevelCounts};
use std::collections::BTreeMap;
use std::path::Path;

fn main() -> Result<(), granucount::Error> {
    let mut job = GenerationJob::new(31);
    job.image_size = (128, 128);
    job.counts = LevelTag::ALL
        .into_iter()
        .map(|l| {
            (l, LevelCounts { train_normal: 1, train_dense: 0, test_a: 0, test_b: 0 })
        })
        .collect::<BTreeMap<_, _>>();
    let out = Path::new("prompts_out");
    cmd_generate(&job, out)?;

    let queries = load_queries(out)?;
    let mut shown = std::collections::BTreeSet::new();
    for q in &queries {
        if !shown.insert(q.level) {
            continue; // one prompt per level is enough
        }
        println!("--- {} (ground truth {}) ---", q.level.as_str(), q.gt_count);
        println!("{}\n", emit_prompt(q)?);
    }
    Ok(())
}
