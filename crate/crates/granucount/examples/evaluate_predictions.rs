//! Generate a tiny dataset, score the built-in baselines against it, and
//! show how a prediction file is evaluated.
//!
//!     cargo run --release --example evaluate_predictions

use granucount::eval::MissingPolicy;
use granucount::levels::LevelTag;
use granucount::pipeline::{
    cmd_eval, cmd_generate, load_queries, Baseline, GenerationJob, LevelCounts,
    PredictionSource,
};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

fn main() -> Result<(), granucount::Error> {
    let mut job = GenerationJob::new(77);
    job.image_size = (128, 128);
    job.counts = BTreeMap::from([
        (LevelTag::L1, LevelCounts { train_normal: 0, train_dense: 0, test_a: 4, test_b: 4 }),
        (LevelTag::L3, LevelCounts { train_normal: 0, train_dense: 0, test_a: 4, test_b: 4 }),
    ]);
    let out = Path::new("evaluate_predictions_out");
    cmd_generate(&job, out)?;

    // the oracle scores zero by construction
    let report = cmd_eval(out, PredictionSource::Baseline(Baseline::Oracle), MissingPolicy::Error)?;
    println!("oracle  : MAE {:.3}, RMSE {:.3}", report.overall.mae, report.overall.rmse);

    // the naive count-everything baseline errs by the distractor group size
    let report = cmd_eval(out, PredictionSource::Baseline(Baseline::Naive), MissingPolicy::Error)?;
    println!("naive   : MAE {:.3}, RMSE {:.3}", report.overall.mae, report.overall.rmse);

    // a prediction file: always answer 5, and skip every third query
    let queries = load_queries(out)?;
    let mut jsonl = String::new();
    for (i, q) in queries.iter().enumerate() {
        if i % 3 != 2 {
            jsonl.push_str(&format!("{{\"query_id\": \"{}\", \"count\": 5}}\n", q.query_id));
        }
    }
    let preds = out.join("always_five.jsonl");
    fs::write(&preds, jsonl)?;
    let report = cmd_eval(out, PredictionSource::File(&preds), MissingPolicy::CountZero)?;
    println!(
        "always 5: MAE {:.3}, RMSE {:.3} ({} missing, coverage {:.0}%)",
        report.overall.mae,
        report.overall.rmse,
        report.missing,
        report.coverage * 100.0
    );
    for (level, m) in &report.per_level {
        println!("  {:7}: {} queries, MAE {:.3}", level.as_str(), m.queries, m.mae);
    }
    Ok(())
}
