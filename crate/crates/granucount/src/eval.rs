//! Count-accuracy scoring and baseline predictors.
//!
//! Metrics are MAE and RMSE per level and overall. Single-group scenes
//! yield one query while every two-group scene yields two, so the overall
//! aggregate counts each single-group error twice to keep the per-level
//! contributions comparable.

use crate::error::{Error, Result};
use crate::levels::{CountQuery, LevelTag};
use crate::render::Box2D;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Kahan-compensated running sum; keeps long accumulations exact enough to
/// compare against independent oracles at 1e-12 relative error.
#[derive(Debug, Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }
}

pub fn mae(errors: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = Kahan::default();
    let mut n = 0u64;
    for e in errors {
        acc.add(e.abs());
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        acc.sum / n as f64
    }
}

pub fn rmse(errors: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = Kahan::default();
    let mut n = 0u64;
    for e in errors {
        acc.add(e * e);
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        (acc.sum / n as f64).sqrt()
    }
}

/// What to do with a query that has no prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MissingPolicy {
    /// Fail the evaluation.
    Error,
    /// Score the query as a prediction of zero.
    CountZero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelMetrics {
    pub queries: u64,
    pub mae: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_level: BTreeMap<LevelTag, LevelMetrics>,
    /// Aggregate over all queries with single-group queries weighted twice.
    pub overall: LevelMetrics,
    /// Fraction of queries that had a prediction.
    pub coverage: f64,
    pub missing: u64,
}

fn weight(level: LevelTag) -> u64 {
    if level == LevelTag::L1 {
        2
    } else {
        1
    }
}

/// Score `predictions` against the ground-truth counts in `queries`.
pub fn evaluate(
    queries: &[CountQuery],
    predictions: &BTreeMap<String, f64>,
    missing: MissingPolicy,
) -> Result<EvalReport> {
    let mut seen = BTreeSet::new();
    for q in queries {
        if !seen.insert(q.query_id.as_str()) {
            return Err(Error::Eval(format!("duplicate query id '{}'", q.query_id)));
        }
    }
    for id in predictions.keys() {
        if !seen.contains(id.as_str()) {
            return Err(Error::Eval(format!(
                "prediction for unknown query id '{id}'"
            )));
        }
    }

    struct Acc {
        n: u64,
        abs: Kahan,
        sq: Kahan,
    }
    impl Acc {
        fn new() -> Acc {
            Acc { n: 0, abs: Kahan::default(), sq: Kahan::default() }
        }
        fn add(&mut self, err: f64, w: u64) {
            for _ in 0..w {
                self.abs.add(err.abs());
                self.sq.add(err * err);
                self.n += 1;
            }
        }
        fn metrics(&self, queries: u64) -> LevelMetrics {
            LevelMetrics {
                queries,
                mae: if self.n == 0 { 0.0 } else { self.abs.sum / self.n as f64 },
                rmse: if self.n == 0 {
                    0.0
                } else {
                    (self.sq.sum / self.n as f64).sqrt()
                },
            }
        }
    }

    let mut per_level: BTreeMap<LevelTag, Acc> = BTreeMap::new();
    let mut level_counts: BTreeMap<LevelTag, u64> = BTreeMap::new();
    let mut overall = Acc::new();
    let mut missing_n = 0u64;
    for q in queries {
        let pred = match predictions.get(&q.query_id) {
            Some(p) => *p,
            None => match missing {
                MissingPolicy::Error => {
                    return Err(Error::Eval(format!(
                        "no prediction for query '{}'",
                        q.query_id
                    )))
                }
                MissingPolicy::CountZero => {
                    missing_n += 1;
                    0.0
                }
            },
        };
        let err = pred - q.gt_count as f64;
        per_level.entry(q.level).or_insert_with(Acc::new).add(err, 1);
        *level_counts.entry(q.level).or_insert(0) += 1;
        overall.add(err, weight(q.level));
    }

    Ok(EvalReport {
        per_level: per_level
            .iter()
            .map(|(l, a)| (*l, a.metrics(level_counts[l])))
            .collect(),
        overall: overall.metrics(queries.len() as u64),
        coverage: if queries.is_empty() {
            1.0
        } else {
            1.0 - missing_n as f64 / queries.len() as f64
        },
        missing: missing_n,
    })
}

// ---------------------------------------------------------------------------
// baselines
// ---------------------------------------------------------------------------

/// Predicts the ground-truth count for every query. Scores exactly zero;
/// useful as a pipeline sanity check.
pub fn oracle_predictor(queries: &[CountQuery]) -> BTreeMap<String, f64> {
    queries
        .iter()
        .map(|q| (q.query_id.clone(), q.gt_count as f64))
        .collect()
}

/// Predicts the total object count of the whole scene for every query,
/// ignoring the query text. `scene_totals` maps scene id to that total.
/// On two-group scenes its error against either group equals the size of
/// the other group.
pub fn naive_all_objects_predictor(
    queries: &[CountQuery],
    scene_totals: &BTreeMap<String, u64>,
) -> Result<BTreeMap<String, f64>> {
    queries
        .iter()
        .map(|q| {
            let total = scene_totals.get(&q.scene_id).ok_or_else(|| {
                Error::Eval(format!("no scene total for '{}'", q.scene_id))
            })?;
            Ok((q.query_id.clone(), *total as f64))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// prompt emission
// ---------------------------------------------------------------------------

fn format_box(b: &Box2D) -> String {
    format!("[{}, {}, {}, {}]", b.xmin, b.ymin, b.xmax, b.ymax)
}

const OUTPUT_RULES: &str = "Directly output the total number as an integer only. \
Do not output any other words. If unsure, guess a number.";

/// Render the text prompt a vision-language counter receives for `query`.
///
/// Single-group queries name the category; queries with a distractor add an
/// exclusion clause; type-discrimination queries describe the two instance
/// types through one exemplar box each instead of by name, since both types
/// share the category name.
pub fn emit_prompt(query: &CountQuery) -> Result<String> {
    match query.level {
        LevelTag::L1 => Ok(format!(
            "Please count all objects of category '{}' in the image. {OUTPUT_RULES}",
            query.positive_text
        )),
        LevelTag::L2Size | LevelTag::L2Color | LevelTag::L3 | LevelTag::L5 => {
            let negative = query.negative_text.as_ref().ok_or_else(|| {
                Error::Eval(format!("query '{}' lacks negative text", query.query_id))
            })?;
            Ok(format!(
                "Please count all objects of category '{}' in the image, \
                 and ignore objects of category '{}'. {OUTPUT_RULES}",
                query.positive_text, negative
            ))
        }
        LevelTag::L4 => {
            let pos = query
                .positive_exemplars
                .as_ref()
                .and_then(|v| v.first())
                .ok_or_else(|| {
                    Error::Eval(format!(
                        "query '{}' lacks a positive exemplar box",
                        query.query_id
                    ))
                })?;
            let neg = query
                .negative_exemplars
                .as_ref()
                .and_then(|v| v.first())
                .ok_or_else(|| {
                    Error::Eval(format!(
                        "query '{}' lacks a negative exemplar box",
                        query.query_id
                    ))
                })?;
            // positive_text is "variant <type token> <category name>"; both
            // groups share the category, so the prompt names only that
            let category = query
                .positive_text
                .splitn(3, ' ')
                .nth(2)
                .ok_or_else(|| {
                    Error::Eval(format!(
                        "query '{}' has malformed positive text '{}'",
                        query.query_id, query.positive_text
                    ))
                })?;
            Ok(format!(
                "In the image there are two different types of objects that share \
                 the same category name '{category}'. Type A has an example bounding \
                 box {}. Type B has an example bounding box {}. Please count ONLY \
                 Type A objects and ignore Type B objects. {OUTPUT_RULES}",
                format_box(pos),
                format_box(neg)
            ))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn query(id: &str, level: LevelTag, gt: u64) -> CountQuery {
        CountQuery {
            query_id: id.into(),
            scene_id: format!("{id}-scene"),
            level,
            positive_text: "mug".into(),
            negative_text: level.has_distractor().then(|| "bottle".into()),
            positive_exemplars: None,
            negative_exemplars: None,
            gt_count: gt,
        }
    }

    #[test]
    fn mae_rmse_match_direct_formulas() {
        let errs = [3.0, -1.0, 0.0, 2.0];
        assert!((mae(errs) - 1.5).abs() < 1e-12);
        assert!((rmse(errs) - (14.0f64 / 4.0).sqrt()).abs() < 1e-12);
        assert_eq!(mae([]), 0.0);
        assert_eq!(rmse([]), 0.0);
    }

    #[test]
    fn rmse_never_below_mae() {
        use rand::Rng;
        let mut rng = crate::rng::stream(7);
        for _ in 0..200 {
            let errs: Vec<f64> =
                (0..rng.gen_range(1..40)).map(|_| rng.gen_range(-50.0..50.0)).collect();
            assert!(rmse(errs.iter().copied()) + 1e-12 >= mae(errs.iter().copied()));
        }
    }

    #[test]
    fn single_group_errors_count_twice_overall() {
        // hand-checked: single-group error 6 (weighted twice) plus two
        // exact two-group queries gives overall MAE (6+6+0+0)/4 = 3
        let queries = vec![
            query("a", LevelTag::L1, 10),
            query("b", LevelTag::L3, 5),
            query("c", LevelTag::L3, 7),
        ];
        let mut preds = BTreeMap::new();
        preds.insert("a".to_string(), 16.0);
        preds.insert("b".to_string(), 5.0);
        preds.insert("c".to_string(), 7.0);
        let r = evaluate(&queries, &preds, MissingPolicy::Error).unwrap();
        assert!((r.overall.mae - 3.0).abs() < 1e-12);
        assert!((r.overall.rmse - (72.0f64 / 4.0).sqrt()).abs() < 1e-12);
        assert!((r.per_level[&LevelTag::L1].mae - 6.0).abs() < 1e-12);
        assert_eq!(r.per_level[&LevelTag::L3].mae, 0.0);
        assert_eq!(r.overall.queries, 3);
        assert_eq!(r.coverage, 1.0);
    }

    #[test]
    fn missing_policy_branches() {
        let queries = vec![query("a", LevelTag::L1, 4)];
        let preds = BTreeMap::new();
        assert!(matches!(
            evaluate(&queries, &preds, MissingPolicy::Error),
            Err(Error::Eval(_))
        ));
        let r = evaluate(&queries, &preds, MissingPolicy::CountZero).unwrap();
        assert_eq!(r.missing, 1);
        assert_eq!(r.coverage, 0.0);
        assert!((r.overall.mae - 4.0).abs() < 1e-12);
    }

    #[test]
    fn duplicate_and_unknown_ids_are_rejected() {
        let queries = vec![query("a", LevelTag::L1, 1), query("a", LevelTag::L1, 2)];
        assert!(evaluate(&queries, &BTreeMap::new(), MissingPolicy::CountZero).is_err());

        let queries = vec![query("a", LevelTag::L1, 1)];
        let mut preds = BTreeMap::new();
        preds.insert("ghost".to_string(), 1.0);
        assert!(evaluate(&queries, &preds, MissingPolicy::CountZero).is_err());
    }

    #[test]
    fn oracle_scores_zero_and_naive_errs_by_other_group() {
        let queries = vec![
            query("s1#target", LevelTag::L3, 6),
            query("s1#distractor", LevelTag::L3, 9),
        ];
        let mut queries = queries;
        for q in queries.iter_mut() {
            q.scene_id = "s1".into();
        }
        let oracle = oracle_predictor(&queries);
        let r = evaluate(&queries, &oracle, MissingPolicy::Error).unwrap();
        assert_eq!(r.overall.mae, 0.0);
        assert_eq!(r.overall.rmse, 0.0);

        let mut totals = BTreeMap::new();
        totals.insert("s1".to_string(), 15u64);
        let naive = naive_all_objects_predictor(&queries, &totals).unwrap();
        let r = evaluate(&queries, &naive, MissingPolicy::Error).unwrap();
        // predicting 15 against 6 and 9 errs by 9 and 6
        assert!((r.per_level[&LevelTag::L3].mae - 7.5).abs() < 1e-12);
    }

    #[test]
    fn evaluate_matches_independent_accumulator() {
        use rand::Rng;
        let mut rng = crate::rng::stream(11);
        let levels = LevelTag::ALL;
        let mut queries = Vec::new();
        let mut preds = BTreeMap::new();
        for i in 0..5000 {
            let level = levels[rng.gen_range(0..levels.len())];
            let q = query(&format!("q{i}"), level, rng.gen_range(0..60));
            preds.insert(q.query_id.clone(), rng.gen_range(0.0..60.0));
            queries.push(q);
        }
        let r = evaluate(&queries, &preds, MissingPolicy::Error).unwrap();

        // plain f64 recount, duplicating single-group errors
        let mut weighted = Vec::new();
        let mut by_level: BTreeMap<LevelTag, Vec<f64>> = BTreeMap::new();
        for q in &queries {
            let err = preds[&q.query_id] - q.gt_count as f64;
            by_level.entry(q.level).or_default().push(err);
            weighted.push(err);
            if q.level == LevelTag::L1 {
                weighted.push(err);
            }
        }
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-30);
        assert!(rel(r.overall.mae, mae(weighted.iter().copied())) < 1e-12);
        assert!(rel(r.overall.rmse, rmse(weighted.iter().copied())) < 1e-12);
        for (l, errs) in by_level {
            assert!(rel(r.per_level[&l].mae, mae(errs.iter().copied())) < 1e-12);
            assert!(rel(r.per_level[&l].rmse, rmse(errs.iter().copied())) < 1e-12);
        }
    }

    #[test]
    fn prompts_follow_wire_format() {
        let q = query("a", LevelTag::L1, 3);
        assert_eq!(
            emit_prompt(&q).unwrap(),
            "Please count all objects of category 'mug' in the image. Directly \
             output the total number as an integer only. Do not output any other \
             words. If unsure, guess a number."
        );

        let q = query("b", LevelTag::L3, 3);
        assert_eq!(
            emit_prompt(&q).unwrap(),
            "Please count all objects of category 'mug' in the image, and ignore \
             objects of category 'bottle'. Directly output the total number as an \
             integer only. Do not output any other words. If unsure, guess a number."
        );

        let mut q = query("c", LevelTag::L4, 3);
        q.positive_text = "variant t01 mug".into();
        q.negative_text = Some("variant t02 mug".into());
        q.positive_exemplars =
            Some(vec![Box2D { xmin: 10, ymin: 20, xmax: 30, ymax: 40 }]);
        q.negative_exemplars =
            Some(vec![Box2D { xmin: 50, ymin: 60, xmax: 70, ymax: 80 }]);
        assert_eq!(
            emit_prompt(&q).unwrap(),
            "In the image there are two different types of objects that share the \
             same category name 'mug'. Type A has an example bounding box \
             [10, 20, 30, 40]. Type B has an example bounding box [50, 60, 70, 80]. \
             Please count ONLY Type A objects and ignore Type B objects. Directly \
             output the total number as an integer only. Do not output any other \
             words. If unsure, guess a number."
        );

        // missing exemplars or negative text are hard errors
        let q = query("d", LevelTag::L4, 3);
        assert!(emit_prompt(&q).is_err());
        let mut q = query("e", LevelTag::L2Size, 3);
        q.negative_text = None;
        assert!(emit_prompt(&q).is_err());
    }
}
