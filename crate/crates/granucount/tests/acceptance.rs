//! End-to-end acceptance gate. Each test covers one release criterion,
//! re-derives its expectations independently of the library internals where
//! possible, and prints a single PASS line on success.

use granucount::eval::{evaluate, mae, oracle_predictor, rmse, MissingPolicy};
use granucount::levels::{
    compose_recipe, CountQuery, LevelTag, SceneConfig, SceneRecipe,
};
use granucount::math::{vec3, Vec3};
use granucount::pipeline::{
    cmd_generate, cmd_stats, derive_bank_and_splits, DatasetManifest, GenerationJob,
    LevelCounts,
};
use granucount::profiles::{draw_with_seed, ConfigProfile};
use granucount::qa::{
    perturbation_edit, reference_inspector, run_edit_filter_loop, FailureReason,
    FaultKind, FaultSpec, InspectorTolerances, PerturbationEditor, QaSample,
    ReferenceInspector,
};
use granucount::render::{
    decode_rle, derive_annotations, encode_rle, read_pgm16, render,
};
use granucount::rng::{derived_stream, stream};
use granucount::scene::{place_objects, sample_camera, CameraPose};
use granucount::splits::{CategorySplit, Split, SplitAssignment};
use granucount::taxonomy::AssetBank;
use rand::Rng;
use rayon::prelude::*;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

// ---------------------------------------------------------------------------
// shared full-shape dataset (generated once, reused by several criteria)
// ---------------------------------------------------------------------------

struct SharedDataset {
    dir: tempfile::TempDir,
    job: GenerationJob,
    manifest: DatasetManifest,
    queries: Vec<CountQuery>,
    elapsed: Duration,
}

static DATASET: OnceLock<SharedDataset> = OnceLock::new();

fn dataset() -> &'static SharedDataset {
    DATASET.get_or_init(|| {
        let dir = tempfile::tempdir().expect("tempdir");
        let job = GenerationJob::new(2026);
        let started = Instant::now();
        let manifest = cmd_generate(&job, dir.path()).expect("generation succeeds");
        let elapsed = started.elapsed();
        let queries =
            granucount::pipeline::load_queries(dir.path()).expect("queries readable");
        SharedDataset { dir, job, manifest, queries, elapsed }
    })
}

#[test]
fn criterion_1_shape_reproduction() {
    let ds = dataset();
    assert!(
        ds.elapsed < Duration::from_secs(600),
        "generation took {:?}",
        ds.elapsed
    );
    let budget = (ds.job.total_scenes() as f64 * 0.05).floor() as usize;
    assert!(
        ds.manifest.failures.len() <= budget,
        "{} failures over budget {budget}",
        ds.manifest.failures.len()
    );

    // per-bucket scene counts from the manifest itself
    let mut buckets: BTreeMap<(LevelTag, Split, SceneConfig), usize> = BTreeMap::new();
    for s in &ds.manifest.scenes {
        *buckets.entry((s.level, s.split, s.config)).or_insert(0) += 1;
    }
    let failed_total = ds.manifest.failures.len();
    for (&level, counts) in &ds.job.counts {
        let expect = [
            (Split::Train, SceneConfig::Normal, counts.train_normal),
            (Split::Train, SceneConfig::Dense, counts.train_dense),
            (Split::TestA, SceneConfig::Normal, counts.test_a),
            (Split::TestB, SceneConfig::Normal, counts.test_b),
        ];
        for (split, config, want) in expect {
            let got = buckets.get(&(level, split, config)).copied().unwrap_or(0);
            assert!(
                got + failed_total >= want && got <= want,
                "{} {} {}: {got} scenes, wanted {want}",
                level.as_str(),
                split.as_str(),
                config.as_str()
            );
        }
    }
    println!(
        "ACCEPTANCE 1 shape-reproduction: PASS ({} scenes in {:.1}s, {} failures)",
        ds.manifest.scenes.len(),
        ds.elapsed.as_secs_f64(),
        failed_total
    );
}

#[test]
fn criterion_2_query_arithmetic() {
    let ds = dataset();
    // expected total recomputed from the per-level scene counts that
    // actually landed on disk: one query per single-group scene, two others
    let mut n_l1 = 0u64;
    let mut n_rest = 0u64;
    for s in &ds.manifest.scenes {
        if s.level == LevelTag::L1 {
            n_l1 += 1;
        } else {
            n_rest += 1;
        }
    }
    let expected = n_l1 + 2 * n_rest;
    assert_eq!(ds.manifest.query_count, expected, "manifest query count");
    assert_eq!(ds.queries.len() as u64, expected, "queries.jsonl length");
    println!(
        "ACCEPTANCE 2 query-arithmetic: PASS ({n_l1} + 2*{n_rest} = {expected} queries, zero tolerance)"
    );
}

// ---------------------------------------------------------------------------
// criterion 3: independently written recipe validator
// ---------------------------------------------------------------------------

/// A from-scratch re-statement of what each level means; shares nothing
/// with the library's own recipe validator.
fn independent_violations(
    recipe: &SceneRecipe,
    bank: &AssetBank,
    splits: &SplitAssignment,
) -> Vec<String> {
    let mut v = Vec::new();
    let t = &recipe.target;
    let d = recipe.distractor.as_ref();

    if recipe.total_count() > 250 {
        v.push("over instance cap".into());
    }
    if (recipe.level == LevelTag::L1) != d.is_none() {
        v.push("wrong group arity for level".into());
    }
    for g in recipe.groups() {
        if g.count == 0 {
            v.push("empty group".into());
        }
        let want_cat_split = match recipe.split {
            Split::TestB => CategorySplit::TestBOnly,
            _ => CategorySplit::TrainSeen,
        };
        if splits.category_split.get(&g.category_id) != Some(&want_cat_split) {
            v.push(format!("category {} on wrong split", g.category_id));
        }
        for ty in &g.instance_type_ids {
            if bank.instance_types.get(ty).map(|t| &t.category_id) != Some(&g.category_id) {
                v.push(format!("type {ty} outside category {}", g.category_id));
            }
        }
        let role = g.role;
        let choices = recipe.asset_choices.get(&role).cloned().unwrap_or_default();
        if choices.len() != g.count {
            v.push(format!("{} choices for count {}", choices.len(), g.count));
        }
        for a in &choices {
            match bank.assets.get(a) {
                None => v.push(format!("unknown asset {a}")),
                Some(asset) => {
                    if !g.instance_type_ids.contains(&asset.instance_type_id) {
                        v.push(format!("asset {a} of foreign type"));
                    }
                }
            }
            if splits.asset_split.get(a) != Some(&recipe.split) {
                v.push(format!("asset {a} leaks across splits"));
            }
        }
        if recipe.level == LevelTag::L5 {
            if g.instance_type_ids.len() < 2 {
                v.push("concept group with one instance type".into());
            }
            if g.count < g.instance_type_ids.len() {
                v.push("concept group cannot realize all its types".into());
            }
        } else if g.instance_type_ids.len() != 1 {
            v.push("non-concept group must use exactly one type".into());
        }
    }

    if let Some(d) = d {
        let same_cat = t.category_id == d.category_id;
        let same_type = t.instance_type_ids == d.instance_type_ids;
        let same_size = t.size_mode == d.size_mode;
        let same_color = t.color == d.color;
        let same_super = bank
            .categories
            .get(&t.category_id)
            .map(|c| &c.super_category_id)
            == bank.categories.get(&d.category_id).map(|c| &c.super_category_id);
        let ok = match recipe.level {
            LevelTag::L1 => false,
            LevelTag::L2Size => same_cat && same_type && same_color && !same_size,
            LevelTag::L2Color => same_cat && same_type && same_size && !same_color,
            LevelTag::L3 | LevelTag::L5 => {
                !same_cat && same_super && same_size && same_color
            }
            LevelTag::L4 => {
                same_cat
                    && same_size
                    && same_color
                    && t.instance_type_ids.is_disjoint(&d.instance_type_ids)
            }
        };
        if !ok {
            v.push(format!("groups do not contrast as {} requires", recipe.level.as_str()));
        }
    }
    v
}

#[test]
fn criterion_3_level_validity() {
    let job = GenerationJob::new(555);
    let (bank, splits) = derive_bank_and_splits(&job).unwrap();
    let profile = ConfigProfile::builtin_default();
    let per_level = 1000usize;
    for level in LevelTag::ALL {
        let bad: usize = (0..per_level)
            .into_par_iter()
            .map(|i| {
                let split = [Split::Train, Split::TestA, Split::TestB][i % 3];
                let config = if i % 5 == 0 { SceneConfig::Dense } else { SceneConfig::Normal };
                let mut rng = derived_stream(777, level.as_str(), i as u64);
                let recipe =
                    compose_recipe(level, &bank, &splits, split, config, &profile, &mut rng)
                        .expect("recipe composes");
                let violations = independent_violations(&recipe, &bank, &splits);
                assert!(violations.is_empty(), "{}: {violations:?}", level.as_str());
                0usize
            })
            .sum();
        assert_eq!(bad, 0);
    }
    println!(
        "ACCEPTANCE 3 level-validity: PASS (6 x {per_level} recipes, independent validator, 100%)"
    );
}

#[test]
fn criterion_4_cap_and_splits() {
    let job = GenerationJob::new(808);
    let (bank, splits) = derive_bank_and_splits(&job).unwrap();
    let profile = ConfigProfile::builtin_default();
    let total = 10_000usize;

    struct Usage {
        max_instances: usize,
        categories: BTreeMap<Split, BTreeSet<String>>,
        assets: BTreeMap<Split, BTreeSet<String>>,
    }
    let usage = (0..total)
        .into_par_iter()
        .map(|i| {
            let level = LevelTag::ALL[i % 6];
            let split = [Split::Train, Split::TestA, Split::TestB][(i / 6) % 3];
            let config = if i % 5 == 0 { SceneConfig::Dense } else { SceneConfig::Normal };
            // resample placement-rejected draws like the pipeline would
            let scene = (0..10u64)
                .find_map(|retry| {
                    let mut rng = derived_stream(909, "cap", i as u64 * 10 + retry);
                    let recipe = compose_recipe(
                        level, &bank, &splits, split, config, &profile, &mut rng,
                    )
                    .ok()?;
                    let draw = draw_with_seed(
                        &match config {
                            SceneConfig::Normal => profile.clone(),
                            SceneConfig::Dense => {
                                granucount::profiles::dense_variant(&profile).unwrap()
                            }
                        },
                        recipe.profile_draw_seed,
                    );
                    place_objects(
                        &recipe,
                        &bank,
                        &splits,
                        &draw,
                        &mut stream(recipe.scene_seed),
                    )
                    .ok()
                })
                .expect("a scene graph within ten draws");
            let mut categories = BTreeMap::new();
            let mut assets = BTreeMap::new();
            let cat_set: &mut BTreeSet<String> =
                categories.entry(split).or_insert_with(BTreeSet::new);
            let asset_set: &mut BTreeSet<String> =
                assets.entry(split).or_insert_with(BTreeSet::new);
            for inst in &scene.instances {
                cat_set.insert(inst.meta.category_id.to_string());
                asset_set.insert(inst.asset_id.to_string());
            }
            Usage { max_instances: scene.instances.len(), categories, assets }
        })
        .reduce(
            || Usage {
                max_instances: 0,
                categories: BTreeMap::new(),
                assets: BTreeMap::new(),
            },
            |mut a, b| {
                a.max_instances = a.max_instances.max(b.max_instances);
                for (k, set) in b.categories {
                    a.categories.entry(k).or_default().extend(set);
                }
                for (k, set) in b.assets {
                    a.assets.entry(k).or_default().extend(set);
                }
                a
            },
        );

    assert!(usage.max_instances <= 250, "cap broken: {}", usage.max_instances);
    let empty = BTreeSet::new();
    let train_cats = usage.categories.get(&Split::Train).unwrap_or(&empty);
    let testb_cats = usage.categories.get(&Split::TestB).unwrap_or(&empty);
    let testa_cats = usage.categories.get(&Split::TestA).unwrap_or(&empty);
    assert!(
        train_cats.is_disjoint(testb_cats),
        "unseen-category split leaks into training"
    );
    for c in testa_cats {
        assert!(
            train_cats.contains(c),
            "unseen-asset split uses category {c} never trained on"
        );
    }
    let train_assets = usage.assets.get(&Split::Train).unwrap_or(&empty);
    let testa_assets = usage.assets.get(&Split::TestA).unwrap_or(&empty);
    assert!(
        train_assets.is_disjoint(testa_assets),
        "unseen-asset split shares assets with training"
    );
    println!(
        "ACCEPTANCE 4 cap-and-splits: PASS ({total} scene graphs, max {} instances, splits exact)",
        usage.max_instances
    );
}

#[test]
fn criterion_5_metric_fidelity() {
    // 1e5 random pairs against a plain-f64 second accumulator
    let mut rng = stream(4242);
    let errs: Vec<f64> = (0..100_000)
        .map(|_| rng.gen_range(0.0..250.0) - rng.gen_range(0.0..250.0))
        .collect();
    let (mut abs_sum, mut sq_sum) = (0.0f64, 0.0f64);
    for e in &errs {
        abs_sum += e.abs();
        sq_sum += e * e;
    }
    let n = errs.len() as f64;
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-30);
    assert!(rel(mae(errs.iter().copied()), abs_sum / n) < 1e-12);
    assert!(rel(rmse(errs.iter().copied()), (sq_sum / n).sqrt()) < 1e-12);

    // RMSE >= MAE on random subsets (Jensen)
    for k in 0..200 {
        let lo = (k * 411) % 90_000;
        let chunk = &errs[lo..lo + 137];
        assert!(rmse(chunk.iter().copied()) + 1e-12 >= mae(chunk.iter().copied()));
    }

    // hand example: a single-group query off by 6 counts twice, a two-group
    // query off by 0 counts once, so the overall MAE is (6+6+0)/3 = 4
    let mk = |id: &str, level: LevelTag, gt: u64| CountQuery {
        query_id: id.into(),
        scene_id: format!("{id}s"),
        level,
        positive_text: "x".into(),
        negative_text: level.has_distractor().then(|| "y".into()),
        positive_exemplars: None,
        negative_exemplars: None,
        gt_count: gt,
    };
    let queries = vec![mk("a", LevelTag::L1, 10), mk("b", LevelTag::L3, 5)];
    let preds = BTreeMap::from([("a".to_string(), 16.0), ("b".to_string(), 5.0)]);
    let report = evaluate(&queries, &preds, MissingPolicy::Error).unwrap();
    assert!(
        (report.overall.mae - 4.0).abs() < 1e-15,
        "single-group double weight broken: {}",
        report.overall.mae
    );
    println!("ACCEPTANCE 5 metric-fidelity: PASS (1e-12 agreement, RMSE>=MAE, hand example 4.0)");
}

#[test]
fn criterion_6_predictor_sanity() {
    let ds = dataset();
    let oracle = oracle_predictor(&ds.queries);
    let report = evaluate(&ds.queries, &oracle, MissingPolicy::Error).unwrap();
    for (level, m) in &report.per_level {
        assert_eq!(m.mae, 0.0, "oracle MAE nonzero at {}", level.as_str());
        assert_eq!(m.rmse, 0.0, "oracle RMSE nonzero at {}", level.as_str());
    }
    assert_eq!(report.overall.mae, 0.0);

    // the count-everything baseline's error on a two-category query is the
    // other group's size; recompute that mean independently from the query
    // pairs themselves
    let totals: BTreeMap<String, u64> = ds
        .manifest
        .scenes
        .iter()
        .map(|s| (s.scene_id.clone(), s.total_instances as u64))
        .collect();
    let naive =
        granucount::eval::naive_all_objects_predictor(&ds.queries, &totals).unwrap();
    let report = evaluate(&ds.queries, &naive, MissingPolicy::Error).unwrap();

    let mut gt_by_scene: BTreeMap<&str, Vec<u64>> = BTreeMap::new();
    for q in ds.queries.iter().filter(|q| q.level == LevelTag::L3) {
        gt_by_scene.entry(q.scene_id.as_str()).or_default().push(q.gt_count);
    }
    let mut other_sizes = Vec::new();
    for gts in gt_by_scene.values() {
        assert_eq!(gts.len(), 2);
        other_sizes.push(gts[1] as f64); // error scoring query 0
        other_sizes.push(gts[0] as f64); // error scoring query 1
    }
    let expected = other_sizes.iter().sum::<f64>() / other_sizes.len() as f64;
    let got = report.per_level[&LevelTag::L3].mae;
    assert!(
        (got - expected).abs() < 1e-9,
        "naive L3 MAE {got} vs mean distractor size {expected}"
    );
    println!(
        "ACCEPTANCE 6 predictor-sanity: PASS (oracle all-zero, naive L3 MAE {got:.4} = mean other-group size)"
    );
}

#[test]
fn criterion_7_renderer_correctness() {
    let ds = dataset();
    // mask partition and bbox tightness on a sample of scenes read back
    // from disk
    let mut checked = 0;
    for record in ds.manifest.scenes.iter().step_by(37) {
        let dir = ds
            .dir
            .path()
            .join(record.level.as_str())
            .join(record.split.as_str())
            .join(&record.scene_id);
        let id_map = read_pgm16(&dir.join("ids.pgm")).unwrap();
        let annotations: granucount::render::AnnotationSet =
            serde_json::from_str(&std::fs::read_to_string(dir.join("annotations.json")).unwrap())
                .unwrap();
        let mut covered = 0u64;
        for a in &annotations.instances {
            let mask: Vec<bool> =
                id_map.ids.iter().map(|&id| id == a.instance_id).collect();
            let count = mask.iter().filter(|&&b| b).count() as u64;
            assert_eq!(count, a.pixel_count as u64, "pixel count mismatch");
            covered += count;
            assert_eq!(
                decode_rle(&a.mask_rle, id_map.width, id_map.height).unwrap(),
                mask,
                "stored RLE disagrees with the id map"
            );
            let (mut xmin, mut ymin, mut xmax, mut ymax) = (u32::MAX, u32::MAX, 0, 0);
            for (i, &bit) in mask.iter().enumerate() {
                if bit {
                    let (x, y) = (i as u32 % id_map.width, i as u32 / id_map.width);
                    xmin = xmin.min(x);
                    ymin = ymin.min(y);
                    xmax = xmax.max(x);
                    ymax = ymax.max(y);
                }
            }
            assert_eq!(
                (a.bbox2d.xmin, a.bbox2d.ymin, a.bbox2d.xmax, a.bbox2d.ymax),
                (xmin, ymin, xmax, ymax),
                "bbox not tight"
            );
        }
        let background = id_map.ids.iter().filter(|&&id| id == 0).count() as u64;
        assert_eq!(
            covered + background,
            id_map.width as u64 * id_map.height as u64,
            "mask partition broken"
        );
        checked += 1;
    }
    assert!(checked >= 20, "sampled too few scenes: {checked}");

    // projected corners of a known cube against a standalone pinhole oracle
    let camera = CameraPose {
        eye: vec3(0.0, 2.0, 5.0),
        look_at: Vec3::ZERO,
        focal_length: 50.0,
        image_size: (512, 512),
    };
    let oracle = |p: Vec3| -> (f64, f64) {
        // independent basis construction: Gram-Schmidt on forward and Y-up
        let f = (camera.look_at - camera.eye).normalized();
        let up0 = vec3(0.0, 1.0, 0.0);
        let u = (up0 - f * up0.dot(f)).normalized();
        let r = f.cross(u).normalized();
        let d = p - camera.eye;
        let z = d.dot(f);
        let fpx = 50.0 * 512.0 / 36.0;
        (256.0 + fpx * d.dot(r) / z, 256.0 - fpx * d.dot(u) / z)
    };
    for sx in [-0.5, 0.5] {
        for sy in [-0.5, 0.5] {
            for sz in [-0.5, 0.5] {
                let p = vec3(sx, sy, sz);
                let (px, py, _) = camera.project(p).expect("in front of camera");
                let (ox, oy) = oracle(p);
                assert!(
                    (px - ox).abs() <= 0.5 && (py - oy).abs() <= 0.5,
                    "cube corner {p:?}: ({px}, {py}) vs oracle ({ox}, {oy})"
                );
            }
        }
    }

    // RLE round trip on 1e4 random masks
    let mut rng = stream(31337);
    for _ in 0..10_000 {
        let w = rng.gen_range(1..40u32);
        let h = rng.gen_range(1..40u32);
        let fill = rng.gen_range(0.05..0.95);
        let mask: Vec<bool> = (0..w * h).map(|_| rng.gen_bool(fill)).collect();
        let rle = encode_rle(&mask);
        assert_eq!(decode_rle(&rle, w, h).unwrap(), mask);
    }
    println!(
        "ACCEPTANCE 7 renderer-correctness: PASS ({checked} scenes partition-exact, cube oracle <=0.5px, 1e4 RLE round trips)"
    );
}

#[test]
fn criterion_8_qa_loop() {
    // a few rendered prototypes to perturb
    let job = GenerationJob::new(616);
    let (bank, splits) = derive_bank_and_splits(&job).unwrap();
    let profile = ConfigProfile::builtin_default();
    let mut bases = Vec::new();
    let mut attempt = 0u64;
    while bases.len() < 3 {
        attempt += 1;
        let recipe = compose_recipe(
            LevelTag::L2Color,
            &bank,
            &splits,
            Split::Train,
            SceneConfig::Normal,
            &profile,
            &mut derived_stream(616, "qa", attempt),
        )
        .unwrap();
        let draw = draw_with_seed(&profile, recipe.profile_draw_seed);
        let scene =
            place_objects(&recipe, &bank, &splits, &draw, &mut stream(recipe.scene_seed))
                .unwrap();
        let Ok(camera) = sample_camera(
            &scene,
            &draw,
            (160, 160),
            &mut derived_stream(recipe.scene_seed, "camera", 0),
        ) else {
            continue;
        };
        let (image, id_map) = render(&scene, &camera);
        if derive_annotations(&scene, &id_map).is_err() {
            continue;
        }
        bases.push(QaSample::from_scene(format!("base{}", bases.len()), &scene, image, id_map));
    }

    // 100% recall on erasures and insertions, with the reason codes named
    let tol = InspectorTolerances::default();
    let mut recall_checked = 0;
    for base in &bases {
        for &id in base.instance_colors.keys() {
            let edited = perturbation_edit(
                base,
                FaultSpec { kind: FaultKind::Erase, instance: Some(id) },
                &mut stream(id as u64),
            )
            .unwrap();
            let verdict = reference_inspector(base, &edited, &tol);
            assert!(
                !verdict.pass && verdict.reasons.contains(&FailureReason::CountChange),
                "erase recall miss on instance {id}"
            );
            recall_checked += 1;
        }
        for round in 0..10u64 {
            let edited = perturbation_edit(
                base,
                FaultSpec { kind: FaultKind::Insert, instance: None },
                &mut stream(round),
            )
            .unwrap();
            let verdict = reference_inspector(base, &edited, &tol);
            assert!(
                !verdict.pass
                    && verdict.reasons.contains(&FailureReason::BackgroundHallucination),
                "insert recall miss"
            );
            recall_checked += 1;
        }
    }

    // independent 20%-per-pass fault injection across three iterations:
    // expected survivor rate 0.2^3 = 0.8%, checked within 3 sigma binomial
    let n = 1000usize;
    let samples: Vec<QaSample> = (0..n)
        .map(|i| {
            let mut s = bases[i % bases.len()].clone();
            s.id = format!("clone{i:04}");
            s
        })
        .collect();
    let editor = PerturbationEditor { seed: 2718, fault_rate: 0.2 };
    let (_, report) = run_edit_filter_loop(&samples, &editor, &ReferenceInspector::default(), 3);
    assert!(report.quarantined.is_empty(), "{:?}", report.quarantined);
    for w in report.iterations.windows(2) {
        assert!(
            w[1].submitted <= w[0].failed,
            "failing set grew: {:?} -> {:?}",
            w[0],
            w[1]
        );
    }
    let p = 0.2f64.powi(3);
    let sigma = (n as f64 * p * (1.0 - p)).sqrt();
    let bound = n as f64 * p + 3.0 * sigma;
    let rejected = report.discarded.len() as f64;
    assert!(
        rejected <= bound,
        "{rejected} rejections of {n}, above mean {:.1} + 3 sigma",
        n as f64 * p
    );
    println!(
        "ACCEPTANCE 8 qa-loop: PASS ({recall_checked} fault recalls, {rejected}/{n} final rejections <= {bound:.1})"
    );
}

#[test]
fn criterion_9_determinism() {
    let mut job = GenerationJob::new(99);
    job.image_size = (96, 96);
    job.counts = BTreeMap::from([
        (
            LevelTag::L1,
            LevelCounts { train_normal: 3, train_dense: 1, test_a: 1, test_b: 1 },
        ),
        (
            LevelTag::L4,
            LevelCounts { train_normal: 3, train_dense: 1, test_a: 1, test_b: 1 },
        ),
    ]);
    let mut hashes = Vec::new();
    for threads in [1usize, 4, 4] {
        let dir = tempfile::tempdir().unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let manifest = pool.install(|| cmd_generate(&job, dir.path())).unwrap();
        // hash check also covers queries.jsonl through the embedded digest
        assert_eq!(manifest.compute_hash().unwrap(), manifest.content_hash);
        hashes.push(manifest.content_hash);
    }
    assert_eq!(hashes[0], hashes[1], "hash differs across worker counts");
    assert_eq!(hashes[1], hashes[2], "hash differs across repeated runs");
    println!("ACCEPTANCE 9 determinism: PASS (hash {} stable across runs and worker counts)", &hashes[0][..12]);
}

#[test]
fn stats_report_reflects_shared_dataset() {
    let ds = dataset();
    let stats = cmd_stats(ds.dir.path()).unwrap();
    assert!(stats.max_instances <= 250);
    assert_eq!(stats.queries_total, ds.manifest.query_count);
    // single-group scenes mint one query each, all others two
    for (level, n) in &stats.queries_per_level {
        let scenes: u64 = ds
            .manifest
            .scenes
            .iter()
            .filter(|s| s.level == *level)
            .count() as u64;
        let factor = if *level == LevelTag::L1 { 1 } else { 2 };
        assert_eq!(*n, scenes * factor);
    }
}
