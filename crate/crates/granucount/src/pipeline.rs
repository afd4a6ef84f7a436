//! Batch orchestration: dataset generation, on-disk layout, validation,
//! statistics, and scoring.
//!
//! Layout under the output root:
//!   <level>/<split>/<scene_id>/{rgb.ppm, ids.pgm, scene.json, annotations.json}
//!   queries.jsonl and manifest.json at the root.
//!
//! The manifest is written last through a temp-file rename, so an
//! interrupted run never leaves a manifest referencing missing files. All
//! per-scene randomness derives from the job seed and the scene's identity,
//! never from scheduling, so output bytes are identical across worker
//! counts.

use crate::error::{Error, Result};
use crate::eval::{
    evaluate, naive_all_objects_predictor, oracle_predictor, EvalReport, MissingPolicy,
};
use crate::levels::{
    compose_recipe_for_category, eligible_categories, predicate_for, queries_for_scene,
    recipe_valid, CountQuery, LevelTag, SceneConfig, SceneRecipe,
};
use crate::profiles::{dense_variant, draw_with_seed, ConfigProfile};
use crate::qa::{run_edit_filter_loop, IdentityEditor, QaSample, ReferenceInspector};
use crate::render::{
    decode_rle, derive_annotations, read_pgm16, render, write_pgm16, write_ppm,
    AnnotationSet, Image, InstanceIdMap,
};
use crate::rng::{derive_seed, derived_stream, stream};
use crate::scene::{enforce_visibility, place_objects, sample_camera, CameraPose, SceneGraph};
use crate::splits::{assign_splits, validate_splits, Split, SplitAssignment};
use crate::taxonomy::{build_bank, AssetBank, CategoryId};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

// ---------------------------------------------------------------------------
// job description
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankParams {
    pub n_super: usize,
    pub cats_per_super: usize,
    pub types_per_cat: usize,
    pub assets_per_type: usize,
    pub n_backgrounds: usize,
}

impl Default for BankParams {
    fn default() -> Self {
        BankParams {
            n_super: 8,
            cats_per_super: 4,
            types_per_cat: 3,
            assets_per_type: 6,
            n_backgrounds: 12,
        }
    }
}

/// Scene counts for one level across the four (split, config) buckets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelCounts {
    pub train_normal: usize,
    pub train_dense: usize,
    pub test_a: usize,
    pub test_b: usize,
}

impl LevelCounts {
    pub fn total(&self) -> usize {
        self.train_normal + self.train_dense + self.test_a + self.test_b
    }

    fn buckets(&self) -> [(Split, SceneConfig, usize); 4] {
        [
            (Split::Train, SceneConfig::Normal, self.train_normal),
            (Split::Train, SceneConfig::Dense, self.train_dense),
            (Split::TestA, SceneConfig::Normal, self.test_a),
            (Split::TestB, SceneConfig::Normal, self.test_b),
        ]
    }
}

/// Per-level counts reproducing the benchmark's level-and-split
/// distribution at 1/100 scale (ceil-rounded), including the roughly 4:1
/// normal-to-dense training mix.
pub fn benchmark_shape_counts() -> BTreeMap<LevelTag, LevelCounts> {
    let c = |tn, td, ta, tb| LevelCounts {
        train_normal: tn,
        train_dense: td,
        test_a: ta,
        test_b: tb,
    };
    BTreeMap::from([
        (LevelTag::L1, c(162, 40, 11, 11)),
        (LevelTag::L2Size, c(76, 24, 6, 6)),
        (LevelTag::L2Color, c(80, 21, 6, 6)),
        (LevelTag::L3, c(154, 36, 11, 10)),
        (LevelTag::L4, c(165, 42, 11, 11)),
        (LevelTag::L5, c(158, 38, 11, 10)),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationJob {
    pub seed: u64,
    pub bank: BankParams,
    pub counts: BTreeMap<LevelTag, LevelCounts>,
    pub profile: ConfigProfile,
    pub image_size: (u32, u32),
    pub asset_holdout: f64,
    pub category_holdout: f64,
    /// Edit-filter iteration budget for the render sanity pass.
    pub qa_iterations: u32,
    /// Resample budget per scene before it counts as failed.
    pub scene_attempts: u32,
    pub min_visible_pixels: u32,
}

impl GenerationJob {
    pub fn new(seed: u64) -> GenerationJob {
        GenerationJob {
            seed,
            bank: BankParams::default(),
            counts: benchmark_shape_counts(),
            profile: ConfigProfile::builtin_default(),
            image_size: (256, 256),
            asset_holdout: 0.10,
            category_holdout: 0.10,
            qa_iterations: 3,
            scene_attempts: 20,
            min_visible_pixels: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.profile.validate()?;
        if self.counts.is_empty() {
            return Err(Error::Pipeline("job selects no levels".into()));
        }
        if self.image_size.0 < 32 || self.image_size.1 < 32 {
            return Err(Error::Pipeline(format!(
                "image size {:?} below 32x32",
                self.image_size
            )));
        }
        if self.scene_attempts == 0 || self.qa_iterations == 0 {
            return Err(Error::Pipeline("attempt budgets must be positive".into()));
        }
        Ok(())
    }

    pub fn total_scenes(&self) -> usize {
        self.counts.values().map(LevelCounts::total).sum()
    }
}

/// Re-derive the asset bank and split assignment a job implies. Generation
/// and validation both call this, so the dataset never needs to store them.
pub fn derive_bank_and_splits(job: &GenerationJob) -> Result<(AssetBank, SplitAssignment)> {
    let bank = build_bank(
        derive_seed(job.seed, "bank", 0),
        job.bank.n_super,
        job.bank.cats_per_super,
        job.bank.types_per_cat,
        job.bank.assets_per_type,
        job.bank.n_backgrounds,
    )?;
    let splits = assign_splits(
        &bank,
        &mut derived_stream(job.seed, "splits", 0),
        job.asset_holdout,
        job.category_holdout,
    )?;
    Ok((bank, splits))
}

// ---------------------------------------------------------------------------
// planning
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenePlan {
    pub scene_id: String,
    pub level: LevelTag,
    pub split: Split,
    pub config: SceneConfig,
    pub category: CategoryId,
    pub seed: u64,
}

/// Expand a job into one plan per scene. Target categories are assigned
/// least-used-first per (level, split) so the long tail stays balanced, and
/// the whole plan depends only on the job, never on execution order.
pub fn plan_scenes(
    job: &GenerationJob,
    bank: &AssetBank,
    splits: &SplitAssignment,
) -> Result<Vec<ScenePlan>> {
    let mut plans = Vec::with_capacity(job.total_scenes());
    for (&level, counts) in &job.counts {
        let mut usage: BTreeMap<(Split, CategoryId), usize> = BTreeMap::new();
        for (split, config, n) in counts.buckets() {
            let eligible = eligible_categories(level, bank, splits, split);
            if eligible.is_empty() && n > 0 {
                return Err(Error::Pipeline(format!(
                    "no eligible categories for {} on split {}",
                    level.as_str(),
                    split.as_str()
                )));
            }
            for index in 0..n {
                let category = eligible
                    .iter()
                    .min_by_key(|c| usage.get(&(split, (*c).clone())).copied().unwrap_or(0))
                    .expect("eligible nonempty")
                    .clone();
                *usage.entry((split, category.clone())).or_insert(0) += 1;
                let scene_id = format!(
                    "{}_{}_{}_{:05}",
                    level.as_str(),
                    split.as_str(),
                    config.as_str(),
                    index
                );
                let seed = derive_seed(job.seed, &format!("scene/{scene_id}"), 0);
                plans.push(ScenePlan { scene_id, level, split, config, category, seed });
            }
        }
    }
    Ok(plans)
}

// ---------------------------------------------------------------------------
// per-scene generation
// ---------------------------------------------------------------------------

/// Everything one scene produces before it is written to disk.
#[derive(Debug, Clone)]
pub struct SceneArtifacts {
    pub recipe: SceneRecipe,
    pub scene: SceneGraph,
    pub camera: CameraPose,
    pub image: Image,
    pub id_map: InstanceIdMap,
    pub annotations: AnnotationSet,
    pub queries: Vec<CountQuery>,
}

/// Contents of a scene directory's scene.json.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDocument {
    pub recipe: SceneRecipe,
    pub scene: SceneGraph,
    pub camera: CameraPose,
}

/// Build one scene end to end, resampling on any stage failure up to the
/// job's attempt budget.
pub fn generate_scene(
    job: &GenerationJob,
    bank: &AssetBank,
    splits: &SplitAssignment,
    plan: &ScenePlan,
) -> Result<SceneArtifacts> {
    let effective = match plan.config {
        SceneConfig::Normal => job.profile.clone(),
        SceneConfig::Dense => dense_variant(&job.profile)?,
    };
    let mut last_err = String::new();
    for attempt in 0..job.scene_attempts {
        let mut rng = derived_stream(plan.seed, "attempt", attempt as u64);
        let step = (|| -> Result<SceneArtifacts> {
            let recipe = compose_recipe_for_category(
                plan.level,
                bank,
                splits,
                plan.split,
                plan.config,
                &job.profile,
                &plan.category,
                &mut rng,
            )?;
            let draw = draw_with_seed(&effective, recipe.profile_draw_seed);
            let scene =
                place_objects(&recipe, bank, splits, &draw, &mut stream(recipe.scene_seed))?;
            let camera = sample_camera(
                &scene,
                &draw,
                job.image_size,
                &mut derived_stream(recipe.scene_seed, "camera", 0),
            )?;
            let (image, id_map) = render(&scene, &camera);
            enforce_visibility(&scene, &id_map, job.min_visible_pixels)?;
            let annotations = derive_annotations(&scene, &id_map)?;
            let sample =
                QaSample::from_scene(&plan.scene_id, &scene, image.clone(), id_map.clone());
            let (_, report) = run_edit_filter_loop(
                std::slice::from_ref(&sample),
                &IdentityEditor,
                &ReferenceInspector::default(),
                job.qa_iterations,
            );
            if report.accepted.len() != 1 {
                return Err(Error::Qa(format!(
                    "render rejected by inspector: {:?}",
                    report.final_reasons.get(&plan.scene_id)
                )));
            }
            let queries = queries_for_scene(bank, &plan.scene_id, &recipe, &annotations)?;
            Ok(SceneArtifacts { recipe, scene, camera, image, id_map, annotations, queries })
        })();
        match step {
            Ok(artifacts) => return Ok(artifacts),
            Err(e) => last_err = e.to_string(),
        }
    }
    Err(Error::Pipeline(format!(
        "scene {} failed after {} attempts: {last_err}",
        plan.scene_id, job.scene_attempts
    )))
}

// ---------------------------------------------------------------------------
// manifest
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub scene_id: String,
    pub level: LevelTag,
    pub split: Split,
    pub config: SceneConfig,
    pub category: CategoryId,
    pub total_instances: usize,
    /// SHA-256 of the recipe's canonical JSON.
    pub recipe_hash: String,
    /// Paths relative to the dataset root.
    pub files: Vec<String>,
    pub query_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneFailure {
    pub scene_id: String,
    pub diagnostic: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub job: GenerationJob,
    pub scenes: Vec<SceneRecord>,
    pub failures: Vec<SceneFailure>,
    pub query_count: u64,
    /// SHA-256 of queries.jsonl bytes.
    pub queries_hash: String,
    /// SHA-256 of this manifest serialized with the field blanked.
    pub content_hash: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string(value)?)
}

impl DatasetManifest {
    /// Hash of the manifest with `content_hash` blanked; stored back into
    /// the field, so validation can recompute and compare.
    pub fn compute_hash(&self) -> Result<String> {
        let mut blank = self.clone();
        blank.content_hash = String::new();
        Ok(sha256_hex(canonical_json(&blank)?.as_bytes()))
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

const MAX_FAILURE_RATE: f64 = 0.05;

/// Generate a dataset under `out`. Scene outputs land before the manifest;
/// the job fails (and no manifest is written) if more than 5% of scenes
/// exhaust their attempt budget.
pub fn cmd_generate(job: &GenerationJob, out: &Path) -> Result<DatasetManifest> {
    job.validate()?;
    let (bank, splits) = derive_bank_and_splits(job)?;
    let plans = plan_scenes(job, &bank, &splits)?;
    fs::create_dir_all(out)?;

    let outcomes: Vec<std::result::Result<(SceneRecord, Vec<CountQuery>), SceneFailure>> =
        plans
            .par_iter()
            .map(|plan| {
                let artifacts = generate_scene(job, &bank, &splits, plan).map_err(|e| {
                    SceneFailure { scene_id: plan.scene_id.clone(), diagnostic: e.to_string() }
                })?;
                write_scene(out, plan, &artifacts)
                    .map_err(|e| SceneFailure {
                        scene_id: plan.scene_id.clone(),
                        diagnostic: e.to_string(),
                    })
                    .map(|record| (record, artifacts.queries))
            })
            .collect();

    let mut scenes = Vec::new();
    let mut failures = Vec::new();
    let mut queries = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok((record, qs)) => {
                scenes.push(record);
                queries.extend(qs);
            }
            Err(f) => failures.push(f),
        }
    }
    if !plans.is_empty() && failures.len() as f64 / plans.len() as f64 > MAX_FAILURE_RATE {
        return Err(Error::Pipeline(format!(
            "{} of {} scenes failed, over the {:.0}% budget; first: {}",
            failures.len(),
            plans.len(),
            MAX_FAILURE_RATE * 100.0,
            failures[0].diagnostic
        )));
    }

    let mut jsonl = String::new();
    for q in &queries {
        jsonl.push_str(&canonical_json(q)?);
        jsonl.push('\n');
    }
    write_atomic(&out.join("queries.jsonl"), jsonl.as_bytes())?;

    let mut manifest = DatasetManifest {
        format_version: 1,
        job: job.clone(),
        scenes,
        failures,
        query_count: queries.len() as u64,
        queries_hash: sha256_hex(jsonl.as_bytes()),
        content_hash: String::new(),
    };
    manifest.content_hash = manifest.compute_hash()?;
    write_atomic(
        &out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?.as_bytes(),
    )?;
    Ok(manifest)
}

fn write_scene(out: &Path, plan: &ScenePlan, artifacts: &SceneArtifacts) -> Result<SceneRecord> {
    let rel_dir = PathBuf::from(plan.level.as_str())
        .join(plan.split.as_str())
        .join(&plan.scene_id);
    let dir = out.join(&rel_dir);
    fs::create_dir_all(&dir)?;
    write_ppm(&dir.join("rgb.ppm"), &artifacts.image)?;
    write_pgm16(&dir.join("ids.pgm"), &artifacts.id_map)?;
    let doc = SceneDocument {
        recipe: artifacts.recipe.clone(),
        scene: artifacts.scene.clone(),
        camera: artifacts.camera.clone(),
    };
    fs::write(dir.join("scene.json"), serde_json::to_string_pretty(&doc)?)?;
    fs::write(
        dir.join("annotations.json"),
        serde_json::to_string_pretty(&artifacts.annotations)?,
    )?;
    let files = ["rgb.ppm", "ids.pgm", "scene.json", "annotations.json"]
        .iter()
        .map(|f| rel_dir.join(f).to_string_lossy().into_owned())
        .collect();
    Ok(SceneRecord {
        scene_id: plan.scene_id.clone(),
        level: plan.level,
        split: plan.split,
        config: plan.config,
        category: plan.category.clone(),
        total_instances: artifacts.scene.instances.len(),
        recipe_hash: sha256_hex(canonical_json(&artifacts.recipe)?.as_bytes()),
        files,
        query_ids: artifacts.queries.iter().map(|q| q.query_id.clone()).collect(),
    })
}

// ---------------------------------------------------------------------------
// loading
// ---------------------------------------------------------------------------

pub fn load_manifest(root: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(root.join("manifest.json"))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn load_queries(root: &Path) -> Result<Vec<CountQuery>> {
    let file = fs::File::open(root.join("queries.jsonl"))?;
    let mut queries = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let q: CountQuery = serde_json::from_str(&line).map_err(|e| {
            Error::Eval(format!("queries.jsonl line {}: {e}", i + 1))
        })?;
        queries.push(q);
    }
    Ok(queries)
}

/// Parse prediction lines of the form {"query_id": "...", "count": 12}.
pub fn load_predictions(path: &Path) -> Result<BTreeMap<String, f64>> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Line {
        query_id: String,
        count: f64,
    }
    let file = fs::File::open(path)?;
    let mut out = BTreeMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(&line).map_err(|e| {
            Error::Eval(format!("{} line {}: {e}", path.display(), i + 1))
        })?;
        if out.insert(parsed.query_id.clone(), parsed.count).is_some() {
            return Err(Error::Eval(format!(
                "{} line {}: duplicate query id '{}'",
                path.display(),
                i + 1,
                parsed.query_id
            )));
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub scenes_checked: usize,
    pub queries_checked: usize,
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Re-check every dataset invariant from the files on disk: manifest hash,
/// split assignment, recipe structure, mask partition against the id map,
/// RLE and bbox consistency, the instance cap, ground-truth recounts, and
/// the one-or-two queries-per-scene arithmetic.
pub fn cmd_validate(root: &Path) -> Result<ValidationReport> {
    let manifest = load_manifest(root)?;
    let mut v: Vec<String> = Vec::new();

    if manifest.compute_hash()? != manifest.content_hash {
        v.push("manifest: content hash mismatch".into());
    }
    let (bank, splits) = derive_bank_and_splits(&manifest.job)?;
    for violation in validate_splits(&bank, &splits) {
        v.push(format!("splits/{}: {}", violation.code, violation.detail));
    }

    let queries = load_queries(root)?;
    if queries.len() as u64 != manifest.query_count {
        v.push(format!(
            "queries: manifest promises {} queries, file has {}",
            manifest.query_count,
            queries.len()
        ));
    }
    let by_scene: BTreeMap<&str, Vec<&CountQuery>> =
        queries.iter().fold(BTreeMap::new(), |mut m, q| {
            m.entry(q.scene_id.as_str()).or_default().push(q);
            m
        });

    for record in &manifest.scenes {
        let prefix = format!("scene {}", record.scene_id);
        for file in &record.files {
            if !root.join(file).is_file() {
                v.push(format!("{prefix}: missing file {file}"));
            }
        }
        let dir = root
            .join(record.level.as_str())
            .join(record.split.as_str())
            .join(&record.scene_id);
        let doc: SceneDocument =
            match fs::read_to_string(dir.join("scene.json")).map_err(Error::from).and_then(
                |t| serde_json::from_str(&t).map_err(Error::from),
            ) {
                Ok(doc) => doc,
                Err(e) => {
                    v.push(format!("{prefix}: unreadable scene.json: {e}"));
                    continue;
                }
            };
        if sha256_hex(canonical_json(&doc.recipe)?.as_bytes()) != record.recipe_hash {
            v.push(format!("{prefix}: recipe hash mismatch"));
        }
        let check = recipe_valid(&doc.recipe, &bank, &splits);
        for violation in check.violations {
            v.push(format!("{prefix}: {violation}"));
        }
        if doc.scene.instances.len() > crate::MAX_INSTANCES {
            v.push(format!(
                "{prefix}: {} instances exceed the cap",
                doc.scene.instances.len()
            ));
        }

        let annotations: AnnotationSet = match fs::read_to_string(dir.join("annotations.json"))
            .map_err(Error::from)
            .and_then(|t| serde_json::from_str(&t).map_err(Error::from))
        {
            Ok(a) => a,
            Err(e) => {
                v.push(format!("{prefix}: unreadable annotations.json: {e}"));
                continue;
            }
        };
        let id_map = match read_pgm16(&dir.join("ids.pgm")) {
            Ok(m) => m,
            Err(e) => {
                v.push(format!("{prefix}: unreadable ids.pgm: {e}"));
                continue;
            }
        };
        v.extend(
            annotation_violations(&annotations, &id_map)
                .into_iter()
                .map(|m| format!("{prefix}: {m}")),
        );

        // queries: right multiplicity, and ground truth equals a recount of
        // the annotation metadata under the level's predicate
        let scene_queries = by_scene.get(record.scene_id.as_str()).cloned().unwrap_or_default();
        let expected = if record.level.has_distractor() { 2 } else { 1 };
        if scene_queries.len() != expected {
            v.push(format!(
                "{prefix}: {} queries, expected {expected}",
                scene_queries.len()
            ));
        }
        let metas: Vec<_> = annotations.instances.iter().map(|a| a.meta.clone()).collect();
        let groups: BTreeMap<&str, _> = [
            ("target", Some(&doc.recipe.target)),
            ("distractor", doc.recipe.distractor.as_ref().map(|d| d)),
        ]
        .into_iter()
        .filter_map(|(k, g)| g.map(|g| (k, g)))
        .collect();
        for q in scene_queries {
            let role = q.query_id.rsplit('#').next().unwrap_or("");
            let Some(group) = groups.get(role) else {
                v.push(format!("{prefix}: query '{}' names unknown role", q.query_id));
                continue;
            };
            let recount = crate::levels::brute_force_count(
                &metas,
                &predicate_for(record.level, group),
            ) as u64;
            if recount != q.gt_count {
                v.push(format!(
                    "{prefix}: query '{}' gt {} but recount {}",
                    q.query_id, q.gt_count, recount
                ));
            }
        }
    }

    // orphan queries referencing no manifest scene
    let known: std::collections::BTreeSet<&str> =
        manifest.scenes.iter().map(|s| s.scene_id.as_str()).collect();
    for q in &queries {
        if !known.contains(q.scene_id.as_str()) {
            v.push(format!("query '{}' references unknown scene", q.query_id));
        }
    }

    Ok(ValidationReport {
        scenes_checked: manifest.scenes.len(),
        queries_checked: queries.len(),
        violations: v,
    })
}

/// Pixel-level consistency of stored annotations against the stored id map.
fn annotation_violations(annotations: &AnnotationSet, id_map: &InstanceIdMap) -> Vec<String> {
    let mut v = Vec::new();
    let (w, h) = (annotations.width, annotations.height);
    if (w, h) != (id_map.width, id_map.height) {
        v.push("annotation and id map dimensions differ".into());
        return v;
    }
    let mut covered = 0u64;
    for a in &annotations.instances {
        let mask: Vec<bool> = id_map.ids.iter().map(|&id| id == a.instance_id).collect();
        let count = mask.iter().filter(|&&b| b).count() as u32;
        if count != a.pixel_count {
            v.push(format!(
                "instance {}: pixel count {} vs id map {count}",
                a.instance_id, a.pixel_count
            ));
        }
        covered += count as u64;
        match decode_rle(&a.mask_rle, w, h) {
            Ok(decoded) if decoded == mask => {}
            Ok(_) => v.push(format!("instance {}: RLE mask differs from id map", a.instance_id)),
            Err(e) => v.push(format!("instance {}: bad RLE: {e}", a.instance_id)),
        }
        // bbox tightness: recompute from the mask
        let mut bounds: Option<(u32, u32, u32, u32)> = None;
        for (i, &bit) in mask.iter().enumerate() {
            if bit {
                let (x, y) = (i as u32 % w, i as u32 / w);
                let b = bounds.get_or_insert((x, y, x, y));
                b.0 = b.0.min(x);
                b.1 = b.1.min(y);
                b.2 = b.2.max(x);
                b.3 = b.3.max(y);
            }
        }
        if let Some((xmin, ymin, xmax, ymax)) = bounds {
            let bb = &a.bbox2d;
            if (bb.xmin, bb.ymin, bb.xmax, bb.ymax) != (xmin, ymin, xmax, ymax) {
                v.push(format!("instance {}: bbox not tight", a.instance_id));
            }
        } else {
            v.push(format!("instance {}: zero visible pixels", a.instance_id));
        }
    }
    let background = id_map.ids.iter().filter(|&&id| id == 0).count() as u64;
    if covered + background != (w as u64) * (h as u64) {
        v.push("mask partition broken: instance pixels plus background do not tile".into());
    }
    v
}

// ---------------------------------------------------------------------------
// statistics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountSummary {
    pub scenes: u64,
    pub min: u64,
    pub max: u64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    /// Scene counts keyed "level/split/config".
    pub scene_counts: BTreeMap<String, u64>,
    /// Per-level summary of total objects per scene.
    pub instances_per_level: BTreeMap<LevelTag, CountSummary>,
    pub max_instances: u64,
    pub category_frequency: BTreeMap<CategoryId, u64>,
    /// Most-used over least-used category frequency; 1.0 is perfectly flat.
    pub category_balance_ratio: f64,
    pub queries_total: u64,
    pub queries_per_level: BTreeMap<LevelTag, u64>,
}

pub fn cmd_stats(root: &Path) -> Result<StatsReport> {
    let manifest = load_manifest(root)?;
    let queries = load_queries(root)?;
    let mut scene_counts = BTreeMap::new();
    let mut per_level: BTreeMap<LevelTag, Vec<u64>> = BTreeMap::new();
    let mut category_frequency: BTreeMap<CategoryId, u64> = BTreeMap::new();
    for s in &manifest.scenes {
        let key = format!("{}/{}/{}", s.level.as_str(), s.split.as_str(), s.config.as_str());
        *scene_counts.entry(key).or_insert(0) += 1;
        per_level.entry(s.level).or_default().push(s.total_instances as u64);
        *category_frequency.entry(s.category.clone()).or_insert(0) += 1;
    }
    let instances_per_level: BTreeMap<LevelTag, CountSummary> = per_level
        .into_iter()
        .map(|(l, counts)| {
            let sum: u64 = counts.iter().sum();
            (l, CountSummary {
                scenes: counts.len() as u64,
                min: counts.iter().copied().min().unwrap_or(0),
                max: counts.iter().copied().max().unwrap_or(0),
                mean: if counts.is_empty() { 0.0 } else { sum as f64 / counts.len() as f64 },
            })
        })
        .collect();
    let max_instances = instances_per_level.values().map(|s| s.max).max().unwrap_or(0);
    let balance = if category_frequency.is_empty() {
        1.0
    } else {
        let max = *category_frequency.values().max().unwrap() as f64;
        let min = *category_frequency.values().min().unwrap() as f64;
        max / min.max(1.0)
    };
    let mut queries_per_level: BTreeMap<LevelTag, u64> = BTreeMap::new();
    for q in &queries {
        *queries_per_level.entry(q.level).or_insert(0) += 1;
    }
    Ok(StatsReport {
        scene_counts,
        instances_per_level,
        max_instances,
        category_frequency,
        category_balance_ratio: balance,
        queries_total: queries.len() as u64,
        queries_per_level,
    })
}

// ---------------------------------------------------------------------------
// scoring
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Baseline {
    /// Predict the scene's total object count for every query.
    Naive,
    /// Predict the ground truth; scores zero by construction.
    Oracle,
}

impl Baseline {
    pub fn parse(s: &str) -> Result<Baseline> {
        match s.to_ascii_lowercase().as_str() {
            "naive" => Ok(Baseline::Naive),
            "oracle" => Ok(Baseline::Oracle),
            other => Err(Error::InvalidArgument(format!("unknown baseline '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub enum PredictionSource<'a> {
    File(&'a Path),
    Baseline(Baseline),
}

/// Score predictions (from a JSONL file or a built-in baseline) against the
/// dataset's queries and write eval_report.json next to the manifest.
pub fn cmd_eval(
    root: &Path,
    source: PredictionSource,
    policy: MissingPolicy,
) -> Result<EvalReport> {
    let queries = load_queries(root)?;
    let predictions = match source {
        PredictionSource::File(path) => load_predictions(path)?,
        PredictionSource::Baseline(Baseline::Oracle) => oracle_predictor(&queries),
        PredictionSource::Baseline(Baseline::Naive) => {
            let manifest = load_manifest(root)?;
            let totals: BTreeMap<String, u64> = manifest
                .scenes
                .iter()
                .map(|s| (s.scene_id.clone(), s.total_instances as u64))
                .collect();
            naive_all_objects_predictor(&queries, &totals)?
        }
    };
    let report = evaluate(&queries, &predictions, policy)?;
    write_atomic(
        &root.join("eval_report.json"),
        serde_json::to_string_pretty(&report)?.as_bytes(),
    )?;
    Ok(report)
}
