//! Recipe generation for the five counting granularity levels.
//!
//! A recipe fixes a target group and (for all levels past the first) one
//! distractor group, where the two groups differ in exactly the factor the
//! level discriminates on:
//!
//! - `L1`: single fully-specified group, no distractor.
//! - `L2Size` / `L2Color`: same category and instance type, one attribute
//!   differs.
//! - `L3`: two categories from the same super-category.
//! - `L4`: two instance types of the same category.
//! - `L5`: two categories from the same super-category, each group drawing
//!   from at least two instance types.
//!
//! Recipes only reference assets from their own split; queries are derived
//! afterwards by recounting rendered scene metadata with the level's
//! semantic predicate, never by trusting the requested counts.

use crate::error::{Error, Result};
use crate::profiles::{dense_variant, draw_with_seed, ConfigProfile, ProfileDraw};
use crate::render::{AnnotationSet, Box2D};
use crate::rng::{derived_stream, Stream};
use crate::splits::{CategorySplit, Split, SplitAssignment};
use crate::taxonomy::{
    AssetBank, AssetId, CategoryId, ColorName, InstanceTypeId, SizeMode, PALETTE,
};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LevelTag {
    L1,
    L2Size,
    L2Color,
    L3,
    L4,
    L5,
}

impl LevelTag {
    pub const ALL: [LevelTag; 6] = [
        LevelTag::L1,
        LevelTag::L2Size,
        LevelTag::L2Color,
        LevelTag::L3,
        LevelTag::L4,
        LevelTag::L5,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LevelTag::L1 => "L1",
            LevelTag::L2Size => "L2Size",
            LevelTag::L2Color => "L2Color",
            LevelTag::L3 => "L3",
            LevelTag::L4 => "L4",
            LevelTag::L5 => "L5",
        }
    }

    pub fn parse(s: &str) -> Result<LevelTag> {
        LevelTag::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown level tag {s:?}")))
    }

    pub fn has_distractor(self) -> bool {
        self != LevelTag::L1
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum GroupRole {
    Target,
    Distractor,
}

impl GroupRole {
    pub fn as_str(self) -> &'static str {
        match self {
            GroupRole::Target => "target",
            GroupRole::Distractor => "distractor",
        }
    }
}

/// Normal or dense synthesis configuration; dense scenes use the scaled
/// profile variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneConfig {
    Normal,
    Dense,
}

impl SceneConfig {
    pub fn as_str(self) -> &'static str {
        match self {
            SceneConfig::Normal => "normal",
            SceneConfig::Dense => "dense",
        }
    }
}

/// One group of identical-identity instances: a category, the instance types
/// the group draws from, concrete attributes, and a requested count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub role: GroupRole,
    pub category_id: CategoryId,
    pub instance_type_ids: BTreeSet<InstanceTypeId>,
    pub size_mode: SizeMode,
    pub color: ColorName,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecipe {
    pub level: LevelTag,
    pub split: Split,
    pub config: SceneConfig,
    pub target: GroupSpec,
    pub distractor: Option<GroupSpec>,
    /// Per-instance asset assignment for each group, same length as the
    /// group's count.
    pub asset_choices: BTreeMap<GroupRole, Vec<AssetId>>,
    pub profile_draw_seed: u64,
    pub scene_seed: u64,
}

impl SceneRecipe {
    pub fn groups(&self) -> Vec<&GroupSpec> {
        let mut g = vec![&self.target];
        if let Some(d) = &self.distractor {
            g.push(d);
        }
        g
    }

    pub fn total_count(&self) -> usize {
        self.groups().iter().map(|g| g.count).sum()
    }
}

/// Minimal per-instance identity used for recounting and validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub category_id: CategoryId,
    pub instance_type_id: InstanceTypeId,
    pub size_mode: SizeMode,
    pub color: ColorName,
}

/// Conjunctive identity filter; `None` fields match anything.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct QueryPredicate {
    pub category: Option<CategoryId>,
    pub instance_types: Option<BTreeSet<InstanceTypeId>>,
    pub size_mode: Option<SizeMode>,
    pub color: Option<ColorName>,
}

impl QueryPredicate {
    pub fn matches(&self, meta: &InstanceMeta) -> bool {
        if let Some(c) = &self.category {
            if c != &meta.category_id {
                return false;
            }
        }
        if let Some(t) = &self.instance_types {
            if !t.contains(&meta.instance_type_id) {
                return false;
            }
        }
        if let Some(s) = self.size_mode {
            if s != meta.size_mode {
                return false;
            }
        }
        if let Some(c) = self.color {
            if c != meta.color {
                return false;
            }
        }
        true
    }
}

/// The semantic filter a query over `group` asks for at `level`: only the
/// factors the level's query text names take part in the recount.
pub fn predicate_for(level: LevelTag, group: &GroupSpec) -> QueryPredicate {
    let mut p = QueryPredicate {
        category: Some(group.category_id.clone()),
        ..QueryPredicate::default()
    };
    match level {
        LevelTag::L1 => {
            p.instance_types = Some(group.instance_type_ids.clone());
            p.size_mode = Some(group.size_mode);
            p.color = Some(group.color);
        }
        LevelTag::L2Size => {
            p.instance_types = Some(group.instance_type_ids.clone());
            p.size_mode = Some(group.size_mode);
        }
        LevelTag::L2Color => {
            p.instance_types = Some(group.instance_type_ids.clone());
            p.color = Some(group.color);
        }
        LevelTag::L3 | LevelTag::L5 => {}
        LevelTag::L4 => {
            p.instance_types = Some(group.instance_type_ids.clone());
        }
    }
    p
}

/// Count instances matching `predicate` by exhaustive scan.
pub fn brute_force_count(instances: &[InstanceMeta], predicate: &QueryPredicate) -> usize {
    instances.iter().filter(|m| predicate.matches(m)).count()
}

/// One counting query over a rendered scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountQuery {
    pub query_id: String,
    pub scene_id: String,
    pub level: LevelTag,
    pub positive_text: String,
    pub negative_text: Option<String>,
    pub positive_exemplars: Option<Vec<Box2D>>,
    pub negative_exemplars: Option<Vec<Box2D>>,
    pub gt_count: u64,
}

// ---------------------------------------------------------------------------
// recipe composition
// ---------------------------------------------------------------------------

fn types_with_assets(
    bank: &AssetBank,
    splits: &SplitAssignment,
    category: &CategoryId,
    split: Split,
) -> Vec<InstanceTypeId> {
    bank.instance_types_of(category)
        .iter()
        .filter(|t| {
            bank.assets_of_type(&t.id)
                .iter()
                .any(|a| splits.asset_split.get(&a.id) == Some(&split))
        })
        .map(|t| t.id.clone())
        .collect()
}

fn category_matches_split(splits: &SplitAssignment, category: &CategoryId, split: Split) -> bool {
    let want = match split {
        Split::TestB => CategorySplit::TestBOnly,
        _ => CategorySplit::TrainSeen,
    };
    splits.category_split.get(category) == Some(&want)
}

fn min_types(level: LevelTag) -> usize {
    match level {
        LevelTag::L4 | LevelTag::L5 => 2,
        _ => 1,
    }
}

fn needs_partner(level: LevelTag) -> bool {
    matches!(level, LevelTag::L3 | LevelTag::L5)
}

fn partner_min_types(level: LevelTag) -> usize {
    if level == LevelTag::L5 {
        2
    } else {
        1
    }
}

fn partner_candidates(
    bank: &AssetBank,
    splits: &SplitAssignment,
    category: &CategoryId,
    split: Split,
    level: LevelTag,
) -> Vec<CategoryId> {
    let sup = &bank.categories[category].super_category_id;
    bank.categories
        .values()
        .filter(|c| {
            c.id != *category
                && c.super_category_id == *sup
                && category_matches_split(splits, &c.id, split)
                && types_with_assets(bank, splits, &c.id, split).len() >= partner_min_types(level)
        })
        .map(|c| c.id.clone())
        .collect()
}

/// Categories usable as the target of a `level` recipe on `split`: right
/// category split, enough instance types with split assets, and (for the
/// category-contrast levels) a same-super partner category.
pub fn eligible_categories(
    level: LevelTag,
    bank: &AssetBank,
    splits: &SplitAssignment,
    split: Split,
) -> Vec<CategoryId> {
    bank.categories
        .keys()
        .filter(|c| category_matches_split(splits, c, split))
        .filter(|c| types_with_assets(bank, splits, c, split).len() >= min_types(level))
        .filter(|c| {
            !needs_partner(level)
                || !partner_candidates(bank, splits, c, split, level).is_empty()
        })
        .cloned()
        .collect()
}

fn pick<T: Clone>(items: &[T], rng: &mut Stream) -> T {
    items[rng.gen_range(0..items.len())].clone()
}

fn pick_two<T: Clone>(items: &[T], rng: &mut Stream) -> (T, T) {
    let mut idx: Vec<usize> = (0..items.len()).collect();
    idx.shuffle(rng);
    (items[idx[0]].clone(), items[idx[1]].clone())
}

fn draw_counts(
    level: LevelTag,
    draw: &ProfileDraw,
    rng: &mut Stream,
) -> Result<(usize, Option<usize>)> {
    let mut min_g = (draw.min_objects_per_group.round() as usize).max(1);
    if level == LevelTag::L5 {
        min_g = min_g.max(2); // each group must span two instance types
    }
    let max_total = (draw.max_total_objects.round() as usize).min(crate::MAX_INSTANCES);
    if !level.has_distractor() {
        if min_g > max_total {
            return Err(Error::Recipe(format!(
                "min_objects_per_group {min_g} exceeds max_total_objects {max_total}"
            )));
        }
        return Ok((rng.gen_range(min_g..=max_total), None));
    }
    let cap_each = max_total / 2;
    if min_g > cap_each {
        return Err(Error::Recipe(format!(
            "min_objects_per_group {min_g} exceeds per-group cap {cap_each} \
             (max_total_objects {max_total} over two groups)"
        )));
    }
    Ok((
        rng.gen_range(min_g..=cap_each),
        Some(rng.gen_range(min_g..=cap_each)),
    ))
}

fn split_assets_of_types(
    bank: &AssetBank,
    splits: &SplitAssignment,
    types: &BTreeSet<InstanceTypeId>,
    split: Split,
) -> BTreeMap<InstanceTypeId, Vec<AssetId>> {
    types
        .iter()
        .map(|t| {
            let ids: Vec<AssetId> = bank
                .assets_of_type(t)
                .iter()
                .filter(|a| splits.asset_split.get(&a.id) == Some(&split))
                .map(|a| a.id.clone())
                .collect();
            (t.clone(), ids)
        })
        .collect()
}

/// Assign an asset to each of the group's `count` instances. When the group
/// spans several instance types, the first slots cycle through the types so
/// every type is represented; remaining slots draw uniformly.
fn choose_assets(
    bank: &AssetBank,
    splits: &SplitAssignment,
    group: &GroupSpec,
    split: Split,
    rng: &mut Stream,
) -> Result<Vec<AssetId>> {
    let by_type = split_assets_of_types(bank, splits, &group.instance_type_ids, split);
    for (t, ids) in &by_type {
        if ids.is_empty() {
            return Err(Error::Recipe(format!(
                "instance type {t} has no assets in split {}",
                split.as_str()
            )));
        }
    }
    let all: Vec<AssetId> = by_type.values().flatten().cloned().collect();
    let types: Vec<&InstanceTypeId> = by_type.keys().collect();
    if group.count < types.len() {
        return Err(Error::Recipe(format!(
            "group count {} below its {} instance types",
            group.count,
            types.len()
        )));
    }
    let mut out = Vec::with_capacity(group.count);
    for slot in 0..group.count {
        let id = if slot < types.len() {
            pick(&by_type[types[slot]], rng)
        } else {
            pick(&all, rng)
        };
        out.push(id);
    }
    Ok(out)
}

fn rand_attr(rng: &mut Stream) -> (SizeMode, ColorName) {
    let size = if rng.gen_bool(0.5) { SizeMode::Small } else { SizeMode::Large };
    (size, pick(&PALETTE, rng))
}

/// Compose a recipe for `level`, drawing the target category uniformly from
/// the eligible set.
pub fn compose_recipe(
    level: LevelTag,
    bank: &AssetBank,
    splits: &SplitAssignment,
    split: Split,
    config: SceneConfig,
    profile: &ConfigProfile,
    rng: &mut Stream,
) -> Result<SceneRecipe> {
    let eligible = eligible_categories(level, bank, splits, split);
    if eligible.is_empty() {
        return Err(Error::Recipe(format!(
            "no eligible categories for {} on split {}",
            level.as_str(),
            split.as_str()
        )));
    }
    let category = pick(&eligible, rng);
    compose_recipe_for_category(level, bank, splits, split, config, profile, &category, rng)
}

/// Compose a recipe with a caller-chosen target category (which must be
/// eligible for the level and split).
#[allow(clippy::too_many_arguments)]
pub fn compose_recipe_for_category(
    level: LevelTag,
    bank: &AssetBank,
    splits: &SplitAssignment,
    split: Split,
    config: SceneConfig,
    profile: &ConfigProfile,
    category: &CategoryId,
    rng: &mut Stream,
) -> Result<SceneRecipe> {
    if !eligible_categories(level, bank, splits, split).contains(category) {
        return Err(Error::Recipe(format!(
            "category {category} is not eligible for {} on split {}",
            level.as_str(),
            split.as_str()
        )));
    }
    let effective = match config {
        SceneConfig::Normal => profile.clone(),
        SceneConfig::Dense => dense_variant(profile)?,
    };
    // Some profile draws are count-infeasible for two-group scenes (the
    // per-group minimum can exceed half the total budget); redraw the
    // profile seed until the counts fit.
    let mut profile_draw_seed: u64 = rng.gen();
    let mut counts = None;
    for attempt in 0..100 {
        let draw = draw_with_seed(&effective, profile_draw_seed);
        match draw_counts(level, &draw, rng) {
            Ok(c) => {
                counts = Some(c);
                break;
            }
            Err(e) if attempt == 99 => return Err(e),
            Err(_) => profile_draw_seed = rng.gen(),
        }
    }
    let (n_target, n_distractor) = counts.expect("loop either fills counts or returns");

    let types = types_with_assets(bank, splits, category, split);
    let (size, color) = rand_attr(rng);

    let one = |t: InstanceTypeId| BTreeSet::from([t]);

    let (target, distractor) = match level {
        LevelTag::L1 => {
            let t = pick(&types, rng);
            (
                GroupSpec {
                    role: GroupRole::Target,
                    category_id: category.clone(),
                    instance_type_ids: one(t),
                    size_mode: size,
                    color,
                    count: n_target,
                },
                None,
            )
        }
        LevelTag::L2Size => {
            let t = pick(&types, rng);
            let (pos_size, neg_size) = if rng.gen_bool(0.5) {
                (SizeMode::Small, SizeMode::Large)
            } else {
                (SizeMode::Large, SizeMode::Small)
            };
            (
                GroupSpec {
                    role: GroupRole::Target,
                    category_id: category.clone(),
                    instance_type_ids: one(t.clone()),
                    size_mode: pos_size,
                    color,
                    count: n_target,
                },
                Some(GroupSpec {
                    role: GroupRole::Distractor,
                    category_id: category.clone(),
                    instance_type_ids: one(t),
                    size_mode: neg_size,
                    color,
                    count: n_distractor.unwrap(),
                }),
            )
        }
        LevelTag::L2Color => {
            let t = pick(&types, rng);
            let (pos_color, neg_color) = pick_two(&PALETTE, rng);
            (
                GroupSpec {
                    role: GroupRole::Target,
                    category_id: category.clone(),
                    instance_type_ids: one(t.clone()),
                    size_mode: size,
                    color: pos_color,
                    count: n_target,
                },
                Some(GroupSpec {
                    role: GroupRole::Distractor,
                    category_id: category.clone(),
                    instance_type_ids: one(t),
                    size_mode: size,
                    color: neg_color,
                    count: n_distractor.unwrap(),
                }),
            )
        }
        LevelTag::L3 => {
            let partner = pick(&partner_candidates(bank, splits, category, split, level), rng);
            let t_pos = pick(&types, rng);
            let t_neg = pick(&types_with_assets(bank, splits, &partner, split), rng);
            (
                GroupSpec {
                    role: GroupRole::Target,
                    category_id: category.clone(),
                    instance_type_ids: one(t_pos),
                    size_mode: size,
                    color,
                    count: n_target,
                },
                Some(GroupSpec {
                    role: GroupRole::Distractor,
                    category_id: partner,
                    instance_type_ids: one(t_neg),
                    size_mode: size,
                    color,
                    count: n_distractor.unwrap(),
                }),
            )
        }
        LevelTag::L4 => {
            let (t_pos, t_neg) = pick_two(&types, rng);
            (
                GroupSpec {
                    role: GroupRole::Target,
                    category_id: category.clone(),
                    instance_type_ids: one(t_pos),
                    size_mode: size,
                    color,
                    count: n_target,
                },
                Some(GroupSpec {
                    role: GroupRole::Distractor,
                    category_id: category.clone(),
                    instance_type_ids: one(t_neg),
                    size_mode: size,
                    color,
                    count: n_distractor.unwrap(),
                }),
            )
        }
        LevelTag::L5 => {
            let partner = pick(&partner_candidates(bank, splits, category, split, level), rng);
            let (ta, tb) = pick_two(&types, rng);
            let partner_types = types_with_assets(bank, splits, &partner, split);
            let (pa, pb) = pick_two(&partner_types, rng);
            (
                GroupSpec {
                    role: GroupRole::Target,
                    category_id: category.clone(),
                    instance_type_ids: BTreeSet::from([ta, tb]),
                    size_mode: size,
                    color,
                    count: n_target,
                },
                Some(GroupSpec {
                    role: GroupRole::Distractor,
                    category_id: partner,
                    instance_type_ids: BTreeSet::from([pa, pb]),
                    size_mode: size,
                    color,
                    count: n_distractor.unwrap(),
                }),
            )
        }
    };

    let mut asset_choices = BTreeMap::new();
    asset_choices.insert(GroupRole::Target, choose_assets(bank, splits, &target, split, rng)?);
    if let Some(d) = &distractor {
        asset_choices.insert(GroupRole::Distractor, choose_assets(bank, splits, d, split, rng)?);
    }

    Ok(SceneRecipe {
        level,
        split,
        config,
        target,
        distractor,
        asset_choices,
        profile_draw_seed,
        scene_seed: rng.gen(),
    })
}

// ---------------------------------------------------------------------------
// recipe validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecipeCheck {
    pub ok: bool,
    pub violations: Vec<String>,
}

/// Check every structural invariant of `recipe` against the bank and split
/// assignment. `ok` is true iff no violation was found.
pub fn recipe_valid(
    recipe: &SceneRecipe,
    bank: &AssetBank,
    splits: &SplitAssignment,
) -> RecipeCheck {
    let mut v: Vec<String> = Vec::new();

    if recipe.total_count() > crate::MAX_INSTANCES {
        v.push(format!(
            "cap: total count {} exceeds {}",
            recipe.total_count(),
            crate::MAX_INSTANCES
        ));
    }
    if recipe.level.has_distractor() != recipe.distractor.is_some() {
        v.push(format!(
            "structure: {} must have {} distractor group",
            recipe.level.as_str(),
            if recipe.level.has_distractor() { "a" } else { "no" }
        ));
    }

    for g in recipe.groups() {
        if g.count == 0 {
            v.push(format!("count: {} group is empty", g.role.as_str()));
        }
        if g.instance_type_ids.is_empty() {
            v.push(format!("types: {} group has no instance types", g.role.as_str()));
        }
        if !bank.categories.contains_key(&g.category_id) {
            v.push(format!("bank: unknown category {}", g.category_id));
            continue;
        }
        for t in &g.instance_type_ids {
            match bank.instance_types.get(t) {
                None => v.push(format!("bank: unknown instance type {t}")),
                Some(ty) if ty.category_id != g.category_id => v.push(format!(
                    "types: {t} does not belong to category {}",
                    g.category_id
                )),
                _ => {}
            }
        }
        let want_cat = match recipe.split {
            Split::TestB => CategorySplit::TestBOnly,
            _ => CategorySplit::TrainSeen,
        };
        if splits.category_split.get(&g.category_id) != Some(&want_cat) {
            v.push(format!(
                "split: category {} is not available on {}",
                g.category_id,
                recipe.split.as_str()
            ));
        }
        let choices = recipe.asset_choices.get(&g.role);
        match choices {
            None => v.push(format!("assets: {} group has no asset choices", g.role.as_str())),
            Some(ids) => {
                if ids.len() != g.count {
                    v.push(format!(
                        "assets: {} group lists {} assets for count {}",
                        g.role.as_str(),
                        ids.len(),
                        g.count
                    ));
                }
                let mut used_types: BTreeSet<&InstanceTypeId> = BTreeSet::new();
                for id in ids {
                    match bank.assets.get(id) {
                        None => v.push(format!("bank: unknown asset {id}")),
                        Some(a) => {
                            if !g.instance_type_ids.contains(&a.instance_type_id) {
                                v.push(format!(
                                    "assets: {id} is outside the {} group's types",
                                    g.role.as_str()
                                ));
                            }
                            used_types.insert(&a.instance_type_id);
                        }
                    }
                    if splits.asset_split.get(id) != Some(&recipe.split) {
                        v.push(format!(
                            "split: asset {id} is not in split {}",
                            recipe.split.as_str()
                        ));
                    }
                }
                if recipe.level == LevelTag::L5 && used_types.len() < 2 {
                    v.push(format!(
                        "L5: {} group realizes {} instance type(s), needs 2+",
                        g.role.as_str(),
                        used_types.len()
                    ));
                }
            }
        }
    }

    // per-level contrast constraints
    if let Some(d) = &recipe.distractor {
        let t = &recipe.target;
        match recipe.level {
            LevelTag::L1 => {}
            LevelTag::L2Size => {
                if t.category_id != d.category_id {
                    v.push("L2Size: groups differ in category".into());
                }
                if t.instance_type_ids != d.instance_type_ids {
                    v.push("L2Size: groups differ in instance type".into());
                }
                if t.size_mode == d.size_mode {
                    v.push("L2Size: groups share the same size mode".into());
                }
                if t.color != d.color {
                    v.push("L2Size: groups differ in color".into());
                }
            }
            LevelTag::L2Color => {
                if t.category_id != d.category_id {
                    v.push("L2Color: groups differ in category".into());
                }
                if t.instance_type_ids != d.instance_type_ids {
                    v.push("L2Color: groups differ in instance type".into());
                }
                if t.color == d.color {
                    v.push("L2Color: groups share the same color".into());
                }
                if t.size_mode != d.size_mode {
                    v.push("L2Color: groups differ in size mode".into());
                }
            }
            LevelTag::L3 | LevelTag::L5 => {
                let tag = recipe.level.as_str();
                if t.category_id == d.category_id {
                    v.push(format!("{tag}: groups share the same category"));
                }
                let sup = |c: &CategoryId| {
                    bank.categories.get(c).map(|c| c.super_category_id.clone())
                };
                match (sup(&t.category_id), sup(&d.category_id)) {
                    (Some(a), Some(b)) if a != b => {
                        v.push(format!("{tag}: categories are from different super-categories"))
                    }
                    _ => {}
                }
                if (t.size_mode, t.color) != (d.size_mode, d.color) {
                    v.push(format!("{tag}: groups differ in attributes"));
                }
                if recipe.level == LevelTag::L5 {
                    for g in [t, d] {
                        if g.instance_type_ids.len() < 2 {
                            v.push(format!(
                                "L5: {} group declares {} instance type(s), needs 2+",
                                g.role.as_str(),
                                g.instance_type_ids.len()
                            ));
                        }
                    }
                }
            }
            LevelTag::L4 => {
                if t.category_id != d.category_id {
                    v.push("L4: groups differ in category".into());
                }
                if !t.instance_type_ids.is_disjoint(&d.instance_type_ids) {
                    v.push("L4: groups share an instance type".into());
                }
                if (t.size_mode, t.color) != (d.size_mode, d.color) {
                    v.push("L4: groups differ in attributes".into());
                }
            }
        }
    }

    RecipeCheck { ok: v.is_empty(), violations: v }
}

// ---------------------------------------------------------------------------
// query emission
// ---------------------------------------------------------------------------

/// Human-readable group text naming only the level-relevant factors.
pub fn group_text(level: LevelTag, group: &GroupSpec, bank: &AssetBank) -> String {
    let cat_name = bank
        .categories
        .get(&group.category_id)
        .map(|c| c.name.clone())
        .unwrap_or_else(|| group.category_id.to_string());
    match level {
        LevelTag::L1 | LevelTag::L3 | LevelTag::L5 => cat_name,
        LevelTag::L2Size => {
            let size = match group.size_mode {
                SizeMode::Small => "small",
                SizeMode::Large => "large",
            };
            format!("{size} {cat_name}")
        }
        LevelTag::L2Color => format!("{} {cat_name}", group.color.name()),
        LevelTag::L4 => {
            // single type per group; name it by its id suffix
            let ty = group.instance_type_ids.iter().next().expect("nonempty");
            let suffix = ty.0.rsplit('-').next().unwrap_or("t??");
            format!("variant {suffix} {cat_name}")
        }
    }
}

/// Select `k` exemplar boxes for instances of `role`: visible instances are
/// shuffled, stably re-sorted by pixel area descending, and the first `k`
/// taken, so larger (clearer) exemplars win while ties stay randomized.
pub fn exemplar_boxes(
    annotations: &AnnotationSet,
    role: GroupRole,
    k: usize,
    rng: &mut Stream,
) -> Result<Vec<Box2D>> {
    let mut candidates: Vec<(u32, Box2D)> = annotations
        .instances
        .iter()
        .filter(|a| a.role == role && a.pixel_count > 0)
        .map(|a| (a.pixel_count, a.bbox2d.clone()))
        .collect();
    candidates.shuffle(rng);
    candidates.sort_by_key(|(area, _)| std::cmp::Reverse(*area));
    if candidates.len() < k {
        return Err(Error::Annotation(format!(
            "need {k} exemplar boxes for {} instances, only {} visible",
            role.as_str(),
            candidates.len()
        )));
    }
    Ok(candidates.into_iter().take(k).map(|(_, b)| b).collect())
}

/// Emit the scene's queries. Ground truth is recomputed from the annotation
/// metadata with the level's semantic predicate; the recipe's requested
/// counts are never trusted.
pub fn queries_for_scene(
    bank: &AssetBank,
    scene_id: &str,
    recipe: &SceneRecipe,
    annotations: &AnnotationSet,
) -> Result<Vec<CountQuery>> {
    let metas: Vec<InstanceMeta> =
        annotations.instances.iter().map(|a| a.meta.clone()).collect();
    let mut rng = derived_stream(recipe.scene_seed, "queries", 0);
    let mut queries = Vec::new();

    let emit = |group: &GroupSpec,
                    other: Option<&GroupSpec>,
                    rng: &mut Stream|
     -> Result<CountQuery> {
        let gt = brute_force_count(&metas, &predicate_for(recipe.level, group)) as u64;
        let (pos_ex, neg_ex) = if recipe.level == LevelTag::L4 {
            let other = other.expect("L4 always has two groups");
            (
                Some(exemplar_boxes(annotations, group.role, 1, rng)?),
                Some(exemplar_boxes(annotations, other.role, 1, rng)?),
            )
        } else {
            (None, None)
        };
        Ok(CountQuery {
            query_id: format!("{scene_id}#{}", group.role.as_str()),
            scene_id: scene_id.to_string(),
            level: recipe.level,
            positive_text: group_text(recipe.level, group, bank),
            negative_text: other.map(|o| group_text(recipe.level, o, bank)),
            positive_exemplars: pos_ex,
            negative_exemplars: neg_ex,
            gt_count: gt,
        })
    };

    queries.push(emit(&recipe.target, recipe.distractor.as_ref(), &mut rng)?);
    if let Some(d) = &recipe.distractor {
        queries.push(emit(d, Some(&recipe.target), &mut rng)?);
    }
    Ok(queries)
}
