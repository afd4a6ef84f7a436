//! Leakage-controlled partition of assets, categories, and backgrounds.
//!
//! - `TestB` holds entire categories out of training (unseen categories).
//! - `TestA` holds assets out of training categories (unseen assets of seen
//!   categories); the holdout is spread round-robin across a category's
//!   instance types so every type keeps at least one held-out asset once the
//!   quota allows it.
//! - Backgrounds split with the asset holdout fraction; test scenes use only
//!   held-out backgrounds.

use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::taxonomy::{AssetBank, AssetId, BackgroundId, CategoryId};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Split {
    Train,
    TestA,
    TestB,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::TestA, Split::TestB];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::TestA => "testA",
            Split::TestB => "testB",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CategorySplit {
    TrainSeen,
    TestBOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BackgroundSplit {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub asset_split: BTreeMap<AssetId, Split>,
    pub category_split: BTreeMap<CategoryId, CategorySplit>,
    pub background_split: BTreeMap<BackgroundId, BackgroundSplit>,
}

impl SplitAssignment {
    /// Asset ids of `category` available in `split`, ascending by id.
    pub fn assets_in<'b>(
        &self,
        bank: &'b AssetBank,
        category: &CategoryId,
        split: Split,
    ) -> Vec<&'b AssetId> {
        bank.assets
            .values()
            .filter(|a| {
                bank.instance_types[&a.instance_type_id].category_id == *category
                    && self.asset_split.get(&a.id) == Some(&split)
            })
            .map(|a| &a.id)
            .collect()
    }

    pub fn backgrounds_for(&self, split: Split) -> Vec<&BackgroundId> {
        let want = match split {
            Split::Train => BackgroundSplit::Train,
            _ => BackgroundSplit::Test,
        };
        self.background_split
            .iter()
            .filter(|(_, s)| **s == want)
            .map(|(id, _)| id)
            .collect()
    }
}

/// Partition the bank. `category_holdout` of the categories (by count, ceil)
/// become TestB-only with all their assets; within each remaining category,
/// ceil(`asset_holdout` x assets) assets (minimum 1, never all) go to TestA.
///
/// TestB categories are drawn as same-super-category pairs where possible so
/// that category-contrast levels stay composable on the unseen-category
/// split.
pub fn assign_splits(
    bank: &AssetBank,
    rng: &mut Stream,
    asset_holdout: f64,
    category_holdout: f64,
) -> Result<SplitAssignment> {
    if !(0.0..0.5).contains(&asset_holdout) || asset_holdout <= 0.0 {
        return Err(Error::Split(format!(
            "asset_holdout {asset_holdout} outside (0, 0.5)"
        )));
    }
    if !(0.0..0.5).contains(&category_holdout) || category_holdout <= 0.0 {
        return Err(Error::Split(format!(
            "category_holdout {category_holdout} outside (0, 0.5)"
        )));
    }
    bank.validate()?;

    let n_cats = bank.categories.len();
    let n_testb = ((category_holdout * n_cats as f64).ceil() as usize).min(n_cats.saturating_sub(1));

    // Pick TestB categories in same-super pairs: shuffle supers, then take two
    // categories from each until the quota is filled.
    let mut supers: Vec<_> = bank.super_categories.keys().cloned().collect();
    supers.shuffle(rng);
    let mut testb_cats: Vec<CategoryId> = Vec::new();
    'outer: loop {
        for sup in &supers {
            if testb_cats.len() >= n_testb {
                break 'outer;
            }
            let mut cats: Vec<CategoryId> = bank
                .categories
                .values()
                .filter(|c| c.super_category_id == *sup && !testb_cats.contains(&c.id))
                .map(|c| c.id.clone())
                .collect();
            cats.shuffle(rng);
            for id in cats.into_iter().take(2) {
                if testb_cats.len() < n_testb {
                    testb_cats.push(id);
                }
            }
        }
        if testb_cats.len() >= n_testb {
            break;
        }
    }

    let mut category_split: BTreeMap<CategoryId, CategorySplit> = bank
        .categories
        .keys()
        .map(|id| (id.clone(), CategorySplit::TrainSeen))
        .collect();
    for id in &testb_cats {
        category_split.insert(id.clone(), CategorySplit::TestBOnly);
    }

    let mut asset_split: BTreeMap<AssetId, Split> = BTreeMap::new();
    for cat in bank.categories.keys() {
        let is_testb = category_split[cat] == CategorySplit::TestBOnly;
        let types = bank.instance_types_of(cat);
        if is_testb {
            for ty in &types {
                for a in bank.assets_of_type(&ty.id) {
                    asset_split.insert(a.id.clone(), Split::TestB);
                }
            }
            continue;
        }
        let total: usize = types.iter().map(|t| bank.assets_of_type(&t.id).len()).sum();
        if total < 2 {
            return Err(Error::Split(format!(
                "category {cat} has a single asset; cannot hold one out without emptying train"
            )));
        }
        // Quota is at least one asset per instance type so within-category
        // type discrimination stays composable on the unseen-asset split,
        // and leaves at least one train asset per type.
        let mut quota = ((asset_holdout * total as f64).ceil() as usize).max(types.len());
        if quota > total - types.len() {
            quota = total - types.len();
        }
        // Round-robin over instance types; within a type, shuffled order.
        let mut per_type: Vec<Vec<AssetId>> = types
            .iter()
            .map(|t| {
                let mut ids: Vec<AssetId> =
                    bank.assets_of_type(&t.id).iter().map(|a| a.id.clone()).collect();
                ids.shuffle(rng);
                ids
            })
            .collect();
        let mut held: Vec<AssetId> = Vec::new();
        let mut round = 0usize;
        while held.len() < quota {
            let mut advanced = false;
            for ids in per_type.iter_mut() {
                if held.len() >= quota {
                    break;
                }
                if round < ids.len() {
                    held.push(ids[round].clone());
                    advanced = true;
                }
            }
            if !advanced {
                break;
            }
            round += 1;
        }
        for ty in &types {
            for a in bank.assets_of_type(&ty.id) {
                let split = if held.contains(&a.id) { Split::TestA } else { Split::Train };
                asset_split.insert(a.id.clone(), split);
            }
        }
    }

    // Backgrounds mirror the asset holdout fraction.
    let n_bg = bank.backgrounds.len();
    let mut bg_quota = ((asset_holdout * n_bg as f64).ceil() as usize).max(1);
    if bg_quota >= n_bg {
        bg_quota = n_bg.saturating_sub(1).max(1).min(n_bg);
    }
    let mut bg_ids: Vec<BackgroundId> = bank.backgrounds.keys().cloned().collect();
    bg_ids.shuffle(rng);
    let mut background_split: BTreeMap<BackgroundId, BackgroundSplit> = BTreeMap::new();
    for (i, id) in bg_ids.into_iter().enumerate() {
        let s = if i < bg_quota { BackgroundSplit::Test } else { BackgroundSplit::Train };
        background_split.insert(id, s);
    }

    Ok(SplitAssignment { asset_split, category_split, background_split })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitViolation {
    pub code: String,
    pub detail: String,
}

/// Report every invariant violation in `split` against `bank`. Empty report
/// means the assignment is leakage-free.
pub fn validate_splits(bank: &AssetBank, split: &SplitAssignment) -> Vec<SplitViolation> {
    let mut violations = Vec::new();
    let mut push = |code: &str, detail: String| {
        violations.push(SplitViolation { code: code.to_string(), detail });
    };

    for (asset_id, s) in &split.asset_split {
        let Some(cat) = bank.category_of_asset(asset_id) else {
            push("unknown-asset", format!("asset {asset_id} not in bank"));
            continue;
        };
        let cat_split = split.category_split.get(&cat.id).copied();
        match s {
            Split::TestB => {
                if cat_split != Some(CategorySplit::TestBOnly) {
                    push(
                        "testb-category-leak",
                        format!("TestB asset {asset_id} has category {} in train", cat.id),
                    );
                }
            }
            Split::TestA | Split::Train => {
                if cat_split != Some(CategorySplit::TrainSeen) {
                    push(
                        "train-category-leak",
                        format!(
                            "{} asset {asset_id} has TestB-only category {}",
                            s.as_str(),
                            cat.id
                        ),
                    );
                }
            }
        }
    }
    for asset_id in bank.assets.keys() {
        if !split.asset_split.contains_key(asset_id) {
            push("unassigned-asset", format!("asset {asset_id} has no split"));
        }
    }
    for cat_id in bank.categories.keys() {
        if !split.category_split.contains_key(cat_id) {
            push("unassigned-category", format!("category {cat_id} has no split"));
        }
    }
    for bg_id in bank.backgrounds.keys() {
        if !split.background_split.contains_key(bg_id) {
            push("unassigned-background", format!("background {bg_id} has no split"));
        }
    }
    violations
}
