//! Semantic hierarchy and the procedural asset bank.
//!
//! The hierarchy is super-category > category > instance type > attributes.
//! Instance types are procedural primitive families with a small parameter
//! vector; an asset is an instance type plus a variation seed that perturbs
//! the parameters by at most 10% and reseeds the surface shade. This keeps
//! "unseen assets of a seen category" meaningful without any mesh files.

use crate::error::{Error, Result};
use crate::rng::{derived_stream, Stream};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

macro_rules! id_type {
    ($name:ident) => {
        #[derive(
            Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }
    };
}

id_type!(SuperCategoryId);
id_type!(CategoryId);
id_type!(InstanceTypeId);
id_type!(AssetId);
id_type!(BackgroundId);

/// Size attribute mode. Scale bands for the two modes are disjoint
/// (`Large` uses 1.6x the base band), so size is always discriminative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SizeMode {
    Small,
    Large,
}

/// Closed color palette. All ten colors are saturated (channel spread 200+)
/// and pairwise RGB distance is at least 120, so color is always
/// discriminative against the achromatic backgrounds and against each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ColorName {
    Red,
    Green,
    Blue,
    Yellow,
    Cyan,
    Magenta,
    Orange,
    Purple,
    Lime,
    Azure,
}

pub const PALETTE: [ColorName; 10] = [
    ColorName::Red,
    ColorName::Green,
    ColorName::Blue,
    ColorName::Yellow,
    ColorName::Cyan,
    ColorName::Magenta,
    ColorName::Orange,
    ColorName::Purple,
    ColorName::Lime,
    ColorName::Azure,
];

impl ColorName {
    pub fn rgb(self) -> [u8; 3] {
        match self {
            ColorName::Red => [255, 0, 0],
            ColorName::Green => [0, 200, 0],
            ColorName::Blue => [0, 0, 255],
            ColorName::Yellow => [255, 255, 0],
            ColorName::Cyan => [0, 255, 255],
            ColorName::Magenta => [255, 0, 255],
            ColorName::Orange => [255, 128, 0],
            ColorName::Purple => [128, 0, 255],
            ColorName::Lime => [128, 255, 0],
            ColorName::Azure => [0, 128, 255],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ColorName::Red => "red",
            ColorName::Green => "green",
            ColorName::Blue => "blue",
            ColorName::Yellow => "yellow",
            ColorName::Cyan => "cyan",
            ColorName::Magenta => "magenta",
            ColorName::Orange => "orange",
            ColorName::Purple => "purple",
            ColorName::Lime => "lime",
            ColorName::Azure => "azure",
        }
    }
}

/// Size mode plus color; both always present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AttributeTuple {
    pub size_mode: SizeMode,
    pub color: ColorName,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ShapeFamily {
    Box,
    Ellipsoid,
    Cylinder,
    Superellipsoid,
}

pub const SHAPE_FAMILIES: [ShapeFamily; 4] = [
    ShapeFamily::Box,
    ShapeFamily::Ellipsoid,
    ShapeFamily::Cylinder,
    ShapeFamily::Superellipsoid,
];

impl ShapeFamily {
    /// Number of shape parameters and their [lo, hi] bounds. The extents are
    /// small against the camera distance ranges so whole scenes (up to the
    /// dense instance budget) fit in frame.
    ///
    /// - Box: width, depth, height half-extents in [0.10, 0.28]
    /// - Ellipsoid: radii in [0.10, 0.28]
    /// - Cylinder: radius in [0.08, 0.22], half-height in [0.10, 0.28]
    /// - Superellipsoid: radii in [0.10, 0.28], exponents in [0.40, 1.60]
    pub fn param_bounds(self) -> &'static [(f64, f64)] {
        match self {
            ShapeFamily::Box => &[(0.10, 0.28), (0.10, 0.28), (0.10, 0.28)],
            ShapeFamily::Ellipsoid => &[(0.10, 0.28), (0.10, 0.28), (0.10, 0.28)],
            ShapeFamily::Cylinder => &[(0.08, 0.22), (0.10, 0.28)],
            ShapeFamily::Superellipsoid => {
                &[(0.10, 0.28), (0.10, 0.28), (0.10, 0.28), (0.40, 1.60), (0.40, 1.60)]
            }
        }
    }
}

/// Minimum L-infinity separation between the shape parameter vectors of two
/// instance types of the same family within one category. Keeps within-
/// category type discrimination (Level 4) visually well-posed.
pub const SHAPE_SEPARATION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceType {
    pub id: InstanceTypeId,
    pub category_id: CategoryId,
    pub shape_family: ShapeFamily,
    pub shape_params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Category {
    pub id: CategoryId,
    pub super_category_id: SuperCategoryId,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperCategory {
    pub id: SuperCategoryId,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetDescriptor {
    pub id: AssetId,
    pub instance_type_id: InstanceTypeId,
    pub variation_seed: u64,
}

/// Achromatic ground+sky gradient standing in for an HDRI. All channels
/// equal, so backgrounds never collide with the saturated object palette.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundDescriptor {
    pub id: BackgroundId,
    /// Sky gray level at the top row, in [110, 170].
    pub sky_top: u8,
    /// Sky gray level at the horizon, in [90, 140].
    pub sky_horizon: u8,
    /// Ground gray level, in [60, 110].
    pub ground: u8,
    /// Horizon row as a fraction of image height, in [0.35, 0.55].
    pub horizon: f64,
    /// Directional light azimuth in radians.
    pub light_azimuth: f64,
    /// Directional light elevation in radians, in [0.6, 1.2].
    pub light_elevation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetBank {
    pub super_categories: BTreeMap<SuperCategoryId, SuperCategory>,
    pub categories: BTreeMap<CategoryId, Category>,
    pub instance_types: BTreeMap<InstanceTypeId, InstanceType>,
    pub assets: BTreeMap<AssetId, AssetDescriptor>,
    pub backgrounds: BTreeMap<BackgroundId, BackgroundDescriptor>,
}

impl AssetBank {
    pub fn instance_types_of(&self, category: &CategoryId) -> Vec<&InstanceType> {
        self.instance_types
            .values()
            .filter(|t| &t.category_id == category)
            .collect()
    }

    pub fn assets_of_type(&self, ty: &InstanceTypeId) -> Vec<&AssetDescriptor> {
        self.assets
            .values()
            .filter(|a| &a.instance_type_id == ty)
            .collect()
    }

    pub fn category_of_asset(&self, asset: &AssetId) -> Option<&Category> {
        let a = self.assets.get(asset)?;
        let t = self.instance_types.get(&a.instance_type_id)?;
        self.categories.get(&t.category_id)
    }

    pub fn asset_count_of_category(&self, category: &CategoryId) -> usize {
        self.assets
            .values()
            .filter(|a| {
                self.instance_types
                    .get(&a.instance_type_id)
                    .map(|t| &t.category_id == category)
                    .unwrap_or(false)
            })
            .count()
    }

    /// Full referential-integrity traversal plus the structural minimums the
    /// level generators rely on.
    pub fn validate(&self) -> Result<()> {
        for c in self.categories.values() {
            if !self.super_categories.contains_key(&c.super_category_id) {
                return Err(Error::Taxonomy(format!(
                    "category {} references missing super-category {}",
                    c.id, c.super_category_id
                )));
            }
        }
        for t in self.instance_types.values() {
            if !self.categories.contains_key(&t.category_id) {
                return Err(Error::Taxonomy(format!(
                    "instance type {} references missing category {}",
                    t.id, t.category_id
                )));
            }
            let bounds = t.shape_family.param_bounds();
            if t.shape_params.len() != bounds.len() {
                return Err(Error::Taxonomy(format!(
                    "instance type {} has {} shape params, family needs {}",
                    t.id,
                    t.shape_params.len(),
                    bounds.len()
                )));
            }
            for (p, (lo, hi)) in t.shape_params.iter().zip(bounds) {
                if p < lo || p > hi {
                    return Err(Error::Taxonomy(format!(
                        "instance type {} shape param {p} outside [{lo}, {hi}]",
                        t.id
                    )));
                }
            }
        }
        for a in self.assets.values() {
            if !self.instance_types.contains_key(&a.instance_type_id) {
                return Err(Error::Taxonomy(format!(
                    "asset {} references missing instance type {}",
                    a.id, a.instance_type_id
                )));
            }
        }
        for c in self.categories.values() {
            if self.instance_types_of(&c.id).len() < 2 {
                return Err(Error::Taxonomy(format!(
                    "category {} has fewer than 2 instance types",
                    c.id
                )));
            }
        }
        for t in self.instance_types.values() {
            if self.assets_of_type(&t.id).len() < 2 {
                return Err(Error::Taxonomy(format!(
                    "instance type {} has fewer than 2 assets",
                    t.id
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<AssetBank> {
        let bank: AssetBank = serde_json::from_str(text)?;
        bank.validate()?;
        Ok(bank)
    }
}

/// Concrete per-asset geometry: the type's shape parameters perturbed by at
/// most 10% (clamped to family bounds) plus a shade factor in [0.95, 1.05].
pub fn asset_geometry(ty: &InstanceType, asset: &AssetDescriptor) -> (Vec<f64>, f64) {
    let mut rng = derived_stream(asset.variation_seed, "asset-variation", 0);
    let bounds = ty.shape_family.param_bounds();
    let params = ty
        .shape_params
        .iter()
        .zip(bounds)
        .map(|(p, (lo, hi))| {
            let factor = 1.0 + rng.gen_range(-0.10..=0.10);
            (p * factor).clamp(*lo, *hi)
        })
        .collect();
    let shade = rng.gen_range(0.95..=1.05);
    (params, shade)
}

const SUPER_NAMES: [&str; 16] = [
    "vehicles", "animals", "produce", "furniture", "electronics", "tools", "containers",
    "wearables", "toys", "instruments", "structures", "pastries", "hardware", "fixtures",
    "sports", "office",
];

const CATEGORY_NAMES: [&str; 40] = [
    "crate", "orb", "spool", "cone", "block", "drum", "puck", "slab", "pod", "knob", "brick",
    "tile", "bead", "capsule", "prism", "disk", "plank", "stub", "chip", "wedge", "barrel",
    "bolt", "cap", "cell", "core", "cube", "dome", "flask", "gem", "hub", "ingot", "jar",
    "keg", "lens", "node", "peg", "pin", "ring", "rod", "tub",
];

/// Build a deterministic procedural asset bank.
///
/// `types_per_cat` must be at least 2 (within-category type discrimination
/// needs two types per category) and `assets_per_type` at least 2 (unseen-
/// asset holdout needs a spare asset per type).
pub fn build_bank(
    seed: u64,
    n_super: usize,
    cats_per_super: usize,
    types_per_cat: usize,
    assets_per_type: usize,
    n_backgrounds: usize,
) -> Result<AssetBank> {
    if n_super == 0 || cats_per_super == 0 || types_per_cat == 0 || assets_per_type == 0
        || n_backgrounds == 0
    {
        return Err(Error::InvalidArgument(
            "all bank counts must be at least 1".into(),
        ));
    }
    if types_per_cat < 2 {
        return Err(Error::InvalidArgument(
            "types_per_cat must be at least 2: within-category (Level 4) scenes need two \
             distinguishable instance types per category"
                .into(),
        ));
    }
    if assets_per_type < 2 {
        return Err(Error::InvalidArgument(
            "assets_per_type must be at least 2: the unseen-asset test split holds out at \
             least one asset per type"
                .into(),
        ));
    }

    let mut rng = derived_stream(seed, "bank", 0);
    let mut bank = AssetBank {
        super_categories: BTreeMap::new(),
        categories: BTreeMap::new(),
        instance_types: BTreeMap::new(),
        assets: BTreeMap::new(),
        backgrounds: BTreeMap::new(),
    };

    let mut cat_index = 0usize;
    for si in 0..n_super {
        let super_id = SuperCategoryId(format!("sup{si:03}"));
        let super_name = if si < SUPER_NAMES.len() {
            SUPER_NAMES[si].to_string()
        } else {
            format!("{}-{}", SUPER_NAMES[si % SUPER_NAMES.len()], si / SUPER_NAMES.len())
        };
        bank.super_categories.insert(
            super_id.clone(),
            SuperCategory { id: super_id.clone(), name: super_name.clone() },
        );

        for _ in 0..cats_per_super {
            let cat_id = CategoryId(format!("cat{cat_index:04}"));
            let base = CATEGORY_NAMES[cat_index % CATEGORY_NAMES.len()];
            let name = if cat_index < CATEGORY_NAMES.len() {
                format!("{super_name} {base}")
            } else {
                format!("{super_name} {base} {}", cat_index / CATEGORY_NAMES.len())
            };
            bank.categories.insert(
                cat_id.clone(),
                Category {
                    id: cat_id.clone(),
                    super_category_id: super_id.clone(),
                    name,
                },
            );

            let mut families: Vec<ShapeFamily> = SHAPE_FAMILIES.to_vec();
            families.shuffle(&mut rng);
            let mut drawn: Vec<(ShapeFamily, Vec<f64>)> = Vec::new();
            for ti in 0..types_per_cat {
                let family = families[ti % families.len()];
                let params = draw_separated_params(family, &drawn, &mut rng)?;
                drawn.push((family, params.clone()));
                let type_id = InstanceTypeId(format!("{}-t{ti:02}", cat_id.0));
                bank.instance_types.insert(
                    type_id.clone(),
                    InstanceType {
                        id: type_id.clone(),
                        category_id: cat_id.clone(),
                        shape_family: family,
                        shape_params: params,
                    },
                );
                for ai in 0..assets_per_type {
                    let asset_id = AssetId(format!("{}-a{ai:03}", type_id.0));
                    bank.assets.insert(
                        asset_id.clone(),
                        AssetDescriptor {
                            id: asset_id,
                            instance_type_id: type_id.clone(),
                            variation_seed: rng.gen(),
                        },
                    );
                }
            }
            cat_index += 1;
        }
    }

    for bi in 0..n_backgrounds {
        let id = BackgroundId(format!("bg{bi:03}"));
        bank.backgrounds.insert(
            id.clone(),
            BackgroundDescriptor {
                id,
                sky_top: rng.gen_range(110..=170),
                sky_horizon: rng.gen_range(90..=140),
                ground: rng.gen_range(60..=110),
                horizon: rng.gen_range(0.35..=0.55),
                light_azimuth: rng.gen_range(0.0..std::f64::consts::TAU),
                light_elevation: rng.gen_range(0.6..=1.2),
            },
        );
    }

    bank.validate()?;
    Ok(bank)
}

fn draw_separated_params(
    family: ShapeFamily,
    existing: &[(ShapeFamily, Vec<f64>)],
    rng: &mut Stream,
) -> Result<Vec<f64>> {
    let bounds = family.param_bounds();
    for _ in 0..200 {
        let params: Vec<f64> = bounds.iter().map(|(lo, hi)| rng.gen_range(*lo..=*hi)).collect();
        let separated = existing
            .iter()
            .filter(|(f, _)| *f == family)
            .all(|(_, q)| {
                params
                    .iter()
                    .zip(q)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0_f64, f64::max)
                    >= SHAPE_SEPARATION
            });
        if separated {
            return Ok(params);
        }
    }
    Err(Error::Taxonomy(
        "could not draw separated shape params; too many types per category for the \
         parameter space"
            .into(),
    ))
}

/// Draw the next category to emit an image for.
///
/// Candidates are the least-used categories (by `usage`); among them the draw
/// is weighted by `min(1, assets / mean_assets)` so that asset-poor
/// categories are reused less aggressively. Ties resolve in ascending id
/// order through the cumulative-weight scan.
pub fn sample_category<'b>(
    bank: &'b AssetBank,
    usage: &BTreeMap<CategoryId, u64>,
    rng: &mut Stream,
) -> Result<&'b Category> {
    if bank.categories.is_empty() {
        return Err(Error::Taxonomy("empty bank".into()));
    }
    for id in bank.categories.keys() {
        if !usage.contains_key(id) {
            return Err(Error::InvalidArgument(format!(
                "usage map does not cover category {id}"
            )));
        }
    }
    let mean_assets = bank.assets.len() as f64 / bank.categories.len() as f64;
    let min_usage = bank
        .categories
        .keys()
        .map(|id| usage[id])
        .min()
        .expect("nonempty");
    let candidates: Vec<(&CategoryId, f64)> = bank
        .categories
        .keys()
        .filter(|id| usage[*id] == min_usage)
        .map(|id| {
            let assets = bank.asset_count_of_category(id) as f64;
            (id, (assets / mean_assets).min(1.0))
        })
        .collect();
    let total: f64 = candidates.iter().map(|(_, w)| w).sum();
    let mut point = rng.gen_range(0.0..1.0) * total;
    for (id, w) in &candidates {
        point -= w;
        if point <= 0.0 {
            return Ok(&bank.categories[*id]);
        }
    }
    let (last, _) = candidates.last().expect("nonempty");
    Ok(&bank.categories[*last])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn palette_is_separated() {
        for (i, a) in PALETTE.iter().enumerate() {
            for b in &PALETTE[i + 1..] {
                let ca = a.rgb();
                let cb = b.rgb();
                let d2: f64 = ca
                    .iter()
                    .zip(&cb)
                    .map(|(x, y)| {
                        let d = *x as f64 - *y as f64;
                        d * d
                    })
                    .sum();
                assert!(
                    d2.sqrt() >= 120.0,
                    "{:?} and {:?} are only {:.1} apart",
                    a,
                    b,
                    d2.sqrt()
                );
            }
        }
    }

    #[test]
    fn palette_is_saturated() {
        // the qa inspector relies on objects never looking achromatic
        for c in PALETTE {
            let rgb = c.rgb();
            let spread = *rgb.iter().max().unwrap() as i32 - *rgb.iter().min().unwrap() as i32;
            assert!(spread >= 200, "{c:?} spread {spread}");
        }
    }

    #[test]
    fn bank_counts_follow_arithmetic() {
        let bank = build_bank(1, 2, 2, 2, 2, 4).unwrap();
        assert_eq!(bank.super_categories.len(), 2);
        assert_eq!(bank.categories.len(), 4);
        assert_eq!(bank.instance_types.len(), 8);
        assert_eq!(bank.assets.len(), 16);
        assert_eq!(bank.backgrounds.len(), 4);
    }

    #[test]
    fn bank_is_deterministic() {
        let a = build_bank(1, 3, 2, 2, 3, 5).unwrap();
        let b = build_bank(1, 3, 2, 2, 3, 5).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let c = build_bank(2, 3, 2, 2, 3, 5).unwrap();
        assert_ne!(a.to_json().unwrap(), c.to_json().unwrap());
    }

    #[test]
    fn bank_at_reference_scale() {
        let bank = build_bank(7, 16, 10, 2, 4, 50).unwrap();
        assert_eq!(bank.super_categories.len(), 16);
        assert_eq!(bank.categories.len(), 160);
    }

    #[test]
    fn zero_counts_rejected() {
        assert!(build_bank(1, 0, 2, 2, 2, 4).is_err());
        assert!(build_bank(1, 2, 2, 2, 2, 0).is_err());
    }

    #[test]
    fn single_type_per_category_rejected_with_l4_diagnostic() {
        let err = build_bank(1, 2, 2, 1, 2, 4).unwrap_err();
        assert!(err.to_string().contains("Level 4"));
    }

    #[test]
    fn types_within_category_are_separated() {
        let bank = build_bank(3, 4, 4, 4, 2, 2).unwrap();
        for cat in bank.categories.keys() {
            let types = bank.instance_types_of(cat);
            for (i, a) in types.iter().enumerate() {
                for b in &types[i + 1..] {
                    if a.shape_family == b.shape_family {
                        let linf = a
                            .shape_params
                            .iter()
                            .zip(&b.shape_params)
                            .map(|(x, y)| (x - y).abs())
                            .fold(0.0_f64, f64::max);
                        assert!(linf >= SHAPE_SEPARATION);
                    }
                }
            }
        }
    }

    #[test]
    fn bank_json_roundtrip() {
        let bank = build_bank(9, 2, 3, 2, 2, 3).unwrap();
        let text = bank.to_json().unwrap();
        let back = AssetBank::from_json(&text).unwrap();
        assert_eq!(bank, back);
    }

    fn zero_usage(bank: &AssetBank) -> BTreeMap<CategoryId, u64> {
        bank.categories.keys().map(|id| (id.clone(), 0)).collect()
    }

    #[test]
    fn least_used_category_wins() {
        let bank = build_bank(1, 1, 2, 2, 2, 1).unwrap();
        let mut usage = zero_usage(&bank);
        let ids: Vec<CategoryId> = bank.categories.keys().cloned().collect();
        *usage.get_mut(&ids[0]).unwrap() = 5;
        let mut rng = stream(0);
        for _ in 0..20 {
            let c = sample_category(&bank, &usage, &mut rng).unwrap();
            assert_eq!(c.id, ids[1]);
        }
    }

    #[test]
    fn uniform_draw_under_symmetry() {
        // chi-square over 1e5 draws, fixed equal usage and equal assets
        let bank = build_bank(5, 2, 5, 2, 2, 1).unwrap();
        let usage = zero_usage(&bank);
        let mut rng = stream(11);
        let n = 100_000;
        let k = bank.categories.len();
        let mut counts: BTreeMap<CategoryId, u64> = zero_usage(&bank);
        for _ in 0..n {
            let c = sample_category(&bank, &usage, &mut rng).unwrap();
            *counts.get_mut(&c.id).unwrap() += 1;
        }
        let expected = n as f64 / k as f64;
        let chi2: f64 = counts
            .values()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        // df = 9; mean 9, sigma = sqrt(2*9) ~ 4.24; 3 sigma above mean ~ 21.7
        assert!(chi2 < 21.8, "chi2 = {chi2}");
    }

    #[test]
    fn asset_poor_category_is_downweighted() {
        // Monte-Carlo oracle: with usage held fixed, the category holding a
        // fraction w of mean assets should appear with frequency
        // w / (k - 1 + w) among k candidates.
        let mut bank = build_bank(6, 2, 5, 2, 2, 1).unwrap();
        // strip the first category down to a single asset
        let first_cat = bank.categories.keys().next().unwrap().clone();
        let victim_assets: Vec<AssetId> = bank
            .assets
            .values()
            .filter(|a| {
                bank.instance_types[&a.instance_type_id].category_id == first_cat
            })
            .map(|a| a.id.clone())
            .collect();
        for id in victim_assets.iter().skip(1) {
            bank.assets.remove(id);
        }
        let usage = zero_usage(&bank);
        let mut rng = stream(13);
        let n = 100_000u64;
        let mut hits = 0u64;
        for _ in 0..n {
            if sample_category(&bank, &usage, &mut rng).unwrap().id == first_cat {
                hits += 1;
            }
        }
        let freq = hits as f64 / n as f64;
        let uniform = 1.0 / bank.categories.len() as f64;
        assert!(freq < uniform, "freq {freq} not below uniform {uniform}");
        let mean_assets = bank.assets.len() as f64 / bank.categories.len() as f64;
        let w = (1.0 / mean_assets).min(1.0);
        let predicted = w / (bank.categories.len() as f64 - 1.0 + w);
        assert!((freq - predicted).abs() < 5.0 * (predicted / n as f64).sqrt());
    }

    #[test]
    fn balance_under_least_used_rotation() {
        let bank = build_bank(8, 2, 5, 2, 2, 1).unwrap();
        let mut usage = zero_usage(&bank);
        let mut counts = zero_usage(&bank);
        let mut rng = stream(17);
        for _ in 0..10_000 {
            let id = sample_category(&bank, &usage, &mut rng).unwrap().id.clone();
            *usage.get_mut(&id).unwrap() += 1;
            *counts.get_mut(&id).unwrap() += 1;
        }
        let max = *counts.values().max().unwrap() as f64;
        let min = *counts.values().min().unwrap() as f64;
        assert!(max / min <= 1.2, "max/min = {}", max / min);
    }

    #[test]
    fn empty_bank_rejected() {
        let bank = AssetBank {
            super_categories: BTreeMap::new(),
            categories: BTreeMap::new(),
            instance_types: BTreeMap::new(),
            assets: BTreeMap::new(),
            backgrounds: BTreeMap::new(),
        };
        assert!(sample_category(&bank, &BTreeMap::new(), &mut stream(0)).is_err());
    }
}
