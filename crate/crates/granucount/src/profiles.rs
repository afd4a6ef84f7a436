//! Configuration-driven synthesis hyperparameters.
//!
//! A [`ConfigProfile`] stores one `[lo, hi]` range per synthesis key; a
//! [`ProfileDraw`] collapses every range to a concrete scalar with one
//! uniform draw per key, in the fixed key order below.
//!
//! Local semantics for the two underspecified keys:
//! - `density_factor` divides the placement-region area budget: higher
//!   values pack objects tighter (see the scene module).
//! - `coverage_min`/`coverage_max` bound the fraction of instances whose
//!   projected 2D box lies fully inside the frame, inclusive.

use crate::error::{Error, Result};
use crate::rng::{stream, Stream};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub type Range = [f64; 2];

/// Key order used for drawing and serialization.
pub const PROFILE_KEYS: [&str; 16] = [
    "min_objects_per_group",
    "max_total_objects",
    "object_size_min",
    "object_size_max",
    "density_factor",
    "min_distance_ratio",
    "camera_distance_min",
    "camera_distance_max",
    "camera_height_min",
    "camera_height_max",
    "camera_angle_min",
    "camera_angle_max",
    "focal_length_min",
    "focal_length_max",
    "coverage_min",
    "coverage_max",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigProfile {
    pub min_objects_per_group: Range,
    pub max_total_objects: Range,
    pub object_size_min: Range,
    pub object_size_max: Range,
    pub density_factor: Range,
    pub min_distance_ratio: Range,
    pub camera_distance_min: Range,
    pub camera_distance_max: Range,
    pub camera_height_min: Range,
    pub camera_height_max: Range,
    /// Camera depression angle in degrees, within [0, 90].
    pub camera_angle_min: Range,
    pub camera_angle_max: Range,
    /// 35mm-equivalent focal length in millimetres.
    pub focal_length_min: Range,
    pub focal_length_max: Range,
    pub coverage_min: Range,
    pub coverage_max: Range,
}

impl ConfigProfile {
    fn ranges(&self) -> [(&'static str, Range); 16] {
        [
            ("min_objects_per_group", self.min_objects_per_group),
            ("max_total_objects", self.max_total_objects),
            ("object_size_min", self.object_size_min),
            ("object_size_max", self.object_size_max),
            ("density_factor", self.density_factor),
            ("min_distance_ratio", self.min_distance_ratio),
            ("camera_distance_min", self.camera_distance_min),
            ("camera_distance_max", self.camera_distance_max),
            ("camera_height_min", self.camera_height_min),
            ("camera_height_max", self.camera_height_max),
            ("camera_angle_min", self.camera_angle_min),
            ("camera_angle_max", self.camera_angle_max),
            ("focal_length_min", self.focal_length_min),
            ("focal_length_max", self.focal_length_max),
            ("coverage_min", self.coverage_min),
            ("coverage_max", self.coverage_max),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (key, [lo, hi]) in self.ranges() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Profile(format!("{key}: non-finite bound")));
            }
            if lo > hi {
                return Err(Error::Profile(format!("{key}: inverted range [{lo}, {hi}]")));
            }
        }
        if self.object_size_min[1] >= self.object_size_max[0] {
            return Err(Error::Profile(
                "object_size_min range must lie strictly below object_size_max".into(),
            ));
        }
        for (key, [lo, hi]) in [
            ("camera_angle_min", self.camera_angle_min),
            ("camera_angle_max", self.camera_angle_max),
        ] {
            if lo < 0.0 || hi > 90.0 {
                return Err(Error::Profile(format!(
                    "{key}: angle range [{lo}, {hi}] outside [0, 90]"
                )));
            }
        }
        for (key, [lo, hi]) in
            [("coverage_min", self.coverage_min), ("coverage_max", self.coverage_max)]
        {
            if lo < 0.0 || hi > 1.0 {
                return Err(Error::Profile(format!(
                    "{key}: coverage range [{lo}, {hi}] outside [0, 1]"
                )));
            }
        }
        // every paired min/max key must stay ordered after any draw
        for (min_key, min, max) in [
            ("camera_distance_min", self.camera_distance_min, self.camera_distance_max),
            ("camera_height_min", self.camera_height_min, self.camera_height_max),
            ("camera_angle_min", self.camera_angle_min, self.camera_angle_max),
            ("focal_length_min", self.focal_length_min, self.focal_length_max),
            ("coverage_min", self.coverage_min, self.coverage_max),
        ] {
            if min[1] > max[0] {
                return Err(Error::Profile(format!(
                    "{min_key} range overlaps its max counterpart ({:?} vs {:?})",
                    min, max
                )));
            }
        }
        if self.min_objects_per_group[0] < 1.0 {
            return Err(Error::Profile(
                "min_objects_per_group must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Built-in profile used when no profile file is given. Mirrors the
    /// documented example ranges except that `coverage_max` reaches 1.0 so
    /// small scenes (where coverage is quantized to k/N) stay composable.
    pub fn builtin_default() -> ConfigProfile {
        ConfigProfile {
            min_objects_per_group: [3.0, 6.0],
            max_total_objects: [8.0, 16.0],
            object_size_min: [1.00, 1.20],
            object_size_max: [1.40, 1.70],
            density_factor: [1.00, 1.10],
            min_distance_ratio: [0.86, 0.94],
            camera_distance_min: [4.8, 6.0],
            camera_distance_max: [10.0, 13.5],
            camera_height_min: [1.0, 2.0],
            camera_height_max: [8.0, 12.0],
            camera_angle_min: [10.0, 16.0],
            camera_angle_max: [50.0, 65.0],
            focal_length_min: [24.0, 32.0],
            focal_length_max: [60.0, 78.0],
            coverage_min: [0.70, 0.75],
            coverage_max: [1.00, 1.00],
        }
    }
}

/// Parse and validate a profile document (each key maps to a 2-element
/// numeric array).
pub fn load_profile(document: &str) -> Result<ConfigProfile> {
    let profile: ConfigProfile = serde_json::from_str(document)
        .map_err(|e| Error::Profile(format!("profile parse: {e}")))?;
    profile.validate()?;
    Ok(profile)
}

pub fn serialize_profile(profile: &ConfigProfile) -> Result<String> {
    Ok(serde_json::to_string_pretty(profile)?)
}

/// One concrete scalar per profile key plus the seed it was drawn with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileDraw {
    pub seed: u64,
    pub min_objects_per_group: f64,
    pub max_total_objects: f64,
    pub object_size_min: f64,
    pub object_size_max: f64,
    pub density_factor: f64,
    pub min_distance_ratio: f64,
    pub camera_distance_min: f64,
    pub camera_distance_max: f64,
    pub camera_height_min: f64,
    pub camera_height_max: f64,
    pub camera_angle_min: f64,
    pub camera_angle_max: f64,
    pub focal_length_min: f64,
    pub focal_length_max: f64,
    pub coverage_min: f64,
    pub coverage_max: f64,
}

fn uniform(rng: &mut Stream, [lo, hi]: Range) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// Collapse every range to one uniform scalar. Scalars are drawn in
/// [`PROFILE_KEYS`] order from the given stream.
pub fn draw(profile: &ConfigProfile, rng: &mut Stream, seed: u64) -> ProfileDraw {
    ProfileDraw {
        seed,
        min_objects_per_group: uniform(rng, profile.min_objects_per_group),
        max_total_objects: uniform(rng, profile.max_total_objects),
        object_size_min: uniform(rng, profile.object_size_min),
        object_size_max: uniform(rng, profile.object_size_max),
        density_factor: uniform(rng, profile.density_factor),
        min_distance_ratio: uniform(rng, profile.min_distance_ratio),
        camera_distance_min: uniform(rng, profile.camera_distance_min),
        camera_distance_max: uniform(rng, profile.camera_distance_max),
        camera_height_min: uniform(rng, profile.camera_height_min),
        camera_height_max: uniform(rng, profile.camera_height_max),
        camera_angle_min: uniform(rng, profile.camera_angle_min),
        camera_angle_max: uniform(rng, profile.camera_angle_max),
        focal_length_min: uniform(rng, profile.focal_length_min),
        focal_length_max: uniform(rng, profile.focal_length_max),
        coverage_min: uniform(rng, profile.coverage_min),
        coverage_max: uniform(rng, profile.coverage_max),
    }
}

/// Draw from a fresh stream seeded with `seed`; the recipe records this seed
/// so the draw replays exactly.
pub fn draw_with_seed(profile: &ConfigProfile, seed: u64) -> ProfileDraw {
    draw(profile, &mut stream(seed), seed)
}

/// Scaling factors applied by [`dense_variant_with`]. Not idempotent:
/// applying the variant twice scales twice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenseScaling {
    pub count_factor: f64,
    pub spacing_factor: f64,
    pub density_factor: f64,
}

impl Default for DenseScaling {
    fn default() -> Self {
        DenseScaling { count_factor: 3.0, spacing_factor: 0.75, density_factor: 1.5 }
    }
}

pub fn dense_variant(profile: &ConfigProfile) -> Result<ConfigProfile> {
    dense_variant_with(profile, DenseScaling::default())
}

pub fn dense_variant_with(
    profile: &ConfigProfile,
    scaling: DenseScaling,
) -> Result<ConfigProfile> {
    profile.validate()?;
    let cap = crate::MAX_INSTANCES as f64;
    let mut dense = profile.clone();
    dense.max_total_objects = [
        (profile.max_total_objects[0] * scaling.count_factor).min(cap),
        (profile.max_total_objects[1] * scaling.count_factor).min(cap),
    ];
    dense.min_distance_ratio = [
        profile.min_distance_ratio[0] * scaling.spacing_factor,
        profile.min_distance_ratio[1] * scaling.spacing_factor,
    ];
    dense.density_factor = [
        profile.density_factor[0] * scaling.density_factor,
        profile.density_factor[1] * scaling.density_factor,
    ];
    dense.validate()?;
    Ok(dense)
}
