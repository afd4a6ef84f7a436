//! Scene instantiation: non-overlapping placement on a ground plane and
//! camera sampling under coverage constraints.
//!
//! Placement happens in a square region sized from the objects' exclusion
//! discs (radius `min_distance_ratio * bounding_radius`) divided by
//! `PACKING_FILL * density_factor`, so a higher density factor packs the
//! same objects into a smaller region while rejection sampling still
//! terminates. Every object rests exactly on the ground plane (y = 0) and
//! object bounding spheres keep a center distance of at least
//! `min_distance_ratio * (r_i + r_j)`.

use crate::error::{Error, Result};
use crate::levels::{GroupRole, GroupSpec, InstanceMeta, SceneRecipe};
use crate::math::{vec3, Vec3};
use crate::profiles::ProfileDraw;
use crate::render::InstanceIdMap;
use crate::rng::Stream;
use crate::splits::SplitAssignment;
use crate::taxonomy::{
    asset_geometry, AssetBank, AssetId, BackgroundDescriptor, ShapeFamily, SizeMode,
};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Scale multiplier separating the two size modes. The `Large` band is the
/// profile's base band times this factor; bands stay disjoint because the
/// factor exceeds any base band's hi/lo ratio.
pub const LARGE_SIZE_FACTOR: f64 = 1.6;

/// Placement attempts per instance before the whole scene restarts.
pub const PLACEMENT_TRIES: usize = 200;

/// Whole-scene placement restarts before giving up.
pub const PLACEMENT_RESTARTS: usize = 20;

/// Camera sampling attempts before giving up.
pub const CAMERA_RETRIES: usize = 50;

/// Exclusion-disc area fraction the placement region is budgeted for at
/// `density_factor` 1.0. Low enough that rejection sampling succeeds even
/// for dense profiles (which raise the effective fill by their density
/// factor).
pub const PACKING_FILL: f64 = 0.22;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub position: Vec3,
    pub yaw: f64,
    pub scale: f64,
}

/// Asset geometry resolved against the bank so rendering never needs the
/// bank again.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedShape {
    pub family: ShapeFamily,
    pub params: Vec<f64>,
    pub shade: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneInstance {
    /// 1-based, contiguous; 0 is reserved for background in the id map.
    pub instance_id: u16,
    pub asset_id: AssetId,
    #[serde(flatten)]
    pub meta: InstanceMeta,
    pub role: GroupRole,
    pub shape: ResolvedShape,
    pub placement: Placement,
    /// World-space bounding sphere radius around `placement.position`.
    pub bounding_radius: f64,
    /// World-space ground footprint radius.
    pub footprint_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub instances: Vec<SceneInstance>,
    pub background: BackgroundDescriptor,
    /// Half side length of the placement region.
    pub region_half: f64,
}

/// Local half-extents (x, y, z) of a shape before yaw/scale/translation.
/// All families are symmetric about the local origin, so the lowest point
/// sits at `-extents.1`.
pub fn local_extents(family: ShapeFamily, params: &[f64]) -> (f64, f64, f64) {
    match family {
        // width, depth, height
        ShapeFamily::Box => (params[0], params[2], params[1]),
        ShapeFamily::Ellipsoid | ShapeFamily::Superellipsoid => {
            (params[0], params[1], params[2])
        }
        // radius, half-height
        ShapeFamily::Cylinder => (params[0], params[1], params[0]),
    }
}

fn local_radii(family: ShapeFamily, params: &[f64]) -> (f64, f64) {
    let (hx, hy, hz) = local_extents(family, params);
    let bounding = (hx * hx + hy * hy + hz * hz).sqrt();
    let footprint = match family {
        ShapeFamily::Ellipsoid | ShapeFamily::Cylinder => hx.max(hz),
        _ => (hx * hx + hz * hz).sqrt(),
    };
    (bounding, footprint)
}

fn scale_band(draw: &ProfileDraw, size: SizeMode) -> (f64, f64) {
    let base = (draw.object_size_min, draw.object_size_max);
    match size {
        SizeMode::Small => base,
        SizeMode::Large => (base.0 * LARGE_SIZE_FACTOR, base.1 * LARGE_SIZE_FACTOR),
    }
}

struct Pending {
    asset_id: AssetId,
    meta: InstanceMeta,
    role: GroupRole,
    shape: ResolvedShape,
    scale: f64,
    yaw: f64,
    bounding_radius: f64,
    footprint_radius: f64,
    half_height: f64,
}

fn prepare_group(
    bank: &AssetBank,
    group: &GroupSpec,
    assets: &[AssetId],
    draw: &ProfileDraw,
    rng: &mut Stream,
) -> Result<Vec<Pending>> {
    let (lo, hi) = scale_band(draw, group.size_mode);
    assets
        .iter()
        .map(|asset_id| {
            let asset = bank
                .assets
                .get(asset_id)
                .ok_or_else(|| Error::Placement(format!("unknown asset {asset_id}")))?;
            let ty = &bank.instance_types[&asset.instance_type_id];
            let (params, shade) = asset_geometry(ty, asset);
            let scale = rng.gen_range(lo..=hi);
            let yaw = rng.gen_range(0.0..std::f64::consts::TAU);
            let (br, fr) = local_radii(ty.shape_family, &params);
            let (_, hy, _) = local_extents(ty.shape_family, &params);
            Ok(Pending {
                asset_id: asset_id.clone(),
                meta: InstanceMeta {
                    category_id: ty.category_id.clone(),
                    instance_type_id: ty.id.clone(),
                    size_mode: group.size_mode,
                    color: group.color,
                },
                role: group.role,
                shape: ResolvedShape { family: ty.shape_family, params: params.clone(), shade },
                scale,
                yaw,
                bounding_radius: br * scale,
                footprint_radius: fr * scale,
                half_height: hy * scale,
            })
        })
        .collect()
}

/// Instantiate the recipe: resolve asset geometry, draw scales and yaws, and
/// place everything without overlap. Deterministic in `(recipe, draw, rng)`.
pub fn place_objects(
    recipe: &SceneRecipe,
    bank: &AssetBank,
    splits: &SplitAssignment,
    draw: &ProfileDraw,
    rng: &mut Stream,
) -> Result<SceneGraph> {
    let total = recipe.total_count();
    if total == 0 {
        return Err(Error::Placement("recipe places no instances".into()));
    }
    if total > crate::MAX_INSTANCES {
        return Err(Error::Placement(format!(
            "recipe asks for {total} instances, above the {} cap; rejected before placement",
            crate::MAX_INSTANCES
        )));
    }

    let backgrounds = splits.backgrounds_for(recipe.split);
    if backgrounds.is_empty() {
        return Err(Error::Placement(format!(
            "no backgrounds available for split {}",
            recipe.split.as_str()
        )));
    }
    let bg_id = backgrounds[rng.gen_range(0..backgrounds.len())].clone();
    let background = bank.backgrounds[&bg_id].clone();

    let mut pending = Vec::with_capacity(total);
    for group in recipe.groups() {
        let assets = recipe.asset_choices.get(&group.role).ok_or_else(|| {
            Error::Placement(format!("recipe lacks asset choices for {}", group.role.as_str()))
        })?;
        if assets.len() != group.count {
            return Err(Error::Placement(format!(
                "{} group lists {} assets for count {}",
                group.role.as_str(),
                assets.len(),
                group.count
            )));
        }
        pending.extend(prepare_group(bank, group, assets, draw, rng)?);
    }

    let area: f64 = pending
        .iter()
        .map(|p| {
            let e = draw.min_distance_ratio * p.bounding_radius;
            std::f64::consts::PI * e * e
        })
        .sum();
    let max_fr = pending.iter().map(|p| p.footprint_radius).fold(0.0, f64::max);
    let region_half =
        (area / (PACKING_FILL * draw.density_factor)).sqrt().max(max_fr * 1.05);

    for _restart in 0..PLACEMENT_RESTARTS {
        let mut placed: Vec<(Vec3, f64)> = Vec::with_capacity(total);
        let mut positions: Vec<Vec3> = Vec::with_capacity(total);
        let mut ok = true;
        'inst: for p in &pending {
            let span = (region_half - p.footprint_radius).max(0.0);
            for _try in 0..PLACEMENT_TRIES {
                let x = rng.gen_range(-span..=span);
                let z = rng.gen_range(-span..=span);
                let pos = vec3(x, p.half_height, z);
                let clear = placed.iter().all(|(q, rq)| {
                    (pos - *q).norm() >= draw.min_distance_ratio * (p.bounding_radius + rq)
                });
                if clear {
                    placed.push((pos, p.bounding_radius));
                    positions.push(pos);
                    continue 'inst;
                }
            }
            ok = false;
            break;
        }
        if !ok {
            continue;
        }
        let instances = pending
            .iter()
            .zip(positions)
            .enumerate()
            .map(|(i, (p, position))| SceneInstance {
                instance_id: (i + 1) as u16,
                asset_id: p.asset_id.clone(),
                meta: p.meta.clone(),
                role: p.role,
                shape: p.shape.clone(),
                placement: Placement { position, yaw: p.yaw, scale: p.scale },
                bounding_radius: p.bounding_radius,
                footprint_radius: p.footprint_radius,
            })
            .collect();
        return Ok(SceneGraph { instances, background, region_half });
    }
    Err(Error::Placement(format!(
        "could not place {total} instances into region half-size {region_half:.2} after \
         {PLACEMENT_RESTARTS} restarts; density_factor {:.2} with min_distance_ratio {:.2} \
         leaves too little room",
        draw.density_factor, draw.min_distance_ratio
    )))
}

// ---------------------------------------------------------------------------
// camera
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub eye: Vec3,
    pub look_at: Vec3,
    /// 35mm-equivalent focal length in millimetres.
    pub focal_length: f64,
    pub image_size: (u32, u32),
}

/// Points closer than this to the camera plane do not project.
pub const NEAR_PLANE: f64 = 0.05;

impl CameraPose {
    pub fn focal_px(&self) -> f64 {
        self.focal_length * self.image_size.0 as f64 / 36.0
    }

    /// Orthonormal (right, up, forward) basis.
    pub fn basis(&self) -> (Vec3, Vec3, Vec3) {
        let forward = (self.look_at - self.eye).normalized();
        let mut right = forward.cross(vec3(0.0, 1.0, 0.0));
        if right.norm() < 1e-9 {
            right = vec3(1.0, 0.0, 0.0); // looking straight down
        }
        let right = right.normalized();
        let up = right.cross(forward);
        (right, up, forward)
    }

    /// Project a world point to (pixel x, pixel y, camera depth). `None` if
    /// the point lies at or behind the near plane.
    pub fn project(&self, p: Vec3) -> Option<(f64, f64, f64)> {
        let (right, up, forward) = self.basis();
        let d = p - self.eye;
        let depth = d.dot(forward);
        if depth <= NEAR_PLANE {
            return None;
        }
        let f = self.focal_px();
        let (w, h) = self.image_size;
        let px = w as f64 / 2.0 + f * d.dot(right) / depth;
        let py = h as f64 / 2.0 - f * d.dot(up) / depth;
        Some((px, py, depth))
    }
}

/// The eight world-space corners of an instance's oriented bounding box.
pub fn bbox3d_corners(inst: &SceneInstance) -> [Vec3; 8] {
    let (hx, hy, hz) = local_extents(inst.shape.family, &inst.shape.params);
    let mut corners = [Vec3::ZERO; 8];
    let mut i = 0;
    for sx in [-1.0, 1.0] {
        for sy in [-1.0, 1.0] {
            for sz in [-1.0, 1.0] {
                let local = vec3(sx * hx, sy * hy, sz * hz);
                corners[i] = crate::math::rotate_yaw(local, inst.placement.yaw)
                    * inst.placement.scale
                    + inst.placement.position;
                i += 1;
            }
        }
    }
    corners
}

fn fully_in_frame(pose: &CameraPose, inst: &SceneInstance) -> bool {
    let (w, h) = pose.image_size;
    bbox3d_corners(inst).iter().all(|c| match pose.project(*c) {
        Some((px, py, _)) => {
            px >= 0.0 && px <= w as f64 && py >= 0.0 && py <= h as f64
        }
        None => false,
    })
}

/// Fraction of instances whose projected 3D box lies fully inside the frame.
pub fn coverage(pose: &CameraPose, scene: &SceneGraph) -> f64 {
    let n = scene.instances.len();
    if n == 0 {
        return 0.0;
    }
    let k = scene.instances.iter().filter(|i| fully_in_frame(pose, i)).count();
    k as f64 / n as f64
}

/// Sample a camera pose whose coverage falls inside the draw's inclusive
/// `[coverage_min, coverage_max]` band. Errors immediately when no integer
/// count of covered instances can land in the band, and after
/// [`CAMERA_RETRIES`] rejected samples otherwise.
pub fn sample_camera(
    scene: &SceneGraph,
    draw: &ProfileDraw,
    image_size: (u32, u32),
    rng: &mut Stream,
) -> Result<CameraPose> {
    let n = scene.instances.len();
    if n == 0 {
        return Err(Error::Camera("scene has no instances".into()));
    }
    let eps = 1e-9;
    let k_lo = (draw.coverage_min * n as f64 - eps).ceil() as i64;
    let k_hi = (draw.coverage_max * n as f64 + eps).floor() as i64;
    if k_lo > k_hi {
        return Err(Error::Camera(format!(
            "coverage band [{:.3}, {:.3}] admits no integer count out of {n} instances",
            draw.coverage_min, draw.coverage_max
        )));
    }

    let centroid = scene
        .instances
        .iter()
        .fold(Vec3::ZERO, |acc, i| acc + i.placement.position)
        * (1.0 / n as f64);
    let scene_radius = scene
        .instances
        .iter()
        .map(|i| (i.placement.position - centroid).norm() + i.bounding_radius)
        .fold(0.0, f64::max);

    let mut last = String::from("no attempts made");
    for _ in 0..CAMERA_RETRIES {
        let azimuth = rng.gen_range(0.0..std::f64::consts::TAU);
        let angle = rng
            .gen_range(draw.camera_angle_min..=draw.camera_angle_max)
            .to_radians();
        let focal = rng.gen_range(draw.focal_length_min..=draw.focal_length_max);
        // bias the distance draw toward poses that can frame the whole scene
        // sphere at this focal length; the coverage check below still decides
        let (w, h) = image_size;
        let tan_half = (18.0 / focal) * (h as f64 / w as f64).min(1.0);
        let frame_dist = (scene_radius * (1.0 + 1.0 / tan_half))
            .clamp(draw.camera_distance_min, draw.camera_distance_max);
        let distance = rng.gen_range(frame_dist..=draw.camera_distance_max);
        let dir = vec3(
            angle.cos() * azimuth.cos(),
            angle.sin(),
            angle.cos() * azimuth.sin(),
        );
        let eye = centroid + dir * distance;
        if eye.y < draw.camera_height_min || eye.y > draw.camera_height_max {
            last = format!(
                "eye height {:.2} outside [{:.2}, {:.2}]",
                eye.y, draw.camera_height_min, draw.camera_height_max
            );
            continue;
        }
        let pose = CameraPose { eye, look_at: centroid, focal_length: focal, image_size };
        let cov = coverage(&pose, scene);
        if cov + eps >= draw.coverage_min && cov - eps <= draw.coverage_max {
            return Ok(pose);
        }
        last = format!(
            "coverage {:.3} outside [{:.3}, {:.3}]",
            cov, draw.coverage_min, draw.coverage_max
        );
    }
    Err(Error::Camera(format!(
        "no valid pose after {CAMERA_RETRIES} attempts; last rejection: {last}"
    )))
}

/// Require every instance to own at least `min_pixels` pixels in the id map.
pub fn enforce_visibility(
    scene: &SceneGraph,
    id_map: &InstanceIdMap,
    min_pixels: u32,
) -> Result<()> {
    let mut counts = vec![0u32; scene.instances.len() + 1];
    for &id in &id_map.ids {
        if (id as usize) < counts.len() {
            counts[id as usize] += 1;
        }
    }
    let hidden: Vec<u16> = scene
        .instances
        .iter()
        .map(|i| i.instance_id)
        .filter(|&id| counts[id as usize] < min_pixels)
        .collect();
    if hidden.is_empty() {
        Ok(())
    } else {
        Err(Error::Render(format!(
            "instances {hidden:?} have fewer than {min_pixels} visible pixels"
        )))
    }
}
