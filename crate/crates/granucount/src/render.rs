//! Deterministic software rasterizer and annotation derivation.
//!
//! Shapes are tessellated into triangles with fixed budgets, projected
//! through the scene's pinhole camera, and rasterized with a z-buffer that
//! stores inverse depth. Ties resolve to the earlier-drawn triangle, so
//! output is a pure function of (scene, camera) with no prng involved.
//!
//! Shading is flat per triangle: `ambient + diffuse * max(0, n . l)` times
//! the asset's shade factor. The ambient floor keeps every object pixel far
//! from the achromatic background grays, which the qa inspector relies on.

use crate::error::{Error, Result};
use crate::levels::{GroupRole, InstanceMeta};
use crate::math::{rotate_yaw, vec3, Vec3};
use crate::scene::{bbox3d_corners, CameraPose, SceneGraph};
use crate::taxonomy::ShapeFamily;
use serde::{Deserialize, Serialize};
use std::io::{Read as _, Write as _};
use std::path::Path;

pub const AMBIENT: f64 = 0.55;
pub const DIFFUSE: f64 = 0.45;

/// Inclusive pixel-coordinate bounding box.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Box2D {
    pub xmin: u32,
    pub ymin: u32,
    pub xmax: u32,
    pub ymax: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    /// Row-major RGB, 3 bytes per pixel.
    pub data: Vec<u8>,
}

impl Image {
    pub fn new(width: u32, height: u32) -> Image {
        Image { width, height, data: vec![0; (width * height * 3) as usize] }
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = ((y * self.width + x) * 3) as usize;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = ((y * self.width + x) * 3) as usize;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}

/// Per-pixel instance ids; 0 is background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceIdMap {
    pub width: u32,
    pub height: u32,
    pub ids: Vec<u16>,
}

impl InstanceIdMap {
    pub fn new(width: u32, height: u32) -> InstanceIdMap {
        InstanceIdMap { width, height, ids: vec![0; (width * height) as usize] }
    }

    pub fn get(&self, x: u32, y: u32) -> u16 {
        self.ids[(y * self.width + x) as usize]
    }
}

// ---------------------------------------------------------------------------
// tessellation
// ---------------------------------------------------------------------------

const LAT_STEPS: usize = 16;
const LON_STEPS: usize = 24;

/// Fixed-budget triangle mesh in local coordinates. Pole and cap vertices
/// hit the analytic extents exactly, which the ground-contact invariant
/// depends on.
pub fn tessellate(family: ShapeFamily, params: &[f64]) -> Vec<[Vec3; 3]> {
    match family {
        ShapeFamily::Box => {
            let (hx, hz, hy) = (params[0], params[1], params[2]);
            let c = |sx: f64, sy: f64, sz: f64| vec3(sx * hx, sy * hy, sz * hz);
            let faces = [
                // +x, -x, +y, -y, +z, -z
                [c(1., -1., -1.), c(1., 1., -1.), c(1., 1., 1.), c(1., -1., 1.)],
                [c(-1., -1., 1.), c(-1., 1., 1.), c(-1., 1., -1.), c(-1., -1., -1.)],
                [c(-1., 1., -1.), c(-1., 1., 1.), c(1., 1., 1.), c(1., 1., -1.)],
                [c(-1., -1., 1.), c(-1., -1., -1.), c(1., -1., -1.), c(1., -1., 1.)],
                [c(-1., -1., 1.), c(1., -1., 1.), c(1., 1., 1.), c(-1., 1., 1.)],
                [c(1., -1., -1.), c(-1., -1., -1.), c(-1., 1., -1.), c(1., 1., -1.)],
            ];
            let mut tris = Vec::with_capacity(12);
            for [a, b, c, d] in faces {
                tris.push([a, b, c]);
                tris.push([a, c, d]);
            }
            tris
        }
        ShapeFamily::Ellipsoid => lat_lon_mesh(|theta, phi| {
            let (rx, ry, rz) = (params[0], params[1], params[2]);
            vec3(
                rx * theta.sin() * phi.cos(),
                ry * theta.cos(),
                rz * theta.sin() * phi.sin(),
            )
        }),
        ShapeFamily::Superellipsoid => {
            let (rx, ry, rz, e1, e2) = (params[0], params[1], params[2], params[3], params[4]);
            let sp = |w: f64, m: f64| w.signum() * w.abs().powf(m);
            lat_lon_mesh(|theta, phi| {
                // theta in [0, pi] from the +y pole; latitude = pi/2 - theta
                let lat = std::f64::consts::FRAC_PI_2 - theta;
                vec3(
                    rx * sp(lat.cos(), e1) * sp(phi.cos(), e2),
                    ry * sp(lat.sin(), e1),
                    rz * sp(lat.cos(), e1) * sp(phi.sin(), e2),
                )
            })
        }
        ShapeFamily::Cylinder => {
            let (r, hh) = (params[0], params[1]);
            let mut tris = Vec::new();
            let ring = |j: usize, y: f64| {
                let phi = j as f64 / LON_STEPS as f64 * std::f64::consts::TAU;
                vec3(r * phi.cos(), y, r * phi.sin())
            };
            for j in 0..LON_STEPS {
                let (a, b) = (ring(j, -hh), ring(j + 1, -hh));
                let (c, d) = (ring(j, hh), ring(j + 1, hh));
                tris.push([a, b, d]);
                tris.push([a, d, c]);
                tris.push([vec3(0.0, hh, 0.0), c, d]);
                tris.push([vec3(0.0, -hh, 0.0), b, a]);
            }
            tris
        }
    }
}

fn lat_lon_mesh(surface: impl Fn(f64, f64) -> Vec3) -> Vec<[Vec3; 3]> {
    let mut tris = Vec::with_capacity(LAT_STEPS * LON_STEPS * 2);
    let point = |i: usize, j: usize| {
        let theta = i as f64 / LAT_STEPS as f64 * std::f64::consts::PI;
        let phi = j as f64 / LON_STEPS as f64 * std::f64::consts::TAU;
        surface(theta, phi)
    };
    for i in 0..LAT_STEPS {
        for j in 0..LON_STEPS {
            let a = point(i, j);
            let b = point(i + 1, j);
            let c = point(i + 1, j + 1);
            let d = point(i, j + 1);
            tris.push([a, b, c]);
            tris.push([a, c, d]);
        }
    }
    tris
}

// ---------------------------------------------------------------------------
// rasterization
// ---------------------------------------------------------------------------

fn background_color(bg: &crate::taxonomy::BackgroundDescriptor, y: u32, height: u32) -> [u8; 3] {
    let horizon_row = (bg.horizon * height as f64) as u32;
    let g = if y >= horizon_row || horizon_row == 0 {
        bg.ground
    } else {
        let t = y as f64 / horizon_row as f64;
        (bg.sky_top as f64 + t * (bg.sky_horizon as f64 - bg.sky_top as f64)).round() as u8
    };
    [g, g, g]
}

fn light_direction(bg: &crate::taxonomy::BackgroundDescriptor) -> Vec3 {
    vec3(
        bg.light_elevation.cos() * bg.light_azimuth.cos(),
        bg.light_elevation.sin(),
        bg.light_elevation.cos() * bg.light_azimuth.sin(),
    )
}

/// Rasterize the scene. Returns the RGB image and the per-pixel instance id
/// map; the two are always consistent because they come from one z-buffer
/// pass.
pub fn render(scene: &SceneGraph, camera: &CameraPose) -> (Image, InstanceIdMap) {
    let (w, h) = camera.image_size;
    let mut image = Image::new(w, h);
    let mut ids = InstanceIdMap::new(w, h);
    for y in 0..h {
        let rgb = background_color(&scene.background, y, h);
        for x in 0..w {
            image.set(x, y, rgb);
        }
    }

    let light = light_direction(&scene.background).normalized();
    let mut zbuf = vec![0.0f64; (w * h) as usize]; // inverse depth; 0 = empty

    for inst in &scene.instances {
        let base = inst.meta.color.rgb();
        for tri in tessellate(inst.shape.family, &inst.shape.params) {
            let world: Vec<Vec3> = tri
                .iter()
                .map(|v| {
                    rotate_yaw(*v, inst.placement.yaw) * inst.placement.scale
                        + inst.placement.position
                })
                .collect();
            let normal = (world[1] - world[0]).cross(world[2] - world[0]);
            if normal.norm() < 1e-15 {
                continue;
            }
            let n = normal.normalized();
            // closed meshes: treat the normal as two-sided
            let lambert = n.dot(light).abs();
            let factor = (AMBIENT + DIFFUSE * lambert) * inst.shape.shade;
            let rgb = base.map(|c| ((c as f64 * factor).round().min(255.0)) as u8);

            let Some(p0) = camera.project(world[0]) else { continue };
            let Some(p1) = camera.project(world[1]) else { continue };
            let Some(p2) = camera.project(world[2]) else { continue };
            raster_triangle(
                &mut image,
                &mut ids,
                &mut zbuf,
                inst.instance_id,
                rgb,
                [p0, p1, p2],
            );
        }
    }
    (image, ids)
}

fn raster_triangle(
    image: &mut Image,
    ids: &mut InstanceIdMap,
    zbuf: &mut [f64],
    instance_id: u16,
    rgb: [u8; 3],
    pts: [(f64, f64, f64); 3],
) {
    let (w, h) = (image.width, image.height);
    let area = (pts[1].0 - pts[0].0) * (pts[2].1 - pts[0].1)
        - (pts[2].0 - pts[0].0) * (pts[1].1 - pts[0].1);
    if area.abs() < 1e-12 {
        return;
    }
    let xs = pts.iter().map(|p| p.0);
    let ys = pts.iter().map(|p| p.1);
    let xmin = xs.clone().fold(f64::INFINITY, f64::min).floor().max(0.0) as u32;
    let xmax = xs.fold(f64::NEG_INFINITY, f64::max).ceil().min(w as f64 - 1.0) as i64;
    let ymin = ys.clone().fold(f64::INFINITY, f64::min).floor().max(0.0) as u32;
    let ymax = ys.fold(f64::NEG_INFINITY, f64::max).ceil().min(h as f64 - 1.0) as i64;
    if xmax < 0 || ymax < 0 {
        return;
    }
    let inv_z = [1.0 / pts[0].2, 1.0 / pts[1].2, 1.0 / pts[2].2];
    for y in ymin..=(ymax as u32) {
        for x in xmin..=(xmax as u32) {
            let px = x as f64 + 0.5;
            let py = y as f64 + 0.5;
            let e0 = (pts[1].0 - pts[0].0) * (py - pts[0].1)
                - (px - pts[0].0) * (pts[1].1 - pts[0].1);
            let e1 = (pts[2].0 - pts[1].0) * (py - pts[1].1)
                - (px - pts[1].0) * (pts[2].1 - pts[1].1);
            let e2 = (pts[0].0 - pts[2].0) * (py - pts[2].1)
                - (px - pts[2].0) * (pts[0].1 - pts[2].1);
            let (l0, l1, l2) = (e1 / area, e2 / area, e0 / area);
            if l0 < 0.0 || l1 < 0.0 || l2 < 0.0 {
                continue;
            }
            // inverse depth interpolates linearly in screen space
            let iz = l0 * inv_z[0] + l1 * inv_z[1] + l2 * inv_z[2];
            let idx = (y * w + x) as usize;
            if iz > zbuf[idx] {
                zbuf[idx] = iz;
                image.set(x, y, rgb);
                ids.ids[idx] = instance_id;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// annotations
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceAnnotation {
    pub instance_id: u16,
    #[serde(flatten)]
    pub meta: InstanceMeta,
    pub role: GroupRole,
    pub pixel_count: u32,
    /// Mask centroid in pixel coordinates.
    pub center_point: [f64; 2],
    pub bbox2d: Box2D,
    /// Eight world-space corners of the oriented 3D box.
    pub bbox3d: [[f64; 3]; 8],
    /// Full-image run-length encoding of the instance mask; runs alternate
    /// background/foreground starting with background.
    pub mask_rle: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub width: u32,
    pub height: u32,
    pub instances: Vec<InstanceAnnotation>,
}

/// Encode a row-major boolean mask: alternating run lengths starting with a
/// (possibly zero) background run. Runs always sum to the mask length.
pub fn encode_rle(mask: &[bool]) -> Vec<u32> {
    let mut runs = Vec::new();
    let mut current = false; // rle starts counting background
    let mut run = 0u32;
    for &bit in mask {
        if bit == current {
            run += 1;
        } else {
            runs.push(run);
            current = bit;
            run = 1;
        }
    }
    runs.push(run);
    runs
}

pub fn decode_rle(runs: &[u32], width: u32, height: u32) -> Result<Vec<bool>> {
    let total: u64 = runs.iter().map(|&r| r as u64).sum();
    let expect = width as u64 * height as u64;
    if total != expect {
        return Err(Error::Annotation(format!(
            "rle runs sum to {total}, mask needs {expect}"
        )));
    }
    let mut mask = Vec::with_capacity(expect as usize);
    let mut value = false;
    for &r in runs {
        mask.extend(std::iter::repeat(value).take(r as usize));
        value = !value;
    }
    Ok(mask)
}

/// Derive per-instance annotations from the id map. Errors if any instance
/// ended up with zero visible pixels (the caller resamples the scene).
pub fn derive_annotations(
    scene: &SceneGraph,
    id_map: &InstanceIdMap,
) -> Result<AnnotationSet> {
    let (w, h) = (id_map.width, id_map.height);
    let mut instances = Vec::with_capacity(scene.instances.len());
    for inst in &scene.instances {
        let mask: Vec<bool> = id_map.ids.iter().map(|&id| id == inst.instance_id).collect();
        let mut count = 0u32;
        let (mut sx, mut sy) = (0.0f64, 0.0f64);
        let (mut xmin, mut ymin, mut xmax, mut ymax) = (u32::MAX, u32::MAX, 0u32, 0u32);
        for (i, &bit) in mask.iter().enumerate() {
            if !bit {
                continue;
            }
            let x = i as u32 % w;
            let y = i as u32 / w;
            count += 1;
            sx += x as f64 + 0.5;
            sy += y as f64 + 0.5;
            xmin = xmin.min(x);
            ymin = ymin.min(y);
            xmax = xmax.max(x);
            ymax = ymax.max(y);
        }
        if count == 0 {
            return Err(Error::Annotation(format!(
                "instance {} is fully occluded or out of frame",
                inst.instance_id
            )));
        }
        let corners = bbox3d_corners(inst);
        instances.push(InstanceAnnotation {
            instance_id: inst.instance_id,
            meta: inst.meta.clone(),
            role: inst.role,
            pixel_count: count,
            center_point: [sx / count as f64, sy / count as f64],
            bbox2d: Box2D { xmin, ymin, xmax, ymax },
            bbox3d: corners.map(|c| [c.x, c.y, c.z]),
            mask_rle: encode_rle(&mask),
        });
    }
    Ok(AnnotationSet { width: w, height: h, instances })
}

// ---------------------------------------------------------------------------
// image io
// ---------------------------------------------------------------------------

/// Binary PPM (P6), 8 bits per channel.
pub fn write_ppm(path: &Path, image: &Image) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    write!(f, "P6\n{} {}\n255\n", image.width, image.height)?;
    f.write_all(&image.data)?;
    Ok(())
}

pub fn read_ppm(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path)?;
    let (w, h, maxval, offset) = parse_pnm_header(&bytes, b"P6")?;
    if maxval != 255 {
        return Err(Error::Render(format!("ppm maxval {maxval}, expected 255")));
    }
    let need = (w * h * 3) as usize;
    if bytes.len() < offset + need {
        return Err(Error::Render("ppm payload truncated".into()));
    }
    Ok(Image { width: w, height: h, data: bytes[offset..offset + need].to_vec() })
}

/// Binary PGM (P5) with 16-bit big-endian samples; holds instance ids.
pub fn write_pgm16(path: &Path, map: &InstanceIdMap) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    write!(f, "P5\n{} {}\n65535\n", map.width, map.height)?;
    let mut buf = Vec::with_capacity(map.ids.len() * 2);
    for &id in &map.ids {
        buf.extend_from_slice(&id.to_be_bytes());
    }
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_pgm16(path: &Path) -> Result<InstanceIdMap> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let (w, h, maxval, offset) = parse_pnm_header(&bytes, b"P5")?;
    if maxval != 65535 {
        return Err(Error::Render(format!("pgm maxval {maxval}, expected 65535")));
    }
    let need = (w * h) as usize * 2;
    if bytes.len() < offset + need {
        return Err(Error::Render("pgm payload truncated".into()));
    }
    let ids = bytes[offset..offset + need]
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok(InstanceIdMap { width: w, height: h, ids })
}

fn parse_pnm_header(bytes: &[u8], magic: &[u8]) -> Result<(u32, u32, u32, usize)> {
    if !bytes.starts_with(magic) {
        return Err(Error::Render("bad pnm magic".into()));
    }
    let mut pos = magic.len();
    let mut fields = [0u32; 3];
    for field in fields.iter_mut() {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Render("bad pnm header".into()))?;
    }
    // single whitespace byte after maxval
    pos += 1;
    Ok((fields[0], fields[1], fields[2], pos))
}
