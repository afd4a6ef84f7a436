//! Edit-filter quality loop with pluggable editor and inspector stages.
//!
//! A sample enters the loop with its rendered prototype image and id map.
//! Each iteration the editor produces a candidate image and the inspector
//! returns a pass/fail verdict; failing samples are re-edited with fresh
//! derived seeds up to the iteration budget, then discarded. Editor or
//! inspector errors quarantine the sample instead of aborting the batch.
//!
//! The reference inspector leans on two dataset invariants: object palette
//! colors are saturated while backgrounds are achromatic, and flat shading
//! never darkens below the ambient floor. Any erased instance, any inserted
//! palette-colored blob, and any displaced or recolored instance therefore
//! clears the detection thresholds by a wide margin, while benign per-pixel
//! noise (up to 8 per channel) stays well inside them.

use crate::error::{Error, Result};
use crate::render::{Image, InstanceIdMap};
use crate::rng::{derive_seed, Stream};
use crate::scene::SceneGraph;
use crate::taxonomy::{ColorName, PALETTE};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// One unit of work for the loop.
#[derive(Debug, Clone)]
pub struct QaSample {
    pub id: String,
    pub prototype: Image,
    pub id_map: InstanceIdMap,
    /// Palette color of every instance present in the id map.
    pub instance_colors: BTreeMap<u16, ColorName>,
}

impl QaSample {
    pub fn from_scene(
        id: impl Into<String>,
        scene: &SceneGraph,
        prototype: Image,
        id_map: InstanceIdMap,
    ) -> QaSample {
        QaSample {
            id: id.into(),
            prototype,
            id_map,
            instance_colors: scene
                .instances
                .iter()
                .map(|i| (i.instance_id, i.meta.color))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FailureReason {
    LayoutDrift,
    CountChange,
    IdentityCorruption,
    BackgroundHallucination,
    SevereArtifact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub pass: bool,
    pub reasons: Vec<FailureReason>,
    pub notes: Vec<String>,
}

impl Verdict {
    pub fn pass() -> Verdict {
        Verdict { pass: true, reasons: Vec::new(), notes: Vec::new() }
    }
}

/// Detection thresholds. Defaults are tuned to the dataset's color margins:
/// benign noise is at most 8 per channel, while a shaded object pixel and
/// any background gray differ by 55+ in at least one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InspectorTolerances {
    /// A pixel within this L-infinity distance of its prototype value still
    /// counts as unchanged.
    pub match_dist: f64,
    /// A pixel within this distance of the local background gray counts as
    /// erased.
    pub erase_dist: f64,
    /// Fraction of an instance's pixels that must be erased before the count
    /// is considered changed.
    pub erased_fraction: f64,
    /// Instances keeping fewer matching pixels than this are gone.
    pub min_visible_pixels: u32,
    /// Mean-color shift that flags a repainted instance.
    pub recolor_dist: f64,
    /// Centroid displacement (pixels) that flags a moved instance.
    pub drift_px: f64,
    /// Minimum connected area of a palette-colored blob on background.
    pub blob_min_area: u32,
    /// Distance to the nearest shaded palette color for blob membership.
    pub blob_color_dist: f64,
    /// Change against the prototype a background pixel must show before it
    /// is even considered part of a hallucinated blob.
    pub bg_change_dist: f64,
}

impl Default for InspectorTolerances {
    fn default() -> Self {
        InspectorTolerances {
            match_dist: 30.0,
            erase_dist: 30.0,
            erased_fraction: 0.5,
            min_visible_pixels: 4,
            recolor_dist: 60.0,
            drift_px: 3.0,
            blob_min_area: 40,
            blob_color_dist: 40.0,
            bg_change_dist: 20.0,
        }
    }
}

pub trait Editor {
    fn edit(&self, sample: &QaSample, iteration: u32) -> Result<Image>;
}

pub trait Inspector {
    fn inspect(&self, sample: &QaSample, edited: &Image) -> Result<Verdict>;
}

// ---------------------------------------------------------------------------
// reference inspector
// ---------------------------------------------------------------------------

fn d_inf(a: [u8; 3], b: [u8; 3]) -> f64 {
    a.iter()
        .zip(&b)
        .map(|(x, y)| (*x as f64 - *y as f64).abs())
        .fold(0.0, f64::max)
}

/// Per-row background gray estimated from prototype pixels the id map marks
/// as background. Rows fully covered by objects fall back to the global mean.
pub fn row_background(prototype: &Image, id_map: &InstanceIdMap) -> Vec<f64> {
    let (w, h) = (prototype.width, prototype.height);
    let mut rows = Vec::with_capacity(h as usize);
    let mut global_sum = 0.0;
    let mut global_n = 0u64;
    for y in 0..h {
        let mut sum = 0.0;
        let mut n = 0u64;
        for x in 0..w {
            if id_map.get(x, y) == 0 {
                sum += prototype.get(x, y)[0] as f64; // achromatic: any channel
                n += 1;
            }
        }
        global_sum += sum;
        global_n += n;
        rows.push(if n > 0 { sum / n as f64 } else { f64::NAN });
    }
    let global = if global_n > 0 { global_sum / global_n as f64 } else { 128.0 };
    for r in rows.iter_mut() {
        if r.is_nan() {
            *r = global;
        }
    }
    rows
}

/// Least-squares shade factor mapping base color `c` onto pixel `p`,
/// clamped to the plausible shading range.
fn shade_fit(p: [u8; 3], c: [u8; 3]) -> f64 {
    let num: f64 = p.iter().zip(&c).map(|(a, b)| *a as f64 * *b as f64).sum();
    let den: f64 = c.iter().map(|b| (*b as f64).powi(2)).sum();
    (num / den).clamp(0.0, 1.1)
}

fn shaded_palette_dist(p: [u8; 3], colors: &[[u8; 3]]) -> f64 {
    colors
        .iter()
        .map(|c| {
            let s = shade_fit(p, *c);
            let shaded = c.map(|ch| (ch as f64 * s).min(255.0) as u8);
            d_inf(p, shaded)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Rule-based visual inspector comparing an edited image against the
/// sample's prototype and id map.
pub fn reference_inspector(
    sample: &QaSample,
    edited: &Image,
    tol: &InspectorTolerances,
) -> Verdict {
    let proto = &sample.prototype;
    if edited.width != proto.width || edited.height != proto.height {
        return Verdict {
            pass: false,
            reasons: vec![FailureReason::SevereArtifact],
            notes: vec!["image dimensions changed".into()],
        };
    }
    let (w, h) = (proto.width, proto.height);
    let row_bg = row_background(proto, &sample.id_map);
    let mut reasons = Vec::new();
    let mut notes = Vec::new();
    let push = |r: FailureReason, n: String, reasons: &mut Vec<FailureReason>,
                notes: &mut Vec<String>| {
        if !reasons.contains(&r) {
            reasons.push(r);
        }
        notes.push(n);
    };

    // per-instance statistics over the prototype mask
    struct Acc {
        total: u32,
        matching: u32,
        erased: u32,
        sum_proto: [f64; 3],
        sum_edit: [f64; 3],
        centroid: (f64, f64),
        bbox: (u32, u32, u32, u32),
    }
    let mut accs: BTreeMap<u16, Acc> = sample
        .instance_colors
        .keys()
        .map(|&id| {
            (id, Acc {
                total: 0,
                matching: 0,
                erased: 0,
                sum_proto: [0.0; 3],
                sum_edit: [0.0; 3],
                centroid: (0.0, 0.0),
                bbox: (u32::MAX, u32::MAX, 0, 0),
            })
        })
        .collect();
    for y in 0..h {
        for x in 0..w {
            let id = sample.id_map.get(x, y);
            if id == 0 {
                continue;
            }
            let Some(acc) = accs.get_mut(&id) else { continue };
            let p = proto.get(x, y);
            let e = edited.get(x, y);
            acc.total += 1;
            if d_inf(p, e) <= tol.match_dist {
                acc.matching += 1;
            }
            let g = row_bg[y as usize];
            if d_inf(e, [g as u8; 3]) <= tol.erase_dist {
                acc.erased += 1;
            }
            for c in 0..3 {
                acc.sum_proto[c] += p[c] as f64;
                acc.sum_edit[c] += e[c] as f64;
            }
            acc.centroid.0 += x as f64;
            acc.centroid.1 += y as f64;
            acc.bbox.0 = acc.bbox.0.min(x);
            acc.bbox.1 = acc.bbox.1.min(y);
            acc.bbox.2 = acc.bbox.2.max(x);
            acc.bbox.3 = acc.bbox.3.max(y);
        }
    }

    for (&id, acc) in &accs {
        if acc.total == 0 {
            continue;
        }
        let erased_frac = acc.erased as f64 / acc.total as f64;
        if erased_frac > tol.erased_fraction || acc.matching < tol.min_visible_pixels {
            push(
                FailureReason::CountChange,
                format!(
                    "instance {id}: {:.0}% erased, {} matching pixels",
                    erased_frac * 100.0,
                    acc.matching
                ),
                &mut reasons,
                &mut notes,
            );
        }
        let mean_proto = acc.sum_proto.map(|s| (s / acc.total as f64) as u8);
        let mean_edit = acc.sum_edit.map(|s| (s / acc.total as f64) as u8);
        if erased_frac <= tol.erased_fraction
            && d_inf(mean_proto, mean_edit) > tol.recolor_dist
        {
            push(
                FailureReason::IdentityCorruption,
                format!("instance {id}: mean color moved {:.0}", d_inf(mean_proto, mean_edit)),
                &mut reasons,
                &mut notes,
            );
        }

        // drift: look for the instance's colored mass in a dilated window,
        // ignoring pixels other instances own in the prototype
        let margin = 24u32;
        let (bx0, by0, bx1, by1) = acc.bbox;
        let x0 = bx0.saturating_sub(margin);
        let y0 = by0.saturating_sub(margin);
        let x1 = (bx1 + margin).min(w - 1);
        let y1 = (by1 + margin).min(h - 1);
        // soft color-affinity weights instead of a hard threshold: benign
        // noise nudges every weight a little instead of flipping whole
        // near-threshold regions in or out, and the same rule runs over
        // both images so shading bias cancels
        let affinity = |p: [u8; 3]| {
            (1.0 - d_inf(p, mean_proto) / (2.0 * tol.match_dist)).max(0.0)
        };
        let mut edit_w = 0.0;
        let mut mx = 0.0;
        let mut my = 0.0;
        let mut base_w = 0.0;
        let mut bx = 0.0;
        let mut by = 0.0;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let owner = sample.id_map.get(x, y);
                if owner != 0 && owner != id {
                    continue;
                }
                let we = affinity(edited.get(x, y));
                edit_w += we;
                mx += we * x as f64;
                my += we * y as f64;
                let wp = affinity(proto.get(x, y));
                base_w += wp;
                bx += wp * x as f64;
                by += wp * y as f64;
            }
        }
        if base_w > 0.0 && edit_w >= base_w / 4.0 {
            let (cx, cy) = (bx / base_w, by / base_w);
            let shift = ((mx / edit_w - cx).powi(2) + (my / edit_w - cy).powi(2)).sqrt();
            if shift > tol.drift_px {
                push(
                    FailureReason::LayoutDrift,
                    format!("instance {id}: colored mass moved {shift:.1} px"),
                    &mut reasons,
                    &mut notes,
                );
            }
        }
    }

    // hallucinated palette blobs on background
    let scene_colors: Vec<[u8; 3]> =
        sample.instance_colors.values().map(|c| c.rgb()).collect();
    let mut candidate = vec![false; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            if sample.id_map.get(x, y) != 0 {
                continue;
            }
            let e = edited.get(x, y);
            if d_inf(proto.get(x, y), e) > tol.bg_change_dist
                && shaded_palette_dist(e, &scene_colors) <= tol.blob_color_dist
            {
                candidate[(y * w + x) as usize] = true;
            }
        }
    }
    let blob = largest_component(&candidate, w, h);
    if blob >= tol.blob_min_area {
        push(
            FailureReason::BackgroundHallucination,
            format!("palette-colored blob of {blob} px on background"),
            &mut reasons,
            &mut notes,
        );
    }

    Verdict { pass: reasons.is_empty(), reasons, notes }
}

fn largest_component(mask: &[bool], w: u32, h: u32) -> u32 {
    let mut seen = vec![false; mask.len()];
    let mut best = 0u32;
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        let mut size = 0u32;
        stack.push(start);
        seen[start] = true;
        while let Some(i) = stack.pop() {
            size += 1;
            let x = i as u32 % w;
            let y = i as u32 / w;
            let mut visit = |nx: i64, ny: i64| {
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    return;
                }
                let j = (ny as u32 * w + nx as u32) as usize;
                if mask[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            visit(x as i64 - 1, y as i64);
            visit(x as i64 + 1, y as i64);
            visit(x as i64, y as i64 - 1);
            visit(x as i64, y as i64 + 1);
        }
        best = best.max(size);
    }
    best
}

/// [`Inspector`] wrapper around [`reference_inspector`].
#[derive(Debug, Clone, Default)]
pub struct ReferenceInspector {
    pub tolerances: InspectorTolerances,
}

impl Inspector for ReferenceInspector {
    fn inspect(&self, sample: &QaSample, edited: &Image) -> Result<Verdict> {
        Ok(reference_inspector(sample, edited, &self.tolerances))
    }
}

// ---------------------------------------------------------------------------
// perturbation editor
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FaultKind {
    /// Benign: per-pixel noise of at most 8 per channel.
    None,
    /// Replace one instance's pixels with background.
    Erase,
    /// Paint a new palette-colored disk on background.
    Insert,
    /// Move one instance's pixels by 10 to 20 px.
    Shift,
    /// Repaint one instance in a different palette color.
    Recolor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub kind: FaultKind,
    /// Target instance for Erase / Shift / Recolor.
    pub instance: Option<u16>,
}

/// Apply `fault` to the sample's prototype. Deterministic in `rng`.
pub fn perturbation_edit(sample: &QaSample, fault: FaultSpec, rng: &mut Stream) -> Result<Image> {
    let mut img = sample.prototype.clone();
    let (w, h) = (img.width, img.height);
    let row_bg = row_background(&sample.prototype, &sample.id_map);

    let need_target = |fault: FaultSpec| -> Result<u16> {
        let id = fault
            .instance
            .ok_or_else(|| Error::Qa(format!("{:?} fault needs a target instance", fault.kind)))?;
        if !sample.instance_colors.contains_key(&id) {
            return Err(Error::Qa(format!("fault targets unknown instance {id}")));
        }
        Ok(id)
    };
    let pixels_of = |id: u16| -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if sample.id_map.get(x, y) == id {
                    out.push((x, y));
                }
            }
        }
        out
    };

    match fault.kind {
        FaultKind::None => {
            for y in 0..h {
                for x in 0..w {
                    let p = img.get(x, y);
                    let q = p.map(|c| {
                        (c as i32 + rng.gen_range(-8..=8)).clamp(0, 255) as u8
                    });
                    img.set(x, y, q);
                }
            }
        }
        FaultKind::Erase => {
            let id = need_target(fault)?;
            for (x, y) in pixels_of(id) {
                let g = row_bg[y as usize].round().clamp(0.0, 255.0) as u8;
                img.set(x, y, [g, g, g]);
            }
        }
        FaultKind::Insert => {
            let radius = 6i64; // 113 px disk, comfortably above blob_min_area
            let colors: Vec<ColorName> = sample.instance_colors.values().copied().collect();
            let color = colors[rng.gen_range(0..colors.len())].rgb();
            let shade = rng.gen_range(0.9..=1.0);
            let rgb = color.map(|c| (c as f64 * shade).round() as u8);
            let mut placed = false;
            'tries: for _ in 0..500 {
                let cx = rng.gen_range(radius..w as i64 - radius);
                let cy = rng.gen_range(radius..h as i64 - radius);
                for dy in -radius..=radius {
                    for dx in -radius..=radius {
                        if dx * dx + dy * dy <= radius * radius
                            && sample.id_map.get((cx + dx) as u32, (cy + dy) as u32) != 0
                        {
                            continue 'tries;
                        }
                    }
                }
                for dy in -radius..=radius {
                    for dx in -radius..=radius {
                        if dx * dx + dy * dy <= radius * radius {
                            img.set((cx + dx) as u32, (cy + dy) as u32, rgb);
                        }
                    }
                }
                placed = true;
                break;
            }
            if !placed {
                return Err(Error::Qa("no background room for an inserted blob".into()));
            }
        }
        FaultKind::Shift => {
            let id = need_target(fault)?;
            let step = |rng: &mut Stream| {
                let mag = rng.gen_range(10..=20i64);
                if rng.gen_bool(0.5) {
                    mag
                } else {
                    -mag
                }
            };
            let (dx, dy) = (step(rng), step(rng));
            let pixels = pixels_of(id);
            let colors: Vec<[u8; 3]> =
                pixels.iter().map(|&(x, y)| sample.prototype.get(x, y)).collect();
            for &(x, y) in &pixels {
                let g = row_bg[y as usize].round().clamp(0.0, 255.0) as u8;
                img.set(x, y, [g, g, g]);
            }
            for (&(x, y), rgb) in pixels.iter().zip(colors) {
                let nx = x as i64 + dx;
                let ny = y as i64 + dy;
                if nx >= 0 && ny >= 0 && nx < w as i64 && ny < h as i64 {
                    img.set(nx as u32, ny as u32, rgb);
                }
            }
        }
        FaultKind::Recolor => {
            let id = need_target(fault)?;
            let own = sample.instance_colors[&id].rgb();
            let others: Vec<ColorName> = PALETTE
                .iter()
                .copied()
                .filter(|c| c.rgb() != own)
                .collect();
            let new = others[rng.gen_range(0..others.len())].rgb();
            let den: f64 = own.iter().map(|c| (*c as f64).powi(2)).sum();
            for (x, y) in pixels_of(id) {
                let p = img.get(x, y);
                let s = (p
                    .iter()
                    .zip(&own)
                    .map(|(a, b)| *a as f64 * *b as f64)
                    .sum::<f64>()
                    / den)
                    .clamp(0.0, 1.1);
                img.set(x, y, new.map(|c| (c as f64 * s).round().min(255.0) as u8));
            }
        }
    }
    Ok(img)
}

/// Editor that injects a random fault with probability `fault_rate` per
/// (sample, iteration) and benign noise otherwise. Fault draws derive from
/// the sample id and iteration, so they are independent across iterations
/// and reproducible across runs.
#[derive(Debug, Clone)]
pub struct PerturbationEditor {
    pub seed: u64,
    pub fault_rate: f64,
}

impl PerturbationEditor {
    fn rng_for(&self, sample: &QaSample, iteration: u32) -> Stream {
        let mut hasher = crate::rng::stream(derive_seed(
            self.seed,
            sample.id.as_str(),
            iteration as u64,
        ));
        // burn one draw so the fault coin and edit noise decorrelate
        let _: u64 = hasher.gen();
        hasher
    }
}

impl Editor for PerturbationEditor {
    fn edit(&self, sample: &QaSample, iteration: u32) -> Result<Image> {
        let mut rng = self.rng_for(sample, iteration);
        let fault = if rng.gen_bool(self.fault_rate) {
            let kinds =
                [FaultKind::Erase, FaultKind::Insert, FaultKind::Shift, FaultKind::Recolor];
            let kind = kinds[rng.gen_range(0..kinds.len())];
            let ids: Vec<u16> = sample.instance_colors.keys().copied().collect();
            let instance = Some(ids[rng.gen_range(0..ids.len())]);
            FaultSpec { kind, instance }
        } else {
            FaultSpec { kind: FaultKind::None, instance: None }
        };
        perturbation_edit(sample, fault, &mut rng)
    }
}

/// Editor that returns the prototype unchanged; the pipeline uses it to run
/// the inspector as a pure render-sanity filter.
#[derive(Debug, Clone, Default)]
pub struct IdentityEditor;

impl Editor for IdentityEditor {
    fn edit(&self, sample: &QaSample, _iteration: u32) -> Result<Image> {
        Ok(sample.prototype.clone())
    }
}

// ---------------------------------------------------------------------------
// the loop
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuarantineRecord {
    pub id: String,
    pub diagnostic: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: u32,
    pub submitted: usize,
    pub passed: usize,
    pub failed: usize,
    pub quarantined: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaReport {
    pub accepted: Vec<String>,
    pub discarded: Vec<String>,
    pub quarantined: Vec<QuarantineRecord>,
    pub iterations: Vec<IterationStats>,
    /// Failure reasons of the final inspection of each discarded sample.
    pub final_reasons: BTreeMap<String, Vec<FailureReason>>,
}

/// Run the edit-filter loop. Every input sample ends in exactly one of
/// `accepted`, `discarded`, or `quarantined`; the still-failing set can only
/// shrink between iterations.
pub fn run_edit_filter_loop(
    samples: &[QaSample],
    editor: &dyn Editor,
    inspector: &dyn Inspector,
    max_iterations: u32,
) -> (BTreeMap<String, Image>, QaReport) {
    let mut accepted_images = BTreeMap::new();
    let mut report = QaReport {
        accepted: Vec::new(),
        discarded: Vec::new(),
        quarantined: Vec::new(),
        iterations: Vec::new(),
        final_reasons: BTreeMap::new(),
    };
    let mut pending: Vec<&QaSample> = samples.iter().collect();
    for iteration in 0..max_iterations {
        let submitted = pending.len();
        let mut passed = 0;
        let mut quarantined = 0;
        let mut still_failing = Vec::new();
        for sample in pending {
            let outcome = editor
                .edit(sample, iteration)
                .and_then(|edited| inspector.inspect(sample, &edited).map(|v| (edited, v)));
            match outcome {
                Err(e) => {
                    quarantined += 1;
                    report
                        .quarantined
                        .push(QuarantineRecord { id: sample.id.clone(), diagnostic: e.to_string() });
                }
                Ok((edited, verdict)) if verdict.pass => {
                    passed += 1;
                    accepted_images.insert(sample.id.clone(), edited);
                    report.accepted.push(sample.id.clone());
                }
                Ok((_, verdict)) => {
                    report.final_reasons.insert(sample.id.clone(), verdict.reasons);
                    still_failing.push(sample);
                }
            }
        }
        report.iterations.push(IterationStats {
            iteration,
            submitted,
            passed,
            failed: still_failing.len(),
            quarantined,
        });
        pending = still_failing;
        if pending.is_empty() {
            break;
        }
    }
    for sample in pending {
        report.discarded.push(sample.id.clone());
    }
    report.accepted.sort();
    report.discarded.sort();
    (accepted_images, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levels::{compose_recipe, LevelTag, SceneConfig};
    use crate::profiles::{draw_with_seed, ConfigProfile};
    use crate::render::{derive_annotations, render};
    use crate::rng::stream;
    use crate::scene::{place_objects, sample_camera};
    use crate::splits::{assign_splits, Split};
    use crate::taxonomy::build_bank;

    fn sample(seed: u64) -> QaSample {
        let bank = build_bank(51, 3, 3, 2, 3, 6).unwrap();
        let splits = assign_splits(&bank, &mut stream(52), 0.10, 0.10).unwrap();
        let profile = ConfigProfile::builtin_default();
        for attempt in 0..20 {
            let recipe = compose_recipe(
                LevelTag::L2Color,
                &bank,
                &splits,
                Split::Train,
                SceneConfig::Normal,
                &profile,
                &mut stream(seed * 100 + attempt),
            )
            .unwrap();
            let draw = draw_with_seed(&profile, recipe.profile_draw_seed);
            let scene =
                place_objects(&recipe, &bank, &splits, &draw, &mut stream(recipe.scene_seed))
                    .unwrap();
            let Ok(camera) =
                sample_camera(&scene, &draw, (160, 160), &mut stream(seed + 500 + attempt))
            else {
                continue;
            };
            let (image, ids) = render(&scene, &camera);
            if derive_annotations(&scene, &ids).is_ok() {
                return QaSample::from_scene(format!("s{seed}"), &scene, image, ids);
            }
        }
        panic!("no sample for seed {seed}");
    }

    #[test]
    fn identity_and_benign_noise_pass() {
        let tol = InspectorTolerances::default();
        for seed in 0..4 {
            let s = sample(seed);
            let v = reference_inspector(&s, &s.prototype, &tol);
            assert!(v.pass, "identity flagged: {:?}", v.reasons);
            let noisy = perturbation_edit(
                &s,
                FaultSpec { kind: FaultKind::None, instance: None },
                &mut stream(seed),
            )
            .unwrap();
            let v = reference_inspector(&s, &noisy, &tol);
            assert!(v.pass, "benign noise flagged: {:?} {:?}", v.reasons, v.notes);
        }
    }

    #[test]
    fn every_erasure_is_caught() {
        let tol = InspectorTolerances::default();
        for seed in 0..3 {
            let s = sample(seed);
            for &id in s.instance_colors.keys() {
                let edited = perturbation_edit(
                    &s,
                    FaultSpec { kind: FaultKind::Erase, instance: Some(id) },
                    &mut stream(id as u64),
                )
                .unwrap();
                let v = reference_inspector(&s, &edited, &tol);
                assert!(!v.pass, "erase of {id} missed");
                assert!(v.reasons.contains(&FailureReason::CountChange), "{:?}", v.reasons);
            }
        }
    }

    #[test]
    fn every_insertion_is_caught() {
        let tol = InspectorTolerances::default();
        for seed in 0..3 {
            let s = sample(seed);
            for round in 0..5 {
                let edited = perturbation_edit(
                    &s,
                    FaultSpec { kind: FaultKind::Insert, instance: None },
                    &mut stream(round),
                )
                .unwrap();
                let v = reference_inspector(&s, &edited, &tol);
                assert!(!v.pass, "insert missed");
                assert!(
                    v.reasons.contains(&FailureReason::BackgroundHallucination),
                    "{:?}",
                    v.reasons
                );
            }
        }
    }

    #[test]
    fn shift_and_recolor_are_caught() {
        let tol = InspectorTolerances::default();
        let s = sample(1);
        for &id in s.instance_colors.keys() {
            let shifted = perturbation_edit(
                &s,
                FaultSpec { kind: FaultKind::Shift, instance: Some(id) },
                &mut stream(id as u64),
            )
            .unwrap();
            let v = reference_inspector(&s, &shifted, &tol);
            assert!(!v.pass, "shift of {id} missed");

            let recolored = perturbation_edit(
                &s,
                FaultSpec { kind: FaultKind::Recolor, instance: Some(id) },
                &mut stream(id as u64 + 99),
            )
            .unwrap();
            let v = reference_inspector(&s, &recolored, &tol);
            assert!(!v.pass, "recolor of {id} missed");
            assert!(
                v.reasons.contains(&FailureReason::IdentityCorruption),
                "{:?}",
                v.reasons
            );
        }
    }

    struct AlwaysFail;
    impl Inspector for AlwaysFail {
        fn inspect(&self, _s: &QaSample, _e: &Image) -> Result<Verdict> {
            Ok(Verdict {
                pass: false,
                reasons: vec![FailureReason::SevereArtifact],
                notes: Vec::new(),
            })
        }
    }

    #[test]
    fn loop_conserves_samples_and_failing_set_shrinks() {
        let base = sample(2);
        let samples: Vec<QaSample> = (0..6)
            .map(|i| {
                let mut s = base.clone();
                s.id = format!("c{i}");
                s
            })
            .collect();

        let (_, report) =
            run_edit_filter_loop(&samples, &IdentityEditor, &AlwaysFail, 3);
        assert!(report.accepted.is_empty());
        assert_eq!(report.discarded.len(), 6);
        assert_eq!(report.iterations.len(), 3);
        for w in report.iterations.windows(2) {
            assert!(w[1].submitted <= w[0].submitted);
        }

        let (images, report) = run_edit_filter_loop(
            &samples,
            &IdentityEditor,
            &ReferenceInspector::default(),
            3,
        );
        assert_eq!(report.accepted.len(), 6);
        assert_eq!(images.len(), 6);
        assert!(report.discarded.is_empty());
        assert_eq!(report.iterations.len(), 1);
    }

    struct FlakyEditor;
    impl Editor for FlakyEditor {
        fn edit(&self, sample: &QaSample, _iteration: u32) -> Result<Image> {
            if sample.id.ends_with('3') {
                Err(Error::Qa("editor backend unavailable".into()))
            } else {
                Ok(sample.prototype.clone())
            }
        }
    }

    #[test]
    fn editor_errors_quarantine_without_aborting() {
        let base = sample(3);
        let samples: Vec<QaSample> = (0..5)
            .map(|i| {
                let mut s = base.clone();
                s.id = format!("q{i}");
                s
            })
            .collect();
        let (_, report) = run_edit_filter_loop(
            &samples,
            &FlakyEditor,
            &ReferenceInspector::default(),
            3,
        );
        assert_eq!(report.quarantined.len(), 1);
        assert_eq!(report.quarantined[0].id, "q3");
        assert!(report.quarantined[0].diagnostic.contains("unavailable"));
        assert_eq!(report.accepted.len(), 4);
        let total =
            report.accepted.len() + report.discarded.len() + report.quarantined.len();
        assert_eq!(total, samples.len());
    }

    #[test]
    fn fault_rate_drives_final_rejection_geometrically() {
        // with independent 20% fault injection per iteration and a perfect
        // inspector, ~0.8% of samples still fail after three iterations
        let base = sample(4);
        let samples: Vec<QaSample> = (0..400)
            .map(|i| {
                let mut s = base.clone();
                s.id = format!("r{i}");
                s
            })
            .collect();
        let editor = PerturbationEditor { seed: 99, fault_rate: 0.2 };
        let (_, report) = run_edit_filter_loop(
            &samples,
            &editor,
            &ReferenceInspector::default(),
            3,
        );
        assert!(report.quarantined.is_empty(), "{:?}", report.quarantined);
        // binomial(400, 0.008): mean 3.2, allow a generous band
        let rejected = report.discarded.len();
        assert!(rejected <= 12, "rejected {rejected} of 400");
        // first-iteration failure rate should look like 20%
        let first = &report.iterations[0];
        assert!(first.failed >= 50 && first.failed <= 115, "{first:?}");
    }

    #[test]
    fn fault_with_bad_target_is_an_error() {
        let s = sample(5);
        assert!(perturbation_edit(
            &s,
            FaultSpec { kind: FaultKind::Erase, instance: Some(999) },
            &mut stream(0),
        )
        .is_err());
        assert!(perturbation_edit(
            &s,
            FaultSpec { kind: FaultKind::Shift, instance: None },
            &mut stream(0),
        )
        .is_err());
    }
}
