//! Run the edit-filter quality loop over rendered prototypes with the
//! perturbation editor injecting faults at a 20% rate, and show how the
//! failing set shrinks across iterations.
//!
//!     cargo run --release --example qa_loop

use granucount::levels::{compose_recipe, LevelTag, SceneConfig};
use granucount::profiles::{draw_with_seed, ConfigProfile};
use granucount::qa::{
    run_edit_filter_loop, PerturbationEditor, QaSample, ReferenceInspector,
};
use granucount::render::{derive_annotations, render};
use granucount::rng::{derived_stream, stream};
use granucount::scene::{place_objects, sample_camera};
use granucount::splits::{assign_splits, Split};
use granucount::taxonomy::build_bank;

fn main() -> Result<(), granucount::Error> {
    let seed = 5;
    let bank = build_bank(seed, 4, 3, 2, 5, 8)?;
    let splits = assign_splits(&bank, &mut derived_stream(seed, "splits", 0), 0.10, 0.10)?;
    let profile = ConfigProfile::builtin_default();

    // render a handful of prototypes, resampling any scene the camera or
    // visibility checks reject (exactly what the batch pipeline does)
    let mut samples = Vec::new();
    let mut attempt = 0u64;
    while samples.len() < 30 {
        attempt += 1;
        let recipe = compose_recipe(
            LevelTag::L3,
            &bank,
            &splits,
            Split::Train,
            SceneConfig::Normal,
            &profile,
            &mut derived_stream(seed, "recipe", attempt),
        )?;
        let draw = draw_with_seed(&profile, recipe.profile_draw_seed);
        let scene =
            place_objects(&recipe, &bank, &splits, &draw, &mut stream(recipe.scene_seed))?;
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
        samples.push(QaSample::from_scene(
            format!("sample{:02}", samples.len()),
            &scene,
            image,
            id_map,
        ));
    }

    let editor = PerturbationEditor { seed: 99, fault_rate: 0.2 };
    let inspector = ReferenceInspector::default();
    let (accepted_images, report) =
        run_edit_filter_loop(&samples, &editor, &inspector, 3);

    for it in &report.iterations {
        println!(
            "iteration {}: {} submitted, {} passed, {} failed",
            it.iteration, it.submitted, it.passed, it.failed
        );
    }
    println!(
        "accepted {} / {} samples ({} discarded, {} quarantined)",
        accepted_images.len(),
        samples.len(),
        report.discarded.len(),
        report.quarantined.len()
    );
    for (id, reasons) in &report.final_reasons {
        println!("  last verdict for {id}: {reasons:?}");
    }
    Ok(())
}
