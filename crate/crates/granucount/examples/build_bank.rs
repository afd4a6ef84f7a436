//! Build a procedural asset bank, assign leakage-controlled splits, and
//! print what ended up where.
//!
//!     cargo run --example build_bank

use granucount::rng::derived_stream;
use granucount::splits::{assign_splits, validate_splits, Split};
use granucount::taxonomy::build_bank;

fn main() -> Result<(), granucount::Error> {
    let seed = 42;
    let bank = build_bank(seed, 4, 3, 2, 5, 8)?;
    println!(
        "bank: {} super-categories, {} categories, {} instance types, {} assets, {} backgrounds",
        bank.super_categories.len(),
        bank.categories.len(),
        bank.instance_types.len(),
        bank.assets.len(),
        bank.backgrounds.len()
    );

    let splits = assign_splits(&bank, &mut derived_stream(seed, "splits", 0), 0.10, 0.10)?;
    for split in [Split::Train, Split::TestA, Split::TestB] {
        let n = splits.asset_split.values().filter(|&&s| s == split).count();
        println!("{}: {} assets", split.as_str(), n);
    }

    let violations = validate_splits(&bank, &splits);
    println!("split violations: {}", violations.len());

    // a category and its subtree
    let (cat_id, cat) = bank.categories.iter().next().expect("nonempty bank");
    println!("\nexample category {cat_id} ({}):", cat.name);
    for ty in bank.instance_types_of(cat_id) {
        println!(
            "  type {}: {} assets, shape {:?}",
            ty.id,
            bank.assets_of_type(&ty.id).len(),
            ty.shape_family
        );
    }
    Ok(())
}
