//! The model description format, its validation, and its JSON twin.
//!
//! A path model is a plain-text file with three statement kinds (and `#`
//! comments):
//!
//! ```text
//! lv NAME exogenous|endogenous   # declare a latent variable
//! mv NAME -> LV                  # assign a manifest (data) column to a block
//! path SOURCE -> TARGET          # directed structural edge
//! ```
//!
//! [`parse_model`] reads the syntax; [`PathModelSpec::validate`] then checks
//! the semantics (every block non-empty, endogenous variables explained,
//! exogenous ones used, no cycles, no double assignment...). The two are
//! separate on purpose: `plskm validate-spec` wants *all* the violations,
//! not the first one.
//!
//! ```text
//! cargo run --release --example spec_files
//! ```

use plskm::model::{parse_model, parse_valid_model};

fn main() {
    // The bundled model files live in `models/` at the repository root.
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../models");

    for name in ["two_driver.spec", "chain.spec", "ecsi.spec"] {
        let text = std::fs::read_to_string(format!("{dir}/{name}")).unwrap();
        let model = parse_valid_model(&text).unwrap();
        println!(
            "{name}: {} latent ({} exogenous), {} manifest, {} paths",
            model.n_lvs(),
            model.n_exogenous(),
            model.n_mvs(),
            model.paths().len()
        );
    }

    // Round trip: a parsed model can be rendered back to the same format...
    let text = std::fs::read_to_string(format!("{dir}/two_driver.spec")).unwrap();
    let model = parse_valid_model(&text).unwrap();
    let rendered = model.to_text();
    assert_eq!(
        parse_valid_model(&rendered).unwrap().to_text(),
        rendered,
        "to_text must be a fixed point of parse + render"
    );
    println!();
    println!("two_driver.spec, normalized:\n{rendered}");

    // ...or to JSON, which carries the same information for machine use.
    println!(
        "as JSON:\n{}",
        serde_json::to_string_pretty(&model.to_json()).unwrap()
    );

    // Validation collects every violation instead of stopping at the first.
    let broken = "\
lv DRIVER exogenous
lv ORPHAN exogenous
lv OUTCOME endogenous
lv LOOP_A endogenous
lv LOOP_B endogenous
mv x1 -> DRIVER
mv x2 -> OUTCOME
mv x2 -> OUTCOME
path DRIVER -> OUTCOME
path LOOP_A -> LOOP_B
path LOOP_B -> LOOP_A
";
    let model = parse_model(broken).unwrap();
    let report = model.validate();
    println!();
    println!("a deliberately broken model produces {} violations:", report.violations.len());
    for v in &report.violations {
        println!("  [{}] {}", v.code, v.message);
    }
    assert!(!report.is_valid());
}
