use std::path::PathBuf;

use apc_core::data::band_labels;
use apc_core::model::Block;
use apc_core::reporting::{
    effects_overlay_svg, effects_svg, hexamap_svg, render_effects_svg, render_hexamap_svg, render_tfr_svg, tfr_svg,
    EffectSummary,
};
use apc_core::ApcTable;

/// Compares against `tests/golden/<name>`. Set UPDATE_GOLDEN=1 to rewrite.
fn check_golden(name: &str, actual: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("missing golden file {}: {e}; run with UPDATE_GOLDEN=1", path.display()));
    assert!(expected == actual, "{name} differs from its golden file");
}

/// 7 x 15 table with a smooth, fully deterministic rate surface.
fn fixture_table() -> ApcTable {
    let (n_age, n_period) = (7, 15);
    let mut births = Vec::new();
    let mut exposures = Vec::new();
    for a in 0..n_age {
        for t in 0..n_period {
            let exposure = 10_000.0 + 100.0 * (a * n_period + t) as f64;
            let age = [0.05, 0.16, 0.13, 0.08, 0.04, 0.012, 0.002][a];
            let rate = age * (1.0 - 0.04 * t as f64);
            births.push((rate * exposure).round() as u64);
            exposures.push(exposure);
        }
    }
    ApcTable::new(band_labels(15, 5, n_age), band_labels(1950, 5, n_period), births, exposures, 5).unwrap()
}

fn fixture_summary(block: Block, n: usize, shift: f64) -> EffectSummary {
    let mean: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin() + shift).collect();
    EffectSummary {
        block,
        level_labels: (1..=n).map(|i| format!("L{i}")).collect(),
        median: mean.iter().map(|m| m + 0.01).collect(),
        q2_5: mean.iter().map(|m| m - 0.3).collect(),
        q97_5: mean.iter().map(|m| m + 0.25).collect(),
        mean,
    }
}

fn parse(svg: &str) -> roxmltree::Document<'_> {
    roxmltree::Document::parse(svg).expect("well-formed SVG")
}

fn with_class<'a>(doc: &'a roxmltree::Document, tag: &str, class: &str) -> Vec<roxmltree::Node<'a, 'a>> {
    doc.descendants()
        .filter(|n| n.has_tag_name(tag) && n.attribute("class") == Some(class))
        .collect()
}

#[test]
fn effects_golden() {
    let s = vec![
        fixture_summary(Block::Age, 7, 0.0),
        fixture_summary(Block::Period, 15, -0.2),
        fixture_summary(Block::Cohort, 21, 0.1),
    ];
    let svg = effects_svg(&s).unwrap();
    check_golden("effects.svg", &svg);
    let doc = parse(&svg);
    assert_eq!(with_class(&doc, "g", "panel").len(), 3);
    assert_eq!(with_class(&doc, "polygon", "band").len(), 3);
}

#[test]
fn single_block_three_levels_parses() {
    let svg = effects_svg(&[fixture_summary(Block::Age, 3, 0.0)]).unwrap();
    let doc = parse(&svg);
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    assert_eq!(with_class(&doc, "polyline", "mean").len(), 1);
}

#[test]
fn overlay_of_identical_summaries_has_coincident_lines() {
    let s = vec![fixture_summary(Block::Period, 15, 0.0)];
    let svg = effects_overlay_svg(&s, &s, ("APC", "AP")).unwrap();
    check_golden("overlay.svg", &svg);
    let doc = parse(&svg);
    let lines = with_class(&doc, "polyline", "mean");
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0].attribute("points"), lines[1].attribute("points"));
}

#[test]
fn hexamap_golden() {
    let table = fixture_table();
    let svg = hexamap_svg(&table);
    check_golden("hexamap.svg", &svg);
    let doc = parse(&svg);
    assert_eq!(with_class(&doc, "polygon", "hex").len(), 105);
}

#[test]
fn constant_rate_hexamap_has_one_fill() {
    let table = ApcTable::new(band_labels(15, 5, 7), band_labels(1950, 5, 15), vec![30; 105], vec![600.0; 105], 5)
        .unwrap();
    let svg = hexamap_svg(&table);
    let doc = parse(&svg);
    let hexes = with_class(&doc, "polygon", "hex");
    assert_eq!(hexes.len(), 105);
    let first = hexes[0].attribute("fill").unwrap();
    assert!(hexes.iter().all(|h| h.attribute("fill") == Some(first)));
}

fn polyline_ys(node: roxmltree::Node) -> Vec<f64> {
    node.attribute("points")
        .unwrap()
        .split_whitespace()
        .map(|p| p.split(',').nth(1).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn tfr_golden_and_monotone_decline() {
    let table = fixture_table();
    let svg = tfr_svg(&table);
    check_golden("tfr.svg", &svg);
    let doc = parse(&svg);
    let line = with_class(&doc, "polyline", "tfr");
    assert_eq!(line.len(), 1);
    // screen y grows downward, so a declining series has increasing y
    let ys = polyline_ys(line[0]);
    assert_eq!(ys.len(), 15);
    assert!(ys.windows(2).all(|w| w[1] > w[0]), "{ys:?}");
}

#[test]
fn tfr_reference_line_always_present() {
    let tables = [
        fixture_table(),
        ApcTable::new(band_labels(15, 5, 3), band_labels(1950, 5, 3), vec![0; 9], vec![1.0; 9], 5).unwrap(),
        ApcTable::new(band_labels(15, 5, 3), band_labels(1950, 5, 4), vec![900; 12], vec![1000.0; 12], 5).unwrap(),
    ];
    for table in &tables {
        let svg = tfr_svg(table);
        let doc = parse(&svg);
        let refs = with_class(&doc, "line", "reference");
        assert_eq!(refs.len(), 1);
        assert_eq!(refs[0].attribute("data-value"), Some("2.1"));
    }
}

#[test]
fn rendering_is_byte_deterministic_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let table = fixture_table();
    let s = vec![fixture_summary(Block::Age, 7, 0.0)];
    for round in 0..2 {
        render_hexamap_svg(&table, dir.path().join(format!("hex{round}.svg"))).unwrap();
        render_tfr_svg(&table, dir.path().join(format!("tfr{round}.svg"))).unwrap();
        render_effects_svg(&s, dir.path().join(format!("eff{round}.svg"))).unwrap();
    }
    for stem in ["hex", "tfr", "eff"] {
        let a = std::fs::read(dir.path().join(format!("{stem}0.svg"))).unwrap();
        let b = std::fs::read(dir.path().join(format!("{stem}1.svg"))).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn unwritable_path_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("missing-dir").join("tfr.svg");
    let err = render_tfr_svg(&fixture_table(), &path).unwrap_err();
    assert!(matches!(err, apc_core::ApcError::Io { .. }), "{err}");
}
