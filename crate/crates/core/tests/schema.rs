use std::collections::BTreeSet;

use proptest::prelude::*;
use sparqlgen_core::harvest::{fetch_void, EndpointDescriptor, RawVoidRecord};
use sparqlgen_core::iri::PrefixMap;
use sparqlgen_core::schema::{
    build_matrix, export_shapes, parse_shape, render_shapes, shape_summary_text, shex_tokens,
    truncate_matrix, ClassPropertyMatrix,
};
use sparqlgen_core::client::SparqlClient;
use sparqlgen_testkit::{read_fixture, store_from_fixtures, FixtureEndpoint};

fn class(i: usize) -> String {
    format!("http://example.org/m/C{i}")
}

fn pred(j: usize) -> String {
    format!("http://example.org/m/p{j}")
}

fn record(c: String, p: String, n: u64) -> RawVoidRecord {
    RawVoidRecord {
        subject_class: c,
        predicate: p,
        object_class: None,
        object_datatype: Some("http://www.w3.org/2001/XMLSchema#string".into()),
        triple_count: n,
        subject_instance_count: 1,
    }
}

/// 8 x 8 fixture: cell (i, j) holds `(7i + 3j) % 11 + 1` triples unless `(i + 2j) % 5 == 0`.
fn eight_by_eight() -> ClassPropertyMatrix {
    let mut records = Vec::new();
    for i in 0..8 {
        for j in 0..8 {
            if (i + 2 * j) % 5 != 0 {
                records.push(record(class(i), pred(j), ((7 * i + 3 * j) % 11 + 1) as u64));
            }
        }
    }
    build_matrix(&records)
}

#[test]
fn eight_by_eight_truncation_matches_hand_sorted_oracle() {
    let m = eight_by_eight();
    // Row and column sums computed by hand from the fixture formula.
    let class_order = [4, 2, 0, 3, 6, 1, 7, 5];
    let class_weights = [47, 45, 42, 41, 40, 39, 37, 32];
    let pred_order = [1, 0, 6, 3, 5, 7, 2, 4];
    let pred_weights = [49, 46, 44, 40, 37, 37, 35, 35];
    let expected_classes: Vec<_> =
        class_order.iter().zip(class_weights).map(|(&i, w)| (class(i), w)).collect();
    let expected_preds: Vec<_> =
        pred_order.iter().zip(pred_weights).map(|(&j, w)| (pred(j), w)).collect();
    assert_eq!(m.classes(), expected_classes.as_slice());
    assert_eq!(m.predicates(), expected_preds.as_slice());
    assert_eq!(m.cell_count(), 51);

    for (fraction, keep) in [(0.25, 2), (0.5, 4), (0.75, 6), (1.0, 8)] {
        let t = truncate_matrix(&m, fraction).unwrap();
        assert_eq!(t.classes(), &expected_classes[..keep]);
        assert_eq!(t.predicates(), &expected_preds[..keep]);
        let kept_c: BTreeSet<usize> = class_order[..keep].iter().copied().collect();
        let kept_p: BTreeSet<usize> = pred_order[..keep].iter().copied().collect();
        let mut expected_cells = BTreeSet::new();
        for i in 0..8 {
            for j in 0..8 {
                if (i + 2 * j) % 5 != 0 && kept_c.contains(&i) && kept_p.contains(&j) {
                    expected_cells.insert((class(i), pred(j), ((7 * i + 3 * j) % 11 + 1) as u64));
                }
            }
        }
        let actual_cells: BTreeSet<_> = t
            .classes()
            .iter()
            .flat_map(|(c, _)| t.row(c).into_iter().map(move |(p, cell)| (c.clone(), p.to_string(), cell.triple_count)))
            .collect();
        assert_eq!(actual_cells, expected_cells, "fraction {fraction}");
    }
    assert_eq!(truncate_matrix(&m, 1.0).unwrap(), m);
}

#[test]
fn disease_annotation_shape_matches_golden_listing() {
    let records = {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async {
            let ep = FixtureEndpoint::start(store_from_fixtures(&["disease_annotation_void.ttl"])).await;
            fetch_void(&SparqlClient::default(), &EndpointDescriptor::new(&ep.url)).await.unwrap()
        })
    };
    let shapes = render_shapes(&build_matrix(&records), &PrefixMap::default());
    assert_eq!(shapes.len(), 1);
    let golden = read_fixture("disease_annotation.shex");
    assert_eq!(shex_tokens(&shapes[0].rendered_shex), shex_tokens(&golden));

    let summary = shape_summary_text(&shapes[0]);
    for word in ["Disease Annotation", "sequence", "comment", "disease"] {
        assert!(summary.contains(word), "{summary}");
    }
    assert_eq!(summary, shape_summary_text(&shapes[0]));
}

#[test]
fn export_writes_one_file_per_shape_and_a_combined_file() {
    let m = eight_by_eight();
    let prefixes = PrefixMap::default();
    let shapes = render_shapes(&m, &prefixes);
    let dir = tempfile::tempdir().unwrap();
    export_shapes(&shapes, &prefixes, dir.path()).unwrap();
    let files = std::fs::read_dir(dir.path()).unwrap().count();
    assert_eq!(files, shapes.len() + 1);
    let all = std::fs::read_to_string(dir.path().join("all.shex")).unwrap();
    assert!(shapes.iter().all(|s| all.contains(&s.rendered_shex)));
}

fn arb_records() -> impl Strategy<Value = Vec<RawVoidRecord>> {
    let one = (0..12usize, 0..12usize, 0..4usize, 1..50u64).prop_map(|(c, p, kind, n)| {
        let mut r = record(class(c), pred(p), n);
        match kind {
            0 => r.object_datatype = None,
            1 => {
                r.object_datatype = None;
                r.object_class = Some(class((c + p) % 12));
            }
            2 => r.object_datatype = Some("http://www.w3.org/2001/XMLSchema#integer".into()),
            _ => {}
        }
        r
    });
    prop::collection::vec(one, 0..60)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn truncation_is_monotone(records in arb_records(), a in 1..=100u32, b in 1..=100u32) {
        let m = build_matrix(&records);
        let (f1, f2) = (a.min(b) as f64 / 100.0, a.max(b) as f64 / 100.0);
        let t1 = truncate_matrix(&m, f1).unwrap();
        let t2 = truncate_matrix(&m, f2).unwrap();
        let set = |v: &[(String, u64)]| v.iter().map(|x| x.0.clone()).collect::<BTreeSet<_>>();
        prop_assert!(set(t1.classes()).is_subset(&set(t2.classes())));
        prop_assert!(set(t1.predicates()).is_subset(&set(t2.predicates())));
        prop_assert_eq!(truncate_matrix(&t1, 1.0).unwrap(), t1.clone());
        for (c, _) in t1.classes() {
            for (p, cell) in t1.row(c) {
                prop_assert_eq!(m.cell(c, p), Some(cell));
            }
        }
    }

    #[test]
    fn axes_are_sorted(records in arb_records()) {
        let m = build_matrix(&records);
        for axis in [m.classes(), m.predicates()] {
            for w in axis.windows(2) {
                prop_assert!(w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0));
            }
        }
        let total: u64 = records.iter().map(|r| r.triple_count).sum();
        prop_assert_eq!(m.predicates().iter().map(|p| p.1).sum::<u64>(), total);
    }

    #[test]
    fn rendering_is_lossless(records in arb_records(), f in 1..=100u32) {
        let prefixes = PrefixMap::default();
        let m = truncate_matrix(&build_matrix(&records), f as f64 / 100.0).unwrap();
        let shapes = render_shapes(&m, &prefixes);
        let non_empty = m.classes().iter().filter(|(c, _)| !m.row(c).is_empty()).count();
        prop_assert_eq!(shapes.len(), non_empty);
        for shape in &shapes {
            prop_assert!(shape.rendered_shex.contains(&prefixes.compact(&shape.class_iri)));
            let parsed = parse_shape(&shape.rendered_shex, &prefixes).unwrap();
            prop_assert_eq!(&parsed.class_iri, &shape.class_iri);
            let expected: Vec<_> = m
                .row(&shape.class_iri)
                .into_iter()
                .map(|(p, cell)| {
                    let mut cell = cell.clone();
                    cell.triple_count = 0;
                    (p.to_string(), cell)
                })
                .collect();
            prop_assert_eq!(parsed.predicates, expected);
        }
    }
}
