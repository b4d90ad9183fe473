mod common;

use proptest::prelude::*;

use common::{check_golden, fixed_table};
use tablecls::table::{format_float, parse_table, serialize, FormatKind, TableDocument, TableFormat};

#[test]
fn golden_files_per_format() {
    for kind in FormatKind::ALL {
        let text = serialize(&fixed_table(), TableFormat::new(kind));
        check_golden(&format!("tables/fixed.{kind}.txt"), &text).unwrap();
    }
}

#[test]
fn float_rule_examples() {
    assert_eq!(format_float(1.5, 4), "1.5");
    assert_eq!(format_float(2.0, 4), "2");
    assert_eq!(format_float(-0.00004, 4), "0");
    assert_eq!(format_float(0.00005, 4), "0.0001");
}

#[test]
fn duplicate_or_reserved_channel_names_are_rejected() {
    let v = vec![vec![1.0, 2.0]];
    assert!(TableDocument::new(vec!["0".into()], vec!["a".into(), "a".into()], v.clone()).is_err());
    assert!(TableDocument::new(vec!["0".into()], vec!["time".into(), "a".into()], v).is_err());
}

#[test]
fn rejects_truncated_input() {
    let text = serialize(&fixed_table(), TableFormat::new(FormatKind::Markdown));
    let cut = &text[..text.len() - 4];
    assert!(parse_table(cut, TableFormat::new(FormatKind::Markdown)).is_err());
    for kind in FormatKind::ALL {
        assert!(parse_table("", TableFormat::new(kind)).is_err());
    }
}

fn table_strategy() -> impl Strategy<Value = TableDocument> {
    (1usize..=20, 1usize..=6).prop_flat_map(|(t, m)| {
        (
            proptest::collection::btree_set("[a-z][a-z0-9_ ]{0,7}", m)
                .prop_filter("reserved name", |s| !s.contains("time"))
                .prop_map(|s| s.into_iter().collect::<Vec<String>>()),
            proptest::collection::vec(proptest::collection::vec(-1000.0f64..1000.0, m), t),
        )
            .prop_map(move |(names, values)| TableDocument::new((0..t).map(|i| i.to_string()).collect(), names, values).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn serialize_parse_round_trip(table in table_strategy(), precision in 1usize..=6) {
        // Decimal rounding error plus float-parse slack.
        let tol = 0.5 * 10f64.powi(-(precision as i32)) + 1e-9;
        for kind in FormatKind::ALL {
            let format = TableFormat::with_precision(kind, precision);
            let text = serialize(&table, format);
            let back = parse_table(&text, format).unwrap();
            prop_assert_eq!(&back.time_index, &table.time_index);
            prop_assert_eq!(&back.channel_names, &table.channel_names);
            for (r0, r1) in table.values.iter().zip(&back.values) {
                for (a, b) in r0.iter().zip(r1) {
                    prop_assert!((a - b).abs() <= tol, "{kind}: {a} -> {b}");
                }
            }
            prop_assert_eq!(serialize(&back, format), text);
        }
    }
}
