use afm_forge::matrix::{parse_matrix, CellValue, IngestionHints, MatrixError};
use proptest::prelude::*;

fn hints() -> IngestionHints {
    IngestionHints::new()
}

#[test]
fn identifier_column_labels_rows() {
    let m = parse_matrix("Name,A,P\nx,Yes,1\ny,No,2\n", &hints()).unwrap();
    assert_eq!(m.variables(), ["A", "P"]);
    assert_eq!(m.labels(), ["x", "y"]);
    assert_eq!(m.identifier_columns(), ["Name"]);
    assert_eq!(*m.cell(1, 1), CellValue::Nat(2));
    assert_eq!(*m.cell(0, 0), CellValue::text("Yes"));
}

#[test]
fn repeated_identifiers_are_kept_as_data() {
    let m = parse_matrix("id,A\nx,1\nx,2\n", &hints()).unwrap();
    assert_eq!(m.variables(), ["id", "A"]);
}

#[test]
fn duplicates_are_rejected_unless_asked() {
    let csv = "A,B\n1,x\n2,y\n1,x\n";
    assert_eq!(parse_matrix(csv, &hints()).unwrap_err(), MatrixError::DuplicateRow { first: 1, second: 3 });
    let m = parse_matrix(csv, &IngestionHints { dedup: true, ..hints() }).unwrap();
    assert_eq!(m.n_rows(), 2);
    assert_eq!(m.duplicates_dropped(), 1);
}

#[test]
fn malformed_input() {
    assert_eq!(parse_matrix("A,B\n", &hints()).unwrap_err(), MatrixError::EmptyMatrix);
    assert!(matches!(parse_matrix("A,B\n1\n", &hints()).unwrap_err(), MatrixError::RaggedRow { .. }));
    assert!(matches!(parse_matrix("A,B\n1,\n", &hints()).unwrap_err(), MatrixError::EmptyCell { .. }));
    assert!(matches!(parse_matrix("A\n1\nx\n", &hints()).unwrap_err(), MatrixError::MixedColumn { .. }));
    assert!(matches!(parse_matrix("A,A\n1,2\n", &hints()).unwrap_err(), MatrixError::DuplicateColumn(_)));
    let missing = IngestionHints { identifier_columns: vec!["Z".into()], ..hints() };
    assert_eq!(parse_matrix("A\n1\n", &missing).unwrap_err(), MatrixError::UnknownColumn("Z".into()));
}

#[test]
fn domains_follow_first_appearance() {
    let m = parse_matrix("L\nJava\n--\nPython\nJava\n--\n", &IngestionHints { dedup: true, ..hints() }).unwrap();
    let d: Vec<String> = m.column_domain(0).unwrap().iter().map(|v| v.to_string()).collect();
    assert_eq!(d, ["Java", "--", "Python"]);
    assert!(!m.is_numeric(0));
}

proptest! {
    #[test]
    fn csv_round_trips(rows in prop::collection::btree_set(prop::collection::vec(0u16..5, 3), 1..12)) {
        let mut csv = String::from("a,b,c\n");
        for r in &rows {
            csv.push_str(&format!("{},t{},{}\n", r[0], r[1], r[2]));
        }
        let m = parse_matrix(&csv, &hints()).unwrap();
        prop_assert_eq!(m.n_rows(), rows.len());
        prop_assert_eq!(m.to_csv(), csv.clone());
        let again = parse_matrix(&m.to_csv(), &hints()).unwrap();
        prop_assert_eq!(again.rows(), m.rows());
    }
}
