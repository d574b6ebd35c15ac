use afm_forge::matrix::CellValue;
use afm_forge::{parse_constraint, render_constraint, BoolFactor, ReadableConstraint, RelOp};
use proptest::prelude::*;

fn name() -> impl Strategy<Value = String> {
    prop_oneof![
        "[A-Za-z_][A-Za-z0-9_]{0,8}",
        "[ -~]{1,10}",
        "[a-z]{1,4} [a-z]{1,4}",
    ]
}

fn literal() -> impl Strategy<Value = CellValue> {
    prop_oneof![any::<u64>().prop_map(CellValue::Nat), name().prop_map(CellValue::Text)]
}

fn op() -> impl Strategy<Value = RelOp> {
    prop::sample::select(RelOp::ALL.to_vec())
}

fn factor() -> impl Strategy<Value = BoolFactor> {
    prop_oneof![
        name().prop_map(BoolFactor::Feature),
        name().prop_map(BoolFactor::NotFeature),
        (name(), op(), literal()).prop_map(|(attribute, op, literal)| BoolFactor::Rel { attribute, op, literal }),
    ]
}

proptest! {
    #[test]
    fn rendering_parses_back(left in factor(), right in factor()) {
        let rc = ReadableConstraint::new(left, right);
        let text = render_constraint(&rc);
        prop_assert_eq!(parse_constraint(&text).unwrap(), rc, "{}", text);
    }
}

#[test]
fn wiki_constraints_round_trip() {
    for text in [
        "GPL => LicensePrice <= 10",
        "Commercial => LicensePrice = 10",
        "NoLimit => !LanguageSupport",
        "LicensePrice > 10 => Language = \"--\"",
        "Language = Python => LicensePrice < 10",
        "NoLimit => LicensePrice >= 10",
    ] {
        assert_eq!(render_constraint(&parse_constraint(text).unwrap()), text);
    }
}

#[test]
fn numeric_looking_text_is_quoted() {
    let rc = ReadableConstraint::new(
        BoolFactor::Feature("A".into()),
        BoolFactor::Rel { attribute: "B".into(), op: RelOp::Eq, literal: CellValue::text("10") },
    );
    assert_eq!(render_constraint(&rc), "A => B = \"10\"");
}

#[test]
fn malformed_constraints_are_rejected() {
    for text in ["", "A", "A => B => C", "=> B", "A =>", "A => B <", "A => \"open", "A => B = 1 2"] {
        assert!(parse_constraint(text).is_err(), "{text:?} parsed");
    }
}
