//! Exact Δt⁸ coefficients of the three-stage test method paired with `f′f`.

use rkenergy::catalog;
use rkenergy::expansion;
use rkenergy::rational::{rat, Rational};

fn coefficient(second: &str) -> Rational {
    let exp = expansion::expansion_coefficients(&catalog::paper_testmethod(), 8).unwrap();
    exp.coefficient_of("[t]", second)
        .cloned()
        .unwrap_or_else(|| panic!("no pair with {second}"))
}

#[test]
fn order_eight_first_derivative_row() {
    let expected = [
        ("[[t,t,t,t]]", rat(-135, 720896)),
        ("[[t,t,t],t]", rat(-45, 22528)),
        ("[[t,t],[t]]", rat(-135, 11264)),
        ("[[t,t],t,t]", rat(-45, 5632)),
        ("[[t],[t],t]", rat(-45, 1408)),
        ("[[t],t,t,t]", rat(-5, 352)),
    ];
    for (tree, value) in expected {
        assert_eq!(coefficient(tree), value, "{tree}");
    }
}

/// Recomputed independently as `2 Σ Mᵢⱼ cᵢ cⱼ⁵ / 5!`; the value is negative.
#[test]
fn order_eight_bushy_five_cross_term() {
    assert_eq!(coefficient("[t,t,t,t,t]"), rat(-20723, 21626880));
}
