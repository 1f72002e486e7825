//! JSON renderings of exact values.

use serde_json::{json, Map, Value};

use stochdp::finance::DualValue;
use stochdp::oracle::{Endowment, PhiValue};
use stochdp::polyhedra::Lineality;
use stochdp::rational::{decimal_string, format_rational, ExtReal, Rational};
use stochdp::tree::{NodeId, Policy, ScenarioTree};

const DECIMAL_PLACES: usize = 6;

pub fn rational(r: &Rational) -> Value {
    json!(format_rational(r))
}

pub fn vector(v: &[Rational]) -> Value {
    Value::Array(v.iter().map(rational).collect())
}

/// `{"exact": "p/q", "decimal": "…"}`.
pub fn value(r: &Rational) -> Value {
    json!({ "exact": format_rational(r), "decimal": decimal_string(r, DECIMAL_PLACES) })
}

pub fn ext(v: &ExtReal) -> Value {
    match v {
        ExtReal::Finite(r) => value(r),
        ExtReal::PlusInfinity => json!({ "exact": "+inf" }),
    }
}

pub fn dual(v: &DualValue) -> Value {
    match v {
        DualValue::Finite(r) => value(r),
        DualValue::PlusInfinity => json!({ "exact": "+inf" }),
        DualValue::MinusInfinity => json!({ "exact": "-inf" }),
    }
}

pub fn phi(v: &PhiValue) -> Value {
    match v {
        PhiValue::Finite(r) => value(r),
        PhiValue::PlusInfinity => json!({ "exact": "+inf" }),
        PhiValue::MinusInfinity => json!({ "exact": "-inf" }),
    }
}

pub fn policy(tree: &ScenarioTree, p: &Policy) -> Value {
    let m: Map<String, Value> = p
        .iter()
        .map(|(v, x)| (tree.node(*v).name.clone(), vector(x)))
        .collect();
    Value::Object(m)
}

pub fn node_map<T>(tree: &ScenarioTree, items: impl IntoIterator<Item = (NodeId, T)>, f: impl Fn(T) -> Value) -> Value {
    let m: Map<String, Value> = items
        .into_iter()
        .map(|(v, x)| (tree.node(v).name.clone(), f(x)))
        .collect();
    Value::Object(m)
}

pub fn basis(b: &[Vec<Rational>]) -> Value {
    Value::Array(b.iter().map(|v| vector(v)).collect())
}

pub fn lineality(l: &Lineality) -> Value {
    basis(&l.basis)
}

pub fn endowment(tree: &ScenarioTree, u: &Endowment) -> Value {
    node_map(tree, u.iter().map(|(v, x)| (*v, x)), |x| vector(x))
}
