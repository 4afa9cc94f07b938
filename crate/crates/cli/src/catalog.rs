//! Built-in model cases.

use expes_core::PrototypeModel;

/// `(id, B₀, B₁, B₂, σ, α)` of each built-in case; `x0 = 1`, `T = 1`.
pub const CASES: [(&str, f64, f64, f64, f64, f64); 7] = [
    ("case1", 0.0, 0.0, 2.0, 0.1, 1.5),
    ("case2", 0.0, 0.0, 3.0, 1.0, 1.25),
    ("case3", 0.0, 0.0, 1.0, 1.0, 1.5),
    ("case4", 1.0, 1.0, 0.4, 0.1, 3.0),
    ("case5", 0.0, 0.0, 10.0, 0.5, 1.125),
    ("case6", 0.0, 0.0, 0.01, 0.1, 1.25),
    ("case7", 0.0, 0.0, 0.4, 0.1, 3.0),
];

pub fn builtin(id: &str) -> Option<PrototypeModel> {
    let id = id.trim().to_ascii_lowercase();
    CASES
        .iter()
        .find(|c| c.0 == id)
        .map(|&(_, b0, b1, b2, s, a)| PrototypeModel::unchecked(b0, b1, b2, s, a, 1.0, 1.0))
}

pub fn ids() -> impl Iterator<Item = &'static str> {
    CASES.iter().map(|c| c.0)
}
