//! Named coefficient presets.

use rand::Rng;
use tvmfg::rng::stream_rng;

use crate::config::ModelChoice;

/// Stream used for the random cosine coefficients, kept apart from the
/// streams that seed random initial densities.
const COSINES_STREAM: u64 = 1 << 32;

#[derive(Clone, Debug, PartialEq)]
pub struct Preset {
    pub model: ModelChoice,
    pub dim: usize,
    /// `f` for linear models, `K` for nonlinear ones.
    pub coef: String,
    /// Second coefficient of a two-stage trace study.
    pub trace_coef: Option<String>,
}

const F_4X: &str = "4*x";
const F_SIN: &str = "max(0, 9*x*sin(5*pi*x))";
const F_COS: &str = "15*(cos(2*pi*x) + 1)";
const F_GAUSS: &str = "5*exp(-((x - 1)^2 + (y - 1)^2)/0.5)";

pub const NAMES: &[&str] = &[
    "linear-4x",
    "linear-sin",
    "linear-cos",
    "nonlinear-4x",
    "nonlinear-sin",
    "nonlinear-cos",
    "linear-gauss",
    "nonlinear-gauss",
    "linear-cosines",
    "nonlinear-cosines",
    "linear-interp",
];

/// Resolves `name`; the random cosine presets draw their amplitudes and
/// frequencies from `seed`.
pub fn lookup(name: &str, seed: u64) -> Option<Preset> {
    let (kind, shape) = name.split_once('-')?;
    let model = match kind {
        "linear" => ModelChoice::Linear,
        "nonlinear" => ModelChoice::Nonlinear,
        _ => return None,
    };
    let (dim, coef, trace_coef) = match (model, shape) {
        (_, "4x") => (1, F_4X.to_string(), None),
        (_, "sin") => (1, F_SIN.to_string(), None),
        (_, "cos") => (1, F_COS.to_string(), None),
        (_, "gauss") => (2, F_GAUSS.to_string(), None),
        (_, "cosines") => (2, random_cosines(seed), None),
        (ModelChoice::Linear, "interp") => (1, "4*x + 1".to_string(), Some(F_SIN.to_string())),
        _ => return None,
    };
    Some(Preset {
        model,
        dim,
        coef,
        trace_coef,
    })
}

/// `max(0, 4 Σ_{i=1}^4 cos(a_i π x) cos(b_i π y))` with `a_i, b_i ~ U[0, 10]`,
/// written out so the drawn values are part of the recorded expression.
pub fn random_cosines(seed: u64) -> String {
    let mut rng = stream_rng(seed, COSINES_STREAM);
    let terms: Vec<String> = (0..4)
        .map(|_| {
            let a: f64 = rng.random_range(0.0..10.0);
            let b: f64 = rng.random_range(0.0..10.0);
            format!("cos({a:.17e}*pi*x)*cos({b:.17e}*pi*y)")
        })
        .collect();
    format!("max(0, 4*({}))", terms.join(" + "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use std::f64::consts::PI;

    #[test]
    fn every_name_resolves() {
        for name in NAMES {
            let p = lookup(name, 7).unwrap_or_else(|| panic!("{name}"));
            Expr::parse(&p.coef).unwrap();
            assert_eq!(
                p.dim == 2,
                name.ends_with("gauss") || name.ends_with("cosines")
            );
        }
        assert!(lookup("nonlinear-interp", 1).is_none());
        assert!(lookup("linear-5x", 1).is_none());
        assert!(lookup("quadratic-4x", 1).is_none());
    }

    #[test]
    fn cosines_depend_only_on_seed() {
        assert_eq!(random_cosines(3), random_cosines(3));
        assert_ne!(random_cosines(3), random_cosines(4));
    }

    #[test]
    fn cosines_expression_matches_its_terms() {
        let src = random_cosines(11);
        let e = Expr::parse(&src).unwrap();
        let mut rng = stream_rng(11, COSINES_STREAM);
        let ab: Vec<(f64, f64)> = (0..4)
            .map(|_| (rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)))
            .collect();
        assert!(ab
            .iter()
            .all(|(a, b)| (0.0..10.0).contains(a) && (0.0..10.0).contains(b)));
        for &(x, y) in &[(0.1, 0.2), (0.5, 0.5), (0.9, 0.3)] {
            let direct: f64 = ab
                .iter()
                .map(|(a, b)| (a * PI * x).cos() * (b * PI * y).cos())
                .sum::<f64>();
            assert!((e.eval(x, y) - (4.0 * direct).max(0.0)).abs() < 1e-12);
        }
    }
}
