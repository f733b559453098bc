//! Closed-form gain design for double-integrator agents.
//!
//! In the coordinates `T = [[mu2 - mu1, -(mu2 + mu1)], [0, 2]]` the transformed
//! gain `K T = [k1, k2]` makes every sampled closed loop a contraction as soon
//! as `k1, k2` satisfy three pairs of strict bounds:
//!
//! ```text
//! a > k1 > 0
//! b > k2 > c
//! d > k2 - k1 > 0
//! ```
//!
//! with `a, b, c, d` depending only on `(hbar, lambda2, lambdaN, mu1, mu2)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::Matrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthesisError {
    #[error("invalid design spec: {0}")]
    InvalidSpec(String),
    #[error("transform parameters must satisfy 0 < mu1 < mu2 (got mu1 = {mu1}, mu2 = {mu2})")]
    MuOrdering { mu1: f64, mu2: f64 },
    #[error("limits must be positive and finite")]
    NonPositiveLimits,
    #[error("bounds are inconsistent for mu1 = {mu1}, mu2 = {mu2}: (mu1 + mu2) / (hbar + max(hbar, 2 mu1)) must exceed lambdaN / lambda2")]
    Infeasible { mu1: f64, mu2: f64 },
}

pub type Result<T> = std::result::Result<T, SynthesisError>;

/// Maximum sampling interval and the Laplacian eigenvalue band to be covered.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub hbar: f64,
    pub lambda2: f64,
    pub lambda_n: f64,
}

impl DesignSpec {
    pub fn new(hbar: f64, lambda2: f64, lambda_n: f64) -> Result<Self> {
        if !(hbar.is_finite() && lambda2.is_finite() && lambda_n.is_finite()) {
            return Err(SynthesisError::InvalidSpec("values must be finite".into()));
        }
        if hbar <= 0.0 {
            return Err(SynthesisError::InvalidSpec(format!("hbar must be positive, got {hbar}")));
        }
        if lambda2 <= 0.0 || lambda_n < lambda2 {
            return Err(SynthesisError::InvalidSpec(format!(
                "need 0 < lambda2 <= lambdaN, got [{lambda2}, {lambda_n}]"
            )));
        }
        Ok(Self { hbar, lambda2, lambda_n })
    }

    pub fn ratio(&self) -> f64 {
        self.lambda_n / self.lambda2
    }
}

/// Right-hand sides `a, b, c, d` of the gain bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityLimits {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

/// How the transformed gains were chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GainRecipe {
    /// `dk = 0.9 d`, `k1 = (min(a, b - dk) + max(0, c - dk)) / 2`, `k2 = k1 + dk`.
    Midpoint,
    /// Midpoint choice violated a bound; gains taken from the constructive
    /// consistency witness instead.
    Witness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainDesign {
    pub mu1: f64,
    pub mu2: f64,
    pub k1: f64,
    pub k2: f64,
    /// 2x2 similarity transform.
    pub t: Matrix,
    /// 1x2 state-feedback row `K = [k1, k2] T^{-1}`.
    pub k: Matrix,
    pub recipe: GainRecipe,
}

impl GainDesign {
    /// Assemble a design from transform parameters and transformed gains.
    pub fn from_transformed(mu1: f64, mu2: f64, k1: f64, k2: f64, recipe: GainRecipe) -> Result<Self> {
        check_mu(mu1, mu2)?;
        let t = transform_matrix(mu1, mu2);
        let k = Matrix::from_rows(&[[k1, k2]])
            .and_then(|kh| kh.matmul(&transform_inverse(mu1, mu2)))
            .map_err(|e| SynthesisError::InvalidSpec(e.to_string()))?;
        Ok(Self { mu1, mu2, k1, k2, t, k, recipe })
    }

    /// `gamma(h) = (mu1 + mu2 + h) / (mu2 - mu1)`.
    pub fn gamma(&self, h: f64) -> f64 {
        (self.mu1 + self.mu2 + h) / (self.mu2 - self.mu1)
    }

    pub fn gain(&self) -> [f64; 2] {
        [self.k[(0, 0)], self.k[(0, 1)]]
    }

    /// Gain entries rounded half-to-even at `places` decimals.
    pub fn rounded_gain(&self, places: i32) -> [f64; 2] {
        let [k1, k2] = self.gain();
        [round_half_even(k1, places), round_half_even(k2, places)]
    }
}

pub fn round_half_even(x: f64, places: i32) -> f64 {
    let s = 10f64.powi(places);
    (x * s).round_ties_even() / s
}

fn check_mu(mu1: f64, mu2: f64) -> Result<()> {
    if mu1.is_finite() && mu2.is_finite() && 0.0 < mu1 && mu1 < mu2 {
        Ok(())
    } else {
        Err(SynthesisError::MuOrdering { mu1, mu2 })
    }
}

/// `T = [[-mu1, -mu2], [1, 1]] [[1, 1], [-1, 1]] = [[mu2 - mu1, -(mu2 + mu1)], [0, 2]]`.
pub fn transform_matrix(mu1: f64, mu2: f64) -> Matrix {
    Matrix::from_rows(&[[mu2 - mu1, -(mu2 + mu1)], [0.0, 2.0]]).expect("finite 2x2")
}

fn transform_inverse(mu1: f64, mu2: f64) -> Matrix {
    let diff = mu2 - mu1;
    Matrix::from_rows(&[[1.0 / diff, (mu1 + mu2) / (2.0 * diff)], [0.0, 0.5]]).expect("finite 2x2")
}

pub fn limits(spec: &DesignSpec, mu1: f64, mu2: f64) -> Result<InequalityLimits> {
    check_mu(mu1, mu2)?;
    let DesignSpec { hbar, lambda2, lambda_n } = *spec;
    let sum = mu1 + mu2;
    Ok(InequalityLimits {
        a: 2.0 * (mu2 - mu1) / (hbar * lambda_n * (sum + hbar)),
        b: 4.0 / (lambda_n * (hbar + hbar.max(2.0 * mu1))),
        c: 4.0 / (lambda2 * sum),
        d: 4.0 / (lambda_n * (sum + hbar)),
    })
}

/// `(mu1 + mu2) / (hbar + max(hbar, 2 mu1)) > lambdaN / lambda2`.
pub fn is_feasible(spec: &DesignSpec, mu1: f64, mu2: f64) -> bool {
    if check_mu(mu1, mu2).is_err() {
        return false;
    }
    (mu1 + mu2) / (spec.hbar + spec.hbar.max(2.0 * mu1)) > spec.lambda_n / spec.lambda2
}

/// `(b > c) && (a + d > c)`.
pub fn abstract_consistency(l: &InequalityLimits) -> Result<bool> {
    let InequalityLimits { a, b, c, d } = *l;
    if ![a, b, c, d].iter().all(|v| v.is_finite() && *v > 0.0) {
        return Err(SynthesisError::NonPositiveLimits);
    }
    Ok(b > c && a + d > c)
}

/// A pair `(k1, k2)` satisfying the abstract bounds, built by the case split
/// `d >= c` / `c > d`. `None` when the bounds are inconsistent.
pub fn consistency_witness(l: &InequalityLimits) -> Option<(f64, f64)> {
    if !abstract_consistency(l).ok()? {
        return None;
    }
    let InequalityLimits { a, b, c, d } = *l;
    if d >= c {
        // k1 = alpha in (0, min(a, c)); k2 in (c, min(d + alpha, b))
        let alpha = 0.5 * a.min(c);
        let k2 = 0.5 * (c + (d + alpha).min(b));
        Some((alpha, k2))
    } else {
        // k2 - k1 = d - eps with 0 < eps < min(d, a + d - c);
        // k1 in (c - d + eps, min(a, b - d + eps))
        let eps = 0.5 * d.min(a + d - c);
        let gap = d - eps;
        let k1 = 0.5 * ((c - d + eps) + a.min(b - d + eps));
        Some((k1, k1 + gap))
    }
}

/// Transform parameters chosen by the design algorithm:
/// `mu1 = hbar / 2`, `mu2 = -mu1 + 2 hbar lambdaN / lambda2 + 1`.
pub fn default_mu(spec: &DesignSpec) -> (f64, f64) {
    let mu1 = spec.hbar / 2.0;
    let mu2 = -mu1 + 2.0 * spec.hbar * spec.lambda_n / spec.lambda2 + 1.0;
    (mu1, mu2)
}

/// Gain design with the default transform parameters.
///
/// Always succeeds: the default `mu` pair satisfies the feasibility condition
/// for every valid spec, and when the midpoint recipe breaks a bound the
/// constructive witness is used (recorded in [`GainDesign::recipe`]).
pub fn design(spec: &DesignSpec) -> GainDesign {
    let (mu1, mu2) = default_mu(spec);
    design_with_mu(spec, mu1, mu2).expect("default transform parameters are always feasible")
}

pub fn design_with_mu(spec: &DesignSpec, mu1: f64, mu2: f64) -> Result<GainDesign> {
    let lim = limits(spec, mu1, mu2)?;
    if !is_feasible(spec, mu1, mu2) || !abstract_consistency(&lim)? {
        return Err(SynthesisError::Infeasible { mu1, mu2 });
    }
    let (k1, k2) = midpoint_gains(&lim);
    let candidate = GainDesign::from_transformed(mu1, mu2, k1, k2, GainRecipe::Midpoint)?;
    if check_gain_inequalities(spec, &candidate) {
        return Ok(candidate);
    }
    let (k1, k2) = consistency_witness(&lim).ok_or(SynthesisError::Infeasible { mu1, mu2 })?;
    let fallback = GainDesign::from_transformed(mu1, mu2, k1, k2, GainRecipe::Witness)?;
    if check_gain_inequalities(spec, &fallback) {
        Ok(fallback)
    } else {
        Err(SynthesisError::Infeasible { mu1, mu2 })
    }
}

/// Raw midpoint recipe, without the postcondition check.
pub fn midpoint_gains(l: &InequalityLimits) -> (f64, f64) {
    let dk = 0.9 * l.d;
    let k1 = (l.a.min(l.b - dk) + (l.c - dk).max(0.0)) / 2.0;
    (k1, k1 + dk)
}

/// Slack of each of the six strict gain bounds; all positive iff the design
/// is valid for `spec`.
pub fn gain_inequality_slacks(spec: &DesignSpec, dsn: &GainDesign) -> [f64; 6] {
    let DesignSpec { hbar, lambda2, lambda_n } = *spec;
    let (mu1, mu2, k1, k2) = (dsn.mu1, dsn.mu2, dsn.k1, dsn.k2);
    let k1_upper = 2.0 * (mu2 - mu1) / (hbar * lambda_n * (mu1 + mu2 + hbar));
    let k2_upper = (2.0 / (hbar * lambda_n)).min(4.0 / (lambda_n * (2.0 * mu1 + hbar)));
    let k2_lower = 4.0 / (lambda2 * (mu1 + mu2));
    let gap_upper = 4.0 / (lambda_n * (mu1 + mu2 + hbar));
    [
        k1_upper - k1,
        k1,
        k2_upper - k2,
        k2 - k2_lower,
        gap_upper - (k2 - k1),
        k2 - k1,
    ]
}

pub fn check_gain_inequalities(spec: &DesignSpec, dsn: &GainDesign) -> bool {
    check_mu(dsn.mu1, dsn.mu2).is_ok() && gain_inequality_slacks(spec, dsn).iter().all(|s| *s > 0.0)
}

/// One cell of [`mu_grid_search`].
#[derive(Debug, Clone, PartialEq)]
pub struct MuCandidate {
    pub mu1: f64,
    pub mu2: f64,
    pub feasible: bool,
    pub design: Option<GainDesign>,
}

/// Exhaustive evaluation over a grid of transform parameters. Pairs with
/// `mu1 >= mu2` are skipped.
pub fn mu_grid_search(spec: &DesignSpec, mu1_values: &[f64], mu2_values: &[f64]) -> Vec<MuCandidate> {
    let mut out = Vec::new();
    for &mu1 in mu1_values {
        for &mu2 in mu2_values {
            if check_mu(mu1, mu2).is_err() {
                continue;
            }
            let feasible = is_feasible(spec, mu1, mu2);
            let design = if feasible { design_with_mu(spec, mu1, mu2).ok() } else { None };
            out.push(MuCandidate { mu1, mu2, feasible, design });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex1() -> DesignSpec {
        DesignSpec::new(3.0, 0.3, 6.0).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(DesignSpec::new(0.0, 1.0, 2.0).is_err());
        assert!(DesignSpec::new(1.0, 2.0, 1.0).is_err());
        assert!(DesignSpec::new(1.0, 0.0, 1.0).is_err());
        assert!(DesignSpec::new(1.0, 1.0, f64::INFINITY).is_err());
        assert!(DesignSpec::new(1.0, 1.0, 1.0).is_ok());
    }

    #[test]
    fn limits_example_one() {
        let l = limits(&ex1(), 1.5, 119.5).unwrap();
        assert!((l.a - 236.0 / 2232.0).abs() < 1e-15);
        assert!((l.b - 4.0 / 36.0).abs() < 1e-15);
        assert!((l.c - 4.0 / 36.3).abs() < 1e-15);
        assert!((l.d - 4.0 / 744.0).abs() < 1e-15);
        assert!(limits(&ex1(), 2.0, 1.0).is_err());
    }

    #[test]
    fn limits_edge_behaviour() {
        let l = limits(&ex1(), 10.0, 10.0 + 1e-9).unwrap();
        assert!(l.a > 0.0 && l.a < 1e-10);
        let s = DesignSpec::new(0.1, 2.0, 2.0).unwrap();
        let l = limits(&s, 40.0, 60.0).unwrap();
        assert!(l.c > l.d);
        assert!((l.c / l.d - (100.1 / 100.0)).abs() < 1e-12);
    }

    #[test]
    fn feasibility_examples() {
        assert!(is_feasible(&ex1(), 1.5, 119.5));
        let flat = DesignSpec::new(1.0, 2.0, 2.0).unwrap();
        assert!(is_feasible(&flat, 0.5, 2.0));
        // mu1 + mu2 = hbar leaves the left side at most 1/2
        assert!(!is_feasible(&flat, 0.25, 0.75));
        assert!(!is_feasible(&flat, 0.75, 0.25));
    }

    #[test]
    fn design_example_one_rounds_to_published_gain() {
        let d = design(&ex1());
        assert_eq!(d.recipe, GainRecipe::Midpoint);
        assert_eq!(d.rounded_gain(4), [0.0009, 0.1093]);
        assert!(check_gain_inequalities(&ex1(), &d));
    }

    #[test]
    fn design_example_two_rounds_to_published_gain() {
        let s = DesignSpec::new(1.0, 5.0, 60.0).unwrap();
        let d = design(&s);
        assert_eq!(d.rounded_gain(4), [0.0013, 0.032]);
    }

    #[test]
    fn transformed_gain_roundtrip() {
        let d = design(&ex1());
        let kt = d.k.matmul(&d.t).unwrap();
        assert!((kt[(0, 0)] - d.k1).abs() < 1e-12 && (kt[(0, 1)] - d.k2).abs() < 1e-12);
        let det = d.t[(0, 0)] * d.t[(1, 1)] - d.t[(0, 1)] * d.t[(1, 0)];
        assert!((det - 2.0 * (d.mu2 - d.mu1)).abs() < 1e-12);
    }

    #[test]
    fn inequality_strictness() {
        let spec = ex1();
        let d = design(&spec);
        let zero_k1 = GainDesign::from_transformed(d.mu1, d.mu2, 0.0, d.k2, GainRecipe::Midpoint).unwrap();
        assert!(!check_gain_inequalities(&spec, &zero_k1));
        let l = limits(&spec, d.mu1, d.mu2).unwrap();
        let at_gap = GainDesign::from_transformed(d.mu1, d.mu2, d.k1, d.k1 + l.d * (1.0 + 1e-12), GainRecipe::Midpoint).unwrap();
        assert!(!check_gain_inequalities(&spec, &at_gap));
    }

    #[test]
    fn abstract_consistency_examples() {
        let t = InequalityLimits { a: 1.0, b: 2.0, c: 1.5, d: 1.0 };
        assert_eq!(abstract_consistency(&t), Ok(true));
        let f = InequalityLimits { a: 1.0, b: 1.0, c: 1.5, d: 0.4 };
        assert_eq!(abstract_consistency(&f), Ok(false));
        assert!(consistency_witness(&f).is_none());
        let bad = InequalityLimits { a: 0.0, b: 1.0, c: 1.0, d: 1.0 };
        assert_eq!(abstract_consistency(&bad), Err(SynthesisError::NonPositiveLimits));
    }

    fn satisfies(l: &InequalityLimits, k1: f64, k2: f64) -> bool {
        l.a > k1 && k1 > 0.0 && l.b > k2 && k2 > l.c && l.d > k2 - k1 && k2 - k1 > 0.0
    }

    #[test]
    fn witness_matches_grid_search() {
        let cases = [
            InequalityLimits { a: 1.0, b: 2.0, c: 1.5, d: 1.0 },
            InequalityLimits { a: 0.2, b: 3.0, c: 0.5, d: 2.0 },
            InequalityLimits { a: 5.0, b: 1.2, c: 1.0, d: 0.1 },
            InequalityLimits { a: 0.3, b: 0.9, c: 0.8, d: 0.6 },
        ];
        for l in cases {
            // brute-force search for any satisfying pair
            let n = 400;
            let top = l.a.max(l.b) * 1.1;
            let found = (1..n).any(|i| {
                (1..n).any(|j| satisfies(&l, top * i as f64 / n as f64, top * j as f64 / n as f64))
            });
            let w = consistency_witness(&l);
            assert_eq!(found, w.is_some(), "{l:?}");
            if let Some((k1, k2)) = w {
                assert!(satisfies(&l, k1, k2), "{l:?} -> {k1}, {k2}");
            }
        }
    }

    #[test]
    fn midpoint_recipe_breaks_for_long_sampling_intervals() {
        // the "+1" in mu2 does not scale with hbar, so for long intervals the
        // midpoint pushes k1 past its upper bound
        let spec = DesignSpec::new(40.0, 1.0, 1.2).unwrap();
        let (mu1, mu2) = default_mu(&spec);
        let l = limits(&spec, mu1, mu2).unwrap();
        let (k1, _) = midpoint_gains(&l);
        assert!(k1 >= l.a);
        let d = design(&spec);
        assert_eq!(d.recipe, GainRecipe::Witness);
        assert!(check_gain_inequalities(&spec, &d));
    }

    #[test]
    fn infeasible_mu_pair_is_rejected() {
        let spec = ex1();
        assert!(matches!(design_with_mu(&spec, 1.5, 3.0), Err(SynthesisError::Infeasible { .. })));
    }

    #[test]
    fn grid_search_marks_feasibility() {
        let spec = ex1();
        let cells = mu_grid_search(&spec, &[1.5, 3.0], &[2.0, 50.0, 200.0]);
        assert!(cells.iter().all(|c| c.mu1 < c.mu2));
        for c in &cells {
            assert_eq!(c.feasible, is_feasible(&spec, c.mu1, c.mu2));
            assert_eq!(c.feasible, c.design.is_some());
        }
    }

    #[test]
    fn rounding_is_half_even() {
        assert_eq!(round_half_even(2.5, 0), 2.0);
        assert_eq!(round_half_even(3.5, 0), 4.0);
        assert_eq!(round_half_even(0.1093033, 4), 0.1093);
    }
}
