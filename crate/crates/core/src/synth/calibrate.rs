//! Intercept calibration: shift the model intercept so the population-mean
//! expected purchase probability matches a target rate.

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use super::logit::{sigmoid, LogitModel};
use super::population::Population;
use super::{Result, SynthError, REDUCE_CHUNK};

/// Bisection iteration cap (bracket expansion not included).
pub const MAX_BISECTION_ITERATIONS: usize = 60;

const BRACKET_LIMIT: f64 = 4096.0;

/// Equiprobable normal quadrature nodes used when a random intercept is present.
const RANDOM_EFFECT_NODES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BisectionResult {
    pub root: f64,
    pub value: f64,
    pub iterations: usize,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationReport {
    pub target_rate: f64,
    pub shift: f64,
    pub achieved_rate: f64,
    pub iterations: usize,
}

/// Solves `f(x) = target` for a strictly increasing `f` by bracketed bisection.
///
/// The bracket starts at `[-1, 1]` and doubles outward until it contains the
/// target; the endpoints are then checked to satisfy `f(lo) < f(hi)` before
/// halving. Stops once `|f(x) - target| <= tol`.
pub fn bisect_monotone(f: impl Fn(f64) -> f64, target: f64, tol: f64) -> Result<BisectionResult> {
    let mut lo = -1.0;
    let mut hi = 1.0;
    let mut f_lo = f(lo);
    let mut f_hi = f(hi);
    while f_lo > target && lo > -BRACKET_LIMIT {
        hi = lo;
        f_hi = f_lo;
        lo *= 2.0;
        f_lo = f(lo);
    }
    while f_hi < target && hi < BRACKET_LIMIT {
        lo = hi;
        f_lo = f_hi;
        hi *= 2.0;
        f_hi = f(hi);
    }
    if !(f_lo <= target && target <= f_hi) || !(f_lo < f_hi) {
        return Err(SynthError::Calibration {
            target,
            lo,
            hi,
            iterations: 0,
            achieved: if f_lo > target { f_lo } else { f_hi },
        });
    }
    let mut last = f_lo;
    for iteration in 1..=MAX_BISECTION_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        let value = f(mid);
        last = value;
        if (value - target).abs() <= tol {
            return Ok(BisectionResult {
                root: mid,
                value,
                iterations: iteration,
                lo,
                hi,
            });
        }
        if value < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(SynthError::Calibration {
        target,
        lo,
        hi,
        iterations: MAX_BISECTION_ITERATIONS,
        achieved: last,
    })
}

/// Standard-normal nodes at the midpoints of `k` equal-probability bins.
pub(crate) fn normal_nodes(k: usize) -> Vec<f64> {
    let normal = Normal::standard();
    (0..k)
        .map(|i| normal.inverse_cdf((i as f64 + 0.5) / k as f64))
        .collect()
}

/// Closure computing `E[sigmoid(eta + u)]`, `u ~ N(0, sd²)`, for a given `sd`.
pub(crate) fn expected_sigmoid(sd: f64) -> impl Fn(f64) -> f64 + Sync {
    let nodes: Vec<f64> = if sd > 0.0 {
        normal_nodes(RANDOM_EFFECT_NODES)
            .into_iter()
            .map(|z| z * sd)
            .collect()
    } else {
        Vec::new()
    };
    move |eta| {
        if nodes.is_empty() {
            sigmoid(eta)
        } else {
            nodes.iter().map(|u| sigmoid(eta + u)).sum::<f64>() / nodes.len() as f64
        }
    }
}

/// Deterministic chunked mean of `f(x)` over `xs`.
pub(crate) fn chunked_mean(xs: &[f64], f: impl Fn(f64) -> f64 + Sync) -> f64 {
    let partials: Vec<f64> = xs
        .par_chunks(REDUCE_CHUNK)
        .map(|c| c.iter().map(|&x| f(x)).sum::<f64>())
        .collect();
    partials.iter().sum::<f64>() / xs.len() as f64
}

fn level_sums(model: &LogitModel, population: &Population) -> Vec<f64> {
    population
        .rows()
        .par_chunks(population.n_vars())
        .map(|row| model.level_sum(row))
        .collect()
}

/// Mean over the population of each individual's expected purchase probability
/// (integrating the random intercept when its sd is positive).
pub fn mean_expected_probability(model: &LogitModel, population: &Population) -> f64 {
    let sums = level_sums(model, population);
    let g = expected_sigmoid(model.random_intercept_sd);
    let a = model.intercept;
    chunked_mean(&sums, |s| g(a + s))
}

/// Returns a copy of `model` whose intercept is shifted so that the mean
/// expected probability over `population` is within `tol` of `target_rate`.
pub fn calibrate_intercept(
    model: &LogitModel,
    population: &Population,
    target_rate: f64,
    tol: f64,
) -> Result<(LogitModel, CalibrationReport)> {
    if !(target_rate > 0.0 && target_rate < 1.0) {
        return Err(SynthError::Input(format!(
            "target rate must lie in (0, 1), got {target_rate}"
        )));
    }
    if !(tol > 0.0) {
        return Err(SynthError::Input(format!("tolerance must be positive, got {tol}")));
    }
    if population.is_empty() {
        return Err(SynthError::Input("cannot calibrate on an empty population".into()));
    }
    if population.n_vars() != model.coefficients().len() {
        return Err(SynthError::Model(
            "population and model disagree on the number of variables".into(),
        ));
    }
    let sums = level_sums(model, population);
    let g = expected_sigmoid(model.random_intercept_sd);
    let a = model.intercept;
    let result = bisect_monotone(|shift| chunked_mean(&sums, |s| g(a + shift + s)), target_rate, tol)?;
    Ok((
        model.with_intercept(a + result.root),
        CalibrationReport {
            target_rate,
            shift: result.root,
            achieved_rate: result.value,
            iterations: result.iterations,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{FeatureSchema, Level, SignificanceTier, Variable};
    use crate::synth::logit::logit;
    use crate::synth::population::Individual;

    fn three_level_schema() -> FeatureSchema {
        FeatureSchema::new(vec![Variable {
            name: "x".into(),
            display: "X".into(),
            tier: SignificanceTier::High,
            levels: ["a", "b", "c"]
                .iter()
                .map(|l| Level { label: l.to_string(), code: None })
                .collect(),
        }])
        .unwrap()
    }

    #[test]
    fn homogeneous_population_has_closed_form_shift() {
        let schema = FeatureSchema::survey();
        let model = LogitModel::flat(&schema, logit(0.30));
        let pop = Population::from_individuals(&schema, &vec![Individual(vec![0; 10]); 20], 0)
            .unwrap();
        let (calibrated, report) = calibrate_intercept(&model, &pop, 0.25, 1e-12).unwrap();
        let expected = logit(0.25) - logit(0.30);
        assert!((expected - -0.2513).abs() < 1e-4);
        assert!((report.shift - expected).abs() < 1e-9, "shift {}", report.shift);
        assert!((calibrated.intercept - logit(0.25)).abs() < 1e-9);
        assert!(report.iterations <= MAX_BISECTION_ITERATIONS);
    }

    #[test]
    fn target_at_current_rate_gives_zero_shift() {
        let schema = FeatureSchema::survey();
        let model = LogitModel::flat(&schema, logit(0.4));
        let pop = Population::from_individuals(&schema, &[Individual(vec![0; 10])], 0).unwrap();
        let (_, report) = calibrate_intercept(&model, &pop, 0.4, 1e-9).unwrap();
        assert!(report.shift.abs() < 1e-8);
    }

    #[test]
    fn heterogeneous_shift_matches_brute_force_scan() {
        let schema = three_level_schema();
        let coefficients = vec![vec![0.0, logit(0.5) - logit(0.1), logit(0.9) - logit(0.1)]];
        let model = LogitModel::new(&schema, logit(0.1), coefficients, 0.0).unwrap();
        let pop = Population::from_individuals(
            &schema,
            &[Individual(vec![0]), Individual(vec![1]), Individual(vec![2])],
            0,
        )
        .unwrap();
        let (_, report) = calibrate_intercept(&model, &pop, 0.4, 1e-12).unwrap();

        // Oracle: scan the shift axis at 1e-6 resolution for the sign change.
        let mean = |s: f64| {
            [0.1f64, 0.5, 0.9]
                .iter()
                .map(|p| 1.0 / (1.0 + (-(logit(*p) + s)).exp()))
                .sum::<f64>()
                / 3.0
        };
        let step = 1e-6;
        let mut s = -5.0;
        while mean(s + step) < 0.4 {
            s += step;
        }
        let scanned = s + step / 2.0;
        assert!((report.shift - scanned).abs() <= 1e-6, "{} vs {}", report.shift, scanned);
    }

    #[test]
    fn rejects_out_of_range_target() {
        let schema = FeatureSchema::survey();
        let model = LogitModel::flat(&schema, 0.0);
        let pop = Population::from_individuals(&schema, &[Individual(vec![0; 10])], 0).unwrap();
        assert!(calibrate_intercept(&model, &pop, 1.0, 1e-6).is_err());
        assert!(calibrate_intercept(&model, &pop, 0.3, 0.0).is_err());
    }

    #[test]
    fn bisection_reports_bracket_when_unreachable() {
        let err = bisect_monotone(|x| 0.5 + 0.0 * x, 0.7, 1e-9).unwrap_err();
        assert!(matches!(err, SynthError::Calibration { .. }));
        // A flat function never gets inside the tolerance band: cap reached.
        let err = bisect_monotone(|x| if x < 0.3 { 0.0 } else { 1.0 }, 0.5, 1e-9).unwrap_err();
        match err {
            SynthError::Calibration { iterations, lo, hi, .. } => {
                assert_eq!(iterations, MAX_BISECTION_ITERATIONS);
                assert!(lo <= 0.3 && 0.3 <= hi);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn random_intercept_lowers_high_rates() {
        // Jensen: averaging a concave region of the sigmoid pulls the mean down.
        let g0 = expected_sigmoid(0.0);
        let g1 = expected_sigmoid(1.0);
        assert!(g1(2.0) < g0(2.0));
        assert!(g1(-2.0) > g0(-2.0));
        assert!((g1(0.0) - 0.5).abs() < 1e-12);
    }
}
