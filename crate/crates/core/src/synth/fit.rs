//! Recovering an additive logit model whose expected marginals reproduce a
//! set of published per-level purchase probabilities.

use rayon::prelude::*;

use super::calibrate::{bisect_monotone, expected_sigmoid};
use super::distribution::PopulationDistribution;
use super::logit::{logit, LogitModel};
use super::tables::ProbabilityTable;
use super::{Result, SynthError, REDUCE_CHUNK};
use crate::schema::FeatureSchema;

/// Largest joint grid [`ExpectationGrid`] will enumerate.
pub const MAX_GRID_CELLS: usize = 50_000_000;

/// Exact enumeration of the joint level distribution (attributes are
/// independent, so each cell's weight is a product of level weights).
/// Cells with zero weight are dropped.
#[derive(Debug, Clone)]
pub struct ExpectationGrid {
    n_vars: usize,
    level_counts: Vec<usize>,
    offsets: Vec<usize>,
    levels: Vec<u8>,
    weights: Vec<f64>,
    level_mass: Vec<Vec<f64>>,
}

impl ExpectationGrid {
    pub fn new(schema: &FeatureSchema, dist: &PopulationDistribution) -> Result<Self> {
        dist.validate(schema)?;
        let support: Vec<Vec<(u8, f64)>> = dist
            .all()
            .iter()
            .map(|p| {
                p.iter()
                    .enumerate()
                    .filter(|(_, &w)| w > 0.0)
                    .map(|(l, &w)| (l as u8, w))
                    .collect()
            })
            .collect();
        let mut cells: usize = 1;
        for s in &support {
            cells = cells
                .checked_mul(s.len())
                .filter(|&c| c <= MAX_GRID_CELLS)
                .ok_or_else(|| {
                    SynthError::Input(format!(
                        "joint level grid exceeds {MAX_GRID_CELLS} cells; expectation fit is infeasible"
                    ))
                })?;
        }
        let n_vars = schema.len();
        let mut levels = Vec::with_capacity(cells * n_vars);
        let mut weights = Vec::with_capacity(cells);
        let mut cursor = vec![0usize; n_vars];
        for _ in 0..cells {
            let mut w = 1.0;
            for (v, s) in support.iter().enumerate() {
                let (l, p) = s[cursor[v]];
                levels.push(l);
                w *= p;
            }
            weights.push(w);
            for v in (0..n_vars).rev() {
                cursor[v] += 1;
                if cursor[v] < support[v].len() {
                    break;
                }
                cursor[v] = 0;
            }
        }
        let level_counts = schema.level_counts();
        let mut offsets = Vec::with_capacity(n_vars);
        let mut acc = 0;
        for &c in &level_counts {
            offsets.push(acc);
            acc += c;
        }
        Ok(ExpectationGrid {
            n_vars,
            level_counts,
            offsets,
            levels,
            weights,
            level_mass: dist.all().to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Population-expected purchase rate under `model`.
    pub fn rate(&self, model: &LogitModel) -> f64 {
        let g = expected_sigmoid(model.random_intercept_sd);
        let partials: Vec<f64> = self
            .levels
            .par_chunks(REDUCE_CHUNK * self.n_vars)
            .zip(self.weights.par_chunks(REDUCE_CHUNK))
            .map(|(rows, ws)| {
                rows.chunks_exact(self.n_vars)
                    .zip(ws)
                    .map(|(row, w)| w * g(model.intercept + model.level_sum(row)))
                    .sum::<f64>()
            })
            .collect();
        partials.iter().sum()
    }

    /// Overall expected rate and expected marginal purchase probability per
    /// level (`None` for levels with zero weight).
    pub fn marginals(&self, model: &LogitModel) -> (f64, Vec<Vec<Option<f64>>>) {
        let g = expected_sigmoid(model.random_intercept_sd);
        let total_levels: usize = self.level_counts.iter().sum();
        let partials: Vec<(f64, Vec<f64>)> = self
            .levels
            .par_chunks(REDUCE_CHUNK * self.n_vars)
            .zip(self.weights.par_chunks(REDUCE_CHUNK))
            .map(|(rows, ws)| {
                let mut mass = vec![0.0; total_levels];
                let mut rate = 0.0;
                for (row, w) in rows.chunks_exact(self.n_vars).zip(ws) {
                    let q = w * g(model.intercept + model.level_sum(row));
                    rate += q;
                    for (v, &l) in row.iter().enumerate() {
                        mass[self.offsets[v] + l as usize] += q;
                    }
                }
                (rate, mass)
            })
            .collect();
        let mut rate = 0.0;
        let mut mass = vec![0.0; total_levels];
        for (r, m) in partials {
            rate += r;
            for (a, b) in mass.iter_mut().zip(m) {
                *a += b;
            }
        }
        let marginals = self
            .level_counts
            .iter()
            .enumerate()
            .map(|(v, &n)| {
                (0..n)
                    .map(|l| {
                        let p = self.level_mass[v][l];
                        (p > 0.0).then(|| mass[self.offsets[v] + l] / p)
                    })
                    .collect()
            })
            .collect();
        (rate, marginals)
    }
}

/// Expected marginal purchase probabilities under `model` and `dist`,
/// computed by exact expectation (no sampling).
pub fn expected_marginals(
    schema: &FeatureSchema,
    model: &LogitModel,
    dist: &PopulationDistribution,
) -> Result<Vec<Vec<Option<f64>>>> {
    model.validate(schema)?;
    Ok(ExpectationGrid::new(schema, dist)?.marginals(model).1)
}

/// Overall purchase rate implied by per-level targets under `dist`: the
/// average over variables of each variable's weighted target mean. All
/// variables agree when `dist` is consistent with the targets.
pub fn implied_rate(targets: &[Vec<f64>], dist: &PopulationDistribution) -> f64 {
    let means: Vec<f64> = targets
        .iter()
        .zip(dist.all())
        .map(|(t, w)| t.iter().zip(w).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    means.iter().sum::<f64>() / means.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Stop once every expected marginal is within this of its target.
    pub tolerance: f64,
    pub max_sweeps: usize,
    /// Tolerance of the per-sweep intercept bisection.
    pub calibration_tolerance: f64,
    pub random_intercept_sd: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tolerance: 1e-4,
            max_sweeps: 200,
            calibration_tolerance: 1e-12,
            random_intercept_sd: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub variable: String,
    pub level: String,
    pub target: f64,
    pub achieved: Option<f64>,
}

impl Residual {
    pub fn error(&self) -> f64 {
        self.achieved.map_or(f64::INFINITY, |a| a - self.target)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub residuals: Vec<Residual>,
    pub max_abs_error: f64,
    pub sweeps: usize,
    pub converged: bool,
    pub target_rate: f64,
    pub achieved_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub model: LogitModel,
    pub report: FitReport,
}

fn target_matrix(schema: &FeatureSchema, targets: &[ProbabilityTable]) -> Result<Vec<Vec<f64>>> {
    let mut t: Vec<Vec<Option<f64>>> = schema
        .variables
        .iter()
        .map(|v| vec![None; v.n_levels()])
        .collect();
    for table in targets {
        for entry in &table.entries {
            let (v, l) = schema.locate(&table.variable, &entry.level)?;
            let p = entry.probability.ok_or_else(|| {
                SynthError::Input(format!(
                    "target {}/{} has no probability",
                    table.variable, entry.level
                ))
            })?;
            if !(p > 0.0 && p < 1.0) {
                return Err(SynthError::Input(format!(
                    "target {}/{} = {p} must lie strictly inside (0, 1)",
                    table.variable, entry.level
                )));
            }
            t[v][l] = Some(p);
        }
    }
    schema
        .variables
        .iter()
        .zip(t)
        .map(|(var, row)| {
            row.into_iter()
                .zip(&var.levels)
                .map(|(p, level)| {
                    p.ok_or_else(|| {
                        SynthError::Input(format!("no target for {}/{}", var.name, level.label))
                    })
                })
                .collect()
        })
        .collect()
}

/// Target probabilities as a `[variable][level]` matrix aligned to `schema`.
pub fn targets_by_level(schema: &FeatureSchema, targets: &[ProbabilityTable]) -> Result<Vec<Vec<f64>>> {
    target_matrix(schema, targets)
}

fn calibrate(grid: &ExpectationGrid, model: &LogitModel, target_rate: f64, tol: f64) -> Result<LogitModel> {
    let a = model.intercept;
    let result = bisect_monotone(|shift| grid.rate(&model.with_intercept(a + shift)), target_rate, tol)?;
    Ok(model.with_intercept(a + result.root))
}

fn report(
    schema: &FeatureSchema,
    targets: &[Vec<f64>],
    marginals: &[Vec<Option<f64>>],
    sweeps: usize,
    tolerance: f64,
    target_rate: f64,
    achieved_rate: f64,
) -> FitReport {
    let mut residuals = Vec::with_capacity(schema.n_levels_total());
    for ((var, t), m) in schema.variables.iter().zip(targets).zip(marginals) {
        for ((level, &target), &achieved) in var.levels.iter().zip(t).zip(m) {
            residuals.push(Residual {
                variable: var.name.clone(),
                level: level.label.clone(),
                target,
                achieved,
            });
        }
    }
    let max_abs_error = residuals
        .iter()
        .map(|r| r.error().abs())
        .fold(0.0, f64::max);
    FitReport {
        residuals,
        max_abs_error,
        sweeps,
        converged: max_abs_error < tolerance,
        target_rate,
        achieved_rate,
    }
}

/// Fits intercept and level coefficients so that the expected marginals under
/// `dist` match `targets` and the overall expected rate equals `target_rate`.
///
/// Coefficients start at `logit(t_l) - logit(t_ref)`. Each sweep recalibrates
/// the intercept, then visits the variables in schema order, moving every
/// level's log-odds by `logit(target) - logit(expected)` (the reference
/// level's move is absorbed into the intercept). Levels with zero weight keep
/// their initial coefficient and are excluded from the error.
pub fn fit_coefficients(
    schema: &FeatureSchema,
    targets: &[ProbabilityTable],
    dist: &PopulationDistribution,
    target_rate: f64,
    options: &FitOptions,
) -> Result<FitOutcome> {
    if !(target_rate > 0.0 && target_rate < 1.0) {
        return Err(SynthError::Input(format!(
            "target rate must lie in (0, 1), got {target_rate}"
        )));
    }
    if !(options.tolerance > 0.0) || options.max_sweeps == 0 {
        return Err(SynthError::Input(
            "fit tolerance must be positive and max_sweeps at least 1".into(),
        ));
    }
    let t = target_matrix(schema, targets)?;
    let grid = ExpectationGrid::new(schema, dist)?;
    let coefficients = t
        .iter()
        .map(|row| row.iter().map(|&p| logit(p) - logit(row[0])).collect())
        .collect();
    let mut model = LogitModel::new(schema, logit(target_rate), coefficients, options.random_intercept_sd)?;

    for sweep in 1..=options.max_sweeps {
        model = calibrate(&grid, &model, target_rate, options.calibration_tolerance)?;
        let (rate, marginals) = grid.marginals(&model);
        let rep = report(schema, &t, &marginals, sweep, options.tolerance, target_rate, rate);
        tracing::debug!(sweep, max_abs_error = rep.max_abs_error, "fit sweep");
        if rep.converged {
            return Ok(FitOutcome { model, report: rep });
        }
        for v in 0..schema.len() {
            let (_, marginals) = grid.marginals(&model);
            let step: Vec<f64> = t[v]
                .iter()
                .zip(&marginals[v])
                .map(|(&target, m)| m.map_or(0.0, |m| logit(target) - logit(m.clamp(1e-300, 1.0 - 1e-16))))
                .collect();
            model.intercept += step[0];
            for (l, s) in step.iter().enumerate().skip(1) {
                let b = model.coefficient(v, l) + s - step[0];
                model.set_coefficient(v, l, b);
            }
        }
    }
    model = calibrate(&grid, &model, target_rate, options.calibration_tolerance)?;
    let (rate, marginals) = grid.marginals(&model);
    let rep = report(schema, &t, &marginals, options.max_sweeps, options.tolerance, target_rate, rate);
    if rep.converged {
        return Ok(FitOutcome { model, report: rep });
    }
    Err(SynthError::Fit(Box::new(rep)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{Level, SignificanceTier, Variable};
    use crate::synth::logit::sigmoid;
    use crate::synth::tables::{published_targets, TableEntry};

    fn binary_schema() -> FeatureSchema {
        FeatureSchema::new(vec![Variable {
            name: "home_ownership".into(),
            display: "Home ownership".into(),
            tier: SignificanceTier::Medium,
            levels: vec![
                Level { label: "Own".into(), code: None },
                Level { label: "Rent".into(), code: None },
            ],
        }])
        .unwrap()
    }

    fn table(variable: &str, levels: &[(&str, f64)]) -> ProbabilityTable {
        ProbabilityTable {
            variable: variable.into(),
            entries: levels
                .iter()
                .map(|(l, p)| TableEntry {
                    level: l.to_string(),
                    probability: Some(*p),
                    support: None,
                    purchases: None,
                })
                .collect(),
        }
    }

    #[test]
    fn single_binary_variable_closes_analytically() {
        let schema = binary_schema();
        let dist = PopulationDistribution::new(&schema, vec![vec![0.7, 0.3]]).unwrap();
        let targets = vec![table("home_ownership", &[("Own", 0.269), ("Rent", 0.113)])];
        let rate = implied_rate(&[vec![0.269, 0.113]], &dist);
        assert!((rate - (0.7 * 0.269 + 0.3 * 0.113)).abs() < 1e-15);
        let fit = fit_coefficients(&schema, &targets, &dist, rate, &FitOptions::default()).unwrap();
        // Closed-form expectation for one variable: each level scores a single value.
        let own = sigmoid(fit.model.intercept);
        let rent = sigmoid(fit.model.intercept + fit.model.coefficient(0, 1));
        assert!((own - 0.269).abs() < 1e-4);
        assert!((rent - 0.113).abs() < 1e-4);
        assert!(fit.report.converged);
    }

    #[test]
    fn flat_targets_give_zero_coefficients() {
        let schema = FeatureSchema::survey();
        let rate = 0.25;
        let targets: Vec<ProbabilityTable> = schema
            .variables
            .iter()
            .map(|v| ProbabilityTable {
                variable: v.name.clone(),
                entries: v
                    .levels
                    .iter()
                    .map(|l| TableEntry {
                        level: l.label.clone(),
                        probability: Some(rate),
                        support: None,
                        purchases: None,
                    })
                    .collect(),
            })
            .collect();
        let dist = PopulationDistribution::uniform(&schema);
        let fit = fit_coefficients(&schema, &targets, &dist, rate, &FitOptions::default()).unwrap();
        for row in fit.model.coefficients() {
            for &c in row {
                assert!(c.abs() < 1e-6);
            }
        }
        assert!((fit.model.intercept - logit(rate)).abs() < 1e-6);
    }

    #[test]
    fn grid_matches_brute_force_expectation() {
        let a = Variable {
            name: "a".into(),
            display: "A".into(),
            tier: SignificanceTier::High,
            levels: ["x", "y", "z"].iter().map(|l| Level { label: l.to_string(), code: None }).collect(),
        };
        let b = Variable {
            name: "b".into(),
            display: "B".into(),
            tier: SignificanceTier::Low,
            levels: ["u", "v"].iter().map(|l| Level { label: l.to_string(), code: None }).collect(),
        };
        let schema = FeatureSchema::new(vec![a, b]).unwrap();
        let wa = [0.2, 0.5, 0.3];
        let wb = [0.6, 0.4];
        let dist = PopulationDistribution::new(&schema, vec![wa.to_vec(), wb.to_vec()]).unwrap();
        let model = LogitModel::new(&schema, -1.0, vec![vec![0.0, 0.4, -0.7], vec![0.0, 1.1]], 0.0).unwrap();
        let (rate, m) = ExpectationGrid::new(&schema, &dist).unwrap().marginals(&model);
        let p = |i: usize, j: usize| sigmoid(-1.0 + [0.0, 0.4, -0.7][i] + [0.0, 1.1][j]);
        let mut brute_rate = 0.0;
        for i in 0..3 {
            for j in 0..2 {
                brute_rate += wa[i] * wb[j] * p(i, j);
            }
        }
        assert!((rate - brute_rate).abs() < 1e-15);
        for i in 0..3 {
            let e: f64 = (0..2).map(|j| wb[j] * p(i, j)).sum();
            assert!((m[0][i].unwrap() - e).abs() < 1e-15);
        }
        for j in 0..2 {
            let e: f64 = (0..3).map(|i| wa[i] * p(i, j)).sum();
            assert!((m[1][j].unwrap() - e).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_weight_level_is_undefined_in_expectation() {
        let schema = binary_schema();
        let dist = PopulationDistribution::new(&schema, vec![vec![1.0, 0.0]]).unwrap();
        let grid = ExpectationGrid::new(&schema, &dist).unwrap();
        assert_eq!(grid.len(), 1);
        let (_, m) = grid.marginals(&LogitModel::flat(&schema, 0.0));
        assert_eq!(m[0][1], None);
        assert_eq!(m[0][0], Some(0.5));
    }

    #[test]
    fn inconsistent_rate_reports_residuals() {
        let schema = binary_schema();
        let dist = PopulationDistribution::new(&schema, vec![vec![0.5, 0.5]]).unwrap();
        let targets = vec![table("home_ownership", &[("Own", 0.269), ("Rent", 0.113)])];
        let opts = FitOptions { max_sweeps: 5, ..FitOptions::default() };
        match fit_coefficients(&schema, &targets, &dist, 0.4, &opts) {
            Err(SynthError::Fit(report)) => {
                assert!(!report.converged);
                assert_eq!(report.residuals.len(), 2);
                assert!(report.max_abs_error > 1e-4);
            }
            other => panic!("expected fit error, got {other:?}"),
        }
    }

    #[test]
    fn missing_target_is_rejected() {
        let schema = binary_schema();
        let dist = PopulationDistribution::uniform(&schema);
        let targets = vec![table("home_ownership", &[("Own", 0.269)])];
        assert!(fit_coefficients(&schema, &targets, &dist, 0.2, &FitOptions::default()).is_err());
    }

    #[test]
    fn published_fit_converges_under_consistent_distribution() {
        let schema = FeatureSchema::survey();
        let targets = published_targets();
        let t = targets_by_level(&schema, &targets).unwrap();
        let dist = PopulationDistribution::consistent_with_targets(&schema, &t).unwrap();
        let rate = dist.target_rate.unwrap();
        let fit = fit_coefficients(&schema, &targets, &dist, rate, &FitOptions::default()).unwrap();
        assert!(fit.report.max_abs_error < 1e-4, "{}", fit.report.max_abs_error);
        assert!((fit.report.achieved_rate - rate).abs() < 1e-10);
    }

    #[test]
    fn published_fit_fails_under_uniform_distribution() {
        let schema = FeatureSchema::survey();
        let targets = published_targets();
        let t = targets_by_level(&schema, &targets).unwrap();
        let dist = PopulationDistribution::uniform(&schema);
        let rate = implied_rate(&t, &dist);
        let opts = FitOptions { max_sweeps: 20, ..FitOptions::default() };
        assert!(matches!(
            fit_coefficients(&schema, &targets, &dist, rate, &opts),
            Err(SynthError::Fit(_))
        ));
    }
}
