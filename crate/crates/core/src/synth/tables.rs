//! Marginal and bivariate purchase-probability tables and their CSV form.

use std::io::{Read, Write};

use rayon::prelude::*;

use super::population::Population;
use super::simulate::OutcomeVector;
use super::{Result, SynthError, REDUCE_CHUNK};
use crate::artifact::ArtifactHeader;
use crate::schema::{FeatureSchema, PUBLISHED_MARGINALS};

/// One level's purchase proportion. `probability` is `None` when no
/// individual holds the level (support 0); published targets carry no counts.
#[derive(Debug, Clone, PartialEq)]
pub struct TableEntry {
    pub level: String,
    pub probability: Option<f64>,
    pub support: Option<u64>,
    pub purchases: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityTable {
    pub variable: String,
    pub entries: Vec<TableEntry>,
}

impl ProbabilityTable {
    pub fn entry(&self, level: &str) -> Option<&TableEntry> {
        let wanted = crate::schema::normalize_label(level);
        self.entries
            .iter()
            .find(|e| crate::schema::normalize_label(&e.level) == wanted)
    }

    pub fn probability(&self, level: &str) -> Option<f64> {
        self.entry(level).and_then(|e| e.probability)
    }

    pub fn total_support(&self) -> u64 {
        self.entries.iter().filter_map(|e| e.support).sum()
    }

    pub fn total_purchases(&self) -> u64 {
        self.entries.iter().filter_map(|e| e.purchases).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BivariateEntry {
    pub level_a: String,
    pub level_b: String,
    pub probability: Option<f64>,
    pub support: Option<u64>,
    pub purchases: Option<u64>,
}

/// Entries in row-major order: all `level_b` for the first `level_a`, then the next.
#[derive(Debug, Clone, PartialEq)]
pub struct BivariateTable {
    pub variable_a: String,
    pub variable_b: String,
    pub entries: Vec<BivariateEntry>,
}

impl BivariateTable {
    pub fn entry(&self, level_a: &str, level_b: &str) -> Option<&BivariateEntry> {
        let (a, b) = (
            crate::schema::normalize_label(level_a),
            crate::schema::normalize_label(level_b),
        );
        self.entries.iter().find(|e| {
            crate::schema::normalize_label(&e.level_a) == a
                && crate::schema::normalize_label(&e.level_b) == b
        })
    }

    /// Support-weighted aggregation over the other axis:
    /// `(level, purchases, support)` for each level of `variable_a` (`axis_a`)
    /// or `variable_b`, in first-appearance order.
    pub fn collapse(&self, axis_a: bool) -> Vec<(String, u64, u64)> {
        let mut out: Vec<(String, u64, u64)> = Vec::new();
        for e in &self.entries {
            let key = if axis_a { &e.level_a } else { &e.level_b };
            let (p, s) = (e.purchases.unwrap_or(0), e.support.unwrap_or(0));
            match out.iter_mut().find(|(k, _, _)| k == key) {
                Some(slot) => {
                    slot.1 += p;
                    slot.2 += s;
                }
                None => out.push((key.clone(), p, s)),
            }
        }
        out
    }

    pub fn pair_name(&self) -> String {
        format!("{}:{}", self.variable_a, self.variable_b)
    }
}

fn proportion(purchases: u64, support: u64) -> Option<f64> {
    (support > 0).then(|| purchases as f64 / support as f64)
}

fn check_aligned(population: &Population, outcomes: &OutcomeVector) -> Result<()> {
    if population.len() != outcomes.len() {
        return Err(SynthError::Input(format!(
            "population has {} individuals but {} outcomes",
            population.len(),
            outcomes.len()
        )));
    }
    Ok(())
}

/// Counts `(purchases, support)` into `cells` buckets chosen by `cell_of(row)`.
/// Per-chunk counts are merged by integer addition, so the result is exact
/// and independent of scheduling.
fn count_cells(
    population: &Population,
    outcomes: &OutcomeVector,
    cells: usize,
    cell_of: impl Fn(&[u8]) -> usize + Sync,
) -> Vec<(u64, u64)> {
    let n_vars = population.n_vars();
    population
        .rows()
        .par_chunks(REDUCE_CHUNK * n_vars)
        .zip(outcomes.purchases.par_chunks(REDUCE_CHUNK))
        .map(|(rows, bought)| {
            let mut local = vec![(0u64, 0u64); cells];
            for (row, &b) in rows.chunks_exact(n_vars).zip(bought) {
                let slot = &mut local[cell_of(row)];
                slot.0 += b as u64;
                slot.1 += 1;
            }
            local
        })
        .reduce(
            || vec![(0u64, 0u64); cells],
            |mut acc, part| {
                for (a, p) in acc.iter_mut().zip(part) {
                    a.0 += p.0;
                    a.1 += p.1;
                }
                acc
            },
        )
}

/// Purchase proportion among holders of each level of `variable`.
pub fn marginal_table(
    schema: &FeatureSchema,
    population: &Population,
    outcomes: &OutcomeVector,
    variable: &str,
) -> Result<ProbabilityTable> {
    check_aligned(population, outcomes)?;
    let vi = schema.variable_index(variable)?;
    let var = &schema.variables[vi];
    let counts = count_cells(population, outcomes, var.n_levels(), |row| row[vi] as usize);
    Ok(ProbabilityTable {
        variable: var.name.clone(),
        entries: var
            .levels
            .iter()
            .zip(counts)
            .map(|(level, (purchases, support))| TableEntry {
                level: level.label.clone(),
                probability: proportion(purchases, support),
                support: Some(support),
                purchases: Some(purchases),
            })
            .collect(),
    })
}

/// Purchase proportion for every level pair of `(var_a, var_b)`.
pub fn bivariate_table(
    schema: &FeatureSchema,
    population: &Population,
    outcomes: &OutcomeVector,
    var_a: &str,
    var_b: &str,
) -> Result<BivariateTable> {
    check_aligned(population, outcomes)?;
    if var_a == var_b {
        return Err(SynthError::Input(format!(
            "bivariate table needs two distinct variables, got `{var_a}` twice"
        )));
    }
    let ia = schema.variable_index(var_a)?;
    let ib = schema.variable_index(var_b)?;
    let (va, vb) = (&schema.variables[ia], &schema.variables[ib]);
    let nb = vb.n_levels();
    let counts = count_cells(population, outcomes, va.n_levels() * nb, |row| {
        row[ia] as usize * nb + row[ib] as usize
    });
    let mut entries = Vec::with_capacity(counts.len());
    for (a, la) in va.levels.iter().enumerate() {
        for (b, lb) in vb.levels.iter().enumerate() {
            let (purchases, support) = counts[a * nb + b];
            entries.push(BivariateEntry {
                level_a: la.label.clone(),
                level_b: lb.label.clone(),
                probability: proportion(purchases, support),
                support: Some(support),
                purchases: Some(purchases),
            });
        }
    }
    Ok(BivariateTable {
        variable_a: va.name.clone(),
        variable_b: vb.name.clone(),
        entries,
    })
}

/// The published marginals as target tables (no counts), in schema order.
pub fn published_targets() -> Vec<ProbabilityTable> {
    let mut tables: Vec<ProbabilityTable> = Vec::new();
    for m in PUBLISHED_MARGINALS.iter() {
        let entry = TableEntry {
            level: m.level.to_string(),
            probability: Some(m.probability),
            support: None,
            purchases: None,
        };
        match tables.last_mut() {
            Some(t) if t.variable == m.variable => t.entries.push(entry),
            _ => tables.push(ProbabilityTable {
                variable: m.variable.to_string(),
                entries: vec![entry],
            }),
        }
    }
    tables
}

fn fmt_probability(p: Option<f64>) -> String {
    match p {
        Some(p) => format!("{p:.6}"),
        None => "NA".to_string(),
    }
}

fn fmt_support(s: Option<u64>) -> String {
    s.map(|s| s.to_string()).unwrap_or_default()
}

/// Writes tables as CSV (`variable,level_a,level_b,probability,support`),
/// preceded by `#` header lines. Bivariate rows name the pair `a:b`.
pub fn write_tables_csv<W: Write>(
    mut out: W,
    header: Option<&ArtifactHeader>,
    marginals: &[ProbabilityTable],
    bivariates: &[BivariateTable],
) -> Result<()> {
    if let Some(h) = header {
        out.write_all(h.render().as_bytes())?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["variable", "level_a", "level_b", "probability", "support"])?;
    for t in marginals {
        for e in &t.entries {
            w.write_record([
                t.variable.as_str(),
                e.level.as_str(),
                "",
                &fmt_probability(e.probability),
                &fmt_support(e.support),
            ])?;
        }
    }
    for t in bivariates {
        let name = t.pair_name();
        for e in &t.entries {
            w.write_record([
                name.as_str(),
                e.level_a.as_str(),
                e.level_b.as_str(),
                &fmt_probability(e.probability),
                &fmt_support(e.support),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn parse_probability(field: &str) -> Result<Option<f64>> {
    let field = field.trim();
    if field.is_empty() || field.eq_ignore_ascii_case("na") {
        return Ok(None);
    }
    let p: f64 = field
        .parse()
        .map_err(|_| SynthError::Input(format!("bad probability `{field}`")))?;
    if !(0.0..=1.0).contains(&p) {
        return Err(SynthError::Input(format!("probability {p} outside [0, 1]")));
    }
    Ok(Some(p))
}

fn parse_support(field: &str) -> Result<Option<u64>> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse()
        .map(Some)
        .map_err(|_| SynthError::Input(format!("bad support `{field}`")))
}

/// Reads tables written by [`write_tables_csv`] (or hand-written target files).
pub fn read_tables_csv<R: Read>(input: R) -> Result<(Vec<ProbabilityTable>, Vec<BivariateTable>)> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut marginals: Vec<ProbabilityTable> = Vec::new();
    let mut bivariates: Vec<BivariateTable> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let get = |i: usize| record.get(i).unwrap_or("");
        let (variable, level_a, level_b) = (get(0), get(1), get(2));
        let probability = parse_probability(get(3))?;
        let support = parse_support(get(4))?;
        if level_b.is_empty() {
            let entry = TableEntry {
                level: level_a.to_string(),
                probability,
                support,
                purchases: None,
            };
            match marginals.iter_mut().find(|t| t.variable == variable) {
                Some(t) => t.entries.push(entry),
                None => marginals.push(ProbabilityTable {
                    variable: variable.to_string(),
                    entries: vec![entry],
                }),
            }
        } else {
            let (va, vb) = variable.split_once(':').ok_or_else(|| {
                SynthError::Input(format!("bivariate row needs `a:b` variable, got `{variable}`"))
            })?;
            let entry = BivariateEntry {
                level_a: level_a.to_string(),
                level_b: level_b.to_string(),
                probability,
                support,
                purchases: None,
            };
            match bivariates
                .iter_mut()
                .find(|t| t.variable_a == va && t.variable_b == vb)
            {
                Some(t) => t.entries.push(entry),
                None => bivariates.push(BivariateTable {
                    variable_a: va.to_string(),
                    variable_b: vb.to_string(),
                    entries: vec![entry],
                }),
            }
        }
    }
    Ok((marginals, bivariates))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{Level, SignificanceTier, Variable};
    use crate::synth::population::Individual;
    use proptest::prelude::*;

    fn small_schema() -> FeatureSchema {
        let var = |name: &str, labels: &[&str]| Variable {
            name: name.into(),
            display: name.into(),
            tier: SignificanceTier::Low,
            levels: labels
                .iter()
                .map(|l| Level { label: l.to_string(), code: None })
                .collect(),
        };
        FeatureSchema::new(vec![
            var("colour", &["red", "green", "blue"]),
            var("size", &["small", "large"]),
        ])
        .unwrap()
    }

    fn hand_population(rows: &[[u8; 2]]) -> Population {
        let inds: Vec<Individual> = rows.iter().map(|r| Individual(r.to_vec())).collect();
        Population::from_individuals(&small_schema(), &inds, 0).unwrap()
    }

    #[test]
    fn marginal_matches_hand_count() {
        // red: 3 holders, 2 buyers; green: 2 holders, 1 buyer; blue: 1 holder, 0 buyers.
        let pop = hand_population(&[[0, 0], [0, 1], [0, 1], [1, 0], [1, 1], [2, 0]]);
        let out = OutcomeVector {
            purchases: vec![true, true, false, false, true, false],
            seed: 0,
        };
        let t = marginal_table(&small_schema(), &pop, &out, "colour").unwrap();
        assert_eq!(t.probability("red"), Some(2.0 / 3.0));
        assert_eq!(t.probability("green"), Some(0.5));
        assert_eq!(t.probability("blue"), Some(0.0));
        assert_eq!(t.total_support(), 6);
        assert_eq!(t.total_purchases(), 3);
    }

    #[test]
    fn empty_level_is_undefined_not_zero() {
        let pop = hand_population(&[[0, 0], [1, 0]]);
        let out = OutcomeVector { purchases: vec![true, false], seed: 0 };
        let t = marginal_table(&small_schema(), &pop, &out, "colour").unwrap();
        let blue = t.entry("blue").unwrap();
        assert_eq!(blue.probability, None);
        assert_eq!(blue.support, Some(0));
        assert_eq!(t.probability("green"), Some(0.0));
    }

    #[test]
    fn saturation() {
        let pop = hand_population(&[[0, 0], [1, 1], [2, 0]]);
        let all = OutcomeVector { purchases: vec![true; 3], seed: 0 };
        let t = marginal_table(&small_schema(), &pop, &all, "colour").unwrap();
        assert!(t.entries.iter().all(|e| e.probability == Some(1.0)));
        let none = OutcomeVector { purchases: vec![false; 3], seed: 0 };
        let b = bivariate_table(&small_schema(), &pop, &none, "colour", "size").unwrap();
        assert!(b
            .entries
            .iter()
            .filter_map(|e| e.probability)
            .all(|p| p == 0.0));
    }

    #[test]
    fn bivariate_matches_hand_enumeration() {
        let rows = [[0, 0], [0, 0], [0, 1], [1, 1], [1, 1], [1, 0], [2, 1], [2, 1]];
        let bought = [true, false, true, false, false, true, true, true];
        let pop = hand_population(&rows);
        let out = OutcomeVector { purchases: bought.to_vec(), seed: 0 };
        let t = bivariate_table(&small_schema(), &pop, &out, "colour", "size").unwrap();
        // Oracle: enumerate each cell by brute force.
        let labels_a = ["red", "green", "blue"];
        let labels_b = ["small", "large"];
        for (a, la) in labels_a.iter().enumerate() {
            for (b, lb) in labels_b.iter().enumerate() {
                let members: Vec<usize> = (0..rows.len())
                    .filter(|&i| rows[i] == [a as u8, b as u8])
                    .collect();
                let buyers = members.iter().filter(|&&i| bought[i]).count();
                let e = t.entry(la, lb).unwrap();
                assert_eq!(e.support, Some(members.len() as u64));
                let expected = (!members.is_empty()).then(|| buyers as f64 / members.len() as f64);
                assert_eq!(e.probability, expected, "{la}/{lb}");
            }
        }
        assert_eq!(t.entry("blue", "small").unwrap().probability, None);
    }

    #[test]
    fn same_variable_twice_is_rejected() {
        let pop = hand_population(&[[0, 0]]);
        let out = OutcomeVector { purchases: vec![true], seed: 0 };
        assert!(bivariate_table(&small_schema(), &pop, &out, "size", "size").is_err());
    }

    #[test]
    fn misaligned_outcomes_are_rejected() {
        let pop = hand_population(&[[0, 0], [1, 1]]);
        let out = OutcomeVector { purchases: vec![true], seed: 0 };
        assert!(marginal_table(&small_schema(), &pop, &out, "size").is_err());
    }

    #[test]
    fn published_targets_cover_forty_levels() {
        let t = published_targets();
        assert_eq!(t.len(), 10);
        assert_eq!(t.iter().map(|t| t.entries.len()).sum::<usize>(), 40);
        let edu = t.iter().find(|t| t.variable == "education").unwrap();
        assert_eq!(edu.probability("College degrees"), Some(0.288));
    }

    #[test]
    fn csv_round_trip_keeps_probabilities_and_support() {
        let pop = hand_population(&[[0, 0], [0, 1], [1, 1]]);
        let out = OutcomeVector { purchases: vec![true, false, true], seed: 0 };
        let schema = small_schema();
        let m = marginal_table(&schema, &pop, &out, "colour").unwrap();
        let b = bivariate_table(&schema, &pop, &out, "colour", "size").unwrap();
        let header = ArtifactHeader::new("tables").with("seed", "1");
        let mut buf = Vec::new();
        write_tables_csv(&mut buf, Some(&header), &[m.clone()], &[b.clone()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# artifact: tables\n"));
        assert!(text.contains("colour,blue,,NA,0\n"));
        assert!(text.contains("colour:size,red,large,0.000000,1\n"));
        let (ms, bs) = read_tables_csv(&buf[..]).unwrap();
        assert_eq!(ms.len(), 1);
        assert_eq!(ms[0].probability("red"), Some(0.5));
        assert_eq!(ms[0].entry("blue").unwrap().probability, None);
        assert_eq!(bs[0].entries.len(), 6);
        assert_eq!(bs[0].entry("green", "large").unwrap().support, Some(1));
    }

    proptest! {
        #[test]
        fn bivariate_collapses_to_marginals(
            rows in proptest::collection::vec((0u8..3, 0u8..2, any::<bool>()), 1..300)
        ) {
            let schema = small_schema();
            let inds: Vec<Individual> = rows.iter().map(|r| Individual(vec![r.0, r.1])).collect();
            let pop = Population::from_individuals(&schema, &inds, 0).unwrap();
            let out = OutcomeVector { purchases: rows.iter().map(|r| r.2).collect(), seed: 0 };
            let b = bivariate_table(&schema, &pop, &out, "colour", "size").unwrap();
            for (axis_a, var) in [(true, "colour"), (false, "size")] {
                let m = marginal_table(&schema, &pop, &out, var).unwrap();
                let collapsed = b.collapse(axis_a);
                prop_assert_eq!(collapsed.len(), m.entries.len());
                for ((level, p, s), e) in collapsed.iter().zip(&m.entries) {
                    prop_assert_eq!(level, &e.level);
                    prop_assert_eq!(Some(*p), e.purchases);
                    prop_assert_eq!(Some(*s), e.support);
                }
                prop_assert_eq!(m.total_purchases(), out.purchase_count());
                prop_assert_eq!(m.total_support(), pop.len() as u64);
            }
        }
    }
}
