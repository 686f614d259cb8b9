//! Scoring transfers against oracles: MSE from pairwise OT, empirical W2,
//! marginal fit and the sampling-efficiency curve.

use std::f64::consts::FRAC_PI_2;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{Assignment, BatchPair};
use crate::data::{fmt_f64, Dataset};
use crate::error::{Error, Result};
use crate::transport::{point_assignment, ConditionTransfer, OracleMap};

/// Radius range of the polar family.
pub const POLAR_RADIUS: (f64, f64) = (1.0, 2.0);
/// Angle range of the polar family.
pub const POLAR_ANGLE: (f64, f64) = (0.0, FRAC_PI_2);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSpec {
    #[serde(default = "default_n_eval")]
    pub n_eval: usize,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_n_eval() -> usize {
    100
}

fn default_runs() -> usize {
    10
}

impl Default for EvalSpec {
    fn default() -> Self {
        Self {
            n_eval: default_n_eval(),
            runs: default_runs(),
            seed: 0,
        }
    }
}

impl EvalSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_eval == 0 || self.runs == 0 {
            return Err(Error::Config("n_eval and runs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Mean and population standard deviation of the per-run MSE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseEstimate {
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
    pub n_eval: usize,
    /// Condition pairs redrawn because the oracle is undefined there.
    pub resampled: usize,
    pub per_run: Vec<f64>,
}

impl MseEstimate {
    fn from_runs(per_run: Vec<f64>, n_eval: usize, resampled: usize) -> Self {
        let (mean, std) = mean_std(&per_run);
        Self {
            mean,
            std,
            runs: per_run.len(),
            n_eval,
            resampled,
            per_run,
        }
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn sq_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum()
}

struct EvalDraw {
    xs: Vec<Vec<f64>>,
    c1: Vec<Vec<f64>>,
    c2: Vec<Vec<f64>>,
}

fn draw_polar(rng: &mut ChaCha8Rng, n: usize, resampled: &mut usize) -> EvalDraw {
    let mut draw = EvalDraw {
        xs: Vec::with_capacity(n),
        c1: Vec::with_capacity(n),
        c2: Vec::with_capacity(n),
    };
    while draw.xs.len() < n {
        let t1 = rng.gen_range(POLAR_ANGLE.0..=POLAR_ANGLE.1);
        let t2 = rng.gen_range(POLAR_ANGLE.0..=POLAR_ANGLE.1);
        if (t2 - t1).abs() >= FRAC_PI_2 {
            *resampled += 1;
            log::debug!("resampling degenerate angle pair ({t1}, {t2})");
            continue;
        }
        let r = rng.gen_range(POLAR_RADIUS.0..=POLAR_RADIUS.1);
        draw.xs.push(vec![r * t1.cos(), r * t1.sin()]);
        draw.c1.push(vec![t1]);
        draw.c2.push(vec![t2]);
    }
    draw
}

/// Estimates `E ||T_model(x1) - T_oracle(x1)||^2` with `(c1, c2)` uniform
/// over the oracle's condition domain and `x1 ~ P_c1`, repeated over
/// independent runs.
pub fn mse_from_oracle(
    model: &dyn ConditionTransfer,
    oracle: &OracleMap,
    spec: &EvalSpec,
) -> Result<MseEstimate> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut resampled = 0;
    let mut per_run = Vec::with_capacity(spec.runs);
    for _ in 0..spec.runs {
        let draw = match oracle {
            OracleMap::PolarAnalytic => draw_polar(&mut rng, spec.n_eval, &mut resampled),
            OracleMap::EmpiricalGrouped(o) => {
                let mut draw = EvalDraw {
                    xs: Vec::new(),
                    c1: Vec::new(),
                    c2: Vec::new(),
                };
                for _ in 0..spec.n_eval {
                    let g1 = o.groups.choose(&mut rng).expect("non-empty oracle");
                    let g2 = o.groups.choose(&mut rng).expect("non-empty oracle");
                    draw.xs
                        .push(g1.points.choose(&mut rng).expect("non-empty group").clone());
                    draw.c1.push(g1.condition.clone());
                    draw.c2.push(g2.condition.clone());
                }
                draw
            }
        };
        let predicted = model.transfer_batch(&draw.xs, &draw.c1, &draw.c2)?;
        let truth = oracle.transfer_batch(&draw.xs, &draw.c1, &draw.c2)?;
        let mse = predicted
            .iter()
            .zip(&truth)
            .map(|(p, t)| sq_err(p, t))
            .sum::<f64>()
            / spec.n_eval as f64;
        per_run.push(mse);
    }
    Ok(MseEstimate::from_runs(per_run, spec.n_eval, resampled))
}

/// The same estimate for a coupling read as a map: `x1_i` goes to
/// `x2_{pi(i)}`. Condition pairs are drawn uniformly among the
/// `(b1[i].c, b2[i].c)` pairs present, then `i` uniformly within the pair.
pub fn coupling_mse_from_oracle(
    pair: &BatchPair,
    assignment: &Assignment,
    oracle: &OracleMap,
    spec: &EvalSpec,
) -> Result<MseEstimate> {
    spec.validate()?;
    if assignment.len() != pair.len() {
        return Err(Error::contract("assignment and batch pair differ in size"));
    }
    let mut cells: Vec<(&[f64], &[f64], Vec<usize>)> = Vec::new();
    for (i, (s1, s2)) in pair.b1().iter().zip(pair.b2()).enumerate() {
        match cells
            .iter_mut()
            .find(|(a, b, _)| *a == s1.c.as_slice() && *b == s2.c.as_slice())
        {
            Some(cell) => cell.2.push(i),
            None => cells.push((&s1.c, &s2.c, vec![i])),
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut per_run = Vec::with_capacity(spec.runs);
    for _ in 0..spec.runs {
        let mut total = 0.0;
        for _ in 0..spec.n_eval {
            let (c1, c2, members) = cells.choose(&mut rng).expect("non-empty pair");
            let i = *members.choose(&mut rng).expect("non-empty cell");
            let x1 = &pair.b1()[i].x;
            let image = &pair.b2()[assignment.permutation[i]].x;
            total += sq_err(image, &oracle.map(x1, c1, c2)?);
        }
        per_run.push(total / spec.n_eval as f64);
    }
    Ok(MseEstimate::from_runs(per_run, spec.n_eval, 0))
}

/// `sqrt(min_pi (1/N) sum ||a_i - b_pi(i)||^2)` over equal-size sets.
pub fn empirical_w2(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    let (_, cost) = point_assignment(a, b)?;
    Ok((cost.max(0.0) / a.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairW2 {
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
    pub w2: f64,
}

/// W2 between the transferred group `c1` and group `c2`, for every pair.
pub fn conditional_w2_table(
    model: &dyn ConditionTransfer,
    dataset: &Dataset,
    pairs: &[(Vec<f64>, Vec<f64>)],
) -> Result<Vec<PairW2>> {
    let mut jobs = Vec::with_capacity(pairs.len());
    for (c1, c2) in pairs {
        let missing = |c: &[f64]| Error::contract(format!("no group with condition {c:?}"));
        let g1 = dataset.group(c1).ok_or_else(|| missing(c1))?;
        let g2 = dataset.group(c2).ok_or_else(|| missing(c2))?;
        let src = dataset.group_points(g1);
        let n = src.len();
        let moved = model.transfer_batch(&src, &vec![c1.clone(); n], &vec![c2.clone(); n])?;
        jobs.push((moved, dataset.group_points(g2)));
    }
    let w2s: Vec<f64> = jobs
        .par_iter()
        .map(|(moved, target)| empirical_w2(moved, target))
        .collect::<Result<_>>()?;
    Ok(pairs
        .iter()
        .zip(w2s)
        .map(|((c1, c2), w2)| PairW2 {
            c1: c1.clone(),
            c2: c2.clone(),
            w2,
        })
        .collect())
}

/// Mean over `pairs` of the W2 between transferred and target groups.
pub fn avg_conditional_w2(
    model: &dyn ConditionTransfer,
    dataset: &Dataset,
    pairs: &[(Vec<f64>, Vec<f64>)],
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::contract("no condition pairs"));
    }
    let table = conditional_w2_table(model, dataset, pairs)?;
    Ok(table.iter().map(|p| p.w2).sum::<f64>() / table.len() as f64)
}

/// All ordered pairs of group conditions, self-pairs included.
pub fn all_group_pairs(dataset: &Dataset) -> Vec<(Vec<f64>, Vec<f64>)> {
    let conds: Vec<_> = dataset
        .grouped
        .iter()
        .flatten()
        .map(|g| g.condition.clone())
        .collect();
    conds
        .iter()
        .flat_map(|a| conds.iter().map(move |b| (a.clone(), b.clone())))
        .collect()
}

/// Kolmogorov-Smirnov distance between the sample and `U[lo, hi]`.
pub fn ks_statistic_uniform(samples: &[f64], lo: f64, hi: f64) -> Result<f64> {
    if samples.is_empty() || hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::contract("need samples and lo < hi"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, v) in sorted.iter().enumerate() {
        let f = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(d)
}

/// Transfers `n` polar samples on the ray `theta = c_src` to `c_targ` and
/// compares the output radii with `U[1, 2]`.
pub fn polar_marginal_fit(
    model: &dyn ConditionTransfer,
    c_src: f64,
    c_targ: f64,
    n: usize,
    seed: u64,
) -> Result<MarginalFit> {
    if n == 0 {
        return Err(Error::Config("marginal fit needs n >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let r = rng.gen_range(POLAR_RADIUS.0..=POLAR_RADIUS.1);
            vec![r * c_src.cos(), r * c_src.sin()]
        })
        .collect();
    let out = model.transfer_batch(&xs, &vec![vec![c_src]; n], &vec![vec![c_targ]; n])?;
    let radii: Vec<f64> = out
        .iter()
        .map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    Ok(MarginalFit {
        c_src: vec![c_src],
        c_targ: vec![c_targ],
        n,
        ks_statistic: ks_statistic_uniform(&radii, POLAR_RADIUS.0, POLAR_RADIUS.1)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyCurve {
    pub points: Vec<CurvePoint>,
    pub auc: f64,
}

fn ecdf(sorted: &[f64], a: f64) -> f64 {
    sorted.partition_point(|&v| v <= a) as f64 / sorted.len() as f64
}

/// `y = G(F^-1(x))` with `F` the CDF of `similarities` and `G` the CDF of
/// `errors / c_max`. One point `(F(a), G(a))` per threshold `a` of the merged
/// support, plus a corner `(F(a-), G(a))` wherever `F` jumps, so the curve is
/// the exact step function and its trapezoid area is exact.
pub fn efficiency_curve(
    similarities: &[f64],
    errors: &[f64],
    c_max: f64,
) -> Result<EfficiencyCurve> {
    if similarities.is_empty() || similarities.len() != errors.len() {
        return Err(Error::contract(format!(
            "need equal non-empty lists, got {} and {}",
            similarities.len(),
            errors.len()
        )));
    }
    if c_max.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::contract(format!(
            "c_max must be positive, got {c_max}"
        )));
    }
    let mut sims = similarities.to_vec();
    let mut errs: Vec<f64> = errors.iter().map(|e| e / c_max).collect();
    if sims.iter().chain(&errs).any(|v| !v.is_finite()) {
        return Err(Error::contract("similarities and errors must be finite"));
    }
    sims.sort_by(f64::total_cmp);
    errs.sort_by(f64::total_cmp);
    let mut thresholds: Vec<f64> = sims.iter().chain(&errs).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let mut points = Vec::with_capacity(2 * thresholds.len());
    let mut prev_x = 0.0;
    for &a in &thresholds {
        let (x, y) = (ecdf(&sims, a), ecdf(&errs, a));
        if x > prev_x {
            points.push(CurvePoint {
                threshold: a,
                x: prev_x,
                y,
            });
        }
        points.push(CurvePoint { threshold: a, x, y });
        prev_x = x;
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].x - w[0].x) * (w[0].y + w[1].y) / 2.0)
        .sum();
    Ok(EfficiencyCurve { points, auc })
}

pub fn write_curve_csv(curve: &EfficiencyCurve, path: &Path) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    let io = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    w.write_record(["threshold", "x", "y"]).map_err(io)?;
    for p in &curve.points {
        w.write_record([fmt_f64(p.threshold), fmt_f64(p.x), fmt_f64(p.y)])
            .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalFit {
    pub c_src: Vec<f64>,
    pub c_targ: Vec<f64>,
    pub n: usize,
    pub ks_statistic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
    pub n_eval: usize,
    pub seed: u64,
    pub beta: f64,
    pub dataset: String,
    pub wall_ms: u64,
    #[serde(default)]
    pub resampled: usize,
    #[serde(default)]
    pub per_run: Vec<f64>,
    #[serde(default)]
    pub per_pair_w2: Vec<PairW2>,
    #[serde(default)]
    pub marginal: Option<MarginalFit>,
}

impl EvalReport {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.mean, self.std, self.beta]
            .iter()
            .chain(&self.per_run)
            .chain(self.per_pair_w2.iter().map(|p| &p.w2))
            .chain(self.marginal.iter().map(|m| &m.ks_statistic))
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Degenerate(
                "report contains non-finite statistics".into(),
            ));
        }
        if self.runs == 0 {
            return Err(Error::Degenerate("report has no runs".into()));
        }
        Ok(())
    }
}

/// Writes the report as JSON and, when present, the per-pair W2 table as
/// `<stem>_w2.csv` beside it. Returns every path written.
pub fn emit_report(report: &EvalReport, path: &Path) -> Result<Vec<PathBuf>> {
    report.validate()?;
    let json = serde_json::to_string_pretty(report)?;
    std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))?;
    let mut written = vec![path.to_path_buf()];
    if !report.per_pair_w2.is_empty() {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let table = path.with_file_name(format!("{stem}_w2.csv"));
        let mut w = csv::Writer::from_path(&table)
            .map_err(|e| Error::io(&table, std::io::Error::other(e)))?;
        let io = |e: csv::Error| Error::io(&table, std::io::Error::other(e));
        w.write_record(["c1", "c2", "w2"]).map_err(io)?;
        for p in &report.per_pair_w2 {
            let join = |c: &[f64]| c.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(" ");
            w.write_record([join(&p.c1), join(&p.c2), fmt_f64(p.w2)])
                .map_err(io)?;
        }
        w.flush().map_err(|e| Error::io(&table, e))?;
        written.push(table);
    }
    Ok(written)
}

pub fn load_report(path: &Path) -> Result<EvalReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::{cost_matrix, solve_assignment, CostMode, LabeledSample, SolveMethod};
    use crate::data::{generate, GeneratorKind, GeneratorSpec};
    use crate::transport::oracle_map;
    use approx::assert_relative_eq;

    struct Shifted<'a> {
        inner: &'a OracleMap,
        delta: Vec<f64>,
    }

    impl ConditionTransfer for Shifted<'_> {
        fn transfer_batch(
            &self,
            xs: &[Vec<f64>],
            c_src: &[Vec<f64>],
            c_targ: &[Vec<f64>],
        ) -> Result<Vec<Vec<f64>>> {
            let mut out = self.inner.transfer_batch(xs, c_src, c_targ)?;
            for row in &mut out {
                for (v, d) in row.iter_mut().zip(&self.delta) {
                    *v += d;
                }
            }
            Ok(out)
        }
    }

    struct Identity;

    impl ConditionTransfer for Identity {
        fn transfer_batch(
            &self,
            xs: &[Vec<f64>],
            _: &[Vec<f64>],
            _: &[Vec<f64>],
        ) -> Result<Vec<Vec<f64>>> {
            Ok(xs.to_vec())
        }
    }

    fn grouped() -> Dataset {
        generate(&GeneratorSpec {
            kind: GeneratorKind::GroupedMixture,
            n_samples: 60,
            seed: 4,
        })
        .unwrap()
    }

    #[test]
    fn oracle_against_itself_is_zero() {
        let polar = OracleMap::PolarAnalytic;
        let est = mse_from_oracle(&polar, &polar, &EvalSpec::default()).unwrap();
        assert_eq!((est.mean, est.std), (0.0, 0.0));
        assert_eq!((est.runs, est.n_eval), (10, 100));

        let emp = oracle_map(&grouped(), crate::transport::OracleKind::EmpiricalGrouped).unwrap();
        let est = mse_from_oracle(&emp, &emp, &EvalSpec::default()).unwrap();
        assert_eq!((est.mean, est.std), (0.0, 0.0));
    }

    #[test]
    fn constant_offset_gives_its_squared_norm() {
        let polar = OracleMap::PolarAnalytic;
        let shifted = Shifted {
            inner: &polar,
            delta: vec![0.3, -0.4],
        };
        let est = mse_from_oracle(&shifted, &polar, &EvalSpec::default()).unwrap();
        assert_relative_eq!(est.mean, 0.25, max_relative = 1e-12);
        assert!(est.std < 1e-12);
    }

    #[test]
    fn w2_examples() {
        let a = vec![vec![0.0], vec![1.0]];
        assert_eq!(empirical_w2(&a, &a).unwrap(), 0.0);
        assert_eq!(empirical_w2(&[vec![0.0]], &[vec![3.0]]).unwrap(), 3.0);
        assert_eq!(empirical_w2(&a, &[vec![1.0], vec![2.0]]).unwrap(), 1.0);
        assert!(matches!(
            empirical_w2(&a, &[vec![1.0]]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn identity_model_on_self_pairs_is_zero() {
        let ds = grouped();
        let pairs: Vec<_> = all_group_pairs(&ds)
            .into_iter()
            .filter(|(a, b)| a == b)
            .collect();
        assert_eq!(pairs.len(), 3);
        assert_eq!(avg_conditional_w2(&Identity, &ds, &pairs).unwrap(), 0.0);
    }

    #[test]
    fn oracle_model_attains_the_per_pair_minimum() {
        let ds = grouped();
        let oracle = oracle_map(&ds, crate::transport::OracleKind::EmpiricalGrouped).unwrap();
        let table = conditional_w2_table(&oracle, &ds, &all_group_pairs(&ds)).unwrap();
        // the oracle image is the target group itself, permuted
        assert!(table.iter().all(|p| p.w2 == 0.0));
        let missing = vec![(vec![7.0], vec![0.0])];
        assert!(avg_conditional_w2(&oracle, &ds, &missing).is_err());
    }

    #[test]
    fn exact_coupling_has_zero_coupling_mse() {
        // single condition pair: a plain OT coupling equals the oracle table
        let pts: Vec<Vec<f64>> = (0..6)
            .map(|i| vec![i as f64 * 0.7, (i * i) as f64 * 0.1])
            .collect();
        let tgt: Vec<Vec<f64>> = (0..6)
            .map(|i| vec![1.0 - i as f64 * 0.3, i as f64])
            .collect();
        let mut samples: Vec<_> = pts
            .iter()
            .map(|x| LabeledSample::new(x.clone(), vec![0.0]))
            .collect();
        samples.extend(tgt.iter().map(|x| LabeledSample::new(x.clone(), vec![1.0])));
        let ds = Dataset::new(samples, "two", 0)
            .unwrap()
            .with_groups_from_conditions();
        let oracle = oracle_map(&ds, crate::transport::OracleKind::EmpiricalGrouped).unwrap();
        let pair = BatchPair::new(ds.samples[..6].to_vec(), ds.samples[6..].to_vec()).unwrap();
        let a = solve_assignment(
            &cost_matrix(&pair, 0.0, CostMode::Plain).unwrap(),
            SolveMethod::Exact,
        )
        .unwrap();
        let est = coupling_mse_from_oracle(&pair, &a, &oracle, &EvalSpec::default()).unwrap();
        assert_eq!(est.mean, 0.0);
    }

    #[test]
    fn ks_statistic() {
        let grid: Vec<f64> = (0..100).map(|i| 1.0 + (i as f64 + 0.5) / 100.0).collect();
        assert_relative_eq!(
            ks_statistic_uniform(&grid, 1.0, 2.0).unwrap(),
            0.005,
            epsilon = 1e-12
        );
        assert_eq!(ks_statistic_uniform(&[5.0], 1.0, 2.0).unwrap(), 1.0);
    }

    #[test]
    fn hand_curve() {
        let curve = efficiency_curve(&[0.1, 0.2, 0.3, 0.4], &[0.0, 0.5, 0.25, 0.75], 1.0).unwrap();
        let expected = [
            (0.0, 0.0, 0.25),
            (0.1, 0.0, 0.25),
            (0.1, 0.25, 0.25),
            (0.2, 0.25, 0.25),
            (0.2, 0.5, 0.25),
            (0.25, 0.5, 0.5),
            (0.3, 0.5, 0.5),
            (0.3, 0.75, 0.5),
            (0.4, 0.75, 0.5),
            (0.4, 1.0, 0.5),
            (0.5, 1.0, 0.75),
            (0.75, 1.0, 1.0),
        ];
        let got: Vec<_> = curve
            .points
            .iter()
            .map(|p| (p.threshold, p.x, p.y))
            .collect();
        assert_eq!(got, expected);
        assert_eq!(curve.auc, 0.375);
    }

    #[test]
    fn zero_errors_give_unit_auc() {
        let curve = efficiency_curve(&[0.3, 0.9, 0.5], &[0.0; 3], 1.0).unwrap();
        assert_eq!(curve.auc, 1.0);
        assert!(curve.points.iter().all(|p| p.y == 1.0));
    }

    #[test]
    fn identical_uniform_lists_give_half() {
        let v: Vec<f64> = (1..=1000).map(|i| i as f64 / 1000.0).collect();
        let curve = efficiency_curve(&v, &v, 1.0).unwrap();
        assert!((curve.auc - 0.5).abs() <= 1.0 / 1000.0, "{}", curve.auc);
    }

    #[test]
    fn curve_rejects_bad_input() {
        assert!(efficiency_curve(&[], &[], 1.0).is_err());
        assert!(efficiency_curve(&[0.1], &[0.1, 0.2], 1.0).is_err());
        assert!(efficiency_curve(&[0.1], &[0.1], 0.0).is_err());
    }

    #[test]
    fn report_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let report = EvalReport {
            metric: "mse_from_ot".into(),
            mean: 0.1 + 0.2,
            std: 1.0 / 3.0,
            runs: 2,
            n_eval: 100,
            seed: 9,
            beta: 10.0,
            dataset: "polar_quadrant".into(),
            wall_ms: 12,
            resampled: 0,
            per_run: vec![0.1, 0.2],
            per_pair_w2: vec![PairW2 {
                c1: vec![0.0],
                c2: vec![1.0],
                w2: std::f64::consts::PI,
            }],
            marginal: None,
        };
        let path = dir.path().join("report.json");
        let written = emit_report(&report, &path).unwrap();
        assert_eq!(written.len(), 2);
        assert_eq!(load_report(&path).unwrap(), report);
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(json["seed"], 9);
        assert_eq!(json["beta"], 10.0);
    }

    #[test]
    fn curve_csv_x_is_monotone() {
        let dir = tempfile::tempdir().unwrap();
        let curve = efficiency_curve(&[0.4, 0.1, 0.3, 0.2], &[0.2, 0.9, 0.1, 0.3], 1.0).unwrap();
        let path = dir.path().join("curve.csv");
        write_curve_csv(&curve, &path).unwrap();
        let mut reader = csv::Reader::from_path(&path).unwrap();
        let xs: Vec<f64> = reader
            .records()
            .map(|r| r.unwrap()[1].parse().unwrap())
            .collect();
        assert!(xs.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(xs.len(), curve.points.len());
    }
}
