//! Condition transfer: fixed-step integration of a learned field, and the
//! ground-truth pairwise transport maps used to score it.

use std::f64::consts::FRAC_PI_2;

use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::coupling::{
    cost_matrix, solve_assignment, BatchPair, CostMode, LabeledSample, SolveMethod,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::flow::{row_view, VectorFieldSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OdeMethod {
    Euler,
    #[default]
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// `t: 0 -> 1`.
    #[default]
    Forward,
    /// `t: 1 -> 0`, integrating `-v(x, 1 - s)` in `s`.
    Reverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OdeConfig {
    pub method: OdeMethod,
    pub n_steps: usize,
    pub direction: Direction,
}

impl Default for OdeConfig {
    fn default() -> Self {
        Self {
            method: OdeMethod::Rk4,
            n_steps: 50,
            direction: Direction::Forward,
        }
    }
}

impl OdeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::Config("ODE n_steps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Integrates `dx/dt = field(x, t)` over `[0, 1]` (or backwards) for a batch
/// of states stored as rows.
pub fn integrate_field<F>(mut field: F, x0: Array2<f64>, ode: &OdeConfig) -> Result<Array2<f64>>
where
    F: FnMut(ArrayView2<f64>, f64) -> Result<Array2<f64>>,
{
    ode.validate()?;
    let h = 1.0 / ode.n_steps as f64;
    let mut f = |x: ArrayView2<f64>, s: f64| -> Result<Array2<f64>> {
        match ode.direction {
            Direction::Forward => field(x, s),
            Direction::Reverse => field(x, 1.0 - s).map(|v| -v),
        }
    };
    let mut x = x0;
    for k in 0..ode.n_steps {
        let s = k as f64 * h;
        match ode.method {
            OdeMethod::Euler => {
                let v = f(x.view(), s)?;
                x.scaled_add(h, &v);
            }
            OdeMethod::Rk4 => {
                let k1 = f(x.view(), s)?;
                let k2 = f((&x + &(&k1 * (0.5 * h))).view(), s + 0.5 * h)?;
                let k3 = f((&x + &(&k2 * (0.5 * h))).view(), s + 0.5 * h)?;
                let k4 = f((&x + &(&k3 * h)).view(), s + h)?;
                Zip::from(&mut x)
                    .and(&k1)
                    .and(&k2)
                    .and(&k3)
                    .and(&k4)
                    .for_each(|x, &a, &b, &c, &d| {
                        *x += h * ((a + 2.0 * b + 2.0 * c + d) / 6.0);
                    });
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Transfer {
                step: k,
                message: "state became non-finite".into(),
            });
        }
    }
    Ok(x)
}

/// Transfers a batch of points: row `i` of `x0s` moves from `c1s[i]` to
/// `c2s[i]` along the learned field.
pub fn integrate_batch(
    spec: &VectorFieldSpec,
    x0s: ArrayView2<f64>,
    c1s: ArrayView2<f64>,
    c2s: ArrayView2<f64>,
    ode: &OdeConfig,
) -> Result<Array2<f64>> {
    let n = x0s.nrows();
    if c1s.nrows() != n || c2s.nrows() != n {
        return Err(Error::contract("batch inputs must have equal row counts"));
    }
    let mut ts = vec![0.0; n];
    integrate_field(
        |x, t| {
            ts.fill(t);
            spec.eval_batch(x, &ts, c1s, c2s)
        },
        x0s.to_owned(),
        ode,
    )
}

/// Solves the conditional ODE from `x0` with conditions `(c1, c2)`.
pub fn integrate(
    spec: &VectorFieldSpec,
    x0: &[f64],
    c1: &[f64],
    c2: &[f64],
    ode: &OdeConfig,
) -> Result<Vec<f64>> {
    let out = integrate_batch(spec, row_view(x0), row_view(c1), row_view(c2), ode)?;
    Ok(out.into_raw_vec_and_offset().0)
}

/// Anything that can move points from one condition to another.
pub trait ConditionTransfer {
    /// Maps `xs[i]` from condition `c_src[i]` to `c_targ[i]`.
    fn transfer_batch(
        &self,
        xs: &[Vec<f64>],
        c_src: &[Vec<f64>],
        c_targ: &[Vec<f64>],
    ) -> Result<Vec<Vec<f64>>>;
}

/// A learned field integrated with a fixed-step solver.
#[derive(Debug, Clone)]
pub struct ModelTransfer<'a> {
    pub spec: &'a VectorFieldSpec,
    pub ode: OdeConfig,
}

fn to_matrix(rows: &[Vec<f64>], width: usize) -> Result<Array2<f64>> {
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::contract(format!("expected rows of width {width}")));
    }
    Array2::from_shape_vec(
        (rows.len(), width),
        rows.iter().flatten().copied().collect(),
    )
    .map_err(|e| Error::contract(e.to_string()))
}

impl ConditionTransfer for ModelTransfer<'_> {
    fn transfer_batch(
        &self,
        xs: &[Vec<f64>],
        c_src: &[Vec<f64>],
        c_targ: &[Vec<f64>],
    ) -> Result<Vec<Vec<f64>>> {
        if xs.is_empty() {
            return Ok(Vec::new());
        }
        let out = integrate_batch(
            self.spec,
            to_matrix(xs, self.spec.d_x)?.view(),
            to_matrix(c_src, self.spec.d_c)?.view(),
            to_matrix(c_targ, self.spec.d_c)?.view(),
            &self.ode,
        )?;
        Ok(out.outer_iter().map(|r| r.to_vec()).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    EmpiricalGrouped,
    PolarAnalytic,
}

/// Exact sample-level OT between two equal-size groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTable {
    pub from: usize,
    pub to: usize,
    /// `map[k]` is the index in group `to` receiving point `k` of group `from`.
    pub map: Vec<usize>,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleGroup {
    pub condition: Vec<f64>,
    pub points: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalOracle {
    pub groups: Vec<OracleGroup>,
    pub tables: Vec<PairTable>,
}

/// Ground-truth pairwise transport.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OracleMap {
    EmpiricalGrouped(EmpiricalOracle),
    /// Radius-preserving rotation on the quarter annulus.
    PolarAnalytic,
}

/// Exact assignment between two equal-size point sets under squared
/// Euclidean cost.
pub(crate) fn point_assignment(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<(Vec<usize>, f64)> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::contract(format!(
            "point sets must be non-empty and of equal size, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let wrap = |pts: &[Vec<f64>]| {
        pts.iter()
            .map(|x| LabeledSample::new(x.clone(), vec![0.0]))
            .collect::<Vec<_>>()
    };
    let pair = BatchPair::new(wrap(a), wrap(b))?;
    let cost = cost_matrix(&pair, 0.0, CostMode::Plain)?;
    let a = solve_assignment(&cost, SolveMethod::Exact)?;
    Ok((a.permutation, a.total_cost))
}

impl EmpiricalOracle {
    pub fn from_groups(groups: Vec<OracleGroup>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::Oracle("no groups".into()));
        }
        let size = groups[0].points.len();
        if groups.iter().any(|g| g.points.len() != size) {
            return Err(Error::Oracle(format!(
                "groups have unequal sizes {:?}",
                groups.iter().map(|g| g.points.len()).collect::<Vec<_>>()
            )));
        }
        let mut tables = Vec::with_capacity(groups.len() * groups.len());
        for from in 0..groups.len() {
            for to in 0..groups.len() {
                let (map, cost) = point_assignment(&groups[from].points, &groups[to].points)?;
                tables.push(PairTable {
                    from,
                    to,
                    map,
                    cost,
                });
            }
        }
        Ok(Self { groups, tables })
    }

    pub fn group_index(&self, condition: &[f64]) -> Result<usize> {
        self.groups
            .iter()
            .position(|g| g.condition == condition)
            .ok_or_else(|| Error::Oracle(format!("unknown condition {condition:?}")))
    }

    pub fn table(&self, from: usize, to: usize) -> &PairTable {
        &self.tables[from * self.groups.len() + to]
    }

    /// Index of the source-group point nearest to `x`.
    pub fn nearest(&self, group: usize, x: &[f64]) -> usize {
        let pts = &self.groups[group].points;
        let mut best = (f64::INFINITY, 0);
        for (k, p) in pts.iter().enumerate() {
            let d = crate::coupling::sq_dist(p, x);
            if d < best.0 {
                best = (d, k);
            }
        }
        best.1
    }
}

/// Builds the oracle of the requested kind for a dataset.
pub fn oracle_map(dataset: &Dataset, kind: OracleKind) -> Result<OracleMap> {
    match kind {
        OracleKind::EmpiricalGrouped => {
            let groups = dataset
                .grouped
                .as_ref()
                .ok_or_else(|| Error::Oracle("empirical oracle needs a grouped dataset".into()))?;
            let groups = groups
                .iter()
                .map(|g| OracleGroup {
                    condition: g.condition.clone(),
                    points: dataset.group_points(g),
                })
                .collect();
            Ok(OracleMap::EmpiricalGrouped(EmpiricalOracle::from_groups(
                groups,
            )?))
        }
        OracleKind::PolarAnalytic => {
            if dataset.d_x != 2 || dataset.d_c != 1 {
                return Err(Error::Oracle(
                    "polar oracle needs d_x = 2 and a scalar angle condition".into(),
                ));
            }
            Ok(OracleMap::PolarAnalytic)
        }
    }
}

impl OracleMap {
    pub fn kind(&self) -> OracleKind {
        match self {
            OracleMap::EmpiricalGrouped(_) => OracleKind::EmpiricalGrouped,
            OracleMap::PolarAnalytic => OracleKind::PolarAnalytic,
        }
    }

    /// Image of `x` under the ground-truth map from `c_src` to `c_targ`.
    pub fn map(&self, x: &[f64], c_src: &[f64], c_targ: &[f64]) -> Result<Vec<f64>> {
        match self {
            OracleMap::EmpiricalGrouped(o) => {
                let from = o.group_index(c_src)?;
                let to = o.group_index(c_targ)?;
                let k = o.nearest(from, x);
                Ok(o.groups[to].points[o.table(from, to).map[k]].clone())
            }
            OracleMap::PolarAnalytic => {
                if x.len() != 2 || c_src.len() != 1 || c_targ.len() != 1 {
                    return Err(Error::contract(
                        "polar oracle works on 2-d points and angles",
                    ));
                }
                let delta = c_targ[0] - c_src[0];
                if delta.abs() >= FRAC_PI_2 {
                    return Err(Error::Oracle(format!(
                        "angle gap {delta} is not below pi/2; the quadratic-cost coupling \
                         is not unique"
                    )));
                }
                let (s, c) = delta.sin_cos();
                Ok(vec![c * x[0] - s * x[1], s * x[0] + c * x[1]])
            }
        }
    }
}

impl ConditionTransfer for OracleMap {
    fn transfer_batch(
        &self,
        xs: &[Vec<f64>],
        c_src: &[Vec<f64>],
        c_targ: &[Vec<f64>],
    ) -> Result<Vec<Vec<f64>>> {
        xs.iter()
            .zip(c_src)
            .zip(c_targ)
            .map(|((x, a), b)| self.map(x, a, b))
            .collect()
    }
}

/// Single-point transfer through a model or an oracle.
pub fn transfer(
    map: &dyn ConditionTransfer,
    x_src: &[f64],
    c_src: &[f64],
    c_targ: &[f64],
) -> Result<Vec<f64>> {
    let mut out = map.transfer_batch(&[x_src.to_vec()], &[c_src.to_vec()], &[c_targ.to_vec()])?;
    Ok(out.pop().expect("one output per input"))
}
