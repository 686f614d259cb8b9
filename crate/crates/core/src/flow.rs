//! Conditional vector fields `v(x, t | c1, c2)` and the flow-matching loss.
//!
//! Two parametrizations share one MLP `net`:
//!
//! - direct: `v = net([x, embed(t), c1, c2])`;
//! - antisymmetric: `v = net([x, c(t), c2]) - net([x, c(t), c1])` with
//!   `c(t) = t c2 + (1 - t) c1`. The field vanishes identically when
//!   `c1 == c2`, and `t` enters only through `c(t)`.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coupling::{Assignment, BatchPair};
use crate::error::{Error, Result};
use crate::smallnet::{AdamState, Mlp, MlpGrads, NetSnapshot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FieldMode {
    #[default]
    Direct,
    Antisymmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TimeEmbedding {
    #[default]
    Raw,
    /// `sin(2^j pi t), cos(2^j pi t)` for `j < frequencies`.
    Sinusoidal { frequencies: usize },
}

impl TimeEmbedding {
    pub fn width(&self) -> usize {
        match *self {
            TimeEmbedding::Raw => 1,
            TimeEmbedding::Sinusoidal { frequencies } => 2 * frequencies,
        }
    }

    fn write(&self, t: f64, out: &mut [f64]) {
        match *self {
            TimeEmbedding::Raw => out[0] = t,
            TimeEmbedding::Sinusoidal { frequencies } => {
                for j in 0..frequencies {
                    let w = PI * (1u64 << j) as f64;
                    out[2 * j] = (w * t).sin();
                    out[2 * j + 1] = (w * t).cos();
                }
            }
        }
    }
}

/// Condition path `t c2 + (1 - t) c1`.
pub fn interpolated_condition(c1: &[f64], c2: &[f64], t: f64) -> Vec<f64> {
    c1.iter()
        .zip(c2)
        .map(|(a, b)| t * b + (1.0 - t) * a)
        .collect()
}

/// A learnable vector field together with its parametrization.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorFieldSpec {
    pub mode: FieldMode,
    pub net: Mlp,
    pub d_x: usize,
    pub d_c: usize,
    pub time_embedding: TimeEmbedding,
}

impl VectorFieldSpec {
    pub fn input_width(mode: FieldMode, d_x: usize, d_c: usize, te: TimeEmbedding) -> usize {
        match mode {
            FieldMode::Direct => d_x + te.width() + 2 * d_c,
            FieldMode::Antisymmetric => d_x + 2 * d_c,
        }
    }

    /// Fresh field with the given hidden widths.
    pub fn new(
        mode: FieldMode,
        d_x: usize,
        d_c: usize,
        time_embedding: TimeEmbedding,
        hidden: &[usize],
        seed: u64,
    ) -> Result<Self> {
        let mut widths = vec![Self::input_width(mode, d_x, d_c, time_embedding)];
        widths.extend_from_slice(hidden);
        widths.push(d_x);
        Self::from_net(mode, Mlp::init(&widths, seed)?, d_x, d_c, time_embedding)
    }

    pub fn from_net(
        mode: FieldMode,
        net: Mlp,
        d_x: usize,
        d_c: usize,
        time_embedding: TimeEmbedding,
    ) -> Result<Self> {
        if d_x == 0 || d_c == 0 {
            return Err(Error::Config("d_x and d_c must be positive".into()));
        }
        if let TimeEmbedding::Sinusoidal { frequencies } = time_embedding {
            if frequencies == 0 || frequencies > 30 {
                return Err(Error::Config(format!(
                    "sinusoidal embedding needs 1..=30 frequencies, got {frequencies}"
                )));
            }
        }
        let expected = Self::input_width(mode, d_x, d_c, time_embedding);
        if net.input_width() != expected || net.output_width() != d_x {
            return Err(Error::Config(format!(
                "network widths {:?} do not fit a {mode:?} field with d_x = {d_x}, d_c = {d_c} \
                 (input {expected}, output {d_x})",
                net.widths()
            )));
        }
        Ok(Self {
            mode,
            net,
            d_x,
            d_c,
            time_embedding,
        })
    }

    fn check_dims(&self, x: usize, c1: usize, c2: usize) -> Result<()> {
        if x != self.d_x || c1 != self.d_c || c2 != self.d_c {
            return Err(Error::contract(format!(
                "expected d_x = {}, d_c = {}, got x: {x}, c1: {c1}, c2: {c2}",
                self.d_x, self.d_c
            )));
        }
        Ok(())
    }

    /// Network inputs for a batch. In antisymmetric mode the first `n` rows
    /// carry `c2` as the last block and the next `n` rows carry `c1`.
    fn design_matrix(
        &self,
        xs: ArrayView2<f64>,
        ts: &[f64],
        c1s: ArrayView2<f64>,
        c2s: ArrayView2<f64>,
    ) -> Array2<f64> {
        let n = xs.nrows();
        let (d_x, d_c) = (self.d_x, self.d_c);
        match self.mode {
            FieldMode::Direct => {
                let te = self.time_embedding.width();
                let mut m = Array2::zeros((n, d_x + te + 2 * d_c));
                for i in 0..n {
                    let mut row = m.row_mut(i);
                    let row = row.as_slice_mut().expect("standard layout");
                    for k in 0..d_x {
                        row[k] = xs[[i, k]];
                    }
                    self.time_embedding.write(ts[i], &mut row[d_x..d_x + te]);
                    for k in 0..d_c {
                        row[d_x + te + k] = c1s[[i, k]];
                        row[d_x + te + d_c + k] = c2s[[i, k]];
                    }
                }
                m
            }
            FieldMode::Antisymmetric => {
                let mut m = Array2::zeros((2 * n, d_x + 2 * d_c));
                for i in 0..n {
                    let t = ts[i];
                    for (row, towards_c2) in [(i, true), (n + i, false)] {
                        for k in 0..d_x {
                            m[[row, k]] = xs[[i, k]];
                        }
                        for k in 0..d_c {
                            m[[row, d_x + k]] = t * c2s[[i, k]] + (1.0 - t) * c1s[[i, k]];
                            m[[row, d_x + d_c + k]] =
                                if towards_c2 { c2s[[i, k]] } else { c1s[[i, k]] };
                        }
                    }
                }
                m
            }
        }
    }

    /// Velocities for a batch of states. `c1s`, `c2s` hold one condition
    /// pair per row.
    pub fn eval_batch(
        &self,
        xs: ArrayView2<f64>,
        ts: &[f64],
        c1s: ArrayView2<f64>,
        c2s: ArrayView2<f64>,
    ) -> Result<Array2<f64>> {
        let n = xs.nrows();
        if ts.len() != n || c1s.nrows() != n || c2s.nrows() != n {
            return Err(Error::contract("batch inputs must have equal row counts"));
        }
        self.check_dims(xs.ncols(), c1s.ncols(), c2s.ncols())?;
        let design = self.design_matrix(xs, ts, c1s, c2s);
        match self.mode {
            FieldMode::Direct => self.net.forward(design.view()),
            FieldMode::Antisymmetric => self.net.paired_difference(design.view()),
        }
    }

    /// Velocity at a single state.
    pub fn eval(&self, x: &[f64], t: f64, c1: &[f64], c2: &[f64]) -> Result<Vec<f64>> {
        self.check_dims(x.len(), c1.len(), c2.len())?;
        let out = self.eval_batch(row_view(x), &[t], row_view(c1), row_view(c2))?;
        Ok(out.into_raw_vec_and_offset().0)
    }

    pub fn to_checkpoint(
        &self,
        optimizer_state: Option<&AdamState>,
        seed: u64,
        step: u64,
    ) -> Checkpoint {
        Checkpoint {
            net: self.net.clone().into(),
            optimizer_state: optimizer_state.cloned(),
            seed,
            step,
            mode: self.mode,
            d_x: self.d_x,
            d_c: self.d_c,
            time_embedding: self.time_embedding,
        }
    }
}

/// A slice as a one-row matrix.
pub(crate) fn row_view(v: &[f64]) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((1, v.len()), v).expect("contiguous row")
}

/// `vf_eval`: velocity of `spec` at one state.
pub fn vf_eval(
    spec: &VectorFieldSpec,
    x: &[f64],
    t: f64,
    c1: &[f64],
    c2: &[f64],
) -> Result<Vec<f64>> {
    spec.eval(x, t, c1, c2)
}

/// Checkpoint JSON: network, optimizer state and field metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    #[serde(flatten)]
    pub net: NetSnapshot,
    pub optimizer_state: Option<AdamState>,
    pub seed: u64,
    pub step: u64,
    pub mode: FieldMode,
    pub d_x: usize,
    pub d_c: usize,
    pub time_embedding: TimeEmbedding,
}

impl Checkpoint {
    pub fn to_spec(&self) -> Result<VectorFieldSpec> {
        let net = Mlp::try_from(self.net.clone())?;
        VectorFieldSpec::from_net(self.mode, net, self.d_x, self.d_c, self.time_embedding)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Supervision for one coupled pair: the point of the straight path at time
/// `t` and the path's constant velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub x_t: Vec<f64>,
    pub t: f64,
    pub target_velocity: Vec<f64>,
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
}

/// Straight paths `x1_i -> x2_pi(i)` with independent `t_i ~ U[0, 1]`.
pub fn make_paths<R: Rng + ?Sized>(
    pair: &BatchPair,
    assignment: &Assignment,
    rng: &mut R,
) -> Result<Vec<PathSample>> {
    if assignment.len() != pair.len() {
        return Err(Error::contract(
            "assignment length does not match batch size",
        ));
    }
    let mut out = Vec::with_capacity(pair.len());
    for (i, &j) in assignment.permutation.iter().enumerate() {
        let t: f64 = rng.gen();
        let (start, end) = (&pair.b1()[i], &pair.b2()[j]);
        out.push(PathSample {
            x_t: start
                .x
                .iter()
                .zip(&end.x)
                .map(|(a, b)| (1.0 - t) * a + t * b)
                .collect(),
            t,
            target_velocity: start.x.iter().zip(&end.x).map(|(a, b)| b - a).collect(),
            c1: start.c.clone(),
            c2: end.c.clone(),
        });
    }
    Ok(out)
}

fn stack(rows: impl Iterator<Item = Vec<f64>>, n: usize, width: usize) -> Array2<f64> {
    let flat: Vec<f64> = rows.flatten().collect();
    Array2::from_shape_vec((n, width), flat).expect("consistent widths")
}

/// Summed squared residual `sum_i |v(x_t_i, t_i | c1_i, c2_i) - u_i|^2` and
/// its gradient with respect to the network parameters.
pub fn fm_loss_and_grad(spec: &VectorFieldSpec, paths: &[PathSample]) -> Result<(f64, MlpGrads)> {
    if paths.is_empty() {
        return Err(Error::contract("loss needs at least one path sample"));
    }
    let n = paths.len();
    for p in paths {
        spec.check_dims(p.x_t.len(), p.c1.len(), p.c2.len())?;
        if p.target_velocity.len() != spec.d_x {
            return Err(Error::contract("target velocity has the wrong width"));
        }
    }
    let xs = stack(paths.iter().map(|p| p.x_t.clone()), n, spec.d_x);
    let c1s = stack(paths.iter().map(|p| p.c1.clone()), n, spec.d_c);
    let c2s = stack(paths.iter().map(|p| p.c2.clone()), n, spec.d_c);
    let targets = stack(paths.iter().map(|p| p.target_velocity.clone()), n, spec.d_x);
    let ts: Vec<f64> = paths.iter().map(|p| p.t).collect();
    let design = spec.design_matrix(xs.view(), &ts, c1s.view(), c2s.view());

    let mut loss = 0.0;
    let upstream_of = |velocity: &Array2<f64>| -> Result<Array2<f64>> {
        let residual = velocity - &targets;
        loss = residual.iter().map(|r| r * r).sum::<f64>();
        if !loss.is_finite() {
            return Err(Error::training(format!("non-finite loss {loss}")));
        }
        Ok(residual * 2.0)
    };
    let (_, grads) = match spec.mode {
        FieldMode::Direct => spec.net.forward_backward(design.view(), upstream_of)?,
        FieldMode::Antisymmetric => spec
            .net
            .paired_forward_backward(design.view(), upstream_of)?,
    };
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::{cost_matrix, solve_assignment, CostMode, LabeledSample, SolveMethod};
    use crate::smallnet::compare_with_finite_differences;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_paths(spec: &VectorFieldSpec, n: usize, seed: u64) -> Vec<PathSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = |k: usize| {
            (0..k)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect::<Vec<f64>>()
        };
        (0..n)
            .map(|_| PathSample {
                x_t: v(spec.d_x),
                t: v(1)[0].abs(),
                target_velocity: v(spec.d_x),
                c1: v(spec.d_c),
                c2: v(spec.d_c),
            })
            .collect()
    }

    fn identity_pair(n: usize) -> BatchPair {
        let b: Vec<_> = (0..n)
            .map(|i| LabeledSample::new(vec![i as f64, -(i as f64)], vec![i as f64]))
            .collect();
        BatchPair::new(b.clone(), b).unwrap()
    }

    #[test]
    fn identity_assignment_on_identical_batches_has_zero_velocity() {
        let pair = identity_pair(6);
        let a = solve_assignment(
            &cost_matrix(&pair, 1.0, CostMode::A2a).unwrap(),
            SolveMethod::Exact,
        )
        .unwrap();
        let paths = make_paths(&pair, &a, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(paths
            .iter()
            .all(|p| p.target_velocity.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn path_is_linear_interpolation() {
        let pair = BatchPair::new(
            vec![LabeledSample::new(vec![0.0], vec![0.0])],
            vec![LabeledSample::new(vec![2.0], vec![1.0])],
        )
        .unwrap();
        let a = solve_assignment(
            &cost_matrix(&pair, 0.0, CostMode::Plain).unwrap(),
            SolveMethod::Exact,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let p = &make_paths(&pair, &a, &mut rng).unwrap()[0];
            assert!((p.x_t[0] - 2.0 * p.t).abs() <= 1e-12);
            assert_eq!(p.target_velocity, vec![2.0]);
            assert_eq!((p.c1.as_slice(), p.c2.as_slice()), (&[0.0][..], &[1.0][..]));
        }
    }

    #[test]
    fn path_times_are_uniform() {
        let pair = identity_pair(100);
        let a = solve_assignment(
            &cost_matrix(&pair, 0.0, CostMode::Plain).unwrap(),
            SolveMethod::Exact,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ts: Vec<f64> = (0..100)
            .flat_map(|_| make_paths(&pair, &a, &mut rng).unwrap())
            .map(|p| p.t)
            .collect();
        let mean = ts.iter().sum::<f64>() / ts.len() as f64;
        assert!((0.48..=0.52).contains(&mean), "{mean}");
    }

    #[test]
    fn antisymmetric_field_vanishes_on_equal_conditions() {
        let spec = VectorFieldSpec::new(
            FieldMode::Antisymmetric,
            2,
            1,
            TimeEmbedding::Raw,
            &[8, 8],
            3,
        )
        .unwrap();
        for t in [0.0, 0.3, 1.0] {
            let v = spec.eval(&[0.4, -1.2], t, &[0.7], &[0.7]).unwrap();
            assert_eq!(v, vec![0.0, 0.0]);
        }
    }

    #[test]
    fn antisymmetric_midpoint_swap_negates() {
        let spec =
            VectorFieldSpec::new(FieldMode::Antisymmetric, 2, 2, TimeEmbedding::Raw, &[8], 4)
                .unwrap();
        let (c1, c2) = ([0.1, 0.9], [-0.4, 0.25]);
        let fwd = spec.eval(&[0.5, 0.5], 0.5, &c1, &c2).unwrap();
        let back = spec.eval(&[0.5, 0.5], 0.5, &c2, &c1).unwrap();
        for (a, b) in fwd.iter().zip(&back) {
            assert_eq!(*a, -b);
        }
    }

    #[test]
    fn zero_network_gives_zero_velocity() {
        let te = TimeEmbedding::Sinusoidal { frequencies: 8 };
        let width = VectorFieldSpec::input_width(FieldMode::Direct, 2, 1, te);
        assert_eq!(width, 2 + 16 + 2);
        let net = Mlp::zeros(&[width, 4, 2]).unwrap();
        let spec = VectorFieldSpec::from_net(FieldMode::Direct, net, 2, 1, te).unwrap();
        assert_eq!(
            spec.eval(&[1.0, 2.0], 0.3, &[0.0], &[1.0]).unwrap(),
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let spec =
            VectorFieldSpec::new(FieldMode::Direct, 2, 1, TimeEmbedding::Raw, &[4], 0).unwrap();
        assert!(matches!(
            spec.eval(&[1.0], 0.0, &[0.0], &[0.0]),
            Err(Error::Contract(_))
        ));
        let net = Mlp::init(&[3, 2], 0).unwrap();
        assert!(
            VectorFieldSpec::from_net(FieldMode::Direct, net, 2, 1, TimeEmbedding::Raw).is_err()
        );
    }

    #[test]
    fn batch_and_single_evaluation_agree() {
        for mode in [FieldMode::Direct, FieldMode::Antisymmetric] {
            let spec = VectorFieldSpec::new(mode, 2, 1, TimeEmbedding::Raw, &[6], 5).unwrap();
            let paths = random_paths(&spec, 4, 6);
            let xs = stack(paths.iter().map(|p| p.x_t.clone()), 4, 2);
            let c1 = stack(paths.iter().map(|p| p.c1.clone()), 4, 1);
            let c2 = stack(paths.iter().map(|p| p.c2.clone()), 4, 1);
            let ts: Vec<f64> = paths.iter().map(|p| p.t).collect();
            let batch = spec
                .eval_batch(xs.view(), &ts, c1.view(), c2.view())
                .unwrap();
            for (i, p) in paths.iter().enumerate() {
                let single = spec.eval(&p.x_t, p.t, &p.c1, &p.c2).unwrap();
                assert_eq!(batch.row(i).to_vec(), single);
            }
        }
    }

    #[test]
    fn loss_is_sum_of_squared_residuals() {
        let spec =
            VectorFieldSpec::new(FieldMode::Direct, 2, 1, TimeEmbedding::Raw, &[5], 7).unwrap();
        let paths = random_paths(&spec, 1, 8);
        let p = &paths[0];
        let v = spec.eval(&p.x_t, p.t, &p.c1, &p.c2).unwrap();
        let expected: f64 = v
            .iter()
            .zip(&p.target_velocity)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let (loss, _) = fm_loss_and_grad(&spec, &paths).unwrap();
        assert!((loss - expected).abs() <= 1e-14 * expected.max(1.0));
    }

    #[test]
    fn perfect_fit_has_zero_loss_and_gradient() {
        let spec =
            VectorFieldSpec::new(FieldMode::Direct, 2, 1, TimeEmbedding::Raw, &[5], 9).unwrap();
        let mut paths = random_paths(&spec, 6, 10);
        for p in &mut paths {
            p.target_velocity = spec.eval(&p.x_t, p.t, &p.c1, &p.c2).unwrap();
        }
        let (loss, grads) = fm_loss_and_grad(&spec, &paths).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.to_flat().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn empty_paths_rejected() {
        let spec =
            VectorFieldSpec::new(FieldMode::Direct, 2, 1, TimeEmbedding::Raw, &[5], 9).unwrap();
        assert!(fm_loss_and_grad(&spec, &[]).is_err());
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let configs = [
            (FieldMode::Direct, TimeEmbedding::Raw),
            (
                FieldMode::Direct,
                TimeEmbedding::Sinusoidal { frequencies: 3 },
            ),
            (FieldMode::Antisymmetric, TimeEmbedding::Raw),
        ];
        for (k, (mode, te)) in configs.into_iter().enumerate() {
            let spec = VectorFieldSpec::new(mode, 2, 1, te, &[7, 7], 20 + k as u64).unwrap();
            let paths = random_paths(&spec, 5, 30 + k as u64);
            let (_, grads) = fm_loss_and_grad(&spec, &paths).unwrap();
            let report = compare_with_finite_differences(
                |flat| {
                    let net = spec.net.with_flat(flat).unwrap();
                    let probe = VectorFieldSpec {
                        net,
                        ..spec.clone()
                    };
                    fm_loss_and_grad(&probe, &paths).unwrap().0
                },
                &spec.net.to_flat(),
                &grads.to_flat(),
                &spec.net.block_layout(),
                1e-5,
            );
            assert!(report.max_rel_error <= 1e-5, "{mode:?}: {report:?}");
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let spec =
            VectorFieldSpec::new(FieldMode::Antisymmetric, 2, 1, TimeEmbedding::Raw, &[4], 11)
                .unwrap();
        let ckpt = spec.to_checkpoint(None, 11, 0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        ckpt.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(back.to_spec().unwrap(), spec);
        let value: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        for key in [
            "widths",
            "activation",
            "weights",
            "biases",
            "optimizer_state",
            "seed",
            "step",
            "mode",
            "d_x",
            "d_c",
            "time_embedding",
        ] {
            assert!(value.get(key).is_some(), "missing {key}");
        }
    }
}
