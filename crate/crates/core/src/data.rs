//! Datasets of `(x, c)` pairs: synthetic generators, CSV I/O and batch-pair
//! sampling.

use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::coupling::{BatchPair, LabeledSample};
use crate::error::{Error, Result};

/// Indices sharing one exact condition value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub condition: Vec<f64>,
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<LabeledSample>,
    pub d_x: usize,
    pub d_c: usize,
    /// Present for grouped data; partitions all indices.
    pub grouped: Option<Vec<Group>>,
    pub seed: u64,
    pub name: String,
}

impl Dataset {
    pub fn new(samples: Vec<LabeledSample>, name: impl Into<String>, seed: u64) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::contract("dataset must contain at least one sample"))?;
        let (d_x, d_c) = (first.x.len(), first.c.len());
        if d_x == 0 || d_c == 0 {
            return Err(Error::contract("d_x and d_c must be positive"));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.x.len() != d_x || s.c.len() != d_c {
                return Err(Error::contract(format!(
                    "sample {i} has inconsistent dimensions"
                )));
            }
            if s.x.iter().chain(&s.c).any(|v| !v.is_finite()) {
                return Err(Error::contract(format!(
                    "sample {i} has non-finite entries"
                )));
            }
        }
        Ok(Self {
            samples,
            d_x,
            d_c,
            grouped: None,
            seed,
            name: name.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Groups samples by exact condition value, in order of first appearance.
    pub fn with_groups_from_conditions(mut self) -> Self {
        let mut groups: Vec<Group> = Vec::new();
        for (i, s) in self.samples.iter().enumerate() {
            match groups.iter_mut().find(|g| g.condition == s.c) {
                Some(g) => g.indices.push(i),
                None => groups.push(Group {
                    condition: s.c.clone(),
                    indices: vec![i],
                }),
            }
        }
        self.grouped = Some(groups);
        self
    }

    pub fn group(&self, condition: &[f64]) -> Option<&Group> {
        self.grouped
            .as_ref()?
            .iter()
            .find(|g| g.condition == condition)
    }

    pub fn group_points(&self, group: &Group) -> Vec<Vec<f64>> {
        group
            .indices
            .iter()
            .map(|&i| self.samples[i].x.clone())
            .collect()
    }
}

/// Which synthetic family to draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    /// Three discrete conditions, each a two-component Gaussian mixture.
    GroupedMixture,
    /// One sample per continuous condition on a quarter annulus.
    PolarQuadrant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub n_samples: usize,
    #[serde(default)]
    pub seed: u64,
}

/// Component `(mean, sigma)` pairs per condition of the grouped mixture. The
/// inner and outer component of each condition lie on the same ray.
pub fn mixture_components() -> [[([f64; 2], f64); 2]; 3] {
    let r3 = 3f64.sqrt();
    [
        [([0.0, -1.0], 0.01), ([0.0, -3.0], 0.05)],
        [([r3 / 2.0, 1.0], 0.01), ([3.0 * r3 / 2.0, 3.0], 0.05)],
        [([-r3 / 2.0, 1.0], 0.01), ([-3.0 * r3 / 2.0, 3.0], 0.05)],
    ]
}

/// Samples per condition for the grouped mixture; the remainder goes to
/// condition 0.
pub fn mixture_counts(n_samples: usize) -> [usize; 3] {
    let base = n_samples / 3;
    [base + n_samples % 3, base, base]
}

/// Draws a synthetic dataset. Identical specs give identical datasets.
pub fn generate(spec: &GeneratorSpec) -> Result<Dataset> {
    if spec.n_samples == 0 {
        return Err(Error::Config("n_samples must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match spec.kind {
        GeneratorKind::GroupedMixture => {
            let mut samples = Vec::with_capacity(spec.n_samples);
            let mut groups = Vec::with_capacity(3);
            for (label, (components, count)) in mixture_components()
                .iter()
                .zip(mixture_counts(spec.n_samples))
                .enumerate()
            {
                let start = samples.len();
                for _ in 0..count {
                    let (mean, sigma) = components[usize::from(rng.gen::<bool>())];
                    let noise = Normal::new(0.0, sigma).expect("positive sigma");
                    let x = vec![
                        mean[0] + noise.sample(&mut rng),
                        mean[1] + noise.sample(&mut rng),
                    ];
                    samples.push(LabeledSample::new(x, vec![label as f64]));
                }
                groups.push(Group {
                    condition: vec![label as f64],
                    indices: (start..samples.len()).collect(),
                });
            }
            let mut ds = Dataset::new(samples, "grouped_mixture", spec.seed)?;
            ds.grouped = Some(
                groups
                    .into_iter()
                    .filter(|g| !g.indices.is_empty())
                    .collect(),
            );
            Ok(ds)
        }
        GeneratorKind::PolarQuadrant => {
            let samples = (0..spec.n_samples)
                .map(|_| {
                    let theta = rng.gen_range(0.0..=FRAC_PI_2);
                    let r = rng.gen_range(1.0..=2.0);
                    polar_sample(r, theta)
                })
                .collect();
            Dataset::new(samples, "polar_quadrant", spec.seed)
        }
    }
}

/// `x = (r cos theta, r sin theta)` labelled by `atan2` of the point itself so
/// that the stored condition matches the point's angle.
pub fn polar_sample(r: f64, theta: f64) -> LabeledSample {
    let x = vec![r * theta.cos(), r * theta.sin()];
    let angle = x[1].atan2(x[0]);
    LabeledSample::new(x, vec![angle])
}

fn header_for(d_x: usize, d_c: usize) -> Vec<String> {
    (0..d_x)
        .map(|k| format!("x{k}"))
        .chain((0..d_c).map(|k| format!("c{k}")))
        .collect()
}

fn parse_header(fields: &csv::StringRecord) -> Result<(usize, usize)> {
    let bad = |message: String| Error::Ingestion { line: 1, message };
    let d_x = fields.iter().take_while(|f| f.starts_with('x')).count();
    let d_c = fields.len() - d_x;
    if d_x == 0 || d_c == 0 {
        return Err(bad(format!(
            "header must be x0..x(d_x-1),c0..c(d_c-1), got {:?}",
            fields.iter().collect::<Vec<_>>()
        )));
    }
    let expected = header_for(d_x, d_c);
    if fields.iter().ne(expected.iter().map(String::as_str)) {
        return Err(bad(format!(
            "malformed header {:?}, expected {expected:?}",
            fields.iter().collect::<Vec<_>>()
        )));
    }
    Ok((d_x, d_c))
}

/// Reads a dataset with header `x0..,c0..`.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut records = reader.records();
    let header = records
        .next()
        .ok_or_else(|| Error::Ingestion {
            line: 1,
            message: "empty file".into(),
        })?
        .map_err(|e| csv_error(path, e))?;
    let (d_x, d_c) = parse_header(&header)?;
    let mut samples = Vec::new();
    for record in records {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != d_x + d_c {
            return Err(Error::Ingestion {
                line,
                message: format!("expected {} cells, found {}", d_x + d_c, record.len()),
            });
        }
        let mut values = Vec::with_capacity(d_x + d_c);
        for cell in record.iter() {
            let v: f64 = cell.parse().map_err(|_| Error::Ingestion {
                line,
                message: format!("not a number: {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Ingestion {
                    line,
                    message: format!("non-finite value {cell:?}"),
                });
            }
            values.push(v);
        }
        let c = values.split_off(d_x);
        samples.push(LabeledSample::new(values, c));
    }
    if samples.is_empty() {
        return Err(Error::Ingestion {
            line: 2,
            message: "no data rows".into(),
        });
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    Dataset::new(samples, name, 0)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Ingestion {
            line,
            message: format!("{other:?}"),
        },
    }
}

/// 17 significant digits, enough to read back the same `f64`.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn save_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    writer
        .write_record(header_for(dataset.d_x, dataset.d_c))
        .map_err(|e| csv_error(path, e))?;
    for s in &dataset.samples {
        writer
            .write_record(s.x.iter().chain(&s.c).map(|&v| fmt_f64(v)))
            .map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Two independent batches of size `n`, each drawn uniformly without
/// replacement; the batches may overlap.
pub fn sample_batch_pair<R: Rng + ?Sized>(
    dataset: &Dataset,
    n: usize,
    rng: &mut R,
) -> Result<BatchPair> {
    if n == 0 || n > dataset.len() {
        return Err(Error::Size(format!(
            "batch size {n} must be in 1..={}",
            dataset.len()
        )));
    }
    let draw = |rng: &mut R| -> Vec<LabeledSample> {
        let mut idx = index::sample(rng, dataset.len(), n).into_vec();
        // index::sample does not promise a uniformly random order
        rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), rng);
        idx.into_iter()
            .map(|i| dataset.samples[i].clone())
            .collect()
    };
    let b1 = draw(rng);
    let b2 = draw(rng);
    BatchPair::new(b1, b2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn grouped_mixture_counts_and_means() {
        let ds = generate(&GeneratorSpec {
            kind: GeneratorKind::GroupedMixture,
            n_samples: 3000,
            seed: 1,
        })
        .unwrap();
        assert_eq!(ds.len(), 3000);
        let groups = ds.grouped.as_ref().unwrap();
        assert_eq!(groups.len(), 3);
        for (label, g) in groups.iter().enumerate() {
            assert_eq!(g.indices.len(), 1000);
            assert_eq!(g.condition, vec![label as f64]);
            let (inner_mean, sigma) = mixture_components()[label][0];
            // inner points are the ones within radius 2 of the origin
            let inner: Vec<_> = g
                .indices
                .iter()
                .map(|&i| &ds.samples[i].x)
                .filter(|x| x[0].hypot(x[1]) < 2.0)
                .collect();
            let count = inner.len() as f64;
            for d in 0..2 {
                let mean = inner.iter().map(|x| x[d]).sum::<f64>() / count;
                assert!((mean - inner_mean[d]).abs() <= 3.0 * sigma / count.sqrt());
            }
            // component weights: 50% +- 3 binomial sigma
            let sd = (1000.0f64 * 0.25).sqrt();
            assert!((count - 500.0).abs() <= 3.0 * sd);
        }
    }

    #[test]
    fn grouped_mixture_remainder_goes_to_condition_zero() {
        let ds = generate(&GeneratorSpec {
            kind: GeneratorKind::GroupedMixture,
            n_samples: 11,
            seed: 0,
        })
        .unwrap();
        let sizes: Vec<_> = ds
            .grouped
            .unwrap()
            .iter()
            .map(|g| g.indices.len())
            .collect();
        assert_eq!(sizes, vec![5, 3, 3]);
    }

    #[test]
    fn polar_quadrant_is_on_the_quarter_annulus() {
        let ds = generate(&GeneratorSpec {
            kind: GeneratorKind::PolarQuadrant,
            n_samples: 5000,
            seed: 3,
        })
        .unwrap();
        assert!(ds.grouped.is_none());
        assert_eq!((ds.d_x, ds.d_c), (2, 1));
        for s in &ds.samples {
            let r = s.x[0].hypot(s.x[1]);
            let angle = s.x[1].atan2(s.x[0]);
            assert!((1.0 - 1e-12..=2.0 + 1e-12).contains(&r));
            assert!((0.0..=FRAC_PI_2).contains(&angle));
            assert!((s.c[0] - angle).abs() <= 1e-12);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        for kind in [GeneratorKind::GroupedMixture, GeneratorKind::PolarQuadrant] {
            let spec = GeneratorSpec {
                kind,
                n_samples: 300,
                seed: 42,
            };
            assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        }
    }

    #[test]
    fn zero_samples_rejected() {
        let spec = GeneratorSpec {
            kind: GeneratorKind::PolarQuadrant,
            n_samples: 0,
            seed: 0,
        };
        assert!(matches!(generate(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn csv_round_trip() {
        let ds = generate(&GeneratorSpec {
            kind: GeneratorKind::PolarQuadrant,
            n_samples: 10,
            seed: 5,
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("polar.csv");
        save_csv(&ds, &path).unwrap();
        let back = load_csv(&path).unwrap();
        assert_eq!(back.samples, ds.samples);
        assert_eq!((back.d_x, back.d_c), (2, 1));
    }

    fn write(content: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::File::create(&path)
            .unwrap()
            .write_all(content.as_bytes())
            .unwrap();
        (dir, path)
    }

    #[test]
    fn csv_header_defines_dimensions() {
        let (_dir, path) = write("x0,c0,c1\n1.5,2,3\n");
        let ds = load_csv(&path).unwrap();
        assert_eq!((ds.d_x, ds.d_c), (1, 2));
        assert_eq!(ds.samples[0].c, vec![2.0, 3.0]);
    }

    #[test]
    fn csv_errors_name_the_line() {
        let (_dir, path) = write("x0,c0\n1,2\n3,abc\n");
        match load_csv(&path) {
            Err(Error::Ingestion { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let (_dir, path) = write("x0,c0\n1,NaN\n");
        assert!(matches!(
            load_csv(&path),
            Err(Error::Ingestion { line: 2, .. })
        ));
        let (_dir, path) = write("x0,c0\n1,2\n1\n");
        assert!(matches!(
            load_csv(&path),
            Err(Error::Ingestion { line: 3, .. })
        ));
        let (_dir, path) = write("a,b\n1,2\n");
        assert!(matches!(
            load_csv(&path),
            Err(Error::Ingestion { line: 1, .. })
        ));
        let (_dir, path) = write("x1,c0\n1,2\n");
        assert!(matches!(
            load_csv(&path),
            Err(Error::Ingestion { line: 1, .. })
        ));
    }

    fn small_dataset(n: usize) -> Dataset {
        let samples = (0..n)
            .map(|i| LabeledSample::new(vec![i as f64], vec![0.0]))
            .collect();
        Dataset::new(samples, "toy", 0).unwrap()
    }

    #[test]
    fn full_batch_is_a_permutation() {
        let ds = small_dataset(20);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pair = sample_batch_pair(&ds, 20, &mut rng).unwrap();
        let mut seen: Vec<f64> = pair.b1().iter().map(|s| s.x[0]).collect();
        seen.sort_by(f64::total_cmp);
        assert_eq!(seen, (0..20).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn batches_change_as_rng_advances() {
        let ds = small_dataset(100);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let first = sample_batch_pair(&ds, 10, &mut rng).unwrap();
        for _ in 0..10 {
            let next = sample_batch_pair(&ds, 10, &mut rng).unwrap();
            assert_ne!(next.b1(), first.b1());
        }
    }

    #[test]
    fn batch_pair_is_reproducible() {
        let ds = small_dataset(50);
        let a = sample_batch_pair(&ds, 8, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_batch_pair(&ds, 8, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn oversized_batch_rejected() {
        let ds = small_dataset(5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            sample_batch_pair(&ds, 6, &mut rng),
            Err(Error::Size(_))
        ));
    }
}
