//! Synthetic datasets and plain minibatch SGD.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{Dataset, Mlp};
use crate::paths::select_skeleton;
use crate::rng;

/// Skeleton weights below this magnitude trigger a warning during training.
pub const SKELETON_WARN_FLOOR: f64 = 1e-6;

/// How to obtain a train/test pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetSpec {
    /// `classes` isotropic Gaussian clusters in `dim` dimensions; centers are
    /// standard normal draws.
    GaussianBlobs {
        classes: usize,
        dim: usize,
        n: usize,
        sigma: f64,
        seed: u64,
    },
    /// Two interleaved spirals in the plane, labels alternating by sample.
    TwoSpirals { n: usize, noise: f64, seed: u64 },
    /// Feature columns followed by an integer label column.
    Csv {
        path: PathBuf,
        #[serde(default)]
        header: bool,
        #[serde(default)]
        test_path: Option<PathBuf>,
    },
}

impl std::str::FromStr for DatasetSpec {
    type Err = Error;

    /// `blobs:classes=3,dim=8,n=600,sigma=0.5,seed=1`,
    /// `spirals:n=200,noise=0.1,seed=7`, or `csv:path[,header][,test=path]`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let bad = |msg: String| Error::InvalidConfig(format!("dataset `{s}`: {msg}"));
        if kind == "csv" {
            let mut parts = rest.split(',');
            let path = parts.next().filter(|p| !p.is_empty()).ok_or_else(|| bad("missing path".into()))?;
            let mut header = false;
            let mut test_path = None;
            for p in parts {
                match p.split_once('=') {
                    None if p == "header" => header = true,
                    Some(("test", t)) => test_path = Some(PathBuf::from(t)),
                    _ => return Err(bad(format!("unknown option `{p}`"))),
                }
            }
            return Ok(Self::Csv {
                path: path.into(),
                header,
                test_path,
            });
        }
        let mut kv = std::collections::BTreeMap::new();
        for p in rest.split(',').filter(|p| !p.is_empty()) {
            let (k, v) = p.split_once('=').ok_or_else(|| bad(format!("expected key=value, got `{p}`")))?;
            kv.insert(k, v);
        }
        let get = |k: &str, default: Option<&str>| -> Result<String> {
            kv.get(k)
                .map(|v| v.to_string())
                .or(default.map(str::to_string))
                .ok_or_else(|| bad(format!("missing `{k}`")))
        };
        let num = |k: &str, d: Option<&str>| -> Result<f64> {
            get(k, d)?.parse().map_err(|_| bad(format!("`{k}` is not a number")))
        };
        let int = |k: &str, d: Option<&str>| -> Result<u64> {
            get(k, d)?.parse().map_err(|_| bad(format!("`{k}` is not an integer")))
        };
        match kind {
            "blobs" | "gaussian-blobs" => Ok(Self::GaussianBlobs {
                classes: int("classes", Some("3"))? as usize,
                dim: int("dim", Some("8"))? as usize,
                n: int("n", Some("600"))? as usize,
                sigma: num("sigma", Some("0.5"))?,
                seed: int("seed", Some("0"))?,
            }),
            "spirals" | "two-spirals" => Ok(Self::TwoSpirals {
                n: int("n", Some("200"))? as usize,
                noise: num("noise", Some("0.1"))?,
                seed: int("seed", Some("0"))?,
            }),
            other => Err(bad(format!("unknown dataset kind `{other}`"))),
        }
    }
}

/// Builds the train and test sets described by `spec`.
pub fn make_dataset(spec: &DatasetSpec) -> Result<(Dataset, Dataset)> {
    match spec {
        DatasetSpec::GaussianBlobs {
            classes,
            dim,
            n,
            sigma,
            seed,
        } => {
            if *classes == 0 || *dim == 0 || *n == 0 || sigma.is_nan() || *sigma < 0.0 {
                return Err(Error::InvalidConfig(format!("invalid blobs spec {spec:?}")));
            }
            let mut crng = rng::stream(*seed, rng::salt::DATA_CENTERS);
            let centers: Vec<Vec<f64>> = (0..*classes)
                .map(|_| (0..*dim).map(|_| StandardNormal.sample(&mut crng)).collect())
                .collect();
            let gen = |salt: u64, name: &str| {
                let mut r = rng::stream(*seed, salt);
                let mut inputs = Vec::with_capacity(n * dim);
                let labels: Vec<usize> = (0..*n).map(|i| i % classes).collect();
                for &y in &labels {
                    for c in &centers[y] {
                        let z: f64 = StandardNormal.sample(&mut r);
                        inputs.push(c + sigma * z);
                    }
                }
                Dataset::new(inputs, labels, *dim, name)
            };
            Ok((
                gen(rng::salt::DATA_TRAIN, "blobs-train")?,
                gen(rng::salt::DATA_TEST, "blobs-test")?,
            ))
        }
        DatasetSpec::TwoSpirals { n, noise, seed } => {
            if *n < 2 || noise.is_nan() || *noise < 0.0 {
                return Err(Error::InvalidConfig(format!("invalid spirals spec {spec:?}")));
            }
            let gen = |salt: u64, name: &str| {
                let mut r = rng::stream(*seed, salt);
                let per_class = n.div_ceil(2);
                let mut inputs = Vec::with_capacity(2 * n);
                let mut labels = Vec::with_capacity(*n);
                for i in 0..*n {
                    let y = i % 2;
                    let t = 0.05 + 0.95 * (i / 2) as f64 / per_class as f64;
                    let angle = 3.0 * std::f64::consts::PI * t + y as f64 * std::f64::consts::PI;
                    let zx: f64 = StandardNormal.sample(&mut r);
                    let zy: f64 = StandardNormal.sample(&mut r);
                    inputs.push(t * angle.cos() + noise * zx);
                    inputs.push(t * angle.sin() + noise * zy);
                    labels.push(y);
                }
                Dataset::new(inputs, labels, 2, name)
            };
            Ok((
                gen(rng::salt::DATA_TRAIN, "spirals-train")?,
                gen(rng::salt::DATA_TEST, "spirals-test")?,
            ))
        }
        DatasetSpec::Csv {
            path,
            header,
            test_path,
        } => {
            let train = read_csv(path, *header)?;
            let test = match test_path {
                Some(p) => read_csv(p, *header)?,
                None => train.clone(),
            };
            Ok((train, test))
        }
    }
}

/// Reads rows of `features..., label`.
pub fn read_csv(path: &Path, header: bool) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, header, path)
}

fn parse_csv(text: &str, header: bool, path: &Path) -> Result<Dataset> {
    let err = |line: usize, msg: String| Error::Csv {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if (header && i == 0) || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 2 {
            return Err(err(lineno, "need at least one feature and a label".into()));
        }
        let d = fields.len() - 1;
        if *width.get_or_insert(d) != d {
            return Err(err(lineno, format!("expected {} features, found {d}", width.unwrap())));
        }
        for f in &fields[..d] {
            let v: f64 = f.parse().map_err(|_| err(lineno, format!("bad feature `{f}`")))?;
            if !v.is_finite() {
                return Err(err(lineno, format!("non-finite feature `{f}`")));
            }
            inputs.push(v);
        }
        let y = fields[d];
        labels.push(y.parse().map_err(|_| err(lineno, format!("bad label `{y}`")))?);
    }
    let name = path.display().to_string();
    Dataset::new(inputs, labels, width.unwrap_or(0), name)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Stop once the full training loss falls to this value.
    pub target_train_loss: Option<f64>,
    #[serde(default)]
    pub dataset: Option<DatasetSpec>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            learning_rate: 0.1,
            epochs: 100,
            seed: 0,
            target_train_loss: None,
            dataset: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub epoch_losses: Vec<f64>,
    pub final_train_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
    pub steps: usize,
    pub wall_time_secs: f64,
    pub seed: u64,
}

/// Plain SGD on the mean cross-entropy. Each epoch visits a fresh seeded
/// permutation in batches of `batch_size`; the last batch may be short.
pub fn sgd_train(
    net: &Mlp,
    train: &Dataset,
    test: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<(Mlp, TrainRecord)> {
    if cfg.batch_size == 0 || cfg.batch_size > train.len() {
        return Err(Error::InvalidConfig(format!(
            "batch size {} must be in 1..={}",
            cfg.batch_size,
            train.len()
        )));
    }
    if !(cfg.learning_rate >= 0.0 && cfg.learning_rate.is_finite()) {
        return Err(Error::InvalidConfig("learning rate must be non-negative".into()));
    }
    let start = Instant::now();
    let skeleton = select_skeleton(net.dims())?;
    let mut net = net.clone();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut shuffle_rng = rng::stream(rng::salted(cfg.seed, rng::salt::SHUFFLE), 0);
    let mut epoch_losses = Vec::new();
    let mut steps = 0;
    let mut warned = false;
    let mut loss = net.loss(train)?;
    for _ in 0..cfg.epochs {
        if cfg.target_train_loss.is_some_and(|t| loss <= t) {
            break;
        }
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(cfg.batch_size) {
            let (batch_loss, grad) = net.loss_and_gradient_on(train, batch)?;
            if !batch_loss.is_finite() {
                return Err(Error::Diverged {
                    step: steps,
                    loss: batch_loss,
                });
            }
            for (l, g) in grad.iter().enumerate() {
                for (w, gv) in net.layer_mut(l).iter_mut().zip(g) {
                    *w -= cfg.learning_rate * gv;
                }
            }
            steps += 1;
        }
        loss = net.loss(train)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { step: steps, loss });
        }
        epoch_losses.push(loss);
        if !warned {
            if let Some((l, r, c)) = skeleton
                .edges()
                .into_iter()
                .find(|&(l, r, c)| net.weight(l, r, c).abs() < SKELETON_WARN_FLOOR)
            {
                log::warn!(
                    "skeleton weight ({l}, {r}, {c}) fell to {:e} after step {steps}",
                    net.weight(l, r, c)
                );
                warned = true;
            }
        }
    }
    let record = TrainRecord {
        epoch_losses,
        final_train_loss: loss,
        train_accuracy: net.accuracy(train)?,
        test_accuracy: test.map(|t| net.accuracy(t)).transpose()?,
        steps,
        wall_time_secs: start.elapsed().as_secs_f64(),
        seed: cfg.seed,
    };
    Ok((net, record))
}

/// Random label-preserving subsample, used to shrink experiments.
pub fn subsample(data: &Dataset, k: usize, seed: u64) -> Dataset {
    let mut r = rng::stream(seed, 0);
    let mut idx: Vec<usize> = (0..data.len()).collect();
    for i in 0..k.min(idx.len()) {
        let j = r.random_range(i..idx.len());
        idx.swap(i, j);
    }
    idx.truncate(k.min(data.len()));
    data.select(&idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::InitConfig;

    fn blobs(sigma: f64) -> DatasetSpec {
        DatasetSpec::GaussianBlobs {
            classes: 3,
            dim: 4,
            n: 60,
            sigma,
            seed: 11,
        }
    }

    #[test]
    fn degenerate_blobs_are_k_points() {
        let (train, _) = make_dataset(&blobs(0.0)).unwrap();
        let mut distinct: Vec<Vec<u64>> = (0..train.len())
            .map(|i| train.input(i).iter().map(|v| v.to_bits()).collect())
            .collect();
        distinct.sort();
        distinct.dedup();
        assert_eq!(distinct.len(), 3);
        let net = Mlp::random(vec![4, 8, 3], InitConfig { radius: 0.5, seed: 2 }).unwrap();
        let cfg = TrainConfig {
            batch_size: 6,
            learning_rate: 0.2,
            epochs: 400,
            target_train_loss: Some(1e-3),
            ..Default::default()
        };
        let (_, rec) = sgd_train(&net, &train, None, &cfg).unwrap();
        assert!(rec.final_train_loss < 1e-2, "{}", rec.final_train_loss);
    }

    #[test]
    fn datasets_are_deterministic() {
        assert_eq!(make_dataset(&blobs(0.5)).unwrap(), make_dataset(&blobs(0.5)).unwrap());
        let s = DatasetSpec::TwoSpirals {
            n: 200,
            noise: 0.1,
            seed: 7,
        };
        let (train, test) = make_dataset(&s).unwrap();
        assert_eq!(make_dataset(&s).unwrap().0, train);
        assert_ne!(train, test);
        let ones = train.labels().iter().filter(|&&y| y == 1).count();
        assert_eq!((train.len() - ones, ones), (100, 100));
    }

    #[test]
    fn spec_strings() {
        let s: DatasetSpec = "blobs:classes=3,dim=8,n=600,sigma=0.5,seed=4".parse().unwrap();
        assert_eq!(
            s,
            DatasetSpec::GaussianBlobs {
                classes: 3,
                dim: 8,
                n: 600,
                sigma: 0.5,
                seed: 4
            }
        );
        let c: DatasetSpec = "csv:data.csv,header".parse().unwrap();
        assert!(matches!(c, DatasetSpec::Csv { header: true, .. }));
        assert!("blobs:n=x".parse::<DatasetSpec>().is_err());
        assert!("moons".parse::<DatasetSpec>().is_err());
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let p = Path::new("mem.csv");
        let ok = parse_csv("a,b,y\n1,2,0\n3,4,1\n", true, p).unwrap();
        assert_eq!(ok.len(), 2);
        assert_eq!(ok.input(1), &[3.0, 4.0]);
        match parse_csv("1,2,0\n3,x,1\n", false, p) {
            Err(Error::Csv { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        match parse_csv("1,2,0\n3,1\n", false, p) {
            Err(Error::Csv { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let (train, _) = make_dataset(&blobs(0.5)).unwrap();
        let net = Mlp::random(vec![4, 5, 5, 3], InitConfig::default()).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 3,
            ..Default::default()
        };
        let (out, rec) = sgd_train(&net, &train, None, &cfg).unwrap();
        assert_eq!(out, net);
        assert_eq!(rec.steps, 3 * 60usize.div_ceil(8));
    }

    #[test]
    fn full_batch_epoch_is_one_gradient_step() {
        let (train, _) = make_dataset(&blobs(0.5)).unwrap();
        let net = Mlp::random(vec![4, 5, 3], InitConfig { radius: 0.5, seed: 8 }).unwrap();
        let cfg = TrainConfig {
            batch_size: train.len(),
            learning_rate: 0.3,
            epochs: 1,
            ..Default::default()
        };
        let (out, rec) = sgd_train(&net, &train, None, &cfg).unwrap();
        assert_eq!(rec.steps, 1);
        let g = net.gradient(&train).unwrap();
        for l in 0..2 {
            for ((a, b), gv) in out.layer(l).iter().zip(net.layer(l)).zip(&g[l]) {
                assert!((a - (b - 0.3 * gv)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn training_is_deterministic() {
        let (train, test) = make_dataset(&blobs(0.5)).unwrap();
        let net = Mlp::random(vec![4, 6, 6, 3], InitConfig { radius: 0.5, seed: 1 }).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            seed: 3,
            ..Default::default()
        };
        let (a, ra) = sgd_train(&net, &train, Some(&test), &cfg).unwrap();
        let (b, rb) = sgd_train(&net, &train, Some(&test), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra.epoch_losses, rb.epoch_losses);
        assert!(ra.test_accuracy.is_some());
    }

    #[test]
    fn divergence_is_reported() {
        let (train, _) = make_dataset(&blobs(0.5)).unwrap();
        let net = Mlp::random(vec![4, 6, 6, 3], InitConfig { radius: 0.5, seed: 1 }).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e200,
            epochs: 5,
            ..Default::default()
        };
        assert!(matches!(
            sgd_train(&net, &train, None, &cfg),
            Err(Error::Diverged { .. })
        ));
    }

    #[test]
    fn batch_larger_than_data_rejected() {
        let (train, _) = make_dataset(&blobs(0.5)).unwrap();
        let net = Mlp::random(vec![4, 6, 3], InitConfig::default()).unwrap();
        let cfg = TrainConfig {
            batch_size: 61,
            ..Default::default()
        };
        assert!(sgd_train(&net, &train, None, &cfg).is_err());
    }
}
