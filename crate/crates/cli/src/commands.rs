use anyhow::{anyhow, Context, Result};
use psiflat::flatness::{self, gaussian_kl, layer_input_norm_bound};
use psiflat::paths::basis_counts;
use psiflat::verify::{random_dataset, run_all, VerifyOptions};
use psiflat::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::*;

/// A bad invocation: exit status 1.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn emit(v: &impl Serialize) -> Result<()> {
    println!("{}", serde_json::to_string(v)?);
    Ok(())
}

fn load(path: &std::path::Path) -> Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

/// Training split of `--dataset`, or of the dataset recorded in the checkpoint.
fn dataset(arg: Option<&str>, ck: &Checkpoint) -> Result<Dataset> {
    let spec = match arg {
        Some(s) => s.parse::<DatasetSpec>().map_err(|e| usage(e.to_string()))?,
        None => ck.meta.dataset.clone().ok_or_else(|| {
            usage("checkpoint records no dataset; pass --dataset")
        })?,
    };
    let (train, _) = make_dataset(&spec)?;
    if train.dim() != ck.net.input_dim() {
        return Err(usage(format!(
            "dataset has {} features but the network takes {}",
            train.dim(),
            ck.net.input_dim()
        )));
    }
    Ok(train)
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let spec: DatasetSpec = a.dataset.parse().map_err(|e: Error| usage(e.to_string()))?;
    let (train, test) = make_dataset(&spec)?;
    if a.dims.first() != Some(&train.dim()) {
        return Err(usage(format!("--dims must start with the {} input features", train.dim())));
    }
    let init = InitConfig {
        radius: a.init_radius,
        seed: a.seed,
    };
    let net = Mlp::random(a.dims.0.clone(), init)?;
    let cfg = TrainConfig {
        batch_size: a.batch,
        learning_rate: a.lr,
        epochs: a.epochs,
        seed: a.seed,
        target_train_loss: a.target_loss,
        dataset: Some(spec.clone()),
    };
    let (net, rec) = sgd_train(&net, &train, Some(&test), &cfg)?;
    let mut ck = Checkpoint::new(net, a.seed);
    ck.meta.dataset = Some(spec);
    ck.meta.init = Some(init);
    ck.meta.train = Some(cfg);
    ck.meta.record = Some(rec.clone());
    ck.save(&a.out)?;
    eprintln!(
        "trained {:?} for {} steps: train loss {:.4e}, train acc {:.3}, test acc {:.3} -> {}",
        a.dims.0,
        rec.steps,
        rec.final_train_loss,
        rec.train_accuracy,
        rec.test_accuracy.unwrap_or(f64::NAN),
        a.out.display()
    );
    emit(&json!({"command": "train", "config": a, "record": rec, "checkpoint": a.out}))
}

pub fn paths(a: &PathsArgs) -> Result<()> {
    let net = match (&a.checkpoint, &a.dims) {
        (Some(p), dims) => {
            let net = load(p)?.net;
            if let Some(d) = dims {
                if d[..] != *net.dims() {
                    return Err(usage(format!("--dims {d:?} but the checkpoint has {:?}", net.dims())));
                }
            }
            net
        }
        (None, Some(d)) => Mlp::random(d.0.clone(), InitConfig { radius: 1.0, seed: a.seed })?,
        (None, None) => return Err(usage("pass --checkpoint or --dims")),
    };
    let basis = extract_basis(&net)?;
    let (m, h, count) = basis_counts(net.dims())?;
    let skeleton: Vec<[usize; 3]> = basis.skeleton.edges().into_iter().map(|(l, r, c)| [l, r, c]).collect();
    let mut out = json!({
        "command": "paths",
        "config": a,
        "dims": net.dims(),
        "m": m,
        "H": h,
        "basis_count": count,
        "skeleton": skeleton,
        "values": basis.values,
    });
    if a.list {
        out["paths"] = serde_json::to_value(&basis.paths)?;
    }
    eprintln!("{:?}: m = {m}, H = {h}, {count} basis paths", net.dims());
    emit(&out)
}

pub fn transform(a: &TransformArgs) -> Result<()> {
    let ck = load(&a.checkpoint)?;
    let net = &ck.net;
    let (moved, c) = if a.canonical {
        let canon = canonicalize(net)?;
        (canon.net, canon.applied)
    } else {
        let c = match &a.scaling {
            Some(c) => {
                if c.len() != net.num_hidden() {
                    return Err(usage(format!(
                        "--scaling has {} factors, the network has {} hidden nodes",
                        c.len(),
                        net.num_hidden()
                    )));
                }
                ScalingVector::new(c.0.clone())?
            }
            None => {
                let [lo, hi] = a.range[..] else {
                    return Err(usage("--range takes `lo,hi`"));
                };
                ScalingVector::random(net.num_hidden(), lo, hi, a.seed)?
            }
        };
        (apply_scaling(net, &c)?, c)
    };

    let before = extract_basis(net)?.values;
    let after = extract_basis(&moved)?.values;
    let value_dev = max_rel(&before, &after);
    let data = match (&a.dataset, &ck.meta.dataset) {
        (None, None) => None,
        (arg, _) => Some(dataset(arg.as_deref(), &ck)?),
    };
    let probes = match &data {
        Some(d) => d.clone(),
        None => random_dataset(net.input_dim(), net.output_dim(), 64, a.seed),
    };
    let mut output_dev = 0.0f64;
    for i in 0..probes.len() {
        let p = net.predict(probes.input(i))?;
        let q = moved.predict(probes.input(i))?;
        let scale = p.iter().fold(1e-12f64, |m, v| m.max(v.abs()));
        for (x, y) in p.iter().zip(&q) {
            output_dev = output_dev.max((x - y).abs() / scale);
        }
    }
    let losses = match &data {
        Some(d) => Some((net.loss(d)?, moved.loss(d)?)),
        None => None,
    };
    let invariant = value_dev <= 1e-9 && output_dev <= 1e-6;

    let mut out_ck = Checkpoint {
        net: moved,
        seed: ck.seed,
        meta: ck.meta.clone(),
    };
    out_ck
        .meta
        .extra
        .insert("scaling".into(), serde_json::to_value(c.as_slice())?);
    out_ck.save(&a.out)?;
    eprintln!(
        "scaled {} hidden nodes: basis values drift {value_dev:.2e}, outputs drift {output_dev:.2e} -> {}",
        c.len(),
        a.out.display()
    );
    emit(&json!({
        "command": "transform",
        "config": a,
        "scaling": c.as_slice(),
        "max_value_rel_dev": value_dev,
        "max_output_rel_dev": output_dev,
        "loss_before": losses.map(|l| l.0),
        "loss_after": losses.map(|l| l.1),
        "invariant": invariant,
        "checkpoint": a.out,
    }))?;
    if invariant {
        Ok(())
    } else {
        Err(anyhow!("transformation changed the network function"))
    }
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| if x == y { 0.0 } else { (x - y).abs() / x.abs().max(y.abs()) })
        .fold(0.0, f64::max)
}

/// Runs `f` on the objective for `space` and its center point.
fn with_objective<T>(
    net: &Mlp,
    data: &Dataset,
    space: Space,
    f: impl FnOnce(&dyn Objective, &[f64]) -> Result<T>,
) -> Result<T> {
    match space {
        Space::Weight => f(&WeightObjective::new(net.dims(), data), &net.flatten()),
        Space::Psi => {
            let obj = PsiObjective::new(net, data)?;
            let c = obj.center();
            f(&obj, &c)
        }
    }
}

pub fn flatness(a: &FlatnessArgs) -> Result<()> {
    let measures = a.measures().map_err(usage)?;
    let cfg = FlatnessConfig {
        radius: a.eps,
        search: SearchConfig {
            n_random_samples: a.samples,
            n_ascent_restarts: a.restarts,
            ascent_steps: a.steps,
            step_size: a.step_size,
        },
        mc_samples: a.mc,
        perturbation_sigma: a.sigma_u,
        fd_step: a.fd_step,
        trace_mode: a.trace_mode().map_err(usage)?,
        hutchinson_probes: a.probes,
        seed: a.seed,
    };
    cfg.validate()?;
    let ck = load(&a.checkpoint)?;
    let data = dataset(a.dataset.as_deref(), &ck)?;
    let reports = with_objective(&ck.net, &data, a.space, |obj, center| {
        measures
            .iter()
            .map(|&m| flatness::measure(m, obj, center, &cfg).map_err(Into::into))
            .collect::<Result<Vec<_>>>()
    })?;
    eprintln!("flatness config: {}", serde_json::to_string(a)?);
    for r in &reports {
        let se = r.std_error.map(|s| format!(" ± {s:.2e}")).unwrap_or_default();
        eprintln!("{} {}: {:.6e}{se} ({})", a.space, r.measure, r.value, r.method);
    }
    emit(&reports)
}

pub fn landscape(a: &LandscapeArgs) -> Result<()> {
    let (t1_range, t2_range) = match a.range[..] {
        [lo, hi] => ((lo, hi), (lo, hi)),
        [a1, b1, a2, b2] => ((a1, b1), (a2, b2)),
        _ => return Err(usage("--range takes `lo,hi` or `lo1,hi1,lo2,hi2`")),
    };
    let resolution = match a.res[..] {
        [n] => (n, n),
        [n1, n2] => (n1, n2),
        _ => return Err(usage("--res takes `n` or `n1,n2`")),
    };
    let cfg = LandscapeConfig {
        direction_sigma: a.sigma,
        t1_range,
        t2_range,
        resolution,
        seed: a.seed,
        space: a.space,
    };
    cfg.validate()?;
    let format = a.format().map_err(usage)?;
    let ck = load(&a.checkpoint)?;
    let data = dataset(a.dataset.as_deref(), &ck)?;
    let grid = with_objective(&ck.net, &data, a.space, |obj, center| {
        let (xi, eta) = sample_directions(obj.dim(), &cfg);
        evaluate_grid(center, &xi, &eta, &cfg, obj).map_err(Into::into)
    })?;
    let (lo, hi) = grid.range().unwrap_or((f64::NAN, f64::NAN));
    eprintln!(
        "{}x{} grid in {} space: center loss {:.4e}, loss range [{lo:.4e}, {hi:.4e}], {} failed cells",
        resolution.0, resolution.1, a.space, grid.center_loss, grid.failed
    );
    match (&a.out, format) {
        (Some(path), Some(fmt)) => {
            export_grid(&grid, path, fmt)?;
            emit(&json!({
                "command": "landscape",
                "config": a,
                "out": path,
                "format": fmt,
                "resolution": [resolution.0, resolution.1],
                "center_loss": grid.center_loss,
                "range": grid.range(),
                "failed": grid.failed,
            }))
        }
        _ => emit(&grid),
    }
}

pub fn verify(a: &VerifyArgs) -> Result<()> {
    let results = run_all(&VerifyOptions {
        quick: a.quick,
        seed: a.seed,
    });
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    for r in &results {
        eprintln!(
            "{:<width$}  {}  {:>7.2}s  {}",
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.seconds,
            r.detail
        );
        emit(r)?;
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    eprintln!("{} suites, {failed} failed", results.len());
    if failed == 0 {
        Ok(())
    } else {
        Err(anyhow!("{failed} invariant suites failed"))
    }
}

pub fn bound(a: &BoundArgs) -> Result<()> {
    let ck = load(&a.checkpoint)?;
    let data = dataset(a.dataset.as_deref(), &ck)?;
    let obj = PsiObjective::new(&ck.net, &data)?;
    let values = obj.center();
    let canon = &obj.chart().canonical().net;
    let c = match a.c {
        Some(c) => c,
        None => layer_input_norm_bound(canon, &data)?,
    };
    let b = psi_bound(&PsiBoundInputs {
        c,
        c_l: a.c_l,
        eps: a.eps,
        dims: ck.net.dims().to_vec(),
        values: values.clone(),
    })?;
    let search = FlatnessConfig {
        radius: a.eps,
        mc_samples: a.mc,
        perturbation_sigma: a.sigma_posterior,
        seed: a.seed,
        ..Default::default()
    };
    let observed = eps_flatness(&obj, &values, &search, false)?.value;
    let expected = expected_flatness(&obj, &values, &search)?;
    let pb = PacBayesConfig {
        n: data.len(),
        delta: a.delta,
        sigma_prior: a.sigma_prior,
        sigma_posterior: a.sigma_posterior,
    };
    let pac = pac_bayes_bound(&pb, &values, expected.value)?;
    let abs = values.iter().map(|v| v.abs());
    let vmin = abs.clone().fold(f64::INFINITY, f64::min);
    let vmax = abs.fold(0.0, f64::max);
    eprintln!(
        "psi = {:.4e}, bound {:.4e} at eps {} (observed gain {observed:.4e}); PAC-Bayes {pac:.4e}",
        b.psi, b.bound, a.eps
    );
    let out: Value = json!({
        "command": "bound",
        "config": a,
        "psi": b.psi,
        "bound": b.bound,
        "c": c,
        "c_l": a.c_l,
        "eps": a.eps,
        "min_abs_value": vmin,
        "max_abs_value": vmax,
        "observed_gain": observed,
        "holds": observed <= b.bound,
        "pac_bayes": {
            "expected_flatness": expected.value,
            "std_error": expected.std_error,
            "kl": gaussian_kl(&values, a.sigma_posterior, a.sigma_prior),
            "n": data.len(),
            "bound": pac,
        },
    });
    emit(&out)
}
