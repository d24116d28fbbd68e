//! Invariant suites run by `psiflat verify`.

use std::time::Instant;

use rand::Rng;
use serde::Serialize;

use crate::flatness::{self, FlatnessConfig, SearchConfig};
use crate::landscape::{self, LandscapeConfig};
use crate::net::{Dataset, InitConfig, Mlp};
use crate::objective::{Objective, PsiObjective, Space};
use crate::oracle;
use crate::paths::{self, extract_basis};
use crate::psi::{self, ScalingVector};
use crate::rng;

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    /// Fewer trials per suite.
    pub quick: bool,
    pub seed: u64,
}

type Suite = fn(&VerifyOptions) -> Result<String, String>;

const SUITES: &[(&str, Suite)] = &[
    ("gradient-check", gradient_check),
    ("basis-count", basis_count),
    ("basis-independence", basis_independence),
    ("path-sum-output", path_sum_output),
    ("nonbasis-reconstruction", nonbasis_reconstruction),
    ("psi-invariance", psi_invariance),
    ("scaling-group", scaling_group),
    ("bijection-round-trip", bijection_round_trip),
    ("psi-flatness-invariance", psi_flatness_invariance),
    ("landscape-invariance", landscape_invariance),
];

pub fn suite_names() -> Vec<&'static str> {
    SUITES.iter().map(|(n, _)| *n).collect()
}

pub fn run_all(opts: &VerifyOptions) -> Vec<SuiteResult> {
    SUITES
        .iter()
        .map(|(name, suite)| {
            let start = Instant::now();
            let outcome = suite(opts);
            let seconds = start.elapsed().as_secs_f64();
            let (passed, detail) = match outcome {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            SuiteResult {
                name,
                passed,
                detail,
                seconds,
            }
        })
        .collect()
}

fn trials(opts: &VerifyOptions, full: usize) -> usize {
    if opts.quick {
        (full / 10).max(3)
    } else {
        full
    }
}

/// Small random classification set for invariant checks.
pub fn random_dataset(dim: usize, classes: usize, n: usize, seed: u64) -> Dataset {
    let mut r = rng::stream(seed, 77);
    let inputs = (0..n * dim).map(|_| r.random_range(-1.0..1.0)).collect();
    let labels = (0..n).map(|i| i % classes).collect();
    Dataset::new(inputs, labels, dim, "random").expect("valid by construction")
}

/// Random network whose weights avoid `|w| < 0.05`.
pub fn random_net(dims: &[usize], seed: u64) -> Mlp {
    let mut net = Mlp::random(dims.to_vec(), InitConfig { radius: 1.0, seed }).expect("valid dims");
    let mut r = rng::stream(seed, 99);
    for l in 0..net.layers().len() {
        for w in net.layer_mut(l) {
            while w.abs() < 0.05 {
                *w = r.random_range(-1.0..1.0);
            }
        }
    }
    net
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| if x == y { 0.0 } else { rel(*x, *y) }).fold(0.0, f64::max)
}

fn check(ok: bool, detail: String) -> Result<String, String> {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gradient_check(opts: &VerifyOptions) -> Result<String, String> {
    let mut worst = 0.0f64;
    let shapes = [vec![2, 2, 2], vec![3, 4, 4, 2], vec![2, 3, 3, 3, 3]];
    for t in 0..trials(opts, 100) {
        let seed = opts.seed + t as u64;
        let dims = &shapes[t % shapes.len()];
        let net = random_net(dims, seed);
        let data = random_dataset(dims[0], *dims.last().unwrap(), 5, seed);
        let g: Vec<f64> = net.gradient(&data).map_err(|e| e.to_string())?.concat();
        let mut flat = net.flatten();
        let h = 1e-4;
        for k in 0..flat.len() {
            let w = flat[k];
            flat[k] = w + h;
            let up = Mlp::from_flat(dims, &flat).unwrap().loss(&data).unwrap();
            flat[k] = w - h;
            let down = Mlp::from_flat(dims, &flat).unwrap().loss(&data).unwrap();
            flat[k] = w;
            worst = worst.max(((up - down) / (2.0 * h) - g[k]).abs());
        }
    }
    check(worst <= 1e-5, format!("max |analytic - central difference| = {worst:.2e}"))
}

fn basis_count(_: &VerifyOptions) -> Result<String, String> {
    let shapes = [
        vec![2, 1, 2],
        vec![2, 2, 2],
        vec![3, 2, 2, 1],
        vec![4, 4, 4, 2],
        vec![8, 16, 16, 3],
        vec![5, 3, 3, 3, 7],
    ];
    for dims in &shapes {
        let net = random_net(dims, 1);
        let basis = extract_basis(&net).map_err(|e| e.to_string())?;
        let expected = net.num_weights() - net.num_hidden();
        if basis.len() != expected {
            return Err(format!("{dims:?}: {} basis paths, expected {expected}", basis.len()));
        }
    }
    Ok(format!("{} shapes give m - H basis paths", shapes.len()))
}

/// All valid shapes with at most `cap` paths and widths up to 4.
pub fn small_shapes(cap: u128) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for hidden in 1..=3usize {
        for d0 in 1..=4 {
            for d1 in 1..=4 {
                for dl in 1..=4 {
                    let mut dims = vec![d0];
                    dims.extend(std::iter::repeat(d1).take(hidden));
                    dims.push(dl);
                    if paths::count_paths(&dims) <= cap {
                        out.push(dims);
                    }
                }
            }
        }
    }
    out
}

fn basis_independence(opts: &VerifyOptions) -> Result<String, String> {
    let shapes = small_shapes(if opts.quick { 16 } else { 40 });
    for dims in &shapes {
        let net = random_net(dims, 2);
        let basis = extract_basis(&net).map_err(|e| e.to_string())?;
        let rows: Vec<Vec<u8>> = basis.paths.iter().map(|b| b.path.incidence(dims)).collect();
        let rank = oracle::rational_rank(&rows);
        if rank != basis.len() {
            return Err(format!("{dims:?}: rank {rank} < {}", basis.len()));
        }
        for p in oracle::enumerate_all_paths(dims).map_err(|e| e.to_string())? {
            if basis.contains(&p) {
                continue;
            }
            let mut ext = rows.clone();
            ext.push(p.incidence(dims));
            if oracle::rational_rank(&ext) != rank {
                return Err(format!("{dims:?}: path {:?} is independent", p.nodes()));
            }
        }
    }
    Ok(format!("{} shapes full rank and maximal", shapes.len()))
}

fn path_sum_output(opts: &VerifyOptions) -> Result<String, String> {
    let mut worst = 0.0f64;
    for t in 0..trials(opts, 100) {
        let dims = if t % 2 == 0 { vec![2, 2, 2] } else { vec![3, 2, 2, 1] };
        let net = random_net(&dims, opts.seed + t as u64);
        let mut r = rng::stream(opts.seed + t as u64, 5);
        let x: Vec<f64> = (0..dims[0]).map(|_| r.random_range(-2.0..2.0)).collect();
        let a = net.predict(&x).map_err(|e| e.to_string())?;
        let b = paths::output_via_paths(&net, &x).map_err(|e| e.to_string())?;
        let scale = a.iter().fold(1e-12f64, |m, v| m.max(v.abs()));
        for (p, q) in a.iter().zip(&b) {
            worst = worst.max((p - q).abs() / scale);
        }
    }
    check(worst <= 1e-9, format!("max relative deviation {worst:.2e}"))
}

fn nonbasis_reconstruction(opts: &VerifyOptions) -> Result<String, String> {
    let dims = [3, 3, 3, 2];
    let l = dims.len() - 2;
    let mut worst = 0.0f64;
    let mut checked = 0;
    let all = oracle::enumerate_all_paths(&dims).map_err(|e| e.to_string())?;
    for t in 0..trials(opts, 20) {
        let net = random_net(&dims, opts.seed + 100 + t as u64);
        let basis = extract_basis(&net).map_err(|e| e.to_string())?;
        for p in all.iter().filter(|p| !basis.contains(p)) {
            let r = paths::reconstruction_factors(&basis, p).map_err(|e| e.to_string())?;
            if r.numerator.len() != l + 1 || r.denominator.len() != l {
                return Err(format!("exponent counts {} / {}", r.numerator.len(), r.denominator.len()));
            }
            worst = worst.max(rel(r.value, paths::path_value(&net, p)));
            checked += 1;
        }
    }
    check(
        worst <= 1e-9,
        format!("{checked} non-basis paths, max relative error {worst:.2e}, exponents {}/{l}", l + 1),
    )
}

fn psi_invariance(opts: &VerifyOptions) -> Result<String, String> {
    let (mut wv, mut wf) = (0.0f64, 0.0f64);
    for t in 0..trials(opts, 100) {
        let seed = opts.seed + 200 + t as u64;
        let dims = [3, 4, 4, 2];
        let net = random_net(&dims, seed);
        let c = ScalingVector::random(net.num_hidden(), 0.1, 10.0, seed).unwrap();
        let scaled = psi::apply_scaling(&net, &c).map_err(|e| e.to_string())?;
        let a = extract_basis(&net).unwrap().values;
        let b = extract_basis(&scaled).unwrap().values;
        wv = wv.max(max_rel(&a, &b));
        let mut r = rng::stream(seed, 3);
        let x: Vec<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
        let (p, q) = (net.predict(&x).unwrap(), scaled.predict(&x).unwrap());
        let n = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        let d = p.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        wf = wf.max(d / (1.0 + n));
    }
    check(
        wv <= 1e-9 && wf <= 1e-6,
        format!("basis values {wv:.2e} relative, outputs {wf:.2e}"),
    )
}

fn scaling_group(opts: &VerifyOptions) -> Result<String, String> {
    let mut worst = 0.0f64;
    for t in 0..trials(opts, 50) {
        let seed = opts.seed + 300 + t as u64;
        let net = random_net(&[2, 3, 3, 2], seed);
        let c1 = ScalingVector::random(6, 0.1, 10.0, seed).unwrap();
        let c2 = ScalingVector::random(6, 0.1, 10.0, seed + 1).unwrap();
        let twice = psi::apply_scaling(&psi::apply_scaling(&net, &c1).unwrap(), &c2).unwrap();
        let once = psi::apply_scaling(&net, &c1.compose(&c2)).unwrap();
        worst = worst.max(max_rel(&twice.flatten(), &once.flatten()));
        let back = psi::apply_scaling(&psi::apply_scaling(&net, &c1).unwrap(), &c1.inverse()).unwrap();
        worst = worst.max(max_rel(&back.flatten(), &net.flatten()));
    }
    check(worst <= 1e-12, format!("composition / inversion deviation {worst:.2e}"))
}

fn bijection_round_trip(opts: &VerifyOptions) -> Result<String, String> {
    let mut worst = 0.0f64;
    for t in 0..trials(opts, 100) {
        let seed = opts.seed + 400 + t as u64;
        let dims = if t % 2 == 0 { vec![2, 2, 2] } else { vec![3, 3, 3, 2] };
        let net = random_net(&dims, seed);
        let canon = psi::canonicalize(&net).map_err(|e| e.to_string())?;
        let basis = extract_basis(&canon.net).unwrap();
        let zero = psi::project_values_to_weights(&canon, &basis, &vec![0.0; basis.len()])
            .map_err(|e| e.to_string())?;
        if zero != canon.net {
            return Err("zero perturbation changed the weights".into());
        }
        let mut r = rng::stream(seed, 4);
        let mut eps: Vec<f64> = (0..basis.len()).map(|_| r.random_range(-1.0..1.0)).collect();
        let n = eps.iter().map(|v| v * v).sum::<f64>().sqrt();
        let radius = 0.01 * r.random::<f64>();
        eps.iter_mut().for_each(|e| *e *= radius / n);
        let moved = psi::project_values_to_weights(&canon, &basis, &eps).map_err(|e| e.to_string())?;
        let got = extract_basis(&moved).unwrap().values;
        let want: Vec<f64> = basis.values.iter().zip(&eps).map(|(v, e)| v + e).collect();
        worst = worst.max(max_rel(&got, &want));
    }
    check(worst <= 1e-9, format!("re-extracted values within {worst:.2e} relative"))
}

fn psi_flatness_invariance(opts: &VerifyOptions) -> Result<String, String> {
    let dims = [2, 3, 3, 2];
    let data = random_dataset(2, 2, 20, opts.seed);
    let cfg = FlatnessConfig {
        radius: 0.01,
        search: SearchConfig {
            n_random_samples: 16,
            n_ascent_restarts: 2,
            ascent_steps: 10,
            step_size: 0.25,
        },
        mc_samples: 32,
        perturbation_sigma: 0.005,
        ..Default::default()
    };
    let mut worst = 0.0f64;
    for t in 0..trials(opts, 20) {
        let seed = opts.seed + 500 + t as u64;
        let net = random_net(&dims, seed);
        let c = ScalingVector::random(net.num_hidden(), 0.1, 10.0, seed).unwrap();
        let scaled = psi::apply_scaling(&net, &c).unwrap();
        let a = PsiObjective::new(&net, &data).map_err(|e| e.to_string())?;
        let b = PsiObjective::new(&scaled, &data).map_err(|e| e.to_string())?;
        for kind in [flatness::Measure::Eps, flatness::Measure::Trace, flatness::Measure::Expected] {
            let ra = flatness::measure(kind, &a, &a.center(), &cfg).map_err(|e| e.to_string())?;
            let rb = flatness::measure(kind, &b, &b.center(), &cfg).map_err(|e| e.to_string())?;
            let scale = ra.value.abs().max(rb.value.abs()).max(1e-12);
            worst = worst.max((ra.value - rb.value).abs() / scale);
        }
    }
    check(worst <= 1e-6, format!("PSI measures agree within {worst:.2e} relative"))
}

fn landscape_invariance(opts: &VerifyOptions) -> Result<String, String> {
    let dims = [2, 3, 3, 2];
    let data = random_dataset(2, 2, 20, opts.seed);
    let net = random_net(&dims, opts.seed + 600);
    let c = ScalingVector::random(net.num_hidden(), 0.1, 10.0, opts.seed).unwrap();
    let scaled = psi::apply_scaling(&net, &c).unwrap();
    let cfg = LandscapeConfig {
        resolution: if opts.quick { (11, 11) } else { (31, 31) },
        seed: opts.seed,
        space: Space::Psi,
        ..Default::default()
    };
    let a = PsiObjective::new(&net, &data).map_err(|e| e.to_string())?;
    let b = PsiObjective::new(&scaled, &data).map_err(|e| e.to_string())?;
    let (xi, eta) = landscape::sample_directions(a.dim(), &cfg);
    let ga = landscape::evaluate_grid(&a.center(), &xi, &eta, &cfg, &a).map_err(|e| e.to_string())?;
    let gb = landscape::evaluate_grid(&b.center(), &xi, &eta, &cfg, &b).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for (x, y) in ga.loss.iter().flatten().zip(gb.loss.iter().flatten()) {
        match (x, y) {
            (Some(x), Some(y)) => worst = worst.max((x - y).abs()),
            (None, None) => {}
            _ => return Err("cells failed on one representative only".into()),
        }
    }
    check(worst <= 1e-6, format!("per-cell deviation {worst:.2e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suites_pass() {
        let results = run_all(&VerifyOptions { quick: true, seed: 0 });
        for r in &results {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
        assert_eq!(results.len(), suite_names().len());
    }
}
