//! Positively scaling transformations and the weight / basis-value bijection.
//!
//! Scaling hidden node `O` by `c > 0` multiplies its incoming weights by `c`
//! and divides its outgoing weights by `c`; ReLU networks compute the same
//! function before and after. Basis-path values are invariant under every
//! such transformation, so they coordinate the quotient space ("PSI space").
//!
//! Fixing every skeleton weight outside the first layer to `±1` picks one
//! representative per equivalence class ([`canonicalize`]). On that
//! representative the map from basis values back to weights is explicit
//! ([`project_values_to_weights`]).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{Dataset, Mlp};
use crate::paths::{extract_basis, BasisKind, BasisPathSet, SkeletonAssignment};
use crate::rng;

/// Projection denominators smaller than this in magnitude are rejected.
pub const PROJECTION_GUARD: f64 = 1e-8;

/// One positive factor per hidden node, hidden-layer major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingVector(Vec<f64>);

impl ScalingVector {
    pub fn new(c: Vec<f64>) -> Result<Self> {
        if let Some((index, &value)) = c
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::InvalidScaling { index, value });
        }
        Ok(Self(c))
    }

    pub fn ones(len: usize) -> Self {
        Self(vec![1.0; len])
    }

    /// Log-uniform factors in `[lo, hi]`.
    pub fn random(len: usize, lo: f64, hi: f64, seed: u64) -> Result<Self> {
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "scaling range [{lo}, {hi}] must be positive and ordered"
            )));
        }
        let mut rng = rng::stream(seed, rng::salt::SCALING);
        let (a, b) = (lo.ln(), hi.ln());
        Self::new((0..len).map(|_| rng.random_range(a..=b).exp()).collect())
    }

    /// Scales only one node; every other factor is 1.
    pub fn single(len: usize, index: usize, factor: f64) -> Result<Self> {
        let mut c = vec![1.0; len];
        c[index] = factor;
        Self::new(c)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Factor of hidden node `node` in hidden layer `hidden` (1-based).
    pub fn get(&self, width: usize, hidden: usize, node: usize) -> f64 {
        self.0[(hidden - 1) * width + node]
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.iter().map(|c| 1.0 / c).collect())
    }

    /// Elementwise product.
    pub fn compose(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a * b).collect())
    }
}

/// Applies `phi_c`: hidden node `i` has its in-weights scaled by `c_i` and its
/// out-weights by `1 / c_i`.
pub fn apply_scaling(net: &Mlp, c: &ScalingVector) -> Result<Mlp> {
    let h = net.num_hidden();
    if c.len() != h {
        return Err(Error::InvalidConfig(format!(
            "scaling vector has {} entries, network has {h} hidden nodes",
            c.len()
        )));
    }
    let dims = net.dims().to_vec();
    let width = net.hidden_width();
    let hidden = net.hidden_layers();
    let mut out = net.clone();
    for l in 0..dims.len() - 1 {
        let cols = dims[l];
        let w = out.layer_mut(l);
        for r in 0..dims[l + 1] {
            for col in 0..cols {
                let x = &mut w[r * cols + col];
                // Destination is hidden layer l + 1; source is hidden layer l.
                if l < hidden {
                    let ci = c.as_slice()[l * width + r];
                    if ci != 1.0 {
                        *x *= ci;
                    }
                }
                if l >= 1 {
                    let co = c.as_slice()[(l - 1) * width + col];
                    if co != 1.0 {
                        *x /= co;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// A representative with every non-first-layer skeleton weight at `±1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalForm {
    pub net: Mlp,
    /// The transformation that maps the input network to `net`.
    pub applied: ScalingVector,
}

/// Rescales hidden nodes so that skeleton weights beyond the first layer keep
/// their sign and have magnitude one.
///
/// Node `j` of hidden layer `k` gets the product of the magnitudes of its
/// chain's skeleton weights downstream of it, which turns each of those
/// weights into its sign while leaving the first-layer skeleton weight to
/// absorb the chain's scale.
pub fn canonicalize(net: &Mlp) -> Result<CanonicalForm> {
    let sk = crate::paths::select_skeleton(net.dims())?;
    check_skeleton(net, &sk)?;
    let width = net.hidden_width();
    let hidden = net.hidden_layers();
    let mut c = vec![1.0; net.num_hidden()];
    for j in 0..width {
        let mut acc = 1.0;
        for k in (1..=hidden).rev() {
            let (l, r, col) = sk.chain_edge(j, k);
            acc *= net.weight(l, r, col).abs();
            c[(k - 1) * width + j] = acc;
        }
    }
    let applied = ScalingVector::new(c)?;
    let mut canon = apply_scaling(net, &applied)?;
    // Pin the fixed weights exactly; rounding may leave them a few ulps off.
    for j in 0..width {
        for l in 1..=hidden {
            let (l, r, col) = sk.chain_edge(j, l);
            let s = net.weight(l, r, col).signum();
            canon.set_weight(l, r, col, s);
        }
    }
    Ok(CanonicalForm {
        net: canon,
        applied,
    })
}

fn check_skeleton(net: &Mlp, sk: &SkeletonAssignment) -> Result<()> {
    for (l, r, c) in sk.edges() {
        let w = net.weight(l, r, c);
        if w == 0.0 || !w.is_finite() {
            return Err(Error::ZeroSkeletonWeight {
                layer: l,
                row: r,
                col: c,
            });
        }
    }
    Ok(())
}

/// Whether the non-first-layer skeleton weights are all exactly `±1`.
pub fn is_canonical(net: &Mlp) -> bool {
    let Ok(sk) = crate::paths::select_skeleton(net.dims()) else {
        return false;
    };
    sk.edges()
        .into_iter()
        .filter(|&(l, _, _)| l > 0)
        .all(|(l, r, c)| net.weight(l, r, c).abs() == 1.0)
}

/// How one basis coordinate maps onto a weight of the canonical network.
#[derive(Debug, Clone, Copy)]
enum Slot {
    /// Chain value; owns the first-layer skeleton weight at `flat`.
    Chain { flat: usize, sign: f64 },
    /// First-layer non-skeleton weight.
    Input { flat: usize, sign: f64 },
    /// Deeper non-skeleton weight whose path enters through chain `chain`.
    Inner { flat: usize, sign: f64, chain: usize },
}

fn slots(net: &Mlp, basis: &BasisPathSet) -> Vec<Slot> {
    let sk = &basis.skeleton;
    let sign_of = |edges: &mut dyn Iterator<Item = (usize, usize, usize)>| -> f64 {
        edges
            .filter(|&(l, _, _)| l > 0)
            .map(|(l, r, c)| net.weight(l, r, c).signum())
            .product()
    };
    basis
        .paths
        .iter()
        .map(|b| match b.kind {
            BasisKind::Skeleton { chain } => {
                let (l, r, c) = sk.chain_edge(chain, 0);
                let sign = sign_of(&mut b.path.edges());
                Slot::Chain {
                    flat: net.flat_index(l, r, c),
                    sign,
                }
            }
            BasisKind::NonSkeleton { layer, row, col } => {
                let flat = net.flat_index(layer, row, col);
                let sign = sign_of(&mut b.path.edges().filter(|&e| e != (layer, row, col)));
                if layer == 0 {
                    Slot::Input { flat, sign }
                } else {
                    Slot::Inner {
                        flat,
                        sign,
                        chain: col,
                    }
                }
            }
        })
        .collect()
}

/// Weights whose basis values are `basis.values + eps`.
///
/// Chain values rescale their first-layer skeleton weight; first-layer
/// non-skeleton values move their own weight; deeper non-skeleton weights
/// move with their value and are divided by the relative change of the
/// chain weight feeding them.
pub fn project_values_to_weights(
    canon: &CanonicalForm,
    basis: &BasisPathSet,
    eps: &[f64],
) -> Result<Mlp> {
    project_net(&canon.net, basis, &slots(&canon.net, basis), eps)
}

fn project_net(net: &Mlp, basis: &BasisPathSet, slots: &[Slot], eps: &[f64]) -> Result<Mlp> {
    if eps.len() != basis.len() {
        return Err(Error::DimensionMismatch {
            layer: 0,
            expected: basis.len(),
            got: eps.len(),
        });
    }
    if !is_canonical(net) {
        return Err(Error::SingularProjection(
            "projection requires a canonical network".into(),
        ));
    }
    let mut flat = net.flatten();
    let mut ratio = vec![1.0; basis.skeleton.num_chains()];
    let mut chain_weight = vec![0.0; basis.skeleton.num_chains()];
    for (k, slot) in slots.iter().enumerate() {
        if let Slot::Chain { flat: f, .. } = *slot {
            let v = basis.values[k];
            if v == 0.0 {
                return Err(Error::SingularProjection(format!(
                    "chain path {k} has zero value"
                )));
            }
            let r = (v + eps[k]) / v;
            if r.abs() < PROJECTION_GUARD {
                return Err(Error::SingularProjection(format!(
                    "chain path {k} is driven to zero"
                )));
            }
            chain_weight[k] = flat[f];
            ratio[k] = r;
            flat[f] *= r;
        }
    }
    for (k, slot) in slots.iter().enumerate() {
        match *slot {
            Slot::Chain { .. } => {}
            Slot::Input { flat: f, sign } => {
                flat[f] += eps[k] * sign;
            }
            Slot::Inner {
                flat: f,
                sign,
                chain,
            } => {
                let w = flat[f] + eps[k] * sign / chain_weight[chain];
                flat[f] = w / ratio[chain];
            }
        }
    }
    if let Some(i) = flat.iter().position(|w| !w.is_finite()) {
        return Err(Error::SingularProjection(format!(
            "weight {i} became non-finite"
        )));
    }
    Mlp::from_flat(net.dims(), &flat)
}

/// Loss as a function of basis-path values around a fixed network.
///
/// Built once from any representative; queries at arbitrary value vectors
/// project onto weights of the canonical representative and run the network.
#[derive(Debug, Clone)]
pub struct PsiChart {
    canon: CanonicalForm,
    basis: BasisPathSet,
    slots: Vec<Slot>,
}

impl PsiChart {
    pub fn new(net: &Mlp) -> Result<Self> {
        let canon = canonicalize(net)?;
        let basis = extract_basis(&canon.net)?;
        let slots = slots(&canon.net, &basis);
        Ok(Self {
            canon,
            basis,
            slots,
        })
    }

    pub fn canonical(&self) -> &CanonicalForm {
        &self.canon
    }

    pub fn basis(&self) -> &BasisPathSet {
        &self.basis
    }

    /// Basis values of the chart's center.
    pub fn values(&self) -> &[f64] {
        &self.basis.values
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Canonical weights realizing basis values `v`.
    pub fn weights_at(&self, v: &[f64]) -> Result<Mlp> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                layer: 0,
                expected: self.dim(),
                got: v.len(),
            });
        }
        let eps: Vec<f64> = v.iter().zip(self.values()).map(|(a, b)| a - b).collect();
        project_net(&self.canon.net, &self.basis, &self.slots, &eps)
    }

    pub fn loss_at(&self, v: &[f64], data: &Dataset) -> Result<f64> {
        self.weights_at(v)?.loss(data)
    }

    /// Loss and its gradient with respect to the basis values at `v`.
    pub fn loss_and_gradient_at(&self, v: &[f64], data: &Dataset) -> Result<(f64, Vec<f64>)> {
        let net = self.weights_at(v)?;
        let (loss, grad) = net.loss_and_gradient(data)?;
        let gw: Vec<f64> = grad.into_iter().flatten().collect();
        let w = net.flatten();
        Ok((loss, self.pullback(v, &w, &gw)))
    }

    /// Chain rule through the projection: `J^T g` where `J = dw/dv`.
    fn pullback(&self, v: &[f64], w: &[f64], gw: &[f64]) -> Vec<f64> {
        let mut gv = vec![0.0; self.dim()];
        let chain_flat: Vec<usize> = self
            .slots
            .iter()
            .filter_map(|s| match *s {
                Slot::Chain { flat, .. } => Some(flat),
                _ => None,
            })
            .collect();
        for (k, slot) in self.slots.iter().enumerate() {
            match *slot {
                Slot::Chain { flat, sign } => gv[k] += gw[flat] * sign,
                Slot::Input { flat, sign } => gv[k] += gw[flat] * sign,
                Slot::Inner { flat, sign, chain } => {
                    gv[k] += gw[flat] * sign / w[chain_flat[chain]];
                    gv[chain] -= gw[flat] * w[flat] / v[chain];
                }
            }
        }
        gv
    }
}
