//! Scalings that break weight-space flatness while leaving the function and
//! every basis-path value untouched.

use crate::error::{Error, Result};
use crate::net::Mlp;
use crate::psi::ScalingVector;

/// Scales a single hidden node (flat hidden index) by `alpha`. As `alpha`
/// shrinks, the Hessian block of that node's incoming weights grows like
/// `alpha^-2`, so the weight-space trace diverges.
pub fn trace_blowup(net: &Mlp, node: usize, alpha: f64) -> Result<ScalingVector> {
    if node >= net.num_hidden() {
        return Err(Error::InvalidConfig(format!(
            "hidden node {node} out of range ({} hidden nodes)",
            net.num_hidden()
        )));
    }
    ScalingVector::single(net.num_hidden(), node, alpha)
}

/// Shrinks every node of hidden layer `hidden` (1-based) so that its incoming
/// weight vector has norm `eps / sqrt(width)`. Afterwards the point with that
/// whole layer's incoming weights set to zero lies at distance `eps`.
pub fn ball_zeroing(net: &Mlp, hidden: usize, eps: f64) -> Result<ScalingVector> {
    if hidden == 0 || hidden > net.hidden_layers() {
        return Err(Error::InvalidConfig(format!("hidden layer {hidden} out of range")));
    }
    let width = net.hidden_width();
    let cols = net.dims()[hidden - 1];
    let w = net.layer(hidden - 1);
    let mut c = vec![1.0; net.num_hidden()];
    for i in 0..width {
        let norm = w[i * cols..(i + 1) * cols]
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidScaling {
                index: (hidden - 1) * width + i,
                value: f64::INFINITY,
            });
        }
        c[(hidden - 1) * width + i] = eps / ((width as f64).sqrt() * norm);
    }
    ScalingVector::new(c)
}

/// The same network with the incoming weights of hidden layer `hidden` zeroed.
pub fn zero_incoming(net: &Mlp, hidden: usize) -> Mlp {
    let mut out = net.clone();
    out.layer_mut(hidden - 1).iter_mut().for_each(|w| *w = 0.0);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::InitConfig;
    use crate::psi::apply_scaling;

    #[test]
    fn zeroed_layer_sits_on_the_sphere() {
        let net = Mlp::random(vec![3, 4, 4, 2], InitConfig { radius: 1.0, seed: 2 }).unwrap();
        for hidden in 1..=2 {
            let c = ball_zeroing(&net, hidden, 0.05).unwrap();
            let scaled = apply_scaling(&net, &c).unwrap();
            let zero = zero_incoming(&scaled, hidden);
            let dist: f64 = scaled
                .flatten()
                .iter()
                .zip(zero.flatten())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!((dist - 0.05).abs() < 1e-15);
        }
    }

    #[test]
    fn trace_scaling_shape() {
        let net = Mlp::zeros(vec![2, 3, 3, 1]).unwrap();
        let c = trace_blowup(&net, 4, 0.01).unwrap();
        assert_eq!(c.as_slice(), &[1.0, 1.0, 1.0, 1.0, 0.01, 1.0]);
        assert!(trace_blowup(&net, 6, 0.01).is_err());
    }
}
