//! Paths, skeleton weights and basis paths.
//!
//! A path picks one node per layer, from an input node to an output node, and
//! its value is the product of the `L + 1` weights it traverses. The skeleton
//! method designates one in-edge and one out-edge per hidden node so that the
//! skeleton edges form `d1` disjoint input-to-output chains. A basis path is a
//! path with at most one non-skeleton weight: the `d1` chains themselves plus
//! one path per non-skeleton weight, which gives `m - H` basis paths in total.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{flat_offsets, validate_dims, Mlp};

/// Largest number of paths that [`output_via_paths`] will enumerate.
pub const PATH_ENUMERATION_CAP: u128 = 100_000;

/// One node index per layer, `(i_0, i_1, ..., i_{L+1})`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PathVector {
    nodes: Vec<usize>,
}

impl PathVector {
    pub fn new(dims: &[usize], nodes: Vec<usize>) -> Result<Self> {
        if nodes.len() != dims.len() {
            return Err(Error::InvalidPath(format!(
                "path has {} nodes, network has {} layers",
                nodes.len(),
                dims.len()
            )));
        }
        if let Some(k) = (0..nodes.len()).find(|&k| nodes[k] >= dims[k]) {
            return Err(Error::InvalidPath(format!(
                "node {} out of range for layer {k} of width {}",
                nodes[k], dims[k]
            )));
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    /// The traversed weights as `(layer, row, col)`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.nodes
            .windows(2)
            .enumerate()
            .map(|(l, p)| (l, p[1], p[0]))
    }

    /// Positions of the traversed weights in the flattened weight vector.
    pub fn weight_indices(&self, dims: &[usize]) -> Vec<usize> {
        let offsets = flat_offsets(dims);
        self.edges()
            .map(|(l, r, c)| offsets[l] + r * dims[l] + c)
            .collect()
    }

    /// 0/1 incidence over all `m` weights.
    pub fn incidence(&self, dims: &[usize]) -> Vec<u8> {
        let m: usize = dims.windows(2).map(|p| p[0] * p[1]).sum();
        let mut row = vec![0u8; m];
        for i in self.weight_indices(dims) {
            row[i] = 1;
        }
        row
    }
}

/// Skeleton edges in chain form: chain `j` runs through input `j mod d0`,
/// hidden node `j` of every hidden layer, and output `j mod dL`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkeletonAssignment {
    dims: Vec<usize>,
}

impl SkeletonAssignment {
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn num_chains(&self) -> usize {
        self.dims[1]
    }

    fn hidden_layers(&self) -> usize {
        self.dims.len() - 2
    }

    /// Whether weight `(layer, row, col)` is a skeleton weight.
    pub fn is_skeleton(&self, layer: usize, row: usize, col: usize) -> bool {
        let l_out = self.hidden_layers();
        if layer == 0 {
            col == row % self.dims[0]
        } else if layer < l_out {
            row == col
        } else {
            row == col % self.dims[layer + 1]
        }
    }

    /// Skeleton edge of `chain` in weight layer `layer`.
    pub fn chain_edge(&self, chain: usize, layer: usize) -> (usize, usize, usize) {
        let l_out = self.hidden_layers();
        if layer == 0 {
            (0, chain, chain % self.dims[0])
        } else if layer < l_out {
            (layer, chain, chain)
        } else {
            (layer, chain % self.dims[layer + 1], chain)
        }
    }

    /// The in-skeleton edge of hidden node `node` in hidden layer `hidden`
    /// (1-based node layer).
    pub fn in_edge(&self, hidden: usize, node: usize) -> (usize, usize, usize) {
        self.chain_edge(node, hidden - 1)
    }

    pub fn out_edge(&self, hidden: usize, node: usize) -> (usize, usize, usize) {
        self.chain_edge(node, hidden)
    }

    /// Every skeleton edge, chain by chain.
    pub fn edges(&self) -> Vec<(usize, usize, usize)> {
        let layers = self.dims.len() - 1;
        (0..self.num_chains())
            .flat_map(|j| (0..layers).map(move |l| (j, l)))
            .map(|(j, l)| self.chain_edge(j, l))
            .collect()
    }

    /// The all-skeleton path of `chain`.
    pub fn chain_path(&self, chain: usize) -> PathVector {
        let last = self.dims.len() - 1;
        let nodes = (0..=last)
            .map(|k| match k {
                0 => chain % self.dims[0],
                k if k == last => chain % self.dims[last],
                _ => chain,
            })
            .collect();
        PathVector { nodes }
    }

    /// The basis path through non-skeleton weight `(layer, row, col)`: the
    /// skeleton chain of the source node up to it and the skeleton chain of
    /// the destination node after it.
    pub fn path_through(&self, layer: usize, row: usize, col: usize) -> PathVector {
        let last = self.dims.len() - 1;
        let mut nodes = vec![0; last + 1];
        nodes[layer] = col;
        nodes[layer + 1] = row;
        if layer >= 1 {
            for node in nodes.iter_mut().take(layer).skip(1) {
                *node = col;
            }
            nodes[0] = col % self.dims[0];
        }
        if layer + 1 < last {
            for node in nodes.iter_mut().take(last).skip(layer + 2) {
                *node = row;
            }
            nodes[last] = row % self.dims[last];
        }
        PathVector { nodes }
    }
}

pub fn select_skeleton(dims: &[usize]) -> Result<SkeletonAssignment> {
    validate_dims(dims)?;
    Ok(SkeletonAssignment {
        dims: dims.to_vec(),
    })
}

/// Product of the weights along `path`.
pub fn path_value(net: &Mlp, path: &PathVector) -> f64 {
    path.edges().map(|(l, r, c)| net.weight(l, r, c)).product()
}

/// Which of the two basis-path families a path belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisKind {
    /// All weights are skeleton weights; one per chain.
    Skeleton { chain: usize },
    /// Exactly one non-skeleton weight.
    NonSkeleton { layer: usize, row: usize, col: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisPath {
    pub path: PathVector,
    pub kind: BasisKind,
}

/// Basis paths of a network together with their values.
///
/// Ordering: the `d1` skeleton chains by chain index, then one path per
/// non-skeleton weight in flattened weight order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisPathSet {
    pub skeleton: SkeletonAssignment,
    pub paths: Vec<BasisPath>,
    pub values: Vec<f64>,
    /// Flattened weight index -> basis index, for non-skeleton weights.
    weight_to_basis: Vec<Option<usize>>,
}

impl BasisPathSet {
    pub fn dims(&self) -> &[usize] {
        self.skeleton.dims()
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Basis index of the path associated with weight `(layer, row, col)`:
    /// the chain path for skeleton weights, the weight's own path otherwise.
    pub fn basis_index_of_edge(&self, layer: usize, row: usize, col: usize) -> usize {
        let sk = &self.skeleton;
        if sk.is_skeleton(layer, row, col) {
            let hidden = sk.hidden_layers();
            if layer < hidden {
                row
            } else {
                col
            }
        } else {
            let dims = self.dims();
            let idx = flat_offsets(dims)[layer] + row * dims[layer] + col;
            self.weight_to_basis[idx].expect("non-skeleton weight has a basis path")
        }
    }

    /// Whether `path` is one of the basis paths.
    pub fn contains(&self, path: &PathVector) -> bool {
        let nonskeleton = path
            .edges()
            .filter(|&(l, r, c)| !self.skeleton.is_skeleton(l, r, c))
            .count();
        if nonskeleton > 1 {
            return false;
        }
        self.paths.iter().any(|b| &b.path == path)
    }
}

/// Basis paths and their values for `net`.
pub fn extract_basis(net: &Mlp) -> Result<BasisPathSet> {
    let dims = net.dims();
    let skeleton = select_skeleton(dims)?;
    for (l, r, c) in skeleton.edges() {
        if net.weight(l, r, c) == 0.0 {
            return Err(Error::ZeroSkeletonWeight {
                layer: l,
                row: r,
                col: c,
            });
        }
    }
    let m = net.num_weights();
    let mut paths: Vec<BasisPath> = (0..skeleton.num_chains())
        .map(|chain| BasisPath {
            path: skeleton.chain_path(chain),
            kind: BasisKind::Skeleton { chain },
        })
        .collect();
    let mut weight_to_basis = vec![None; m];
    let mut flat = 0;
    for l in 0..dims.len() - 1 {
        for r in 0..dims[l + 1] {
            for c in 0..dims[l] {
                if !skeleton.is_skeleton(l, r, c) {
                    weight_to_basis[flat] = Some(paths.len());
                    paths.push(BasisPath {
                        path: skeleton.path_through(l, r, c),
                        kind: BasisKind::NonSkeleton {
                            layer: l,
                            row: r,
                            col: c,
                        },
                    });
                }
                flat += 1;
            }
        }
    }
    let values = paths.iter().map(|b| path_value(net, &b.path)).collect();
    Ok(BasisPathSet {
        skeleton,
        paths,
        values,
        weight_to_basis,
    })
}

/// A path value written as a ratio of basis-path values.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    /// Basis indices in the numerator, with multiplicity (`L + 1` entries).
    pub numerator: Vec<usize>,
    /// Basis indices in the denominator, with multiplicity (`L` entries).
    pub denominator: Vec<usize>,
    pub value: f64,
}

/// Expresses the value of `path` through basis-path values only.
///
/// Each traversed weight contributes the value of the basis path that owns
/// it; each traversed hidden node divides out the value of its chain. The
/// chain prefix and suffix products telescope, leaving the path value.
pub fn reconstruction_factors(basis: &BasisPathSet, path: &PathVector) -> Result<Reconstruction> {
    let dims = basis.dims();
    if path.nodes().len() != dims.len() {
        return Err(Error::InvalidPath("path does not match network depth".into()));
    }
    let numerator: Vec<usize> = path
        .edges()
        .map(|(l, r, c)| basis.basis_index_of_edge(l, r, c))
        .collect();
    let nodes = path.nodes();
    let denominator: Vec<usize> = nodes[1..nodes.len() - 1].to_vec();
    let mut value = 1.0;
    for &k in &numerator {
        value *= basis.values[k];
    }
    for &k in &denominator {
        let v = basis.values[k];
        if v == 0.0 {
            return Err(Error::SingularReconstruction { index: k });
        }
        value /= v;
    }
    Ok(Reconstruction {
        numerator,
        denominator,
        value,
    })
}

/// Value of a (typically non-basis) path from basis-path values alone.
pub fn reconstruct_nonbasis(basis: &BasisPathSet, path: &PathVector) -> Result<f64> {
    reconstruction_factors(basis, path).map(|r| r.value)
}

/// `d0 * d1^L * dL`.
pub fn count_paths(dims: &[usize]) -> u128 {
    dims.iter().map(|&d| d as u128).product()
}

/// Iterates every path of a network in odometer order (last layer fastest).
pub struct PathIter {
    dims: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl PathIter {
    pub fn new(dims: &[usize]) -> Self {
        Self {
            dims: dims.to_vec(),
            next: Some(vec![0; dims.len()]),
        }
    }
}

impl Iterator for PathIter {
    type Item = PathVector;

    fn next(&mut self) -> Option<PathVector> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut k = succ.len();
        while k > 0 {
            k -= 1;
            succ[k] += 1;
            if succ[k] < self.dims[k] {
                self.next = Some(succ);
                break;
            }
            succ[k] = 0;
        }
        Some(PathVector { nodes: current })
    }
}

/// Network output as a sum over paths of value times activation times input.
pub fn output_via_paths(net: &Mlp, x: &[f64]) -> Result<Vec<f64>> {
    let count = count_paths(net.dims());
    if count > PATH_ENUMERATION_CAP {
        return Err(Error::PathCapExceeded {
            count,
            cap: PATH_ENUMERATION_CAP,
        });
    }
    let (_, record) = net.forward(x)?;
    let mut out = vec![0.0; net.output_dim()];
    for path in PathIter::new(net.dims()) {
        let nodes = path.nodes();
        let last = nodes.len() - 1;
        let active = (1..last).all(|k| record.is_active(k - 1, nodes[k]));
        if active {
            out[nodes[last]] += path_value(net, &path) * x[nodes[0]];
        }
    }
    Ok(out)
}

/// `m`, `H` and `m - H` for a shape.
pub fn basis_counts(dims: &[usize]) -> Result<(usize, usize, usize)> {
    validate_dims(dims)?;
    let m: usize = dims.windows(2).map(|p| p[0] * p[1]).sum();
    let h = (dims.len() - 2) * dims[1];
    Ok((m, h, m - h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::InitConfig;

    fn fig1() -> Mlp {
        Mlp::new(vec![2, 1, 2], vec![vec![1.0, 2.0], vec![1.0, 3.0]]).unwrap()
    }

    #[test]
    fn fig1_skeleton() {
        let sk = select_skeleton(&[2, 1, 2]).unwrap();
        assert_eq!(sk.edges(), vec![(0, 0, 0), (1, 0, 0)]);
    }

    #[test]
    fn square_skeleton_is_diagonal() {
        let sk = select_skeleton(&[3, 3, 3, 3]).unwrap();
        for (l, r, c) in sk.edges() {
            assert_eq!(r, c, "layer {l}");
        }
        assert_eq!(sk.edges().len(), 9);
    }

    #[test]
    fn chain_rule_on_3_2_2_1() {
        let sk = select_skeleton(&[3, 2, 2, 1]).unwrap();
        assert_eq!(sk.edges().len(), 6);
        assert_eq!(sk.chain_path(1).nodes(), &[1, 1, 1, 0]);
        for hidden in 1..=2 {
            for node in 0..2 {
                let (l, r, _) = sk.in_edge(hidden, node);
                assert_eq!((l, r), (hidden - 1, node));
                let (l, _, c) = sk.out_edge(hidden, node);
                assert_eq!((l, c), (hidden, node));
            }
        }
    }

    #[test]
    fn fig1_values() {
        let net = fig1();
        let p = PathVector::new(net.dims(), vec![1, 0, 1]).unwrap();
        assert_eq!(path_value(&net, &p), 6.0);
        let basis = extract_basis(&net).unwrap();
        let nodes: Vec<_> = basis.paths.iter().map(|b| b.path.nodes().to_vec()).collect();
        assert_eq!(nodes, vec![vec![0, 0, 0], vec![1, 0, 0], vec![0, 0, 1]]);
        assert_eq!(basis.values, vec![1.0, 2.0, 3.0]);
        assert_eq!(reconstruct_nonbasis(&basis, &p).unwrap(), 6.0);
    }

    #[test]
    fn zero_weight_path_and_ones() {
        let mut net = Mlp::constant(vec![2, 3, 3, 2], 1.0).unwrap();
        for p in PathIter::new(net.dims()) {
            assert_eq!(path_value(&net, &p), 1.0);
        }
        net.set_weight(1, 0, 2, 0.0);
        let p = PathVector::new(net.dims(), vec![0, 2, 0, 1]).unwrap();
        assert_eq!(path_value(&net, &p), 0.0);
    }

    #[test]
    fn counts_match_m_minus_h() {
        for dims in [vec![2, 2, 2], vec![3, 2, 2, 1], vec![4, 4, 4, 2], vec![8, 16, 16, 3]] {
            let net = Mlp::random(dims.clone(), InitConfig::default()).unwrap();
            let basis = extract_basis(&net).unwrap();
            assert_eq!(basis.len(), net.num_weights() - net.num_hidden(), "{dims:?}");
            for b in &basis.paths {
                let ns = b
                    .path
                    .edges()
                    .filter(|&(l, r, c)| !basis.skeleton.is_skeleton(l, r, c))
                    .count();
                assert!(ns <= 1);
            }
        }
        assert_eq!(basis_counts(&[2, 2, 2]).unwrap(), (8, 2, 6));
    }

    #[test]
    fn zero_skeleton_weight_rejected() {
        let mut net = fig1();
        net.set_weight(1, 0, 0, 0.0);
        assert!(matches!(
            extract_basis(&net),
            Err(Error::ZeroSkeletonWeight { layer: 1, row: 0, col: 0 })
        ));
    }

    #[test]
    fn singular_reconstruction() {
        let net = fig1();
        let mut basis = extract_basis(&net).unwrap();
        basis.values[0] = 0.0;
        let p = PathVector::new(net.dims(), vec![1, 0, 1]).unwrap();
        assert!(matches!(
            reconstruct_nonbasis(&basis, &p),
            Err(Error::SingularReconstruction { index: 0 })
        ));
    }

    #[test]
    fn unit_basis_values_reconstruct_to_one() {
        let net = Mlp::constant(vec![2, 3, 3, 2], 1.0).unwrap();
        let basis = extract_basis(&net).unwrap();
        for p in PathIter::new(net.dims()) {
            assert_eq!(reconstruct_nonbasis(&basis, &p).unwrap(), 1.0);
        }
    }

    #[test]
    fn path_sum_matches_forward() {
        let net = fig1();
        assert_eq!(output_via_paths(&net, &[1.0, 1.0]).unwrap(), vec![3.0, 9.0]);
        assert_eq!(output_via_paths(&net, &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn path_cap() {
        let net = Mlp::zeros(vec![10, 20, 20, 20, 10]).unwrap();
        assert!(matches!(
            output_via_paths(&net, &[0.0; 10]),
            Err(Error::PathCapExceeded { .. })
        ));
    }

    #[test]
    fn iterator_visits_every_path_once() {
        let paths: Vec<_> = PathIter::new(&[2, 3, 3, 2]).collect();
        assert_eq!(paths.len(), 36);
        let unique: std::collections::HashSet<_> = paths.iter().collect();
        assert_eq!(unique.len(), 36);
    }
}
