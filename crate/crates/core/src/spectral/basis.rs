//! Neumann-Laplacian eigenbasis on a box and the cosine-grid transforms that go with it.
//!
//! Axis eigenfunctions are `1/sqrt(L)` for index 0 and `sqrt(2/L) cos(a pi x / L)` for
//! `a >= 1`, with eigenvalue `(a pi / L)^2`. Tensor products of these are flattened into a
//! single mode index ordered by eigenvalue, ties broken lexicographically on the
//! multi-index, so flattened index 0 is always the mean mode.
//!
//! Grid values live on the cell-midpoint lattice `x_i = (i + 1/2) L / G` with
//! `G = 2 (n + 1)` nodes per axis, where `n` is the largest retained axis index. The
//! midpoint rule integrates `cos(k pi x / L)` exactly for `0 < k < 2G`, which covers
//! products of four retained modes (`k <= 4n`). That is what `<u^3, e_j>` needs.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rustdct::{DctPlanner, TransformType2And3};

use crate::error::{Error, Result};

static NEXT_BASIS_ID: AtomicU64 = AtomicU64::new(1);

/// Relative width inside which two eigenvalues count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

/// Eigenstructure of the Neumann Laplacian on `[0, L_1] x ... x [0, L_d]`.
pub struct EigenBasis {
    id: u64,
    dim: usize,
    modes_per_axis: usize,
    lengths: Vec<f64>,
    multi_indices: Vec<[usize; 3]>,
    eigenvalues: Vec<f64>,
    grid: TensorGrid,
}

impl fmt::Debug for EigenBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EigenBasis")
            .field("id", &self.id)
            .field("dim", &self.dim)
            .field("modes_per_axis", &self.modes_per_axis)
            .field("lengths", &self.lengths)
            .field("modes", &self.eigenvalues.len())
            .field("grid_per_axis", &self.grid.nodes)
            .finish()
    }
}

impl EigenBasis {
    /// Build the basis retaining axis indices `0..=modes_per_axis` on every axis.
    pub fn new(dim: usize, modes_per_axis: usize, lengths: &[f64]) -> Result<Arc<Self>> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidDimension(dim));
        }
        if modes_per_axis < 1 {
            return Err(Error::InvalidDomain("modes_per_axis must be at least 1".into()));
        }
        if lengths.len() != dim {
            return Err(Error::InvalidDomain(format!(
                "expected {dim} axis lengths, got {}",
                lengths.len()
            )));
        }
        if let Some(bad) = lengths.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::InvalidDomain(format!("axis length {bad} is not positive")));
        }

        let per_axis = modes_per_axis + 1;
        let total = per_axis.pow(dim as u32);
        let mut modes: Vec<([usize; 3], f64)> = (0..total)
            .map(|flat| {
                let mut idx = [0usize; 3];
                let mut rem = flat;
                for ax in (0..dim).rev() {
                    idx[ax] = rem % per_axis;
                    rem /= per_axis;
                }
                let lambda = (0..dim).map(|ax| axis_eigenvalue(idx[ax], lengths[ax])).sum();
                (idx, lambda)
            })
            .collect();
        modes.sort_by(|(ia, la), (ib, lb)| {
            let scale = la.abs().max(lb.abs()).max(1.0);
            if (la - lb).abs() <= TIE_TOLERANCE * scale {
                ia.cmp(ib)
            } else {
                la.total_cmp(lb)
            }
        });

        let grid = TensorGrid::new(dim, 2 * per_axis);
        Ok(Arc::new(EigenBasis {
            id: NEXT_BASIS_ID.fetch_add(1, Ordering::Relaxed),
            dim,
            modes_per_axis,
            lengths: lengths.to_vec(),
            multi_indices: modes.iter().map(|(i, _)| *i).collect(),
            eigenvalues: modes.iter().map(|(_, l)| *l).collect(),
            grid,
        }))
    }

    /// Unit box `[0,1]^d`.
    pub fn unit(dim: usize, modes_per_axis: usize) -> Result<Arc<Self>> {
        Self::new(dim, modes_per_axis, &vec![1.0; dim])
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn modes_per_axis(&self) -> usize {
        self.modes_per_axis
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    /// Number of retained modes, including the mean mode.
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Largest flattened mode index.
    pub fn max_index(&self) -> usize {
        self.eigenvalues.len() - 1
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvalue(&self, j: usize) -> f64 {
        self.eigenvalues[j]
    }

    pub fn multi_index(&self, j: usize) -> &[usize] {
        &self.multi_indices[j][..self.dim]
    }

    /// Flattened index of a multi-index, if retained.
    pub fn index_of(&self, multi: &[usize]) -> Option<usize> {
        if multi.len() != self.dim {
            return None;
        }
        self.multi_indices
            .iter()
            .position(|m| &m[..self.dim] == multi)
    }

    /// `|D|`.
    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    pub fn grid_per_axis(&self) -> usize {
        self.grid.nodes
    }

    /// Total number of quadrature nodes.
    pub fn grid_len(&self) -> usize {
        self.grid.len()
    }

    /// Uniform quadrature weight of every node.
    pub fn quadrature_weight(&self) -> f64 {
        self.volume() / self.grid_len() as f64
    }

    /// Node coordinates along one axis.
    pub fn axis_nodes(&self, axis: usize) -> Vec<f64> {
        let g = self.grid.nodes;
        let l = self.lengths[axis];
        (0..g).map(|i| (i as f64 + 0.5) * l / g as f64).collect()
    }

    /// Coordinates of every grid node in row-major order (axis 0 slowest).
    pub fn grid_points(&self) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = (0..self.dim).map(|ax| self.axis_nodes(ax)).collect();
        let g = self.grid.nodes;
        (0..self.grid_len())
            .map(|flat| {
                let mut rem = flat;
                let mut point = vec![0.0; self.dim];
                for ax in (0..self.dim).rev() {
                    point[ax] = axes[ax][rem % g];
                    rem /= g;
                }
                point
            })
            .collect()
    }

    /// Scratch buffers sized for this basis' transforms.
    pub fn workspace(&self) -> GridWorkspace {
        self.grid.workspace()
    }

    /// Evaluate the expansion `sum_j c_j e_j` on the quadrature grid.
    pub fn synthesize(&self, coeffs: &[f64], out: &mut [f64], ws: &mut GridWorkspace) {
        self.grid.synthesize(self, coeffs, out, ws);
    }

    /// Project grid values onto the retained modes by quadrature. `values` is overwritten.
    pub fn analyze(&self, values: &mut [f64], coeffs: &mut [f64], ws: &mut GridWorkspace) {
        self.grid.analyze(self, values, coeffs, ws);
    }

    /// Evaluate an expansion on a finer midpoint grid with `nodes_per_axis` nodes per axis.
    pub fn synthesize_on(&self, coeffs: &[f64], nodes_per_axis: usize) -> Vec<f64> {
        let grid = TensorGrid::new(self.dim, nodes_per_axis.max(self.modes_per_axis + 1));
        let mut ws = grid.workspace();
        let mut out = vec![0.0; grid.len()];
        grid.synthesize(self, coeffs, &mut out, &mut ws);
        out
    }

    /// Pointwise evaluation of `sum_j c_j e_j(x)` by direct summation.
    pub fn eval_point(&self, coeffs: &[f64], x: &[f64]) -> f64 {
        coeffs
            .iter()
            .zip(&self.multi_indices)
            .map(|(c, idx)| {
                let mut v = *c;
                for ax in 0..self.dim {
                    v *= axis_function(idx[ax], self.lengths[ax], x[ax]);
                }
                v
            })
            .sum()
    }
}

fn axis_eigenvalue(a: usize, length: f64) -> f64 {
    let w = a as f64 * std::f64::consts::PI / length;
    w * w
}

fn axis_function(a: usize, length: f64, x: f64) -> f64 {
    if a == 0 {
        length.sqrt().recip()
    } else {
        (2.0 / length).sqrt() * (a as f64 * std::f64::consts::PI * x / length).cos()
    }
}

/// Reusable buffers for the tensor transforms.
pub struct GridWorkspace {
    line: Vec<f64>,
    scratch: Vec<f64>,
}

/// Midpoint lattice with `nodes` points per axis and the matching DCT-II/III plan.
struct TensorGrid {
    dim: usize,
    nodes: usize,
    plan: Arc<dyn TransformType2And3<f64>>,
}

impl TensorGrid {
    fn new(dim: usize, nodes: usize) -> Self {
        let plan = DctPlanner::new().plan_dct2(nodes);
        TensorGrid { dim, nodes, plan }
    }

    fn len(&self) -> usize {
        self.nodes.pow(self.dim as u32)
    }

    fn workspace(&self) -> GridWorkspace {
        GridWorkspace {
            line: vec![0.0; self.nodes],
            scratch: vec![0.0; self.plan.get_scratch_len()],
        }
    }

    fn position(&self, idx: &[usize; 3]) -> usize {
        (0..self.dim).fold(0, |acc, ax| acc * self.nodes + idx[ax])
    }

    fn synthesize(&self, basis: &EigenBasis, coeffs: &[f64], out: &mut [f64], ws: &mut GridWorkspace) {
        assert_eq!(out.len(), self.len(), "grid buffer has the wrong size");
        out.fill(0.0);
        for (c, idx) in coeffs.iter().zip(&basis.multi_indices) {
            let mut scale = *c;
            for ax in 0..self.dim {
                let l = basis.lengths[ax];
                // DCT-III halves the zeroth input.
                scale *= if idx[ax] == 0 { 2.0 / l.sqrt() } else { (2.0 / l).sqrt() };
            }
            out[self.position(idx)] = scale;
        }
        for ax in 0..self.dim {
            self.along_axis(out, ax, ws, |plan, line, scratch| {
                plan.process_dct3_with_scratch(line, scratch)
            });
        }
    }

    fn analyze(&self, basis: &EigenBasis, values: &mut [f64], coeffs: &mut [f64], ws: &mut GridWorkspace) {
        assert_eq!(values.len(), self.len(), "grid buffer has the wrong size");
        for ax in 0..self.dim {
            self.along_axis(values, ax, ws, |plan, line, scratch| {
                plan.process_dct2_with_scratch(line, scratch)
            });
        }
        for (c, idx) in coeffs.iter_mut().zip(&basis.multi_indices) {
            let mut scale = 1.0;
            for ax in 0..self.dim {
                let l = basis.lengths[ax];
                let s = if idx[ax] == 0 { l.sqrt().recip() } else { (2.0 / l).sqrt() };
                scale *= s * l / self.nodes as f64;
            }
            *c = values[self.position(idx)] * scale;
        }
    }

    fn along_axis<F>(&self, data: &mut [f64], axis: usize, ws: &mut GridWorkspace, op: F)
    where
        F: Fn(&dyn TransformType2And3<f64>, &mut [f64], &mut [f64]),
    {
        let g = self.nodes;
        let stride = g.pow((self.dim - 1 - axis) as u32);
        let blocks = g.pow(axis as u32);
        if stride == 1 {
            for line in data.chunks_exact_mut(g) {
                op(self.plan.as_ref(), line, &mut ws.scratch);
            }
            return;
        }
        for block in 0..blocks {
            for inner in 0..stride {
                let base = block * g * stride + inner;
                for i in 0..g {
                    ws.line[i] = data[base + i * stride];
                }
                op(self.plan.as_ref(), &mut ws.line, &mut ws.scratch);
                for i in 0..g {
                    data[base + i * stride] = ws.line[i];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn unit_interval_spectrum() {
        let b = EigenBasis::unit(1, 4).unwrap();
        let expected: Vec<f64> = (0..=4).map(|j| (j as f64 * PI).powi(2)).collect();
        for (l, e) in b.eigenvalues().iter().zip(&expected) {
            assert!((l - e).abs() < 1e-12 * e.max(1.0));
        }
        assert_eq!(b.eigenvalue(0), 0.0);
    }

    #[test]
    fn square_contains_tensor_sum() {
        let b = EigenBasis::unit(2, 2).unwrap();
        let j = b.index_of(&[1, 1]).unwrap();
        assert!((b.eigenvalue(j) - 2.0 * PI * PI).abs() < 1e-12);
        // ties broken lexicographically: (0,1) before (1,0)
        assert_eq!(b.multi_index(1), &[0, 1]);
        assert_eq!(b.multi_index(2), &[1, 0]);
        assert!(b.eigenvalues().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn weyl_growth_in_one_dimension() {
        let b = EigenBasis::unit(1, 64).unwrap();
        let ratio = b.eigenvalue(64) / (64.0f64).powi(2);
        assert!((ratio - PI * PI).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_domains() {
        assert!(matches!(EigenBasis::new(4, 2, &[1.0; 4]), Err(Error::InvalidDimension(4))));
        assert!(matches!(EigenBasis::new(0, 2, &[]), Err(Error::InvalidDimension(0))));
        assert!(matches!(EigenBasis::new(1, 2, &[0.0]), Err(Error::InvalidDomain(_))));
        assert!(matches!(EigenBasis::new(2, 2, &[1.0, -2.0]), Err(Error::InvalidDomain(_))));
        assert!(matches!(EigenBasis::new(1, 0, &[1.0]), Err(Error::InvalidDomain(_))));
    }

    #[test]
    fn grid_oversamples_twice() {
        let b = EigenBasis::unit(1, 8).unwrap();
        assert_eq!(b.grid_per_axis(), 18);
        let nodes = b.axis_nodes(0);
        assert!((nodes[0] - 0.5 / 18.0).abs() < 1e-15);
    }

    #[test]
    fn mean_mode_synthesizes_to_constant() {
        let b = EigenBasis::new(2, 3, &[2.0, 0.5]).unwrap();
        let mut c = vec![0.0; b.len()];
        c[0] = 1.0;
        let mut out = vec![0.0; b.grid_len()];
        b.synthesize(&c, &mut out, &mut b.workspace());
        let expected = b.volume().sqrt().recip();
        assert!(out.iter().all(|v| (v - expected).abs() < 1e-13));
    }
}
