//! Pair-dependent weighted adjacency and the graph convolution layer.
//!
//! Node features `H⁽⁰⁾` (query rows, then proposal rows) are mapped through a
//! learned affine projection `φ(h) = W_φ h + b_φ`; the adjacency entry for
//! nodes `i, j` is the cosine similarity of `φ(h_i)` and `φ(h_j)`. A single
//! convolution `relu(Â H⁽⁰⁾ W)` then mixes features across both clips.
//! No degree normalisation is applied to `Â`, and negative similarities are
//! kept.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{shape_err, Result};
use crate::linalg::{dot, norm2, Matrix};
use crate::rng::SeededRng;

/// Rows whose projected norm falls below this are treated as zero vectors:
/// their similarities (including the self-similarity) are 0 and they receive
/// no gradient through the normalisation.
pub const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// `d¹ × d`
    pub weight: Matrix,
    /// `1 × d¹`
    pub bias: Matrix,
}

impl Projection {
    pub fn zeros(input_dim: usize, proj_dim: usize) -> Self {
        Self {
            weight: Matrix::zeros(proj_dim, input_dim),
            bias: Matrix::zeros(1, proj_dim),
        }
    }

    pub fn init(input_dim: usize, proj_dim: usize, rng: &mut SeededRng) -> Self {
        let bound = 1.0 / libm::sqrt(input_dim as f64);
        let mut p = Self::zeros(input_dim, proj_dim);
        for v in p
            .weight
            .as_mut_slice()
            .iter_mut()
            .chain(p.bias.as_mut_slice())
        {
            *v = rng.uniform(-bound, bound);
        }
        p
    }
}

/// Row `i` of the result is `W_φ h_i + b_φ`.
pub fn project(h0: &Matrix, p: &Projection) -> Result<Matrix> {
    if h0.cols() != p.weight.cols() || p.bias.shape() != (1, p.weight.rows()) {
        return Err(shape_err(
            "project",
            format!(
                "features {:?}, W_φ {:?}, b_φ {:?}",
                h0.shape(),
                p.weight.shape(),
                p.bias.shape()
            ),
        ));
    }
    let mut phi = h0.matmul_t(&p.weight)?;
    for r in 0..phi.rows() {
        for (v, b) in phi.row_mut(r).iter_mut().zip(p.bias.as_slice()) {
            *v += b;
        }
    }
    Ok(phi)
}

/// Accumulates `∂L/∂W_φ` and `∂L/∂b_φ` given `∂L/∂φ`.
pub fn project_param_backward(h0: &Matrix, d_phi: &Matrix, grads: &mut Projection) -> Result<()> {
    grads.weight.add_assign(&d_phi.t_matmul(h0)?)?;
    for r in 0..d_phi.rows() {
        for (g, d) in grads.bias.as_mut_slice().iter_mut().zip(d_phi.row(r)) {
            *g += d;
        }
    }
    Ok(())
}

/// `∂L/∂H⁽⁰⁾` contribution through the projection.
pub fn project_input_backward(d_phi: &Matrix, p: &Projection) -> Result<Matrix> {
    d_phi.matmul(&p.weight)
}

/// Cosine of the angle between `a` and `b`, or 0 if either norm is below
/// [`NORM_EPS`].
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(shape_err(
            "cosine_similarity",
            format!("lengths {} and {}", a.len(), b.len()),
        ));
    }
    let (na, nb) = (norm2(a), norm2(b));
    if na < NORM_EPS || nb < NORM_EPS {
        return Ok(0.0);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Symmetric `2T × 2T` matrix of cosine similarities.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedAdjacency {
    a_hat: Matrix,
}

impl WeightedAdjacency {
    pub fn matrix(&self) -> &Matrix {
        &self.a_hat
    }

    pub fn into_matrix(self) -> Matrix {
        self.a_hat
    }

    pub fn nodes(&self) -> usize {
        self.a_hat.rows()
    }

    /// Wraps an arbitrary square matrix; used to feed hand-built graphs to
    /// [`gcn_forward`].
    pub fn from_matrix(a_hat: Matrix) -> Result<Self> {
        if a_hat.rows() != a_hat.cols() {
            return Err(shape_err(
                "adjacency",
                format!("{:?} is not square", a_hat.shape()),
            ));
        }
        Ok(Self { a_hat })
    }
}

/// Unit-normalised rows and their original norms.
#[derive(Debug, Clone)]
pub struct AdjacencyCache {
    unit: Matrix,
    norms: Vec<f64>,
}

pub fn build_adjacency(phi: &Matrix) -> Result<WeightedAdjacency> {
    Ok(build_adjacency_cached(phi)?.0)
}

pub fn build_adjacency_cached(phi: &Matrix) -> Result<(WeightedAdjacency, AdjacencyCache)> {
    let n = phi.rows();
    if n < 2 {
        return Err(shape_err(
            "build_adjacency",
            format!("need ≥ 2 nodes, got {n}"),
        ));
    }
    let mut unit = phi.clone();
    let mut norms = Vec::with_capacity(n);
    for r in 0..n {
        let norm = norm2(phi.row(r));
        norms.push(norm);
        let row = unit.row_mut(r);
        if norm < NORM_EPS {
            row.iter_mut().for_each(|v| *v = 0.0);
        } else {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    let mut a_hat = Matrix::zeros(n, n);
    for i in 0..n {
        if norms[i] < NORM_EPS {
            continue;
        }
        a_hat[(i, i)] = 1.0;
        for j in i + 1..n {
            if norms[j] < NORM_EPS {
                continue;
            }
            let s = dot(unit.row(i), unit.row(j)).clamp(-1.0, 1.0);
            a_hat[(i, j)] = s;
            a_hat[(j, i)] = s;
        }
    }
    Ok((WeightedAdjacency { a_hat }, AdjacencyCache { unit, norms }))
}

/// `∂L/∂φ` from `∂L/∂Â` via the quotient rule of the normalisation.
pub fn adjacency_backward(cache: &AdjacencyCache, d_adj: &Matrix) -> Result<Matrix> {
    let n = cache.unit.rows();
    if d_adj.shape() != (n, n) {
        return Err(shape_err(
            "adjacency_backward",
            format!("gradient {:?} for {n} nodes", d_adj.shape()),
        ));
    }
    // Â = U Uᵀ  ⇒  ∂L/∂U = (G + Gᵀ) U
    let sym = d_adj.add(&d_adj.transpose())?;
    let d_unit = sym.matmul(&cache.unit)?;
    let mut d_phi = Matrix::zeros(n, cache.unit.cols());
    for i in 0..n {
        let norm = cache.norms[i];
        if norm < NORM_EPS {
            continue;
        }
        let u = cache.unit.row(i);
        let du = d_unit.row(i);
        let radial = dot(u, du);
        for ((out, &ui), &dui) in d_phi.row_mut(i).iter_mut().zip(u).zip(du) {
            *out = (dui - ui * radial) / norm;
        }
    }
    Ok(d_phi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnParams {
    /// `d × d_out`
    pub weight: Matrix,
}

impl GcnParams {
    pub fn zeros(input_dim: usize, output_dim: usize) -> Self {
        Self {
            weight: Matrix::zeros(input_dim, output_dim),
        }
    }

    /// Glorot-uniform weights.
    pub fn init(input_dim: usize, output_dim: usize, rng: &mut SeededRng) -> Self {
        let bound = libm::sqrt(6.0 / (input_dim + output_dim) as f64);
        Self {
            weight: Matrix::from_fn(input_dim, output_dim, |_, _| rng.uniform(-bound, bound)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GcnCache {
    /// `Â H⁽⁰⁾`
    aggregated: Matrix,
    output: Matrix,
}

impl GcnCache {
    pub fn output(&self) -> &Matrix {
        &self.output
    }
}

/// `relu(Â H⁽⁰⁾ W)`.
pub fn gcn_forward(adj: &WeightedAdjacency, h0: &Matrix, w: &GcnParams) -> Result<Matrix> {
    Ok(gcn_forward_cached(adj, h0, w)?.output)
}

pub fn gcn_forward_cached(adj: &WeightedAdjacency, h0: &Matrix, w: &GcnParams) -> Result<GcnCache> {
    if adj.nodes() != h0.rows() || h0.cols() != w.weight.rows() {
        return Err(shape_err(
            "gcn_forward",
            format!(
                "Â {:?}, H {:?}, W {:?}",
                adj.a_hat.shape(),
                h0.shape(),
                w.weight.shape()
            ),
        ));
    }
    let aggregated = adj.a_hat.matmul(h0)?;
    let output = aggregated.matmul(&w.weight)?.map(|v| v.max(0.0));
    Ok(GcnCache { aggregated, output })
}

/// Returns `(∂L/∂Â, ∂L/∂H⁽⁰⁾)` and accumulates `∂L/∂W` into `grads` when given.
pub fn gcn_backward(
    adj: &WeightedAdjacency,
    h0: &Matrix,
    cache: &GcnCache,
    d_out: &Matrix,
    w: &GcnParams,
    grads: Option<&mut GcnParams>,
) -> Result<(Matrix, Matrix)> {
    if d_out.shape() != cache.output.shape() {
        return Err(shape_err(
            "gcn_backward",
            format!("{:?} vs output {:?}", d_out.shape(), cache.output.shape()),
        ));
    }
    let mut d_pre = d_out.clone();
    for (d, &y) in d_pre.as_mut_slice().iter_mut().zip(cache.output.as_slice()) {
        if y <= 0.0 {
            *d = 0.0;
        }
    }
    if let Some(g) = grads {
        g.weight.add_assign(&cache.aggregated.t_matmul(&d_pre)?)?;
    }
    let d_aggregated = d_pre.matmul_t(&w.weight)?;
    let d_adj = d_aggregated.matmul_t(h0)?;
    let d_h0 = adj.a_hat.t_matmul(&d_aggregated)?;
    Ok((d_adj, d_h0))
}
