//! Two-layer GCN encoder with a two-layer projection head, and its exact
//! reverse-mode gradients.
//!
//! Forward pass, with `Â = D̃^{-1/2}(A + I)D̃^{-1/2}` recomputed from the raw
//! weighted adjacency on every call:
//!
//! ```text
//! H1 = σ(Â · (X W1))
//! H  = σ(Â · (H1 W2))
//! Z  = elu(H P1 + b1) P2 + b2
//! ```
//!
//! Products are associated as `Â (X W)` so no `n × d` product with `Â` is ever
//! formed. The backward pass returns gradients for every weight, for `X`, and
//! for the raw adjacency (through the degree normalization), the last one
//! symmetrized over unordered pairs.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::graph::normalize_unchecked;
use crate::numerics::{Matrix, RngStream};

/// Layer widths.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    /// Input feature dimension `d`.
    pub input_dim: usize,
    /// First GCN layer width `h`.
    pub hidden_dim: usize,
    /// Embedding dimension `d'`.
    pub embed_dim: usize,
    /// Projection-head hidden width `h_p`.
    pub proj_hidden_dim: usize,
}

impl Architecture {
    pub fn new(input_dim: usize, width: usize) -> Self {
        Self {
            input_dim,
            hidden_dim: width,
            embed_dim: width,
            proj_hidden_dim: width,
        }
    }
}

/// GCN weights and projection head. Also used as the gradient container.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub w1: Matrix,
    pub w2: Matrix,
    pub p1: Matrix,
    pub b1: Vec<f64>,
    pub p2: Matrix,
    pub b2: Vec<f64>,
}

impl EncoderParams {
    pub fn zeros(arch: Architecture) -> Self {
        Self {
            w1: Matrix::zeros(arch.input_dim, arch.hidden_dim),
            w2: Matrix::zeros(arch.hidden_dim, arch.embed_dim),
            p1: Matrix::zeros(arch.embed_dim, arch.proj_hidden_dim),
            b1: vec![0.0; arch.proj_hidden_dim],
            p2: Matrix::zeros(arch.proj_hidden_dim, arch.embed_dim),
            b2: vec![0.0; arch.embed_dim],
        }
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            input_dim: self.w1.rows(),
            hidden_dim: self.w1.cols(),
            embed_dim: self.w2.cols(),
            proj_hidden_dim: self.p1.cols(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.architecture())
    }

    /// Checks every tensor against the architecture implied by `w1`/`w2`/`p1`.
    pub fn validate(&self) -> Result<()> {
        let a = self.architecture();
        ensure!(
            self.w2.rows() == a.hidden_dim
                && self.p1.rows() == a.embed_dim
                && self.b1.len() == a.proj_hidden_dim
                && self.p2.shape() == (a.proj_hidden_dim, a.embed_dim)
                && self.b2.len() == a.embed_dim,
            Contract,
            "inconsistent parameter shapes for {a:?}"
        );
        ensure!(
            self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite())),
            Numeric,
            "non-finite parameter entry"
        );
        Ok(())
    }

    /// Flat views in a fixed order: w1, w2, p1, b1, p2, b2.
    pub fn tensors(&self) -> [&[f64]; 6] {
        [
            self.w1.as_slice(),
            self.w2.as_slice(),
            self.p1.as_slice(),
            &self.b1,
            self.p2.as_slice(),
            &self.b2,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.w1.as_mut_slice(),
            self.w2.as_mut_slice(),
            self.p1.as_mut_slice(),
            &mut self.b1,
            self.p2.as_mut_slice(),
            &mut self.b2,
        ]
    }

    /// `self += s · other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &EncoderParams, s: f64) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            assert_eq!(dst.len(), src.len(), "parameter shape mismatch");
            for (a, &b) in dst.iter_mut().zip(src) {
                *a += s * b;
            }
        }
    }

    /// Order-fixed FNV digest of every bit of every tensor.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for t in self.tensors() {
            for x in t {
                for b in x.to_bits().to_le_bytes() {
                    h ^= u64::from(b);
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
        h
    }
}

fn glorot(rows: usize, cols: usize, rng: &mut RngStream) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.uniform_range(-bound, bound))
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(arch: Architecture, rng: &mut RngStream) -> Result<EncoderParams> {
    ensure!(
        arch.input_dim > 0 && arch.hidden_dim > 0 && arch.embed_dim > 0 && arch.proj_hidden_dim > 0,
        Domain,
        "all layer widths must be positive, got {arch:?}"
    );
    Ok(EncoderParams {
        w1: glorot(arch.input_dim, arch.hidden_dim, rng),
        w2: glorot(arch.hidden_dim, arch.embed_dim, rng),
        p1: glorot(arch.embed_dim, arch.proj_hidden_dim, rng),
        b1: vec![0.0; arch.proj_hidden_dim],
        p2: glorot(arch.proj_hidden_dim, arch.embed_dim, rng),
        b2: vec![0.0; arch.embed_dim],
    })
}

/// GCN layer nonlinearity. `Identity` exists for tests of the linear map.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative; the rectifier's subgradient at 0 is 0.
    #[inline]
    fn grad(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[inline]
fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

#[inline]
fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

/// Intermediate values of one GCN forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    adjacency: Matrix,
    inv_sqrt_deg: Vec<f64>,
    a_hat: Matrix,
    x: Matrix,
    xw1: Matrix,
    pre1: Matrix,
    h1: Matrix,
    h1w2: Matrix,
    pre2: Matrix,
    activation: Activation,
}

impl ForwardCache {
    pub fn normalized_adjacency(&self) -> &Matrix {
        &self.a_hat
    }

    /// Pre-activation values of both GCN layers.
    pub fn pre_activations(&self) -> (&Matrix, &Matrix) {
        (&self.pre1, &self.pre2)
    }

    /// Smallest |pre-activation| across both layers; finite-difference probes
    /// closer than a step size to a rectifier kink are unreliable.
    pub fn min_abs_pre_activation(&self) -> f64 {
        self.pre1
            .as_slice()
            .iter()
            .chain(self.pre2.as_slice())
            .fold(f64::INFINITY, |m, x| m.min(x.abs()))
    }
}

/// Intermediate values of one projection-head pass.
#[derive(Clone, Debug)]
pub struct HeadCache {
    h: Matrix,
    q: Matrix,
    r: Matrix,
}

/// `H = σ(Â σ(Â X W1) W2)` with the rectifier.
pub fn encode(a: &Matrix, x: &Matrix, params: &EncoderParams) -> Result<(Matrix, ForwardCache)> {
    encode_with(a, x, params, Activation::Relu)
}

pub fn encode_with(
    a: &Matrix,
    x: &Matrix,
    params: &EncoderParams,
    activation: Activation,
) -> Result<(Matrix, ForwardCache)> {
    let n = a.rows();
    ensure!(a.cols() == n, Contract, "adjacency must be square, got {:?}", a.shape());
    ensure!(
        x.rows() == n,
        Contract,
        "feature matrix has {} rows for {n} nodes",
        x.rows()
    );
    ensure!(
        x.cols() == params.w1.rows(),
        Contract,
        "feature dim {} does not match encoder input dim {}",
        x.cols(),
        params.w1.rows()
    );
    ensure!(
        params.w2.rows() == params.w1.cols(),
        Contract,
        "W2 has {} rows, expected {}",
        params.w2.rows(),
        params.w1.cols()
    );
    let (a_hat, inv_sqrt_deg) = normalize_unchecked(a);
    let xw1 = x.matmul(&params.w1);
    let pre1 = a_hat.matmul(&xw1);
    let h1 = pre1.map(|v| activation.apply(v));
    let h1w2 = h1.matmul(&params.w2);
    let pre2 = a_hat.matmul(&h1w2);
    let h = pre2.map(|v| activation.apply(v));
    if !h.is_finite() {
        return Err(Error::Numeric("non-finite embedding".into()));
    }
    Ok((
        h,
        ForwardCache {
            adjacency: a.clone(),
            inv_sqrt_deg,
            a_hat,
            x: x.clone(),
            xw1,
            pre1,
            h1,
            h1w2,
            pre2,
            activation,
        },
    ))
}

/// `Z = elu(H P1 + b1) P2 + b2`.
pub fn project_head(h: &Matrix, params: &EncoderParams) -> Result<(Matrix, HeadCache)> {
    ensure!(
        h.cols() == params.p1.rows(),
        Contract,
        "embedding dim {} does not match head input dim {}",
        h.cols(),
        params.p1.rows()
    );
    ensure!(
        params.b1.len() == params.p1.cols()
            && params.p2.rows() == params.p1.cols()
            && params.b2.len() == params.p2.cols(),
        Contract,
        "inconsistent projection head shapes"
    );
    let q = h.matmul(&params.p1).add_row_vector(&params.b1);
    let r = q.map(elu);
    let z = r.matmul(&params.p2).add_row_vector(&params.b2);
    if !z.is_finite() {
        return Err(Error::Numeric("non-finite projection".into()));
    }
    Ok((z, HeadCache { h: h.clone(), q, r }))
}

/// Backward through the projection head alone. Returns `dH` and a gradient
/// container holding only the head tensors (GCN weights zero).
pub fn head_backward(
    params: &EncoderParams,
    head: &HeadCache,
    dz: &Matrix,
) -> Result<(Matrix, EncoderParams)> {
    ensure!(
        dz.shape() == (head.q.rows(), params.p2.cols()),
        Contract,
        "dZ shape {:?} inconsistent with head cache",
        dz.shape()
    );
    let mut grads = params.zeros_like();
    let dr = dz.matmul_t(&params.p2);
    let dq = dr.zip_map(&head.q, |g, q| g * elu_grad(q));
    grads.p2 = head.r.t_matmul(dz);
    grads.b2 = dz.column_sums();
    grads.p1 = head.h.t_matmul(&dq);
    grads.b1 = dq.column_sums();
    Ok((dq.matmul_t(&params.p1), grads))
}

/// Encoder followed by the projection head.
#[derive(Clone, Debug)]
pub struct Forward {
    pub embedding: Matrix,
    pub projection: Matrix,
    pub gcn: ForwardCache,
    pub head: HeadCache,
}

pub fn forward(a: &Matrix, x: &Matrix, params: &EncoderParams) -> Result<Forward> {
    let (embedding, gcn) = encode(a, x, params)?;
    let (projection, head) = project_head(&embedding, params)?;
    Ok(Forward {
        embedding,
        projection,
        gcn,
        head,
    })
}

/// Which gradients [`backward_with`] should produce.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GradRequest {
    pub params: bool,
    pub inputs: bool,
}

impl GradRequest {
    pub const ALL: GradRequest = GradRequest {
        params: true,
        inputs: true,
    };
    pub const PARAMS: GradRequest = GradRequest {
        params: true,
        inputs: false,
    };
    pub const INPUTS: GradRequest = GradRequest {
        params: false,
        inputs: true,
    };
}

/// Output of the backward pass.
#[derive(Clone, Debug)]
pub struct Gradients {
    /// Gradient for every parameter tensor (zeros when not requested).
    pub params: EncoderParams,
    /// `∂L/∂X` (empty 0×0 when not requested).
    pub dx: Matrix,
    /// `∂L/∂A` per unordered pair, mirrored, zero diagonal (empty when not requested).
    pub da_raw: Matrix,
}

/// Upstream gradient: either on the projections `Z` (flows through the head)
/// or directly on the embeddings `H`, or both.
#[derive(Clone, Copy, Debug, Default)]
pub struct Upstream<'a> {
    pub projection: Option<(&'a HeadCache, &'a Matrix)>,
    pub embedding: Option<&'a Matrix>,
}

/// Full backward pass: all parameter gradients plus `dX` and `dA_raw`.
pub fn backward(
    params: &EncoderParams,
    cache: &ForwardCache,
    upstream: Upstream<'_>,
) -> Result<Gradients> {
    backward_with(params, cache, upstream, GradRequest::ALL)
}

/// Backward pass through [`forward`] from an upstream `dZ`.
pub fn backward_from_projection(
    params: &EncoderParams,
    fwd: &Forward,
    dz: &Matrix,
    request: GradRequest,
) -> Result<Gradients> {
    backward_with(
        params,
        &fwd.gcn,
        Upstream {
            projection: Some((&fwd.head, dz)),
            embedding: None,
        },
        request,
    )
}

pub fn backward_with(
    params: &EncoderParams,
    cache: &ForwardCache,
    upstream: Upstream<'_>,
    request: GradRequest,
) -> Result<Gradients> {
    let n = cache.a_hat.rows();
    let arch = params.architecture();
    ensure!(
        cache.xw1.cols() == arch.hidden_dim
            && cache.pre2.cols() == arch.embed_dim
            && cache.x.cols() == arch.input_dim,
        Contract,
        "forward cache does not match parameter shapes"
    );
    let mut grads = params.zeros_like();

    // Projection head.
    let mut dh = Matrix::zeros(n, arch.embed_dim);
    if let Some(d) = upstream.embedding {
        ensure!(d.shape() == dh.shape(), Contract, "dH shape {:?}", d.shape());
        dh.add_scaled(d, 1.0);
    }
    if let Some((head, dz)) = upstream.projection {
        ensure!(head.q.rows() == n, Contract, "head cache has {} rows, expected {n}", head.q.rows());
        let (dh_head, head_grads) = head_backward(params, head, dz)?;
        if request.params {
            grads = head_grads;
        }
        dh.add_scaled(&dh_head, 1.0);
    }

    let act = cache.activation;
    let mut d_ahat = request.inputs.then(|| Matrix::zeros(n, n));

    // Layer 2: pre2 = Â (H1 W2).
    let dpre2 = dh.zip_map(&cache.pre2, |g, p| g * act.grad(p));
    if let Some(g) = d_ahat.as_mut() {
        g.add_scaled(&dpre2.matmul_t(&cache.h1w2), 1.0);
    }
    let dh1w2 = cache.a_hat.matmul(&dpre2);
    if request.params {
        grads.w2 = cache.h1.t_matmul(&dh1w2);
    }
    let dh1 = dh1w2.matmul_t(&params.w2);

    // Layer 1: pre1 = Â (X W1).
    let dpre1 = dh1.zip_map(&cache.pre1, |g, p| g * act.grad(p));
    if let Some(g) = d_ahat.as_mut() {
        g.add_scaled(&dpre1.matmul_t(&cache.xw1), 1.0);
    }
    let dxw1 = cache.a_hat.matmul(&dpre1);
    if request.params {
        grads.w1 = cache.x.t_matmul(&dxw1);
    }

    let (dx, da_raw) = match d_ahat {
        Some(g) => (
            dxw1.matmul_t(&params.w1),
            normalization_backward(&g, &cache.adjacency, &cache.inv_sqrt_deg),
        ),
        None => (Matrix::zeros(0, 0), Matrix::zeros(0, 0)),
    };
    Ok(Gradients {
        params: grads,
        dx,
        da_raw,
    })
}

/// Maps `∂L/∂Â` to `∂L/∂A` through `Â_ij = s_i Ã_ij s_j`, `s = (rowsum Ã)^{-1/2}`,
/// and sums the two directed contributions of each unordered pair.
fn normalization_backward(d_ahat: &Matrix, a: &Matrix, s: &[f64]) -> Matrix {
    let n = a.rows();
    let a_tilde = |i: usize, j: usize| if i == j { 1.0 } else { a[(i, j)] };
    // ∂L/∂s_i = Σ_j Ã_ij s_j (G_ij + G_ji)
    let ds: Vec<f64> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let w = a_tilde(i, j);
                    if w == 0.0 {
                        0.0
                    } else {
                        w * s[j] * (d_ahat[(i, j)] + d_ahat[(j, i)])
                    }
                })
                .sum()
        })
        .collect();
    // ∂s_i/∂deg_i = -½ s_i³
    let ddeg: Vec<f64> = (0..n).map(|i| -0.5 * s[i] * s[i] * s[i] * ds[i]).collect();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let gij = d_ahat[(i, j)] * s[i] * s[j] + ddeg[i];
            let gji = d_ahat[(j, i)] * s[j] * s[i] + ddeg[j];
            out[(i, j)] = gij + gji;
            out[(j, i)] = gij + gji;
        }
    }
    out
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"ARIELCKP";
const CHECKPOINT_VERSION: u32 = 1;

/// Writes the binary checkpoint: magic, version (u32 LE), four dims (u64 LE),
/// then w1, w2, p1, b1, p2, b2 as little-endian f64 in row-major order.
pub fn save_checkpoint(params: &EncoderParams, path: &Path) -> Result<()> {
    params.validate()?;
    let arch = params.architecture();
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for d in [arch.input_dim, arch.hidden_dim, arch.embed_dim, arch.proj_hidden_dim] {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for t in params.tensors() {
        for x in t {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<EncoderParams> {
    let mut buf = Vec::new();
    fs::File::open(path)?.read_to_end(&mut buf)?;
    let bad = |m: &str| Error::Ingestion {
        path: path.display().to_string(),
        line: 0,
        message: m.to_string(),
    };
    if buf.len() < 12 + 32 || &buf[..8] != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(buf[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(bad(&format!("unsupported checkpoint version {version}")));
    }
    let dim = |k: usize| u64::from_le_bytes(buf[12 + 8 * k..20 + 8 * k].try_into().unwrap()) as usize;
    let arch = Architecture {
        input_dim: dim(0),
        hidden_dim: dim(1),
        embed_dim: dim(2),
        proj_hidden_dim: dim(3),
    };
    let mut params = EncoderParams::zeros(arch);
    let expected: usize = params.tensors().iter().map(|t| t.len()).sum();
    let body = &buf[44..];
    if body.len() != expected * 8 {
        return Err(bad(&format!(
            "checkpoint body has {} bytes, expected {}",
            body.len(),
            expected * 8
        )));
    }
    let mut chunks = body.chunks_exact(8);
    for t in params.tensors_mut() {
        for x in t.iter_mut() {
            *x = f64::from_le_bytes(chunks.next().unwrap().try_into().unwrap());
        }
    }
    params.validate()?;
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_sbm, normalize_adjacency};
    use crate::numerics::{finite_diff_gradient, FD_STEP};

    fn square_identity_params(k: usize) -> EncoderParams {
        EncoderParams {
            w1: Matrix::identity(k),
            w2: Matrix::identity(k),
            p1: Matrix::identity(k),
            b1: vec![0.0; k],
            p2: Matrix::identity(k),
            b2: vec![0.0; k],
        }
    }

    #[test]
    fn init_bounds_and_determinism() {
        let arch = Architecture {
            input_dim: 30,
            hidden_dim: 20,
            embed_dim: 10,
            proj_hidden_dim: 12,
        };
        let p = init_params(arch, &mut RngStream::new(1)).unwrap();
        let bound = (6.0f64 / 50.0).sqrt();
        assert!(p.w1.as_slice().iter().all(|w| w.abs() <= bound));
        assert!(p.b1.iter().chain(&p.b2).all(|&b| b == 0.0));
        assert_eq!(p, init_params(arch, &mut RngStream::new(1)).unwrap());
        assert!(init_params(Architecture::new(0, 4), &mut RngStream::new(1)).is_err());
    }

    #[test]
    fn init_mean_is_centered() {
        let arch = Architecture {
            input_dim: 500,
            hidden_dim: 200,
            embed_dim: 1,
            proj_hidden_dim: 1,
        };
        let p = init_params(arch, &mut RngStream::new(2)).unwrap();
        let bound = (6.0f64 / 700.0).sqrt();
        let mean = p.w1.sum() / 100_000.0;
        assert!(mean.abs() <= 0.01 * bound, "mean {mean}");
    }

    #[test]
    fn encode_single_node_is_identity() {
        let p = square_identity_params(3);
        let x = Matrix::from_rows(&[vec![0.5, 2.0, 0.0]]);
        let (h, _) = encode(&Matrix::zeros(1, 1), &x, &p).unwrap();
        assert_eq!(h, x);
    }

    #[test]
    fn encode_complete_pair_linear() {
        let p = square_identity_params(2);
        let a = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let (h, _) = encode_with(&a, &Matrix::identity(2), &p, Activation::Identity).unwrap();
        for &v in h.as_slice() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn encode_is_positively_homogeneous() {
        let mut rng = RngStream::new(3);
        let g = generate_sbm(&[5, 5], 0.5, 0.1, 6, &mut rng).unwrap();
        let p = init_params(Architecture::new(6, 8), &mut rng).unwrap();
        let (h, _) = encode(g.adjacency(), g.features(), &p).unwrap();
        let (h2, _) = encode(g.adjacency(), &g.features().scale(2.0), &p).unwrap();
        assert!(h2.sub(&h.scale(2.0)).max_abs() < 1e-12);
    }

    #[test]
    fn encode_rejects_mismatched_dims() {
        let p = init_params(Architecture::new(4, 4), &mut RngStream::new(0)).unwrap();
        assert!(encode(&Matrix::zeros(3, 3), &Matrix::zeros(3, 5), &p).is_err());
        assert!(encode(&Matrix::zeros(3, 3), &Matrix::zeros(2, 4), &p).is_err());
    }

    #[test]
    fn head_examples() {
        let k = 3;
        let mut p = square_identity_params(k);
        let h = Matrix::from_rows(&[vec![0.0, 1.5, 2.0], vec![3.0, 0.25, 0.0]]);
        let (z, _) = project_head(&h, &p).unwrap();
        assert_eq!(z, h);
        for t in p.tensors_mut() {
            t.fill(0.0);
        }
        let (z, _) = project_head(&h, &p).unwrap();
        assert_eq!(z.max_abs(), 0.0);
    }

    #[test]
    fn nonnegative_inputs_give_nonnegative_embeddings() {
        let mut rng = RngStream::new(11);
        let g = generate_sbm(&[6, 6], 0.4, 0.1, 5, &mut rng).unwrap();
        let x = g.features().map(f64::abs);
        let p = init_params(Architecture::new(5, 7), &mut rng).unwrap();
        let (h, _) = encode(g.adjacency(), &x, &p).unwrap();
        assert!(h.as_slice().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = RngStream::new(5);
        let g = generate_sbm(&[4, 4], 0.5, 0.2, 3, &mut rng).unwrap();
        let p = init_params(Architecture::new(3, 4), &mut rng).unwrap();
        let f = forward(g.adjacency(), g.features(), &p).unwrap();
        let dz = Matrix::zeros(8, 4);
        let gr = backward_from_projection(&p, &f, &dz, GradRequest::ALL).unwrap();
        assert!(gr.params.tensors().iter().all(|t| t.iter().all(|&x| x == 0.0)));
        assert_eq!(gr.dx.max_abs(), 0.0);
        assert_eq!(gr.da_raw.max_abs(), 0.0);
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut rng = RngStream::new(5);
        let g = generate_sbm(&[4, 4], 0.5, 0.2, 3, &mut rng).unwrap();
        let p = init_params(Architecture::new(3, 4), &mut rng).unwrap();
        let other = init_params(Architecture::new(3, 6), &mut rng).unwrap();
        let f = forward(g.adjacency(), g.features(), &p).unwrap();
        let dz = Matrix::zeros(8, 4);
        assert!(backward_from_projection(&other, &f, &dz, GradRequest::ALL).is_err());
    }

    /// Random weighted symmetric adjacency with zero diagonal.
    fn random_weighted(n: usize, rng: &mut RngStream) -> Matrix {
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                let w = if rng.uniform() < 0.5 { rng.uniform() } else { 0.0 };
                a[(i, j)] = w;
                a[(j, i)] = w;
            }
        }
        a
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        if a.abs() > 1e-8 {
            (a - b).abs() <= tol * a.abs().max(b.abs())
        } else {
            (a - b).abs() <= 1e-8
        }
    }

    #[test]
    fn head_p1_gradient_matches_finite_differences() {
        let mut rng = RngStream::new(21);
        let p = init_params(Architecture::new(4, 5), &mut rng).unwrap();
        let h = Matrix::from_fn(6, 5, |_, _| rng.gaussian());
        let c = Matrix::from_fn(6, 5, |_, _| rng.gaussian());
        let scalar = |z: &Matrix| z.zip_map(&c, |a, b| a * b).sum();
        let (_, head) = project_head(&h, &p).unwrap();
        let (_, gr) = head_backward(&p, &head, &c).unwrap();
        let fd = finite_diff_gradient(
            |p1| {
                let mut q = p.clone();
                q.p1 = p1.clone();
                scalar(&project_head(&h, &q).unwrap().0)
            },
            &p.p1,
            FD_STEP,
        )
        .unwrap();
        for (a, b) in gr.p1.as_slice().iter().zip(fd.as_slice()) {
            assert!(rel_close(*a, *b, 1e-4), "{a} vs {b}");
        }
    }

    #[test]
    fn dx_and_da_match_finite_differences() {
        for seed in 0..5u64 {
            let mut rng = RngStream::new(100 + seed);
            let n = 6 + (seed as usize % 3);
            let a = random_weighted(n, &mut rng);
            let x = Matrix::from_fn(n, 4, |_, _| rng.gaussian());
            let p = init_params(Architecture::new(4, 5), &mut rng).unwrap();
            let c = Matrix::from_fn(n, 5, |_, _| rng.gaussian());
            let f = forward(&a, &x, &p).unwrap();
            if f.gcn.min_abs_pre_activation() < 1e-4 {
                continue;
            }
            let loss = |a: &Matrix, x: &Matrix| {
                let z = forward(a, x, &p).unwrap().projection;
                z.zip_map(&c, |u, v| u * v).sum()
            };
            let gr = backward_from_projection(&p, &f, &c, GradRequest::ALL).unwrap();

            let fd_x = finite_diff_gradient(|xx| loss(&a, xx), &x, FD_STEP).unwrap();
            for (u, v) in gr.dx.as_slice().iter().zip(fd_x.as_slice()) {
                assert!(rel_close(*u, *v, 1e-4), "dX {u} vs {v}");
            }

            assert!(gr.da_raw.is_symmetric(0.0));
            for i in 0..n {
                assert_eq!(gr.da_raw[(i, i)], 0.0);
                for j in i + 1..n {
                    let h = FD_STEP;
                    let mut ap = a.clone();
                    ap[(i, j)] += h;
                    ap[(j, i)] += h;
                    let mut am = a.clone();
                    am[(i, j)] -= h;
                    am[(j, i)] -= h;
                    let fd = (loss(&ap, &x) - loss(&am, &x)) / (2.0 * h);
                    assert!(rel_close(gr.da_raw[(i, j)], fd, 1e-4), "dA ({i},{j}) {} vs {fd}", gr.da_raw[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let p = init_params(
            Architecture {
                input_dim: 7,
                hidden_dim: 5,
                embed_dim: 4,
                proj_hidden_dim: 3,
            },
            &mut RngStream::new(9),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        save_checkpoint(&p, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.checksum(), p.checksum());
        assert_eq!(back, p);
        fs::write(&path, b"garbage").unwrap();
        assert!(load_checkpoint(&path).is_err());
    }

    #[test]
    fn normalized_adjacency_in_cache_matches_module() {
        let mut rng = RngStream::new(4);
        let g = generate_sbm(&[3, 4], 0.6, 0.2, 2, &mut rng).unwrap();
        let p = init_params(Architecture::new(2, 3), &mut rng).unwrap();
        let (_, cache) = encode(g.adjacency(), g.features(), &p).unwrap();
        assert_eq!(cache.normalized_adjacency(), &normalize_adjacency(g.adjacency()).unwrap());
    }
}
