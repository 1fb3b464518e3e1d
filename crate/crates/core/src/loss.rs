//! Contrastive objectives on projected embeddings.
//!
//! `θ(u, v)` is cosine similarity. The contrastive term for a pair of views
//! `(U, V)` averages, over nodes and both directions, the negative log-softmax
//! of the positive pair `θ(uᵢ, vᵢ)/τ` against inter-view negatives
//! `θ(uᵢ, vⱼ)/τ` and intra-view negatives `θ(uᵢ, uⱼ)/τ` (`j ≠ i`). The
//! information regularizer is the hinge `max(0, 2θ₁₂ − θ₂₀ − θ₁₀)` per node,
//! on raw cosines (no temperature).

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::numerics::Matrix;

/// Rows with Euclidean norm below this are rejected.
pub const MIN_ROW_NORM: f64 = 1e-12;

/// Per-term values of the combined objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub contrastive: f64,
    pub adversarial_contrastive: f64,
    pub info_reg: f64,
    pub total: f64,
    pub eps1: f64,
    pub eps2: f64,
}

impl LossBreakdown {
    pub fn new(contrastive: f64, adversarial_contrastive: f64, info_reg: f64, eps1: f64, eps2: f64) -> Self {
        Self {
            contrastive,
            adversarial_contrastive,
            info_reg,
            total: contrastive + eps1 * adversarial_contrastive + eps2 * info_reg,
            eps1,
            eps2,
        }
    }

    /// `|total − (contrastive + ε₁·adv + ε₂·info)|`.
    pub fn arithmetic_residual(&self) -> f64 {
        (self.total - (self.contrastive + self.eps1 * self.adversarial_contrastive + self.eps2 * self.info_reg))
            .abs()
    }
}

/// Row-normalized copy of `z` and the original row norms.
struct UnitRows {
    unit: Matrix,
    norms: Vec<f64>,
}

fn unit_rows(z: &Matrix, name: &str) -> Result<UnitRows> {
    let mut unit = z.clone();
    let mut norms = Vec::with_capacity(z.rows());
    for r in 0..z.rows() {
        let nr = crate::numerics::norm(z.row(r));
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(nr >= MIN_ROW_NORM) {
            return Err(Error::Domain(format!("{name} row {r} has norm {nr} (zero or non-finite)")));
        }
        unit.row_mut(r).iter_mut().for_each(|x| *x /= nr);
        norms.push(nr);
    }
    Ok(UnitRows { unit, norms })
}

impl UnitRows {
    /// Pulls a gradient on the unit rows back to the raw rows:
    /// `dz = (dû − û⟨û, dû⟩) / ‖z‖`.
    fn backward(&self, d_unit: &Matrix) -> Matrix {
        let mut out = d_unit.clone();
        for r in 0..out.rows() {
            let u = self.unit.row(r);
            let proj = crate::numerics::dot(u, d_unit.row(r));
            let inv = 1.0 / self.norms[r].max(MIN_ROW_NORM);
            for (o, &ui) in out.row_mut(r).iter_mut().zip(u) {
                *o = (*o - ui * proj) * inv;
            }
        }
        out
    }
}

fn check_same_shape(a: &Matrix, b: &Matrix, what: &str) -> Result<()> {
    ensure!(
        a.shape() == b.shape(),
        Contract,
        "{what}: shape mismatch {:?} vs {:?}",
        a.shape(),
        b.shape()
    );
    Ok(())
}

/// Entry `(i, j)` is the cosine of row `i` of `z1` with row `j` of `z2`.
pub fn pairwise_cosine(z1: &Matrix, z2: &Matrix) -> Result<Matrix> {
    ensure!(z1.cols() == z2.cols(), Contract, "pairwise_cosine: column mismatch");
    let a = unit_rows(z1, "Z1")?;
    let b = unit_rows(z2, "Z2")?;
    Ok(a.unit.matmul_t(&b.unit).map(|c| c.clamp(-1.0, 1.0)))
}

/// Loss value with gradients for both inputs.
#[derive(Clone, Debug)]
pub struct ContrastiveOutput {
    pub loss: f64,
    pub dz1: Matrix,
    pub dz2: Matrix,
}

/// Softmax denominators for one direction: row `i` uses `cross[i, :]` (all
/// `j`) and `intra[i, j]` for `j ≠ i`. Returns per-row log-sum-exp.
fn row_lse(cross: &Matrix, intra: &Matrix, inv_tau: f64) -> Vec<f64> {
    let n = cross.rows();
    (0..n)
        .map(|i| {
            let c = cross.row(i);
            let s = intra.row(i);
            let mut m = f64::NEG_INFINITY;
            for j in 0..n {
                m = m.max(c[j] * inv_tau);
                if j != i {
                    m = m.max(s[j] * inv_tau);
                }
            }
            let mut acc = 0.0;
            for j in 0..n {
                acc += (c[j] * inv_tau - m).exp();
                if j != i {
                    acc += (s[j] * inv_tau - m).exp();
                }
            }
            m + acc.ln()
        })
        .collect()
}

/// Symmetric two-view contrastive loss and its exact gradients.
pub fn contrastive_loss(z1: &Matrix, z2: &Matrix, tau: f64) -> Result<ContrastiveOutput> {
    ensure!(tau > 0.0 && tau.is_finite(), Domain, "temperature must be positive, got {tau}");
    check_same_shape(z1, z2, "contrastive_loss")?;
    let n = z1.rows();
    ensure!(n > 0, Contract, "contrastive_loss on empty embeddings");
    let u = unit_rows(z1, "Z1")?;
    let v = unit_rows(z2, "Z2")?;
    let inv_tau = 1.0 / tau;

    let s12 = u.unit.matmul_t(&v.unit);
    let s21 = s12.transpose();
    let s11 = u.unit.matmul_t(&u.unit);
    let s22 = v.unit.matmul_t(&v.unit);

    let lse_u = row_lse(&s12, &s11, inv_tau);
    let lse_v = row_lse(&s21, &s22, inv_tau);

    let mut total = 0.0;
    for i in 0..n {
        let pos = s12[(i, i)] * inv_tau;
        total += (lse_u[i] - pos) + (lse_v[i] - pos);
    }
    let scale = 1.0 / (2.0 * n as f64);
    let loss = total * scale;

    // Gradients with respect to the similarity matrices.
    let c = scale * inv_tau;
    let mut g12 = Matrix::zeros(n, n);
    let mut g11 = Matrix::zeros(n, n);
    let mut g22 = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let p = (s12[(i, j)] * inv_tau - lse_u[i]).exp();
            let q = (s12[(i, j)] * inv_tau - lse_v[j]).exp();
            let delta = if i == j { 2.0 } else { 0.0 };
            g12[(i, j)] = c * (p + q - delta);
            if i != j {
                g11[(i, j)] = c * (s11[(i, j)] * inv_tau - lse_u[i]).exp();
                g22[(i, j)] = c * (s22[(i, j)] * inv_tau - lse_v[i]).exp();
            }
        }
    }
    let g11s = g11.add(&g11.transpose());
    let g22s = g22.add(&g22.transpose());
    let du = g12.matmul(&v.unit).add(&g11s.matmul(&u.unit));
    let dv = g12.t_matmul(&u.unit).add(&g22s.matmul(&v.unit));

    let out = ContrastiveOutput {
        loss,
        dz1: u.backward(&du),
        dz2: v.backward(&dv),
    };
    if !out.loss.is_finite() {
        return Err(Error::Numeric(format!("contrastive loss is {}", out.loss)));
    }
    Ok(out)
}

/// Per-node cosines between view 1, view 2 and the original graph.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityTriple {
    pub theta_12: Vec<f64>,
    pub theta_10: Vec<f64>,
    pub theta_20: Vec<f64>,
}

impl SimilarityTriple {
    /// Hinge arguments `dᵢ = 2θ₁₂ − θ₂₀ − θ₁₀`.
    pub fn margins(&self) -> Vec<f64> {
        self.theta_12
            .iter()
            .zip(&self.theta_20)
            .zip(&self.theta_10)
            .map(|((a, b), c)| 2.0 * a - b - c)
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct InfoRegOutput {
    pub penalty: f64,
    pub similarities: SimilarityTriple,
    pub dz1: Matrix,
    pub dz2: Matrix,
    pub dz0: Matrix,
}

/// Row-wise cosine of two unit-row matrices.
fn row_cos(a: &Matrix, b: &Matrix) -> Vec<f64> {
    (0..a.rows())
        .map(|r| crate::numerics::dot(a.row(r), b.row(r)).clamp(-1.0, 1.0))
        .collect()
}

/// `(1/n) Σᵢ max(dᵢ, 0)` and its gradients; nodes with `dᵢ ≤ 0` contribute none.
pub fn info_regularization(z1: &Matrix, z2: &Matrix, z0: &Matrix) -> Result<InfoRegOutput> {
    check_same_shape(z1, z2, "info_regularization")?;
    check_same_shape(z1, z0, "info_regularization")?;
    let n = z1.rows();
    ensure!(n > 0, Contract, "info_regularization on empty embeddings");
    let u1 = unit_rows(z1, "Z1")?;
    let u2 = unit_rows(z2, "Z2")?;
    let u0 = unit_rows(z0, "Z0")?;
    let sims = SimilarityTriple {
        theta_12: row_cos(&u1.unit, &u2.unit),
        theta_10: row_cos(&u1.unit, &u0.unit),
        theta_20: row_cos(&u2.unit, &u0.unit),
    };
    let margins = sims.margins();
    let inv_n = 1.0 / n as f64;
    let penalty = margins.iter().map(|d| d.max(0.0)).sum::<f64>() * inv_n;

    // θ(a, b) = âᵀb̂, so ∂θ/∂â = b̂ and ∂θ/∂b̂ = â; the unit-row backward
    // handles the normalization.
    let k = z1.cols();
    let mut d1 = Matrix::zeros(n, k);
    let mut d2 = Matrix::zeros(n, k);
    let mut d0 = Matrix::zeros(n, k);
    for (i, &m) in margins.iter().enumerate() {
        if m <= 0.0 {
            continue;
        }
        let (a, b, c) = (u1.unit.row(i), u2.unit.row(i), u0.unit.row(i));
        // d = 2 âᵀb̂ − b̂ᵀĉ − âᵀĉ
        for t in 0..k {
            d1[(i, t)] = inv_n * (2.0 * b[t] - c[t]);
            d2[(i, t)] = inv_n * (2.0 * a[t] - c[t]);
            d0[(i, t)] = inv_n * (-b[t] - a[t]);
        }
    }
    Ok(InfoRegOutput {
        penalty,
        similarities: sims,
        dz1: u1.backward(&d1),
        dz2: u2.backward(&d2),
        dz0: u0.backward(&d0),
    })
}

/// Gradients of the combined objective for each projected view.
#[derive(Clone, Debug)]
pub struct TotalGradients {
    pub dz1: Matrix,
    pub dz2: Matrix,
    /// Absent when no adversarial view was supplied.
    pub dz_adv: Option<Matrix>,
    pub dz0: Matrix,
}

/// `L_con(Z1, Z2) + ε₁·L_con(Z1, Z_adv) + ε₂·L_I(Z1, Z2, Z0)`.
///
/// When `z_adv` is `None` the adversarial term is recorded as 0; callers use
/// this only with `ε₁ = 0`.
pub fn total_loss(
    z1: &Matrix,
    z2: &Matrix,
    z_adv: Option<&Matrix>,
    z0: &Matrix,
    tau: f64,
    eps1: f64,
    eps2: f64,
) -> Result<(LossBreakdown, TotalGradients)> {
    ensure!(eps1 >= 0.0 && eps2 >= 0.0, Domain, "loss coefficients must be non-negative");
    let base = contrastive_loss(z1, z2, tau)?;
    let info = info_regularization(z1, z2, z0)?;

    let mut dz1 = base.dz1;
    let mut dz2 = base.dz2;
    dz1.add_scaled(&info.dz1, eps2);
    dz2.add_scaled(&info.dz2, eps2);
    let dz0 = info.dz0.scale(eps2);

    let (adv_loss, dz_adv) = match z_adv {
        Some(za) => {
            let adv = contrastive_loss(z1, za, tau)?;
            dz1.add_scaled(&adv.dz1, eps1);
            (adv.loss, Some(adv.dz2.scale(eps1)))
        }
        None => (0.0, None),
    };
    let breakdown = LossBreakdown::new(base.loss, adv_loss, info.penalty, eps1, eps2);
    Ok((
        breakdown,
        TotalGradients {
            dz1,
            dz2,
            dz_adv,
            dz0,
        },
    ))
}


#[cfg(test)]
mod proptests {
    use super::*;
    use crate::numerics::RngStream;
    use proptest::prelude::*;

    fn pair(seed: u64, n: usize, k: usize) -> (Matrix, Matrix) {
        let mut rng = RngStream::new(seed);
        (
            Matrix::from_fn(n, k, |_, _| rng.gaussian()),
            Matrix::from_fn(n, k, |_, _| rng.gaussian()),
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn contrastive_symmetric_and_nonnegative(seed in any::<u64>(), n in 1usize..9, k in 1usize..5, tau in 0.05f64..2.0) {
            let (a, b) = pair(seed, n, k);
            let l1 = contrastive_loss(&a, &b, tau).unwrap().loss;
            let l2 = contrastive_loss(&b, &a, tau).unwrap().loss;
            prop_assert!((l1 - l2).abs() <= 1e-12);
            prop_assert!(l1 >= 0.0);
            if n > 1 {
                prop_assert!(l1 > 0.0);
            }
        }

        #[test]
        fn contrastive_rotation_invariant(seed in any::<u64>(), n in 2usize..8, angle in 0.0f64..std::f64::consts::TAU) {
            let (a, b) = pair(seed, n, 2);
            let rot = Matrix::from_rows(&[vec![angle.cos(), angle.sin()], vec![-angle.sin(), angle.cos()]]);
            let l = contrastive_loss(&a, &b, 0.5).unwrap().loss;
            let lr = contrastive_loss(&a.matmul(&rot), &b.matmul(&rot), 0.5).unwrap().loss;
            prop_assert!((l - lr).abs() < 1e-10);
        }

        #[test]
        fn info_reg_scale_invariant(seed in any::<u64>(), n in 1usize..8) {
            let mut rng = RngStream::new(seed);
            let z1 = Matrix::from_fn(n, 3, |_, _| rng.gaussian());
            let z2 = Matrix::from_fn(n, 3, |_, _| rng.gaussian());
            let z0 = Matrix::from_fn(n, 3, |_, _| rng.gaussian());
            let p = info_regularization(&z1, &z2, &z0).unwrap().penalty;
            prop_assert!(p >= 0.0);
            let scales: Vec<f64> = (0..n).map(|_| 0.1 + 10.0 * rng.uniform()).collect();
            let rescale = |z: &Matrix| Matrix::from_fn(n, 3, |i, j| z[(i, j)] * scales[i]);
            let q = info_regularization(&rescale(&z1), &rescale(&z2), &rescale(&z0)).unwrap().penalty;
            prop_assert!((p - q).abs() < 1e-12);
        }
    }
}
