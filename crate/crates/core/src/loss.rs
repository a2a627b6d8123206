//! Triplet, regression and L1-sparsity losses and the offset target encoding.

use alloc::format;

use crate::error::{shape_err, Error, Result};
use crate::graph::WeightedAdjacency;
use crate::heads::RegressionOffsets;
use crate::linalg::Matrix;
use crate::segment::Segment;

/// `Σᵢ max(0, γ − s_p,i + s_n,i) + λ‖θ‖₂²`. The hinge is summed over the
/// batch, not averaged.
pub fn triplet_loss(
    s_pos: &[f64],
    s_neg: &[f64],
    theta: &[&Matrix],
    margin: f64,
    l2: f64,
) -> Result<f64> {
    if s_pos.len() != s_neg.len() || s_pos.is_empty() {
        return Err(shape_err(
            "triplet_loss",
            format!(
                "{} positive and {} negative scores",
                s_pos.len(),
                s_neg.len()
            ),
        ));
    }
    let hinge: f64 = s_pos
        .iter()
        .zip(s_neg)
        .map(|(p, n)| (margin - p + n).max(0.0))
        .sum();
    let reg: f64 = theta.iter().map(|m| m.sum_squares()).sum();
    Ok(hinge + l2 * reg)
}

/// Whether a triplet's hinge is strictly active; the kink counts as inactive.
#[inline]
pub fn hinge_active(s_pos: f64, s_neg: f64, margin: f64) -> bool {
    margin - s_pos + s_neg > 0.0
}

/// Regression targets of `proposal` against ground truth `gt`:
/// `T_c* = (loc − loc*)/len*`, `T_l* = ln(len/len*)`.
pub fn encode_targets(proposal: &Segment, gt: &Segment) -> Result<RegressionOffsets> {
    if !(proposal.len() > 0.0) || !(gt.len() > 0.0) {
        return Err(Error::InvalidInput(
            "segment lengths must be positive".into(),
        ));
    }
    Ok(RegressionOffsets {
        t_c: (proposal.loc() - gt.loc()) / gt.len(),
        t_l: libm::log(proposal.len() / gt.len()),
    })
}

/// `(1/N) Σᵢ |T_c − T_c*| + |T_l − T_l*|`.
pub fn regression_loss(pred: &[RegressionOffsets], target: &[RegressionOffsets]) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(shape_err(
            "regression_loss",
            format!("{} predictions and {} targets", pred.len(), target.len()),
        ));
    }
    let total: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| libm::fabs(p.t_c - t.t_c) + libm::fabs(p.t_l - t.t_l))
        .sum();
    Ok(total / pred.len() as f64)
}

/// Sign with `sign(0) = 0`, the subgradient convention used for |x|.
#[inline]
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean absolute entry of the adjacency, `(1/4T²) Σᵢⱼ |Â[i,j]|`.
pub fn l1_sparsity_loss(adj: &WeightedAdjacency) -> f64 {
    l1_mean(adj.matrix())
}

pub(crate) fn l1_mean(m: &Matrix) -> f64 {
    m.as_slice().iter().map(|v| libm::fabs(*v)).sum::<f64>() / m.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn triplet_examples() {
        let zero = Matrix::zeros(2, 2);
        assert_eq!(
            triplet_loss(&[0.9], &[0.1], &[&zero], 0.5, 5e-3).unwrap(),
            0.0
        );
        assert_abs_diff_eq!(
            triplet_loss(&[0.2], &[0.3], &[&zero], 0.5, 5e-3).unwrap(),
            0.6,
            epsilon = 1e-15
        );
        // ‖θ‖² = 4
        let theta = Matrix::from_rows(&[[1.0, 1.0], [1.0, -1.0]]).unwrap();
        assert_abs_diff_eq!(
            triplet_loss(&[0.9], &[0.1], &[&theta], 0.5, 5e-3).unwrap(),
            0.02,
            epsilon = 1e-15
        );
        assert!(triplet_loss(&[0.1, 0.2], &[0.3], &[], 0.5, 0.0).is_err());
    }

    #[test]
    fn target_examples() {
        let p = Segment::new(40.0, 60.0).unwrap();
        assert_eq!(
            encode_targets(&p, &p).unwrap(),
            RegressionOffsets::new(0.0, 0.0)
        );
        let gt = Segment::new(40.0, 50.0).unwrap();
        let t = encode_targets(&p, &gt).unwrap();
        assert_abs_diff_eq!(t.t_c, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(t.t_l, core::f64::consts::LN_2, epsilon = 1e-15);
        let shifted = Segment::new(70.0, 90.0).unwrap();
        assert_eq!(encode_targets(&shifted, &p).unwrap().t_l, 0.0);
    }

    #[test]
    fn regression_examples() {
        let a = RegressionOffsets::new(0.3, -0.2);
        assert_eq!(regression_loss(&[a], &[a]).unwrap(), 0.0);
        assert_abs_diff_eq!(
            regression_loss(
                &[RegressionOffsets::new(0.5, 0.0)],
                &[RegressionOffsets::default()]
            )
            .unwrap(),
            0.5,
            epsilon = 1e-15
        );
        let preds = [
            RegressionOffsets::new(0.1, 0.1),
            RegressionOffsets::new(-0.2, 0.2),
        ];
        let targets = [RegressionOffsets::default(); 2];
        assert_abs_diff_eq!(
            regression_loss(&preds, &targets).unwrap(),
            0.3,
            epsilon = 1e-15
        );
        assert!(regression_loss(&preds, &targets[..1]).is_err());
    }

    #[test]
    fn sparsity_examples() {
        let zero = WeightedAdjacency::from_matrix(Matrix::zeros(4, 4)).unwrap();
        assert_eq!(l1_sparsity_loss(&zero), 0.0);
        let sat = WeightedAdjacency::from_matrix(Matrix::from_fn(4, 4, |i, j| {
            if (i + j) % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        }))
        .unwrap();
        assert_eq!(l1_sparsity_loss(&sat), 1.0);
        let m =
            WeightedAdjacency::from_matrix(Matrix::from_rows(&[[1.0, 0.5], [0.5, 1.0]]).unwrap())
                .unwrap();
        assert_eq!(l1_sparsity_loss(&m), 0.75);
    }
}
