use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Designs whose column-scaled condition estimate exceeds this are rejected.
pub const MAX_CONDITION: f64 = 1e8;

/// Least-squares solution of `design · c ≈ obs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSolution {
    pub coefficients: Vec<f64>,
    /// `‖obs − design·c‖₂ / √rows`.
    pub rmse: f64,
    /// 2-norm condition number of the column-equilibrated design.
    pub condition: f64,
    pub residuals: Vec<f64>,
}

/// Solves the linear least-squares problem with a Householder QR of the
/// column-equilibrated design.
///
/// The condition estimate is the ratio of extreme singular values of the
/// triangular factor; designs above [`MAX_CONDITION`] fail with
/// [`Error::DegenerateDesign`].
pub fn solve_linear(design: &DMatrix<f64>, obs: &[f64]) -> Result<LinearSolution> {
    let (rows, cols) = design.shape();
    if cols == 0 || rows < cols {
        return Err(Error::Argument(format!(
            "least squares needs rows >= columns >= 1, got {rows}x{cols}"
        )));
    }
    if obs.len() != rows {
        return Err(Error::Argument(format!(
            "{} observations for {rows} design rows",
            obs.len()
        )));
    }

    let norms: Vec<f64> = design.column_iter().map(|c| c.norm()).collect();
    if norms.iter().any(|n| !(n.is_finite() && *n > 0.0)) {
        return Err(Error::DegenerateDesign {
            condition: f64::INFINITY,
        });
    }
    let mut scaled = design.clone();
    for (j, n) in norms.iter().enumerate() {
        scaled.column_mut(j).scale_mut(1.0 / n);
    }

    let qr = scaled.qr();
    let r = qr.r();
    let sv = r.clone().singular_values();
    let (smax, smin) = sv.iter().fold((0.0f64, f64::INFINITY), |(hi, lo), &s| (hi.max(s), lo.min(s)));
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::DegenerateDesign { condition });
    }

    let y = DVector::from_column_slice(obs);
    let mut qty = y.clone();
    qr.q_tr_mul(&mut qty);
    let head = qty.rows(0, cols).into_owned();
    let z = r
        .solve_upper_triangular(&head)
        .ok_or(Error::DegenerateDesign { condition })?;
    let coefficients: Vec<f64> = z.iter().zip(&norms).map(|(zi, n)| zi / n).collect();

    let fitted = design * DVector::from_column_slice(&coefficients);
    let residuals: Vec<f64> = y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
    let rmse = (residuals.iter().map(|r| r * r).sum::<f64>() / rows as f64).sqrt();
    Ok(LinearSolution {
        coefficients,
        rmse,
        condition,
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let ones = DMatrix::from_element(3, 1, 1.0);
        let s = solve_linear(&ones, &[2.0, 2.0, 2.0]).unwrap();
        assert!((s.coefficients[0] - 2.0).abs() < 1e-15);
        assert!(s.rmse < 1e-15);

        let line = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0]);
        let s = solve_linear(&line, &[0.0, 3.0, 6.0]).unwrap();
        assert!(s.coefficients[0].abs() < 1e-14);
        assert!((s.coefficients[1] - 3.0).abs() < 1e-14);
        assert!(s.rmse < 1e-14);

        let ones = DMatrix::from_element(2, 1, 1.0);
        let s = solve_linear(&ones, &[0.0, 1.0]).unwrap();
        assert!((s.coefficients[0] - 0.5).abs() < 1e-15);
        assert!((s.rmse - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_shapes() {
        let m = DMatrix::from_element(1, 2, 1.0);
        assert!(matches!(solve_linear(&m, &[1.0]), Err(Error::Argument(_))));
        let m = DMatrix::from_element(3, 1, 1.0);
        assert!(matches!(solve_linear(&m, &[1.0]), Err(Error::Argument(_))));
    }

    #[test]
    fn flags_rank_deficiency() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        match solve_linear(&m, &[1.0, 2.0, 3.0]) {
            Err(Error::DegenerateDesign { condition }) => assert!(condition > MAX_CONDITION),
            other => panic!("expected degenerate design, got {other:?}"),
        }
        let zero = DMatrix::zeros(3, 1);
        assert!(matches!(solve_linear(&zero, &[1.0, 2.0, 3.0]), Err(Error::DegenerateDesign { .. })));
    }

    /// Normal equations solved by Cramer's rule; fine for well-conditioned 3x3 toys.
    fn normal_equations_3(a: &DMatrix<f64>, y: &[f64]) -> [f64; 3] {
        let mut g = [[0.0; 3]; 3];
        let mut b = [0.0; 3];
        for i in 0..a.nrows() {
            for j in 0..3 {
                b[j] += a[(i, j)] * y[i];
                for k in 0..3 {
                    g[j][k] += a[(i, j)] * a[(i, k)];
                }
            }
        }
        let det = |m: [[f64; 3]; 3]| {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        let d = det(g);
        let mut out = [0.0; 3];
        for (j, o) in out.iter_mut().enumerate() {
            let mut m = g;
            for k in 0..3 {
                m[k][j] = b[k];
            }
            *o = det(m) / d;
        }
        out
    }

    proptest! {
        #[test]
        fn matches_normal_equation_oracle(
            entries in proptest::collection::vec(-1.0f64..1.0, 24),
            obs in proptest::collection::vec(-10.0f64..10.0, 8),
        ) {
            // Diagonally boosted so the toy system is well conditioned.
            let mut a = DMatrix::from_row_slice(8, 3, &entries);
            for j in 0..3 {
                a[(j, j)] += 3.0;
            }
            let s = solve_linear(&a, &obs).unwrap();
            let oracle = normal_equations_3(&a, &obs);
            for j in 0..3 {
                prop_assert!((s.coefficients[j] - oracle[j]).abs() < 1e-10,
                    "coef {}: {} vs {}", j, s.coefficients[j], oracle[j]);
            }
        }
    }
}
