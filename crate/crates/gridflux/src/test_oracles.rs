//! Independent numerical oracles used only by unit tests.
//!
//! These deliberately avoid the production code paths they are used to
//! check: the matrix exponential is scaling-and-squaring with a Taylor
//! kernel (vs. RK4 time stepping), and the symmetric eigensolver is cyclic
//! Jacobi (vs. the SVD / nalgebra eigen routes).

use nalgebra::DMatrix;

/// exp(A·t) by scaling-and-squaring with a Taylor series kernel.
pub fn matrix_exp(a: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let at = a * t;
    let norm = at.iter().fold(0.0_f64, |acc, &x| acc.max(x.abs())) * n as f64;
    // Scale so the Taylor argument has norm below 1/2.
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = &at / 2.0_f64.powi(s as i32);

    let mut result = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    for k in 1..=30 {
        term = &term * &scaled / k as f64;
        result += &term;
    }
    for _ in 0..s {
        result = &result * result.clone();
    }
    result
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors in columns, in no
/// particular order.
pub fn jacobi_sym_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let mut a = m.clone();
    let mut v = DMatrix::<f64>::identity(n, n);

    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t_rot = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t_rot * t_rot + 1.0).sqrt();
                let s = t_rot * c;

                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let eigvals = (0..n).map(|i| a[(i, i)]).collect();
    (eigvals, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_exp_diagonal() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 2.0]);
        let e = matrix_exp(&a, 1.0);
        assert!((e[(0, 0)] - (-1.0_f64).exp()).abs() < 1e-12);
        assert!((e[(1, 1)] - 2.0_f64.exp()).abs() < 1e-10);
        assert!(e[(0, 1)].abs() < 1e-14);
    }

    #[test]
    fn jacobi_recovers_known_spectrum() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let (mut vals, _) = jacobi_sym_eigen(&m);
        vals.sort_by(f64::total_cmp);
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[1] - 3.0).abs() < 1e-12);
    }
}
