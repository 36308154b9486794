//! Dense linear-algebra kernels and the fixed-step integrator shared by all
//! higher layers.
//!
//! Everything here is a pure function of its inputs; values are immutable
//! after construction and safe to share across threads.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Max-abs entry of a matrix (the norm used by residual certificates).
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, &x| acc.max(x.abs()))
}

/// Reject matrices with NaN or infinite entries.
pub fn validate_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} contains non-finite entries")))
    }
}

/// Parlett-Reinsch balancing: a diagonal similarity `D⁻¹AD` that equalizes
/// row and column norms. Eigenvalues are unchanged; the QR iteration
/// converges far more reliably on the balanced matrix, and norm-based
/// certificates (coupling bounds, Lyapunov extremes) become meaningful on
/// badly scaled physical coordinates.
///
/// Returns the balanced matrix and the diagonal scales `d` such that
/// `balanced = D⁻¹ A D` with `D = diag(d)`.
pub fn balance(a: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let n = a.nrows();
    let mut m = a.clone();
    let mut scales = DVector::from_element(n, 1.0);
    let radix: f64 = 2.0;
    for _ in 0..100 {
        let mut converged = true;
        for i in 0..n {
            let mut c: f64 = (0..n).filter(|&j| j != i).map(|j| m[(j, i)].abs()).sum();
            let mut r: f64 = (0..n).filter(|&j| j != i).map(|j| m[(i, j)].abs()).sum();
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            while c < r / radix {
                c *= radix;
                r /= radix;
                f *= radix;
            }
            while c >= r * radix {
                c /= radix;
                r *= radix;
                f /= radix;
            }
            if c + r < 0.95 * s {
                converged = false;
                scales[i] *= f;
                for j in 0..n {
                    m[(i, j)] /= f;
                }
                for j in 0..n {
                    m[(j, i)] *= f;
                }
            }
        }
        if converged {
            break;
        }
    }
    (m, scales)
}

/// All eigenvalues of a general square matrix.
///
/// Balances first and caps the Schur iteration (the unbounded iteration can
/// stall on badly scaled matrices), relaxing the tolerance once before
/// giving up.
pub fn complex_eigenvalues(a: &DMatrix<f64>) -> Result<Vec<nalgebra::Complex<f64>>> {
    let (balanced, _) = balance(a);
    for eps in [1e-13, 1e-9] {
        if let Some(schur) =
            nalgebra::linalg::Schur::try_new(balanced.clone(), eps, 100_000)
        {
            return Ok(schur.complex_eigenvalues().iter().cloned().collect());
        }
    }
    Err(Error::Config(format!(
        "eigenvalue iteration failed to converge for a {}x{} matrix",
        a.nrows(),
        a.ncols()
    )))
}

/// Largest eigenvalue real part of a general square matrix.
pub fn max_eigenvalue_real_part(a: &DMatrix<f64>) -> f64 {
    complex_eigenvalues(a)
        .map(|eigs| eigs.iter().fold(f64::NEG_INFINITY, |acc, ev| acc.max(ev.re)))
        .unwrap_or(f64::INFINITY)
}

/// Orthonormal basis of the left null space of `a`.
///
/// Returns `T` with orthonormal rows such that `T * a ≈ 0`; the row count
/// equals the number of singular values of `aᵀ` below `tol * σ_max`
/// (relative threshold). Rows are ordered by ascending singular value, so
/// the most exactly conserved direction comes first.
pub fn left_null_space(a: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    if tol <= 0.0 {
        return Err(Error::Config(format!(
            "null-space tolerance must be positive, got {tol}"
        )));
    }
    validate_finite(a, "left_null_space input")?;
    let n = a.nrows();

    // Left null space of A = right null space of Aᵀ. The thin SVD of Aᵀ
    // only spans all of R^n when Aᵀ has at least n columns, so pad wide
    // matrices... Aᵀ is (cols × rows); pad A with zero columns when A is
    // tall so that Aᵀ keeps all `rows` right-singular directions.
    let a_work = if a.nrows() > a.ncols() {
        let mut padded = DMatrix::<f64>::zeros(n, n);
        padded.view_mut((0, 0), (n, a.ncols())).copy_from(a);
        padded
    } else {
        a.clone()
    };

    let svd = a_work.transpose().svd(false, true);
    let v_t = svd.v_t.expect("SVD requested with right singular vectors");
    let sigma = &svd.singular_values;
    let sigma_max = sigma.iter().fold(0.0_f64, |acc, &s| acc.max(s));

    if sigma_max == 0.0 {
        // Zero matrix: every direction is conserved.
        return Ok(DMatrix::identity(n, n));
    }

    let mut picked: Vec<usize> = (0..sigma.len())
        .filter(|&i| sigma[i] < tol * sigma_max)
        .collect();
    picked.sort_by(|&i, &j| sigma[i].total_cmp(&sigma[j]));

    if picked.is_empty() {
        let smallest_rel = sigma.iter().fold(f64::INFINITY, |acc, &s| acc.min(s)) / sigma_max;
        return Err(Error::EmptyNullSpace { tol, smallest_rel });
    }

    let mut t = DMatrix::<f64>::zeros(picked.len(), n);
    for (row, &i) in picked.iter().enumerate() {
        t.row_mut(row).copy_from(&v_t.row(i));
    }
    Ok(t)
}

/// Solve the continuous Lyapunov equation `AᵀH + HA = -G`.
///
/// `A` must be Hurwitz and `G` symmetric positive definite; the returned `H`
/// is symmetric positive definite and `v(x) = xᵀHx` is a Lyapunov function
/// for `ẋ = Ax`. Solved by Kronecker vectorization, which is adequate for
/// the subsystem sizes this crate targets (tens of states).
pub fn solve_lyapunov(a: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if !a.is_square() || !g.is_square() || g.nrows() != n {
        return Err(Error::DimensionMismatch {
            context: format!(
                "solve_lyapunov: A is {}x{}, G is {}x{}",
                a.nrows(),
                a.ncols(),
                g.nrows(),
                g.ncols()
            ),
        });
    }
    validate_finite(a, "solve_lyapunov A")?;
    let (g_min, _) = eig_extremes_sym(g)?;
    if g_min <= 0.0 {
        return Err(Error::NotPositiveDefinite { min_eig: g_min });
    }
    let max_re = max_eigenvalue_real_part(a);
    if max_re >= 0.0 {
        return Err(Error::NotHurwitz { real_part: max_re });
    }

    // vec(AᵀH) = (I ⊗ Aᵀ) vec(H), vec(HA) = (Aᵀ ⊗ I) vec(H)  (column-major vec)
    let at = a.transpose();
    let id = DMatrix::<f64>::identity(n, n);
    let m = id.kronecker(&at) + at.kronecker(&id);
    let rhs = DVector::from_column_slice((-g).as_slice());
    let h_vec = m.lu().solve(&rhs).ok_or(Error::SolverSingular)?;

    let h_raw = DMatrix::from_column_slice(n, n, h_vec.as_slice());
    let h = (&h_raw + h_raw.transpose()) * 0.5;

    let residual = max_abs(&(a.transpose() * &h + &h * a + g));
    if residual > 1e-8 * max_abs(g) {
        return Err(Error::SolverSingular);
    }
    Ok(h)
}

/// Extreme eigenvalues `(λ_min, λ_max)` of a symmetric matrix.
pub fn eig_extremes_sym(m: &DMatrix<f64>) -> Result<(f64, f64)> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            context: format!("eig_extremes_sym: matrix is {}x{}", m.nrows(), m.ncols()),
        });
    }
    validate_finite(m, "eig_extremes_sym input")?;
    let deviation = max_abs(&(m - m.transpose()));
    if deviation > 1e-12 * max_abs(m) {
        return Err(Error::NotSymmetric { deviation });
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &x| a.min(x));
    let max = eig
        .eigenvalues
        .iter()
        .fold(f64::NEG_INFINITY, |a, &x| a.max(x));
    Ok((min, max))
}

/// Spectral norm `λ_max^(1/2)(MᵀM)`, i.e. the largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let gram = m.transpose() * m;
    let (_, l_max) = eig_extremes_sym(&gram).expect("Gram matrix is symmetric");
    l_max.max(0.0).sqrt()
}

/// Signal returned by an rhs closure when a guard predicate fails.
#[derive(Debug, Clone)]
pub struct GuardTrip(pub String);

/// Right-hand-side evaluation result.
pub type RhsResult = std::result::Result<(), GuardTrip>;

/// A fixed-step initial value problem `ẋ = f(t, x)`.
///
/// The rhs writes the derivative into `dx` and may signal a guard trip
/// (division floor violated, etc.); the integrator converts trips into
/// [`Error::GuardTripped`] stamped with the step start time.
pub struct OdeProblem<F>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> RhsResult,
{
    pub dim: usize,
    pub x0: Vec<f64>,
    pub t0: f64,
    pub tf: f64,
    pub dt: f64,
    pub rhs: F,
}

/// Time-indexed state samples on the uniform grid `t0, t0+dt, …, tf`.
#[derive(Debug, Clone)]
pub struct RawTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

/// Scratch buffers for a classical RK4 step, reused across steps so the hot
/// loop does not allocate.
pub struct Rk4Scratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Scratch {
    pub fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    /// Advance `x` in place from `t` to `t + dt` with one classical RK4 step.
    #[allow(clippy::needless_range_loop)]
    pub fn step<F>(&mut self, rhs: &mut F, t: f64, x: &mut [f64], dt: f64) -> RhsResult
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> RhsResult,
    {
        let n = x.len();
        rhs(t, x, &mut self.k1)?;
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * dt * self.k1[i];
        }
        rhs(t + 0.5 * dt, &self.tmp, &mut self.k2)?;
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * dt * self.k2[i];
        }
        rhs(t + 0.5 * dt, &self.tmp, &mut self.k3)?;
        for i in 0..n {
            self.tmp[i] = x[i] + dt * self.k3[i];
        }
        rhs(t + dt, &self.tmp, &mut self.k4)?;
        for i in 0..n {
            x[i] += dt / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        Ok(())
    }
}

/// Number of RK4 steps implied by `(t0, tf, dt)`; the span must be an
/// integer number of steps to within 1e-6 relative.
pub fn step_count(t0: f64, tf: f64, dt: f64) -> Result<usize> {
    if dt <= 0.0 {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    if tf <= t0 {
        return Err(Error::Config(format!("tf ({tf}) must exceed t0 ({t0})")));
    }
    let raw = (tf - t0) / dt;
    let n = raw.round();
    if (raw - n).abs() > 1e-6 * n.max(1.0) {
        return Err(Error::Config(format!(
            "(tf - t0) = {} is not an integer multiple of dt = {dt}",
            tf - t0
        )));
    }
    Ok(n as usize)
}

/// Integrate a fixed-step problem with classical RK4.
///
/// Deterministic: identical inputs produce bitwise identical trajectories on
/// one platform. Guard trips and non-finite states abort with the offending
/// time stamp.
pub fn integrate<F>(problem: OdeProblem<F>) -> Result<RawTrajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> RhsResult,
{
    let OdeProblem {
        dim,
        x0,
        t0,
        tf,
        dt,
        mut rhs,
    } = problem;
    if x0.len() != dim {
        return Err(Error::DimensionMismatch {
            context: format!("integrate: x0 has {} entries, dim is {dim}", x0.len()),
        });
    }
    let n_steps = step_count(t0, tf, dt)?;

    let mut x = x0;
    let mut scratch = Rk4Scratch::new(dim);
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    times.push(t0);
    states.push(x.clone());

    for k in 0..n_steps {
        let t = t0 + k as f64 * dt;
        scratch
            .step(&mut rhs, t, &mut x, dt)
            .map_err(|GuardTrip(what)| Error::GuardTripped { t, what })?;
        let t_next = t0 + (k + 1) as f64 * dt;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { t: t_next });
        }
        times.push(t_next);
        states.push(x.clone());
    }
    Ok(RawTrajectory { times, states })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_oracles::{jacobi_sym_eigen, matrix_exp};

    #[test]
    fn left_null_space_by_inspection() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let t = left_null_space(&a, 1e-10).unwrap();
        assert_eq!(t.nrows(), 1);
        // T = [[0, 1]] up to sign.
        assert!(t[(0, 0)].abs() < 1e-12);
        assert!((t[(0, 1)].abs() - 1.0).abs() < 1e-12);
        assert!(max_abs(&(&t * &a)) < 1e-12);
    }

    #[test]
    fn left_null_space_full_rank_is_empty() {
        let a = DMatrix::<f64>::identity(3, 3);
        match left_null_space(&a, 1e-10) {
            Err(Error::EmptyNullSpace { .. }) => {}
            other => panic!("expected EmptyNullSpace, got {other:?}"),
        }
    }

    #[test]
    fn left_null_space_tall_matrix_includes_range_complement() {
        // 3x1 column [1, 0, 0]: left null space is the 2-dim complement.
        let a = DMatrix::from_row_slice(3, 1, &[1.0, 0.0, 0.0]);
        let t = left_null_space(&a, 1e-10).unwrap();
        assert_eq!(t.nrows(), 2);
        assert!(max_abs(&(&t * &a)) < 1e-12);
        // Rows orthonormal.
        let gram = &t * t.transpose();
        assert!(max_abs(&(gram - DMatrix::<f64>::identity(2, 2))) < 1e-12);
    }

    #[test]
    fn left_null_space_matches_independent_gram_oracle() {
        // Rank-2 4x4 → 2-dim left null space; dimension cross-checked by a
        // Jacobi eigendecomposition of A·Aᵀ (independent of the SVD path).
        let b = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 0.5, -1.0, 3.0, 0.25, -2.0, 1.5]);
        let c = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, -1.0, 2.0, 0.0, 3.0, 1.0, -0.5]);
        let a = &b * &c;
        let t = left_null_space(&a, 1e-9).unwrap();

        let gram = &a * a.transpose();
        let (eigvals, _) = jacobi_sym_eigen(&gram);
        let lam_max = eigvals.iter().cloned().fold(0.0_f64, f64::max);
        let null_dim = eigvals.iter().filter(|&&l| l < 1e-12 * lam_max).count();
        assert_eq!(t.nrows(), null_dim);
        assert_eq!(null_dim, 2);
        assert!(max_abs(&(&t * &a)) <= 1e-9 * max_abs(&a));
    }

    #[test]
    fn lyapunov_diagonal_case() {
        let a = DMatrix::from_diagonal_element(2, 2, -1.0);
        let g = DMatrix::from_diagonal_element(2, 2, 2.0);
        let h = solve_lyapunov(&a, &g).unwrap();
        assert!(max_abs(&(&h - DMatrix::<f64>::identity(2, 2))) < 1e-12);
    }

    #[test]
    fn lyapunov_known_solution() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -1.0]);
        let g = DMatrix::<f64>::identity(2, 2);
        let h = solve_lyapunov(&a, &g).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.5, 0.5, 0.5, 1.0]);
        assert!(max_abs(&(&h - expected)) < 1e-10);
        // Residual certificate; symmetry is enforced exactly as stored.
        let res = a.transpose() * &h + &h * &a + &g;
        assert!(max_abs(&res) <= 1e-8 * max_abs(&g));
        assert_eq!(h, h.transpose());
    }

    #[test]
    fn lyapunov_rejects_marginal_matrix() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, -1.0]);
        let g = DMatrix::<f64>::identity(2, 2);
        match solve_lyapunov(&a, &g) {
            Err(Error::NotHurwitz { .. }) => {}
            other => panic!("expected NotHurwitz, got {other:?}"),
        }
    }

    #[test]
    fn lyapunov_rejects_indefinite_weight() {
        let a = DMatrix::from_diagonal_element(2, 2, -1.0);
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]);
        match solve_lyapunov(&a, &g) {
            Err(Error::NotPositiveDefinite { .. }) => {}
            other => panic!("expected NotPositiveDefinite, got {other:?}"),
        }
    }

    #[test]
    fn eig_extremes_cases() {
        let d = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 5.0]);
        assert_eq!(eig_extremes_sym(&d).unwrap(), (2.0, 5.0));

        let i3 = DMatrix::<f64>::identity(3, 3);
        let (lo, hi) = eig_extremes_sym(&i3).unwrap();
        assert!((lo - 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);

        // Characteristic polynomial of [[2,1],[1,2]]: (λ-2)² = 1 → λ ∈ {1, 3}.
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let (lo, hi) = eig_extremes_sym(&m).unwrap();
        assert!((lo - 1.0).abs() < 1e-10 && (hi - 3.0).abs() < 1e-10);
    }

    #[test]
    fn eig_extremes_rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        match eig_extremes_sym(&m) {
            Err(Error::NotSymmetric { .. }) => {}
            other => panic!("expected NotSymmetric, got {other:?}"),
        }
    }

    #[test]
    fn rk4_exponential_decay() {
        let traj = integrate(OdeProblem {
            dim: 1,
            x0: vec![1.0],
            t0: 0.0,
            tf: 1.0,
            dt: 0.01,
            rhs: |_t, x: &[f64], dx: &mut [f64]| {
                dx[0] = -x[0];
                Ok(())
            },
        })
        .unwrap();
        let x_end = traj.states.last().unwrap()[0];
        assert!((x_end - (-1.0_f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn rk4_constant_trajectory() {
        let traj = integrate(OdeProblem {
            dim: 2,
            x0: vec![3.25, -0.5],
            t0: 0.0,
            tf: 0.5,
            dt: 0.05,
            rhs: |_t, _x: &[f64], dx: &mut [f64]| {
                dx.fill(0.0);
                Ok(())
            },
        })
        .unwrap();
        for s in &traj.states {
            assert_eq!(s, &vec![3.25, -0.5]);
        }
    }

    #[test]
    fn rk4_fourth_order_convergence() {
        // Halving dt must cut the max error against exp(-t) by at least 8x.
        let run = |dt: f64| {
            let traj = integrate(OdeProblem {
                dim: 1,
                x0: vec![1.0],
                t0: 0.0,
                tf: 2.0,
                dt,
                rhs: |_t, x: &[f64], dx: &mut [f64]| {
                    dx[0] = -x[0];
                    Ok(())
                },
            })
            .unwrap();
            traj.times
                .iter()
                .zip(&traj.states)
                .map(|(t, s)| (s[0] - (-t).exp()).abs())
                .fold(0.0_f64, f64::max)
        };
        let coarse = run(0.1);
        let fine = run(0.05);
        assert!(
            coarse / fine >= 8.0,
            "convergence ratio {} below 8",
            coarse / fine
        );
    }

    #[test]
    fn rk4_matches_matrix_exponential_oracle() {
        let a = DMatrix::from_row_slice(3, 3, &[-1.0, 2.0, 0.0, 0.0, -3.0, 1.0, 0.5, 0.0, -2.0]);
        let x0 = vec![1.0, -0.5, 0.25];
        let traj = integrate(OdeProblem {
            dim: 3,
            x0: x0.clone(),
            t0: 0.0,
            tf: 1.0,
            dt: 1e-3,
            rhs: |_t, x: &[f64], dx: &mut [f64]| {
                let xv = DVector::from_column_slice(x);
                let d = &a * xv;
                dx.copy_from_slice(d.as_slice());
                Ok(())
            },
        })
        .unwrap();
        let expected = matrix_exp(&a, 1.0) * DVector::from_column_slice(&x0);
        let got = DVector::from_column_slice(traj.states.last().unwrap());
        assert!((got - expected).amax() < 1e-9);
    }

    #[test]
    fn rk4_guard_trip_reports_time() {
        let result = integrate(OdeProblem {
            dim: 1,
            x0: vec![1.0],
            t0: 0.0,
            tf: 1.0,
            dt: 0.1,
            rhs: |t, _x: &[f64], dx: &mut [f64]| {
                if t > 0.35 {
                    return Err(GuardTrip("test guard".into()));
                }
                dx[0] = 0.0;
                Ok(())
            },
        });
        match result {
            Err(Error::GuardTripped { t, .. }) => assert!((0.25..0.45).contains(&t)),
            other => panic!("expected GuardTripped, got {other:?}"),
        }
    }

    #[test]
    fn rk4_is_deterministic() {
        let run = || {
            integrate(OdeProblem {
                dim: 2,
                x0: vec![1.0, 0.0],
                t0: 0.0,
                tf: 3.0,
                dt: 0.01,
                rhs: |t, x: &[f64], dx: &mut [f64]| {
                    dx[0] = x[1];
                    dx[1] = -x[0] - 0.1 * x[1] + (3.0 * t).sin();
                    Ok(())
                },
            })
            .unwrap()
        };
        let a = run();
        let b = run();
        for (sa, sb) in a.states.iter().zip(&b.states) {
            assert_eq!(sa, sb, "trajectories must be bitwise identical");
        }
    }
}
