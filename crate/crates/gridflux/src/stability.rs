//! Decentralized small-signal stability assessment with vector Lyapunov
//! functions.
//!
//! Each subsystem certifies itself by solving `A_iᵀH_i + H_iA_i = -G_i` and
//! publishing only its eigen-extremes; interactions enter through the
//! spectral norms of the coupling blocks. The comparison matrix
//!
//! ```text
//! w_ii = -λ_min(G_i) / (2 λ_max(H_i)) + ‖A_ii‖₂
//! w_ij = ‖A_ij‖₂                                  (i ≠ j)
//! ```
//!
//! is Metzler by construction. The interconnection is certified stable when
//! `-W` is a nonsingular M-matrix (all leading principal minors positive);
//! strict row diagonal dominance is reported as a secondary flag. The test
//! is one-sided: an indeterminate verdict carries no instability claim.

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::numerics::{
    eig_extremes_sym, max_eigenvalue_real_part, solve_lyapunov, spectral_norm, validate_finite,
};
use crate::{Error, Result};

/// One subsystem: its dynamics matrix and the Lyapunov weight.
#[derive(Debug, Clone)]
pub struct SubsystemSpec {
    pub id: String,
    pub a: DMatrix<f64>,
    /// Symmetric positive definite weight; identity when no selection rule
    /// is available.
    pub g: DMatrix<f64>,
}

impl SubsystemSpec {
    pub fn with_identity_weight(id: impl Into<String>, a: DMatrix<f64>) -> Self {
        let n = a.nrows();
        Self {
            id: id.into(),
            a,
            g: DMatrix::identity(n, n),
        }
    }
}

/// A coupling block: `ẋ_i += block · x_j`. Self blocks (`i == j`) model
/// reduction error bounds and default to zero when absent.
#[derive(Debug, Clone)]
pub struct Coupling {
    pub i: usize,
    pub j: usize,
    pub block: DMatrix<f64>,
}

/// Assessment verdict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// `-W` is a nonsingular M-matrix: the interconnection is certified
    /// stable.
    Stable,
    /// The certificate failed; no conclusion (the test is sufficient only).
    Indeterminate,
    /// At least one subsystem is not Hurwitz on its own.
    SubsystemUnstable,
}

/// Per-subsystem certificate material.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubsystemCertificate {
    pub id: String,
    pub hurwitz: bool,
    /// λ_min of the weight G_i.
    pub lambda_min_g: Option<f64>,
    /// λ_max of the Lyapunov solution H_i.
    pub lambda_max_h: Option<f64>,
}

/// Result of a decentralized stability assessment.
#[derive(Debug, Clone)]
pub struct StabilityReport {
    /// Comparison matrix W (empty when a subsystem already failed).
    pub w: DMatrix<f64>,
    pub subsystems: Vec<SubsystemCertificate>,
    pub verdict: Verdict,
    /// Secondary flag: strict row diagonal dominance of W
    /// (`-w_ii > Σ_{j≠i} w_ij` for every row).
    pub strictly_row_dominant: bool,
    /// Full interconnected spectrum, if requested through
    /// [`oracle_full_spectrum`].
    pub oracle_spectrum: Option<Vec<Complex<f64>>>,
}

fn coupling_table(
    subsystems: &[SubsystemSpec],
    couplings: &[Coupling],
) -> Result<Vec<Vec<Option<DMatrix<f64>>>>> {
    let n = subsystems.len();
    let mut table: Vec<Vec<Option<DMatrix<f64>>>> = vec![(0..n).map(|_| None).collect(); n];
    for c in couplings {
        if c.i >= n || c.j >= n {
            return Err(Error::DimensionMismatch {
                context: format!("coupling ({}, {}) out of range for {n} subsystems", c.i, c.j),
            });
        }
        let (ri, cj) = (subsystems[c.i].a.nrows(), subsystems[c.j].a.nrows());
        if c.block.nrows() != ri || c.block.ncols() != cj {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "coupling ({}, {}): block is {}x{}, expected {ri}x{cj}",
                    c.i,
                    c.j,
                    c.block.nrows(),
                    c.block.ncols()
                ),
            });
        }
        validate_finite(&c.block, "coupling block")?;
        if table[c.i][c.j].is_some() {
            return Err(Error::Config(format!(
                "duplicate coupling block ({}, {})",
                c.i, c.j
            )));
        }
        table[c.i][c.j] = Some(c.block.clone());
    }
    Ok(table)
}

/// Leading principal minors of `-W` must all be positive for `-W` to be a
/// nonsingular M-matrix (the connective-stability certificate).
fn is_nonsingular_m_matrix(neg_w: &DMatrix<f64>) -> bool {
    let n = neg_w.nrows();
    (1..=n).all(|k| neg_w.view((0, 0), (k, k)).clone_owned().determinant() > 0.0)
}

/// Assess an interconnection of subsystems from decentralized certificates.
///
/// Lyapunov solves run per subsystem and are independent (they could execute
/// in parallel); the W assembly is the only join point.
pub fn assess(subsystems: &[SubsystemSpec], couplings: &[Coupling]) -> Result<StabilityReport> {
    if subsystems.is_empty() {
        return Err(Error::Config("assess: no subsystems given".into()));
    }
    let n = subsystems.len();
    let table = coupling_table(subsystems, couplings)?;

    let mut certs = Vec::with_capacity(n);
    let mut ratios = Vec::with_capacity(n);
    let mut any_unstable = false;
    for sub in subsystems {
        if !sub.a.is_square() {
            return Err(Error::DimensionMismatch {
                context: format!("subsystem {}: A must be square", sub.id),
            });
        }
        validate_finite(&sub.a, "subsystem matrix")?;
        if max_eigenvalue_real_part(&sub.a) >= 0.0 {
            any_unstable = true;
            certs.push(SubsystemCertificate {
                id: sub.id.clone(),
                hurwitz: false,
                lambda_min_g: None,
                lambda_max_h: None,
            });
            ratios.push(f64::NAN);
            continue;
        }
        let h = solve_lyapunov(&sub.a, &sub.g)?;
        let (g_min, _) = eig_extremes_sym(&sub.g)?;
        let (_, h_max) = eig_extremes_sym(&h)?;
        certs.push(SubsystemCertificate {
            id: sub.id.clone(),
            hurwitz: true,
            lambda_min_g: Some(g_min),
            lambda_max_h: Some(h_max),
        });
        ratios.push(g_min / h_max);
    }

    if any_unstable {
        return Ok(StabilityReport {
            w: DMatrix::zeros(0, 0),
            subsystems: certs,
            verdict: Verdict::SubsystemUnstable,
            strictly_row_dominant: false,
            oracle_spectrum: None,
        });
    }

    let mut w = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let norm = table[i][j].as_ref().map_or(0.0, spectral_norm);
            w[(i, j)] = if i == j { -0.5 * ratios[i] + norm } else { norm };
        }
    }

    let strictly_row_dominant = (0..n).all(|i| {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| w[(i, j)]).sum();
        -w[(i, i)] > off
    });
    let verdict = if is_nonsingular_m_matrix(&(-&w)) {
        Verdict::Stable
    } else {
        Verdict::Indeterminate
    };

    Ok(StabilityReport {
        w,
        subsystems: certs,
        verdict,
        strictly_row_dominant,
        oracle_spectrum: None,
    })
}

/// Assemble the full interconnected matrix from subsystem and coupling
/// blocks.
pub fn assemble(subsystems: &[SubsystemSpec], couplings: &[Coupling]) -> Result<DMatrix<f64>> {
    let table = coupling_table(subsystems, couplings)?;
    let dims: Vec<usize> = subsystems.iter().map(|s| s.a.nrows()).collect();
    let offsets: Vec<usize> = dims
        .iter()
        .scan(0, |acc, &d| {
            let o = *acc;
            *acc += d;
            Some(o)
        })
        .collect();
    let total: usize = dims.iter().sum();
    let mut full = DMatrix::<f64>::zeros(total, total);
    for (i, sub) in subsystems.iter().enumerate() {
        full.view_mut((offsets[i], offsets[i]), (dims[i], dims[i]))
            .copy_from(&sub.a);
    }
    for (i, row) in table.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            if let Some(block) = cell {
                let mut view = full.view_mut((offsets[i], offsets[j]), (dims[i], dims[j]));
                view += block;
            }
        }
    }
    Ok(full)
}

/// Eigenvalues of the assembled interconnected matrix: the validation
/// oracle for the sufficient condition (total dimension is expected to stay
/// within a few hundred states).
pub fn oracle_full_spectrum(
    subsystems: &[SubsystemSpec],
    couplings: &[Coupling],
) -> Result<Vec<Complex<f64>>> {
    let total: usize = subsystems.iter().map(|s| s.a.nrows()).sum();
    if total > 200 {
        return Err(Error::Config(format!(
            "full-spectrum oracle is limited to 200 states, got {total}"
        )));
    }
    let full = assemble(subsystems, couplings)?;
    crate::numerics::complex_eigenvalues(&full)
}
