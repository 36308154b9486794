//! The acceptance suite: every criterion the library must meet, each
//! pinned to its tolerance in code. Run through the `accept` CLI subcommand
//! or the `acceptance` integration test; both print one line per criterion.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::components::{build_standalone_model, DisturbanceSignal, GtgParams};
use crate::control::{energy_control_two_ts, AgcConfig, EnergyTwoTsGains};
use crate::intvar::{aggregate_rhs, extract_intvar, PortFlow};
use crate::numerics::{eig_extremes_sym, integrate, max_abs, solve_lyapunov, OdeProblem};
use crate::sim::{
    default_rlc_fluct, default_rlc_step, default_two_area, run, two_area_stability_blocks,
    RlcControllerSpec, RunSummary, Scenario, ScenarioKind, SimSettings,
};
use crate::stability::{assess, oracle_full_spectrum, Coupling, SubsystemSpec, Verdict};

/// Outcome of one acceptance criterion.
#[derive(Debug, Clone)]
pub struct CriterionOutcome {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(id: usize, name: &'static str, passed: bool, detail: String) -> CriterionOutcome {
    CriterionOutcome {
        id,
        name,
        passed,
        detail,
    }
}

/// Tie-susceptance sweep fixture straddling the certificate transition.
pub const TIE_SWEEP: [f64; 10] = [
    5e-4, 1e-3, 2e-3, 4e-3, 8e-3, 1.6e-2, 5e-2, 0.2, 1.0, 5.0,
];

fn textbook_gtg() -> GtgParams {
    GtgParams {
        inertia: 10.0,
        damping: 1.0,
        turbine_time: 0.3,
        turbine_gain: 1.0,
        governor_time: 0.1,
        droop: 20.0,
        omega0: 377.0,
    }
}

/// Criterion 1: extracted transformations annihilate the model matrices and
/// islanded interaction variables hold their value over 10 s.
fn criterion_1() -> CriterionOutcome {
    let name = "interaction-variable extraction and islanded invariance";
    let run_one = |a: &DMatrix<f64>, x0: Vec<f64>| -> std::result::Result<(f64, f64), String> {
        let model = crate::components::StateSpaceModel {
            a: a.clone(),
            input: DMatrix::zeros(a.nrows(), 0),
            state_labels: vec![],
            input_labels: vec![],
        };
        let tr = extract_intvar(&model, 1e-9).map_err(|e| e.to_string())?;
        let rel_residual = tr.residual / max_abs(a).max(1e-300);
        if rel_residual > 1e-10 {
            return Err(format!("residual {rel_residual:e} above 1e-10"));
        }
        let a_owned = a.clone();
        let traj = integrate(OdeProblem {
            dim: a.nrows(),
            x0: x0.clone(),
            t0: 0.0,
            tf: 10.0,
            dt: 1e-3,
            rhs: move |_t, x: &[f64], dx: &mut [f64]| {
                let d = &a_owned * DVector::from_column_slice(x);
                dx.copy_from_slice(d.as_slice());
                Ok(())
            },
        })
        .map_err(|e| e.to_string())?;
        let z0 = tr.z(&x0)[0];
        let drift = traj
            .states
            .iter()
            .map(|s| (tr.z(s)[0] - z0).abs())
            .fold(0.0_f64, f64::max);
        Ok((rel_residual, drift / (1.0 + z0.abs())))
    };

    let standalone = build_standalone_model(&textbook_gtg(), 0.0).unwrap();
    let two_area = default_two_area(1.0, DisturbanceSignal::None, None);
    let area = crate::components::build_area_model(&two_area.area1).unwrap();

    let mut details = Vec::new();
    let mut passed = true;
    for (label, a, x0) in [
        ("standalone", &standalone.a, vec![0.01, -0.02, 0.005, 0.3]),
        (
            "area",
            &area.ss.a,
            vec![0.01, -0.02, 0.005, -0.01, 0.03, 0.0, 0.4, -0.2],
        ),
    ] {
        match run_one(a, x0) {
            Ok((res, drift)) => {
                let ok = drift <= 1e-9;
                passed &= ok;
                details.push(format!("{label}: residual {res:.1e}, drift {drift:.1e}"));
            }
            Err(e) => {
                passed = false;
                details.push(format!("{label}: {e}"));
            }
        }
    }
    outcome(1, name, passed, details.join("; "))
}

/// Criterion 2: the projection and input-integral routes to z agree along
/// the two-area fluctuation scenario.
fn criterion_2() -> CriterionOutcome {
    let name = "interaction-variable rate identity (two-route)";
    let scenario = Scenario {
        scenario: ScenarioKind::TwoAreaFreq(default_two_area(
            2.0,
            DisturbanceSignal::Fluctuation {
                sigma: 0.05,
                bandwidth_hz: 5.0,
                seed: 42,
            },
            None,
        )),
        sim: SimSettings {
            dt: 2.5e-4,
            tf: 10.0,
            output_every: 40,
        },
        seed: 42,
    };
    match run(&scenario) {
        Ok((_, s)) => {
            let worst = s.conservation_residual_max;
            outcome(
                2,
                name,
                worst <= 1e-6,
                format!("max |T·x − ∫ż| = {worst:.2e} (bound 1e-6)"),
            )
        }
        Err(e) => outcome(2, name, false, e.to_string()),
    }
}

/// Criterion 3: Lyapunov solver residual and positivity over 100 randomized
/// Hurwitz instances up to n = 20.
fn criterion_3() -> CriterionOutcome {
    let name = "Lyapunov solver on randomized Hurwitz instances";
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst_residual_rel = 0.0_f64;
    let mut worst_h_min = f64::INFINITY;
    for trial in 0..100 {
        let n = rng.random_range(2..=20);
        // Symmetric negative definite part fixes the spectral abscissa; an
        // arbitrary skew part cannot move it.
        let raw = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let q = raw.qr().q();
        let d = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| -rng.random_range(0.2..4.0)));
        let sym = &q * d * q.transpose();
        let skew_raw = DMatrix::from_fn(n, n, |_, _| rng.random_range(-2.0..2.0));
        let a = sym + (&skew_raw - skew_raw.transpose()) * 0.5;

        let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let g = &b * b.transpose() + DMatrix::identity(n, n) * 0.1;

        let h = match solve_lyapunov(&a, &g) {
            Ok(h) => h,
            Err(e) => return outcome(3, name, false, format!("trial {trial}: {e}")),
        };
        let residual = max_abs(&(a.transpose() * &h + &h * &a + &g)) / max_abs(&g);
        worst_residual_rel = worst_residual_rel.max(residual);
        let (h_min, _) = eig_extremes_sym(&h).unwrap();
        worst_h_min = worst_h_min.min(h_min);
    }
    let passed = worst_residual_rel <= 1e-8 && worst_h_min > 0.0;
    outcome(
        3,
        name,
        passed,
        format!(
            "worst relative residual {worst_residual_rel:.2e} (bound 1e-8), min λ(H) {worst_h_min:.2e}"
        ),
    )
}

/// Criterion 4: zero false positives of the decentralized test, on random
/// instances, hand fixtures, and the tie sweep.
fn criterion_4() -> CriterionOutcome {
    let name = "stability-test soundness (random + fixtures + tie sweep)";
    let mut details = Vec::new();

    // Hand-computable fixtures.
    let a = DMatrix::from_diagonal_element(2, 2, -1.0);
    let g = DMatrix::from_diagonal_element(2, 2, 2.0);
    let pair = vec![
        SubsystemSpec {
            id: "1".into(),
            a: a.clone(),
            g: g.clone(),
        },
        SubsystemSpec {
            id: "2".into(),
            a,
            g,
        },
    ];
    let decoupled = assess(&pair, &[]).unwrap();
    let block = DMatrix::from_diagonal_element(2, 2, 2.0);
    let strong = assess(
        &pair,
        &[
            Coupling {
                i: 0,
                j: 1,
                block: block.clone(),
            },
            Coupling {
                i: 1,
                j: 0,
                block,
            },
        ],
    )
    .unwrap();
    let fixtures_ok = decoupled.verdict == Verdict::Stable
        && (decoupled.w[(0, 0)] + 1.0).abs() < 1e-12
        && strong.verdict == Verdict::Indeterminate
        && (strong.w[(0, 1)] - 2.0).abs() < 1e-10;
    details.push(format!(
        "fixtures: W=diag(-1,-1) → {:?}, [[-1,2],[2,-1]] → {:?}",
        decoupled.verdict, strong.verdict
    ));

    // 100 randomized two-subsystem instances spanning weak to strong
    // coupling.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut stable_count = 0;
    let mut false_positive = None;
    for trial in 0..100 {
        let make = |rng: &mut ChaCha8Rng, n: usize| {
            let raw = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let q = raw.qr().q();
            let d =
                DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| -rng.random_range(0.5..3.0)));
            let sym = &q * d * q.transpose();
            let skew_raw = DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.2..0.2));
            sym + (&skew_raw - skew_raw.transpose()) * 0.5
        };
        let n1 = rng.random_range(2..5);
        let n2 = rng.random_range(2..5);
        let a1 = make(&mut rng, n1);
        let a2 = make(&mut rng, n2);
        let strength: f64 = rng.random_range(0.01..1.2);
        let subs = vec![
            SubsystemSpec::with_identity_weight("1", a1),
            SubsystemSpec::with_identity_weight("2", a2),
        ];
        let couplings = vec![
            Coupling {
                i: 0,
                j: 1,
                block: DMatrix::from_fn(n1, n2, |_, _| rng.random_range(-1.0..1.0)) * strength,
            },
            Coupling {
                i: 1,
                j: 0,
                block: DMatrix::from_fn(n2, n1, |_, _| rng.random_range(-1.0..1.0)) * strength,
            },
        ];
        let report = assess(&subs, &couplings).unwrap();
        if report.verdict == Verdict::Stable {
            stable_count += 1;
            let max_re = oracle_full_spectrum(&subs, &couplings)
                .unwrap()
                .iter()
                .fold(f64::NEG_INFINITY, |acc, ev| acc.max(ev.re));
            if max_re >= 0.0 {
                false_positive = Some((trial, max_re));
            }
        }
    }
    details.push(format!(
        "random: {stable_count}/100 stable, all Hurwitz-checked"
    ));

    // Two-area tie sweep: monotone transition, stable points sound.
    let mut verdicts = Vec::new();
    let mut sweep_sound = true;
    for &b in &TIE_SWEEP {
        let scenario = default_two_area(b, DisturbanceSignal::None, None);
        let (subs, coups) = two_area_stability_blocks(&scenario).unwrap();
        let report = assess(&subs, &coups).unwrap();
        if report.verdict == Verdict::Stable {
            let max_re = oracle_full_spectrum(&subs, &coups)
                .unwrap()
                .iter()
                .fold(f64::NEG_INFINITY, |acc, ev| acc.max(ev.re));
            sweep_sound &= max_re < 0.0;
        }
        verdicts.push(report.verdict);
    }
    let first_stable = verdicts.first() == Some(&Verdict::Stable);
    let lost_at = verdicts.iter().position(|v| *v != Verdict::Stable);
    let monotone = match lost_at {
        Some(k) => verdicts[k..].iter().all(|v| *v == Verdict::Indeterminate),
        None => false,
    };
    details.push(format!(
        "sweep: transition at index {lost_at:?} of {} points",
        TIE_SWEEP.len()
    ));

    let passed = fixtures_ok
        && false_positive.is_none()
        && stable_count > 10
        && first_stable
        && monotone
        && sweep_sound;
    if let Some((trial, max_re)) = false_positive {
        details.push(format!(
            "FALSE POSITIVE at trial {trial}: max Re {max_re:.2e}"
        ));
    }
    outcome(4, name, passed, details.join("; "))
}

/// Shared runner for criteria 5, 6, and 8: the pinned controller study.
pub struct ControllerStudy {
    pub step: Vec<(String, RunSummary)>,
    pub fluct: Vec<(String, RunSummary)>,
}

pub fn run_controller_study() -> crate::Result<ControllerStudy> {
    let specs = [
        RlcControllerSpec::PiTwoLoop(Default::default()),
        RlcControllerSpec::Pd(Default::default()),
        RlcControllerSpec::EnergySingle(Default::default()),
        RlcControllerSpec::EnergyTwoTs(Default::default()),
    ];
    let mut step = Vec::new();
    let mut fluct = Vec::new();
    for spec in &specs {
        let (_, s) = run(&default_rlc_step(spec.clone()))?;
        step.push((spec.kind_name().to_string(), s));
        let (_, s) = run(&default_rlc_fluct(spec.clone(), 42))?;
        fluct.push((spec.kind_name().to_string(), s));
    }
    Ok(ControllerStudy { step, fluct })
}

/// Criterion 5: the four-controller outcome matrix on the load step.
fn criterion_5(study: &ControllerStudy) -> CriterionOutcome {
    let name = "controller comparison matrix on the load step";
    let find = |k: &str| &study.step.iter().find(|(n, _)| n == k).unwrap().1;
    let pi = find("pi_two_loop");
    let pd = find("pd");
    let single = find("energy_single");
    let two = find("energy_two_ts");

    let pi_ok = pi.collapsed;
    let pd_ok = pd.settled && !pd.collapsed;
    let single_ok = !single.settled || single.collapsed;
    let res_p = two.port_residual_p.unwrap_or(f64::INFINITY);
    let res_q = two.port_residual_q_dot.unwrap_or(f64::INFINITY);
    let two_ok = two.settled && res_p < 1e-3 && res_q < 1e-3;

    let passed = pi_ok && pd_ok && single_ok && two_ok;
    outcome(
        5,
        name,
        passed,
        format!(
            "pi collapsed={} (t={:?}); pd settled={}; single collapsed={}; two_ts settled={} residuals dP={res_p:.1e} dQ̇={res_q:.1e} (bound 1e-3)",
            pi.collapsed, pi.collapse_time, pd.settled, single.collapsed, two.settled
        ),
    )
}

/// Criterion 6: fluctuation suppression ratios.
fn criterion_6(study: &ControllerStudy) -> CriterionOutcome {
    let name = "fluctuation suppression (seed 42)";
    let find = |k: &str| &study.fluct.iter().find(|(n, _)| n == k).unwrap().1;
    let std_of = |s: &RunSummary| s.regulated_std_post.unwrap_or(f64::INFINITY);
    let pi = find("pi_two_loop");
    let single = find("energy_single");
    let two = find("energy_two_ts");

    let survive = !pi.collapsed && !single.collapsed && !two.collapsed;
    let (s_pi, s_single, s_two) = (std_of(pi), std_of(single), std_of(two));
    let passed = survive && s_two * 10.0 <= s_pi && s_two * 3.0 <= s_single;
    outcome(
        6,
        name,
        passed,
        format!(
            "post-2s σ(v): pi {s_pi:.2e}, single {s_single:.2e}, two_ts {s_two:.2e} — ratios {:.1}x / {:.1}x (need ≥10x / ≥3x)",
            s_pi / s_two,
            s_single / s_two
        ),
    )
}

/// Criterion 7: exact feedback linearization at the aggregate level.
fn criterion_7() -> CriterionOutcome {
    let name = "feedback-linearization exactness (aggregate)";
    let gains = EnergyTwoTsGains::default();
    let tau = Some(0.05);
    let e_ref = 0.6;
    let (e0, p0) = (1.2, 3.0);

    // Arbitrary smooth exogenous signals: the cancellation must hold for
    // any tangent energy and outgoing flow.
    let e_t = |t: f64| 0.3 + 0.2 * (7.0 * t).sin();
    let z_out = |t: f64| PortFlow {
        p: 0.4 * (3.0 * t).sin(),
        q_dot: 0.8 * (11.0 * t).cos(),
    };

    // Machine-precision cancellation at sample states.
    let mut worst_cancel = 0.0_f64;
    for (e, p, t) in [(1.2, 3.0, 0.0), (0.7, -0.5, 0.13), (0.6, 0.0, 1.0)] {
        let u_z = energy_control_two_ts((e, p), (e_ref, 0.0), e_t(t), z_out(t), tau, &gains);
        let (e_dot, p_dot) = aggregate_rhs((e, p), u_z, e_t(t), z_out(t), tau);
        worst_cancel = worst_cancel
            .max((e_dot + gains.k_e * (e - e_ref)).abs() / (1.0 + e_dot.abs()))
            .max((p_dot + gains.k_p * p).abs() / (1.0 + p_dot.abs()));
    }

    // Closed-loop trajectory against the linear reference decays.
    let gains2 = gains.clone();
    let traj = integrate(OdeProblem {
        dim: 2,
        x0: vec![e0, p0],
        t0: 0.0,
        tf: 0.5,
        dt: 1e-5,
        rhs: move |t, x: &[f64], dx: &mut [f64]| {
            let u_z =
                energy_control_two_ts((x[0], x[1]), (e_ref, 0.0), e_t(t), z_out(t), tau, &gains2);
            let (de, dp) = aggregate_rhs((x[0], x[1]), u_z, e_t(t), z_out(t), tau);
            dx[0] = de;
            dx[1] = dp;
            Ok(())
        },
    })
    .unwrap();
    let mut worst_rel = 0.0_f64;
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let e_want = e_ref + (e0 - e_ref) * (-gains.k_e * t).exp();
        let p_want = p0 * (-gains.k_p * t).exp();
        if (e_want - e_ref).abs() > 1e-6 {
            worst_rel = worst_rel.max((s[0] - e_want).abs() / (e_want - e_ref).abs());
        }
        if p_want.abs() > 1e-6 {
            worst_rel = worst_rel.max((s[1] - p_want).abs() / p_want.abs());
        }
    }
    let passed = worst_cancel < 1e-12 && worst_rel <= 1e-3;
    outcome(
        7,
        name,
        passed,
        format!(
            "cancellation residual {worst_cancel:.1e}, trajectory error {worst_rel:.1e} (bound 1e-3)"
        ),
    )
}

/// Criterion 8: conservation audits on every study trajectory.
fn criterion_8(study: &ControllerStudy) -> CriterionOutcome {
    let name = "energy and port conservation audits";
    let mut worst_ratio = 0.0_f64;
    let mut worst_wire = 0.0_f64;
    for (_, s) in study.step.iter().chain(&study.fluct) {
        worst_ratio = worst_ratio.max(s.conservation_ratio);
        worst_wire = worst_wire.max(s.same_wire_residual);
    }
    let passed = worst_ratio <= 10.0 && worst_wire <= 1e-9;
    outcome(
        8,
        name,
        passed,
        format!(
            "worst residual/local-error ratio {worst_ratio:.2} (bound 10), worst same-wire residual {worst_wire:.1e} (bound 1e-9)"
        ),
    )
}

/// Criterion 9: RK4 order and byte determinism.
fn criterion_9() -> CriterionOutcome {
    let name = "RK4 convergence order and determinism";
    let run_exp = |dt: f64| {
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
    let ratio = run_exp(0.1) / run_exp(0.05);

    let spec = RlcControllerSpec::EnergyTwoTs(Default::default());
    let csv = |scenario: &Scenario| {
        let (traj, _) = run(scenario).unwrap();
        crate::cli::trajectory_csv(&traj)
    };
    let scenario = default_rlc_fluct(spec, 42);
    let identical = csv(&scenario) == csv(&scenario);

    let passed = ratio >= 8.0 && identical;
    outcome(
        9,
        name,
        passed,
        format!(
            "dt-halving error ratio {ratio:.1} (need ≥8), repeated run byte-identical: {identical}"
        ),
    )
}

/// Criterion 10: AGC regulation vs. persistent droop offset.
fn criterion_10() -> CriterionOutcome {
    let name = "two-area AGC regulation";
    let step = DisturbanceSignal::Step {
        magnitude: 0.1,
        start: 1.0,
        ramp: 0.5,
    };
    let sim_settings = SimSettings {
        dt: 2.5e-4,
        tf: 60.0,
        output_every: 400,
    };
    let with_agc = Scenario {
        scenario: ScenarioKind::TwoAreaFreq(default_two_area(
            2.0,
            step.clone(),
            Some(AgcConfig::default()),
        )),
        sim: sim_settings.clone(),
        seed: 0,
    };
    let without = Scenario {
        scenario: ScenarioKind::TwoAreaFreq(default_two_area(2.0, step, None)),
        sim: sim_settings,
        seed: 0,
    };
    match (run(&with_agc), run(&without)) {
        (Ok((_, on)), Ok((_, off))) => {
            let freq_on = on.final_freq_dev.unwrap_or(f64::INFINITY);
            let tie_on = on.final_tie_dev.unwrap_or(f64::INFINITY).abs();
            let freq_off = off.final_freq_dev.unwrap_or(0.0);
            let passed = freq_on <= 1e-3 && tie_on <= 1e-3 && freq_off > 1e-3;
            outcome(
                10,
                name,
                passed,
                format!(
                    "with AGC: |dω| {freq_on:.2e} rad/s, |tie| {tie_on:.2e} pu (bounds 1e-3); without: offset {freq_off:.2e} rad/s persists"
                ),
            )
        }
        (Err(e), _) | (_, Err(e)) => outcome(10, name, false, e.to_string()),
    }
}

/// Run the complete acceptance suite.
pub fn run_all() -> Vec<CriterionOutcome> {
    let mut results = vec![criterion_1(), criterion_2(), criterion_3(), criterion_4()];
    match run_controller_study() {
        Ok(study) => {
            results.push(criterion_5(&study));
            results.push(criterion_6(&study));
            results.push(criterion_7());
            results.push(criterion_8(&study));
        }
        Err(e) => {
            for (id, name) in [
                (5, "controller comparison matrix on the load step"),
                (6, "fluctuation suppression (seed 42)"),
                (7, "feedback-linearization exactness (aggregate)"),
                (8, "energy and port conservation audits"),
            ] {
                results.push(outcome(id, name, false, format!("study failed: {e}")));
            }
        }
    }
    results.push(criterion_9());
    results.push(criterion_10());
    results
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_norm_of_known_block() {
        // Sanity anchor used by criterion 4's fixtures.
        let block = DMatrix::from_diagonal_element(2, 2, 2.0);
        assert!((crate::numerics::spectral_norm(&block) - 2.0).abs() < 1e-12);
    }
}
