//! Cross-validation of the eigenvalue solver and observables against exact
//! diagonalization at small system sizes.

use nalgebra::DMatrix;

use gaudin_core::model::{Axis, ModelParams, RawModelParams};
use gaudin_core::oracle::{
    joint_eigensystem, match_rows_nearest, spin_operator, ChargeMatrixSet, JointEigensystem,
};
use gaudin_core::observables::spin_expectations;
use gaudin_core::solver::{
    continue_in_g, inf_norm, newton_solve, NewtonSettings, QuadraticSystem, SignVector,
    StepPolicy,
};

fn generic_params(l: usize, g: f64) -> ModelParams<f64> {
    ModelParams::new(RawModelParams {
        epsilons: (0..l)
            .map(|i| 1.0 + 1.2 * i as f64 + 0.07 * ((i % 3) as f64))
            .collect(),
        alpha_x: 1.0,
        beta_x: 0.5,
        alpha_y: 0.8,
        beta_y: 0.3,
        gamma: 0.4,
        lambda: -0.6,
        g,
    })
    .unwrap()
}

fn fig1_xxz(l: usize, g: f64) -> ModelParams<f64> {
    ModelParams::new(RawModelParams {
        epsilons: (1..=l).map(|i| i as f64).collect(),
        alpha_x: 1.0,
        beta_x: 0.0,
        alpha_y: 1.0,
        beta_y: 0.0,
        gamma: 0.5,
        lambda: 0.5,
        g,
    })
    .unwrap()
}

/// Continuation endpoints for all 2^L branches, rows indexed by sign-vector
/// order.
fn full_solver_table(p: &ModelParams<f64>) -> DMatrix<f64> {
    let l = p.len();
    let mut table = DMatrix::zeros(1 << l, l);
    for (s, sigma) in SignVector::enumerate_all(l).enumerate() {
        let path = continue_in_g(&sigma, p, &StepPolicy::default(), &NewtonSettings::default())
            .unwrap_or_else(|e| panic!("path {sigma} failed: {e}"));
        table.row_mut(s).copy_from(&path.endpoint().q.transpose());
    }
    table
}

fn ed_system(p: &ModelParams<f64>, seed: u64) -> (ChargeMatrixSet<f64>, JointEigensystem<f64>) {
    let cs = ChargeMatrixSet::from_params(p, true).unwrap();
    let es = joint_eigensystem(&cs, seed).unwrap();
    (cs, es)
}

#[test]
fn continuation_reproduces_exact_table() {
    for (l, g) in [(4usize, 0.6), (5, 1.0), (6, 2.0)] {
        let p = generic_params(l, g);
        let solver_table = full_solver_table(&p);
        let (_, es) = ed_system(&p, 42);
        let matched = match_rows_nearest(&solver_table, &es.table);
        assert!(
            matched.max_deviation <= 1e-8,
            "L={l} g={g}: deviation {}",
            matched.max_deviation
        );
        // Every exact state is claimed exactly once.
        let mut seen = matched.assignment.clone();
        seen.sort_unstable();
        assert_eq!(seen, (0..(1 << l)).collect::<Vec<_>>());
    }
}

#[test]
fn ground_branch_follows_exact_state_at_l8() {
    let p = fig1_xxz(8, 1.0);
    let path = continue_in_g(
        &SignVector::all_minus(8),
        &p,
        &StepPolicy::default(),
        &NewtonSettings::default(),
    )
    .unwrap();
    let endpoint = path.endpoint();
    let (_, es) = ed_system(&p, 7);

    let mut best = f64::INFINITY;
    for s in 0..es.num_states() {
        let mut dist: f64 = 0.0;
        for i in 0..8 {
            dist = dist.max((es.table[(s, i)] - endpoint.q[i]).abs());
        }
        best = best.min(dist);
    }
    assert!(best <= 1e-8, "nearest exact row at distance {best}");
}

#[test]
fn exact_rows_are_solver_roots() {
    for l in 2..=6 {
        let p = generic_params(l, 0.9);
        let (_, es) = ed_system(&p, 511 + l as u64);
        let system = QuadraticSystem::new(&p);
        for s in 0..es.num_states() {
            let row = es.table.row(s).transpose();
            let norm = system.residual_norm(&row);
            assert!(norm <= 1e-9, "L={l} state {s}: residual {norm}");
        }
    }
}

#[test]
fn newton_pulls_perturbed_exact_row_back() {
    let p = generic_params(5, 1.0);
    let (_, es) = ed_system(&p, 99);
    let row = es.table.row(11).transpose();
    let mut q0 = row.clone();
    for (i, v) in q0.iter_mut().enumerate() {
        *v += if i % 2 == 0 { 1e-4 } else { -1e-4 };
    }
    let solution = newton_solve(&q0, &p, &NewtonSettings::default()).unwrap();
    assert!(inf_norm(&(&solution.q - &row)) <= 1e-10);
}

#[test]
fn hellmann_feynman_matches_eigenvector_expectations() {
    for (l, g) in [(3usize, 0.8), (4, 1.3)] {
        let p = generic_params(l, g);
        let (_, es) = ed_system(&p, 5);
        let ops: Vec<Vec<_>> = (1..=l)
            .map(|site| {
                Axis::ALL
                    .iter()
                    .map(|&axis| spin_operator::<f64>(axis, site, l).unwrap())
                    .collect()
            })
            .collect();

        for sigma in SignVector::enumerate_all(l) {
            let path =
                continue_in_g(&sigma, &p, &StepPolicy::default(), &NewtonSettings::default())
                    .unwrap();
            let state = path.endpoint();
            let records = spin_expectations(state).unwrap();

            // Pair the branch with its exact state by eigenvalue row.
            let mut best = (0usize, f64::INFINITY);
            for s in 0..es.num_states() {
                let mut dist: f64 = 0.0;
                for i in 0..l {
                    dist = dist.max((es.table[(s, i)] - state.q[i]).abs());
                }
                if dist < best.1 {
                    best = (s, dist);
                }
            }
            assert!(best.1 <= 1e-8);
            let v = es.eigenvectors.column(best.0);

            for (i, record) in records.iter().enumerate() {
                let expectations: Vec<f64> = (0..3)
                    .map(|a| {
                        let w = &ops[i][a] * v;
                        v.iter()
                            .zip(w.iter())
                            .map(|(vs, ws)| (vs.conj() * ws).re)
                            .sum()
                    })
                    .collect();
                assert!(
                    (record.sx - expectations[0]).abs() <= 1e-6
                        && (record.sy - expectations[1]).abs() <= 1e-6
                        && (record.sz - expectations[2]).abs() <= 1e-6,
                    "L={l} sigma={sigma} site {}: ({}, {}, {}) vs {expectations:?}",
                    record.site,
                    record.sx,
                    record.sy,
                    record.sz
                );
            }
        }
    }
}

#[test]
fn compensated_rescaling_leaves_spectra_invariant() {
    // (alpha_x, beta_x, gamma, g) -> (4a, 4b, 2gamma, g/2) keeps every
    // realized coupling, hence every charge spectrum, unchanged.
    let p = generic_params(4, 1.1);
    let raw = p.to_raw();
    let rescaled = ModelParams::new(RawModelParams {
        alpha_x: 4.0 * raw.alpha_x,
        beta_x: 4.0 * raw.beta_x,
        gamma: 2.0 * raw.gamma,
        g: raw.g / 2.0,
        ..raw
    })
    .unwrap();

    let cs_a = ChargeMatrixSet::from_params(&p, true).unwrap();
    let cs_b = ChargeMatrixSet::from_params(&rescaled, true).unwrap();
    for i in 0..4 {
        let sa = cs_a.charge_spectrum(i);
        let sb = cs_b.charge_spectrum(i);
        for k in 0..sa.len() {
            assert!((sa[k] - sb[k]).abs() <= 1e-12);
        }
    }
}
