//! Drivers behind the CLI subcommands: constraint validation, single-point
//! solves, parameter sweeps, and the exact-diagonalization comparison.

use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;

use gaudin_core::model::{Axis, CouplingSet, ModelParams};
use gaudin_core::observables::spin_expectations_with;
use gaudin_core::oracle::{
    joint_eigensystem_with, match_rows_nearest, spin_operator_guarded, ChargeMatrixSet, CMatrix,
    DEFAULT_MAX_REDRAWS,
};
use gaudin_core::solver::{
    continue_in_g, NewtonSettings, ParamAxis, QuadraticSystem, SignVector, StepPolicy,
};

use crate::config::{RunConfig, SweepSpec, Tolerances};
use crate::emit::OutputRow;
use crate::CliError;

fn newton_settings(t: &Tolerances) -> NewtonSettings<f64> {
    NewtonSettings {
        tol: t.newton_tol,
        ..NewtonSettings::default()
    }
}

fn build_params(cfg: &RunConfig) -> Result<ModelParams<f64>, CliError> {
    ModelParams::with_min_gap(cfg.raw_params.clone(), cfg.tolerances.eps_gap)
        .map_err(|e| CliError::Validation(e.to_string()))
}

/// Constraint residuals of the configured model.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub l: usize,
    pub field_residual: f64,
    pub field_scale: f64,
    pub field_terms: usize,
    pub cubic_residual: f64,
    pub cubic_scale: f64,
    pub cubic_terms: usize,
    pub field_relative: f64,
    pub cubic_relative: f64,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "model: L = {}", self.l)?;
        writeln!(
            f,
            "field constraints: max residual {:.3e} (scale {:.3e}, relative {:.3e}, {} terms)",
            self.field_residual, self.field_scale, self.field_relative, self.field_terms
        )?;
        if self.cubic_terms == 0 {
            writeln!(f, "cubic constraints: none (needs L >= 3)")
        } else {
            writeln!(
                f,
                "cubic constraints: max residual {:.3e} (scale {:.3e}, relative {:.3e}, {} terms)",
                self.cubic_residual, self.cubic_scale, self.cubic_relative, self.cubic_terms
            )
        }
    }
}

/// `validate`: build the model and report the integrability residuals.
pub fn run_validate(cfg: &RunConfig) -> Result<ValidationReport, CliError> {
    let p = build_params(cfg)?;
    let report = CouplingSet::evaluate(&p).check_constraints();
    Ok(ValidationReport {
        l: p.len(),
        field_residual: report.max_field_residual,
        field_scale: report.field_scale,
        field_terms: report.field_terms,
        cubic_residual: report.max_cubic_residual,
        cubic_scale: report.cubic_scale,
        cubic_terms: report.cubic_terms,
        field_relative: report.field_relative(),
        cubic_relative: report.cubic_relative(),
    })
}

fn apply_sweep_value(base: &ModelParams<f64>, axis: ParamAxis, value: f64) -> ModelParams<f64> {
    match axis {
        ParamAxis::G => base.with_g(value),
        ParamAxis::Gamma => base.with_gamma(value),
        ParamAxis::Lambda => base.with_lambda(value),
    }
}

/// Solves one (sweep value, state) task and renders its per-site rows.
fn point_rows(
    base: &ModelParams<f64>,
    axis: ParamAxis,
    value: f64,
    sigma: &SignVector,
    newton: &NewtonSettings<f64>,
    policy: &StepPolicy<f64>,
) -> Vec<OutputRow> {
    let p = apply_sweep_value(base, axis, value);
    let l = p.len();
    let blank = |error: String| -> Vec<OutputRow> {
        (0..l)
            .map(|i| OutputRow {
                sweep_param: axis.name().to_string(),
                sweep_value: value,
                state: sigma.to_string(),
                site: i + 1,
                epsilon: p.eps(i),
                q: None,
                sx: None,
                sy: None,
                sz: None,
                residual: None,
                error: error.clone(),
            })
            .collect()
    };

    let path = match continue_in_g(sigma, &p, policy, newton) {
        Ok(path) => path,
        Err(e) => return blank(e.to_string()),
    };
    let state = path.endpoint();
    let records = match spin_expectations_with(state, newton.max_condition) {
        Ok(records) => records,
        Err(e) => return blank(e.to_string()),
    };

    records
        .iter()
        .map(|r| OutputRow {
            sweep_param: axis.name().to_string(),
            sweep_value: value,
            state: sigma.to_string(),
            site: r.site,
            epsilon: r.epsilon,
            q: Some(state.q[r.site - 1]),
            sx: Some(r.sx),
            sy: Some(r.sy),
            sz: Some(r.sz),
            residual: Some(state.residual_norm),
            error: String::new(),
        })
        .collect()
}

fn sweep_rows(
    cfg: &RunConfig,
    base: &ModelParams<f64>,
    spec: &SweepSpec,
) -> Result<Vec<OutputRow>, CliError> {
    let states = cfg.state.states(base.len());
    let newton = newton_settings(&cfg.tolerances);
    let policy = StepPolicy::default();
    let values = spec.values();

    let mut tasks = Vec::with_capacity(values.len() * states.len());
    for (vi, &value) in values.iter().enumerate() {
        for (si, sigma) in states.iter().enumerate() {
            tasks.push((vi, si, value, sigma.clone()));
        }
    }

    // Tasks are independent; gather and order deterministically so thread
    // count never changes the output bytes.
    let mut chunks: Vec<((usize, usize), Vec<OutputRow>)> = tasks
        .into_par_iter()
        .map(|(vi, si, value, sigma)| {
            (
                (vi, si),
                point_rows(base, spec.param, value, &sigma, &newton, &policy),
            )
        })
        .collect();
    chunks.sort_by_key(|(key, _)| *key);
    Ok(chunks.into_iter().flat_map(|(_, rows)| rows).collect())
}

/// `sweep`: one row per (sweep value, state, site); failures are recorded in
/// the error column and the sweep continues.
pub fn run_sweep(cfg: &RunConfig) -> Result<Vec<OutputRow>, CliError> {
    let base = build_params(cfg)?;
    let spec = cfg
        .sweep
        .ok_or_else(|| CliError::Validation("sweep requires a sweep block in the config".into()))?;
    sweep_rows(cfg, &base, &spec)
}

/// `solve`: the configured parameter point only.
pub fn run_solve(cfg: &RunConfig) -> Result<Vec<OutputRow>, CliError> {
    let base = build_params(cfg)?;
    let spec = SweepSpec {
        param: ParamAxis::G,
        start: base.g(),
        end: base.g(),
        points: 1,
    };
    sweep_rows(cfg, &base, &spec)
}

/// Everything `oracle` measures, with its verdicts.
#[derive(Debug, Clone)]
pub struct OracleComparison {
    pub l: usize,
    pub g: f64,
    pub hermiticity_error: f64,
    pub max_commutator: f64,
    pub max_quadratic_residual: f64,
    pub max_q_deviation: f64,
    pub max_observable_deviation: f64,
    pub pinch_crossings: usize,
    pub tolerances: Tolerances,
}

impl OracleComparison {
    pub fn passed(&self) -> bool {
        self.max_commutator <= self.tolerances.commutator_tol
            && self.max_quadratic_residual <= self.tolerances.quad_tol
            && self.max_q_deviation <= self.tolerances.q_match_tol
            && self.max_observable_deviation <= self.tolerances.observable_tol
    }
}

impl fmt::Display for OracleComparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = |ok: bool| if ok { "ok" } else { "FAIL" };
        writeln!(f, "oracle comparison: L = {}, g = {}", self.l, self.g)?;
        writeln!(f, "hermiticity error:        {:.3e}", self.hermiticity_error)?;
        writeln!(
            f,
            "max commutator (rel):     {:.3e}  [tol {:.1e}] {}",
            self.max_commutator,
            self.tolerances.commutator_tol,
            verdict(self.max_commutator <= self.tolerances.commutator_tol)
        )?;
        writeln!(
            f,
            "max quadratic residual:   {:.3e}  [tol {:.1e}] {}",
            self.max_quadratic_residual,
            self.tolerances.quad_tol,
            verdict(self.max_quadratic_residual <= self.tolerances.quad_tol)
        )?;
        writeln!(
            f,
            "max |q_solver - q_exact|: {:.3e}  [tol {:.1e}] {}",
            self.max_q_deviation,
            self.tolerances.q_match_tol,
            verdict(self.max_q_deviation <= self.tolerances.q_match_tol)
        )?;
        writeln!(
            f,
            "max observable deviation: {:.3e}  [tol {:.1e}] {}",
            self.max_observable_deviation,
            self.tolerances.observable_tol,
            verdict(self.max_observable_deviation <= self.tolerances.observable_tol)
        )?;
        if self.pinch_crossings > 0 {
            writeln!(
                f,
                "note: {} path(s) crossed sub-resolution pinches",
                self.pinch_crossings
            )?;
        }
        Ok(())
    }
}

/// `oracle`: exact diagonalization against the continuation solver over all
/// branches. The returned rows carry the exact values per matched state.
pub fn run_oracle(cfg: &RunConfig) -> Result<(OracleComparison, Vec<OutputRow>), CliError> {
    let p = build_params(cfg)?;
    let l = p.len();
    let t = &cfg.tolerances;
    if l > t.l_max {
        return Err(CliError::Validation(format!(
            "oracle requested for L = {l}, beyond the dense guard l_max = {}",
            t.l_max
        )));
    }

    let cs = ChargeMatrixSet::from_params_guarded(&p, true, t.l_max)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let hermiticity_error = cs.hermiticity_error();
    let commutator = cs.max_commutator();
    let es = joint_eigensystem_with(&cs, cfg.seed, t.degeneracy_tol, DEFAULT_MAX_REDRAWS)
        .map_err(|e| CliError::Solver(e.to_string()))?;
    let quad = gaudin_core::oracle::verify_quadratic(&es, &p);

    // All-branch continuation; pinch crossing keeps the endpoint set
    // complete through sub-resolution avoided crossings.
    let newton = newton_settings(t);
    let policy = StepPolicy::crossing_tolerant();
    let sigmas: Vec<SignVector> = SignVector::enumerate_all(l).collect();
    let paths = sigmas
        .par_iter()
        .map(|sigma| continue_in_g(sigma, &p, &policy, &newton))
        .collect::<Vec<_>>();

    let mut solver_table = DMatrix::zeros(1 << l, l);
    let mut pinch_crossings = 0usize;
    let mut endpoints = Vec::with_capacity(1 << l);
    for (s, outcome) in paths.into_iter().enumerate() {
        let path = outcome.map_err(|e| CliError::Solver(e.to_string()))?;
        pinch_crossings += path.pinch_crossings.len();
        solver_table
            .row_mut(s)
            .copy_from(&path.endpoint().q.transpose());
        endpoints.push(path.endpoint().clone());
    }

    let matched = match_rows_nearest(&solver_table, &es.table);

    let ops = site_operators(l, t.l_max)?;
    let mut max_observable_deviation: f64 = 0.0;
    let mut rows = Vec::with_capacity((1 << l) * l);
    let system = QuadraticSystem::new(&p);
    for (s, sigma) in sigmas.iter().enumerate() {
        let exact_state = matched.assignment[s];
        let v = es.eigenvectors.column(exact_state);
        let exact_row = es.table.row(exact_state).transpose();
        let row_residual = system.residual_norm(&exact_row);

        let records = spin_expectations_with(&endpoints[s], newton.max_condition)
            .map_err(|e| CliError::Solver(e.to_string()))?;
        for (i, record) in records.iter().enumerate() {
            let exact = [
                eigenvector_expectation(&ops[i][0], &v),
                eigenvector_expectation(&ops[i][1], &v),
                eigenvector_expectation(&ops[i][2], &v),
            ];
            max_observable_deviation = max_observable_deviation
                .max((record.sx - exact[0]).abs())
                .max((record.sy - exact[1]).abs())
                .max((record.sz - exact[2]).abs());
            rows.push(OutputRow {
                sweep_param: "g".to_string(),
                sweep_value: p.g(),
                state: sigma.to_string(),
                site: i + 1,
                epsilon: p.eps(i),
                q: Some(es.table[(exact_state, i)]),
                sx: Some(exact[0]),
                sy: Some(exact[1]),
                sz: Some(exact[2]),
                residual: Some(row_residual),
                error: String::new(),
            });
        }
    }

    let comparison = OracleComparison {
        l,
        g: p.g(),
        hermiticity_error,
        max_commutator: commutator.max_relative,
        max_quadratic_residual: quad.max_residual,
        max_q_deviation: matched.max_deviation,
        max_observable_deviation,
        pinch_crossings,
        tolerances: *t,
    };
    Ok((comparison, rows))
}

fn site_operators(l: usize, l_max: usize) -> Result<Vec<[CMatrix<f64>; 3]>, CliError> {
    (1..=l)
        .map(|site| {
            let make = |axis: Axis| {
                spin_operator_guarded::<f64>(axis, site, l, l_max)
                    .map_err(|e| CliError::Validation(e.to_string()))
            };
            Ok([make(Axis::X)?, make(Axis::Y)?, make(Axis::Z)?])
        })
        .collect()
}

fn eigenvector_expectation(
    op: &CMatrix<f64>,
    v: &nalgebra::DVectorView<nalgebra::Complex<f64>>,
) -> f64 {
    let w = op * v;
    v.iter().zip(w.iter()).map(|(a, b)| (a.conj() * b).re).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{OutputFormat, StateSelector};

    fn fig1_cfg(l: usize, g: f64, beta: f64, sweep: Option<SweepSpec>) -> RunConfig {
        RunConfig {
            raw_params: gaudin_core::model::RawModelParams {
                epsilons: (1..=l).map(|i| i as f64).collect(),
                alpha_x: 1.0,
                beta_x: beta,
                alpha_y: 1.0,
                beta_y: -beta,
                gamma: 0.5,
                lambda: 0.5,
                g,
            },
            state: StateSelector::GroundBranch,
            sweep,
            seed: 7,
            format: OutputFormat::Csv,
            out: None,
            oracle: false,
            tolerances: Tolerances::default(),
        }
    }

    #[test]
    fn validate_reports_tiny_residuals() {
        let cfg = fig1_cfg(6, 0.8, 0.5, None);
        let report = run_validate(&cfg).unwrap();
        assert!(report.field_relative <= 1e-12);
        assert!(report.cubic_relative <= 1e-12);
        assert_eq!(report.l, 6);
    }

    #[test]
    fn solve_emits_one_row_per_site() {
        let cfg = fig1_cfg(5, 0.4, 0.0, None);
        let rows = run_solve(&cfg).unwrap();
        assert_eq!(rows.len(), 5);
        assert!(rows.iter().all(|r| r.error.is_empty()));
        assert!(rows.iter().all(|r| r.sweep_value == 0.4));
        assert_eq!(rows[2].site, 3);
    }

    #[test]
    fn single_point_sweep_at_zero_matches_closed_form() {
        let cfg = fig1_cfg(
            4,
            1.0,
            0.0,
            Some(SweepSpec {
                param: ParamAxis::G,
                start: 0.0,
                end: 0.0,
                points: 1,
            }),
        );
        let rows = run_sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 4);
        let r = 0.5 / (2.0 * 1.5f64.sqrt());
        // site 1: (sx, sy, sz) = -(bx, by, 1)/(2 sqrt(1.5)) for eps = 1.
        assert!((rows[0].sx.unwrap() + r).abs() < 1e-12);
        assert!((rows[0].sy.unwrap() + r).abs() < 1e-12);
        assert!((rows[0].sz.unwrap() + 2.0 * r).abs() < 1e-12);
    }

    #[test]
    fn sweep_rows_are_ordered_and_monotone() {
        let cfg = fig1_cfg(
            3,
            1.0,
            0.5,
            Some(SweepSpec {
                param: ParamAxis::G,
                start: 0.0,
                end: 0.5,
                points: 6,
            }),
        );
        let rows = run_sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 18);
        let sweep_values: Vec<f64> = rows.iter().step_by(3).map(|r| r.sweep_value).collect();
        assert!(sweep_values.windows(2).all(|w| w[0] < w[1]));
        for chunk in rows.chunks(3) {
            assert_eq!(chunk[0].site, 1);
            assert_eq!(chunk[1].site, 2);
            assert_eq!(chunk[2].site, 3);
        }
    }

    #[test]
    fn gamma_sweep_reruns_from_the_trivial_limit() {
        let cfg = RunConfig {
            state: StateSelector::Explicit("+-+".parse().unwrap()),
            ..fig1_cfg(
                3,
                0.7,
                0.3,
                Some(SweepSpec {
                    param: ParamAxis::Gamma,
                    start: 0.1,
                    end: 0.5,
                    points: 3,
                }),
            )
        };
        let rows = run_sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 9);
        assert!(rows.iter().all(|r| r.error.is_empty()));
        assert!(rows.iter().all(|r| r.sweep_param == "gamma"));
        // Every row solved at the configured coupling.
        assert!(rows.iter().all(|r| r.residual.unwrap() <= 1e-12));
    }

    #[test]
    fn oracle_comparison_passes_at_small_size() {
        let mut cfg = fig1_cfg(2, 1.0, 0.3, None);
        cfg.state = StateSelector::All;
        let (report, rows) = run_oracle(&cfg).unwrap();
        assert!(report.passed(), "{report}");
        assert_eq!(rows.len(), 4 * 2);
    }

    #[test]
    fn oracle_comparison_holds_at_moderate_size() {
        let mut cfg = fig1_cfg(6, 1.0, 0.4, None);
        cfg.state = StateSelector::All;
        cfg.seed = 13;
        let (report, rows) = run_oracle(&cfg).unwrap();
        assert!(report.passed(), "{report}");
        assert!(report.max_q_deviation <= 1e-8);
        assert!(report.max_observable_deviation <= 1e-6);
        assert!(report.max_quadratic_residual <= 1e-9);
        assert!(report.max_commutator <= 1e-10);
        assert_eq!(rows.len(), 64 * 6);
        // Exact rows carry their own quadratic residuals.
        assert!(rows.iter().all(|r| r.residual.unwrap() <= 1e-9));
    }

    #[test]
    fn oracle_rejects_oversized_systems() {
        let cfg = fig1_cfg(15, 0.5, 0.0, None);
        match run_oracle(&cfg) {
            Err(CliError::Validation(msg)) => assert!(msg.contains("l_max"), "{msg}"),
            other => panic!("expected validation rejection, got {other:?}"),
        }
    }

    #[test]
    fn oracle_mismatch_surfaces_in_verdict() {
        let mut cfg = fig1_cfg(3, 0.9, 0.4, None);
        cfg.tolerances.q_match_tol = 1e-30;
        let (report, _) = run_oracle(&cfg).unwrap();
        assert!(!report.passed());
    }
}
