//! Flat key-value run configuration.
//!
//! The format is a plain text file of `key = value` lines with `#` comments,
//! mirroring the model parameter names, so any language can generate or
//! parse one without a schema engine.

use std::collections::HashSet;
use std::path::PathBuf;
use std::str::FromStr;

use gaudin_core::model::RawModelParams;
use gaudin_core::solver::{ParamAxis, SignVector};

use crate::CliError;

/// Which states a run solves for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StateSelector {
    /// One explicit sign vector.
    Explicit(SignVector),
    /// Every sign vector; guarded to L <= 12.
    All,
    /// The all-minus branch (connected to the all-down product state).
    GroundBranch,
}

impl StateSelector {
    pub fn states(&self, l: usize) -> Vec<SignVector> {
        match self {
            StateSelector::Explicit(sigma) => vec![sigma.clone()],
            StateSelector::All => SignVector::enumerate_all(l).collect(),
            StateSelector::GroundBranch => vec![SignVector::all_minus(l)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSpec {
    pub param: ParamAxis,
    pub start: f64,
    pub end: f64,
    pub points: usize,
}

impl SweepSpec {
    /// Inclusive linear grid; strictly monotone for `points > 1`.
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.start];
        }
        let step = (self.end - self.start) / (self.points - 1) as f64;
        (0..self.points)
            .map(|k| {
                if k + 1 == self.points {
                    self.end
                } else {
                    self.start + step * k as f64
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub newton_tol: f64,
    pub eps_gap: f64,
    pub commutator_tol: f64,
    pub quad_tol: f64,
    pub degeneracy_tol: f64,
    /// Solver-vs-exact eigenvalue match bound.
    pub q_match_tol: f64,
    /// Observable match bound.
    pub observable_tol: f64,
    pub l_max: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            newton_tol: 1e-12,
            eps_gap: gaudin_core::model::DEFAULT_EPS_GAP,
            commutator_tol: gaudin_core::oracle::DEFAULT_COMMUTATOR_TOL,
            quad_tol: gaudin_core::oracle::DEFAULT_QUAD_TOL,
            degeneracy_tol: gaudin_core::oracle::DEFAULT_DEGENERACY_TOL,
            q_match_tol: 1e-8,
            observable_tol: 1e-6,
            l_max: gaudin_core::oracle::DEFAULT_L_MAX,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!("unknown format `{other}` (expected csv or json)")),
        }
    }
}

/// A fully parsed run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub raw_params: RawModelParams<f64>,
    pub state: StateSelector,
    pub sweep: Option<SweepSpec>,
    pub seed: u64,
    pub format: OutputFormat,
    pub out: Option<PathBuf>,
    pub oracle: bool,
    pub tolerances: Tolerances,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut keys = HashSet::new();
        let mut epsilons: Option<Vec<f64>> = None;
        let mut eps_start: Option<f64> = None;
        let mut eps_step: Option<f64> = None;
        let mut eps_count: Option<usize> = None;
        let mut alpha_x = None;
        let mut beta_x = None;
        let mut alpha_y = None;
        let mut beta_y = None;
        let mut gamma = None;
        let mut lambda = None;
        let mut g = None;
        let mut state = StateSelector::GroundBranch;
        let mut sweep_param: Option<ParamAxis> = None;
        let mut sweep_start: Option<f64> = None;
        let mut sweep_end: Option<f64> = None;
        let mut sweep_points: Option<usize> = None;
        let mut seed = 0u64;
        let mut format = OutputFormat::Csv;
        let mut out = None;
        let mut oracle = false;
        let mut tolerances = Tolerances::default();

        for (line_no, raw_line) in text.lines().enumerate() {
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Validation(format!("line {}: expected `key = value`", line_no + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if !keys.insert(key.to_string()) {
                return Err(CliError::Validation(format!(
                    "line {}: duplicate key `{key}`",
                    line_no + 1
                )));
            }
            let bad = |what: &str| {
                CliError::Validation(format!("line {}: {what}", line_no + 1))
            };

            match key {
                "epsilons" => {
                    let list = value
                        .split(|c: char| c == ',' || c.is_whitespace())
                        .filter(|s| !s.is_empty())
                        .map(|s| s.parse::<f64>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|e| bad(&format!("bad epsilons list: {e}")))?;
                    epsilons = Some(list);
                }
                "epsilon_start" => eps_start = Some(parse_f64(value).map_err(|e| bad(&e))?),
                "epsilon_step" => eps_step = Some(parse_f64(value).map_err(|e| bad(&e))?),
                "epsilon_count" => eps_count = Some(parse_usize(value).map_err(|e| bad(&e))?),
                "alpha_x" => alpha_x = Some(parse_f64(value).map_err(|e| bad(&e))?),
                "beta_x" => beta_x = Some(parse_f64(value).map_err(|e| bad(&e))?),
                "alpha_y" => alpha_y = Some(parse_f64(value).map_err(|e| bad(&e))?),
                "beta_y" => beta_y = Some(parse_f64(value).map_err(|e| bad(&e))?),
                "gamma" => gamma = Some(parse_f64(value).map_err(|e| bad(&e))?),
                "lambda" => lambda = Some(parse_f64(value).map_err(|e| bad(&e))?),
                "g" => g = Some(parse_f64(value).map_err(|e| bad(&e))?),
                "state" => {
                    state = match value {
                        "all" => StateSelector::All,
                        "ground-branch" => StateSelector::GroundBranch,
                        explicit => StateSelector::Explicit(
                            explicit.parse::<SignVector>().map_err(|e| bad(&e))?,
                        ),
                    };
                }
                "sweep_param" => {
                    sweep_param = Some(match value {
                        "g" => ParamAxis::G,
                        "gamma" => ParamAxis::Gamma,
                        "lambda" => ParamAxis::Lambda,
                        other => {
                            return Err(bad(&format!(
                                "unknown sweep_param `{other}` (expected g, gamma or lambda)"
                            )))
                        }
                    });
                }
                "sweep_start" => sweep_start = Some(parse_f64(value).map_err(|e| bad(&e))?),
                "sweep_end" => sweep_end = Some(parse_f64(value).map_err(|e| bad(&e))?),
                "sweep_points" => sweep_points = Some(parse_usize(value).map_err(|e| bad(&e))?),
                "seed" => seed = parse_usize(value).map_err(|e| bad(&e))? as u64,
                "format" => format = value.parse().map_err(|e: String| bad(&e))?,
                "out" => out = Some(PathBuf::from(value)),
                "oracle" => {
                    oracle = match value {
                        "on" | "true" => true,
                        "off" | "false" => false,
                        other => return Err(bad(&format!("bad oracle flag `{other}`"))),
                    };
                }
                "newton_tol" => tolerances.newton_tol = parse_pos(value).map_err(|e| bad(&e))?,
                "eps_gap" => tolerances.eps_gap = parse_pos(value).map_err(|e| bad(&e))?,
                "commutator_tol" => {
                    tolerances.commutator_tol = parse_pos(value).map_err(|e| bad(&e))?
                }
                "quad_tol" => tolerances.quad_tol = parse_pos(value).map_err(|e| bad(&e))?,
                "degeneracy_tol" => {
                    tolerances.degeneracy_tol = parse_pos(value).map_err(|e| bad(&e))?
                }
                "q_match_tol" => tolerances.q_match_tol = parse_pos(value).map_err(|e| bad(&e))?,
                "observable_tol" => {
                    tolerances.observable_tol = parse_pos(value).map_err(|e| bad(&e))?
                }
                "l_max" => tolerances.l_max = parse_usize(value).map_err(|e| bad(&e))?,
                other => {
                    return Err(CliError::Validation(format!(
                        "line {}: unknown key `{other}`",
                        line_no + 1
                    )))
                }
            }
        }

        let epsilons = match (epsilons, eps_start, eps_step, eps_count) {
            (Some(list), None, None, None) => list,
            (None, Some(start), Some(step), Some(count)) => {
                if count == 0 {
                    return Err(CliError::Validation("epsilon_count must be >= 1".into()));
                }
                (0..count).map(|k| start + step * k as f64).collect()
            }
            (None, None, None, None) => {
                return Err(CliError::Validation(
                    "missing epsilons (either `epsilons` or the epsilon_start/step/count generator)"
                        .into(),
                ))
            }
            _ => {
                return Err(CliError::Validation(
                    "give either `epsilons` or the complete epsilon_start/step/count generator, not a mix"
                        .into(),
                ))
            }
        };

        let require = |name: &str, v: Option<f64>| {
            v.ok_or_else(|| CliError::Validation(format!("missing key `{name}`")))
        };
        let raw_params = RawModelParams {
            epsilons,
            alpha_x: require("alpha_x", alpha_x)?,
            beta_x: require("beta_x", beta_x)?,
            alpha_y: require("alpha_y", alpha_y)?,
            beta_y: require("beta_y", beta_y)?,
            gamma: require("gamma", gamma)?,
            lambda: require("lambda", lambda)?,
            g: require("g", g)?,
        };

        let sweep = match (sweep_param, sweep_start, sweep_end, sweep_points) {
            (Some(param), Some(start), Some(end), Some(points)) => {
                if points == 0 {
                    return Err(CliError::Validation("sweep_points must be >= 1".into()));
                }
                Some(SweepSpec {
                    param,
                    start,
                    end,
                    points,
                })
            }
            (None, None, None, None) => None,
            _ => {
                return Err(CliError::Validation(
                    "incomplete sweep block: need sweep_param, sweep_start, sweep_end and sweep_points"
                        .into(),
                ))
            }
        };

        let config = Self {
            raw_params,
            state,
            sweep,
            seed,
            format,
            out,
            oracle,
            tolerances,
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CliError> {
        let l = self.raw_params.epsilons.len();
        if let StateSelector::Explicit(sigma) = &self.state {
            if sigma.len() != l {
                return Err(CliError::Validation(format!(
                    "state has {} signs but the model has {l} sites",
                    sigma.len()
                )));
            }
        }
        if matches!(self.state, StateSelector::All) && l > 12 {
            return Err(CliError::Validation(format!(
                "state = all enumerates 2^{l} branches; refusing beyond L = 12"
            )));
        }
        if self.oracle && l > self.tolerances.l_max {
            return Err(CliError::Validation(format!(
                "oracle = on needs dense 2^{l} matrices, beyond the guard l_max = {}",
                self.tolerances.l_max
            )));
        }
        Ok(())
    }
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.parse::<f64>().map_err(|e| format!("bad number `{s}`: {e}"))
}

fn parse_pos(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("`{s}` must be positive"))
    }
}

fn parse_usize(s: &str) -> Result<usize, String> {
    s.parse::<usize>().map_err(|e| format!("bad integer `{s}`: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
epsilon_start = 1.0
epsilon_step = 1.0
epsilon_count = 4
alpha_x = 1.0
beta_x = 0.0
alpha_y = 1.0
beta_y = 0.0
gamma = 0.5
lambda = 0.5
g = 1.0
";

    #[test]
    fn parses_generator_epsilons() {
        let cfg = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.raw_params.epsilons, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(cfg.state, StateSelector::GroundBranch);
        assert!(cfg.sweep.is_none());
        assert!(!cfg.oracle);
    }

    #[test]
    fn parses_full_file_with_comments() {
        let text = format!(
            "{MINIMAL}
# run block
state = all
sweep_param = g          # sweep in coupling
sweep_start = 0.0
sweep_end = 1.0
sweep_points = 11
seed = 9
format = json
out = rows.json
oracle = on
newton_tol = 1e-11
"
        );
        let cfg = RunConfig::parse(&text).unwrap();
        assert_eq!(cfg.state, StateSelector::All);
        let sweep = cfg.sweep.unwrap();
        assert_eq!(sweep.points, 11);
        assert_eq!(sweep.values().len(), 11);
        assert_eq!(sweep.values()[10], 1.0);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.format, OutputFormat::Json);
        assert!(cfg.oracle);
        assert_eq!(cfg.tolerances.newton_tol, 1e-11);
    }

    #[test]
    fn rejects_unknown_keys_and_duplicates() {
        let err = RunConfig::parse(&format!("{MINIMAL}bogus_key = 1\n")).unwrap_err();
        assert!(err.to_string().contains("unknown key"));
        let err = RunConfig::parse(&format!("{MINIMAL}g = 2.0\n")).unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn rejects_mixed_epsilon_specs() {
        let err = RunConfig::parse(&format!("{MINIMAL}epsilons = 1, 2\n")).unwrap_err();
        assert!(err.to_string().contains("not a mix"));
    }

    #[test]
    fn rejects_all_selector_beyond_twelve_sites() {
        let text = MINIMAL
            .replace("epsilon_count = 4", "epsilon_count = 13")
            + "state = all\n";
        let err = RunConfig::parse(&text).unwrap_err();
        assert!(err.to_string().contains("refusing beyond L = 12"));
    }

    #[test]
    fn rejects_oracle_beyond_dense_guard() {
        let text = MINIMAL
            .replace("epsilon_count = 4", "epsilon_count = 15")
            + "oracle = on\n";
        let err = RunConfig::parse(&text).unwrap_err();
        assert!(err.to_string().contains("l_max"), "{err}");
    }

    #[test]
    fn rejects_wrong_length_state() {
        let err = RunConfig::parse(&format!("{MINIMAL}state = +-\n")).unwrap_err();
        assert!(err.to_string().contains("4 sites"));
    }

    #[test]
    fn rejects_zero_point_sweep() {
        let text = format!(
            "{MINIMAL}sweep_param = g\nsweep_start = 0\nsweep_end = 1\nsweep_points = 0\n"
        );
        let err = RunConfig::parse(&text).unwrap_err();
        assert!(err.to_string().contains("sweep_points"));
    }

    #[test]
    fn single_point_sweep_is_just_the_start() {
        let text = format!(
            "{MINIMAL}sweep_param = gamma\nsweep_start = 0.3\nsweep_end = 0.9\nsweep_points = 1\n"
        );
        let cfg = RunConfig::parse(&text).unwrap();
        assert_eq!(cfg.sweep.unwrap().values(), vec![0.3]);
    }
}
