//! Run configuration: one JSON document shared by every subcommand.

use std::path::Path;

use ellqg::ellfn::{ModularParams, Truncation};
use ellqg::tensorspace::{CompositionLambda, DynamicalParams, EvaluationPoints};
use ellqg::verify::SuiteConfig;
use ellqg::weightfn::TVariables;
use ellqg::{Complex64, Error};
use serde::Deserialize;

use crate::CliError;

pub const DEFAULT_CONFIG: &str = include_str!("../../../configs/default.json");

/// A complex number written as `1.5`, `[re, im]`, `{"re": .., "im": ..}` or
/// a string such as `"0.3-0.9i"`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum CValue {
    Real(f64),
    Pair([f64; 2]),
    Parts { re: f64, #[serde(default)] im: f64 },
    Text(String),
}

impl CValue {
    fn to_complex(&self, field: &str) -> Result<Complex64, CliError> {
        match self {
            CValue::Real(x) => Ok(Complex64::new(*x, 0.0)),
            CValue::Pair([re, im]) => Ok(Complex64::new(*re, *im)),
            CValue::Parts { re, im } => Ok(Complex64::new(*re, *im)),
            CValue::Text(s) => parse_complex(s)
                .ok_or_else(|| CliError::Usage(format!("{field}: cannot parse `{s}` as a complex number"))),
        }
    }
}

/// Parses `a`, `bi`, `a+bi`, `a-bi` (also `a+i`, `-i`).
pub fn parse_complex(s: &str) -> Option<Complex64> {
    let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    if s.is_empty() {
        return None;
    }
    if let Some((re, im)) = s.split_once(',') {
        return Some(Complex64::new(re.parse().ok()?, im.parse().ok()?));
    }
    let Some(body) = s.strip_suffix(['i', 'j']) else {
        return s.parse().ok().map(|re| Complex64::new(re, 0.0));
    };
    // split at the last sign that is not a leading sign or an exponent sign
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let imag = |t: &str| match t {
        "" | "+" => Some(1.0),
        "-" => Some(-1.0),
        t => t.parse().ok(),
    };
    match split {
        Some(k) => Some(Complex64::new(body[..k].parse().ok()?, imag(&body[k..])?)),
        None => Some(Complex64::new(0.0, imag(body)?)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    q: Option<f64>,
    r: Option<f64>,
    k: Option<f64>,
    #[serde(rename = "N")]
    n_colors: Option<usize>,
    n: Option<usize>,
    lambda: Option<Vec<usize>>,
    #[serde(rename = "P")]
    p: Option<Vec<CValue>>,
    z: Option<Vec<CValue>>,
    seed: Option<u64>,
    trunc_eps: Option<f64>,
    max_terms: Option<usize>,
    format: Option<Format>,
    /// Trace nome of the elliptic q-KZ kernel.
    #[serde(rename = "Q")]
    trace_nome: Option<f64>,
    /// Integration variables, one list per level `1..N-1`.
    t: Option<Vec<Vec<CValue>>>,
}

/// A validated configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mp: ModularParams,
    pub lambda: CompositionLambda,
    pub pdyn: DynamicalParams,
    pub z: EvaluationPoints,
    pub seed: u64,
    pub format: Format,
    pub trace_nome: Option<f64>,
    pub t: Option<TVariables>,
}

fn required<T>(v: Option<T>, field: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Usage(format!("config: missing key `{field}`")))
}

fn invalid(field: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("config: invalid `{field}`: {reason}"))
}

fn module_error(field: &str, e: Error) -> CliError {
    match e {
        Error::Parameter { name, reason } => CliError::Usage(format!("config: invalid `{name}`: {reason}")),
        other => invalid(field, other),
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?,
            None => DEFAULT_CONFIG.to_string(),
        };
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let raw: RawConfig =
            serde_json::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        let q = required(raw.q, "q")?;
        let r = required(raw.r, "r")?;
        let k = required(raw.k, "k")?;
        let trunc = Truncation::new(raw.trunc_eps.unwrap_or(1e-14), raw.max_terms.unwrap_or(512))
            .map_err(|e| module_error("trunc_eps", e))?;
        let mp = ModularParams::with_truncation(q, r, k, trunc).map_err(|e| module_error("q", e))?;

        let n_colors = required(raw.n_colors, "N")?;
        let n = required(raw.n, "n")?;
        let parts = required(raw.lambda, "lambda")?;
        if parts.len() != n_colors {
            return Err(invalid("lambda", format!("{} parts for N = {n_colors}", parts.len())));
        }
        if parts.iter().sum::<usize>() != n {
            return Err(invalid("n", format!("lambda sums to {}, not {n}", parts.iter().sum::<usize>())));
        }
        let lambda = CompositionLambda::new(parts).map_err(|e| module_error("lambda", e))?;

        let p = required(raw.p, "P")?;
        if p.len() + 1 != n_colors {
            return Err(invalid("P", format!("{} values, expected N-1 = {}", p.len(), n_colors - 1)));
        }
        let p = p.iter().map(|v| v.to_complex("P")).collect::<Result<Vec<_>, _>>()?;
        let pdyn = DynamicalParams::new(p);

        let z = required(raw.z, "z")?;
        if z.len() != n {
            return Err(invalid("z", format!("{} points, expected n = {n}", z.len())));
        }
        let z = z.iter().map(|v| v.to_complex("z")).collect::<Result<Vec<_>, _>>()?;
        let z = EvaluationPoints::new(z).map_err(|e| module_error("z", e))?;
        z.require_distinct(1e-8).map_err(|e| module_error("z", e))?;

        if let Some(qt) = raw.trace_nome {
            if !(qt > 0.0 && qt < 1.0) {
                return Err(invalid("Q", format!("must lie in (0,1), got {qt}")));
            }
        }
        let t = match raw.t {
            None => None,
            Some(levels) => {
                let levels = levels
                    .iter()
                    .map(|lv| lv.iter().map(|v| v.to_complex("t")).collect::<Result<Vec<_>, _>>())
                    .collect::<Result<Vec<_>, _>>()?;
                Some(TVariables::new(levels, &lambda).map_err(|e| module_error("t", e))?)
            }
        };
        Ok(RunConfig {
            mp,
            lambda,
            pdyn,
            z,
            seed: raw.seed.unwrap_or(0),
            format: raw.format.unwrap_or_default(),
            trace_nome: raw.trace_nome,
            t,
        })
    }

    pub fn suite_config(&self, break_shift: bool) -> Result<SuiteConfig, CliError> {
        let mut cfg = SuiteConfig::new(self.mp, self.lambda.clone(), self.pdyn.clone(), self.z.clone(), self.seed)
            .map_err(|e| module_error("config", e))?;
        cfg.break_shift = break_shift;
        Ok(cfg)
    }
}
