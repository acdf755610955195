//! `key = value` run configuration. Keys may carry one `section.` prefix;
//! `#` starts a comment. Unknown keys are errors and `seed` is mandatory.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::assembly::{Mu, Problem, StabilizationConfig, StabilizationMethod};
use crate::error::{Error, Result};
use crate::hifi::{FePair, ParameterBox, ProblemConfig};
use crate::mesh::Diagonal;
use crate::rb::RbOption;

const KEYS: &[&str] = &[
    "problem",
    "fe_pair",
    "stabilization.method",
    "stabilization.rho",
    "stabilization.delta",
    "stabilization.apply_online",
    "option",
    "mu.mu1_range",
    "mu.mu2_range",
    "mu.online",
    "mu.mu2_ref",
    "rb.n_max",
    "rb.train_size",
    "rb.test_size",
    "sweep.n_values",
    "infsup.grid",
    "mesh.nx",
    "mesh.ny",
    "mesh.diagonal",
    "lid_speed",
    "seed",
    "output",
    "threads",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub option: RbOption,
    pub online_mu: Mu,
    pub n_max: usize,
    pub train_size: usize,
    pub test_size: usize,
    /// Reduced dimensions of the error sweep.
    pub n_values: Vec<usize>,
    /// Points per direction of the inf-sup grid.
    pub infsup_grid: usize,
    pub seed: u64,
    pub output: PathBuf,
    /// Worker threads; `None` uses every core.
    pub threads: Option<usize>,
}

fn bad(key: &str, value: &str, expected: &str) -> Error {
    Error::InvalidArgument(format!("`{key} = {value}`: expected {expected}"))
}

fn number<T: std::str::FromStr>(key: &str, v: &str, expected: &str) -> Result<T> {
    v.parse().map_err(|_| bad(key, v, expected))
}

fn pair(key: &str, v: &str) -> Result<[f64; 2]> {
    let parts: Vec<&str> = v.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
    match parts.as_slice() {
        [a, b] => Ok([number(key, a, "two numbers")?, number(key, b, "two numbers")?]),
        _ => Err(bad(key, v, "two numbers")),
    }
}

fn n_values(key: &str, v: &str) -> Result<Vec<usize>> {
    if let Some((a, b)) = v.split_once("..") {
        let a: usize = number(key, a.trim(), "a range `a..b` or a list")?;
        let b: usize = number(key, b.trim().trim_start_matches('='), "a range `a..b` or a list")?;
        return Ok((a..=b).collect());
    }
    v.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| number(key, s, "a range `a..b` or a list"))
        .collect()
}

/// Splits configuration text into `(key, value)` pairs, rejecting unknown
/// and repeated keys.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("line {}: expected `key = value`, got `{line}`", i + 1)))?;
        let key = canonical(k.trim())?;
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(Error::InvalidArgument(format!("line {}: `{key}` is set twice", i + 1)));
        }
    }
    Ok(out)
}

/// Resolves a key to its full `section.key` form.
pub fn canonical(key: &str) -> Result<String> {
    if KEYS.contains(&key) {
        return Ok(key.to_string());
    }
    let matches: Vec<&&str> = KEYS.iter().filter(|k| k.rsplit('.').next() == Some(key)).collect();
    match matches.as_slice() {
        [one] if !key.contains('.') => Ok(one.to_string()),
        _ => Err(Error::InvalidArgument(format!("unknown configuration key `{key}`"))),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_pairs(&parse_pairs(text)?)
    }

    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| pairs.get(k).map(String::as_str);
        let problem = Problem::parse(get("problem").unwrap_or("stokes"))?;
        let fe_pair = FePair::parse(get("fe_pair").unwrap_or("P1P1"))?;
        let rho: i32 = match get("stabilization.rho") {
            Some(v) => number("stabilization.rho", v, "an integer")?,
            None => 0,
        };
        let default_method = match (problem, fe_pair) {
            (_, FePair::P2P1) => "none",
            (_, FePair::P1P0) => "edge-jump",
            (Problem::Stokes, FePair::P1P1) => "brezzi-pitkaranta",
            (Problem::Stokes, _) => "residual",
            (Problem::NavierStokes, _) => "supg",
        };
        let method = StabilizationMethod::parse(get("stabilization.method").unwrap_or(default_method), rho)?;
        let delta: f64 = match get("stabilization.delta") {
            Some(v) => number("stabilization.delta", v, "a number")?,
            None if method == StabilizationMethod::None => 0.0,
            None if problem == Problem::NavierStokes => 1.0,
            None => 0.05,
        };
        let apply_online = match get("stabilization.apply_online") {
            Some(v) => number("stabilization.apply_online", v, "true or false")?,
            None => method != StabilizationMethod::None,
        };
        let stabilization = StabilizationConfig { method, delta, apply_online };
        let base = match problem {
            Problem::Stokes => ProblemConfig::stokes_cavity(fe_pair, stabilization),
            Problem::NavierStokes => ProblemConfig::navier_stokes_cavity(fe_pair, stabilization),
        };
        let mut pbox = base.parameter_box;
        if let Some(v) = get("mu.mu1_range") {
            pbox.mu1 = pair("mu.mu1_range", v)?;
        }
        if let Some(v) = get("mu.mu2_range") {
            pbox.mu2 = pair("mu.mu2_range", v)?;
        }
        let usize_or = |k: &str, d: usize| -> Result<usize> {
            get(k).map_or(Ok(d), |v| number(k, v, "a non-negative integer"))
        };
        let f64_or = |k: &str, d: f64| -> Result<f64> { get(k).map_or(Ok(d), |v| number(k, v, "a number")) };
        let config = ProblemConfig {
            parameter_box: ParameterBox::new(pbox.mu1, pbox.mu2),
            nx: usize_or("mesh.nx", base.nx)?,
            ny: usize_or("mesh.ny", base.ny)?,
            diagonal: get("mesh.diagonal").map_or(Ok(Diagonal::Uniform), Diagonal::parse)?,
            mu2_ref: f64_or("mu.mu2_ref", base.mu2_ref)?,
            lid_speed: f64_or("lid_speed", base.lid_speed)?,
            ..base
        };
        config.validate()?;

        let seed: u64 = match get("seed") {
            Some(v) => number("seed", v, "an unsigned integer")?,
            None => return Err(Error::InvalidArgument("`seed` is mandatory".into())),
        };
        let default_online = match problem {
            Problem::Stokes => [0.6, 2.0],
            Problem::NavierStokes => [120.0, 2.0],
        };
        let online_mu = get("mu.online").map_or(Ok(default_online), |v| pair("mu.online", v))?;
        config.check_parameter(online_mu)?;
        if !config.parameter_box.contains(online_mu) {
            return Err(Error::InvalidArgument(format!(
                "online parameter ({}, {}) lies outside the parameter box",
                online_mu[0], online_mu[1]
            )));
        }
        let n_max = usize_or("rb.n_max", if problem == Problem::Stokes { 20 } else { 16 })?;
        let train_size = usize_or("rb.train_size", if problem == Problem::Stokes { 100 } else { 64 })?;
        let test_size = usize_or("rb.test_size", 50)?;
        if n_max == 0 || train_size == 0 {
            return Err(Error::InvalidArgument("`n_max` and `train_size` must be at least 1".into()));
        }
        let n_values = match get("sweep.n_values") {
            Some(v) => n_values("sweep.n_values", v)?,
            None => (1..=n_max).collect(),
        };
        if n_values.iter().any(|&n| n == 0 || n > n_max) {
            return Err(Error::InvalidArgument(format!("sweep sizes must lie in 1..={n_max}")));
        }
        let infsup_grid = usize_or("infsup.grid", 5)?;
        let threads = match get("threads") {
            None | Some("auto") | Some("0") => None,
            Some(v) => Some(number("threads", v, "a positive integer or `auto`")?),
        };
        Ok(Self {
            problem: config,
            option: get("option").map_or(Ok(RbOption::I), RbOption::parse)?,
            online_mu,
            n_max,
            train_size,
            test_size,
            n_values,
            infsup_grid,
            seed,
            output: PathBuf::from(get("output").unwrap_or("out")),
            threads,
        })
    }

    /// Every resolved setting that affects results, as `key = value` in a
    /// fixed order. The output directory and thread count are left out.
    pub fn echo(&self) -> Vec<String> {
        let c = &self.problem;
        let s = &c.stabilization;
        let list: Vec<String> = self.n_values.iter().map(usize::to_string).collect();
        vec![
            format!("problem = {}", c.problem.name()),
            format!("fe_pair = {}", c.fe_pair.name()),
            format!("stabilization.method = {}", s.method.name()),
            format!("stabilization.rho = {}", s.method.rho()),
            format!("stabilization.delta = {}", s.delta),
            format!("stabilization.apply_online = {}", s.apply_online),
            format!("option = {}", self.option),
            format!("mu.mu1_range = {} {}", c.parameter_box.mu1[0], c.parameter_box.mu1[1]),
            format!("mu.mu2_range = {} {}", c.parameter_box.mu2[0], c.parameter_box.mu2[1]),
            format!("mu.online = {} {}", self.online_mu[0], self.online_mu[1]),
            format!("mu.mu2_ref = {}", c.mu2_ref),
            format!("rb.n_max = {}", self.n_max),
            format!("rb.train_size = {}", self.train_size),
            format!("rb.test_size = {}", self.test_size),
            format!("sweep.n_values = {}", list.join(",")),
            format!("infsup.grid = {}", self.infsup_grid),
            format!("mesh.nx = {}", c.nx),
            format!("mesh.ny = {}", c.ny),
            format!("mesh.diagonal = {}", c.diagonal.name()),
            format!("lid_speed = {}", c.lid_speed),
            format!("seed = {}", self.seed),
        ]
    }
}
