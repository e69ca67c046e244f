//! Run configuration: defaults, flat config files, and command-line flags.
//!
//! Precedence is defaults < config file < flags. Config files are flat
//! `key = value` text with `#` comments; keys match the flag names without
//! the leading `--`.

use std::collections::HashMap;
use std::path::PathBuf;

use cpsdyn::propagator::{discriminant, Hamiltonian2};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Sqz,
    Case1,
    Case2,
    SqcTwf,
    Covariant,
    Custom,
}

impl Method {
    pub fn parse(s: &str) -> Result<Method, CliError> {
        Ok(match s {
            "sqz" => Method::Sqz,
            "case1" => Method::Case1,
            "case2" => Method::Case2,
            "sqc-twf" => Method::SqcTwf,
            "covariant" => Method::Covariant,
            "custom" => Method::Custom,
            other => return Err(CliError::Usage(format!("unknown method: {other}"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Sqz => "sqz",
            Method::Case1 => "case1",
            Method::Case2 => "case2",
            Method::SqcTwf => "sqc-twf",
            Method::Covariant => "covariant",
            Method::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub h11: f64,
    pub h22: f64,
    pub h12_re: f64,
    pub h12_im: f64,
    pub method: Method,
    pub gamma: f64,
    pub n_traj: u64,
    pub seed: u64,
    pub t_max: Option<f64>,
    pub dt: Option<f64>,
    pub out: Option<PathBuf>,
    pub xi_table: Option<PathBuf>,
    pub f_table: Option<PathBuf>,
    pub threads: Option<usize>,
    pub lambdas: Vec<f64>,
    pub methods: Vec<Method>,
    pub inject_fault: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            h11: 10.0,
            h22: 2.0,
            h12_re: 2.0,
            h12_im: 0.0,
            method: Method::Sqz,
            gamma: 0.5,
            n_traj: 1_000_000,
            seed: 42,
            t_max: None,
            dt: None,
            out: None,
            xi_table: None,
            f_table: None,
            threads: None,
            lambdas: vec![0.02, 0.2, 2.0, 20.0],
            methods: vec![Method::Sqz, Method::Case1],
            inject_fault: None,
        }
    }
}

const KNOWN_KEYS: &[&str] = &[
    "config", "h11", "h22", "lambda", "h12-re", "h12-im", "method", "gamma", "ntraj", "seed",
    "tmax", "dt", "out", "xi-table", "f-table", "threads", "lambdas", "methods", "inject-fault",
];

impl RunConfig {
    pub fn from_args(args: &[String]) -> Result<RunConfig, CliError> {
        // Flags come in `--key value` pairs.
        let mut flags: Vec<(String, String)> = Vec::new();
        let mut it = args.iter();
        while let Some(arg) = it.next() {
            let key = arg
                .strip_prefix("--")
                .ok_or_else(|| CliError::Usage(format!("expected a --flag, got: {arg}")))?;
            let value = it
                .next()
                .ok_or_else(|| CliError::Usage(format!("flag --{key} needs a value")))?;
            if !KNOWN_KEYS.contains(&key) {
                return Err(CliError::Usage(format!("unknown flag: --{key}")));
            }
            flags.push((key.to_string(), value.clone()));
        }

        // Config file first, then flags on top.
        let mut map: HashMap<String, String> = HashMap::new();
        if let Some((_, path)) = flags.iter().find(|(k, _)| k == "config") {
            for (lineno, line) in std::fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("config {path}: {e}")))?
                .lines()
                .enumerate()
            {
                let t = line.trim();
                if t.is_empty() || t.starts_with('#') {
                    continue;
                }
                let (k, v) = t.split_once('=').ok_or_else(|| {
                    CliError::Usage(format!("config {path} line {}: expected key = value", lineno + 1))
                })?;
                let k = k.trim();
                if !KNOWN_KEYS.contains(&k) || k == "config" {
                    return Err(CliError::Usage(format!("config {path}: unknown key: {k}")));
                }
                map.insert(k.to_string(), v.trim().to_string());
            }
        }
        for (k, v) in flags {
            if k != "config" {
                map.insert(k, v);
            }
        }

        let mut cfg = RunConfig::default();
        let f = |v: &str, key: &str| -> Result<f64, CliError> {
            v.parse::<f64>().map_err(|_| CliError::Usage(format!("{key}: not a number: {v}")))
        };
        let mut lambda_override: Option<f64> = None;
        for (k, v) in &map {
            match k.as_str() {
                "h11" => cfg.h11 = f(v, k)?,
                "h22" => cfg.h22 = f(v, k)?,
                "lambda" => lambda_override = Some(f(v, k)?),
                "h12-re" => cfg.h12_re = f(v, k)?,
                "h12-im" => cfg.h12_im = f(v, k)?,
                "method" => cfg.method = Method::parse(v)?,
                "gamma" => cfg.gamma = f(v, k)?,
                "ntraj" => {
                    cfg.n_traj =
                        v.parse().map_err(|_| CliError::Usage(format!("ntraj: bad count: {v}")))?
                }
                "seed" => {
                    cfg.seed =
                        v.parse().map_err(|_| CliError::Usage(format!("seed: bad seed: {v}")))?
                }
                "tmax" => cfg.t_max = Some(f(v, k)?),
                "dt" => cfg.dt = Some(f(v, k)?),
                "out" => cfg.out = Some(PathBuf::from(v)),
                "xi-table" => cfg.xi_table = Some(PathBuf::from(v)),
                "f-table" => cfg.f_table = Some(PathBuf::from(v)),
                "threads" => {
                    cfg.threads =
                        Some(v.parse().map_err(|_| {
                            CliError::Usage(format!("threads: bad count: {v}"))
                        })?)
                }
                "lambdas" => {
                    cfg.lambdas = v
                        .split(',')
                        .filter(|s| !s.trim().is_empty())
                        .map(|s| f(s.trim(), "lambdas"))
                        .collect::<Result<_, _>>()?
                }
                "methods" => {
                    cfg.methods = v
                        .split(',')
                        .filter(|s| !s.trim().is_empty())
                        .map(|s| Method::parse(s.trim()))
                        .collect::<Result<_, _>>()?
                }
                "inject-fault" => cfg.inject_fault = Some(v.clone()),
                _ => unreachable!("keys are screened above"),
            }
        }
        // `lambda` is shorthand for a real off-diagonal coupling and wins
        // over an h12-re from lower-precedence sources.
        if let Some(l) = lambda_override {
            cfg.h12_re = l;
            if !map.contains_key("h12-im") {
                cfg.h12_im = 0.0;
            }
        }
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), CliError> {
        if self.n_traj < 1 {
            return Err(CliError::Usage("ntraj must be at least 1".into()));
        }
        if let Some(t) = self.t_max {
            if t.is_nan() || t <= 0.0 {
                return Err(CliError::Usage(format!("tmax must be positive, got {t}")));
            }
        }
        if let Some(dt) = self.dt {
            if dt.is_nan() || dt <= 0.0 {
                return Err(CliError::Usage(format!("dt must be positive, got {dt}")));
            }
        }
        if self.gamma.is_nan() || self.gamma <= -0.5 {
            return Err(CliError::Usage(format!("gamma must exceed -1/2, got {}", self.gamma)));
        }
        if self.method == Method::Custom && self.xi_table.is_none() && self.f_table.is_none() {
            return Err(CliError::Usage(
                "method custom requires --xi-table or --f-table".into(),
            ));
        }
        Ok(())
    }

    pub fn hamiltonian(&self) -> Result<Hamiltonian2, CliError> {
        Hamiltonian2::new(self.h11, self.h22, self.h12_re, self.h12_im)
            .map_err(|e| CliError::Usage(e.to_string()))
    }

    /// The uniform grid: `tmax` defaults to three Rabi periods and `dt` to
    /// a two-hundredth of one. A vanishing discriminant has no Rabi period,
    /// so explicit values are required there.
    pub fn time_grid(&self) -> Result<(Vec<f64>, f64, f64), CliError> {
        let h = self.hamiltonian()?;
        let delta = discriminant(&h);
        let period = if delta > 0.0 {
            Some(std::f64::consts::TAU / delta.sqrt())
        } else {
            None
        };
        let t_max = match (self.t_max, period) {
            (Some(t), _) => t,
            (None, Some(p)) => 3.0 * p,
            (None, None) => {
                return Err(CliError::Usage(
                    "tmax is required when the generator has no Rabi period".into(),
                ))
            }
        };
        let dt = match (self.dt, period) {
            (Some(d), _) => d,
            (None, Some(p)) => p / 200.0,
            (None, None) => {
                return Err(CliError::Usage(
                    "dt is required when the generator has no Rabi period".into(),
                ))
            }
        };
        let n = (t_max / dt).round().max(1.0) as usize;
        Ok(((0..=n).map(|k| k as f64 * dt).collect(), t_max, dt))
    }

    /// One-line record of the full configuration for CSV headers.
    pub fn describe(&self, t_max: f64, dt: f64, n_times: usize) -> String {
        format!(
            "method={} h11={} h22={} h12_re={} h12_im={} gamma={} ntraj={} seed={} tmax={} dt={} grid={}",
            self.method.name(),
            self.h11,
            self.h22,
            self.h12_re,
            self.h12_im,
            self.gamma,
            self.n_traj,
            self.seed,
            t_max,
            dt,
            n_times
        )
    }
}
