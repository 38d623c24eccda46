//! Flat `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are
//! rejected so that typos do not silently fall back to defaults.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::assembly::BuiltinSource;
use crate::error::{Error, Result};
use crate::medium::FieldKind;

/// Where the permeability comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum MediumSpec {
    /// `kappa = 1` everywhere.
    Constant,
    Generated { kind: FieldKind, contrast: f64, seed: u64 },
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub coarse_n: usize,
    pub fine_per_coarse: usize,
    pub medium: MediumSpec,
    pub gamma: f64,
    /// One count for every block, or one per block.
    pub aux_modes: Vec<usize>,
    pub m_offline: usize,
    pub m_online: usize,
    pub theta: f64,
    pub n_iter: usize,
    pub source: BuiltinSource,
    pub out_dir: PathBuf,
    pub solver_tol: f64,
    /// Worker threads; 0 lets the pool decide.
    pub threads: usize,
    pub early_exit: bool,
    pub skip_ratio: f64,
    pub write_maps: bool,
    /// Basis indices to dump as nodal field files.
    pub dump_bases: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            coarse_n: 16,
            fine_per_coarse: 16,
            medium: MediumSpec::Generated {
                kind: FieldKind::Mixed,
                contrast: 1e4,
                seed: 0,
            },
            gamma: 4.0,
            aux_modes: vec![2],
            m_offline: 2,
            m_online: 3,
            theta: 0.0,
            n_iter: 3,
            source: BuiltinSource::RadialQuarter,
            out_dir: PathBuf::from("out"),
            solver_tol: 1e-10,
            threads: 0,
            early_exit: false,
            skip_ratio: 1e-12,
            write_maps: false,
            dump_bases: Vec::new(),
        }
    }
}

fn parse_value<V: FromStr>(key: &str, value: &str, line: usize) -> Result<V> {
    value.parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid value `{value}` for `{key}`"),
    })
}

fn parse_list(key: &str, value: &str, line: usize) -> Result<Vec<usize>> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|v| parse_value(key, v.trim(), line))
        .collect()
}

fn join(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut kind = String::from("mixed");
        let mut contrast = 1e4;
        let mut seed = 0u64;
        let mut file: Option<PathBuf> = None;
        let mut constant_value = None;
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let s = raw.trim();
            if s.is_empty() || s.starts_with('#') {
                continue;
            }
            let (key, value) = s.split_once('=').ok_or_else(|| Error::Parse {
                line,
                message: format!("expected `key = value`, found `{s}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "coarse_n" => cfg.coarse_n = parse_value(key, value, line)?,
                "fine_per_coarse" => cfg.fine_per_coarse = parse_value(key, value, line)?,
                "medium_kind" => kind = value.to_string(),
                "medium_file" => file = Some(PathBuf::from(value)),
                "contrast" => contrast = parse_value(key, value, line)?,
                "seed" => seed = parse_value(key, value, line)?,
                "gamma" => cfg.gamma = parse_value(key, value, line)?,
                "aux_modes" => cfg.aux_modes = parse_list(key, value, line)?,
                "m_offline" => cfg.m_offline = parse_value(key, value, line)?,
                "m_online" => cfg.m_online = parse_value(key, value, line)?,
                "theta" => cfg.theta = parse_value(key, value, line)?,
                "n_iter" => cfg.n_iter = parse_value(key, value, line)?,
                "source" => cfg.source = value.parse()?,
                "source_value" => constant_value = Some(parse_value::<f64>(key, value, line)?),
                "out_dir" => cfg.out_dir = PathBuf::from(value),
                "solver_tol" => cfg.solver_tol = parse_value(key, value, line)?,
                "threads" => cfg.threads = parse_value(key, value, line)?,
                "early_exit" => cfg.early_exit = parse_value(key, value, line)?,
                "skip_ratio" => cfg.skip_ratio = parse_value(key, value, line)?,
                "write_maps" => cfg.write_maps = parse_value(key, value, line)?,
                "dump_bases" => cfg.dump_bases = parse_list(key, value, line)?,
                other => {
                    return Err(Error::Parse {
                        line,
                        message: format!("unknown key `{other}`"),
                    })
                }
            }
        }
        if let (BuiltinSource::Constant(_), Some(c)) = (cfg.source, constant_value) {
            cfg.source = BuiltinSource::Constant(c);
        }
        cfg.medium = match kind.as_str() {
            "constant" => MediumSpec::Constant,
            "file" => MediumSpec::File(
                file.ok_or_else(|| Error::Config("medium_kind = file needs medium_file".into()))?,
            ),
            other => MediumSpec::Generated {
                kind: other.parse()?,
                contrast,
                seed,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.coarse_n == 0 || self.fine_per_coarse == 0 {
            return Err(Error::Config("grid counts must be positive".into()));
        }
        if !(self.theta >= 0.0 && self.theta < 1.0) {
            return Err(Error::Config(format!("theta must lie in [0, 1), got {}", self.theta)));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::Config(format!("gamma must be positive, got {}", self.gamma)));
        }
        if self.aux_modes.is_empty() || self.aux_modes.contains(&0) {
            return Err(Error::Config("aux_modes must be positive".into()));
        }
        if !(self.solver_tol > 0.0) {
            return Err(Error::Config("solver_tol must be positive".into()));
        }
        if let MediumSpec::Generated { contrast, .. } = self.medium {
            if !(contrast >= 1.0) {
                return Err(Error::Config(format!("contrast must be >= 1, got {contrast}")));
            }
        }
        Ok(())
    }

    /// Every key with its effective value; parsing the echo gives back the
    /// same configuration.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("coarse_n", self.coarse_n.to_string());
        kv("fine_per_coarse", self.fine_per_coarse.to_string());
        match &self.medium {
            MediumSpec::Constant => kv("medium_kind", "constant".into()),
            MediumSpec::Generated { kind, contrast, seed } => {
                kv("medium_kind", kind.to_string());
                kv("contrast", format!("{contrast:?}"));
                kv("seed", seed.to_string());
            }
            MediumSpec::File(p) => {
                kv("medium_kind", "file".into());
                kv("medium_file", p.display().to_string());
            }
        }
        kv("gamma", format!("{:?}", self.gamma));
        kv("aux_modes", join(&self.aux_modes));
        kv("m_offline", self.m_offline.to_string());
        kv("m_online", self.m_online.to_string());
        kv("theta", format!("{:?}", self.theta));
        kv("n_iter", self.n_iter.to_string());
        kv("source", self.source.to_string());
        if let BuiltinSource::Constant(c) = self.source {
            kv("source_value", format!("{c:?}"));
        }
        kv("out_dir", self.out_dir.display().to_string());
        kv("solver_tol", format!("{:?}", self.solver_tol));
        kv("threads", self.threads.to_string());
        kv("early_exit", self.early_exit.to_string());
        kv("skip_ratio", format!("{:?}", self.skip_ratio));
        kv("write_maps", self.write_maps.to_string());
        kv("dump_bases", join(&self.dump_bases));
        s
    }

    /// Replaces the seed of a generated medium; other media have none.
    pub fn set_seed(&mut self, new: u64) {
        if let MediumSpec::Generated { seed, .. } = &mut self.medium {
            *seed = new;
        }
    }
}
