//! Experiment specifications: flags validated up front and echoed into every
//! report so a run can be replayed.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nsqip::circuits::{random_instance, tx_instance, Instance};
use serde::Serialize;

use crate::error::CliError;

/// Bias toward yes-instances for `random:` sources.
pub const RANDOM_YES_BIAS: f64 = 0.5;

/// Where an instance comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InstanceSource {
    File(PathBuf),
    Tx(usize),
    Random { seed: u64, n_bits: u32 },
}

impl FromStr for InstanceSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(h) = s.strip_prefix("tx:") {
            let h: usize = h.parse().map_err(|_| format!("bad height in {s:?}"))?;
            if h == 0 {
                return Err("tx height must be at least 1".into());
            }
            return Ok(InstanceSource::Tx(h));
        }
        if let Some(rest) = s.strip_prefix("random:") {
            let (seed, bits) = rest
                .split_once(',')
                .ok_or_else(|| format!("expected random:SEED,N_BITS, got {s:?}"))?;
            let seed = seed.trim().parse().map_err(|_| format!("bad seed in {s:?}"))?;
            let n_bits: u32 = bits.trim().parse().map_err(|_| format!("bad n_bits in {s:?}"))?;
            if !(1..=5).contains(&n_bits) {
                return Err(format!("n_bits must be in 1..=5, got {n_bits}"));
            }
            return Ok(InstanceSource::Random { seed, n_bits });
        }
        Ok(InstanceSource::File(PathBuf::from(s)))
    }
}

impl std::fmt::Display for InstanceSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InstanceSource::File(p) => write!(f, "{}", p.display()),
            InstanceSource::Tx(h) => write!(f, "tx:{h}"),
            InstanceSource::Random { seed, n_bits } => write!(f, "random:{seed},{n_bits}"),
        }
    }
}

impl InstanceSource {
    pub fn load(&self) -> Result<Instance, CliError> {
        match self {
            InstanceSource::File(path) => {
                let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
                Instance::from_json(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
            }
            InstanceSource::Tx(h) => tx_instance(*h).map_err(|e| CliError::Input(e.to_string())),
            InstanceSource::Random { seed, n_bits } => Ok(random_instance(*seed, *n_bits, RANDOM_YES_BIAS)),
        }
    }

    pub fn tx_height(&self) -> Option<usize> {
        match self {
            InstanceSource::Tx(h) => Some(*h),
            _ => None,
        }
    }
}

/// Every flag a subcommand consumed, in replayable form.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ExperimentSpec {
    pub subcommand: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instance: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qubit_cap: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub restarts: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

/// The output directory must exist before any work starts.
pub fn check_out(out: Option<&Path>) -> Result<(), CliError> {
    if let Some(out) = out {
        let parent = out
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        if !parent.is_dir() {
            return Err(CliError::Input(format!(
                "output directory {} does not exist",
                parent.display()
            )));
        }
    }
    Ok(())
}

pub fn check_tol(tol: f64) -> Result<(), CliError> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(CliError::Input(format!("tolerance {tol} outside (0, 1)")));
    }
    Ok(())
}

/// `log2` of the question count, checked against an explicit `--k`.
pub fn question_bits(inst: &Instance, k: Option<usize>) -> Result<usize, CliError> {
    let bits = inst.n_bits() as usize;
    match k {
        Some(k) if k != bits => Err(CliError::Input(format!(
            "--k {k} does not match the instance's {} questions (k = {bits})",
            inst.gate_count()
        ))),
        _ => Ok(bits),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sources() {
        assert_eq!("tx:2".parse(), Ok(InstanceSource::Tx(2)));
        assert_eq!("random:7, 3".parse(), Ok(InstanceSource::Random { seed: 7, n_bits: 3 }));
        assert_eq!("a.json".parse(), Ok(InstanceSource::File("a.json".into())));
        assert!("tx:0".parse::<InstanceSource>().is_err());
        assert!("random:1".parse::<InstanceSource>().is_err());
        assert!("random:1,9".parse::<InstanceSource>().is_err());
        assert_eq!(InstanceSource::Random { seed: 7, n_bits: 3 }.to_string(), "random:7,3");
    }
}
