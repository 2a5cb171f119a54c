//! On-disk spec loading and report assembly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use statekey::bounds::{RateReport, UpperBoundResult};
use statekey::channel::{
    AuxiliaryPolicy, ChannelSpec, DecomposedChannel, DecomposedSpec, PolicySpec,
    StateWiretapChannel,
};
use statekey::prob::Kernel;
use statekey::protocol::{SimReport, SourceKeyStats};

use crate::output::{read_to_string, CliError, CliResult};

pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

pub fn load_channel(path: &Path) -> CliResult<StateWiretapChannel> {
    let spec: ChannelSpec = load_json(path)?;
    Ok(spec.build()?)
}

pub fn load_decomposed(path: &Path) -> CliResult<DecomposedChannel> {
    let spec: DecomposedSpec = load_json(path)?;
    Ok(spec.build()?)
}

/// Simulation input: a channel plus the auxiliary policy to run it with.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimSpec {
    pub channel: ChannelSpec,
    pub policy: PolicySpec,
}

#[derive(Debug, Serialize)]
pub struct BoundOutput {
    pub rate: f64,
    pub feasible: bool,
    pub terms: std::collections::BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicySpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<Vec<Vec<f64>>>,
}

impl BoundOutput {
    fn from_report(report: RateReport, policy: Option<&AuxiliaryPolicy>) -> Self {
        BoundOutput {
            rate: report.rate,
            feasible: report.feasible,
            terms: report.terms,
            notes: report.notes,
            policy: policy.map(PolicySpec::from_policy),
            input: None,
        }
    }

    fn with_input(mut self, k: &Kernel) -> Self {
        self.input = Some((0..k.num_rows()).map(|i| k.row(i).to_vec()).collect());
        self
    }
}

#[derive(Debug, Serialize)]
pub struct DiscreteBoundsReport {
    pub lower: BoundOutput,
    pub upper: BoundOutput,
    pub secret_message: BoundOutput,
    pub symmetric: BoundOutput,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub masking: Option<BoundOutput>,
}

impl DiscreteBoundsReport {
    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        lower: RateReport,
        lower_policy: &AuxiliaryPolicy,
        upper: UpperBoundResult,
        secret_message: RateReport,
        sm_policy: &AuxiliaryPolicy,
        symmetric: RateReport,
        sym_policy: &AuxiliaryPolicy,
        masking: Option<(Kernel, RateReport)>,
    ) -> Self {
        DiscreteBoundsReport {
            lower: BoundOutput::from_report(lower, Some(lower_policy)),
            upper: BoundOutput::from_report(upper.report, None).with_input(&upper.input),
            secret_message: BoundOutput::from_report(secret_message, Some(sm_policy)),
            symmetric: BoundOutput::from_report(symmetric, Some(sym_policy)),
            masking: masking.map(|(k, r)| BoundOutput::from_report(r, None).with_input(&k)),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct CausalSimOutput {
    #[serde(flatten)]
    pub report: SimReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact_source_key: Option<SourceKeyStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact_pairwise_key_mi_bits: Option<Vec<Vec<f64>>>,
}

/// Parses `start:stop:step` (inclusive stop within 1e-9) or a single float.
pub fn parse_range(s: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let parse = |t: &str| -> CliResult<f64> {
        t.trim()
            .parse::<f64>()
            .map_err(|_| CliError::validation(format!("cannot parse number '{t}' in '{s}'")))
    };
    match parts.len() {
        1 => Ok(vec![parse(parts[0])?]),
        3 => {
            let (start, stop, step) = (parse(parts[0])?, parse(parts[1])?, parse(parts[2])?);
            if step <= 0.0 {
                return Err(CliError::validation(format!("step must be positive in '{s}'")));
            }
            if stop < start {
                return Err(CliError::validation(format!("stop < start in '{s}'")));
            }
            let mut out = Vec::new();
            let count = ((stop - start) / step + 1e-9).floor() as usize;
            for k in 0..=count {
                out.push(start + step * k as f64);
            }
            Ok(out)
        }
        _ => Err(CliError::validation(format!(
            "range must be 'value' or 'start:stop:step', got '{s}'"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_parsing() {
        assert_eq!(parse_range("5").unwrap(), vec![5.0]);
        let r = parse_range("0:30:1").unwrap();
        assert_eq!(r.len(), 31);
        assert_eq!(r[0], 0.0);
        assert_eq!(r[30], 30.0);
        let r = parse_range("-10:20:0.5").unwrap();
        assert_eq!(r.len(), 61);
        assert!(parse_range("1:2").is_err());
        assert!(parse_range("2:1:1").is_err());
        assert!(parse_range("a:b:c").is_err());
    }
}
