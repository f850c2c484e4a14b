//! Resolved run configuration: every invocation, whether built from
//! flags or loaded from a JSON file, reduces to a `RunConfig`, and the
//! same struct is embedded in every output header so runs can be
//! reproduced from their artifacts.

use serde::{Deserialize, Serialize};
use sphere_gns::functionals::Family;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Branch,
    Flow,
    Threshold,
    Euclidean,
    Verify,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LambdaGrid {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
    pub spacing: Spacing,
}

impl LambdaGrid {
    pub fn values(&self) -> Result<Vec<f64>, String> {
        if self.count == 0 {
            return Err("lambda grid needs count >= 1".to_string());
        }
        if self.count > 1 && !(self.stop > self.start) {
            return Err("lambda grid needs stop > start".to_string());
        }
        if !(self.start > 0.0) {
            return Err("lambda grid needs start > 0".to_string());
        }
        if self.count == 1 {
            return Ok(vec![self.start]);
        }
        let n = self.count;
        let vals = match self.spacing {
            Spacing::Linear => (0..n)
                .map(|i| self.start + (self.stop - self.start) * i as f64 / (n - 1) as f64)
                .collect(),
            Spacing::Log => {
                let (a, b) = (self.start.ln(), self.stop.ln());
                (0..n)
                    .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
                    .collect()
            }
        };
        Ok(vals)
    }
}

/// Parses the flag form "start:stop:count".
pub fn parse_lambda_range(s: &str) -> Result<(f64, f64, usize), String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("expected start:stop:count, got {s:?}"));
    }
    let start: f64 = parts[0]
        .parse()
        .map_err(|_| format!("bad start value {:?}", parts[0]))?;
    let stop: f64 = parts[1]
        .parse()
        .map_err(|_| format!("bad stop value {:?}", parts[1]))?;
    let count: usize = parts[2]
        .parse()
        .map_err(|_| format!("bad count value {:?}", parts[2]))?;
    Ok((start, stop, count))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FlowBlock {
    pub m: f64,
    pub t_end: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: CommandKind,
    pub family: Option<Family>,
    pub d: u32,
    pub p: f64,
    pub theta: Option<f64>,
    pub lambda_grid: Option<LambdaGrid>,
    pub grid_n: usize,
    pub flow: Option<FlowBlock>,
    pub tol: Option<f64>,
    pub suite: Option<String>,
    pub seed: u64,
    pub grid_check: bool,
    pub output: Option<String>,
    pub format: OutputFormat,
}
