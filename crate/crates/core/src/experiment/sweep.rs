use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::report::NormReport;
use super::suites::run_trial;
use super::{ExperimentConfig, Suite};
use crate::error::{Error, Result};
use crate::weights::EnsembleKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParameter {
    /// Power exponent of `μ` (which becomes a power weight).
    Alpha,
    /// Amplitude of every cascade weight and log symbol.
    Delta,
    Depth,
    /// Sparsity of the symbol (which becomes a sparse Haar symbol).
    Sparsity,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Alpha => "alpha",
            SweepParameter::Delta => "delta",
            SweepParameter::Depth => "depth",
            SweepParameter::Sparsity => "sparsity",
        }
    }

    /// `base` with this parameter set to `value`.
    pub fn apply(self, base: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut config = base.clone();
        match self {
            SweepParameter::Alpha => {
                let x0 = match config.mu.kind {
                    EnsembleKind::Power { x0, .. } => x0,
                    _ => 0.5,
                };
                config.mu.kind = EnsembleKind::Power { alpha: value, x0 };
            }
            SweepParameter::Delta => {
                for spec in [&mut config.mu, &mut config.lambda, &mut config.symbol] {
                    if let EnsembleKind::Cascade { delta } | EnsembleKind::LogSymbol { delta } = &mut spec.kind {
                        *delta = value;
                    }
                }
            }
            SweepParameter::Depth => {
                if value.fract() != 0.0 || value < 0.0 {
                    return Err(Error::InvalidSpec(format!("depth {value} is not a whole number")));
                }
                config.depth = value as u32;
            }
            SweepParameter::Sparsity => {
                let amplitude = match config.symbol.kind {
                    EnsembleKind::HaarSparseSymbol { amplitude, .. } => amplitude,
                    _ => 1.0,
                };
                config.symbol.kind = EnsembleKind::HaarSparseSymbol { sparsity: value, amplitude };
            }
        }
        config.validate()?;
        Ok(config)
    }
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [SweepParameter::Alpha, SweepParameter::Delta, SweepParameter::Depth, SweepParameter::Sparsity]
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidSpec(format!("unknown sweep parameter `{s}`")))
    }
}

const MAX_SWEEP_POINTS: usize = 10_000;

/// `start:step:end`, inclusive. A zero step gives the single point `start`.
pub fn parse_range(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidSpec(format!("malformed range `{text}`, expected start:step:end"));
    let parts: Vec<f64> = text
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let [start, step, end] = parts[..] else { return Err(bad()) };
    if !(start.is_finite() && step.is_finite() && end.is_finite()) {
        return Err(bad());
    }
    if step == 0.0 {
        return Ok(vec![start]);
    }
    let span = (end - start) / step;
    if span < -1e-9 {
        return Err(bad());
    }
    let count = span.round() as usize + 1;
    if count > MAX_SWEEP_POINTS {
        return Err(Error::InvalidSpec(format!("range `{text}` has {count} points")));
    }
    // integer multiples keep the grid free of accumulated drift
    Ok((0..count).map(|k| start + k as f64 * step).map(|v| (v * 1e12).round() / 1e12).collect())
}

const RESIDUALS: [&str; 4] = ["haar_roundtrip_residual", "product_residual", "expansion_residual", "remainder_residual"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub depth: u32,
    pub seed: u64,
    pub report: NormReport,
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub parameter: SweepParameter,
    pub rows: Vec<SweepRow>,
}

/// One norm report (trial 0 of each derived config) per parameter value.
pub fn sweep(base: &ExperimentConfig, parameter: SweepParameter, values: &[f64]) -> Result<SweepTable> {
    let configs = values.iter().map(|v| parameter.apply(base, *v)).collect::<Result<Vec<_>>>()?;
    let rows = base.execution.map_indexed(configs.len(), |k| -> Result<SweepRow> {
        let config = &configs[k];
        let inputs = config.trial(0)?;
        let report = NormReport::compute_with(&inputs.mu, &inputs.lambda, &inputs.symbol, crate::Execution::Sequential)?;
        let identities = run_trial(Suite::Identities, config, 0, Ok(inputs.clone()));
        if let Some(e) = identities.error {
            return Err(Error::InvalidSpec(e));
        }
        let residuals = RESIDUALS.iter().map(|r| identities.values.get(*r).copied().unwrap_or(f64::NAN)).collect();
        Ok(SweepRow { value: values[k], depth: config.depth, seed: inputs.seed, report, residuals })
    });
    Ok(SweepTable { parameter, rows: rows.into_iter().collect::<Result<_>>()? })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trend {
    Constant,
    Increasing,
    Decreasing,
    Mixed,
}

impl Trend {
    fn of(values: &[f64]) -> Self {
        let (mut up, mut down) = (false, false);
        for pair in values.windows(2) {
            let scale = pair[0].abs().max(pair[1].abs()).max(1e-300);
            let delta = (pair[1] - pair[0]) / scale;
            up |= delta > 1e-12;
            down |= delta < -1e-12;
        }
        match (up, down) {
            (false, false) => Trend::Constant,
            (true, false) => Trend::Increasing,
            (false, true) => Trend::Decreasing,
            (true, true) => Trend::Mixed,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Trend::Constant => "constant",
            Trend::Increasing => "non-decreasing",
            Trend::Decreasing => "non-increasing",
            Trend::Mixed => "not monotone",
        }
    }
}

impl SweepTable {
    pub fn header(&self) -> Vec<String> {
        let mut h = vec![self.parameter.name().to_string(), "depth".into(), "seed".into()];
        if let Some(row) = self.rows.first() {
            h.extend(row.report.columns().into_iter().map(|(n, _)| n.to_string()));
        }
        h.extend(RESIDUALS.iter().map(|r| r.to_string()));
        h
    }

    fn numeric_columns(row: &SweepRow) -> Vec<f64> {
        let mut v: Vec<f64> = row.report.columns().into_iter().map(|(_, x)| x).collect();
        v.extend(&row.residuals);
        v
    }

    /// `(column, trend)` along the parameter, skipping columns with NaN.
    pub fn monotonicity(&self) -> Vec<(String, Trend)> {
        let header = self.header();
        let cols: Vec<Vec<f64>> = self.rows.iter().map(Self::numeric_columns).collect();
        let width = cols.first().map_or(0, |c| c.len());
        (0..width)
            .filter_map(|j| {
                let column: Vec<f64> = cols.iter().map(|c| c[j]).collect();
                (!column.iter().any(|v| v.is_nan())).then(|| (header[j + 3].clone(), Trend::of(&column)))
            })
            .collect()
    }
}

/// CSV rows followed by `#`-prefixed monotonicity diagnostics.
pub fn write_sweep_csv<W: Write>(table: &SweepTable, mut out: W) -> Result<()> {
    let io = |e: std::io::Error| Error::InvalidSpec(e.to_string());
    {
        let mut writer = csv::Writer::from_writer(&mut out);
        let err = |e: csv::Error| Error::InvalidSpec(e.to_string());
        writer.write_record(table.header()).map_err(err)?;
        for row in &table.rows {
            let mut fields = vec![row.value.to_string(), row.depth.to_string(), row.seed.to_string()];
            fields.extend(SweepTable::numeric_columns(row).iter().map(|v| v.to_string()));
            writer.write_record(fields).map_err(err)?;
        }
        writer.flush().map_err(io)?;
    }
    for (column, trend) in table.monotonicity() {
        writeln!(out, "# {} -> {column}: {}", table.parameter, trend.name()).map_err(io)?;
    }
    Ok(())
}
