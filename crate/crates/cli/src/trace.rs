//! Trace persistence: JSONL per-evaluation records behind a header line,
//! and a per-run summary CSV. Both formats are line-oriented and byte-stable
//! for identical runs.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use twotail::averager::EvalRecord;
use twotail::oracle::{AssumptionRecord, OracleResult};

use crate::config::RunConfig;

pub const TRACE_SCHEMA: &str = "twotail-trace-v1";
pub const SUMMARY_SCHEMA: &str = "twotail-summary-v1";

/// First line of a trace file: schema tag plus the full run configuration,
/// so checks and plots can be replayed from the file alone.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceHeader {
    pub schema: String,
    pub config: RunConfig,
}

/// Oracle fields carried per evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSummary {
    pub opt_len: u64,
    pub opt_loss: f64,
}

impl From<&OracleResult> for OracleSummary {
    fn from(result: &OracleResult) -> Self {
        OracleSummary {
            opt_len: result.opt_len,
            opt_loss: result.opt_loss,
        }
    }
}

/// Per-step assumption verdicts (see the oracle's assumption checker);
/// `a4` is null at the final recorded evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssumptionFlags {
    pub a1: bool,
    pub a2: bool,
    pub a4: Option<bool>,
}

impl AssumptionFlags {
    pub fn all_hold(&self) -> bool {
        self.a1 && self.a2 && self.a4.unwrap_or(true)
    }
}

impl From<&AssumptionRecord> for AssumptionFlags {
    fn from(record: &AssumptionRecord) -> Self {
        AssumptionFlags {
            a1: record.a1,
            a2: record.a2,
            a4: record.a4,
        }
    }
}

/// One evaluation event as persisted: the averager record, the oracle
/// summary when enabled, and the reference averagers' losses by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    #[serde(flatten)]
    pub record: EvalRecord,
    pub oracle: Option<OracleSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assumptions: Option<AssumptionFlags>,
    pub baselines: BTreeMap<String, f64>,
}

/// A full persisted run.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub config: RunConfig,
    pub records: Vec<TraceRecord>,
}

impl RunTrace {
    pub fn eval_period(&self) -> u64 {
        self.config.eval_period
    }

    pub fn has_oracle(&self) -> bool {
        self.records.iter().all(|r| r.oracle.is_some()) && !self.records.is_empty()
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        let header = TraceHeader {
            schema: TRACE_SCHEMA.to_string(),
            config: self.config.clone(),
        };
        out.push_str(&serde_json::to_string(&header)?);
        out.push('\n');
        for record in &self.records {
            out.push_str(&serde_json::to_string(record)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let text = self.to_jsonl()?;
        std::fs::write(path, text).with_context(|| format!("writing trace {}", path.display()))?;
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let file = File::open(path).with_context(|| format!("opening trace {}", path.display()))?;
        let mut lines = BufReader::new(file).lines();
        let header_line = match lines.next() {
            Some(line) => line?,
            None => bail!("trace {} is empty", path.display()),
        };
        let header: TraceHeader =
            serde_json::from_str(&header_line).context("parsing trace header")?;
        if header.schema != TRACE_SCHEMA {
            bail!(
                "unsupported trace schema {:?} (expected {TRACE_SCHEMA:?})",
                header.schema
            );
        }
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: TraceRecord = serde_json::from_str(&line)
                .with_context(|| format!("parsing trace record on line {}", i + 2))?;
            records.push(record);
        }
        Ok(RunTrace {
            config: header.config,
            records,
        })
    }

    /// Per-algorithm summary rows: final loss, best loss and when it was
    /// reported, plus switch statistics for the two-tailed run.
    pub fn write_summary_csv(&self, path: &Path) -> Result<()> {
        let file =
            File::create(path).with_context(|| format!("writing summary {}", path.display()))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "# schema: {SUMMARY_SCHEMA}")?;
        writeln!(
            out,
            "name,evals,final_loss,best_loss,best_step,switches,final_reported_len"
        )?;
        if self.records.is_empty() {
            return Ok(());
        }

        let tta_name = self.config.two_tailed().name();
        let reported: Vec<(u64, f64)> = self
            .records
            .iter()
            .map(|r| (r.record.step, r.record.reported_loss()))
            .collect();
        let (best_step, best_loss) = reported
            .iter()
            .copied()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty");
        let switches = self.records.iter().filter(|r| r.record.switched).count();
        let last = self.records.last().expect("non-empty");
        writeln!(
            out,
            "{tta_name},{},{},{},{},{},{}",
            reported.len(),
            reported.last().expect("non-empty").1,
            best_loss,
            best_step,
            switches,
            last.record.reported_len
        )?;

        for name in last.baselines.keys() {
            let series: Vec<(u64, f64)> = self
                .records
                .iter()
                .filter_map(|r| r.baselines.get(name).map(|l| (r.record.step, *l)))
                .collect();
            let (best_step, best_loss) = series
                .iter()
                .copied()
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("non-empty");
            writeln!(
                out,
                "{name},{},{},{},{},,",
                series.len(),
                series.last().expect("non-empty").1,
                best_loss,
                best_step
            )?;
        }
        Ok(())
    }
}
