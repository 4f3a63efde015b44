//! `wshare compare`: energy reduction against a user-supplied quality metric.

use std::collections::BTreeMap;
use std::io::Write;

use anyhow::{anyhow, bail, Context, Result};
use serde_json::Value;

use crate::cli::CompareArgs;
use crate::output::{read_text, write_csv};

use super::analyze::SCHEMA as ANALYZE_SCHEMA;

#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffRow {
    pub configuration: String,
    pub energy_reduction_pct: f64,
    pub quality: Option<String>,
}

fn parse_quality(specs: &[String]) -> Result<BTreeMap<String, String>> {
    specs
        .iter()
        .map(|s| {
            let (k, v) = s.rsplit_once('=').ok_or_else(|| anyhow!("--quality `{s}` is not LABEL=VALUE"))?;
            Ok((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

/// Rows in report order, each configuration once.
pub fn tradeoff_rows(reports: &[Value], quality: &BTreeMap<String, String>) -> Result<Vec<TradeoffRow>> {
    let mut rows: Vec<TradeoffRow> = Vec::new();
    for (i, rep) in reports.iter().enumerate() {
        let schema = rep.get("schema").and_then(Value::as_str).unwrap_or("<missing>");
        if schema != ANALYZE_SCHEMA {
            bail!("report {i}: schema mismatch: expected {ANALYZE_SCHEMA}, found {schema}");
        }
        let entries = rep
            .get("rows")
            .and_then(Value::as_array)
            .ok_or_else(|| anyhow!("report {i}: schema mismatch: no `rows` array"))?;
        for e in entries {
            let configuration = e
                .get("configuration")
                .and_then(Value::as_str)
                .ok_or_else(|| anyhow!("report {i}: row without `configuration`"))?;
            let rel = e
                .get("relative_overall")
                .and_then(Value::as_f64)
                .ok_or_else(|| anyhow!("report {i}: row `{configuration}` without `relative_overall`"))?;
            if rows.iter().any(|r| r.configuration == configuration) {
                continue;
            }
            rows.push(TradeoffRow {
                configuration: configuration.to_string(),
                energy_reduction_pct: 100.0 * (1.0 - rel),
                quality: quality.get(configuration).cloned(),
            });
        }
    }
    Ok(rows)
}

pub fn run(args: &CompareArgs, out: &mut dyn Write, warn: &mut dyn Write) -> Result<bool> {
    let reports = args
        .reports
        .iter()
        .map(|p| {
            let text = read_text(p)?;
            serde_json::from_str::<Value>(&text).with_context(|| format!("parsing {}", p.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    let quality = parse_quality(&args.quality)?;
    let rows = tradeoff_rows(&reports, &quality)?;
    for r in rows.iter().filter(|r| r.quality.is_none()) {
        writeln!(warn, "warning: no {} value for `{}`; column left empty", args.quality_name, r.configuration)?;
    }
    for label in quality.keys().filter(|k| !rows.iter().any(|r| &r.configuration == *k)) {
        writeln!(warn, "warning: --quality label `{label}` matches no configuration")?;
    }
    let header = ["configuration", "energy_reduction_pct", args.quality_name.as_str()];
    let records: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.configuration.clone(), format!("{:.3}", r.energy_reduction_pct), r.quality.clone().unwrap_or_default()])
        .collect();
    match &args.out {
        Some(p) => write_csv(p, &header, &records)?,
        None => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(header)?;
            for r in &records {
                w.write_record(r)?;
            }
            out.write_all(&w.into_inner().map_err(|e| anyhow!("{e}"))?)?;
        }
    }
    Ok(true)
}
