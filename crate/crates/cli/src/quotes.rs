//! Quote CSV ingest. Schema: `maturity_years,lo,hi,kind,bid,ask` with kind
//! in {upfront_pct, running_bp, index_bp}. Rows sharing a maturity form one
//! quote set; each maturity needs exactly one index_bp row.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use contagion_core::calibrate::{Quote, QuoteKind, QuoteSet};

#[derive(Debug, Deserialize)]
struct QuoteRow {
    maturity_years: f64,
    lo: f64,
    hi: f64,
    kind: String,
    bid: f64,
    ask: f64,
}

pub fn load_quote_sets(path: &Path, n_obligors: usize, recovery: f64) -> Result<Vec<QuoteSet>> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("cannot read quote file {}", path.display()))?;
    let mut rows: Vec<QuoteRow> = Vec::new();
    for (i, rec) in reader.deserialize::<QuoteRow>().enumerate() {
        let row = rec.with_context(|| format!("{}: bad quote row {}", path.display(), i + 2))?;
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("{}: quote file has no rows", path.display());
    }
    let mut maturities: Vec<f64> = rows.iter().map(|r| r.maturity_years).collect();
    maturities.sort_by(|a, b| a.partial_cmp(b).unwrap());
    maturities.dedup();
    let mut sets = Vec::new();
    for m in maturities {
        let mut tranches: Vec<Quote> = Vec::new();
        let mut index: Option<(f64, f64)> = None;
        for r in rows.iter().filter(|r| r.maturity_years == m) {
            match r.kind.as_str() {
                "upfront_pct" | "running_bp" => {
                    let kind = if r.kind == "upfront_pct" {
                        QuoteKind::UpfrontPct
                    } else {
                        QuoteKind::RunningBp
                    };
                    tranches.push(Quote {
                        lo: r.lo,
                        hi: r.hi,
                        kind,
                        bid: r.bid,
                        ask: r.ask,
                    });
                }
                "index_bp" => {
                    if index.is_some() {
                        bail!("maturity {m}: more than one index row");
                    }
                    index = Some((r.bid, r.ask));
                }
                other => bail!("unknown quote kind {other:?}"),
            }
        }
        let Some((index_bid, index_ask)) = index else {
            bail!("maturity {m}: missing index_bp row");
        };
        tranches.sort_by(|a, b| a.lo.partial_cmp(&b.lo).unwrap());
        let qs = QuoteSet {
            maturity: m,
            n_obligors,
            recovery,
            tranches,
            index_bid,
            index_ask,
        };
        qs.validate().map_err(|e| anyhow::anyhow!("maturity {m}: {e}"))?;
        sets.push(qs);
    }
    Ok(sets)
}

pub fn kind_label(kind: QuoteKind) -> &'static str {
    match kind {
        QuoteKind::UpfrontPct => "upfront_pct",
        QuoteKind::RunningBp => "running_bp",
        QuoteKind::IndexBp => "index_bp",
    }
}
