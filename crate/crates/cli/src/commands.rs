//! The five subcommands. Each computes everything first and only then
//! writes its output files, so error exits leave no partial output behind.

use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, bail, Result};
use serde_json::json;

use contagion_core::calibrate::{self, implied_rho, QuoteSet, PARAM_NAMES};
use contagion_core::error::Error as CoreError;
use contagion_core::model::RecoveryVector;
use contagion_core::pricing::{
    attach_detach_times, deck_curves, index_spread, precision_self_check, price_deck,
    tranche_spread, LossCurve, TrancheDeck,
};
use contagion_core::simulate::{mc_tranche_spread, simulate_defaults, Factor};

use crate::config::RunConfig;
use crate::output::{bp, prob, OutDir};
use crate::quotes::{kind_label, load_quote_sets};
use crate::Stage;

fn spreads_csv(deck: &TrancheDeck, spreads: &[f64]) -> String {
    let mut out = String::from("tranche_lo,tranche_hi,upfront_bp,spread_bp\n");
    for i in 1..=deck.n_tranches() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            deck.attach[i - 1],
            deck.attach[i],
            bp(deck.upfront[i - 1] * 1e4),
            bp(spreads[i - 1])
        ));
    }
    out
}

fn loss_curve_csv(deck: &TrancheDeck, curve: &LossCurve) -> String {
    let mut out = String::from("time_years,tranche_lo,tranche_hi,expected_loss\n");
    for (k, t) in curve.times.iter().enumerate() {
        for i in 1..=deck.n_tranches() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                t,
                deck.attach[i - 1],
                deck.attach[i],
                prob(curve.values[i - 1][k])
            ));
        }
    }
    out
}

pub fn cmd_price(cfg: &RunConfig, out: &OutDir) -> Result<(), Stage> {
    let spec = cfg.spec().map_err(Stage::Config)?;
    let deck = cfg.deck().map_err(Stage::Config)?;
    let ajd = cfg.ajd().map_err(Stage::Config)?;
    let policy = cfg.policy();
    let t0 = Instant::now();
    // tranche and index curves come out of one closed-form pass
    let (curve, icurve) = deck_curves(&spec, &deck, &ajd, &policy).map_err(Stage::pricing)?;
    let spreads = (1..=deck.n_tranches())
        .map(|i| tranche_spread(&deck, i, &curve))
        .collect::<contagion_core::error::Result<Vec<f64>>>()
        .map_err(Stage::pricing)?;
    let index_bp = index_spread(
        &deck,
        &icurve,
        cfg.index_convention().map_err(Stage::Config)?,
    )
    .map_err(Stage::pricing)?;
    let self_check = if cfg.pricing.self_check {
        Some(precision_self_check(&spec, &deck, &ajd, &policy).map_err(Stage::pricing)?)
    } else {
        None
    };
    let ad = if cfg.pricing.attach_detach {
        let rounding = cfg.detach_rounding().map_err(Stage::Config)?;
        Some(
            attach_detach_times(
                &spec,
                &deck,
                &ajd,
                &policy,
                rounding,
                cfg.pricing.zero_attach_is_zero,
            )
            .map_err(Stage::pricing)?,
        )
    } else {
        None
    };
    let runtime = t0.elapsed().as_secs_f64();

    out.write_text("spreads.csv", &spreads_csv(&deck, &spreads))
        .map_err(Stage::Config)?;
    out.write_text("loss_curve.csv", &loss_curve_csv(&deck, &curve))
        .map_err(Stage::Config)?;
    let ad_rows = ad.map(|ad| {
        (0..deck.n_tranches())
            .map(|i| {
                json!({
                    "tranche_lo": deck.attach[i],
                    "tranche_hi": deck.attach[i + 1],
                    "detach_count": ad.detach_counts[i],
                    "attach_years": ad.times[i].0,
                    "detach_years": ad.times[i].1,
                })
            })
            .collect::<Vec<_>>()
    });
    let summary = json!({
        "command": "price",
        "runtime_seconds": runtime,
        "spread_bp": spreads,
        "index_spread_bp": index_bp,
        "attach_detach": ad_rows,
        "precision_self_check_rel": self_check,
        "mantissa_bits": cfg.precision.mantissa_bits,
        "files": ["spreads.csv", "loss_curve.csv"],
    });
    out.write_json("summary.json", summary).map_err(Stage::Config)?;
    Ok(())
}

pub const SENSITIVITY_FACTORS: [&str; 6] = ["rho", "delta", "m", "R", "kappa", "sigma"];

fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        bail!("grid must be lo:hi:count, got {spec:?}");
    }
    let lo: f64 = parts[0].parse()?;
    let hi: f64 = parts[1].parse()?;
    let count: usize = parts[2].parse()?;
    if count == 0 || (count > 1 && !(hi > lo)) {
        bail!("grid needs count >= 1 and hi > lo, got {spec:?}");
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..count)
        .map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64)
        .collect())
}

pub fn cmd_sensitivity(
    cfg: &RunConfig,
    factor_name: &str,
    grid_spec: &str,
    out: &OutDir,
) -> Result<(), Stage> {
    if !SENSITIVITY_FACTORS.contains(&factor_name) {
        return Err(Stage::Config(anyhow!(
            "unknown sensitivity factor {factor_name:?}; choose one of {SENSITIVITY_FACTORS:?}"
        )));
    }
    let grid = parse_grid(grid_spec).map_err(Stage::Config)?;
    let base_ajd = cfg.ajd().map_err(Stage::Config)?;
    let policy = cfg.policy();
    let mut rows = String::from("factor,factor_value,tranche_lo,tranche_hi,spread_bp\n");
    let mut sweep = Vec::new();
    for &v in &grid {
        // one factor moves, everything else stays at config values
        let mut model = cfg.model_for_sensitivity();
        let mut ajd = base_ajd;
        let mut deck_block = cfg.deck_for_sensitivity();
        match factor_name {
            "rho" => model.rho = Some(v),
            "delta" => model.delta = v,
            "kappa" => ajd.kappa = v,
            "sigma" => ajd.sigma = v,
            "R" => deck_block.recovery = v,
            "m" => {
                let m = v.round().max(1.0);
                deck_block.interval = deck_block.maturity / m;
            }
            _ => unreachable!(),
        }
        let spec = model.build().map_err(Stage::Config)?;
        let recovery = RecoveryVector::flat(spec.n_obligors(), deck_block.recovery)
            .map_err(|e| Stage::Config(anyhow!("{e}")))?;
        let mut deck = TrancheDeck::with_uniform_schedule(
            deck_block.attach.clone(),
            deck_block.upfront_bp.clone(),
            deck_block.maturity,
            deck_block.interval,
            deck_block.rate,
            recovery,
        )
        .map_err(|e| Stage::Config(anyhow!("{e}")))?;
        deck.timing = cfg.default_timing().map_err(Stage::Config)?;
        let (_, spreads) = price_deck(&spec, &deck, &ajd, &policy).map_err(Stage::pricing)?;
        for i in 1..=deck.n_tranches() {
            rows.push_str(&format!(
                "{},{},{},{},{}\n",
                factor_name,
                v,
                deck.attach[i - 1],
                deck.attach[i],
                bp(spreads[i - 1])
            ));
        }
        sweep.push(json!({"value": v, "spread_bp": spreads}));
    }
    out.write_text("sensitivity.csv", &rows).map_err(Stage::Config)?;
    out.write_json(
        "summary.json",
        json!({
            "command": "sensitivity",
            "factor": factor_name,
            "grid": grid,
            "sweep": sweep,
            "files": ["sensitivity.csv"],
        }),
    )
    .map_err(Stage::Config)?;
    Ok(())
}

fn load_quotes_for(cfg: &RunConfig, quotes_path: &Path) -> Result<Vec<QuoteSet>, Stage> {
    let recovery = cfg
        .recovery()
        .map_err(Stage::Config)?
        .homogeneous()
        .ok_or_else(|| Stage::Config(anyhow!("calibration needs a homogeneous recovery rate")))?;
    load_quote_sets(quotes_path, cfg.model.n_obligors, recovery).map_err(Stage::Config)
}

pub fn cmd_calibrate(
    cfg: &RunConfig,
    quotes_path: &Path,
    seed_override: Option<u64>,
    out: &OutDir,
) -> Result<(), Stage> {
    let quote_sets = load_quotes_for(cfg, quotes_path)?;
    let bounds = cfg.calibration_box().map_err(Stage::Config)?;
    let conv = cfg.market_convention().map_err(Stage::Config)?;
    let opts = cfg.calibration_options(seed_override);
    let t0 = Instant::now();
    let fit = calibrate::calibrate(&quote_sets, &bounds, &conv, &opts).map_err(|e| match e {
        CoreError::CalibrationFailed(_) => Stage::Calibration(anyhow!("{e}")),
        other => Stage::pricing(other),
    })?;
    let runtime = t0.elapsed().as_secs_f64();

    let mut fit_csv =
        String::from("maturity_years,instrument,lo,hi,kind,bid,ask,mid,model\n");
    for (qs, model) in quote_sets.iter().zip(&fit.model_quotes) {
        for (k, q) in qs.tranches.iter().enumerate() {
            fit_csv.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                qs.maturity,
                k,
                q.lo,
                q.hi,
                kind_label(q.kind),
                q.bid,
                q.ask,
                q.mid(),
                model[k]
            ));
        }
        fit_csv.push_str(&format!(
            "{},{},0,1,index_bp,{},{},{},{}\n",
            qs.maturity,
            qs.tranches.len(),
            qs.index_bid,
            qs.index_ask,
            0.5 * (qs.index_bid + qs.index_ask),
            model[qs.tranches.len()]
        ));
    }
    let x_named: serde_json::Map<String, serde_json::Value> = PARAM_NAMES
        .iter()
        .zip(fit.x_hat)
        .map(|(n, v)| (n.to_string(), json!(v)))
        .collect();
    let trace: Vec<_> = fit
        .trace
        .iter()
        .map(|(s, i, o)| json!({"start": s, "iteration": i, "objective": o}))
        .collect();
    out.write_text("fit.csv", &fit_csv).map_err(Stage::Config)?;
    out.write_json(
        "calibration.json",
        json!({
            "command": "calibrate",
            "runtime_seconds": runtime,
            "x_hat": x_named,
            "objective": fit.objective,
            "aape_pct": fit.aape,
            "model_quotes": fit.model_quotes,
            "starts": opts.starts,
            "trace": trace,
            "files": ["fit.csv"],
        }),
    )
    .map_err(Stage::Config)?;
    Ok(())
}

pub fn cmd_implied_rho(cfg: &RunConfig, quotes_path: &Path, out: &OutDir) -> Result<(), Stage> {
    let quote_sets = load_quotes_for(cfg, quotes_path)?;
    let frozen = cfg.frozen_vector().map_err(Stage::Config)?;
    let bounds = cfg.calibration_box().map_err(Stage::Config)?;
    let conv = cfg.market_convention().map_err(Stage::Config)?;
    let mut rows = String::from(
        "maturity_years,instrument,lo,hi,kind,market_mid,implied_rho,status\n",
    );
    let mut results = Vec::new();
    for qs in &quote_sets {
        let mids = qs.mids();
        for k in 0..qs.n_instruments() {
            let (lo, hi, kind) = if k < qs.tranches.len() {
                (qs.tranches[k].lo, qs.tranches[k].hi, kind_label(qs.tranches[k].kind))
            } else {
                (0.0, 1.0, "index_bp")
            };
            // partial-success contract: unreachable quotes get flagged, the
            // command still exits 0
            match implied_rho(&frozen, qs, k, &bounds, &conv) {
                Ok(rho) => {
                    rows.push_str(&format!(
                        "{},{},{},{},{},{},{:.8e},OK\n",
                        qs.maturity, k, lo, hi, kind, mids[k], rho
                    ));
                    results.push(json!({
                        "maturity_years": qs.maturity, "instrument": k, "implied_rho": rho,
                        "status": "OK"
                    }));
                }
                Err(CoreError::NoRoot(_)) => {
                    rows.push_str(&format!(
                        "{},{},{},{},{},{},,NO_ROOT\n",
                        qs.maturity, k, lo, hi, kind, mids[k]
                    ));
                    results.push(json!({
                        "maturity_years": qs.maturity, "instrument": k, "implied_rho": null,
                        "status": "NO_ROOT"
                    }));
                }
                Err(other) => return Err(Stage::pricing(other)),
            }
        }
    }
    out.write_text("implied_rho.csv", &rows).map_err(Stage::Config)?;
    out.write_json(
        "summary.json",
        json!({
            "command": "implied-rho",
            "results": results,
            "files": ["implied_rho.csv"],
        }),
    )
    .map_err(Stage::Config)?;
    Ok(())
}

pub fn cmd_simulate(cfg: &RunConfig, seed_override: Option<u64>, out: &OutDir) -> Result<(), Stage> {
    let spec = cfg.spec().map_err(Stage::Config)?;
    let deck = cfg.deck().map_err(Stage::Config)?;
    let factor = cfg.factor().map_err(Stage::Config)?;
    let seed = seed_override.unwrap_or(cfg.mc.seed);
    let t0 = Instant::now();
    let mc = mc_tranche_spread(&spec, &deck, &factor, cfg.mc.paths, cfg.mc.dt_years, seed)
        .map_err(Stage::pricing)?;
    // analytic cross-check when the closed form applies
    let analytic = match (&factor, spec.kind()) {
        (Factor::Ajd(ajd), k) if k != contagion_core::model::ContagionKind::General => {
            price_deck(&spec, &deck, ajd, &cfg.policy()).ok().map(|(_, s)| s)
        }
        _ => None,
    };
    let runtime = t0.elapsed().as_secs_f64();

    let mut scenario_csv = String::from("path_id,k,tau_k,obligor\n");
    if cfg.mc.dump_scenarios {
        let cap = cfg.mc.dump_max_paths.min(cfg.mc.paths);
        for path_id in 0..cap {
            let mut rng = contagion_core::simulate::path_rng(seed, path_id);
            let path = factor.sample_path(deck.maturity, cfg.mc.dt_years, &mut rng);
            let scenario = simulate_defaults(&spec, &path, &mut rng);
            for (k, (tau, obligor)) in scenario.times.iter().zip(&scenario.order).enumerate() {
                scenario_csv.push_str(&format!("{path_id},{},{tau},{obligor}\n", k + 1));
            }
        }
    }

    let mut tranches = Vec::new();
    for (i, (s, se)) in mc.iter().enumerate() {
        let mut row = json!({
            "tranche_lo": deck.attach[i],
            "tranche_hi": deck.attach[i + 1],
            "mc_spread_bp": s,
            "mc_se_bp": se,
        });
        if let Some(a) = &analytic {
            row["analytic_spread_bp"] = json!(a[i]);
            row["abs_gap_over_se"] = json!(if *se > 0.0 { (s - a[i]).abs() / se } else { 0.0 });
        }
        tranches.push(row);
    }
    if cfg.mc.dump_scenarios {
        out.write_text("scenarios.csv", &scenario_csv).map_err(Stage::Config)?;
    }
    out.write_json(
        "mc_summary.json",
        json!({
            "command": "simulate",
            "runtime_seconds": runtime,
            "paths": cfg.mc.paths,
            "dt_years": cfg.mc.dt_years,
            "seed": seed,
            "tranches": tranches,
            "files": if cfg.mc.dump_scenarios { vec!["scenarios.csv"] } else { Vec::new() },
        }),
    )
    .map_err(Stage::Config)?;
    Ok(())
}
