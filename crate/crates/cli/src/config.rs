//! Run configuration: one TOML file drives every command. Only `--out-dir`,
//! `--seed` and `--threads` can override it, keeping runs reproducible from
//! a single artifact.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use contagion_core::ajd::AjdParams;
use contagion_core::calibrate::{CalibrationBox, CalibrationOptions, MarketConvention};
use contagion_core::model::{ContagionSpec, RecoveryVector};
use contagion_core::precision::PrecisionPolicy;
use contagion_core::pricing::{CountRounding, DefaultTiming, IndexConvention, TrancheDeck};
use contagion_core::simulate::Factor;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelBlock,
    pub factor: FactorBlock,
    pub deck: DeckBlock,
    #[serde(default)]
    pub pricing: PricingBlock,
    #[serde(default)]
    pub precision: PrecisionBlock,
    #[serde(default)]
    pub mc: McBlock,
    #[serde(default)]
    pub calibration: CalibrationBlock,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub kind: String,
    pub n_obligors: usize,
    /// Total base intensity split uniformly; alternative to `beta`.
    pub a0: Option<f64>,
    /// Full per-obligor base intensity vector.
    pub beta: Option<Vec<f64>>,
    pub rho: Option<f64>,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub delta: f64,
    /// Dense contagion matrix rows (general kind only).
    pub rho_matrix: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorBlock {
    #[serde(default = "default_factor_kind")]
    pub kind: String,
    pub kappa: Option<f64>,
    pub theta: Option<f64>,
    pub sigma: Option<f64>,
    pub jump_intensity: Option<f64>,
    pub jump_mean: Option<f64>,
    pub y0: Option<f64>,
    /// Constant value for the deterministic kind.
    pub value: Option<f64>,
}

fn default_factor_kind() -> String {
    "ajd".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeckBlock {
    pub attach: Vec<f64>,
    pub upfront_bp: Vec<f64>,
    pub maturity_years: f64,
    pub payment_interval_years: f64,
    pub rate: f64,
    pub recovery: Option<f64>,
    pub recovery_vector: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PricingBlock {
    #[serde(default)]
    pub default_timing: Option<String>,
    #[serde(default)]
    pub index_convention: Option<String>,
    #[serde(default)]
    pub detach_rounding: Option<String>,
    #[serde(default)]
    pub zero_attach_is_zero: bool,
    /// Also compute tranche attachment/detachment times in `price` runs.
    #[serde(default)]
    pub attach_detach: bool,
    #[serde(default)]
    pub upfront_running_bp: f64,
    /// Also reprice at doubled mantissa bits and report the drift.
    #[serde(default)]
    pub self_check: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrecisionBlock {
    pub mantissa_bits: usize,
    pub collision_rel_tol: f64,
}

impl Default for PrecisionBlock {
    fn default() -> Self {
        let p = PrecisionPolicy::default();
        PrecisionBlock {
            mantissa_bits: p.mantissa_bits,
            collision_rel_tol: p.collision_rel_tol,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McBlock {
    pub paths: u64,
    pub dt_years: f64,
    pub seed: u64,
    #[serde(default)]
    pub dump_scenarios: bool,
    /// Cap on scenario rows written to CSV.
    #[serde(default = "default_dump_cap")]
    pub dump_max_paths: u64,
}

fn default_dump_cap() -> u64 {
    1000
}

impl Default for McBlock {
    fn default() -> Self {
        McBlock {
            paths: 100_000,
            dt_years: Factor::DEFAULT_DT,
            seed: 42,
            dump_scenarios: false,
            dump_max_paths: default_dump_cap(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationBlock {
    pub starts: usize,
    pub seed: u64,
    pub max_iterations: usize,
    pub fd_step: f64,
    pub objective_tol: f64,
    #[serde(default)]
    pub box_bounds: Option<BoxBlock>,
}

impl Default for CalibrationBlock {
    fn default() -> Self {
        let o = CalibrationOptions::default();
        CalibrationBlock {
            starts: o.starts,
            seed: o.seed,
            max_iterations: o.max_iterations,
            fd_step: o.fd_step,
            objective_tol: o.objective_tol,
            box_bounds: None,
        }
    }
}

/// Model fields a sensitivity sweep may move.
#[derive(Debug, Clone)]
pub struct SweepModel {
    pub kind: String,
    pub beta: Vec<f64>,
    pub rho: Option<f64>,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub delta: f64,
    pub rho_matrix: Option<Vec<Vec<f64>>>,
}

impl SweepModel {
    pub fn build(&self) -> Result<ContagionSpec> {
        let spec = match self.kind.as_str() {
            "hcm" => ContagionSpec::hcm(
                self.beta.clone(),
                self.rho.ok_or_else(|| anyhow::anyhow!("hcm sweep needs rho"))?,
                self.delta,
            ),
            "ncm" => ContagionSpec::ncm(
                self.beta.clone(),
                self.p.ok_or_else(|| anyhow::anyhow!("ncm needs p"))?,
                self.q.ok_or_else(|| anyhow::anyhow!("ncm needs q"))?,
                self.delta,
            ),
            "general" => ContagionSpec::general(
                self.beta.clone(),
                self.rho_matrix
                    .clone()
                    .ok_or_else(|| anyhow::anyhow!("general needs rho_matrix"))?,
                self.delta,
            ),
            other => bail!("unknown model kind {other:?}"),
        };
        spec.map_err(|e| anyhow::anyhow!("model: {e}"))
    }
}

/// Deck fields a sensitivity sweep may move.
#[derive(Debug, Clone)]
pub struct SweepDeck {
    pub attach: Vec<f64>,
    pub upfront_bp: Vec<f64>,
    pub maturity: f64,
    pub interval: f64,
    pub rate: f64,
    pub recovery: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxBlock {
    pub a0: Option<[f64; 2]>,
    pub rho: Option<[f64; 2]>,
    pub delta: Option<[f64; 2]>,
    pub kappa: Option<[f64; 2]>,
    pub theta: Option<[f64; 2]>,
    pub sigma: Option<[f64; 2]>,
    pub mu: Option<[f64; 2]>,
    pub l: Option<[f64; 2]>,
    pub y0: Option<[f64; 2]>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&text)
            .with_context(|| format!("malformed config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.model.a0.is_none() && self.model.beta.is_none() {
            bail!("model: provide either a0 (uniform split) or a beta vector");
        }
        if let Some(beta) = &self.model.beta {
            if beta.len() != self.model.n_obligors {
                bail!(
                    "model.beta has {} entries for n_obligors = {}",
                    beta.len(),
                    self.model.n_obligors
                );
            }
        }
        self.policy()
            .validate()
            .map_err(|e| anyhow::anyhow!("precision: {e}"))?;
        if self.deck.recovery.is_none() && self.deck.recovery_vector.is_none() {
            bail!("deck: provide recovery or recovery_vector");
        }
        if !(self.mc.dt_years > 0.0) {
            bail!("mc.dt_years must be positive");
        }
        if self.mc.paths == 0 {
            bail!("mc.paths must be positive");
        }
        Ok(())
    }

    pub fn spec(&self) -> Result<ContagionSpec> {
        let n = self.model.n_obligors;
        let beta = match (&self.model.beta, self.model.a0) {
            (Some(v), _) => v.clone(),
            (None, Some(a0)) => vec![a0 / n as f64; n],
            _ => unreachable!("validated"),
        };
        let spec = match self.model.kind.as_str() {
            "hcm" => {
                let rho = self
                    .model
                    .rho
                    .ok_or_else(|| anyhow::anyhow!("model: hcm kind needs rho"))?;
                ContagionSpec::hcm(beta, rho, self.model.delta)
            }
            "ncm" => {
                let p = self.model.p.ok_or_else(|| anyhow::anyhow!("model: ncm kind needs p"))?;
                let q = self.model.q.ok_or_else(|| anyhow::anyhow!("model: ncm kind needs q"))?;
                ContagionSpec::ncm(beta, p, q, self.model.delta)
            }
            "general" => {
                let m = self
                    .model
                    .rho_matrix
                    .clone()
                    .ok_or_else(|| anyhow::anyhow!("model: general kind needs rho_matrix"))?;
                ContagionSpec::general(beta, m, self.model.delta)
            }
            other => bail!("model.kind must be hcm, ncm or general, got {other:?}"),
        };
        spec.map_err(|e| anyhow::anyhow!("model: {e}"))
    }

    pub fn ajd(&self) -> Result<AjdParams> {
        let need = |name: &str, v: Option<f64>| {
            v.ok_or_else(|| anyhow::anyhow!("factor: ajd kind needs {name}"))
        };
        let p = AjdParams {
            kappa: need("kappa", self.factor.kappa)?,
            theta: need("theta", self.factor.theta)?,
            sigma: need("sigma", self.factor.sigma)?,
            jump_intensity: need("jump_intensity", self.factor.jump_intensity)?,
            jump_mean: need("jump_mean", self.factor.jump_mean)?,
            y0: need("y0", self.factor.y0)?,
        };
        p.validate().map_err(|e| anyhow::anyhow!("factor: {e}"))?;
        Ok(p)
    }

    pub fn factor(&self) -> Result<Factor> {
        match self.factor.kind.as_str() {
            "ajd" => Ok(Factor::Ajd(self.ajd()?)),
            "deterministic" => {
                let v = self
                    .factor
                    .value
                    .ok_or_else(|| anyhow::anyhow!("factor: deterministic kind needs value"))?;
                if !(v >= 0.0) {
                    bail!("factor.value must be >= 0");
                }
                Ok(Factor::Deterministic(v))
            }
            other => bail!("factor.kind must be ajd or deterministic, got {other:?}"),
        }
    }

    pub fn recovery(&self) -> Result<RecoveryVector> {
        let r = match (&self.deck.recovery_vector, self.deck.recovery) {
            (Some(v), _) => RecoveryVector::new(v.clone()),
            (None, Some(r)) => RecoveryVector::flat(self.model.n_obligors, r),
            _ => unreachable!("validated"),
        };
        r.map_err(|e| anyhow::anyhow!("deck: {e}"))
    }

    pub fn deck(&self) -> Result<TrancheDeck> {
        let mut deck = TrancheDeck::with_uniform_schedule(
            self.deck.attach.clone(),
            self.deck.upfront_bp.clone(),
            self.deck.maturity_years,
            self.deck.payment_interval_years,
            self.deck.rate,
            self.recovery()?,
        )
        .map_err(|e| anyhow::anyhow!("deck: {e}"))?;
        deck.timing = self.default_timing()?;
        Ok(deck)
    }

    pub fn policy(&self) -> PrecisionPolicy {
        PrecisionPolicy {
            mantissa_bits: self.precision.mantissa_bits,
            collision_rel_tol: self.precision.collision_rel_tol,
        }
    }

    pub fn default_timing(&self) -> Result<DefaultTiming> {
        Ok(match self.pricing.default_timing.as_deref() {
            None | Some("interval_start") => DefaultTiming::IntervalStart,
            Some("midpoint") => DefaultTiming::Midpoint,
            Some("interval_end") => DefaultTiming::IntervalEnd,
            Some(other) => bail!("pricing.default_timing {other:?} unknown"),
        })
    }

    pub fn index_convention(&self) -> Result<IndexConvention> {
        Ok(match self.pricing.index_convention.as_deref() {
            None | Some("loss_notional") => IndexConvention::LossNotional,
            Some("survival_notional") => IndexConvention::SurvivalNotional,
            Some(other) => bail!("pricing.index_convention {other:?} unknown"),
        })
    }

    pub fn detach_rounding(&self) -> Result<CountRounding> {
        Ok(match self.pricing.detach_rounding.as_deref() {
            None | Some("half_up") => CountRounding::HalfUp,
            Some("ceil") => CountRounding::Ceil,
            Some("floor") => CountRounding::Floor,
            Some(other) => bail!("pricing.detach_rounding {other:?} unknown"),
        })
    }

    pub fn calibration_box(&self) -> Result<CalibrationBox> {
        let mut b = CalibrationBox::default();
        if let Some(bb) = &self.calibration.box_bounds {
            let overrides = [
                (0, bb.a0),
                (1, bb.rho),
                (2, bb.delta),
                (3, bb.kappa),
                (4, bb.theta),
                (5, bb.sigma),
                (6, bb.mu),
                (7, bb.l),
                (8, bb.y0),
            ];
            for (k, o) in overrides {
                if let Some([lo, hi]) = o {
                    b.lo[k] = lo;
                    b.hi[k] = hi;
                }
            }
        }
        b.validate().map_err(|e| anyhow::anyhow!("calibration.box: {e}"))?;
        Ok(b)
    }

    pub fn calibration_options(&self, seed_override: Option<u64>) -> CalibrationOptions {
        CalibrationOptions {
            starts: self.calibration.starts,
            seed: seed_override.unwrap_or(self.calibration.seed),
            max_iterations: self.calibration.max_iterations,
            fd_step: self.calibration.fd_step,
            objective_tol: self.calibration.objective_tol,
        }
    }

    pub fn market_convention(&self) -> Result<MarketConvention> {
        Ok(MarketConvention {
            rate: self.deck.rate,
            payment_interval: self.deck.payment_interval_years,
            upfront_running_bp: self.pricing.upfront_running_bp,
            index_convention: self.index_convention()?,
            precision: self.policy(),
        })
    }

    /// Mutable model view for one-factor sweeps.
    pub fn model_for_sensitivity(&self) -> SweepModel {
        let n = self.model.n_obligors;
        let beta = match (&self.model.beta, self.model.a0) {
            (Some(v), _) => v.clone(),
            (None, Some(a0)) => vec![a0 / n as f64; n],
            _ => unreachable!("validated"),
        };
        SweepModel {
            kind: self.model.kind.clone(),
            beta,
            rho: self.model.rho,
            p: self.model.p,
            q: self.model.q,
            delta: self.model.delta,
            rho_matrix: self.model.rho_matrix.clone(),
        }
    }

    pub fn deck_for_sensitivity(&self) -> SweepDeck {
        SweepDeck {
            attach: self.deck.attach.clone(),
            upfront_bp: self.deck.upfront_bp.clone(),
            maturity: self.deck.maturity_years,
            interval: self.deck.payment_interval_years,
            rate: self.deck.rate,
            recovery: self.deck.recovery.unwrap_or(0.4),
        }
    }

    /// Frozen parameter vector for implied-rho runs, assembled from the
    /// model and factor blocks.
    pub fn frozen_vector(&self) -> Result<[f64; 9]> {
        let ajd = self.ajd()?;
        let rho = self
            .model
            .rho
            .ok_or_else(|| anyhow::anyhow!("model: implied-rho needs an hcm rho"))?;
        let a0 = match (&self.model.beta, self.model.a0) {
            (Some(v), _) => v.iter().sum(),
            (None, Some(a0)) => a0,
            _ => unreachable!(),
        };
        Ok([
            a0,
            rho,
            self.model.delta,
            ajd.kappa,
            ajd.theta,
            ajd.sigma,
            ajd.jump_mean,
            ajd.jump_intensity,
            ajd.y0,
        ])
    }
}
