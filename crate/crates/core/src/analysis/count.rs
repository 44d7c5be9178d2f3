use std::fmt::{self, Write as _};

use serde::Serialize;

use crate::error::Result;
use crate::layers::Parameters;
use crate::pyramid::{NeckConfig, NeckGraph};
use crate::scalar::Scalar;
use crate::tensor::Dims;

pub const FLOP_CONVENTION: &str = "FLOPs: one multiply-add = 2; activations and channel-gate products = 1 per \
     output element; 2x2 max-pool = 4 per output; global avg-pool = 1 per input; \
     nearest upsample, concat and bias adds = 0";

/// Published complexity increase of the full neck over the baseline, in
/// parameters and FLOPs.
pub const REFERENCE_PARAMS_DELTA: f64 = 1.5e6;
pub const REFERENCE_FLOPS_DELTA: f64 = 3.6e9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CountRow {
    /// Slot in the neck (`up0`, `fuse_bu1`, ...).
    pub name: String,
    /// Implementation filling the slot.
    pub kind: String,
    pub params: u64,
    pub flops: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountReport {
    pub config: NeckConfig,
    /// Backbone feature dims the FLOPs were counted at.
    pub levels: [Dims; 3],
    pub rows: Vec<CountRow>,
    pub total_params: u64,
    pub total_flops: u64,
}

/// Counts for a built neck at the given backbone feature dims.
pub fn count_flops<T: Scalar>(neck: &NeckGraph<T>, levels: [Dims; 3]) -> Result<CountReport> {
    let rows: Vec<CountRow> = neck
        .block_costs(levels)?
        .into_iter()
        .map(|(slot, kind, params, flops)| CountRow {
            name: slot.to_owned(),
            kind: kind.to_owned(),
            params,
            flops,
        })
        .collect();
    Ok(CountReport {
        config: neck.config().clone(),
        levels,
        total_params: rows.iter().map(|r| r.params).sum(),
        total_flops: rows.iter().map(|r| r.flops).sum(),
        rows,
    })
}

/// Counts at the neck's configured input size, batch 1.
pub fn count_params<T: Scalar>(neck: &NeckGraph<T>) -> Result<CountReport> {
    let report = count_flops(neck, neck.config().level_dims(1))?;
    debug_assert_eq!(report.total_params, neck.param_count());
    Ok(report)
}

/// Builds the neck for `config` and counts it at `config.input_size`.
pub fn count_config(config: &NeckConfig) -> Result<CountReport> {
    count_params(&NeckGraph::<f32>::build(config)?)
}

impl CountReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

impl fmt::Display for CountReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.config;
        writeln!(f, "# {FLOP_CONVENTION}")?;
        writeln!(
            f,
            "# hidden {} input {}x{} au={} ad={} csp_pac={}",
            c.hidden_dim, c.input_size, c.input_size, c.use_au, c.use_ad, c.use_csp_pac
        )?;
        writeln!(f, "{:<10} {:<22} {:>12} {:>16}", "block", "kind", "params", "flops")?;
        for r in &self.rows {
            writeln!(f, "{:<10} {:<22} {:>12} {:>16}", r.name, r.kind, r.params, r.flops)?;
        }
        writeln!(
            f,
            "{:<10} {:<22} {:>12} {:>16}",
            "total", "", self.total_params, self.total_flops
        )?;
        write!(
            f,
            "total: {:.3} M params, {:.3} GFLOPs",
            self.total_params as f64 / 1e6,
            self.total_flops as f64 / 1e9
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DeltaRow {
    pub name: String,
    pub kind_a: String,
    pub kind_b: String,
    pub params: i64,
    pub flops: i64,
}

/// `b - a`, rowwise and in total.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaReport {
    pub a: CountReport,
    pub b: CountReport,
    pub rows: Vec<DeltaRow>,
    pub params: i64,
    pub flops: i64,
    pub reference_params: f64,
    pub reference_flops: f64,
}

fn signed(x: u64) -> i64 {
    i64::try_from(x).expect("count fits in i64")
}

/// Builds both configs and compares them at `input_size` (defaults to each
/// config's own size when `None`).
pub fn delta_report(a: &NeckConfig, b: &NeckConfig, input_size: Option<usize>) -> Result<DeltaReport> {
    let count = |cfg: &NeckConfig| {
        let cfg = NeckConfig {
            input_size: input_size.unwrap_or(cfg.input_size),
            ..cfg.clone()
        };
        count_config(&cfg)
    };
    let (ra, rb) = (count(a)?, count(b)?);
    // slot lists are identical across configs
    let rows = ra
        .rows
        .iter()
        .zip(&rb.rows)
        .map(|(x, y)| DeltaRow {
            name: x.name.clone(),
            kind_a: x.kind.clone(),
            kind_b: y.kind.clone(),
            params: signed(y.params) - signed(x.params),
            flops: signed(y.flops) - signed(x.flops),
        })
        .collect();
    Ok(DeltaReport {
        params: signed(rb.total_params) - signed(ra.total_params),
        flops: signed(rb.total_flops) - signed(ra.total_flops),
        a: ra,
        b: rb,
        rows,
        reference_params: REFERENCE_PARAMS_DELTA,
        reference_flops: REFERENCE_FLOPS_DELTA,
    })
}

impl DeltaReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn params_millions(&self) -> f64 {
        self.params as f64 / 1e6
    }

    pub fn gflops(&self) -> f64 {
        self.flops as f64 / 1e9
    }
}

impl fmt::Display for DeltaReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (a, b) = (&self.a.config, &self.b.config);
        let toggles = |c: &NeckConfig| format!("au={} ad={} csp_pac={}", c.use_au, c.use_ad, c.use_csp_pac);
        let mut out = String::new();
        writeln!(out, "# {FLOP_CONVENTION}")?;
        writeln!(
            out,
            "# a: hidden {} input {} {}",
            a.hidden_dim,
            a.input_size,
            toggles(a)
        )?;
        writeln!(
            out,
            "# b: hidden {} input {} {}",
            b.hidden_dim,
            b.input_size,
            toggles(b)
        )?;
        writeln!(
            out,
            "{:<10} {:<22} {:<22} {:>12} {:>16}",
            "block", "kind a", "kind b", "d params", "d flops"
        )?;
        for r in &self.rows {
            writeln!(
                out,
                "{:<10} {:<22} {:<22} {:>12} {:>16}",
                r.name, r.kind_a, r.kind_b, r.params, r.flops
            )?;
        }
        writeln!(
            out,
            "{:<10} {:<22} {:<22} {:>12} {:>16}",
            "total", "", "", self.params, self.flops
        )?;
        write!(
            out,
            "delta (b - a): {:+.3} M params, {:+.3} GFLOPs   [reference: +{:.1} M params, +{:.1} GFLOPs]",
            self.params_millions(),
            self.gflops(),
            self.reference_params / 1e6,
            self.reference_flops / 1e9
        )?;
        f.write_str(&out)
    }
}
