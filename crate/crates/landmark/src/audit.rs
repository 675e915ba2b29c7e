//! Parameter accounting across variants.

use std::fmt::Write as _;

use landmark_core::model::{Model, ModelConfig, ParamAccount, SeparableAudit, Variant};
use rand::SeedableRng;
use serde::Serialize;

use crate::error::Result;

#[derive(Debug, Clone, Serialize)]
pub struct VariantRow {
    pub variant: Variant,
    pub params: ParamAccount,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Audit {
    pub domains: usize,
    pub rows: Vec<VariantRow>,
    pub blocks: Vec<SeparableAudit>,
    pub checks: Vec<Check>,
}

impl Audit {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub fn audit(config: &ModelConfig) -> Result<Audit> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let mut rows = Vec::new();
    let mut blocks = Vec::new();
    for variant in Variant::ALL {
        let model = Model::build(variant, config.clone(), &mut rng)?;
        if variant == Variant::Gu2net {
            blocks = model.separable_audit();
        }
        rows.push(VariantRow {
            variant,
            params: model.count_params(),
        });
    }
    let get = |v: Variant| rows.iter().find(|r| r.variant == v).expect("all variants built").params;
    let (g, u, t) = (get(Variant::Gu2net), get(Variant::Unet), get(Variant::TriUnet));
    let domains = config.domains.len();
    let mut checks: Vec<Check> = blocks
        .iter()
        .map(|b| Check {
            name: format!("{} = 9NT+NM", b.name),
            passed: b.matches_formula(),
            detail: format!(
                "N={} M={} T={}: {} weights, formula {}",
                b.in_channels,
                b.out_channels,
                b.domains,
                b.conv_weights,
                b.formula()
            ),
        })
        .collect();
    checks.push(Check {
        name: "gu2net < unet < tri_unet".into(),
        passed: g.total < u.total && u.total < t.total,
        detail: format!("{} < {} < {}", g.total, u.total, t.total),
    });
    checks.push(Check {
        name: format!("tri_unet conv weights = {domains} x unet"),
        passed: t.conv_weights == domains * u.conv_weights,
        detail: format!("{} vs {} x {}", t.conv_weights, domains, u.conv_weights),
    });
    Ok(Audit {
        domains,
        rows,
        blocks,
        checks,
    })
}

pub fn render(a: &Audit) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} domains", a.domains);
    let _ = writeln!(
        out,
        "{:<12}{:>12}{:>12}{:>12}{:>12}{:>10}{:>10}",
        "variant", "total", "domain", "shared", "conv", "head", "buffers"
    );
    for r in &a.rows {
        let p = &r.params;
        let _ = writeln!(
            out,
            "{:<12}{:>12}{:>12}{:>12}{:>12}{:>10}{:>10}",
            r.variant.as_str(),
            p.total,
            p.domain_specific,
            p.shared,
            p.conv_weights,
            p.head,
            p.buffers
        );
    }
    let _ = writeln!(out);
    for c in &a.checks {
        let _ = writeln!(
            out,
            "{} {}: {}",
            if c.passed { "ok  " } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    out
}
