//! Exact enumeration of learnable scalars.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::layers::Block;
use super::param::{Parameterized, Role, Scope};
use super::Model;

/// Learnable-scalar counts of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ParamAccount {
    pub total: usize,
    /// Channel-wise banks, global networks, output heads, per-domain copies.
    pub domain_specific: usize,
    pub shared: usize,
    /// Backbone convolution kernels (local and global networks, excluding
    /// the per-domain output heads, biases and normalization).
    pub conv_weights: usize,
    /// Output head weights and biases.
    pub head: usize,
    /// Non-learnable buffers (running normalization statistics).
    pub buffers: usize,
}

/// Weight count of one separable block against the `9NT + NM` formula.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeparableAudit {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub domains: usize,
    pub conv_weights: usize,
}

impl SeparableAudit {
    pub fn formula(&self) -> usize {
        9 * self.in_channels * self.domains + self.in_channels * self.out_channels
    }

    pub fn matches_formula(&self) -> bool {
        self.conv_weights == self.formula()
    }
}

impl Model {
    pub fn count_params(&self) -> ParamAccount {
        let mut acc = ParamAccount::default();
        self.visit(&mut |p| {
            if !p.learnable() {
                acc.buffers += p.len();
                return;
            }
            acc.total += p.len();
            match p.scope {
                Scope::Shared => acc.shared += p.len(),
                Scope::Domain(_) => acc.domain_specific += p.len(),
            }
            match p.role {
                Role::ConvWeight => acc.conv_weights += p.len(),
                Role::HeadWeight | Role::HeadBias => acc.head += p.len(),
                _ => {}
            }
        });
        acc
    }

    pub fn separable_audit(&self) -> Vec<SeparableAudit> {
        self.local()
            .map(|net| {
                net.blocks()
                    .filter_map(|b| match b {
                        Block::Separable(s) => Some(SeparableAudit {
                            name: s.name().into(),
                            in_channels: s.in_channels(),
                            out_channels: s.out_channels(),
                            domains: s.domains(),
                            conv_weights: s.conv_weight_count(),
                        }),
                        Block::Dense(_) => None,
                    })
                    .collect()
            })
            .unwrap_or_default()
    }
}
