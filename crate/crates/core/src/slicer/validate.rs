use serde::Serialize;

use super::{GridConfig, SlicingPlan};
use crate::UseMode;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Constraint {
    /// Channel is a non-empty contiguous block inside the grid.
    WellFormed,
    /// URLLC channels span exactly one time slot.
    UrllcSingleSlot,
    /// Frequency width is a multiple of `2^mu`.
    Numerology,
    /// Channels do not share RBs.
    Disjoint,
    /// Channel area carries the packet of its use mode.
    PacketSize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub constraint: Constraint,
    pub channels: Vec<usize>,
    pub detail: String,
}

/// Check every slicing constraint; an empty list means the plan is valid.
pub fn validate_constraints(plan: &SlicingPlan, cfg: &GridConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let iota_u = cfg.packet(UseMode::Urllc).rbs as u64;
    let iota_m = cfg.packet(UseMode::Mmtc).rbs as u64;
    for c in &plan.channels {
        let r = c.rect;
        if r.is_empty() || !r.within_grid(cfg.f, cfg.s) {
            out.push(Violation {
                constraint: Constraint::WellFormed,
                channels: vec![c.id],
                detail: format!("{r:?} is empty or leaves the {}x{} grid", cfg.f, cfg.s),
            });
        }
        if c.use_mode == UseMode::Urllc && r.s_len != 1 {
            out.push(Violation {
                constraint: Constraint::UrllcSingleSlot,
                channels: vec![c.id],
                detail: format!("URLLC channel spans {} slots", r.s_len),
            });
        }
        if c.mu > 4 || r.f_len % (1 << c.mu.min(31)) != 0 {
            out.push(Violation {
                constraint: Constraint::Numerology,
                channels: vec![c.id],
                detail: format!("width {} is not a multiple of 2^{}", r.f_len, c.mu),
            });
        }
        let need = match c.use_mode {
            UseMode::Urllc => iota_u,
            UseMode::Mmtc => iota_m,
        };
        if r.area() < need {
            out.push(Violation {
                constraint: Constraint::PacketSize,
                channels: vec![c.id],
                detail: format!("area {} below packet size {need} RBs", r.area()),
            });
        }
    }
    for (i, a) in plan.channels.iter().enumerate() {
        for b in &plan.channels[i + 1..] {
            if a.rect.intersects(&b.rect) {
                out.push(Violation {
                    constraint: Constraint::Disjoint,
                    channels: vec![a.id, b.id],
                    detail: format!("{:?} overlaps {:?}", a.rect, b.rect),
                });
            }
        }
    }
    out
}
