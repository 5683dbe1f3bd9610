//! Resource slicing of the F x S time-frequency grid.
//!
//! A channel is a contiguous rectangle of resource blocks (RBs). URLLC
//! channels occupy a single time slot; mMTC channels are numerology boxes
//! `2^mu` RBs wide. Frequency runs along `f`, time along `s`.

mod fixed;
mod maxrect;
mod validate;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use fixed::{fixed_grid_slice, FIXED_CHANNEL_WIDTH};
pub use maxrect::{maxrect_slice, mmtc_box, FreeRectSet};
pub use validate::{validate_constraints, Constraint, Violation};

use crate::traffic::BacklogState;
use crate::{Error, Result, UseMode};

/// Largest numerology factor the slicer will use.
pub const MAX_SLICER_MU: u32 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Frequency RBs per frame.
    pub f: u32,
    /// Time slots per frame.
    pub s: u32,
    /// OFDM symbols per RB.
    pub nu: u32,
    /// URLLC packet size in bytes.
    pub p_u: u32,
    /// mMTC packet size in bytes.
    pub p_m: u32,
    pub m_u: u32,
    pub m_m: u32,
    /// Protocol overhead in symbols.
    pub xi: u32,
    pub omega_u: f64,
    pub omega_m: f64,
    pub omega_p: f64,
    /// Use the fractional packet size when computing the mMTC channel bound `Z`.
    pub fractional_z: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            f: 50,
            s: 10,
            nu: 14,
            p_u: 32,
            p_m: 200,
            m_u: 4,
            m_m: 256,
            xi: 5,
            omega_u: 0.9,
            omega_m: 0.05,
            omega_p: 0.05,
            fractional_z: false,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("grid.f", self.f), ("grid.s", self.s), ("grid.nu", self.nu)] {
            if v < 1 {
                return Err(Error::config(name, "must be at least 1"));
            }
        }
        for (name, v) in [("grid.p_u", self.p_u), ("grid.p_m", self.p_m)] {
            if v < 1 {
                return Err(Error::config(name, "packet size must be positive"));
            }
        }
        for (name, m) in [("grid.m_u", self.m_u), ("grid.m_m", self.m_m)] {
            if m < 2 || !m.is_power_of_two() {
                return Err(Error::config(name, "modulation order must be a power of two >= 2"));
            }
        }
        let (wu, wm, wp) = (self.omega_u, self.omega_m, self.omega_p);
        if !(wu > wm && wm >= wp && wp >= 0.0) {
            return Err(Error::config(
                "grid.omega",
                "weights must satisfy omega_u > omega_m >= omega_p >= 0",
            ));
        }
        if ((wu + wm + wp) - 1.0).abs() > 1e-9 {
            return Err(Error::config("grid.omega", "weights must sum to 1"));
        }
        Ok(())
    }

    pub fn area(&self) -> u64 {
        self.f as u64 * self.s as u64
    }

    pub fn packet(&self, mode: UseMode) -> PacketSize {
        let (p, m) = match mode {
            UseMode::Urllc => (self.p_u, self.m_u),
            UseMode::Mmtc => (self.p_m, self.m_m),
        };
        packet_size_rbs(p, m, self.xi, self.nu)
    }
}

/// Symbols per millisecond for numerology `mu`: `2^mu * nu`.
///
/// A transmission of `N_sym` symbols at numerology `mu` lasts `N_sym / (2^mu * nu)` ms,
/// so one TTI of `numerology_symbols(mu, nu)` symbols spans exactly 1 ms.
pub fn numerology_symbols(mu: u32, nu: u32) -> Result<u32> {
    if mu > 4 {
        return Err(Error::config("mu", format!("numerology {mu} outside 0..=4")));
    }
    Ok((1 << mu) * nu)
}

/// TTI length in ms of `n_sym` symbols at numerology `mu`.
pub fn tti_ms(n_sym: f64, mu: u32, nu: u32) -> Result<f64> {
    Ok(n_sym / numerology_symbols(mu, nu)? as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PacketSize {
    /// Packet length in OFDM symbols, payload plus overhead.
    pub symbols: f64,
    /// Whole RBs needed to carry it.
    pub rbs: u32,
}

impl PacketSize {
    /// Fractional RB count `symbols / nu`.
    pub fn fractional_rbs(&self, nu: u32) -> f64 {
        self.symbols / nu as f64
    }
}

/// Packet size in symbols (`8P / log2 M + xi`) and in whole RBs.
pub fn packet_size_rbs(p_bytes: u32, modulation: u32, xi: u32, nu: u32) -> PacketSize {
    let bits_per_symbol = (modulation as f64).log2();
    let symbols = 8.0 * p_bytes as f64 / bits_per_symbol + xi as f64;
    let rbs = (symbols / nu as f64 - 1e-9).ceil().max(1.0) as u32;
    PacketSize { symbols, rbs }
}

/// Upper bound `Z` on mMTC channels once `k_u` URLLC channels are carved out.
pub fn max_mmtc_channels(cfg: &GridConfig, k_u: u64) -> u64 {
    let iota_u = cfg.packet(UseMode::Urllc);
    let iota_m = cfg.packet(UseMode::Mmtc);
    let area = cfg.area() as f64;
    let (u, m) = if cfg.fractional_z {
        (iota_u.fractional_rbs(cfg.nu), iota_m.fractional_rbs(cfg.nu))
    } else {
        (iota_u.rbs as f64, iota_m.rbs as f64)
    };
    let z = ((area - u * k_u as f64) / m).floor();
    if z <= 0.0 {
        0
    } else {
        z as u64
    }
}

/// Axis-aligned block of RBs: frequency `[f_start, f_start + f_len)`,
/// time `[s_start, s_start + s_len)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Rect {
    pub f_start: u32,
    pub f_len: u32,
    pub s_start: u32,
    pub s_len: u32,
}

impl Rect {
    pub fn new(f_start: u32, f_len: u32, s_start: u32, s_len: u32) -> Self {
        Self {
            f_start,
            f_len,
            s_start,
            s_len,
        }
    }

    pub fn f_end(&self) -> u32 {
        self.f_start + self.f_len
    }

    pub fn s_end(&self) -> u32 {
        self.s_start + self.s_len
    }

    pub fn area(&self) -> u64 {
        self.f_len as u64 * self.s_len as u64
    }

    pub fn is_empty(&self) -> bool {
        self.f_len == 0 || self.s_len == 0
    }

    pub fn intersects(&self, o: &Rect) -> bool {
        self.f_start < o.f_end()
            && o.f_start < self.f_end()
            && self.s_start < o.s_end()
            && o.s_start < self.s_end()
    }

    pub fn contains(&self, o: &Rect) -> bool {
        self.f_start <= o.f_start
            && o.f_end() <= self.f_end()
            && self.s_start <= o.s_start
            && o.s_end() <= self.s_end()
    }

    pub fn within_grid(&self, f: u32, s: u32) -> bool {
        self.f_end() <= f && self.s_end() <= s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ChannelAssignment {
    pub id: usize,
    pub use_mode: UseMode,
    pub mu: u32,
    pub rect: Rect,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SlicingPlan {
    pub channels: Vec<ChannelAssignment>,
}

impl SlicingPlan {
    pub fn l_u(&self) -> usize {
        self.count(UseMode::Urllc)
    }

    pub fn l_m(&self) -> usize {
        self.count(UseMode::Mmtc)
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn count(&self, mode: UseMode) -> usize {
        self.channels.iter().filter(|c| c.use_mode == mode).count()
    }

    pub fn assigned_area(&self) -> u64 {
        self.channels.iter().map(|c| c.rect.area()).sum()
    }

    pub(crate) fn push(&mut self, use_mode: UseMode, mu: u32, rect: Rect) {
        let id = self.channels.len();
        self.channels.push(ChannelAssignment {
            id,
            use_mode,
            mu,
            rect,
        });
    }

    /// One line per channel: `id,mode,mu,f_start,f_len,s_start,s_len`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for c in &self.channels {
            let r = c.rect;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                c.id, c.use_mode, c.mu, r.f_start, r.f_len, r.s_start, r.s_len
            );
        }
        out
    }

    /// Grid picture: one row per frequency RB (highest on top), one column per
    /// time slot. Cells show the channel id mod 62 as `0-9a-zA-Z`, `.` when free.
    pub fn render_ascii(&self, f: u32, s: u32) -> String {
        const ALPHABET: &[u8] = b"0123456789abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ";
        let mut cells = vec![vec![b'.'; s as usize]; f as usize];
        for c in &self.channels {
            let glyph = ALPHABET[c.id % ALPHABET.len()];
            for fi in c.rect.f_start..c.rect.f_end().min(f) {
                for si in c.rect.s_start..c.rect.s_end().min(s) {
                    cells[fi as usize][si as usize] = glyph;
                }
            }
        }
        let mut out = String::with_capacity((f * (s + 1)) as usize);
        for row in cells.iter().rev() {
            out.push_str(std::str::from_utf8(row).expect("ascii"));
            out.push('\n');
        }
        out
    }
}

/// Weighted channel count minus the penalty for unserved demand.
///
/// `omega_u * L_u + omega_m * L_m - omega_p * max(0, K - min(L, Z))`, with `Z`
/// derived from the URLLC backlog.
pub fn evaluate_objective(plan: &SlicingPlan, cfg: &GridConfig, backlog: &BacklogState) -> f64 {
    let l_u = plan.l_u() as f64;
    let l_m = plan.l_m() as f64;
    let z = max_mmtc_channels(cfg, backlog.active_u);
    let served_cap = (plan.len() as u64).min(z);
    let shortfall = backlog.total_active().saturating_sub(served_cap) as f64;
    cfg.omega_u * l_u + cfg.omega_m * l_m - cfg.omega_p * shortfall
}
