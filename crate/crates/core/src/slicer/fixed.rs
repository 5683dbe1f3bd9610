use super::maxrect::numerology_of_width;
use super::{GridConfig, Rect, SlicingPlan};
use crate::{Error, Result, UseMode};

/// Frequency width of a fixed-grid channel in RBs.
pub const FIXED_CHANNEL_WIDTH: u32 = 16;

/// Tile the grid with identical 16-RB x 1-slot channels, slot by slot.
///
/// The first `urllc_channels` channels are reserved for URLLC, the rest for
/// mMTC. A grid narrower than one channel cannot be tiled.
pub fn fixed_grid_slice(cfg: &GridConfig, urllc_channels: usize) -> Result<SlicingPlan> {
    if cfg.f < FIXED_CHANNEL_WIDTH {
        return Err(Error::config(
            "grid.f",
            format!("{} RBs cannot hold a {FIXED_CHANNEL_WIDTH}-RB channel", cfg.f),
        ));
    }
    let per_slot = cfg.f / FIXED_CHANNEL_WIDTH;
    let mu = numerology_of_width(FIXED_CHANNEL_WIDTH);
    let mut plan = SlicingPlan::default();
    for s in 0..cfg.s {
        for k in 0..per_slot {
            let mode = if plan.len() < urllc_channels {
                UseMode::Urllc
            } else {
                UseMode::Mmtc
            };
            plan.push(mode, mu, Rect::new(k * FIXED_CHANNEL_WIDTH, FIXED_CHANNEL_WIDTH, s, 1));
        }
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slicer::validate_constraints;

    #[test]
    fn table_grid_thirty_channels() {
        let cfg = GridConfig::default();
        let plan = fixed_grid_slice(&cfg, 5).unwrap();
        assert_eq!(plan.len(), 30);
        assert_eq!(plan.l_u(), 5);
        assert!(plan.channels.iter().all(|c| c.rect.f_len == 16 && c.rect.s_len == 1));
        assert!(validate_constraints(&plan, &cfg).is_empty());
    }

    #[test]
    fn single_channel() {
        let cfg = GridConfig {
            f: 16,
            s: 1,
            ..Default::default()
        };
        assert_eq!(fixed_grid_slice(&cfg, 0).unwrap().len(), 1);
    }

    #[test]
    fn too_narrow() {
        let cfg = GridConfig {
            f: 15,
            ..Default::default()
        };
        assert!(fixed_grid_slice(&cfg, 0).is_err());
    }
}
