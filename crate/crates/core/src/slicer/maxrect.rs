//! Maximal-rectangles bottom-left packing of URLLC and mMTC channels.

use super::{GridConfig, Rect, SlicingPlan, MAX_SLICER_MU};
use crate::{Result, UseMode};

/// The free space of the grid as a list of maximal free rectangles.
///
/// Rectangles may overlap each other; none is contained in another and
/// their union is exactly the unassigned area.
#[derive(Clone, Debug)]
pub struct FreeRectSet {
    rects: Vec<Rect>,
}

impl FreeRectSet {
    pub fn new(f: u32, s: u32) -> Self {
        let rects = if f == 0 || s == 0 {
            Vec::new()
        } else {
            vec![Rect::new(0, f, 0, s)]
        };
        Self { rects }
    }

    pub fn rects(&self) -> &[Rect] {
        &self.rects
    }

    /// True when `r` lies entirely in free space.
    pub fn fits(&self, r: &Rect) -> bool {
        self.rects.iter().any(|free| free.contains(r))
    }

    /// Candidate placement corners ordered bottom-left first: earliest time
    /// slot, then lowest frequency.
    pub fn vertices(&self) -> Vec<(u32, u32)> {
        let mut v: Vec<(u32, u32)> = self.rects.iter().map(|r| (r.s_start, r.f_start)).collect();
        v.sort_unstable();
        v.dedup();
        v.into_iter().map(|(s, f)| (f, s)).collect()
    }

    /// Remove `used` from the free space, splitting every free rectangle it
    /// touches into its maximal remainders and pruning contained ones.
    pub fn place(&mut self, used: &Rect) {
        let mut next = Vec::with_capacity(self.rects.len() + 4);
        for free in &self.rects {
            if !free.intersects(used) {
                next.push(*free);
                continue;
            }
            if used.f_start > free.f_start {
                next.push(Rect::new(free.f_start, used.f_start - free.f_start, free.s_start, free.s_len));
            }
            if used.f_end() < free.f_end() {
                next.push(Rect::new(used.f_end(), free.f_end() - used.f_end(), free.s_start, free.s_len));
            }
            if used.s_start > free.s_start {
                next.push(Rect::new(free.f_start, free.f_len, free.s_start, used.s_start - free.s_start));
            }
            if used.s_end() < free.s_end() {
                next.push(Rect::new(free.f_start, free.f_len, used.s_end(), free.s_end() - used.s_end()));
            }
        }
        next.sort_unstable();
        next.dedup();
        let keep: Vec<bool> = (0..next.len())
            .map(|i| !(0..next.len()).any(|j| j != i && next[j].contains(&next[i])))
            .collect();
        self.rects = next
            .into_iter()
            .zip(keep)
            .filter_map(|(r, k)| k.then_some(r))
            .collect();
    }

    /// Area of the union of the free rectangles.
    pub fn union_area(&self) -> u64 {
        let mut fs: Vec<u32> = self.rects.iter().flat_map(|r| [r.f_start, r.f_end()]).collect();
        let mut ss: Vec<u32> = self.rects.iter().flat_map(|r| [r.s_start, r.s_end()]).collect();
        fs.sort_unstable();
        fs.dedup();
        ss.sort_unstable();
        ss.dedup();
        let mut area = 0;
        for fw in fs.windows(2) {
            for sw in ss.windows(2) {
                let cell = Rect::new(fw[0], fw[1] - fw[0], sw[0], sw[1] - sw[0]);
                if self.rects.iter().any(|r| r.contains(&cell)) {
                    area += cell.area();
                }
            }
        }
        area
    }

    /// True when no free rectangle is contained in another.
    pub fn is_maximal(&self) -> bool {
        self.rects.iter().enumerate().all(|(i, a)| {
            self.rects
                .iter()
                .enumerate()
                .all(|(j, b)| i == j || !b.contains(a))
        })
    }

    fn first_fit(&self, width: u32, duration: u32) -> Option<Rect> {
        self.vertices()
            .into_iter()
            .map(|(f, s)| Rect::new(f, width, s, duration))
            .find(|r| self.fits(r))
    }
}

/// mMTC channel box at numerology `mu`: `2^mu` RBs wide, long enough in time
/// to hold `iota_rbs` RBs. Returns `(f_len, s_len)`.
pub fn mmtc_box(mu: u32, iota_rbs: u32) -> (u32, u32) {
    let width = 1u32 << mu;
    (width, iota_rbs.div_ceil(width))
}

/// Largest slicer numerology whose sub-band width divides `f_len`.
pub(crate) fn numerology_of_width(f_len: u32) -> u32 {
    (0..=MAX_SLICER_MU)
        .rev()
        .find(|mu| f_len.is_multiple_of(1 << mu))
        .unwrap_or(0)
}

/// Pack up to `k_hat_u` URLLC and `k_hat_m` mMTC channels.
///
/// URLLC channels go first, each `iota_u` RBs across one time slot at the
/// bottom-left-most vertex that fits. mMTC channels follow: at each vertex,
/// numerologies 0, 1, 2 are tried in turn and the first box that fits is
/// placed; if none fits, the next vertex is tried. Packing stops once the
/// demand is met, no vertex accepts a box, or the free area drops below one
/// mMTC packet. Running out of space is not an error.
pub fn maxrect_slice(cfg: &GridConfig, k_hat_u: u64, k_hat_m: u64) -> Result<SlicingPlan> {
    cfg.validate()?;
    let iota_u = cfg.packet(UseMode::Urllc).rbs;
    let iota_m = cfg.packet(UseMode::Mmtc).rbs;
    let mut free = FreeRectSet::new(cfg.f, cfg.s);
    let mut free_area = cfg.area();
    let mut plan = SlicingPlan::default();

    let urllc_mu = numerology_of_width(iota_u);
    for _ in 0..k_hat_u {
        let Some(rect) = free.first_fit(iota_u, 1) else {
            break;
        };
        free.place(&rect);
        free_area -= rect.area();
        plan.push(UseMode::Urllc, urllc_mu, rect);
    }

    let mut placed_m = 0;
    'outer: while placed_m < k_hat_m && free_area >= iota_m as u64 {
        for (f, s) in free.vertices() {
            for mu in 0..=MAX_SLICER_MU {
                let (width, duration) = mmtc_box(mu, iota_m);
                let rect = Rect::new(f, width, s, duration);
                if free.fits(&rect) {
                    free.place(&rect);
                    free_area -= rect.area();
                    plan.push(UseMode::Mmtc, mu, rect);
                    placed_m += 1;
                    continue 'outer;
                }
            }
        }
        break;
    }
    Ok(plan)
}
