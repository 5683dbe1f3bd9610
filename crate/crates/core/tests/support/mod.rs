//! Test-only oracles, independent of the library code paths they check.
#![allow(dead_code)]

/// Maximum number of channels that can be packed on an `f` x `s` grid with at
/// most `k_u` URLLC bars (`iota_u` wide, 1 slot) and `k_m` mMTC numerology
/// boxes (`2^mu` wide, `ceil(iota_m / 2^mu)` long, `mu` in 0..=2).
///
/// Branch and bound over cells in (slot, frequency) order: the first
/// undecided cell is either left empty or becomes the corner of a box.
pub fn exhaustive_max_channels(f: u32, s: u32, iota_u: u32, iota_m: u32, k_u: usize, k_m: usize) -> usize {
    let (u, m) = exhaustive_pack(f, s, iota_u, iota_m, k_u, k_m, Priority::Count);
    u + m
}

/// Same search, maximising the URLLC count first and the total second, which
/// is what the weighted slicing objective rewards when URLLC weight dominates.
/// Returns `(L_u, L_m)`.
pub fn exhaustive_urllc_first(f: u32, s: u32, iota_u: u32, iota_m: u32, k_u: usize, k_m: usize) -> (usize, usize) {
    exhaustive_pack(f, s, iota_u, iota_m, k_u, k_m, Priority::UrllcFirst)
}

#[derive(Clone, Copy, PartialEq)]
pub enum Priority {
    Count,
    UrllcFirst,
}

fn exhaustive_pack(
    f: u32,
    s: u32,
    iota_u: u32,
    iota_m: u32,
    k_u: usize,
    k_m: usize,
    priority: Priority,
) -> (usize, usize) {
    assert!(f * s <= 64);
    let cells = (f * s) as usize;
    let full: u64 = if cells == 64 { u64::MAX } else { (1u64 << cells) - 1 };
    let shapes_u = vec![(iota_u, 1u32)];
    let mut shapes_m = vec![];
    for mu in 0..=2u32 {
        let w = 1u32 << mu;
        let d = iota_m.div_ceil(w);
        if !shapes_m.contains(&(w, d)) {
            shapes_m.push((w, d));
        }
    }
    // box masks anchored at each cell
    let anchored = |shapes: &[(u32, u32)]| -> Vec<Vec<u64>> {
        (0..cells)
            .map(|c| {
                let (cf, cs) = (c as u32 % f, c as u32 / f);
                shapes
                    .iter()
                    .filter(|&&(w, d)| cf + w <= f && cs + d <= s)
                    .map(|&(w, d)| {
                        let mut m = 0u64;
                        for ds in 0..d {
                            for df in 0..w {
                                m |= 1 << ((cs + ds) * f + cf + df);
                            }
                        }
                        m
                    })
                    .collect()
            })
            .collect()
    };
    let boxes_u = anchored(&shapes_u);
    let boxes_m = anchored(&shapes_m);
    let mut memo = std::collections::HashMap::new();
    // per-mode counts only matter while that demand can still bind
    let ctx = Ctx {
        full,
        boxes_u: &boxes_u,
        boxes_m: &boxes_m,
        k_u,
        k_m,
        track_u: k_u < cells,
        track_m: k_m < cells,
        priority,
    };
    best_from(0, 0, 0, &ctx, &mut memo)
}

struct Ctx<'a> {
    full: u64,
    boxes_u: &'a [Vec<u64>],
    boxes_m: &'a [Vec<u64>],
    k_u: usize,
    k_m: usize,
    track_u: bool,
    track_m: bool,
    priority: Priority,
}

impl Ctx<'_> {
    fn better(&self, a: (usize, usize), b: (usize, usize)) -> bool {
        match self.priority {
            Priority::Count => a.0 + a.1 > b.0 + b.1,
            Priority::UrllcFirst => (a.0, a.0 + a.1) > (b.0, b.0 + b.1),
        }
    }
}

type Memo = std::collections::HashMap<(u64, usize, usize), (usize, usize)>;

fn best_from(decided: u64, n_u: usize, n_m: usize, ctx: &Ctx<'_>, memo: &mut Memo) -> (usize, usize) {
    let undecided = ctx.full & !decided;
    if undecided == 0 {
        return (0, 0);
    }
    let key = (
        decided,
        if ctx.track_u { n_u } else { 0 },
        if ctx.track_m { n_m } else { 0 },
    );
    if let Some(&v) = memo.get(&key) {
        return v;
    }
    let c = undecided.trailing_zeros() as usize;
    let mut best = best_from(decided | (1 << c), n_u, n_m, ctx, memo);
    if n_u < ctx.k_u {
        for &b in &ctx.boxes_u[c] {
            if b & decided == 0 {
                let (u, m) = best_from(decided | b, n_u + 1, n_m, ctx, memo);
                if ctx.better((u + 1, m), best) {
                    best = (u + 1, m);
                }
            }
        }
    }
    if n_m < ctx.k_m {
        for &b in &ctx.boxes_m[c] {
            if b & decided == 0 {
                let (u, m) = best_from(decided | b, n_u, n_m + 1, ctx, memo);
                if ctx.better((u, m + 1), best) {
                    best = (u, m + 1);
                }
            }
        }
    }
    memo.insert(key, best);
    best
}

/// Distribution of the number of singly-occupied channels when `n` devices
/// each pick one of `l` channels uniformly, by enumerating all `l^n` choices.
pub fn enumerate_singleton_distribution(n: u32, l: u32) -> Vec<f64> {
    let total = (l as u64).pow(n);
    let mut hist = vec![0u64; l as usize + 1];
    for code in 0..total {
        let mut counts = vec![0u32; l as usize];
        let mut c = code;
        for _ in 0..n {
            counts[(c % l as u64) as usize] += 1;
            c /= l as u64;
        }
        let singles = counts.iter().filter(|&&x| x == 1).count();
        hist[singles] += 1;
    }
    hist.into_iter().map(|h| h as f64 / total as f64).collect()
}

/// Binomial pmf by direct product.
pub fn binomial_pmf(n: u64, k: u64, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    let mut c = 1.0;
    for i in 0..k {
        c *= (n - i) as f64 / (i + 1) as f64;
    }
    c * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
}
