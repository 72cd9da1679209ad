use super::PositionedDanmaku;

/// Intersections shorter than this many pixels are floating-point residue
/// of two messages that touch exactly (zero gap, launched on the boundary).
pub const OVERLAP_EPSILON_PX: f64 = 1e-6;

/// Reports every same-lane pair whose horizontal extents `[x, x + width]`
/// intersect with positive length. Pairs are `(id_a, id_b)` with the
/// earlier-listed message first.
pub fn check_overlap(frame: &[PositionedDanmaku]) -> Vec<(u64, u64)> {
    let mut pairs = Vec::new();
    scan(frame, |i, j| {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        pairs.push((frame[a].id, frame[b].id));
        true
    });
    pairs
}

/// Whether any same-lane pair intersects; stops at the first hit.
pub fn has_overlap(frame: &[PositionedDanmaku]) -> bool {
    let mut hit = false;
    scan(frame, |_, _| {
        hit = true;
        false
    });
    hit
}

/// Calls `on_pair` with frame indices of each overlapping pair until it
/// returns false.
fn scan(frame: &[PositionedDanmaku], mut on_pair: impl FnMut(usize, usize) -> bool) {
    let mut order: Vec<usize> = (0..frame.len()).collect();
    order.sort_by(|&a, &b| {
        frame[a]
            .lane
            .cmp(&frame[b].lane)
            .then(frame[a].x.total_cmp(&frame[b].x))
    });

    let mut start = 0;
    while start < order.len() {
        let lane = frame[order[start]].lane;
        let mut end = start;
        while end < order.len() && frame[order[end]].lane == lane {
            end += 1;
        }
        let group = &order[start..end];
        for (gi, &i) in group.iter().enumerate() {
            let a = &frame[i];
            for &j in &group[gi + 1..] {
                let b = &frame[j];
                // sorted by x: once b starts past a's right edge, later ones do too
                if b.x >= a.x + a.width - OVERLAP_EPSILON_PX {
                    break;
                }
                let overlap = (a.x + a.width).min(b.x + b.width) - a.x.max(b.x);
                if overlap > OVERLAP_EPSILON_PX && !on_pair(i, j) {
                    return;
                }
            }
        }
        start = end;
    }
}
