//! Exact linear assignment (uniform weights, equal sizes).
//!
//! Two solvers. [`solve`] is Jonker-Volgenant on a cost closure: column
//! reduction and two augmenting-row-reduction passes assign most rows
//! cheaply; shortest augmenting paths (Dijkstra over reduced costs) finish
//! the rest. Exact in float arithmetic, but the path phase degrades towards
//! O(n^3) on geometric instances, so [`solve_points`] switches to a scaled
//! auction (Bertsekas) above a size cutoff: costs are rounded to integers on
//! a power-of-two grid and multiplied by (n+1), and epsilon-scaling ends at
//! eps = 1, which certifies an exactly optimal assignment for the rounded
//! costs. The rounding grid is fine enough (~1e-8 relative) that the
//! difference from the float optimum is far below sampling noise anywhere
//! these solutions are consumed. Ties break toward the lowest index (strict
//! `<` scans, LIFO bid queue), which keeps results deterministic.

const NONE: usize = usize::MAX;

/// Returns (perm, cost): row i is assigned column perm[i]; cost is the sum of
/// assigned entries, minimal over all permutations.
pub fn solve<C: Fn(usize, usize) -> f64>(n: usize, cost: C) -> (Vec<usize>, f64) {
    assert!(n > 0, "empty assignment instance");
    let mut x = vec![NONE; n]; // row -> col
    let mut y = vec![NONE; n]; // col -> row
    let mut u = vec![0.0f64; n];
    let mut v = vec![0.0f64; n];

    // --- column reduction ---
    for j in (0..n).rev() {
        let mut min = f64::INFINITY;
        let mut imin = 0;
        for i in 0..n {
            let c = cost(i, j);
            if c < min {
                min = c;
                imin = i;
            }
        }
        v[j] = min;
        if x[imin] == NONE {
            x[imin] = j;
            y[j] = imin;
        }
    }

    // --- augmenting row reduction (two passes) ---
    // Maintains: c(i,j) - u[i] - v[j] >= 0 everywhere, == 0 on assigned pairs.
    if n >= 2 {
        for _pass in 0..2 {
            let free: Vec<usize> = (0..n).filter(|&i| x[i] == NONE).collect();
            for start in free {
                let mut i = start;
                // chain displacements, budgeted for safety on adversarial data
                for _ in 0..2 * n {
                    let mut u1 = f64::INFINITY;
                    let mut u2 = f64::INFINITY;
                    let mut j1 = 0usize;
                    let mut j2 = 0usize;
                    for j in 0..n {
                        let r = cost(i, j) - v[j];
                        if r < u1 {
                            u2 = u1;
                            j2 = j1;
                            u1 = r;
                            j1 = j;
                        } else if r < u2 {
                            u2 = r;
                            j2 = j;
                        }
                    }
                    let strict = u1 < u2;
                    let mut jbest = j1;
                    if strict {
                        v[j1] -= u2 - u1;
                    } else if y[j1] != NONE {
                        jbest = j2;
                    }
                    u[i] = u2;
                    let displaced = y[jbest];
                    x[i] = jbest;
                    y[jbest] = i;
                    if displaced == NONE {
                        break;
                    }
                    x[displaced] = NONE;
                    if !strict {
                        break;
                    }
                    i = displaced;
                }
            }
        }
    }

    // --- shortest augmenting paths for remaining free rows ---
    // 1-indexed arrays; p[j] = row (1-based) on column j, column 0 virtual.
    let mut p = vec![0usize; n + 1];
    let mut u1 = vec![0.0f64; n + 1];
    let mut v1 = vec![0.0f64; n + 1];
    for j in 0..n {
        p[j + 1] = if y[j] == NONE { 0 } else { y[j] + 1 };
        v1[j + 1] = v[j];
    }
    for i in 0..n {
        u1[i + 1] = u[i];
    }
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];
    let mut way = vec![0usize; n + 1];

    let free: Vec<usize> = (0..n).filter(|&i| x[i] == NONE).collect();
    for i_free in free {
        p[0] = i_free + 1;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|m| *m = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u1[i0] - v1[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u1[p[j]] += delta;
                    v1[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    for j in 1..=n {
        if p[j] > 0 {
            x[p[j] - 1] = j - 1;
        }
    }
    let total = (0..n).map(|i| cost(i, x[i])).sum();
    (x, total)
}

/// JV keeps exact float arithmetic but its path phase blows up on geometric
/// instances somewhere past ~10^3 points; the scaled auction stays near n^2.
const AUCTION_CUTOFF: usize = 400;

/// Point-cloud assignment under squared Euclidean cost. Dispatches between
/// the JV specialization (small n, float-exact) and the scaled auction. The
/// reported total is always recomputed from exact squared distances, so
/// neither the |x|^2 + |y|^2 - 2<x,y> expansion's cancellation error nor the
/// auction's integer grid ever reaches the caller.
pub fn solve_points(x0: &ndarray::ArrayView2<f64>, x1: &ndarray::ArrayView2<f64>) -> (Vec<usize>, f64) {
    let n = x0.nrows();
    let d = x0.ncols();
    assert!(n > 0 && n == x1.nrows() && d == x1.ncols());

    // row-major source points, per-dimension target columns
    let rows: Vec<f64> = x0.iter().copied().collect();
    let mut cols = vec![0.0f64; d * n];
    for j in 0..n {
        for k in 0..d {
            cols[k * n + j] = x1[[j, k]];
        }
    }
    let sx: Vec<f64> = (0..n)
        .map(|i| rows[i * d..(i + 1) * d].iter().map(|v| v * v).sum())
        .collect();
    let sy: Vec<f64> = (0..n)
        .map(|j| (0..d).map(|k| cols[k * n + j] * cols[k * n + j]).sum())
        .collect();

    let perm = if n <= AUCTION_CUTOFF {
        jv_points(&rows, &cols, &sx, &sy, n, d)
    } else {
        auction_points(&rows, &cols, &sx, &sy, n, d)
    };
    let total = (0..n)
        .map(|i| {
            let q = &rows[i * d..(i + 1) * d];
            let j = perm[i];
            (0..d).map(|k| (q[k] - cols[k * n + j]) * (q[k] - cols[k * n + j])).sum::<f64>()
        })
        .sum();
    (perm, total)
}

/// Point-cloud specialization of [`solve`].
///
/// Uses c(i,j) = |x_i|^2 + |y_j|^2 - 2<x_i, y_j> so the Dijkstra scans reduce
/// to dot products against a per-column base that stays fixed while a column
/// remains unvisited (its dual only moves once it joins the alternating
/// tree), plus a compacted list of unvisited columns.
fn jv_points(rows: &[f64], cols: &[f64], sx: &[f64], sy: &[f64], n: usize, d: usize) -> Vec<usize> {
    let dot = |i: usize, j: usize| -> f64 {
        let q = &rows[i * d..(i + 1) * d];
        let mut acc = 0.0;
        for (k, qk) in q.iter().enumerate() {
            acc += qk * cols[k * n + j];
        }
        acc
    };
    let cost = |i: usize, j: usize| sx[i] + sy[j] - 2.0 * dot(i, j);

    let mut x = vec![NONE; n];
    let mut y = vec![NONE; n];
    let mut u = vec![0.0f64; n];
    let mut v = vec![0.0f64; n];

    // --- column reduction ---
    for j in (0..n).rev() {
        let mut min = f64::INFINITY;
        let mut imin = 0;
        for i in 0..n {
            let c = cost(i, j);
            if c < min {
                min = c;
                imin = i;
            }
        }
        v[j] = min;
        if x[imin] == NONE {
            x[imin] = j;
            y[j] = imin;
        }
    }

    // reduced-cost column base; kept in sync with every change to v
    let mut colbase: Vec<f64> = (0..n).map(|j| sy[j] - v[j]).collect();

    // --- augmenting row reduction (two passes) ---
    if n >= 2 {
        for _pass in 0..2 {
            let free: Vec<usize> = (0..n).filter(|&i| x[i] == NONE).collect();
            for start in free {
                let mut i = start;
                for _ in 0..2 * n {
                    let mut u1 = f64::INFINITY;
                    let mut u2 = f64::INFINITY;
                    let mut j1 = 0usize;
                    let mut j2 = 0usize;
                    let base = sx[i];
                    for j in 0..n {
                        let r = base + colbase[j] - 2.0 * dot(i, j);
                        if r < u1 {
                            u2 = u1;
                            j2 = j1;
                            u1 = r;
                            j1 = j;
                        } else if r < u2 {
                            u2 = r;
                            j2 = j;
                        }
                    }
                    let strict = u1 < u2;
                    let mut jbest = j1;
                    if strict {
                        v[j1] -= u2 - u1;
                        colbase[j1] = sy[j1] - v[j1];
                    } else if y[j1] != NONE {
                        jbest = j2;
                    }
                    u[i] = u2;
                    let displaced = y[jbest];
                    x[i] = jbest;
                    y[jbest] = i;
                    if displaced == NONE {
                        break;
                    }
                    x[displaced] = NONE;
                    if !strict {
                        break;
                    }
                    i = displaced;
                }
            }
        }
    }

    // --- shortest augmenting paths, 1-indexed as in `solve` ---
    let mut p = vec![0usize; n + 1];
    let mut u1 = vec![0.0f64; n + 1];
    let mut v1 = vec![0.0f64; n + 1];
    for j in 0..n {
        p[j + 1] = if y[j] == NONE { 0 } else { y[j] + 1 };
        v1[j + 1] = v[j];
    }
    for i in 0..n {
        u1[i + 1] = u[i];
    }
    let mut minv = vec![0.0f64; n + 1];
    let mut way = vec![0usize; n + 1];
    // base[j] = sy[j-1] - v1[j]; valid for every column not yet in the tree
    let mut base = vec![0.0f64; n + 1];
    let mut pos = vec![0usize; n + 1]; // position of column j in rem
    let mut rem: Vec<usize> = Vec::with_capacity(n);

    let free: Vec<usize> = (0..n).filter(|&i| x[i] == NONE).collect();
    for i_free in free {
        p[0] = i_free + 1;
        let mut j0 = 0usize;
        for m in minv.iter_mut() {
            *m = f64::INFINITY;
        }
        rem.clear();
        for j in 1..=n {
            base[j] = sy[j - 1] - v1[j];
            pos[j] = rem.len();
            rem.push(j);
        }
        let mut settled: Vec<usize> = vec![0];
        loop {
            if j0 != 0 {
                let at = pos[j0];
                let last = *rem.last().unwrap();
                rem.swap_remove(at);
                if at < rem.len() {
                    pos[last] = at;
                }
                settled.push(j0);
            }
            let i0 = p[j0];
            let rowbase = sx[i0 - 1] - u1[i0];
            let q = &rows[(i0 - 1) * d..i0 * d];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for &j in &rem {
                let mut acc = 0.0;
                for (k, qk) in q.iter().enumerate() {
                    acc += qk * cols[k * n + j - 1];
                }
                let cur = rowbase + base[j] - 2.0 * acc;
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for &j in &settled {
                u1[p[j]] += delta;
                v1[j] -= delta;
            }
            for &j in &rem {
                minv[j] -= delta;
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        // duals of settled columns moved; base entries refresh lazily at the
        // top of the next augmentation
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    for j in 1..=n {
        if p[j] > 0 {
            x[p[j] - 1] = j - 1;
        }
    }
    x
}

/// Scaled auction (Bertsekas) for point clouds.
///
/// Costs are rounded onto a power-of-two grid chosen from the data magnitude
/// so that every price and value stays well inside i64, then multiplied by
/// (n+1). Epsilon-scaling runs phases at eps, eps/8, ..., 1; at eps = 1 an
/// eps-complementary-slack assignment is within n of the integer optimum,
/// and since all totals are multiples of (n+1) it is exactly optimal for the
/// rounded costs. Each phase restarts with every row unassigned but keeps
/// prices, which is what makes the later (accurate) phases cheap.
fn auction_points(rows: &[f64], cols: &[f64], sx: &[f64], sy: &[f64], n: usize, d: usize) -> Vec<usize> {
    debug_assert!(n >= 2);
    let mx = sx.iter().cloned().fold(0.0, f64::max).sqrt();
    let my = sy.iter().cloned().fold(0.0, f64::max).sqrt();
    let cmax = (mx + my) * (mx + my) + 1e-12;
    let np1 = (n + 1) as i64;
    // keep n * eps0 = n * cmax_int / 4 below 2^61 / 8 so accumulated price
    // rises never approach overflow
    let raw = (1u64 << 58) as f64 / (cmax * n as f64 * np1 as f64);
    let scale = raw.log2().floor().exp2();
    let cint = |i: usize, j: usize| -> i64 {
        let q = &rows[i * d..(i + 1) * d];
        let mut acc = 0.0;
        for (k, qk) in q.iter().enumerate() {
            acc += qk * cols[k * n + j];
        }
        let c = (sx[i] + sy[j] - 2.0 * acc).max(0.0);
        (c * scale + 0.5) as i64 * np1
    };

    let mut price = vec![0i64; n];
    let mut owner = vec![NONE; n];
    let mut assigned = vec![NONE; n];
    let mut eps = (cmax * scale) as i64 * np1 / 4 + 1;
    loop {
        owner.fill(NONE);
        assigned.fill(NONE);
        let mut free: Vec<usize> = (0..n).rev().collect();
        while let Some(i) = free.pop() {
            let mut min1 = i64::MAX;
            let mut min2 = i64::MAX;
            let mut jbest = 0usize;
            for j in 0..n {
                let r = cint(i, j) + price[j];
                if r < min1 {
                    min2 = min1;
                    min1 = r;
                    jbest = j;
                } else if r < min2 {
                    min2 = r;
                }
            }
            price[jbest] += min2 - min1 + eps;
            let displaced = owner[jbest];
            owner[jbest] = i;
            assigned[i] = jbest;
            if displaced != NONE {
                assigned[displaced] = NONE;
                free.push(displaced);
            }
        }
        if eps == 1 {
            break;
        }
        eps = std::cmp::max(1, eps / 8);
    }
    assigned
}

/// Reference oracle: enumerate all permutations (n <= 9).
pub fn brute_force_cost<C: Fn(usize, usize) -> f64>(n: usize, cost: C) -> f64 {
    assert!(n <= 9, "brute force limited to n <= 9");
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &mut |p| {
        let c: f64 = p.iter().enumerate().map(|(i, &j)| cost(i, j)).sum();
        if c < best {
            best = c;
        }
    });
    best
}

fn permute(items: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}
