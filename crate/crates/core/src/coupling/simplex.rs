//! Exact OT with arbitrary marginals: transportation simplex on the dense
//! bipartite graph (network-simplex specialization). Northwest-corner start,
//! Dantzig pricing with a Bland fallback for anti-cycling, tree-structured
//! basis with recomputed potentials per pivot.

use ndarray::Array2;

use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

struct Arc {
    row: usize,
    col: usize,
    flow: f64,
}

/// Minimize sum_ij cost[i,j] * p[i,j] subject to row sums a, column sums b.
/// `a` and `b` must be strictly positive and sum to the same total.
pub fn solve(cost: &Array2<f64>, a: &[f64], b: &[f64]) -> Result<Array2<f64>> {
    let (n, m) = cost.dim();
    assert_eq!(a.len(), n);
    assert_eq!(b.len(), m);

    // --- northwest-corner initial basis: exactly n+m-1 arcs, a spanning tree
    let mut arcs: Vec<Arc> = Vec::with_capacity(n + m - 1);
    {
        let mut ra = a.to_vec();
        let mut rb = b.to_vec();
        let (mut i, mut j) = (0usize, 0usize);
        while arcs.len() < n + m - 1 {
            let f = ra[i].min(rb[j]);
            arcs.push(Arc {
                row: i,
                col: j,
                flow: f,
            });
            ra[i] -= f;
            rb[j] -= f;
            if i == n - 1 {
                j += 1;
            } else if j == m - 1 {
                i += 1;
            } else if ra[i] <= 0.0 {
                i += 1;
            } else {
                j += 1;
            }
        }
    }

    // adjacency: node -> basic arc indices (nodes 0..n rows, n..n+m cols)
    let n_nodes = n + m;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n_nodes];
    for (k, arc) in arcs.iter().enumerate() {
        adj[arc.row].push(k);
        adj[n + arc.col].push(k);
    }

    let scale = cost.iter().fold(0.0f64, |acc, c| acc.max(c.abs()));
    let enter_tol = 1e-13 * (1.0 + scale);
    let max_pivots = 400 * (n + m) + 10_000;
    let bland_after = 200 * (n + m) + 5_000;

    let mut u = vec![0.0f64; n]; // row potentials
    let mut w = vec![0.0f64; m]; // col potentials
    let mut stack: Vec<usize> = Vec::with_capacity(n_nodes);
    let mut seen = vec![false; n_nodes];
    let mut parent_arc = vec![NONE; n_nodes];
    let mut parent_node = vec![NONE; n_nodes];

    for pivot in 0..max_pivots {
        // potentials from the tree: u[0] = 0, tight on basic arcs
        seen.iter_mut().for_each(|s| *s = false);
        stack.clear();
        stack.push(0);
        seen[0] = true;
        u[0] = 0.0;
        while let Some(node) = stack.pop() {
            for &k in &adj[node] {
                let arc = &arcs[k];
                let other = if node < n { n + arc.col } else { arc.row };
                if !seen[other] {
                    seen[other] = true;
                    if other >= n {
                        w[other - n] = cost[[arc.row, arc.col]] - u[arc.row];
                    } else {
                        u[other] = cost[[arc.row, arc.col]] - w[arc.col];
                    }
                    stack.push(other);
                }
            }
        }

        // entering arc
        let mut best = -enter_tol;
        let mut enter: Option<(usize, usize)> = None;
        let bland = pivot >= bland_after;
        'scan: for i in 0..n {
            let ui = u[i];
            let row = cost.row(i);
            for j in 0..m {
                let rc = row[j] - ui - w[j];
                if rc < best {
                    best = rc;
                    enter = Some((i, j));
                    if bland {
                        break 'scan;
                    }
                }
            }
        }
        let (ei, ej) = match enter {
            None => {
                // optimal: emit the plan
                let mut plan = Array2::zeros((n, m));
                for arc in &arcs {
                    plan[[arc.row, arc.col]] += arc.flow;
                }
                return Ok(plan);
            }
            Some(e) => e,
        };

        // cycle: tree path from row node ei to col node n+ej
        seen.iter_mut().for_each(|s| *s = false);
        parent_arc.iter_mut().for_each(|p| *p = NONE);
        parent_node.iter_mut().for_each(|p| *p = NONE);
        stack.clear();
        stack.push(ei);
        seen[ei] = true;
        let target = n + ej;
        while let Some(node) = stack.pop() {
            if node == target {
                break;
            }
            for &k in &adj[node] {
                let arc = &arcs[k];
                let other = if node < n { n + arc.col } else { arc.row };
                if !seen[other] {
                    seen[other] = true;
                    parent_arc[other] = k;
                    parent_node[other] = node;
                    stack.push(other);
                }
            }
        }
        if !seen[target] {
            return Err(Error::Numeric(
                "transportation basis lost connectivity".into(),
            ));
        }

        // walk back from target to ei; the entering arc adds +theta, and the
        // path arcs alternate starting with -theta on the arc into the target
        // column... orientation is determined per-arc: an arc (i,j) on the
        // path gets +theta if traversed col->row direction matches the
        // entering arc's parity. Track by node type instead: moving from a
        // col node to its parent row node means the arc carries flow INTO
        // that col; with entering flow raising col ej's inflow, that arc
        // must give up flow, and so on alternating.
        let mut path: Vec<usize> = Vec::new(); // arc indices from target back to ei
        let mut node = target;
        while node != ei {
            path.push(parent_arc[node]);
            node = parent_node[node];
        }
        // Determine theta: arcs at even position in `path` (starting 0) are
        // the ones whose flow decreases. Walking from the target col back,
        // the first arc delivers into col ej's balance the flow that the
        // entering arc will now provide.
        let mut theta = f64::INFINITY;
        let mut leave_pos = NONE;
        for (pos, &k) in path.iter().enumerate() {
            if pos % 2 == 0 {
                if arcs[k].flow < theta {
                    theta = arcs[k].flow;
                    leave_pos = pos;
                }
            }
        }
        let leave_arc = path[leave_pos];
        for (pos, &k) in path.iter().enumerate() {
            if pos % 2 == 0 {
                arcs[k].flow -= theta;
            } else {
                arcs[k].flow += theta;
            }
        }

        // swap leaving arc out of the adjacency, entering arc in
        let old = &arcs[leave_arc];
        let (or_, oc_) = (old.row, n + old.col);
        adj[or_].retain(|&k| k != leave_arc);
        adj[oc_].retain(|&k| k != leave_arc);
        arcs[leave_arc] = Arc {
            row: ei,
            col: ej,
            flow: theta,
        };
        adj[ei].push(leave_arc);
        adj[n + ej].push(leave_arc);
    }

    Err(Error::NoConvergence(format!(
        "transportation simplex exceeded {max_pivots} pivots"
    )))
}
