//! Dense transportation problem solved by the network simplex method.
//!
//! Sources carry supplies, sinks carry demands, every source-sink pair is
//! an arc with a given cost. The basis is a spanning tree of the bipartite
//! node set; pivots exchange one arc at a time until no reduced cost is
//! negative. Sizes here are moderate (a few thousand nodes), so the tree
//! is rebuilt per pivot and the pricing scans arc blocks.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
struct BasicArc {
    src: usize,
    snk: usize,
    flow: f64,
}

/// Minimal total cost of moving `supply` onto `demand` with the dense
/// cost matrix `cost[i * demand.len() + j]`. Supplies and demands must be
/// positive and balanced.
pub fn transport_min_cost(supply: &[f64], demand: &[f64], cost: &[f64]) -> Result<f64> {
    let m = supply.len();
    let n = demand.len();
    if m == 0 || n == 0 {
        return Err(Error::invalid("transport on an empty measure"));
    }
    if cost.len() != m * n {
        return Err(Error::invalid("cost matrix size mismatch"));
    }
    let sa: f64 = supply.iter().sum();
    let sb: f64 = demand.iter().sum();
    if (sa - sb).abs() > 1e-9 * sa.max(sb).max(1e-300) {
        return Err(Error::invalid(format!(
            "unbalanced transport problem: supply {sa}, demand {sb}"
        )));
    }
    if supply.iter().any(|&v| v <= 0.0) || demand.iter().any(|&v| v <= 0.0) {
        return Err(Error::invalid("supplies and demands must be positive"));
    }

    // Northwest-corner start: a staircase spanning tree.
    let mut arcs: Vec<BasicArc> = Vec::with_capacity(m + n - 1);
    {
        let mut a = supply.to_vec();
        let mut b = demand.to_vec();
        // Absorb the balance roundoff into the last demand.
        let corr: f64 = sa - sb;
        b[n - 1] += corr;
        let (mut i, mut j) = (0usize, 0usize);
        while i < m && j < n {
            let f = a[i].min(b[j]);
            arcs.push(BasicArc {
                src: i,
                snk: j,
                flow: f.max(0.0),
            });
            a[i] -= f;
            b[j] -= f;
            if i == m - 1 && j == n - 1 {
                break;
            }
            // Advance along the smaller remainder; ties advance the row
            // unless it is the last one, keeping the arc count at m+n-1.
            if (a[i] <= b[j] && i < m - 1) || j == n - 1 {
                i += 1;
            } else {
                j += 1;
            }
        }
    }
    debug_assert_eq!(arcs.len(), m + n - 1);

    let nodes = m + n;
    let mut parent = vec![usize::MAX; nodes];
    let mut parent_arc = vec![usize::MAX; nodes];
    let mut depth = vec![0usize; nodes];
    let mut pot = vec![0.0f64; nodes];
    let mut order = Vec::with_capacity(nodes);

    let rebuild = |arcs: &[BasicArc],
                   parent: &mut [usize],
                   parent_arc: &mut [usize],
                   depth: &mut [usize],
                   pot: &mut [f64],
                   order: &mut Vec<usize>| {
        let nodes = parent.len();
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nodes];
        for (idx, a) in arcs.iter().enumerate() {
            adj[a.src].push((m + a.snk, idx));
            adj[m + a.snk].push((a.src, idx));
        }
        for p in parent.iter_mut() {
            *p = usize::MAX;
        }
        order.clear();
        // BFS from node 0 (a source); potential convention
        // u_src + v_snk = cost on basic arcs.
        let mut queue = std::collections::VecDeque::new();
        queue.push_back(0usize);
        parent[0] = 0;
        depth[0] = 0;
        pot[0] = 0.0;
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &(w, idx) in &adj[u] {
                if parent[w] == usize::MAX {
                    parent[w] = u;
                    parent_arc[w] = idx;
                    depth[w] = depth[u] + 1;
                    let a = &arcs[idx];
                    let c = cost_at(cost, n, a.src, a.snk);
                    pot[w] = c - pot[u];
                    queue.push_back(w);
                }
            }
        }
    };
    rebuild(
        &arcs,
        &mut parent,
        &mut parent_arc,
        &mut depth,
        &mut pot,
        &mut order,
    );

    let cmax = cost.iter().cloned().fold(0.0f64, f64::max).max(1e-300);
    let tol = 1e-12 * cmax;
    let pivot_cap = 200 * nodes + 10_000;
    let block = 8192usize.min(m * n);
    let mut cursor = 0usize;

    for _pivot in 0..pivot_cap {
        // Pricing: best arc of the first block holding a violation.
        let total = m * n;
        let mut enter = usize::MAX;
        let mut best = -tol;
        let mut scanned = 0usize;
        while scanned < total {
            let chunk = block.min(total - scanned);
            let mut found = false;
            for s in 0..chunk {
                let k = (cursor + s) % total;
                let i = k / n;
                let j = k % n;
                let r = cost[k] - pot[i] - pot[m + j];
                if r < best {
                    best = r;
                    enter = k;
                    found = true;
                }
            }
            cursor = (cursor + chunk) % total;
            scanned += chunk;
            if found {
                break;
            }
        }

        if enter == usize::MAX {
            let value = arcs
                .iter()
                .map(|a| a.flow * cost_at(cost, n, a.src, a.snk))
                .sum::<f64>();
            return Ok(value);
        }

        let ei = enter / n;
        let ej = enter % n;
        // Cycle: the entering arc plus the tree path between its ends.
        // Collect signed arcs along the path from sink node to source node.
        let mut x = ei;
        let mut y = m + ej;
        let mut up_from_src: Vec<usize> = Vec::new(); // arcs on the source side
        let mut up_from_snk: Vec<usize> = Vec::new();
        while depth[x] > depth[y] {
            up_from_src.push(parent_arc[x]);
            x = parent[x];
        }
        while depth[y] > depth[x] {
            up_from_snk.push(parent_arc[y]);
            y = parent[y];
        }
        while x != y {
            up_from_src.push(parent_arc[x]);
            x = parent[x];
            up_from_snk.push(parent_arc[y]);
            y = parent[y];
        }
        // Traversal direction: entering arc pushes flow src -> snk. Going
        // up from the sink end, the first tree arc is traversed snk->src
        // (backward, loses flow), the next forward, and so on; going up
        // from the source end the first arc is forward on even positions
        // reversed. Work it out by node types instead: walking from a sink
        // node to its parent source crosses the arc backward; from a
        // source node to its parent sink crosses it forward reversed.
        let mut losing: Vec<usize> = Vec::new();
        let mut gaining: Vec<usize> = Vec::new();
        {
            let mut node = m + ej;
            for &aidx in &up_from_snk {
                let a = &arcs[aidx];
                if node == m + a.snk {
                    // moving sink -> source: backward
                    losing.push(aidx);
                    node = a.src;
                } else {
                    gaining.push(aidx);
                    node = m + a.snk;
                }
            }
            let mut node2 = ei;
            for &aidx in &up_from_src {
                let a = &arcs[aidx];
                if node2 == a.src {
                    // moving source -> sink against the new flow direction
                    losing.push(aidx);
                    node2 = m + a.snk;
                } else {
                    gaining.push(aidx);
                    node2 = a.src;
                }
            }
        }
        let mut theta = f64::INFINITY;
        let mut leave = usize::MAX;
        for &aidx in &losing {
            if arcs[aidx].flow < theta {
                theta = arcs[aidx].flow;
                leave = aidx;
            }
        }
        if leave == usize::MAX {
            return Err(Error::NonConvergence(
                "degenerate transport cycle without a leaving arc".into(),
            ));
        }
        for &aidx in &losing {
            arcs[aidx].flow = (arcs[aidx].flow - theta).max(0.0);
        }
        for &aidx in &gaining {
            arcs[aidx].flow += theta;
        }
        arcs[leave] = BasicArc {
            src: ei,
            snk: ej,
            flow: theta,
        };
        rebuild(
            &arcs,
            &mut parent,
            &mut parent_arc,
            &mut depth,
            &mut pot,
            &mut order,
        );
    }
    Err(Error::NonConvergence(format!(
        "transport simplex exceeded {pivot_cap} pivots"
    )))
}

#[inline]
fn cost_at(cost: &[f64], n: usize, i: usize, j: usize) -> f64 {
    cost[i * n + j]
}
