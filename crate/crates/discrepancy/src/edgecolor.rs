//! Near-optimal edge coloring.
//!
//! High-degree graphs are split by balancing every vertex neighborhood with
//! the set-balancing solver; the cut between the two sides is bipartite and
//! takes exactly its maximum degree in fresh colors (alternating-path
//! recoloring), while the two induced halves recurse in parallel on a shared
//! palette. The base case is a fan-and-path `Delta + 1` coloring. Total
//! palette: `Delta + O(sqrt(Delta ln n))`, with the constant measured.

use crate::error::{Error, Result};
use crate::exec;
use crate::instance::{hat, SetSystem};
use crate::profile::ConstantsProfile;
use crate::solver::solve_unweighted;
use serde::{Deserialize, Serialize};

/// Simple undirected graph with a cached maximum degree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    pub n: usize,
    /// Sorted list of edges `(u, v)` with `u < v`.
    pub edges: Vec<(usize, usize)>,
    /// Adjacency: `(neighbor, edge index)` per vertex.
    pub adj: Vec<Vec<(usize, usize)>>,
    pub max_degree: usize,
}

impl Graph {
    pub fn new(n: usize, mut edges: Vec<(usize, usize)>) -> Result<Self> {
        for e in &mut edges {
            if e.0 == e.1 {
                return Err(Error::invalid(format!("self-loop at vertex {}", e.0)));
            }
            if e.0 > e.1 {
                *e = (e.1, e.0);
            }
            if e.1 >= n {
                return Err(Error::invalid(format!("edge {e:?} out of [0, {n})")));
            }
        }
        edges.sort_unstable();
        if edges.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("duplicate edge (multigraphs unsupported)"));
        }
        let mut adj = vec![Vec::new(); n];
        for (idx, &(u, v)) in edges.iter().enumerate() {
            adj[u].push((v, idx));
            adj[v].push((u, idx));
        }
        let max_degree = adj.iter().map(Vec::len).max().unwrap_or(0);
        Ok(Graph { n, edges, adj, max_degree })
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    /// Induced subgraph on `keep`; returns the edge-index mapping.
    fn induced(&self, keep: &[bool]) -> (Graph, Vec<usize>) {
        let mut edges = Vec::new();
        let mut edge_map = Vec::new();
        for (idx, &(u, v)) in self.edges.iter().enumerate() {
            if keep[u] && keep[v] {
                edges.push((u, v));
                edge_map.push(idx);
            }
        }
        let g = Graph::new(self.n, edges).expect("induced subgraph is simple");
        (g, edge_map)
    }
}

/// A proper edge coloring: `color[e]` is the palette index of edge `e`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeColoring {
    pub color: Vec<usize>,
    pub palette: usize,
}

impl EdgeColoring {
    /// Exhaustive properness check: no vertex sees a color twice.
    pub fn verify(&self, g: &Graph) -> Result<()> {
        for (v, nbrs) in g.adj.iter().enumerate() {
            let mut seen = std::collections::BTreeSet::new();
            for &(_, e) in nbrs {
                if !seen.insert(self.color[e]) {
                    return Err(Error::contract(format!(
                        "vertex {v} sees color {} twice",
                        self.color[e]
                    )));
                }
            }
        }
        if self.color.iter().any(|&c| c >= self.palette) {
            return Err(Error::contract("color outside the declared palette"));
        }
        Ok(())
    }
}

/// Summary returned with a coloring.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColoringReport {
    pub colors: usize,
    pub max_degree: usize,
    /// `(colors - Delta) / sqrt(Delta ln n̂)`, the measured additive constant.
    pub k_constant: f64,
    pub recursion_depth: usize,
}

/// 2-coloring by BFS; errors on odd cycles.
fn bipartition(g: &Graph) -> Result<Vec<u8>> {
    let mut side = vec![u8::MAX; g.n];
    for start in 0..g.n {
        if side[start] != u8::MAX || g.adj[start].is_empty() {
            if side[start] == u8::MAX {
                side[start] = 0;
            }
            continue;
        }
        side[start] = 0;
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &g.adj[u] {
                if side[v] == u8::MAX {
                    side[v] = 1 - side[u];
                    queue.push_back(v);
                } else if side[v] == side[u] {
                    return Err(Error::invalid("graph is not bipartite"));
                }
            }
        }
    }
    Ok(side)
}

/// Exact `Delta`-edge-coloring of a bipartite graph by alternating-path
/// recoloring.
pub fn color_bipartite(g: &Graph) -> Result<EdgeColoring> {
    bipartition(g)?;
    let delta = g.max_degree;
    if delta == 0 {
        return Ok(EdgeColoring { color: vec![], palette: 0 });
    }
    // table[v][c] = edge currently colored c at v
    let mut table: Vec<Vec<Option<usize>>> = vec![vec![None; delta]; g.n];
    let mut color = vec![usize::MAX; g.m()];
    let free = |table: &Vec<Vec<Option<usize>>>, v: usize| -> usize {
        table[v].iter().position(Option::is_none).expect("degree <= Delta")
    };
    for (e, &(u, v)) in g.edges.iter().enumerate() {
        let fu = free(&table, u);
        let fv = free(&table, v);
        if fu == fv {
            color[e] = fu;
            table[u][fu] = Some(e);
            table[v][fu] = Some(e);
            continue;
        }
        // swap colors along the (fu, fv)-alternating path from v (which
        // misses fv, so it leaves on an fu edge), freeing fu at v; by parity
        // the path cannot end at u
        let (alpha, beta) = (fu, fv);
        swap_along_path(g, &mut table, &mut color, v, alpha, beta);
        debug_assert!(table[u][alpha].is_none());
        debug_assert!(table[v][alpha].is_none());
        color[e] = alpha;
        table[u][alpha] = Some(e);
        table[v][alpha] = Some(e);
    }
    let coloring = EdgeColoring { color, palette: delta };
    coloring.verify(g)?;
    Ok(coloring)
}

/// Fan-and-path coloring with at most `Delta + 1` colors.
pub fn misra_gries(g: &Graph) -> Result<EdgeColoring> {
    let palette = g.max_degree + 1;
    if g.m() == 0 {
        return Ok(EdgeColoring { color: vec![], palette: 0 });
    }
    let mut table: Vec<Vec<Option<usize>>> = vec![vec![None; palette]; g.n];
    let mut color = vec![usize::MAX; g.m()];
    let free_color = |table: &Vec<Vec<Option<usize>>>, v: usize| -> usize {
        table[v].iter().position(Option::is_none).expect("palette has Delta+1 slots")
    };
    for (e0, &(u, v0)) in g.edges.iter().enumerate() {
        let mut attempts = 0;
        while color[e0] == usize::MAX {
            attempts += 1;
            if attempts > 64 {
                return Err(Error::contract("fan repair failed to converge"));
            }
            // build a maximal fan of u starting at v0
            let mut fan = vec![(v0, e0)];
            let mut used_fan: std::collections::BTreeSet<usize> = [v0].into();
            loop {
                let (last, _) = *fan.last().unwrap();
                let want = free_color(&table, last);
                match table[u][want] {
                    Some(next_edge) if color[next_edge] == want => {
                        let (x, y) = g.edges[next_edge];
                        let next = if x == u { y } else { x };
                        if used_fan.contains(&next) {
                            break;
                        }
                        used_fan.insert(next);
                        fan.push((next, next_edge));
                    }
                    _ => break,
                }
            }
            let c = free_color(&table, u);
            let (last, _) = *fan.last().unwrap();
            let d = free_color(&table, last);
            if table[u][d].is_none() {
                // rotate the whole fan, then color the last edge d
                rotate_fan(g, &mut table, &mut color, u, &fan, fan.len());
                let (w, ew) = *fan.last().unwrap();
                set_color(&mut table, &mut color, u, w, ew, d);
                break;
            }
            // invert the maximal cd-path from u (c free at u, path leaves on d)
            swap_along_path(g, &mut table, &mut color, u, d, c);
            // first fan vertex with d free whose prefix is still a fan; if
            // the inversion broke the fan, rebuild it and try again
            let mut w_pos = usize::MAX;
            for (pos, &(w, _)) in fan.iter().enumerate() {
                if table[w][d].is_none() {
                    w_pos = pos;
                    break;
                }
            }
            if w_pos == usize::MAX {
                continue;
            }
            let prefix_ok = (1..=w_pos).all(|i| {
                let (prev, _) = fan[i - 1];
                color[fan[i].1] != usize::MAX && table[prev][color[fan[i].1]].is_none()
            });
            if !prefix_ok {
                continue;
            }
            rotate_fan(g, &mut table, &mut color, u, &fan, w_pos + 1);
            let (w, ew) = fan[w_pos];
            set_color(&mut table, &mut color, u, w, ew, d);
        }
    }
    let coloring = EdgeColoring { color, palette };
    coloring.verify(g)?;
    Ok(coloring)
}

fn set_color(
    table: &mut [Vec<Option<usize>>],
    color: &mut [usize],
    u: usize,
    w: usize,
    e: usize,
    c: usize,
) {
    color[e] = c;
    table[u][c] = Some(e);
    table[w][c] = Some(e);
}

/// Shifts colors down the fan: edge to `fan[i]` takes the color of the edge
/// to `fan[i+1]`, freeing the last edge. `len` is the prefix length.
fn rotate_fan(
    g: &Graph,
    table: &mut [Vec<Option<usize>>],
    color: &mut [usize],
    u: usize,
    fan: &[(usize, usize)],
    len: usize,
) {
    for i in 0..len.saturating_sub(1) {
        let (w, e) = fan[i];
        let (_, e_next) = fan[i + 1];
        let c_next = color[e_next];
        // detach e_next
        let (x, y) = g.edges[e_next];
        table[x][c_next] = None;
        table[y][c_next] = None;
        color[e_next] = usize::MAX;
        // recolor e (may itself be uncolored when i == 0)
        if color[e] != usize::MAX {
            let c_old = color[e];
            table[u][c_old] = None;
            table[w][c_old] = None;
        }
        set_color(table, color, u, w, e, c_next);
    }
}

/// Swaps colors along the maximal alternating path that leaves `start` on
/// an edge of color `walk_first` (`missing` is free at `start`). The walk
/// collects the path before touching any color, so it cannot backtrack.
fn swap_along_path(
    g: &Graph,
    table: &mut [Vec<Option<usize>>],
    color: &mut [usize],
    start: usize,
    walk_first: usize,
    missing: usize,
) {
    let mut path = Vec::new();
    let mut prev = start;
    let mut want = walk_first;
    while let Some(pe) = table[prev][want] {
        path.push(pe);
        let (x, y) = g.edges[pe];
        prev = if x == prev { y } else { x };
        want = if want == walk_first { missing } else { walk_first };
    }
    for &pe in &path {
        let (x, y) = g.edges[pe];
        let old = color[pe];
        let new = if old == walk_first { missing } else { walk_first };
        table[x][old] = None;
        table[y][old] = None;
        color[pe] = new;
    }
    for &pe in &path {
        let (x, y) = g.edges[pe];
        let c = color[pe];
        table[x][c] = Some(pe);
        table[y][c] = Some(pe);
    }
}

/// Recursive edge coloring: `Delta + O(sqrt(Delta ln n))` colors.
pub fn color_edges(g: &Graph, profile: &ConstantsProfile) -> Result<(EdgeColoring, ColoringReport)> {
    let mut color = vec![usize::MAX; g.m()];
    let (palette, depth) = color_rec(g, &(0..g.m()).collect::<Vec<_>>(), g, profile, &mut color, 0)?;
    let coloring = EdgeColoring { color, palette };
    coloring.verify(g)?;
    let delta = g.max_degree;
    let k_constant = if delta > 0 {
        (coloring.palette as f64 - delta as f64) / (delta as f64 * hat(g.n).ln()).sqrt()
    } else {
        0.0
    };
    let report = ColoringReport {
        colors: coloring.palette,
        max_degree: delta,
        k_constant: k_constant.max(0.0),
        recursion_depth: depth,
    };
    Ok((coloring, report))
}

/// Colors the subgraph of `root` given by `edge_map` (the edge indices of
/// `g` inside `root`), writing into `color`; returns palette size used.
fn color_rec(
    g: &Graph,
    edge_map: &[usize],
    root: &Graph,
    profile: &ConstantsProfile,
    color: &mut [usize],
    depth: usize,
) -> Result<(usize, usize)> {
    if g.m() == 0 {
        return Ok((0, depth));
    }
    let delta = g.max_degree;
    if delta <= profile.edgecolor_base_degree(root.n) {
        // bipartite bases take exactly Delta colors, others Delta + 1
        let local = match color_bipartite(g) {
            Ok(c) => c,
            Err(_) => misra_gries(g)?,
        };
        for (le, &re) in edge_map.iter().enumerate() {
            color[re] = local.color[le];
        }
        return Ok((local.palette, depth));
    }
    // split the vertices so every neighborhood halves evenly
    let sets: Vec<Vec<usize>> = g
        .adj
        .iter()
        .map(|nbrs| {
            let mut s: Vec<usize> = nbrs.iter().map(|&(v, _)| v).collect();
            s.sort_unstable();
            s
        })
        .collect();
    let sys = SetSystem::new(g.n, sets)?;
    let (chi, _) = solve_unweighted(&sys, profile)?;
    let side: Vec<bool> = chi.chi.iter().map(|&c| c == 1).collect();

    // cut edges form a bipartite graph: exactly Delta' fresh colors
    let mut cut_edges = Vec::new();
    let mut cut_map = Vec::new();
    for (le, &(u, v)) in g.edges.iter().enumerate() {
        if side[u] != side[v] {
            cut_edges.push((u, v));
            cut_map.push(edge_map[le]);
        }
    }
    let cut = Graph::new(g.n, cut_edges)?;
    let cut_coloring = color_bipartite(&cut)?;
    for (ce, &re) in cut_map.iter().enumerate() {
        color[re] = cut_coloring.color[ce];
    }
    let cut_palette = cut_coloring.palette;

    // the two halves share the palette above the cut block
    let keep0: Vec<bool> = side.to_vec();
    let keep1: Vec<bool> = side.iter().map(|&s| !s).collect();
    let (g0, map0) = g.induced(&keep0);
    let (g1, map1) = g.induced(&keep1);
    let map0: Vec<usize> = map0.iter().map(|&le| edge_map[le]).collect();
    let map1: Vec<usize> = map1.iter().map(|&le| edge_map[le]).collect();
    let (res0, res1) = exec::join(
        || {
            let mut c0 = vec![usize::MAX; root.m()];
            color_rec(&g0, &map0, root, profile, &mut c0, depth + 1).map(|r| (r, c0))
        },
        || {
            let mut c1 = vec![usize::MAX; root.m()];
            color_rec(&g1, &map1, root, profile, &mut c1, depth + 1).map(|r| (r, c1))
        },
    );
    let ((p0, d0), c0) = res0?;
    let ((p1, d1), c1) = res1?;
    for &re in &map0 {
        color[re] = cut_palette + c0[re];
    }
    for &re in &map1 {
        color[re] = cut_palette + c1[re];
    }
    Ok((cut_palette + p0.max(p1), d0.max(d1)))
}
