use std::collections::VecDeque;

/// Symmetric permutation produced by reverse Cuthill-McKee.
///
/// `perm[new] = old` and `inv[old] = new`.
#[derive(Clone, Debug)]
pub struct Ordering {
    pub perm: Vec<usize>,
    pub inv: Vec<usize>,
    pub bandwidth: usize,
}

/// Reverse Cuthill-McKee on an undirected graph given as adjacency lists.
///
/// Self loops and duplicate neighbours are tolerated.
pub fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Ordering {
    let n = adj.len();
    let adj: Vec<Vec<usize>> = adj
        .iter()
        .enumerate()
        .map(|(i, nbrs)| {
            let mut v: Vec<usize> = nbrs.iter().copied().filter(|&j| j != i).collect();
            v.sort_unstable();
            v.dedup();
            v
        })
        .collect();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();

    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();

    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));

    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(&adj, &degree, seed);
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            nbrs.sort_by_key(|&w| (degree[w], w));
            for w in nbrs {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();

    let mut inv = vec![0; n];
    for (new, &old) in order.iter().enumerate() {
        inv[old] = new;
    }
    let bandwidth = bandwidth_of(&adj, &inv);
    Ordering {
        perm: order,
        inv,
        bandwidth,
    }
}

/// Bandwidth of the graph under the labelling `inv[old] = new`.
pub fn bandwidth_of(adj: &[Vec<usize>], inv: &[usize]) -> usize {
    let mut bw = 0;
    for (i, nbrs) in adj.iter().enumerate() {
        for &j in nbrs {
            bw = bw.max(inv[i].abs_diff(inv[j]));
        }
    }
    bw
}

fn bfs_levels(adj: &[Vec<usize>], start: usize) -> Vec<Vec<usize>> {
    let mut seen = std::collections::HashSet::new();
    seen.insert(start);
    let mut levels = vec![vec![start]];
    loop {
        let mut next = Vec::new();
        for &v in levels.last().unwrap() {
            for &w in &adj[v] {
                if seen.insert(w) {
                    next.push(w);
                }
            }
        }
        if next.is_empty() {
            return levels;
        }
        levels.push(next);
    }
}

// George-Liu pseudo-peripheral node search.
fn pseudo_peripheral(adj: &[Vec<usize>], degree: &[usize], seed: usize) -> usize {
    let mut node = seed;
    let mut depth = bfs_levels(adj, node).len();
    for _ in 0..8 {
        let levels = bfs_levels(adj, node);
        let candidate = *levels
            .last()
            .unwrap()
            .iter()
            .min_by_key(|&&w| (degree[w], w))
            .unwrap();
        let cand_depth = bfs_levels(adj, candidate).len();
        if cand_depth <= depth {
            break;
        }
        node = candidate;
        depth = cand_depth;
    }
    node
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_graph_in_scrambled_labels_gets_bandwidth_one() {
        // path 3-0-4-1-2
        let edges = [(3, 0), (0, 4), (4, 1), (1, 2)];
        let mut adj = vec![Vec::new(); 5];
        for &(a, b) in &edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        let ord = reverse_cuthill_mckee(&adj);
        assert_eq!(ord.bandwidth, 1);
        for (new, &old) in ord.perm.iter().enumerate() {
            assert_eq!(ord.inv[old], new);
        }
    }

    #[test]
    fn disconnected_components_are_all_ordered() {
        let adj = vec![vec![1], vec![0], vec![], vec![]];
        let ord = reverse_cuthill_mckee(&adj);
        let mut p = ord.perm.clone();
        p.sort();
        assert_eq!(p, vec![0, 1, 2, 3]);
    }
}
