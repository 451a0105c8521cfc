//! Reverse Cuthill-McKee fill-reducing ordering.

use super::CscMatrix;

/// Compute an RCM ordering for a symmetric sparse matrix. Returns `perm`
/// mapping new index to old index, so the reordered matrix is
/// `a.permute_sym(&perm)`.
pub fn reverse_cuthill_mckee(a: &CscMatrix) -> Vec<usize> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    // Adjacency lists without the diagonal.
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, j, _) in a.iter() {
        if i != j {
            adj[j].push(i);
        }
    }
    let degree: Vec<usize> = adj.iter().map(|l| l.len()).collect();
    for l in adj.iter_mut() {
        l.sort_unstable_by_key(|&v| degree[v]);
    }

    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = std::collections::VecDeque::new();

    // Process each connected component from a pseudo-peripheral start.
    loop {
        let start = match (0..n).filter(|&i| !visited[i]).min_by_key(|&i| degree[i]) {
            Some(s) => pseudo_peripheral(s, &adj, &visited),
            None => break,
        };
        visited[start] = true;
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &v in &adj[u] {
                if !visited[v] {
                    visited[v] = true;
                    queue.push_back(v);
                }
            }
        }
    }
    order.reverse();
    order
}

/// A few BFS sweeps towards a node of maximal eccentricity.
fn pseudo_peripheral(start: usize, adj: &[Vec<usize>], visited_global: &[bool]) -> usize {
    let mut current = start;
    let mut last_depth = 0usize;
    for _ in 0..4 {
        let (far, depth) = bfs_far(current, adj, visited_global);
        if depth <= last_depth {
            break;
        }
        last_depth = depth;
        current = far;
    }
    current
}

fn bfs_far(start: usize, adj: &[Vec<usize>], visited_global: &[bool]) -> (usize, usize) {
    let n = adj.len();
    let mut depth = vec![usize::MAX; n];
    depth[start] = 0;
    let mut queue = std::collections::VecDeque::new();
    queue.push_back(start);
    let mut far = start;
    let mut far_depth = 0;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !visited_global[v] && depth[v] == usize::MAX {
                depth[v] = depth[u] + 1;
                if depth[v] > far_depth {
                    far_depth = depth[v];
                    far = v;
                }
                queue.push_back(v);
            }
        }
    }
    (far, far_depth)
}
