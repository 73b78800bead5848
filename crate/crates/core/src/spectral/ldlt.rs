//! Envelope (profile) `LDL^T` without pivoting, after a reverse Cuthill-McKee reordering.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Reverse Cuthill-McKee permutation of a structurally symmetric matrix. `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).0.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let bfs_last = |start: usize, visited: &[bool]| -> (usize, usize) {
        let mut seen = visited.to_vec();
        let mut q = VecDeque::from([(start, 0usize)]);
        seen[start] = true;
        let mut last = (start, 0);
        while let Some((v, l)) = q.pop_front() {
            if l > last.1 || (l == last.1 && degree[v] < degree[last.0]) {
                last = (v, l);
            }
            for &u in a.row(v).0 {
                if !seen[u] {
                    seen[u] = true;
                    q.push_back((u, l + 1));
                }
            }
        }
        last
    };
    loop {
        let Some(seed) = (0..n).filter(|&i| !visited[i]).min_by_key(|&i| (degree[i], i)) else { break };
        // Pseudo-peripheral start: walk to the farthest node until the eccentricity stops growing.
        let mut start = seed;
        let mut ecc = bfs_last(start, &visited).1;
        for _ in 0..8 {
            let (far, _) = bfs_last(start, &visited);
            let e = bfs_last(far, &visited).1;
            if e <= ecc {
                break;
            }
            start = far;
            ecc = e;
        }
        let mut q = VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = q.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = a.row(v).0.iter().copied().filter(|&u| !visited[u]).collect();
            nbrs.sort_by_key(|&u| (degree[u], u));
            for u in nbrs {
                visited[u] = true;
                q.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

/// Counts of eigenvalues below, at and above a shift, by Sylvester's law of inertia.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Inertia {
    pub negative: usize,
    pub zero: usize,
    pub positive: usize,
}

/// Inertia of the symmetric matrix `a` from the signs of the `LDL^T` pivots.
/// Fails with [`Error::Breakdown`] when a pivot is negligible relative to `scale`.
pub fn ldlt_inertia(a: &CsrMatrix, perm: &[usize], scale: f64) -> Result<Inertia> {
    let n = a.nrows();
    let mut inv = vec![0usize; n];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    let mut first = vec![0usize; n];
    for (new, &old) in perm.iter().enumerate() {
        let (cols, _) = a.row(old);
        first[new] = cols.iter().map(|&c| inv[c]).filter(|&c| c <= new).min().unwrap_or(new);
    }
    let mut start = vec![0usize; n + 1];
    for i in 0..n {
        start[i + 1] = start[i] + (i - first[i] + 1);
    }
    // Row i of the envelope holds columns first[i]..=i.
    let mut env = vec![0.0f64; start[n]];
    for (new, &old) in perm.iter().enumerate() {
        let (cols, vals) = a.row(old);
        for (c, v) in cols.iter().zip(vals) {
            let j = inv[*c];
            if j <= new {
                env[start[new] + j - first[new]] += v;
            }
        }
    }
    let mut d = vec![0.0f64; n];
    let tiny = 1e-13 * scale.max(f64::MIN_POSITIVE);
    let mut inertia = Inertia { negative: 0, zero: 0, positive: 0 };
    let mut g = Vec::new();
    for i in 0..n {
        let fi = first[i];
        // g_ij = a_ij - sum_k g_ik l_jk, stored in env; l_ij = g_ij / d_j.
        g.clear();
        g.extend_from_slice(&env[start[i]..start[i] + (i - fi)]);
        for j in fi..i {
            let fj = first[j];
            let lo = fi.max(fj);
            let row_j = &env[start[j]..];
            let mut acc = g[j - fi];
            for k in lo..j {
                acc -= g[k - fi] * row_j[k - fj];
            }
            g[j - fi] = acc;
        }
        let mut diag = env[start[i] + (i - fi)];
        for j in fi..i {
            let l = g[j - fi] / d[j];
            diag -= g[j - fi] * l;
            env[start[i] + j - fi] = l;
        }
        if diag.abs() <= tiny || !diag.is_finite() {
            return Err(Error::Breakdown { index: i, pivot: diag.abs() });
        }
        d[i] = diag;
        env[start[i] + (i - fi)] = diag;
        if diag < 0.0 {
            inertia.negative += 1;
        } else {
            inertia.positive += 1;
        }
    }
    Ok(inertia)
}
