//! Oracles computed by brute force.

use std::cmp::Ordering;
use std::collections::VecDeque;

use spikenet::simnet::TorusCoord;

/// `now` is one of the `2^(bits-1) - 1` values following `deadline`.
pub fn exceeded_by_enumeration(bits: u32, deadline: u64, now: u64) -> bool {
    let m = 1u64 << bits;
    (1..m / 2).any(|k| (deadline + k) % m == now)
}

pub fn order_by_enumeration(bits: u32, a: u64, b: u64) -> Ordering {
    if a == b {
        Ordering::Equal
    } else if exceeded_by_enumeration(bits, a, b) {
        Ordering::Less
    } else {
        Ordering::Greater
    }
}

/// Shortest hop count by breadth-first search over torus neighbours.
pub fn bfs_distance(src: TorusCoord, dst: TorusCoord, dims: [usize; 3]) -> usize {
    let idx = |c: [usize; 3]| c[0] + dims[0] * (c[1] + dims[1] * c[2]);
    let total = dims.iter().product();
    let mut dist = vec![usize::MAX; total];
    let start = [src.x, src.y, src.z];
    dist[idx(start)] = 0;
    let mut q = VecDeque::from([start]);
    while let Some(c) = q.pop_front() {
        let d = dist[idx(c)];
        if c == [dst.x, dst.y, dst.z] {
            return d;
        }
        for axis in 0..3 {
            for delta in [1, dims[axis] - 1] {
                let mut n = c;
                n[axis] = (c[axis] + delta) % dims[axis];
                if dist[idx(n)] == usize::MAX {
                    dist[idx(n)] = d + 1;
                    q.push_back(n);
                }
            }
        }
    }
    unreachable!("torus is connected")
}
